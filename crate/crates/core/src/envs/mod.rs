//! Five seedable 10x10 grid games sharing one visual grammar.
//!
//! Every game renders four binary channels (agent, ball/projectile,
//! enemy/brick, special); an observation stacks the current frame with the
//! previous one, giving 10x10x8.

mod breakout;
mod carnival;
mod invaders;
mod pinball;
mod pong;
pub mod scripted;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::tensor::Tensor;

pub const GRID: usize = 10;
pub const CHANNELS: usize = 4;
pub const OBS_SHAPE: [usize; 3] = [GRID, GRID, 2 * CHANNELS];
pub const OBS_LEN: usize = GRID * GRID * 2 * CHANNELS;
pub const DEFAULT_STEP_CAP: usize = 500;

pub const CH_AGENT: usize = 0;
pub const CH_BALL: usize = 1;
pub const CH_ENEMY: usize = 2;
pub const CH_SPECIAL: usize = 3;

/// Global action alphabet shared by every game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Noop = 0,
    Left = 1,
    Right = 2,
    Up = 3,
    Down = 4,
    Fire = 5,
}

pub const ACTION_COUNT: usize = 6;

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [
        Action::Noop,
        Action::Left,
        Action::Right,
        Action::Up,
        Action::Down,
        Action::Fire,
    ];

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskId {
    MiniBreakout,
    MiniPong,
    MiniInvaders,
    MiniPinball,
    MiniCarnival,
}

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::MiniBreakout,
        TaskId::MiniPong,
        TaskId::MiniInvaders,
        TaskId::MiniPinball,
        TaskId::MiniCarnival,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::MiniBreakout => "mini-breakout",
            TaskId::MiniPong => "mini-pong",
            TaskId::MiniInvaders => "mini-invaders",
            TaskId::MiniPinball => "mini-pinball",
            TaskId::MiniCarnival => "mini-carnival",
        }
    }

    /// Indices into the global action alphabet, sorted.
    pub fn actions(self) -> &'static [usize] {
        match self {
            TaskId::MiniBreakout => &[0, 1, 2],
            TaskId::MiniPong => &[0, 3, 4],
            TaskId::MiniInvaders | TaskId::MiniPinball | TaskId::MiniCarnival => &[0, 1, 2, 5],
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| LabError::UnknownTask(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub actions: Vec<usize>,
    pub step_cap: usize,
}

impl TaskSpec {
    pub fn new(id: TaskId) -> Self {
        Self {
            id,
            actions: id.actions().to_vec(),
            step_cap: DEFAULT_STEP_CAP,
        }
    }

    pub fn with_step_cap(mut self, step_cap: usize) -> Self {
        self.step_cap = step_cap;
        self
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    /// Position of a global action within this task's action list.
    pub fn local_index(&self, action: usize) -> Option<usize> {
        self.actions.iter().position(|&a| a == action)
    }

    pub fn validate(&self) -> Result<()> {
        if self.actions.is_empty() {
            return Err(LabError::invalid(format!("{}: empty action set", self.id)));
        }
        if self.actions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::invalid(format!("{}: action set not sorted and unique", self.id)));
        }
        if self.actions[0] != Action::Noop as usize || *self.actions.last().unwrap() >= ACTION_COUNT {
            return Err(LabError::invalid(format!("{}: action set outside the alphabet or lacks noop", self.id)));
        }
        if self.step_cap == 0 {
            return Err(LabError::invalid(format!("{}: step cap must be positive", self.id)));
        }
        Ok(())
    }
}

pub fn list_tasks() -> Vec<TaskSpec> {
    TaskId::ALL.into_iter().map(TaskSpec::new).collect()
}

pub fn task_spec(name: &str) -> Result<TaskSpec> {
    Ok(TaskSpec::new(name.parse()?))
}

/// One rendered frame: four binary channels on the grid.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Frame(pub [u8; GRID * GRID * CHANNELS]);

impl Frame {
    fn blank() -> Self {
        Frame([0; GRID * GRID * CHANNELS])
    }

    pub(crate) fn set(&mut self, x: i32, y: i32, channel: usize) {
        if (0..GRID as i32).contains(&x) && (0..GRID as i32).contains(&y) {
            self.0[(y as usize * GRID + x as usize) * CHANNELS + channel] = 1;
        }
    }

    pub fn get(&self, x: usize, y: usize, channel: usize) -> bool {
        self.0[(y * GRID + x) * CHANNELS + channel] == 1
    }

    pub fn count(&self, channel: usize) -> usize {
        self.0.iter().skip(channel).step_by(CHANNELS).filter(|&&v| v == 1).count()
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for y in 0..GRID {
            let row: String = (0..GRID)
                .map(|x| {
                    if self.get(x, y, CH_AGENT) {
                        'A'
                    } else if self.get(x, y, CH_BALL) {
                        'o'
                    } else if self.get(x, y, CH_ENEMY) {
                        '#'
                    } else if self.get(x, y, CH_SPECIAL) {
                        '*'
                    } else {
                        '.'
                    }
                })
                .collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Game {
    Breakout(breakout::Breakout),
    Pong(pong::Pong),
    Invaders(invaders::Invaders),
    Pinball(pinball::Pinball),
    Carnival(carnival::Carnival),
}

impl Game {
    fn new(id: TaskId, rng: &mut ChaCha8Rng) -> Self {
        match id {
            TaskId::MiniBreakout => Game::Breakout(breakout::Breakout::new(rng)),
            TaskId::MiniPong => Game::Pong(pong::Pong::new(rng)),
            TaskId::MiniInvaders => Game::Invaders(invaders::Invaders::new(rng)),
            TaskId::MiniPinball => Game::Pinball(pinball::Pinball::new(rng)),
            TaskId::MiniCarnival => Game::Carnival(carnival::Carnival::new(rng)),
        }
    }

    /// Advances one tick, returning `(reward, game_over)`.
    fn tick(&mut self, action: Action, rng: &mut ChaCha8Rng) -> (f32, bool) {
        match self {
            Game::Breakout(g) => g.tick(action),
            Game::Pong(g) => g.tick(action, rng),
            Game::Invaders(g) => g.tick(action),
            Game::Pinball(g) => g.tick(action),
            Game::Carnival(g) => g.tick(action, rng),
        }
    }

    fn render(&self) -> Frame {
        let mut frame = Frame::blank();
        match self {
            Game::Breakout(g) => g.render(&mut frame),
            Game::Pong(g) => g.render(&mut frame),
            Game::Invaders(g) => g.render(&mut frame),
            Game::Pinball(g) => g.render(&mut frame),
            Game::Carnival(g) => g.render(&mut frame),
        }
        frame
    }
}

/// Complete state of a running episode, including its random stream.
#[derive(Clone, Debug)]
pub struct EnvState {
    task: TaskSpec,
    game: Game,
    rng: ChaCha8Rng,
    current: Frame,
    previous: Frame,
    steps: usize,
    done: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub obs: Tensor,
    pub reward: f32,
    pub done: bool,
}

impl EnvState {
    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn frame(&self) -> &Frame {
        &self.current
    }

    pub fn observation(&self) -> Tensor {
        observation(&self.current, &self.previous)
    }
}

fn observation(current: &Frame, previous: &Frame) -> Tensor {
    let mut data = vec![0.0f32; OBS_LEN];
    for cell in 0..GRID * GRID {
        for ch in 0..CHANNELS {
            data[cell * 2 * CHANNELS + ch] = current.0[cell * CHANNELS + ch] as f32;
            data[cell * 2 * CHANNELS + CHANNELS + ch] = previous.0[cell * CHANNELS + ch] as f32;
        }
    }
    Tensor::new(OBS_SHAPE.to_vec(), data).expect("observation shape")
}

pub fn reset(task: &TaskSpec, seed: u64) -> Result<(EnvState, Tensor)> {
    task.validate()?;
    if task.actions != task.id.actions() {
        return Err(LabError::invalid(format!("{}: action set differs from the game's", task.id)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let game = Game::new(task.id, &mut rng);
    let frame = game.render();
    let state = EnvState {
        task: task.clone(),
        game,
        rng,
        current: frame,
        previous: frame,
        steps: 0,
        done: false,
    };
    let obs = state.observation();
    Ok((state, obs))
}

/// Advances the episode by one step with a global action index.
pub fn step(state: &mut EnvState, action: usize) -> Result<StepOutcome> {
    if state.task.local_index(action).is_none() {
        return Err(LabError::InvalidAction {
            task: state.task.id.to_string(),
            action,
        });
    }
    if state.done {
        return Err(LabError::invalid(format!("{}: step after episode end", state.task.id)));
    }
    let action = Action::from_index(action).expect("validated action");
    let (reward, over) = state.game.tick(action, &mut state.rng);
    state.steps += 1;
    state.previous = state.current;
    state.current = state.game.render();
    state.done = over || state.steps >= state.task.step_cap;
    Ok(StepOutcome {
        obs: state.observation(),
        reward,
        done: state.done,
    })
}

/// Inclusive per-step reward range of each game.
pub fn reward_range(id: TaskId) -> (f32, f32) {
    match id {
        TaskId::MiniPong => (-1.0, 1.0),
        _ => (0.0, 1.0),
    }
}

pub(crate) fn clamp_move(pos: i32, delta: i32, lo: i32, hi: i32) -> i32 {
    (pos + delta).clamp(lo, hi)
}

#[cfg(test)]
mod tests;
