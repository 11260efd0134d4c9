use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clamp_move, Action, Frame, CH_AGENT, CH_BALL, CH_ENEMY, CH_SPECIAL, GRID};

const TARGET_ROW: i32 = 0;
const TARGETS: usize = 3;
const SCROLL_PERIOD: u32 = 2;
const AMMO: u32 = 20;
const AGENT_ROW: i32 = GRID as i32 - 1;

/// Targets scroll right along the top row (wrapping); the agent has 20 shots
/// that strike the top row of its column on the tick they are fired. The
/// episode ends with the last shot.
#[derive(Clone, Debug)]
pub(crate) struct Carnival {
    agent: i32,
    targets: [bool; GRID],
    /// Column of the shot fired this tick, drawn as a beam.
    beam: Option<i32>,
    ammo: u32,
    tick: u32,
}

impl Carnival {
    pub(crate) fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut game = Self {
            agent: 4,
            targets: [false; GRID],
            beam: None,
            ammo: AMMO,
            tick: 0,
        };
        game.refill(rng);
        game
    }

    fn refill(&mut self, rng: &mut ChaCha8Rng) {
        let mut placed = 0;
        while placed < TARGETS {
            let x = rng.random_range(0..GRID);
            if !self.targets[x] {
                self.targets[x] = true;
                placed += 1;
            }
        }
    }

    pub(crate) fn tick(&mut self, action: Action, rng: &mut ChaCha8Rng) -> (f32, bool) {
        self.beam = None;
        let mut reward = 0.0;
        match action {
            Action::Left => self.agent = clamp_move(self.agent, -1, 0, GRID as i32 - 1),
            Action::Right => self.agent = clamp_move(self.agent, 1, 0, GRID as i32 - 1),
            Action::Fire if self.ammo > 0 => {
                self.ammo -= 1;
                self.beam = Some(self.agent);
                let x = self.agent as usize;
                if self.targets[x] {
                    self.targets[x] = false;
                    reward = 1.0;
                }
            }
            _ => {}
        }
        self.tick += 1;
        if self.tick % SCROLL_PERIOD == 0 {
            self.targets.rotate_right(1);
        }
        if self.targets.iter().all(|t| !t) {
            self.refill(rng);
        }
        (reward, self.ammo == 0)
    }

    pub(crate) fn render(&self, frame: &mut Frame) {
        frame.set(self.agent, AGENT_ROW, CH_AGENT);
        for (x, &t) in self.targets.iter().enumerate() {
            if t {
                frame.set(x as i32, TARGET_ROW, CH_ENEMY);
            }
        }
        if let Some(x) = self.beam {
            for y in TARGET_ROW + 1..AGENT_ROW {
                frame.set(x, y, CH_BALL);
            }
        }
        // ammo gauge: one cell per two remaining shots along the left edge
        for i in 0..self.ammo.div_ceil(2) as i32 {
            frame.set(0, AGENT_ROW - 1 - i, CH_SPECIAL);
        }
    }
}
