use rand_chacha::ChaCha8Rng;

use super::{clamp_move, Action, Frame, CH_AGENT, CH_BALL, CH_ENEMY, GRID};

const ALIEN_ROWS: usize = 3;
const ALIEN_COLS: usize = 6;
const FIRST_COL: i32 = 2;
const TOP_ROW: i32 = 1;
const DESCENT_PERIOD: u32 = 20;
const SHOT_SPEED: usize = 3;
const AGENT_ROW: i32 = GRID as i32 - 1;

/// A 3x6 alien block descending one row every 20 ticks. One shot in flight at
/// a time, climbing three cells per tick; the episode ends when the block
/// reaches the agent's row. A cleared block is replaced by a fresh one.
#[derive(Clone, Debug)]
pub(crate) struct Invaders {
    agent: i32,
    aliens: [[bool; ALIEN_COLS]; ALIEN_ROWS],
    top: i32,
    tick: u32,
    shot: Option<(i32, i32)>,
}

impl Invaders {
    pub(crate) fn new(_rng: &mut ChaCha8Rng) -> Self {
        Self {
            agent: 4,
            aliens: [[true; ALIEN_COLS]; ALIEN_ROWS],
            top: TOP_ROW,
            tick: 0,
            shot: None,
        }
    }

    /// Kills the alien at a cell, if any.
    fn hit(&mut self, x: i32, y: i32) -> bool {
        let row = y - self.top;
        let col = x - FIRST_COL;
        if (0..ALIEN_ROWS as i32).contains(&row) && (0..ALIEN_COLS as i32).contains(&col) {
            let cell = &mut self.aliens[row as usize][col as usize];
            if *cell {
                *cell = false;
                return true;
            }
        }
        false
    }

    fn lowest_row(&self) -> Option<i32> {
        (0..ALIEN_ROWS)
            .rev()
            .find(|&r| self.aliens[r].iter().any(|&a| a))
            .map(|r| self.top + r as i32)
    }

    pub(crate) fn tick(&mut self, action: Action) -> (f32, bool) {
        match action {
            Action::Left => self.agent = clamp_move(self.agent, -1, 0, GRID as i32 - 1),
            Action::Right => self.agent = clamp_move(self.agent, 1, 0, GRID as i32 - 1),
            Action::Fire if self.shot.is_none() => self.shot = Some((self.agent, AGENT_ROW)),
            _ => {}
        }
        let mut reward = 0.0;
        for _ in 0..SHOT_SPEED {
            let Some((x, y)) = self.shot else { break };
            let ny = y - 1;
            if ny < 0 {
                self.shot = None;
            } else if self.hit(x, ny) {
                reward = 1.0;
                self.shot = None;
            } else {
                self.shot = Some((x, ny));
            }
        }
        self.tick += 1;
        if self.lowest_row().is_none() {
            self.aliens = [[true; ALIEN_COLS]; ALIEN_ROWS];
            self.top = TOP_ROW;
            self.tick = 0;
        } else if self.tick % DESCENT_PERIOD == 0 {
            self.top += 1;
        }
        let over = self.lowest_row().is_some_and(|row| row >= AGENT_ROW);
        (reward, over)
    }

    pub(crate) fn render(&self, frame: &mut Frame) {
        frame.set(self.agent, AGENT_ROW, CH_AGENT);
        if let Some((x, y)) = self.shot {
            frame.set(x, y, CH_BALL);
        }
        for (r, row) in self.aliens.iter().enumerate() {
            for (c, &alive) in row.iter().enumerate() {
                if alive {
                    frame.set(FIRST_COL + c as i32, self.top + r as i32, CH_ENEMY);
                }
            }
        }
    }
}
