use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Action, Frame, CH_BALL, CH_ENEMY, CH_SPECIAL, GRID};

const BUMPERS: [(i32, i32); 3] = [(2, 4), (7, 4), (5, 1)];
const FLIPPER_ROW: i32 = 8;
const DRAIN_ROW: i32 = 9;
const LAUNCH_SPEED: i32 = -4;
/// Flippers cover the left and right halves of the bottom.
const SPLIT: i32 = 5;

/// A single ball under gravity (one cell per two ticks when falling). The
/// ball rests on the plunger until fired; the flipper on the ball's side
/// relaunches it from the row above the drain. Each bumper scores once per
/// launch.
#[derive(Clone, Debug)]
pub(crate) struct Pinball {
    ball: (i32, i32),
    vx: i32,
    vy: i32,
    launched: bool,
    tick: u32,
    /// Bumpers already scored since the last launch.
    lit: [bool; 3],
}

impl Pinball {
    pub(crate) fn new(rng: &mut ChaCha8Rng) -> Self {
        Self {
            ball: (rng.random_range(3..=6), FLIPPER_ROW),
            vx: if rng.random_bool(0.5) { 1 } else { -1 },
            vy: 0,
            launched: false,
            tick: 0,
            lit: [false; 3],
        }
    }

    fn flipper_for(x: i32) -> Action {
        if x < SPLIT {
            Action::Left
        } else {
            Action::Right
        }
    }

    pub(crate) fn tick(&mut self, action: Action) -> (f32, bool) {
        self.tick += 1;
        if !self.launched {
            if action == Action::Fire {
                self.launched = true;
                self.vy = LAUNCH_SPEED;
            }
            return (0.0, false);
        }
        let (x, y) = self.ball;
        if y == FLIPPER_ROW && self.vy >= 0 && action == Self::flipper_for(x) {
            self.vy = LAUNCH_SPEED;
            self.vx = if action == Action::Left { 1 } else { -1 };
            self.lit = [false; 3];
        }

        let mut nx = x + self.vx;
        if !(0..GRID as i32).contains(&nx) {
            self.vx = -self.vx;
            nx = x + self.vx;
        }
        let mut ny = if self.vy < 0 {
            y - 1
        } else if self.vy > 0 && self.tick % 2 == 0 {
            y + 1
        } else {
            y
        };
        if ny < 0 {
            self.vy = 1;
            ny = y;
        }
        let mut reward = 0.0;
        if let Some(b) = BUMPERS.iter().position(|&p| p == (nx, ny)) {
            if !self.lit[b] {
                self.lit[b] = true;
                reward = 1.0;
            }
            self.vx = -self.vx;
            self.vy = 1;
        } else {
            self.ball = (nx, ny);
        }
        if self.tick % 2 == 1 {
            self.vy = (self.vy + 1).min(1);
        }
        (reward, self.ball.1 >= DRAIN_ROW)
    }

    pub(crate) fn render(&self, frame: &mut Frame) {
        frame.set(self.ball.0, self.ball.1, CH_BALL);
        for (&(x, y), &lit) in BUMPERS.iter().zip(&self.lit) {
            frame.set(x, y, if lit { CH_SPECIAL } else { CH_ENEMY });
        }
        for x in 0..GRID as i32 {
            frame.set(x, DRAIN_ROW, CH_SPECIAL);
        }
    }
}
