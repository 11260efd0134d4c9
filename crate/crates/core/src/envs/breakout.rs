use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clamp_move, Action, Frame, CH_AGENT, CH_BALL, CH_ENEMY, GRID};

const BRICK_ROWS: [i32; 2] = [1, 2];
const PADDLE_ROW: i32 = 9;
const PADDLE_WIDTH: i32 = 2;
const PADDLE_SPEED: i32 = 2;

/// Two brick rows, a two-cell paddle moving two cells per step and a diagonally moving ball. Losing the
/// ball ends the episode; a cleared wall is rebuilt.
#[derive(Clone, Debug)]
pub(crate) struct Breakout {
    paddle: i32,
    ball: (i32, i32),
    vel: (i32, i32),
    bricks: [[bool; GRID]; 2],
}

impl Breakout {
    pub(crate) fn new(rng: &mut ChaCha8Rng) -> Self {
        let x = rng.random_range(2..=7);
        let dx = if rng.random_bool(0.5) { 1 } else { -1 };
        Self {
            paddle: 4,
            ball: (x, 5),
            vel: (dx, -1),
            bricks: [[true; GRID]; 2],
        }
    }

    fn brick_at(&self, x: i32, y: i32) -> Option<usize> {
        BRICK_ROWS
            .iter()
            .position(|&row| row == y)
            .filter(|&r| self.bricks[r][x as usize])
    }

    /// Moves the ball after a bounce when the destination is free.
    fn bounce_to(&mut self, x: i32, y: i32) {
        if (0..GRID as i32).contains(&x) && (0..PADDLE_ROW).contains(&y) && self.brick_at(x, y).is_none() {
            self.ball = (x, y);
        }
    }

    pub(crate) fn tick(&mut self, action: Action) -> (f32, bool) {
        match action {
            Action::Left => self.paddle = clamp_move(self.paddle, -PADDLE_SPEED, 0, GRID as i32 - PADDLE_WIDTH),
            Action::Right => self.paddle = clamp_move(self.paddle, PADDLE_SPEED, 0, GRID as i32 - PADDLE_WIDTH),
            _ => {}
        }
        let (x, y) = self.ball;
        let (mut dx, mut dy) = self.vel;
        let mut nx = x + dx;
        if !(0..GRID as i32).contains(&nx) {
            dx = -dx;
            nx = x + dx;
        }
        let mut ny = y + dy;
        if ny < 0 {
            dy = 1;
            ny = y + dy;
        }
        let mut reward = 0.0;
        let mut over = false;
        if let Some(row) = self.brick_at(nx, ny) {
            self.bricks[row][nx as usize] = false;
            reward = 1.0;
            dy = -dy;
            self.bounce_to(nx, y + dy);
        } else if ny == PADDLE_ROW {
            if nx == self.paddle || nx == self.paddle + 1 {
                dy = -1;
                dx = if nx == self.paddle { -1 } else { 1 };
                if !(0..GRID as i32).contains(&(x + dx)) {
                    dx = -dx;
                }
                self.bounce_to(x + dx, y + dy);
            } else {
                self.ball = (nx, ny);
                over = true;
            }
        } else {
            self.ball = (nx, ny);
        }
        self.vel = (dx, dy);
        if self.bricks.iter().all(|row| row.iter().all(|b| !b)) {
            self.bricks = [[true; GRID]; 2];
        }
        (reward, over)
    }

    pub(crate) fn render(&self, frame: &mut Frame) {
        frame.set(self.paddle, PADDLE_ROW, CH_AGENT);
        frame.set(self.ball.0, self.ball.1, CH_BALL);
        for (r, &row) in BRICK_ROWS.iter().enumerate() {
            for x in 0..GRID {
                if self.bricks[r][x] {
                    frame.set(x as i32, row, CH_ENEMY);
                }
            }
        }
    }
}
