use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clamp_move, Action, Frame, CH_AGENT, CH_BALL, CH_ENEMY, GRID};

const PADDLE_HEIGHT: i32 = 3;
const AGENT_COL: i32 = GRID as i32 - 1;
const OPPONENT_COL: i32 = 0;
const OPPONENT_TRACKING: f64 = 0.8;
const WINNING_SCORE: u32 = 3;

/// Three-cell paddles. Agent paddle on the right, scripted opponent on the left that follows the
/// ball with probability 0.8 per step. First to three points.
#[derive(Clone, Debug)]
pub(crate) struct Pong {
    agent: i32,
    opponent: i32,
    ball: (i32, i32),
    vel: (i32, i32),
    agent_score: u32,
    opponent_score: u32,
}

impl Pong {
    pub(crate) fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut game = Self {
            agent: 4,
            opponent: 4,
            ball: (0, 0),
            vel: (0, 0),
            agent_score: 0,
            opponent_score: 0,
        };
        let toward = if rng.random_bool(0.5) { 1 } else { -1 };
        game.serve(toward, rng);
        game
    }

    fn serve(&mut self, toward: i32, rng: &mut ChaCha8Rng) {
        let y = rng.random_range(2..=7);
        let dy = if rng.random_bool(0.5) { 1 } else { -1 };
        self.ball = (if toward > 0 { 4 } else { 5 }, y);
        self.vel = (toward, dy);
    }

    fn covers(top: i32, y: i32) -> bool {
        (top..top + PADDLE_HEIGHT).contains(&y)
    }

    /// Row where an incoming ball will reach the opponent's column; the ball's
    /// current row while it travels away.
    fn opponent_target(&self) -> i32 {
        let (x, mut y) = self.ball;
        let (dx, mut dy) = self.vel;
        if dx > 0 {
            return y;
        }
        for _ in 0..(x - OPPONENT_COL).max(0) {
            if !(0..GRID as i32).contains(&(y + dy)) {
                dy = -dy;
            }
            y += dy;
        }
        y
    }

    /// Sends the ball back from `(x, y)`; the paddle cell that was hit picks
    /// the vertical direction.
    fn rebound(&mut self, x: i32, y: i32, dx: i32, cell: i32, incoming_dy: i32) {
        let mut dy = match cell {
            0 => -1,
            c if c == PADDLE_HEIGHT - 1 => 1,
            _ => incoming_dy,
        };
        if !(0..GRID as i32).contains(&(y + dy)) {
            dy = -dy;
        }
        self.ball = (x + dx, y + dy);
        self.vel = (dx, dy);
    }

    pub(crate) fn tick(&mut self, action: Action, rng: &mut ChaCha8Rng) -> (f32, bool) {
        let lo = 0;
        let hi = GRID as i32 - PADDLE_HEIGHT;
        match action {
            Action::Up => self.agent = clamp_move(self.agent, -1, lo, hi),
            Action::Down => self.agent = clamp_move(self.agent, 1, lo, hi),
            _ => {}
        }
        if rng.random_bool(OPPONENT_TRACKING) {
            let target = self.opponent_target();
            if target < self.opponent + 1 {
                self.opponent = clamp_move(self.opponent, -1, lo, hi);
            } else if target > self.opponent + 1 {
                self.opponent = clamp_move(self.opponent, 1, lo, hi);
            }
        }

        let (x, y) = self.ball;
        let (dx, mut dy) = self.vel;
        let mut ny = y + dy;
        if !(0..GRID as i32).contains(&ny) {
            dy = -dy;
            ny = y + dy;
        }
        let nx = x + dx;
        let mut reward = 0.0;
        if nx == AGENT_COL {
            if Self::covers(self.agent, ny) {
                self.rebound(x, y, -1, ny - self.agent, dy);
            } else {
                reward = -1.0;
                self.opponent_score += 1;
                self.serve(1, rng);
            }
        } else if nx == OPPONENT_COL {
            if Self::covers(self.opponent, ny) {
                self.rebound(x, y, 1, ny - self.opponent, dy);
            } else {
                reward = 1.0;
                self.agent_score += 1;
                self.serve(-1, rng);
            }
        } else {
            self.ball = (nx, ny);
            self.vel = (dx, dy);
        }
        let over = self.agent_score >= WINNING_SCORE || self.opponent_score >= WINNING_SCORE;
        (reward, over)
    }

    pub(crate) fn render(&self, frame: &mut Frame) {
        frame.set(AGENT_COL, self.agent, CH_AGENT);
        for dy in 0..PADDLE_HEIGHT {
            frame.set(OPPONENT_COL, self.opponent + dy, CH_ENEMY);
        }
        frame.set(self.ball.0, self.ball.1, CH_BALL);
    }
}
