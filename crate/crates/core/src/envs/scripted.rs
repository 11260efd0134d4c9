//! Hand-written policies that read the rendered frames. They serve as a
//! sanity floor for the games: each should clearly beat uniform random play.

use super::{Action, EnvState, Frame, TaskId, CH_AGENT, CH_BALL, CH_ENEMY, GRID};

fn find(frame: &Frame, channel: usize) -> Option<(i32, i32)> {
    (0..GRID)
        .flat_map(|y| (0..GRID).map(move |x| (x, y)))
        .find(|&(x, y)| frame.get(x, y, channel))
        .map(|(x, y)| (x as i32, y as i32))
}

fn toward(from: i32, to: i32, neg: Action, pos: Action) -> Action {
    match to.cmp(&from) {
        std::cmp::Ordering::Less => neg,
        std::cmp::Ordering::Greater => pos,
        std::cmp::Ordering::Equal => Action::Noop,
    }
}

/// Column a diagonally moving ball reaches after `steps` ticks, with wall
/// reflections.
fn landing_x(x: i32, dx: i32, steps: i32) -> i32 {
    let (mut x, mut dx) = (x, dx);
    for _ in 0..steps.max(0) {
        if !(0..GRID as i32).contains(&(x + dx)) {
            dx = -dx;
        }
        x += dx;
    }
    x
}

/// Picks a global action index for the current state.
pub fn scripted_action(state: &EnvState) -> usize {
    let frame = state.frame();
    let action = match state.task().id {
        TaskId::MiniBreakout => {
            let paddle = find(frame, CH_AGENT).map_or(4, |p| p.0);
            match (find(frame, CH_BALL), find(&state.previous, CH_BALL)) {
                (Some((bx, by)), Some((px, py))) => {
                    let dx = if bx == px { 1 } else { (bx - px).signum() };
                    let target = if by > py || by == py {
                        landing_x(bx, dx, 9 - by)
                    } else {
                        bx
                    };
                    if target < paddle {
                        Action::Left
                    } else if target > paddle + 1 {
                        Action::Right
                    } else {
                        Action::Noop
                    }
                }
                _ => Action::Noop,
            }
        }
        TaskId::MiniPong => {
            let top = find(frame, CH_AGENT).map_or(4, |p| p.1);
            match (find(frame, CH_BALL), find(&state.previous, CH_BALL)) {
                (Some((bx, by)), Some((px, py))) => {
                    let dy = if by == py { 1 } else { (by - py).signum() };
                    let target = if bx > px { landing_x(by, dy, 8 - bx) } else { 4 };
                    if target < top {
                        Action::Up
                    } else if target > top + 2 {
                        Action::Down
                    } else {
                        Action::Noop
                    }
                }
                _ => Action::Noop,
            }
        }
        TaskId::MiniInvaders => {
            let agent = find(frame, CH_AGENT).map_or(4, |p| p.0);
            // nearest column that still has an alien
            let target = (0..GRID as i32)
                .filter(|&x| (0..GRID).any(|y| frame.get(x as usize, y, CH_ENEMY)))
                .min_by_key(|&x| (x - agent).abs());
            match target {
                Some(x) if x != agent => toward(agent, x, Action::Left, Action::Right),
                _ => Action::Fire,
            }
        }
        TaskId::MiniPinball => match find(frame, CH_BALL) {
            Some((_, y)) if y == 8 && state.steps() == 0 => Action::Fire,
            Some((x, 8)) => {
                if x < 5 {
                    Action::Left
                } else {
                    Action::Right
                }
            }
            _ => Action::Fire,
        },
        TaskId::MiniCarnival => {
            let agent = find(frame, CH_AGENT).map_or(4, |p| p.0);
            let target = (0..GRID as i32)
                .filter(|&x| frame.get(x as usize, 0, CH_ENEMY))
                .min_by_key(|&x| (x - agent).abs());
            match target {
                Some(x) if x == agent => Action::Fire,
                Some(x) => toward(agent, x, Action::Left, Action::Right),
                None => Action::Noop,
            }
        }
    };
    action as usize
}
