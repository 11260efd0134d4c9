//! Self-checks that need no long training runs: gradient oracles, the replay
//! sampling law and weight-surgery exactness.

use std::fmt;
use std::str::FromStr;

use crate::error::{LabError, Result};
use crate::nn::NetworkSpec;

pub mod gradients;
pub mod reference;
pub mod replay;
pub mod surgery;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gradients,
    Replay,
    Surgery,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Gradients, Suite::Replay, Suite::Surgery];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Gradients => "gradients",
            Suite::Replay => "replay",
            Suite::Surgery => "surgery",
        })
    }
}

impl FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.to_string() == s)
            .ok_or_else(|| LabError::invalid(format!("unknown suite `{s}` (gradients, replay, surgery)")))
    }
}

#[derive(Clone, Debug)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<CheckLine>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "[{}] {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, self.suite, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Number of randomized instances per gradient check.
pub const GRADIENT_TRIALS: usize = 20;
pub const REPLAY_VECTORS: usize = 10;
pub const REPLAY_DRAWS: usize = 100_000;

fn gradient_line(name: &str, stats: gradients::GradCheckStats) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        passed: stats.passed(),
        detail: format!(
            "{} entries, {} kinks skipped, max rel err {:.2e}{}",
            stats.checked,
            stats.kinks,
            stats.max_rel_error,
            if stats.worst.is_empty() { String::new() } else { format!(" at {}", stats.worst) }
        ),
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::Gradients => {
            let mut lateral = NetworkSpec::reduced(3);
            lateral.lateral_width = 3;
            vec![
                gradient_line("td/huber loss", gradients::check_td_loss(GRADIENT_TRIALS, seed)?),
                gradient_line("policy regression loss", gradients::check_policy_loss(GRADIENT_TRIALS, seed + 1)?),
                gradient_line("feature regression loss", gradients::check_feature_loss(GRADIENT_TRIALS, seed + 2)?),
                gradient_line(
                    "network backward (reduced)",
                    gradients::check_network(&NetworkSpec::reduced(3), GRADIENT_TRIALS, usize::MAX, seed + 3)?,
                ),
                gradient_line(
                    "network backward (padded stride 2)",
                    gradients::check_network(&NetworkSpec::reduced_strided(4), GRADIENT_TRIALS, usize::MAX, seed + 4)?,
                ),
                gradient_line(
                    "network backward (lateral)",
                    gradients::check_network(&lateral, GRADIENT_TRIALS, usize::MAX, seed + 5)?,
                ),
                gradient_line(
                    "network backward (desk, sampled)",
                    gradients::check_network(&NetworkSpec::desk(6), GRADIENT_TRIALS, 20, seed + 6)?,
                ),
            ]
        }
        Suite::Replay => replay::check_sampling_law(REPLAY_VECTORS, REPLAY_DRAWS, 0.6, seed)?
            .into_iter()
            .enumerate()
            .map(|(i, r)| CheckLine {
                name: format!("sampling law, vector {} ({} slots)", i + 1, r.slots),
                passed: r.passed(),
                detail: format!("chi2 {:.2} on {} dof, p = {:.4}", r.statistic, r.dof, r.p_value),
            })
            .collect(),
        Suite::Surgery => [
            surgery::check_transplant(50, seed)?,
            surgery::check_lateral_zero_columns(50, seed + 1)?,
            surgery::check_frozen_trunk(1_500, seed + 2)?,
            surgery::check_layer_prefix(seed + 3)?,
        ]
        .into(),
    };
    Ok(SuiteReport { suite, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for suite in Suite::ALL {
            assert_eq!(suite.to_string().parse::<Suite>().unwrap(), suite);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
