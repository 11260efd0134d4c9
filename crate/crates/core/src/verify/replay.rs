//! Goodness-of-fit of prioritized sampling against `p^α / Σ p^α`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{LabError, Result};
use crate::replay::PrioritizedReplayBuffer;

pub const SIGNIFICANCE: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct ChiSquareResult {
    pub slots: usize,
    pub draws: usize,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquareResult {
    pub fn passed(&self) -> bool {
        self.p_value > SIGNIFICANCE
    }
}

/// Pearson test of observed slot counts against expected probabilities.
pub fn chi_square(counts: &[u64], expected_probs: &[f64]) -> Result<(f64, usize, f64)> {
    if counts.len() != expected_probs.len() || counts.len() < 2 {
        return Err(LabError::invalid("chi-square needs matching vectors of at least two cells"));
    }
    let draws: u64 = counts.iter().sum();
    let statistic: f64 = counts
        .iter()
        .zip(expected_probs)
        .map(|(&c, &p)| {
            let e = p * draws as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let dof = counts.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| LabError::invalid(e.to_string()))?;
    Ok((statistic, dof, 1.0 - dist.cdf(statistic)))
}

/// Fills buffers with `vectors` random priority vectors and tests `draws`
/// samples from each. Expected probabilities are computed here from the raw
/// priorities, not read back from the buffer.
pub fn check_sampling_law(vectors: usize, draws: usize, alpha: f64, seed: u64) -> Result<Vec<ChiSquareResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::with_capacity(vectors);
    for _ in 0..vectors {
        let slots = rng.random_range(5..=30);
        let priorities: Vec<f64> = (0..slots).map(|_| rng.random_range(0.05..5.0)).collect();
        let mut buffer = PrioritizedReplayBuffer::new(slots, alpha)?;
        for (i, &p) in priorities.iter().enumerate() {
            buffer.push(i, Some(p))?;
        }
        let z: f64 = priorities.iter().map(|p| p.powf(alpha)).sum();
        let expected: Vec<f64> = priorities.iter().map(|p| p.powf(alpha) / z).collect();

        let mut counts = vec![0u64; slots];
        let batch = 1000;
        let mut remaining = draws;
        while remaining > 0 {
            let n = remaining.min(batch).min(slots);
            for &i in &buffer.sample(n, 1.0, &mut rng)?.indices {
                counts[i] += 1;
            }
            remaining -= n;
        }
        let (statistic, dof, p_value) = chi_square(&counts, &expected)?;
        results.push(ChiSquareResult {
            slots,
            draws,
            statistic,
            dof,
            p_value,
        });
    }
    Ok(results)
}
