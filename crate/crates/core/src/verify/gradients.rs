//! Finite-difference checks of every analytic gradient in the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reference::{relative_error, ReferenceNet};
use crate::distill::{feature_regression_loss, policy_regression_loss, FeatureAdapter};
use crate::error::Result;
use crate::expert::td_loss_and_grad;
use crate::nn::{backward_into, forward_raw, init_params, Gradients, NetworkSpec};

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-2;

#[derive(Clone, Debug, Default)]
pub struct GradCheckStats {
    pub checked: usize,
    /// Entries skipped because a ReLU changed state inside the difference
    /// stencil, where the central difference is not a derivative estimate.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub worst: String,
}

impl GradCheckStats {
    fn record(&mut self, analytic: f64, numeric: f64, label: impl FnOnce() -> String) {
        self.checked += 1;
        let err = relative_error(analytic, numeric, FD_FLOOR);
        if err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = format!("{} (analytic {analytic:.6e}, numeric {numeric:.6e})", label());
        }
    }

    pub fn merge(&mut self, other: GradCheckStats) {
        self.checked += other.checked;
        self.kinks += other.kinks;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
    }

    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_error <= FD_TOLERANCE && self.kinks * 10 <= self.checked
    }
}

fn random_network(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<crate::nn::NetworkParams> {
    let mut params = init_params(spec, rng.random())?;
    for layer in &mut params.layers {
        for b in layer.bias.data_mut() {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    Ok(params)
}

fn entry(net: &mut ReferenceNet, layer: usize, is_bias: bool, idx: usize) -> &mut f64 {
    if is_bias {
        &mut net.biases[layer][idx]
    } else {
        &mut net.weights[layer][idx]
    }
}

/// Compares engine gradients (parameters and input) against central
/// differences of the reference evaluator for `trials` random instances.
/// `max_entries_per_tensor` bounds the work on larger specs by sampling.
pub fn check_network(
    spec: &NetworkSpec,
    trials: usize,
    max_entries_per_tensor: usize,
    seed: u64,
) -> Result<GradCheckStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GradCheckStats::default();
    for _ in 0..trials {
        let params = random_network(spec, &mut rng)?;
        let obs: Vec<f32> = (0..spec.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lateral: Vec<f32> = (0..spec.lateral_width).map(|_| rng.random_range(0.0..1.0)).collect();
        let dq: Vec<f32> = (0..spec.head_width).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dfeat: Vec<f32> = (0..spec.feature_width).map(|_| rng.random_range(-1.0..1.0)).collect();

        let cache = forward_raw(&params, &obs, &lateral)?;
        let mut grads = Gradients::zeros_like(&params);
        let mut input_grad = vec![0.0f32; obs.len()];
        backward_into(&params, &cache, &dq, Some(&dfeat), &mut grads, Some(&mut input_grad))?;

        let reference = ReferenceNet::from_params(&params);
        let obs64: Vec<f64> = obs.iter().map(|&v| v as f64).collect();
        let lat64: Vec<f64> = lateral.iter().map(|&v| v as f64).collect();
        let dq64: Vec<f64> = dq.iter().map(|&v| v as f64).collect();
        let df64: Vec<f64> = dfeat.iter().map(|&v| v as f64).collect();

        let probe = |net: &ReferenceNet, x: &[f64]| net.probe_loss(x, &lat64, &dq64, &df64);

        for (li, layer) in params.layers.iter().enumerate() {
            for (is_bias, analytic) in [(false, &grads.layers[li].0), (true, &grads.layers[li].1)] {
                let n = analytic.len();
                let picks: Vec<usize> = if n <= max_entries_per_tensor {
                    (0..n).collect()
                } else {
                    (0..max_entries_per_tensor).map(|_| rng.random_range(0..n)).collect()
                };
                for idx in picks {
                    let mut plus = reference.clone();
                    let mut minus = reference.clone();
                    *entry(&mut plus, li, is_bias, idx) += FD_STEP;
                    *entry(&mut minus, li, is_bias, idx) -= FD_STEP;
                    let (lp, pp) = probe(&plus, &obs64);
                    let (lm, pm) = probe(&minus, &obs64);
                    if pp != pm {
                        stats.kinks += 1;
                        continue;
                    }
                    let numeric = (lp - lm) / (2.0 * FD_STEP);
                    let kind = if is_bias { "bias" } else { "weight" };
                    stats.record(analytic.data()[idx] as f64, numeric, || {
                        format!("{}.{kind}[{idx}]", layer.name)
                    });
                }
            }
        }
        let input_picks: Vec<usize> = if obs.len() <= max_entries_per_tensor {
            (0..obs.len()).collect()
        } else {
            (0..max_entries_per_tensor).map(|_| rng.random_range(0..obs.len())).collect()
        };
        for idx in input_picks {
            let mut xp = obs64.clone();
            let mut xm = obs64.clone();
            xp[idx] += FD_STEP;
            xm[idx] -= FD_STEP;
            let (lp, pp) = probe(&reference, &xp);
            let (lm, pm) = probe(&reference, &xm);
            if pp != pm {
                stats.kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            stats.record(input_grad[idx] as f64, numeric, || format!("input[{idx}]"));
        }
    }
    Ok(stats)
}

fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], idx: usize) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[idx] += FD_STEP;
    xm[idx] -= FD_STEP;
    (f(&xp) - f(&xm)) / (2.0 * FD_STEP)
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Checks the importance-weighted Huber TD gradient against differences of a
/// direct evaluation. Entries whose TD error sits within one step of the
/// Huber knee are counted as kinks.
pub fn check_td_loss(trials: usize, seed: u64) -> Result<GradCheckStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GradCheckStats::default();
    for _ in 0..trials {
        let n = rng.random_range(2..8);
        let q: Vec<f32> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let action = rng.random_range(0..n);
        let target: f32 = rng.random_range(-3.0..3.0);
        let weight: f32 = rng.random_range(0.1..1.0);
        let (loss, grad) = td_loss_and_grad(&q, action, target, weight);
        let oracle = |x: &[f64]| {
            let td = x[action] - target as f64;
            weight as f64 * if td.abs() <= 1.0 { 0.5 * td * td } else { td.abs() - 0.5 }
        };
        let q64 = to_f64(&q);
        stats.record(loss, oracle(&q64), || "td loss value".into());
        for idx in 0..n {
            if idx == action && ((q64[action] - target as f64).abs() - 1.0).abs() <= FD_STEP {
                stats.kinks += 1;
                continue;
            }
            let numeric = central_difference(oracle, &q64, idx);
            stats.record(grad[idx] as f64, numeric, || format!("td dq[{idx}]"));
        }
    }
    Ok(stats)
}

/// Checks the tempered cross-entropy gradient with respect to the student
/// logits against an independent log-sum-exp evaluation.
pub fn check_policy_loss(trials: usize, seed: u64) -> Result<GradCheckStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GradCheckStats::default();
    for _ in 0..trials {
        let n = rng.random_range(2..10);
        let teacher: Vec<f32> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let student: Vec<f32> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let tau: f32 = rng.random_range(0.2..2.0);
        let (loss, grad) = policy_regression_loss(&teacher, &student, tau)?;
        let t64 = to_f64(&teacher);
        let tmax = t64.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tz: f64 = t64.iter().map(|t| ((t - tmax) / tau as f64).exp()).sum();
        let p: Vec<f64> = t64.iter().map(|t| ((t - tmax) / tau as f64).exp() / tz).collect();
        let oracle = |s: &[f64]| {
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            p.iter().zip(s).map(|(pi, si)| -pi * (si - lse)).sum::<f64>()
        };
        let s64 = to_f64(&student);
        stats.record(loss, oracle(&s64), || "policy loss value".into());
        for idx in 0..n {
            let numeric = central_difference(&oracle, &s64, idx);
            stats.record(grad[idx] as f64, numeric, || format!("policy dlogit[{idx}]"));
        }
    }
    Ok(stats)
}

/// Checks the adapted feature regression gradients (student features,
/// adapter weight and bias) against a direct evaluation.
pub fn check_feature_loss(trials: usize, seed: u64) -> Result<GradCheckStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GradCheckStats::default();
    for _ in 0..trials {
        let n = rng.random_range(2..7);
        let mut adapter = FeatureAdapter::identity(n);
        for w in adapter.weight.data_mut() {
            *w += rng.random_range(-0.5..0.5);
        }
        for b in adapter.bias.data_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
        let student: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let teacher: Vec<f32> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = feature_regression_loss(&student, &teacher, &adapter)?;

        // Flattened variables: student features, then weight rows, then bias.
        let mut vars = to_f64(&student);
        vars.extend(to_f64(adapter.weight.data()));
        vars.extend(to_f64(adapter.bias.data()));
        let t64 = to_f64(&teacher);
        let oracle = |v: &[f64]| {
            let (s, rest) = v.split_at(n);
            let (w, b) = rest.split_at(n * n);
            (0..n)
                .map(|i| {
                    let a: f64 = (0..n).map(|j| w[i * n + j] * s[j]).sum::<f64>() + b[i];
                    (a - t64[i]).powi(2)
                })
                .sum::<f64>()
        };
        stats.record(out.loss, oracle(&vars), || "feature loss value".into());
        let analytic: Vec<f32> = out
            .d_student
            .iter()
            .chain(out.d_weight.data())
            .chain(out.d_bias.data())
            .copied()
            .collect();
        for (idx, a) in analytic.iter().enumerate() {
            let numeric = central_difference(oracle, &vars, idx);
            stats.record(*a as f64, numeric, || format!("feature grad[{idx}]"));
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_gradients_match_differences() {
        for (name, stats) in [
            ("td", check_td_loss(30, 1).unwrap()),
            ("policy", check_policy_loss(30, 2).unwrap()),
            ("feature", check_feature_loss(30, 3).unwrap()),
        ] {
            assert!(stats.passed(), "{name}: {stats:?}");
        }
    }

    #[test]
    fn reduced_network_gradients() {
        let stats = check_network(&NetworkSpec::reduced(3), 5, 1000, 4).unwrap();
        assert!(stats.passed(), "{stats:?}");
    }
}
