//! Exactness checks of the weight-reuse operations on random networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distill::AmnCheckpoint;
use crate::envs::{TaskId, TaskSpec, ACTION_COUNT, OBS_LEN};
use super::CheckLine;
use crate::error::Result;
use crate::expert::TrainConfig;
use crate::nn::{forward_raw, init_params, NetworkSpec, LAYER_NAMES};
use crate::surgery::{layer_subset_init, make_lateral, train_lateral, transplant, TransferSource};

pub const Q_TOLERANCE: f32 = 1e-7;

fn check(name: &str, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn random_obs(rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..OBS_LEN).map(|_| if rng.random_bool(0.15) { 1.0 } else { 0.0 }).collect()
}

fn amn(seed: u64) -> Result<AmnCheckpoint> {
    Ok(AmnCheckpoint {
        params: init_params(&NetworkSpec::desk(ACTION_COUNT), seed)?,
        tasks: TaskId::ALL.to_vec(),
        adapters: Default::default(),
        logs: Default::default(),
        expert_scores: Default::default(),
        baselines: Default::default(),
    })
}

/// Expert Q equals the student's Q on the task's action subset.
pub fn check_transplant(observations: usize, seed: u64) -> Result<CheckLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let student = amn(rng.random())?;
    let mut worst = 0.0f32;
    for id in TaskId::ALL {
        let task = TaskSpec::new(id);
        let expert = transplant(&student.params, &task)?;
        for _ in 0..observations {
            let obs = random_obs(&mut rng);
            let q_amn = forward_raw(&student.params, &obs, &[])?;
            let q_exp = forward_raw(&expert, &obs, &[])?;
            for (j, &a) in task.actions.iter().enumerate() {
                worst = worst.max((q_exp.q()[j] - q_amn.q()[a]).abs());
            }
        }
    }
    Ok(check(
        "transplant Q-equality on action subsets",
        worst <= Q_TOLERANCE,
        format!("max |dQ| {worst:.3e}"),
    ))
}

/// With the student-facing columns zeroed, the lateral forward pass equals
/// the plain expert's, bit for bit.
pub fn check_lateral_zero_columns(observations: usize, seed: u64) -> Result<CheckLine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let student = amn(rng.random())?;
    let mut mismatches = 0;
    for id in TaskId::ALL {
        let task = TaskSpec::new(id);
        let mut lateral = make_lateral(&student.params, &task, rng.random())?;
        lateral.zero_amn_columns();
        let plain = lateral.without_lateral()?;
        for _ in 0..observations {
            let obs = random_obs(&mut rng);
            let feats = forward_raw(&student.params, &obs, &[])?.features().to_vec();
            let with = forward_raw(&lateral.expert, &obs, &feats)?;
            let without = forward_raw(&plain, &obs, &[])?;
            if with.q().iter().zip(without.q()).any(|(a, b)| a.to_bits() != b.to_bits()) {
                mismatches += 1;
            }
        }
    }
    Ok(check(
        "lateral zero-column equivalence",
        mismatches == 0,
        format!("{mismatches} mismatching observations"),
    ))
}

/// The frozen student is untouched by a short lateral training run.
pub fn check_frozen_trunk(steps: usize, seed: u64) -> Result<CheckLine> {
    let student = amn(seed)?;
    let task = TaskSpec::new(TaskId::MiniPong);
    let lateral = make_lateral(&student.params, &task, seed ^ 1)?;
    let before = lateral.expert.clone();
    let config = TrainConfig {
        total_steps: steps,
        iteration_steps: steps,
        warmup: 100,
        eval_episodes: 1,
        ..TrainConfig::default()
    };
    let trained = train_lateral(&task, lateral, &config, seed)?;
    let frozen = trained.lateral_source.as_ref().is_some_and(|s| s.bit_eq(&student.params));
    let moved = !trained.params.bit_eq(&before);
    Ok(check(
        "frozen student trunk across training",
        frozen && moved,
        format!("student unchanged: {frozen}, expert updated: {moved}"),
    ))
}

/// For every k, the first k layers equal the source and k = 0 equals a plain
/// initialization.
pub fn check_layer_prefix(seed: u64) -> Result<CheckLine> {
    let student = amn(seed)?;
    let task = TaskSpec::new(TaskId::MiniBreakout);
    let mut failures = Vec::new();
    for k in 0..=LAYER_NAMES.len() {
        let init_seed = seed.wrapping_add(k as u64 + 1);
        let params = layer_subset_init(TransferSource::Amn(&student), k, &task, init_seed)?;
        let source = transplant(&student.params, &task)?;
        for (i, name) in LAYER_NAMES.iter().enumerate() {
            let same = params.layers[i].weight.bit_eq(&source.layers[i].weight)
                && params.layers[i].bias.bit_eq(&source.layers[i].bias);
            if (i < k) != same {
                failures.push(format!("k={k} {name}"));
            }
        }
        if k == 0 {
            let fresh = init_params(&params.spec, init_seed)?;
            if !params.bit_eq(&fresh) {
                failures.push("k=0 differs from init_params".into());
            }
        }
    }
    Ok(check(
        "layer-subset prefix bit-exactness (k = 0..5)",
        failures.is_empty(),
        if failures.is_empty() {
            "all prefixes exact".into()
        } else {
            failures.join(", ")
        },
    ))
}
