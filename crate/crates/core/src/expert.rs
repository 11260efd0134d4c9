//! Active-phase learner: double Q-learning with n-step returns, proportional
//! prioritized replay and a periodically synced target network.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{self, TaskId, TaskSpec, OBS_LEN};
use crate::error::{LabError, Result};
use crate::metrics::{MetricLog, MetricRecord};
use crate::nn::{adam_step, argmax, backward_into, forward_raw, AdamConfig, AdamState, ForwardCache, Gradients, NetworkParams};
use crate::replay::{PrioritizedReplayBuffer, ReplayConfig};
use crate::seeds::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_steps: usize,
    pub iteration_steps: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_steps: usize,
    pub gamma: f64,
    pub n_step: usize,
    pub target_sync: usize,
    pub batch_size: usize,
    pub learn_every: usize,
    pub warmup: usize,
    pub lr: f32,
    pub adam_eps: f32,
    pub replay: ReplayConfig,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_steps: 150_000,
            iteration_steps: 5_000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_anneal_steps: 50_000,
            gamma: 0.99,
            n_step: 3,
            target_sync: 1_000,
            batch_size: 32,
            learn_every: 4,
            warmup: 1_000,
            lr: 2.5e-4,
            adam_eps: 1.5e-4,
            replay: ReplayConfig::default(),
            eval_episodes: 30,
            eval_epsilon: 0.001,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("iteration_steps", self.iteration_steps),
            ("epsilon_anneal_steps", self.epsilon_anneal_steps),
            ("n_step", self.n_step),
            ("target_sync", self.target_sync),
            ("batch_size", self.batch_size),
            ("learn_every", self.learn_every),
            ("eval_episodes", self.eval_episodes),
            ("replay.capacity", self.replay.capacity),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(LabError::Config(format!("{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.epsilon_end) || !(0.0..=1.0).contains(&self.epsilon_start) {
            return Err(LabError::Config("epsilon values must lie in [0, 1]".into()));
        }
        if self.epsilon_end > self.epsilon_start {
            return Err(LabError::Config("epsilon_end exceeds epsilon_start".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(LabError::Config("gamma must lie in [0, 1]".into()));
        }
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) {
            return Err(LabError::Config("learning rate and adam_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            eps: self.adam_eps,
            ..AdamConfig::default()
        }
    }
}

/// Linear exploration schedule, clamped at `epsilon_end`.
pub fn epsilon(step: usize, config: &TrainConfig) -> f64 {
    linear_epsilon(step, config.epsilon_start, config.epsilon_end, config.epsilon_anneal_steps)
}

pub(crate) fn linear_epsilon(step: usize, start: f64, end: f64, anneal: usize) -> f64 {
    if anneal == 0 || step >= anneal {
        return end;
    }
    start + (end - start) * (step as f64 / anneal as f64)
}

/// A value network usable by the trainer. Lateral experts supply extra
/// head inputs computed from a frozen network.
pub trait QNetwork: Clone + Send + Sync {
    fn params(&self) -> &NetworkParams;
    fn params_mut(&mut self) -> &mut NetworkParams;

    fn lateral(&self, _obs: &[f32]) -> Result<Vec<f32>> {
        Ok(Vec::new())
    }

    fn run(&self, obs: &[f32]) -> Result<ForwardCache> {
        let lateral = self.lateral(obs)?;
        forward_raw(self.params(), obs, &lateral)
    }
}

impl QNetwork for NetworkParams {
    fn params(&self) -> &NetworkParams {
        self
    }

    fn params_mut(&mut self) -> &mut NetworkParams {
        self
    }
}

const PACKED_WORDS: usize = OBS_LEN.div_ceil(64);

/// Binary observation packed one bit per entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompactObs([u64; PACKED_WORDS]);

impl CompactObs {
    pub fn pack(obs: &[f32]) -> Self {
        debug_assert_eq!(obs.len(), OBS_LEN);
        let mut words = [0u64; PACKED_WORDS];
        for (i, &v) in obs.iter().enumerate() {
            if v > 0.5 {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Self(words)
    }

    pub fn unpack_into(&self, out: &mut [f32]) {
        for (i, v) in out.iter_mut().enumerate().take(OBS_LEN) {
            *v = ((self.0[i / 64] >> (i % 64)) & 1) as f32;
        }
    }

    pub fn unpack(&self) -> Vec<f32> {
        let mut out = vec![0.0; OBS_LEN];
        self.unpack_into(&mut out);
        out
    }
}

/// n-step transition. `discount` is γ^k for the k rewards summed in
/// `reward`, or 0 when the episode terminated within those steps.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: CompactObs,
    pub action: usize,
    pub reward: f32,
    pub discount: f32,
    pub next_obs: CompactObs,
}

/// Double-DQN target from the next-state values of both networks.
pub fn td_target(reward: f32, discount: f32, q_online_next: &[f32], q_target_next: &[f32]) -> f32 {
    if discount == 0.0 {
        return reward;
    }
    reward + discount * q_target_next[argmax(q_online_next)]
}

pub fn td_targets<N: QNetwork>(batch: &[&Transition], online: &N, target: &N) -> Result<Vec<f32>> {
    let mut next = vec![0.0f32; OBS_LEN];
    batch
        .iter()
        .map(|t| {
            if t.discount == 0.0 {
                return Ok(t.reward);
            }
            t.next_obs.unpack_into(&mut next);
            let qo = online.run(&next)?;
            let qt = target.run(&next)?;
            Ok(td_target(t.reward, t.discount, qo.q(), qt.q()))
        })
        .collect()
}

/// Huber loss with unit threshold.
pub fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

pub fn huber_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Importance-weighted Huber TD loss of one sample and its gradient with
/// respect to the Q-vector (nonzero only at `action`).
pub fn td_loss_and_grad(q: &[f32], action: usize, target: f32, weight: f32) -> (f64, Vec<f32>) {
    let td = q[action] as f64 - target as f64;
    let mut dq = vec![0.0f32; q.len()];
    dq[action] = (weight as f64 * huber_grad(td)) as f32;
    (weight as f64 * huber(td), dq)
}

/// Accumulates n-step returns for one episode and emits transitions.
#[derive(Debug)]
pub(crate) struct NStepQueue {
    n: usize,
    gamma: f64,
    pending: VecDeque<(CompactObs, usize, f32)>,
}

impl NStepQueue {
    pub(crate) fn new(n: usize, gamma: f64) -> Self {
        Self {
            n,
            gamma,
            pending: VecDeque::with_capacity(n),
        }
    }

    fn emit_front(&mut self, next_obs: CompactObs, terminal: bool) -> Transition {
        let mut reward = 0.0f64;
        let mut g = 1.0f64;
        for &(_, _, r) in &self.pending {
            reward += g * r as f64;
            g *= self.gamma;
        }
        let (obs, action, _) = self.pending.pop_front().expect("non-empty queue");
        Transition {
            obs,
            action,
            reward: reward as f32,
            discount: if terminal { 0.0 } else { g as f32 },
            next_obs,
        }
    }

    /// Records one step; returns the transitions that became complete.
    pub(crate) fn push(
        &mut self,
        obs: CompactObs,
        action: usize,
        reward: f32,
        next_obs: CompactObs,
        done: bool,
    ) -> Vec<Transition> {
        self.pending.push_back((obs, action, reward));
        let mut out = Vec::new();
        if done {
            while !self.pending.is_empty() {
                out.push(self.emit_front(next_obs, true));
            }
        } else if self.pending.len() == self.n {
            out.push(self.emit_front(next_obs, false));
        }
        out
    }
}

/// Greedy (or near-greedy) evaluation summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

impl EvalSummary {
    fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std, returns }
    }
}

/// Fixed evaluation stream of a task. Every network evaluated on the task
/// faces the same episode seeds.
pub fn eval_seed(task: TaskId) -> u64 {
    derive_seed(0x5eed_e7a1, &["evaluation", task.as_str()])
}

/// Runs `episodes` episodes choosing the local action with the largest value
/// returned by `q_local`, or a uniformly random one with probability `epsilon`.
pub fn evaluate_policy<F>(task: &TaskSpec, episodes: usize, epsilon: f64, seed: u64, mut q_local: F) -> Result<EvalSummary>
where
    F: FnMut(&[f32]) -> Result<Vec<f32>>,
{
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let label = ep.to_string();
        let (mut state, mut obs) = envs::reset(task, derive_seed(seed, &["episode", &label]))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["actions", &label]));
        let mut total = 0.0f64;
        loop {
            let local = if epsilon >= 1.0 || rng.random::<f64>() < epsilon {
                rng.random_range(0..task.action_count())
            } else {
                argmax(&q_local(obs.data())?)
            };
            let out = envs::step(&mut state, task.actions[local])?;
            total += out.reward as f64;
            obs = out.obs;
            if out.done {
                break;
            }
        }
        returns.push(total);
    }
    Ok(EvalSummary::from_returns(returns))
}

pub fn evaluate_greedy<N: QNetwork>(net: &N, task: &TaskSpec, episodes: usize, epsilon: f64) -> Result<EvalSummary> {
    evaluate_policy(task, episodes, epsilon, eval_seed(task.id), |obs| Ok(net.run(obs)?.q().to_vec()))
}

/// Uniform-random policy returns over `episodes` episodes of the task's
/// evaluation stream.
pub fn random_baseline(task: &TaskSpec, episodes: usize) -> Result<EvalSummary> {
    evaluate_policy(task, episodes, 1.0, derive_seed(eval_seed(task.id), &["random"]), |_| {
        Ok(Vec::new())
    })
}

/// Result of an active-phase run on any network type.
#[derive(Clone, Debug)]
pub struct TrainedNetwork<N> {
    pub net: N,
    pub adam: AdamState,
    pub log: MetricLog,
    pub final_score: f64,
}

#[derive(Clone, Debug)]
pub struct ExpertCheckpoint {
    pub task: TaskId,
    pub params: NetworkParams,
    /// Frozen network whose features feed the head of a lateral expert.
    pub lateral_source: Option<NetworkParams>,
    pub adam: AdamState,
    pub final_score: f64,
    pub log: MetricLog,
}

impl ExpertCheckpoint {
    /// Forward pass through the expert, feeding the lateral source's
    /// features to the head when present.
    pub fn run(&self, obs: &[f32]) -> Result<ForwardCache> {
        match &self.lateral_source {
            None => forward_raw(&self.params, obs, &[]),
            Some(source) => {
                let f = forward_raw(source, obs, &[])?;
                forward_raw(&self.params, obs, f.features())
            }
        }
    }
}

fn check_head(net: &NetworkParams, task: &TaskSpec) -> Result<()> {
    if net.head_width() != task.action_count() {
        return Err(LabError::IncompatibleHead(format!(
            "{}: head width {} but {} actions",
            task.id,
            net.head_width(),
            task.action_count()
        )));
    }
    Ok(())
}

/// One prioritized minibatch update. Returns the mean weighted loss.
#[allow(clippy::too_many_arguments)]
fn learn<N: QNetwork>(
    online: &mut N,
    target: &N,
    adam: &mut AdamState,
    buffer: &mut PrioritizedReplayBuffer<Transition>,
    batch_size: usize,
    beta: f64,
    rng: &mut ChaCha8Rng,
    grads: &mut Gradients,
) -> Result<f64> {
    let sample = buffer.sample(batch_size, beta, rng)?;
    let targets = td_targets(&sample.items, online, target)?;
    grads.clear();
    let scale = 1.0 / batch_size as f32;
    let mut obs = vec![0.0f32; OBS_LEN];
    let mut loss = 0.0;
    let mut priorities = Vec::with_capacity(batch_size);
    for ((t, &y), &w) in sample.items.iter().zip(&targets).zip(&sample.weights) {
        t.obs.unpack_into(&mut obs);
        let cache = online.run(&obs)?;
        let (l, mut dq) = td_loss_and_grad(cache.q(), t.action, y, w);
        loss += l;
        priorities.push((cache.q()[t.action] as f64 - y as f64).abs());
        for d in &mut dq {
            *d *= scale;
        }
        backward_into(online.params(), &cache, &dq, None, grads, None)?;
    }
    let indices = sample.indices;
    adam_step(online.params_mut(), grads, adam)?;
    buffer.update_priorities(&indices, &priorities)?;
    Ok(loss / batch_size as f64)
}

/// Trains `net` on `task`. Deterministic in `(task, net, config, seed)`.
pub fn train_network<N: QNetwork>(task: &TaskSpec, net: N, config: &TrainConfig, seed: u64) -> Result<TrainedNetwork<N>> {
    config.validate()?;
    task.validate()?;
    check_head(net.params(), task)?;
    let mut online = net;
    let mut adam = AdamState::for_params(config.adam(), online.params());
    let mut log = MetricLog::new();
    if config.total_steps > 0 {
        let mut target = online.clone();
        let mut buffer = PrioritizedReplayBuffer::from_config(&config.replay)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["trainer"]));
        let mut grads = Gradients::zeros_like(online.params());
        let mut queue = NStepQueue::new(config.n_step, config.gamma);

        let mut episode = 0usize;
        let (mut state, first_obs) = envs::reset(task, derive_seed(seed, &["episode", "0"]))?;
        let mut obs = first_obs.into_data();
        let mut packed = CompactObs::pack(&obs);
        let mut episode_return = 0.0f64;
        let mut iter_returns: Vec<f64> = Vec::new();

        for step in 0..config.total_steps {
            let eps = epsilon(step, config);
            let local = if rng.random::<f64>() < eps {
                rng.random_range(0..task.action_count())
            } else {
                argmax(online.run(&obs)?.q())
            };
            let out = envs::step(&mut state, task.actions[local])?;
            episode_return += out.reward as f64;
            let next_packed = CompactObs::pack(out.obs.data());
            for t in queue.push(packed, local, out.reward, next_packed, out.done) {
                buffer.push(t, None)?;
            }
            if out.done {
                iter_returns.push(episode_return);
                episode_return = 0.0;
                episode += 1;
                let (s, o) = envs::reset(task, derive_seed(seed, &["episode", &episode.to_string()]))?;
                state = s;
                obs = o.into_data();
            } else {
                obs = out.obs.into_data();
            }
            packed = CompactObs::pack(&obs);

            if step >= config.warmup && step % config.learn_every == 0 && buffer.len() >= config.batch_size {
                let beta = config.replay.beta_at(step, config.total_steps);
                learn(&mut online, &target, &mut adam, &mut buffer, config.batch_size, beta, &mut rng, &mut grads)?;
            }
            if (step + 1) % config.target_sync == 0 {
                target = online.clone();
            }
            let boundary = (step + 1) % config.iteration_steps == 0 || step + 1 == config.total_steps;
            if boundary {
                let episodes = iter_returns.len();
                let mean_return = if episodes == 0 {
                    f64::NAN
                } else {
                    iter_returns.iter().sum::<f64>() / episodes as f64
                };
                log.push(MetricRecord {
                    iteration: step / config.iteration_steps + 1,
                    env_steps: step + 1,
                    mean_return,
                    episodes,
                    epsilon: eps,
                    percent_of_expert: None,
                })?;
                iter_returns.clear();
            }
        }
    }
    let final_score = evaluate_greedy(&online, task, config.eval_episodes, config.eval_epsilon)?.mean;
    Ok(TrainedNetwork {
        net: online,
        adam,
        log,
        final_score,
    })
}

/// Trains a plain expert from `init`.
pub fn train_expert(task: &TaskSpec, init: NetworkParams, config: &TrainConfig, seed: u64) -> Result<ExpertCheckpoint> {
    let trained = train_network(task, init, config, seed)?;
    Ok(ExpertCheckpoint {
        task: task.id,
        params: trained.net,
        lateral_source: None,
        adam: trained.adam,
        final_score: trained.final_score,
        log: trained.log,
    })
}
