//! Passive-phase consolidation of frozen experts into one Actor-Mimic
//! student with a head over the global action alphabet.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::envs::{self, EnvState, TaskId, TaskSpec, ACTION_COUNT, OBS_LEN};
use crate::error::{LabError, Result};
use crate::expert::{
    eval_seed, evaluate_policy, linear_epsilon, random_baseline, CompactObs, EvalSummary,
    ExpertCheckpoint,
};
use crate::metrics::{MetricLog, MetricRecord};
use crate::nn::{
    adam_step, argmax, backward_into, forward_raw, init_params, softmax, AdamConfig, AdamState, Gradients, NetworkParams,
    NetworkSpec, ParamSlot,
};
use crate::replay::{PrioritizedReplayBuffer, ReplayConfig};
use crate::seeds::derive_seed;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleStrategy {
    /// One update on the sum of every task's loss.
    Composite,
    /// Active task rotates every `K` consolidation steps.
    Alternate(usize),
    /// Active task rotates when its student-driven episode ends.
    AlternateEpisode,
}

impl fmt::Display for ScheduleStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleStrategy::Composite => write!(f, "composite"),
            ScheduleStrategy::Alternate(k) => write!(f, "alt:{k}"),
            ScheduleStrategy::AlternateEpisode => write!(f, "alt:episode"),
        }
    }
}

impl FromStr for ScheduleStrategy {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "composite" => Ok(ScheduleStrategy::Composite),
            "alt:episode" => Ok(ScheduleStrategy::AlternateEpisode),
            _ => {
                let k = s
                    .strip_prefix("alt:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| LabError::invalid(format!("unknown schedule `{s}`")))?;
                if k == 0 {
                    return Err(LabError::invalid("alternation period must be at least 1"));
                }
                Ok(ScheduleStrategy::Alternate(k))
            }
        }
    }
}

impl Serialize for ScheduleStrategy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScheduleStrategy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Decides which task is active at each consolidation step.
#[derive(Clone, Debug)]
pub struct TaskScheduler {
    strategy: ScheduleStrategy,
    tasks: usize,
    active: usize,
    steps_on_active: usize,
    switch_pending: bool,
}

impl TaskScheduler {
    pub fn new(strategy: ScheduleStrategy, tasks: usize) -> Result<Self> {
        if tasks == 0 {
            return Err(LabError::Empty("no tasks to schedule".into()));
        }
        if strategy == ScheduleStrategy::Alternate(0) {
            return Err(LabError::invalid("alternation period must be at least 1"));
        }
        Ok(Self {
            strategy,
            tasks,
            active: 0,
            steps_on_active: 0,
            switch_pending: false,
        })
    }

    /// Task of the next step; `None` in composite mode where all tasks take part.
    pub fn next_step(&mut self) -> Option<usize> {
        match self.strategy {
            ScheduleStrategy::Composite => None,
            ScheduleStrategy::Alternate(k) => {
                if self.steps_on_active == k {
                    self.active = (self.active + 1) % self.tasks;
                    self.steps_on_active = 0;
                }
                self.steps_on_active += 1;
                Some(self.active)
            }
            ScheduleStrategy::AlternateEpisode => {
                if self.switch_pending {
                    self.active = (self.active + 1) % self.tasks;
                    self.switch_pending = false;
                }
                Some(self.active)
            }
        }
    }

    /// Reports that the active task's episode ended during the last step.
    pub fn episode_ended(&mut self) {
        if self.strategy == ScheduleStrategy::AlternateEpisode {
            self.switch_pending = true;
        }
    }
}

/// Policy regression: cross-entropy between `softmax(teacher / τ)` and
/// `softmax(student)`, both over the task's action subset. Returns the loss
/// and its gradient with respect to the student logits.
pub fn policy_regression_loss(teacher_q: &[f32], student_logits: &[f32], temperature: f32) -> Result<(f64, Vec<f32>)> {
    if teacher_q.len() != student_logits.len() || teacher_q.is_empty() {
        return Err(LabError::ShapeMismatch {
            what: "policy regression subset".into(),
            expected: vec![teacher_q.len()],
            got: vec![student_logits.len()],
        });
    }
    let p = softmax(teacher_q, temperature)?;
    let log_q = log_softmax(student_logits);
    let loss = -p.iter().zip(&log_q).map(|(&pi, &lq)| pi as f64 * lq).sum::<f64>();
    // Both distributions go through the same softmax so that equal inputs
    // give an exactly zero gradient.
    let q = softmax(student_logits, 1.0)?;
    let grad = q.iter().zip(&p).map(|(&qi, &pi)| qi - pi).collect();
    Ok((loss, grad))
}

fn log_softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let lse = max + logits.iter().map(|&v| (v as f64 - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v as f64 - lse).collect()
}

/// Linear map from student features into one teacher's feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureAdapter {
    /// `[out, in]`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl FeatureAdapter {
    pub fn identity(width: usize) -> Self {
        let mut weight = Tensor::zeros(&[width, width]);
        for i in 0..width {
            weight.data_mut()[i * width + i] = 1.0;
        }
        Self {
            weight,
            bias: Tensor::zeros(&[width]),
        }
    }

    pub fn width(&self) -> usize {
        self.bias.len()
    }

    pub fn apply(&self, features: &[f32]) -> Vec<f32> {
        let n = self.width();
        let w = self.weight.data();
        (0..n)
            .map(|o| {
                let row = &w[o * n..(o + 1) * n];
                self.bias.data()[o] + row.iter().zip(features).map(|(a, b)| a * b).sum::<f32>()
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct FeatureLoss {
    pub loss: f64,
    pub d_student: Vec<f32>,
    pub d_weight: Tensor,
    pub d_bias: Tensor,
}

/// `‖A f_s + b − f_t‖²` with gradients for the student features and adapter.
pub fn feature_regression_loss(student: &[f32], teacher: &[f32], adapter: &FeatureAdapter) -> Result<FeatureLoss> {
    let n = adapter.width();
    if student.len() != n || teacher.len() != n {
        return Err(LabError::ShapeMismatch {
            what: "feature regression".into(),
            expected: vec![n],
            got: vec![student.len(), teacher.len()],
        });
    }
    let adapted = adapter.apply(student);
    let resid: Vec<f64> = adapted.iter().zip(teacher).map(|(&a, &t)| a as f64 - t as f64).collect();
    let loss = resid.iter().map(|r| r * r).sum();
    let w = adapter.weight.data();
    let mut d_student = vec![0.0f64; n];
    let mut d_weight = Tensor::zeros(&[n, n]);
    for o in 0..n {
        let g = 2.0 * resid[o];
        if g == 0.0 {
            continue;
        }
        let row = &w[o * n..(o + 1) * n];
        let drow = &mut d_weight.data_mut()[o * n..(o + 1) * n];
        for i in 0..n {
            d_student[i] += g * row[i] as f64;
            drow[i] = (g * student[i] as f64) as f32;
        }
    }
    Ok(FeatureLoss {
        loss,
        d_student: d_student.into_iter().map(|v| v as f32).collect(),
        d_weight,
        d_bias: Tensor::from_vec(resid.iter().map(|r| (2.0 * r) as f32).collect()),
    })
}

/// Baseline-shifted score ratio; `None` when the expert does not beat the
/// random baseline.
pub fn percent_of_expert(amn: f64, expert: f64, random_baseline: f64) -> Option<f64> {
    let denom = expert - random_baseline;
    (denom > 0.0 && amn.is_finite()).then(|| (amn - random_baseline) / denom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    /// Environment steps across all tasks.
    pub total_steps: usize,
    pub iteration_steps: usize,
    pub temperature: f32,
    pub feature_weight: f32,
    pub batch_size: usize,
    pub lr: f32,
    pub env_steps_per_update: usize,
    pub warmup: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_steps: usize,
    pub replay: ReplayConfig,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
    pub baseline_episodes: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            total_steps: 75_000,
            iteration_steps: 5_000,
            // Teacher Q-values of the desk-scale experts differ by ~0.1 between
            // actions, so τ = 1 gives near-uniform targets, and their features
            // have squared norms up to ~2000, which at β_f = 0.01 outweigh the
            // policy term by an order of magnitude.
            temperature: 0.1,
            feature_weight: 1e-4,
            batch_size: 32,
            lr: 1e-4,
            env_steps_per_update: 4,
            warmup: 1_000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_anneal_steps: 50_000,
            replay: ReplayConfig::default(),
            eval_episodes: 30,
            eval_epsilon: 0.001,
            baseline_episodes: 100,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(LabError::Config("temperature must be positive".into()));
        }
        if !(self.feature_weight >= 0.0) {
            return Err(LabError::Config("feature_weight must be non-negative".into()));
        }
        if !(self.lr > 0.0) {
            return Err(LabError::Config("lr must be positive".into()));
        }
        let positive = [
            ("iteration_steps", self.iteration_steps),
            ("batch_size", self.batch_size),
            ("env_steps_per_update", self.env_steps_per_update),
            ("eval_episodes", self.eval_episodes),
            ("baseline_episodes", self.baseline_episodes),
            ("replay.capacity", self.replay.capacity),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(LabError::Config(format!("{name} must be positive")));
        }
        if self.epsilon_end > self.epsilon_start {
            return Err(LabError::Config("epsilon_end exceeds epsilon_start".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, step: usize) -> f64 {
        linear_epsilon(step, self.epsilon_start, self.epsilon_end, self.epsilon_anneal_steps)
    }
}

/// Student network with one feature adapter and log per source task.
#[derive(Clone, Debug)]
pub struct AmnCheckpoint {
    pub params: NetworkParams,
    pub tasks: Vec<TaskId>,
    pub adapters: BTreeMap<TaskId, FeatureAdapter>,
    pub logs: BTreeMap<TaskId, MetricLog>,
    pub expert_scores: BTreeMap<TaskId, f64>,
    pub baselines: BTreeMap<TaskId, f64>,
}

impl AmnCheckpoint {
    /// Values of the task's actions, in the task's local order.
    pub fn q_local(&self, task: &TaskSpec, obs: &[f32]) -> Result<Vec<f32>> {
        amn_q_local(&self.params, task, obs)
    }

    pub fn evaluate(&self, task: &TaskSpec, episodes: usize, epsilon: f64) -> Result<EvalSummary> {
        evaluate_amn(&self.params, task, episodes, epsilon)
    }
}

fn amn_q_local(params: &NetworkParams, task: &TaskSpec, obs: &[f32]) -> Result<Vec<f32>> {
    let cache = forward_raw(params, obs, &[])?;
    Ok(task.actions.iter().map(|&a| cache.q()[a]).collect())
}

pub fn evaluate_amn(params: &NetworkParams, task: &TaskSpec, episodes: usize, epsilon: f64) -> Result<EvalSummary> {
    evaluate_policy(task, episodes, epsilon, eval_seed(task.id), |obs| amn_q_local(params, task, obs))
}

/// Loss and gradients of one task on one sampled batch.
#[derive(Clone, Debug)]
pub struct TaskBatchGradients {
    pub loss: f64,
    pub grads: Gradients,
    pub adapter_weight: Tensor,
    pub adapter_bias: Tensor,
    /// Per-sample `KL(teacher ‖ student) + β_f · feature loss`.
    pub priorities: Vec<f64>,
}

/// Gradient of `mean_i w_i (policy_i + β_f feature_i)` over a batch of
/// observations for one task.
pub fn task_batch_gradients(
    amn: &NetworkParams,
    adapter: &FeatureAdapter,
    expert: &ExpertCheckpoint,
    task: &TaskSpec,
    observations: &[&CompactObs],
    weights: &[f32],
    config: &DistillConfig,
) -> Result<TaskBatchGradients> {
    if observations.is_empty() {
        return Err(LabError::Empty("distillation batch".into()));
    }
    if amn.head_width() < ACTION_COUNT || task.actions.iter().any(|&a| a >= amn.head_width()) {
        return Err(LabError::IncompatibleHead(task.id.to_string()));
    }
    let mut out = TaskBatchGradients {
        loss: 0.0,
        grads: Gradients::zeros_like(amn),
        adapter_weight: Tensor::zeros(adapter.weight.shape()),
        adapter_bias: Tensor::zeros(adapter.bias.shape()),
        priorities: Vec::with_capacity(observations.len()),
    };
    let scale = 1.0 / observations.len() as f32;
    let beta_f = config.feature_weight;
    let mut obs = vec![0.0f32; OBS_LEN];
    let mut dq = vec![0.0f32; amn.head_width()];
    for (packed, &w) in observations.iter().zip(weights) {
        packed.unpack_into(&mut obs);
        let teacher = expert.run(&obs)?;
        let student = forward_raw(amn, &obs, &[])?;
        let logits: Vec<f32> = task.actions.iter().map(|&a| student.q()[a]).collect();
        let (policy, dlogits) = policy_regression_loss(teacher.q(), &logits, config.temperature)?;
        let feat = feature_regression_loss(student.features(), teacher.features(), adapter)?;
        let teacher_entropy = {
            let p = softmax(teacher.q(), config.temperature)?;
            -p.iter().filter(|&&v| v > 0.0).map(|&v| v as f64 * (v as f64).ln()).sum::<f64>()
        };
        out.priorities.push((policy - teacher_entropy).max(0.0) + beta_f as f64 * feat.loss);
        out.loss += w as f64 * (policy + beta_f as f64 * feat.loss) * scale as f64;

        let k = w * scale;
        dq.iter_mut().for_each(|v| *v = 0.0);
        for (&a, &g) in task.actions.iter().zip(&dlogits) {
            dq[a] = k * g;
        }
        let dfeat: Vec<f32> = feat.d_student.iter().map(|&g| k * beta_f * g).collect();
        backward_into(amn, &student, &dq, Some(&dfeat), &mut out.grads, None)?;
        for (acc, g) in out.adapter_weight.data_mut().iter_mut().zip(feat.d_weight.data()) {
            *acc += k * beta_f * g;
        }
        for (acc, g) in out.adapter_bias.data_mut().iter_mut().zip(feat.d_bias.data()) {
            *acc += k * beta_f * g;
        }
    }
    Ok(out)
}

struct TaskSlot<'a> {
    task: TaskSpec,
    expert: &'a ExpertCheckpoint,
    adapter: FeatureAdapter,
    adapter_adam: AdamState,
    buffer: PrioritizedReplayBuffer<CompactObs>,
    env: EnvState,
    obs: Vec<f32>,
    episodes: usize,
    seed: u64,
}

impl TaskSlot<'_> {
    fn reset_env(&mut self) -> Result<()> {
        let label = self.episodes.to_string();
        let (env, obs) = envs::reset(&self.task, derive_seed(self.seed, &["episode", &label]))?;
        self.env = env;
        self.obs = obs.into_data();
        Ok(())
    }
}

/// Mutable state of a running consolidation.
pub struct Consolidation<'a> {
    config: DistillConfig,
    params: NetworkParams,
    adam: AdamState,
    scheduler: TaskScheduler,
    slots: Vec<TaskSlot<'a>>,
    rng: ChaCha8Rng,
    env_steps: usize,
    updates: usize,
    robin: usize,
}

impl<'a> Consolidation<'a> {
    pub fn new(
        experts: &'a [ExpertCheckpoint],
        tasks: &[TaskSpec],
        init: NetworkParams,
        config: &DistillConfig,
        schedule: ScheduleStrategy,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if experts.is_empty() {
            return Err(LabError::Empty("no experts to consolidate".into()));
        }
        if experts.len() != tasks.len() {
            return Err(LabError::invalid("one task spec per expert is required"));
        }
        let adam_config = AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        };
        let width = init.spec.feature_width;
        let mut slots = Vec::with_capacity(tasks.len());
        for (expert, task) in experts.iter().zip(tasks) {
            if expert.task != task.id {
                return Err(LabError::invalid(format!("expert for {} given with task {}", expert.task, task.id)));
            }
            if expert.params.spec.feature_width != width {
                return Err(LabError::invalid("teacher and student feature widths differ"));
            }
            let task_seed = derive_seed(seed, &["collect", task.id.as_str()]);
            let (env, obs) = envs::reset(task, derive_seed(task_seed, &["episode", "0"]))?;
            let adapter = FeatureAdapter::identity(width);
            let adapter_adam = AdamState::new(adam_config, &[adapter.weight.shape().to_vec(), vec![width]]);
            slots.push(TaskSlot {
                task: task.clone(),
                expert,
                adapter,
                adapter_adam,
                buffer: PrioritizedReplayBuffer::from_config(&config.replay)?,
                env,
                obs: obs.into_data(),
                episodes: 0,
                seed: task_seed,
            });
        }
        Ok(Self {
            config: config.clone(),
            adam: AdamState::for_params(adam_config, &init),
            params: init,
            scheduler: TaskScheduler::new(schedule, tasks.len())?,
            slots,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, &["consolidate"])),
            env_steps: 0,
            updates: 0,
            robin: 0,
        })
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// One student-driven environment tick on task slot `i`. Returns whether
    /// the episode ended.
    fn collect(&mut self, i: usize) -> Result<bool> {
        let eps = self.config.epsilon(self.env_steps);
        let slot = &mut self.slots[i];
        slot.buffer.push(CompactObs::pack(&slot.obs), None)?;
        let local = if self.rng.random::<f64>() < eps {
            self.rng.random_range(0..slot.task.action_count())
        } else {
            argmax(&amn_q_local(&self.params, &slot.task, &slot.obs)?)
        };
        let out = envs::step(&mut slot.env, slot.task.actions[local])?;
        self.env_steps += 1;
        if out.done {
            slot.episodes += 1;
            slot.reset_env()?;
        } else {
            slot.obs = out.obs.into_data();
        }
        Ok(out.done)
    }

    fn ready(&self, i: usize) -> bool {
        self.env_steps >= self.config.warmup && self.slots[i].buffer.len() >= self.config.batch_size
    }

    /// Samples a batch for slot `i` and returns its gradients and indices.
    fn task_gradients(&mut self, i: usize) -> Result<(TaskBatchGradients, Vec<usize>)> {
        let beta = self.config.replay.beta_at(self.env_steps, self.config.total_steps);
        let slot = &self.slots[i];
        let sample = slot.buffer.sample(self.config.batch_size, beta, &mut self.rng)?;
        let g = task_batch_gradients(
            &self.params,
            &slot.adapter,
            slot.expert,
            &slot.task,
            &sample.items,
            &sample.weights,
            &self.config,
        )?;
        Ok((g, sample.indices))
    }

    fn apply_adapter(&mut self, i: usize, g: &TaskBatchGradients) -> Result<()> {
        let slot = &mut self.slots[i];
        let name = format!("{}.adapter", slot.task.id);
        let mut slots = [
            ParamSlot {
                name: format!("{name}.weight"),
                value: &mut slot.adapter.weight,
                grad: &g.adapter_weight,
            },
            ParamSlot {
                name: format!("{name}.bias"),
                value: &mut slot.adapter.bias,
                grad: &g.adapter_bias,
            },
        ];
        slot.adapter_adam.apply(&mut slots)
    }

    /// One consolidation step: `env_steps_per_update` environment ticks
    /// followed by at most one student update.
    pub fn step(&mut self) -> Result<()> {
        let ticks = self.config.env_steps_per_update;
        match self.scheduler.next_step() {
            Some(active) => {
                let mut ended = false;
                for _ in 0..ticks {
                    ended |= self.collect(active)?;
                }
                if ended {
                    self.scheduler.episode_ended();
                }
                if self.ready(active) {
                    let (g, indices) = self.task_gradients(active)?;
                    adam_step(&mut self.params, &g.grads, &mut self.adam)?;
                    self.apply_adapter(active, &g)?;
                    self.slots[active].buffer.update_priorities(&indices, &g.priorities)?;
                    self.updates += 1;
                }
            }
            None => {
                for _ in 0..ticks {
                    let i = self.robin % self.slots.len();
                    self.robin += 1;
                    self.collect(i)?;
                }
                if (0..self.slots.len()).all(|i| self.ready(i)) {
                    let mut total = Gradients::zeros_like(&self.params);
                    let mut per_task = Vec::with_capacity(self.slots.len());
                    for i in 0..self.slots.len() {
                        let (g, indices) = self.task_gradients(i)?;
                        total.add_assign(&g.grads);
                        per_task.push((g, indices));
                    }
                    adam_step(&mut self.params, &total, &mut self.adam)?;
                    for (i, (g, indices)) in per_task.into_iter().enumerate() {
                        self.apply_adapter(i, &g)?;
                        self.slots[i].buffer.update_priorities(&indices, &g.priorities)?;
                    }
                    self.updates += 1;
                }
            }
        }
        Ok(())
    }
}

/// Distills `experts` into a fresh student and logs percent-of-expert per
/// task after every iteration.
pub fn consolidate(
    experts: &[ExpertCheckpoint],
    tasks: &[TaskSpec],
    config: &DistillConfig,
    schedule: ScheduleStrategy,
    seed: u64,
) -> Result<AmnCheckpoint> {
    let init = init_params(&NetworkSpec::desk(ACTION_COUNT), derive_seed(seed, &["amn-init"]))?;
    consolidate_from(experts, tasks, init, config, schedule, seed)
}

pub fn consolidate_from(
    experts: &[ExpertCheckpoint],
    tasks: &[TaskSpec],
    init: NetworkParams,
    config: &DistillConfig,
    schedule: ScheduleStrategy,
    seed: u64,
) -> Result<AmnCheckpoint> {
    let mut run = Consolidation::new(experts, tasks, init, config, schedule, seed)?;
    let mut baselines = BTreeMap::new();
    let mut expert_scores = BTreeMap::new();
    let mut logs: BTreeMap<TaskId, MetricLog> = BTreeMap::new();
    for (expert, task) in experts.iter().zip(tasks) {
        baselines.insert(task.id, random_baseline(task, config.baseline_episodes)?.mean);
        expert_scores.insert(task.id, expert.final_score);
        logs.insert(task.id, MetricLog::new());
    }
    let mut iteration = 0;
    while run.env_steps() < config.total_steps {
        run.step()?;
        let boundary = run.env_steps() / config.iteration_steps > iteration || run.env_steps() >= config.total_steps;
        if boundary {
            iteration += 1;
            for task in tasks {
                let score = evaluate_amn(run.params(), task, config.eval_episodes, config.eval_epsilon)?;
                let log = logs.get_mut(&task.id).expect("log per task");
                log.push(MetricRecord {
                    iteration,
                    env_steps: run.env_steps(),
                    mean_return: score.mean,
                    episodes: config.eval_episodes,
                    epsilon: config.epsilon(run.env_steps()),
                    percent_of_expert: percent_of_expert(score.mean, expert_scores[&task.id], baselines[&task.id]),
                })?;
            }
        }
    }
    let adapters = tasks
        .iter()
        .zip(&run.slots)
        .map(|(t, s)| (t.id, s.adapter.clone()))
        .collect();
    Ok(AmnCheckpoint {
        params: run.params,
        tasks: tasks.iter().map(|t| t.id).collect(),
        adapters,
        logs,
        expert_scores,
        baselines,
    })
}
