//! Day-night cycle driver: active phase, passive consolidation, next active
//! phase, with every checkpoint and metric log written under one run root.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{save_amn, save_expert, CheckpointMeta};
use crate::distill::{consolidate, AmnCheckpoint, DistillConfig, ScheduleStrategy};
use crate::envs::{TaskId, TaskSpec};
use crate::error::{LabError, Result};
use crate::expert::{evaluate_greedy, train_expert, ExpertCheckpoint, TrainConfig};
use crate::metrics::{MetricLog, MetricRecord};
use crate::nn::{init_params, NetworkParams, NetworkSpec};
use crate::seeds::derive_seed;
use crate::surgery::{layer_subset_init, make_lateral, train_lateral, transplant, TransferSource};

/// Environment variable overriding the run-directory root.
pub const RUN_DIR_ENV: &str = "CONSOL_LAB_DIR";

/// Run root: `CONSOL_LAB_DIR` when set, otherwise `fallback`.
pub fn run_root(fallback: &Path) -> PathBuf {
    std::env::var_os(RUN_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| fallback.to_path_buf())
}

/// How phase-2 experts reuse the consolidated student.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferMechanism {
    None,
    Transplant,
    Lateral,
    Layers(usize),
}

impl fmt::Display for TransferMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransferMechanism::None => f.write_str("none"),
            TransferMechanism::Transplant => f.write_str("transplant"),
            TransferMechanism::Lateral => f.write_str("lateral"),
            TransferMechanism::Layers(k) => write!(f, "layers:{k}"),
        }
    }
}

impl FromStr for TransferMechanism {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TransferMechanism::None),
            "transplant" => Ok(TransferMechanism::Transplant),
            "lateral" => Ok(TransferMechanism::Lateral),
            _ => {
                let k = s
                    .strip_prefix("layers:")
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k <= 5)
                    .ok_or_else(|| {
                        LabError::Config(format!("unknown mechanism `{s}` (none, transplant, lateral, layers:0..5)"))
                    })?;
                Ok(TransferMechanism::Layers(k))
            }
        }
    }
}

impl Serialize for TransferMechanism {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TransferMechanism {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub phase1_tasks: Vec<TaskId>,
    /// Experts consolidated in the passive phase; all phase-1 tasks if absent.
    #[serde(default)]
    pub passive_tasks: Option<Vec<TaskId>>,
    pub phase2_tasks: Vec<TaskId>,
    #[serde(default = "default_mechanism")]
    pub mechanism: TransferMechanism,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleStrategy,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Also train randomly initialized phase-2 experts for comparison.
    #[serde(default = "default_true")]
    pub baseline: bool,
    #[serde(default)]
    pub active: TrainConfig,
    /// Phase-2 training settings; the phase-1 settings if absent.
    #[serde(default)]
    pub phase2: Option<TrainConfig>,
    #[serde(default)]
    pub passive: DistillConfig,
}

fn default_mechanism() -> TransferMechanism {
    TransferMechanism::Transplant
}

fn default_schedule() -> ScheduleStrategy {
    ScheduleStrategy::AlternateEpisode
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(LabError::Config("seed list is empty".into()));
        }
        if self.phase2_tasks.is_empty() {
            return Err(LabError::Config("phase-2 task set is empty".into()));
        }
        if self.phase1_tasks.is_empty() {
            return Err(LabError::Config("phase-1 task set is empty".into()));
        }
        for t in self.passive_set() {
            if !self.phase1_tasks.contains(&t) {
                return Err(LabError::Config(format!("passive task {t} has no phase-1 expert")));
            }
        }
        self.active.validate()?;
        self.phase2_config().validate()?;
        self.passive.validate()
    }

    pub fn passive_set(&self) -> Vec<TaskId> {
        self.passive_tasks.clone().unwrap_or_else(|| self.phase1_tasks.clone())
    }

    pub fn phase2_config(&self) -> &TrainConfig {
        self.phase2.as_ref().unwrap_or(&self.active)
    }

    /// Digest of everything that determines results, excluding the seed list
    /// and output directory.
    pub fn hash(&self) -> String {
        let mut identity = self.clone();
        identity.seeds.clear();
        identity.out_dir = PathBuf::new();
        digest(&identity)
    }
}

/// Short content hash of any serializable value.
pub fn digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value is serializable");
    hex::encode(&Sha256::digest(json)[..6])
}

/// Where a new expert's weights come from.
#[derive(Clone, Copy, Debug)]
pub enum InitSource<'a> {
    Random,
    Transplant(&'a AmnCheckpoint),
    Lateral(&'a AmnCheckpoint),
    Layers(TransferSource<'a>, usize),
}

impl<'a> InitSource<'a> {
    pub fn from_mechanism(mechanism: TransferMechanism, amn: &'a AmnCheckpoint) -> Self {
        match mechanism {
            TransferMechanism::None => InitSource::Random,
            TransferMechanism::Transplant => InitSource::Transplant(amn),
            TransferMechanism::Lateral => InitSource::Lateral(amn),
            TransferMechanism::Layers(k) => InitSource::Layers(TransferSource::Amn(amn), k),
        }
    }
}

/// Per-task training seed within a phase.
pub fn task_seed(phase_seed: u64, task: TaskId) -> u64 {
    derive_seed(phase_seed, &[task.as_str()])
}

/// Per-task initialization seed within a phase.
pub fn init_seed(phase_seed: u64, task: TaskId) -> u64 {
    derive_seed(phase_seed, &[task.as_str(), "init"])
}

fn iteration_zero(score: f64, config: &TrainConfig) -> MetricRecord {
    MetricRecord {
        iteration: 0,
        env_steps: 0,
        mean_return: score,
        episodes: config.eval_episodes,
        epsilon: config.eval_epsilon,
        percent_of_expert: None,
    }
}

fn train_one(task: &TaskSpec, init: InitSource<'_>, config: &TrainConfig, phase_seed: u64) -> Result<ExpertCheckpoint> {
    let seed = task_seed(phase_seed, task.id);
    let iseed = init_seed(phase_seed, task.id);
    let spec = NetworkSpec::desk(task.action_count());
    let plain = |params: NetworkParams| -> Result<ExpertCheckpoint> {
        let start = evaluate_greedy(&params, task, config.eval_episodes, config.eval_epsilon)?.mean;
        let mut ck = train_expert(task, params, config, seed)?;
        ck.log.prepend(iteration_zero(start, config))?;
        Ok(ck)
    };
    match init {
        InitSource::Random => plain(init_params(&spec, iseed)?),
        InitSource::Transplant(amn) => plain(transplant(&amn.params, task)?),
        InitSource::Layers(source, k) => plain(layer_subset_init(source, k, task, iseed)?),
        InitSource::Lateral(amn) => {
            let lateral = make_lateral(&amn.params, task, iseed)?;
            let start = evaluate_greedy(&lateral, task, config.eval_episodes, config.eval_epsilon)?.mean;
            let mut ck = train_lateral(task, lateral, config, seed)?;
            ck.log.prepend(iteration_zero(start, config))?;
            Ok(ck)
        }
    }
}

/// Trains one expert per task, in parallel. Each log starts with an
/// iteration-0 greedy evaluation of the initial network, which measures the
/// jumpstart of a transferred initialization.
pub fn run_active_phase(
    tasks: &[TaskSpec],
    init: InitSource<'_>,
    config: &TrainConfig,
    phase_seed: u64,
) -> Result<Vec<ExpertCheckpoint>> {
    if tasks.is_empty() {
        return Err(LabError::Empty("active phase without tasks".into()));
    }
    tasks
        .par_iter()
        .map(|task| train_one(task, init, config, phase_seed))
        .collect()
}

fn specs(ids: &[TaskId]) -> Vec<TaskSpec> {
    ids.iter().map(|&id| TaskSpec::new(id)).collect()
}

/// Directory of one phase of one seed.
pub fn phase_dir(root: &Path, hash: &str, seed: u64, phase: &str) -> PathBuf {
    root.join(hash).join(seed.to_string()).join(phase)
}

/// Writes `<dir>/<task>/{checkpoint, metrics.csv}` for each expert.
pub fn save_phase(dir: &Path, experts: &[ExpertCheckpoint], meta: &CheckpointMeta) -> Result<()> {
    for ck in experts {
        let task_dir = dir.join(ck.task.as_str());
        save_expert(ck, meta, &task_dir.join("checkpoint"))?;
        ck.log.save_csv(&task_dir.join("metrics.csv"))?;
    }
    Ok(())
}

/// Writes the student under `<dir>/amn/checkpoint` and one metrics file per
/// consolidated task.
pub fn save_passive(dir: &Path, amn: &AmnCheckpoint, meta: &CheckpointMeta) -> Result<()> {
    save_amn(amn, meta, &dir.join("amn").join("checkpoint"))?;
    for (task, log) in &amn.logs {
        log.save_csv(&dir.join(task.as_str()).join("metrics.csv"))?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SeedResult {
    pub seed: u64,
    pub phase1: Vec<ExpertCheckpoint>,
    pub amn: AmnCheckpoint,
    pub phase2: Vec<ExpertCheckpoint>,
    pub baseline: Option<Vec<ExpertCheckpoint>>,
}

#[derive(Clone, Debug)]
pub struct CycleResult {
    pub config_hash: String,
    pub root: PathBuf,
    pub seeds: Vec<SeedResult>,
}

impl CycleResult {
    /// Phase-2 and baseline logs of one task across seeds.
    pub fn phase2_logs(&self, task: TaskId) -> (Vec<MetricLog>, Vec<MetricLog>) {
        let pick = |experts: &[ExpertCheckpoint]| experts.iter().find(|e| e.task == task).map(|e| e.log.clone());
        let transfer = self.seeds.iter().filter_map(|s| pick(&s.phase2)).collect();
        let baseline = self
            .seeds
            .iter()
            .filter_map(|s| s.baseline.as_deref().and_then(pick))
            .collect();
        (transfer, baseline)
    }
}

fn run_seed(config: &ExperimentConfig, hash: &str, root: &Path, seed: u64) -> Result<SeedResult> {
    let meta = CheckpointMeta {
        config_hash: hash.to_string(),
        seed,
    };
    let phase1 = run_active_phase(&specs(&config.phase1_tasks), InitSource::Random, &config.active, derive_seed(seed, &["phase1"]))?;
    save_phase(&phase_dir(root, hash, seed, "phase1"), &phase1, &meta)?;

    let passive_ids = config.passive_set();
    let sources: Vec<ExpertCheckpoint> = passive_ids
        .iter()
        .map(|id| phase1.iter().find(|e| e.task == *id).cloned().expect("validated passive set"))
        .collect();
    let amn = consolidate(&sources, &specs(&passive_ids), &config.passive, config.schedule, derive_seed(seed, &["passive"]))?;
    save_passive(&phase_dir(root, hash, seed, "passive"), &amn, &meta)?;

    // Baseline and transfer runs share per-task seeds, so with no transfer
    // the two are the same run.
    let phase2_seed = derive_seed(seed, &["phase2"]);
    let phase2_tasks = specs(&config.phase2_tasks);
    let init = InitSource::from_mechanism(config.mechanism, &amn);
    let phase2 = run_active_phase(&phase2_tasks, init, config.phase2_config(), phase2_seed)?;
    save_phase(&phase_dir(root, hash, seed, "phase2"), &phase2, &meta)?;

    let baseline = if config.baseline {
        let runs = run_active_phase(&phase2_tasks, InitSource::Random, config.phase2_config(), phase2_seed)?;
        save_phase(&phase_dir(root, hash, seed, "baseline"), &runs, &meta)?;
        Some(runs)
    } else {
        None
    };
    Ok(SeedResult {
        seed,
        phase1,
        amn,
        phase2,
        baseline,
    })
}

/// Runs the full cycle for every seed. Each phase is written to disk as soon
/// as it finishes, so a failure leaves the completed phases behind.
pub fn run_cycle(config: &ExperimentConfig) -> Result<CycleResult> {
    config.validate()?;
    let hash = config.hash();
    let root = run_root(&config.out_dir);
    let config_dir = root.join(&hash);
    fs::create_dir_all(&config_dir).map_err(|e| LabError::io(&config_dir, e))?;
    let text = toml::to_string(config).map_err(|e| LabError::Config(e.to_string()))?;
    let config_path = config_dir.join("config.toml");
    fs::write(&config_path, text).map_err(|e| LabError::io(&config_path, e))?;

    let seeds = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, &hash, &root, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(CycleResult {
        config_hash: hash,
        root,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mechanism_parsing() {
        for s in ["none", "transplant", "lateral", "layers:0", "layers:5"] {
            assert_eq!(s.parse::<TransferMechanism>().unwrap().to_string(), s);
        }
        assert!("layers:6".parse::<TransferMechanism>().is_err());
        assert!("copy".parse::<TransferMechanism>().is_err());
    }

    #[test]
    fn config_defaults_and_validation() {
        let config = ExperimentConfig::from_toml(
            r#"
            phase1_tasks = ["mini-pinball", "mini-pong"]
            phase2_tasks = ["mini-breakout"]
            mechanism = "layers:2"
            [passive]
            total_steps = 0
            "#,
        )
        .unwrap();
        assert_eq!(config.seeds, vec![0, 1, 2]);
        assert_eq!(config.mechanism, TransferMechanism::Layers(2));
        assert_eq!(config.schedule, ScheduleStrategy::AlternateEpisode);
        assert_eq!(config.active, TrainConfig::default());
        assert_eq!(config.passive.total_steps, 0);

        let mut other = config.clone();
        other.seeds = vec![9];
        other.out_dir = PathBuf::from("elsewhere");
        assert_eq!(config.hash(), other.hash());
        other.mechanism = TransferMechanism::None;
        assert_ne!(config.hash(), other.hash());

        assert!(ExperimentConfig::from_toml("phase1_tasks = [\"mini-pong\"]\nphase2_tasks = []").is_err());
        assert!(ExperimentConfig::from_toml("phase1_tasks = [\"mini-pong\"]\nphase2_tasks = [\"mini-pong\"]\nseeds = []").is_err());
        assert!(ExperimentConfig::from_toml(
            "phase1_tasks = [\"mini-pong\"]\nphase2_tasks = [\"mini-pong\"]\npassive_tasks = [\"mini-pinball\"]"
        )
        .is_err());
    }

    #[test]
    fn empty_active_phase_is_an_error() {
        assert!(run_active_phase(&[], InitSource::Random, &TrainConfig::default(), 0).is_err());
    }
}
