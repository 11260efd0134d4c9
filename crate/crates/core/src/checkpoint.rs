//! On-disk checkpoints: a JSON manifest plus one little-endian `f32` file per
//! named tensor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distill::{AmnCheckpoint, FeatureAdapter};
use crate::envs::TaskId;
use crate::error::{LabError, Result};
use crate::expert::ExpertCheckpoint;
use crate::metrics::{MetricEvent, MetricLog};
use crate::nn::{AdamConfig, AdamState, NetworkParams, NetworkSpec, Provenance, LAYER_NAMES};
use crate::tensor::Tensor;

const MANIFEST: &str = "manifest.json";
const FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub seed: u64,
}

/// A loaded checkpoint plus any inconsistencies noticed while reading it.
#[derive(Clone, Debug)]
pub struct Loaded<T> {
    pub value: T,
    pub meta: CheckpointMeta,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
    file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NetworkEntry {
    spec: NetworkSpec,
    prefix: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Kind {
    Expert,
    Amn,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    format: u32,
    kind: Kind,
    tasks: Vec<TaskId>,
    config_hash: String,
    seed: u64,
    network: NetworkEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lateral_source: Option<NetworkEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adam: Option<AdamHeader>,
    #[serde(default)]
    scores: BTreeMap<String, f64>,
    #[serde(default)]
    events: BTreeMap<String, Vec<MetricEvent>>,
    tensors: Vec<TensorEntry>,
    /// Digest of the identity fields above, written at save time.
    digest: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AdamHeader {
    config: AdamConfig,
    t: u64,
    slots: usize,
}

impl Manifest {
    fn identity_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.kind).expect("serializable"));
        h.update(serde_json::to_vec(&self.tasks).expect("serializable"));
        h.update(self.config_hash.as_bytes());
        h.update(self.seed.to_le_bytes());
        h.update(serde_json::to_vec(&self.network.spec).expect("serializable"));
        for t in &self.tensors {
            h.update(t.name.as_bytes());
            h.update(serde_json::to_vec(&t.shape).expect("serializable"));
            h.update(serde_json::to_vec(&t.provenance).expect("serializable"));
        }
        hex::encode(h.finalize())
    }
}

fn file_name(name: &str) -> String {
    format!("{}.f32", name.replace('/', "__"))
}

fn write_tensor(dir: &Path, entries: &mut Vec<TensorEntry>, name: &str, t: &Tensor, provenance: Option<Provenance>) -> Result<()> {
    let file = file_name(name);
    let mut bytes = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let path = dir.join(&file);
    fs::write(&path, bytes).map_err(|e| LabError::io(&path, e))?;
    entries.push(TensorEntry {
        name: name.to_string(),
        shape: t.shape().to_vec(),
        provenance,
        file,
    });
    Ok(())
}

fn read_tensor(dir: &Path, entry: &TensorEntry) -> Result<Tensor> {
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| LabError::CorruptTensor {
        tensor: entry.name.clone(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    let expected: usize = entry.shape.iter().product::<usize>() * 4;
    if bytes.len() != expected {
        return Err(LabError::CorruptTensor {
            tensor: entry.name.clone(),
            reason: format!("{} bytes on disk, {expected} expected", bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Tensor::new(entry.shape.clone(), data).map_err(|e| LabError::CorruptTensor {
        tensor: entry.name.clone(),
        reason: e.to_string(),
    })
}

fn write_network(dir: &Path, entries: &mut Vec<TensorEntry>, prefix: &str, params: &NetworkParams) -> Result<NetworkEntry> {
    for layer in &params.layers {
        write_tensor(dir, entries, &format!("{prefix}/{}.weight", layer.name), &layer.weight, Some(layer.weight_provenance))?;
        write_tensor(dir, entries, &format!("{prefix}/{}.bias", layer.name), &layer.bias, Some(layer.bias_provenance))?;
    }
    Ok(NetworkEntry {
        spec: params.spec.clone(),
        prefix: prefix.to_string(),
    })
}

struct Reader<'a> {
    dir: &'a Path,
    by_name: BTreeMap<&'a str, &'a TensorEntry>,
}

impl<'a> Reader<'a> {
    fn new(dir: &'a Path, manifest: &'a Manifest) -> Self {
        Self {
            dir,
            by_name: manifest.tensors.iter().map(|t| (t.name.as_str(), t)).collect(),
        }
    }

    fn entry(&self, name: &str) -> Result<&'a TensorEntry> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| LabError::Manifest(format!("tensor `{name}` not listed")))
    }

    fn tensor(&self, name: &str) -> Result<Tensor> {
        read_tensor(self.dir, self.entry(name)?)
    }

    fn network(&self, net: &NetworkEntry) -> Result<NetworkParams> {
        let mut params = NetworkParams::zeros(&net.spec)?;
        for (i, name) in LAYER_NAMES.iter().enumerate() {
            for is_bias in [false, true] {
                let key = format!("{}/{name}.{}", net.prefix, if is_bias { "bias" } else { "weight" });
                let entry = self.entry(&key)?;
                let t = read_tensor(self.dir, entry)?;
                let provenance = entry
                    .provenance
                    .ok_or_else(|| LabError::MissingProvenance(key.clone()))?;
                let layer = &mut params.layers[i];
                let (slot, label) = if is_bias {
                    (&mut layer.bias, &mut layer.bias_provenance)
                } else {
                    (&mut layer.weight, &mut layer.weight_provenance)
                };
                if slot.shape() != t.shape() {
                    return Err(LabError::CorruptTensor {
                        tensor: key,
                        reason: format!("shape {:?} does not match the spec's {:?}", t.shape(), slot.shape()),
                    });
                }
                *slot = t;
                *label = provenance;
            }
        }
        Ok(params)
    }
}

fn write_manifest(dir: &Path, mut manifest: Manifest) -> Result<()> {
    manifest.digest = manifest.identity_digest();
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(|e| LabError::io(&path, e))
}

fn read_manifest(dir: &Path, expected_hash: Option<&str>) -> Result<(Manifest, Vec<String>)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| LabError::Manifest(e.to_string()))?;
    if manifest.format != FORMAT {
        return Err(LabError::Manifest(format!("unsupported format {}", manifest.format)));
    }
    let mut warnings = Vec::new();
    if manifest.identity_digest() != manifest.digest {
        warnings.push(format!(
            "{}: manifest identity fields (tasks, config hash, seed, spec or tensor list) differ from those saved",
            dir.display()
        ));
    }
    if let Some(hash) = expected_hash {
        if hash != manifest.config_hash {
            warnings.push(format!(
                "{}: saved with config {} but loaded for config {hash}",
                dir.display(),
                manifest.config_hash
            ));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((manifest, warnings))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

pub fn save_expert(ck: &ExpertCheckpoint, meta: &CheckpointMeta, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let mut tensors = Vec::new();
    let network = write_network(dir, &mut tensors, "net", &ck.params)?;
    let lateral_source = match &ck.lateral_source {
        Some(src) => Some(write_network(dir, &mut tensors, "lateral", src)?),
        None => None,
    };
    for (i, (m, v)) in ck.adam.first.iter().zip(&ck.adam.second).enumerate() {
        write_tensor(dir, &mut tensors, &format!("adam/m{i}"), m, None)?;
        write_tensor(dir, &mut tensors, &format!("adam/v{i}"), v, None)?;
    }
    ck.log.save_csv(&dir.join("log.csv"))?;
    write_manifest(
        dir,
        Manifest {
            format: FORMAT,
            kind: Kind::Expert,
            tasks: vec![ck.task],
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            network,
            lateral_source,
            adam: Some(AdamHeader {
                config: ck.adam.config,
                t: ck.adam.t,
                slots: ck.adam.first.len(),
            }),
            scores: BTreeMap::from([("final".to_string(), ck.final_score)]),
            events: BTreeMap::from([(ck.task.to_string(), ck.log.events.clone())]),
            tensors,
            digest: String::new(),
        },
    )
}

pub fn load_expert(dir: &Path, expected_config_hash: Option<&str>) -> Result<Loaded<ExpertCheckpoint>> {
    let (manifest, warnings) = read_manifest(dir, expected_config_hash)?;
    if !matches!(manifest.kind, Kind::Expert) {
        return Err(LabError::Manifest("not an expert checkpoint".into()));
    }
    let task = *manifest
        .tasks
        .first()
        .ok_or_else(|| LabError::Manifest("expert checkpoint without a task".into()))?;
    let reader = Reader::new(dir, &manifest);
    let params = reader.network(&manifest.network)?;
    let lateral_source = match &manifest.lateral_source {
        Some(entry) => Some(reader.network(entry)?),
        None => None,
    };
    let header = manifest
        .adam
        .as_ref()
        .ok_or_else(|| LabError::Manifest("missing optimizer state".into()))?;
    let mut adam = AdamState::new(header.config, &[]);
    adam.t = header.t;
    for i in 0..header.slots {
        adam.first.push(reader.tensor(&format!("adam/m{i}"))?);
        adam.second.push(reader.tensor(&format!("adam/v{i}"))?);
    }
    let mut log = MetricLog::load_csv(&dir.join("log.csv"))?;
    log.events = manifest.events.get(task.as_str()).cloned().unwrap_or_default();
    let final_score = *manifest
        .scores
        .get("final")
        .ok_or_else(|| LabError::Manifest("missing final score".into()))?;
    Ok(Loaded {
        value: ExpertCheckpoint {
            task,
            params,
            lateral_source,
            adam,
            final_score,
            log,
        },
        meta: CheckpointMeta {
            config_hash: manifest.config_hash.clone(),
            seed: manifest.seed,
        },
        warnings,
    })
}

pub fn save_amn(ck: &AmnCheckpoint, meta: &CheckpointMeta, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let mut tensors = Vec::new();
    let network = write_network(dir, &mut tensors, "net", &ck.params)?;
    let mut scores = BTreeMap::new();
    let mut events = BTreeMap::new();
    for task in &ck.tasks {
        let adapter = ck
            .adapters
            .get(task)
            .ok_or_else(|| LabError::Manifest(format!("no adapter for {task}")))?;
        write_tensor(dir, &mut tensors, &format!("adapter/{task}.weight"), &adapter.weight, None)?;
        write_tensor(dir, &mut tensors, &format!("adapter/{task}.bias"), &adapter.bias, None)?;
        if let Some(log) = ck.logs.get(task) {
            log.save_csv(&dir.join(format!("log-{task}.csv")))?;
            events.insert(task.to_string(), log.events.clone());
        }
        if let Some(s) = ck.expert_scores.get(task) {
            scores.insert(format!("expert:{task}"), *s);
        }
        if let Some(s) = ck.baselines.get(task) {
            scores.insert(format!("random:{task}"), *s);
        }
    }
    write_manifest(
        dir,
        Manifest {
            format: FORMAT,
            kind: Kind::Amn,
            tasks: ck.tasks.clone(),
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            network,
            lateral_source: None,
            adam: None,
            scores,
            events,
            tensors,
            digest: String::new(),
        },
    )
}

pub fn load_amn(dir: &Path, expected_config_hash: Option<&str>) -> Result<Loaded<AmnCheckpoint>> {
    let (manifest, warnings) = read_manifest(dir, expected_config_hash)?;
    if !matches!(manifest.kind, Kind::Amn) {
        return Err(LabError::Manifest("not a student checkpoint".into()));
    }
    let reader = Reader::new(dir, &manifest);
    let params = reader.network(&manifest.network)?;
    let mut ck = AmnCheckpoint {
        params,
        tasks: manifest.tasks.clone(),
        adapters: BTreeMap::new(),
        logs: BTreeMap::new(),
        expert_scores: BTreeMap::new(),
        baselines: BTreeMap::new(),
    };
    for &task in &manifest.tasks {
        ck.adapters.insert(
            task,
            FeatureAdapter {
                weight: reader.tensor(&format!("adapter/{task}.weight"))?,
                bias: reader.tensor(&format!("adapter/{task}.bias"))?,
            },
        );
        let log_path = dir.join(format!("log-{task}.csv"));
        if log_path.exists() {
            let mut log = MetricLog::load_csv(&log_path)?;
            log.events = manifest.events.get(task.as_str()).cloned().unwrap_or_default();
            ck.logs.insert(task, log);
        }
        if let Some(s) = manifest.scores.get(&format!("expert:{task}")) {
            ck.expert_scores.insert(task, *s);
        }
        if let Some(s) = manifest.scores.get(&format!("random:{task}")) {
            ck.baselines.insert(task, *s);
        }
    }
    Ok(Loaded {
        value: ck,
        meta: CheckpointMeta {
            config_hash: manifest.config_hash.clone(),
            seed: manifest.seed,
        },
        warnings,
    })
}
