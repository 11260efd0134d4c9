//! Weight reuse between networks: transplant of the student into a new
//! expert, lateral experts reading frozen student features, layer-subset
//! initialization, and the last-layer weight histogram.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::distill::AmnCheckpoint;
use crate::envs::{TaskSpec, ACTION_COUNT};
use crate::error::{LabError, Result};
use crate::expert::{train_network, ExpertCheckpoint, QNetwork, TrainConfig};
use crate::nn::{forward_raw, init_params, NetworkParams, NetworkSpec, Provenance, HEAD_LAYER, LAYER_NAMES};
use crate::tensor::Tensor;

/// Copies rows `rows` of a `[out, in]` head into a new head.
fn select_rows(weight: &Tensor, bias: &Tensor, rows: &[usize]) -> Result<(Tensor, Tensor)> {
    let n_in = weight.shape()[1];
    let mut w = Vec::with_capacity(rows.len() * n_in);
    let mut b = Vec::with_capacity(rows.len());
    for &r in rows {
        w.extend_from_slice(&weight.data()[r * n_in..(r + 1) * n_in]);
        b.push(bias.data()[r]);
    }
    Ok((Tensor::new(vec![rows.len(), n_in], w)?, Tensor::from_vec(b)))
}

/// Positions in `source_actions` of each of the task's actions.
fn head_rows(source_actions: &[usize], task: &TaskSpec) -> Result<Vec<usize>> {
    task.actions
        .iter()
        .map(|a| {
            source_actions
                .iter()
                .position(|s| s == a)
                .ok_or_else(|| LabError::IncompatibleHead(format!("{}: action {a} missing", task.id)))
        })
        .collect()
}

/// New expert for `task` from the student: trunk copied verbatim, head rows
/// picked by the task's global action indices.
pub fn transplant(amn: &NetworkParams, task: &TaskSpec) -> Result<NetworkParams> {
    task.validate()?;
    if amn.spec.lateral_width != 0 {
        return Err(LabError::invalid("cannot transplant from a lateral network"));
    }
    let global: Vec<usize> = (0..amn.head_width()).collect();
    let rows = head_rows(&global, task)?;
    let mut out = amn.clone();
    out.spec = amn.spec.with_head(task.action_count());
    let head = &mut out.layers[HEAD_LAYER];
    let (w, b) = select_rows(&head.weight, &head.bias, &rows)?;
    head.weight = w;
    head.bias = b;
    out.set_provenance(Provenance::Transplanted);
    out.validate()?;
    Ok(out)
}

/// Expert whose head also reads the features of a frozen student.
#[derive(Clone, Debug)]
pub struct LateralExpert {
    /// Trainable network; its head takes `[own features ; student features]`.
    pub expert: NetworkParams,
    pub amn: Arc<NetworkParams>,
}

impl LateralExpert {
    /// Width of the expert's own feature block at the start of each head row.
    pub fn own_width(&self) -> usize {
        self.expert.spec.feature_width
    }

    /// Source of every head input column.
    pub fn column_provenance(&self) -> Vec<Provenance> {
        let own = self.own_width();
        (0..self.expert.spec.head_inputs())
            .map(|i| if i < own { Provenance::Random } else { Provenance::AmnSourced })
            .collect()
    }

    /// The expert without its lateral columns.
    pub fn without_lateral(&self) -> Result<NetworkParams> {
        let mut plain = self.expert.clone();
        plain.spec = self.expert.spec.with_lateral(0);
        let head = &mut plain.layers[HEAD_LAYER];
        let n_in = self.expert.spec.head_inputs();
        let own = self.own_width();
        let w: Vec<f32> = head
            .weight
            .data()
            .chunks(n_in)
            .flat_map(|row| row[..own].iter().copied())
            .collect();
        head.weight = Tensor::new(vec![plain.spec.head_width, own], w)?;
        plain.validate()?;
        Ok(plain)
    }

    /// Zeroes the head columns that read the student's features.
    pub fn zero_amn_columns(&mut self) {
        let n_in = self.expert.spec.head_inputs();
        let own = self.own_width();
        for row in self.expert.layers[HEAD_LAYER].weight.data_mut().chunks_mut(n_in) {
            row[own..].iter_mut().for_each(|w| *w = 0.0);
        }
    }
}

impl QNetwork for LateralExpert {
    fn params(&self) -> &NetworkParams {
        &self.expert
    }

    fn params_mut(&mut self) -> &mut NetworkParams {
        &mut self.expert
    }

    fn lateral(&self, obs: &[f32]) -> Result<Vec<f32>> {
        Ok(forward_raw(&self.amn, obs, &[])?.features().to_vec())
    }
}

/// Fresh expert for `task` with a lateral connection from the student's
/// feature layer. Every layer, including the student-facing head columns,
/// uses the ordinary fan-in scaled initialization.
pub fn make_lateral(amn: &NetworkParams, task: &TaskSpec, seed: u64) -> Result<LateralExpert> {
    task.validate()?;
    if amn.spec.lateral_width != 0 {
        return Err(LabError::invalid("student network must not itself be lateral"));
    }
    let spec = amn
        .spec
        .with_head(task.action_count())
        .with_lateral(amn.spec.feature_width);
    Ok(LateralExpert {
        expert: init_params(&spec, seed)?,
        amn: Arc::new(amn.clone()),
    })
}

/// Trains a lateral expert; the frozen student travels with the checkpoint.
pub fn train_lateral(task: &TaskSpec, lateral: LateralExpert, config: &TrainConfig, seed: u64) -> Result<ExpertCheckpoint> {
    let source = Arc::clone(&lateral.amn);
    let trained = train_network(task, lateral, config, seed)?;
    Ok(ExpertCheckpoint {
        task: task.id,
        params: trained.net.expert,
        lateral_source: Some((*source).clone()),
        adam: trained.adam,
        final_score: trained.final_score,
        log: trained.log,
    })
}

/// Network a layer-subset initialization copies from.
#[derive(Clone, Copy, Debug)]
pub enum TransferSource<'a> {
    Expert(&'a ExpertCheckpoint),
    Amn(&'a AmnCheckpoint),
}

impl TransferSource<'_> {
    pub fn params(&self) -> &NetworkParams {
        match self {
            TransferSource::Expert(e) => &e.params,
            TransferSource::Amn(a) => &a.params,
        }
    }

    /// Global action index of each head row.
    pub fn head_actions(&self) -> Vec<usize> {
        match self {
            TransferSource::Expert(e) => e.task.actions().to_vec(),
            TransferSource::Amn(_) => (0..ACTION_COUNT).collect(),
        }
    }
}

/// Copies the first `k` layers (conv1, conv2, conv3, dense1, head) of the
/// source and initializes the rest from `seed`.
pub fn layer_subset_init(source: TransferSource<'_>, k: usize, task: &TaskSpec, seed: u64) -> Result<NetworkParams> {
    if k > LAYER_NAMES.len() {
        return Err(LabError::invalid(format!("cannot transfer {k} of 5 layers")));
    }
    task.validate()?;
    let src = source.params();
    let spec = NetworkSpec {
        lateral_width: 0,
        head_width: task.action_count(),
        ..src.spec.clone()
    };
    let mut out = init_params(&spec, seed)?;
    for layer in 0..k.min(HEAD_LAYER) {
        out.layers[layer].weight = src.layers[layer].weight.clone();
        out.layers[layer].bias = src.layers[layer].bias.clone();
        out.layers[layer].set_provenance(Provenance::Transplanted);
    }
    if k == LAYER_NAMES.len() {
        if src.spec.lateral_width != 0 {
            return Err(LabError::IncompatibleHead("lateral source head".into()));
        }
        let rows = head_rows(&source.head_actions(), task)?;
        let head = &src.layers[HEAD_LAYER];
        let (w, b) = select_rows(&head.weight, &head.bias, &rows)?;
        let dst = &mut out.layers[HEAD_LAYER];
        dst.weight = w;
        dst.bias = b;
        dst.set_provenance(Provenance::Transplanted);
    }
    out.validate()?;
    Ok(out)
}

/// |w| histogram of the head weights split by column provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightHistogram {
    pub edges: Vec<f64>,
    pub count_amn: Vec<usize>,
    pub count_expert: Vec<usize>,
    pub median_amn: f64,
    pub median_expert: f64,
}

impl WeightHistogram {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_left", "bin_right", "count_amn", "count_expert"])?;
        for i in 0..self.count_amn.len() {
            w.write_record([
                self.edges[i].to_string(),
                self.edges[i + 1].to_string(),
                self.count_amn[i].to_string(),
                self.count_expert[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| LabError::io("<csv>", e))?;
        Ok(())
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    Data::new(values.to_vec()).median()
}

/// Histogram of `|w|` over the head of `params`, with `labels[i]` naming the
/// source of input column `i`. Columns labelled amn-sourced form one group,
/// all others the expert group.
pub fn last_layer_weight_histogram(params: &NetworkParams, labels: &[Provenance], bins: usize) -> Result<WeightHistogram> {
    let head = &params.layers[HEAD_LAYER].weight;
    let n_in = head.shape()[1];
    if labels.len() != n_in {
        return Err(LabError::MissingProvenance(format!(
            "{} column labels for a head with {n_in} inputs",
            labels.len()
        )));
    }
    if bins == 0 {
        return Err(LabError::invalid("histogram needs at least one bin"));
    }
    let mut amn = Vec::new();
    let mut expert = Vec::new();
    for row in head.data().chunks(n_in) {
        for (w, label) in row.iter().zip(labels) {
            let v = w.abs() as f64;
            if *label == Provenance::AmnSourced {
                amn.push(v);
            } else {
                expert.push(v);
            }
        }
    }
    let max = amn.iter().chain(&expert).cloned().fold(0.0f64, f64::max);
    let (edges, count) = if max == 0.0 {
        (vec![0.0, 0.0], 1)
    } else {
        ((0..=bins).map(|i| max * i as f64 / bins as f64).collect(), bins)
    };
    let bucket = |v: f64| {
        if max == 0.0 {
            0
        } else {
            ((v / max * count as f64) as usize).min(count - 1)
        }
    };
    let mut count_amn = vec![0; count];
    let mut count_expert = vec![0; count];
    amn.iter().for_each(|&v| count_amn[bucket(v)] += 1);
    expert.iter().for_each(|&v| count_expert[bucket(v)] += 1);
    Ok(WeightHistogram {
        edges,
        count_amn,
        count_expert,
        median_amn: median(&amn),
        median_expert: median(&expert),
    })
}
