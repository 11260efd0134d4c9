use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::{NetworkSpec, LAYER_NAMES};
use crate::error::{LabError, Result};
use crate::tensor::Tensor;

/// Where a parameter tensor came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Random,
    Transplanted,
    AmnSourced,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Random => "random",
            Provenance::Transplanted => "transplanted",
            Provenance::AmnSourced => "amn-sourced",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub name: &'static str,
    pub weight: Tensor,
    pub bias: Tensor,
    pub weight_provenance: Provenance,
    pub bias_provenance: Provenance,
}

impl LayerParams {
    pub fn set_provenance(&mut self, provenance: Provenance) {
        self.weight_provenance = provenance;
        self.bias_provenance = provenance;
    }

    pub fn bit_eq(&self, other: &LayerParams) -> bool {
        self.weight.bit_eq(&other.weight) && self.bias.bit_eq(&other.bias)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub layers: Vec<LayerParams>,
}

/// He-style fan-in scaled normal weights, zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    let shapes = spec.layer_shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(shapes.len());
    for (i, (w_shape, b_shape)) in shapes.into_iter().enumerate() {
        let std = (2.0 / spec.fan_in(i)? as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let mut weight = Tensor::zeros(&w_shape);
        for v in weight.data_mut() {
            *v = normal.sample(&mut rng) as f32;
        }
        layers.push(LayerParams {
            name: LAYER_NAMES[i],
            weight,
            bias: Tensor::zeros(&b_shape),
            weight_provenance: Provenance::Random,
            bias_provenance: Provenance::Random,
        });
    }
    Ok(NetworkParams {
        spec: spec.clone(),
        layers,
    })
}

impl NetworkParams {
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let layers = spec
            .layer_shapes()?
            .into_iter()
            .enumerate()
            .map(|(i, (w, b))| LayerParams {
                name: LAYER_NAMES[i],
                weight: Tensor::zeros(&w),
                bias: Tensor::zeros(&b),
                weight_provenance: Provenance::Random,
                bias_provenance: Provenance::Random,
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn layer(&self, name: &str) -> Option<&LayerParams> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut LayerParams> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    pub fn head_width(&self) -> usize {
        self.spec.head_width
    }

    /// `(name, tensor, provenance)` for every tensor, weight before bias.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor, Provenance)> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            out.push((format!("{}.weight", layer.name), &layer.weight, layer.weight_provenance));
            out.push((format!("{}.bias", layer.name), &layer.bias, layer.bias_provenance));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.spec.layer_shapes()?;
        if self.layers.len() != shapes.len() {
            return Err(LabError::invalid(format!(
                "expected {} layers, found {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (layer, (w, b)) in self.layers.iter().zip(shapes) {
            if layer.weight.shape() != w.as_slice() {
                return Err(LabError::ShapeMismatch {
                    what: format!("{}.weight", layer.name),
                    expected: w,
                    got: layer.weight.shape().to_vec(),
                });
            }
            if layer.bias.shape() != b.as_slice() {
                return Err(LabError::ShapeMismatch {
                    what: format!("{}.bias", layer.name),
                    expected: b,
                    got: layer.bias.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn bit_eq(&self, other: &NetworkParams) -> bool {
        self.spec == other.spec
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.bit_eq(b))
    }

    pub fn set_provenance(&mut self, provenance: Provenance) {
        self.layers.iter_mut().for_each(|l| l.set_provenance(provenance));
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

/// Gradient tensors mirroring a [`NetworkParams`] layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Tensor, Tensor)>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| (Tensor::zeros(l.weight.shape()), Tensor::zeros(l.bias.shape())))
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for (w, b) in &mut self.layers {
            w.fill(0.0);
            b.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.add_assign(ow);
            b.add_assign(ob);
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for (w, b) in &mut self.layers {
            w.scale(factor);
            b.scale(factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.data().iter().chain(b.data()).all(|&v| v == 0.0))
    }

    pub fn max_abs_diff(&self, other: &Gradients) -> f32 {
        let mut worst = 0.0f32;
        for ((w, b), (ow, ob)) in self.layers.iter().zip(&other.layers) {
            for (x, y) in w.data().iter().chain(b.data()).zip(ow.data().iter().chain(ob.data())) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = NetworkSpec::desk(6);
        let a = init_params(&spec, 42).unwrap();
        let b = init_params(&spec, 42).unwrap();
        let c = init_params(&spec, 43).unwrap();
        assert!(a.bit_eq(&b));
        assert!(!a.bit_eq(&c));
    }

    #[test]
    fn init_biases_zero_and_labels_random() {
        let params = init_params(&NetworkSpec::desk(4), 7).unwrap();
        params.validate().unwrap();
        for layer in &params.layers {
            assert!(layer.bias.data().iter().all(|&v| v == 0.0), "{}", layer.name);
            assert_eq!(layer.weight_provenance, Provenance::Random);
            assert_eq!(layer.bias_provenance, Provenance::Random);
        }
    }

    #[test]
    fn init_scale_follows_fan_in() {
        let spec = NetworkSpec::desk(6);
        let params = init_params(&spec, 1).unwrap();
        let w = params.layers[0].weight.data();
        let var = w.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / w.len() as f64;
        let expected = 2.0 / spec.fan_in(0).unwrap() as f64;
        assert!((var / expected - 1.0).abs() < 0.15, "var {var} expected {expected}");
    }
}
