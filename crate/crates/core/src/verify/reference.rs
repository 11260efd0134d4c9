//! Straight-line `f64` evaluator of the value network, written independently
//! of the engine kernels. Used as the forward oracle and as the function that
//! finite differences are taken on.

use crate::nn::NetworkParams;

#[derive(Clone, Debug)]
pub struct ReferenceNet {
    pub input: [usize; 3],
    /// (kernel, stride, padding, filters) per conv layer.
    pub convs: Vec<(usize, usize, usize, usize)>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub feature_width: usize,
    pub head_width: usize,
}

#[derive(Clone, Debug)]
pub struct ReferenceOutput {
    pub q: Vec<f64>,
    pub features: Vec<f64>,
    /// Sign pattern of every pre-activation that passes through a ReLU.
    pub pattern: Vec<bool>,
}

impl ReferenceNet {
    pub fn from_params(params: &NetworkParams) -> Self {
        let spec = &params.spec;
        Self {
            input: spec.input,
            convs: spec.convs.iter().map(|c| (c.kernel, c.stride, c.padding, c.filters)).collect(),
            weights: params
                .layers
                .iter()
                .map(|l| l.weight.data().iter().map(|&v| v as f64).collect())
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| l.bias.data().iter().map(|&v| v as f64).collect())
                .collect(),
            feature_width: spec.feature_width,
            head_width: spec.head_width,
        }
    }

    pub fn eval(&self, obs: &[f64], lateral: &[f64]) -> ReferenceOutput {
        let mut pattern = Vec::new();
        let (mut h, mut w, mut c) = (self.input[0], self.input[1], self.input[2]);
        let mut act = obs.to_vec();
        for (layer, &(k, s, p, f)) in self.convs.iter().enumerate() {
            let ho = (h + 2 * p - k) / s + 1;
            let wo = (w + 2 * p - k) / s + 1;
            let wt = &self.weights[layer];
            let mut out = vec![0.0; ho * wo * f];
            for oy in 0..ho {
                for ox in 0..wo {
                    for fi in 0..f {
                        let mut z = self.biases[layer][fi];
                        for ky in 0..k {
                            for kx in 0..k {
                                for ci in 0..c {
                                    let iy = (oy * s + ky) as isize - p as isize;
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let x = act[(iy as usize * w + ix as usize) * c + ci];
                                    let wv = wt[((ky * k + kx) * c + ci) * f + fi];
                                    z += x * wv;
                                }
                            }
                        }
                        pattern.push(z > 0.0);
                        out[(oy * wo + ox) * f + fi] = if z > 0.0 { z } else { 0.0 };
                    }
                }
            }
            act = out;
            h = ho;
            w = wo;
            c = f;
        }
        let mut features = vec![0.0; self.feature_width];
        for (o, feat) in features.iter_mut().enumerate() {
            let mut z = self.biases[3][o];
            for (i, x) in act.iter().enumerate() {
                z += self.weights[3][o * act.len() + i] * x;
            }
            pattern.push(z > 0.0);
            *feat = if z > 0.0 { z } else { 0.0 };
        }
        let joined: Vec<f64> = features.iter().chain(lateral).copied().collect();
        let mut q = vec![0.0; self.head_width];
        for (o, qv) in q.iter_mut().enumerate() {
            let mut z = self.biases[4][o];
            for (i, x) in joined.iter().enumerate() {
                z += self.weights[4][o * joined.len() + i] * x;
            }
            *qv = z;
        }
        ReferenceOutput { q, features, pattern }
    }

    /// Linear probe loss `c.q + d.features`.
    pub fn probe_loss(&self, obs: &[f64], lateral: &[f64], dq: &[f64], dfeat: &[f64]) -> (f64, Vec<bool>) {
        let out = self.eval(obs, lateral);
        let loss = out.q.iter().zip(dq).map(|(a, b)| a * b).sum::<f64>()
            + out.features.iter().zip(dfeat).map(|(a, b)| a * b).sum::<f64>();
        (loss, out.pattern)
    }
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
