//! Convolution and dense kernels.
//!
//! Convolutions iterate over input cells and scatter into the outputs, skipping
//! zero inputs. Game observations are binary and sparse and hidden activations
//! come out of a ReLU, so most of the work disappears. Zero padding costs
//! nothing in this form: padded cells are simply never visited.

use super::spec::ConvSpec;

pub(crate) fn conv_forward(
    input: &[f32],
    in_dims: [usize; 3],
    weight: &[f32],
    bias: &[f32],
    conv: ConvSpec,
    out_dims: [usize; 3],
    relu: bool,
) -> Vec<f32> {
    let [h, w, c] = in_dims;
    let [ho, wo, f] = out_dims;
    let (k, s, p) = (conv.kernel, conv.stride, conv.padding);
    let mut out = Vec::with_capacity(ho * wo * f);
    for _ in 0..ho * wo {
        out.extend_from_slice(bias);
    }
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * c;
            for ci in 0..c {
                let v = input[base + ci];
                if v == 0.0 {
                    continue;
                }
                for ky in 0..k.min(y + p + 1) {
                    let dy = y + p - ky;
                    if dy % s != 0 || dy / s >= ho {
                        continue;
                    }
                    let oy = dy / s;
                    for kx in 0..k.min(x + p + 1) {
                        let dx = x + p - kx;
                        if dx % s != 0 || dx / s >= wo {
                            continue;
                        }
                        let ox = dx / s;
                        let wrow = &weight[((ky * k + kx) * c + ci) * f..][..f];
                        let orow = &mut out[(oy * wo + ox) * f..][..f];
                        for (o, wv) in orow.iter_mut().zip(wrow) {
                            *o += v * wv;
                        }
                    }
                }
            }
        }
    }
    if relu {
        relu_in_place(&mut out);
    }
    out
}

/// Accumulates weight and bias gradients for one sample. `dz` is the gradient
/// with respect to the pre-activation output. When `skip_zero_inputs` is set,
/// input gradients are not computed for zero inputs; this is exact when the
/// input is a ReLU output, whose derivative vanishes there.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    input: &[f32],
    in_dims: [usize; 3],
    weight: &[f32],
    dz: &[f32],
    conv: ConvSpec,
    out_dims: [usize; 3],
    dweight: &mut [f32],
    dbias: &mut [f32],
    mut dinput: Option<&mut [f32]>,
    skip_zero_inputs: bool,
) {
    let [h, w, c] = in_dims;
    let [ho, wo, f] = out_dims;
    let (k, s, p) = (conv.kernel, conv.stride, conv.padding);
    for pos in 0..ho * wo {
        for (db, d) in dbias.iter_mut().zip(&dz[pos * f..(pos + 1) * f]) {
            *db += d;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * c;
            for ci in 0..c {
                let v = input[base + ci];
                if v == 0.0 && (skip_zero_inputs || dinput.is_none()) {
                    continue;
                }
                let mut acc = 0.0f32;
                for ky in 0..k.min(y + p + 1) {
                    let dy = y + p - ky;
                    if dy % s != 0 || dy / s >= ho {
                        continue;
                    }
                    let oy = dy / s;
                    for kx in 0..k.min(x + p + 1) {
                        let dx = x + p - kx;
                        if dx % s != 0 || dx / s >= wo {
                            continue;
                        }
                        let ox = dx / s;
                        let widx = ((ky * k + kx) * c + ci) * f;
                        let dzrow = &dz[(oy * wo + ox) * f..][..f];
                        if v != 0.0 {
                            for (g, d) in dweight[widx..widx + f].iter_mut().zip(dzrow) {
                                *g += v * d;
                            }
                        }
                        if dinput.is_some() {
                            acc += weight[widx..widx + f]
                                .iter()
                                .zip(dzrow)
                                .map(|(a, b)| a * b)
                                .sum::<f32>();
                        }
                    }
                }
                if let Some(di) = dinput.as_deref_mut() {
                    di[base + ci] += acc;
                }
            }
        }
    }
}

pub(crate) fn dense_forward(input: &[f32], weight: &[f32], bias: &[f32], relu: bool) -> Vec<f32> {
    let n_in = input.len();
    let mut out: Vec<f32> = bias
        .iter()
        .enumerate()
        .map(|(o, b)| {
            b + weight[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(input)
                .map(|(w, x)| w * x)
                .sum::<f32>()
        })
        .collect();
    if relu {
        relu_in_place(&mut out);
    }
    out
}

pub(crate) fn dense_backward(
    input: &[f32],
    weight: &[f32],
    dz: &[f32],
    dweight: &mut [f32],
    dbias: &mut [f32],
    dinput: Option<&mut [f32]>,
) {
    let n_in = input.len();
    for (o, &d) in dz.iter().enumerate() {
        dbias[o] += d;
        if d == 0.0 {
            continue;
        }
        for (g, x) in dweight[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
            *g += d * x;
        }
    }
    if let Some(di) = dinput {
        for (o, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (g, w) in di.iter_mut().zip(&weight[o * n_in..(o + 1) * n_in]) {
                *g += d * w;
            }
        }
    }
}

pub(crate) fn relu_in_place(v: &mut [f32]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub(crate) fn relu_mask(grad: &mut [f32], activation: &[f32]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}
