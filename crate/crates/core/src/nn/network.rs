use super::kernels::{conv_backward, conv_forward, dense_backward, dense_forward, relu_mask};
use super::params::{Gradients, NetworkParams};
use super::spec::{NetworkSpec, CONV_LAYERS, FEATURE_LAYER, HEAD_LAYER};
use crate::error::{LabError, Result};
use crate::tensor::Tensor;

/// Activations retained by a forward pass, enough to run the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    spec: NetworkSpec,
    input: Vec<f32>,
    lateral: Vec<f32>,
    /// Post-activation output of every layer; the last entry is the Q-vector.
    acts: Vec<Vec<f32>>,
}

impl ForwardCache {
    pub fn q(&self) -> &[f32] {
        &self.acts[HEAD_LAYER]
    }

    pub fn features(&self) -> &[f32] {
        &self.acts[FEATURE_LAYER]
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }
}

#[derive(Clone, Debug)]
pub struct ForwardResult {
    pub q: Tensor,
    pub features: Tensor,
    pub cache: ForwardCache,
}

/// Runs the network on one observation of shape `spec.input`.
pub fn forward(params: &NetworkParams, obs: &Tensor) -> Result<ForwardResult> {
    if obs.shape() != params.spec.input.as_slice() {
        return Err(LabError::ShapeMismatch {
            what: "observation".into(),
            expected: params.spec.input.to_vec(),
            got: obs.shape().to_vec(),
        });
    }
    let cache = forward_raw(params, obs.data(), &[])?;
    Ok(ForwardResult {
        q: Tensor::from_vec(cache.q().to_vec()),
        features: Tensor::from_vec(cache.features().to_vec()),
        cache,
    })
}

/// Forward pass on a flat observation, with `lateral` appended to the
/// features before the head.
pub fn forward_raw(params: &NetworkParams, input: &[f32], lateral: &[f32]) -> Result<ForwardCache> {
    let spec = &params.spec;
    if input.len() != spec.input_len() {
        return Err(LabError::ShapeMismatch {
            what: "observation".into(),
            expected: spec.input.to_vec(),
            got: vec![input.len()],
        });
    }
    if lateral.len() != spec.lateral_width {
        return Err(LabError::ShapeMismatch {
            what: "lateral features".into(),
            expected: vec![spec.lateral_width],
            got: vec![lateral.len()],
        });
    }
    if params.layers.len() != 5 {
        return Err(LabError::invalid("network must have exactly 5 layers"));
    }
    let dims = spec.conv_dims()?;
    let mut acts: Vec<Vec<f32>> = Vec::with_capacity(5);
    for (i, conv) in spec.convs.iter().enumerate() {
        let layer = &params.layers[i];
        let src = if i == 0 { input } else { &acts[i - 1] };
        let out = conv_forward(
            src,
            dims[i],
            layer.weight.data(),
            layer.bias.data(),
            *conv,
            dims[i + 1],
            true,
        );
        acts.push(out);
    }
    let dense = &params.layers[FEATURE_LAYER];
    let features = dense_forward(&acts[CONV_LAYERS - 1], dense.weight.data(), dense.bias.data(), true);
    acts.push(features);
    let head = &params.layers[HEAD_LAYER];
    let q = if lateral.is_empty() {
        dense_forward(&acts[FEATURE_LAYER], head.weight.data(), head.bias.data(), false)
    } else {
        let mut joined = acts[FEATURE_LAYER].clone();
        joined.extend_from_slice(lateral);
        dense_forward(&joined, head.weight.data(), head.bias.data(), false)
    };
    acts.push(q);
    Ok(ForwardCache {
        spec: spec.clone(),
        input: input.to_vec(),
        lateral: lateral.to_vec(),
        acts,
    })
}

/// Gradients of a loss whose partial derivatives with respect to the Q-vector
/// and (optionally) the feature layer are given.
pub fn backward(
    params: &NetworkParams,
    cache: &ForwardCache,
    dl_dq: &[f32],
    dl_dfeatures: Option<&[f32]>,
) -> Result<Gradients> {
    let mut grads = Gradients::zeros_like(params);
    backward_into(params, cache, dl_dq, dl_dfeatures, &mut grads, None)?;
    Ok(grads)
}

/// Like [`backward`] but accumulates into `grads`, and optionally into a
/// gradient with respect to the input observation.
pub fn backward_into(
    params: &NetworkParams,
    cache: &ForwardCache,
    dl_dq: &[f32],
    dl_dfeatures: Option<&[f32]>,
    grads: &mut Gradients,
    input_grad: Option<&mut [f32]>,
) -> Result<()> {
    let spec = &params.spec;
    if cache.spec != *spec {
        return Err(LabError::StaleCache("network spec differs".into()));
    }
    if cache.acts.len() != 5 || cache.input.len() != spec.input_len() {
        return Err(LabError::StaleCache("incomplete activations".into()));
    }
    if grads.layers.len() != params.layers.len() {
        return Err(LabError::invalid("gradient buffer layout differs from parameters"));
    }
    if dl_dq.len() != spec.head_width {
        return Err(LabError::ShapeMismatch {
            what: "dL/dq".into(),
            expected: vec![spec.head_width],
            got: vec![dl_dq.len()],
        });
    }
    if let Some(df) = dl_dfeatures {
        if df.len() != spec.feature_width {
            return Err(LabError::ShapeMismatch {
                what: "dL/dfeatures".into(),
                expected: vec![spec.feature_width],
                got: vec![df.len()],
            });
        }
    }
    if let Some(ig) = input_grad.as_deref() {
        if ig.len() != spec.input_len() {
            return Err(LabError::invalid("input gradient buffer has the wrong length"));
        }
    }
    let dims = spec.conv_dims()?;

    // head
    let head = &params.layers[HEAD_LAYER];
    let mut d_joined = vec![0.0f32; spec.head_inputs()];
    {
        let (gw, gb) = &mut grads.layers[HEAD_LAYER];
        if cache.lateral.is_empty() {
            dense_backward(
                &cache.acts[FEATURE_LAYER],
                head.weight.data(),
                dl_dq,
                gw.data_mut(),
                gb.data_mut(),
                Some(&mut d_joined),
            );
        } else {
            let mut joined = cache.acts[FEATURE_LAYER].clone();
            joined.extend_from_slice(&cache.lateral);
            dense_backward(&joined, head.weight.data(), dl_dq, gw.data_mut(), gb.data_mut(), Some(&mut d_joined));
        }
    }
    let mut d_features = d_joined;
    d_features.truncate(spec.feature_width);
    if let Some(df) = dl_dfeatures {
        for (d, extra) in d_features.iter_mut().zip(df) {
            *d += extra;
        }
    }
    relu_mask(&mut d_features, &cache.acts[FEATURE_LAYER]);

    // dense1
    let dense = &params.layers[FEATURE_LAYER];
    let mut d_flat = vec![0.0f32; cache.acts[CONV_LAYERS - 1].len()];
    {
        let (gw, gb) = &mut grads.layers[FEATURE_LAYER];
        dense_backward(
            &cache.acts[CONV_LAYERS - 1],
            dense.weight.data(),
            &d_features,
            gw.data_mut(),
            gb.data_mut(),
            Some(&mut d_flat),
        );
    }
    relu_mask(&mut d_flat, &cache.acts[CONV_LAYERS - 1]);

    // convolutions, last to first
    let mut d_out = d_flat;
    let mut input_grad = input_grad;
    for i in (0..CONV_LAYERS).rev() {
        let layer = &params.layers[i];
        let (gw, gb) = &mut grads.layers[i];
        if i > 0 {
            let mut d_in = vec![0.0f32; cache.acts[i - 1].len()];
            conv_backward(
                &cache.acts[i - 1],
                dims[i],
                layer.weight.data(),
                &d_out,
                spec.convs[i],
                dims[i + 1],
                gw.data_mut(),
                gb.data_mut(),
                Some(&mut d_in),
                true,
            );
            relu_mask(&mut d_in, &cache.acts[i - 1]);
            d_out = d_in;
        } else {
            conv_backward(
                &cache.input,
                dims[0],
                layer.weight.data(),
                &d_out,
                spec.convs[0],
                dims[1],
                gw.data_mut(),
                gb.data_mut(),
                input_grad.take(),
                false,
            );
        }
    }
    Ok(())
}

/// Index of the largest entry among `allowed` indices; ties resolve to the
/// first allowed index.
pub fn argmax_over(values: &[f32], allowed: &[usize]) -> usize {
    let mut best = allowed[0];
    for &a in &allowed[1..] {
        if values[a] > values[best] {
            best = a;
        }
    }
    best
}

pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
