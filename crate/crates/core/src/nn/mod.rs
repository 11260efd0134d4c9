//! Fixed-architecture value network: initialization, forward and backward
//! passes, Adam.

mod adam;
mod kernels;
mod network;
mod ops;
mod params;
mod spec;

pub use adam::{adam_step, network_slots, AdamConfig, AdamState, ParamSlot};
pub use network::{argmax, argmax_over, backward, backward_into, forward, forward_raw, ForwardCache, ForwardResult};
pub use ops::softmax;
pub use params::{init_params, Gradients, LayerParams, NetworkParams, Provenance};
pub use spec::{ConvSpec, NetworkSpec, CONV_LAYERS, FEATURE_LAYER, HEAD_LAYER, LAYER_NAMES};
