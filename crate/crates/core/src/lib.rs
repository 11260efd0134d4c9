//! Consolidation laboratory: expert value networks trained on miniature visual
//! games, distilled into an Actor-Mimic student, and reused through weight
//! transplant, lateral connections and layer-subset transfer.

pub mod checkpoint;
pub mod distill;
pub mod envs;
pub mod metrics;
pub mod error;
pub mod expert;
pub mod nn;
pub mod orchestrator;
pub mod replay;
pub mod report;
pub mod seeds;
pub mod surgery;
pub mod tensor;
pub mod verify;

pub use error::{LabError, Result};
pub use tensor::Tensor;
