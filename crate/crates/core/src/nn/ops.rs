use crate::error::{LabError, Result};

/// Temperature softmax with max subtraction.
pub fn softmax(values: &[f32], temperature: f32) -> Result<Vec<f32>> {
    if !(temperature > 0.0) {
        return Err(LabError::invalid(format!("softmax temperature must be positive, got {temperature}")));
    }
    if values.is_empty() {
        return Err(LabError::Empty("softmax input".into()));
    }
    let tau = temperature as f64;
    let max = values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = values.iter().map(|&v| ((v as f64 - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| (e / total) as f32).collect())
}
