use crate::error::{Error, Result};

/// Probability floor that keeps the log finite for confident mistakes.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean categorical cross-entropy over a batch. `probs` is `[batch][class]`
/// row-major, `targets` holds class indices.
pub fn cross_entropy(probs: &[f64], classes: usize, targets: &[usize]) -> Result<f64> {
    if probs.len() != targets.len() * classes {
        return Err(Error::InvalidArgument(
            "probability rows do not match target count".into(),
        ));
    }
    let mut sum = 0.0f64;
    for (n, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(Error::InvalidArgument(format!(
                "target class {t} out of range"
            )));
        }
        sum -= probs[n * classes + t].max(PROB_FLOOR).ln();
    }
    Ok(sum / targets.len() as f64)
}

/// Gradient of the mean cross-entropy with respect to the logits:
/// (softmax probabilities minus the one-hot target) / batch.
pub fn cross_entropy_logit_grads(probs: &[f64], classes: usize, targets: &[usize]) -> Vec<f64> {
    let batch = targets.len() as f64;
    let mut g = probs.to_vec();
    for (n, &t) in targets.iter().enumerate() {
        g[n * classes + t] -= 1.0;
    }
    for v in g.iter_mut() {
        *v /= batch;
    }
    g
}
