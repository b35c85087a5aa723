//! Cross-entropy loss on the logistic link.

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of probability `p` against label `y`.
pub fn ce_loss(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `|p - y|`, the gradient norm of the loss with respect to the raw score.
pub fn gradient_modulus(p: f64, y: u8) -> f64 {
    (p - y as f64).abs()
}

/// Negative gradient of `ce_loss(sigmoid(f), y)` with respect to `f`.
pub fn residual(p: f64, y: u8) -> f64 {
    y as f64 - p
}

pub fn mean_loss(scores: &[f64], labels: &[u8]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&f, &y)| ce_loss(sigmoid(f), y))
        .sum();
    total / scores.len().max(1) as f64
}
