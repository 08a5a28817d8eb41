//! Scalar helpers shared by the tape primitives and the inference paths.

pub use libm::{exp, log, log1p, pow, sqrt, tanh};

/// Logistic function in the overflow-free split form.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Probability guard applied before taking logs in binary cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `-[y ln p + (1-y) ln(1-p)]` with `p` clamped to `[1e-7, 1-1e-7]`.
pub fn binary_cross_entropy(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * log(p) + (1.0 - y) * log(1.0 - p))
}

/// Derivative of [`binary_cross_entropy`] with respect to `p`.
///
/// The clamp is treated as straight-through: outside the interval the
/// derivative is taken at the nearest bound instead of being zero, so a
/// saturated prediction still yields a direction.
pub fn binary_cross_entropy_grad(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y / p) + (1.0 - y) / (1.0 - p)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + log1p(exp(-x))
    } else {
        log1p(exp(x))
    }
}

/// `ln Σ exp(x_i)` computed around the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + log(s)
}

/// Index of the largest element; ties resolve to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
