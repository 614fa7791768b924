//! Small numeric helpers shared across the crate.

use crate::features::TONE_COUNT;

/// Logistic sigmoid, computed on the branch that never overflows `exp`.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Softmax over the five tone logits, shifted by the maximum so that the
/// exponentials never overflow.
pub(crate) fn softmax(logits: &[f64; TONE_COUNT]) -> [f64; TONE_COUNT] {
    let mut m = logits[0];
    for &l in &logits[1..] {
        if l > m {
            m = l;
        }
    }
    let mut exps = [0.0; TONE_COUNT];
    let mut sum = 0.0;
    for (e, &l) in exps.iter_mut().zip(logits.iter()) {
        *e = libm::exp(l - m);
        sum += *e;
    }
    for e in &mut exps {
        *e /= sum;
    }
    exps
}

/// `ln Σ exp(logits)`, shifted by the maximum for stability.
pub(crate) fn logsumexp(logits: &[f64; TONE_COUNT]) -> f64 {
    let mut m = logits[0];
    for &l in &logits[1..] {
        if l > m {
            m = l;
        }
    }
    let mut sum = 0.0;
    for &l in logits {
        sum += libm::exp(l - m);
    }
    m + libm::log(sum)
}
