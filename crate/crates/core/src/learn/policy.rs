use rand::Rng;

use crate::error::{Error, Result};

/// Log-probabilities of a categorical distribution over `logits`.
pub fn log_softmax(logits: &[f64], out: &mut Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    out.clear();
    out.extend(logits.iter().map(|&z| z - lse));
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut lp = Vec::new();
    log_softmax(logits, &mut lp);
    lp.into_iter().map(f64::exp).collect()
}

pub fn entropy(log_probs: &[f64]) -> f64 {
    -log_probs.iter().map(|&l| l.exp() * l).filter(|x| !x.is_nan()).sum::<f64>()
}

/// Index of the largest logit; ties go to the smallest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }
    best
}

fn check_finite(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Numeric("empty logit vector".into()));
    }
    if let Some(i) = logits.iter().position(|z| !z.is_finite()) {
        return Err(Error::Numeric(format!("logit {i} is {}", logits[i])));
    }
    Ok(())
}

/// Draws an action from `softmax(logits)` by inverse CDF and returns it with
/// its log-probability.
pub fn sample_action<R: Rng>(logits: &[f64], rng: &mut R) -> Result<(usize, f64)> {
    check_finite(logits)?;
    let mut lp = Vec::with_capacity(logits.len());
    log_softmax(logits, &mut lp);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut pick = lp.len() - 1;
    for (i, &l) in lp.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            pick = i;
            break;
        }
    }
    // rounding can leave `acc` short of 1; fall back to the last non-zero entry
    if u >= acc {
        pick = lp.iter().rposition(|l| l.exp() > 0.0).unwrap_or(pick);
    }
    Ok((pick, lp[pick]))
}
