//! Binary cross-entropy averaged over the hardest frames only.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct TopKLoss {
    /// Mean loss over the kept frames.
    pub loss: f64,
    /// Frames that carry gradient.
    pub kept: Vec<bool>,
    pub per_frame: Vec<f64>,
}

impl TopKLoss {
    pub fn n_kept(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }
}

pub fn frame_bce(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y == 1 {
        -libm::log(p)
    } else {
        -libm::log(1.0 - p)
    }
}

/// Keeps the `ceil(keep_fraction * N)` frames with the largest loss (ties to
/// the lower index) and averages over them.
pub fn bce_topk_loss(probs: &[f64], labels: &[u8], keep_fraction: f64) -> Result<TopKLoss> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(alloc::format!("{} probabilities vs {} labels", probs.len(), labels.len())));
    }
    if probs.is_empty() {
        return Err(Error::Empty("loss over zero frames"));
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidConfig(alloc::format!("keep_fraction {keep_fraction} not in (0, 1]")));
    }
    let n = probs.len();
    let per_frame: Vec<f64> = probs.iter().zip(labels).map(|(&p, &y)| frame_bce(p, y)).collect();
    let k = (libm::ceil(keep_fraction * n as f64) as usize).clamp(1, n);
    let mut kept = vec![false; n];
    if k == n {
        kept.fill(true);
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| per_frame[b].total_cmp(&per_frame[a]).then(a.cmp(&b)));
        for &i in &order[..k] {
            kept[i] = true;
        }
    }
    let loss = per_frame.iter().zip(&kept).filter(|(_, &k)| k).map(|(l, _)| l).sum::<f64>() / k as f64;
    Ok(TopKLoss { loss, kept, per_frame })
}

/// Gradient of the kept-frame mean loss w.r.t. each logit: `(p - y) / k` on
/// kept frames whose probability is inside the clamp range, zero elsewhere.
pub fn logit_grads(probs: &[f64], labels: &[u8], loss: &TopKLoss) -> Vec<f64> {
    let k = loss.n_kept() as f64;
    probs
        .iter()
        .zip(labels)
        .zip(&loss.kept)
        .map(|((&p, &y), &keep)| {
            if keep && (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                (p - y as f64) / k
            } else {
                0.0
            }
        })
        .collect()
}
