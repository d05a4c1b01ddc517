//! False discovery proportion, power and computational efficiency against a
//! known set of true interactions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unordered variable pair stored as (j, k) with j < k.
pub type Pair = (usize, usize);

/// Per-replicate outcome of one procedure run against simulation truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub fdp: f64,
    /// `None` when the truth has no alternative pairs.
    pub power: Option<f64>,
    pub omega: f64,
    pub p1: usize,
    pub t_hat: f64,
    pub rejections: usize,
}

/// |rejected ∩ H₀| / max(|rejected|, 1).
pub fn empirical_fdp(rejected: &BTreeSet<Pair>, h1_pairs: &BTreeSet<Pair>) -> f64 {
    let false_rej = rejected.iter().filter(|p| !h1_pairs.contains(p)).count();
    false_rej as f64 / rejected.len().max(1) as f64
}

/// |rejected ∩ H₁| / |H₁|; `None` when H₁ is empty.
pub fn empirical_power(rejected: &BTreeSet<Pair>, h1_pairs: &BTreeSet<Pair>) -> Option<f64> {
    if h1_pairs.is_empty() {
        return None;
    }
    let hits = h1_pairs.intersection(rejected).count();
    Some(hits as f64 / h1_pairs.len() as f64)
}

/// Tests run by the two-stage method relative to testing all pairs:
/// ω = (2p + p₁(p₁ − 1)) / (p(p − 1)).
pub fn efficiency_omega(p: usize, p1: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::Domain(format!("efficiency needs p >= 2, got {p}")));
    }
    if p1 > p {
        return Err(Error::Domain(format!("p1 = {p1} exceeds p = {p}")));
    }
    let (p, p1) = (p as f64, p1 as f64);
    Ok((2.0 * p + p1 * (p1 - 1.0).max(0.0)) / (p * (p - 1.0)))
}

/// Mean and Monte-Carlo standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

pub fn summarize(values: impl IntoIterator<Item = f64>) -> Option<Summary> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let se = if v.len() > 1 {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Some(Summary {
        mean,
        se,
        count: v.len(),
    })
}
