use crate::error::{Error, Result};
use crate::normal::{gauss_tail_inverse, two_sided_tail_unchecked};

/// Upper end of the cutoff search range, √(2 log p).
pub fn max_cutoff(p: usize) -> f64 {
    (2.0 * (p as f64).ln()).max(0.0).sqrt()
}

/// Data-dependent stage-2 cutoff
///
/// t̂ = inf{ 0 ≤ t ≤ √(2 log p) : G(t)·M / max(R(t), 1) ≤ η },  R(t) = #{|T| ≥ t},
///
/// falling back to √(2 log p) when no t in range qualifies. R is a step
/// function of t, so the infimum is found exactly: on each stretch between
/// consecutive order statistics the condition reduces to t ≥ G⁻¹(η·max(R,1)/M).
///
/// `abs_stats` holds |T̂_jk| for the pairs that produced a statistic; `m`
/// counts every pair eligible for stage 2, including those whose fit failed.
pub fn fdr_cutoff(abs_stats: &[f64], m: usize, p: usize, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("eta must be in (0, 1), got {eta}")));
    }
    if p < 2 {
        return Err(Error::Domain(format!("p must be at least 2, got {p}")));
    }
    if abs_stats.len() > m {
        return Err(Error::Domain(format!(
            "{} statistics but only {m} tested pairs",
            abs_stats.len()
        )));
    }
    if let Some(bad) = abs_stats.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::Domain(format!("statistics must be finite and non-negative, got {bad}")));
    }
    let t_max = max_cutoff(p);
    if m == 0 {
        return Ok(t_max);
    }

    let mut sorted = abs_stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len();
    let m = m as f64;

    let mut lower = 0.0_f64;
    let mut i = 0;
    loop {
        // For t in (lower, upper] exactly `total - i` statistics are ≥ t.
        let upper = sorted.get(i).copied().unwrap_or(f64::INFINITY);
        let rejections = (total - i).max(1) as f64;
        let q = eta * rejections / m;
        let threshold = if q >= 1.0 { 0.0 } else { gauss_tail_inverse(q)? };
        let candidate = lower.max(threshold);
        if candidate <= upper.min(t_max) {
            return Ok(candidate);
        }
        if upper >= t_max {
            return Ok(t_max);
        }
        lower = upper;
        while i < total && sorted[i] <= upper {
            i += 1;
        }
    }
}

/// Evaluates the cutoff condition G(t)·M / max(R(t), 1) ≤ η directly.
pub fn cutoff_condition_holds(abs_stats: &[f64], m: usize, eta: f64, t: f64) -> bool {
    let r = abs_stats.iter().filter(|&&s| s >= t).count().max(1);
    two_sided_tail_unchecked(t) * m as f64 / r as f64 <= eta
}
