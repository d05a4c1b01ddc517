//! Independent oracles shared by the integration and acceptance tests.
//!
//! Tail probabilities here come from `statrs::function::erf::erfc`, not from
//! the crate's own normal code.

#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use pairscreen::glm::{log_likelihood, score, DesignMatrix, Family};
use pairscreen::two_stage::Dataset;
use pairscreen::Matrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn normal(rng: &mut StdRng) -> f64 {
    // Marsaglia polar method, independent of the crate's Box-Muller.
    loop {
        let u = 2.0 * rng.random::<f64>() - 1.0;
        let v = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

/// G(t) = P(|Z| > t).
pub fn two_sided_tail(t: f64) -> f64 {
    statrs::function::erf::erfc(t / std::f64::consts::SQRT_2)
}

pub fn t_max(p: usize) -> f64 {
    (2.0 * (p as f64).ln()).sqrt()
}

/// G(t)·M / max(R(t), 1) ≤ η.
pub fn feasible(stats: &[f64], m: usize, eta: f64, t: f64) -> bool {
    let r = stats.iter().filter(|&&s| s >= t).count().max(1);
    two_sided_tail(t) * m as f64 / r as f64 <= eta
}

/// Smallest feasible point of {0} ∪ stats ∪ 10⁴ uniform points ∪ {t_max},
/// refined by bisection against the previous (infeasible) grid point.
/// Between consecutive grid points R is constant, so the condition is
/// monotone there and bisection locates the infimum.
pub fn brute_force_cutoff(stats: &[f64], m: usize, p: usize, eta: f64) -> f64 {
    let tmax = t_max(p);
    if m == 0 {
        return tmax;
    }
    let mut grid: Vec<f64> = (0..=10_000).map(|i| tmax * i as f64 / 10_000.0).collect();
    grid.extend(stats.iter().copied().filter(|&s| s <= tmax));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let Some(first) = grid.iter().position(|&t| feasible(stats, m, eta, t)) else {
        return tmax;
    };
    if first == 0 {
        return grid[0];
    }
    let (mut lo, mut hi) = (grid[first - 1], grid[first]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(stats, m, eta, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Rejected indices under the α = 0 cutoff, evaluated through the classical
/// Benjamini-Hochberg step-up on p-values G(|T|) with M hypotheses:
/// when the infimum exists below t_max it equals the r_BH-th largest
/// statistic's threshold, otherwise the cutoff is t_max.
pub fn bh_rejections(stats: &[f64], m: usize, p: usize, eta: f64) -> BTreeSet<usize> {
    let tmax = t_max(p);
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats[b].total_cmp(&stats[a]));
    let mut r_bh = 0;
    for (rank, &idx) in order.iter().enumerate() {
        let r = rank + 1;
        if two_sided_tail(stats[idx]) <= eta * r as f64 / m as f64 {
            r_bh = r;
        }
    }
    let r_at_max = stats.iter().filter(|&&s| s >= tmax).count().max(1);
    let bh_in_range = r_bh >= 1 && stats[order[r_bh - 1]] <= tmax;
    let feasible_in_range =
        bh_in_range || two_sided_tail(tmax) <= eta * r_at_max as f64 / m as f64;
    let threshold = if !feasible_in_range {
        tmax
    } else if r_bh == 0 {
        f64::INFINITY
    } else {
        stats[order[r_bh - 1]]
    };
    (0..stats.len()).filter(|&i| stats[i] >= threshold).collect()
}

/// Design as an nalgebra matrix.
pub fn to_dmatrix(design: &DesignMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(design.nrows(), design.ncols(), design.values())
}

/// Normal-equations OLS via LU.
pub fn ols(design: &DesignMatrix, y: &[f64]) -> Vec<f64> {
    let x = to_dmatrix(design);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * DVector::from_column_slice(y);
    xtx.lu().solve(&xty).expect("full rank").as_slice().to_vec()
}

/// A⁻¹BA⁻¹ accumulated observation by observation, inverted via LU.
pub fn direct_sandwich(design: &DesignMatrix, y: &[f64], family: Family, beta: &[f64]) -> DMatrix<f64> {
    let (n, d) = (design.nrows(), design.ncols());
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        let row = DVector::from_column_slice(design.row(i));
        let theta = row.dot(&DVector::from_column_slice(beta));
        let (mean, var) = match family {
            Family::Gaussian => (theta, 1.0),
            Family::Logistic => {
                let m = 1.0 / (1.0 + (-theta).exp());
                (m, m * (1.0 - m))
            }
        };
        let outer = &row * row.transpose();
        a += &outer * var;
        b += &outer * (y[i] - mean).powi(2);
    }
    a /= n as f64;
    b /= n as f64;
    let a_inv = a.try_inverse().expect("invertible A");
    &a_inv * b * &a_inv
}

/// Random covariates with a few planted interactions.
pub fn random_dataset(seed: u64, family: Family, n: usize, p: usize, signal: f64) -> Dataset {
    let mut r = rng(seed);
    let mut x = Matrix::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            x.set(i, j, normal(&mut r));
        }
    }
    let planted: Vec<(usize, usize)> = (0..3)
        .map(|_| {
            let j = r.random_range(0..p - 1);
            let k = r.random_range(j + 1..p);
            (j, k)
        })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mut theta = match family {
                Family::Gaussian => 0.5,
                Family::Logistic => -0.5,
            };
            theta += 0.3 * x.get(i, 0);
            for &(j, k) in &planted {
                theta += signal * x.get(i, j) * x.get(i, k);
            }
            match family {
                Family::Gaussian => theta + normal(&mut r),
                Family::Logistic => {
                    let prob = 1.0 / (1.0 + (-theta).exp());
                    f64::from(r.random::<f64>() < prob)
                }
            }
        })
        .collect();
    Dataset::new(x, y, family, None).unwrap()
}

pub fn random_design(seed: u64, n: usize, d: usize) -> DesignMatrix {
    let mut r = rng(seed);
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n {
        values.push(1.0);
        for _ in 1..d {
            values.push(normal(&mut r));
        }
    }
    DesignMatrix::new(n, d, values, (0..d).map(|j| format!("c{j}")).collect()).unwrap()
}

pub fn random_response(seed: u64, design: &DesignMatrix, family: Family) -> Vec<f64> {
    let mut r = rng(seed ^ 0xabcdef);
    let beta: Vec<f64> = (0..design.ncols()).map(|_| 0.5 * normal(&mut r)).collect();
    design
        .linear_predictor(&beta)
        .into_iter()
        .map(|t| match family {
            Family::Gaussian => t + normal(&mut r),
            Family::Logistic => f64::from(r.random::<f64>() < 1.0 / (1.0 + (-t).exp())),
        })
        .collect()
}

/// Max relative error between the analytic score and central differences.
pub fn score_fd_error(design: &DesignMatrix, y: &[f64], family: Family, beta: &[f64]) -> f64 {
    let analytic = score(design, y, family, beta);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let scale = analytic.iter().fold(1e-3_f64, |m, v| m.max(v.abs()));
    for j in 0..beta.len() {
        let mut up = beta.to_vec();
        let mut down = beta.to_vec();
        up[j] += h;
        down[j] -= h;
        let fd = (log_likelihood(design, y, family, &up) - log_likelihood(design, y, family, &down))
            / (2.0 * h);
        worst = worst.max((fd - analytic[j]).abs() / scale);
    }
    worst
}

pub fn score_check_worst(family: Family, instances: u64) -> f64 {
    (0..instances)
        .map(|s| {
            let mut r = rng(1000 + s);
            let n = r.random_range(10..=50);
            let d = r.random_range(1..=5);
            let design = random_design(s, n, d);
            let y = random_response(s, &design, family);
            let beta: Vec<f64> = (0..d).map(|_| normal(&mut r)).collect();
            score_fd_error(&design, &y, family, &beta)
        })
        .fold(0.0, f64::max)
}

/// Random |T| vector: null draws plus a few shifted signals, and M ≥ length.
pub fn random_cutoff_instance(seed: u64) -> (Vec<f64>, usize, usize, f64) {
    let mut r = rng(seed);
    let p = r.random_range(5..300);
    let max_m = p * (p - 1) / 2;
    let len = r.random_range(0..=max_m.min(200));
    let signals = r.random_range(0..=len.min(20));
    let mut stats: Vec<f64> = (0..len)
        .map(|i| {
            let mu = if i < signals { r.random_range(1.5..6.0) } else { 0.0 };
            (mu + normal(&mut r)).abs()
        })
        .collect();
    if r.random::<f64>() < 0.2 {
        stats.iter_mut().for_each(|s| *s *= 0.3);
    }
    let m = r.random_range(len..=max_m.min(len + 20)).max(1);
    let eta = r.random_range(0.01..0.3);
    (stats, m, p, eta)
}
