//! Maximum-likelihood fitting of the working GLM, robust sandwich covariance
//! and Wald statistics.

use nalgebra::{DMatrix, DVector};

use super::design::DesignMatrix;
use super::family::Family;
use crate::error::{Error, FitFailure, Result};

/// Solver controls for [`fit_glm_with`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Convergence threshold on ‖score‖∞ (score averaged over observations).
    pub tol: f64,
    /// Smallest admissible singular-value ratio of the design.
    pub rank_tol: f64,
    /// Any |β| above this during Newton iteration is treated as separation.
    pub separation_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            max_halvings: 30,
            tol: 1e-8,
            rank_tol: 1e-10,
            separation_bound: 30.0,
        }
    }
}

/// Result of a working-model fit.
///
/// A fit with `converged == false` is still returned so callers can inspect
/// it; [`GlmFit::wald`] refuses to produce a statistic from it.
#[derive(Debug, Clone)]
pub struct GlmFit {
    pub beta_hat: Vec<f64>,
    pub sandwich_cov: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub n: usize,
}

/// Wald statistic √n·β̂_idx / √cov_idx,idx.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldStat {
    pub value: f64,
    pub coef_index: usize,
    /// √(cov_idx,idx / n), the standard error of β̂_idx.
    pub se: f64,
}

impl GlmFit {
    pub fn wald(&self, coef_index: usize) -> Result<WaldStat, FitFailure> {
        if !self.converged {
            return Err(FitFailure::NotConverged);
        }
        wald_statistic(self, coef_index, self.n)
    }
}

/// Average working log-likelihood (1/n) Σ [yᵢθᵢ − b(θᵢ)].
pub fn log_likelihood(design: &DesignMatrix, y: &[f64], family: Family, beta: &[f64]) -> f64 {
    let n = design.nrows() as f64;
    design
        .rows()
        .zip(y)
        .map(|(row, &yi)| family.log_likelihood(yi, dot(row, beta)))
        .sum::<f64>()
        / n
}

/// Average score (1/n) Σ (yᵢ − b′(θᵢ))·rowᵢ.
pub fn score(design: &DesignMatrix, y: &[f64], family: Family, beta: &[f64]) -> Vec<f64> {
    let d = design.ncols();
    let mut g = vec![0.0; d];
    for (row, &yi) in design.rows().zip(y) {
        let r = yi - family.mean(dot(row, beta));
        for (gk, xk) in g.iter_mut().zip(row) {
            *gk += r * xk;
        }
    }
    let n = design.nrows() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

pub fn fit_glm(design: &DesignMatrix, y: &[f64], family: Family) -> Result<GlmFit> {
    fit_glm_with(design, y, family, &FitOptions::default())
}

pub fn fit_glm_with(
    design: &DesignMatrix,
    y: &[f64],
    family: Family,
    opts: &FitOptions,
) -> Result<GlmFit> {
    let (n, d) = (design.nrows(), design.ncols());
    if y.len() != n {
        return Err(Error::Input(format!("response has {} entries, design has {n} rows", y.len())));
    }
    if n <= d {
        return Err(Error::Input(format!("need n > d, got n={n}, d={d}")));
    }
    family.validate_response(y)?;
    check_rank(design, opts.rank_tol)?;

    let (beta, converged, iterations) = match family {
        Family::Gaussian => (least_squares(design, y)?, true, 1),
        Family::Logistic => {
            let out = newton(design, y, family, opts)?;
            if completely_separated(design, y, &out.0) {
                return Err(Error::Fit(FitFailure::Separation));
            }
            out
        }
    };
    let grad_norm = inf_norm(&score(design, y, family, &beta));
    let converged = converged && grad_norm <= opts.tol;
    let sandwich_cov = sandwich_covariance(design, y, family, &beta)?;
    Ok(GlmFit {
        beta_hat: beta,
        sandwich_cov,
        converged,
        iterations,
        grad_norm,
        n,
    })
}

/// Sandwich covariance A⁻¹ B A⁻¹ with
/// A = (1/n) Σ b″(θᵢ) rowᵢᵀrowᵢ and B = (1/n) Σ (yᵢ − b′(θᵢ))² rowᵢᵀrowᵢ.
///
/// When every residual is negligible relative to the response scale the fit
/// is exact and B is returned as the zero matrix.
pub fn sandwich_covariance(
    design: &DesignMatrix,
    y: &[f64],
    family: Family,
    beta_hat: &[f64],
) -> Result<DMatrix<f64>> {
    let (n, d) = (design.nrows(), design.ncols());
    if beta_hat.len() != d || beta_hat.iter().any(|b| !b.is_finite()) {
        return Err(Error::Input("coefficient vector must be finite with one entry per column".into()));
    }
    if y.len() != n {
        return Err(Error::Input(format!("response has {} entries, design has {n} rows", y.len())));
    }
    let mut resid = Vec::with_capacity(n);
    let mut a = DMatrix::<f64>::zeros(d, d);
    for (row, &yi) in design.rows().zip(y) {
        let theta = dot(row, beta_hat);
        accumulate_outer(&mut a, row, family.variance(theta));
        resid.push(yi - family.mean(theta));
    }
    let y_scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let r_max = inf_norm(&resid);
    let mut b = DMatrix::<f64>::zeros(d, d);
    if r_max > PERFECT_FIT_RTOL * y_scale {
        for (row, r) in design.rows().zip(&resid) {
            accumulate_outer(&mut b, row, r * r);
        }
    }
    let inv_n = 1.0 / n as f64;
    a *= inv_n;
    b *= inv_n;
    fill_lower(&mut a);
    fill_lower(&mut b);
    let a_inv = a
        .cholesky()
        .ok_or(Error::Fit(FitFailure::SingularDesign))?
        .inverse();
    let cov = &a_inv * b * &a_inv;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Residuals smaller than this fraction of max|y| count as an exact fit.
const PERFECT_FIT_RTOL: f64 = 1e-10;

pub fn wald_statistic(fit: &GlmFit, coef_index: usize, n: usize) -> Result<WaldStat, FitFailure> {
    let d = fit.beta_hat.len();
    assert!(coef_index < d, "coefficient index {coef_index} out of range for d={d}");
    let var = fit.sandwich_cov[(coef_index, coef_index)];
    if !(var.is_finite() && var > 0.0) {
        return Err(FitFailure::DegenerateVariance);
    }
    let value = (n as f64).sqrt() * fit.beta_hat[coef_index] / var.sqrt();
    if !value.is_finite() {
        return Err(FitFailure::DegenerateVariance);
    }
    Ok(WaldStat {
        value,
        coef_index,
        se: (var / n as f64).sqrt(),
    })
}

fn check_rank(design: &DesignMatrix, rank_tol: f64) -> Result<()> {
    let m = DMatrix::from_row_slice(design.nrows(), design.ncols(), design.values());
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min / max < rank_tol {
        return Err(Error::Fit(FitFailure::SingularDesign));
    }
    Ok(())
}

/// Ordinary least squares via Cholesky on the normal equations.
fn least_squares(design: &DesignMatrix, y: &[f64]) -> Result<Vec<f64>> {
    let d = design.ncols();
    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xty = DVector::<f64>::zeros(d);
    for (row, &yi) in design.rows().zip(y) {
        accumulate_outer(&mut xtx, row, 1.0);
        for (k, xk) in row.iter().enumerate() {
            xty[k] += xk * yi;
        }
    }
    fill_lower(&mut xtx);
    let chol = xtx.cholesky().ok_or(Error::Fit(FitFailure::SingularDesign))?;
    Ok(chol.solve(&xty).iter().copied().collect())
}

/// Newton-Raphson with step halving, started at β = 0.
fn newton(
    design: &DesignMatrix,
    y: &[f64],
    family: Family,
    opts: &FitOptions,
) -> Result<(Vec<f64>, bool, usize)> {
    let (n, d) = (design.nrows(), design.ncols());
    let inv_n = 1.0 / n as f64;
    let mut beta = vec![0.0; d];
    let mut ll = log_likelihood(design, y, family, &beta);
    let mut polished = false;

    for iter in 0..opts.max_iter {
        let mut grad = DVector::<f64>::zeros(d);
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for (row, &yi) in design.rows().zip(y) {
            let theta = dot(row, &beta);
            let r = yi - family.mean(theta);
            for (k, xk) in row.iter().enumerate() {
                grad[k] += r * xk;
            }
            accumulate_outer(&mut hess, row, family.variance(theta));
        }
        grad *= inv_n;
        hess *= inv_n;
        fill_lower(&mut hess);
        if grad.amax() <= opts.tol {
            // One more Newton step costs little and takes the score from the
            // tolerance down to rounding level.
            if polished || grad.amax() == 0.0 {
                return Ok((beta, true, iter));
            }
            polished = true;
        }
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => return Err(Error::Fit(FitFailure::Separation)),
        };

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let cand_ll = log_likelihood(design, y, family, &cand);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-14 * ll.abs().max(1.0) {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if beta.iter().any(|b| b.abs() > opts.separation_bound) {
            return Err(Error::Fit(FitFailure::Separation));
        }
        if !accepted {
            return Ok((beta, false, iter + 1));
        }
    }
    Ok((beta, false, opts.max_iter))
}

/// True when the linear predictor classifies every observation correctly,
/// in which case the likelihood has no finite maximizer.
fn completely_separated(design: &DesignMatrix, y: &[f64], beta: &[f64]) -> bool {
    design
        .rows()
        .zip(y)
        .all(|(row, &yi)| (2.0 * yi - 1.0) * dot(row, beta) > 0.0)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Adds w·rowᵀrow into the upper triangle of `m`.
#[inline]
fn accumulate_outer(m: &mut DMatrix<f64>, row: &[f64], w: f64) {
    for (a, &xa) in row.iter().enumerate() {
        let wa = w * xa;
        for (b, &xb) in row.iter().enumerate().skip(a) {
            m[(a, b)] += wa * xb;
        }
    }
}

fn fill_lower(m: &mut DMatrix<f64>) {
    for a in 0..m.nrows() {
        for b in 0..a {
            m[(a, b)] = m[(b, a)];
        }
    }
}
