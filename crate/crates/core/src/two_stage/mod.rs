//! The two-stage testing procedure: marginal Wald screening, pairwise
//! interaction Wald tests among survivors, and the FDR cutoff.

mod cutoff;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cutoff::{cutoff_condition_holds, fdr_cutoff, max_cutoff};

use crate::error::{Error, FitFailure, Result};
use crate::glm::{
    build_stage1_design_adjusted, build_stage2_design, fit_glm_with, Family, FitOptions,
    INTERACTION_INDEX, MARGINAL_INDEX,
};
use crate::matrix::Matrix;
use crate::metrics::efficiency_omega;
use crate::normal::gauss_tail_inverse;

/// Observations for one analysis.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
    family: Family,
    adjust: Option<Matrix>,
    labels: Vec<String>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>, family: Family, adjust: Option<Matrix>) -> Result<Self> {
        let labels = (0..x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_labels(x, y, family, adjust, labels)
    }

    pub fn with_labels(
        x: Matrix,
        y: Vec<f64>,
        family: Family,
        adjust: Option<Matrix>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n < 5 {
            return Err(Error::Input(format!("need at least 5 observations, got {n}")));
        }
        if p < 2 {
            return Err(Error::Input(format!("need at least 2 variables, got {p}")));
        }
        if y.len() != n {
            return Err(Error::Input(format!("response has {} entries, X has {n} rows", y.len())));
        }
        if labels.len() != p {
            return Err(Error::Input(format!("{p} variables but {} labels", labels.len())));
        }
        if !x.all_finite() {
            return Err(Error::Input("X contains non-finite values".into()));
        }
        if let Some(a) = &adjust {
            if a.nrows() != n {
                return Err(Error::Input(format!(
                    "adjustment matrix has {} rows, X has {n}",
                    a.nrows()
                )));
            }
            if !a.all_finite() {
                return Err(Error::Input("adjustment matrix contains non-finite values".into()));
            }
        }
        family.validate_response(&y)?;
        Ok(Self {
            x,
            y,
            family,
            adjust,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn adjust(&self) -> Option<&Matrix> {
        self.adjust.as_ref()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Knobs of the procedure that are not part of the statistical definition.
#[derive(Debug, Clone, Copy)]
pub struct TwoStageOptions {
    /// Reject on |T| > t̂ instead of |T| ≥ t̂.
    pub strict_cutoff: bool,
    /// Append adjustment covariates to the stage-1 designs too.
    pub adjust_in_stage1: bool,
    /// Worker threads for the fitting loops; `None` uses the ambient pool.
    pub workers: Option<usize>,
    pub fit: FitOptions,
}

impl Default for TwoStageOptions {
    fn default() -> Self {
        Self {
            strict_cutoff: false,
            adjust_in_stage1: false,
            workers: None,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedFit {
    pub index: usize,
    pub reason: FitFailure,
}

/// Stage-1 marginal statistics and the set of surviving variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    /// T̂_j per variable; `None` where the marginal fit failed.
    pub t_stats: Vec<Option<f64>>,
    pub alpha: f64,
    /// Sorted indices with |T̂_j| ≥ alpha.
    pub passing: Vec<usize>,
    pub failed_fits: Vec<FailedFit>,
}

impl ScreenResult {
    /// Same statistics thresholded at a different alpha.
    pub fn rethreshold(&self, alpha: f64) -> Self {
        let passing = self
            .t_stats
            .iter()
            .enumerate()
            .filter_map(|(j, t)| t.filter(|t| t.abs() >= alpha).map(|_| j))
            .collect();
        Self {
            t_stats: self.t_stats.clone(),
            alpha,
            passing,
            failed_fits: self.failed_fits.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub j: usize,
    pub k: usize,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub j: usize,
    pub k: usize,
    pub reason: FitFailure,
}

/// Stage-2 interaction statistics, in lexicographic (j, k) order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairTestResult {
    pub pairs: Vec<PairStat>,
    pub skipped: Vec<SkippedPair>,
}

/// One tested pair in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub j: usize,
    pub k: usize,
    pub label_j: String,
    pub label_k: String,
    #[serde(rename = "T_jk")]
    pub t_jk: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedOutcome {
    pub j: usize,
    pub k: usize,
    pub label_j: String,
    pub label_k: String,
    pub reason: FitFailure,
}

/// Everything produced by one run of the procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrReport {
    pub family: Family,
    pub n: usize,
    pub p: usize,
    pub eta: f64,
    pub alpha1: f64,
    pub alpha: f64,
    pub t_hat: f64,
    pub strict_cutoff: bool,
    /// Variables passing stage 1.
    pub p1: usize,
    /// Pairs eligible for stage 2, p₁(p₁ − 1)/2, including failed fits.
    #[serde(rename = "M")]
    pub m: usize,
    pub skipped_count: usize,
    pub stage1_failures: Vec<FailedFit>,
    pub omega: f64,
    pub rejected_count: usize,
    pub pairs: Vec<PairOutcome>,
    pub skipped: Vec<SkippedOutcome>,
}

impl FdrReport {
    pub fn rejected(&self) -> impl Iterator<Item = &PairOutcome> {
        self.pairs.iter().filter(|p| p.rejected)
    }
}

/// Screening threshold α = √(α₁ log p).
pub fn alpha_from_rate(alpha1: f64, p: usize) -> Result<f64> {
    if !(alpha1 >= 0.0 && alpha1.is_finite()) {
        return Err(Error::Domain(format!("alpha1 must be finite and >= 0, got {alpha1}")));
    }
    if p < 2 {
        return Err(Error::Domain(format!("p must be at least 2, got {p}")));
    }
    Ok((alpha1 * (p as f64).ln()).sqrt())
}

/// c* = G⁻¹(η·a₁/M) / √(log p), the signal threshold for full asymptotic power.
pub fn theoretical_cstar(eta: f64, a1: usize, m: usize, p: usize) -> Result<f64> {
    if a1 == 0 || m == 0 {
        return Err(Error::Domain("c* needs a1 > 0 and M > 0".into()));
    }
    if p < 2 {
        return Err(Error::Domain(format!("p must be at least 2, got {p}")));
    }
    let q = eta * a1 as f64 / m as f64;
    Ok(gauss_tail_inverse(q)? / (p as f64).ln().sqrt())
}

/// Runs `f` inside a pool of `workers` threads, or directly when unset.
fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn marginal_stat(data: &Dataset, j: usize, opts: &TwoStageOptions) -> Result<f64, FitFailure> {
    let adjust = if opts.adjust_in_stage1 { data.adjust() } else { None };
    let design = build_stage1_design_adjusted(data.x.column(j), adjust)
        .expect("dataset columns are validated");
    fit_glm_with(&design, &data.y, data.family, &opts.fit)
        .map_err(as_fit_failure)?
        .wald(MARGINAL_INDEX)
        .map(|w| w.value)
}

fn interaction_stat(
    data: &Dataset,
    j: usize,
    k: usize,
    opts: &TwoStageOptions,
) -> Result<f64, FitFailure> {
    let design = build_stage2_design(data.x.column(j), data.x.column(k), data.adjust())
        .expect("dataset columns are validated");
    fit_glm_with(&design, &data.y, data.family, &opts.fit)
        .map_err(as_fit_failure)?
        .wald(INTERACTION_INDEX)
        .map(|w| w.value)
}

fn as_fit_failure(err: Error) -> FitFailure {
    match err {
        Error::Fit(f) => f,
        // Inputs are validated up front; n <= d is the only way left to get here.
        _ => FitFailure::SingularDesign,
    }
}

/// Stage 1: marginal Wald statistic for every variable.
pub fn stage1_screen(data: &Dataset, alpha: f64, opts: &TwoStageOptions) -> Result<ScreenResult> {
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
    }
    let outcomes: Vec<Result<f64, FitFailure>> = in_pool(opts.workers, || {
        (0..data.p())
            .into_par_iter()
            .map(|j| marginal_stat(data, j, opts))
            .collect()
    })?;
    let mut t_stats = Vec::with_capacity(outcomes.len());
    let mut failed_fits = Vec::new();
    for (index, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(t) => t_stats.push(Some(t)),
            Err(reason) => {
                t_stats.push(None);
                failed_fits.push(FailedFit { index, reason });
            }
        }
    }
    if failed_fits.len() == data.p() {
        return Err(Error::AllFitsFailed);
    }
    let screen = ScreenResult {
        t_stats,
        alpha,
        passing: Vec::new(),
        failed_fits,
    };
    Ok(screen.rethreshold(alpha))
}

/// Pairs (j, k), j < k, with both members in `passing`, lexicographically.
pub fn eligible_pairs(passing: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(passing.len() * passing.len().saturating_sub(1) / 2);
    for (a, &j) in passing.iter().enumerate() {
        for &k in &passing[a + 1..] {
            out.push((j, k));
        }
    }
    out
}

/// Stage 2: interaction Wald statistic for every pair of surviving variables.
pub fn stage2_tests(
    data: &Dataset,
    screen: &ScreenResult,
    opts: &TwoStageOptions,
) -> Result<PairTestResult> {
    let pairs = eligible_pairs(&screen.passing);
    let outcomes: Vec<Result<f64, FitFailure>> = in_pool(opts.workers, || {
        pairs
            .par_iter()
            .map(|&(j, k)| interaction_stat(data, j, k, opts))
            .collect()
    })?;
    let mut result = PairTestResult::default();
    for ((j, k), out) in pairs.into_iter().zip(outcomes) {
        match out {
            Ok(t) => result.pairs.push(PairStat { j, k, t }),
            Err(reason) => result.skipped.push(SkippedPair { j, k, reason }),
        }
    }
    Ok(result)
}

/// Cutoff and rejections from already computed stage-1/stage-2 statistics.
///
/// `tests` may cover a superset of the pairs eligible under `screen`; only
/// pairs with both members passing are used.
pub fn assemble_report(
    data: &Dataset,
    alpha1: f64,
    eta: f64,
    screen: &ScreenResult,
    tests: &PairTestResult,
    strict_cutoff: bool,
) -> Result<FdrReport> {
    let p = data.p();
    let mut passes = vec![false; p];
    for &j in &screen.passing {
        passes[j] = true;
    }
    let eligible = |j: usize, k: usize| passes[j] && passes[k];
    let pairs: Vec<&PairStat> = tests.pairs.iter().filter(|s| eligible(s.j, s.k)).collect();
    let skipped: Vec<&SkippedPair> = tests.skipped.iter().filter(|s| eligible(s.j, s.k)).collect();
    let p1 = screen.passing.len();
    let m = p1 * p1.saturating_sub(1) / 2;
    debug_assert_eq!(m, pairs.len() + skipped.len());

    let abs_stats: Vec<f64> = pairs.iter().map(|s| s.t.abs()).collect();
    let t_hat = fdr_cutoff(&abs_stats, m, p, eta)?;
    let label = |j: usize| data.labels[j].clone();
    let outcomes: Vec<PairOutcome> = pairs
        .iter()
        .map(|s| {
            let a = s.t.abs();
            PairOutcome {
                j: s.j,
                k: s.k,
                label_j: label(s.j),
                label_k: label(s.k),
                t_jk: s.t,
                rejected: if strict_cutoff { a > t_hat } else { a >= t_hat },
            }
        })
        .collect();
    let skipped_out = skipped
        .iter()
        .map(|s| SkippedOutcome {
            j: s.j,
            k: s.k,
            label_j: label(s.j),
            label_k: label(s.k),
            reason: s.reason,
        })
        .collect();
    Ok(FdrReport {
        family: data.family,
        n: data.n(),
        p,
        eta,
        alpha1,
        alpha: screen.alpha,
        t_hat,
        strict_cutoff,
        p1,
        m,
        skipped_count: skipped.len(),
        stage1_failures: screen.failed_fits.clone(),
        omega: efficiency_omega(p, p1)?,
        rejected_count: outcomes.iter().filter(|o| o.rejected).count(),
        pairs: outcomes,
        skipped: skipped_out,
    })
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("eta must be in (0, 1), got {eta}")))
    }
}

/// Full procedure at one screening rate α₁. α₁ = 0 is the BH procedure over
/// all pairs.
pub fn run_two_stage(
    data: &Dataset,
    alpha1: f64,
    eta: f64,
    opts: &TwoStageOptions,
) -> Result<FdrReport> {
    check_eta(eta)?;
    let alpha = alpha_from_rate(alpha1, data.p())?;
    let screen = stage1_screen(data, alpha, opts)?;
    let tests = stage2_tests(data, &screen, opts)?;
    assemble_report(data, alpha1, eta, &screen, &tests, opts.strict_cutoff)
}

/// Runs the procedure for several α₁ on the same data, fitting each marginal
/// and pairwise model once. Reports come back in the order of `alpha1s` and
/// are identical to separate [`run_two_stage`] calls.
pub fn run_two_stage_multi(
    data: &Dataset,
    alpha1s: &[f64],
    eta: f64,
    opts: &TwoStageOptions,
) -> Result<Vec<FdrReport>> {
    check_eta(eta)?;
    if alpha1s.is_empty() {
        return Ok(Vec::new());
    }
    let alphas = alpha1s
        .iter()
        .map(|&a1| alpha_from_rate(a1, data.p()))
        .collect::<Result<Vec<_>>>()?;
    let min_alpha = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let widest = stage1_screen(data, min_alpha, opts)?;
    let tests = stage2_tests(data, &widest, opts)?;
    alpha1s
        .iter()
        .zip(alphas)
        .map(|(&a1, alpha)| {
            let screen = widest.rethreshold(alpha);
            assemble_report(data, a1, eta, &screen, &tests, opts.strict_cutoff)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        // x0 drives y, x1 is noise, x2 duplicates x1
        let x0 = [0.1, -1.2, 0.8, 2.0, -0.5, 1.1, -1.9, 0.4, 0.0, -0.7];
        let x1 = [1.0, 0.3, -0.2, 0.5, -1.4, 0.9, 0.2, -0.8, 1.3, -0.1];
        let y: Vec<f64> = x0
            .iter()
            .zip(&x1)
            .enumerate()
            .map(|(i, (a, b))| 2.0 * a + 0.3 * b + if i % 2 == 0 { 0.4 } else { -0.3 })
            .collect();
        let x = Matrix::from_columns(&[x0.to_vec(), x1.to_vec(), x1.to_vec()]).unwrap();
        Dataset::new(x, y, Family::Gaussian, None).unwrap()
    }

    #[test]
    fn alpha_rate_examples() {
        assert_eq!(alpha_from_rate(0.0, 17).unwrap(), 0.0);
        assert!((alpha_from_rate(0.5, 100).unwrap() - 1.517_427_129_385_146).abs() < 1e-5);
        assert!((alpha_from_rate(0.8, 95094).unwrap() - 3.028_216_789_473_367).abs() < 1e-5);
        assert!(alpha_from_rate(-0.1, 100).is_err());
    }

    #[test]
    fn cstar_examples() {
        assert_eq!(theoretical_cstar(0.5, 2, 1, 10).unwrap(), 0.0);
        assert!((theoretical_cstar(0.05, 7, 7, 100).unwrap() - 0.913_324_796_632_072).abs() < 1e-4);
        assert!((theoretical_cstar(0.1, 10, 100, 100).unwrap() - 1.200_312_247_255_304).abs() < 1e-4);
        assert!(theoretical_cstar(0.1, 0, 100, 100).is_err());
    }

    #[test]
    fn zero_alpha_passes_everything_that_fits() {
        let s = stage1_screen(&toy(), 0.0, &TwoStageOptions::default()).unwrap();
        assert_eq!(s.passing, vec![0, 1, 2]);
        assert!(s.failed_fits.is_empty());
    }

    #[test]
    fn thresholding_by_definition() {
        let s = ScreenResult {
            t_stats: vec![Some(2.0), Some(-1.0), Some(3.0)],
            alpha: 0.0,
            passing: vec![],
            failed_fits: vec![],
        };
        assert_eq!(s.rethreshold(1.5).passing, vec![0, 2]);
    }

    #[test]
    fn constant_column_fails_stage1() {
        let data = toy();
        let mut x = data.x().clone();
        x.column_mut(1).fill(3.0);
        let d = Dataset::new(x, data.y().to_vec(), Family::Gaussian, None).unwrap();
        let s = stage1_screen(&d, 0.0, &TwoStageOptions::default()).unwrap();
        assert_eq!(
            s.failed_fits,
            vec![FailedFit {
                index: 1,
                reason: FitFailure::SingularDesign
            }]
        );
        assert!(!s.passing.contains(&1));
    }

    #[test]
    fn all_constant_columns_fail() {
        let x = Matrix::from_columns(&[vec![1.0; 6], vec![2.0; 6]]).unwrap();
        let d = Dataset::new(x, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], Family::Gaussian, None).unwrap();
        assert!(matches!(
            stage1_screen(&d, 0.0, &TwoStageOptions::default()),
            Err(Error::AllFitsFailed)
        ));
    }

    #[test]
    fn pair_enumeration() {
        assert!(eligible_pairs(&[]).is_empty());
        assert!(eligible_pairs(&[4]).is_empty());
        assert_eq!(eligible_pairs(&[0, 1, 2]), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn duplicated_columns_are_skipped() {
        let data = toy();
        let opts = TwoStageOptions::default();
        let screen = stage1_screen(&data, 0.0, &opts).unwrap();
        let tests = stage2_tests(&data, &screen, &opts).unwrap();
        assert_eq!(tests.pairs.len(), 2);
        assert_eq!(
            tests.skipped,
            vec![SkippedPair {
                j: 1,
                k: 2,
                reason: FitFailure::SingularDesign
            }]
        );
        let report = assemble_report(&data, 0.0, 0.1, &screen, &tests, false).unwrap();
        assert_eq!(report.m, 3);
        assert_eq!(report.skipped_count, 1);
    }

    #[test]
    fn omega_in_report() {
        let data = toy();
        let r = run_two_stage(&data, 0.0, 0.05, &TwoStageOptions::default()).unwrap();
        assert!((r.omega - (6.0 + 6.0) / 6.0).abs() < 1e-15);
        assert!(r.t_hat <= max_cutoff(3) && r.t_hat >= 0.0);
    }

    #[test]
    fn rejects_bad_eta() {
        let data = toy();
        assert!(run_two_stage(&data, 0.1, 0.0, &TwoStageOptions::default()).is_err());
        assert!(run_two_stage(&data, 0.1, 1.0, &TwoStageOptions::default()).is_err());
    }

    #[test]
    fn dataset_validation() {
        let x = Matrix::from_columns(&[vec![0.0; 4], vec![1.0; 4]]).unwrap();
        assert!(Dataset::new(x, vec![0.0; 4], Family::Gaussian, None).is_err());
        let x = Matrix::from_columns(&[vec![0.0; 5]]).unwrap();
        assert!(Dataset::new(x, vec![0.0; 5], Family::Gaussian, None).is_err());
        let x = Matrix::from_columns(&[vec![0.0; 5], vec![1.0; 5]]).unwrap();
        assert!(Dataset::new(x, vec![0.0, 1.0, 2.0, 0.0, 1.0], Family::Logistic, None).is_err());
    }
}
