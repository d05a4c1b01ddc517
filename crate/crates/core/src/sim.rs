//! Seeded simulation of the interaction-testing experiments.
//!
//! One global truth is drawn per dataset: a sparse vector of main effects over
//! {0, b}, interactions over {0, b} that respect the hierarchy (an interaction
//! is only possible when both main effects are b), and, for the misspecified
//! design, extra terms b₄·x_l + b₅·x_u·x_v attached to each true interaction.
//! The response comes from the aggregated linear predictor and every pair is
//! then analysed with its own working model.
//!
//! Randomness: xoshiro256++ seeded through SplitMix64 (`seed_from_u64`), with
//! the truth, design and response drawn from three non-overlapping streams
//! obtained by `jump()`. Normal variates use the basic Box-Muller transform,
//! both outputs of each pair consumed in order.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::Family;
use crate::matrix::Matrix;
use crate::metrics::{empirical_fdp, empirical_power, summarize, Pair, ReplicateMetrics, Summary};
use crate::two_stage::{run_two_stage_multi, Dataset, TwoStageOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Covariance {
    Identity,
    /// Σ_jk = ρ^|j−k|.
    Ar1 { rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub family: Family,
    pub misspecified: bool,
    pub covariance: Covariance,
    /// Signal size shared by every non-zero coefficient.
    pub b: f64,
    /// Intercept of the generating model.
    pub beta0: f64,
    pub seed: u64,
    /// Probability that a main-effect candidate receives b.
    pub main_effect_prob: f64,
    /// Probability that a hierarchy-eligible pair receives an interaction.
    pub interaction_prob: f64,
    /// Probability that each misspecification coefficient is b.
    pub extra_prob: f64,
    /// Number of main-effect candidates; `None` lets every variable be a candidate.
    pub active_cap: Option<usize>,
    pub noise_sd: f64,
}

impl SimConfig {
    /// Defaults: intercept −1 (linear) / −2 (logistic), identity covariance
    /// for the correctly specified design, AR(1) with ρ = 0.5 when
    /// misspecified, and ⌈√p⌉ main-effect candidates.
    pub fn new(family: Family, n: usize, p: usize, b: f64, misspecified: bool, seed: u64) -> Self {
        Self {
            n,
            p,
            family,
            misspecified,
            covariance: if misspecified {
                Covariance::Ar1 { rho: 0.5 }
            } else {
                Covariance::Identity
            },
            b,
            beta0: match family {
                Family::Gaussian => -1.0,
                Family::Logistic => -2.0,
            },
            seed,
            main_effect_prob: 0.5,
            interaction_prob: 0.75,
            extra_prob: 0.5,
            active_cap: Some(default_active_cap(p)),
            noise_sd: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 5 {
            return bad(format!("n must be at least 5, got {}", self.n));
        }
        if self.p < 2 {
            return bad(format!("p must be at least 2, got {}", self.p));
        }
        if self.misspecified && self.p < 3 {
            return bad("misspecified design needs p >= 3".into());
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return bad(format!("b must be finite and >= 0, got {}", self.b));
        }
        for (name, v) in [
            ("main_effect_prob", self.main_effect_prob),
            ("interaction_prob", self.interaction_prob),
            ("extra_prob", self.extra_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if let Covariance::Ar1 { rho } = self.covariance {
            if !(rho.abs() < 1.0) {
                return bad(format!("AR(1) rho must satisfy |rho| < 1, got {rho}"));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) || !self.beta0.is_finite() {
            return bad("noise_sd and beta0 must be finite, noise_sd >= 0".into());
        }
        Ok(())
    }

    fn candidates(&self) -> usize {
        self.active_cap.map_or(self.p, |c| c.min(self.p))
    }
}

pub fn default_active_cap(p: usize) -> usize {
    (p as f64).sqrt().ceil() as usize
}

/// Misspecification terms attached to one true interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraTerms {
    pub l: usize,
    pub u: usize,
    pub v: usize,
    pub beta4: f64,
    pub beta5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub beta0: f64,
    pub beta1: Vec<f64>,
    /// Non-zero interaction coefficients only.
    pub beta3: BTreeMap<Pair, f64>,
    pub extra: BTreeMap<Pair, ExtraTerms>,
    pub h1_pairs: BTreeSet<Pair>,
    /// Main-effect candidates drawn before the {0, b} assignment.
    pub candidates: Vec<usize>,
}

/// Stream indices for the three generators.
const TRUTH_STREAM: usize = 0;
const DESIGN_STREAM: usize = 1;
const RESPONSE_STREAM: usize = 2;

fn stream(seed: u64, index: usize) -> Xoshiro256PlusPlus {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for _ in 0..index {
        rng.jump();
    }
    rng
}

/// Box-Muller standard normal generator.
pub struct NormalSampler<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> NormalSampler<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare = Some(radius * angle.sin());
        radius * angle.cos()
    }

    pub fn rng(&mut self) -> &mut R {
        &mut self.rng
    }
}

/// n×p covariate matrix with i.i.d. N(0, Σ) rows.
pub fn gen_design(config: &SimConfig) -> Matrix {
    let (n, p) = (config.n, config.p);
    let mut normals = NormalSampler::new(stream(config.seed, DESIGN_STREAM));
    let mut x = Matrix::zeros(n, p);
    for i in 0..n {
        match config.covariance {
            Covariance::Identity => {
                for j in 0..p {
                    x.set(i, j, normals.next());
                }
            }
            Covariance::Ar1 { rho } => {
                let innov = (1.0 - rho * rho).sqrt();
                let mut prev = normals.next();
                x.set(i, 0, prev);
                for j in 1..p {
                    prev = rho * prev + innov * normals.next();
                    x.set(i, j, prev);
                }
            }
        }
    }
    x
}

/// Draws main effects, interactions and misspecification terms.
pub fn gen_truth(config: &SimConfig) -> SimTruth {
    let mut rng = stream(config.seed, TRUTH_STREAM);
    let p = config.p;
    let b = config.b;
    let mut candidates = sample(&mut rng, p, config.candidates()).into_vec();
    candidates.sort_unstable();

    let mut beta1 = vec![0.0; p];
    for &j in &candidates {
        if rng.random::<f64>() < config.main_effect_prob {
            beta1[j] = b;
        }
    }

    let mut beta3 = BTreeMap::new();
    let mut extra = BTreeMap::new();
    let active: Vec<usize> = candidates.iter().copied().filter(|&j| beta1[j] != 0.0).collect();
    for (a, &j) in active.iter().enumerate() {
        for &k in &active[a + 1..] {
            if rng.random::<f64>() < config.interaction_prob {
                beta3.insert((j, k), b);
            }
        }
    }
    if config.misspecified {
        for &(j, k) in beta3.keys() {
            let mut other = || loop {
                let idx = rng.random_range(0..p);
                if idx != j && idx != k {
                    break idx;
                }
            };
            let (l, u, v) = (other(), other(), other());
            let beta4 = if rng.random::<f64>() < config.extra_prob { b } else { 0.0 };
            let beta5 = if rng.random::<f64>() < config.extra_prob { b } else { 0.0 };
            extra.insert(
                (j, k),
                ExtraTerms {
                    l,
                    u,
                    v,
                    beta4,
                    beta5,
                },
            );
        }
    }
    let h1_pairs = beta3.keys().copied().collect();
    SimTruth {
        beta0: config.beta0,
        beta1,
        beta3,
        extra,
        h1_pairs,
        candidates,
    }
}

/// Linear predictor of the aggregated generating model for every row.
pub fn linear_predictor(x: &Matrix, truth: &SimTruth) -> Vec<f64> {
    let mut theta = vec![truth.beta0; x.nrows()];
    let mut add = |coef: f64, f: &dyn Fn(usize) -> f64| {
        if coef != 0.0 {
            for (i, t) in theta.iter_mut().enumerate() {
                *t += coef * f(i);
            }
        }
    };
    for (j, &c) in truth.beta1.iter().enumerate() {
        add(c, &|i| x.get(i, j));
    }
    for (&(j, k), &c) in &truth.beta3 {
        add(c, &|i| x.get(i, j) * x.get(i, k));
    }
    for e in truth.extra.values() {
        add(e.beta4, &|i| x.get(i, e.l));
        add(e.beta5, &|i| x.get(i, e.u) * x.get(i, e.v));
    }
    theta
}

/// Response drawn from the aggregated model.
pub fn gen_response(x: &Matrix, truth: &SimTruth, config: &SimConfig) -> Vec<f64> {
    let theta = linear_predictor(x, truth);
    let mut normals = NormalSampler::new(stream(config.seed, RESPONSE_STREAM));
    match config.family {
        Family::Gaussian => theta
            .iter()
            .map(|t| t + config.noise_sd * normals.next())
            .collect(),
        Family::Logistic => theta
            .iter()
            .map(|&t| {
                let prob = crate::glm::sigmoid(t.clamp(-35.0, 35.0));
                if normals.rng().random::<f64>() < prob {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

/// A generated dataset together with its truth.
pub struct SimulatedData {
    pub truth: SimTruth,
    pub dataset: Dataset,
}

pub fn simulate_dataset(config: &SimConfig) -> Result<SimulatedData> {
    config.validate()?;
    let truth = gen_truth(config);
    let x = gen_design(config);
    let y = gen_response(&x, &truth, config);
    let dataset = Dataset::new(x, y, config.family, None)?;
    Ok(SimulatedData { truth, dataset })
}

/// One (α₁, replicate) outcome. `metrics` is `None` when the replicate failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub alpha1: f64,
    pub b: f64,
    pub rep: usize,
    pub seed: u64,
    pub h1_count: usize,
    pub metrics: Option<ReplicateMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub alpha1: f64,
    pub b: f64,
    pub fdp: Option<Summary>,
    /// Over replicates with a non-empty H₁ only.
    pub power: Option<Summary>,
    pub omega: Option<Summary>,
    pub p1: Option<Summary>,
    pub t_hat: Option<Summary>,
    pub rejections: Option<Summary>,
    pub replicates_ok: usize,
    pub replicates_failed: usize,
    pub power_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateTable {
    pub rows: Vec<ReplicateRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl ReplicateTable {
    pub fn aggregate(&self, alpha1: f64, b: f64) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.alpha1 == alpha1 && a.b == b)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReplicateOptions {
    /// Add α₁ = 0 (the BH procedure) to the list when it is absent.
    pub include_bh: bool,
    pub strict_cutoff: bool,
    pub workers: Option<usize>,
}

fn run_one(
    config: &SimConfig,
    alpha1s: &[f64],
    eta: f64,
    rep: usize,
    opts: &TwoStageOptions,
) -> Vec<ReplicateRow> {
    let seed = config.seed.wrapping_add(rep as u64);
    let cfg = SimConfig {
        seed,
        ..config.clone()
    };
    let row = |alpha1: f64, h1_count, metrics, error| ReplicateRow {
        alpha1,
        b: config.b,
        rep,
        seed,
        h1_count,
        metrics,
        error,
    };
    let sim = match simulate_dataset(&cfg) {
        Ok(s) => s,
        Err(e) => return alpha1s.iter().map(|&a| row(a, 0, None, Some(e.to_string()))).collect(),
    };
    let h1 = &sim.truth.h1_pairs;
    match run_two_stage_multi(&sim.dataset, alpha1s, eta, opts) {
        Ok(reports) => reports
            .into_iter()
            .map(|r| {
                let rejected: BTreeSet<Pair> = r.rejected().map(|o| (o.j, o.k)).collect();
                let metrics = ReplicateMetrics {
                    fdp: empirical_fdp(&rejected, h1),
                    power: empirical_power(&rejected, h1),
                    omega: r.omega,
                    p1: r.p1,
                    t_hat: r.t_hat,
                    rejections: rejected.len(),
                };
                row(r.alpha1, h1.len(), Some(metrics), None)
            })
            .collect(),
        Err(e) => alpha1s
            .iter()
            .map(|&a| row(a, h1.len(), None, Some(e.to_string())))
            .collect(),
    }
}

fn aggregate_rows(rows: &[ReplicateRow], alpha1: f64, b: f64) -> AggregateRow {
    let sel: Vec<&ReplicateRow> = rows
        .iter()
        .filter(|r| r.alpha1 == alpha1 && r.b == b)
        .collect();
    let ok: Vec<&ReplicateMetrics> = sel.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let stat = |f: &dyn Fn(&ReplicateMetrics) -> f64| summarize(ok.iter().map(|m| f(m)));
    AggregateRow {
        alpha1,
        b,
        fdp: stat(&|m| m.fdp),
        power: summarize(ok.iter().filter_map(|m| m.power)),
        omega: stat(&|m| m.omega),
        p1: stat(&|m| m.p1 as f64),
        t_hat: stat(&|m| m.t_hat),
        rejections: stat(&|m| m.rejections as f64),
        replicates_ok: ok.len(),
        replicates_failed: sel.len() - ok.len(),
        power_excluded: ok.iter().filter(|m| m.power.is_none()).count(),
    }
}

/// Runs `reps` replicates of `config` (replicate r uses seed `config.seed + r`)
/// and evaluates every α₁ on each generated dataset.
///
/// Rows are ordered by α₁ (in list order) and then replicate, regardless of
/// how many workers execute the replicates.
pub fn run_replicates(
    config: &SimConfig,
    alpha1s: &[f64],
    eta: f64,
    reps: usize,
    opts: &ReplicateOptions,
) -> Result<ReplicateTable> {
    run_replicates_over(config, &[config.b], alpha1s, eta, reps, opts)
}

/// [`run_replicates`] for several signal sizes; rows ordered by b, α₁, replicate.
pub fn run_replicates_over(
    config: &SimConfig,
    bs: &[f64],
    alpha1s: &[f64],
    eta: f64,
    reps: usize,
    opts: &ReplicateOptions,
) -> Result<ReplicateTable> {
    config.validate()?;
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Config(format!("eta must be in (0, 1), got {eta}")));
    }
    if let Some(a) = alpha1s.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::Config(format!("alpha1 values must be finite and >= 0, got {a}")));
    }
    let mut alphas = alpha1s.to_vec();
    if opts.include_bh && !alphas.contains(&0.0) {
        alphas.insert(0, 0.0);
    }
    let two_stage = TwoStageOptions {
        strict_cutoff: opts.strict_cutoff,
        ..TwoStageOptions::default()
    };
    let configs: Vec<SimConfig> = bs
        .iter()
        .map(|&b| SimConfig {
            b,
            ..config.clone()
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|ci| (0..reps).map(move |r| (ci, r)))
        .collect();
    let work = || -> Vec<Vec<ReplicateRow>> {
        jobs.par_iter()
            .map(|&(ci, r)| run_one(&configs[ci], &alphas, eta, r, &two_stage))
            .collect()
    };
    let per_job = match opts.workers {
        None => work(),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?
            .install(work),
    };

    let mut rows = Vec::with_capacity(jobs.len() * alphas.len());
    let mut aggregates = Vec::new();
    for (ci, c) in configs.iter().enumerate() {
        let start = rows.len();
        for (ai, _) in alphas.iter().enumerate() {
            for (job, out) in jobs.iter().zip(&per_job) {
                if job.0 == ci {
                    rows.push(out[ai].clone());
                }
            }
        }
        for &a in &alphas {
            aggregates.push(aggregate_rows(&rows[start..], a, c.b));
        }
    }
    Ok(ReplicateTable { rows, aggregates })
}
