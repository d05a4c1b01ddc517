//! Data ingestion, configuration and report serialization for the CLI.
//!
//! CSV inputs need a header row and complete numeric data; nothing is imputed.
//! Floats are written in the shortest form that parses back to the same
//! `f64`, so every written number round-trips exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::Family;
use crate::matrix::Matrix;
use crate::sim::{default_active_cap, run_replicates_over, Covariance, ReplicateOptions, ReplicateTable, SimConfig};
use crate::two_stage::{run_two_stage, Dataset, FdrReport, TwoStageOptions};

/// A matrix read from CSV with its header labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    pub matrix: Matrix,
    pub labels: Vec<String>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::Utf8 { err, .. } => Error::Parse {
            line,
            col: Some(err.field() + 1),
            message: "invalid UTF-8".into(),
        },
        other => Error::Parse {
            line,
            col: None,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a numeric CSV with a header row. Column order is preserved; lines and
/// columns in errors are 1-based.
pub fn load_csv_matrix(path: &Path) -> Result<LabeledMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let labels: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_owned)
        .collect();
    if labels.is_empty() || labels.iter().all(String::is_empty) {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let width = labels.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() && width > 1 {
            continue;
        }
        if record.len() != width {
            return Err(Error::Parse {
                line,
                col: None,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, line, c + 1))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok(LabeledMatrix {
        matrix: Matrix::from_rows(&rows)?,
        labels,
    })
}

fn parse_cell(cell: &str, line: usize, col: usize) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            col: Some(col),
            message: format!("expected a finite number, found {cell:?}"),
        }),
    }
}

/// Reads a single-column CSV as a vector.
pub fn load_csv_vector(path: &Path) -> Result<Vec<f64>> {
    let m = load_csv_matrix(path)?;
    if m.matrix.ncols() != 1 {
        return Err(Error::Input(format!(
            "{} must have exactly one column, found {}",
            path.display(),
            m.matrix.ncols()
        )));
    }
    Ok(m.matrix.column(0).to_vec())
}

/// Dominant genotype coding: 0 → 0, 1 or 2 → 1. Positions in errors refer to
/// the CSV the matrix came from (header on line 1).
pub fn dominant_encode(g: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(g.nrows(), g.ncols());
    for j in 0..g.ncols() {
        for (i, &v) in g.column(j).iter().enumerate() {
            let coded = match v {
                v if v == 0.0 => 0.0,
                v if v == 1.0 || v == 2.0 => 1.0,
                _ => {
                    return Err(Error::Parse {
                        line: i + 2,
                        col: Some(j + 1),
                        message: format!("genotype must be 0, 1 or 2, found {v}"),
                    })
                }
            };
            out.set(i, j, coded);
        }
    }
    Ok(out)
}

/// Shortest decimal form that parses back to exactly `x`.
pub fn format_number(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv_matrix<W: Write>(out: W, m: &Matrix, labels: &[String]) -> Result<()> {
    if labels.len() != m.ncols() {
        return Err(Error::Input(format!(
            "{} labels for {} columns",
            labels.len(),
            m.ncols()
        )));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(labels).map_err(csv_error)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&v| format_number(v)))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes through a temporary sibling file and renames it into place, so a
/// failed run never leaves a truncated output behind.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut file = BufWriter::new(File::create(&tmp)?);
        write(&mut file)?;
        file.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

pub fn write_report_json<W: Write>(mut out: W, report: &FdrReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Rejected pairs sorted by |T_jk| descending, ties by (j, k).
pub fn write_rejected_csv<W: Write>(out: W, report: &FdrReport) -> Result<()> {
    let mut rejected: Vec<_> = report.rejected().collect();
    rejected.sort_by(|a, b| {
        b.t_jk
            .abs()
            .total_cmp(&a.t_jk.abs())
            .then((a.j, a.k).cmp(&(b.j, b.k)))
    });
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["j", "k", "label_j", "label_k", "T_jk"]).map_err(csv_error)?;
    for o in rejected {
        w.write_record([
            o.j.to_string(),
            o.k.to_string(),
            o.label_j.clone(),
            o.label_k.clone(),
            format_number(o.t_jk),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub const SIMULATION_COLUMNS: [&str; 13] = [
    "alpha1", "b", "rep", "fdp", "power", "omega", "p1", "t_hat", "rejections", "seed", "fdp_se",
    "power_se", "failed",
];

/// One row per (α₁, b, replicate), then one `rep = mean` row per (α₁, b).
/// Missing values (power with no true interactions, metrics of a failed
/// replicate) are empty cells.
pub fn write_simulation_csv<W: Write>(out: W, table: &ReplicateTable) -> Result<()> {
    let num = |v: Option<f64>| v.map(format_number).unwrap_or_default();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(SIMULATION_COLUMNS).map_err(csv_error)?;
    for r in &table.rows {
        let m = r.metrics.as_ref();
        w.write_record([
            format_number(r.alpha1),
            format_number(r.b),
            r.rep.to_string(),
            num(m.map(|m| m.fdp)),
            num(m.and_then(|m| m.power)),
            num(m.map(|m| m.omega)),
            m.map(|m| m.p1.to_string()).unwrap_or_default(),
            num(m.map(|m| m.t_hat)),
            m.map(|m| m.rejections.to_string()).unwrap_or_default(),
            r.seed.to_string(),
            String::new(),
            String::new(),
            u8::from(m.is_none()).to_string(),
        ])
        .map_err(csv_error)?;
    }
    for a in &table.aggregates {
        let mean = |s: Option<crate::metrics::Summary>| num(s.map(|s| s.mean));
        w.write_record([
            format_number(a.alpha1),
            format_number(a.b),
            "mean".into(),
            mean(a.fdp),
            mean(a.power),
            mean(a.omega),
            mean(a.p1),
            mean(a.t_hat),
            mean(a.rejections),
            String::new(),
            num(a.fdp.map(|s| s.se)),
            num(a.power.map(|s| s.se)),
            a.replicates_failed.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Settings for `analyze`, after merging the config file with flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub x: PathBuf,
    pub y: PathBuf,
    pub adjust: Option<PathBuf>,
    pub family: Family,
    pub alpha1: f64,
    pub eta: f64,
    pub strict_cutoff: bool,
    pub adjust_in_stage1: bool,
    pub dominant: bool,
    pub out: PathBuf,
    /// Defaults to `<out stem>_rejected.csv` next to the report.
    pub rejected_out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Partially specified analysis settings, as read from JSON or from flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub adjust: Option<PathBuf>,
    pub family: Option<Family>,
    pub alpha1: Option<f64>,
    pub eta: Option<f64>,
    pub strict_cutoff: Option<bool>,
    pub adjust_in_stage1: Option<bool>,
    pub dominant: Option<bool>,
    pub out: Option<PathBuf>,
    pub rejected_out: Option<PathBuf>,
    pub workers: Option<usize>,
}

pub fn load_json_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing required setting `{name}`")))
}

impl AnalysisSettings {
    /// Values present in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: AnalysisSettings) -> Self {
        overlay!(
            self, flags, x, y, adjust, family, alpha1, eta, strict_cutoff, adjust_in_stage1,
            dominant, out, rejected_out, workers
        );
        self
    }

    pub fn resolve(self) -> Result<AnalysisConfig> {
        let config = AnalysisConfig {
            x: required(self.x, "x")?,
            y: required(self.y, "y")?,
            adjust: self.adjust,
            family: required(self.family, "family")?,
            alpha1: required(self.alpha1, "alpha1")?,
            eta: required(self.eta, "eta")?,
            strict_cutoff: self.strict_cutoff.unwrap_or(false),
            adjust_in_stage1: self.adjust_in_stage1.unwrap_or(false),
            dominant: self.dominant.unwrap_or(false),
            out: required(self.out, "out")?,
            rejected_out: self.rejected_out,
            workers: self.workers,
        };
        if !(config.eta > 0.0 && config.eta < 1.0) {
            return Err(Error::Config(format!("eta must be in (0, 1), got {}", config.eta)));
        }
        if !(config.alpha1 >= 0.0 && config.alpha1.is_finite()) {
            return Err(Error::Config(format!("alpha1 must be >= 0, got {}", config.alpha1)));
        }
        if config.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        Ok(config)
    }
}

impl AnalysisConfig {
    pub fn rejected_path(&self) -> PathBuf {
        self.rejected_out.clone().unwrap_or_else(|| {
            let stem = self.out.file_stem().unwrap_or_default().to_string_lossy();
            self.out.with_file_name(format!("{stem}_rejected.csv"))
        })
    }
}

/// Loads the inputs named by `config` and runs the procedure.
pub fn run_analysis(config: &AnalysisConfig) -> Result<FdrReport> {
    let x = load_csv_matrix(&config.x)?;
    let matrix = if config.dominant {
        dominant_encode(&x.matrix)?
    } else {
        x.matrix
    };
    let y = load_csv_vector(&config.y)?;
    if y.len() != matrix.nrows() {
        return Err(Error::Input(format!(
            "x has {} rows but y has {}",
            matrix.nrows(),
            y.len()
        )));
    }
    let adjust = config
        .adjust
        .as_deref()
        .map(load_csv_matrix)
        .transpose()?
        .map(|a| a.matrix);
    let data = Dataset::with_labels(matrix, y, config.family, adjust, x.labels)?;
    let opts = TwoStageOptions {
        strict_cutoff: config.strict_cutoff,
        adjust_in_stage1: config.adjust_in_stage1,
        workers: config.workers,
        ..TwoStageOptions::default()
    };
    run_two_stage(&data, config.alpha1, config.eta, &opts)
}

/// Runs the analysis and writes the JSON report and the rejected-pairs CSV.
pub fn analyze(config: &AnalysisConfig) -> Result<FdrReport> {
    let report = run_analysis(config)?;
    write_atomic(&config.rejected_path(), |w| write_rejected_csv(w, &report))?;
    write_atomic(&config.out, |w| write_report_json(w, &report))?;
    Ok(report)
}

/// Settings for `simulate`, after merging the config file with flags.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub family: Family,
    pub n: usize,
    pub p: usize,
    pub b: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub eta: f64,
    pub reps: usize,
    pub seed: u64,
    pub misspecified: bool,
    pub covariance: Covariance,
    pub active_cap: Option<usize>,
    pub include_bh: bool,
    pub out: PathBuf,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovKind {
    Identity,
    Ar1,
}

/// Main-effect candidate cap: a count, or `none` to disable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ActiveCap {
    Count(usize),
    Keyword(CapKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapKeyword {
    None,
    Sqrt,
}

impl std::str::FromStr for ActiveCap {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(ActiveCap::Keyword(CapKeyword::None)),
            "sqrt" => Ok(ActiveCap::Keyword(CapKeyword::Sqrt)),
            _ => s
                .parse()
                .map(ActiveCap::Count)
                .map_err(|_| format!("expected a count, `sqrt` or `none`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub family: Option<Family>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub b: Option<Vec<f64>>,
    pub alpha1: Option<Vec<f64>>,
    pub eta: Option<f64>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub misspecified: Option<bool>,
    pub cov: Option<CovKind>,
    pub active_cap: Option<ActiveCap>,
    pub include_bh: Option<bool>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl SimulationSettings {
    pub fn overlay(mut self, flags: SimulationSettings) -> Self {
        overlay!(
            self, flags, family, n, p, b, alpha1, eta, reps, seed, misspecified, cov, active_cap,
            include_bh, out, workers
        );
        self
    }

    pub fn resolve(self) -> Result<SimulationConfig> {
        let misspecified = self.misspecified.unwrap_or(false);
        let p = required(self.p, "p")?;
        let covariance = match self.cov {
            Some(CovKind::Identity) => Covariance::Identity,
            Some(CovKind::Ar1) => Covariance::Ar1 { rho: 0.5 },
            None if misspecified => Covariance::Ar1 { rho: 0.5 },
            None => Covariance::Identity,
        };
        let active_cap = match self.active_cap {
            None | Some(ActiveCap::Keyword(CapKeyword::Sqrt)) => Some(default_active_cap(p)),
            Some(ActiveCap::Keyword(CapKeyword::None)) => None,
            Some(ActiveCap::Count(c)) => Some(c),
        };
        let config = SimulationConfig {
            family: required(self.family, "family")?,
            n: required(self.n, "n")?,
            p,
            b: required(self.b, "b")?,
            alpha1: required(self.alpha1, "alpha1")?,
            eta: required(self.eta, "eta")?,
            reps: required(self.reps, "reps")?,
            seed: required(self.seed, "seed")?,
            misspecified,
            covariance,
            active_cap,
            include_bh: self.include_bh.unwrap_or(false),
            out: required(self.out, "out")?,
            workers: self.workers,
        };
        if config.b.is_empty() || config.alpha1.is_empty() {
            return Err(Error::Config("b and alpha1 need at least one value".into()));
        }
        if config.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        config.sim_config(config.b[0]).validate()?;
        Ok(config)
    }
}

impl SimulationConfig {
    pub fn sim_config(&self, b: f64) -> SimConfig {
        SimConfig {
            covariance: self.covariance,
            active_cap: self.active_cap,
            ..SimConfig::new(self.family, self.n, self.p, b, self.misspecified, self.seed)
        }
    }

    /// `<out>.meta.json`, next to the metrics CSV.
    pub fn metadata_path(&self) -> PathBuf {
        let mut name = self.out.file_name().unwrap_or_default().to_os_string();
        name.push(".meta.json");
        self.out.with_file_name(name)
    }
}

/// Generating-model description stored next to a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationMetadata {
    pub generator: SimConfig,
    pub b: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub eta: f64,
    pub reps: usize,
    pub active_cap_rule: String,
    pub rng: String,
    pub normal_variates: String,
    pub replicate_seeds: String,
    /// Per (α₁, b): failed replicates and replicates left out of the power mean.
    pub exclusions: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub alpha1: f64,
    pub b: f64,
    pub failed: usize,
    pub power_excluded: usize,
}

pub fn simulation_metadata(config: &SimulationConfig, table: &ReplicateTable) -> SimulationMetadata {
    let cap_rule = match config.active_cap {
        Some(c) => format!(
            "{c} main-effect candidates drawn uniformly without replacement, then each set to b with probability 1/2"
        ),
        None => "every variable is a main-effect candidate, each set to b with probability 1/2".into(),
    };
    SimulationMetadata {
        generator: config.sim_config(config.b[0]),
        b: config.b.clone(),
        alpha1: table
            .aggregates
            .iter()
            .map(|a| a.alpha1)
            .fold(Vec::new(), |mut v, a| {
                if !v.contains(&a) {
                    v.push(a);
                }
                v
            }),
        eta: config.eta,
        reps: config.reps,
        active_cap_rule: cap_rule,
        rng: "xoshiro256++ seeded by SplitMix64; truth, design and response on streams 0, 1, 2 via jump()".into(),
        normal_variates: "Box-Muller".into(),
        replicate_seeds: format!("seed + replicate index, base seed {}", config.seed),
        exclusions: table
            .aggregates
            .iter()
            .map(|a| Exclusion {
                alpha1: a.alpha1,
                b: a.b,
                failed: a.replicates_failed,
                power_excluded: a.power_excluded,
            })
            .collect(),
    }
}

pub fn run_simulation(config: &SimulationConfig) -> Result<ReplicateTable> {
    let opts = ReplicateOptions {
        include_bh: config.include_bh,
        strict_cutoff: false,
        workers: config.workers,
    };
    run_replicates_over(
        &config.sim_config(config.b[0]),
        &config.b,
        &config.alpha1,
        config.eta,
        config.reps,
        &opts,
    )
}

/// Runs the simulation and writes the metrics CSV and its metadata.
pub fn simulate(config: &SimulationConfig) -> Result<ReplicateTable> {
    let table = run_simulation(config)?;
    let meta = simulation_metadata(config, &table);
    write_atomic(&config.metadata_path(), |w| {
        serde_json::to_writer_pretty(&mut *w, &meta)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    write_atomic(&config.out, |w| write_simulation_csv(w, &table))?;
    Ok(table)
}
