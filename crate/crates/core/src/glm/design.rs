use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Column index of the interaction coefficient in a stage-2 design.
pub const INTERACTION_INDEX: usize = 3;
/// Column index of the slope in a stage-1 design.
pub const MARGINAL_INDEX: usize = 1;

/// Dense n×d working-model design, stored row-major for the fitting loops.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    /// Row-major construction from finite entries. The `n > d` requirement
    /// is enforced when fitting, not here.
    pub fn new(n: usize, d: usize, values: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::Input(format!("design must be non-empty, got {n}x{d}")));
        }
        if values.len() != n * d {
            return Err(Error::Input(format!(
                "design of {n}x{d} needs {} values, got {}",
                n * d,
                values.len()
            )));
        }
        if labels.len() != d {
            return Err(Error::Input(format!("{d} columns but {} labels", labels.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite design entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self {
            n,
            d,
            values,
            labels,
        })
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear predictor row·β for every observation.
    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }

    /// Returns a copy with column `j` multiplied by `c`.
    pub fn scale_column(&self, j: usize, c: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            out.values[i * self.d + j] *= c;
        }
        out
    }
}

/// Stage-1 marginal design with columns (1, x).
pub fn build_stage1_design(x: &[f64]) -> Result<DesignMatrix> {
    build_stage1_design_adjusted(x, None)
}

/// Stage-1 design (1, x, adjust...), used when adjustment covariates are
/// requested in the marginal screen as well.
pub fn build_stage1_design_adjusted(x: &[f64], adjust: Option<&Matrix>) -> Result<DesignMatrix> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Input(format!("stage-1 design needs n >= 2, got {n}")));
    }
    let extra = check_adjust(n, adjust)?;
    let d = 2 + extra;
    let mut values = Vec::with_capacity(n * d);
    for (i, &xi) in x.iter().enumerate() {
        values.push(1.0);
        values.push(xi);
        push_adjust(&mut values, adjust, i);
    }
    let mut labels = vec!["(intercept)".to_string(), "x".to_string()];
    labels.extend((0..extra).map(|q| format!("adjust{q}")));
    DesignMatrix::new(n, d, values, labels)
}

/// Stage-2 design with columns (1, x_j, x_k, x_j·x_k, adjust...).
///
/// The interaction coefficient is always at [`INTERACTION_INDEX`].
pub fn build_stage2_design(
    x_j: &[f64],
    x_k: &[f64],
    adjust: Option<&Matrix>,
) -> Result<DesignMatrix> {
    let n = x_j.len();
    if x_k.len() != n {
        return Err(Error::Input(format!(
            "stage-2 columns differ in length ({n} vs {})",
            x_k.len()
        )));
    }
    let extra = check_adjust(n, adjust)?;
    let d = 4 + extra;
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        values.extend_from_slice(&[1.0, x_j[i], x_k[i], x_j[i] * x_k[i]]);
        push_adjust(&mut values, adjust, i);
    }
    let mut labels = vec![
        "(intercept)".to_string(),
        "x_j".to_string(),
        "x_k".to_string(),
        "x_j:x_k".to_string(),
    ];
    labels.extend((0..extra).map(|q| format!("adjust{q}")));
    DesignMatrix::new(n, d, values, labels)
}

fn check_adjust(n: usize, adjust: Option<&Matrix>) -> Result<usize> {
    match adjust {
        None => Ok(0),
        Some(a) if a.nrows() == n => Ok(a.ncols()),
        Some(a) => Err(Error::Input(format!(
            "adjustment matrix has {} rows, expected {n}",
            a.nrows()
        ))),
    }
}

#[inline]
fn push_adjust(values: &mut Vec<f64>, adjust: Option<&Matrix>, row: usize) {
    if let Some(a) = adjust {
        values.extend((0..a.ncols()).map(|q| a.get(row, q)));
    }
}
