use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Exponential family with canonical link, described by its cumulant b(θ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// b(θ) = θ²/2, identity link.
    Gaussian,
    /// b(θ) = log(1 + eᶿ), logit link.
    Logistic,
}

impl Family {
    /// Cumulant function b(θ).
    #[inline]
    pub fn cumulant(self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * theta * theta,
            Family::Logistic => log1p_exp(theta),
        }
    }

    /// Mean function b′(θ).
    #[inline]
    pub fn mean(self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => theta,
            Family::Logistic => sigmoid(theta),
        }
    }

    /// Variance function b″(θ).
    #[inline]
    pub fn variance(self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Logistic => {
                // e^{-|θ|} / (1 + e^{-|θ|})² stays positive far into the tails
                let e = (-theta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
        }
    }

    /// Per-observation working log-likelihood yθ − b(θ).
    #[inline]
    pub fn log_likelihood(self, y: f64, theta: f64) -> f64 {
        y * theta - self.cumulant(theta)
    }

    pub fn validate_response(self, y: &[f64]) -> Result<(), Error> {
        if let Some(bad) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("response entry {bad} is not finite")));
        }
        if self == Family::Logistic {
            if let Some(bad) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Input(format!(
                    "logistic response must be 0/1, entry {bad} is {}",
                    y[bad]
                )));
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sigmoid(theta: f64) -> f64 {
    if theta >= 0.0 {
        1.0 / (1.0 + (-theta).exp())
    } else {
        let e = theta.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn log1p_exp(theta: f64) -> f64 {
    theta.max(0.0) + (-theta.abs()).exp().ln_1p()
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Logistic => "logistic",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "linear" | "gaussian_identity" => Ok(Family::Gaussian),
            "logistic" | "binomial" | "bernoulli_logit" => Ok(Family::Logistic),
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }
}
