//! Two-stage pairwise interaction testing with false discovery rate control
//! for (possibly misspecified) generalized linear models.
//!
//! Stage 1 screens every variable with a marginal Wald test; stage 2 tests the
//! interaction of every pair whose members both survived, and a data-dependent
//! cutoff on the stage-2 statistics controls the FDR. Setting the screening
//! threshold to zero recovers the Benjamini-Hochberg procedure over all pairs.

pub mod error;
pub mod glm;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod normal;
pub mod sim;
pub mod two_stage;

pub use error::{Error, FitFailure, Result};
pub use glm::Family;
pub use matrix::Matrix;
pub use two_stage::{run_two_stage, Dataset, FdrReport, TwoStageOptions};
