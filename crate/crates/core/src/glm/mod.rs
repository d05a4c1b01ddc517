//! Working generalized linear models: design builders, Newton/closed-form
//! maximum likelihood, sandwich covariance and Wald statistics.

mod design;
mod family;
mod fit;

pub use design::{
    build_stage1_design, build_stage1_design_adjusted, build_stage2_design, DesignMatrix,
    INTERACTION_INDEX, MARGINAL_INDEX,
};
pub use family::Family;
pub(crate) use family::sigmoid;
pub use fit::{
    fit_glm, fit_glm_with, log_likelihood, sandwich_covariance, score, wald_statistic,
    FitOptions, GlmFit, WaldStat,
};
