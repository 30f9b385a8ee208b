//! Closed-form Gaussian results behind label-driven distillation, and a
//! randomized checker for the LKD-versus-MTKD inequalities.
//!
//! Each class of each teacher is modelled as a 1-D Gaussian. Weighting
//! teachers by `e^{τ}` (τ = per-class accuracy) moves the optimal student's
//! variance and mean toward the more accurate teachers; with uniform weights
//! (MTKD) the student gets plain averages.

mod ensemble;
mod gaussian;

pub use ensemble::{
    check_theorems, check_theorems_with, ensemble_gaps, random_ensemble, EnsembleOptions, GaussianClassModel, OrderingMode,
    SignMode, TeacherEnsemble, TheoremReport,
};
pub use gaussian::{
    accuracy_variance_bound, dirichlet_covariance, gaussian_kl, lkd_optimal_student, mtkd_optimal_student,
    weighted_optimal_student,
};
