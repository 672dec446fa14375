//! Approximate leave-one-out (ALO) risk estimation for regularized
//! generalized linear models, with exact leave-one-out and K-fold
//! cross-validation as references and a synthetic-data generator.

pub mod alo;
pub mod cv;
pub mod data;
pub mod datagen;
pub mod error;
pub mod family;
pub mod fit;
pub mod linalg;
pub mod metric;
pub mod penalty;

pub use alo::{
    alo_auto, alo_bridge, alo_convergence_diagnostic, alo_elastic_net, alo_from_parts, alo_l1,
    alo_l1_bracket, alo_smooth, alo_smooth_with_path, AloReport, DiagnosticRow, DiagnosticSetup,
};
pub use cv::{fold_partition, kfold, kfold_from, lo_exact, lo_exact_from, loo_predictions, CvReport};
pub use data::Dataset;
pub use datagen::{
    gen_beta, gen_design, gen_response, oracle_linear_risk, simulate, Covariance, DesignSpec,
    Simulation, Structure, TruthSpec, ValueLaw,
};
pub use error::{AloError, Result};
pub use family::LossFamily;
pub use fit::{
    fit, fit_leave_one_out, fit_path, fit_weighted, lambda_grid, null_lambda, FitConfig, FitResult,
};
pub use linalg::{InversionPath, SpdFactor};
pub use metric::ErrorMetric;
pub use penalty::Penalty;
