//! Error metrics `phi(y, z)` scored on a linear predictor.

use crate::error::{AloError, Result};
use crate::family::LossFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMetric {
    /// `(y - z)^2`
    SquaredError,
    /// `|y - 1{z > 0}|`; a predictor of exactly zero is classed as 0.
    Misclassification01,
    /// `|y - mean(z)|`, the family's mean response as prediction.
    MeanAbsoluteExpRate,
    /// The family's own loss.
    NegLogLikelihood,
}

impl ErrorMetric {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorMetric::SquaredError => "squared",
            ErrorMetric::Misclassification01 => "misclass",
            ErrorMetric::MeanAbsoluteExpRate => "mae",
            ErrorMetric::NegLogLikelihood => "nll",
        }
    }

    pub fn check(&self, fam: &LossFamily) -> Result<()> {
        let ok = match self {
            ErrorMetric::Misclassification01 => matches!(fam, LossFamily::LogisticBernoulli),
            ErrorMetric::MeanAbsoluteExpRate => fam.is_poisson(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(AloError::IncompatibleMetric { metric: self.name(), family: fam.name() })
        }
    }

    #[inline]
    pub fn phi(&self, fam: &LossFamily, y: f64, z: f64) -> f64 {
        match self {
            ErrorMetric::SquaredError => (y - z) * (y - z),
            ErrorMetric::Misclassification01 => (y - if z > 0.0 { 1.0 } else { 0.0 }).abs(),
            ErrorMetric::MeanAbsoluteExpRate => (y - fam.mean(z)).abs(),
            ErrorMetric::NegLogLikelihood => fam.value(y, z),
        }
    }
}
