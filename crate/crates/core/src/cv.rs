//! Exact leave-one-out and K-fold cross-validation.
//!
//! Refits leave observations out through zero row weights on the full
//! design and start from the full-data coefficients, so a K-fold run with
//! `K = n` performs exactly the leave-one-out refits.

use std::time::Instant;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::datagen::{stream_rng, STREAM_FOLDS};
use crate::error::{AloError, Result};
use crate::family::LossFamily;
use crate::fit::{fit, fit_weighted, FitConfig, RowDeletion};
use crate::metric::ErrorMetric;
use crate::penalty::Penalty;

#[derive(Debug, Clone)]
pub struct CvReport {
    pub lambda: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// Per-observation values for leave-one-out, fold means for K-fold.
    pub per_unit: Vec<f64>,
    pub wall_time_ms: f64,
    /// Held-out linear predictor of every observation.
    pub predictions: Array1<f64>,
    pub per_obs_phi: Array1<f64>,
    /// Refits that stopped without certifying convergence.
    pub unconverged: usize,
}

impl CvReport {
    pub fn degraded(&self) -> bool {
        self.unconverged > 0
    }
}

fn mean_and_se(units: &[f64]) -> (f64, f64) {
    let m = units.len() as f64;
    let mean = units.iter().sum::<f64>() / m;
    if units.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = units.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Held-out predictions for the given folds; returns the predictions and the
/// number of refits that did not converge.
fn fold_predictions(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    cfg: &FitConfig,
    warm: &Array1<f64>,
    folds: &[Vec<usize>],
) -> Result<(Array1<f64>, usize)> {
    let n = ds.n();
    let fast = if folds.iter().any(|f| f.len() == 1) {
        RowDeletion::new(ds, fam, pen, lambda, cfg, warm)
    } else {
        None
    };
    let results: Vec<Result<(Vec<(usize, f64)>, bool)>> = folds
        .par_iter()
        .map(|fold| {
            if let (Some(rd), [i]) = (&fast, fold.as_slice()) {
                if let Some(b) = rd.refit(*i) {
                    return Ok((vec![(*i, ds.x().row(*i).dot(&b))], true));
                }
            }
            let mut w = vec![1.0; n];
            for &i in fold {
                w[i] = 0.0;
            }
            let f = fit_weighted(ds, fam, pen, lambda, cfg, Some(warm), Some(&w))?;
            let preds = fold.iter().map(|&i| (i, ds.x().row(i).dot(&f.beta_hat))).collect();
            Ok((preds, f.converged))
        })
        .collect();
    let mut out = Array1::<f64>::zeros(n);
    let mut unconverged = 0;
    for r in results {
        let (preds, ok) = r?;
        for (i, v) in preds {
            out[i] = v;
        }
        unconverged += usize::from(!ok);
    }
    Ok((out, unconverged))
}

/// `x_i' b_{/i}` for every observation.
pub fn loo_predictions(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    cfg: &FitConfig,
    warm: &Array1<f64>,
) -> Result<(Array1<f64>, usize)> {
    let folds: Vec<Vec<usize>> = (0..ds.n()).map(|i| vec![i]).collect();
    fold_predictions(ds, fam, pen, lambda, cfg, warm, &folds)
}

fn score(ds: &Dataset, fam: &LossFamily, metric: ErrorMetric, pred: &Array1<f64>) -> Array1<f64> {
    ds.y().iter().zip(pred.iter()).map(|(&y, &z)| metric.phi(fam, y, z)).collect()
}

fn check_inputs(ds: &Dataset, fam: &LossFamily, metric: ErrorMetric) -> Result<()> {
    metric.check(fam)?;
    if ds.n() < 2 {
        return Err(AloError::InvalidInput("cross-validation needs n >= 2".into()));
    }
    Ok(())
}

pub fn lo_exact(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    cfg: &FitConfig,
    metric: ErrorMetric,
) -> Result<CvReport> {
    check_inputs(ds, &fam, metric)?;
    let start = Instant::now();
    let full = fit(ds, fam, pen, lambda, cfg, None)?;
    let mut rep = lo_exact_from(ds, fam, pen, lambda, cfg, metric, &full.beta_hat)?;
    rep.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(rep)
}

/// Leave-one-out with the full-data fit supplied as warm start; the wall
/// time covers the refits only.
pub fn lo_exact_from(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    cfg: &FitConfig,
    metric: ErrorMetric,
    warm: &Array1<f64>,
) -> Result<CvReport> {
    check_inputs(ds, &fam, metric)?;
    let start = Instant::now();
    let (pred, unconverged) = loo_predictions(ds, fam, pen, lambda, cfg, warm)?;
    let phi = score(ds, &fam, metric, &pred);
    let units = phi.to_vec();
    let (_, std_error) = mean_and_se(&units);
    Ok(CvReport {
        lambda,
        estimate: phi.sum() / ds.n() as f64,
        std_error,
        per_unit: units,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        predictions: pred,
        per_obs_phi: phi,
        unconverged,
    })
}

/// Seeded shuffle, then fold `j` takes shuffled positions `j, j+K, ...`.
pub fn fold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(AloError::InvalidInput(format!("need 2 <= K <= n, got K = {k}, n = {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, STREAM_FOLDS));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, &i) in idx.iter().enumerate() {
        folds[pos % k].push(i);
    }
    Ok(folds)
}

#[allow(clippy::too_many_arguments)]
pub fn kfold(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    cfg: &FitConfig,
    metric: ErrorMetric,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    check_inputs(ds, &fam, metric)?;
    let start = Instant::now();
    let full = fit(ds, fam, pen, lambda, cfg, None)?;
    let mut rep = kfold_from(ds, fam, pen, lambda, cfg, metric, k, seed, &full.beta_hat)?;
    rep.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(rep)
}

#[allow(clippy::too_many_arguments)]
pub fn kfold_from(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    cfg: &FitConfig,
    metric: ErrorMetric,
    k: usize,
    seed: u64,
    warm: &Array1<f64>,
) -> Result<CvReport> {
    check_inputs(ds, &fam, metric)?;
    let start = Instant::now();
    let folds = fold_partition(ds.n(), k, seed)?;
    let (pred, unconverged) = fold_predictions(ds, fam, pen, lambda, cfg, warm, &folds)?;
    let phi = score(ds, &fam, metric, &pred);
    let units: Vec<f64> = folds
        .iter()
        .map(|f| f.iter().map(|&i| phi[i]).sum::<f64>() / f.len() as f64)
        .collect();
    let (_, std_error) = mean_and_se(&units);
    Ok(CvReport {
        lambda,
        estimate: phi.sum() / ds.n() as f64,
        std_error,
        per_unit: units,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        predictions: pred,
        per_obs_phi: phi,
        unconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_shapes() {
        let f = fold_partition(4, 2, 9).unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|x| x.len() == 2));
        assert_eq!(f, fold_partition(4, 2, 9).unwrap());
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(fold_partition(4, 5, 1).is_err());
        assert!(fold_partition(4, 1, 1).is_err());
    }

    #[test]
    fn standard_error() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0_f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
