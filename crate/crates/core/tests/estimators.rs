//! Fits, ALO reports and cross-validation checked against independent
//! oracles: closed forms, physically row-deleted refits and explicit
//! inverses.

mod common;

use alo_core::linalg::gather_columns;
use alo_core::*;
use common::{gauss_jordan_inverse, max_abs_diff, sim};
use ndarray::{array, Array1, Array2};

const GAUSS: LossFamily = LossFamily::GaussianHalfSquared;

fn cfg() -> FitConfig {
    FitConfig::default()
}

/// Exact leave-one-out linear predictors from cold fits on row-deleted copies.
fn deleted_row_predictions(ds: &Dataset, fam: LossFamily, pen: Penalty, lambda: f64) -> Array1<f64> {
    (0..ds.n())
        .map(|i| {
            let f = fit(&ds.without_row(i).unwrap(), fam, pen, lambda, &cfg(), None).unwrap();
            assert!(f.converged);
            ds.x().row(i).dot(&f.beta_hat)
        })
        .collect()
}

#[test]
fn zero_penalty_gaussian_is_least_squares() {
    let x = array![[1.0, 0.5], [2.0, -1.0], [0.0, 1.5], [1.0, 1.0], [-1.0, 2.0]];
    let y = array![1.0, 2.0, -0.5, 0.3, 1.1];
    let ds = Dataset::new(x.clone(), y.clone()).unwrap();
    let f = fit(&ds, GAUSS, Penalty::Ridge, 0.0, &cfg(), None).unwrap();
    let ols = gauss_jordan_inverse(&x.t().dot(&x)).dot(&x.t().dot(&y));
    assert!(max_abs_diff(&f.beta_hat, &ols) <= 1e-7, "{} vs {}", f.beta_hat, ols);
}

#[test]
fn leave_one_out_two_points() {
    let ds = Dataset::new(array![[2.0], [4.0]], array![1.0, 3.0]).unwrap();
    let full = fit(&ds, GAUSS, Penalty::Ridge, 0.0, &cfg(), None).unwrap();
    let f = fit_leave_one_out(&ds, GAUSS, Penalty::Ridge, 0.0, &cfg(), 0, &full.beta_hat).unwrap();
    assert!((f.beta_hat[0] - 0.75).abs() <= 1e-9);
}

#[test]
fn leave_one_out_three_points_by_hand() {
    let xs = [1.0, 2.0, -1.5];
    let ys = [0.5, 1.0, 2.0];
    let ds = Dataset::new(Array2::from_shape_vec((3, 1), xs.to_vec()).unwrap(), Array1::from(ys.to_vec())).unwrap();
    let rep = lo_exact(&ds, GAUSS, Penalty::Ridge, 0.0, &cfg(), ErrorMetric::SquaredError).unwrap();
    let mut hand = 0.0;
    for i in 0..3 {
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for j in (0..3).filter(|&j| j != i) {
            sxy += xs[j] * ys[j];
            sxx += xs[j] * xs[j];
        }
        hand += (ys[i] - xs[i] * sxy / sxx).powi(2) / 3.0;
    }
    assert!((rep.estimate - hand).abs() <= 1e-9, "{} vs {hand}", rep.estimate);
}

#[test]
fn leave_one_out_equals_row_deleted_fit() {
    let fam = LossFamily::LogisticBernoulli;
    let (ds, _) = sim(fam, 40, 10, 4, Structure::Iid, 3);
    let lam = 0.2 * null_lambda(&ds, &fam);
    let full = fit(&ds, fam, Penalty::L1, lam, &cfg(), None).unwrap();
    for i in [0, 7, 39] {
        let a = fit_leave_one_out(&ds, fam, Penalty::L1, lam, &cfg(), i, &full.beta_hat).unwrap();
        let b = fit(&ds.without_row(i).unwrap(), fam, Penalty::L1, lam, &cfg(), None).unwrap();
        assert!(max_abs_diff(&a.beta_hat, &b.beta_hat) <= 1e-6, "row {i}");
    }
}

#[test]
fn path_starts_at_zero_and_matches_cold_starts() {
    let fam = LossFamily::LogisticBernoulli;
    let (ds, _) = sim(fam, 100, 20, 5, Structure::Toeplitz(0.5), 8);
    let top = 1.01 * null_lambda(&ds, &fam);
    let lambdas = lambda_grid(0.05 * top, top, 10, true).unwrap();
    let warm = fit_path(&ds, fam, Penalty::L1, &lambdas, &cfg()).unwrap();
    let cold = fit_path(&ds, fam, Penalty::L1, &lambdas, &FitConfig { path_warm_start: false, ..cfg() }).unwrap();
    let first = warm[0].as_ref().unwrap();
    assert!(first.beta_hat.iter().all(|&b| b == 0.0));
    for (w, c) in warm.iter().zip(&cold) {
        let (w, c) = (w.as_ref().unwrap(), c.as_ref().unwrap());
        assert!(max_abs_diff(&w.beta_hat, &c.beta_hat) <= 1e-7, "lambda {}", w.lambda);
    }
}

#[test]
fn thirty_point_grid_gives_thirty_fits() {
    let (ds, _) = sim(GAUSS, 60, 30, 6, Structure::Spiked(0.5), 2);
    let lambdas = lambda_grid(1.0, 100.0, 30, true).unwrap();
    let path = fit_path(&ds, GAUSS, Penalty::L1, &lambdas, &cfg()).unwrap();
    assert_eq!(path.len(), 30);
    assert!(path.iter().all(|r| r.as_ref().is_ok_and(|f| f.converged)));
}

#[test]
fn ridge_on_identity_design() {
    // Removing row i leaves coordinate i without data, so the held-out
    // prediction is exactly zero.
    let y = array![1.5, -2.0, 0.25, 3.0];
    let ds = Dataset::new(Array2::eye(4), y.clone()).unwrap();
    let lam = 0.7;
    let f = fit(&ds, GAUSS, Penalty::Ridge, lam, &cfg(), None).unwrap();
    let rep = alo_smooth(&ds, &GAUSS, &Penalty::Ridge, &f, lam, ErrorMetric::SquaredError).unwrap();
    for i in 0..4 {
        assert!((rep.h_diag[i] - 1.0 / (1.0 + 2.0 * lam)).abs() <= 1e-12);
        assert!(rep.alo_linpred[i].abs() <= 1e-10);
    }
    let mean_sq = y.mapv(|v| v * v).mean().unwrap();
    assert!((rep.risk - mean_sq).abs() <= 1e-9);
}

#[test]
fn ridge_large_lambda_limit() {
    let (ds, _) = sim(GAUSS, 30, 10, 3, Structure::Iid, 4);
    let f = fit(&ds, GAUSS, Penalty::Ridge, 1e12, &cfg(), None).unwrap();
    let rep = alo_smooth(&ds, &GAUSS, &Penalty::Ridge, &f, 1e12, ErrorMetric::SquaredError).unwrap();
    let baseline = ds.y().mapv(|v| v * v).mean().unwrap();
    assert!((rep.risk - baseline).abs() <= 1e-6 * baseline);
    assert!(rep.h_diag.iter().all(|&h| h < 1e-9));
}

#[test]
fn quadratic_problems_are_exact_on_both_paths() {
    for (n, p, seed) in [(30, 50, 1), (50, 12, 2)] {
        let (ds, _) = sim(GAUSS, n, p, 3, Structure::Toeplitz(0.7), seed);
        let lam = 0.8;
        let f = fit(&ds, GAUSS, Penalty::Ridge, lam, &cfg(), None).unwrap();
        let rep = alo_smooth(&ds, &GAUSS, &Penalty::Ridge, &f, lam, ErrorMetric::SquaredError).unwrap();
        let lo = deleted_row_predictions(&ds, GAUSS, Penalty::Ridge, lam);
        for i in 0..n {
            assert!((rep.alo_linpred[i] - lo[i]).abs() <= 1e-8 * (1.0 + lo[i].abs()), "n={n} i={i}");
        }
    }
}

#[test]
fn lasso_above_threshold_reports_training_risk() {
    let (ds, _) = sim(GAUSS, 40, 15, 3, Structure::Iid, 6);
    let lam = 1.5 * null_lambda(&ds, &GAUSS);
    let f = fit(&ds, GAUSS, Penalty::L1, lam, &cfg(), None).unwrap();
    assert!(f.active_set.is_empty());
    let rep = alo_l1(&ds, &GAUSS, &f, lam, ErrorMetric::SquaredError).unwrap();
    let baseline = ds.y().mapv(|v| v * v).mean().unwrap();
    assert!((rep.risk - baseline).abs() <= 1e-12 * baseline);
}

#[test]
fn gaussian_lasso_shortcut_and_projector() {
    let (ds, _) = sim(GAUSS, 100, 40, 5, Structure::Iid, 11);
    let lam = 0.3 * null_lambda(&ds, &GAUSS);
    let f = fit(&ds, GAUSS, Penalty::L1, lam, &cfg(), None).unwrap();
    let rep = alo_l1(&ds, &GAUSS, &f, lam, ErrorMetric::SquaredError).unwrap();
    let resid = ds.y() - &ds.x().dot(&f.beta_hat);
    let shortcut: f64 =
        resid.iter().zip(&rep.h_diag).map(|(r, h)| (r / (1.0 - h)).powi(2)).sum::<f64>() / ds.n() as f64;
    assert!((rep.risk - shortcut).abs() <= 1e-12 * shortcut);

    let xs = gather_columns(ds.x().view(), &f.active_set);
    let proj = xs.dot(&gauss_jordan_inverse(&xs.t().dot(&xs))).dot(&xs.t());
    let diag: Array1<f64> = proj.diag().to_owned();
    assert!(max_abs_diff(&diag, &rep.h_diag) <= 1e-10);
    assert!((rep.h_diag.sum() - f.active_set.len() as f64).abs() <= 1e-8);

    let lo = lo_exact(&ds, GAUSS, Penalty::L1, lam, &cfg(), ErrorMetric::SquaredError).unwrap();
    assert!((rep.risk - lo.estimate).abs() <= 0.05 * lo.estimate, "{} vs {}", rep.risk, lo.estimate);
}

#[test]
fn elastic_net_reduces_to_ridge_and_lasso() {
    let (ds, _) = sim(GAUSS, 60, 25, 5, Structure::Iid, 12);
    let lam = 2.0;
    let ridge = fit(&ds, GAUSS, Penalty::Ridge, lam, &cfg(), None).unwrap();
    let a = alo_smooth(&ds, &GAUSS, &Penalty::Ridge, &ridge, lam, ErrorMetric::SquaredError).unwrap();
    let b = alo_elastic_net(&ds, &GAUSS, &ridge, lam, 0.0, ErrorMetric::SquaredError).unwrap();
    assert!(max_abs_diff(&a.alo_linpred, &b.alo_linpred) <= 1e-10);
    assert!((a.risk - b.risk).abs() <= 1e-10);

    let lam = 0.3 * null_lambda(&ds, &GAUSS);
    let lasso = fit(&ds, GAUSS, Penalty::L1, lam, &cfg(), None).unwrap();
    let a = alo_l1(&ds, &GAUSS, &lasso, lam, ErrorMetric::SquaredError).unwrap();
    let b = alo_elastic_net(&ds, &GAUSS, &lasso, 0.0, lam, ErrorMetric::SquaredError).unwrap();
    assert!((a.risk - b.risk).abs() <= 1e-10);
}

#[test]
fn elastic_net_and_bridge_close_to_leave_one_out() {
    let (ds, _) = sim(GAUSS, 100, 20, 5, Structure::Toeplitz(0.5), 13);
    let pen = Penalty::ElasticNet { mix: 0.5 };
    let lam = 0.2 * null_lambda(&ds, &GAUSS);
    let f = fit(&ds, GAUSS, pen, lam, &cfg(), None).unwrap();
    let rep = alo_auto(&ds, &GAUSS, &pen, &f, lam, ErrorMetric::SquaredError).unwrap();
    let lo = lo_exact_from(&ds, GAUSS, pen, lam, &cfg(), ErrorMetric::SquaredError, &f.beta_hat).unwrap();
    assert!((rep.risk - lo.estimate).abs() <= 0.05 * lo.estimate, "{} vs {}", rep.risk, lo.estimate);

    let (ds, _) = sim(GAUSS, 100, 30, 10, Structure::Iid, 14);
    let pen = Penalty::Bridge { q: 1.5 };
    let lam = 5.0;
    let f = fit(&ds, GAUSS, pen, lam, &cfg(), None).unwrap();
    let rep = alo_bridge(&ds, &GAUSS, &f, 1.5, lam, ErrorMetric::SquaredError).unwrap();
    let lo = lo_exact_from(&ds, GAUSS, pen, lam, &cfg(), ErrorMetric::SquaredError, &f.beta_hat).unwrap();
    assert!((rep.risk - lo.estimate).abs() <= 0.05 * lo.estimate, "{} vs {}", rep.risk, lo.estimate);
}

#[test]
fn bridge_near_two_approaches_ridge() {
    let (ds, _) = sim(GAUSS, 80, 20, 20, Structure::Iid, 15);
    let lam = 3.0;
    let ridge = fit(&ds, GAUSS, Penalty::Ridge, lam, &cfg(), None).unwrap();
    let a = alo_smooth(&ds, &GAUSS, &Penalty::Ridge, &ridge, lam, ErrorMetric::SquaredError).unwrap();
    let bridge = fit(&ds, GAUSS, Penalty::Bridge { q: 1.999 }, lam, &cfg(), None).unwrap();
    let b = alo_bridge(&ds, &GAUSS, &bridge, 1.999, lam, ErrorMetric::SquaredError).unwrap();
    assert!((a.risk - b.risk).abs() <= 1e-3 * (1.0 + a.risk), "{} vs {}", a.risk, b.risk);
}

#[test]
fn bridge_at_zero_reports_training_risk() {
    let (ds, _) = sim(GAUSS, 20, 5, 2, Structure::Iid, 16);
    let f = FitResult {
        lambda: 1.0,
        beta_hat: Array1::zeros(5),
        active_set: vec![],
        subgradient_hat: None,
        objective: 0.0,
        kkt_residual: 0.0,
        iterations: 0,
        converged: true,
        trace: vec![],
    };
    let rep = alo_bridge(&ds, &GAUSS, &f, 1.5, 1.0, ErrorMetric::SquaredError).unwrap();
    assert!((rep.risk - ds.y().mapv(|v| v * v).mean().unwrap()).abs() <= 1e-12);
}

#[test]
fn bracket_collapses_without_boundary_coordinates() {
    let fam = LossFamily::LogisticBernoulli;
    let (ds, _) = sim(fam, 80, 30, 5, Structure::Iid, 17);
    let lam = 0.3 * null_lambda(&ds, &fam);
    let f = fit(&ds, fam, Penalty::L1, lam, &cfg(), None).unwrap();
    let g = f.subgradient_hat.as_ref().unwrap();
    let off_max = (0..30).filter(|j| !f.active_set.contains(j)).map(|j| g[j].abs()).fold(0.0, f64::max);
    assert!(off_max < 1.0 - 1e-4);
    let (low, high) = alo_l1_bracket(&ds, &fam, &f, lam, ErrorMetric::NegLogLikelihood, 1e-4).unwrap();
    let plain = alo_l1(&ds, &fam, &f, lam, ErrorMetric::NegLogLikelihood).unwrap();
    assert_eq!(low.h_diag, high.h_diag);
    assert_eq!(low.risk, plain.risk);
}

#[test]
fn boundary_column_widens_the_bracket() {
    // Replace an inactive column by one whose correlation with the residual
    // sits exactly at the threshold; the old solution stays optimal.
    let (ds, _) = sim(GAUSS, 60, 15, 3, Structure::Iid, 18);
    let lam = 0.4 * null_lambda(&ds, &GAUSS);
    let f = fit(&ds, GAUSS, Penalty::L1, lam, &cfg(), None).unwrap();
    let j = (0..15).find(|j| !f.active_set.contains(j)).unwrap();
    let r = ds.y() - &ds.x().dot(&f.beta_hat);
    let noise = (ds.x().column((j + 1) % 15)).to_owned() + ds.x().column((j + 2) % 15);
    let orth = &noise - &(&r * (noise.dot(&r) / r.dot(&r)));
    let col = &r * (lam / r.dot(&r)) + orth * 0.1;
    let mut x = ds.x().clone();
    x.column_mut(j).assign(&col);
    let ds2 = Dataset::new(x, ds.y().clone()).unwrap();
    let f2 = fit(&ds2, GAUSS, Penalty::L1, lam, &cfg(), Some(&f.beta_hat)).unwrap();
    assert!(f2.converged && f2.beta_hat[j] == 0.0);
    let (low, high) = alo_l1_bracket(&ds2, &GAUSS, &f2, lam, ErrorMetric::SquaredError, 1e-4).unwrap();
    assert!((high.h_diag.sum() - low.h_diag.sum() - 1.0).abs() <= 1e-8);
    for i in 0..60 {
        assert!(low.h_diag[i] <= high.h_diag[i] + 1e-10);
    }
    assert!(high.risk > low.risk);
}

#[test]
fn inversion_paths_agree() {
    let fam = LossFamily::LogisticBernoulli;
    let (ds, _) = sim(fam, 40, 70, 4, Structure::Spiked(0.3), 19);
    let pen = Penalty::SmoothedL1 { alpha: 20.0 };
    let lam = 2.0;
    let f = fit(&ds, fam, pen, lam, &cfg(), None).unwrap();
    let reports: Vec<AloReport> = [InversionPath::DirectP, InversionPath::WoodburyN, InversionPath::ActiveSetS]
        .into_iter()
        .map(|p| alo_smooth_with_path(&ds, &fam, &pen, &f, lam, ErrorMetric::NegLogLikelihood, Some(p)).unwrap())
        .collect();
    for r in &reports[1..] {
        assert!(max_abs_diff(&r.alo_linpred, &reports[0].alo_linpred) <= 1e-9);
        assert!((r.risk - reports[0].risk).abs() <= 1e-9);
    }
}

#[test]
fn kfold_with_n_folds_is_leave_one_out() {
    let fam = LossFamily::PoissonExpLink;
    let (ds, _) = sim(fam, 30, 8, 3, Structure::Iid, 20);
    let pen = Penalty::ElasticNet { mix: 0.7 };
    let lam = 0.2 * null_lambda(&ds, &fam);
    let lo = lo_exact(&ds, fam, pen, lam, &cfg(), ErrorMetric::MeanAbsoluteExpRate).unwrap();
    let kf = kfold(&ds, fam, pen, lam, &cfg(), ErrorMetric::MeanAbsoluteExpRate, 30, 9).unwrap();
    assert!((lo.estimate - kf.estimate).abs() <= 1e-12);
    assert!(max_abs_diff(&lo.predictions, &kf.predictions) <= 1e-12);
}

#[test]
fn small_partitions_are_reproducible() {
    let a = fold_partition(4, 2, 5).unwrap();
    assert_eq!(a, fold_partition(4, 2, 5).unwrap());
    assert!(a.iter().all(|f| f.len() == 2));
    assert!(fold_partition(4, 5, 5).is_err());
    assert!(fold_partition(4, 1, 5).is_err());
}

#[test]
fn incompatible_metric_is_rejected() {
    let (ds, _) = sim(GAUSS, 10, 3, 1, Structure::Iid, 21);
    let err = lo_exact(&ds, GAUSS, Penalty::Ridge, 1.0, &cfg(), ErrorMetric::Misclassification01).unwrap_err();
    assert!(matches!(err, AloError::IncompatibleMetric { .. }), "{err:?}");
}

#[test]
fn fast_refits_match_general_solver() {
    // Leave-one-out refits go through a downdated factorization; cold fits
    // on row-deleted copies are the reference.
    let cases = [
        (LossFamily::LogisticBernoulli, Penalty::L1, 0.15),
        (LossFamily::PoissonExpLink, Penalty::ElasticNet { mix: 0.5 }, 0.2),
        (LossFamily::GaussianHalfSquared, Penalty::SmoothedL1 { alpha: 30.0 }, 0.1),
    ];
    for (k, (fam, pen, frac)) in cases.into_iter().enumerate() {
        let (ds, _) = sim(fam, 50, 30, 5, Structure::Toeplitz(0.5), 30 + k as u64);
        let lam = frac * null_lambda(&ds, &fam);
        let full = fit(&ds, fam, pen, lam, &cfg(), None).unwrap();
        let (fast, unconverged) = loo_predictions(&ds, fam, pen, lam, &cfg(), &full.beta_hat).unwrap();
        assert_eq!(unconverged, 0);
        let slow = deleted_row_predictions(&ds, fam, pen, lam);
        for i in 0..ds.n() {
            assert!((fast[i] - slow[i]).abs() <= 1e-6 * (1.0 + slow[i].abs()), "{} row {i}", fam.name());
        }
    }
}
