//! Approximate leave-one-out risk.
//!
//! With `A = X' diag(l'') X + lambda diag(r'')` and `g_i = x_i' A^{-1} x_i`,
//! the hat diagonal is `H_ii = l''_i g_i` and the leave-one-out linear
//! predictor is approximated by one Newton step from the full fit:
//!
//! `x_i'b + l'_i g_i / (1 - H_ii)`
//!
//! which is `x_i'b + (l'_i / l''_i) H_ii / (1 - H_ii)` with the division by
//! `l''_i` cancelled algebraically. Non-smooth penalties restrict `A` to the
//! active set (and drop the curvature of the l1 part).

use ndarray::{Array1, ArrayView1};

use crate::cv::loo_predictions;
use crate::data::Dataset;
use crate::datagen::{mix_seed, simulate, DesignSpec, Structure, TruthSpec, ValueLaw};
use crate::error::{AloError, Result};
use crate::family::{derivatives, LossFamily};
use crate::fit::{fit, null_lambda, FitConfig, FitResult};
use crate::linalg::{leverage, InversionPath};
use crate::metric::ErrorMetric;
use crate::penalty::Penalty;

/// Floor applied to `1 - H_ii`.
pub const CLAMP_FLOOR: f64 = 1e-8;
/// Default tolerance for the boundary set `T`.
pub const BOUNDARY_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct AloReport {
    pub lambda: f64,
    pub h_diag: Array1<f64>,
    pub alo_linpred: Array1<f64>,
    pub risk: f64,
    pub per_obs_phi: Array1<f64>,
    pub clamped_count: usize,
    pub bracket: Option<(f64, f64)>,
    pub path: InversionPath,
    /// Columns the hat matrix was built on.
    pub support: Vec<usize>,
}

/// ALO from a coefficient vector, a column set and the penalty curvature on
/// that set (indexed like `cols`, or like all columns when `cols` is `None`).
#[allow(clippy::too_many_arguments)]
pub fn alo_from_parts(
    ds: &Dataset,
    fam: &LossFamily,
    beta: &Array1<f64>,
    cols: Option<&[usize]>,
    curv: ArrayView1<f64>,
    lambda: f64,
    metric: ErrorMetric,
    path: Option<InversionPath>,
) -> Result<AloReport> {
    metric.check(fam)?;
    fam.check_responses(ds.y().as_slice().unwrap())?;
    if beta.len() != ds.p() {
        return Err(AloError::DimensionMismatch(format!(
            "beta has {} entries, X has {} columns",
            beta.len(),
            ds.p()
        )));
    }
    let width = cols.map_or(ds.p(), |c| c.len());
    if curv.len() != width {
        return Err(AloError::DimensionMismatch("curvature length differs from column set".into()));
    }
    let y = ds.y().as_slice().unwrap();
    let z = ds.x().dot(beta);
    let (d1, d2) = derivatives(fam, y, z.as_slice().unwrap(), None);
    let ell2 = Array1::from(d2);
    let (lev, used) = leverage(ds.x().view(), cols, curv, ell2.view(), path).map_err(|e| match e {
        AloError::NotPositiveDefinite { dim } => {
            AloError::SingularSystem(format!("hat-matrix system of dimension {dim} is not invertible"))
        }
        other => other,
    })?;
    let n = ds.n();
    let mut linpred = Array1::<f64>::zeros(n);
    let mut phi = Array1::<f64>::zeros(n);
    let mut clamped = 0;
    for i in 0..n {
        let mut denom = lev.one_minus_h[i];
        if denom < CLAMP_FLOOR {
            denom = CLAMP_FLOOR;
            clamped += 1;
        }
        linpred[i] = z[i] + d1[i] * lev.g[i] / denom;
        phi[i] = metric.phi(fam, y[i], linpred[i]);
    }
    let risk = phi.sum() / n as f64;
    Ok(AloReport {
        lambda,
        h_diag: lev.h,
        alo_linpred: linpred,
        risk,
        per_obs_phi: phi,
        clamped_count: clamped,
        bracket: None,
        path: used,
        support: cols.map_or_else(|| (0..ds.p()).collect(), |c| c.to_vec()),
    })
}

/// ALO for penalties twice differentiable at the fitted coefficients:
/// ridge, smoothed l1, elastic net with no l1 part, and bridge (restricted
/// to its nonzero coordinates).
pub fn alo_smooth(
    ds: &Dataset,
    fam: &LossFamily,
    pen: &Penalty,
    fitres: &FitResult,
    lambda: f64,
    metric: ErrorMetric,
) -> Result<AloReport> {
    alo_smooth_with_path(ds, fam, pen, fitres, lambda, metric, None)
}

pub fn alo_smooth_with_path(
    ds: &Dataset,
    fam: &LossFamily,
    pen: &Penalty,
    fitres: &FitResult,
    lambda: f64,
    metric: ErrorMetric,
    path: Option<InversionPath>,
) -> Result<AloReport> {
    pen.validate()?;
    let beta = &fitres.beta_hat;
    match pen {
        Penalty::Bridge { q } => {
            if path == Some(InversionPath::WoodburyN) || path == Some(InversionPath::DirectP) {
                // Explicit request on the nonzero columns.
                let (cols, curv) = bridge_parts(beta, &fitres.active_set, *q, lambda);
                return alo_from_parts(ds, fam, beta, Some(&cols), curv.view(), lambda, metric, path);
            }
            alo_bridge(ds, fam, fitres, *q, lambda, metric)
        }
        Penalty::L1 => Err(AloError::InvalidInput("use the lasso ALO for an l1 penalty".into())),
        Penalty::ElasticNet { mix } if *mix > 0.0 => {
            Err(AloError::InvalidInput("use the elastic-net ALO for a penalty with an l1 part".into()))
        }
        _ => {
            let curv: Array1<f64> = beta
                .iter()
                .map(|&b| lambda * pen.coord_d2(b).expect("smooth penalty"))
                .collect();
            if path == Some(InversionPath::ActiveSetS) {
                let all: Vec<usize> = (0..ds.p()).collect();
                alo_from_parts(ds, fam, beta, Some(&all), curv.view(), lambda, metric, path)
            } else {
                alo_from_parts(ds, fam, beta, None, curv.view(), lambda, metric, path)
            }
        }
    }
}

/// Lasso ALO: hat matrix on the active set without penalty curvature.
pub fn alo_l1(
    ds: &Dataset,
    fam: &LossFamily,
    fitres: &FitResult,
    lambda: f64,
    metric: ErrorMetric,
) -> Result<AloReport> {
    let s = &fitres.active_set;
    let curv = Array1::<f64>::zeros(s.len());
    alo_from_parts(ds, fam, &fitres.beta_hat, Some(s), curv.view(), lambda, metric, Some(InversionPath::ActiveSetS))
}

/// Elastic-net ALO in the two-parameter form
/// `lambda1 ||b||_2^2 + lambda2 ||b||_1`: curvature `2 lambda1` on the
/// active set.
pub fn alo_elastic_net(
    ds: &Dataset,
    fam: &LossFamily,
    fitres: &FitResult,
    lambda1: f64,
    lambda2: f64,
    metric: ErrorMetric,
) -> Result<AloReport> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return Err(AloError::InvalidInput("elastic-net parameters must be nonnegative".into()));
    }
    let s = &fitres.active_set;
    let curv = Array1::from_elem(s.len(), 2.0 * lambda1);
    alo_from_parts(
        ds,
        fam,
        &fitres.beta_hat,
        Some(s),
        curv.view(),
        fitres.lambda,
        metric,
        Some(InversionPath::ActiveSetS),
    )
}

fn bridge_parts(beta: &Array1<f64>, active: &[usize], q: f64, lambda: f64) -> (Vec<usize>, Array1<f64>) {
    let cols: Vec<usize> = active.iter().copied().filter(|&j| beta[j] != 0.0).collect();
    let curv = cols
        .iter()
        .map(|&j| lambda * q * (q - 1.0) * beta[j].abs().powf(q - 2.0))
        .collect();
    (cols, curv)
}

/// Bridge ALO on the nonzero coordinates with curvature
/// `lambda q (q-1) |b_j|^(q-2)`.
pub fn alo_bridge(
    ds: &Dataset,
    fam: &LossFamily,
    fitres: &FitResult,
    q: f64,
    lambda: f64,
    metric: ErrorMetric,
) -> Result<AloReport> {
    Penalty::Bridge { q }.validate()?;
    let (cols, curv) = bridge_parts(&fitres.beta_hat, &fitres.active_set, q, lambda);
    alo_from_parts(ds, fam, &fitres.beta_hat, Some(&cols), curv.view(), lambda, metric, Some(InversionPath::ActiveSetS))
}

/// Lower and upper ALO reports for the lasso: the hat matrix on the active
/// set `S`, and on `S` plus the zero coordinates whose subgradient sits on
/// the boundary (`|g_j| >= 1 - boundary_tol`).
pub fn alo_l1_bracket(
    ds: &Dataset,
    fam: &LossFamily,
    fitres: &FitResult,
    lambda: f64,
    metric: ErrorMetric,
    boundary_tol: f64,
) -> Result<(AloReport, AloReport)> {
    let g = fitres.subgradient_hat.as_ref().ok_or_else(|| {
        AloError::InvalidInput("the bracket needs a fit that carries its subgradient".into())
    })?;
    if !(0.0..1.0).contains(&boundary_tol) {
        return Err(AloError::InvalidInput(format!("boundary tolerance must lie in [0,1), got {boundary_tol}")));
    }
    let s = &fitres.active_set;
    let mut in_s = vec![false; ds.p()];
    for &j in s {
        in_s[j] = true;
    }
    let t: Vec<usize> = (0..ds.p()).filter(|&j| !in_s[j] && g[j].abs() >= 1.0 - boundary_tol).collect();
    let mut low = alo_l1(ds, fam, fitres, lambda, metric)?;
    let mut high = if t.is_empty() {
        low.clone()
    } else {
        let mut st: Vec<usize> = s.iter().copied().chain(t.iter().copied()).collect();
        st.sort_unstable();
        let curv = Array1::<f64>::zeros(st.len());
        alo_from_parts(ds, fam, &fitres.beta_hat, Some(&st), curv.view(), lambda, metric, Some(InversionPath::ActiveSetS))?
    };
    let bracket = Some((low.risk, high.risk));
    low.bracket = bracket;
    high.bracket = bracket;
    Ok((low, high))
}

/// Pick the ALO formula that matches the penalty.
pub fn alo_auto(
    ds: &Dataset,
    fam: &LossFamily,
    pen: &Penalty,
    fitres: &FitResult,
    lambda: f64,
    metric: ErrorMetric,
) -> Result<AloReport> {
    match *pen {
        Penalty::L1 => alo_l1(ds, fam, fitres, lambda, metric),
        Penalty::ElasticNet { mix } if mix > 0.0 => {
            let (l1, l2) = Penalty::elastic_net_lambdas(lambda, mix);
            alo_elastic_net(ds, fam, fitres, l1, l2, metric)
        }
        Penalty::Bridge { q } => alo_bridge(ds, fam, fitres, q, lambda, metric),
        _ => alo_smooth(ds, fam, pen, fitres, lambda, metric),
    }
}

/// Simulation settings for the convergence diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticSetup {
    pub structure: Structure,
    /// `lambda` as a fraction of the lasso null threshold `||X'l'(0)||_inf`.
    pub lambda_frac: f64,
    /// Nonzeros in the truth as a fraction of `n`.
    pub k_frac: f64,
    pub sigma: f64,
}

impl Default for DiagnosticSetup {
    fn default() -> Self {
        DiagnosticSetup { structure: Structure::Iid, lambda_frac: 0.1, k_frac: 0.1, sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub n: usize,
    pub p: usize,
    /// Mean over replications of `max_i |x_i'b_{/i} - alo_linpred_i|`.
    pub mean_max_gap: f64,
    pub worst_max_gap: f64,
    pub reps: usize,
}

/// Empirical `max_i |x_i'b_{/i} - ALO_i|` on simulated data for each size.
pub fn alo_convergence_diagnostic(
    fam: LossFamily,
    pen: Penalty,
    sizes: &[(usize, usize)],
    reps: usize,
    seed: u64,
    setup: &DiagnosticSetup,
) -> Result<Vec<DiagnosticRow>> {
    if reps == 0 && !sizes.is_empty() {
        return Err(AloError::InvalidInput("at least one replication is needed".into()));
    }
    let cfg = FitConfig::default();
    let mut rows = Vec::with_capacity(sizes.len());
    for &(n, p) in sizes {
        let mut gaps = Vec::with_capacity(reps);
        for r in 0..reps {
            let s = mix_seed(&[seed, n as u64, p as u64, r as u64]);
            let k = ((setup.k_frac * n as f64).round() as usize).clamp(1, p);
            let sim = simulate(
                &fam,
                &DesignSpec::new(n, p, setup.structure),
                &TruthSpec { k, value_law: ValueLaw::Laplace01, seed: s },
                setup.sigma,
                s,
            )?;
            let ds = Dataset::new(sim.x, sim.y)?;
            let lambda = setup.lambda_frac * null_lambda(&ds, &fam);
            let full = fit(&ds, fam, pen, lambda, &cfg, None)?;
            let report = alo_auto(&ds, &fam, &pen, &full, lambda, ErrorMetric::NegLogLikelihood)?;
            let (lo, _) = loo_predictions(&ds, fam, pen, lambda, &cfg, &full.beta_hat)?;
            let gap = lo
                .iter()
                .zip(report.alo_linpred.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            gaps.push(gap);
        }
        rows.push(DiagnosticRow {
            n,
            p,
            mean_max_gap: gaps.iter().sum::<f64>() / reps as f64,
            worst_max_gap: gaps.iter().copied().fold(0.0, f64::max),
            reps,
        });
    }
    Ok(rows)
}
