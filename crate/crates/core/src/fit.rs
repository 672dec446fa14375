//! Penalized GLM solver: `argmin_b sum_i l(y_i | x_i'b) + lambda r(b)`.
//!
//! Accelerated proximal gradient (FISTA with backtracking and
//! function-value restarts) gets close to the solution; a Newton phase then
//! polishes it. For the lasso and elastic net the Newton phase works on the
//! current support with fixed signs, adding KKT violators and dropping
//! coordinates that cross zero. Every result is certified by the proximal
//! stationarity residual.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::data::Dataset;
use crate::error::{AloError, Result};
use crate::family::{derivatives, total_loss, LossFamily};
use crate::linalg::{gather_columns, weighted_gram, woodbury_solve, DenseLu, SpdFactor};
use crate::penalty::{active_set, Penalty};

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Relative stationarity tolerance, see [`FitResult::kkt_residual`].
    pub kkt_tol: f64,
    pub line_search_shrink: f64,
    pub path_warm_start: bool,
    /// Reset the momentum every this many accelerated iterations.
    pub restart_every: Option<usize>,
    /// Finish with Newton steps; without it the solver is pure FISTA.
    pub newton_polish: bool,
    /// Keep the objective value of every accepted iterate.
    pub record_trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 10_000,
            kkt_tol: 1e-8,
            line_search_shrink: 0.5,
            path_warm_start: true,
            restart_every: None,
            newton_polish: true,
            record_trace: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(AloError::InvalidInput("max_iters must be positive".into()));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(AloError::InvalidInput("kkt_tol must be positive".into()));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(AloError::InvalidInput("line_search_shrink must lie in (0,1)".into()));
        }
        if self.restart_every == Some(0) {
            return Err(AloError::InvalidInput("restart_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub lambda: f64,
    pub beta_hat: Array1<f64>,
    pub active_set: Vec<usize>,
    /// `-(X'l' + lambda (1-mix) b) / (lambda mix)` for penalties with an
    /// l1 part and `lambda > 0`.
    pub subgradient_hat: Option<Array1<f64>>,
    pub objective: f64,
    /// `||b - prox(b - grad/L, 1/L)||_inf / (1 + ||b||_inf)`; for l1-type
    /// penalties also the worst zero-coordinate violation over `10 lambda mix`.
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

pub(crate) struct Problem<'a> {
    x: &'a Array2<f64>,
    y: &'a [f64],
    w: Option<&'a [f64]>,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    spectral_sq: f64,
    n_eff: usize,
}

enum Polish {
    Done(Array1<f64>, usize),
    Stalled(Array1<f64>, usize),
}

/// Stop Newton once the gradient is at rounding level, or below the
/// certification level and no longer shrinking. Continuing past the
/// certificate acts as iterative refinement of the linear solves.
fn settled(gnorm: f64, prev: f64, kkt_tol: f64, scale: f64) -> bool {
    gnorm <= 1e-15 * scale || (gnorm <= 1e-3 * kkt_tol * scale && gnorm > 0.5 * prev)
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, &x| m.max(x))
}

impl<'a> Problem<'a> {
    fn new(
        ds: &'a Dataset,
        fam: LossFamily,
        pen: Penalty,
        lambda: f64,
        w: Option<&'a [f64]>,
    ) -> Self {
        let n_eff = w.map_or(ds.n(), |w| w.iter().filter(|&&v| v > 0.0).count());
        Problem {
            x: ds.x(),
            y: ds.y().as_slice().expect("contiguous y"),
            w,
            fam,
            pen,
            lambda,
            spectral_sq: ds.spectral_norm_sq(),
            n_eff,
        }
    }

    fn p(&self) -> usize {
        self.x.ncols()
    }

    fn linpred(&self, beta: &Array1<f64>) -> Array1<f64> {
        self.x.dot(beta)
    }

    fn loss(&self, z: &Array1<f64>) -> f64 {
        total_loss(&self.fam, self.y, z.as_slice().unwrap(), self.w)
    }

    fn penalty(&self, beta: &Array1<f64>) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * self.pen.value(beta)
        }
    }

    fn objective(&self, beta: &Array1<f64>, z: &Array1<f64>) -> f64 {
        self.loss(z) + self.penalty(beta)
    }

    fn derivs(&self, z: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
        let (d1, d2) = derivatives(&self.fam, self.y, z.as_slice().unwrap(), self.w);
        (Array1::from(d1), Array1::from(d2))
    }

    fn grad(&self, d1: &Array1<f64>) -> Array1<f64> {
        self.x.t().dot(d1)
    }

    fn lipschitz(&self, d2: &Array1<f64>) -> f64 {
        let c = max_of(d2.as_slice().unwrap());
        let l = self.spectral_sq * c;
        if l > 0.0 {
            l
        } else {
            self.spectral_sq.max(1e-12)
        }
    }

    fn lam1(&self) -> f64 {
        self.lambda * self.pen.l1_weight()
    }

    fn ridge_curv(&self) -> f64 {
        self.lambda * self.pen.quad_curvature()
    }

    /// Penalty curvature of one coordinate at `b` (zero off the smooth
    /// part of l1-type penalties).
    fn coord_curvature(&self, b: f64) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else if self.pen.l1_weight() > 0.0 {
            self.ridge_curv()
        } else {
            self.lambda * self.pen.coord_d2(b).unwrap_or(0.0)
        }
    }

    /// Relative stationarity residual and the loss gradient at `beta`.
    fn certificate(&self, beta: &Array1<f64>, z: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
        let (d1, d2) = self.derivs(z);
        let grad = self.grad(&d1);
        let lc = self.lipschitz(&d2);
        let v = beta - &(&grad / lc);
        let u = self.pen.prox(&v, 1.0 / lc, self.lambda)?;
        let mut res = inf_norm(&(beta - &u)) / (1.0 + inf_norm(beta));
        let lam1 = self.lam1();
        if lam1 > 0.0 {
            let worst = beta
                .iter()
                .zip(grad.iter())
                .filter(|(b, _)| **b == 0.0)
                .map(|(_, g)| g.abs() - lam1)
                .fold(0.0_f64, f64::max);
            res = res.max(worst / (10.0 * lam1));
        }
        if !res.is_finite() {
            res = f64::INFINITY;
        }
        Ok((res, grad))
    }

    fn fista(
        &self,
        beta0: Array1<f64>,
        tol: f64,
        budget: usize,
        cfg: &FitConfig,
        trace: &mut Option<Vec<f64>>,
    ) -> Result<(Array1<f64>, usize)> {
        let mut x = beta0;
        let mut zx = self.linpred(&x);
        let mut fx = self.objective(&x, &zx);
        let (_, d2) = self.derivs(&zx);
        let mut lip = self.lipschitz(&d2);
        let mut yv = x.clone();
        let mut zy = zx.clone();
        let mut t = 1.0_f64;
        let mut momentum = false;
        let mut since_restart = 0usize;
        let mut it = 0usize;
        while it < budget {
            it += 1;
            let (d1, _) = self.derivs(&zy);
            let fy = self.loss(&zy);
            let g = self.grad(&d1);
            let (xn, zn, ln) = loop {
                let v = &yv - &(&g / lip);
                let xn = self.pen.prox(&v, 1.0 / lip, self.lambda)?;
                let diff = &xn - &yv;
                let zn = self.linpred(&xn);
                let ln = self.loss(&zn);
                let model = fy + g.dot(&diff) + 0.5 * lip * diff.dot(&diff);
                if ln <= model + 1e-12 * fy.abs() || !lip.is_finite() {
                    break (xn, zn, ln);
                }
                lip /= cfg.line_search_shrink;
            };
            if !lip.is_finite() {
                return Err(AloError::NotConverged { iterations: it, residual: f64::INFINITY });
            }
            let fn_ = ln + self.penalty(&xn);
            if fn_ > fx {
                if momentum {
                    yv = x.clone();
                    zy = zx.clone();
                    t = 1.0;
                    momentum = false;
                    since_restart = 0;
                    continue;
                }
                // A plain proximal step failed to decrease: rounding floor.
                break;
            }
            let change = inf_norm(&(&xn - &x));
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let c = (t - 1.0) / tn;
            yv = &xn + &((&xn - &x) * c);
            zy = &zn + &((&zn - &zx) * c);
            momentum = c > 0.0;
            x = xn;
            zx = zn;
            fx = fn_;
            t = tn;
            since_restart += 1;
            if let Some(tr) = trace.as_mut() {
                tr.push(fx);
            }
            if let Some(r) = cfg.restart_every {
                if since_restart >= r {
                    yv = x.clone();
                    zy = zx.clone();
                    t = 1.0;
                    momentum = false;
                    since_restart = 0;
                }
            }
            if change <= tol * (1.0 + inf_norm(&x)) {
                break;
            }
        }
        Ok((x, it))
    }

    /// Newton on the coordinates in `cols` for a penalty twice
    /// differentiable there (smooth penalties, bridge on its support, or
    /// `lambda = 0`).
    fn newton_smooth(
        &self,
        mut beta: Array1<f64>,
        cols: Vec<usize>,
        kkt_tol: f64,
        trace: &mut Option<Vec<f64>>,
    ) -> Result<Polish> {
        if cols.is_empty() {
            return Ok(Polish::Done(beta, 0));
        }
        let mut z = self.linpred(&beta);
        let mut obj = self.objective(&beta, &z);
        let xf = gather_columns(self.x.view(), &cols);
        let mut prev = f64::INFINITY;
        for it in 1..=60 {
            let (d1, d2) = self.derivs(&z);
            let grad_f = xf.t().dot(&d1);
            let mut g = Array1::<f64>::zeros(cols.len());
            let mut curv = Array1::<f64>::zeros(cols.len());
            for (k, &j) in cols.iter().enumerate() {
                g[k] = grad_f[k];
                if self.lambda > 0.0 {
                    let b = beta[j];
                    g[k] += self.lambda * self.pen.coord_d1(b).unwrap_or(0.0);
                    curv[k] = self.lambda * self.pen.coord_d2(b).unwrap_or(0.0);
                }
            }
            let gnorm = inf_norm(&g);
            if settled(gnorm, prev, kkt_tol, self.lipschitz(&d2) * (1.0 + inf_norm(&beta))) {
                return Ok(Polish::Done(beta, it - 1));
            }
            prev = gnorm;
            let neg_g = -&g;
            let dir = if cols.len() > self.n_eff && curv.iter().all(|&c| c > 0.0) {
                match woodbury_solve(xf.view(), curv.view(), d2.view(), neg_g.view()) {
                    Ok(d) => d,
                    Err(_) => return Ok(Polish::Stalled(beta, it)),
                }
            } else {
                let mut h = weighted_gram(xf.view(), d2.view());
                for k in 0..cols.len() {
                    h[[k, k]] += curv[k];
                }
                match SpdFactor::new(h.view()) {
                    Ok(f) => f.solve_vec(neg_g.view()),
                    Err(_) => return Ok(Polish::Stalled(beta, it)),
                }
            };
            let slope = g.dot(&dir);
            if !(slope < 0.0) {
                return Ok(Polish::Stalled(beta, it));
            }
            let dz = xf.dot(&dir);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..50 {
                let mut bt = beta.clone();
                for (k, &j) in cols.iter().enumerate() {
                    bt[j] += step * dir[k];
                }
                let zt = &z + &(&dz * step);
                let ot = self.objective(&bt, &zt);
                let near_flat = -slope <= 1e-10 * (1.0 + obj.abs());
                if ot <= obj + 1e-4 * step * slope
                    || (step == 1.0 && near_flat && ot <= obj + 1e-14 * (1.0 + obj.abs()))
                {
                    accepted = Some((bt, zt, ot));
                    break;
                }
                step *= 0.5;
            }
            let Some((bt, zt, ot)) = accepted else {
                return Ok(Polish::Stalled(beta, it));
            };
            let moved = step * inf_norm(&dir);
            beta = bt;
            z = zt;
            obj = ot;
            if let Some(tr) = trace.as_mut() {
                tr.push(obj);
            }
            if moved <= 1e-15 * (1.0 + inf_norm(&beta)) {
                return Ok(Polish::Done(beta, it));
            }
        }
        Ok(Polish::Stalled(beta, 60))
    }

    /// Sign-fixed Newton on the support for lasso / elastic net.
    fn newton_lasso(
        &self,
        mut beta: Array1<f64>,
        kkt_tol: f64,
        trace: &mut Option<Vec<f64>>,
    ) -> Result<Polish> {
        let p = self.p();
        let lam1 = self.lam1();
        let rw = self.ridge_curv();
        let add_batch = (self.n_eff / 10).max(1);
        let mut sign: Vec<f64> = beta.iter().map(|&b| if b == 0.0 { 0.0 } else { b.signum() }).collect();
        let mut z = self.linpred(&beta);
        let mut obj = self.objective(&beta, &z);
        let max_outer = 200 + 2 * p / add_batch;
        let mut prev = f64::INFINITY;
        for it in 1..=max_outer {
            let mut support: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            let (d1, d2) = self.derivs(&z);
            let mut grad = self.grad(&d1);
            if rw > 0.0 {
                grad.scaled_add(rw, &beta);
            }
            let gsup = support.iter().map(|&j| (grad[j] + lam1 * sign[j]).abs()).fold(0.0, f64::max);
            let scale = self.lipschitz(&d2) * (1.0 + inf_norm(&beta));
            let done = settled(gsup, prev, kkt_tol, scale);
            prev = gsup;
            if done {
                prev = f64::INFINITY;
                let mut viol: Vec<usize> = (0..p)
                    .filter(|&j| beta[j] == 0.0 && grad[j].abs() > lam1 * (1.0 + 1e-10))
                    .collect();
                if viol.is_empty() {
                    return Ok(Polish::Done(beta, it - 1));
                }
                viol.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
                let room = if rw > 0.0 { usize::MAX } else { self.n_eff.saturating_sub(support.len()) };
                let take = add_batch.min(room).min(viol.len());
                if take == 0 {
                    return Ok(Polish::Stalled(beta, it));
                }
                for &j in &viol[..take] {
                    sign[j] = -grad[j].signum();
                    support.push(j);
                }
            } else if rw == 0.0 && support.len() > self.n_eff {
                return Ok(Polish::Stalled(beta, it));
            }
            let g: Array1<f64> = support.iter().map(|&j| grad[j] + lam1 * sign[j]).collect();
            let xf = gather_columns(self.x.view(), &support);
            let mut h = weighted_gram(xf.view(), d2.view());
            if rw > 0.0 {
                for k in 0..support.len() {
                    h[[k, k]] += rw;
                }
            }
            let dir = match SpdFactor::new(h.view()) {
                Ok(f) => f.solve_vec((-&g).view()),
                Err(_) => return Ok(Polish::Stalled(beta, it)),
            };
            let slope = g.dot(&dir);
            if !(slope < 0.0) {
                return Ok(Polish::Stalled(beta, it));
            }
            // First point where a current nonzero reaches zero.
            let mut t_cross = f64::INFINITY;
            for (k, &j) in support.iter().enumerate() {
                if beta[j] != 0.0 && beta[j] * dir[k] < 0.0 {
                    t_cross = t_cross.min(-beta[j] / dir[k]);
                }
            }
            let mut candidates = vec![1.0];
            if t_cross < 1.0 {
                candidates.push(t_cross);
            }
            let mut s = candidates.last().copied().unwrap() * 0.5;
            for _ in 0..40 {
                candidates.push(s);
                s *= 0.5;
            }
            let near_flat = -slope <= 1e-10 * (1.0 + obj.abs());
            let mut accepted = None;
            for &t in &candidates {
                let mut bt = beta.clone();
                let mut delta = Array1::<f64>::zeros(support.len());
                for (k, &j) in support.iter().enumerate() {
                    let mut v = beta[j] + t * dir[k];
                    if t == t_cross && beta[j] != 0.0 && (beta[j] + t * dir[k]) * beta[j] <= 0.0 {
                        v = 0.0;
                    }
                    if v * sign[j] < 0.0 {
                        v = 0.0;
                    }
                    bt[j] = v;
                    delta[k] = v - beta[j];
                }
                let zt = &z + &xf.dot(&delta);
                let ot = self.objective(&bt, &zt);
                let model = 1e-4 * t.min(1.0) * slope;
                if ot <= obj + model
                    || (t == 1.0 && near_flat && ot <= obj + 1e-14 * (1.0 + obj.abs()))
                {
                    accepted = Some((bt, zt, ot));
                    break;
                }
            }
            let Some((bt, zt, ot)) = accepted else {
                return Ok(Polish::Stalled(beta, it));
            };
            beta = bt;
            z = zt;
            obj = ot;
            for j in 0..p {
                if beta[j] == 0.0 && sign[j] != 0.0 {
                    sign[j] = 0.0;
                    prev = f64::INFINITY;
                }
            }
            if let Some(tr) = trace.as_mut() {
                tr.push(obj);
            }
        }
        Ok(Polish::Stalled(beta, max_outer))
    }

    fn polish(
        &self,
        beta: Array1<f64>,
        kkt_tol: f64,
        trace: &mut Option<Vec<f64>>,
    ) -> Result<Polish> {
        if self.lambda > 0.0 && self.pen.l1_weight() > 0.0 {
            self.newton_lasso(beta, kkt_tol, trace)
        } else if self.lambda > 0.0 && matches!(self.pen, Penalty::Bridge { .. }) {
            let cols: Vec<usize> = (0..self.p()).filter(|&j| beta[j] != 0.0).collect();
            self.newton_smooth(beta, cols, kkt_tol, trace)
        } else {
            let cols = (0..self.p()).collect();
            self.newton_smooth(beta, cols, kkt_tol, trace)
        }
    }
}

/// Smallest `lambda` at which the lasso solution is identically zero:
/// `||X' l'(0)||_inf`.
pub fn null_lambda(ds: &Dataset, fam: &LossFamily) -> f64 {
    let z = Array1::<f64>::zeros(ds.n());
    let (d1, _) = derivatives(fam, ds.y().as_slice().unwrap(), z.as_slice().unwrap(), None);
    let g = ds.x().t().dot(&Array1::from(d1));
    inf_norm(&g)
}

/// `count` points from `max` down to `min`, log- or linearly spaced.
pub fn lambda_grid(min: f64, max: f64, count: usize, log: bool) -> Result<Vec<f64>> {
    if count == 0 || !(min > 0.0) || !(max >= min) || !max.is_finite() {
        return Err(AloError::InvalidInput(format!(
            "invalid lambda grid: min {min}, max {max}, count {count}"
        )));
    }
    if count == 1 {
        return Ok(vec![max]);
    }
    Ok((0..count)
        .map(|k| {
            let f = k as f64 / (count - 1) as f64;
            if log {
                (max.ln() + f * (min.ln() - max.ln())).exp()
            } else {
                max + f * (min - max)
            }
        })
        .collect())
}

pub fn fit(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    cfg: &FitConfig,
    warm: Option<&Array1<f64>>,
) -> Result<FitResult> {
    fit_weighted(ds, fam, pen, lambda, cfg, warm, None)
}

/// Fit with 0/1 observation weights; rows of weight zero are left out.
pub fn fit_weighted(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    cfg: &FitConfig,
    warm: Option<&Array1<f64>>,
    weights: Option<&[f64]>,
) -> Result<FitResult> {
    cfg.validate()?;
    pen.validate()?;
    fam.check_responses(ds.y().as_slice().unwrap())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(AloError::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if let Some(w) = weights {
        if w.len() != ds.n() {
            return Err(AloError::DimensionMismatch("weight vector length differs from n".into()));
        }
    }
    if let Some(b) = warm {
        if b.len() != ds.p() {
            return Err(AloError::DimensionMismatch(format!(
                "warm start has {} entries, expected {}",
                b.len(),
                ds.p()
            )));
        }
    }
    let prob = Problem::new(ds, fam, pen, lambda, weights);
    if lambda == 0.0 && fam.is_quadratic() {
        let ones = Array1::from_elem(ds.n(), 1.0);
        let w = weights.map_or(ones.clone(), |w| Array1::from(w.to_vec()));
        let gram = weighted_gram(ds.x().view(), w.view());
        if prob.n_eff < ds.p() || SpdFactor::strict(gram.view()).is_err() {
            return Err(AloError::DegenerateProblem(
                "lambda = 0 with a singular X'X: least squares has no unique solution".into(),
            ));
        }
    }

    let mut beta = match warm {
        Some(b) => b.clone(),
        None => match pen {
            Penalty::SmoothedL1 { alpha } if lambda > 0.0 => {
                smoothed_cold_start(ds, fam, alpha, lambda, cfg, weights)?
            }
            _ => Array1::zeros(ds.p()),
        },
    };

    let mut trace = cfg.record_trace.then(Vec::new);
    let mut iterations = 0usize;
    let mut fista_tol = 1e-6_f64;
    let mut converged = false;
    let mut residual;
    loop {
        if cfg.newton_polish && iterations < cfg.max_iters {
            let before = prob.objective(&beta, &prob.linpred(&beta));
            let (cand, it) = match prob.polish(beta.clone(), cfg.kkt_tol, &mut trace)? {
                Polish::Done(b, it) | Polish::Stalled(b, it) => (b, it),
            };
            iterations += it;
            let after = prob.objective(&cand, &prob.linpred(&cand));
            if after <= before + 1e-14 * (1.0 + before.abs()) {
                beta = cand;
            }
        }
        let z = prob.linpred(&beta);
        residual = prob.certificate(&beta, &z)?.0;
        if residual <= cfg.kkt_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        let budget = if cfg.newton_polish {
            (cfg.max_iters - iterations).min(2000)
        } else {
            cfg.max_iters - iterations
        };
        let tol = if cfg.newton_polish { fista_tol } else { fista_tol.min(0.1 * cfg.kkt_tol) };
        let (b, it) = prob.fista(beta, tol, budget, cfg, &mut trace)?;
        beta = b;
        iterations += it;
        fista_tol = (fista_tol * 1e-2).max(1e-3 * cfg.kkt_tol);
        if !cfg.newton_polish && it < budget && tol <= 1e-3 * cfg.kkt_tol {
            // Rounding floor reached without certifying.
            let z = prob.linpred(&beta);
            residual = prob.certificate(&beta, &z)?.0;
            converged = residual <= cfg.kkt_tol;
            if !converged && iterations < cfg.max_iters {
                continue;
            }
            break;
        }
    }

    let z = prob.linpred(&beta);
    let objective = prob.objective(&beta, &z);
    let subgradient_hat = if lambda > 0.0 && pen.l1_weight() > 0.0 {
        let (d1, _) = prob.derivs(&z);
        let mut g = prob.grad(&d1);
        g.scaled_add(prob.ridge_curv(), &beta);
        Some(g.mapv(|v| -v / prob.lam1()))
    } else {
        None
    };
    Ok(FitResult {
        lambda,
        active_set: active_set(&beta),
        beta_hat: beta,
        subgradient_hat,
        objective,
        kkt_residual: residual,
        iterations,
        converged,
        trace: trace.unwrap_or_default(),
    })
}

/// Start a smoothed-l1 fit from the exact lasso solution: zero coordinates
/// are placed where the smoothed gradient `tanh(alpha b / 2)` equals the
/// lasso subgradient.
fn smoothed_cold_start(
    ds: &Dataset,
    fam: LossFamily,
    alpha: f64,
    lambda: f64,
    cfg: &FitConfig,
    weights: Option<&[f64]>,
) -> Result<Array1<f64>> {
    let lasso = fit_weighted(ds, fam, Penalty::L1, lambda, cfg, None, weights)?;
    let mut beta = lasso.beta_hat;
    if let Some(g) = lasso.subgradient_hat {
        for j in 0..beta.len() {
            if beta[j] == 0.0 {
                let gj = g[j].clamp(-1.0 + 1e-12, 1.0 - 1e-12);
                beta[j] = 2.0 * gj.atanh() / alpha;
            }
        }
    }
    Ok(beta)
}

/// One fit per `lambda` (strictly decreasing), warm-started along the path
/// when configured. A failed entry does not stop the path.
pub fn fit_path(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambdas: &[f64],
    cfg: &FitConfig,
) -> Result<Vec<Result<FitResult>>> {
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(AloError::InvalidInput("lambda path must be strictly decreasing".into()));
    }
    let mut out = Vec::with_capacity(lambdas.len());
    let mut warm: Option<Array1<f64>> = None;
    for &lam in lambdas {
        let start = if cfg.path_warm_start { warm.as_ref() } else { None };
        let r = fit(ds, fam, pen, lam, cfg, start);
        if let Ok(f) = &r {
            warm = Some(f.beta_hat.clone());
        }
        out.push(r);
    }
    Ok(out)
}

/// Refits that drop one observation, started from the full-data solution.
///
/// The full-data Hessian on the working set (the support for l1-type and
/// bridge penalties, every column otherwise) is factored once; deleting row
/// `i` is a rank-one downdate, applied through Sherman-Morrison. Each refit
/// then iterates Newton steps with this frozen Hessian, costing
/// `O(n |S| + |S|^2)` per step instead of a new factorization. The first
/// step is exactly the ALO step. A refit is only returned once it passes the
/// same certificate as [`fit_weighted`]; otherwise the caller falls back to
/// the general solver.
pub(crate) struct RowDeletion<'a> {
    ds: &'a Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    kkt_tol: f64,
    warm: &'a Array1<f64>,
    z0: Array1<f64>,
    cols: Vec<usize>,
    xf: Array2<f64>,
    d2: Array1<f64>,
    factor: SpdFactor,
}

impl<'a> RowDeletion<'a> {
    pub(crate) fn new(
        ds: &'a Dataset,
        fam: LossFamily,
        pen: Penalty,
        lambda: f64,
        cfg: &FitConfig,
        warm: &'a Array1<f64>,
    ) -> Option<Self> {
        if !cfg.newton_polish || warm.len() != ds.p() || pen.validate().is_err() {
            return None;
        }
        let sparse = lambda > 0.0 && (pen.l1_weight() > 0.0 || matches!(pen, Penalty::Bridge { .. }));
        let cols: Vec<usize> = if sparse {
            (0..ds.p()).filter(|&j| warm[j] != 0.0).collect()
        } else {
            (0..ds.p()).collect()
        };
        if cols.is_empty() || cols.len() > ds.n() + ds.n() / 2 {
            return None;
        }
        let prob = Problem::new(ds, fam, pen, lambda, None);
        let z0 = prob.linpred(warm);
        let (_, d2) = prob.derivs(&z0);
        let xf = gather_columns(ds.x().view(), &cols);
        let mut h = weighted_gram(xf.view(), d2.view());
        for (k, &j) in cols.iter().enumerate() {
            h[[k, k]] += prob.coord_curvature(warm[j]);
        }
        let factor = SpdFactor::strict(h.view()).ok()?;
        Some(RowDeletion { ds, fam, pen, lambda, kkt_tol: cfg.kkt_tol, warm, z0, cols, xf, d2, factor })
    }

    fn position(&self, j: usize) -> Option<usize> {
        self.cols.binary_search(&j).ok()
    }

    /// Coefficients fitted without observation `i`, or `None` when the
    /// frozen-Hessian iteration cannot certify them.
    ///
    /// For l1-type penalties the working set may drift from the full-data
    /// support: coordinates that reach zero are pinned there and zero
    /// coordinates that violate the optimality conditions enter, both
    /// through a bordered system around the one downdated factorization.
    pub(crate) fn refit(&self, i: usize) -> Option<Array1<f64>> {
        const MAX_ITERS: usize = 400;
        const MAX_CHANGES: usize = 400;
        const MAX_EXTRAS: usize = 120;
        let n = self.ds.n();
        let mut w = vec![1.0; n];
        w[i] = 0.0;
        let prob = Problem::new(self.ds, self.fam, self.pen, self.lambda, Some(&w));
        let dd = Downdated::new(self, i)?;
        let l1 = self.lambda > 0.0 && self.pen.l1_weight() > 0.0;
        let bridge = self.lambda > 0.0 && matches!(self.pen, Penalty::Bridge { .. });
        let lam1 = prob.lam1();
        let rw = prob.ridge_curv();
        let pen_grad = |b: f64, sg: f64| -> Option<f64> {
            Some(if l1 {
                lam1 * sg + rw * b
            } else if self.lambda > 0.0 {
                self.lambda * self.pen.coord_d1(b)?
            } else {
                0.0
            })
        };
        let mut d2i = self.d2.clone();
        d2i[i] = 0.0;
        let s = self.cols.len();
        let mut beta = self.warm.clone();
        let mut z = self.z0.clone();
        let mut sign: Vec<f64> = self.cols.iter().map(|&j| self.warm[j].signum()).collect();
        let mut pinned = vec![false; s];
        let mut bd = Bordered::new(rw);
        let mut prev = f64::INFINITY;
        let mut changes = 0;
        for _ in 0..MAX_ITERS {
            let (d1, d2w) = prob.derivs(&z);
            let mut g = self.xf.t().dot(&d1);
            for (k, &j) in self.cols.iter().enumerate() {
                g[k] += pen_grad(beta[j], sign[k])?;
            }
            let mut ge = vec![0.0; bd.extras.len()];
            for (a, e) in bd.extras.iter().enumerate() {
                match e {
                    Extra::Pin(k) => g[*k] = 0.0,
                    Extra::Add { j, sign, x, .. } => ge[a] = x.dot(&d1) + pen_grad(beta[*j], *sign)?,
                }
            }
            let gnorm = ge.iter().fold(inf_norm(&g), |m, v| m.max(v.abs()));
            let scale = prob.lipschitz(&d2w) * (1.0 + inf_norm(&beta));
            if settled(gnorm, prev, self.kkt_tol, scale) {
                if l1 {
                    let mut grad = prob.grad(&d1);
                    if rw > 0.0 {
                        grad.scaled_add(rw, &beta);
                    }
                    let viol: Vec<usize> = (0..self.ds.p())
                        .filter(|&j| beta[j] == 0.0 && grad[j].abs() > lam1 * (1.0 + 1e-10))
                        .collect();
                    if !viol.is_empty() {
                        changes += viol.len();
                        if changes > MAX_CHANGES {
                            return None;
                        }
                        for j in viol {
                            let sg = -grad[j].signum();
                            match self.position(j) {
                                Some(k) => {
                                    let a = bd.extras.iter().position(|e| matches!(e, Extra::Pin(q) if *q == k))?;
                                    bd.remove(a);
                                    pinned[k] = false;
                                    sign[k] = sg;
                                }
                                None => {
                                    if bd.extras.len() >= MAX_EXTRAS
                                        || bd.extras.iter().any(|e| matches!(e, Extra::Add { j: q, .. } if *q == j))
                                    {
                                        return None;
                                    }
                                    let x = self.ds.x().column(j).to_owned();
                                    let wx = &x * &d2i;
                                    let v = self.xf.t().dot(&wx);
                                    bd.push(&dd, Extra::Add { j, sign: sg, x, wx, v });
                                }
                            }
                        }
                        prev = f64::INFINITY;
                        continue;
                    }
                }
                let (res, _) = prob.certificate(&beta, &prob.linpred(&beta)).ok()?;
                return (res <= self.kkt_tol).then_some(beta);
            }
            if gnorm > prev {
                return None;
            }
            prev = gnorm;
            let (dvec, y) = bd.direction(&dd, &g, &ge)?;
            // Longest step that keeps every working sign.
            let mut t = 1.0;
            let mut hit = None;
            if l1 || bridge {
                let moves = (0..s)
                    .filter(|&k| !pinned[k])
                    .map(|k| (self.cols[k], sign[k], dvec[k], Err(k)))
                    .chain(bd.extras.iter().enumerate().filter_map(|(a, e)| match e {
                        Extra::Add { j, sign, .. } => Some((*j, *sign, y[a], Ok(a))),
                        Extra::Pin(_) => None,
                    }));
                for (j, sg, d, at) in moves {
                    if (beta[j] + d) * sg > 0.0 {
                        continue;
                    }
                    if bridge {
                        return None;
                    }
                    let tk = (-beta[j] / d).max(0.0);
                    if tk < t {
                        t = tk;
                        hit = Some((j, at));
                    }
                }
            }
            let step = &dvec * t;
            for (k, &j) in self.cols.iter().enumerate() {
                beta[j] += step[k];
            }
            z += &self.xf.dot(&step);
            for (a, e) in bd.extras.iter().enumerate() {
                if let Extra::Add { j, x, .. } = e {
                    beta[*j] += t * y[a];
                    z.scaled_add(t * y[a], x);
                }
            }
            if let Some((j, at)) = hit {
                changes += 1;
                if changes > MAX_CHANGES {
                    return None;
                }
                let r = beta[j];
                beta[j] = 0.0;
                z.scaled_add(-r, &self.ds.x().column(j));
                match at {
                    Err(k) => {
                        if bd.extras.len() >= MAX_EXTRAS {
                            return None;
                        }
                        pinned[k] = true;
                        bd.push(&dd, Extra::Pin(k));
                    }
                    Ok(a) => bd.remove(a),
                }
                prev = f64::INFINITY;
            }
        }
        None
    }
}

/// The full-data working-set Hessian with one row removed, applied through
/// Sherman-Morrison: `(H - c x x')^{-1} u = H^{-1} u + a c a'u / denom` with
/// `a = H^{-1} x` and `denom = 1 - c x'a`.
struct Downdated<'r> {
    factor: &'r SpdFactor,
    a: Array1<f64>,
    c: f64,
    denom: f64,
}

impl<'r> Downdated<'r> {
    fn new(rd: &'r RowDeletion<'_>, i: usize) -> Option<Self> {
        let xi = rd.xf.row(i);
        let a = rd.factor.solve_vec(xi);
        let c = rd.d2[i];
        let denom = 1.0 - c * xi.dot(&a);
        (denom > 1e-8).then_some(Downdated { factor: &rd.factor, a, c, denom })
    }

    fn solve(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let mut v = self.factor.solve_vec(u);
        v.scaled_add(self.c * self.a.dot(&u) / self.denom, &self.a);
        v
    }
}

/// A working-set change relative to the full-data support: a position of
/// `cols` held at zero, or a column outside `cols` that entered with its
/// frozen weighted copy `wx` and coupling `v = X_S' wx`.
enum Extra {
    Pin(usize),
    Add { j: usize, sign: f64, x: Array1<f64>, wx: Array1<f64>, v: Array1<f64> },
}

/// Newton directions on `cols` plus the extras, by block elimination around
/// the one downdated factor. With `P` the downdated inverse and `V` the
/// extras' couplings, only the small Schur complement `D - V'PV` changes as
/// the working set drifts; it is indefinite when pins are present, so it is
/// solved by pivoted LU.
struct Bordered {
    rw: f64,
    extras: Vec<Extra>,
    pv: Vec<Array1<f64>>,
    schur: Array2<f64>,
    lu: Option<DenseLu>,
}

impl Bordered {
    fn new(rw: f64) -> Self {
        Bordered { rw, extras: Vec::new(), pv: Vec::new(), schur: Array2::zeros((0, 0)), lu: None }
    }

    /// `v_e' u` for the coupling column of extra `e`.
    fn coupling(e: &Extra, u: &Array1<f64>) -> f64 {
        match e {
            Extra::Pin(k) => u[*k],
            Extra::Add { v, .. } => v.dot(u),
        }
    }

    fn block(&self, a: &Extra, b: &Extra, diag: bool) -> f64 {
        match (a, b) {
            (Extra::Add { x, .. }, Extra::Add { wx, .. }) => x.dot(wx) + if diag { self.rw } else { 0.0 },
            _ => 0.0,
        }
    }

    fn push(&mut self, dd: &Downdated<'_>, e: Extra) {
        let pv = match &e {
            Extra::Pin(k) => {
                let mut u = Array1::zeros(dd.a.len());
                u[*k] = 1.0;
                dd.solve(u.view())
            }
            Extra::Add { v, .. } => dd.solve(v.view()),
        };
        let m = self.extras.len();
        let mut c = Array2::zeros((m + 1, m + 1));
        c.slice_mut(s![..m, ..m]).assign(&self.schur);
        for b in 0..m {
            let val = self.block(&e, &self.extras[b], false) - Self::coupling(&e, &self.pv[b]);
            c[[m, b]] = val;
            c[[b, m]] = val;
        }
        c[[m, m]] = self.block(&e, &e, true) - Self::coupling(&e, &pv);
        self.extras.push(e);
        self.pv.push(pv);
        self.schur = c;
        self.lu = None;
    }

    fn remove(&mut self, a: usize) {
        self.extras.remove(a);
        self.pv.remove(a);
        let keep: Vec<usize> = (0..self.schur.nrows()).filter(|&r| r != a).collect();
        self.schur = Array2::from_shape_fn((keep.len(), keep.len()), |(r, q)| self.schur[[keep[r], keep[q]]]);
        self.lu = None;
    }

    /// Direction on `cols` and one entry per extra (the step of an added
    /// column; a multiplier for a pin), given gradients `g` on `cols` and
    /// `ge` on the added columns.
    fn direction(&mut self, dd: &Downdated<'_>, g: &Array1<f64>, ge: &[f64]) -> Option<(Array1<f64>, Array1<f64>)> {
        let pg = dd.solve(g.view());
        if self.extras.is_empty() {
            return Some((-pg, Array1::zeros(0)));
        }
        if self.lu.is_none() {
            self.lu = Some(DenseLu::new(self.schur.clone())?);
        }
        let rhs: Vec<f64> =
            self.extras.iter().zip(ge).map(|(e, &q)| Self::coupling(e, &pg) - q).collect();
        let y = self.lu.as_ref()?.solve(&rhs);
        let mut d = -pg;
        for (a, pv) in self.pv.iter().enumerate() {
            d.scaled_add(-y[a], pv);
        }
        for e in &self.extras {
            if let Extra::Pin(k) = e {
                d[*k] = 0.0;
            }
        }
        Some((d, y))
    }
}

/// Refit without observation `i`, starting from `warm`.
pub fn fit_leave_one_out(
    ds: &Dataset,
    fam: LossFamily,
    pen: Penalty,
    lambda: f64,
    cfg: &FitConfig,
    i: usize,
    warm: &Array1<f64>,
) -> Result<FitResult> {
    if i >= ds.n() {
        return Err(AloError::InvalidInput(format!("observation {i} out of range (n = {})", ds.n())));
    }
    let mut w = vec![1.0; ds.n()];
    w[i] = 0.0;
    fit_weighted(ds, fam, pen, lambda, cfg, Some(warm), Some(&w))
}
