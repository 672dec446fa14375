//! Separable penalties `r(b) = sum_j r(b_j)`.
//!
//! Conventions: ridge is `r(z) = z^2` (curvature 2); the elastic net is
//! `((1 - mix)/2) z^2 + mix |z|` under a single `lambda`.

use ndarray::Array1;

use crate::error::{AloError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Ridge,
    L1,
    ElasticNet { mix: f64 },
    Bridge { q: f64 },
    SmoothedL1 { alpha: f64 },
}

/// Relative threshold below which a coefficient counts as zero.
pub const ACTIVE_REL: f64 = 1e-8;

const PROX_TOL: f64 = 1e-12;
const PROX_MAX_ITERS: usize = 50;

impl Penalty {
    pub fn name(&self) -> &'static str {
        match self {
            Penalty::Ridge => "ridge",
            Penalty::L1 => "lasso",
            Penalty::ElasticNet { .. } => "elastic-net",
            Penalty::Bridge { .. } => "bridge",
            Penalty::SmoothedL1 { .. } => "smoothed-l1",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Penalty::ElasticNet { mix } if !(0.0..=1.0).contains(&mix) => Err(
                AloError::InvalidInput(format!("elastic-net mix must lie in [0,1], got {mix}")),
            ),
            Penalty::Bridge { q } if !(q > 1.0 && q < 2.0) => Err(AloError::InvalidInput(
                format!("bridge exponent must lie in (1,2), got {q}"),
            )),
            Penalty::SmoothedL1 { alpha } if !(alpha > 0.0 && alpha.is_finite()) => Err(
                AloError::InvalidInput(format!("smoothing parameter must be positive, got {alpha}")),
            ),
            _ => Ok(()),
        }
    }

    /// Twice differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        match *self {
            Penalty::Ridge | Penalty::SmoothedL1 { .. } => true,
            Penalty::ElasticNet { mix } => mix == 0.0,
            Penalty::L1 | Penalty::Bridge { .. } => false,
        }
    }

    /// Weight of the `|z|` term per unit `lambda` (0 when there is none).
    pub fn l1_weight(&self) -> f64 {
        match *self {
            Penalty::L1 => 1.0,
            Penalty::ElasticNet { mix } => mix,
            _ => 0.0,
        }
    }

    /// Constant curvature of the quadratic part per unit `lambda`.
    pub fn quad_curvature(&self) -> f64 {
        match *self {
            Penalty::Ridge => 2.0,
            Penalty::ElasticNet { mix } => 1.0 - mix,
            _ => 0.0,
        }
    }

    pub fn coord_value(&self, z: f64) -> f64 {
        match *self {
            Penalty::Ridge => z * z,
            Penalty::L1 => z.abs(),
            Penalty::ElasticNet { mix } => 0.5 * (1.0 - mix) * z * z + mix * z.abs(),
            Penalty::Bridge { q } => z.abs().powf(q),
            Penalty::SmoothedL1 { alpha } => {
                let a = z.abs();
                a + (2.0 / alpha) * (-alpha * a).exp().ln_1p()
            }
        }
    }

    /// First derivative at one coordinate; `None` at a kink.
    pub fn coord_d1(&self, z: f64) -> Option<f64> {
        match *self {
            Penalty::Ridge => Some(2.0 * z),
            Penalty::L1 => (z != 0.0).then(|| z.signum()),
            Penalty::ElasticNet { mix } => {
                if z == 0.0 && mix > 0.0 {
                    None
                } else {
                    Some((1.0 - mix) * z + mix * sign0(z))
                }
            }
            Penalty::Bridge { q } => Some(q * z.abs().powf(q - 1.0) * sign0(z)),
            Penalty::SmoothedL1 { alpha } => Some((0.5 * alpha * z).tanh()),
        }
    }

    /// Second derivative at one coordinate; `None` where it does not exist.
    pub fn coord_d2(&self, z: f64) -> Option<f64> {
        match *self {
            Penalty::Ridge => Some(2.0),
            Penalty::L1 => (z != 0.0).then_some(0.0),
            Penalty::ElasticNet { mix } => (z != 0.0 || mix == 0.0).then_some(1.0 - mix),
            Penalty::Bridge { q } => (z != 0.0).then(|| q * (q - 1.0) * z.abs().powf(q - 2.0)),
            Penalty::SmoothedL1 { alpha } => {
                let e = (-alpha * z.abs()).exp();
                Some(2.0 * alpha * e / ((1.0 + e) * (1.0 + e)))
            }
        }
    }

    pub fn value(&self, beta: &Array1<f64>) -> f64 {
        beta.iter().map(|&b| self.coord_value(b)).sum()
    }

    pub fn d1(&self, beta: &Array1<f64>) -> Result<Array1<f64>> {
        beta.iter()
            .enumerate()
            .map(|(index, &b)| self.coord_d1(b).ok_or(AloError::NonSmoothAtZero { index }))
            .collect()
    }

    pub fn d2(&self, beta: &Array1<f64>) -> Result<Array1<f64>> {
        beta.iter()
            .enumerate()
            .map(|(index, &b)| self.coord_d2(b).ok_or(AloError::NonSmoothAtZero { index }))
            .collect()
    }

    /// `argmin_u (u - v)^2 / 2 + step * lambda * r(u)` for a scalar.
    pub fn prox_scalar(&self, v: f64, step: f64, lambda: f64) -> Result<f64> {
        let t = step * lambda;
        if t == 0.0 {
            return Ok(v);
        }
        match *self {
            Penalty::Ridge => Ok(v / (1.0 + 2.0 * t)),
            Penalty::L1 => Ok(soft_threshold(v, t)),
            Penalty::ElasticNet { mix } => Ok(soft_threshold(v, t * mix) / (1.0 + t * (1.0 - mix))),
            Penalty::Bridge { q } => bridge_prox(v, t, q),
            Penalty::SmoothedL1 { alpha } => smoothed_prox(v, t, alpha),
        }
    }

    pub fn prox(&self, v: &Array1<f64>, step: f64, lambda: f64) -> Result<Array1<f64>> {
        if !(step > 0.0) {
            return Err(AloError::InvalidInput(format!("prox step must be positive, got {step}")));
        }
        v.iter().map(|&vi| self.prox_scalar(vi, step, lambda)).collect()
    }

    /// Two-parameter elastic-net form `lambda1 ||b||_2^2 + lambda2 ||b||_1`.
    pub fn elastic_net_lambdas(lambda: f64, mix: f64) -> (f64, f64) {
        (lambda * (1.0 - mix) / 2.0, lambda * mix)
    }
}

#[inline]
fn sign0(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else if z < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Solve `u + t q u^(q-1) = |v|` on `u >= 0`.
fn bridge_prox(v: f64, t: f64, q: f64) -> Result<f64> {
    let a = v.abs();
    if a == 0.0 {
        return Ok(0.0);
    }
    let phi = |u: f64| u + t * q * u.powf(q - 1.0) - a;
    // Both the identity and the power term alone overshoot the root, so the
    // smaller of the two single-term solutions brackets it from above.
    let mut hi = a.min((a / (t * q)).powf(1.0 / (q - 1.0)));
    let mut lo = 0.0;
    let mut u = hi;
    for _ in 0..PROX_MAX_ITERS {
        let f = phi(u);
        if f.abs() <= PROX_TOL * a.max(1.0) {
            return Ok(u.copysign(v));
        }
        if f > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let df = 1.0 + t * q * (q - 1.0) * u.powf(q - 2.0);
        let mut next = u - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) <= f64::EPSILON * hi {
            return Ok(next.copysign(v));
        }
        u = next;
    }
    // Bisection fallback from the current bracket.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f = phi(mid);
        if f.abs() <= PROX_TOL * a.max(1.0) || (hi - lo) <= f64::EPSILON * hi {
            return Ok(mid.copysign(v));
        }
        if f > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(AloError::ProxNoConvergence { input: v })
}

/// Solve `u + t tanh(alpha u / 2) = v`.
fn smoothed_prox(v: f64, t: f64, alpha: f64) -> Result<f64> {
    let pen = Penalty::SmoothedL1 { alpha };
    let phi = |u: f64| u + t * (0.5 * alpha * u).tanh() - v;
    let (mut lo, mut hi) = (v - t, v + t);
    let mut u = soft_threshold(v, t);
    if !(u > lo && u < hi) {
        u = 0.5 * (lo + hi);
    }
    let scale = v.abs().max(t).max(1.0);
    for _ in 0..PROX_MAX_ITERS * 4 {
        let f = phi(u);
        if f.abs() <= PROX_TOL * scale {
            return Ok(u);
        }
        if f > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        if hi - lo <= 4.0 * f64::EPSILON * scale {
            return Ok(u);
        }
        let df = 1.0 + t * pen.coord_d2(u).unwrap_or(0.0);
        let mut next = u - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        u = next;
    }
    Err(AloError::ProxNoConvergence { input: v })
}

/// `sup_z |r_alpha(z) - |z|| = 2 log 2 / alpha`, attained at `z = 0`.
pub fn smoothed_l1_sup_gap(alpha: f64) -> f64 {
    2.0 * std::f64::consts::LN_2 / alpha
}

/// Magnitude at or below which a coefficient is treated as zero.
pub fn active_threshold(beta: &Array1<f64>) -> f64 {
    let inf = beta.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
    ACTIVE_REL * inf.max(1.0)
}

pub fn active_set(beta: &Array1<f64>) -> Vec<usize> {
    let thr = active_threshold(beta);
    beta.iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > thr)
        .map(|(j, _)| j)
        .collect()
}
