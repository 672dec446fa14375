//! Loss families `l(y | z)` with analytic derivatives in the linear
//! predictor `z = x'b`.

use crate::error::{AloError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossFamily {
    /// `(y - z)^2 / 2`
    GaussianHalfSquared,
    /// `-y z + log(1 + e^z)`, `y` in {0, 1}
    LogisticBernoulli,
    /// `e^z - y z` (the `log y!` term is dropped)
    PoissonExpLink,
    /// `f(z) - y log f(z)` with `f(z) = log(1 + e^z)`
    PoissonSoftRect,
    /// `g^2 (sqrt(1 + ((y - z)/g)^2) - 1)`
    PseudoHuber { gamma: f64 },
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LossFamily {
    pub fn name(&self) -> &'static str {
        match self {
            LossFamily::GaussianHalfSquared => "gaussian",
            LossFamily::LogisticBernoulli => "logistic",
            LossFamily::PoissonExpLink => "poisson",
            LossFamily::PoissonSoftRect => "poisson-softrect",
            LossFamily::PseudoHuber { .. } => "pseudo-huber",
        }
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self, LossFamily::PoissonExpLink | LossFamily::PoissonSoftRect)
    }

    /// Constant unit curvature, so a Newton step is exact.
    pub fn is_quadratic(&self) -> bool {
        matches!(self, LossFamily::GaussianHalfSquared)
    }

    pub fn validate(&self) -> Result<()> {
        if let LossFamily::PseudoHuber { gamma } = self {
            if !(*gamma > 0.0 && gamma.is_finite()) {
                return Err(AloError::InvalidInput(format!(
                    "pseudo-Huber scale must be positive, got {gamma}"
                )));
            }
        }
        Ok(())
    }

    pub fn check_response(&self, y: f64) -> Result<()> {
        let ok = match self {
            LossFamily::GaussianHalfSquared | LossFamily::PseudoHuber { .. } => y.is_finite(),
            LossFamily::LogisticBernoulli => y == 0.0 || y == 1.0,
            LossFamily::PoissonExpLink | LossFamily::PoissonSoftRect => {
                y >= 0.0 && y.is_finite() && y.fract() == 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(AloError::UnsupportedResponse { family: self.name(), value: y })
        }
    }

    pub fn check_responses(&self, y: &[f64]) -> Result<()> {
        self.validate()?;
        y.iter().try_for_each(|&v| self.check_response(v))
    }

    pub fn loss_value(&self, y: f64, z: f64) -> Result<f64> {
        self.check_response(y)?;
        Ok(self.value(y, z))
    }

    pub fn loss_d1(&self, y: f64, z: f64) -> Result<f64> {
        self.check_response(y)?;
        Ok(self.d1(y, z))
    }

    pub fn loss_d2(&self, y: f64, z: f64) -> Result<f64> {
        self.check_response(y)?;
        Ok(self.d2(y, z))
    }

    /// Loss without the support check.
    #[inline]
    pub fn value(&self, y: f64, z: f64) -> f64 {
        match *self {
            LossFamily::GaussianHalfSquared => 0.5 * (y - z) * (y - z),
            LossFamily::LogisticBernoulli => softplus(z) - y * z,
            LossFamily::PoissonExpLink => z.exp() - y * z,
            LossFamily::PoissonSoftRect => {
                let f = softplus(z);
                if y == 0.0 {
                    f
                } else {
                    f - y * f.ln()
                }
            }
            LossFamily::PseudoHuber { gamma } => {
                let r = (y - z) / gamma;
                // g^2 (sqrt(1+r^2) - 1) = g^2 r^2 / (sqrt(1+r^2) + 1)
                gamma * gamma * r * r / ((1.0 + r * r).sqrt() + 1.0)
            }
        }
    }

    #[inline]
    pub fn d1(&self, y: f64, z: f64) -> f64 {
        match *self {
            LossFamily::GaussianHalfSquared => z - y,
            LossFamily::LogisticBernoulli => sigmoid(z) - y,
            LossFamily::PoissonExpLink => z.exp() - y,
            LossFamily::PoissonSoftRect => {
                let s = sigmoid(z);
                if y == 0.0 {
                    s
                } else {
                    s - y * (s / softplus(z))
                }
            }
            LossFamily::PseudoHuber { gamma } => {
                let r = y - z;
                let t = r / gamma;
                -r / (1.0 + t * t).sqrt()
            }
        }
    }

    #[inline]
    pub fn d2(&self, y: f64, z: f64) -> f64 {
        match *self {
            LossFamily::GaussianHalfSquared => 1.0,
            LossFamily::LogisticBernoulli => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            LossFamily::PoissonExpLink => z.exp(),
            LossFamily::PoissonSoftRect => {
                let s = sigmoid(z);
                let s2 = s * (1.0 - s);
                if y == 0.0 {
                    return s2;
                }
                let f = softplus(z);
                let a = s / f;
                (s2 * (1.0 - y / f) + y * a * a).max(0.0)
            }
            LossFamily::PseudoHuber { gamma } => {
                let t = (y - z) / gamma;
                let u = 1.0 + t * t;
                1.0 / (u * u.sqrt())
            }
        }
    }

    /// Predicted mean response `E[y | z]` (used by the Poisson MAE metric).
    #[inline]
    pub fn mean(&self, z: f64) -> f64 {
        match self {
            LossFamily::GaussianHalfSquared | LossFamily::PseudoHuber { .. } => z,
            LossFamily::LogisticBernoulli => sigmoid(z),
            LossFamily::PoissonExpLink => z.exp(),
            LossFamily::PoissonSoftRect => softplus(z),
        }
    }
}

/// Weighted first and second derivatives for a whole vector of linear
/// predictors. A `None` weight vector means every row has weight one.
pub(crate) fn derivatives(
    fam: &LossFamily,
    y: &[f64],
    z: &[f64],
    w: Option<&[f64]>,
) -> (Vec<f64>, Vec<f64>) {
    let mut d1 = Vec::with_capacity(y.len());
    let mut d2 = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let wi = w.map_or(1.0, |w| w[i]);
        if wi == 0.0 {
            d1.push(0.0);
            d2.push(0.0);
        } else {
            d1.push(wi * fam.d1(y[i], z[i]));
            d2.push(wi * fam.d2(y[i], z[i]));
        }
    }
    (d1, d2)
}

pub(crate) fn total_loss(fam: &LossFamily, y: &[f64], z: &[f64], w: Option<&[f64]>) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        let wi = w.map_or(1.0, |w| w[i]);
        if wi != 0.0 {
            s += wi * fam.value(y[i], z[i]);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [LossFamily; 5] = [
        LossFamily::GaussianHalfSquared,
        LossFamily::LogisticBernoulli,
        LossFamily::PoissonExpLink,
        LossFamily::PoissonSoftRect,
        LossFamily::PseudoHuber { gamma: 1.5 },
    ];

    #[test]
    fn documented_values() {
        let g = LossFamily::GaussianHalfSquared;
        assert_eq!(g.loss_value(1.0, 3.0).unwrap(), 2.0);
        assert_eq!(g.loss_d1(2.0, 5.0).unwrap(), 3.0);
        assert_eq!(g.loss_d2(2.0, 5.0).unwrap(), 1.0);

        let l = LossFamily::LogisticBernoulli;
        assert!((l.loss_value(0.0, 0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(l.loss_d1(0.0, 0.0).unwrap(), 0.5);
        assert_eq!(l.loss_d2(0.0, 0.0).unwrap(), 0.25);

        assert_eq!(LossFamily::PoissonExpLink.loss_value(1.0, 0.0).unwrap(), 1.0);

        let h = LossFamily::PseudoHuber { gamma: 1.0 };
        assert_eq!(h.loss_d1(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(h.loss_d2(0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn support_checks() {
        assert!(LossFamily::LogisticBernoulli.loss_value(0.5, 0.0).is_err());
        assert!(LossFamily::PoissonExpLink.loss_d1(-1.0, 0.0).is_err());
        assert!(LossFamily::PoissonSoftRect.loss_d2(1.5, 0.0).is_err());
        assert!(LossFamily::GaussianHalfSquared.loss_value(f64::NAN, 0.0).is_err());
        assert!(LossFamily::PseudoHuber { gamma: 0.0 }.validate().is_err());
    }

    #[test]
    fn extreme_predictors_stay_finite() {
        for fam in [
            LossFamily::LogisticBernoulli,
            LossFamily::PoissonExpLink,
            LossFamily::PoissonSoftRect,
        ] {
            for &z in &[-700.0, -50.0, 0.0, 50.0, 700.0] {
                for &y in &[0.0, 1.0] {
                    let v = [fam.value(y, z), fam.d1(y, z), fam.d2(y, z)];
                    assert!(v.iter().all(|t| t.is_finite()), "{fam:?} y={y} z={z}: {v:?}");
                    assert!(fam.d2(y, z) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn pseudo_huber_matches_definition() {
        let h = LossFamily::PseudoHuber { gamma: 2.0 };
        let (y, z) = (3.0, -1.0);
        let direct = 4.0 * ((1.0 + 4.0_f64).sqrt() - 1.0);
        assert!((h.value(y, z) - direct).abs() < 1e-12);
    }

    #[test]
    fn convex_on_grid() {
        for fam in ALL {
            for yi in 0..4 {
                let y = if matches!(fam, LossFamily::LogisticBernoulli) {
                    (yi % 2) as f64
                } else {
                    yi as f64
                };
                for k in -40..=40 {
                    let z = k as f64 * 0.25;
                    assert!(fam.d2(y, z) >= 0.0);
                }
            }
        }
    }
}
