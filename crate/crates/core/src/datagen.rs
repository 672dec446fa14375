//! Synthetic designs, sparse truths and responses, plus the analytic
//! out-of-sample risk of a linear predictor.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp1, Poisson, StandardNormal};

use crate::error::{AloError, Result};
use crate::family::{sigmoid, softplus, LossFamily};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Structure {
    Iid,
    /// Equicorrelated: `Sigma = (1 - rho) I + rho 11'`.
    Spiked(f64),
    /// `Sigma_jk = rho^|j-k|`.
    Toeplitz(f64),
}

impl Structure {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Structure::Spiked(r) if !(0.0..1.0).contains(&r) => Err(AloError::InvalidCorrelation(r)),
            Structure::Toeplitz(r) if !(r > 0.0 && r < 1.0) => Err(AloError::InvalidCorrelation(r)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec {
    pub n: usize,
    pub p: usize,
    pub structure: Structure,
    pub scale_to_unit_signal: bool,
}

impl DesignSpec {
    pub fn new(n: usize, p: usize, structure: Structure) -> Self {
        DesignSpec { n, p, structure, scale_to_unit_signal: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueLaw {
    /// Zero-mean, unit-variance Laplace (scale `1/sqrt(2)`).
    Laplace01,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSpec {
    pub k: usize,
    pub value_law: ValueLaw,
    pub seed: u64,
}

/// Row covariance `scale * Sigma(structure)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    pub structure: Structure,
    pub p: usize,
    pub scale: f64,
}

impl Covariance {
    pub fn unscaled(structure: Structure, p: usize) -> Result<Self> {
        structure.validate()?;
        Ok(Covariance { structure, p, scale: 1.0 })
    }

    /// Covariance rescaled so that `beta' Sigma beta = 1`.
    pub fn scaled_for(structure: Structure, beta_star: ArrayView1<f64>) -> Result<Self> {
        let base = Covariance::unscaled(structure, beta_star.len())?;
        let signal = base.quad_form(beta_star)?;
        if !(signal > 0.0) {
            return Err(AloError::InvalidInput(
                "cannot scale to unit signal: beta* has zero signal variance".into(),
            ));
        }
        Ok(Covariance { scale: 1.0 / signal, ..base })
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let base = match self.structure {
            Structure::Iid => f64::from(i == j),
            Structure::Spiked(r) => {
                if i == j {
                    1.0
                } else {
                    r
                }
            }
            Structure::Toeplitz(r) => r.powi(i.abs_diff(j) as i32),
        };
        self.scale * base
    }

    pub fn to_dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.p, self.p), |(i, j)| self.entry(i, j))
    }

    /// `v' Sigma v` in `O(p)`.
    pub fn quad_form(&self, v: ArrayView1<f64>) -> Result<f64> {
        if v.len() != self.p {
            return Err(AloError::DimensionMismatch(format!(
                "vector of length {} against a {}x{} covariance",
                v.len(),
                self.p,
                self.p
            )));
        }
        let sq: f64 = v.iter().map(|a| a * a).sum();
        let q = match self.structure {
            Structure::Iid => sq,
            Structure::Spiked(r) => {
                let s: f64 = v.sum();
                (1.0 - r) * sq + r * s * s
            }
            Structure::Toeplitz(r) => {
                // a_j = sum_{i<j} r^(j-i) v_i = r (a_{j-1} + v_{j-1})
                let mut a = 0.0;
                let mut cross = 0.0;
                for j in 1..v.len() {
                    a = r * (a + v[j - 1]);
                    cross += v[j] * a;
                }
                sq + 2.0 * cross
            }
        };
        Ok(self.scale * q)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent ChaCha8 stream for a `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed) ^ stream))
}

/// Combine several integers into one seed.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5151_5151_u64, |h, &p| splitmix64(h ^ p))
}

pub(crate) const STREAM_DESIGN: u64 = 0xD351_6E00;
pub(crate) const STREAM_BETA: u64 = 0xBE7A_0000;
pub(crate) const STREAM_RESPONSE: u64 = 0x7E59_0000;
pub(crate) const STREAM_FOLDS: u64 = 0xF01D_0000;

/// Rows drawn i.i.d. from `N(0, Sigma)`, scaled to unit signal variance
/// when `scale_to_unit_signal` is set (then `beta_star` is required).
pub fn gen_design(spec: &DesignSpec, beta_star: Option<ArrayView1<f64>>, seed: u64) -> Result<Array2<f64>> {
    spec.structure.validate()?;
    if spec.n == 0 || spec.p == 0 {
        return Err(AloError::InvalidInput("design needs n, p >= 1".into()));
    }
    let cov = if spec.scale_to_unit_signal {
        let b = beta_star.ok_or_else(|| {
            AloError::InvalidInput("unit-signal scaling needs the true coefficients".into())
        })?;
        if b.len() != spec.p {
            return Err(AloError::DimensionMismatch(format!(
                "beta* has {} entries, design has p = {}",
                b.len(),
                spec.p
            )));
        }
        Covariance::scaled_for(spec.structure, b)?
    } else {
        Covariance::unscaled(spec.structure, spec.p)?
    };
    let mut rng = stream_rng(seed, STREAM_DESIGN);
    let s = cov.scale.sqrt();
    let mut x = Array2::<f64>::zeros((spec.n, spec.p));
    for mut row in x.rows_mut() {
        match spec.structure {
            Structure::Iid => {
                for v in row.iter_mut() {
                    *v = s * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Structure::Spiked(r) => {
                let u: f64 = rng.sample(StandardNormal);
                let (a, b) = ((1.0 - r).sqrt(), r.sqrt() * u);
                for v in row.iter_mut() {
                    *v = s * (a * rng.sample::<f64, _>(StandardNormal) + b);
                }
            }
            Structure::Toeplitz(r) => {
                // AR(1) recursion: the lower Cholesky factor of the Toeplitz
                // matrix applied row by row.
                let c = (1.0 - r * r).sqrt();
                let mut prev: f64 = rng.sample(StandardNormal);
                row[0] = s * prev;
                for j in 1..spec.p {
                    prev = r * prev + c * rng.sample::<f64, _>(StandardNormal);
                    row[j] = s * prev;
                }
            }
        }
    }
    Ok(x)
}

pub fn gen_beta(spec: &TruthSpec, p: usize) -> Result<Array1<f64>> {
    if spec.k > p {
        return Err(AloError::InvalidInput(format!("k = {} exceeds p = {p}", spec.k)));
    }
    let mut rng = stream_rng(spec.seed, STREAM_BETA);
    let mut beta = Array1::<f64>::zeros(p);
    let mut idx = sample(&mut rng, p, spec.k).into_vec();
    idx.sort_unstable();
    let b = std::f64::consts::FRAC_1_SQRT_2;
    for j in idx {
        beta[j] = match spec.value_law {
            ValueLaw::Fixed(v) => v,
            ValueLaw::Laplace01 => {
                let e: f64 = rng.sample(Exp1);
                if rng.random::<bool>() {
                    b * e
                } else {
                    -b * e
                }
            }
        };
    }
    Ok(beta)
}

pub fn gen_response(
    fam: &LossFamily,
    x: ArrayView2<f64>,
    beta_star: ArrayView1<f64>,
    sigma: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    if x.ncols() != beta_star.len() {
        return Err(AloError::DimensionMismatch(format!(
            "X has {} columns, beta* has {} entries",
            x.ncols(),
            beta_star.len()
        )));
    }
    if !(sigma >= 0.0) {
        return Err(AloError::InvalidInput(format!("noise level must be >= 0, got {sigma}")));
    }
    let eta = x.dot(&beta_star);
    let mut rng = stream_rng(seed, STREAM_RESPONSE);
    let mut y = Array1::<f64>::zeros(eta.len());
    for (yi, &z) in y.iter_mut().zip(eta.iter()) {
        *yi = match fam {
            LossFamily::GaussianHalfSquared => z + sigma * rng.sample::<f64, _>(StandardNormal),
            LossFamily::LogisticBernoulli => {
                let d = Bernoulli::new(sigmoid(z)).map_err(|e| AloError::InvalidInput(e.to_string()))?;
                f64::from(u8::from(d.sample(&mut rng)))
            }
            LossFamily::PoissonExpLink | LossFamily::PoissonSoftRect => {
                let rate = if matches!(fam, LossFamily::PoissonExpLink) { z.exp() } else { softplus(z) };
                if rate <= 0.0 {
                    0.0
                } else {
                    Poisson::new(rate)
                        .map_err(|e| AloError::InvalidInput(e.to_string()))?
                        .sample(&mut rng)
                }
            }
            LossFamily::PseudoHuber { .. } => return Err(AloError::UnsupportedFamily(fam.name())),
        };
    }
    Ok(y)
}

/// `sigma^2 + (b_hat - b*)' Sigma (b_hat - b*)`.
pub fn oracle_linear_risk(
    cov: &Covariance,
    beta_hat: ArrayView1<f64>,
    beta_star: ArrayView1<f64>,
    sigma: f64,
) -> Result<f64> {
    if beta_hat.len() != beta_star.len() {
        return Err(AloError::DimensionMismatch(format!(
            "beta_hat has {} entries, beta* has {}",
            beta_hat.len(),
            beta_star.len()
        )));
    }
    let d = &beta_hat - &beta_star;
    Ok(sigma * sigma + cov.quad_form(d.view())?)
}

/// Same as [`oracle_linear_risk`] for an explicit dense covariance.
pub fn oracle_linear_risk_dense(
    sigma_mat: ArrayView2<f64>,
    beta_hat: ArrayView1<f64>,
    beta_star: ArrayView1<f64>,
    sigma: f64,
) -> Result<f64> {
    let p = beta_star.len();
    if beta_hat.len() != p || sigma_mat.nrows() != p || sigma_mat.ncols() != p {
        return Err(AloError::DimensionMismatch("covariance and coefficient sizes differ".into()));
    }
    let d = &beta_hat - &beta_star;
    Ok(sigma * sigma + d.dot(&sigma_mat.dot(&d)))
}

/// A complete synthetic regression problem.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub beta_star: Array1<f64>,
    pub cov: Covariance,
}

pub fn simulate(
    fam: &LossFamily,
    design: &DesignSpec,
    truth: &TruthSpec,
    sigma: f64,
    seed: u64,
) -> Result<Simulation> {
    let beta_star = gen_beta(truth, design.p)?;
    let x = gen_design(design, Some(beta_star.view()), seed)?;
    let y = gen_response(fam, x.view(), beta_star.view(), sigma, seed)?;
    let cov = if design.scale_to_unit_signal {
        Covariance::scaled_for(design.structure, beta_star.view())?
    } else {
        Covariance::unscaled(design.structure, design.p)?
    };
    Ok(Simulation { x, y, beta_star, cov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn toeplitz_entries() {
        let c = Covariance::unscaled(Structure::Toeplitz(0.9), 3).unwrap();
        let d = c.to_dense();
        let want = array![[1.0, 0.9, 0.81], [0.9, 1.0, 0.9], [0.81, 0.9, 1.0]];
        assert!((&d - &want).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn spiked_zero_is_identity() {
        let c = Covariance::unscaled(Structure::Spiked(0.0), 4).unwrap();
        assert_eq!(c.to_dense(), Array2::<f64>::eye(4));
    }

    #[test]
    fn quad_form_matches_dense() {
        let v = array![0.3, -1.0, 2.0, 0.5, 0.0];
        for s in [Structure::Iid, Structure::Spiked(0.4), Structure::Toeplitz(0.7)] {
            let c = Covariance::unscaled(s, 5).unwrap();
            let dense = v.dot(&c.to_dense().dot(&v));
            assert!((c.quad_form(v.view()).unwrap() - dense).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_correlations() {
        assert!(matches!(
            Covariance::unscaled(Structure::Spiked(1.0), 3),
            Err(AloError::InvalidCorrelation(_))
        ));
        assert!(matches!(
            Covariance::unscaled(Structure::Toeplitz(0.0), 3),
            Err(AloError::InvalidCorrelation(_))
        ));
    }

    #[test]
    fn oracle_examples() {
        let c = Covariance::unscaled(Structure::Iid, 3).unwrap();
        let b = array![1.0, 2.0, 3.0];
        assert_eq!(oracle_linear_risk(&c, b.view(), b.view(), 0.5).unwrap(), 0.25);
        let e1 = array![2.0, 2.0, 3.0];
        assert_eq!(oracle_linear_risk(&c, e1.view(), b.view(), 2.0).unwrap(), 5.0);
        assert!(oracle_linear_risk(&c, array![1.0].view(), b.view(), 1.0).is_err());
    }

    #[test]
    fn fixed_truth_and_dense_truth() {
        let b = gen_beta(&TruthSpec { k: 50, value_law: ValueLaw::Fixed(1.0 / 3.0), seed: 1 }, 1000)
            .unwrap();
        assert_eq!(b.iter().filter(|&&v| v != 0.0).count(), 50);
        assert!(b.iter().all(|&v| v == 0.0 || v == 1.0 / 3.0));
        let d = gen_beta(&TruthSpec { k: 7, value_law: ValueLaw::Laplace01, seed: 2 }, 7).unwrap();
        assert!(d.iter().all(|&v| v != 0.0));
        assert!(gen_beta(&TruthSpec { k: 8, value_law: ValueLaw::Laplace01, seed: 2 }, 7).is_err());
    }

    #[test]
    fn noiseless_gaussian_response() {
        let x = array![[1.0, 2.0], [0.5, -1.0]];
        let b = array![1.0, 1.0];
        let y = gen_response(&LossFamily::GaussianHalfSquared, x.view(), b.view(), 0.0, 3).unwrap();
        assert_eq!(y, array![3.0, -0.5]);
        assert!(matches!(
            gen_response(&LossFamily::PseudoHuber { gamma: 1.0 }, x.view(), b.view(), 1.0, 3),
            Err(AloError::UnsupportedFamily(_))
        ));
    }
}
