use std::sync::OnceLock;

use ndarray::{Array1, Array2, Axis};

use crate::error::{AloError, Result};

/// Design matrix (rows are observations) and response vector.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    spectral_sq: OnceLock<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(AloError::DimensionMismatch(format!(
                "X has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(AloError::InvalidInput("empty design matrix".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(AloError::InvalidInput("non-finite entry in X or y".into()));
        }
        let x = x.as_standard_layout().into_owned();
        Ok(Dataset { x, y, spectral_sq: OnceLock::new() })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn y(&self) -> &Array1<f64> {
        &self.y
    }

    pub fn into_parts(self) -> (Array2<f64>, Array1<f64>) {
        (self.x, self.y)
    }

    /// Squared spectral norm `||X||_2^2`, estimated once by power iteration
    /// and slightly inflated so it bounds the true value.
    pub fn spectral_norm_sq(&self) -> f64 {
        *self.spectral_sq.get_or_init(|| power_iteration(&self.x) * (1.0 + 1e-6))
    }

    /// Copy with observation `i` physically removed.
    pub fn without_row(&self, i: usize) -> Result<Dataset> {
        if i >= self.n() {
            return Err(AloError::InvalidInput(format!("row {i} out of range (n = {})", self.n())));
        }
        let keep: Vec<usize> = (0..self.n()).filter(|&r| r != i).collect();
        Dataset::new(self.x.select(Axis(0), &keep), self.y.select(Axis(0), &keep))
    }

    /// Copy with rows reordered so that new row `r` is old row `perm[r]`.
    pub fn permuted_rows(&self, perm: &[usize]) -> Result<Dataset> {
        let mut seen = vec![false; self.n()];
        if perm.len() != self.n() || perm.iter().any(|&r| r >= self.n() || std::mem::replace(&mut seen[r], true)) {
            return Err(AloError::InvalidInput("not a permutation of the rows".into()));
        }
        Dataset::new(self.x.select(Axis(0), perm), self.y.select(Axis(0), perm))
    }
}

fn power_iteration(x: &Array2<f64>) -> f64 {
    let p = x.ncols();
    // Deterministic, non-degenerate start.
    let mut v = Array1::from_shape_fn(p, |j| 1.0 + ((j * 7919) % 13) as f64 / 13.0);
    let mut norm = v.dot(&v).sqrt();
    v /= norm;
    let mut est = 0.0;
    for _ in 0..500 {
        let u = x.dot(&v);
        let mut w = x.t().dot(&u);
        norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        w /= norm;
        let prev = est;
        est = norm;
        v = w;
        if (est - prev).abs() <= 1e-10 * est {
            break;
        }
    }
    est
}
