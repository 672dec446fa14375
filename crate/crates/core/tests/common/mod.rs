#![allow(dead_code)]

use alo_core::{simulate, Dataset, DesignSpec, LossFamily, Simulation, Structure, TruthSpec, ValueLaw};
use ndarray::{Array1, Array2};

pub fn sim(fam: LossFamily, n: usize, p: usize, k: usize, structure: Structure, seed: u64) -> (Dataset, Simulation) {
    let truth = TruthSpec { k, value_law: ValueLaw::Laplace01, seed };
    let s = simulate(&fam, &DesignSpec::new(n, p, structure), &truth, 1.0, seed).unwrap();
    (Dataset::new(s.x.clone(), s.y.clone()).unwrap(), s)
}

pub fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[[i, c]].abs().total_cmp(&m[[j, c]].abs())).unwrap();
        for j in 0..n {
            m.swap([c, j], [piv, j]);
            inv.swap([c, j], [piv, j]);
        }
        let d = m[[c, c]];
        for j in 0..n {
            m[[c, j]] /= d;
            inv[[c, j]] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[[r, c]];
                for j in 0..n {
                    m[[r, j]] -= f * m[[c, j]];
                    inv[[r, j]] -= f * inv[[c, j]];
                }
            }
        }
    }
    inv
}
