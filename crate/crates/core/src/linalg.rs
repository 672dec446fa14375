//! Dense symmetric kernels shared by the solver and the ALO engine.
//!
//! Everything here works on dense row-major `ndarray` matrices. The one
//! factorization used throughout is a lower Cholesky factor; the hat-matrix
//! diagonals are computed either through the `p x p` system directly or
//! through the `n x n` matrix-inversion-lemma system when `n < p` and the
//! penalty curvature is strictly positive.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{AloError, Result};

/// Relative diagonal jitter added once when a factorization fails.
pub const JITTER_REL: f64 = 1e-10;
/// Pivots at or below this fraction of the largest diagonal entry fail.
pub const PIVOT_REL: f64 = 1e-12;

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = 4 * c;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut s = (s0 + s1) + (s2 + s3);
    for i in 4 * chunks..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cholesky factor `L` (lower triangular, `L L' = A`) of a symmetric
/// positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: Array2<f64>,
    jitter: f64,
}

impl SpdFactor {
    /// Factor `a`, retrying once with `JITTER_REL * max(diag)` added to the
    /// diagonal when the plain factorization fails.
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        check_square(a)?;
        match Self::strict(a) {
            Ok(f) => Ok(f),
            Err(_) => {
                let jitter = JITTER_REL * max_diag(a).max(f64::MIN_POSITIVE);
                let mut shifted = a.to_owned();
                for i in 0..shifted.nrows() {
                    shifted[[i, i]] += jitter;
                }
                let mut f = Self::strict(shifted.view())?;
                f.jitter = jitter;
                Ok(f)
            }
        }
    }

    /// Factor `a` without any jitter.
    pub fn strict(a: ArrayView2<f64>) -> Result<Self> {
        check_square(a)?;
        let n = a.nrows();
        let tiny = PIVOT_REL * max_diag(a);
        let mut l = Array2::<f64>::zeros((n, n));
        {
            let ls = l.as_slice_mut().expect("standard layout");
            for j in 0..n {
                for k in 0..j {
                    let s = a[[j, k]] - dot(&ls[j * n..j * n + k], &ls[k * n..k * n + k]);
                    ls[j * n + k] = s / ls[k * n + k];
                }
                let row = &ls[j * n..j * n + j];
                let d = a[[j, j]] - dot(row, row);
                if !(d > tiny) || !d.is_finite() {
                    return Err(AloError::NotPositiveDefinite { dim: n });
                }
                ls[j * n + j] = d.sqrt();
            }
        }
        Ok(SpdFactor { lower: l, jitter: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    /// Diagonal shift that was needed to factor the matrix (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `L^{-1} B` for a `p x m` right-hand side.
    pub fn forward(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let p = self.dim();
        assert_eq!(b.nrows(), p);
        let m = b.ncols();
        let mut z = b.as_standard_layout().into_owned();
        let ls = self.lower.as_slice().expect("standard layout");
        let zs = z.as_slice_mut().expect("standard layout");
        for j in 0..p {
            let (done, rest) = zs.split_at_mut(j * m);
            let row = &mut rest[..m];
            for k in 0..j {
                let c = ls[j * p + k];
                if c != 0.0 {
                    axpy(-c, &done[k * m..(k + 1) * m], row);
                }
            }
            let inv = 1.0 / ls[j * p + j];
            row.iter_mut().for_each(|v| *v *= inv);
        }
        z
    }

    /// `L^{-T} Y` for a `p x m` right-hand side.
    fn backward(&self, mut y: Array2<f64>) -> Array2<f64> {
        let p = self.dim();
        let m = y.ncols();
        let ls = self.lower.as_slice().expect("standard layout");
        let ys = y.as_slice_mut().expect("standard layout");
        for j in (0..p).rev() {
            let (head, tail) = ys.split_at_mut((j + 1) * m);
            let row = &mut head[j * m..];
            for k in (j + 1)..p {
                let c = ls[k * p + j];
                if c != 0.0 {
                    axpy(-c, &tail[(k - j - 1) * m..(k - j) * m], row);
                }
            }
            let inv = 1.0 / ls[j * p + j];
            row.iter_mut().for_each(|v| *v *= inv);
        }
        y
    }

    /// Solve `A X = B`.
    pub fn solve(&self, b: ArrayView2<f64>) -> Array2<f64> {
        self.backward(self.forward(b))
    }

    pub fn solve_vec(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let p = self.dim();
        assert_eq!(b.len(), p);
        let ls = self.lower.as_slice().expect("standard layout");
        let mut x = b.to_vec();
        for j in 0..p {
            let s = x[j] - dot(&ls[j * p..j * p + j], &x[..j]);
            x[j] = s / ls[j * p + j];
        }
        for j in (0..p).rev() {
            let mut s = x[j];
            for k in (j + 1)..p {
                s -= ls[k * p + j] * x[k];
            }
            x[j] = s / ls[j * p + j];
        }
        Array1::from(x)
    }

    /// Squared norms `||L^{-1} x||^2` of each column of `cols` (`p x m`).
    pub fn inverse_quad_forms(&self, cols: ArrayView2<f64>) -> Array1<f64> {
        let z = self.forward(cols);
        let mut out = Array1::<f64>::zeros(z.ncols());
        for row in z.rows() {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v * v;
            }
        }
        out
    }

    pub fn inverse(&self) -> Array2<f64> {
        self.solve(Array2::<f64>::eye(self.dim()).view())
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.lower.dot(&self.lower.t())
    }
}

fn check_square(a: ArrayView2<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(AloError::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn max_diag(a: ArrayView2<f64>) -> f64 {
    a.diag().iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
}

fn check_symmetric(a: ArrayView2<f64>) -> Result<()> {
    check_square(a)?;
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let gap = (a[[i, j]] - a[[j, i]]).abs();
            if gap > 1e-10 * scale {
                return Err(AloError::NotSymmetric { row: i, col: j, gap });
            }
        }
    }
    Ok(())
}

/// LU factorization with partial pivoting of a small dense matrix.
pub(crate) struct DenseLu {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    /// `None` when a pivot falls below `1e-13` of the largest entry.
    pub(crate) fn new(mut a: Array2<f64>) -> Option<Self> {
        let m = a.nrows();
        let big = a.iter().fold(0.0_f64, |v, x| v.max(x.abs()));
        let mut perm: Vec<usize> = (0..m).collect();
        for c in 0..m {
            let piv = (c..m).max_by(|&i, &j| a[[i, c]].abs().total_cmp(&a[[j, c]].abs()))?;
            if !(a[[piv, c]].abs() > 1e-13 * big) {
                return None;
            }
            if piv != c {
                for j in 0..m {
                    a.swap([c, j], [piv, j]);
                }
                perm.swap(c, piv);
            }
            let d = a[[c, c]];
            for r in c + 1..m {
                let f = a[[r, c]] / d;
                a[[r, c]] = f;
                for j in c + 1..m {
                    a[[r, j]] -= f * a[[c, j]];
                }
            }
        }
        Some(DenseLu { lu: a, perm })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Array1<f64> {
        let m = self.perm.len();
        let mut x: Array1<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..m {
            for c in 0..r {
                x[r] -= self.lu[[r, c]] * x[c];
            }
        }
        for r in (0..m).rev() {
            for c in r + 1..m {
                x[r] -= self.lu[[r, c]] * x[c];
            }
            x[r] /= self.lu[[r, r]];
        }
        x
    }
}

/// Solve `A X = B` for symmetric positive-definite `A`.
pub fn chol_solve(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_symmetric(a)?;
    if b.nrows() != a.nrows() {
        return Err(AloError::DimensionMismatch(format!(
            "A is {}x{} but B has {} rows",
            a.nrows(),
            a.ncols(),
            b.nrows()
        )));
    }
    Ok(SpdFactor::new(a)?.solve(b))
}

/// `h_i = w_i * x_i' A^{-1} x_i` for every row of `x`.
pub fn quad_form_diag(
    x: ArrayView2<f64>,
    factor: &SpdFactor,
    w: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if factor.dim() != x.ncols() || w.len() != x.nrows() {
        return Err(AloError::DimensionMismatch(format!(
            "X is {}x{}, factor dim {}, weights {}",
            x.nrows(),
            x.ncols(),
            factor.dim(),
            w.len()
        )));
    }
    let g = factor.inverse_quad_forms(x.t());
    Ok(&g * &w)
}

/// Hat diagonals via the `n x n` identity
/// `X (X'G^2 X + L)^{-1} X' = X L^{-1} X' - X L^{-1} X' G (I + G X L^{-1} X' G)^{-1} G X L^{-1} X'`.
pub fn woodbury_quad_form_diag(
    x: ArrayView2<f64>,
    lambda_curv: ArrayView1<f64>,
    ell2: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    Ok(woodbury_leverage(x, lambda_curv, ell2)?.h)
}

/// Self-sensitivity of each observation.
///
/// `g_i = x_i' A^{-1} x_i` and `h_i = ell2_i * g_i` with
/// `A = X' diag(ell2) X + diag(curv)`.
#[derive(Debug, Clone)]
pub struct Leverage {
    pub g: Array1<f64>,
    pub h: Array1<f64>,
    /// `1 - h_i`, computed without cancellation where the path allows it.
    pub one_minus_h: Array1<f64>,
}

/// `X' diag(w) X` for nonnegative weights.
pub fn weighted_gram(x: ArrayView2<f64>, w: ArrayView1<f64>) -> Array2<f64> {
    let mut xs = x.to_owned();
    for (mut row, &wi) in xs.rows_mut().into_iter().zip(w) {
        let s = wi.max(0.0).sqrt();
        row.mapv_inplace(|v| v * s);
    }
    xs.t().dot(&xs)
}

/// Direct `p x p` path.
pub fn direct_leverage(
    x: ArrayView2<f64>,
    curv: ArrayView1<f64>,
    ell2: ArrayView1<f64>,
) -> Result<Leverage> {
    check_leverage_dims(x, curv, ell2)?;
    let mut a = weighted_gram(x, ell2);
    for (j, c) in curv.iter().enumerate() {
        a[[j, j]] += c;
    }
    let factor = SpdFactor::new(a.view())?;
    let g = factor.inverse_quad_forms(x.t());
    let h = &g * &ell2;
    let one_minus_h = h.mapv(|v| 1.0 - v);
    Ok(Leverage { g, h, one_minus_h })
}

/// Matrix-inversion-lemma `n x n` path. Requires every `curv_j > 0`.
pub fn woodbury_leverage(
    x: ArrayView2<f64>,
    curv: ArrayView1<f64>,
    ell2: ArrayView1<f64>,
) -> Result<Leverage> {
    check_leverage_dims(x, curv, ell2)?;
    if curv.iter().any(|&c| !(c > 0.0)) {
        return Err(AloError::InvalidInput(
            "Woodbury path needs strictly positive penalty curvature".into(),
        ));
    }
    let n = x.nrows();
    let mut xs = x.to_owned();
    let inv_sqrt: Array1<f64> = curv.mapv(|c| 1.0 / c.sqrt());
    for mut row in xs.rows_mut() {
        row *= &inv_sqrt;
    }
    // C = X L^{-1} X'
    let c = xs.dot(&xs.t());
    let gamma: Array1<f64> = ell2.mapv(|v| v.max(0.0).sqrt());
    let mut k = c.clone();
    for i in 0..n {
        for j in 0..n {
            k[[i, j]] *= gamma[i] * gamma[j];
        }
    }
    let gmat = k.clone();
    for i in 0..n {
        k[[i, i]] += 1.0;
    }
    let factor = SpdFactor::strict(k.view()).map_err(|_| AloError::SingularInnerMatrix)?;
    // h_i = (K^{-1} G)_ii = sum_k (L^{-1})_{ki} (L^{-1} G)_{ki}
    let w = factor.forward(gmat.view());
    let linv = factor.forward(Array2::<f64>::eye(n).view());
    // and, since K = I + G, 1 - h_i = (K^{-1})_ii = ||L^{-1} e_i||^2.
    let mut h = Array1::<f64>::zeros(n);
    let mut one_minus_h = Array1::<f64>::zeros(n);
    for (lrow, wrow) in linv.rows().into_iter().zip(w.rows()) {
        for (i, (a, b)) in lrow.iter().zip(wrow).enumerate() {
            h[i] += a * b;
            one_minus_h[i] += a * a;
        }
    }
    let mut g = Array1::<f64>::zeros(n);
    for i in 0..n {
        if ell2[i] > 1e-150 {
            g[i] = h[i] / ell2[i];
        } else {
            // g_i = C_ii - ||L^{-1} G C e_i||^2
            let col: Array1<f64> = c.column(i).iter().zip(&gamma).map(|(v, gk)| v * gk).collect();
            let z = factor.forward(col.view().insert_axis(Axis(1)));
            g[i] = c[[i, i]] - z.iter().map(|v| v * v).sum::<f64>();
            h[i] = ell2[i] * g[i];
        }
    }
    Ok(Leverage { g, h, one_minus_h })
}

fn check_leverage_dims(
    x: ArrayView2<f64>,
    curv: ArrayView1<f64>,
    ell2: ArrayView1<f64>,
) -> Result<()> {
    if curv.len() != x.ncols() || ell2.len() != x.nrows() {
        return Err(AloError::DimensionMismatch(format!(
            "X is {}x{}, curvature {}, loss curvature {}",
            x.nrows(),
            x.ncols(),
            curv.len(),
            ell2.len()
        )));
    }
    Ok(())
}

/// Solve `(X' diag(ell2) X + diag(curv)) d = rhs` through the `n x n` system.
pub fn woodbury_solve(
    x: ArrayView2<f64>,
    curv: ArrayView1<f64>,
    ell2: ArrayView1<f64>,
    rhs: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    check_leverage_dims(x, curv, ell2)?;
    let n = x.nrows();
    let gamma: Array1<f64> = ell2.mapv(|v| v.max(0.0).sqrt());
    let inv_curv = curv.mapv(|c| 1.0 / c);
    // B = G X L^{-1/2}
    let inv_sqrt = curv.mapv(|c| 1.0 / c.sqrt());
    let mut b = x.to_owned();
    for (mut row, gi) in b.rows_mut().into_iter().zip(&gamma) {
        row *= &inv_sqrt;
        row *= *gi;
    }
    let mut k = b.dot(&b.t());
    for i in 0..n {
        k[[i, i]] += 1.0;
    }
    let factor = SpdFactor::strict(k.view()).map_err(|_| AloError::SingularInnerMatrix)?;
    let u = &rhs * &inv_curv;
    let v = x.dot(&u) * &gamma;
    let s = factor.solve_vec(v.view()) * &gamma;
    let corr = x.t().dot(&s) * &inv_curv;
    Ok(u - corr)
}

/// Which linear system computes the hat diagonals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionPath {
    /// Factor the `p x p` matrix `diag(curv) + X' diag(ell2) X`.
    DirectP,
    /// Factor the `n x n` matrix `I + G X L^{-1} X' G`.
    WoodburyN,
    /// Restrict to the columns of a supplied active set, then go direct.
    ActiveSetS,
}

impl InversionPath {
    pub fn rationale(&self) -> &'static str {
        match self {
            InversionPath::DirectP => "p x p Cholesky, O(p^3 + n p^2)",
            InversionPath::WoodburyN => "n < p with positive curvature, O(n^3 + n^2 p)",
            InversionPath::ActiveSetS => "restricted to the active set, O(s^3 + n s^2)",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InversionPath::DirectP => "direct",
            InversionPath::WoodburyN => "woodbury",
            InversionPath::ActiveSetS => "active-set",
        }
    }

    /// Whether this path may be used for the given inputs.
    pub fn is_legal(&self, curv: &[f64], active: Option<&[usize]>, p: usize) -> bool {
        match self {
            InversionPath::DirectP => true,
            InversionPath::WoodburyN => !curv.is_empty() && curv.iter().all(|&c| c > 0.0),
            InversionPath::ActiveSetS => active.is_some_and(|s| s.len() <= p),
        }
    }
}

/// Default path: Woodbury when `n < p` and all curvature is positive, the
/// active set when one is given, direct otherwise.
pub fn select_path(n: usize, curv: &[f64], active: Option<&[usize]>) -> InversionPath {
    let p = curv.len();
    if n < p && InversionPath::WoodburyN.is_legal(curv, active, p) {
        InversionPath::WoodburyN
    } else if active.is_some() {
        InversionPath::ActiveSetS
    } else {
        InversionPath::DirectP
    }
}

/// Copy the listed columns of `x` into a new matrix.
pub fn gather_columns(x: ArrayView2<f64>, cols: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((x.nrows(), cols.len()));
    for (i, row) in x.rows().into_iter().enumerate() {
        let mut orow = out.row_mut(i);
        for (o, &c) in orow.iter_mut().zip(cols) {
            *o = row[c];
        }
    }
    out
}

/// Hat leverage restricted to `cols` (or all columns), honoring a forced
/// path when given. `curv` is indexed like the retained columns.
pub fn leverage(
    x: ArrayView2<f64>,
    cols: Option<&[usize]>,
    curv: ArrayView1<f64>,
    ell2: ArrayView1<f64>,
    path: Option<InversionPath>,
) -> Result<(Leverage, InversionPath)> {
    let n = x.nrows();
    let chosen = match path {
        Some(p) => {
            let width = cols.map_or(x.ncols(), |c| c.len());
            if !p.is_legal(curv.as_slice().unwrap_or(&curv.to_vec()), cols, width.max(x.ncols()))
            {
                return Err(AloError::InvalidInput(format!(
                    "inversion path {} is not legal here",
                    p.name()
                )));
            }
            p
        }
        None => select_path(n, &curv.to_vec(), cols),
    };
    let restricted;
    let xv = match cols {
        Some(c) => {
            restricted = gather_columns(x, c);
            restricted.view()
        }
        None => x,
    };
    if xv.ncols() == 0 {
        let z = Array1::<f64>::zeros(n);
        let one = Array1::from_elem(n, 1.0);
        return Ok((Leverage { g: z.clone(), h: z, one_minus_h: one }, chosen));
    }
    let lev = match chosen {
        InversionPath::WoodburyN => woodbury_leverage(xv, curv, ell2)?,
        InversionPath::ActiveSetS => {
            let c = curv.to_vec();
            if xv.nrows() < xv.ncols() && c.iter().all(|&v| v > 0.0) {
                woodbury_leverage(xv, curv, ell2)?
            } else {
                direct_leverage(xv, curv, ell2)?
            }
        }
        InversionPath::DirectP => direct_leverage(xv, curv, ell2)?,
    };
    Ok((lev, chosen))
}

/// Check the block-inverse identity for `M = [[A, B], [B', C]]`:
/// with `D = (C - B'A^{-1}B)^{-1}`,
/// `M^{-1} = [[A^{-1} + A^{-1}B D B'A^{-1}, -A^{-1}B D], [-D B'A^{-1}, D]]`.
pub fn block_inverse_check(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    c: ArrayView2<f64>,
) -> Result<bool> {
    let (k, m) = (a.nrows(), c.nrows());
    if a.ncols() != k || c.ncols() != m || b.nrows() != k || b.ncols() != m {
        return Err(AloError::DimensionMismatch("block shapes do not conform".into()));
    }
    let mut full = Array2::<f64>::zeros((k + m, k + m));
    full.slice_mut(ndarray::s![..k, ..k]).assign(&a);
    full.slice_mut(ndarray::s![..k, k..]).assign(&b);
    full.slice_mut(ndarray::s![k.., ..k]).assign(&b.t());
    full.slice_mut(ndarray::s![k.., k..]).assign(&c);
    check_symmetric(full.view())?;
    let explicit = SpdFactor::strict(full.view())?.inverse();

    let a_inv = SpdFactor::strict(a)?.inverse();
    let a_inv_b = a_inv.dot(&b);
    let schur = &c - &b.t().dot(&a_inv_b);
    let d = SpdFactor::strict(schur.view())?.inverse();
    let top_right = -a_inv_b.dot(&d);
    let top_left = &a_inv + &a_inv_b.dot(&d).dot(&a_inv_b.t());
    let mut assembled = Array2::<f64>::zeros((k + m, k + m));
    assembled.slice_mut(ndarray::s![..k, ..k]).assign(&top_left);
    assembled.slice_mut(ndarray::s![..k, k..]).assign(&top_right);
    assembled.slice_mut(ndarray::s![k.., ..k]).assign(&top_right.t());
    assembled.slice_mut(ndarray::s![k.., k..]).assign(&d);

    let diff = (&assembled - &explicit).mapv(|v| v * v).sum().sqrt();
    let scale = explicit.mapv(|v| v * v).sum().sqrt().max(1.0);
    Ok(diff <= 1e-9 * scale)
}
