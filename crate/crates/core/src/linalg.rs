//! Dense linear algebra: SVD least squares, ridge, Gram products and a small
//! Cholesky for the inverse-diagonal entries every interval formula needs.
//!
//! The SVD itself comes from nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

pub fn ensure_finite(a: &DMatrix<f64>) -> Result<()> {
    if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos % a.nrows(), pos / a.nrows());
        return Err(Error::InvalidInput(format!("non-finite entry at ({r}, {c})")));
    }
    Ok(())
}

fn ensure_nonempty(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    Ok(())
}

/// Thin SVD with singular values sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    /// Singular values below max(n, p)·eps·s_max count as zero.
    pub fn rank_threshold(&self) -> f64 {
        let dim = self.u.nrows().max(self.v.nrows()) as f64;
        dim * f64::EPSILON * self.s.get(0).copied().unwrap_or(0.0)
    }

    pub fn rank(&self) -> usize {
        let thr = self.rank_threshold();
        self.s.iter().filter(|&&s| s > thr).count()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * self.v.transpose()
    }

    /// V · diag(f(s)) · Uᵀ y
    fn apply_spectral(&self, y: &DVector<f64>, f: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut uty = self.u.tr_mul(y);
        for (c, &s) in uty.iter_mut().zip(self.s.iter()) {
            *c *= f(s);
        }
        &self.v * uty
    }
}

pub fn svd(a: &DMatrix<f64>) -> Result<SvdFactors> {
    ensure_nonempty(a)?;
    ensure_finite(a)?;
    let dec = a.clone().svd(true, true);
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
    order.sort_by(|&i, &j| dec.singular_values[j].total_cmp(&dec.singular_values[i]));
    let s = DVector::from_iterator(order.len(), order.iter().map(|&i| dec.singular_values[i]));
    let u = DMatrix::from_columns(&order.iter().map(|&i| u.column(i)).collect::<Vec<_>>());
    let v = DMatrix::from_columns(&order.iter().map(|&i| v_t.row(i).transpose()).collect::<Vec<_>>());
    Ok(SvdFactors { u, s, v })
}

pub fn singular_values(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    ensure_nonempty(a)?;
    ensure_finite(a)?;
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(DVector::from_vec(s))
}

/// Smallest of the min(n, d) singular values.
pub fn min_singular_value(a: &DMatrix<f64>) -> Result<f64> {
    let s = singular_values(a)?;
    Ok(s[s.len() - 1])
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub beta: DVector<f64>,
    pub residual: DVector<f64>,
    pub rank: usize,
}

/// beta = X⁺y through the SVD, residual = y − X·beta.
pub fn least_squares_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!(
            "design has {} rows but response has {} entries",
            x.nrows(),
            y.len()
        )));
    }
    let f = svd(x)?;
    let thr = f.rank_threshold();
    let beta = f.apply_spectral(y, |s| if s > thr { 1.0 / s } else { 0.0 });
    let residual = y - x * &beta;
    Ok(LeastSquares { beta, residual, rank: f.rank() })
}

#[derive(Debug, Clone)]
pub struct RidgeSolution {
    pub beta: DVector<f64>,
    /// Set when w2 = 0 and X was rank deficient, so the answer is X⁺y.
    pub used_pseudo_inverse: bool,
}

/// Solves (XᵀX + w2·I) beta = Xᵀy.
pub fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>, w2: f64) -> Result<RidgeSolution> {
    if !(w2 >= 0.0 && w2.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge weight {w2} must be nonnegative")));
    }
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput("design and response lengths differ".into()));
    }
    let f = svd(x)?;
    let thr = f.rank_threshold();
    let deficient = f.rank() < x.ncols();
    if w2 == 0.0 {
        let beta = f.apply_spectral(y, |s| if s > thr { 1.0 / s } else { 0.0 });
        if deficient {
            log::warn!("ridge_solve: w2 = 0 with rank-deficient design, using pseudo-inverse");
        }
        return Ok(RidgeSolution { beta, used_pseudo_inverse: deficient });
    }
    let beta = f.apply_spectral(y, |s| s / (s * s + w2));
    Ok(RidgeSolution { beta, used_pseudo_inverse: false })
}

/// AᵀA, computed on the upper triangle and mirrored so it is exactly symmetric.
pub fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.ncols();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        let ci = a.column(i);
        for j in i..d {
            let v = ci.dot(&a.column(j));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = s.clone();
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    symmetrize(s).symmetric_eigenvalues().min()
}

/// Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    l: DMatrix<f64>,
    min_pivot: f64,
}

impl SpdFactor {
    pub fn new(s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() || s.nrows() == 0 {
            return Err(Error::InvalidInput("expected a nonempty square matrix".into()));
        }
        ensure_finite(s)?;
        let s = symmetrize(s);
        let n = s.nrows();
        let scale = (0..n).map(|i| s[(i, i)].abs()).fold(0.0, f64::max);
        let tol = n as f64 * f64::EPSILON * scale;
        let mut l = DMatrix::zeros(n, n);
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let mut d = s[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            min_pivot = min_pivot.min(d);
            if !(d > tol) {
                return Err(Error::Singular { pivot: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut v = s[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / djj;
            }
        }
        Ok(SpdFactor { l, min_pivot })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut z = b.clone();
        for i in 0..n {
            let mut v = z[i];
            for k in 0..i {
                v -= self.l[(i, k)] * z[k];
            }
            z[i] = v / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = z[i];
            for k in (i + 1)..n {
                v -= self.l[(k, i)] * z[k];
            }
            z[i] = v / self.l[(i, i)];
        }
        z
    }

    /// Row j of S⁻¹ (equal to column j by symmetry).
    pub fn inverse_row(&self, j: usize) -> DVector<f64> {
        let mut e = DVector::zeros(self.dim());
        e[j] = 1.0;
        self.solve(&e)
    }

    pub fn inverse_diag_entry(&self, j: usize) -> f64 {
        self.inverse_row(j)[j]
    }

    pub fn inverse_diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|j| self.inverse_diag_entry(j)))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = (0..self.dim()).map(|j| self.inverse_row(j)).collect();
        symmetrize(&DMatrix::from_columns(&cols))
    }
}

/// eⱼᵀ S⁻¹ eⱼ
pub fn inverse_diag_entry(s: &DMatrix<f64>, j: usize) -> Result<f64> {
    if j >= s.nrows() {
        return Err(Error::InvalidParameter(format!("index {j} out of range")));
    }
    Ok(SpdFactor::new(s)?.inverse_diag_entry(j))
}

pub fn inverse_row(s: &DMatrix<f64>, j: usize) -> Result<DVector<f64>> {
    if j >= s.nrows() {
        return Err(Error::InvalidParameter(format!("index {j} out of range")));
    }
    Ok(SpdFactor::new(s)?.inverse_row(j))
}

/// ‖X⁺‖²_F = Σ 1/sᵢ² over the nonzero singular values.
pub fn pinv_frobenius2(x: &DMatrix<f64>) -> Result<f64> {
    let f = svd(x)?;
    let thr = f.rank_threshold();
    Ok(f.s.iter().filter(|&&s| s > thr).map(|s| 1.0 / (s * s)).sum())
}
