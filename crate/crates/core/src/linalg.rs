//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra` column-major storage over `Complex64`. `vec`
//! stacks columns, which fixes the Kronecker conventions used by the
//! eavesdropper quadratic forms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;
pub type RealMatrix = DMatrix<f64>;

pub const LN2: f64 = std::f64::consts::LN_2;

/// Relative slack used by [`is_psd`].
pub const PSD_RELATIVE_TOL: f64 = 1e-9;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Square complex matrix with `A = A^H` and an exactly real diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    /// Wraps `a` after checking that it is Hermitian to `1e-12` (max-abs);
    /// the stored matrix is the exact Hermitian part.
    pub fn new(a: ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
        }
        let scale = 1.0 + max_abs(&a);
        let skew = max_abs(&(&a - a.adjoint()));
        if skew > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!(
                "matrix is not Hermitian (skew part {skew:e})"
            )));
        }
        hermitize(&a)
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n, n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self(ComplexMatrix::identity(n, n) * c64(s, 0.0))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = ComplexMatrix::zeros(n, n);
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = c64(v, 0.0);
        }
        Self(m)
    }

    /// `v v^H`
    pub fn outer(v: &ComplexVector) -> Self {
        let m = v * v.adjoint();
        hermitize(&m).expect("outer product is square")
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * c64(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `G^H A G`
    pub fn congruence(&self, g: &ComplexMatrix) -> Self {
        hermitize(&(g.adjoint() * &self.0 * g)).expect("congruence is square")
    }

    /// `Re Tr(A B)`; exact for Hermitian pairs.
    pub fn inner(&self, other: &Self) -> f64 {
        trace_product(&self.0, &other.0).re
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }
}

/// Returns `(A + A^H) / 2` with the diagonal imaginary parts set to zero.
pub fn hermitize(a: &ComplexMatrix) -> Result<HermitianMatrix> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    let n = a.nrows();
    let mut h = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        h[(j, j)] = c64(a[(j, j)].re, 0.0);
        for i in (j + 1)..n {
            let v = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
    }
    Ok(HermitianMatrix(h))
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    assert_eq!(a.ncols(), b.nrows());
    assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Lower Cholesky factor of a Hermitian matrix, or `None` when a pivot is
/// not strictly positive. The complex factorization in `nalgebra` accepts
/// indefinite input (complex square roots), so pivots are checked here.
pub fn cholesky_lower(a: &ComplexMatrix) -> Option<ComplexMatrix> {
    let n = a.nrows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = c64(d, 0.0);
        let inv = 1.0 / d;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v * inv;
        }
    }
    Some(l)
}

/// `log det` from a lower Cholesky factor.
pub fn logdet_from_cholesky(l: &ComplexMatrix) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>()
}

/// `A^{-1}` from the lower Cholesky factor of `A`.
pub fn inverse_from_cholesky(l: &ComplexMatrix) -> ComplexMatrix {
    let n = l.nrows();
    let mut linv = ComplexMatrix::identity(n, n);
    l.solve_lower_triangular_mut(&mut linv);
    linv.adjoint() * linv
}

/// Natural-log determinant of a Hermitian positive definite matrix via Cholesky.
pub fn logdet_nat(a: &HermitianMatrix) -> Result<f64> {
    let l = cholesky_lower(&a.0).ok_or(Error::NotPositiveDefinite)?;
    Ok(logdet_from_cholesky(&l))
}

/// `log2 det A` for Hermitian positive definite `A`.
pub fn logdet_bits(a: &HermitianMatrix) -> Result<f64> {
    Ok(logdet_nat(a)? / LN2)
}

/// Inverse of a Hermitian positive definite matrix, re-symmetrized.
pub fn inverse_hpd(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let l = cholesky_lower(&a.0).ok_or(Error::NotPositiveDefinite)?;
    hermitize(&inverse_from_cholesky(&l))
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Column-major stacking.
pub fn vec(a: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_iterator(a.len(), a.iter().copied())
}

/// Inverse of [`vec`] for a `rows x cols` target.
pub fn unvec(v: &ComplexVector, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "cannot reshape length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(ComplexMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Eigenvalues in ascending order.
pub fn eigenvalues(a: &HermitianMatrix) -> Vec<f64> {
    if a.dim() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(a.0.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

pub fn min_eigenvalue(a: &HermitianMatrix) -> f64 {
    eigenvalues(a).first().copied().unwrap_or(f64::INFINITY)
}

/// Spectral norm of a Hermitian matrix.
pub fn spectral_norm(a: &HermitianMatrix) -> f64 {
    eigenvalues(a).iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `min eig >= -1e-9 (1 + ||A||_2)`
pub fn is_psd(a: &HermitianMatrix) -> bool {
    let ev = eigenvalues(a);
    let norm = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    ev.first().map_or(true, |&m| m >= -PSD_RELATIVE_TOL * (1.0 + norm))
}

/// `[[Re A, -Im A], [Im A, Re A]]`
pub fn real_embed(a: &HermitianMatrix) -> RealMatrix {
    let n = a.dim();
    let m = &a.0;
    RealMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n, j % n)];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Principal square root of a PSD matrix; tiny negative eigenvalues are clipped.
pub fn psd_sqrt(a: &HermitianMatrix) -> Result<ComplexMatrix> {
    let n = a.dim();
    if n == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(a.0.clone());
    let norm = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -PSD_RELATIVE_TOL * (1.0 + norm) {
        return Err(Error::IndefiniteCovariance(min));
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    Ok(scaled * v.adjoint())
}

/// Block-diagonal assembly of square blocks.
pub fn block_diag(blocks: &[&ComplexMatrix]) -> ComplexMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = ComplexMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(*b);
        off += k;
    }
    out
}
