//! Complex dense linear algebra helpers shared by the designers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Hermitian (optionally PSD) matrix. Construction checks
/// `‖A − A^H‖_F ≤ 1e−10·‖A‖_F` and stores the symmetrized matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMat);

impl HermitianMatrix {
    pub const SYMMETRY_TOL: f64 = 1e-10;

    pub fn new(mat: CMat) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::Contract(format!(
                "Hermitian matrix must be square, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let skew = (&mat - mat.adjoint()).norm();
        let scale = mat.norm();
        if skew > Self::SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) && skew > 0.0 {
            return Err(Error::Contract(format!(
                "matrix is not Hermitian: ‖A − A^H‖_F = {skew:.3e}, ‖A‖_F = {scale:.3e}"
            )));
        }
        Ok(Self(hermitian_part(&mat)))
    }

    /// Symmetrizes without checking; for outputs of solvers and products
    /// that are Hermitian up to rounding.
    pub fn from_symmetrized(mat: &CMat) -> Self {
        Self(hermitian_part(mat))
    }

    pub fn identity(m: usize) -> Self {
        Self(CMat::identity(m, m))
    }

    pub fn zeros(m: usize) -> Self {
        Self(CMat::zeros(m, m))
    }

    pub fn scaled_identity(m: usize, s: f64) -> Self {
        Self(CMat::identity(m, m) * c(s, 0.0))
    }

    pub fn outer(v: &CVec) -> Self {
        Self(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    /// `v^H A v`, real part only (the imaginary part is rounding noise).
    pub fn quad_form(&self, v: &CVec) -> f64 {
        quad_form(&self.0, v)
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.0.clone()).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// PSD test with tolerance relative to the trace.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let scale = self.trace().abs().max(1e-300);
        self.min_eigenvalue() >= -rel_tol * scale
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * c(s, 0.0))
    }
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5, 0.0)
}

/// Real part of `v^H A v`.
pub fn quad_form(a: &CMat, v: &CVec) -> f64 {
    bilinear(a, v, v).re
}

/// `u^H A v`.
pub fn bilinear(a: &CMat, u: &CVec, v: &CVec) -> Complex64 {
    let av = a * v;
    u.dotc(&av)
}

/// Principal square root of a Hermitian PSD matrix, `A^{1/2}` with
/// `A^{1/2} A^{1/2} = A`. Negative eigenvalues down to `−tol·trace` are
/// clipped to zero, anything below is rejected.
pub fn psd_sqrt(a: &HermitianMatrix, rel_tol: f64) -> Result<CMat> {
    let m = a.dim();
    if m == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let trace = a.trace();
    let eig = SymmetricEigen::new(a.as_matrix().clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -rel_tol * trace.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd {
            min_eig: min,
            trace,
        });
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        scaled.column_mut(j).scale_mut(s);
    }
    Ok(hermitian_part(&(scaled * v.adjoint())))
}

/// Some factor `L` with `L L^H = A`: Cholesky when every pivot stays above
/// `pivot_tol·trace`, principal square root otherwise.
pub fn psd_factor(a: &HermitianMatrix, pivot_tol: f64) -> Result<CMat> {
    let trace = a.trace();
    if let Some(l) = cholesky_checked(a.as_matrix(), pivot_tol * trace.abs()) {
        return Ok(l);
    }
    psd_sqrt(a, 1e-6)
}

fn cholesky_checked(a: &CMat, min_pivot: f64) -> Option<CMat> {
    let n = a.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= min_pivot || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = c(d, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
