//! Real parametrization of Hermitian matrices.
//!
//! An `M×M` Hermitian matrix `X` maps to `M²` reals laid out as
//!
//! ```text
//! z[m]            = X[m][m]            for m in 0..M
//! z[M + 2p]       = Re X[i][j]          for the p-th pair (i < j),
//! z[M + 2p + 1]   = Im X[i][j]          pairs enumerated row-major:
//!                                       (0,1), (0,2), …, (0,M−1), (1,2), …
//! ```
//!
//! PSD constraints are emitted on the real symmetric lift
//! `[[Re X, −Im X], [Im X, Re X]]` (`2M×2M`), whose eigenvalues are those of
//! `X`, each repeated twice.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::linalg::{c, CMat, CVec, I};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermitianParam {
    dim: usize,
}

/// Parametrization of `M×M` Hermitian matrices by `M²` reals.
pub fn hermitian_param(m: usize) -> HermitianParam {
    HermitianParam { dim: m }
}

/// What a single real coordinate stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coord {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

impl HermitianParam {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of real coordinates, `M²`.
    pub fn len(&self) -> usize {
        self.dim * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.dim);
        // pairs before row i: sum_{r<i} (M-1-r)
        let m = self.dim;
        i * (2 * m - i - 1) / 2 + (j - i - 1)
    }

    pub fn coords(&self) -> Vec<Coord> {
        let m = self.dim;
        let mut out: Vec<Coord> = (0..m).map(Coord::Diag).collect();
        for i in 0..m {
            for j in (i + 1)..m {
                out.push(Coord::Re(i, j));
                out.push(Coord::Im(i, j));
            }
        }
        out
    }

    pub fn coord(&self, idx: usize) -> Coord {
        let m = self.dim;
        if idx < m {
            return Coord::Diag(idx);
        }
        let p = (idx - m) / 2;
        let mut rem = p;
        for i in 0..m {
            let row = m - 1 - i;
            if rem < row {
                let j = i + 1 + rem;
                return if (idx - m) % 2 == 0 { Coord::Re(i, j) } else { Coord::Im(i, j) };
            }
            rem -= row;
        }
        unreachable!("coordinate {idx} out of range for dimension {m}")
    }

    pub fn to_vec(&self, x: &CMat) -> Vec<f64> {
        let m = self.dim;
        let mut z = vec![0.0; self.len()];
        for i in 0..m {
            z[i] = x[(i, i)].re;
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let p = self.pair_index(i, j);
                // average the two triangles so slightly asymmetric inputs land on their Hermitian part
                let v = (x[(i, j)] + x[(j, i)].conj()) * 0.5;
                z[m + 2 * p] = v.re;
                z[m + 2 * p + 1] = v.im;
            }
        }
        z
    }

    pub fn to_matrix(&self, z: &[f64]) -> CMat {
        let m = self.dim;
        assert_eq!(z.len(), self.len(), "parameter length mismatch");
        let mut x = CMat::zeros(m, m);
        for i in 0..m {
            x[(i, i)] = c(z[i], 0.0);
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let p = self.pair_index(i, j);
                let v = c(z[m + 2 * p], z[m + 2 * p + 1]);
                x[(i, j)] = v;
                x[(j, i)] = v.conj();
            }
        }
        x
    }

    /// Hermitian basis matrix of coordinate `idx`.
    pub fn basis(&self, idx: usize) -> CMat {
        let m = self.dim;
        let mut e = CMat::zeros(m, m);
        match self.coord(idx) {
            Coord::Diag(i) => e[(i, i)] = c(1.0, 0.0),
            Coord::Re(i, j) => {
                e[(i, j)] = c(1.0, 0.0);
                e[(j, i)] = c(1.0, 0.0);
            }
            Coord::Im(i, j) => {
                e[(i, j)] = I;
                e[(j, i)] = -I;
            }
        }
        e
    }

    /// Coefficients `g` with `u^H X v = Σ_j g_j z_j` for every Hermitian `X`.
    pub fn bilinear_coeffs(&self, u: &CVec, v: &CVec) -> Vec<Complex64> {
        let m = self.dim;
        let mut g = vec![c(0.0, 0.0); self.len()];
        for i in 0..m {
            g[i] = u[i].conj() * v[i];
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let p = self.pair_index(i, j);
                let a = u[i].conj() * v[j];
                let b = u[j].conj() * v[i];
                g[m + 2 * p] = a + b;
                g[m + 2 * p + 1] = I * (a - b);
            }
        }
        g
    }

    /// Coefficients of the real quadratic form `v^H X v`.
    pub fn quad_coeffs(&self, v: &CVec) -> Vec<f64> {
        self.bilinear_coeffs(v, v).into_iter().map(|g| g.re).collect()
    }
}

/// `[[Re X, −Im X], [Im X, Re X]]`.
pub fn real_lift(x: &CMat) -> DMatrix<f64> {
    let n = x.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = x[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
            out[(i + n, j + n)] = z.re;
        }
    }
    out
}

/// Upper triangle, column by column, off-diagonals scaled by `√2`.
pub fn svec(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let s2 = std::f64::consts::SQRT_2;
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in 0..=j {
            out.push(if i == j { x[(i, j)] } else { s2 * 0.5 * (x[(i, j)] + x[(j, i)]) });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::HermitianMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(m: usize, rng: &mut ChaCha8Rng) -> CMat {
        let g = CMat::from_fn(m, m, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        (&g + g.adjoint()) * c(0.5, 0.0)
    }

    #[test]
    fn scalar_case() {
        let p = hermitian_param(1);
        assert_eq!(p.len(), 1);
        let x = CMat::from_element(1, 1, c(-2.5, 0.0));
        assert_eq!(p.to_vec(&x), vec![-2.5]);
        let lift = real_lift(&x);
        assert_eq!(lift.nrows(), 2);
        assert!(lift.symmetric_eigenvalues().iter().all(|&l| l < 0.0));
    }

    #[test]
    fn identity_round_trips_exactly() {
        for m in 1..6 {
            let p = hermitian_param(m);
            let x = CMat::identity(m, m);
            assert_eq!(p.to_matrix(&p.to_vec(&x)), x);
        }
    }

    #[test]
    fn coordinate_enumeration_is_consistent() {
        let p = hermitian_param(5);
        let coords = p.coords();
        assert_eq!(coords.len(), 25);
        for (idx, c) in coords.iter().enumerate() {
            assert_eq!(p.coord(idx), *c);
        }
        assert_eq!(p.coord(5), Coord::Re(0, 1));
        assert_eq!(p.coord(6), Coord::Im(0, 1));
        assert_eq!(p.coord(24), Coord::Im(3, 4));
    }

    #[test]
    fn basis_expansion_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = hermitian_param(4);
        let x = random_hermitian(4, &mut rng);
        let z = p.to_vec(&x);
        let mut acc = CMat::zeros(4, 4);
        for (j, zj) in z.iter().enumerate() {
            acc += p.basis(j) * c(*zj, 0.0);
        }
        assert!((acc - x).norm() < 1e-14);
    }

    #[test]
    fn bilinear_coefficients_match_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = hermitian_param(6);
        let x = random_hermitian(6, &mut rng);
        let u = CVec::from_fn(6, |_, _| c(rng.random::<f64>(), rng.random::<f64>()));
        let v = CVec::from_fn(6, |_, _| c(rng.random::<f64>(), rng.random::<f64>()));
        let z = p.to_vec(&x);
        let g = p.bilinear_coeffs(&u, &v);
        let via: Complex64 = g.iter().zip(&z).map(|(g, z)| g * z).sum();
        let direct = u.dotc(&(&x * &v));
        assert!((via - direct).norm() < 1e-12);
    }

    #[test]
    fn lift_psd_agrees_with_eigenvalue_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut agree = 0;
        for _ in 0..1000 {
            let m = rng.random_range(1..6);
            // shift towards the boundary so both outcomes occur
            let x = random_hermitian(m, &mut rng) + CMat::identity(m, m) * c(rng.random::<f64>() * 1.2, 0.0);
            let herm_psd = HermitianMatrix::from_symmetrized(&x).min_eigenvalue() >= 0.0;
            let lift_psd = real_lift(&x).symmetric_eigenvalues().iter().all(|&l| l >= 0.0);
            if herm_psd == lift_psd {
                agree += 1;
            }
        }
        assert_eq!(agree, 1000);
    }

    #[test]
    fn svec_preserves_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>());
        let a = &a + a.transpose();
        let b = DMatrix::from_fn(4, 4, |_, _| rng.random::<f64>());
        let b = &b + b.transpose();
        let lhs: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert!((lhs - a.dot(&b)).abs() < 1e-12);
    }
}
