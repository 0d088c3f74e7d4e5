//! Independent reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls into the conic solver.

#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<Complex64>;
pub type Vec_ = DVector<Complex64>;

pub fn steer(m: usize, spacing: f64, deg: f64) -> Vec_ {
    let mut v = Vec_::zeros(m);
    for i in 0..m {
        let ph = 2.0 * PI * spacing * (i as f64) * deg.to_radians().sin();
        v[i] = Complex64::new(ph.cos(), ph.sin()) / (m as f64).sqrt();
    }
    v
}

/// `u^H A v` by explicit loops.
pub fn bilin(a: &Mat, u: &Vec_, v: &Vec_) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += u[i].conj() * a[(i, j)] * v[j];
        }
    }
    acc
}

pub fn quad(a: &Mat, v: &Vec_) -> f64 {
    bilin(a, v, v).re
}

pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize + 1;
    (0..n).map(|l| start + l as f64 * step).collect()
}

/// Radar loss evaluated from scratch: steering matrix over the grid,
/// desired 0/1 template, pairwise cross-correlations.
pub struct LossModel {
    pub m: usize,
    pub steer: Vec<Vec_>,
    pub desired: Vec<f64>,
    pub xcorr: Vec<Vec_>,
    pub eta: f64,
}

impl LossModel {
    pub fn new(m: usize, spacing: f64, angles: &[f64], centers: &[f64], width: f64, xcorr: &[f64], eta: f64) -> Self {
        let desired = angles
            .iter()
            .map(|th| {
                if centers.iter().any(|c| (th - c).abs() <= 0.5 * width + 1e-9) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            m,
            steer: angles.iter().map(|&th| steer(m, spacing, th)).collect(),
            desired,
            xcorr: xcorr.iter().map(|&th| steer(m, spacing, th)).collect(),
            eta,
        }
    }

    pub fn patterns(&self, r: &Mat) -> Vec<f64> {
        self.steer.iter().map(|a| quad(r, a)).collect()
    }

    /// Loss at a given scale.
    pub fn loss_at(&self, r: &Mat, alpha: f64) -> f64 {
        let p = self.patterns(r);
        let lb = p
            .iter()
            .zip(&self.desired)
            .map(|(p, d)| (alpha * d - p).powi(2))
            .sum::<f64>()
            / p.len() as f64;
        lb + self.eta * self.crosscorr(r)
    }

    pub fn crosscorr(&self, r: &Mat) -> f64 {
        let n = self.xcorr.len();
        if n < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                acc += bilin(r, &self.xcorr[q], &self.xcorr[p]).norm_sqr();
            }
        }
        acc / (n * (n - 1) / 2) as f64
    }

    /// Minimizing scale, kept strictly positive.
    pub fn best_alpha(&self, r: &Mat) -> f64 {
        let p = self.patterns(r);
        let num: f64 = p.iter().zip(&self.desired).map(|(p, d)| p * d).sum();
        let den: f64 = self.desired.iter().map(|d| d * d).sum();
        if den == 0.0 {
            return 1e-9;
        }
        (num / den).max(1e-9)
    }

    pub fn loss(&self, r: &Mat) -> f64 {
        self.loss_at(r, self.best_alpha(r))
    }

    /// Gradient of `loss_at(·, alpha)` w.r.t. `R`, as a Hermitian matrix `G`
    /// with `d loss = Re tr(G dR)`.
    pub fn gradient(&self, r: &Mat, alpha: f64) -> Mat {
        let l = self.steer.len() as f64;
        let mut g = Mat::zeros(self.m, self.m);
        for (a, d) in self.steer.iter().zip(&self.desired) {
            let w = -2.0 * (alpha * d - quad(r, a)) / l;
            g += a * a.adjoint() * Complex64::new(w, 0.0);
        }
        let n = self.xcorr.len();
        if n >= 2 {
            let scale = self.eta / (n * (n - 1) / 2) as f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    let (ap, aq) = (&self.xcorr[p], &self.xcorr[q]);
                    let cpq = bilin(r, aq, ap);
                    g += (ap * aq.adjoint() * cpq.conj() + aq * ap.adjoint() * cpq) * Complex64::new(scale, 0.0);
                }
            }
        }
        g
    }
}

fn normalize_rows(v: &mut Mat, row_norm: f64) {
    for i in 0..v.nrows() {
        let n = v.row(i).norm();
        if n > 0.0 {
            let s = row_norm / n;
            for j in 0..v.ncols() {
                v[(i, j)] *= s;
            }
        }
    }
}

pub fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// Radar-only design by a low-rank factorization `R = V V^H` with the
/// per-antenna power constraint enforced by row normalization, minimized by
/// projected gradient with backtracking. Returns `(R, loss)`.
pub fn burer_monteiro_radar_only(model: &LossModel, total_power: f64, iters: usize, seed: u64) -> (Mat, f64) {
    let m = model.m;
    let row_norm = (total_power / m as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = gaussian_mat(&mut rng, m, m);
    normalize_rows(&mut v, row_norm);
    let mut r = &v * v.adjoint();
    let mut f = model.loss(&r);
    let mut step = 1.0;
    for _ in 0..iters {
        let alpha = model.best_alpha(&r);
        let g = model.gradient(&r, alpha);
        let gv = &g * &v * Complex64::new(2.0, 0.0);
        let mut accepted = false;
        for _ in 0..40 {
            let mut cand = &v - &gv * Complex64::new(step, 0.0);
            normalize_rows(&mut cand, row_norm);
            let rc = &cand * cand.adjoint();
            let fc = model.loss(&rc);
            if fc < f {
                v = cand;
                r = rc;
                f = fc;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (r, f)
}

/// Single-user, single-target toy problem for the rank-one search.
pub struct ToyProblem {
    pub model: LossModel,
    pub h: Vec_,
    pub target: Vec_,
    pub total_power: f64,
    pub noise_user: f64,
    /// `σ_e²/|β|²`.
    pub noise_eve: f64,
    pub gamma_c: f64,
    pub gamma_e: f64,
    /// Relative slack on the SINR constraints.
    pub tol: f64,
}

impl ToyProblem {
    /// `(loss, violation)` of `X = [w_c | W_r]` after row normalization.
    fn evaluate(&self, x: &Mat) -> (f64, f64) {
        let r = x * x.adjoint();
        let wc = x.column(0).into_owned();
        let wr = x.columns(1, x.ncols() - 1).into_owned();
        let hs = (self.h.adjoint() * &wc)[(0, 0)].norm_sqr();
        let hi = (self.h.adjoint() * &wr).norm_squared();
        let user = hs / (hi + self.noise_user);
        let es = (self.target.adjoint() * &wc)[(0, 0)].norm_sqr();
        let ei = (self.target.adjoint() * &wr).norm_squared();
        let eve = es / (ei + self.noise_eve);
        let v_user = (self.gamma_c * (1.0 - self.tol) - user).max(0.0) / self.gamma_c.max(1.0);
        let v_eve = (eve - self.gamma_e * (1.0 + self.tol)).max(0.0) / self.gamma_e.max(1.0);
        (self.model.loss(&r), v_user + v_eve)
    }

    /// (1+1) evolution strategy with the one-fifth success rule and restarts,
    /// over `X ∈ C^{M×(M+1)}`; infeasible points are ranked by violation
    /// first. Returns the best feasible loss found within `evals`
    /// evaluations (infinity if none).
    pub fn rank_one_search(&self, evals: usize, restarts: usize, seed: u64) -> f64 {
        let m = self.model.m;
        let row_norm = (self.total_power / m as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = f64::INFINITY;
        let per_run = evals / restarts.max(1);
        let better = |a: (f64, f64), b: (f64, f64)| {
            if a.1 > 0.0 || b.1 > 0.0 {
                a.1 < b.1
            } else {
                a.0 < b.0
            }
        };
        for _ in 0..restarts.max(1) {
            let mut x = gaussian_mat(&mut rng, m, m + 1);
            normalize_rows(&mut x, row_norm);
            let mut fx = self.evaluate(&x);
            let mut sigma = 0.1 * row_norm;
            for _ in 0..per_run {
                let mut y = &x + gaussian_mat(&mut rng, m, m + 1) * Complex64::new(sigma, 0.0);
                normalize_rows(&mut y, row_norm);
                let fy = self.evaluate(&y);
                if better(fy, fx) || (fy.1 == 0.0 && fx.1 == 0.0 && fy.0 == fx.0) {
                    x = y;
                    fx = fy;
                    sigma *= 1.5;
                } else {
                    sigma *= 1.5f64.powf(-0.25);
                }
                if sigma < 1e-12 * row_norm {
                    break;
                }
                if fx.1 == 0.0 && fx.0 < best {
                    best = fx.0;
                }
            }
        }
        best
    }
}

/// Uniform draw from the complex sphere of radius `radius`.
pub fn sphere_point(rng: &mut ChaCha8Rng, m: usize, radius: f64) -> Vec_ {
    let g = gaussian_mat(rng, m, 1).column(0).into_owned();
    let n = g.norm();
    g * Complex64::new(radius / n, 0.0)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
