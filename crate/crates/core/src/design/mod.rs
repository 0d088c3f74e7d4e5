//! Joint communication/radar precoder designs.
//!
//! All three designers solve a convex program over covariance matrices and
//! then recover precoders from the optimum: [`sdr`] through the closed-form
//! rank-one map, [`zf`] through Cholesky + QR, [`robust`] through the same
//! rank-one map applied to the S-procedure program.

pub mod robust;
pub mod sdr;
pub mod zf;

use serde::{Deserialize, Serialize};

use crate::conic::{ConicProblem, ConicSolution, Constraint, HermExpr, LinExpr, SolveStatus, VarId};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, psd_sqrt, CMat, CVec, HermitianMatrix};
use crate::scenario::{PrecoderPair, Scenario};

pub use robust::{build_p4, solve_robust, AngularUncertaintySet, CsiUncertainty};
pub use sdr::{build_p2, solve_sdr, SdrProgram};
pub use zf::{build_p3, null_space_basis, recover_precoders_zf, solve_zf, ZfProgram};

/// SINR thresholds, linear. `gamma_c = 0` drops the user constraints and
/// `gamma_e = ∞` drops the eavesdropper constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityThresholds {
    pub gamma_c: f64,
    pub gamma_e: f64,
}

impl SecurityThresholds {
    pub fn new(gamma_c: f64, gamma_e: f64) -> Result<Self> {
        let t = Self { gamma_c, gamma_e };
        t.validate()?;
        Ok(t)
    }

    pub fn from_db(gamma_c_db: f64, gamma_e_db: f64) -> Result<Self> {
        Self::new(db_to_linear(gamma_c_db), db_to_linear(gamma_e_db))
    }

    /// No communication or secrecy requirement: the radar-only problem.
    pub fn radar_only() -> Self {
        Self {
            gamma_c: 0.0,
            gamma_e: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_c >= 0.0 && self.gamma_c.is_finite()) {
            return Err(Error::Domain(format!("gamma_c must be finite and >= 0, got {}", self.gamma_c)));
        }
        if !(self.gamma_e > 0.0) {
            return Err(Error::Domain(format!("gamma_e must be > 0, got {}", self.gamma_e)));
        }
        Ok(())
    }

    pub fn user_constraints_active(&self) -> bool {
        self.gamma_c > 0.0
    }

    pub fn eve_constraints_active(&self) -> bool {
        self.gamma_e.is_finite()
    }

    pub fn gamma_c_db(&self) -> f64 {
        linear_to_db(self.gamma_c)
    }

    pub fn gamma_e_db(&self) -> f64 {
        linear_to_db(self.gamma_e)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    Sdr,
    Zf,
    Robust,
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DesignKind::Sdr => "sdr",
            DesignKind::Zf => "zf",
            DesignKind::Robust => "robust",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Certified lower bound on the relaxed objective.
    pub dual_bound: f64,
    pub engine_status: String,
    pub solve_seconds: f64,
    /// Whether the communication covariances were moved onto the SINR
    /// boundary by the second-stage program.
    pub boundary_refined: bool,
}

impl SolveDiagnostics {
    pub(crate) fn from_solution(sol: &ConicSolution, seconds: f64) -> Self {
        Self {
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            gap: sol.gap,
            dual_bound: sol.dual_bound,
            engine_status: sol.engine_status.clone(),
            solve_seconds: seconds,
            boundary_refined: false,
        }
    }
}

/// Precoders and covariances produced by a designer.
#[derive(Debug, Clone)]
pub struct DesignResult {
    pub kind: DesignKind,
    /// Transmit covariance `R` (the relaxed optimum, kept unchanged by recovery).
    pub covariance: HermitianMatrix,
    /// Rank-one communication covariances `w_k w_k^H`.
    pub user_covariances: Vec<HermitianMatrix>,
    pub precoders: PrecoderPair,
    pub alpha: f64,
    /// Radar loss of the recovered precoders, `L_r(W W^H, α)`.
    pub objective: f64,
    /// Radar loss of the relaxed optimum, `L_r(R̂, α)`.
    pub relaxed_objective: f64,
    /// Zero-forcing user powers `ρ_k`, when applicable.
    pub rho: Option<Vec<f64>>,
    pub diagnostics: SolveDiagnostics,
}

impl DesignResult {
    /// `R − Σ_k w_k w_k^H`.
    pub fn radar_covariance(&self) -> HermitianMatrix {
        self.precoders.radar_covariance()
    }

    /// Covariance actually radiated by the precoders.
    pub fn transmitted_covariance(&self) -> HermitianMatrix {
        self.precoders.covariance()
    }
}

/// Closed-form rank-one map `w = (h^H R h)^{−1/2} R h`. Preserves
/// `h^H w w^H h = h^H R h` and satisfies `a^H w w^H a ≤ a^H R a` for all `a`.
pub fn reconstruct_rank1(r_k: &HermitianMatrix, h: &CVec) -> Result<CVec> {
    let rh = r_k.as_matrix() * h;
    let gain = h.dotc(&rh).re;
    if !(gain > DEGENERATE_GAIN) {
        return Err(Error::Reconstruction(format!("h^H R_k h = {gain:.3e} is not positive")));
    }
    Ok(rh / crate::linalg::c(gain.sqrt(), 0.0))
}

/// Below this `h^H R_k h` the user is treated as receiving nothing.
pub const DEGENERATE_GAIN: f64 = 1e-12;

/// Tolerance (relative to the trace) for accepting slightly negative
/// eigenvalues in radar covariances left over from solver tolerances.
pub const PSD_REL_TOL: f64 = 1e-6;

/// `W_r` with `W_r W_r^H = R_rad`: the principal (Hermitian, nonnegative
/// diagonal) square root.
pub fn factorize_radar_cov(r_rad: &HermitianMatrix) -> Result<CMat> {
    psd_sqrt(r_rad, PSD_REL_TOL)
}

pub(crate) fn status_to_result(sol: &ConicSolution, what: &str) -> Result<()> {
    match sol.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible => Err(Error::InfeasibleDesign(format!(
            "{what}: solver certified infeasibility ({})",
            sol.engine_status
        ))),
        SolveStatus::Unbounded => Err(Error::Solver(format!("{what}: unbounded ({})", sol.engine_status))),
        SolveStatus::NumericalLimit => Err(Error::Solver(format!(
            "{what}: no convergence ({}, {} iterations)",
            sol.engine_status, sol.iterations
        ))),
    }
}

/// Smallest common slack below which infeasibility is reported.
pub const PHASE_ONE_TOL: f64 = 1e-6;

/// Fallback when the engine stalls on a design program. Every scalar row
/// whose label starts with one of `prefixes` is relaxed by a common slack
/// `t`, the objective is replaced by `min t`, and the program is solved
/// again. A converged `t` above [`PHASE_ONE_TOL`] (after the duality gap)
/// means the rows cannot hold together.
pub(crate) fn phase_one_slack(problem: &ConicProblem, prefixes: &[&str]) -> Option<f64> {
    let mut p = problem.clone();
    p.clear_objective();
    let t = p.scalar("phase_one_t");
    let ti = p.index(t);
    let mut relaxed = 0;
    for lc in p.constraints_mut() {
        if !prefixes.iter().any(|pre| lc.label.starts_with(pre)) {
            continue;
        }
        if let Constraint::Ineq(e) = &mut lc.constraint {
            e.add_term(ti, 1.0);
            relaxed += 1;
        }
    }
    if relaxed == 0 {
        return None;
    }
    p.set_linear_objective(LinExpr { terms: vec![(ti, 1.0)], constant: 0.0 });
    let sol = crate::conic::solve(&p, &crate::conic::SolverSettings::default());
    if sol.status != SolveStatus::Optimal {
        return None;
    }
    let v = sol.scalar(&p, t);
    Some(v - sol.gap * v.abs().max(1.0))
}

/// [`status_to_result`], retrying a stalled solve as a phase-one problem
/// over the SINR rows before giving up.
pub(crate) fn status_or_phase_one(sol: &ConicSolution, problem: &ConicProblem, what: &str) -> Result<()> {
    if sol.status == SolveStatus::NumericalLimit {
        if let Some(slack) = phase_one_slack(problem, &["com_", "eve_"]) {
            if slack > PHASE_ONE_TOL {
                return Err(Error::InfeasibleDesign(format!(
                    "{what}: SINR rows need a common slack of at least {slack:.3e} ({} on the full program)",
                    sol.engine_status
                )));
            }
        }
    }
    status_to_result(sol, what)
}

/// `coef · v^H X v` for the Hermitian block at `offset`, added to `e`.
pub(crate) fn add_quad(e: &mut LinExpr, problem: &ConicProblem, var: VarId, v: &CVec, coef: f64) {
    let p = problem.param(var);
    e.add_block(problem.offset(var), &p.quad_coeffs(v), coef);
}

/// `X ⪰ 0` for a Hermitian block.
pub(crate) fn add_block_psd(problem: &mut ConicProblem, label: &str, var: VarId) {
    let m = problem.param(var).dim();
    let mut h = HermExpr::zero(m);
    h.add_mapped_block(problem.offset(var), m, 1.0, |b| b.clone());
    problem.add(label, Constraint::Psd(h));
}

/// `A − Σ B_i ⪰ 0`.
pub(crate) fn add_difference_psd(problem: &mut ConicProblem, label: &str, a: VarId, subtract: &[VarId]) {
    let m = problem.param(a).dim();
    let mut h = HermExpr::zero(m);
    h.add_mapped_block(problem.offset(a), m, 1.0, |b| b.clone());
    for &v in subtract {
        h.add_mapped_block(problem.offset(v), m, -1.0, |b| b.clone());
    }
    problem.add(label, Constraint::Psd(h));
}

/// Eavesdropper constraint at steering vector `a`:
/// `a^H R a + σ_e²/|β|² − (1 + 1/Γ_e)·a^H (Σ comm) a ≥ 0`.
pub(crate) fn add_eve_row(
    problem: &mut ConicProblem,
    label: String,
    r: VarId,
    comm: &[VarId],
    a: &CVec,
    noise_over_gain: f64,
    gamma_e: f64,
) {
    let mut e = LinExpr::constant(noise_over_gain);
    add_quad(&mut e, problem, r, a, 1.0);
    for &k in comm {
        add_quad(&mut e, problem, k, a, -(1.0 + 1.0 / gamma_e));
    }
    problem.add(label, Constraint::Ineq(e.compact()));
}

/// User constraint as stated in a design program.
#[derive(Debug, Clone)]
pub(crate) enum UserRow {
    Exact(CVec),
    Ball { h: CVec, radius: f64 },
}

/// Eigenvalues below this fraction of the trace are treated as zero when
/// restricting to the range of `R̂`.
const RANGE_REL_TOL: f64 = 1e-6;
const MAX_BUDGET_SHRINK: f64 = 1e-4;
const REFINE_RESIDUAL_TOL: f64 = 1e-8;

/// The optimal `R̂` rarely pins down the communication covariances: any
/// `R_k` satisfying the constraints at that `R̂` is optimal. This picks the
/// one that puts the user and eavesdropper SINR constraints on their
/// boundary where possible, by minimizing the normalized user signal margin
/// minus the normalized eavesdropper leakage with `R̂` held fixed. Returns
/// `None` if the auxiliary program does not solve cleanly.
pub(crate) fn boundary_refinement(
    scenario: &Scenario,
    r_hat: &HermitianMatrix,
    thresholds: &SecurityThresholds,
    users: &[UserRow],
    eves: &[(CVec, f64)],
) -> Option<Vec<HermitianMatrix>> {
    let m = r_hat.dim();
    let eig = r_hat.as_matrix().clone().symmetric_eigen();
    let tol = RANGE_REL_TOL * r_hat.trace().max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > tol).collect();
    if keep.is_empty() {
        return None;
    }
    let r = keep.len();
    let u = CMat::from_fn(m, r, |i, j| eig.eigenvectors[(i, keep[j])]);
    let lambda = CMat::from_fn(r, r, |i, j| if i == j { crate::linalg::c(eig.eigenvalues[keep[i]], 0.0) } else { crate::linalg::c(0.0, 0.0) });

    let mut problem = ConicProblem::new();
    let xs: Vec<VarId> = (0..users.len()).map(|k| problem.hermitian(format!("X_{k}"), r)).collect();
    for (k, &x) in xs.iter().enumerate() {
        add_block_psd(&mut problem, &format!("Xk_psd_{k}"), x);
    }
    let mut budget = HermExpr::zero(r);
    budget.constant = lambda;
    for &x in &xs {
        budget.add_mapped_block(problem.offset(x), r, -1.0, |b| b.clone());
    }
    problem.add("radar_psd", Constraint::Psd(budget));

    let mut objective = LinExpr::default();
    let noise_c = scenario.config.noise_var_lu;
    if thresholds.user_constraints_active() {
        let gain = 1.0 + 1.0 / thresholds.gamma_c;
        for (k, row) in users.iter().enumerate() {
            match row {
                UserRow::Exact(h) => {
                    let hu = u.adjoint() * h;
                    let base = r_hat.quad_form(h) + noise_c;
                    let mut e = LinExpr::constant(-base);
                    add_quad(&mut e, &problem, xs[k], &hu, gain);
                    add_quad(&mut objective, &problem, xs[k], &hu, gain / base);
                    problem.add(format!("com_{k}"), Constraint::Ineq(e.compact()));
                }
                UserRow::Ball { h, radius } => {
                    let t = problem.scalar(format!("lambda_{k}"));
                    let ti = problem.index(t);
                    let mut g = CMat::identity(m, m + 1);
                    g.set_column(m, h);
                    let gu = u.adjoint() * &g;
                    let mut lmi = HermExpr::zero(m + 1);
                    lmi.add_mapped_block(problem.offset(xs[k]), r, gain, |b| gu.adjoint() * b * &gu);
                    lmi.constant = -(g.adjoint() * r_hat.as_matrix() * &g);
                    lmi.constant[(m, m)] -= crate::linalg::c(noise_c, 0.0);
                    let mut tm = CMat::identity(m + 1, m + 1);
                    tm[(m, m)] = crate::linalg::c(-radius * radius, 0.0);
                    lmi.add_scalar_term(ti, tm);
                    problem.add(format!("com_{k}"), Constraint::Psd(lmi));
                    problem.add(format!("lambda_pos_{k}"), Constraint::Ineq(LinExpr { terms: vec![(ti, 1.0)], constant: 0.0 }));
                }
            }
        }
    }
    if thresholds.eve_constraints_active() {
        let leak = 1.0 + 1.0 / thresholds.gamma_e;
        let weight = 1.0 / eves.len().max(1) as f64;
        for (q, (a, noise)) in eves.iter().enumerate() {
            let au = u.adjoint() * a;
            let base = r_hat.quad_form(a) + noise;
            let mut e = LinExpr::constant(base);
            for &x in &xs {
                add_quad(&mut e, &problem, x, &au, -leak);
                add_quad(&mut objective, &problem, x, &au, -leak * weight / base);
            }
            problem.add(format!("eve_{q}"), Constraint::Ineq(e.compact()));
        }
    }
    if objective.terms.is_empty() {
        return None;
    }
    problem.set_linear_objective(objective.compact());
    let sol = crate::conic::solve(&problem, &crate::conic::SolverSettings::default());
    // A loosely converged refinement is worse than the unrefined split.
    if sol.status != SolveStatus::Optimal || sol.primal_residual > REFINE_RESIDUAL_TOL {
        return None;
    }
    let mut xk: Vec<CMat> = xs.iter().map(|&x| hermitian_part(&sol.hermitian(&problem, x))).collect();
    // Solver error can leave Λ − Σ X_k slightly indefinite; shrink the X_k
    // until the budget holds exactly, s = 1/λ_max(Λ^{-1/2} Σ X_k Λ^{-1/2}).
    let inv_sqrt = CMat::from_fn(r, r, |i, j| {
        if i == j {
            crate::linalg::c(1.0 / eig.eigenvalues[keep[i]].sqrt(), 0.0)
        } else {
            crate::linalg::c(0.0, 0.0)
        }
    });
    let total = xk.iter().fold(CMat::zeros(r, r), |acc, x| acc + x);
    let scaled = hermitian_part(&(&inv_sqrt * total * &inv_sqrt));
    let lmax = scaled.symmetric_eigen().eigenvalues.iter().copied().fold(0.0, f64::max);
    if lmax > 1.0 {
        if lmax > 1.0 + MAX_BUDGET_SHRINK {
            return None;
        }
        for x in &mut xk {
            *x *= crate::linalg::c(1.0 / lmax, 0.0);
        }
    }
    Some(
        xk.iter()
            .map(|x| HermitianMatrix::from_symmetrized(&(&u * x * u.adjoint())))
            .collect(),
    )
}

/// Assembles a result from recovered communication columns and the relaxed
/// covariance.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble_from_columns(
    kind: DesignKind,
    scenario: &Scenario,
    spec: &crate::radar::BeampatternSpec,
    r_hat: HermitianMatrix,
    comm: CMat,
    alpha: f64,
    rho: Option<Vec<f64>>,
    diagnostics: SolveDiagnostics,
) -> Result<DesignResult> {
    let m = scenario.num_antennas();
    let comm_cov = HermitianMatrix::from_symmetrized(&(&comm * comm.adjoint()));
    let r_rad = r_hat.sub(&comm_cov);
    let radar = factorize_radar_cov(&r_rad)?;
    let precoders = PrecoderPair::new(comm, radar)?;
    let user_covariances = (0..precoders.num_users()).map(|k| precoders.user_covariance(k)).collect();
    let alpha = alpha.max(crate::radar::ALPHA_MIN);
    let relaxed_objective = crate::radar::radar_loss(&r_hat, alpha, spec, &scenario.config)?.total;
    let objective = crate::radar::radar_loss(&precoders.covariance(), alpha, spec, &scenario.config)?.total;
    debug_assert_eq!(r_hat.dim(), m);
    Ok(DesignResult {
        kind,
        covariance: r_hat,
        user_covariances,
        precoders,
        alpha,
        objective,
        relaxed_objective,
        rho,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_reconstruction() {
        let r = HermitianMatrix::identity(2);
        let h = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let w = reconstruct_rank1(&r, &h).unwrap();
        assert!((w - h).norm() < 1e-15);
    }

    #[test]
    fn rank_one_input_is_a_fixed_point() {
        let v = CVec::from_vec(vec![c(0.3, 0.2), c(-1.0, 0.5), c(0.0, 0.7)]);
        let h = CVec::from_vec(vec![c(1.0, -0.4), c(0.2, 0.1), c(-0.5, 0.9)]);
        let r = HermitianMatrix::outer(&v);
        let w = reconstruct_rank1(&r, &h).unwrap();
        assert!((&w * w.adjoint() - &v * v.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn reconstruction_is_dominated_in_every_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let m = 6;
            let g = CMat::from_fn(m, 3, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let r = HermitianMatrix::from_symmetrized(&(&g * g.adjoint()));
            let h = CVec::from_fn(m, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let w = reconstruct_rank1(&r, &h).unwrap();
            let rt = HermitianMatrix::outer(&w);
            assert!((rt.quad_form(&h) - r.quad_form(&h)).abs() < 1e-12, "trial {trial}");
            for _ in 0..100 {
                let a = CVec::from_fn(m, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
                assert!(r.quad_form(&a) - rt.quad_form(&a) >= -1e-10);
            }
        }
    }

    #[test]
    fn degenerate_gain_is_an_error() {
        let r = HermitianMatrix::outer(&CVec::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0)]));
        let h = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(reconstruct_rank1(&r, &h), Err(Error::Reconstruction(_))));
    }

    #[test]
    fn radar_factorization_cases() {
        let w0 = factorize_radar_cov(&HermitianMatrix::zeros(4)).unwrap();
        assert_eq!(w0.norm(), 0.0);
        let wi = factorize_radar_cov(&HermitianMatrix::identity(4)).unwrap();
        assert!((&wi * wi.adjoint() - CMat::identity(4, 4)).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = CMat::from_fn(10, 3, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let r = HermitianMatrix::from_symmetrized(&(&g * g.adjoint()));
        let w = factorize_radar_cov(&r).unwrap();
        assert!((&w * w.adjoint() - r.as_matrix()).norm() < 1e-10);
        for i in 0..10 {
            assert!(w[(i, i)].im.abs() < 1e-12 && w[(i, i)].re >= 0.0);
        }
    }

    #[test]
    fn thresholds_validation_and_db() {
        let t = SecurityThresholds::from_db(10.0, 0.0).unwrap();
        assert!((t.gamma_c - 10.0).abs() < 1e-12);
        assert!((t.gamma_e - 1.0).abs() < 1e-12);
        assert!(SecurityThresholds::new(-1.0, 1.0).is_err());
        assert!(SecurityThresholds::new(1.0, 0.0).is_err());
        let r = SecurityThresholds::radar_only();
        assert!(!r.user_constraints_active() && !r.eve_constraints_active());
    }
}
