//! Semidefinite relaxation with per-user covariances and rank-one recovery.

use std::time::Instant;

use crate::conic::{self, ConicProblem, Constraint, LinExpr, SolverSettings, VarId};
use crate::error::Result;
use crate::linalg::{CMat, CVec, HermitianMatrix};
use crate::radar::{radar_program, BeampatternSpec, RadarVars};
use crate::scenario::Scenario;

use super::{
    add_block_psd, add_difference_psd, add_eve_row, add_quad, assemble_from_columns, boundary_refinement,
    reconstruct_rank1, status_or_phase_one, DesignKind, UserRow, DesignResult, SecurityThresholds, SolveDiagnostics, DEGENERATE_GAIN,
};

#[derive(Debug, Clone)]
pub struct SdrProgram {
    pub problem: ConicProblem,
    pub radar: RadarVars,
    pub users: Vec<VarId>,
}

/// `(1 + 1/Γ_c)·h^H R_k h − h^H R h − σ_c² ≥ 0`.
pub(crate) fn add_user_row(
    problem: &mut ConicProblem,
    label: String,
    r: VarId,
    r_k: VarId,
    h: &CVec,
    noise: f64,
    gamma_c: f64,
) {
    let mut e = LinExpr::constant(-noise);
    add_quad(&mut e, problem, r_k, h, 1.0 + 1.0 / gamma_c);
    add_quad(&mut e, problem, r, h, -1.0);
    problem.add(label, Constraint::Ineq(e.compact()));
}

/// Relaxed joint design over `R` and `R_1..R_K`.
pub fn build_p2(scenario: &Scenario, spec: &BeampatternSpec, thresholds: &SecurityThresholds) -> Result<SdrProgram> {
    spec.validate()?;
    thresholds.validate()?;
    let cfg = &scenario.config;
    let m = cfg.num_antennas;
    let mut problem = ConicProblem::new();
    let radar = radar_program(&mut problem, spec, cfg);
    let users: Vec<VarId> = (0..scenario.num_users())
        .map(|k| problem.hermitian(format!("R_{k}"), m))
        .collect();
    for (k, &u) in users.iter().enumerate() {
        add_block_psd(&mut problem, &format!("Rk_psd_{k}"), u);
    }
    add_difference_psd(&mut problem, "radar_psd", radar.covariance, &users);
    if thresholds.user_constraints_active() {
        for (k, &u) in users.iter().enumerate() {
            let h = scenario.user_channel(k);
            add_user_row(
                &mut problem,
                format!("com_{k}"),
                radar.covariance,
                u,
                &h,
                cfg.noise_var_lu,
                thresholds.gamma_c,
            );
        }
    }
    if thresholds.eve_constraints_active() {
        for (q, target) in scenario.targets.iter().enumerate() {
            let a = scenario.steering(target.angle_deg);
            add_eve_row(
                &mut problem,
                format!("eve_{q}"),
                radar.covariance,
                &users,
                &a,
                cfg.noise_var_eve / target.path_loss.norm_sqr(),
                thresholds.gamma_e,
            );
        }
    }
    Ok(SdrProgram { problem, radar, users })
}

/// Steering vector and effective noise `σ_e²/|β|²` of each target.
pub(crate) fn eve_rows(scenario: &Scenario) -> Vec<(CVec, f64)> {
    scenario
        .targets
        .iter()
        .map(|t| (scenario.steering(t.angle_deg), scenario.config.noise_var_eve / t.path_loss.norm_sqr()))
        .collect()
}

/// Rank-one columns from relaxed per-user covariances. Users with no gain
/// get a zero column when no SINR is demanded of them.
pub(crate) fn rank1_columns(
    scenario: &Scenario,
    user_covs: &[HermitianMatrix],
    thresholds: &SecurityThresholds,
) -> Result<CMat> {
    let m = scenario.num_antennas();
    let mut comm = CMat::zeros(m, user_covs.len());
    for (k, r_k) in user_covs.iter().enumerate() {
        let h = scenario.user_channel(k);
        if !thresholds.user_constraints_active() && r_k.quad_form(&h) <= DEGENERATE_GAIN {
            continue;
        }
        comm.set_column(k, &reconstruct_rank1(r_k, &h)?);
    }
    Ok(comm)
}

/// Solves the relaxation and recovers rank-one communication precoders.
pub fn solve_sdr(scenario: &Scenario, spec: &BeampatternSpec, thresholds: &SecurityThresholds) -> Result<DesignResult> {
    let prog = build_p2(scenario, spec, thresholds)?;
    let start = Instant::now();
    let sol = conic::solve(&prog.problem, &SolverSettings::default());
    let diagnostics = SolveDiagnostics::from_solution(&sol, start.elapsed().as_secs_f64());
    status_or_phase_one(&sol, &prog.problem, "sdr design")?;
    let r_hat = HermitianMatrix::from_symmetrized(&sol.hermitian(&prog.problem, prog.radar.covariance));
    let mut user_covs: Vec<HermitianMatrix> = prog
        .users
        .iter()
        .map(|&u| HermitianMatrix::from_symmetrized(&sol.hermitian(&prog.problem, u)))
        .collect();
    let mut diagnostics = diagnostics;
    let users: Vec<UserRow> = (0..scenario.num_users()).map(|k| UserRow::Exact(scenario.user_channel(k))).collect();
    if let Some(refined) = boundary_refinement(scenario, &r_hat, thresholds, &users, &eve_rows(scenario)) {
        user_covs = refined;
        diagnostics.boundary_refined = true;
    }
    let comm = rank1_columns(scenario, &user_covs, thresholds)?;
    let alpha = sol.scalar(&prog.problem, prog.radar.alpha);
    assemble_from_columns(DesignKind::Sdr, scenario, spec, r_hat, comm, alpha, None, diagnostics)
}
