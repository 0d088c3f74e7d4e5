//! Zero-forcing design: interference-free users, radar confined to the null
//! space of the channel.

use std::time::Instant;

use crate::conic::{self, ConicProblem, Constraint, LinExpr, SolverSettings, VarId};
use crate::error::{Error, Result};
use crate::linalg::{psd_factor, psd_sqrt, CMat, HermitianMatrix};
use crate::radar::{radar_program, BeampatternSpec, RadarVars};
use crate::scenario::{PrecoderPair, Scenario};

use super::{
    add_block_psd, add_eve_row, assemble_from_columns, factorize_radar_cov, status_or_phase_one,
    DesignKind, DesignResult, SecurityThresholds, SolveDiagnostics, DEGENERATE_GAIN, PSD_REL_TOL,
};

#[derive(Debug, Clone)]
pub struct ZfProgram {
    pub problem: ConicProblem,
    pub radar: RadarVars,
    pub comm: VarId,
    pub rho: Vec<VarId>,
    /// Radar-subspace block `Y` and its basis `N`; absent when `K = M`.
    pub null: Option<(VarId, CMat)>,
}

/// `H X H^H = diag(ρ)`, one real row per diagonal entry and two per
/// off-diagonal pair.
fn add_diagonalization(problem: &mut ConicProblem, prefix: &str, x: VarId, scenario: &Scenario, rho: &[VarId]) {
    let param = problem.param(x);
    let off = problem.offset(x);
    let k = scenario.num_users();
    let hs: Vec<_> = (0..k).map(|i| scenario.user_channel(i)).collect();
    for i in 0..k {
        for j in i..k {
            let g = param.bilinear_coeffs(&hs[i], &hs[j]);
            if i == j {
                let mut e = LinExpr::default();
                e.add_block(off, &g.iter().map(|z| z.re).collect::<Vec<_>>(), 1.0);
                e.add_term(problem.index(rho[i]), -1.0);
                problem.add(format!("{prefix}_{i}_{i}"), Constraint::Eq(e.compact()));
            } else {
                let mut re = LinExpr::default();
                let mut im = LinExpr::default();
                re.add_block(off, &g.iter().map(|z| z.re).collect::<Vec<_>>(), 1.0);
                im.add_block(off, &g.iter().map(|z| z.im).collect::<Vec<_>>(), 1.0);
                problem.add(format!("{prefix}_{i}_{j}_re"), Constraint::Eq(re.compact()));
                problem.add(format!("{prefix}_{i}_{j}_im"), Constraint::Eq(im.compact()));
            }
        }
    }
}

/// Orthonormal basis of the null space of `H` (`M×(M−K)`).
pub fn null_space_basis(channel: &CMat) -> CMat {
    let m = channel.ncols();
    let k = channel.nrows();
    let gram = channel.adjoint() * channel;
    let eig = HermitianMatrix::from_symmetrized(&gram).into_matrix().symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    CMat::from_fn(m, m - k, |i, j| eig.eigenvectors[(i, order[j])])
}

/// Zero-forcing program over `R`, `R_com`, `ρ` and `α`.
///
/// `H R H^H = H R_com H^H` together with `R − R_com ⪰ 0` forces
/// `R − R_com = N Y N^H` with `N` spanning the null space of `H`; the
/// program states it in that form, with `Y ⪰ 0`, so that it keeps a
/// strictly feasible point.
pub fn build_p3(scenario: &Scenario, spec: &BeampatternSpec, thresholds: &SecurityThresholds) -> Result<ZfProgram> {
    spec.validate()?;
    thresholds.validate()?;
    let cfg = &scenario.config;
    let m = cfg.num_antennas;
    let k = scenario.num_users();
    let mut problem = ConicProblem::new();
    let radar = radar_program(&mut problem, spec, cfg);
    let comm = problem.hermitian("R_com", m);
    let rho: Vec<VarId> = (0..k).map(|i| problem.scalar(format!("rho_{i}"))).collect();
    let null = (k < m).then(|| problem.hermitian("Y", m - k));
    add_block_psd(&mut problem, "Rcom_psd", comm);
    if let Some(y) = null {
        add_block_psd(&mut problem, "radar_psd", y);
    }

    // R − R_com − N Y N^H = 0, coordinate by coordinate
    let param = problem.param(comm);
    let ro = problem.offset(radar.covariance);
    let co = problem.offset(comm);
    let basis = null_space_basis(&scenario.channel);
    let images: Vec<Vec<f64>> = match null {
        Some(y) => {
            let yp = problem.param(y);
            (0..yp.len())
                .map(|j| param.to_vec(&(&basis * yp.basis(j) * basis.adjoint())))
                .collect()
        }
        None => Vec::new(),
    };
    for idx in 0..param.len() {
        let mut e = LinExpr::default();
        e.add_term(ro + idx, 1.0);
        e.add_term(co + idx, -1.0);
        if let Some(y) = null {
            let yo = problem.offset(y);
            for (j, img) in images.iter().enumerate() {
                e.add_term(yo + j, -img[idx]);
            }
        }
        problem.add(format!("zfR_{idx}"), Constraint::Eq(e.compact()));
    }
    add_diagonalization(&mut problem, "zfC", comm, scenario, &rho);
    for (i, &p) in rho.iter().enumerate() {
        problem.add(
            format!("com_{i}"),
            Constraint::Ineq(LinExpr {
                terms: vec![(problem.index(p), 1.0)],
                constant: -thresholds.gamma_c * cfg.noise_var_lu,
            }),
        );
    }
    if thresholds.eve_constraints_active() {
        for (q, target) in scenario.targets.iter().enumerate() {
            let a = scenario.steering(target.angle_deg);
            add_eve_row(
                &mut problem,
                format!("eve_{q}"),
                radar.covariance,
                &[comm],
                &a,
                cfg.noise_var_eve / target.path_loss.norm_sqr(),
                thresholds.gamma_e,
            );
        }
    }
    Ok(ZfProgram {
        problem,
        radar,
        comm,
        rho,
        null: null.map(|y| (y, basis)),
    })
}

/// Communication columns with `H W_c` lower triangular, real nonnegative
/// diagonal, and `W_c W_c^H ⪯ R_com`.
fn zf_columns(r_com: &HermitianMatrix, channel: &CMat) -> Result<CMat> {
    let k = channel.nrows();
    let l_c = psd_factor(r_com, 1e-10)?;
    let b = (channel * &l_c).adjoint();
    let qr = b.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        let d = r[(j, j)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            let col = q.column(j) * phase;
            q.set_column(j, &col);
        }
    }
    Ok(l_c * q.columns(0, k))
}

/// Recovers precoders from a zero-forcing optimum. `gamma_c > 0` demands a
/// positive power for every user.
pub fn recover_precoders_zf(
    r_hat: &HermitianMatrix,
    r_com: &HermitianMatrix,
    channel: &CMat,
    gamma_c: f64,
) -> Result<PrecoderPair> {
    let gains = channel * r_com.as_matrix() * channel.adjoint();
    if gamma_c > 0.0 {
        for user in 0..channel.nrows() {
            let rho = gains[(user, user)].re;
            if rho <= DEGENERATE_GAIN {
                return Err(Error::DegenerateRho { user, rho });
            }
        }
    }
    let comm = zf_columns(r_com, channel)?;
    let cov = HermitianMatrix::from_symmetrized(&(&comm * comm.adjoint()));
    let radar = factorize_radar_cov(&r_hat.sub(&cov))?;
    PrecoderPair::new(comm, radar)
}

fn psd_projection(x: &CMat) -> Result<HermitianMatrix> {
    let s = psd_sqrt(&HermitianMatrix::from_symmetrized(x), PSD_REL_TOL)?;
    Ok(HermitianMatrix::from_symmetrized(&(&s * s.adjoint())))
}

pub fn solve_zf(scenario: &Scenario, spec: &BeampatternSpec, thresholds: &SecurityThresholds) -> Result<DesignResult> {
    let prog = build_p3(scenario, spec, thresholds)?;
    let start = Instant::now();
    let sol = conic::solve(&prog.problem, &SolverSettings::default());
    let diagnostics = SolveDiagnostics::from_solution(&sol, start.elapsed().as_secs_f64());
    status_or_phase_one(&sol, &prog.problem, "zero-forcing design")?;
    // Project both parts onto the PSD cone and assemble R from them, so
    // that R − R_com lies exactly in the null space of H.
    let r_com = psd_projection(&sol.hermitian(&prog.problem, prog.comm))?;
    let r_hat = match &prog.null {
        Some((y, basis)) => {
            let y_hat = psd_projection(&sol.hermitian(&prog.problem, *y))?;
            HermitianMatrix::from_symmetrized(&(r_com.as_matrix() + basis * y_hat.as_matrix() * basis.adjoint()))
        }
        None => r_com.clone(),
    };
    let rho: Vec<f64> = prog.rho.iter().map(|&p| sol.scalar(&prog.problem, p)).collect();
    let pair = recover_precoders_zf(&r_hat, &r_com, &scenario.channel, thresholds.gamma_c)?;
    let alpha = sol.scalar(&prog.problem, prog.radar.alpha);
    assemble_from_columns(DesignKind::Zf, scenario, spec, r_hat, pair.comm, alpha, Some(rho), diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_channel, AngleGrid, SystemConfig, Target};

    fn scenario(k: usize, seed: u64) -> Scenario {
        let cfg = SystemConfig {
            grid: AngleGrid::full(1.0),
            ..SystemConfig::default()
        };
        let h = generate_channel(k, 10, seed).unwrap();
        let angles = [-40.0, 0.0, 40.0];
        Scenario::new(cfg, h, angles.iter().map(|&a| Target::new(a)).collect()).unwrap()
    }

    #[test]
    fn program_has_three_cones_and_two_structural_blocks() {
        let sc = scenario(2, 4);
        let spec = BeampatternSpec::for_targets(&sc.target_angles());
        let prog = build_p3(&sc, &spec, &SecurityThresholds::from_db(10.0, 0.0).unwrap()).unwrap();
        // R, R_com and the radar part R − R_com
        assert_eq!(prog.problem.count("psd"), 3);
        assert_eq!(prog.problem.count_labeled("zfR_"), 100);
        // 2 diagonal rows + 2 rows for the single off-diagonal pair
        assert_eq!(prog.problem.count_labeled("zfC_"), 4);
    }

    #[test]
    fn null_space_basis_is_orthonormal_and_annihilated() {
        let sc = scenario(3, 1);
        let n = null_space_basis(&sc.channel);
        assert_eq!(n.shape(), (10, 7));
        assert!((n.adjoint() * &n - CMat::identity(7, 7)).norm() < 1e-12);
        assert!((&sc.channel * &n).norm() < 1e-12);
    }

    #[test]
    fn full_user_load_has_no_radar_subspace() {
        let cfg = SystemConfig {
            num_antennas: 3,
            grid: AngleGrid::full(2.0),
            ..SystemConfig::default()
        };
        let sc = Scenario::new(cfg, generate_channel(3, 3, 6).unwrap(), vec![Target::new(10.0)]).unwrap();
        let spec = BeampatternSpec::for_targets(&[10.0]);
        let prog = build_p3(&sc, &spec, &SecurityThresholds::from_db(0.0, 10.0).unwrap()).unwrap();
        assert_eq!(prog.problem.count("psd"), 2);
    }

    #[test]
    fn zero_forcing_structure_holds() {
        let sc = scenario(3, 9);
        let spec = BeampatternSpec::for_targets(&sc.target_angles());
        let th = SecurityThresholds::from_db(12.0, 0.0).unwrap();
        let d = solve_zf(&sc, &spec, &th).unwrap();
        let h = &sc.channel;
        let hw = h * &d.precoders.comm;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(hw[(i, j)].norm() < 1e-6, "interference {i}->{j}: {}", hw[(i, j)].norm());
                }
            }
            assert!(hw[(i, i)].im.abs() < 1e-9 && hw[(i, i)].re > 0.0);
        }
        let leak = (h * &d.precoders.radar).norm();
        let bound = 1e-6 * h.norm() * sc.config.total_power.sqrt();
        assert!(leak <= bound, "radar leakage {leak:.3e} > {bound:.3e}");
    }

    #[test]
    fn degenerate_rho_is_reported() {
        let sc = scenario(1, 2);
        let r = HermitianMatrix::identity(10).scale(0.1);
        let err = recover_precoders_zf(&r, &HermitianMatrix::zeros(10), &sc.channel, 1.0).unwrap_err();
        assert!(matches!(err, Error::DegenerateRho { user: 0, .. }));
    }
}
