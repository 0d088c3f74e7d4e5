//! Design robust to bounded channel errors and target-angle uncertainty.
//!
//! Each user constraint must hold for every `h = ĥ + e` with `‖e‖ ≤ u`,
//! which the S-procedure turns into an `(M+1)×(M+1)` LMI; each
//! eavesdropper constraint is enforced on a sampled angular interval and
//! the mainlobe of the desired pattern is widened to cover it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conic::{self, ConicProblem, Constraint, HermExpr, LinExpr, SolverSettings, VarId};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec, HermitianMatrix};
use crate::radar::{radar_program, BeampatternSpec, RadarVars};
use crate::scenario::{steering, Scenario};

use super::sdr::{add_user_row, rank1_columns};
use super::{
    add_block_psd, add_difference_psd, add_eve_row, assemble_from_columns, boundary_refinement, status_or_phase_one,
    DesignKind, DesignResult, SecurityThresholds, SolveDiagnostics, UserRow,
};

/// Spherical channel-error bounds `‖e_k‖ ≤ u_k` around the scenario channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsiUncertainty {
    pub radii: Vec<f64>,
}

impl CsiUncertainty {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.iter().any(|&u| !(u >= 0.0 && u.is_finite())) {
            return Err(Error::Domain("CSI error radii must be finite and >= 0".into()));
        }
        Ok(Self { radii })
    }

    pub fn perfect(k: usize) -> Self {
        Self { radii: vec![0.0; k] }
    }

    /// `u_k = fraction · ‖ĥ_k‖`.
    pub fn relative(scenario: &Scenario, fraction: f64) -> Result<Self> {
        Self::new(
            (0..scenario.num_users())
                .map(|k| fraction * scenario.user_channel(k).norm())
                .collect(),
        )
    }
}

/// Sampled angular intervals `[θ_q − Δθ_q, θ_q + Δθ_q]`, one per target.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularUncertaintySet {
    pub sets: Vec<Vec<f64>>,
}

impl AngularUncertaintySet {
    /// Samples each target's interval at `step_deg`, endpoints included,
    /// clipped to the open half-plane.
    pub fn from_targets(scenario: &Scenario, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0) {
            return Err(Error::Domain("angular step must be positive".into()));
        }
        let sets = scenario
            .targets
            .iter()
            .map(|t| {
                let d = t.angle_uncertainty_deg;
                if d == 0.0 {
                    return vec![t.angle_deg];
                }
                let n = (2.0 * d / step_deg).round() as usize;
                let lo = t.angle_deg - d;
                (0..=n)
                    .map(|i| if i == n { t.angle_deg + d } else { lo + i as f64 * step_deg })
                    .filter(|a| *a > -90.0 && *a < 90.0)
                    .collect()
            })
            .collect();
        Ok(Self { sets })
    }

    pub fn num_points(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn max_half_width(&self) -> f64 {
        self.sets
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| 0.5 * (s[s.len() - 1] - s[0]))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct RobustProgram {
    pub problem: ConicProblem,
    pub radar: RadarVars,
    pub users: Vec<VarId>,
    /// S-procedure multipliers; `None` where the user has exact CSI.
    pub multipliers: Vec<Option<VarId>>,
    /// Beampattern specification actually used (mainlobe widened).
    pub spec: BeampatternSpec,
}

/// `G^H X G` with `G = [I, ĥ]`.
fn bordered(x: &CMat, h: &CVec) -> CMat {
    let m = x.nrows();
    let xh = x * h;
    let mut out = CMat::zeros(m + 1, m + 1);
    out.view_mut((0, 0), (m, m)).copy_from(x);
    for i in 0..m {
        out[(i, m)] = xh[i];
        out[(m, i)] = xh[i].conj();
    }
    out[(m, m)] = h.dotc(&xh);
    out
}

/// `[[S + tI, Sĥ], [ĥ^H S, ĥ^H S ĥ − σ² − t u²]]` at a given `S` and `t`.
pub fn s_procedure_matrix(s: &CMat, h: &CVec, t: f64, radius: f64, noise: f64) -> CMat {
    let m = s.nrows();
    let mut out = bordered(s, h);
    for i in 0..m {
        out[(i, i)] += c(t, 0.0);
    }
    out[(m, m)] -= c(noise + t * radius * radius, 0.0);
    out
}

/// Largest `λ_min` of the S-procedure matrix over `t ≥ 0`, for the user
/// constraint `S = (1 + 1/Γ_c)·R_k − R`. Nonnegative iff the constraint
/// holds for every channel in the ball.
pub fn robust_margin(r: &CMat, r_k: &CMat, h: &CVec, radius: f64, noise: f64, gamma_c: f64) -> f64 {
    let s = r_k * c(1.0 + 1.0 / gamma_c, 0.0) - r;
    let f = |t: f64| HermitianMatrix::from_symmetrized(&s_procedure_matrix(&s, h, t, radius, noise)).min_eigenvalue();
    // λ_min is concave in t; bracket the maximum, then golden-section search
    let mut hi = 1.0;
    while f(2.0 * hi) > f(hi) && hi < 1e8 {
        hi *= 2.0;
    }
    let (mut a, mut b) = (0.0, 2.0 * hi);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    f(0.5 * (a + b)).max(f(0.0))
}

/// Robust program over `R`, `R_1..R_K`, `α` and one multiplier per
/// uncertain user.
pub fn build_p4(
    scenario: &Scenario,
    spec: &BeampatternSpec,
    thresholds: &SecurityThresholds,
    csi: &CsiUncertainty,
    angles: &AngularUncertaintySet,
) -> Result<RobustProgram> {
    spec.validate()?;
    thresholds.validate()?;
    let k_users = scenario.num_users();
    if csi.radii.len() != k_users {
        return Err(Error::Contract(format!(
            "{} CSI radii for {k_users} users",
            csi.radii.len()
        )));
    }
    if angles.sets.len() != scenario.targets.len() {
        return Err(Error::Contract(format!(
            "{} angular sets for {} targets",
            angles.sets.len(),
            scenario.targets.len()
        )));
    }
    let cfg = &scenario.config;
    let m = cfg.num_antennas;
    let widened = spec
        .clone()
        .with_beam_width(spec.beam_width_deg + 2.0 * angles.max_half_width());
    widened.validate()?;

    let mut problem = ConicProblem::new();
    let radar = radar_program(&mut problem, &widened, cfg);
    let users: Vec<VarId> = (0..k_users).map(|k| problem.hermitian(format!("R_{k}"), m)).collect();
    for (k, &u) in users.iter().enumerate() {
        add_block_psd(&mut problem, &format!("Rk_psd_{k}"), u);
    }
    add_difference_psd(&mut problem, "radar_psd", radar.covariance, &users);

    let mut multipliers = vec![None; k_users];
    if thresholds.user_constraints_active() {
        let gain = 1.0 + 1.0 / thresholds.gamma_c;
        for (k, &u) in users.iter().enumerate() {
            let h = scenario.user_channel(k);
            let radius = csi.radii[k];
            if radius == 0.0 {
                add_user_row(&mut problem, format!("com_{k}"), radar.covariance, u, &h, cfg.noise_var_lu, thresholds.gamma_c);
                continue;
            }
            let t = problem.scalar(format!("lambda_{k}"));
            let ti = problem.index(t);
            let mut lmi = HermExpr::zero(m + 1);
            lmi.add_mapped_block(problem.offset(u), m, gain, |b| bordered(b, &h));
            lmi.add_mapped_block(problem.offset(radar.covariance), m, -1.0, |b| bordered(b, &h));
            let mut tm = CMat::identity(m + 1, m + 1);
            tm[(m, m)] = c(-radius * radius, 0.0);
            lmi.add_scalar_term(ti, tm);
            lmi.constant[(m, m)] = c(-cfg.noise_var_lu, 0.0);
            problem.add(format!("com_{k}"), Constraint::Psd(lmi));
            problem.add(
                format!("lambda_pos_{k}"),
                Constraint::Ineq(LinExpr {
                    terms: vec![(ti, 1.0)],
                    constant: 0.0,
                }),
            );
            multipliers[k] = Some(t);
        }
    }
    if thresholds.eve_constraints_active() {
        for (q, (target, set)) in scenario.targets.iter().zip(&angles.sets).enumerate() {
            let noise = cfg.noise_var_eve / target.path_loss.norm_sqr();
            for (i, &th) in set.iter().enumerate() {
                let a = steering(m, cfg.spacing_ratio, th);
                add_eve_row(&mut problem, format!("eve_{q}_{i}"), radar.covariance, &users, &a, noise, thresholds.gamma_e);
            }
        }
    }
    Ok(RobustProgram {
        problem,
        radar,
        users,
        multipliers,
        spec: widened,
    })
}

/// Solves the robust program and recovers rank-one precoders.
pub fn solve_robust(
    scenario: &Scenario,
    spec: &BeampatternSpec,
    thresholds: &SecurityThresholds,
    csi: &CsiUncertainty,
    angles: &AngularUncertaintySet,
) -> Result<DesignResult> {
    let prog = build_p4(scenario, spec, thresholds, csi, angles)?;
    let start = Instant::now();
    let sol = conic::solve(&prog.problem, &SolverSettings::default());
    let diagnostics = SolveDiagnostics::from_solution(&sol, start.elapsed().as_secs_f64());
    status_or_phase_one(&sol, &prog.problem, "robust design")?;
    let r_hat = HermitianMatrix::from_symmetrized(&sol.hermitian(&prog.problem, prog.radar.covariance));
    let mut user_covs: Vec<HermitianMatrix> = prog
        .users
        .iter()
        .map(|&u| HermitianMatrix::from_symmetrized(&sol.hermitian(&prog.problem, u)))
        .collect();
    let users: Vec<UserRow> = (0..scenario.num_users())
        .map(|k| {
            let h = scenario.user_channel(k);
            match csi.radii[k] {
                0.0 => UserRow::Exact(h),
                radius => UserRow::Ball { h, radius },
            }
        })
        .collect();
    let cfg = &scenario.config;
    let eves: Vec<(CVec, f64)> = scenario
        .targets
        .iter()
        .zip(&angles.sets)
        .flat_map(|(t, set)| {
            let noise = cfg.noise_var_eve / t.path_loss.norm_sqr();
            set.iter().map(move |&th| (steering(cfg.num_antennas, cfg.spacing_ratio, th), noise))
        })
        .collect();
    let mut diagnostics = diagnostics;
    if let Some(refined) = boundary_refinement(scenario, &r_hat, thresholds, &users, &eves) {
        user_covs = refined;
        diagnostics.boundary_refined = true;
    }
    let comm = rank1_columns(scenario, &user_covs, thresholds)?;
    let alpha = sol.scalar(&prog.problem, prog.radar.alpha);
    assemble_from_columns(DesignKind::Robust, scenario, &prog.spec, r_hat, comm, alpha, None, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_channel, AngleGrid, SystemConfig, Target};

    fn scenario(uncertainty: f64) -> Scenario {
        let cfg = SystemConfig {
            grid: AngleGrid::full(0.5),
            ..SystemConfig::default()
        };
        let h = generate_channel(2, 10, 5).unwrap();
        let targets = [-40.0, 0.0, 40.0]
            .iter()
            .map(|&a| Target::new(a).with_uncertainty(uncertainty))
            .collect();
        Scenario::new(cfg, h, targets).unwrap()
    }

    #[test]
    fn angular_set_sampling() {
        let sc = scenario(5.0);
        let set = AngularUncertaintySet::from_targets(&sc, 0.1).unwrap();
        assert!(set.sets.iter().all(|s| s.len() == 101));
        assert_eq!(set.sets[1][0], -5.0);
        assert_eq!(set.sets[1][100], 5.0);
        assert!((set.max_half_width() - 5.0).abs() < 1e-12);
        let exact = AngularUncertaintySet::from_targets(&scenario(0.0), 0.1).unwrap();
        assert_eq!(exact.num_points(), 3);
    }

    #[test]
    fn zero_radius_gives_plain_user_rows() {
        let sc = scenario(0.0);
        let spec = BeampatternSpec::for_targets(&sc.target_angles());
        let th = SecurityThresholds::from_db(10.0, 0.0).unwrap();
        let ang = AngularUncertaintySet::from_targets(&sc, 0.5).unwrap();
        let prog = build_p4(&sc, &spec, &th, &CsiUncertainty::perfect(2), &ang).unwrap();
        let sdr = super::super::build_p2(&sc, &spec, &th).unwrap();
        assert_eq!(prog.problem.count("psd"), sdr.problem.count("psd"));
        assert_eq!(prog.problem.count("ineq"), sdr.problem.count("ineq"));
        assert!(prog.multipliers.iter().all(Option::is_none));
    }

    #[test]
    fn margin_matches_exact_constraint_at_zero_radius() {
        let m = 3;
        let r = CMat::identity(m, m) * c(1.0 / 3.0, 0.0);
        let h = CVec::from_vec(vec![c(1.0, 0.0), c(0.5, -0.2), c(0.0, 0.3)]);
        let rk = HermitianMatrix::outer(&(&r * &h * c(0.5, 0.0))).into_matrix();
        let s = &rk * c(2.0, 0.0) - &r;
        let exact = h.dotc(&(&s * &h)).re - 0.01;
        let margin = robust_margin(&r, &rk, &h, 0.0, 0.01, 1.0);
        assert_eq!(margin >= -1e-9, exact >= 0.0);
    }

    #[test]
    fn robust_design_satisfies_the_lmi() {
        let sc = scenario(2.0);
        let spec = BeampatternSpec::for_targets(&sc.target_angles());
        let th = SecurityThresholds::from_db(10.0, 0.0).unwrap();
        let csi = CsiUncertainty::relative(&sc, 0.02).unwrap();
        let ang = AngularUncertaintySet::from_targets(&sc, 0.5).unwrap();
        let d = solve_robust(&sc, &spec, &th, &csi, &ang).unwrap();
        let r = d.transmitted_covariance().into_matrix();
        for k in 0..2 {
            let rk = d.user_covariances[k].as_matrix();
            let m = robust_margin(&r, rk, &sc.user_channel(k), csi.radii[k], sc.config.noise_var_lu, th.gamma_c);
            assert!(m >= -1e-6, "user {k} margin {m:.3e}");
        }
    }
}
