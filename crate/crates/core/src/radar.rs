//! Radar transmit beampattern, cross-correlation pattern and the
//! least-squares radar loss, plus the radar-only reference design.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conic::{self, ConicProblem, Constraint, HermExpr, LinExpr, SolveStatus, SolverSettings, VarId};
use crate::error::{Error, Result};
use crate::linalg::{bilinear, HermitianMatrix};
use crate::scenario::{steering, steering_vector, SystemConfig};

/// Inclusive-boundary slack for beam windows, in degrees.
const WINDOW_EPS_DEG: f64 = 1e-9;

/// Lower bound used for the strictly positive scale `α`.
pub const ALPHA_MIN: f64 = 1e-9;

/// Desired beampattern template and cross-correlation directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeampatternSpec {
    /// Beam centres, one per target.
    pub center_angles: Vec<f64>,
    /// Full width `Δ` of each beam window, degrees.
    pub beam_width_deg: f64,
    /// Weight `η` of the cross-correlation term.
    pub eta: f64,
    /// Directions whose pairwise cross-correlation is penalised.
    pub crosscorr_angles: Vec<f64>,
}

impl BeampatternSpec {
    pub const DEFAULT_BEAM_WIDTH_DEG: f64 = 10.0;
    pub const DEFAULT_ETA: f64 = 1.0;

    /// Beams and cross-correlation set on the given target angles.
    pub fn for_targets(angles: &[f64]) -> Self {
        Self {
            center_angles: angles.to_vec(),
            beam_width_deg: Self::DEFAULT_BEAM_WIDTH_DEG,
            eta: Self::DEFAULT_ETA,
            crosscorr_angles: angles.to_vec(),
        }
    }

    pub fn with_beam_width(mut self, deg: f64) -> Self {
        self.beam_width_deg = deg;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beam_width_deg > 0.0) {
            return Err(Error::Domain(format!("beam width must be positive, got {}", self.beam_width_deg)));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::Domain(format!("eta must be nonnegative, got {}", self.eta)));
        }
        for (i, a) in self.crosscorr_angles.iter().enumerate() {
            if !(*a > -90.0 && *a < 90.0) {
                return Err(Error::Domain(format!("cross-correlation angle {a} outside (-90, 90)")));
            }
            if self.crosscorr_angles[..i].iter().any(|b| b == a) {
                return Err(Error::Domain(format!("duplicate cross-correlation angle {a}")));
            }
        }
        Ok(())
    }

    /// Number of cross-correlation pairs that enter the loss.
    pub fn num_pairs(&self) -> usize {
        let p = self.crosscorr_angles.len();
        p * p.saturating_sub(1) / 2
    }
}

/// `P(θ; R) = a(θ)^H R a(θ)`, clipped at zero.
pub fn beampattern(r: &HermitianMatrix, angle_deg: f64, config: &SystemConfig) -> Result<f64> {
    check_dim(r, config)?;
    let a = steering_vector(config, angle_deg)?;
    Ok(r.quad_form(&a).max(0.0))
}

/// `P_c(θ₁, θ₂; R) = a(θ₂)^H R a(θ₁)`.
pub fn cross_correlation(r: &HermitianMatrix, theta1: f64, theta2: f64, config: &SystemConfig) -> Result<Complex64> {
    check_dim(r, config)?;
    let a1 = steering_vector(config, theta1)?;
    let a2 = steering_vector(config, theta2)?;
    Ok(bilinear(r.as_matrix(), &a2, &a1))
}

/// 1 when `angle` lies within `Δ/2` of some beam centre (inclusive), else 0.
pub fn desired_pattern(spec: &BeampatternSpec, angle_deg: f64) -> f64 {
    let half = 0.5 * spec.beam_width_deg + WINDOW_EPS_DEG;
    if spec.center_angles.iter().any(|c| (angle_deg - c).abs() <= half) {
        1.0
    } else {
        0.0
    }
}

/// Beampattern sampled on the configured grid.
pub fn beampattern_on_grid(r: &HermitianMatrix, config: &SystemConfig) -> Vec<(f64, f64)> {
    config
        .grid
        .angles()
        .into_iter()
        .map(|th| {
            let a = steering(config.num_antennas, config.spacing_ratio, th);
            (th, r.quad_form(&a).max(0.0))
        })
        .collect()
}

/// Breakdown of the radar loss `L_r = L_b + η·L_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarLoss {
    pub beampattern_term: f64,
    pub crosscorr_term: f64,
    pub total: f64,
}

pub fn radar_loss(r: &HermitianMatrix, alpha: f64, spec: &BeampatternSpec, config: &SystemConfig) -> Result<RadarLoss> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    check_dim(r, config)?;
    let angles = config.grid.angles();
    let l = angles.len() as f64;
    let lb = angles
        .iter()
        .map(|&th| {
            let a = steering(config.num_antennas, config.spacing_ratio, th);
            (alpha * desired_pattern(spec, th) - r.quad_form(&a)).powi(2)
        })
        .sum::<f64>()
        / l;
    let lc = crosscorr_term(r, spec, config);
    Ok(RadarLoss {
        beampattern_term: lb,
        crosscorr_term: lc,
        total: lb + spec.eta * lc,
    })
}

fn crosscorr_term(r: &HermitianMatrix, spec: &BeampatternSpec, config: &SystemConfig) -> f64 {
    let pairs = spec.num_pairs();
    if pairs == 0 {
        return 0.0;
    }
    let vecs: Vec<_> = spec
        .crosscorr_angles
        .iter()
        .map(|&th| steering(config.num_antennas, config.spacing_ratio, th))
        .collect();
    let mut acc = 0.0;
    for p in 0..vecs.len() {
        for q in (p + 1)..vecs.len() {
            acc += bilinear(r.as_matrix(), &vecs[q], &vecs[p]).norm_sqr();
        }
    }
    acc / pairs as f64
}

fn check_dim(r: &HermitianMatrix, config: &SystemConfig) -> Result<()> {
    if r.dim() != config.num_antennas {
        return Err(Error::Contract(format!(
            "covariance is {}x{} but the array has {} antennas",
            r.dim(),
            r.dim(),
            config.num_antennas
        )));
    }
    Ok(())
}

/// Handles of the variables shared by every design program.
#[derive(Debug, Clone, Copy)]
pub struct RadarVars {
    pub covariance: VarId,
    pub alpha: VarId,
    pub epigraph: VarId,
}

/// Declares `R`, `α`, the epigraph scalar, the least-squares objective,
/// `R ⪰ 0`, `diag(R) = Pt/M` and `α ≥ ALPHA_MIN`.
pub fn radar_program(problem: &mut ConicProblem, spec: &BeampatternSpec, config: &SystemConfig) -> RadarVars {
    let m = config.num_antennas;
    let r = problem.hermitian("R", m);
    let alpha = problem.scalar("alpha");
    let t = problem.scalar("t");
    let ro = problem.offset(r);
    let ai = problem.index(alpha);
    let param = problem.param(r);

    let angles = config.grid.angles();
    let inv_sqrt_l = 1.0 / (angles.len() as f64).sqrt();
    let mut residuals = Vec::with_capacity(angles.len() + 2 * spec.num_pairs());
    for &th in &angles {
        let a = steering(m, config.spacing_ratio, th);
        let mut e = LinExpr::default();
        e.add_term(ai, desired_pattern(spec, th) * inv_sqrt_l);
        e.add_block(ro, &param.quad_coeffs(&a), -inv_sqrt_l);
        residuals.push(e);
    }
    let pairs = spec.num_pairs();
    if pairs > 0 && spec.eta > 0.0 {
        let w = (spec.eta / pairs as f64).sqrt();
        let vecs: Vec<_> = spec
            .crosscorr_angles
            .iter()
            .map(|&th| steering(m, config.spacing_ratio, th))
            .collect();
        for p in 0..vecs.len() {
            for q in (p + 1)..vecs.len() {
                let g = param.bilinear_coeffs(&vecs[q], &vecs[p]);
                let mut re = LinExpr::default();
                let mut im = LinExpr::default();
                for (j, gj) in g.iter().enumerate() {
                    re.add_term(ro + j, w * gj.re);
                    im.add_term(ro + j, w * gj.im);
                }
                residuals.push(re);
                residuals.push(im);
            }
        }
    }
    problem.set_objective(t, residuals);

    let mut psd = HermExpr::zero(m);
    psd.add_mapped_block(ro, m, 1.0, |b| b.clone());
    problem.add("R_psd", Constraint::Psd(psd));
    let per_antenna = config.per_antenna_power();
    for i in 0..m {
        problem.add(
            format!("power_{i}"),
            Constraint::Eq(LinExpr {
                terms: vec![(ro + i, 1.0)],
                constant: -per_antenna,
            }),
        );
    }
    problem.add(
        "alpha_pos",
        Constraint::Ineq(LinExpr {
            terms: vec![(ai, 1.0)],
            constant: -ALPHA_MIN,
        }),
    );
    RadarVars {
        covariance: r,
        alpha,
        epigraph: t,
    }
}

/// Optimal radar-only covariance.
#[derive(Debug, Clone)]
pub struct RadarOnlyDesign {
    pub covariance: HermitianMatrix,
    pub alpha: f64,
    pub objective: f64,
}

/// Minimizes `L_r(R, α)` over `R ⪰ 0`, `diag(R) = Pt/M`, `α > 0`.
pub fn radar_only_design(spec: &BeampatternSpec, config: &SystemConfig) -> Result<RadarOnlyDesign> {
    spec.validate()?;
    config.validate()?;
    let mut problem = ConicProblem::new();
    let vars = radar_program(&mut problem, spec, config);
    let sol = conic::solve(&problem, &SolverSettings::default());
    match sol.status {
        SolveStatus::Optimal => {}
        other => {
            return Err(Error::Solver(format!(
                "radar-only design returned {other:?} ({})",
                sol.engine_status
            )))
        }
    }
    let covariance = HermitianMatrix::from_symmetrized(&sol.hermitian(&problem, vars.covariance));
    let alpha = sol.scalar(&problem, vars.alpha);
    let objective = radar_loss(&covariance, alpha.max(ALPHA_MIN), spec, config)?.total;
    Ok(RadarOnlyDesign {
        covariance,
        alpha,
        objective,
    })
}
