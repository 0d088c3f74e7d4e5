//! Performance metrics, frame-level validation and Monte-Carlo sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{
    linear_to_db, solve_robust, solve_sdr, solve_zf, AngularUncertaintySet, CsiUncertainty, DesignKind, DesignResult,
    SecurityThresholds,
};
use crate::error::{Error, Result};
use crate::linalg::HermitianMatrix;
use crate::radar::{beampattern_on_grid, radar_only_design, BeampatternSpec};
use crate::scenario::{
    generate_channel, synthesize_frame, PrecoderPair, RadarSequenceMode, Scenario, SystemConfig, Target,
};

/// Absolute slack on the constraint residuals when deciding feasibility.
pub const CONSTRAINT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub user_sinr: Vec<f64>,
    pub user_sinr_db: Vec<f64>,
    pub eve_sinr: Vec<f64>,
    pub eve_sinr_db: Vec<f64>,
    /// bits/s/Hz
    pub sum_rate: f64,
    /// bits/s/Hz, clamped at zero.
    pub secrecy_rate: f64,
    pub beampattern_mse: Option<f64>,
    /// Every user above `Γ_c` and every eavesdropper below `Γ_e`.
    pub feasible: bool,
}

/// `γ_k = |h_k^H w_k|² / (Σ_{i≠k} |h_k^H w_i|² + ‖h_k^H W_r‖² + σ_c²)`.
pub fn user_sinr(precoders: &PrecoderPair, scenario: &Scenario) -> Vec<f64> {
    let hc = &scenario.channel * &precoders.comm;
    let hr = &scenario.channel * &precoders.radar;
    (0..scenario.num_users())
        .map(|k| {
            let signal = hc[(k, k)].norm_sqr();
            let total_comm: f64 = hc.row(k).iter().map(|z| z.norm_sqr()).sum();
            let radar: f64 = hr.row(k).iter().map(|z| z.norm_sqr()).sum();
            signal / (total_comm - signal + radar + scenario.config.noise_var_lu)
        })
        .collect()
}

/// Worst-case eavesdropper SINR: all communication streams count as signal.
pub fn eve_sinr(precoders: &PrecoderPair, scenario: &Scenario) -> Vec<f64> {
    scenario
        .targets
        .iter()
        .map(|t| {
            let a = scenario.steering(t.angle_deg);
            let g = t.path_loss.norm_sqr();
            let comm = (a.adjoint() * &precoders.comm).norm_squared();
            let radar = (a.adjoint() * &precoders.radar).norm_squared();
            g * comm / (g * radar + scenario.config.noise_var_eve)
        })
        .collect()
}

/// Residuals of the SINR constraints in their linear form, nonnegative when
/// met: `(1 + 1/Γ_c)·|h_k^H w_k|² − h_k^H R h_k − σ_c²` per user and
/// `|β_q|² a_q^H R a_q + σ_e² − (1 + 1/Γ_e)·|β_q|² ‖a_q^H W_c‖²` per target.
/// Inactive constraints report `+∞`.
pub fn constraint_residuals(
    precoders: &PrecoderPair,
    scenario: &Scenario,
    thresholds: &SecurityThresholds,
) -> (Vec<f64>, Vec<f64>) {
    let r = precoders.covariance();
    let users = (0..scenario.num_users())
        .map(|k| {
            if !thresholds.user_constraints_active() {
                return f64::INFINITY;
            }
            let h = scenario.user_channel(k);
            let s = (h.adjoint() * precoders.comm.column(k))[(0, 0)].norm_sqr();
            (1.0 + 1.0 / thresholds.gamma_c) * s - r.quad_form(&h) - scenario.config.noise_var_lu
        })
        .collect();
    let eves = scenario
        .targets
        .iter()
        .map(|t| {
            if !thresholds.eve_constraints_active() {
                return f64::INFINITY;
            }
            let a = scenario.steering(t.angle_deg);
            let g = t.path_loss.norm_sqr();
            let s = (a.adjoint() * &precoders.comm).norm_squared();
            g * r.quad_form(&a) + scenario.config.noise_var_eve - (1.0 + 1.0 / thresholds.gamma_e) * g * s
        })
        .collect();
    (users, eves)
}

pub fn sum_rate(user_sinr: &[f64]) -> f64 {
    user_sinr.iter().map(|g| (1.0 + g).log2()).sum()
}

pub fn secrecy_rate(user_sinr: &[f64], eve_sinr: &[f64]) -> f64 {
    let user = user_sinr.iter().map(|g| (1.0 + g).log2()).fold(f64::INFINITY, f64::min);
    let eve = eve_sinr.iter().map(|g| (1.0 + g).log2()).fold(0.0, f64::max);
    (user - eve).max(0.0)
}

/// `(1/L) Σ_l (P(θ_l; R̂) − P(θ_l; R*))²` over the configured grid.
pub fn beampattern_mse(r_hat: &HermitianMatrix, r_star: &HermitianMatrix, config: &SystemConfig) -> f64 {
    let a = beampattern_on_grid(r_hat, config);
    let b = beampattern_on_grid(r_star, config);
    a.iter().zip(&b).map(|((_, x), (_, y))| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Metrics of a design; the MSE is reported when a radar-only reference
/// covariance is supplied.
pub fn evaluate(
    scenario: &Scenario,
    result: &DesignResult,
    thresholds: &SecurityThresholds,
    reference: Option<&HermitianMatrix>,
) -> Result<MetricsReport> {
    if result.precoders.num_antennas() != scenario.num_antennas() || result.precoders.num_users() != scenario.num_users() {
        return Err(Error::Contract("design does not match the scenario dimensions".into()));
    }
    let us = user_sinr(&result.precoders, scenario);
    let es = eve_sinr(&result.precoders, scenario);
    let (ur, er) = constraint_residuals(&result.precoders, scenario, thresholds);
    let feasible = ur.iter().chain(&er).all(|&r| r >= -CONSTRAINT_TOL);
    Ok(MetricsReport {
        user_sinr_db: us.iter().map(|&g| linear_to_db(g)).collect(),
        eve_sinr_db: es.iter().map(|&g| linear_to_db(g)).collect(),
        sum_rate: sum_rate(&us),
        secrecy_rate: secrecy_rate(&us, &es),
        beampattern_mse: reference.map(|r| beampattern_mse(&result.transmitted_covariance(), r, &scenario.config)),
        user_sinr: us,
        eve_sinr: es,
        feasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub num_symbols: usize,
    /// `‖(1/N) X X^H − R‖_F`.
    pub covariance_error: f64,
    pub analytic_sinr: Vec<f64>,
    pub empirical_sinr: Vec<f64>,
    /// Largest `|empirical − analytic|` in dB.
    pub max_sinr_deviation_db: f64,
}

/// Synthesizes a frame and compares empirical covariance and per-user SINR
/// (powers split by the known symbol streams, noise added analytically)
/// against their analytic values.
pub fn empirical_validate(
    precoders: &PrecoderPair,
    scenario: &Scenario,
    n: usize,
    seed: u64,
    mode: RadarSequenceMode,
) -> Result<EmpiricalReport> {
    let frame = synthesize_frame(precoders, n, seed, mode)?;
    let covariance_error = (frame.empirical_covariance() - precoders.covariance().into_matrix()).norm();
    let analytic = user_sinr(precoders, scenario);
    let received = &scenario.channel * &frame.transmit_signal;
    let hc = &scenario.channel * &precoders.comm;
    let nf = n as f64;
    let empirical: Vec<f64> = (0..scenario.num_users())
        .map(|k| {
            let mut signal = 0.0;
            let mut rest = 0.0;
            for t in 0..n {
                let s = hc[(k, k)] * frame.comm_symbols[(k, t)];
                signal += s.norm_sqr();
                rest += (received[(k, t)] - s).norm_sqr();
            }
            (signal / nf) / (rest / nf + scenario.config.noise_var_lu)
        })
        .collect();
    let max_sinr_deviation_db = analytic
        .iter()
        .zip(&empirical)
        .map(|(a, e)| (linear_to_db(*a) - linear_to_db(*e)).abs())
        .fold(0.0, f64::max);
    Ok(EmpiricalReport {
        num_symbols: n,
        covariance_error,
        analytic_sinr: analytic,
        empirical_sinr: empirical,
        max_sinr_deviation_db,
    })
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Γ_c in dB.
    GammaCDb,
    /// Γ_e in dB.
    GammaEDb,
    /// CSI error radius as a fraction of `‖ĥ_k‖` (robust design only).
    CsiFraction,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::GammaCDb => "gamma_c_db",
            SweepAxis::GammaEDb => "gamma_e_db",
            SweepAxis::CsiFraction => "csi_fraction",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub designers: Vec<DesignKind>,
    pub num_users: usize,
    pub num_targets: usize,
    /// Held fixed unless swept.
    pub gamma_c_db: f64,
    pub gamma_e_db: f64,
    pub csi_fraction: f64,
    pub angle_uncertainty_deg: f64,
    /// Targets are drawn uniformly from this interval each trial.
    pub angle_range_deg: (f64, f64),
    pub beam_width_deg: f64,
    pub eta: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::GammaCDb,
            values: vec![10.0, 12.0, 14.0, 16.0, 18.0],
            designers: vec![DesignKind::Sdr, DesignKind::Zf],
            num_users: 2,
            num_targets: 1,
            gamma_c_db: 10.0,
            gamma_e_db: 0.0,
            csi_fraction: 0.0,
            angle_uncertainty_deg: 0.0,
            angle_range_deg: (-60.0, 60.0),
            beam_width_deg: BeampatternSpec::DEFAULT_BEAM_WIDTH_DEG,
            eta: BeampatternSpec::DEFAULT_ETA,
            trials: 50,
            seed: 1,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self, config: &SystemConfig) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Sweep("need at least one trial".into()));
        }
        if self.values.is_empty() || self.designers.is_empty() {
            return Err(Error::Sweep("sweep needs at least one value and one designer".into()));
        }
        if self.num_users < 1 || self.num_users > config.num_antennas {
            return Err(Error::Domain(format!(
                "need 1 <= K <= M, got K={}, M={}",
                self.num_users, config.num_antennas
            )));
        }
        if self.num_targets < 1 {
            return Err(Error::Domain("need at least one target".into()));
        }
        let (lo, hi) = self.angle_range_deg;
        if !(lo < hi && lo > -90.0 && hi < 90.0) {
            return Err(Error::Domain(format!("bad target angle range ({lo}, {hi})")));
        }
        if self.axis == SweepAxis::CsiFraction && self.designers.iter().any(|d| *d != DesignKind::Robust) {
            return Err(Error::Sweep("a CSI-radius sweep only applies to the robust designer".into()));
        }
        Ok(())
    }

    fn thresholds_at(&self, value: f64) -> Result<SecurityThresholds> {
        match self.axis {
            SweepAxis::GammaCDb => SecurityThresholds::from_db(value, self.gamma_e_db),
            SweepAxis::GammaEDb => SecurityThresholds::from_db(self.gamma_c_db, value),
            SweepAxis::CsiFraction => SecurityThresholds::from_db(self.gamma_c_db, self.gamma_e_db),
        }
    }

    fn csi_fraction_at(&self, value: f64) -> f64 {
        match self.axis {
            SweepAxis::CsiFraction => value,
            _ => self.csi_fraction,
        }
    }
}

/// Mean and standard error of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub designer: DesignKind,
    pub feasible_trials: usize,
    pub infeasible_trials: usize,
    /// Trials where the solver failed for reasons other than infeasibility.
    pub failed_trials: usize,
    pub mse: Stat,
    pub objective: Stat,
    pub sum_rate: Stat,
    pub secrecy_rate: Stat,
    pub min_user_sinr_db: Stat,
    pub max_eve_sinr_db: Stat,
}

impl SweepPoint {
    pub fn infeasible_rate(&self) -> f64 {
        let total = self.feasible_trials + self.infeasible_trials + self.failed_trials;
        self.infeasible_trials as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub trials: usize,
    pub seed: u64,
    /// Per-trial seeds, in trial order.
    pub trial_seeds: Vec<u64>,
    /// Ordered by value, then by designer in the order requested.
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn series(&self, designer: DesignKind) -> Vec<&SweepPoint> {
        self.points.iter().filter(|p| p.designer == designer).collect()
    }
}

#[derive(Debug, Clone)]
enum Outcome {
    Ok(MetricsReport, f64),
    Infeasible,
    Failed,
}

/// Channel and target draw of one trial.
pub fn draw_trial(config: &SystemConfig, spec: &SweepSpec, trial_seed: u64) -> Result<Scenario> {
    let channel = generate_channel(spec.num_users, config.num_antennas, trial_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed ^ 0xA5A5_5A5A_DEAD_BEEF);
    let (lo, hi) = spec.angle_range_deg;
    let targets = (0..spec.num_targets)
        .map(|_| Target::new(rng.random_range(lo..hi)).with_uncertainty(spec.angle_uncertainty_deg))
        .collect();
    Scenario::new(config.clone(), channel, targets)
}

fn run_trial(config: &SystemConfig, spec: &SweepSpec, trial_seed: u64) -> Result<Vec<Outcome>> {
    let scenario = draw_trial(config, spec, trial_seed)?;
    let beam = BeampatternSpec::for_targets(&scenario.target_angles())
        .with_beam_width(spec.beam_width_deg)
        .with_eta(spec.eta);
    let reference = radar_only_design(&beam, config)?.covariance;
    let mut out = Vec::with_capacity(spec.values.len() * spec.designers.len());
    for &value in &spec.values {
        let th = spec.thresholds_at(value)?;
        for &designer in &spec.designers {
            let result = match designer {
                DesignKind::Sdr => solve_sdr(&scenario, &beam, &th),
                DesignKind::Zf => solve_zf(&scenario, &beam, &th),
                DesignKind::Robust => {
                    let csi = CsiUncertainty::relative(&scenario, spec.csi_fraction_at(value))?;
                    let ang = AngularUncertaintySet::from_targets(&scenario, config.grid_resolution())?;
                    solve_robust(&scenario, &beam, &th, &csi, &ang)
                }
            };
            out.push(match result {
                Ok(d) => Outcome::Ok(evaluate(&scenario, &d, &th, Some(&reference))?, d.objective),
                Err(Error::InfeasibleDesign(_)) => Outcome::Infeasible,
                Err(Error::Solver(_)) | Err(Error::Reconstruction(_)) | Err(Error::NotPsd { .. }) | Err(Error::DegenerateRho { .. }) => {
                    Outcome::Failed
                }
                Err(e) => return Err(e),
            });
        }
    }
    Ok(out)
}

/// Monte-Carlo sweep. Trials run in parallel; every trial draws a fresh
/// channel and target set that is shared by all sweep points and designers,
/// and the reduction runs in trial order, so results depend on the seed only.
pub fn run_sweep(config: &SystemConfig, spec: &SweepSpec) -> Result<SweepResult> {
    config.validate()?;
    spec.validate(config)?;
    let mut seeder = ChaCha8Rng::seed_from_u64(spec.seed);
    let trial_seeds: Vec<u64> = (0..spec.trials).map(|_| seeder.random()).collect();
    let outcomes: Vec<Vec<Outcome>> = trial_seeds
        .par_iter()
        .map(|&s| run_trial(config, spec, s))
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let nd = spec.designers.len();
    for (vi, &value) in spec.values.iter().enumerate() {
        for (di, &designer) in spec.designers.iter().enumerate() {
            let idx = vi * nd + di;
            let mut reports = Vec::new();
            let (mut infeasible, mut failed) = (0, 0);
            for trial in &outcomes {
                match &trial[idx] {
                    Outcome::Ok(r, obj) => reports.push((r, *obj)),
                    Outcome::Infeasible => infeasible += 1,
                    Outcome::Failed => failed += 1,
                }
            }
            let col = |f: &dyn Fn(&MetricsReport, f64) -> f64| -> Stat {
                Stat::of(&reports.iter().map(|(r, o)| f(r, *o)).collect::<Vec<_>>())
            };
            points.push(SweepPoint {
                value,
                designer,
                feasible_trials: reports.len(),
                infeasible_trials: infeasible,
                failed_trials: failed,
                mse: col(&|r, _| r.beampattern_mse.unwrap_or(f64::NAN)),
                objective: col(&|_, o| o),
                sum_rate: col(&|r, _| r.sum_rate),
                secrecy_rate: col(&|r, _| r.secrecy_rate),
                min_user_sinr_db: col(&|r, _| r.user_sinr_db.iter().copied().fold(f64::INFINITY, f64::min)),
                max_eve_sinr_db: col(&|r, _| r.eve_sinr_db.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            });
        }
    }
    if points.iter().all(|p| p.feasible_trials == 0) {
        return Err(Error::Sweep("every trial was infeasible or failed".into()));
    }
    Ok(SweepResult {
        axis: spec.axis,
        trials: spec.trials,
        seed: spec.seed,
        trial_seeds,
        points,
    })
}
