//! Scenario files, result records and versioned CSV artifacts.
//!
//! Scenario files are TOML. Complex numbers are `[re, im]` pairs and any
//! quantity given in dB uses a `_db` key suffix instead of the linear key
//! (`gamma_c_db = 10` or `gamma_c = 10.0`, not both). Unknown keys are
//! rejected.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::design::{db_to_linear, CsiUncertainty, DesignKind, DesignResult, SecurityThresholds};
use crate::error::{Error, Result};
use crate::evaluation::{MetricsReport, SweepAxis, SweepResult};
use crate::linalg::{c, CMat};
use crate::radar::BeampatternSpec;
use crate::scenario::{generate_channel, AngleGrid, Scenario, SystemConfig, Target};

pub const BEAMPATTERN_HEADER: &str = "# secure-dfrc beampattern v1";
pub const SWEEP_HEADER: &str = "# secure-dfrc sweep v1";
pub const DESIGN_FORMAT: &str = "secure-dfrc design v1";

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn matrix_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| pair(m[(i, j)])).collect()).collect()
}

fn rows_matrix(rows: &[Vec<[f64; 2]>], what: &str) -> Result<CMat> {
    let r = rows.len();
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != cols) {
        return Err(Error::Config(format!("{what}: rows have different lengths")));
    }
    Ok(CMat::from_fn(r, cols, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

/// Exactly one of a linear value and its dB counterpart, or the default.
fn linear_or_db(linear: Option<f64>, db: Option<f64>, key: &str, default: Option<f64>) -> Result<f64> {
    match (linear, db) {
        (Some(_), Some(_)) => Err(Error::Config(format!("give either `{key}` or `{key}_db`, not both"))),
        (Some(v), None) => Ok(v),
        (None, Some(d)) => Ok(db_to_linear(d)),
        (None, None) => default.ok_or_else(|| Error::Config(format!("missing `{key}` (or `{key}_db`)"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_antennas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_power_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_var_lu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_var_lu_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_var_eve: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_var_eve_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<AngleGrid>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Explicit channel, row `k` = `h_k^H`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<[f64; 2]>>>,
    /// Otherwise, a Rayleigh draw of `num_users` rows from `seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_users: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub angle_deg: f64,
    #[serde(default = "unit_gain", skip_serializing_if = "is_unit_gain")]
    pub path_loss: [f64; 2],
    #[serde(default, skip_serializing_if = "is_zero")]
    pub angle_uncertainty_deg: f64,
}

fn unit_gain() -> [f64; 2] {
    [1.0, 0.0]
}

fn is_unit_gain(v: &[f64; 2]) -> bool {
    *v == [1.0, 0.0]
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_c_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_e: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_e_db: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeampatternSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam_width_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Defaults to the target angles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_angles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crosscorr_angles: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustSection {
    /// `u_k = csi_fraction·‖ĥ_k‖`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csi_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csi_radii: Option<Vec<f64>>,
    /// Sampling step of the angular uncertainty sets; defaults to the grid step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle_step_deg: Option<f64>,
}

/// On-disk scenario description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub system: SystemSection,
    pub channel: ChannelSection,
    pub targets: Vec<TargetSection>,
    #[serde(default)]
    pub thresholds: ThresholdSection,
    #[serde(default)]
    pub beampattern: BeampatternSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust: Option<RobustSection>,
}

/// Everything a design run needs, resolved to linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInputs {
    pub scenario: Scenario,
    pub spec: BeampatternSpec,
    pub thresholds: SecurityThresholds,
    pub csi: CsiUncertainty,
    pub angle_step_deg: f64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self) -> Result<RunInputs> {
        let d = SystemConfig::default();
        let s = &self.system;
        let config = SystemConfig {
            num_antennas: s.num_antennas.unwrap_or(d.num_antennas),
            total_power: linear_or_db(s.total_power, s.total_power_db, "total_power", Some(d.total_power))?,
            noise_var_lu: linear_or_db(s.noise_var_lu, s.noise_var_lu_db, "noise_var_lu", Some(d.noise_var_lu))?,
            noise_var_eve: linear_or_db(s.noise_var_eve, s.noise_var_eve_db, "noise_var_eve", Some(d.noise_var_eve))?,
            spacing_ratio: s.spacing_ratio.unwrap_or(d.spacing_ratio),
            grid: s.grid.clone().unwrap_or(d.grid),
        };
        config.validate()?;
        let channel = match (&self.channel.rows, self.channel.num_users, self.channel.seed) {
            (Some(rows), None, None) => rows_matrix(rows, "channel.rows")?,
            (None, Some(k), Some(seed)) => generate_channel(k, config.num_antennas, seed)?,
            _ => {
                return Err(Error::Config(
                    "channel: give either `rows`, or both `num_users` and `seed`".into(),
                ))
            }
        };
        if self.targets.is_empty() {
            return Err(Error::Config("at least one [[targets]] entry is required".into()));
        }
        let targets: Vec<Target> = self
            .targets
            .iter()
            .map(|t| Target {
                angle_deg: t.angle_deg,
                path_loss: c(t.path_loss[0], t.path_loss[1]),
                angle_uncertainty_deg: t.angle_uncertainty_deg,
            })
            .collect();
        for t in &targets {
            t.validate()?;
        }
        let scenario = Scenario::new(config, channel, targets)?;

        let th = &self.thresholds;
        let thresholds = SecurityThresholds::new(
            linear_or_db(th.gamma_c, th.gamma_c_db, "gamma_c", None)?,
            linear_or_db(th.gamma_e, th.gamma_e_db, "gamma_e", None)?,
        )?;

        let angles = scenario.target_angles();
        let b = &self.beampattern;
        let spec = BeampatternSpec {
            center_angles: b.center_angles.clone().unwrap_or_else(|| angles.clone()),
            beam_width_deg: b.beam_width_deg.unwrap_or(BeampatternSpec::DEFAULT_BEAM_WIDTH_DEG),
            eta: b.eta.unwrap_or(BeampatternSpec::DEFAULT_ETA),
            crosscorr_angles: b.crosscorr_angles.clone().unwrap_or(angles),
        };
        spec.validate()?;

        let robust = self.robust.clone().unwrap_or_default();
        let csi = match (robust.csi_fraction, &robust.csi_radii) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("robust: give either `csi_fraction` or `csi_radii`".into()))
            }
            (Some(f), None) => CsiUncertainty::relative(&scenario, f)?,
            (None, Some(r)) => CsiUncertainty::new(r.clone())?,
            (None, None) => CsiUncertainty::perfect(scenario.num_users()),
        };
        let angle_step_deg = robust.angle_step_deg.unwrap_or(scenario.config.grid_resolution());
        Ok(RunInputs {
            scenario,
            spec,
            thresholds,
            csi,
            angle_step_deg,
        })
    }

    /// Fully explicit file (linear units, channel rows) describing `inputs`.
    pub fn from_inputs(inputs: &RunInputs) -> Self {
        let cfg = &inputs.scenario.config;
        Self {
            system: SystemSection {
                num_antennas: Some(cfg.num_antennas),
                total_power: Some(cfg.total_power),
                noise_var_lu: Some(cfg.noise_var_lu),
                noise_var_eve: Some(cfg.noise_var_eve),
                spacing_ratio: Some(cfg.spacing_ratio),
                grid: Some(cfg.grid.clone()),
                ..SystemSection::default()
            },
            channel: ChannelSection {
                rows: Some(matrix_rows(&inputs.scenario.channel)),
                ..ChannelSection::default()
            },
            targets: inputs
                .scenario
                .targets
                .iter()
                .map(|t| TargetSection {
                    angle_deg: t.angle_deg,
                    path_loss: pair(t.path_loss),
                    angle_uncertainty_deg: t.angle_uncertainty_deg,
                })
                .collect(),
            thresholds: ThresholdSection {
                gamma_c: Some(inputs.thresholds.gamma_c),
                gamma_e: Some(inputs.thresholds.gamma_e),
                ..ThresholdSection::default()
            },
            beampattern: BeampatternSection {
                beam_width_deg: Some(inputs.spec.beam_width_deg),
                eta: Some(inputs.spec.eta),
                center_angles: Some(inputs.spec.center_angles.clone()),
                crosscorr_angles: Some(inputs.spec.crosscorr_angles.clone()),
            },
            robust: Some(RobustSection {
                csi_fraction: None,
                csi_radii: Some(inputs.csi.radii.clone()),
                angle_step_deg: Some(inputs.angle_step_deg),
            }),
        }
    }
}

/// Serialized form of a [`DesignResult`]. Timing is left out so that
/// identical inputs give identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignRecord {
    pub format: String,
    pub kind: DesignKind,
    pub alpha: f64,
    pub objective: f64,
    pub relaxed_objective: f64,
    pub dual_bound: f64,
    pub iterations: u32,
    pub primal_residual: f64,
    pub gap: f64,
    pub engine_status: String,
    pub boundary_refined: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    pub covariance: Vec<Vec<[f64; 2]>>,
    pub comm_precoder: Vec<Vec<[f64; 2]>>,
    pub radar_precoder: Vec<Vec<[f64; 2]>>,
}

impl DesignRecord {
    pub fn from_result(r: &DesignResult) -> Self {
        Self {
            format: DESIGN_FORMAT.into(),
            kind: r.kind,
            alpha: r.alpha,
            objective: r.objective,
            relaxed_objective: r.relaxed_objective,
            dual_bound: r.diagnostics.dual_bound,
            iterations: r.diagnostics.iterations,
            primal_residual: r.diagnostics.primal_residual,
            gap: r.diagnostics.gap,
            engine_status: r.diagnostics.engine_status.clone(),
            boundary_refined: r.diagnostics.boundary_refined,
            rho: r.rho.clone(),
            covariance: matrix_rows(r.covariance.as_matrix()),
            comm_precoder: matrix_rows(&r.precoders.comm),
            radar_precoder: matrix_rows(&r.precoders.radar),
        }
    }

    pub fn comm_precoder(&self) -> Result<CMat> {
        rows_matrix(&self.comm_precoder, "comm_precoder")
    }

    pub fn radar_precoder(&self) -> Result<CMat> {
        rows_matrix(&self.radar_precoder, "radar_precoder")
    }

    pub fn covariance(&self) -> Result<CMat> {
        rows_matrix(&self.covariance, "covariance")
    }
}

/// Written instead of a design when the program is infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfeasibilityRecord {
    pub status: String,
    pub design: String,
    pub gamma_c: f64,
    pub gamma_e: f64,
    pub message: String,
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_metrics(path: &Path, metrics: &MetricsReport) -> Result<()> {
    write_toml(path, metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeampatternRow {
    pub angle_deg: f64,
    pub power_linear: f64,
    pub power_db: f64,
}

fn versioned_writer(path: &Path, header: &str) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "{header}")?;
    Ok(csv::Writer::from_writer(file))
}

/// Checks the version line and returns a CSV reader over the rest.
fn versioned_reader(path: &Path, header: &str) -> Result<(String, csv::Reader<BufReader<fs::File>>)> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let first = first.trim_end().to_string();
    if !first.starts_with(header) {
        return Err(Error::Config(format!(
            "{}: expected header `{header}`, found `{first}`",
            path.display()
        )));
    }
    Ok((first, csv::Reader::from_reader(reader)))
}

pub fn write_beampattern_csv(path: &Path, pattern: &[(f64, f64)]) -> Result<()> {
    let mut w = versioned_writer(path, BEAMPATTERN_HEADER)?;
    for &(angle_deg, power_linear) in pattern {
        w.serialize(BeampatternRow {
            angle_deg,
            power_linear,
            power_db: 10.0 * power_linear.log10(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_beampattern_csv(path: &Path) -> Result<Vec<BeampatternRow>> {
    let (_, mut r) = versioned_reader(path, BEAMPATTERN_HEADER)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// One sweep point per row; every metric as mean and standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub designer: DesignKind,
    pub feasible_trials: usize,
    pub infeasible_trials: usize,
    pub failed_trials: usize,
    pub infeasible_rate: f64,
    pub mse_mean: f64,
    pub mse_stderr: f64,
    pub objective_mean: f64,
    pub objective_stderr: f64,
    pub sum_rate_mean: f64,
    pub sum_rate_stderr: f64,
    pub secrecy_rate_mean: f64,
    pub secrecy_rate_stderr: f64,
    pub min_user_sinr_db_mean: f64,
    pub min_user_sinr_db_stderr: f64,
    pub max_eve_sinr_db_mean: f64,
    pub max_eve_sinr_db_stderr: f64,
}

pub fn sweep_rows(result: &SweepResult) -> Vec<SweepRow> {
    result
        .points
        .iter()
        .map(|p| SweepRow {
            value: p.value,
            designer: p.designer,
            feasible_trials: p.feasible_trials,
            infeasible_trials: p.infeasible_trials,
            failed_trials: p.failed_trials,
            infeasible_rate: p.infeasible_rate(),
            mse_mean: p.mse.mean,
            mse_stderr: p.mse.stderr,
            objective_mean: p.objective.mean,
            objective_stderr: p.objective.stderr,
            sum_rate_mean: p.sum_rate.mean,
            sum_rate_stderr: p.sum_rate.stderr,
            secrecy_rate_mean: p.secrecy_rate.mean,
            secrecy_rate_stderr: p.secrecy_rate.stderr,
            min_user_sinr_db_mean: p.min_user_sinr_db.mean,
            min_user_sinr_db_stderr: p.min_user_sinr_db.stderr,
            max_eve_sinr_db_mean: p.max_eve_sinr_db.mean,
            max_eve_sinr_db_stderr: p.max_eve_sinr_db.stderr,
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let header = format!(
        "{SWEEP_HEADER} axis={} trials={} seed={}",
        result.axis, result.trials, result.seed
    );
    let mut w = versioned_writer(path, &header)?;
    for row in sweep_rows(result) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Sweep CSV contents: the axis from the version line and the rows.
pub fn read_sweep_csv(path: &Path) -> Result<(SweepAxis, Vec<SweepRow>)> {
    let (first, mut r) = versioned_reader(path, SWEEP_HEADER)?;
    let axis_name = first
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("axis="))
        .ok_or_else(|| Error::Config(format!("{}: sweep header lacks axis", path.display())))?;
    let axis = match axis_name {
        "gamma_c_db" => SweepAxis::GammaCDb,
        "gamma_e_db" => SweepAxis::GammaEDb,
        "csi_fraction" => SweepAxis::CsiFraction,
        other => return Err(Error::Config(format!("unknown sweep axis `{other}`"))),
    };
    let rows = r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok((axis, rows))
}
