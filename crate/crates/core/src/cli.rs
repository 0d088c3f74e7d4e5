//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::design::{
    db_to_linear, solve_robust, solve_sdr, solve_zf, AngularUncertaintySet, CsiUncertainty, DesignKind,
    DesignResult, SecurityThresholds,
};
use crate::error::{Error, Result};
use crate::evaluation::{empirical_validate, evaluate, run_sweep, SweepSpec};
use crate::io::{
    read_toml, write_beampattern_csv, write_metrics, write_sweep_csv, write_toml, DesignRecord,
    InfeasibilityRecord, RunInputs, ScenarioFile,
};
use crate::radar::{beampattern_on_grid, radar_only_design};
use crate::scenario::{PrecoderPair, RadarSequenceMode, SystemConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Secure DFRC transmit beamforming.
#[derive(Debug, Parser)]
#[command(name = "secure-dfrc", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Semidefinite-relaxation design with rank-one recovery.
    DesignSdr(DesignArgs),
    /// Zero-forcing design (no inter-user interference).
    DesignZf(DesignArgs),
    /// Robust design for bounded CSI errors and uncertain target angles.
    DesignRobust(DesignArgs),
    /// Radar-only beampattern (no communication or secrecy constraints).
    RadarOnly(ScenarioArgs),
    /// Monte-Carlo sweep over Γc, Γe or the CSI error radius.
    Sweep(SweepArgs),
    /// Synthesizes a frame from a stored design and checks empirical statistics.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory.
    #[arg(long, env = "DFRC_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the beampattern mainlobe width.
    #[arg(long)]
    pub beam_width_deg: Option<f64>,
    /// Overrides the cross-correlation weight.
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub base: ScenarioArgs,
    /// Overrides the user SINR threshold (dB).
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_c_db: Option<f64>,
    /// Overrides the eavesdropper SINR threshold (dB).
    #[arg(long, allow_hyphen_values = true)]
    pub gamma_e_db: Option<f64>,
    /// Overrides the CSI error radii as a fraction of each channel norm.
    #[arg(long)]
    pub csi_fraction: Option<f64>,
    /// Skips the radar-only reference solve (no beampattern MSE in the metrics).
    #[arg(long)]
    pub no_reference: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep file (TOML with optional [system] and [sweep] tables); defaults otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "DFRC_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
    /// Overrides the number of Monte-Carlo trials.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Overrides the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the swept values (comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Design file written by one of the design commands.
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long, env = "DFRC_OUT_DIR", default_value = "out")]
    pub out: PathBuf,
    /// Frame length in symbols.
    #[arg(long, default_value_t = 1024)]
    pub symbols: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Use exactly orthogonal radar sequences instead of random QPSK.
    #[arg(long)]
    pub orthogonal: bool,
}

/// Sweep configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub sweep: SweepSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RadarOnlyRecord {
    format: String,
    alpha: f64,
    objective: f64,
    covariance: Vec<Vec<[f64; 2]>>,
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(Error::InfeasibleDesign(msg)) => {
            eprintln!("infeasible: {msg}");
            EXIT_INFEASIBLE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::DesignSdr(a) => design(DesignKind::Sdr, a),
        Command::DesignZf(a) => design(DesignKind::Zf, a),
        Command::DesignRobust(a) => design(DesignKind::Robust, a),
        Command::RadarOnly(a) => radar_only(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
    }
}

fn load_inputs(base: &ScenarioArgs) -> Result<RunInputs> {
    let mut inputs = ScenarioFile::load(&base.scenario)?.resolve()?;
    if let Some(w) = base.beam_width_deg {
        inputs.spec.beam_width_deg = w;
    }
    if let Some(eta) = base.eta {
        inputs.spec.eta = eta;
    }
    inputs.spec.validate()?;
    Ok(inputs)
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn run_design(kind: DesignKind, inputs: &RunInputs) -> Result<DesignResult> {
    let RunInputs {
        scenario,
        spec,
        thresholds,
        csi,
        angle_step_deg,
    } = inputs;
    match kind {
        DesignKind::Sdr => solve_sdr(scenario, spec, thresholds),
        DesignKind::Zf => solve_zf(scenario, spec, thresholds),
        DesignKind::Robust => {
            let angles = AngularUncertaintySet::from_targets(scenario, *angle_step_deg)?;
            solve_robust(scenario, spec, thresholds, csi, &angles)
        }
    }
}

fn design(kind: DesignKind, args: &DesignArgs) -> Result<()> {
    let mut inputs = load_inputs(&args.base)?;
    if args.gamma_c_db.is_some() || args.gamma_e_db.is_some() {
        inputs.thresholds = SecurityThresholds::new(
            args.gamma_c_db.map_or(inputs.thresholds.gamma_c, db_to_linear),
            args.gamma_e_db.map_or(inputs.thresholds.gamma_e, db_to_linear),
        )?;
    }
    if let Some(f) = args.csi_fraction {
        inputs.csi = CsiUncertainty::relative(&inputs.scenario, f)?;
    }
    let out = &args.base.out;
    prepare_out(out)?;
    let result = match run_design(kind, &inputs) {
        Err(Error::InfeasibleDesign(message)) => {
            let record = InfeasibilityRecord {
                status: "infeasible".into(),
                design: kind.to_string(),
                gamma_c: inputs.thresholds.gamma_c,
                gamma_e: inputs.thresholds.gamma_e,
                message: message.clone(),
            };
            write_toml(&out.join("infeasible.toml"), &record)?;
            return Err(Error::InfeasibleDesign(message));
        }
        other => other?,
    };
    let reference = if args.no_reference {
        None
    } else {
        Some(radar_only_design(&inputs.spec, &inputs.scenario.config)?.covariance)
    };
    let metrics = evaluate(&inputs.scenario, &result, &inputs.thresholds, reference.as_ref())?;
    let pattern = beampattern_on_grid(&result.transmitted_covariance(), &inputs.scenario.config);
    write_beampattern_csv(&out.join("beampattern.csv"), &pattern)?;
    write_toml(&out.join("design.toml"), &DesignRecord::from_result(&result))?;
    write_metrics(&out.join("metrics.toml"), &metrics)?;
    Ok(())
}

fn radar_only(args: &ScenarioArgs) -> Result<()> {
    let inputs = load_inputs(args)?;
    prepare_out(&args.out)?;
    let d = radar_only_design(&inputs.spec, &inputs.scenario.config)?;
    let pattern = beampattern_on_grid(&d.covariance, &inputs.scenario.config);
    write_beampattern_csv(&args.out.join("beampattern.csv"), &pattern)?;
    let m = d.covariance.as_matrix();
    let record = RadarOnlyRecord {
        format: "secure-dfrc radar-only v1".into(),
        alpha: d.alpha,
        objective: d.objective,
        covariance: (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect(),
    };
    write_toml(&args.out.join("radar_only.toml"), &record)
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut file: SweepFile = match &args.config {
        Some(p) => read_toml(p)?,
        None => SweepFile::default(),
    };
    if let Some(t) = args.trials {
        file.sweep.trials = t;
    }
    if let Some(s) = args.seed {
        file.sweep.seed = s;
    }
    if let Some(v) = &args.values {
        file.sweep.values = v.clone();
    }
    prepare_out(&args.out)?;
    let result = run_sweep(&file.system, &file.sweep)?;
    write_sweep_csv(&args.out.join("sweep.csv"), &result)
}

fn validate(args: &ValidateArgs) -> Result<()> {
    let inputs = ScenarioFile::load(&args.scenario)?.resolve()?;
    let record: DesignRecord = read_toml(&args.design)?;
    let precoders = PrecoderPair::new(record.comm_precoder()?, record.radar_precoder()?)?;
    let mode = if args.orthogonal {
        RadarSequenceMode::ExactOrthogonal
    } else {
        RadarSequenceMode::QpskRandom
    };
    let report = empirical_validate(&precoders, &inputs.scenario, args.symbols, args.seed, mode)?;
    prepare_out(&args.out)?;
    write_toml(&args.out.join("validation.toml"), &report)
}
