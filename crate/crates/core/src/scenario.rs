//! Physical system description: array geometry, channels, targets and
//! transmit frames.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec, HermitianMatrix};

/// Uniform angle grid `start, start + step, …, stop` in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleGrid {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl AngleGrid {
    pub fn new(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Self> {
        let grid = Self {
            start_deg,
            stop_deg,
            step_deg,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// `[−90°, 90°]` at the given resolution.
    pub fn full(step_deg: f64) -> Self {
        Self {
            start_deg: -90.0,
            stop_deg: 90.0,
            step_deg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_deg > 0.0) || !self.step_deg.is_finite() {
            return Err(Error::Domain(format!("grid step must be positive, got {}", self.step_deg)));
        }
        if !(self.start_deg >= -90.0 && self.stop_deg <= 90.0 && self.start_deg <= self.stop_deg) {
            return Err(Error::Domain(format!(
                "grid [{}, {}] must lie inside [-90, 90]",
                self.start_deg, self.stop_deg
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop_deg - self.start_deg) / self.step_deg + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid angles. When `1/step` is an integer the angles are computed as
    /// `k / (1/step)` so decimal grids hit values like 5.0° exactly.
    pub fn angles(&self) -> Vec<f64> {
        let per_deg = 1.0 / self.step_deg;
        let n = self.len();
        if (per_deg - per_deg.round()).abs() < 1e-9 && per_deg >= 1.0 {
            let per_deg = per_deg.round();
            let k0 = (self.start_deg * per_deg).round();
            if (k0 / per_deg - self.start_deg).abs() < 1e-12 {
                return (0..n).map(|l| (k0 + l as f64) / per_deg).collect();
            }
        }
        (0..n).map(|l| self.start_deg + l as f64 * self.step_deg).collect()
    }
}

/// Array and noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub num_antennas: usize,
    /// Total transmit power `Pt` (linear).
    pub total_power: f64,
    pub noise_var_lu: f64,
    pub noise_var_eve: f64,
    /// Antenna spacing over carrier wavelength, `d/λ`.
    pub spacing_ratio: f64,
    pub grid: AngleGrid,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            num_antennas: 10,
            total_power: 1.0,
            noise_var_lu: 0.01,
            noise_var_eve: 0.01,
            spacing_ratio: 0.5,
            grid: AngleGrid::full(0.1),
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_antennas < 1 {
            return Err(Error::Domain("num_antennas must be positive".into()));
        }
        if !(self.total_power > 0.0) {
            return Err(Error::Domain("total_power must be positive".into()));
        }
        if !(self.noise_var_lu > 0.0 && self.noise_var_eve > 0.0) {
            return Err(Error::Domain("noise variances must be positive".into()));
        }
        if !(self.spacing_ratio > 0.0) {
            return Err(Error::Domain("spacing_ratio must be positive".into()));
        }
        self.grid.validate()
    }

    pub fn grid_resolution(&self) -> f64 {
        self.grid.step_deg
    }

    pub fn with_grid(mut self, grid: AngleGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn per_antenna_power(&self) -> f64 {
        self.total_power / self.num_antennas as f64
    }
}

/// Radar target that is also treated as a potential eavesdropper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub angle_deg: f64,
    pub path_loss: Complex64,
    pub angle_uncertainty_deg: f64,
}

impl Target {
    pub fn new(angle_deg: f64) -> Self {
        Self {
            angle_deg,
            path_loss: c(1.0, 0.0),
            angle_uncertainty_deg: 0.0,
        }
    }

    pub fn with_uncertainty(mut self, delta_deg: f64) -> Self {
        self.angle_uncertainty_deg = delta_deg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.angle_deg > -90.0 && self.angle_deg < 90.0) {
            return Err(Error::Domain(format!("target angle {} outside (-90, 90)", self.angle_deg)));
        }
        if !(self.path_loss.norm() > 0.0) {
            return Err(Error::Domain("target path loss must be nonzero".into()));
        }
        if !(self.angle_uncertainty_deg >= 0.0) {
            return Err(Error::Domain("angle uncertainty must be nonnegative".into()));
        }
        Ok(())
    }
}

/// A complete downlink + sensing scenario. Row `k` of `channel` is `h_k^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub channel: CMat,
    pub targets: Vec<Target>,
}

impl Scenario {
    pub fn new(config: SystemConfig, channel: CMat, targets: Vec<Target>) -> Result<Self> {
        config.validate()?;
        let k = channel.nrows();
        let m = channel.ncols();
        if m != config.num_antennas {
            return Err(Error::Contract(format!(
                "channel has {m} columns but the array has {} antennas",
                config.num_antennas
            )));
        }
        if k < 1 || k > m {
            return Err(Error::Domain(format!("need 1 <= K <= M, got K={k}, M={m}")));
        }
        if !has_full_row_rank(&channel) {
            return Err(Error::Domain("channel matrix must have full row rank".into()));
        }
        for t in &targets {
            t.validate()?;
        }
        Ok(Self {
            config,
            channel,
            targets,
        })
    }

    pub fn num_users(&self) -> usize {
        self.channel.nrows()
    }

    pub fn num_antennas(&self) -> usize {
        self.config.num_antennas
    }

    /// Channel vector `h_k` (column), i.e. the conjugate of row `k`.
    pub fn user_channel(&self, k: usize) -> CVec {
        self.channel.row(k).adjoint()
    }

    pub fn target_angles(&self) -> Vec<f64> {
        self.targets.iter().map(|t| t.angle_deg).collect()
    }

    pub fn steering(&self, angle_deg: f64) -> CVec {
        steering(self.config.num_antennas, self.config.spacing_ratio, angle_deg)
    }
}

fn has_full_row_rank(h: &CMat) -> bool {
    let gram = h * h.adjoint();
    let scale = (0..gram.nrows()).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return false;
    }
    let eig = SymmetricEigen::new(gram);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    min > 1e-10 * scale
}

/// ULA steering vector, unit norm: element `m` is
/// `exp(j·2π·(d/λ)·m·sin θ)/√M`.
pub fn steering_vector(config: &SystemConfig, angle_deg: f64) -> Result<CVec> {
    if !(-90.0..=90.0).contains(&angle_deg) {
        return Err(Error::Domain(format!("steering angle {angle_deg} outside [-90, 90]")));
    }
    Ok(steering(config.num_antennas, config.spacing_ratio, angle_deg))
}

pub(crate) fn steering(m: usize, spacing_ratio: f64, angle_deg: f64) -> CVec {
    let phase = 2.0 * PI * spacing_ratio * angle_deg.to_radians().sin();
    let norm = 1.0 / (m as f64).sqrt();
    CVec::from_fn(m, |i, _| Complex64::from_polar(norm, phase * i as f64))
}

/// Budget of extra draws when a generated channel is rank deficient.
pub const CHANNEL_RETRIES: u64 = 8;

/// i.i.d. `CN(0, 1)` Rayleigh channel, `K×M`, deterministic in `seed`.
pub fn generate_channel(k: usize, m: usize, seed: u64) -> Result<CMat> {
    if k < 1 || k > m {
        return Err(Error::Domain(format!("need 1 <= K <= M, got K={k}, M={m}")));
    }
    for attempt in 0..=CHANNEL_RETRIES {
        let sub_seed = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed);
        let h = complex_gaussian(k, m, &mut rng);
        if has_full_row_rank(&h) {
            return Ok(h);
        }
    }
    Err(Error::ChannelGeneration(format!(
        "channel stayed rank deficient after {CHANNEL_RETRIES} retries"
    )))
}

pub(crate) fn complex_gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c(s * re, s * im)
    })
}

/// Communication precoder `W_c` (`M×K`) and radar precoder `W_r` (`M×M`).
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderPair {
    pub comm: CMat,
    pub radar: CMat,
}

impl PrecoderPair {
    pub fn new(comm: CMat, radar: CMat) -> Result<Self> {
        let m = comm.nrows();
        if radar.nrows() != m || radar.ncols() != m {
            return Err(Error::Contract(format!(
                "radar precoder must be {m}x{m}, got {}x{}",
                radar.nrows(),
                radar.ncols()
            )));
        }
        Ok(Self { comm, radar })
    }

    pub fn num_antennas(&self) -> usize {
        self.comm.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.comm.ncols()
    }

    /// `W_r W_r^H + W_c W_c^H`.
    pub fn covariance(&self) -> HermitianMatrix {
        HermitianMatrix::from_symmetrized(&(&self.comm * self.comm.adjoint() + &self.radar * self.radar.adjoint()))
    }

    pub fn radar_covariance(&self) -> HermitianMatrix {
        HermitianMatrix::from_symmetrized(&(&self.radar * self.radar.adjoint()))
    }

    pub fn user_covariance(&self, k: usize) -> HermitianMatrix {
        HermitianMatrix::outer(&self.comm.column(k).into_owned())
    }
}

/// How the `M` radar sequences are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadarSequenceMode {
    /// Independent random QPSK chips; orthogonal only in expectation.
    #[default]
    QpskRandom,
    /// DFT rows `exp(j2π·m·n/N)`, so that `S S^H / N = I` exactly (needs `N ≥ M`).
    ExactOrthogonal,
}

#[derive(Debug, Clone)]
pub struct TransmitFrame {
    /// `S`, `M×N`.
    pub radar_symbols: CMat,
    /// `C`, `K×N`, unit-modulus QPSK.
    pub comm_symbols: CMat,
    /// `X = W_r S + W_c C`, `M×N`.
    pub transmit_signal: CMat,
}

impl TransmitFrame {
    pub fn num_symbols(&self) -> usize {
        self.transmit_signal.ncols()
    }

    /// `(1/N) X X^H`.
    pub fn empirical_covariance(&self) -> CMat {
        let n = self.num_symbols() as f64;
        &self.transmit_signal * self.transmit_signal.adjoint() / c(n, 0.0)
    }
}

pub(crate) fn qpsk_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let bits: u8 = rng.random_range(0..4);
        let re = if bits & 1 == 0 { s } else { -s };
        let im = if bits & 2 == 0 { s } else { -s };
        c(re, im)
    })
}

/// Builds a frame of `n` snapshots with random QPSK communication symbols
/// and radar sequences per `mode`.
pub fn synthesize_frame(
    precoders: &PrecoderPair,
    n: usize,
    seed: u64,
    mode: RadarSequenceMode,
) -> Result<TransmitFrame> {
    if n < 1 {
        return Err(Error::Domain("frame needs at least one symbol".into()));
    }
    let m = precoders.num_antennas();
    let k = precoders.num_users();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comm_symbols = qpsk_matrix(k, n, &mut rng);
    let radar_symbols = match mode {
        RadarSequenceMode::QpskRandom => qpsk_matrix(m, n, &mut rng),
        RadarSequenceMode::ExactOrthogonal => {
            if n < m {
                return Err(Error::Domain(format!(
                    "exact-orthogonal radar sequences need N >= M, got N={n}, M={m}"
                )));
            }
            CMat::from_fn(m, n, |row, col| {
                let phase = 2.0 * PI * ((row * col) % n) as f64 / n as f64;
                Complex64::from_polar(1.0, phase)
            })
        }
    };
    let transmit_signal = &precoders.radar * &radar_symbols + &precoders.comm * &comm_symbols;
    Ok(TransmitFrame {
        radar_symbols,
        comm_symbols,
        transmit_signal,
    })
}
