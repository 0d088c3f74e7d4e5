//! Transmit beamforming for a dual-functional radar-communication base
//! station that must keep its downlink confidential from the radar targets.
//!
//! The crate provides the semidefinite-relaxation design with exact rank-one
//! recovery, a zero-forcing variant recovered through Cholesky + QR, and a
//! robust design for bounded CSI errors and uncertain target directions,
//! plus the metrics and Monte-Carlo harness used to evaluate them.

extern crate openblas_src;

pub mod cli;
pub mod conic;
pub mod design;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod linalg;
pub mod radar;
pub mod scenario;

pub use error::{Error, Result};
