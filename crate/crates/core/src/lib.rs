//! Two-bounce lidar toolkit: transient simulation, signal extraction, and
//! single-view volumetric reconstruction.
//!
//! A pulsed laser illuminates one scene point at a time; a time-resolved
//! sensor records per-pixel photon histograms of light that bounced twice
//! (laser -> spot -> surface -> sensor). The arrival time of each pulse
//! encodes path length and its absence reveals cast shadows, which together
//! constrain both visible and occluded geometry. This crate simulates such
//! measurements for Lambertian scenes and reconstructs the full scene by
//! optimizing a volumetric density grid against them.

pub mod eval;
pub mod field;
pub mod io;
pub mod math;
pub mod pipeline;
pub mod recon;
pub mod reference;
pub mod rng;
pub mod scene;
pub mod signal;
pub mod transient;

/// Crate-wide error type. The CLI maps variants onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration (missing files, unparseable config, bad schema).
    #[error("config error: {0}")]
    Config(String),
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Input data is malformed or inconsistent.
    #[error("data error: {0}")]
    Data(String),
    /// A numerical failure (non-finite loss, divergence).
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
