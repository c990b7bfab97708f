//! Simulation and spectral analysis of resonance fluorescence that is
//! randomly gated by quantum jumps.
//!
//! The crate is organized along the signal path:
//!
//! * [`telegraph`]: the two-state jump process, its closed-form
//!   autocorrelation and power spectrum, and the repump rate model.
//! * [`photon`]: photon-count records and the low-pass intensity channel.
//! * [`heterodyne`]: the down-converted heterodyne beat and its band-pass.
//! * [`spectral`]: Welch estimation, decimation to the analysis band,
//!   line + pedestal fitting and comparison against the analytic spectrum.
//! * [`jump_stats`]: bright/dark period detection and dwell-time statistics.
//! * [`pipeline`]: run configuration, artifacts, manifests and the
//!   acceptance matrix shared by the CLI and the test suite.

pub mod dsp;
pub mod error;
pub mod formats;
pub mod heterodyne;
pub mod jump_stats;
pub mod photon;
pub mod pipeline;
pub mod rng;
pub mod spectral;
pub mod telegraph;

pub use error::{Error, Result};
pub use heterodyne::{HeterodyneParams, SampledSignal};
pub use jump_stats::{JumpStatsResult, PeriodList, ThresholdConfig};
pub use photon::{CountTrace, DetectionParams, IntensityTrace};
pub use spectral::{PedestalFit, Spectrum, WelchConfig};
pub use telegraph::{
    InitialState, JumpTrajectory, RepumpRateModel, SpectralPrediction, State, TelegraphParams,
};
