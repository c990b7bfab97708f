//! Run configuration, the simulate/analyze stages with their on-disk
//! artifacts, and the acceptance matrix.

pub mod config;
pub mod manifest;
pub mod run;
pub mod verify;

pub use config::RunConfig;
pub use manifest::{Check, RunManifest};
pub use run::{analyze, cmd_analyze, cmd_predict, cmd_simulate, simulate, stage_seeds, stream_beat, Analysis, Simulation};
pub use verify::{run_suite, VerifyReport};
