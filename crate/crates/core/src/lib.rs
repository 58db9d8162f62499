//! Simulation toolkit for a room-temperature spin-photon interface built
//! from an NV-centre dressed spin, a mechanical oscillator and two optical
//! cavity modes.

pub mod config;
pub mod constants;
pub mod correlations;
pub mod dynamics;
pub mod error;
pub mod merit;
pub mod model;
pub mod operator;
pub mod sparse;
pub mod sweep;

pub use error::{Error, Result};

pub use config::{Profile, RunConfig};
pub use correlations::{CorrelationGrid, CorrelationStrategy, GridSpec};
pub use merit::{AnalyticEstimate, MaterialParams, MeritReport};
pub use model::{DerivedParams, FeasibilityReport, SystemParams, Truncation};
pub use sweep::{run_point, run_sweep, PointReport, SweepResult};
