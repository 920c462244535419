//! Asynchronous multi-user uplink OFDMA sensing.
//!
//! Pipeline: [`signal_model`] synthesizes CSI, [`calibration`] removes the
//! per-packet timing offset against the known LoS delay, [`sbl`] recovers
//! delay supports, [`refine`] estimates delay, Doppler, AoA and gain per path,
//! and [`metrics`] scores the result. [`experiment`] runs the sweeps.

pub mod calibration;
pub mod config;
pub mod container;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod refine;
pub mod rng;
pub mod sbl;
pub mod signal_model;

pub use config::{SparsityConfig, SystemConfig};
pub use error::{Error, Result};
