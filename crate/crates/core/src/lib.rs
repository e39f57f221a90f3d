//! Passive RRAM crossbar security primitives: a behavioral device model with
//! device-to-device and cycle-to-cycle variation, a nodal-analysis crossbar
//! solver in which sneak-path currents emerge naturally, two true-random-bit
//! generators built on the crossbar, a challenge/response PUF pipeline, the
//! standard PUF quality metrics, and a statistical randomness battery.
//!
//! Everything is deterministic given a configuration and a master seed; see
//! [`seeds::subseed`] for the seed expansion used by the experiment drivers.

pub mod config;
pub mod crossbar;
pub mod device;
pub mod error;
pub mod metrics;
mod numeric;
pub mod puf;
pub mod seeds;
pub mod stattests;
pub mod trng;
pub mod variation;

pub use config::ExperimentConfig;
pub use crossbar::{BitMatrix, ColDrive, Crossbar, DriveVector, ReadResult, RowDrive};
pub use device::{DeviceModel, DeviceParams, DeviceState, PulseLibrary, PulseSpec, SwitchPolarity};
pub use error::{Error, Result};
pub use puf::{Challenge, ChallengeKind, CrpSet, EntropySource, Response};
pub use trng::{BitStream, TrngMethod};
pub use variation::{ParamRange, VariationSpec};
