//! Experiment configuration: a versioned, human-editable TOML schema that
//! pins every constant an experiment depends on. Missing fields take the
//! documented defaults; `parse(emit(config)) == config`.

use crate::device::{DeviceModel, PulseLibrary};
use crate::error::{Error, Result};
use crate::puf::{ChallengeKind, EntropySource};
use crate::trng::HalfPulseSearch;
use crate::variation::VariationSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Crossbar geometry and parasitics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossbarConfig {
    pub rows: usize,
    pub cols: usize,
    pub r_wire_ohms: f64,
}

impl Default for CrossbarConfig {
    fn default() -> Self {
        Self {
            rows: 16,
            cols: 16,
            r_wire_ohms: 2.5,
        }
    }
}

/// Measured values the `calibrate` command fits the device model against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationTargets {
    pub hrs_mean_ohms: f64,
    pub lrs_mean_ohms: f64,
    /// (pulse duration in seconds, SET probability) rows of the pulse-width
    /// study.
    pub set_probability_rows: Vec<(f64, f64)>,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            hrs_mean_ohms: 65_560.0,
            lrs_mean_ohms: 1_640.0,
            set_probability_rows: vec![
                (1e-8, 0.0),
                (1e-7, 0.11),
                (1e-6, 0.36),
                (3e-6, 0.50),
                (1e-5, 0.64),
                (1e-3, 0.94),
                (1e-2, 1.0),
            ],
        }
    }
}

/// The pulse-width sweep replicated by the `sweep` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub durations_s: Vec<f64>,
    pub seeds_per_duration: usize,
    pub rows: usize,
    pub cols: usize,
    pub amplitude_v: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            durations_s: vec![1e-8, 1e-7, 1e-6, 3e-6, 1e-5, 1e-3, 1e-2],
            seeds_per_duration: 100,
            rows: 10,
            cols: 10,
            amplitude_v: -0.8,
        }
    }
}

/// Run-scale knobs shared by the commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSettings {
    pub master_seed: u64,
    /// Crossbar instances for multi-device PUF studies.
    pub devices: usize,
    /// CRPs collected per device.
    pub crps: usize,
    /// Calibration challenges per device during enrollment.
    pub n_cal: usize,
    /// Significance level of the randomness battery.
    pub alpha: f64,
    pub challenge_kind: ChallengeKind,
    pub entropy_source: EntropySource,
    /// Optional Gaussian read-noise sigma as a fraction of each column
    /// threshold; 0 disables noise.
    pub read_noise_sigma: f64,
    /// Bits harvested by the trng command when --bits is not given.
    pub total_bits: usize,
    /// Repeats of the fixed challenge in the reliability measurement.
    pub reliability_repeats: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            master_seed: 42,
            devices: 10,
            crps: 50_000,
            n_cal: 10_000,
            alpha: 0.01,
            challenge_kind: ChallengeKind::Balanced,
            entropy_source: EntropySource::WriteBack,
            read_noise_sigma: 0.0,
            total_bits: 256,
            reliability_repeats: 10_000,
        }
    }
}

/// The complete experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub schema_version: SchemaVersion,
    pub crossbar: CrossbarConfig,
    pub variation: VariationSpec,
    pub device: DeviceModel,
    pub pulses: PulseLibrary,
    pub calibration: CalibrationTargets,
    pub half_pulse_search: HalfPulseSearch,
    pub sweep: SweepConfig,
    pub experiment: ExperimentSettings,
}

/// Newtype so the schema version has a serde default of the current version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaVersion(pub u32);

impl Default for SchemaVersion {
    fn default() -> Self {
        SchemaVersion(SCHEMA_VERSION)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version.0 != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version.0
            )));
        }
        if self.crossbar.rows == 0 || self.crossbar.cols == 0 {
            return Err(Error::Validation("crossbar dimensions must be at least 1x1".into()));
        }
        if !(self.crossbar.r_wire_ohms >= 0.0) {
            return Err(Error::Validation("wire resistance must be non-negative".into()));
        }
        self.variation.validate()?;
        self.device.validate()?;
        self.pulses.validate(&self.device)?;
        if !(self.experiment.alpha > 0.0 && self.experiment.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha must be in (0, 1), got {}",
                self.experiment.alpha
            )));
        }
        if self.experiment.devices == 0
            || self.experiment.crps == 0
            || self.experiment.total_bits == 0
        {
            return Err(Error::Validation(
                "devices, crps and total_bits must be positive".into(),
            ));
        }
        if self.experiment.n_cal < 100 {
            return Err(Error::Validation(format!(
                "n_cal must be at least 100, got {}",
                self.experiment.n_cal
            )));
        }
        if self.experiment.reliability_repeats < 2 {
            return Err(Error::Validation("reliability needs at least 2 repeats".into()));
        }
        if !(self.experiment.read_noise_sigma >= 0.0) {
            return Err(Error::Validation("read_noise_sigma must be non-negative".into()));
        }
        if !(self.half_pulse_search.tol > 0.0 && self.half_pulse_search.tol < 0.5) {
            return Err(Error::Validation("half-pulse tolerance must be in (0, 0.5)".into()));
        }
        if self.half_pulse_search.crossbars_per_probe == 0 {
            return Err(Error::Validation("half-pulse probes need at least one crossbar".into()));
        }
        if self.sweep.rows == 0 || self.sweep.cols == 0 || self.sweep.seeds_per_duration == 0 {
            return Err(Error::Validation("sweep dimensions and seed count must be positive".into()));
        }
        if self.sweep.durations_s.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Validation("sweep durations must be positive".into()));
        }
        for &(d, p) in &self.calibration.set_probability_rows {
            if !(d > 0.0) || !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!(
                    "calibration row ({d}, {p}) out of range"
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::Validation(format!("config parse failed: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}
