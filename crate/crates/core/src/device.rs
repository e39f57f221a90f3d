//! Behavioral model of a single RRAM cell.
//!
//! A cell is binary (HRS or LRS). Its resistance in each state is a
//! deterministic function of four per-cell geometry/concentration parameters,
//! and pulse-driven switching is stochastic with a log-normal switching-time
//! CDF. The proportionality and timing constants are calibrated once against
//! measured resistance averages and a pulse-width/probability table and then
//! frozen in the configuration.

use crate::error::{Error, Result};
use crate::numeric::normal_cdf;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Reference disc radius (nm) used by the switching-time scaling law.
pub const R_DISC_REF: f64 = 45.0;
/// Reference disc length (nm) used by the switching-time scaling law.
pub const L_DISC_REF: f64 = 0.4;

/// Binary cell state. HRS encodes logic 0, LRS logic 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeviceState {
    Hrs,
    Lrs,
}

/// Programming direction of a pulse. SET drives HRS -> LRS, RESET the reverse.
///
/// Polarity is carried explicitly rather than inferred from the voltage sign:
/// the devices are programmed with either sign depending on the experiment,
/// and the switching model is magnitude-driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchPolarity {
    Set,
    Reset,
}

/// A voltage pulse: signed amplitude, plateau duration and edge times.
///
/// Rise and fall times are carried for completeness but do not affect
/// switching probability; the plateau duration is the effective duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPulseSpec")]
pub struct PulseSpec {
    pub polarity: SwitchPolarity,
    pub amplitude_v: f64,
    pub duration_s: f64,
    pub rise_s: f64,
    pub fall_s: f64,
}

#[derive(Deserialize)]
struct RawPulseSpec {
    polarity: SwitchPolarity,
    amplitude_v: f64,
    duration_s: f64,
    rise_s: f64,
    fall_s: f64,
}

impl TryFrom<RawPulseSpec> for PulseSpec {
    type Error = Error;
    fn try_from(raw: RawPulseSpec) -> Result<Self> {
        PulseSpec::new(
            raw.polarity,
            raw.amplitude_v,
            raw.duration_s,
            raw.rise_s,
            raw.fall_s,
        )
    }
}

impl PulseSpec {
    pub fn new(
        polarity: SwitchPolarity,
        amplitude_v: f64,
        duration_s: f64,
        rise_s: f64,
        fall_s: f64,
    ) -> Result<Self> {
        if !duration_s.is_finite() || duration_s <= 0.0 {
            return Err(Error::Domain(format!(
                "pulse duration must be positive, got {duration_s}"
            )));
        }
        if !amplitude_v.is_finite() {
            return Err(Error::Domain("pulse amplitude must be finite".into()));
        }
        if !(rise_s >= 0.0) || !(fall_s >= 0.0) {
            return Err(Error::Domain("rise/fall times must be non-negative".into()));
        }
        Ok(Self {
            polarity,
            amplitude_v,
            duration_s,
            rise_s,
            fall_s,
        })
    }

    pub fn set(amplitude_v: f64, duration_s: f64) -> Self {
        Self::new(SwitchPolarity::Set, amplitude_v, duration_s, 1e-9, 1e-9)
            .expect("valid SET pulse")
    }

    pub fn reset(amplitude_v: f64, duration_s: f64) -> Self {
        Self::new(SwitchPolarity::Reset, amplitude_v, duration_s, 1e-9, 1e-9)
            .expect("valid RESET pulse")
    }

    /// A non-destructive read pulse (low amplitude).
    pub fn read(amplitude_v: f64) -> Self {
        Self::new(SwitchPolarity::Set, amplitude_v, 2e-8, 1e-9, 1e-9).expect("valid read pulse")
    }
}

/// Per-cell variation parameters of the filament disc.
///
/// `n_disc_min`/`n_disc_max` are the minimum/maximum oxygen-vacancy
/// concentrations (model units), `r_disc` the disc radius (nm) and `l_disc`
/// the disc length (nm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    n_disc_min: f64,
    n_disc_max: f64,
    r_disc: f64,
    l_disc: f64,
}

impl DeviceParams {
    pub fn new(n_disc_min: f64, n_disc_max: f64, r_disc: f64, l_disc: f64) -> Result<Self> {
        for (name, v) in [
            ("n_disc_min", n_disc_min),
            ("n_disc_max", n_disc_max),
            ("r_disc", r_disc),
            ("l_disc", l_disc),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if n_disc_min >= n_disc_max {
            return Err(Error::Domain(format!(
                "n_disc_min ({n_disc_min}) must be below n_disc_max ({n_disc_max})"
            )));
        }
        Ok(Self {
            n_disc_min,
            n_disc_max,
            r_disc,
            l_disc,
        })
    }

    pub fn n_disc_min(&self) -> f64 {
        self.n_disc_min
    }
    pub fn n_disc_max(&self) -> f64 {
        self.n_disc_max
    }
    pub fn r_disc(&self) -> f64 {
        self.r_disc
    }
    pub fn l_disc(&self) -> f64 {
        self.l_disc
    }
}

/// Calibrated constants of the behavioral cell model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    /// HRS resistance proportionality constant (ohm * units * nm^2 / nm).
    pub k_hrs: f64,
    /// LRS resistance proportionality constant.
    pub k_lrs: f64,
    /// Nominal median SET switching time (s).
    pub tau50_set_s: f64,
    /// Nominal median RESET switching time (s).
    pub tau50_reset_s: f64,
    /// Log-domain spread of the switching-time CDF (shared by SET and RESET).
    pub sigma_tau: f64,
    /// Pulses with |V| below this never program a cell (V).
    pub min_switch_v: f64,
    /// Pulses with |V| at or below this are reads and never disturb state (V).
    pub read_max_v: f64,
    /// Nominal HRS resistance at the mean parameter vector (ohm).
    pub hrs_nominal_ohms: f64,
    /// Nominal LRS resistance at the mean parameter vector (ohm).
    pub lrs_nominal_ohms: f64,
}

impl Default for DeviceModel {
    fn default() -> Self {
        // k_hrs/k_lrs reproduce the measured state averages at the mean
        // parameter vector (8, 20, 45, 0.4); tau50/sigma come from the
        // anchored least-squares fit of the pulse-width study
        // (see `calibrate_switching`).
        Self {
            k_hrs: 65_560.0 * 8.0 * R_DISC_REF * R_DISC_REF / L_DISC_REF,
            k_lrs: 1_640.0 * 20.0 * R_DISC_REF * R_DISC_REF / L_DISC_REF,
            tau50_set_s: 3.2630893392470073e-6,
            tau50_reset_s: 1e-12,
            sigma_tau: 2.481679191649521,
            min_switch_v: 0.5,
            read_max_v: 0.3,
            hrs_nominal_ohms: 65_560.0,
            lrs_nominal_ohms: 1_640.0,
        }
    }
}

impl DeviceModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k_hrs", self.k_hrs),
            ("k_lrs", self.k_lrs),
            ("tau50_set_s", self.tau50_set_s),
            ("tau50_reset_s", self.tau50_reset_s),
            ("sigma_tau", self.sigma_tau),
            ("min_switch_v", self.min_switch_v),
            ("read_max_v", self.read_max_v),
            ("hrs_nominal_ohms", self.hrs_nominal_ohms),
            ("lrs_nominal_ohms", self.lrs_nominal_ohms),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Validation(format!(
                    "device model field {name} must be positive, got {v}"
                )));
            }
        }
        if self.read_max_v >= self.min_switch_v {
            return Err(Error::Validation(
                "read_max_v must be below min_switch_v".into(),
            ));
        }
        if self.lrs_nominal_ohms >= self.hrs_nominal_ohms {
            return Err(Error::Validation(
                "nominal LRS resistance must be below nominal HRS".into(),
            ));
        }
        Ok(())
    }

    /// Resistance of a cell in the given state. Deterministic.
    ///
    /// HRS scales with the residual vacancy concentration `n_disc_min`,
    /// LRS with the full concentration `n_disc_max`; both scale with
    /// disc length over cross-section.
    pub fn resistance(&self, params: &DeviceParams, state: DeviceState) -> f64 {
        let geom = params.l_disc / (params.r_disc * params.r_disc);
        match state {
            DeviceState::Hrs => self.k_hrs * geom / params.n_disc_min,
            DeviceState::Lrs => self.k_lrs * geom / params.n_disc_max,
        }
    }

    /// HRS/LRS decision boundary for state reads: the geometric mean of the
    /// nominal state resistances (maximal margin on a log scale).
    pub fn read_threshold_ohms(&self) -> f64 {
        (self.hrs_nominal_ohms * self.lrs_nominal_ohms).sqrt()
    }

    /// Per-cell median switching time for the given polarity.
    ///
    /// Longer and narrower discs switch slower: tau scales with l_disc and
    /// inversely with the disc cross-section.
    pub fn tau50_s(&self, params: &DeviceParams, polarity: SwitchPolarity) -> f64 {
        let nominal = match polarity {
            SwitchPolarity::Set => self.tau50_set_s,
            SwitchPolarity::Reset => self.tau50_reset_s,
        };
        nominal * (params.l_disc / L_DISC_REF) * (R_DISC_REF / params.r_disc).powi(2)
    }

    /// Switching probability for an explicit polarity/amplitude/duration.
    /// Errors on a non-positive duration.
    pub fn switching_probability(
        &self,
        params: &DeviceParams,
        polarity: SwitchPolarity,
        amplitude_v: f64,
        duration_s: f64,
    ) -> Result<f64> {
        if !duration_s.is_finite() || duration_s <= 0.0 {
            return Err(Error::Domain(format!(
                "switching duration must be positive, got {duration_s}"
            )));
        }
        if amplitude_v.abs() < self.min_switch_v {
            return Ok(0.0);
        }
        let tau = self.tau50_s(params, polarity);
        Ok(normal_cdf((duration_s.ln() - tau.ln()) / self.sigma_tau))
    }

    /// Probability that a pulse SETs an HRS cell (the SET curve of the
    /// pulse-width study). Monotone nondecreasing in the pulse duration.
    pub fn set_probability(&self, params: &DeviceParams, pulse: &PulseSpec) -> f64 {
        self.switching_probability(
            params,
            SwitchPolarity::Set,
            pulse.amplitude_v,
            pulse.duration_s,
        )
        .expect("pulse duration validated at construction")
    }

    /// Probability that a pulse RESETs an LRS cell (mirrored model with its
    /// own nominal time constant).
    pub fn reset_probability(&self, params: &DeviceParams, pulse: &PulseSpec) -> f64 {
        self.switching_probability(
            params,
            SwitchPolarity::Reset,
            pulse.amplitude_v,
            pulse.duration_s,
        )
        .expect("pulse duration validated at construction")
    }

    /// Apply a pulse to a cell and return the (possibly switched) state.
    ///
    /// Read-amplitude pulses never disturb state. A SET pulse acts only on
    /// HRS cells and a RESET pulse only on LRS cells; matching-state pulses
    /// are no-ops.
    pub fn apply_pulse<R: Rng + ?Sized>(
        &self,
        state: DeviceState,
        params: &DeviceParams,
        pulse: &PulseSpec,
        rng: &mut R,
    ) -> DeviceState {
        if pulse.amplitude_v.abs() <= self.read_max_v {
            return state;
        }
        match (pulse.polarity, state) {
            (SwitchPolarity::Set, DeviceState::Hrs) => {
                if rng.random::<f64>() < self.set_probability(params, pulse) {
                    DeviceState::Lrs
                } else {
                    DeviceState::Hrs
                }
            }
            (SwitchPolarity::Reset, DeviceState::Lrs) => {
                if rng.random::<f64>() < self.reset_probability(params, pulse) {
                    DeviceState::Hrs
                } else {
                    DeviceState::Lrs
                }
            }
            _ => state,
        }
    }
}

/// The pulse set used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseLibrary {
    /// Long SET pulse used where programming must succeed (with verify).
    pub program_set: PulseSpec,
    /// Long RESET pulse used where erasing must succeed (with verify).
    pub program_reset: PulseSpec,
    /// Non-destructive state/current read pulse.
    pub read: PulseSpec,
    /// The 50%-switching SET pulse found by the pulse-width search.
    pub half_set: PulseSpec,
}

impl Default for PulseLibrary {
    fn default() -> Self {
        Self {
            program_set: PulseSpec::new(SwitchPolarity::Set, 2.0, 1e-2, 1e-8, 1e-8)
                .expect("valid pulse"),
            program_reset: PulseSpec::new(SwitchPolarity::Reset, -2.0, 1e-2, 1e-8, 1e-8)
                .expect("valid pulse"),
            read: PulseSpec::new(SwitchPolarity::Set, 0.2, 2e-8, 1e-9, 1e-9).expect("valid pulse"),
            half_set: PulseSpec::new(
                SwitchPolarity::Set,
                -0.8,
                3.267649414303764e-6,
                1e-9,
                1e-9,
            )
            .expect("valid pulse"),
        }
    }
}

impl PulseLibrary {
    pub fn validate(&self, model: &DeviceModel) -> Result<()> {
        if self.read.amplitude_v.abs() > model.read_max_v {
            return Err(Error::Validation(format!(
                "read pulse amplitude {} exceeds the read ceiling {}",
                self.read.amplitude_v, model.read_max_v
            )));
        }
        for (name, p) in [
            ("program_set", &self.program_set),
            ("program_reset", &self.program_reset),
            ("half_set", &self.half_set),
        ] {
            if p.amplitude_v.abs() < model.min_switch_v {
                return Err(Error::Validation(format!(
                    "{name} pulse amplitude {} is below the minimum switching amplitude {}",
                    p.amplitude_v, model.min_switch_v
                )));
            }
        }
        if self.program_set.polarity != SwitchPolarity::Set
            || self.half_set.polarity != SwitchPolarity::Set
            || self.program_reset.polarity != SwitchPolarity::Reset
        {
            return Err(Error::Validation("pulse polarity tags are inconsistent".into()));
        }
        Ok(())
    }
}

/// Resistance constants that reproduce the target state averages at the
/// nominal (mean) parameter vector. Closed-form, exact.
pub fn calibrate_resistance(
    hrs_mean_ohms: f64,
    lrs_mean_ohms: f64,
    nominal: &DeviceParams,
) -> Result<(f64, f64)> {
    if hrs_mean_ohms <= 0.0 || lrs_mean_ohms <= 0.0 {
        return Err(Error::Domain("resistance targets must be positive".into()));
    }
    if lrs_mean_ohms >= hrs_mean_ohms {
        return Err(Error::Convergence(
            "LRS resistance target must lie below the HRS target".into(),
        ));
    }
    let geom = nominal.l_disc / (nominal.r_disc * nominal.r_disc);
    Ok((
        hrs_mean_ohms * nominal.n_disc_min / geom,
        lrs_mean_ohms * nominal.n_disc_max / geom,
    ))
}

/// Result of the switching-time fit.
#[derive(Debug, Clone)]
pub struct SwitchingFit {
    pub tau50_set_s: f64,
    pub sigma_tau: f64,
    /// Fitted probability at each target duration, in target order.
    pub fitted: Vec<f64>,
    /// fitted - target, in target order.
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
}

/// Largest acceptable per-row residual of the switching fit.
pub const SWITCHING_FIT_TOLERANCE: f64 = 0.05;

/// Anchored least-squares fit of (tau50_set, sigma_tau) against measured
/// (duration, SET probability) rows.
///
/// The sum of squared probability residuals is minimized over a refined
/// (ln tau, sigma) grid, subject to anchors that pin the operating points:
/// the row nearest 50% must fit within +/-0.02, rows at 0 must stay at or
/// below 1%, and rows at 100% must reach at least 99%. Fails with a
/// convergence error if the anchors cannot be met or any residual exceeds
/// [`SWITCHING_FIT_TOLERANCE`].
pub fn calibrate_switching(targets: &[(f64, f64)]) -> Result<SwitchingFit> {
    if targets.len() < 2 {
        return Err(Error::Domain(
            "switching calibration needs at least two (duration, probability) rows".into(),
        ));
    }
    for &(d, p) in targets {
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::Domain(format!("target duration must be positive, got {d}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!(
                "target probability must be in [0,1], got {p}"
            )));
        }
    }

    let anchor = targets
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (a.1 .1 - 0.5).abs();
            let db = (b.1 .1 - 0.5).abs();
            da.partial_cmp(&db).unwrap()
        })
        .map(|(i, _)| i)
        .expect("targets nonempty");

    let predict = |ln_tau: f64, sigma: f64, d: f64| normal_cdf((d.ln() - ln_tau) / sigma);
    let objective = |ln_tau: f64, sigma: f64| {
        let mut sse = 0.0;
        let mut penalty = 0.0;
        for (i, &(d, t)) in targets.iter().enumerate() {
            let p = predict(ln_tau, sigma, d);
            let r = p - t;
            sse += r * r;
            if i == anchor {
                let v = (r.abs() - 0.02).max(0.0);
                penalty += v * v;
            }
            if t <= 0.005 {
                let v = (p - 0.01).max(0.0);
                penalty += v * v;
            }
            if t >= 0.995 {
                let v = (0.99 - p).max(0.0);
                penalty += v * v;
            }
        }
        sse + 1e4 * penalty
    };

    // Coarse-to-fine grid refinement; deterministic and idempotent.
    let mut lt_center = 0.5 * (1e-9f64.ln() + 1e-1f64.ln());
    let mut lt_half = 0.5 * (1e-1f64.ln() - 1e-9f64.ln());
    let mut sg_center = 3.25;
    let mut sg_half = 2.75;
    let steps = 48usize;
    let mut best = (lt_center, sg_center, f64::INFINITY);
    for _ in 0..6 {
        for i in 0..=steps {
            let lt = lt_center - lt_half + 2.0 * lt_half * (i as f64) / (steps as f64);
            for j in 0..=steps {
                let sg = (sg_center - sg_half + 2.0 * sg_half * (j as f64) / (steps as f64))
                    .max(1e-3);
                let obj = objective(lt, sg);
                if obj < best.2 {
                    best = (lt, sg, obj);
                }
            }
        }
        lt_center = best.0;
        sg_center = best.1;
        lt_half = 3.0 * lt_half / steps as f64;
        sg_half = 3.0 * sg_half / steps as f64;
    }

    let (ln_tau, sigma) = (best.0, best.1);
    let fitted: Vec<f64> = targets.iter().map(|&(d, _)| predict(ln_tau, sigma, d)).collect();
    let residuals: Vec<f64> = fitted
        .iter()
        .zip(targets)
        .map(|(p, &(_, t))| p - t)
        .collect();
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));

    let anchor_ok = residuals[anchor].abs() <= 0.02 + 1e-12;
    let rails_ok = targets.iter().zip(&fitted).all(|(&(_, t), &p)| {
        (t > 0.005 || p <= 0.01 + 1e-12) && (t < 0.995 || p >= 0.99 - 1e-12)
    });
    if !anchor_ok || !rails_ok || max_abs_residual > SWITCHING_FIT_TOLERANCE {
        return Err(Error::Convergence(format!(
            "switching fit cannot satisfy the targets (max residual {:.4}, residuals {:?})",
            max_abs_residual, residuals
        )));
    }

    Ok(SwitchingFit {
        tau50_set_s: ln_tau.exp(),
        sigma_tau: sigma,
        fitted,
        residuals,
        max_abs_residual,
    })
}
