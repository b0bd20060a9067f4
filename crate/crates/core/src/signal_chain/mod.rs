//! Photodetector, photon shot noise and lock-in models.
//!
//! Two acquisition modes are simulated in the time domain:
//!
//! - AM: the RF drive is square-wave gated at the modulation frequency while the
//!   carrier steps across the spectrum ([`simulate_am_sweep`]).
//! - FM: the carrier is parked on a transition and sinusoidally frequency
//!   modulated; the demodulated output is proportional to detuning and is
//!   converted to a field estimate ([`simulate_fm_tracking`]).
//!
//! Lock-in outputs use the fundamental-component convention: a signal
//! `A sin(wt)` in phase with the reference demodulates to `A`, so square-wave
//! AM of depth `d V_dc` settles to `(2/π) d V_dc`.

mod detector;
mod fm;
mod lockin;
mod noise;
mod sweep;

pub use detector::{photon_rate_from_voltage, voltage_from_photon_rate, DetectorModel};
pub use fm::{fm_discriminator_slope, fm_response, simulate_fm_tracking, FmTracking};
pub use lockin::{
    lockin_demodulate, noise_equivalent_bandwidth, LockIn, LockInConfig, ModulationMode,
};
pub use noise::{sample_shot_noise, ShotNoiseSource, GAUSSIAN_THRESHOLD};
pub use sweep::{simulate_am_sweep, SweepPlan};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lineshape::{saturated_contrast, saturated_fwhm, LineshapeError, SamplePreset};
use crate::spin_model::{lines_at, FieldVector, SpinError, SpinParams, TransitionClasses, TransitionLine};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("detector voltage must be >= 0, got {0} V")]
    NegativeVoltage(f64),
    #[error("series sampled at {series_hz} Hz but lock-in expects {config_hz} Hz")]
    SampleRateMismatch { series_hz: f64, config_hz: f64 },
    #[error("FM deviation {deviation_hz} Hz must be below the linewidth {fwhm_hz} Hz")]
    DeviationTooLarge { deviation_hz: f64, fwhm_hz: f64 },
    #[error("operation requires {expected:?} modulation")]
    WrongMode { expected: ModulationMode },
    #[error("dwell {dwell_s} s is shorter than 5 time constants ({min_s} s)")]
    DwellTooShort { dwell_s: f64, min_s: f64 },
    #[error("invalid lock-in configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid field timeline: {0}")]
    InvalidTimeline(String),
    #[error(transparent)]
    Spin(#[from] SpinError),
    #[error(transparent)]
    Lineshape(#[from] LineshapeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesUnit {
    Volts,
    Tesla,
    Counts,
}

/// Uniformly sampled series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub start_s: f64,
    pub interval_s: f64,
    pub values: Vec<f64>,
    pub unit: SeriesUnit,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_s + self.interval_s * i as f64
    }

    pub fn end_s(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }
}

/// Piecewise-constant axial field schedule, `(start_s, bz_t)` per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTimeline {
    steps: Vec<(f64, f64)>,
}

impl FieldTimeline {
    pub fn new(steps: Vec<(f64, f64)>) -> Result<Self, SignalError> {
        let bad = |m: &str| Err(SignalError::InvalidTimeline(m.to_owned()));
        match steps.first() {
            None => return bad("timeline is empty"),
            Some(&(t0, _)) if t0 != 0.0 => return bad("first step must start at t = 0"),
            _ => {}
        }
        if steps.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return bad("step start times must be strictly increasing");
        }
        if steps.iter().any(|(t, b)| !t.is_finite() || !b.is_finite()) {
            return bad("non-finite entry");
        }
        Ok(FieldTimeline { steps })
    }

    /// `n_steps` steps of `step_t` every `interval_s`, starting from `bias_t`.
    pub fn staircase(bias_t: f64, step_t: f64, interval_s: f64, n_steps: usize) -> Result<Self, SignalError> {
        Self::new(
            (0..n_steps)
                .map(|i| (interval_s * i as f64, bias_t + step_t * i as f64))
                .collect(),
        )
    }

    pub fn steps(&self) -> &[(f64, f64)] {
        &self.steps
    }

    pub fn step_index(&self, t: f64) -> usize {
        self.steps.partition_point(|(start, _)| *start <= t).saturating_sub(1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.steps[self.step_index(t)].1
    }
}

/// Noise sources enabled in a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub shot_noise: bool,
    /// One-sided white magnetic noise density added to the field, T/√Hz.
    pub field_noise_asd_t: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            shot_noise: true,
            field_noise_asd_t: 0.0,
        }
    }
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        shot_noise: false,
        field_noise_asd_t: 0.0,
    };
}

/// Everything the detection chain needs to know about the sample and drive.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spin: SpinParams,
    pub field: FieldVector,
    pub sample: SamplePreset,
    pub detector: DetectorModel,
    pub p_opt_w: f64,
    pub p_rf_w: f64,
    pub classes: TransitionClasses,
    pub noise: NoiseModel,
}

impl Scene {
    pub fn new(sample: SamplePreset, p_opt_w: f64, p_rf_w: f64) -> Self {
        Scene {
            spin: SpinParams::default(),
            field: FieldVector { bx: 0.0, by: 0.0, bz: 1e-3 },
            sample,
            detector: DetectorModel::default(),
            p_opt_w,
            p_rf_w,
            classes: TransitionClasses::ALL,
            noise: NoiseModel::default(),
        }
    }

    pub fn photon_rate(&self) -> f64 {
        self.sample.photon_rate(self.p_opt_w)
    }

    pub fn v_dc(&self) -> f64 {
        voltage_from_photon_rate(self.photon_rate(), &self.detector)
    }

    pub fn fwhm(&self) -> f64 {
        saturated_fwhm(&self.sample.broadening, self.p_rf_w, self.p_opt_w)
    }

    pub fn contrast(&self) -> f64 {
        saturated_contrast(&self.sample.broadening, self.p_rf_w, self.p_opt_w)
    }

    pub fn lines(&self) -> Result<Vec<TransitionLine>, SpinError> {
        lines_at(&self.spin, &self.field, self.classes)
    }
}
