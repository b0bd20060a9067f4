//! Estimation pipeline: Lorentzian fits, contrast extraction, shot-noise
//! sensitivity, sensitivity maps, step-response statistics and PL peak ratios.

mod fit;
mod peak_ratio;
mod sensitivity;
mod steps;

pub use fit::{fit_lorentzian, fit_lorentzian_with, median, FitOptions, LorentzFit, Satellites, SpectrumData};
pub use peak_ratio::{peak_ratio, EnergySpectrum, V2_ZPL_WINDOW_EV, NON_VSI_WINDOW_EV};
pub use sensitivity::{
    build_sensitivity_map, odmr_contrast, shot_noise_prefactor, shot_noise_sensitivity,
    shot_noise_sensitivity_with, CellInput, LockInScaling, Prefactor, SensitivityMap, SensitivityPoint,
};
pub use steps::{analyze_steps, StepReport, StepStats};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("need at least {min} points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("no peak found (amplitude {amplitude:e}, residual rms {residual_rms:e})")]
    NoPeakFound { amplitude: f64, residual_rms: f64 },
    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("DC voltage must be > 0, got {0} V")]
    ZeroDc(f64),
    #[error("{name} must be > 0, got {value}")]
    NonPositiveInput { name: &'static str, value: f64 },
    #[error("sensitivity grid is empty")]
    EmptyGrid,
    #[error("time series does not match the schedule: {0}")]
    ScheduleMismatch(String),
    #[error("settle discard {settle_s} s is shorter than 5 time constants ({min_s} s)")]
    SettleTooShort { settle_s: f64, min_s: f64 },
    #[error("window [{lo}, {hi}] lies outside the axis [{axis_lo}, {axis_hi}]")]
    WindowOutOfRange { lo: f64, hi: f64, axis_lo: f64, axis_hi: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
