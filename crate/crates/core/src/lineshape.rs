//! Phenomenological ODMR lineshapes and power broadening.
//!
//! Each line is a Lorentzian whose width grows with RF power as
//! `fwhm0 * sqrt(1 + P_rf / P_sat)` and does not depend on optical power. The
//! contrast is a product of two saturation terms, one per drive. These laws are
//! calibration models, not derived from rate equations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spin_model::{FieldVector, TransitionLine};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LineshapeError {
    #[error("transition list is empty")]
    EmptyTransitionList,
    #[error("frequency grid must have at least 2 strictly increasing points")]
    BadGrid,
    #[error("invalid broadening model: {0}")]
    InvalidModel(String),
    #[error("unknown sample preset `{0}`")]
    UnknownPreset(String),
}

/// Power-broadening calibration for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadeningModel {
    /// Low-power linewidth, Hz (inversely proportional to T2*).
    pub fwhm0_hz: f64,
    pub rf_sat_w: f64,
    pub contrast_max: f64,
    pub opt_sat_w: f64,
    pub rf_contrast_sat_w: f64,
}

impl BroadeningModel {
    pub fn validate(&self) -> Result<(), LineshapeError> {
        let all_positive = [
            self.fwhm0_hz,
            self.rf_sat_w,
            self.contrast_max,
            self.opt_sat_w,
            self.rf_contrast_sat_w,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(LineshapeError::InvalidModel("all fields must be > 0".into()));
        }
        if self.contrast_max >= 1.0 {
            return Err(LineshapeError::InvalidModel("contrast_max must be < 1".into()));
        }
        Ok(())
    }

    /// RF power minimizing `fwhm / contrast` at fixed optical power.
    ///
    /// Setting the log-derivative of `sqrt(1 + p/a) (p + c) / p` to zero gives
    /// `p^2 - c p - 2 a c = 0`.
    pub fn optimal_rf_power(&self) -> f64 {
        let (a, c) = (self.rf_sat_w, self.rf_contrast_sat_w);
        0.5 * (c + (c * c + 8.0 * a * c).sqrt())
    }
}

/// Built-in calibration for one sample: broadening plus photoluminescence yield.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePreset {
    pub name: String,
    pub broadening: BroadeningModel,
    /// Detected photon rate per watt of optical pump, Hz/W.
    pub pl_rate_per_w: f64,
}

impl SamplePreset {
    /// Annealed sample. Values are fitted so its shot-noise map minimum lands
    /// near 57 nT/√Hz; only the ratios to the quenched preset are measured.
    pub fn annealed() -> Self {
        SamplePreset {
            name: "annealed".into(),
            broadening: BroadeningModel {
                fwhm0_hz: 5.32e6,
                rf_sat_w: 0.5,
                contrast_max: 0.003,
                opt_sat_w: 0.4,
                rf_contrast_sat_w: 0.5,
            },
            pl_rate_per_w: 1.477e14 / 1.5,
        }
    }

    /// Quenched sample: ten times the contrast and 1.5 times the
    /// photoluminescence of the annealed one. Fitted to reach 3.5 nT/√Hz at
    /// 0.4 W optical and 1 W RF.
    pub fn quenched() -> Self {
        SamplePreset {
            name: "quenched".into(),
            broadening: BroadeningModel {
                fwhm0_hz: 4.0e6,
                rf_sat_w: 0.5,
                contrast_max: 0.03,
                opt_sat_w: 0.4,
                rf_contrast_sat_w: 0.5,
            },
            pl_rate_per_w: 1.477e14,
        }
    }

    pub fn by_name(name: &str) -> Result<Self, LineshapeError> {
        match name {
            "annealed" => Ok(Self::annealed()),
            "quenched" => Ok(Self::quenched()),
            other => Err(LineshapeError::UnknownPreset(other.to_owned())),
        }
    }

    pub fn photon_rate(&self, p_opt_w: f64) -> f64 {
        self.pl_rate_per_w * p_opt_w.max(0.0)
    }
}

/// A single Lorentzian peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakShape {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub contrast: f64,
}

pub fn lorentzian_value(peak: &PeakShape, nu: f64) -> f64 {
    let hw = 0.5 * peak.fwhm_hz;
    let x = nu - peak.center_hz;
    peak.contrast * hw * hw / (x * x + hw * hw)
}

pub fn saturated_fwhm(model: &BroadeningModel, p_rf_w: f64, _p_opt_w: f64) -> f64 {
    model.fwhm0_hz * (1.0 + p_rf_w.max(0.0) / model.rf_sat_w).sqrt()
}

pub fn saturated_contrast(model: &BroadeningModel, p_rf_w: f64, p_opt_w: f64) -> f64 {
    let p_rf = p_rf_w.max(0.0);
    let p_opt = p_opt_w.max(0.0);
    if p_rf == 0.0 || p_opt == 0.0 {
        return 0.0;
    }
    let rf = if p_rf.is_infinite() { 1.0 } else { p_rf / (p_rf + model.rf_contrast_sat_w) };
    let opt = if p_opt.is_infinite() { 1.0 } else { p_opt / (p_opt + model.opt_sat_w) };
    model.contrast_max * rf * opt
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueUnit {
    /// Fractional photoluminescence change.
    Contrast,
    Volts,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub p_opt_w: f64,
    pub p_rf_w: f64,
    pub field: FieldVector,
    pub seed: Option<u64>,
}

/// Frequency-swept ODMR data.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpectrum {
    pub frequency_hz: Vec<f64>,
    pub values: Vec<f64>,
    pub unit: ValueUnit,
    /// Detector DC voltage per point, when the spectrum came from a detector.
    pub dc_v: Option<Vec<f64>>,
    pub meta: SpectrumMeta,
}

impl SyntheticSpectrum {
    pub fn len(&self) -> usize {
        self.frequency_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequency_hz.is_empty()
    }

    /// Sub-spectrum restricted to `lo <= f <= hi`.
    pub fn window(&self, lo: f64, hi: f64) -> SyntheticSpectrum {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| self.frequency_hz[i] >= lo && self.frequency_hz[i] <= hi)
            .collect();
        let pick = |v: &Vec<f64>| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        SyntheticSpectrum {
            frequency_hz: pick(&self.frequency_hz),
            values: pick(&self.values),
            unit: self.unit,
            dc_v: self.dc_v.as_ref().map(pick),
            meta: self.meta,
        }
    }
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<(), LineshapeError> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|v| !v.is_finite()) {
        return Err(LineshapeError::BadGrid);
    }
    Ok(())
}

/// Sum of line contributions at one frequency, in contrast units.
pub fn odmr_value(lines: &[TransitionLine], fwhm_hz: f64, contrast: f64, nu: f64) -> f64 {
    lines
        .iter()
        .map(|l| {
            lorentzian_value(
                &PeakShape {
                    center_hz: l.frequency_hz,
                    fwhm_hz,
                    contrast: contrast * l.odmr_weight(),
                },
                nu,
            )
        })
        .sum()
}

/// Noise-free ODMR spectrum. Satellite lines are dropped unless `hyperfine`.
pub fn synthesize_odmr(
    lines: &[TransitionLine],
    model: &BroadeningModel,
    p_rf_w: f64,
    p_opt_w: f64,
    grid: &[f64],
    hyperfine: bool,
) -> Result<SyntheticSpectrum, LineshapeError> {
    if lines.is_empty() {
        return Err(LineshapeError::EmptyTransitionList);
    }
    validate_grid(grid)?;
    model.validate()?;
    let used: Vec<TransitionLine> = lines
        .iter()
        .filter(|l| hyperfine || !l.label.is_satellite())
        .copied()
        .collect();
    let fwhm = saturated_fwhm(model, p_rf_w, p_opt_w);
    let contrast = saturated_contrast(model, p_rf_w, p_opt_w);
    Ok(SyntheticSpectrum {
        values: grid.iter().map(|&nu| odmr_value(&used, fwhm, contrast, nu)).collect(),
        frequency_hz: grid.to_vec(),
        unit: ValueUnit::Contrast,
        dc_v: None,
        meta: SpectrumMeta {
            p_opt_w,
            p_rf_w,
            ..Default::default()
        },
    })
}

/// Evenly spaced grid including both endpoints.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}
