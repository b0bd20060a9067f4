use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::spin_model::gyromagnetic_ratio;

/// How the lock-in output relates to the underlying PL modulation depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockInScaling {
    /// Fundamental-component output of square-wave AM: `(2/π)` of the depth.
    #[default]
    Fundamental,
    /// The lock-in voltage already equals the PL change.
    None,
}

impl LockInScaling {
    fn factor(self) -> f64 {
        match self {
            LockInScaling::Fundamental => FRAC_PI_2,
            LockInScaling::None => 1.0,
        }
    }
}

/// Fractional PL contrast from lock-in and DC voltages.
pub fn odmr_contrast(peak_v: f64, baseline_v: f64, dc_v: f64, scaling: LockInScaling) -> Result<f64, AnalysisError> {
    if !(dc_v > 0.0) {
        return Err(AnalysisError::ZeroDc(dc_v));
    }
    Ok((peak_v - baseline_v) / dc_v * scaling.factor())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prefactor {
    /// `4√2 / (3√3)`, non-gradiometric with FWHM linewidth.
    #[default]
    Standard,
    /// Standard prefactor times `√(2/3)`.
    Gradiometric,
}

pub fn shot_noise_prefactor(variant: Prefactor) -> f64 {
    let standard = 4.0 * 2f64.sqrt() / (3.0 * 3f64.sqrt());
    match variant {
        Prefactor::Standard => standard,
        Prefactor::Gradiometric => standard * (2.0f64 / 3.0).sqrt(),
    }
}

/// Shot-noise-limited field sensitivity, T/√Hz:
/// `η = k h Δ / (g μ_B C √R)` with `k = 4√2/(3√3)`.
pub fn shot_noise_sensitivity(fwhm_hz: f64, contrast: f64, rate_hz: f64, g: f64) -> Result<f64, AnalysisError> {
    shot_noise_sensitivity_with(fwhm_hz, contrast, rate_hz, g, Prefactor::Standard)
}

pub fn shot_noise_sensitivity_with(
    fwhm_hz: f64,
    contrast: f64,
    rate_hz: f64,
    g: f64,
    variant: Prefactor,
) -> Result<f64, AnalysisError> {
    for (name, value) in [("fwhm_hz", fwhm_hz), ("contrast", contrast), ("rate_hz", rate_hz), ("g", g)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(AnalysisError::NonPositiveInput { name, value });
        }
    }
    Ok(shot_noise_prefactor(variant) * fwhm_hz / (gyromagnetic_ratio(g) * contrast * rate_hz.sqrt()))
}

/// Measured line parameters at one drive setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellInput {
    pub p_opt_w: f64,
    pub p_rf_w: f64,
    pub fwhm_hz: f64,
    pub contrast: f64,
    pub rate_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub p_opt_w: f64,
    pub p_rf_w: f64,
    pub fwhm_hz: f64,
    pub contrast: f64,
    pub rate_hz: f64,
    pub eta_t_rthz: f64,
}

/// Rectangular optical-power by RF-power grid. Cells are stored row-major with
/// optical power as the outer axis; cells with no record are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMap {
    pub p_opt_axis: Vec<f64>,
    pub p_rf_axis: Vec<f64>,
    pub cells: Vec<Option<SensitivityPoint>>,
    /// `(optical index, RF index)` of the minimum.
    pub argmin: (usize, usize),
}

impl SensitivityMap {
    pub fn cell(&self, i_opt: usize, i_rf: usize) -> Option<&SensitivityPoint> {
        self.cells[i_opt * self.p_rf_axis.len() + i_rf].as_ref()
    }

    pub fn points(&self) -> impl Iterator<Item = &SensitivityPoint> {
        self.cells.iter().flatten()
    }

    pub fn best(&self) -> &SensitivityPoint {
        self.cell(self.argmin.0, self.argmin.1)
            .expect("argmin always refers to a present cell")
    }

    pub fn min_eta(&self) -> f64 {
        self.best().eta_t_rthz
    }
}

/// Evaluates the shot-noise sensitivity of every record and locates the
/// minimum. Axes are the sorted distinct powers found in the records. Exact
/// ties go to the lowest optical power, then the lowest RF power.
pub fn build_sensitivity_map(records: &[CellInput], g: f64) -> Result<SensitivityMap, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    let points = records
        .par_iter()
        .map(|r| {
            shot_noise_sensitivity(r.fwhm_hz, r.contrast, r.rate_hz, g).map(|eta| SensitivityPoint {
                p_opt_w: r.p_opt_w,
                p_rf_w: r.p_rf_w,
                fwhm_hz: r.fwhm_hz,
                contrast: r.contrast,
                rate_hz: r.rate_hz,
                eta_t_rthz: eta,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    SensitivityMap::from_points(points)
}

impl SensitivityMap {
    /// Arranges already evaluated points on their grid and locates the minimum.
    pub fn from_points(points: Vec<SensitivityPoint>) -> Result<SensitivityMap, AnalysisError> {
        if points.is_empty() {
            return Err(AnalysisError::EmptyGrid);
        }
        let axis = |get: fn(&SensitivityPoint) -> f64| {
            let mut v: Vec<f64> = points.iter().map(get).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let p_opt_axis = axis(|p| p.p_opt_w);
        let p_rf_axis = axis(|p| p.p_rf_w);
        if p_opt_axis.iter().chain(&p_rf_axis).any(|p| !p.is_finite()) {
            return Err(AnalysisError::InvalidInput("powers must be finite".into()));
        }
        if points.iter().any(|p| !(p.eta_t_rthz.is_finite() && p.eta_t_rthz > 0.0)) {
            return Err(AnalysisError::InvalidInput("eta must be finite and > 0".into()));
        }

        let n_rf = p_rf_axis.len();
        let mut cells = vec![None; p_opt_axis.len() * n_rf];
        for p in points {
            let i = p_opt_axis.partition_point(|&v| v < p.p_opt_w);
            let j = p_rf_axis.partition_point(|&v| v < p.p_rf_w);
            let slot = &mut cells[i * n_rf + j];
            if slot.is_some() {
                return Err(AnalysisError::InvalidInput(format!(
                    "duplicate cell at p_opt_w={}, p_rf_w={}",
                    p.p_opt_w, p.p_rf_w
                )));
            }
            *slot = Some(p);
        }

        // Row-major order visits low optical, then low RF power first, so a
        // strict comparison keeps the documented tie-break.
        let mut best: Option<(usize, f64)> = None;
        for (k, cell) in cells.iter().enumerate() {
            if let Some(p) = cell {
                if best.is_none_or(|(_, eta)| p.eta_t_rthz < eta) {
                    best = Some((k, p.eta_t_rthz));
                }
            }
        }
        let (k, _) = best.expect("at least one point");
        Ok(SensitivityMap {
            p_opt_axis,
            p_rf_axis,
            cells,
            argmin: (k / n_rf, k % n_rf),
        })
    }
}
