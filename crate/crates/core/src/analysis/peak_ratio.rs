use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Default window around the V2 zero-phonon line at 1.354 eV.
pub const V2_ZPL_WINDOW_EV: (f64, f64) = (1.349, 1.359);
/// Default window around the non-V_Si feature at 1.370 eV.
pub const NON_VSI_WINDOW_EV: (f64, f64) = (1.365, 1.375);

/// Photoluminescence spectrum on a photon-energy axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySpectrum {
    pub energy_ev: Vec<f64>,
    pub values: Vec<f64>,
}

/// Ratio of the background-subtracted maxima in `window_a` and `window_b`.
/// The background in each window is the straight line joining the spectrum
/// values at the window edges.
pub fn peak_ratio(spectrum: &EnergySpectrum, window_a: (f64, f64), window_b: (f64, f64)) -> Result<f64, AnalysisError> {
    let e = &spectrum.energy_ev;
    if e.len() != spectrum.values.len() || e.len() < 2 {
        return Err(AnalysisError::InvalidInput("spectrum needs >= 2 matching points".into()));
    }
    if e.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(AnalysisError::InvalidInput("energy axis must be strictly increasing".into()));
    }
    let a = window_peak(spectrum, window_a)?;
    let b = window_peak(spectrum, window_b)?;
    if !(b > 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "no peak above background in window [{}, {}]",
            window_b.0, window_b.1
        )));
    }
    Ok(a / b)
}

fn window_peak(s: &EnergySpectrum, (lo, hi): (f64, f64)) -> Result<f64, AnalysisError> {
    let e = &s.energy_ev;
    let (axis_lo, axis_hi) = (e[0], e[e.len() - 1]);
    if !(lo < hi) || lo < axis_lo || hi > axis_hi {
        return Err(AnalysisError::WindowOutOfRange {
            lo,
            hi,
            axis_lo,
            axis_hi,
        });
    }
    let (y_lo, y_hi) = (interpolate(s, lo), interpolate(s, hi));
    let peak = e
        .iter()
        .zip(&s.values)
        .filter(|(x, _)| (lo..=hi).contains(*x))
        .map(|(x, y)| y - (y_lo + (y_hi - y_lo) * (x - lo) / (hi - lo)))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(peak.max(0.0))
}

fn interpolate(s: &EnergySpectrum, x: f64) -> f64 {
    let e = &s.energy_ev;
    let i = e.partition_point(|&v| v < x).clamp(1, e.len() - 1);
    let (x0, x1) = (e[i - 1], e[i]);
    let (y0, y1) = (s.values[i - 1], s.values[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}
