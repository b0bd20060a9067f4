use serde::{Deserialize, Serialize};

use super::SignalError;
use crate::consts::{PLANCK_J_S, SPEED_OF_LIGHT_M_S};

/// Amplified photodiode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    pub responsivity_a_per_w: f64,
    pub transimpedance_v_per_a: f64,
    /// Single wavelength standing in for the broadband emission past the
    /// 850 nm long-pass filter.
    pub effective_wavelength_m: f64,
    /// Fraction of the emission collected by the objective. Informational;
    /// rates are always referred to the detector.
    pub collection_fraction: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            responsivity_a_per_w: 0.6,
            transimpedance_v_per_a: 1e6,
            effective_wavelength_m: 900e-9,
            collection_fraction: 0.11,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<(), SignalError> {
        let ok = [
            self.responsivity_a_per_w,
            self.transimpedance_v_per_a,
            self.effective_wavelength_m,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(SignalError::InvalidConfig(
                "detector responsivity, transimpedance and wavelength must be > 0".into(),
            ))
        }
    }

    pub fn photon_energy_j(&self) -> f64 {
        PLANCK_J_S * SPEED_OF_LIGHT_M_S / self.effective_wavelength_m
    }

    /// Volts per detected photon per second.
    pub fn volts_per_hz(&self) -> f64 {
        self.photon_energy_j() * self.responsivity_a_per_w * self.transimpedance_v_per_a
    }
}

pub fn photon_rate_from_voltage(v_dc: f64, det: &DetectorModel) -> Result<f64, SignalError> {
    if v_dc < 0.0 || v_dc.is_nan() {
        return Err(SignalError::NegativeVoltage(v_dc));
    }
    Ok(v_dc / det.transimpedance_v_per_a / det.responsivity_a_per_w / det.photon_energy_j())
}

pub fn voltage_from_photon_rate(rate_hz: f64, det: &DetectorModel) -> f64 {
    rate_hz * det.photon_energy_j() * det.responsivity_a_per_w * det.transimpedance_v_per_a
}
