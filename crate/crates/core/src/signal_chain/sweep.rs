use serde::{Deserialize, Serialize};

use super::{
    voltage_from_photon_rate, LockIn, LockInConfig, ModulationMode, Scene, ShotNoiseSource, SignalError,
};
use crate::lineshape::{linspace, odmr_value, SpectrumMeta, SyntheticSpectrum, ValueUnit};

/// Time constants the lock-in runs at the first frequency before recording.
const PREROLL_TAU: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub n_points: usize,
    /// Time spent per frequency; defaults to five time constants plus one
    /// modulation period.
    pub dwell_s: Option<f64>,
}

impl SweepPlan {
    pub fn frequencies(&self) -> Vec<f64> {
        linspace(self.f_start_hz, self.f_stop_hz, self.n_points)
    }

    pub fn dwell(&self, cfg: &LockInConfig) -> f64 {
        self.dwell_s
            .unwrap_or(5.0 * cfg.time_constant_s + cfg.period_s())
    }
}

/// AM-modulated frequency sweep through the detector and lock-in.
///
/// The RF drive is on for the first half of every modulation period. At each
/// frequency the lock-in output and the detector voltage are averaged over
/// the final modulation period of the dwell. The lock-in filter is not reset
/// between points.
pub fn simulate_am_sweep(
    scene: &Scene,
    sweep: &SweepPlan,
    cfg: &LockInConfig,
    seed: u64,
) -> Result<SyntheticSpectrum, SignalError> {
    if cfg.mode != ModulationMode::Am {
        return Err(SignalError::WrongMode {
            expected: ModulationMode::Am,
        });
    }
    cfg.validate()?;
    scene.detector.validate()?;
    scene.sample.broadening.validate()?;
    let frequencies = sweep.frequencies();
    crate::lineshape::validate_grid(&frequencies)?;
    let dwell = sweep.dwell(cfg);
    let min_dwell = 5.0 * cfg.time_constant_s;
    if dwell < min_dwell * (1.0 - 1e-12) {
        return Err(SignalError::DwellTooShort {
            dwell_s: dwell,
            min_s: min_dwell,
        });
    }

    let lines = scene.lines()?;
    let fwhm = scene.fwhm();
    let contrast = scene.contrast();
    let rate_off = scene.photon_rate();
    let dt = cfg.dt();
    let period = cfg.samples_per_period();
    let half = period / 2;
    let dwell_samples = ((dwell * cfg.sample_rate_hz).round() as usize).max(period);
    let preroll_samples = (PREROLL_TAU * cfg.time_constant_s * cfg.sample_rate_hz).round() as usize;

    let mut lockin = LockIn::new(cfg)?;
    let mut noise = ShotNoiseSource::new(seed);
    let det = scene.detector;
    let shot = scene.noise.shot_noise;
    let mut detect = |rate: f64| -> f64 {
        let measured = if shot { noise.counts(rate, dt) / dt } else { rate };
        voltage_from_photon_rate(measured, &det)
    };

    let mut lockin_v = Vec::with_capacity(frequencies.len());
    let mut dc_v = Vec::with_capacity(frequencies.len());
    for (i, &nu) in frequencies.iter().enumerate() {
        let rate_on = rate_off * (1.0 + odmr_value(&lines, fwhm, contrast, nu));
        let n = dwell_samples + if i == 0 { preroll_samples } else { 0 };
        let mut x_acc = 0.0;
        let mut v_acc = 0.0;
        for s in 0..n {
            let rf_on = lockin.phase_index() < half;
            let v = detect(if rf_on { rate_on } else { rate_off });
            let x = lockin.push(v);
            if s >= n - period {
                x_acc += x;
                v_acc += v;
            }
        }
        lockin_v.push(x_acc / period as f64);
        dc_v.push(v_acc / period as f64);
    }

    Ok(SyntheticSpectrum {
        frequency_hz: frequencies,
        values: lockin_v,
        unit: ValueUnit::Volts,
        dc_v: Some(dc_v),
        meta: SpectrumMeta {
            p_opt_w: scene.p_opt_w,
            p_rf_w: scene.p_rf_w,
            field: scene.field,
            seed: Some(seed),
        },
    })
}
