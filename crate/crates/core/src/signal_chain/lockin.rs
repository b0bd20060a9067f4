use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{SeriesUnit, SignalError, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationMode {
    Am,
    Fm,
}

/// Lock-in amplifier and modulation settings.
///
/// The sample rate must be an integer multiple of the modulation frequency so
/// that a modulation period spans a whole number of samples; settled outputs
/// are averaged over whole periods, which cancels the reference ripple. In FM
/// mode the reference is inverted so that a carrier above resonance gives a
/// positive output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockInConfig {
    pub mode: ModulationMode,
    pub mod_freq_hz: f64,
    pub time_constant_s: f64,
    /// Peak FM deviation, Hz (FM only).
    pub fm_deviation_hz: f64,
    pub sample_rate_hz: f64,
    pub filter_order: u32,
    pub ref_phase_rad: f64,
    /// Rate of the decimated output series, Hz.
    pub output_rate_hz: f64,
}

impl LockInConfig {
    pub fn am(mod_freq_hz: f64, time_constant_s: f64, sample_rate_hz: f64) -> Self {
        LockInConfig {
            mode: ModulationMode::Am,
            mod_freq_hz,
            time_constant_s,
            fm_deviation_hz: 0.0,
            sample_rate_hz,
            filter_order: 1,
            ref_phase_rad: 0.0,
            output_rate_hz: 10.0,
        }
    }

    pub fn fm(mod_freq_hz: f64, time_constant_s: f64, sample_rate_hz: f64, fm_deviation_hz: f64) -> Self {
        LockInConfig {
            mode: ModulationMode::Fm,
            fm_deviation_hz,
            ..Self::am(mod_freq_hz, time_constant_s, sample_rate_hz)
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: String| Err(SignalError::InvalidConfig(m));
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.mod_freq_hz) || !finite_pos(self.sample_rate_hz) || !finite_pos(self.time_constant_s) {
            return bad("mod_freq_hz, sample_rate_hz and time_constant_s must be > 0".into());
        }
        if self.sample_rate_hz < 10.0 * self.mod_freq_hz {
            return bad(format!(
                "sample_rate_hz {} must be at least 10x mod_freq_hz {}",
                self.sample_rate_hz, self.mod_freq_hz
            ));
        }
        if self.time_constant_s <= 1.0 / self.mod_freq_hz {
            return bad("time_constant_s must exceed one modulation period".into());
        }
        let ratio = self.sample_rate_hz / self.mod_freq_hz;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad("sample_rate_hz must be an integer multiple of mod_freq_hz".into());
        }
        if self.mode == ModulationMode::Am && self.samples_per_period() % 2 != 0 {
            return bad("AM needs an even number of samples per modulation period".into());
        }
        if self.filter_order == 0 {
            return bad("filter_order must be >= 1".into());
        }
        if self.mode == ModulationMode::Fm && !finite_pos(self.fm_deviation_hz) {
            return bad("fm_deviation_hz must be > 0 in FM mode".into());
        }
        if !self.ref_phase_rad.is_finite() {
            return bad("ref_phase_rad must be finite".into());
        }
        if !finite_pos(self.output_rate_hz) {
            return bad("output_rate_hz must be > 0".into());
        }
        let periods = self.mod_freq_hz / self.output_rate_hz;
        if periods < 1.0 - 1e-9 || (periods - periods.round()).abs() > 1e-9 * periods {
            return bad("mod_freq_hz must be an integer multiple of output_rate_hz".into());
        }
        Ok(())
    }

    pub fn samples_per_period(&self) -> usize {
        (self.sample_rate_hz / self.mod_freq_hz).round() as usize
    }

    pub fn samples_per_output(&self) -> usize {
        self.samples_per_period() * (self.mod_freq_hz / self.output_rate_hz).round() as usize
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.mod_freq_hz
    }

    /// Modulation phase at the center of sample `k` of a period.
    pub(crate) fn phase(&self, k: usize) -> f64 {
        2.0 * PI * (k as f64 + 0.5) / self.samples_per_period() as f64
    }

    /// Mixer reference over one period, including the factor 2 of the
    /// fundamental-component convention.
    pub(crate) fn reference_table(&self) -> Vec<f64> {
        let flip = if self.mode == ModulationMode::Fm { PI } else { 0.0 };
        (0..self.samples_per_period())
            .map(|k| 2.0 * (self.phase(k) + self.ref_phase_rad + flip).sin())
            .collect()
    }

    pub fn noise_equivalent_bandwidth(&self) -> f64 {
        noise_equivalent_bandwidth(self.time_constant_s, self.filter_order)
    }
}

/// One-sided noise-equivalent bandwidth of `order` cascaded single-pole
/// filters with time constant `tau_s`, Hz. `1/(4 tau)` for a single pole.
pub fn noise_equivalent_bandwidth(tau_s: f64, order: u32) -> f64 {
    // int_0^inf (1 + x^2)^-n dx = (pi/2) prod_{j=2..n} (2j - 3) / (2j - 2)
    let integral = (2..=order).fold(PI / 2.0, |acc, j| {
        acc * f64::from(2 * j - 3) / f64::from(2 * j - 2)
    });
    integral / (2.0 * PI * tau_s)
}

/// Streaming mixer plus cascaded single-pole low-pass.
#[derive(Debug, Clone)]
pub struct LockIn {
    reference: Vec<f64>,
    alpha: f64,
    stages: Vec<f64>,
    index: usize,
}

impl LockIn {
    pub fn new(cfg: &LockInConfig) -> Result<Self, SignalError> {
        cfg.validate()?;
        Ok(LockIn {
            reference: cfg.reference_table(),
            alpha: -(-cfg.dt() / cfg.time_constant_s).exp_m1(),
            stages: vec![0.0; cfg.filter_order as usize],
            index: 0,
        })
    }

    /// Position within the modulation period of the next sample.
    pub fn phase_index(&self) -> usize {
        self.index
    }

    pub(crate) fn set_phase_index(&mut self, index: usize) {
        self.index = index % self.reference.len();
    }

    pub fn push(&mut self, sample: f64) -> f64 {
        let mut x = sample * self.reference[self.index];
        self.index += 1;
        if self.index == self.reference.len() {
            self.index = 0;
        }
        for s in &mut self.stages {
            *s += self.alpha * (x - *s);
            x = *s;
        }
        x
    }
}

/// Demodulates a raw detector series sampled at `cfg.sample_rate_hz`. The
/// reference phase is referred to `t = 0`.
pub fn lockin_demodulate(raw: &TimeSeries, cfg: &LockInConfig) -> Result<TimeSeries, SignalError> {
    let series_hz = 1.0 / raw.interval_s;
    if (series_hz / cfg.sample_rate_hz - 1.0).abs() > 1e-9 {
        return Err(SignalError::SampleRateMismatch {
            series_hz,
            config_hz: cfg.sample_rate_hz,
        });
    }
    let mut lockin = LockIn::new(cfg)?;
    lockin.set_phase_index((raw.start_s * cfg.sample_rate_hz).round() as usize);
    Ok(TimeSeries {
        start_s: raw.start_s,
        interval_s: raw.interval_s,
        values: raw.values.iter().map(|&v| lockin.push(v)).collect(),
        unit: SeriesUnit::Volts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn series(values: Vec<f64>, fs: f64) -> TimeSeries {
        TimeSeries {
            start_s: 0.0,
            interval_s: 1.0 / fs,
            values,
            unit: SeriesUnit::Volts,
        }
    }

    #[test]
    fn validation() {
        assert!(LockInConfig::am(1e3, 0.1, 5e3).validate().is_err());
        assert!(LockInConfig::am(1e3, 0.0005, 1e4).validate().is_err());
        assert!(LockInConfig::am(1e3, 0.1, 1.05e4).validate().is_err());
        assert!(LockInConfig::am(1e3, 0.1, 1.1e4).validate().is_err()); // odd samples per period
        assert!(LockInConfig::fm(1e3, 0.1, 1.1e4, 1e5).validate().is_ok());
        assert!(LockInConfig::fm(1e3, 0.1, 1e4, 0.0).validate().is_err());
        assert!(LockInConfig::am(1e3, 0.1, 2e4).validate().is_ok());
    }

    #[test]
    fn neb_values() {
        assert!((noise_equivalent_bandwidth(0.5, 1) - 0.5).abs() < 1e-15);
        // two poles: 1/(8 tau)
        assert!((noise_equivalent_bandwidth(0.5, 2) - 0.25).abs() < 1e-15);
        // three poles: 3/(32 tau)
        assert!((noise_equivalent_bandwidth(1.0, 3) - 3.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_rejected() {
        let cfg = LockInConfig::am(1e3, 0.05, 2e4);
        let n = (10.0 * cfg.time_constant_s * cfg.sample_rate_hz) as usize;
        let out = lockin_demodulate(&series(vec![1.0; n], cfg.sample_rate_hz), &cfg).unwrap();
        let settle = (5.0 * cfg.time_constant_s * cfg.sample_rate_hz) as usize;
        let p = cfg.samples_per_period();
        for chunk in out.values[settle..].chunks_exact(p) {
            let settled = chunk.iter().sum::<f64>() / p as f64;
            assert!(settled.abs() < 1e-3, "{settled}");
        }
    }

    #[test]
    fn square_wave_am_settles_to_two_over_pi() {
        let cfg = LockInConfig::am(1e3, 0.05, 1e5);
        let p = cfg.samples_per_period();
        let n = (8.0 * cfg.time_constant_s * cfg.sample_rate_hz) as usize / p * p;
        let raw: Vec<f64> = (0..n)
            .map(|i| 1.0 + if i % p < p / 2 { 0.01 } else { 0.0 })
            .collect();
        let out = lockin_demodulate(&series(raw, cfg.sample_rate_hz), &cfg).unwrap();
        let settled = out.values[n - p..].iter().sum::<f64>() / p as f64;
        assert!((settled - 6.366e-3).abs() / 6.366e-3 < 0.01, "{settled}");
    }

    #[test]
    fn linear_front_end() {
        let cfg = LockInConfig::am(1e3, 0.02, 2e4);
        let p = cfg.samples_per_period();
        let n = 20 * p * 10;
        let make = |a: f64| {
            let raw: Vec<f64> = (0..n).map(|i| a * ((i % p) as f64 / p as f64)).collect();
            let out = lockin_demodulate(&series(raw, cfg.sample_rate_hz), &cfg).unwrap();
            out.values[n - p..].iter().sum::<f64>() / p as f64
        };
        let (one, two) = (make(1.0), make(2.0));
        assert!((two / one - 2.0).abs() < 1e-6);
    }

    #[test]
    fn white_noise_bandwidth() {
        let cfg = LockInConfig::am(100.0, 0.5, 1000.0);
        let n = (4000.0 * cfg.sample_rate_hz) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let out = lockin_demodulate(&series(raw, cfg.sample_rate_hz), &cfg).unwrap();
        let tail = &out.values[(10.0 * cfg.sample_rate_hz) as usize..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let std = (tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / tail.len() as f64).sqrt();
        // One-sided density of unit-variance white samples: S_v = 2 / fs.
        // Mixing with 2 sin doubles the power near DC, hence sqrt(2).
        let s_v = (2.0 / cfg.sample_rate_hz).sqrt();
        let expected = 2f64.sqrt() * s_v * (1.0 / (4.0 * cfg.time_constant_s)).sqrt();
        assert!((std / expected - 1.0).abs() < 0.1, "std {std} expected {expected}");
    }

    #[test]
    fn sample_rate_mismatch() {
        let cfg = LockInConfig::am(1e3, 0.05, 2e4);
        assert!(matches!(
            lockin_demodulate(&series(vec![0.0; 10], 1e4), &cfg),
            Err(SignalError::SampleRateMismatch { .. })
        ));
    }
}
