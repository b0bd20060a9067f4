use super::{
    voltage_from_photon_rate, FieldTimeline, LockIn, LockInConfig, ModulationMode, Scene, SeriesUnit,
    ShotNoiseSource, SignalError, TimeSeries,
};
use crate::lineshape::{lorentzian_value, PeakShape};
use crate::spin_model::{lines_at, FieldVector, TransitionClasses, TransitionLabel};

/// Pre-roll before recording, in time constants per filter pole.
const PREROLL_TAU: f64 = 40.0;

/// Steady-state demodulated output, in volts, with the FM carrier at
/// `carrier_hz`. Evaluated on the same per-period sample phases the
/// time-domain lock-in uses.
pub fn fm_response(peak: &PeakShape, cfg: &LockInConfig, v_dc: f64, carrier_hz: f64) -> f64 {
    let reference = cfg.reference_table();
    let sum: f64 = reference
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let nu = carrier_hz + cfg.fm_deviation_hz * cfg.phase(k).sin();
            lorentzian_value(peak, nu) * r
        })
        .sum();
    v_dc * sum / reference.len() as f64
}

/// Small-signal discriminator slope at resonance, V/Hz, positive for a carrier
/// above resonance.
pub fn fm_discriminator_slope(peak: &PeakShape, cfg: &LockInConfig, v_dc: f64) -> Result<f64, SignalError> {
    if cfg.mode != ModulationMode::Fm {
        return Err(SignalError::WrongMode {
            expected: ModulationMode::Fm,
        });
    }
    cfg.validate()?;
    if cfg.fm_deviation_hz >= peak.fwhm_hz {
        return Err(SignalError::DeviationTooLarge {
            deviation_hz: cfg.fm_deviation_hz,
            fwhm_hz: peak.fwhm_hz,
        });
    }
    let h = 1e-4 * peak.fwhm_hz;
    let up = fm_response(peak, cfg, v_dc, peak.center_hz + h);
    let down = fm_response(peak, cfg, v_dc, peak.center_hz - h);
    Ok((up - down) / (2.0 * h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmTracking {
    pub lockin: TimeSeries,
    pub field_estimate: TimeSeries,
    pub slope_v_per_hz: f64,
    pub carrier_hz: f64,
    /// `d nu2 / d B_z` at the bias field, Hz/T.
    pub gamma_eff_hz_per_t: f64,
}

fn nu2_at(scene: &Scene, bz: f64) -> Result<(f64, f64), SignalError> {
    let field = FieldVector::new(scene.field.bx, scene.field.by, bz)?;
    let lines = lines_at(&scene.spin, &field, TransitionClasses::PRIMARY_ONLY)?;
    let nu2 = lines
        .iter()
        .find(|l| l.label == TransitionLabel::Nu2)
        .expect("primary transitions include nu2");
    Ok((nu2.frequency_hz, nu2.odmr_weight()))
}

/// Field tracking with the carrier parked on `nu2` at the first timeline field.
///
/// The lock-in output is decimated to `cfg.output_rate_hz`; each output sample
/// is the filter output averaged over the last modulation period of its
/// window and is time-stamped at the window end. The field estimate inverts
/// the discriminator slope and `d nu2 / d B_z`. Injected field noise is white
/// up to the modulation frequency (one draw per period).
pub fn simulate_fm_tracking(
    timeline: &FieldTimeline,
    scene: &Scene,
    cfg: &LockInConfig,
    duration_s: f64,
    seed: u64,
) -> Result<FmTracking, SignalError> {
    if cfg.mode != ModulationMode::Fm {
        return Err(SignalError::WrongMode {
            expected: ModulationMode::Fm,
        });
    }
    cfg.validate()?;
    scene.detector.validate()?;
    scene.sample.broadening.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(SignalError::InvalidTimeline("duration must be > 0".into()));
    }

    let bias = timeline.steps()[0].1;
    let (carrier_hz, weight) = nu2_at(scene, bias)?;
    let h = 1e-6;
    let gamma_eff = (nu2_at(scene, bias + h)?.0 - nu2_at(scene, bias - h)?.0) / (2.0 * h);
    let resonances = timeline
        .steps()
        .iter()
        .map(|&(_, bz)| nu2_at(scene, bz).map(|r| r.0))
        .collect::<Result<Vec<_>, _>>()?;

    let peak = PeakShape {
        center_hz: carrier_hz,
        fwhm_hz: scene.fwhm(),
        contrast: scene.contrast() * weight,
    };
    let v_dc = scene.v_dc();
    let rate_dc = scene.photon_rate();
    let slope = fm_discriminator_slope(&peak, cfg, v_dc)?;
    if slope.abs() < f64::MIN_POSITIVE {
        return Err(SignalError::InvalidConfig("discriminator slope is zero".into()));
    }

    let dt = cfg.dt();
    let period = cfg.samples_per_period();
    let per_output = cfg.samples_per_output();
    let n_outputs = ((duration_s * cfg.sample_rate_hz) / per_output as f64).round() as usize;
    let preroll_periods = (PREROLL_TAU * f64::from(cfg.filter_order) * cfg.time_constant_s / cfg.period_s()).ceil() as usize;
    let preroll = preroll_periods * period;
    let deviation: Vec<f64> = (0..period)
        .map(|k| cfg.fm_deviation_hz * cfg.phase(k).sin())
        .collect();
    let noise_asd = scene.noise.field_noise_asd_t;
    let sigma_per_period = noise_asd / (2.0 * cfg.period_s()).sqrt();

    let mut lockin = LockIn::new(cfg)?;
    let mut rng = ShotNoiseSource::new(seed);
    let mut field_noise_hz = 0.0;
    let mut outputs = Vec::with_capacity(n_outputs);
    let mut acc = 0.0;
    for s in 0..preroll + n_outputs * per_output {
        let k = lockin.phase_index();
        if k == 0 && noise_asd > 0.0 {
            field_noise_hz = gamma_eff * sigma_per_period * rng.standard_normal();
        }
        let t = s.saturating_sub(preroll) as f64 * dt;
        let nu_res = resonances[timeline.step_index(t)] + field_noise_hz;
        let offset = carrier_hz + deviation[k] - nu_res;
        let rate = rate_dc * (1.0 + lorentzian_value(&peak, peak.center_hz + offset));
        let measured = if scene.noise.shot_noise {
            rng.counts(rate, dt) / dt
        } else {
            rate
        };
        let x = lockin.push(voltage_from_photon_rate(measured, &scene.detector));
        if s >= preroll {
            let w = (s - preroll) % per_output;
            if w >= per_output - period {
                acc += x;
            }
            if w == per_output - 1 {
                outputs.push(acc / period as f64);
                acc = 0.0;
            }
        }
    }

    let interval_s = per_output as f64 * dt;
    let field: Vec<f64> = outputs.iter().map(|x| bias - x / (slope * gamma_eff)).collect();
    Ok(FmTracking {
        lockin: TimeSeries {
            start_s: interval_s,
            interval_s,
            values: outputs,
            unit: SeriesUnit::Volts,
        },
        field_estimate: TimeSeries {
            start_s: interval_s,
            interval_s,
            values: field,
            unit: SeriesUnit::Tesla,
        },
        slope_v_per_hz: slope,
        carrier_hz,
        gamma_eff_hz_per_t: gamma_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::SamplePreset;
    use crate::signal_chain::{lockin_demodulate, NoiseModel};

    fn peak() -> PeakShape {
        PeakShape {
            center_hz: 98e6,
            fwhm_hz: 6e6,
            contrast: 0.01,
        }
    }

    fn cfg() -> LockInConfig {
        LockInConfig::fm(1e3, 0.05, 2e4, 2.1e6)
    }

    #[test]
    fn zero_detuning_is_null() {
        let p = peak();
        let x = fm_response(&p, &cfg(), 2.0, p.center_hz);
        assert!(x.abs() < 1e-15, "{x}");
    }

    #[test]
    fn odd_symmetry() {
        let p = peak();
        for k in 1..10 {
            let d = p.fwhm_hz / 4.0 * f64::from(k) / 10.0;
            let up = fm_response(&p, &cfg(), 2.0, p.center_hz + d);
            let down = fm_response(&p, &cfg(), 2.0, p.center_hz - d);
            assert!(up > 0.0);
            assert!((up + down).abs() < 1e-12 * up.abs());
        }
    }

    #[test]
    fn slope_scales_with_contrast_and_dc() {
        let p = peak();
        let base = fm_discriminator_slope(&p, &cfg(), 1.0).unwrap();
        let doubled = fm_discriminator_slope(&PeakShape { contrast: 0.02, ..p }, &cfg(), 1.5).unwrap();
        assert!((doubled / base - 3.0).abs() < 1e-9);
    }

    #[test]
    fn slope_matches_time_domain_finite_difference() {
        let p = peak();
        let c = cfg();
        let v_dc = 2.0;
        let slope = fm_discriminator_slope(&p, &c, v_dc).unwrap();
        let n = (30.0 * c.time_constant_s * c.sample_rate_hz) as usize;
        let period = c.samples_per_period();
        let settled = |carrier: f64| {
            let raw: Vec<f64> = (0..n)
                .map(|i| {
                    let nu = carrier + c.fm_deviation_hz * c.phase(i % period).sin();
                    v_dc * (1.0 + lorentzian_value(&p, nu))
                })
                .collect();
            let series = TimeSeries {
                start_s: 0.0,
                interval_s: c.dt(),
                values: raw,
                unit: SeriesUnit::Volts,
            };
            let out = lockin_demodulate(&series, &c).unwrap();
            out.values[n - period..].iter().sum::<f64>() / period as f64
        };
        let h = 0.05 * p.fwhm_hz;
        let brute = (settled(p.center_hz + h) - settled(p.center_hz - h)) / (2.0 * h);
        assert!((brute / slope - 1.0).abs() < 0.02, "brute {brute} slope {slope}");
    }

    #[test]
    fn deviation_guard() {
        let c = LockInConfig::fm(1e3, 0.05, 2e4, 6e6);
        assert!(matches!(
            fm_discriminator_slope(&peak(), &c, 1.0),
            Err(SignalError::DeviationTooLarge { .. })
        ));
        let am = LockInConfig::am(1e3, 0.05, 2e4);
        assert!(matches!(fm_discriminator_slope(&peak(), &am, 1.0), Err(SignalError::WrongMode { .. })));
    }

    #[test]
    fn constant_field_null() {
        let mut scene = Scene::new(SamplePreset::quenched(), 0.4, 1.0);
        scene.noise = NoiseModel::NONE;
        let c = LockInConfig::fm(100.0, 0.5, 2000.0, 0.35 * scene.fwhm());
        let timeline = FieldTimeline::new(vec![(0.0, 1e-3)]).unwrap();
        let out = simulate_fm_tracking(&timeline, &scene, &c, 10.0, 1).unwrap();
        assert_eq!(out.field_estimate.len(), 100);
        for (i, b) in out.field_estimate.values.iter().enumerate() {
            if out.field_estimate.time(i) >= 2.5 {
                assert!((b - 1e-3).abs() < 1e-11, "{b}");
            }
        }
        assert!((out.gamma_eff_hz_per_t / scene.spin.gamma() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn noiseless_staircase_is_reproduced() {
        let mut scene = Scene::new(SamplePreset::quenched(), 0.4, 1.0);
        scene.noise = NoiseModel::NONE;
        let c = LockInConfig::fm(100.0, 0.5, 2000.0, 0.35 * scene.fwhm());
        let timeline = FieldTimeline::staircase(1e-3, 500e-9, 20.0, 3).unwrap();
        let out = simulate_fm_tracking(&timeline, &scene, &c, 60.0, 1).unwrap();
        for (i, b) in out.field_estimate.values.iter().enumerate() {
            let t = out.field_estimate.time(i);
            let since_edge = t % 20.0;
            if since_edge > 10.0 {
                let truth = timeline.value_at(t);
                // residual nonlinearity of the discriminator over 1 uT is ~1e-4
                assert!((b - truth).abs() < 1e-3 * 500e-9 + 1e-12, "t {t}: {b} vs {truth}");
            }
        }
    }
}
