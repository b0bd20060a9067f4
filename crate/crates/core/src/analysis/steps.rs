use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::consts::Z_95;
use crate::signal_chain::{FieldTimeline, SeriesUnit, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub start_s: f64,
    /// Scheduled field, T.
    pub expected_t: f64,
    pub mean_t: f64,
    pub std_t: f64,
    /// 95% half-width of the mean, treating samples one `2 tau` apart as
    /// independent.
    pub mean_ci_t: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub steps: Vec<StepStats>,
    /// RMS of the per-step standard deviations, T.
    pub pooled_sigma_t: f64,
    pub tau_s: f64,
    pub settle_discard_s: f64,
    /// `σ √τ`, T/√Hz.
    pub sensitivity_t_rthz: f64,
    /// `σ √(2τ)`, i.e. `σ / √(2 NEB)` for a single-pole filter, T/√Hz.
    pub sensitivity_neb_t_rthz: f64,
}

impl StepReport {
    /// Differences between consecutive step means, T.
    pub fn step_differences(&self) -> Vec<f64> {
        self.steps.windows(2).map(|w| w[1].mean_t - w[0].mean_t).collect()
    }
}

/// Splits a field series by the schedule, drops `settle_discard_s` after each
/// edge and reports per-step statistics. Samples are time-stamped at the end
/// of their averaging window, so a sample at exactly a step edge belongs to
/// the step before it.
pub fn analyze_steps(
    field_ts: &TimeSeries,
    schedule: &FieldTimeline,
    tau_s: f64,
    settle_discard_s: f64,
) -> Result<StepReport, AnalysisError> {
    if !(tau_s.is_finite() && tau_s > 0.0) {
        return Err(AnalysisError::NonPositiveInput {
            name: "tau_s",
            value: tau_s,
        });
    }
    if !(settle_discard_s >= 5.0 * tau_s) {
        return Err(AnalysisError::SettleTooShort {
            settle_s: settle_discard_s,
            min_s: 5.0 * tau_s,
        });
    }
    if field_ts.unit != SeriesUnit::Tesla {
        return Err(AnalysisError::InvalidInput("field series must be in tesla".into()));
    }
    if field_ts.is_empty() || !(field_ts.interval_s > 0.0) {
        return Err(AnalysisError::ScheduleMismatch("field series is empty".into()));
    }

    let edges = schedule.steps();
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); edges.len()];
    for (i, &b) in field_ts.values.iter().enumerate() {
        let t = field_ts.time(i);
        let k = edges.partition_point(|&(start, _)| start < t);
        if k == 0 {
            continue;
        }
        let k = k - 1;
        if t > edges[k].0 + settle_discard_s {
            buckets[k].push(b);
        }
    }

    let mut steps = Vec::with_capacity(edges.len());
    for (k, samples) in buckets.iter().enumerate() {
        if samples.len() < 2 {
            return Err(AnalysisError::ScheduleMismatch(format!(
                "step {k} starting at {} s has {} samples after the settle discard",
                edges[k].0,
                samples.len()
            )));
        }
        let n = samples.len() as f64;
        let first = samples[0];
        let mean = first + samples.iter().map(|b| b - first).sum::<f64>() / n;
        let std = (samples.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let n_eff = n.min(n * field_ts.interval_s / (2.0 * tau_s)).max(1.0);
        steps.push(StepStats {
            start_s: edges[k].0,
            expected_t: edges[k].1,
            mean_t: mean,
            std_t: std,
            mean_ci_t: Z_95 * std / n_eff.sqrt(),
            n_samples: samples.len(),
        });
    }

    let pooled = (steps.iter().map(|s| s.std_t * s.std_t).sum::<f64>() / steps.len() as f64).sqrt();
    Ok(StepReport {
        steps,
        pooled_sigma_t: pooled,
        tau_s,
        settle_discard_s,
        sensitivity_t_rthz: pooled * tau_s.sqrt(),
        sensitivity_neb_t_rthz: pooled * (2.0 * tau_s).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn series(schedule: &FieldTimeline, duration: f64, rate: f64, noise: f64, seed: u64) -> TimeSeries {
        let dt = 1.0 / rate;
        let n = (duration * rate).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        TimeSeries {
            start_s: dt,
            interval_s: dt,
            values: (0..n)
                .map(|i| {
                    let t = dt * (i + 1) as f64;
                    let k = schedule.steps().partition_point(|&(s, _)| s < t) - 1;
                    schedule.steps()[k].1 + noise * normal.sample(&mut rng)
                })
                .collect(),
            unit: SeriesUnit::Tesla,
        }
    }

    #[test]
    fn noiseless_staircase() {
        let sched = FieldTimeline::staircase(1e-3, 500e-9, 120.0, 4).unwrap();
        let ts = series(&sched, 480.0, 10.0, 0.0, 0);
        let r = analyze_steps(&ts, &sched, 0.5, 10.0).unwrap();
        assert_eq!(r.steps.len(), 4);
        assert_eq!(r.pooled_sigma_t, 0.0);
        for (s, &(_, b)) in r.steps.iter().zip(sched.steps()) {
            assert_eq!(s.mean_t, b);
            assert!((1099..=1101).contains(&s.n_samples), "{}", s.n_samples);
        }
    }

    #[test]
    fn white_noise_sensitivity() {
        let sched = FieldTimeline::staircase(1e-3, 500e-9, 120.0, 10).unwrap();
        let ts = series(&sched, 1200.0, 10.0, 70e-9, 3);
        let r = analyze_steps(&ts, &sched, 0.5, 10.0).unwrap();
        // 70 nT * sqrt(0.5 s)
        assert!((r.sensitivity_t_rthz * 1e9 - 49.5).abs() < 3.0, "{}", r.sensitivity_t_rthz);
        assert!((r.sensitivity_neb_t_rthz / r.sensitivity_t_rthz - 2f64.sqrt()).abs() < 1e-12);
        for d in r.step_differences() {
            assert!((d - 500e-9).abs() < 20e-9);
        }
    }

    #[test]
    fn errors() {
        let sched = FieldTimeline::staircase(0.0, 1e-7, 10.0, 3).unwrap();
        let ts = series(&sched, 20.0, 10.0, 0.0, 0);
        assert!(matches!(
            analyze_steps(&ts, &sched, 0.5, 2.0),
            Err(AnalysisError::SettleTooShort { .. })
        ));
        assert!(matches!(
            analyze_steps(&ts, &sched, 0.5, 3.0),
            Err(AnalysisError::ScheduleMismatch(_))
        ));
        let volts = TimeSeries {
            unit: SeriesUnit::Volts,
            ..ts
        };
        assert!(analyze_steps(&volts, &sched, 0.5, 3.0).is_err());
    }
}
