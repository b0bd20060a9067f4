use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::consts::Z_95;
use crate::lineshape::{PeakShape, SyntheticSpectrum};

const MIN_POINTS: usize = 5;

/// Anything with a sampled axis and values that a peak can be fitted to.
pub trait SpectrumData {
    fn axis(&self) -> &[f64];
    fn values(&self) -> &[f64];
}

impl SpectrumData for SyntheticSpectrum {
    fn axis(&self) -> &[f64] {
        &self.frequency_hz
    }

    fn values(&self) -> &[f64] {
        &self.values
    }
}

impl SpectrumData for (&[f64], &[f64]) {
    fn axis(&self) -> &[f64] {
        self.0
    }

    fn values(&self) -> &[f64] {
        self.1
    }
}

/// Hyperfine satellites tied to the main peak: two copies at `±offset_hz`
/// with amplitude `rel_amp` times the main amplitude, same width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Satellites {
    pub offset_hz: f64,
    pub rel_amp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub satellites: Option<Satellites>,
    pub max_iterations: usize,
    /// Convergence threshold on the relative parameter step.
    pub rel_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            satellites: None,
            max_iterations: 200,
            rel_tol: 1e-8,
        }
    }
}

/// Lorentzian-plus-constant fit with 95% confidence half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzFit {
    pub center_hz: f64,
    pub center_ci_hz: f64,
    pub fwhm_hz: f64,
    pub fwhm_ci_hz: f64,
    /// Peak height above the baseline, in the units of the data.
    pub amplitude: f64,
    pub amplitude_ci: f64,
    pub baseline: f64,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LorentzFit {
    pub fn peak(&self) -> PeakShape {
        PeakShape {
            center_hz: self.center_hz,
            fwhm_hz: self.fwhm_hz,
            contrast: self.amplitude,
        }
    }
}

pub fn fit_lorentzian<S: SpectrumData + ?Sized>(data: &S, init: Option<PeakShape>) -> Result<LorentzFit, AnalysisError> {
    fit_lorentzian_with(data, init, &FitOptions::default())
}

/// Levenberg-Marquardt fit of `baseline + amplitude * L(f)` where `L` is a unit
/// Lorentzian (plus optional satellites). Without `init` the starting point is
/// taken from the largest excursion from the median, a half-maximum width
/// scan and the median as baseline.
pub fn fit_lorentzian_with<S: SpectrumData + ?Sized>(
    data: &S,
    init: Option<PeakShape>,
    opts: &FitOptions,
) -> Result<LorentzFit, AnalysisError> {
    let (x, y) = (data.axis(), data.values());
    if x.len() != y.len() {
        return Err(AnalysisError::InvalidInput("axis and values differ in length".into()));
    }
    if x.len() < MIN_POINTS {
        return Err(AnalysisError::TooFewPoints {
            min: MIN_POINTS,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidInput("non-finite sample".into()));
    }

    let (x_min, x_max) = min_max(x);
    if x_max <= x_min {
        return Err(AnalysisError::InvalidInput("axis has zero span".into()));
    }
    let x0 = 0.5 * (x_min + x_max);
    let xs = 0.5 * (x_max - x_min);
    let y0 = median(y);
    let ys = y.iter().map(|v| (v - y0).abs()).fold(0.0, f64::max);
    if ys == 0.0 {
        return Err(AnalysisError::NoPeakFound {
            amplitude: 0.0,
            residual_rms: 0.0,
        });
    }
    let u: Vec<f64> = x.iter().map(|v| (v - x0) / xs).collect();
    let v: Vec<f64> = y.iter().map(|w| (w - y0) / ys).collect();
    let components: Vec<(f64, f64)> = match opts.satellites {
        Some(s) => vec![(0.0, 1.0), (-s.offset_hz / xs, s.rel_amp), (s.offset_hz / xs, s.rel_amp)],
        None => vec![(0.0, 1.0)],
    };
    let model = Model { u: &u, v: &v, components: &components };

    let seed = init.unwrap_or_else(|| auto_seed(x, y, y0));
    let mut theta = Vector4::new((seed.center_hz - x0) / xs, seed.fwhm_hz.abs() / xs, seed.contrast / ys, 0.0);
    if !theta.iter().all(|t| t.is_finite()) || theta[1] <= 0.0 {
        return Err(AnalysisError::InvalidInput("initial peak must be finite with fwhm > 0".into()));
    }

    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let (mut jtj, mut jtr, mut cost) = model.normal_equations(&theta);
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut accepted = None;
        while lambda <= 1e16 {
            let mut a = jtj;
            for i in 0..4 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = theta + step;
            if trial[1] > 0.0 && trial.iter().all(|t| t.is_finite()) {
                let trial_cost = model.cost(&trial);
                if trial_cost <= cost {
                    accepted = Some((trial, step));
                    break;
                }
            }
            lambda *= 10.0;
        }
        let Some((trial, step)) = accepted else {
            // No step reduces the cost: already at the minimum to machine precision.
            converged = true;
            break;
        };
        theta = trial;
        (jtj, jtr, cost) = model.normal_equations(&theta);
        lambda = (lambda * 0.1).max(1e-12);
        if step.norm() <= opts.rel_tol * (theta.norm() + opts.rel_tol) {
            converged = true;
            break;
        }
    }

    let n = x.len();
    let dof = (n - 4) as f64;
    let Some(cov) = jtj.try_inverse() else {
        return Err(AnalysisError::NonConvergence { iterations });
    };
    let s2 = 2.0 * cost / dof;
    let ci = |i: usize, scale: f64| Z_95 * scale * (s2 * cov[(i, i)]).max(0.0).sqrt();
    let fit = LorentzFit {
        center_hz: x0 + xs * theta[0],
        center_ci_hz: ci(0, xs),
        fwhm_hz: xs * theta[1],
        fwhm_ci_hz: ci(1, xs),
        amplitude: ys * theta[2],
        amplitude_ci: ci(2, ys),
        baseline: y0 + ys * theta[3],
        residual_rms: ys * (2.0 * cost / n as f64).sqrt(),
        converged,
        iterations,
    };
    if ![fit.center_hz, fit.fwhm_hz, fit.amplitude, fit.baseline, fit.residual_rms]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(AnalysisError::NonConvergence { iterations });
    }

    let min_step = x.windows(2).map(|w| (w[1] - w[0]).abs()).fold(f64::INFINITY, f64::min);
    // A peak narrower than two grid steps or with an amplitude inside its own
    // confidence interval is a fit to noise.
    let implausible = fit.fwhm_hz < 2.0 * min_step
        || fit.amplitude_ci >= fit.amplitude.abs()
        || fit.fwhm_hz > 4.0 * (x_max - x_min)
        || fit.center_hz < x_min
        || fit.center_hz > x_max;
    if fit.amplitude.abs() < 2.0 * fit.residual_rms || implausible {
        return Err(AnalysisError::NoPeakFound {
            amplitude: fit.amplitude,
            residual_rms: fit.residual_rms,
        });
    }
    Ok(fit)
}

struct Model<'a> {
    u: &'a [f64],
    v: &'a [f64],
    /// `(shift, relative amplitude)` per Lorentzian, in scaled axis units.
    components: &'a [(f64, f64)],
}

impl Model<'_> {
    fn eval(&self, theta: &Vector4<f64>, u: f64) -> (f64, Vector4<f64>) {
        let (c, w, a, b) = (theta[0], theta[1], theta[2], theta[3]);
        let h = 0.5 * w;
        let mut f = b;
        let mut grad = Vector4::new(0.0, 0.0, 0.0, 1.0);
        for &(shift, r) in self.components {
            let d = u - c - shift;
            let l = 1.0 / (1.0 + (d / h).powi(2));
            let l2 = l * l;
            f += a * r * l;
            grad[0] += a * r * l2 * 2.0 * d / (h * h);
            grad[1] += a * r * l2 * d * d / (h * h * h);
            grad[2] += r * l;
        }
        (f, grad)
    }

    fn cost(&self, theta: &Vector4<f64>) -> f64 {
        0.5 * self
            .u
            .iter()
            .zip(self.v)
            .map(|(&u, &v)| (v - self.eval(theta, u).0).powi(2))
            .sum::<f64>()
    }

    fn normal_equations(&self, theta: &Vector4<f64>) -> (Matrix4<f64>, Vector4<f64>, f64) {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        let mut cost = 0.0;
        for (&u, &v) in self.u.iter().zip(self.v) {
            let (f, g) = self.eval(theta, u);
            let r = v - f;
            jtj += g * g.transpose();
            jtr += g * r;
            cost += 0.5 * r * r;
        }
        (jtj, jtr, cost)
    }
}

fn auto_seed(x: &[f64], y: &[f64], baseline: f64) -> PeakShape {
    let (i_peak, _) = y
        .iter()
        .enumerate()
        .map(|(i, v)| (i, (v - baseline).abs()))
        .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
    let amp = y[i_peak] - baseline;
    let above = |i: usize| (y[i] - baseline) / amp > 0.5;
    let crossing = |inner: usize, outer: usize| {
        let (fi, fo) = ((y[inner] - baseline) / amp, (y[outer] - baseline) / amp);
        x[inner] + (x[outer] - x[inner]) * (fi - 0.5) / (fi - fo)
    };
    let mut lo = i_peak;
    while lo > 0 && above(lo - 1) {
        lo -= 1;
    }
    let left = if lo > 0 { crossing(lo, lo - 1) } else { x[0] };
    let mut hi = i_peak;
    while hi + 1 < x.len() && above(hi + 1) {
        hi += 1;
    }
    let right = if hi + 1 < x.len() { crossing(hi, hi + 1) } else { x[x.len() - 1] };
    let span = x[x.len() - 1] - x[0];
    let width = (right - left).abs();
    PeakShape {
        center_hz: x[i_peak],
        fwhm_hz: if width > 0.0 { width } else { (span / x.len() as f64).abs() * 2.0 },
        contrast: amp,
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Median of a nonempty slice.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::{linspace, lorentzian_value};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const TRUTH: PeakShape = PeakShape {
        center_hz: 98e6,
        fwhm_hz: 1e6,
        contrast: 0.01,
    };

    fn synth(noise: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let x = linspace(94e6, 102e6, 201);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
        let y = x
            .iter()
            .map(|&f| 2e-4 + lorentzian_value(&TRUTH, f) + if noise > 0.0 { n.sample(&mut rng) } else { 0.0 })
            .collect();
        (x, y)
    }

    #[test]
    fn noiseless_recovers_exactly() {
        let (x, y) = synth(0.0, 0);
        let fit = fit_lorentzian(&(&x[..], &y[..]), None).unwrap();
        assert!(fit.converged);
        assert!((fit.center_hz / TRUTH.center_hz - 1.0).abs() < 1e-6);
        assert!((fit.fwhm_hz / TRUTH.fwhm_hz - 1.0).abs() < 1e-6);
        assert!((fit.amplitude / TRUTH.contrast - 1.0).abs() < 1e-6);
        assert!((fit.baseline / 2e-4 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_noise_has_no_peak() {
        for seed in 0..20 {
            let x = linspace(94e6, 102e6, 201);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = Normal::new(0.0, 1e-3).unwrap();
            let y: Vec<f64> = x.iter().map(|_| n.sample(&mut rng)).collect();
            let r = fit_lorentzian(&(&x[..], &y[..]), None);
            assert!(matches!(r, Err(AnalysisError::NoPeakFound { .. })), "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn noisy_fit_is_close_and_ci_positive() {
        let (x, y) = synth(TRUTH.contrast / 20.0, 5);
        let fit = fit_lorentzian(&(&x[..], &y[..]), None).unwrap();
        assert!((fit.fwhm_hz / TRUTH.fwhm_hz - 1.0).abs() < 0.1);
        assert!(fit.fwhm_ci_hz > 0.0 && fit.center_ci_hz > 0.0 && fit.amplitude_ci > 0.0);
        assert!((fit.residual_rms / (TRUTH.contrast / 20.0) - 1.0).abs() < 0.2);
    }

    #[test]
    fn explicit_init_and_dips() {
        let (x, y) = synth(0.0, 0);
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        let init = PeakShape {
            center_hz: 97.5e6,
            fwhm_hz: 2e6,
            contrast: -0.005,
        };
        let fit = fit_lorentzian(&(&x[..], &neg[..]), Some(init)).unwrap();
        assert!((fit.amplitude / -TRUTH.contrast - 1.0).abs() < 1e-6);
        assert!((fit.center_hz / TRUTH.center_hz - 1.0).abs() < 1e-9);
    }

    #[test]
    fn satellites_are_fitted_jointly() {
        let x = linspace(80e6, 116e6, 301);
        let sat = Satellites {
            offset_hz: 5e6,
            rel_amp: 0.05,
        };
        let wide = PeakShape { fwhm_hz: 3e6, ..TRUTH };
        let y: Vec<f64> = x
            .iter()
            .map(|&f| {
                lorentzian_value(&wide, f)
                    + sat.rel_amp
                        * (lorentzian_value(&PeakShape { center_hz: wide.center_hz - 5e6, ..wide }, f)
                            + lorentzian_value(&PeakShape { center_hz: wide.center_hz + 5e6, ..wide }, f))
            })
            .collect();
        let opts = FitOptions {
            satellites: Some(sat),
            ..Default::default()
        };
        let fit = fit_lorentzian_with(&(&x[..], &y[..]), None, &opts).unwrap();
        assert!((fit.fwhm_hz / wide.fwhm_hz - 1.0).abs() < 1e-6);
        assert!((fit.amplitude / wide.contrast - 1.0).abs() < 1e-6);
        let plain = fit_lorentzian(&(&x[..], &y[..]), None).unwrap();
        assert!((plain.fwhm_hz / wide.fwhm_hz - 1.0).abs() > 1e-3);
    }

    #[test]
    fn too_few_points() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 1.0, 0.5, 0.0];
        assert!(matches!(
            fit_lorentzian(&(&x[..], &y[..]), None),
            Err(AnalysisError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
