use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

/// Mean count above which shot noise is drawn from a moment-matched Gaussian.
pub const GAUSSIAN_THRESHOLD: f64 = 1e4;

/// Seeded photon-count generator. Also serves as the shared random stream for
/// the other noise sources of a simulation.
#[derive(Debug, Clone)]
pub struct ShotNoiseSource {
    rng: ChaCha8Rng,
}

impl ShotNoiseSource {
    pub fn new(seed: u64) -> Self {
        ShotNoiseSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Photon counts detected in `dt` at mean rate `rate_hz`.
    pub fn counts(&mut self, rate_hz: f64, dt: f64) -> f64 {
        let mean = rate_hz * dt;
        if mean <= 0.0 {
            0.0
        } else if mean > GAUSSIAN_THRESHOLD {
            mean + mean.sqrt() * self.standard_normal()
        } else {
            Poisson::new(mean)
                .expect("mean is finite and positive")
                .sample(&mut self.rng)
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Single reproducible draw of photon counts.
pub fn sample_shot_noise(rate_hz: f64, dt: f64, seed: u64) -> f64 {
    ShotNoiseSource::new(seed).counts(rate_hz, dt)
}
