//! Synthetic 1 Hz wearable-style series: a mean-reverting random walk on
//! top of a daily cycle, quantized to big-endian `u16` readings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::stream::DataRecord;

pub const DAY_SECONDS: u64 = 86_400;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSeries {
    pub t0_ms: u64,
    pub period_ms: u64,
    /// Resting level of the reading.
    pub base: f64,
    /// Half the peak-to-trough swing of the daily cycle.
    pub amplitude: f64,
    pub step: f64,
    /// Pull of the walk back towards zero per sample.
    pub reversion: f64,
}

impl Default for SyntheticSeries {
    fn default() -> Self {
        SyntheticSeries { t0_ms: 0, period_ms: 1_000, base: 70.0, amplitude: 12.0, step: 0.6, reversion: 0.01 }
    }
}

impl SyntheticSeries {
    pub fn starting_at(t0_ms: u64) -> Self {
        SyntheticSeries { t0_ms, ..Self::default() }
    }

    pub fn generate(&self, samples: u64, seed: u64) -> Vec<DataRecord> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut walk = 0.0f64;
        let day_ms = (DAY_SECONDS * 1_000) as f64;
        (0..samples)
            .map(|i| {
                let ts = self.t0_ms + i * self.period_ms;
                walk += rng.gen_range(-self.step..=self.step) - self.reversion * walk;
                let phase = (ts % (DAY_SECONDS * 1_000)) as f64 / day_ms;
                let cycle = -self.amplitude * (2.0 * std::f64::consts::PI * phase).cos();
                let v = (self.base + cycle + walk).round().clamp(0.0, f64::from(u16::MAX)) as u16;
                DataRecord::new(ts, v.to_be_bytes())
            })
            .collect()
    }
}

/// `days` of 1 Hz samples starting at `t0_ms`.
pub fn synthetic_days(t0_ms: u64, days: u64, seed: u64) -> Vec<DataRecord> {
    SyntheticSeries::starting_at(t0_ms).generate(days * DAY_SECONDS, seed)
}
