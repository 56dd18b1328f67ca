//! Seeded synthetic frames for experiments without a dataset.

use std::f64::consts::TAU;

use anyhow::{bail, Result};
use ndarray::Array2;
use olma_core::data::TimeSeriesFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Sines,
    Trend,
    SharedSine,
    Ar1,
    Noise,
}

impl std::str::FromStr for SyntheticKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sines" => SyntheticKind::Sines,
            "trend" => SyntheticKind::Trend,
            "shared_sine" => SyntheticKind::SharedSine,
            "ar1" => SyntheticKind::Ar1,
            "noise" => SyntheticKind::Noise,
            other => bail!(
                "unknown synthetic kind `{other}` (expected sines, trend, shared_sine, ar1, noise)"
            ),
        })
    }
}

pub fn generate(
    kind: SyntheticKind,
    steps: usize,
    channels: usize,
    seed: u64,
) -> Result<TimeSeriesFrame> {
    match kind {
        SyntheticKind::Sines => sines(steps, channels, seed),
        SyntheticKind::Trend => trend_with_ripple(steps, channels, seed),
        SyntheticKind::SharedSine => shared_sine(steps, channels, 24.0, 0.3, seed),
        SyntheticKind::Ar1 => ar1(steps, channels, 0.8, seed),
        SyntheticKind::Noise => white_noise(steps, channels, seed),
    }
}

fn frame(values: Array2<f64>) -> Result<TimeSeriesFrame> {
    let names = (0..values.ncols()).map(|i| format!("ch{i}")).collect();
    Ok(TimeSeriesFrame::new(values, Some(names))?)
}

/// Periods shared by every channel of [`sines`].
pub const SINE_PERIODS: [f64; 3] = [24.0, 60.0, 9.0];

/// Each channel is an offset plus the three [`SINE_PERIODS`] sinusoids with
/// its own amplitudes and phases, without noise. Every channel lies in one
/// 7-dimensional space closed under time shifts, so one linear map with a
/// lookback of at least 7 forecasts all of them exactly.
pub fn sines(steps: usize, channels: usize, seed: u64) -> Result<TimeSeriesFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((steps, channels));
    for i in 0..channels {
        let offset = rng.random_range(-1.0..1.0);
        let parts: Vec<(f64, f64, f64)> = SINE_PERIODS
            .iter()
            .map(|&p| (rng.random_range(0.5..1.5), p, rng.random_range(0.0..TAU)))
            .collect();
        for t in 0..steps {
            values[[t, i]] = offset
                + parts
                    .iter()
                    .map(|&(a, p, phi)| a * (TAU * t as f64 / p + phi).sin())
                    .sum::<f64>();
        }
    }
    frame(values)
}

/// Strong linear trend, a weak period-4 ripple and Gaussian noise per channel.
/// Over the series each trend rises by 5 to 10 units, against a ripple of
/// amplitude 0.3 and noise of standard deviation 0.2.
pub fn trend_with_ripple(steps: usize, channels: usize, seed: u64) -> Result<TimeSeriesFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.2).expect("valid std");
    let mut values = Array2::zeros((steps, channels));
    for i in 0..channels {
        let rise = rng.random_range(5.0..10.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let slope = rise / steps.max(1) as f64;
        let phi = rng.random_range(0.0..TAU);
        for t in 0..steps {
            values[[t, i]] = slope * t as f64
                + 0.3 * (TAU * t as f64 / 4.0 + phi).sin()
                + noise.sample(&mut rng);
        }
    }
    frame(values)
}

/// One sinusoid shared by all channels plus independent Gaussian noise.
pub fn shared_sine(
    steps: usize,
    channels: usize,
    period: f64,
    noise_std: f64,
    seed: u64,
) -> Result<TimeSeriesFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = rng.random_range(0.0..TAU);
    let mut values = Array2::zeros((steps, channels));
    for t in 0..steps {
        let s = (TAU * t as f64 / period + phi).sin();
        for i in 0..channels {
            let e: f64 = StandardNormal.sample(&mut rng);
            values[[t, i]] = s + noise_std * e;
        }
    }
    frame(values)
}

/// Independent AR(1) channels `x[k+1] = φ·x[k] + e[k+1]`, started at 0.
pub fn ar1(steps: usize, channels: usize, phi: f64, seed: u64) -> Result<TimeSeriesFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((steps, channels));
    for t in 1..steps {
        for i in 0..channels {
            let e: f64 = StandardNormal.sample(&mut rng);
            values[[t, i]] = phi * values[[t - 1, i]] + e;
        }
    }
    frame(values)
}

pub fn white_noise(steps: usize, channels: usize, seed: u64) -> Result<TimeSeriesFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values =
        Array2::from_shape_simple_fn((steps, channels), || StandardNormal.sample(&mut rng));
    frame(values)
}
