//! Plug-in Shannon entropy estimators and the channel-DFT segment scan.
//!
//! All entropies are in nats. Bins are equal-width over the sample's own
//! `[min, max]` range, so every estimate is invariant under positive affine
//! rescaling of its input. Note that the scan compares `c` one-dimensional
//! histograms (`M` bins each) against `c` two-dimensional ones (`M × M` cells);
//! the 2-D estimates have a larger ceiling, which biases absolute comparisons
//! upward for the transformed view.

use nalgebra::DMatrix;
use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesFrame;
use crate::error::{OlmaError, Result};
use crate::transforms::{fft_forward, Complex64};

/// Default histogram resolution.
pub const DEFAULT_BINS: usize = 16;

fn entropy_from_counts(counts: impl Iterator<Item = usize>, total: usize) -> f64 {
    let n = total as f64;
    let h = counts
        .filter(|&k| k > 0)
        .map(|k| {
            let p = k as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>();
    // A single occupied bin gives -1·ln 1 = -0.0.
    h.max(0.0)
}

/// Bin assignment over `[lo, hi]`; the maximum lands in the last bin and a
/// zero-width range puts everything in bin 0.
struct Binning {
    lo: f64,
    width: f64,
    bins: usize,
}

impl Binning {
    fn fit(values: impl Iterator<Item = f64> + Clone, bins: usize) -> Self {
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        let width = if hi > lo {
            (hi - lo) / bins as f64
        } else {
            0.0
        };
        Self { lo, width, bins }
    }

    fn index(&self, v: f64) -> usize {
        if self.width == 0.0 {
            return 0;
        }
        (((v - self.lo) / self.width) as usize).min(self.bins - 1)
    }
}

fn check_args(len: usize, bins: usize) -> Result<()> {
    if len == 0 {
        return Err(OlmaError::Empty("entropy input"));
    }
    if bins == 0 {
        return Err(OlmaError::InvalidArgument("bin count must be >= 1".into()));
    }
    Ok(())
}

/// Histogram entropy of a real sequence with `bins` equal-width bins.
pub fn histogram_entropy(seq: &[f64], bins: usize) -> Result<f64> {
    check_args(seq.len(), bins)?;
    let binning = Binning::fit(seq.iter().copied(), bins);
    let mut counts = vec![0usize; bins];
    for &v in seq {
        counts[binning.index(v)] += 1;
    }
    Ok(entropy_from_counts(counts.into_iter(), seq.len()))
}

/// Joint entropy over a `bins × bins` grid spanning each axis' own range.
pub fn joint_entropy_2d(pairs: &[(f64, f64)], bins: usize) -> Result<f64> {
    check_args(pairs.len(), bins)?;
    let bx = Binning::fit(pairs.iter().map(|p| p.0), bins);
    let by = Binning::fit(pairs.iter().map(|p| p.1), bins);
    let mut counts = vec![0usize; bins * bins];
    for &(x, y) in pairs {
        counts[bx.index(x) * bins + by.index(y)] += 1;
    }
    Ok(entropy_from_counts(counts.into_iter(), pairs.len()))
}

/// Converts nats to bits.
pub fn nats_to_bits(h: f64) -> f64 {
    h / std::f64::consts::LN_2
}

/// Per-segment entropies before and after a channel-axis DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub segment_starts: Vec<usize>,
    pub original_entropy: Vec<f64>,
    pub transformed_entropy: Vec<f64>,
    pub bins: usize,
    pub segment_length: usize,
    pub unit: EntropyUnit,
    pub frequencies: FrequencySet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyUnit {
    Nats,
    Bits,
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    start: usize,
    original: f64,
    transformed: f64,
}

#[derive(Serialize, Deserialize)]
struct ReportRecord {
    segment_length: usize,
    bins: usize,
    unit: EntropyUnit,
    frequencies: FrequencySet,
    segments: Vec<SegmentRecord>,
}

impl EntropyReport {
    /// Segments whose transformed entropy is strictly below the original.
    pub fn reduced_fraction(&self) -> f64 {
        if self.segment_starts.is_empty() {
            return 0.0;
        }
        let hits = self
            .original_entropy
            .iter()
            .zip(&self.transformed_entropy)
            .filter(|(o, t)| t < o)
            .count();
        hits as f64 / self.segment_starts.len() as f64
    }

    /// Same report expressed in bits.
    pub fn in_bits(&self) -> Self {
        if self.unit == EntropyUnit::Bits {
            return self.clone();
        }
        Self {
            original_entropy: self
                .original_entropy
                .iter()
                .map(|&h| nats_to_bits(h))
                .collect(),
            transformed_entropy: self
                .transformed_entropy
                .iter()
                .map(|&h| nats_to_bits(h))
                .collect(),
            unit: EntropyUnit::Bits,
            ..self.clone()
        }
    }

    /// `{"segment_length", "bins", "unit", "frequencies", "segments": [{"start", "original", "transformed"}]}`
    pub fn to_json_value(&self) -> serde_json::Value {
        let record = ReportRecord {
            segment_length: self.segment_length,
            bins: self.bins,
            unit: self.unit,
            frequencies: self.frequencies,
            segments: self
                .segment_starts
                .iter()
                .zip(&self.original_entropy)
                .zip(&self.transformed_entropy)
                .map(|((&start, &original), &transformed)| SegmentRecord {
                    start,
                    original,
                    transformed,
                })
                .collect(),
        };
        serde_json::to_value(record).expect("report is plain data")
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let record: ReportRecord = serde_json::from_value(value)?;
        Ok(Self {
            segment_starts: record.segments.iter().map(|s| s.start).collect(),
            original_entropy: record.segments.iter().map(|s| s.original).collect(),
            transformed_entropy: record.segments.iter().map(|s| s.transformed).collect(),
            bins: record.bins,
            segment_length: record.segment_length,
            unit: record.unit,
            frequencies: record.frequencies,
        })
    }
}

/// Which channel-DFT indices enter the transformed entropy sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencySet {
    /// `k = 0..=⌊c/2⌋`. For real rows `X[c−k] = conj(X[k])`, so this half holds
    /// exactly the `c` real degrees of freedom of the input.
    #[default]
    OneSided,
    /// All `c` indices; each mirrored pair is counted twice.
    Full,
}

impl FrequencySet {
    fn count(self, channels: usize) -> usize {
        match self {
            FrequencySet::OneSided => channels / 2 + 1,
            FrequencySet::Full => channels,
        }
    }
}

/// Entropies of one `seg_len × c` block: the sum of per-channel histogram
/// entropies, and the sum over frequency indices of the joint entropy of the
/// orthonormal channel-DFT coefficients.
fn segment_entropies(
    block: ndarray::ArrayView2<'_, f64>,
    bins: usize,
    freqs: FrequencySet,
) -> Result<(f64, f64)> {
    let (steps, channels) = block.dim();
    let mut original = 0.0;
    for column in block.axis_iter(Axis(1)) {
        original += histogram_entropy(&column.to_vec(), bins)?;
    }

    let scale = 1.0 / (channels as f64).sqrt();
    let mut spectra = vec![Complex64::new(0.0, 0.0); steps * channels];
    for (t, row) in block.axis_iter(Axis(0)).enumerate() {
        let buf = &mut spectra[t * channels..(t + 1) * channels];
        for (z, &v) in buf.iter_mut().zip(row.iter()) {
            *z = Complex64::new(v, 0.0);
        }
        fft_forward(buf);
        buf.iter_mut().for_each(|z| *z *= scale);
        // Real input: the DC and Nyquist coefficients are real. Clearing their
        // rounding-level imaginary parts keeps the range-adaptive bins from
        // resolving pure round-off.
        buf[0].im = 0.0;
        if channels % 2 == 0 {
            buf[channels / 2].im = 0.0;
        }
    }
    let mut transformed = 0.0;
    for k in 0..freqs.count(channels) {
        let pairs: Vec<(f64, f64)> = (0..steps)
            .map(|t| {
                let z = spectra[t * channels + k];
                (z.re, z.im)
            })
            .collect();
        transformed += joint_entropy_2d(&pairs, bins)?;
    }
    Ok((original, transformed))
}

/// Scans non-overlapping `seg_len` segments (a trailing partial segment is
/// dropped). Segments are evaluated in parallel and gathered in order.
pub fn segment_entropy_scan(
    frame: &TimeSeriesFrame,
    seg_len: usize,
    bins: usize,
    freqs: FrequencySet,
) -> Result<EntropyReport> {
    if seg_len == 0 || bins == 0 {
        return Err(OlmaError::InvalidArgument(
            "segment length and bin count must be >= 1".into(),
        ));
    }
    if frame.len() < seg_len {
        return Err(OlmaError::InvalidArgument(format!(
            "frame of {} steps is shorter than one segment of {seg_len}",
            frame.len()
        )));
    }
    let values = frame.values();
    let count = frame.len() / seg_len;
    let results: Vec<(f64, f64)> = (0..count)
        .into_par_iter()
        .map(|s| {
            let block = values.slice(ndarray::s![s * seg_len..(s + 1) * seg_len, ..]);
            segment_entropies(block, bins, freqs)
        })
        .collect::<Result<_>>()?;
    Ok(EntropyReport {
        segment_starts: (0..count).map(|s| frame.start() + s * seg_len).collect(),
        original_entropy: results.iter().map(|r| r.0).collect(),
        transformed_entropy: results.iter().map(|r| r.1).collect(),
        bins,
        segment_length: seg_len,
        unit: EntropyUnit::Nats,
        frequencies: freqs,
    })
}

/// `Σ_i (l/2)·ln(2πe·σ_i²)` for independent-in-time Gaussian channels with the
/// given per-channel variances.
pub fn gaussian_marginal_entropy_from_variances(variances: &[f64], steps: usize) -> Result<f64> {
    if variances.is_empty() {
        return Err(OlmaError::Empty("variance list"));
    }
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    let mut sum_ln = 0.0;
    for (i, &v) in variances.iter().enumerate() {
        if !(v > 0.0) {
            return Err(OlmaError::InvalidArgument(format!(
                "variance {v} at channel {i} is not positive"
            )));
        }
        sum_ln += (two_pi_e * v).ln();
    }
    Ok(0.5 * steps as f64 * sum_ln)
}

/// Sum of marginal entropies, `(l/2)·ln((2πe)^c·Π_i cov[i][i])`.
pub fn gaussian_marginal_entropy_sum(cov: &DMatrix<f64>, steps: usize) -> Result<f64> {
    if !cov.is_square() {
        return Err(OlmaError::Shape(format!(
            "covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let diag: Vec<f64> = cov.diagonal().iter().copied().collect();
    gaussian_marginal_entropy_from_variances(&diag, steps)
}
