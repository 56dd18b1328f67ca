//! Frequency-band error diagnostics and the double-ML causal-correlation
//! estimator between time offsets.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OlmaError, Result};
use crate::loss::PredictionPair;
use crate::transforms::{fft_forward, Complex64};

pub const DEFAULT_BANDS: usize = 4;
pub const DEFAULT_WINDOW: usize = 2;
pub const DEFAULT_T_VIS: usize = 96;
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Per-band spectral error of a prediction against its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandErrorReport {
    pub n_bands: usize,
    /// Half-open `[start, end)` ranges over bins `0..=l_out/2`.
    pub band_edges: Vec<(usize, usize)>,
    /// Mean `|X̂[k] − X[k]|` over the band's bins, all channels and all windows.
    pub band_error: Vec<f64>,
    pub horizon: usize,
}

/// Splits `bins` into `n` contiguous ranges whose sizes differ by at most one,
/// the larger ones first.
fn partition(bins: usize, n: usize) -> Vec<(usize, usize)> {
    let (size, extra) = (bins / n, bins % n);
    let mut start = 0;
    (0..n)
        .map(|j| {
            let end = start + size + usize::from(j < extra);
            let r = (start, end);
            start = end;
            r
        })
        .collect()
}

pub fn band_errors(pair: &PredictionPair<'_>, n_bands: usize) -> Result<BandErrorReport> {
    let l = pair.horizon();
    let bins = l / 2 + 1;
    if n_bands == 0 || n_bands > bins {
        return Err(OlmaError::InvalidArgument(format!(
            "n_bands must lie in 1..={bins} for horizon {l}, got {n_bands}"
        )));
    }
    // The DFT is linear, so X̂ − X is the spectrum of the difference.
    let diff = pair.difference();
    let mut per_bin = vec![0.0; bins];
    let mut buf = vec![Complex64::default(); l];
    for item in diff.axis_iter(Axis(0)) {
        for col in item.axis_iter(Axis(1)) {
            for (z, &v) in buf.iter_mut().zip(col.iter()) {
                *z = Complex64::new(v, 0.0);
            }
            fft_forward(&mut buf);
            for (acc, z) in per_bin.iter_mut().zip(&buf) {
                *acc += z.norm();
            }
        }
    }
    let series = (pair.batch() * pair.channels()) as f64;
    let band_edges = partition(bins, n_bands);
    let band_error = band_edges
        .iter()
        .map(|&(a, b)| per_bin[a..b].iter().sum::<f64>() / ((b - a) as f64 * series))
        .collect();
    Ok(BandErrorReport {
        n_bands,
        band_edges,
        band_error,
        horizon: l,
    })
}

impl BandErrorReport {
    /// Sum over non-negative bins of `|X̂[k] − X[k]|`, per channel and window.
    pub fn total_per_series(&self) -> f64 {
        self.band_edges
            .iter()
            .zip(&self.band_error)
            .map(|(&(a, b), e)| e * (b - a) as f64)
            .sum()
    }

    /// Two columns, `band_index,error`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["band_index", "error"])?;
        for (j, e) in self.band_error.iter().enumerate() {
            w.write_record([j.to_string(), format!("{e:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Ridge least squares with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Array1<f64>,
    pub intercept: f64,
}

impl OlsFit {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.dot(&self.coefficients) + self.intercept
    }
}

/// Minimizes `‖Xβ + β₀ − y‖² + ridge·‖β‖²`. Centering first makes the
/// intercept exact and keeps the normal equations better conditioned.
pub fn ols_fit(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, ridge: f64) -> Result<OlsFit> {
    let (n, p) = x.dim();
    if n == 0 || p == 0 {
        return Err(OlmaError::Empty("regression design"));
    }
    if y.len() != n {
        return Err(OlmaError::Shape(format!(
            "design has {n} rows, target {}",
            y.len()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(OlmaError::InvalidArgument(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let x_mean = x.mean_axis(Axis(0)).expect("n >= 1");
    let y_mean = y.mean().expect("n >= 1");
    let xc = DMatrix::from_fn(n, p, |i, j| x[[i, j]] - x_mean[j]);
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
    let mut gram = xc.tr_mul(&xc);
    for j in 0..p {
        gram[(j, j)] += ridge;
    }
    let rhs = xc.tr_mul(&yc);
    let beta = if rhs.iter().all(|&v| v == 0.0) {
        DVector::zeros(p)
    } else {
        // Cholesky only fails on negative pivots; round-off turns an exactly
        // singular system into a tiny positive one, so check pivots directly.
        let scale = gram.diagonal().max().max(f64::MIN_POSITIVE);
        let chol = gram.cholesky().ok_or(OlmaError::Singular)?;
        if chol
            .l_dirty()
            .diagonal()
            .iter()
            .any(|&d| d * d < 1e-12 * scale)
        {
            return Err(OlmaError::Singular);
        }
        chol.solve(&rhs)
    };
    let coefficients = Array1::from_iter(beta.iter().copied());
    let intercept = y_mean - x_mean.dot(&coefficients);
    Ok(OlsFit {
        coefficients,
        intercept,
    })
}

fn population_moments(a: &Array1<f64>, b: &Array1<f64>) -> (f64, f64) {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let cov = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    let var = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
    (cov, var)
}

/// Neighbor offsets of the base point: `−w..=w` without 0, and without the
/// treatment and outcome offsets when they fall inside the window.
fn confounder_offsets(w: usize, t: usize, t_prime: usize) -> Vec<isize> {
    let w = w as isize;
    (-w..=w)
        .filter(|&j| j != 0 && j != t as isize && j != t_prime as isize)
        .collect()
}

/// `|Cov(t̃, õ) / Var(t̃)|`, where `t̃` and `õ` are the residuals of
/// `x[i+t]` and `x[i+t']` after regressing each on the neighbors of `x[i]`,
/// over base points `i ∈ [w, N − T_vis)`. Fails when the treatment residual
/// variance falls below `1e-12` of the series variance.
pub fn causal_effect(
    series: &[f64],
    w: usize,
    t: usize,
    t_prime: usize,
    t_vis: usize,
) -> Result<f64> {
    if t >= t_prime {
        return Err(OlmaError::InvalidArgument(format!(
            "treatment offset {t} must precede outcome offset {t_prime}"
        )));
    }
    if w == 0 {
        return Err(OlmaError::InvalidArgument("window w must be >= 1".into()));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(OlmaError::InvalidArgument(
            "series contains non-finite values".into(),
        ));
    }
    let n = series.len();
    let offsets = confounder_offsets(w, t, t_prime);
    let end = n
        .saturating_sub(t_vis)
        .min(n.saturating_sub(t_prime.max(w)));
    let bases: Vec<usize> = (w..end).collect();
    if bases.len() < 2 * (2 * w + 1) {
        return Err(OlmaError::InvalidArgument(format!(
            "series of length {n} yields {} samples, need at least {}",
            bases.len(),
            2 * (2 * w + 1)
        )));
    }

    // The effect is invariant to shifting and rescaling the series; working on
    // the standardized series makes the ridge and variance guard scale-free.
    let mean = series.iter().sum::<f64>() / n as f64;
    let std = (series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    if std == 0.0 {
        return Err(OlmaError::DegenerateTreatment(0.0));
    }
    let series: Vec<f64> = series.iter().map(|v| (v - mean) / std).collect();

    let mut design = ndarray::Array2::zeros((bases.len(), offsets.len()));
    for (r, &i) in bases.iter().enumerate() {
        for (c, &j) in offsets.iter().enumerate() {
            design[[r, c]] = series[(i as isize + j) as usize];
        }
    }
    let treatment = Array1::from_iter(bases.iter().map(|&i| series[i + t]));
    let outcome = Array1::from_iter(bases.iter().map(|&i| series[i + t_prime]));

    let model_t = ols_fit(design.view(), treatment.view(), DEFAULT_RIDGE)?;
    let model_o = ols_fit(design.view(), outcome.view(), DEFAULT_RIDGE)?;
    let t_res = &treatment - &model_t.predict(design.view());
    let o_res = &outcome - &model_o.predict(design.view());

    let (cov, var) = population_moments(&t_res, &o_res);
    if var < 1e-12 {
        return Err(OlmaError::DegenerateTreatment(var));
    }
    Ok((cov / var).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalDomain {
    Time,
    FrequencyReal,
    FrequencyImag,
}

impl std::str::FromStr for CausalDomain {
    type Err = OlmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(CausalDomain::Time),
            "frequency_real" | "real" => Ok(CausalDomain::FrequencyReal),
            "frequency_imag" | "imag" => Ok(CausalDomain::FrequencyImag),
            other => Err(OlmaError::InvalidArgument(format!(
                "unknown domain `{other}`"
            ))),
        }
    }
}

/// Effects for offset pairs `t < t' ≤ max_offset`; `effects[t][t']` is `None`
/// on and below the diagonal and for degenerate pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEffectMatrix {
    pub effects: Vec<Vec<Option<f64>>>,
    pub w: usize,
    pub t_vis: usize,
    pub domain: CausalDomain,
}

impl CausalEffectMatrix {
    /// Mean over the defined cells.
    pub fn mean_effect(&self) -> Option<f64> {
        let vals: Vec<f64> = self.effects.iter().flatten().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Real or imaginary parts of the DFTs of consecutive non-overlapping
/// length-`t_vis` windows, concatenated. A trailing partial window is dropped.
pub fn windowed_spectrum_series(series: &[f64], t_vis: usize, domain: CausalDomain) -> Vec<f64> {
    if domain == CausalDomain::Time || t_vis == 0 {
        return series.to_vec();
    }
    let mut out = Vec::with_capacity(series.len() - series.len() % t_vis);
    let mut buf = vec![Complex64::default(); t_vis];
    for chunk in series.chunks_exact(t_vis) {
        for (z, &v) in buf.iter_mut().zip(chunk) {
            *z = Complex64::new(v, 0.0);
        }
        fft_forward(&mut buf);
        out.extend(buf.iter().map(|z| match domain {
            CausalDomain::FrequencyImag => z.im,
            _ => z.re,
        }));
    }
    out
}

pub fn causal_matrix(
    series: &[f64],
    w: usize,
    max_offset: usize,
    t_vis: usize,
    domain: CausalDomain,
) -> Result<CausalEffectMatrix> {
    if max_offset == 0 || max_offset >= t_vis {
        return Err(OlmaError::InvalidArgument(format!(
            "max_offset must lie in 1..{t_vis}, got {max_offset}"
        )));
    }
    let data = windowed_spectrum_series(series, t_vis, domain);
    let pairs: Vec<(usize, usize)> = (0..=max_offset)
        .flat_map(|t| (t + 1..=max_offset).map(move |tp| (t, tp)))
        .collect();
    let cells: Vec<Result<Option<f64>>> = pairs
        .par_iter()
        .map(|&(t, tp)| match causal_effect(&data, w, t, tp, t_vis) {
            Ok(e) => Ok(Some(e)),
            Err(OlmaError::DegenerateTreatment(_)) | Err(OlmaError::Singular) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();
    let mut effects = vec![vec![None; max_offset + 1]; max_offset + 1];
    for (&(t, tp), cell) in pairs.iter().zip(cells) {
        effects[t][tp] = cell?;
    }
    Ok(CausalEffectMatrix {
        effects,
        w,
        t_vis,
        domain,
    })
}
