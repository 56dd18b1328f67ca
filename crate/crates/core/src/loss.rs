//! Time-domain baselines and the frequency-domain alignment loss.
//!
//! For a prediction/label pair with difference `D = Ŷ − Y` (`l_out × c` per batch
//! item), the alignment loss is a weighted sum of three L1 terms:
//!
//! - channel: `Σ_t Σ_k |DFT_c(D[t, :])[k]|`, the DFT taken across channels;
//! - temporal Fourier: `Σ_i Σ_k |DFT_l(D[:, i])[k]|`;
//! - temporal wavelet: `Σ_i ‖Haar(D[:, i])‖₁` over the concatenated `[cA, cD]`.
//!
//! `|·|` is the complex modulus and every DFT is unnormalized. Each term is
//! summed within a batch item and averaged over the batch. Since every term is
//! an L1 norm of a linear map of `D`, all of them are positively homogeneous
//! and vanish exactly when `Ŷ = Y`.
//!
//! Gradients replace `|z|` with `√(|z|² + ε²)` and pull the per-coefficient
//! subgradient `z/|z|_ε` back through the transform adjoint.

use std::collections::BTreeMap;

use ndarray::{Array3, ArrayView2, ArrayView3, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{OlmaError, Result};
use crate::transforms::{
    fft_adjoint, fft_forward, haar_forward_into, haar_inverse_into, Complex64,
};

/// Prediction and label tensors of identical `B × l_out × c` shape.
#[derive(Debug, Clone, Copy)]
pub struct PredictionPair<'a> {
    prediction: ArrayView3<'a, f64>,
    label: ArrayView3<'a, f64>,
}

impl<'a> PredictionPair<'a> {
    pub fn new(prediction: ArrayView3<'a, f64>, label: ArrayView3<'a, f64>) -> Result<Self> {
        if prediction.dim() != label.dim() {
            return Err(OlmaError::Shape(format!(
                "prediction {:?} vs label {:?}",
                prediction.dim(),
                label.dim()
            )));
        }
        if prediction.is_empty() {
            return Err(OlmaError::Empty("prediction tensor"));
        }
        if prediction
            .iter()
            .chain(label.iter())
            .any(|v| !v.is_finite())
        {
            return Err(OlmaError::InvalidArgument(
                "prediction/label contain non-finite entries".into(),
            ));
        }
        Ok(Self { prediction, label })
    }

    pub fn prediction(&self) -> ArrayView3<'a, f64> {
        self.prediction
    }

    pub fn label(&self) -> ArrayView3<'a, f64> {
        self.label
    }

    pub fn batch(&self) -> usize {
        self.prediction.len_of(Axis(0))
    }

    pub fn horizon(&self) -> usize {
        self.prediction.len_of(Axis(1))
    }

    pub fn channels(&self) -> usize {
        self.prediction.len_of(Axis(2))
    }

    /// `Ŷ − Y`
    pub fn difference(&self) -> Array3<f64> {
        &self.prediction - &self.label
    }
}

/// Element-wise time-domain loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeLoss {
    Mse,
    Mae,
}

impl std::str::FromStr for TimeLoss {
    type Err = OlmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(TimeLoss::Mse),
            "mae" => Ok(TimeLoss::Mae),
            other => Err(OlmaError::InvalidArgument(format!(
                "unknown time loss `{other}`"
            ))),
        }
    }
}

/// Mean over all `B·l_out·c` elements of the squared or absolute error.
pub fn time_domain_loss(pair: &PredictionPair<'_>, kind: TimeLoss) -> f64 {
    let n = pair.prediction.len() as f64;
    let sum: f64 = pair
        .prediction
        .iter()
        .zip(pair.label.iter())
        .map(|(p, y)| match kind {
            TimeLoss::Mse => (p - y) * (p - y),
            TimeLoss::Mae => (p - y).abs(),
        })
        .sum();
    sum / n
}

/// Derivative of [`time_domain_loss`] with respect to the prediction. The MAE
/// subgradient at zero error is 0.
pub fn time_domain_gradient(pair: &PredictionPair<'_>, kind: TimeLoss) -> Array3<f64> {
    let n = pair.prediction.len() as f64;
    let mut grad = pair.difference();
    match kind {
        TimeLoss::Mse => grad.mapv_inplace(|d| 2.0 * d / n),
        TimeLoss::Mae => grad.mapv_inplace(|d| if d == 0.0 { 0.0 } else { d.signum() / n }),
    }
    grad
}

/// Default term weights `(α, β, γ)`.
pub const DEFAULT_WEIGHTS: (f64, f64, f64) = (0.34, 0.33, 0.33);

/// Weights for data where the channel DFT raises entropy: `(0.1, 0.45, 0.45)`.
pub const HIGH_CHANNEL_ENTROPY_WEIGHTS: (f64, f64, f64) = (0.1, 0.45, 0.45);

/// Default modulus smoothing for gradients.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Weights and switches of the alignment loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub include_channel: bool,
    pub include_temporal: bool,
    pub smoothing_eps: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        let (alpha, beta, gamma) = DEFAULT_WEIGHTS;
        Self {
            alpha,
            beta,
            gamma,
            include_channel: true,
            include_temporal: true,
            smoothing_eps: DEFAULT_EPS,
        }
    }
}

impl LossSpec {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let spec = Self {
            alpha,
            beta,
            gamma,
            ..Self::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn high_channel_entropy() -> Self {
        let (alpha, beta, gamma) = HIGH_CHANNEL_ENTROPY_WEIGHTS;
        Self {
            alpha,
            beta,
            gamma,
            ..Self::default()
        }
    }

    /// Channel weight `p`; the remainder is split evenly between the Fourier
    /// and wavelet terms.
    pub fn with_channel_proportion(p: f64) -> Result<Self> {
        Self::new(p, (1.0 - p) / 2.0, (1.0 - p) / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(OlmaError::InvalidArgument(format!(
                    "loss weight {name} = {w} must be finite and non-negative"
                )));
            }
        }
        if self.include_channel && self.include_temporal {
            let sum = self.alpha + self.beta + self.gamma;
            if (sum - 1.0).abs() > 1e-9 {
                return Err(OlmaError::InvalidArgument(format!(
                    "alpha + beta + gamma = {sum}, expected 1"
                )));
            }
        }
        if !(self.smoothing_eps > 0.0) {
            return Err(OlmaError::InvalidArgument(format!(
                "smoothing eps {} must be positive",
                self.smoothing_eps
            )));
        }
        Ok(())
    }

    fn uses_wavelet(&self) -> bool {
        self.include_temporal && self.gamma > 0.0
    }

    /// Applies `loss.*` keys (`alpha`, `beta`, `gamma`, `include_channel`,
    /// `include_temporal`, `eps`). Other keys are ignored; call
    /// [`LossSpec::validate`] afterwards.
    pub fn apply_config(&mut self, entries: &BTreeMap<String, String>) -> Result<()> {
        fn real(key: &str, v: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| OlmaError::InvalidArgument(format!("{key}: `{v}` is not a number")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(OlmaError::InvalidArgument(format!(
                    "{key}: `{v}` is not a flag"
                ))),
            }
        }
        for (key, v) in entries {
            match key.as_str() {
                "loss.alpha" => self.alpha = real(key, v)?,
                "loss.beta" => self.beta = real(key, v)?,
                "loss.gamma" => self.gamma = real(key, v)?,
                "loss.include_channel" => self.include_channel = flag(key, v)?,
                "loss.include_temporal" => self.include_temporal = flag(key, v)?,
                "loss.eps" => self.smoothing_eps = real(key, v)?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// `√(|z|² + ε²)`
#[inline]
fn smoothed(norm_sq: f64, eps: f64) -> f64 {
    (norm_sq + eps * eps).sqrt()
}

/// Reusable buffers for one batch item.
struct Scratch {
    channel: Vec<Complex64>,
    temporal: Vec<Complex64>,
    column: Vec<f64>,
    coeffs: Vec<f64>,
}

impl Scratch {
    fn new(horizon: usize, channels: usize) -> Self {
        Self {
            channel: vec![Complex64::default(); channels],
            temporal: vec![Complex64::default(); horizon],
            column: vec![0.0; horizon],
            coeffs: vec![0.0; horizon],
        }
    }
}

/// `Σ_t Σ_k |DFT(D[t, :])[k]|`; adds `weight·∂/∂D` into `grad` when given.
fn channel_term(
    diff: ArrayView2<'_, f64>,
    scratch: &mut Scratch,
    eps: f64,
    mut grad: Option<(&mut ArrayViewMut2<'_, f64>, f64)>,
) -> f64 {
    let buf = &mut scratch.channel;
    let mut total = 0.0;
    for (t, row) in diff.axis_iter(Axis(0)).enumerate() {
        for (z, &v) in buf.iter_mut().zip(row.iter()) {
            *z = Complex64::new(v, 0.0);
        }
        fft_forward(buf);
        total += buf.iter().map(|z| z.norm()).sum::<f64>();
        if let Some((g, weight)) = grad.as_mut() {
            for z in buf.iter_mut() {
                *z /= smoothed(z.norm_sqr(), eps);
            }
            fft_adjoint(buf);
            for (i, z) in buf.iter().enumerate() {
                g[[t, i]] += *weight * z.re;
            }
        }
    }
    total
}

/// `Σ_i Σ_k |DFT(D[:, i])[k]|` over the temporal axis.
fn fourier_term(
    diff: ArrayView2<'_, f64>,
    scratch: &mut Scratch,
    eps: f64,
    mut grad: Option<(&mut ArrayViewMut2<'_, f64>, f64)>,
) -> f64 {
    let buf = &mut scratch.temporal;
    let mut total = 0.0;
    for (i, col) in diff.axis_iter(Axis(1)).enumerate() {
        for (z, &v) in buf.iter_mut().zip(col.iter()) {
            *z = Complex64::new(v, 0.0);
        }
        fft_forward(buf);
        total += buf.iter().map(|z| z.norm()).sum::<f64>();
        if let Some((g, weight)) = grad.as_mut() {
            for z in buf.iter_mut() {
                *z /= smoothed(z.norm_sqr(), eps);
            }
            fft_adjoint(buf);
            for (t, z) in buf.iter().enumerate() {
                g[[t, i]] += *weight * z.re;
            }
        }
    }
    total
}

/// `Σ_i ‖[cA, cD](D[:, i])‖₁`
fn wavelet_term(
    diff: ArrayView2<'_, f64>,
    scratch: &mut Scratch,
    eps: f64,
    mut grad: Option<(&mut ArrayViewMut2<'_, f64>, f64)>,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, col) in diff.axis_iter(Axis(1)).enumerate() {
        for (dst, &v) in scratch.column.iter_mut().zip(col.iter()) {
            *dst = v;
        }
        haar_forward_into(&scratch.column, &mut scratch.coeffs)?;
        total += scratch.coeffs.iter().map(|c| c.abs()).sum::<f64>();
        if let Some((g, weight)) = grad.as_mut() {
            for c in scratch.coeffs.iter_mut() {
                *c /= smoothed(*c * *c, eps);
            }
            // Haar is orthonormal: its transpose is its inverse.
            haar_inverse_into(&scratch.coeffs, &mut scratch.column)?;
            for (t, &v) in scratch.column.iter().enumerate() {
                g[[t, i]] += *weight * v;
            }
        }
    }
    Ok(total)
}

/// Batch-averaged channel term (unweighted).
pub fn olma_channel_loss(pair: &PredictionPair<'_>) -> f64 {
    let diff = pair.difference();
    let mut scratch = Scratch::new(pair.horizon(), pair.channels());
    let sum: f64 = diff
        .axis_iter(Axis(0))
        .map(|item| channel_term(item, &mut scratch, DEFAULT_EPS, None))
        .sum();
    sum / pair.batch() as f64
}

/// Batch-averaged `(fourier, wavelet)` temporal terms (unweighted). Odd
/// horizons are rejected because the wavelet term needs sample pairs.
pub fn olma_temporal_loss(pair: &PredictionPair<'_>) -> Result<(f64, f64)> {
    if !pair.horizon().is_multiple_of(2) {
        return Err(OlmaError::OddLength(pair.horizon()));
    }
    let diff = pair.difference();
    let mut scratch = Scratch::new(pair.horizon(), pair.channels());
    let (mut fourier, mut wavelet) = (0.0, 0.0);
    for item in diff.axis_iter(Axis(0)) {
        fourier += fourier_term(item, &mut scratch, DEFAULT_EPS, None);
        wavelet += wavelet_term(item, &mut scratch, DEFAULT_EPS, None)?;
    }
    let b = pair.batch() as f64;
    Ok((fourier / b, wavelet / b))
}

/// `α·channel + β·fourier + γ·wavelet` and, optionally, its gradient.
fn olma_eval(
    pair: &PredictionPair<'_>,
    spec: &LossSpec,
    want_grad: bool,
) -> Result<(f64, Option<Array3<f64>>)> {
    spec.validate()?;
    if spec.uses_wavelet() && !pair.horizon().is_multiple_of(2) {
        return Err(OlmaError::OddLength(pair.horizon()));
    }
    let diff = pair.difference();
    let b = pair.batch() as f64;
    let eps = spec.smoothing_eps;
    let mut scratch = Scratch::new(pair.horizon(), pair.channels());
    let mut grad = want_grad.then(|| Array3::<f64>::zeros(diff.raw_dim()));
    let mut total = 0.0;

    for (n, item) in diff.axis_iter(Axis(0)).enumerate() {
        let mut g_item = grad.as_mut().map(|g| g.index_axis_mut(Axis(0), n));
        if spec.include_channel && spec.alpha > 0.0 {
            let w = spec.alpha / b;
            let term = channel_term(item, &mut scratch, eps, g_item.as_mut().map(|g| (g, w)));
            total += spec.alpha * term;
        }
        if spec.include_temporal && spec.beta > 0.0 {
            let w = spec.beta / b;
            let term = fourier_term(item, &mut scratch, eps, g_item.as_mut().map(|g| (g, w)));
            total += spec.beta * term;
        }
        if spec.uses_wavelet() {
            let w = spec.gamma / b;
            let term = wavelet_term(item, &mut scratch, eps, g_item.as_mut().map(|g| (g, w)))?;
            total += spec.gamma * term;
        }
    }
    Ok((total / b, grad))
}

/// Weighted alignment loss; disabled terms contribute 0.
pub fn olma_total(pair: &PredictionPair<'_>, spec: &LossSpec) -> Result<f64> {
    Ok(olma_eval(pair, spec, false)?.0)
}

/// Gradient of the ε-smoothed [`olma_total`] with respect to the prediction.
pub fn olma_gradient(pair: &PredictionPair<'_>, spec: &LossSpec) -> Result<Array3<f64>> {
    Ok(olma_eval(pair, spec, true)?.1.expect("gradient requested"))
}

/// Loss value and gradient in one pass.
pub fn olma_value_and_gradient(
    pair: &PredictionPair<'_>,
    spec: &LossSpec,
) -> Result<(f64, Array3<f64>)> {
    let (v, g) = olma_eval(pair, spec, true)?;
    Ok((v, g.expect("gradient requested")))
}

/// Training objective: a time-domain loss, the alignment loss, or their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Time { loss: TimeLoss },
    Olma { spec: LossSpec },
    OlmaPlusTime { spec: LossSpec, loss: TimeLoss },
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        match self {
            Objective::Time { .. } => Ok(()),
            Objective::Olma { spec } | Objective::OlmaPlusTime { spec, .. } => spec.validate(),
        }
    }

    pub fn value(&self, pair: &PredictionPair<'_>) -> Result<f64> {
        match self {
            Objective::Time { loss } => Ok(time_domain_loss(pair, *loss)),
            Objective::Olma { spec } => olma_total(pair, spec),
            Objective::OlmaPlusTime { spec, loss } => {
                Ok(olma_total(pair, spec)? + time_domain_loss(pair, *loss))
            }
        }
    }

    pub fn value_and_gradient(&self, pair: &PredictionPair<'_>) -> Result<(f64, Array3<f64>)> {
        match self {
            Objective::Time { loss } => Ok((
                time_domain_loss(pair, *loss),
                time_domain_gradient(pair, *loss),
            )),
            Objective::Olma { spec } => olma_value_and_gradient(pair, spec),
            Objective::OlmaPlusTime { spec, loss } => {
                let (v, mut g) = olma_value_and_gradient(pair, spec)?;
                g += &time_domain_gradient(pair, *loss);
                Ok((v + time_domain_loss(pair, *loss), g))
            }
        }
    }
}

/// Sum of squared temporal-DFT moduli of one difference column.
pub fn temporal_spectral_energy(column: &[f64]) -> f64 {
    let mut buf: Vec<Complex64> = column.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    buf.iter().map(|z| z.norm_sqr()).sum()
}
