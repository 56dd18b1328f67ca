//! DLinear-style linear forecaster trained under any [`Objective`].
//!
//! One `l_out × l_in` matrix (plus bias) is shared by every channel. The
//! decomposed kind splits each input window into a moving-average trend and the
//! seasonal remainder and sums two such maps. Because every loss acts on the
//! model output, the parameter gradient is the output gradient times the
//! transposed input rows, so two matrix products cover forward and backward.

use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, ArrayViewMut1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowSet;
use crate::error::{OlmaError, Result};
use crate::loss::{Objective, PredictionPair};

/// DLinear's moving-average window.
pub const DEFAULT_MA_KERNEL: usize = 25;

/// Windows per chunk when evaluating a whole set.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Plain,
    Decomposed,
}

impl std::str::FromStr for ModelKind {
    type Err = OlmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "linear" => Ok(ModelKind::Plain),
            "decomposed" | "dlinear" => Ok(ModelKind::Decomposed),
            other => Err(OlmaError::InvalidArgument(format!(
                "unknown model kind `{other}`"
            ))),
        }
    }
}

fn check_kernel(kernel: usize, len: usize) -> Result<()> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(OlmaError::InvalidArgument(format!(
            "moving-average kernel must be odd and >= 1, got {kernel}"
        )));
    }
    if len == 0 || kernel > 2 * len - 1 {
        return Err(OlmaError::InvalidArgument(format!(
            "moving-average kernel {kernel} too wide for length {len}"
        )));
    }
    Ok(())
}

/// Centered moving average with edge replication.
fn moving_average_into(x: ArrayView1<'_, f64>, kernel: usize, mut out: ArrayViewMut1<'_, f64>) {
    let l = x.len() as isize;
    let half = (kernel / 2) as isize;
    for t in 0..l {
        let mut acc = 0.0;
        for j in -half..=half {
            acc += x[(t + j).clamp(0, l - 1) as usize];
        }
        out[t as usize] = acc / kernel as f64;
    }
}

/// Splits `x` (`l × c`) column-wise into `(trend, seasonal)` with
/// `seasonal = x − trend`.
pub fn moving_average_decompose(
    x: ArrayView2<'_, f64>,
    kernel: usize,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_kernel(kernel, x.nrows())?;
    let mut trend = Array2::zeros(x.raw_dim());
    for (col, out) in x.axis_iter(Axis(1)).zip(trend.axis_iter_mut(Axis(1))) {
        moving_average_into(col, kernel, out);
    }
    let seasonal = &x - &trend;
    Ok((trend, seasonal))
}

/// `B × l × c` to `(B·c) × l`, row `b·c + i` holding channel `i` of window `b`.
fn to_rows(x: ArrayView3<'_, f64>) -> Array2<f64> {
    let (b, l, c) = x.dim();
    x.permuted_axes([0, 2, 1])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b * c, l))
        .expect("standard layout")
}

fn from_rows(m: Array2<f64>, b: usize, c: usize) -> Array3<f64> {
    let l = m.ncols();
    m.into_shape_with_order((b, c, l))
        .expect("row count is b·c")
        .permuted_axes([0, 2, 1])
        .as_standard_layout()
        .into_owned()
}

/// `y = W·x + b` applied to each row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    /// `l_out × l_in`
    pub weights: Array2<f64>,
    /// `l_out`
    pub bias: Array1<f64>,
}

impl LinearMap {
    fn averaging(l_in: usize, l_out: usize) -> Self {
        Self {
            weights: Array2::from_elem((l_out, l_in), 1.0 / l_in as f64),
            bias: Array1::zeros(l_out),
        }
    }

    fn apply(&self, rows: &Array2<f64>) -> Array2<f64> {
        rows.dot(&self.weights.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearForecaster {
    kind: ModelKind,
    l_in: usize,
    l_out: usize,
    channels: usize,
    ma_kernel: usize,
    /// The whole-input map for the plain kind; the seasonal branch otherwise.
    pub seasonal: LinearMap,
    /// Present only for the decomposed kind.
    pub trend: Option<LinearMap>,
}

/// Averaging initialization: every weight `1/l_in`, biases zero. `ma_kernel`
/// is ignored for the plain kind.
pub fn init_model(
    kind: ModelKind,
    l_in: usize,
    l_out: usize,
    channels: usize,
    ma_kernel: usize,
) -> Result<LinearForecaster> {
    if l_in == 0 || l_out == 0 || channels == 0 {
        return Err(OlmaError::InvalidArgument(format!(
            "model dimensions must be >= 1 (l_in={l_in}, l_out={l_out}, c={channels})"
        )));
    }
    let (trend, ma_kernel) = match kind {
        ModelKind::Plain => (None, 1),
        ModelKind::Decomposed => {
            check_kernel(ma_kernel, l_in)?;
            (Some(LinearMap::averaging(l_in, l_out)), ma_kernel)
        }
    };
    Ok(LinearForecaster {
        kind,
        l_in,
        l_out,
        channels,
        ma_kernel,
        seasonal: LinearMap::averaging(l_in, l_out),
        trend,
    })
}

/// Input rows for a model, plus the moving-average operator `A` (`l_in × l_in`)
/// for the decomposed kind. The trend of a row `r` is `A·r`, so the two
/// branches fold into one map `W_s + (W_t − W_s)·A` and each pass needs a
/// single product over the rows.
struct Design {
    rows: Array2<f64>,
    averaging: Option<Array2<f64>>,
    windows: usize,
    channels: usize,
}

impl Design {
    fn rows(&self, windows: &[usize]) -> Design {
        let c = self.channels;
        let idx: Vec<usize> = windows.iter().flat_map(|&w| w * c..(w + 1) * c).collect();
        Design {
            rows: self.rows.select(Axis(0), &idx),
            averaging: self.averaging.clone(),
            windows: windows.len(),
            channels: c,
        }
    }

    fn chunk(&self, from: usize, to: usize) -> Design {
        let c = self.channels;
        Design {
            rows: self.rows.slice(s![from * c..to * c, ..]).to_owned(),
            averaging: self.averaging.clone(),
            windows: to - from,
            channels: c,
        }
    }
}

impl LinearForecaster {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn input_len(&self) -> usize {
        self.l_in
    }

    pub fn horizon(&self) -> usize {
        self.l_out
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// 1 for the plain kind.
    pub fn ma_kernel(&self) -> usize {
        self.ma_kernel
    }

    fn check_inputs(&self, x: ArrayView3<'_, f64>) -> Result<()> {
        let (_, l, c) = x.dim();
        if l != self.l_in || c != self.channels {
            return Err(OlmaError::Shape(format!(
                "input windows {:?} do not match model (l_in={}, c={})",
                x.dim(),
                self.l_in,
                self.channels
            )));
        }
        Ok(())
    }

    fn check_windows(&self, windows: &WindowSet) -> Result<()> {
        self.check_inputs(windows.inputs.view())?;
        if windows.horizon() != self.l_out {
            return Err(OlmaError::Shape(format!(
                "label horizon {} does not match model l_out={}",
                windows.horizon(),
                self.l_out
            )));
        }
        Ok(())
    }

    fn design(&self, x: ArrayView3<'_, f64>) -> Design {
        let (b, _, c) = x.dim();
        let averaging = self.trend.as_ref().map(|_| {
            let mut a = Array2::zeros((self.l_in, self.l_in));
            let mut unit = Array1::zeros(self.l_in);
            for j in 0..self.l_in {
                unit[j] = 1.0;
                moving_average_into(unit.view(), self.ma_kernel, a.column_mut(j));
                unit[j] = 0.0;
            }
            a
        });
        Design {
            rows: to_rows(x),
            averaging,
            windows: b,
            channels: c,
        }
    }

    fn effective_map(&self, averaging: Option<&Array2<f64>>) -> LinearMap {
        match (&self.trend, averaging) {
            (Some(t), Some(a)) => LinearMap {
                weights: &self.seasonal.weights + &(&t.weights - &self.seasonal.weights).dot(a),
                bias: &self.seasonal.bias + &t.bias,
            },
            _ => self.seasonal.clone(),
        }
    }

    fn forward_design(&self, d: &Design) -> Array3<f64> {
        let out = self.effective_map(d.averaging.as_ref()).apply(&d.rows);
        from_rows(out, d.windows, d.channels)
    }

    /// Forecasts for `B × l_in × c` windows.
    pub fn forward(&self, x: ArrayView3<'_, f64>) -> Result<Array3<f64>> {
        self.check_inputs(x)?;
        Ok(self.forward_design(&self.design(x)))
    }

    /// Parameter gradients in [`Self::param_blocks_mut`] order.
    fn backward(&self, d: &Design, grad_out: ArrayView3<'_, f64>) -> Vec<Vec<f64>> {
        let g = to_rows(grad_out);
        let full = g.t().dot(&d.rows);
        let bias = g.sum_axis(Axis(0)).to_vec();
        match &d.averaging {
            None => vec![full.into_raw_vec_and_offset().0, bias],
            Some(a) => {
                let trend = full.dot(&a.t());
                let seasonal = &full - &trend;
                vec![
                    seasonal.into_raw_vec_and_offset().0,
                    bias.clone(),
                    trend.into_raw_vec_and_offset().0,
                    bias,
                ]
            }
        }
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks: Vec<&mut [f64]> = vec![
            self.seasonal
                .weights
                .as_slice_mut()
                .expect("standard layout"),
            self.seasonal.bias.as_slice_mut().expect("standard layout"),
        ];
        if let Some(t) = &mut self.trend {
            blocks.push(t.weights.as_slice_mut().expect("standard layout"));
            blocks.push(t.bias.as_slice_mut().expect("standard layout"));
        }
        blocks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = OlmaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(OlmaError::InvalidArgument(format!(
                "unknown optimizer `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub moment_decays: (f64, f64),
    pub adam_eps: f64,
    /// Learning rate multiplier applied after every epoch.
    pub lr_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 32,
            patience: 3,
            seed: 0,
            optimizer: Optimizer::Adam,
            moment_decays: (0.9, 0.999),
            adam_eps: 1e-8,
            lr_decay: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(OlmaError::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be >= 1".into());
        }
        let (b1, b2) = self.moment_decays;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return bad(format!(
                "moment decays must lie in [0, 1), got ({b1}, {b2})"
            ));
        }
        if !(self.adam_eps > 0.0) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("adam eps must be > 0 and lr decay in (0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_train_loss: Vec<f64>,
    pub epoch_val_loss: Vec<f64>,
    /// Index into the loss lists of the lowest validation loss.
    pub best_epoch: usize,
}

struct OptimizerState {
    cfg: TrainConfig,
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    fn new(cfg: &TrainConfig, model: &mut LinearForecaster) -> Self {
        let sizes: Vec<usize> = model.param_blocks_mut().iter().map(|b| b.len()).collect();
        Self {
            cfg: *cfg,
            lr: cfg.learning_rate,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn apply(&mut self, model: &mut LinearForecaster, grads: &[Vec<f64>]) {
        self.step += 1;
        let (b1, b2) = self.cfg.moment_decays;
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (k, block) in model.param_blocks_mut().into_iter().enumerate() {
            let g = &grads[k];
            match self.cfg.optimizer {
                Optimizer::Sgd => {
                    for (p, &gi) in block.iter_mut().zip(g) {
                        *p -= self.lr * gi;
                    }
                }
                Optimizer::Adam => {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for i in 0..block.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        block[i] -= self.lr * m_hat / (v_hat.sqrt() + self.cfg.adam_eps);
                    }
                }
            }
        }
    }
}

/// Objective over a whole prepared set, as the window-weighted mean of
/// chunk values (every objective is a mean over windows).
fn objective_over(
    model: &LinearForecaster,
    design: &Design,
    labels: &Array3<f64>,
    objective: &Objective,
) -> Result<f64> {
    let n = design.windows;
    let mut acc = 0.0;
    let mut from = 0;
    while from < n {
        let to = (from + EVAL_CHUNK).min(n);
        let pred = model.forward_design(&design.chunk(from, to));
        if pred.iter().any(|v| !v.is_finite()) {
            return Ok(f64::NAN);
        }
        let lab = labels.slice(s![from..to, .., ..]);
        let pair = PredictionPair::new(pred.view(), lab)?;
        acc += objective.value(&pair)? * (to - from) as f64;
        from = to;
    }
    Ok(acc / n as f64)
}

/// Mini-batch training with early stopping on `val` (or on the training loss
/// when `val` is `None`). Returns the weights of the best epoch.
pub fn train(
    model: &LinearForecaster,
    train_windows: &WindowSet,
    val_windows: Option<&WindowSet>,
    objective: &Objective,
    cfg: &TrainConfig,
) -> Result<(LinearForecaster, TrainHistory)> {
    cfg.validate()?;
    objective.validate()?;
    if train_windows.is_empty() {
        return Err(OlmaError::Empty("training windows"));
    }
    model.check_windows(train_windows)?;
    let val = match val_windows {
        Some(v) if !v.is_empty() => {
            model.check_windows(v)?;
            Some((model.design(v.inputs.view()), &v.labels))
        }
        _ => None,
    };

    let design = model.design(train_windows.inputs.view());
    let mut model = model.clone();
    let mut opt = OptimizerState::new(cfg, &mut model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    let mut history = TrainHistory {
        epoch_train_loss: Vec::new(),
        epoch_val_loss: Vec::new(),
        best_epoch: 0,
    };
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let d = design.rows(idx);
            let labels = train_windows.labels.select(Axis(0), idx);
            let pred = model.forward_design(&d);
            if pred.iter().any(|v| !v.is_finite()) {
                return Err(OlmaError::NonFiniteLoss { epoch, batch });
            }
            let pair = PredictionPair::new(pred.view(), labels.view())?;
            let (value, grad) = objective.value_and_gradient(&pair)?;
            if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
                return Err(OlmaError::NonFiniteLoss { epoch, batch });
            }
            let grads = model.backward(&d, grad.view());
            opt.apply(&mut model, &grads);
        }
        opt.lr *= cfg.lr_decay;

        let train_loss = objective_over(&model, &design, &train_windows.labels, objective)?;
        let val_loss = match &val {
            Some((d, labels)) => objective_over(&model, d, labels, objective)?,
            None => train_loss,
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(OlmaError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        history.epoch_train_loss.push(train_loss);
        history.epoch_val_loss.push(val_loss);

        if val_loss < best_val {
            best_val = val_loss;
            best = model.clone();
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

/// Mean squared and absolute error over every label element.
pub fn evaluate(model: &LinearForecaster, windows: &WindowSet) -> Result<Metrics> {
    model.check_windows(windows)?;
    if windows.is_empty() {
        return Err(OlmaError::Empty("evaluation windows"));
    }
    let (mut se, mut ae) = (0.0, 0.0);
    let mut from = 0;
    while from < windows.len() {
        let to = (from + EVAL_CHUNK).min(windows.len());
        let pred = model.forward(windows.inputs.slice(s![from..to, .., ..]))?;
        for (p, y) in pred
            .iter()
            .zip(windows.labels.slice(s![from..to, .., ..]).iter())
        {
            se += (p - y) * (p - y);
            ae += (p - y).abs();
        }
        from = to;
    }
    let n = windows.labels.len() as f64;
    Ok(Metrics {
        mse: se / n,
        mae: ae / n,
    })
}

/// Checkpoint format tag.
pub const CHECKPOINT_FORMAT: &str = "olma-linear-v1";

/// JSON checkpoint: a header followed by row-major weight arrays.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    kind: ModelKind,
    l_in: usize,
    l_out: usize,
    channels: usize,
    ma_kernel: usize,
    seasonal_weights: Vec<f64>,
    seasonal_bias: Vec<f64>,
    trend_weights: Option<Vec<f64>>,
    trend_bias: Option<Vec<f64>>,
}

impl LinearForecaster {
    pub fn to_json(&self) -> String {
        let flat = |a: &Array2<f64>| a.iter().copied().collect::<Vec<_>>();
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: self.kind,
            l_in: self.l_in,
            l_out: self.l_out,
            channels: self.channels,
            ma_kernel: self.ma_kernel,
            seasonal_weights: flat(&self.seasonal.weights),
            seasonal_bias: self.seasonal.bias.to_vec(),
            trend_weights: self.trend.as_ref().map(|t| flat(&t.weights)),
            trend_bias: self.trend.as_ref().map(|t| t.bias.to_vec()),
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(OlmaError::InvalidArgument(format!(
                "unsupported checkpoint format `{}`",
                ck.format
            )));
        }
        let mut model = init_model(ck.kind, ck.l_in, ck.l_out, ck.channels, ck.ma_kernel)?;
        let map = |w: Vec<f64>, b: Vec<f64>| -> Result<LinearMap> {
            let weights = Array2::from_shape_vec((ck.l_out, ck.l_in), w)
                .map_err(|e| OlmaError::Shape(format!("checkpoint weights: {e}")))?;
            if b.len() != ck.l_out {
                return Err(OlmaError::Shape(format!(
                    "checkpoint bias length {}",
                    b.len()
                )));
            }
            Ok(LinearMap {
                weights,
                bias: Array1::from(b),
            })
        };
        model.seasonal = map(ck.seasonal_weights, ck.seasonal_bias)?;
        model.trend = match (ck.kind, ck.trend_weights, ck.trend_bias) {
            (ModelKind::Plain, None, None) => None,
            (ModelKind::Decomposed, Some(w), Some(b)) => Some(map(w, b)?),
            _ => {
                return Err(OlmaError::Shape(
                    "checkpoint trend branch does not match model kind".into(),
                ))
            }
        };
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{LossSpec, TimeLoss};
    use ndarray::array;
    use rand::Rng;

    const MSE: Objective = Objective::Time {
        loss: TimeLoss::Mse,
    };

    /// Inputs from a seeded RNG, labels from a fixed shared linear map.
    fn realizable(
        n: usize,
        l_in: usize,
        l_out: usize,
        c: usize,
        seed: u64,
    ) -> (WindowSet, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array2::from_shape_fn((l_out, l_in), |_| rng.random_range(-0.5..0.5));
        let inputs = Array3::from_shape_fn((n, l_in, c), |_| rng.random_range(-1.0..1.0));
        let mut labels = Array3::zeros((n, l_out, c));
        for b in 0..n {
            for i in 0..c {
                let y = w.dot(&inputs.slice(s![b, .., i]));
                labels.slice_mut(s![b, .., i]).assign(&y);
            }
        }
        (WindowSet::new(inputs, labels, (0..n).collect()).unwrap(), w)
    }

    #[test]
    fn decomposition_examples() {
        let x = array![[0.0], [3.0], [0.0]];
        let (trend, seasonal) = moving_average_decompose(x.view(), 3).unwrap();
        assert_eq!(trend, array![[1.0], [1.0], [1.0]]);
        assert_eq!(seasonal, array![[-1.0], [2.0], [-1.0]]);

        let (trend, seasonal) = moving_average_decompose(x.view(), 1).unwrap();
        assert_eq!(trend, x);
        assert!(seasonal.iter().all(|&v| v == 0.0));

        let constant = Array2::from_elem((6, 2), 4.25);
        let (trend, seasonal) = moving_average_decompose(constant.view(), 5).unwrap();
        assert!(trend.iter().all(|&v| (v - 4.25).abs() < 1e-15));
        assert!(seasonal.iter().all(|&v| v.abs() < 1e-15));

        assert!(moving_average_decompose(x.view(), 2).is_err());
        assert!(moving_average_decompose(x.view(), 7).is_err());
        assert!(moving_average_decompose(x.view(), 5).is_ok());
    }

    #[test]
    fn initialization() {
        let m = init_model(ModelKind::Plain, 2, 1, 3, 4).unwrap();
        assert_eq!(m.seasonal.weights, array![[0.5, 0.5]]);
        assert!(m.trend.is_none());
        assert!(init_model(ModelKind::Decomposed, 4, 2, 1, 4).is_err());
        assert!(init_model(ModelKind::Plain, 0, 2, 1, 1).is_err());

        for kind in [ModelKind::Plain, ModelKind::Decomposed] {
            let m = init_model(kind, 8, 3, 2, 5).unwrap();
            let x = Array3::from_elem((2, 8, 2), -1.75);
            let y = m.forward(x.view()).unwrap();
            assert!(y.iter().all(|&v| (v + 1.75).abs() < 1e-14));
        }
    }

    #[test]
    fn forward_examples() {
        let mut m = init_model(ModelKind::Plain, 4, 2, 2, 1).unwrap();
        let x = Array3::from_shape_fn((3, 4, 2), |(b, t, i)| (b * 10 + t * 2 + i) as f64);
        m.seasonal.weights.fill(0.0);
        assert!(m.forward(x.view()).unwrap().iter().all(|&v| v == 0.0));

        m.seasonal.weights.column_mut(3).fill(1.0);
        let y = m.forward(x.view()).unwrap();
        for b in 0..3 {
            for i in 0..2 {
                for t in 0..2 {
                    assert_eq!(y[[b, t, i]], x[[b, 3, i]]);
                }
            }
        }

        let mut d = init_model(ModelKind::Decomposed, 4, 2, 2, 3).unwrap();
        d.seasonal = m.seasonal.clone();
        d.trend = Some(m.seasonal.clone());
        let yd = d.forward(x.view()).unwrap();
        assert!((&yd - &y).iter().all(|v| v.abs() < 1e-12));

        assert!(m.forward(Array3::zeros((1, 3, 2)).view()).is_err());
    }

    #[test]
    fn plain_forward_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = init_model(ModelKind::Plain, 6, 3, 2, 1).unwrap();
        m.seasonal
            .weights
            .mapv_inplace(|_| rng.random_range(-1.0..1.0));
        let x1 = Array3::from_shape_fn((2, 6, 2), |_| rng.random_range(-1.0..1.0));
        let x2 = Array3::from_shape_fn((2, 6, 2), |_| rng.random_range(-1.0..1.0));
        let (a, b) = (0.7, -2.3);
        let lhs = m.forward((&x1 * a + &x2 * b).view()).unwrap();
        let rhs = m.forward(x1.view()).unwrap() * a + m.forward(x2.view()).unwrap() * b;
        assert!((&lhs - &rhs).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (ws, _) = realizable(5, 6, 4, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut m = init_model(ModelKind::Decomposed, 6, 4, 3, 3).unwrap();
        for block in m.param_blocks_mut() {
            for p in block.iter_mut() {
                *p = rng.random_range(-0.5..0.5);
            }
        }
        let obj = Objective::Olma {
            spec: LossSpec::default(),
        };
        let loss = |m: &LinearForecaster| {
            let pred = m.forward(ws.inputs.view()).unwrap();
            obj.value(&PredictionPair::new(pred.view(), ws.labels.view()).unwrap())
                .unwrap()
        };
        let d = m.design(ws.inputs.view());
        let pred = m.forward_design(&d);
        let (_, g) = obj
            .value_and_gradient(&PredictionPair::new(pred.view(), ws.labels.view()).unwrap())
            .unwrap();
        let grads = m.backward(&d, g.view());

        let h = 1e-6;
        let mut max_err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (k, block) in grads.iter().enumerate() {
            for (i, &analytic) in block.iter().enumerate() {
                let orig = m.param_blocks_mut()[k][i];
                m.param_blocks_mut()[k][i] = orig + h;
                let up = loss(&m);
                m.param_blocks_mut()[k][i] = orig - h;
                let down = loss(&m);
                m.param_blocks_mut()[k][i] = orig;
                let fd = (up - down) / (2.0 * h);
                max_err = max_err.max((fd - analytic).abs());
                scale = scale.max(fd.abs());
            }
        }
        assert!(max_err / scale < 1e-4, "{max_err} / {scale}");
    }

    #[test]
    fn realizable_mse_fit() {
        let (ws, w) = realizable(64, 8, 4, 2, 42);
        let model = init_model(ModelKind::Plain, 8, 4, 2, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 16,
            patience: 0,
            ..TrainConfig::default()
        };
        let (fit, hist) = train(&model, &ws, None, &MSE, &cfg).unwrap();
        assert!(
            hist.epoch_train_loss[hist.best_epoch] < 1e-6,
            "{:?}",
            hist.epoch_train_loss.last()
        );
        let max_dev = (&fit.seasonal.weights - &w)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_dev < 1e-2, "{max_dev}");
    }

    #[test]
    fn realizable_olma_fit_matches_generator() {
        let (ws, w) = realizable(64, 8, 4, 2, 42);
        let model = init_model(ModelKind::Plain, 8, 4, 2, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 16,
            patience: 0,
            lr_decay: 0.98,
            ..TrainConfig::default()
        };
        let obj = Objective::Olma {
            spec: LossSpec::default(),
        };
        let (fit, _) = train(&model, &ws, None, &obj, &cfg).unwrap();
        let max_dev = (&fit.seasonal.weights - &w)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_dev < 1e-2, "{max_dev}");
    }

    #[test]
    fn patience_zero_runs_every_epoch() {
        let (ws, _) = realizable(20, 4, 2, 1, 2);
        let model = init_model(ModelKind::Plain, 4, 2, 1, 1).unwrap();
        // Validation on the training set with a tiny step keeps improving, but
        // a constant val set would also run all epochs with patience 0.
        let cfg = TrainConfig {
            epochs: 7,
            patience: 0,
            learning_rate: 1e-3,
            optimizer: Optimizer::Sgd,
            ..TrainConfig::default()
        };
        let (_, hist) = train(&model, &ws, Some(&ws), &MSE, &cfg).unwrap();
        assert_eq!(hist.epoch_train_loss.len(), 7);
        assert_eq!(hist.epoch_val_loss.len(), 7);
    }

    #[test]
    fn early_stopping_and_best_epoch() {
        let (ws, _) = realizable(32, 6, 2, 2, 4);
        let (other, _) = realizable(32, 6, 2, 2, 99);
        let model = init_model(ModelKind::Plain, 6, 2, 2, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 100,
            patience: 2,
            ..TrainConfig::default()
        };
        let (best, hist) = train(&model, &ws, Some(&other), &MSE, &cfg).unwrap();
        let min = hist
            .epoch_val_loss
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(hist.epoch_val_loss[hist.best_epoch], min);
        assert!(hist.epoch_val_loss.len() < 100);
        let val_pred = best.forward(other.inputs.view()).unwrap();
        let val = MSE
            .value(&PredictionPair::new(val_pred.view(), other.labels.view()).unwrap())
            .unwrap();
        assert_eq!(val, min);
    }

    #[test]
    fn divergence_is_reported() {
        let (ws, _) = realizable(16, 4, 2, 1, 5);
        let model = init_model(ModelKind::Plain, 4, 2, 1, 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e6,
            optimizer: Optimizer::Sgd,
            epochs: 50,
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&model, &ws, None, &MSE, &cfg),
            Err(OlmaError::NonFiniteLoss { .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let (ws, _) = realizable(40, 8, 4, 3, 6);
        let model = init_model(ModelKind::Decomposed, 8, 4, 3, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 17,
            ..TrainConfig::default()
        };
        let obj = Objective::Olma {
            spec: LossSpec::default(),
        };
        let a = train(&model, &ws, Some(&ws), &obj, &cfg).unwrap();
        let b = train(&model, &ws, Some(&ws), &obj, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train(
            &model,
            &ws,
            Some(&ws),
            &obj,
            &TrainConfig { seed: 18, ..cfg },
        )
        .unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn full_batch_gd_monotone_under_mse() {
        let (ws, _) = realizable(30, 6, 3, 2, 12);
        let model = init_model(ModelKind::Decomposed, 6, 3, 2, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 60,
            batch_size: 30,
            patience: 0,
            optimizer: Optimizer::Sgd,
            ..TrainConfig::default()
        };
        let (_, hist) = train(&model, &ws, None, &MSE, &cfg).unwrap();
        for pair in hist.epoch_train_loss.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "{pair:?}");
        }
    }

    #[test]
    fn evaluation_examples() {
        let (ws, w) = realizable(10, 5, 3, 2, 7);
        let mut m = init_model(ModelKind::Plain, 5, 3, 2, 1).unwrap();
        m.seasonal.weights.assign(&w);
        let perfect = evaluate(&m, &ws).unwrap();
        assert!(perfect.mse < 1e-28 && perfect.mae < 1e-14);

        m.seasonal.weights.fill(0.0);
        let ones = WindowSet::new(
            ws.inputs.clone(),
            Array3::ones((10, 3, 2)),
            (0..10).collect(),
        )
        .unwrap();
        assert_eq!(evaluate(&m, &ones).unwrap(), Metrics { mse: 1.0, mae: 1.0 });
    }

    #[test]
    fn persistence_on_random_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let steps: Vec<f64> = (0..20_000)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect::<Vec<f64>>();
        let mut walk = vec![0.0];
        for s in &steps {
            walk.push(walk.last().unwrap() + s);
        }
        let frame = crate::data::TimeSeriesFrame::new(
            Array2::from_shape_vec((walk.len(), 1), walk).unwrap(),
            None,
        )
        .unwrap();
        let ws = crate::data::make_windows(&frame, 4, 1, 1).unwrap();
        let mut m = init_model(ModelKind::Plain, 4, 1, 1, 1).unwrap();
        m.seasonal.weights.fill(0.0);
        m.seasonal.weights[[0, 3]] = 1.0;
        let metrics = evaluate(&m, &ws).unwrap();
        let mean_sq_step = steps.iter().map(|s| s * s).sum::<f64>() / steps.len() as f64;
        assert!(
            (metrics.mse - mean_sq_step).abs() < 0.03,
            "{} vs {mean_sq_step}",
            metrics.mse
        );
        assert!((metrics.mse - 1.0).abs() < 0.05);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (ws, _) = realizable(20, 6, 2, 2, 9);
        for kind in [ModelKind::Plain, ModelKind::Decomposed] {
            let model = init_model(kind, 6, 2, 2, 3).unwrap();
            let cfg = TrainConfig {
                epochs: 3,
                ..TrainConfig::default()
            };
            let (fit, _) = train(&model, &ws, None, &MSE, &cfg).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("model.json");
            fit.save(&path).unwrap();
            assert_eq!(LinearForecaster::load(&path).unwrap(), fit);
        }
        assert!(LinearForecaster::from_json("{\"format\":\"other\"}").is_err());
    }
}
