//! Shared experiment plumbing: data loading, the train/val/test protocol,
//! and per-horizon training runs.

use std::path::Path;

use anyhow::{Context, Result};
use olma_core::data::{
    chronological_split, load_csv, make_segment_windows, zscore_fit_apply, NormStats,
    TimeSeriesFrame, WindowSet,
};
use olma_core::forecaster::{
    evaluate, init_model, train, LinearForecaster, Metrics, ModelKind, TrainConfig, TrainHistory,
};
use olma_core::loss::Objective;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{DateColumn, RunConfig};
use crate::synthetic::{self, SyntheticKind};

/// Independent random streams derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Shuffle = 1,
    Synthetic = 2,
    Theorem = 3,
}

/// Seed for one named stream; changing one stream's consumption never shifts
/// another's.
pub fn sub_seed(seed: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

fn detect_date_column(path: &Path) -> Result<Option<usize>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let first = reader.records().next().transpose()?;
    Ok(first
        .and_then(|r| r.get(0).map(|h| h.trim().eq_ignore_ascii_case("date")))
        .and_then(|is_date| is_date.then_some(0)))
}

/// Loads `cfg.data`: a CSV path or `synthetic:<kind>`.
pub fn load_frame(cfg: &RunConfig) -> Result<TimeSeriesFrame> {
    let data = cfg
        .data
        .as_deref()
        .context("no data source: set `data` or pass --data")?;
    if let Some(kind) = data.strip_prefix("synthetic:") {
        let kind: SyntheticKind = kind.parse()?;
        return synthetic::generate(
            kind,
            cfg.synthetic_steps,
            cfg.synthetic_channels,
            sub_seed(cfg.seed, Stream::Synthetic),
        );
    }
    let path = Path::new(data);
    let date_column = match cfg.date_column {
        DateColumn::None => None,
        DateColumn::Index(i) => Some(i),
        DateColumn::Auto if cfg.has_header => detect_date_column(path)?,
        DateColumn::Auto => None,
    };
    load_csv(path, cfg.has_header, date_column).with_context(|| format!("reading {data}"))
}

/// Normalized windows for one `(lookback, horizon)` setting.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub stats: NormStats,
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
}

/// Chronological split, z-score with training statistics, then windows whose
/// labels stay inside each split (inputs may reach back across a boundary).
pub fn prepare(
    frame: &TimeSeriesFrame,
    lookback: usize,
    horizon: usize,
    split: [f64; 3],
    stride: usize,
) -> Result<Prepared> {
    let (train_raw, _, _) = chronological_split(frame, split)?;
    let (stats, mut normed) = zscore_fit_apply(&train_raw, &[frame])?;
    let full = normed.pop().expect("one extra frame");
    let (train_seg, val_seg, test_seg) = chronological_split(&full, split)?;
    let windows = |seg: &TimeSeriesFrame, name: &str| {
        make_segment_windows(&full, seg, lookback, horizon, stride)
            .with_context(|| format!("building {name} windows"))
    };
    Ok(Prepared {
        stats,
        train: windows(&train_seg, "train")?,
        val: windows(&val_seg, "validation")?,
        test: windows(&test_seg, "test")?,
    })
}

/// Model settings shared by every run in an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSetup {
    pub kind: ModelKind,
    pub ma_kernel: usize,
    pub train: TrainConfig,
}

impl ModelSetup {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            kind: cfg.model,
            ma_kernel: cfg.ma_kernel,
            train: TrainConfig {
                seed: sub_seed(cfg.seed, Stream::Shuffle),
                ..cfg.train
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub horizon: usize,
    pub val: Metrics,
    pub test: Metrics,
    pub history: TrainHistory,
    #[serde(skip)]
    pub model: LinearForecaster,
}

/// Trains a fresh model on `prep.train` (early stopping on `prep.val`) and
/// evaluates the best epoch on validation and test windows.
pub fn fit_and_evaluate(
    prep: &Prepared,
    setup: &ModelSetup,
    objective: &Objective,
) -> Result<RunOutcome> {
    let horizon = prep.train.horizon();
    let model = init_model(
        setup.kind,
        prep.train.input_len(),
        horizon,
        prep.train.channels(),
        setup.ma_kernel,
    )?;
    let (model, history) = train(
        &model,
        &prep.train,
        Some(&prep.val),
        objective,
        &setup.train,
    )
    .with_context(|| format!("training (horizon {horizon})"))?;
    Ok(RunOutcome {
        horizon,
        val: evaluate(&model, &prep.val)?,
        test: evaluate(&model, &prep.test)?,
        history,
        model,
    })
}

/// Mean of per-horizon test metrics.
pub fn average_metrics(outcomes: &[Metrics]) -> Metrics {
    let n = outcomes.len().max(1) as f64;
    Metrics {
        mse: outcomes.iter().map(|m| m.mse).sum::<f64>() / n,
        mae: outcomes.iter().map(|m| m.mae).sum::<f64>() / n,
    }
}
