//! Run configuration: a flat `key = value` file with command-line overrides.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! skipped. Unknown keys are errors. Recognized keys and their defaults:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `data` | none | CSV path, or `synthetic:<kind>` (`sines`, `trend`, `shared_sine`, `ar1`, `noise`) |
//! | `has_header` | `true` | first CSV row holds channel names |
//! | `date_column` | `auto` | `auto` (column 0 if its header is `date`), `none`, or a 0-based index |
//! | `lookback` | `96` | input window `l_in` |
//! | `horizon` | `96` | forecast length(s) `l_out`, comma-separated |
//! | `split` | `0.7,0.1,0.2` | train/val/test ratios |
//! | `stride` | `1` | window stride |
//! | `model` | `decomposed` | `plain` or `decomposed` |
//! | `ma_kernel` | `25` | moving-average kernel of the decomposed model |
//! | `loss` | `olma` | `mse`, `mae`, `olma`, or `olma+mse` |
//! | `loss.alpha`, `loss.beta`, `loss.gamma` | `0.34`, `0.33`, `0.33` | term weights |
//! | `loss.include_channel`, `loss.include_temporal` | `true` | term switches |
//! | `loss.eps` | `1e-12` | gradient smoothing |
//! | `train.lr`, `train.epochs`, `train.batch_size`, `train.patience` | `0.01`, `20`, `32`, `3` | optimization |
//! | `train.optimizer` | `adam` | `adam` or `sgd` |
//! | `train.lr_decay` | `1.0` | per-epoch learning-rate multiplier |
//! | `bins` | `16` | histogram bins |
//! | `seg_len` | `96` | entropy segment length |
//! | `frequencies` | `one_sided` | `one_sided` or `full` channel-frequency set |
//! | `bands` | `4` | frequency bands |
//! | `w`, `t_vis`, `max_offset` | `2`, `96`, `8` | causal window, visible length, largest offset |
//! | `domain` | `time` | `time`, `frequency_real`, `frequency_imag` |
//! | `channel` | last | channel name or 0-based index for `causal` |
//! | `theorem.trials`, `theorem.grid`, `theorem.min_c`, `theorem.max_c` | `200`, `101`, `2`, `8` | ensemble |
//! | `sweep.proportions` | `0.1,0.3,0.5,0.7,0.9` | channel-loss proportions |
//! | `synthetic.steps`, `synthetic.channels` | `4000`, `7` | synthetic data size |
//! | `seed` | `0` | root seed |
//! | `out` | `.` | output directory |
//! | `checkpoint` | `<out>/checkpoint_h<H>.json` | model file for `eval` and `bands` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use olma_core::analysis::{CausalDomain, DEFAULT_BANDS, DEFAULT_T_VIS, DEFAULT_WINDOW};
use olma_core::entropy::{FrequencySet, DEFAULT_BINS};
use olma_core::forecaster::{ModelKind, Optimizer, TrainConfig, DEFAULT_MA_KERNEL};
use olma_core::loss::{LossSpec, Objective, TimeLoss};
use olma_core::theorem::DEFAULT_GRID;
use serde::Serialize;

/// Training objective selected by `loss`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LossChoice {
    #[serde(rename = "mse")]
    Mse,
    #[serde(rename = "mae")]
    Mae,
    #[serde(rename = "olma")]
    Olma,
    #[serde(rename = "olma+mse")]
    OlmaMse,
}

impl std::str::FromStr for LossChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossChoice::Mse),
            "mae" => Ok(LossChoice::Mae),
            "olma" => Ok(LossChoice::Olma),
            "olma+mse" => Ok(LossChoice::OlmaMse),
            other => bail!("unknown loss `{other}` (expected mse, mae, olma, olma+mse)"),
        }
    }
}

impl LossChoice {
    pub fn objective(self, spec: LossSpec) -> Objective {
        match self {
            LossChoice::Mse => Objective::Time {
                loss: TimeLoss::Mse,
            },
            LossChoice::Mae => Objective::Time {
                loss: TimeLoss::Mae,
            },
            LossChoice::Olma => Objective::Olma { spec },
            LossChoice::OlmaMse => Objective::OlmaPlusTime {
                spec,
                loss: TimeLoss::Mse,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DateColumn {
    Auto,
    None,
    Index(usize),
}

impl Serialize for DateColumn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DateColumn::Auto => s.serialize_str("auto"),
            DateColumn::None => s.serialize_str("none"),
            DateColumn::Index(i) => s.serialize_u64(*i as u64),
        }
    }
}

/// Fully resolved settings; serialized verbatim into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data: Option<String>,
    pub has_header: bool,
    pub date_column: DateColumn,
    pub lookback: usize,
    pub horizons: Vec<usize>,
    pub split: [f64; 3],
    pub stride: usize,
    pub model: ModelKind,
    pub ma_kernel: usize,
    pub loss: LossChoice,
    pub loss_spec: LossSpec,
    pub train: TrainConfig,
    pub bins: usize,
    pub seg_len: usize,
    pub frequencies: FrequencySet,
    pub bands: usize,
    pub w: usize,
    pub t_vis: usize,
    pub max_offset: usize,
    pub domain: CausalDomain,
    pub channel: Option<String>,
    pub theorem_trials: usize,
    pub theorem_grid: usize,
    pub theorem_min_c: usize,
    pub theorem_max_c: usize,
    pub sweep_proportions: Vec<f64>,
    pub synthetic_steps: usize,
    pub synthetic_channels: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            has_header: true,
            date_column: DateColumn::Auto,
            lookback: 96,
            horizons: vec![96],
            split: [0.7, 0.1, 0.2],
            stride: 1,
            model: ModelKind::Decomposed,
            ma_kernel: DEFAULT_MA_KERNEL,
            loss: LossChoice::Olma,
            loss_spec: LossSpec::default(),
            train: TrainConfig::default(),
            bins: DEFAULT_BINS,
            seg_len: 96,
            frequencies: FrequencySet::OneSided,
            bands: DEFAULT_BANDS,
            w: DEFAULT_WINDOW,
            t_vis: DEFAULT_T_VIS,
            max_offset: 8,
            domain: CausalDomain::Time,
            channel: None,
            theorem_trials: 200,
            theorem_grid: DEFAULT_GRID,
            theorem_min_c: 2,
            theorem_max_c: 8,
            sweep_proportions: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            synthetic_steps: 4000,
            synthetic_channels: 7,
            seed: 0,
            out: PathBuf::from("."),
            checkpoint: None,
        }
    }
}

/// Parses `key = value` lines into a map; later duplicates win.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            anyhow!(
                "config line {}: expected `key = value`, got `{line}`",
                n + 1
            )
        })?;
        let key = key.trim();
        if key.is_empty() {
            bail!("config line {}: empty key", n + 1);
        }
        entries.insert(key.to_string(), value.trim().to_string());
    }
    Ok(entries)
}

pub fn read_entries(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    parse_entries(&text).with_context(|| format!("parsing config file {}", path.display()))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| anyhow!("{key}: cannot parse `{v}`"))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| num(key, p.trim())).collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => bail!("{key}: `{v}` is not a flag"),
    }
}

impl RunConfig {
    /// Applies `entries` on top of the defaults and validates the result.
    pub fn from_entries(entries: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        let mut loss_keys = BTreeMap::new();
        for (key, v) in entries {
            let k = key.as_str();
            match k {
                "data" => cfg.data = Some(v.clone()),
                "has_header" => cfg.has_header = flag(k, v)?,
                "date_column" => {
                    cfg.date_column = match v.as_str() {
                        "auto" => DateColumn::Auto,
                        "none" => DateColumn::None,
                        _ => DateColumn::Index(num(k, v)?),
                    }
                }
                "lookback" => cfg.lookback = num(k, v)?,
                "horizon" => cfg.horizons = list(k, v)?,
                "split" => {
                    let r: Vec<f64> = list(k, v)?;
                    cfg.split = r
                        .try_into()
                        .map_err(|_| anyhow!("split: expected three ratios"))?;
                }
                "stride" => cfg.stride = num(k, v)?,
                "model" => cfg.model = v.parse()?,
                "ma_kernel" => cfg.ma_kernel = num(k, v)?,
                "loss" => cfg.loss = v.parse()?,
                "loss.alpha"
                | "loss.beta"
                | "loss.gamma"
                | "loss.include_channel"
                | "loss.include_temporal"
                | "loss.eps" => {
                    loss_keys.insert(key.clone(), v.clone());
                }
                "train.lr" => cfg.train.learning_rate = num(k, v)?,
                "train.epochs" => cfg.train.epochs = num(k, v)?,
                "train.batch_size" => cfg.train.batch_size = num(k, v)?,
                "train.patience" => cfg.train.patience = num(k, v)?,
                "train.optimizer" => cfg.train.optimizer = v.parse::<Optimizer>()?,
                "train.lr_decay" => cfg.train.lr_decay = num(k, v)?,
                "bins" => cfg.bins = num(k, v)?,
                "seg_len" => cfg.seg_len = num(k, v)?,
                "frequencies" => {
                    cfg.frequencies = match v.as_str() {
                        "one_sided" => FrequencySet::OneSided,
                        "full" => FrequencySet::Full,
                        _ => bail!("frequencies: expected one_sided or full, got `{v}`"),
                    }
                }
                "bands" => cfg.bands = num(k, v)?,
                "w" => cfg.w = num(k, v)?,
                "t_vis" => cfg.t_vis = num(k, v)?,
                "max_offset" => cfg.max_offset = num(k, v)?,
                "domain" => cfg.domain = v.parse()?,
                "channel" => cfg.channel = Some(v.clone()),
                "theorem.trials" => cfg.theorem_trials = num(k, v)?,
                "theorem.grid" => cfg.theorem_grid = num(k, v)?,
                "theorem.min_c" => cfg.theorem_min_c = num(k, v)?,
                "theorem.max_c" => cfg.theorem_max_c = num(k, v)?,
                "sweep.proportions" => cfg.sweep_proportions = list(k, v)?,
                "synthetic.steps" => cfg.synthetic_steps = num(k, v)?,
                "synthetic.channels" => cfg.synthetic_channels = num(k, v)?,
                "seed" => cfg.seed = num(k, v)?,
                "out" => cfg.out = PathBuf::from(v),
                "checkpoint" => cfg.checkpoint = Some(PathBuf::from(v)),
                _ => bail!("unknown config key `{key}`"),
            }
        }
        cfg.loss_spec.apply_config(&loss_keys)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_spec.validate().context("loss settings")?;
        self.train.validate().context("training settings")?;
        if self.lookback == 0 || self.horizons.is_empty() || self.horizons.contains(&0) {
            bail!("lookback and every horizon must be >= 1");
        }
        if self.stride == 0 || self.bins == 0 || self.seg_len == 0 || self.bands == 0 {
            bail!("stride, bins, seg_len and bands must be >= 1");
        }
        if self.theorem_min_c < 2 || self.theorem_min_c > self.theorem_max_c {
            bail!("theorem channel range must satisfy 2 <= min_c <= max_c");
        }
        if self.theorem_trials == 0 {
            bail!("theorem.trials must be >= 1");
        }
        if self
            .sweep_proportions
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            bail!("sweep proportions must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn checkpoint_path(&self, horizon: usize) -> PathBuf {
        match &self.checkpoint {
            Some(p) if self.horizons.len() == 1 => p.clone(),
            _ => self.out.join(format!("checkpoint_h{horizon}.json")),
        }
    }
}
