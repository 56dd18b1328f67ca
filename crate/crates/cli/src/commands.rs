//! Subcommand implementations. Every artifact is a JSON envelope holding the
//! command name, the root seed, the resolved config and the result.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use olma_core::analysis::causal_matrix;
use olma_core::entropy::segment_entropy_scan;
use olma_core::forecaster::{evaluate, LinearForecaster};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::experiments::{ablation, forecast_band_errors, theorem_ensemble, weight_sweep};
use crate::pipeline::{
    average_metrics, fit_and_evaluate, load_frame, prepare, sub_seed, ModelSetup, Stream,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    EntropyScan,
    TheoremCheck,
    Train,
    Eval,
    Bands,
    Causal,
    Ablate,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EntropyScan => "entropy-scan",
            Command::TheoremCheck => "theorem-check",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Bands => "bands",
            Command::Causal => "causal",
            Command::Ablate => "ablate",
            Command::Sweep => "sweep",
        }
    }
}

/// Files staged under a temporary name and renamed into place only when the
/// whole command succeeds; staged files are removed otherwise.
struct Artifacts {
    staged: Vec<(PathBuf, PathBuf)>,
    committed: bool,
}

impl Artifacts {
    fn new() -> Self {
        Self {
            staged: Vec::new(),
            committed: false,
        }
    }

    fn write(&mut self, path: PathBuf, contents: &[u8]) -> Result<()> {
        let mut tmp = path.clone().into_os_string();
        tmp.push(".partial");
        let tmp = PathBuf::from(tmp);
        std::fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
        self.staged.push((tmp, path));
        Ok(())
    }

    fn write_json(&mut self, path: PathBuf, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut done = Vec::with_capacity(self.staged.len());
        for (tmp, path) in &self.staged {
            std::fs::rename(tmp, path)
                .with_context(|| format!("moving {} into place", path.display()))?;
            done.push(path.clone());
        }
        self.committed = true;
        Ok(done)
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.committed {
            for (tmp, _) in &self.staged {
                let _ = std::fs::remove_file(tmp);
            }
        }
    }
}

fn envelope(command: Command, cfg: &RunConfig, result: impl Serialize) -> Result<Value> {
    Ok(json!({
        "command": command.name(),
        "seed": cfg.seed,
        "config": cfg,
        "result": serde_json::to_value(result)?,
    }))
}

/// Runs `command` and returns the artifact paths written.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("creating output directory {}", cfg.out.display()))?;
    let mut artifacts = Artifacts::new();
    match command {
        Command::EntropyScan => entropy_scan(cfg, &mut artifacts),
        Command::TheoremCheck => theorem_check(cfg, &mut artifacts),
        Command::Train => train_command(cfg, &mut artifacts),
        Command::Eval => eval_command(cfg, &mut artifacts),
        Command::Bands => bands_command(cfg, &mut artifacts),
        Command::Causal => causal_command(cfg, &mut artifacts),
        Command::Ablate => ablate_command(cfg, &mut artifacts),
        Command::Sweep => sweep_command(cfg, &mut artifacts),
    }
    .with_context(|| format!("{} failed", command.name()))?;
    artifacts.commit()
}

fn entropy_scan(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let frame = load_frame(cfg).context("stage: load data")?;
    let report = segment_entropy_scan(&frame, cfg.seg_len, cfg.bins, cfg.frequencies)
        .context("stage: entropy scan")?;
    let result = json!({
        "channels": frame.channel_names(),
        "reduced_fraction": report.reduced_fraction(),
        "report": report.to_json_value(),
    });
    out.write_json(
        cfg.out.join("entropy.json"),
        &envelope(Command::EntropyScan, cfg, result)?,
    )
}

fn theorem_check(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let (trials, summary) = theorem_ensemble(
        cfg.theorem_trials,
        cfg.theorem_min_c,
        cfg.theorem_max_c,
        cfg.theorem_grid,
        sub_seed(cfg.seed, Stream::Theorem),
    )
    .context("stage: theorem ensemble")?;
    let result = json!({ "summary": summary, "trials": trials });
    out.write_json(
        cfg.out.join("theorem.json"),
        &envelope(Command::TheoremCheck, cfg, result)?,
    )
}

fn train_command(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let frame = load_frame(cfg).context("stage: load data")?;
    let setup = ModelSetup::from_config(cfg);
    let objective = cfg.loss.objective(cfg.loss_spec);
    let mut rows = Vec::new();
    let mut tests = Vec::new();
    for &h in &cfg.horizons {
        let prep = prepare(&frame, cfg.lookback, h, cfg.split, cfg.stride)
            .with_context(|| format!("stage: prepare windows (horizon {h})"))?;
        let outcome = fit_and_evaluate(&prep, &setup, &objective)
            .with_context(|| format!("stage: train (horizon {h})"))?;
        let path = cfg.checkpoint_path(h);
        out.write(path.clone(), outcome.model.to_json().as_bytes())?;
        tests.push(outcome.test);
        rows.push(json!({
            "horizon": h,
            "checkpoint": path,
            "normalization": prep.stats,
            "val": outcome.val,
            "test": outcome.test,
            "history": outcome.history,
        }));
    }
    let result = json!({
        "objective": objective,
        "horizons": rows,
        "average_test": average_metrics(&tests),
    });
    out.write_json(
        cfg.out.join("metrics.json"),
        &envelope(Command::Train, cfg, result)?,
    )
}

fn load_checkpoint(cfg: &RunConfig, horizon: usize) -> Result<(PathBuf, LinearForecaster)> {
    let path = cfg.checkpoint_path(horizon);
    let model = LinearForecaster::load(&path)
        .with_context(|| format!("stage: load checkpoint {}", path.display()))?;
    if model.horizon() != horizon {
        bail!(
            "checkpoint {} forecasts {} steps, expected horizon {horizon}",
            path.display(),
            model.horizon()
        );
    }
    Ok((path, model))
}

fn eval_command(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let frame = load_frame(cfg).context("stage: load data")?;
    let mut rows = Vec::new();
    let mut tests = Vec::new();
    for &h in &cfg.horizons {
        let (path, model) = load_checkpoint(cfg, h)?;
        let prep = prepare(&frame, model.input_len(), h, cfg.split, cfg.stride)
            .with_context(|| format!("stage: prepare windows (horizon {h})"))?;
        let val = evaluate(&model, &prep.val).context("stage: evaluate")?;
        let test = evaluate(&model, &prep.test).context("stage: evaluate")?;
        tests.push(test);
        rows.push(json!({ "horizon": h, "checkpoint": path, "val": val, "test": test }));
    }
    let result = json!({ "horizons": rows, "average_test": average_metrics(&tests) });
    out.write_json(
        cfg.out.join("metrics.json"),
        &envelope(Command::Eval, cfg, result)?,
    )
}

fn bands_command(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let frame = load_frame(cfg).context("stage: load data")?;
    let mut rows = Vec::new();
    for &h in &cfg.horizons {
        let (path, model) = load_checkpoint(cfg, h)?;
        let prep = prepare(&frame, model.input_len(), h, cfg.split, cfg.stride)
            .with_context(|| format!("stage: prepare windows (horizon {h})"))?;
        let report = forecast_band_errors(&model, &prep.test, cfg.bands)
            .with_context(|| format!("stage: band errors (horizon {h})"))?;
        let csv_name = if cfg.horizons.len() == 1 {
            "bands.csv".to_string()
        } else {
            format!("bands_h{h}.csv")
        };
        let mut csv = Vec::new();
        report.write_csv(&mut csv)?;
        out.write(cfg.out.join(&csv_name), &csv)?;
        rows.push(json!({ "horizon": h, "checkpoint": path, "csv": csv_name, "report": report }));
    }
    let result = json!({ "horizons": rows });
    out.write_json(
        cfg.out.join("bands.json"),
        &envelope(Command::Bands, cfg, result)?,
    )
}

fn pick_channel(names: &[String], choice: Option<&str>) -> Result<usize> {
    match choice {
        None => Ok(names.len() - 1),
        Some(c) => {
            if let Some(i) = names.iter().position(|n| n == c) {
                return Ok(i);
            }
            match c.parse::<usize>() {
                Ok(i) if i < names.len() => Ok(i),
                _ => bail!("unknown channel `{c}` (have {})", names.join(", ")),
            }
        }
    }
}

fn causal_command(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let frame = load_frame(cfg).context("stage: load data")?;
    let idx = pick_channel(frame.channel_names(), cfg.channel.as_deref())?;
    let series = frame.values().column(idx).to_vec();
    let matrix = causal_matrix(&series, cfg.w, cfg.max_offset, cfg.t_vis, cfg.domain)
        .context("stage: causal matrix")?;
    let result = json!({
        "channel": frame.channel_names()[idx],
        "mean_effect": matrix.mean_effect(),
        "matrix": matrix,
    });
    out.write_json(
        cfg.out.join("causal.json"),
        &envelope(Command::Causal, cfg, result)?,
    )
}

fn ablate_command(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let frame = load_frame(cfg).context("stage: load data")?;
    let setup = ModelSetup::from_config(cfg);
    let mut rows = Vec::new();
    for &h in &cfg.horizons {
        let prep = prepare(&frame, cfg.lookback, h, cfg.split, cfg.stride)
            .with_context(|| format!("stage: prepare windows (horizon {h})"))?;
        let variants = ablation(&prep, &setup, &cfg.loss_spec)
            .with_context(|| format!("stage: ablation (horizon {h})"))?;
        rows.push(json!({ "horizon": h, "variants": variants }));
    }
    let result = json!({ "horizons": rows });
    out.write_json(
        cfg.out.join("ablate.json"),
        &envelope(Command::Ablate, cfg, result)?,
    )
}

fn sweep_command(cfg: &RunConfig, out: &mut Artifacts) -> Result<()> {
    let frame = load_frame(cfg).context("stage: load data")?;
    let setup = ModelSetup::from_config(cfg);
    let with_time = cfg.loss == crate::config::LossChoice::OlmaMse;
    let mut rows = Vec::new();
    let mut worst: f64 = 1.0;
    for &h in &cfg.horizons {
        let prep = prepare(&frame, cfg.lookback, h, cfg.split, cfg.stride)
            .with_context(|| format!("stage: prepare windows (horizon {h})"))?;
        let sweep = weight_sweep(
            &prep,
            &setup,
            &cfg.loss_spec,
            &cfg.sweep_proportions,
            with_time,
        )
        .with_context(|| format!("stage: weight sweep (horizon {h})"))?;
        worst = worst.max(sweep.test_mse_ratio);
        rows.push(json!({ "horizon": h, "sweep": sweep }));
    }
    let result = json!({ "horizons": rows, "max_test_mse_ratio": worst });
    out.write_json(
        cfg.out.join("sweep.json"),
        &envelope(Command::Sweep, cfg, result)?,
    )
}

/// Reads back a JSON artifact.
pub fn read_artifact(path: &Path) -> Result<Value> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_selection() {
        let names = vec!["a".to_string(), "OT".to_string()];
        assert_eq!(pick_channel(&names, None).unwrap(), 1);
        assert_eq!(pick_channel(&names, Some("a")).unwrap(), 0);
        assert_eq!(pick_channel(&names, Some("1")).unwrap(), 1);
        assert!(pick_channel(&names, Some("5")).is_err());
    }

    #[test]
    fn failed_command_leaves_no_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            data: Some("synthetic:sines".into()),
            synthetic_steps: 60,
            synthetic_channels: 2,
            lookback: 8,
            horizons: vec![4, 400],
            out: dir.path().to_path_buf(),
            ..RunConfig::default()
        };
        assert!(run(Command::Train, &cfg).is_err());
        let left: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert!(left.is_empty(), "{left:?}");
    }
}
