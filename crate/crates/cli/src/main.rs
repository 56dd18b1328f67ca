use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use olma_cli::commands::{run, Command};
use olma_cli::config::{read_entries, RunConfig};

#[derive(Parser)]
#[command(
    name = "olma",
    version,
    about = "Frequency-domain loss experiments for linear forecasters"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Histogram entropy of raw vs channel-DFT segments (entropy.json)
    EntropyScan(Flags),
    /// Hadamard gap and unitary-path check on random SPD matrices (theorem.json)
    TheoremCheck(Flags),
    /// Train and evaluate per horizon (checkpoint_h<H>.json, metrics.json)
    Train(Flags),
    /// Evaluate saved checkpoints on the test split (metrics.json)
    Eval(Flags),
    /// Spectral band errors of saved checkpoints (bands.json, bands.csv)
    Bands(Flags),
    /// Causal-effect matrix between time offsets (causal.json)
    Causal(Flags),
    /// Train under the four channel/temporal switch settings (ablate.json)
    Ablate(Flags),
    /// Train over channel-loss proportions (sweep.json)
    Sweep(Flags),
}

/// Flags override keys from `--config`.
#[derive(Args)]
struct Flags {
    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV path or `synthetic:<kind>`
    #[arg(long)]
    data: Option<String>,
    /// Forecast length; a comma-separated list runs several
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    lookback: Option<usize>,
    /// mse, mae, olma or olma+mse
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model file for eval and bands
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Any config key, as KEY=VALUE (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Flags {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut entries = match &self.config {
            Some(path) => read_entries(path)?,
            None => BTreeMap::new(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                entries.insert(k.to_string(), v);
            }
        };
        put("data", self.data.clone());
        put("horizon", self.horizon.clone());
        put("lookback", self.lookback.map(|v| v.to_string()));
        put("loss", self.loss.clone());
        put("loss.alpha", self.alpha.map(|v| v.to_string()));
        put("loss.beta", self.beta.map(|v| v.to_string()));
        put("loss.gamma", self.gamma.map(|v| v.to_string()));
        put("bins", self.bins.map(|v| v.to_string()));
        put("bands", self.bands.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put(
            "checkpoint",
            self.checkpoint.as_ref().map(|p| p.display().to_string()),
        );
        RunConfig::from_entries(&entries)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, flags) = match &cli.command {
        Sub::EntropyScan(f) => (Command::EntropyScan, f),
        Sub::TheoremCheck(f) => (Command::TheoremCheck, f),
        Sub::Train(f) => (Command::Train, f),
        Sub::Eval(f) => (Command::Eval, f),
        Sub::Bands(f) => (Command::Bands, f),
        Sub::Causal(f) => (Command::Causal, f),
        Sub::Ablate(f) => (Command::Ablate, f),
        Sub::Sweep(f) => (Command::Sweep, f),
    };
    let result = flags
        .resolve()
        .map_err(|e| e.context("stage: configuration"))
        .and_then(|cfg| run(command, &cfg));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
