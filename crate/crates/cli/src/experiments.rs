//! Experiment harnesses behind the `theorem-check`, `ablate`, `sweep` and
//! `bands` commands.

use anyhow::{Context, Result};
use olma_core::analysis::{band_errors, BandErrorReport};
use olma_core::data::WindowSet;
use olma_core::forecaster::LinearForecaster;
use olma_core::loss::{LossSpec, Objective, PredictionPair, TimeLoss};
use olma_core::theorem::{hadamard_gap, random_spd, to_complex, verify_theorem1};
use serde::Serialize;

use crate::pipeline::{fit_and_evaluate, ModelSetup, Prepared, RunOutcome};

#[derive(Debug, Clone, Serialize)]
pub struct TheoremTrial {
    pub trial: usize,
    pub channels: usize,
    pub diag_product: f64,
    pub determinant: f64,
    pub gap: f64,
    pub determinant_below_diag_product: bool,
    pub witness_lambda: Option<f64>,
    /// `|Π diag(λ=1) − det| / det`
    pub end_relative_error: f64,
    /// Largest `|det(λ) − det| / det` along the grid.
    pub max_determinant_drift: f64,
    pub max_offdiag_at_end: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremSummary {
    pub trials: usize,
    pub all_determinant_below_diag_product: bool,
    pub all_witnessed: bool,
    pub max_end_relative_error: f64,
    pub max_determinant_drift: f64,
}

/// Random SPD matrices with channel counts cycling through `min_c..=max_c`;
/// trial `k` uses seed `seed + k`.
pub fn theorem_ensemble(
    trials: usize,
    min_c: usize,
    max_c: usize,
    grid: usize,
    seed: u64,
) -> Result<(Vec<TheoremTrial>, TheoremSummary)> {
    let span = max_c - min_c + 1;
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let c = min_c + trial % span;
        let s = to_complex(&random_spd(c, seed.wrapping_add(trial as u64)));
        let gap = hadamard_gap(&s).with_context(|| format!("trial {trial}: Hadamard gap"))?;
        let rep =
            verify_theorem1(&s, grid).with_context(|| format!("trial {trial}: unitary path"))?;
        let det = rep.determinant;
        let end = *rep.diag_product_at_lambda.last().expect("grid has points");
        let drift = rep
            .determinant_at_lambda
            .iter()
            .map(|d| (d - det).abs() / det)
            .fold(0.0, f64::max);
        rows.push(TheoremTrial {
            trial,
            channels: c,
            diag_product: gap.diag_product,
            determinant: gap.determinant,
            gap: gap.gap,
            determinant_below_diag_product: gap.gap >= 0.0,
            witness_lambda: rep.witness_lambda,
            end_relative_error: (end - det).abs() / det,
            max_determinant_drift: drift,
            max_offdiag_at_end: rep.max_offdiag_at_end,
        });
    }
    let summary = TheoremSummary {
        trials,
        all_determinant_below_diag_product: rows.iter().all(|r| r.determinant_below_diag_product),
        all_witnessed: rows.iter().all(|r| r.witness_lambda.is_some()),
        max_end_relative_error: rows
            .iter()
            .map(|r| r.end_relative_error)
            .fold(0.0, f64::max),
        max_determinant_drift: rows
            .iter()
            .map(|r| r.max_determinant_drift)
            .fold(0.0, f64::max),
    };
    Ok((rows, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub include_channel: bool,
    pub include_temporal: bool,
    /// `mse` when both terms are off.
    pub objective: Objective,
    pub outcome: RunOutcome,
}

/// The four channel/temporal switch combinations. With both terms off the
/// model trains on the time-domain MSE.
pub fn ablation(prep: &Prepared, setup: &ModelSetup, spec: &LossSpec) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(4);
    for (include_channel, include_temporal) in
        [(false, false), (true, false), (false, true), (true, true)]
    {
        let objective = if include_channel || include_temporal {
            Objective::Olma {
                spec: LossSpec {
                    include_channel,
                    include_temporal,
                    ..*spec
                },
            }
        } else {
            Objective::Time {
                loss: TimeLoss::Mse,
            }
        };
        let outcome = fit_and_evaluate(prep, setup, &objective).with_context(|| {
            format!("ablation channel={include_channel} temporal={include_temporal}")
        })?;
        rows.push(AblationRow {
            include_channel,
            include_temporal,
            objective,
            outcome,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub proportion: f64,
    pub spec: LossSpec,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Largest over smallest test MSE across settings.
    pub test_mse_ratio: f64,
}

/// Trains once per channel-loss proportion `p`, with weights
/// `(p, (1−p)/2, (1−p)/2)`. `with_time` adds the time-domain MSE.
pub fn weight_sweep(
    prep: &Prepared,
    setup: &ModelSetup,
    base: &LossSpec,
    proportions: &[f64],
    with_time: bool,
) -> Result<SweepResult> {
    let mut rows = Vec::with_capacity(proportions.len());
    for &p in proportions {
        let spec = LossSpec {
            alpha: p,
            beta: (1.0 - p) / 2.0,
            gamma: (1.0 - p) / 2.0,
            ..*base
        };
        let objective = if with_time {
            Objective::OlmaPlusTime {
                spec,
                loss: TimeLoss::Mse,
            }
        } else {
            Objective::Olma { spec }
        };
        let outcome = fit_and_evaluate(prep, setup, &objective)
            .with_context(|| format!("sweep proportion {p}"))?;
        rows.push(SweepRow {
            proportion: p,
            spec,
            outcome,
        });
    }
    let mses: Vec<f64> = rows.iter().map(|r| r.outcome.test.mse).collect();
    let max = mses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = mses.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(SweepResult {
        rows,
        test_mse_ratio: max / min,
    })
}

/// Spectral error bands of a model's forecasts on `windows`.
pub fn forecast_band_errors(
    model: &LinearForecaster,
    windows: &WindowSet,
    n_bands: usize,
) -> Result<BandErrorReport> {
    let pred = model.forward(windows.inputs.view())?;
    let pair = PredictionPair::new(pred.view(), windows.labels.view())?;
    Ok(band_errors(&pair, n_bands)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct BandComparison {
    pub mse_model: RunOutcome,
    pub olma_model: RunOutcome,
    pub mse_bands: BandErrorReport,
    pub olma_bands: BandErrorReport,
}

/// Trains one MSE model and one OLMA model and measures test band errors.
pub fn band_comparison(
    prep: &Prepared,
    setup: &ModelSetup,
    spec: &LossSpec,
    n_bands: usize,
) -> Result<BandComparison> {
    let mse_model = fit_and_evaluate(
        prep,
        setup,
        &Objective::Time {
            loss: TimeLoss::Mse,
        },
    )?;
    let olma_model = fit_and_evaluate(prep, setup, &Objective::Olma { spec: *spec })?;
    Ok(BandComparison {
        mse_bands: forecast_band_errors(&mse_model.model, &prep.test, n_bands)?,
        olma_bands: forecast_band_errors(&olma_model.model, &prep.test, n_bands)?,
        mse_model,
        olma_model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_theorem_ensemble() {
        let (rows, summary) = theorem_ensemble(10, 2, 4, 21, 5).unwrap();
        assert_eq!(rows.len(), 10);
        assert_eq!(rows[0].channels, 2);
        assert_eq!(rows[4].channels, 3);
        assert!(summary.all_determinant_below_diag_product);
        assert!(summary.all_witnessed);
        assert!(summary.max_end_relative_error < 1e-8);
        assert!(summary.max_determinant_drift < 1e-8);
    }
}
