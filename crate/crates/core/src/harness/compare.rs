//! Paired-seed comparison of aggregation policies.

use std::path::PathBuf;

use super::config::{ExperimentConfig, NoiseSpec, PolicySpec};
use super::experiment::{calibrate_oracle_bounds, for_replicates, mean_stderr, prepare, summarize, ReplicateOutcome, SummaryRow};
use super::output::{ensure_dir, CsvFile, COMPARISON_HEADER};
use crate::error::Result;
use crate::training::AggregationPolicy;

/// A way of choosing α that can be run against ACFL on the same seeds.
pub trait Baseline: Sync {
    /// Label used in the `method` column.
    fn name(&self) -> String;

    /// Policy for `cfg`, whose `[noise]` is already set to the level under test.
    fn policy(&self, cfg: &ExperimentConfig) -> Result<AggregationPolicy>;
}

/// ACFL: α estimated each iteration from observed norms.
#[derive(Clone, Copy, Debug)]
pub struct Adaptive {
    pub fallback_alpha: f64,
}

impl Baseline for Adaptive {
    fn name(&self) -> String {
        "acfl".into()
    }

    fn policy(&self, _: &ExperimentConfig) -> Result<AggregationPolicy> {
        Ok(AggregationPolicy::AdaptiveEstimated {
            fallback_alpha: self.fallback_alpha,
        })
    }
}

/// Constant α. At 0.5 this is the NA baseline.
#[derive(Clone, Copy, Debug)]
pub struct FixedWeight {
    pub alpha: f64,
}

impl Baseline for FixedWeight {
    fn name(&self) -> String {
        if self.alpha == 0.5 {
            "na".into()
        } else {
            format!("fixed-{}", self.alpha)
        }
    }

    fn policy(&self, _: &ExperimentConfig) -> Result<AggregationPolicy> {
        Ok(AggregationPolicy::Fixed { alpha: self.alpha })
    }
}

/// Closed-form α from known bounds. Missing bounds are calibrated per noise level.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleWeight {
    pub beta_sq: Option<f64>,
    pub c_sq: Option<f64>,
}

impl Baseline for OracleWeight {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn policy(&self, cfg: &ExperimentConfig) -> Result<AggregationPolicy> {
        if let (Some(beta_sq), Some(c_sq)) = (self.beta_sq, self.c_sq) {
            return Ok(AggregationPolicy::AdaptiveOracle { beta_sq, c_sq });
        }
        let b = calibrate_oracle_bounds(cfg)?;
        Ok(AggregationPolicy::AdaptiveOracle {
            beta_sq: self.beta_sq.unwrap_or(b.beta_sq),
            c_sq: self.c_sq.unwrap_or(b.c_sq),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodRuns {
    pub name: String,
    pub policy: AggregationPolicy,
    /// Indexed by seed.
    pub replicates: Vec<ReplicateOutcome>,
    pub mean_curve: Vec<SummaryRow>,
}

impl MethodRuns {
    pub fn final_losses(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.trace.final_loss).collect()
    }

    pub fn mean_initial_loss(&self) -> f64 {
        mean_stderr(&self.replicates.iter().map(|r| r.trace.initial_loss()).collect::<Vec<_>>()).0
    }

    pub fn mean_final_loss(&self) -> f64 {
        mean_stderr(&self.final_losses()).0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelComparison {
    pub sigma_sq: f64,
    /// `methods[0]` is the reference every other method is scored against.
    pub methods: Vec<MethodRuns>,
}

impl LevelComparison {
    /// Fraction of seeds where `methods[0]` ends with loss no larger than `methods[k]`.
    pub fn win_rate(&self, k: usize) -> f64 {
        let (a, b) = (&self.methods[0], &self.methods[k]);
        let n = a.replicates.len();
        if n == 0 {
            return f64::NAN;
        }
        let wins = a
            .replicates
            .iter()
            .zip(&b.replicates)
            .filter(|(x, y)| x.trace.final_loss <= y.trace.final_loss)
            .count();
        wins as f64 / n as f64
    }

    pub fn method(&self, name: &str) -> Option<&MethodRuns> {
        self.methods.iter().find(|m| m.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub levels: Vec<LevelComparison>,
    pub written: Vec<PathBuf>,
}

/// `cfg` with `σ₁² = σ₂² = sigma_sq`.
pub fn at_noise_level(cfg: &ExperimentConfig, sigma_sq: f64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.noise = NoiseSpec {
        sigma1_sq: Some(sigma_sq),
        sigma2_sq: Some(sigma_sq),
        epsilon: None,
    };
    c
}

/// Runs every method on the same dataset, coding noise and straggler masks per seed.
pub fn compare_with(cfg: &ExperimentConfig, noise_levels: &[f64], methods: &[&dyn Baseline]) -> Result<Vec<LevelComparison>> {
    cfg.validate()?;
    if noise_levels.is_empty() {
        return Err(crate::Error::config("compare.noise_levels", "need at least one noise level"));
    }
    if methods.is_empty() {
        return Err(crate::Error::param("methods", "need at least one method"));
    }
    noise_levels
        .iter()
        .map(|&sigma_sq| {
            let level = at_noise_level(cfg, sigma_sq);
            level.validate()?;
            let noise = level.noise_params()?;
            let policies = methods.iter().map(|m| m.policy(&level)).collect::<Result<Vec<_>>>()?;
            let per_seed = for_replicates(level.run.replicates, level.run.parallel, |r| {
                let p = prepare(&level, r)?;
                let gc = p.encode(&level, noise)?;
                policies.iter().map(|&pol| p.train(&level, &gc, noise, pol)).collect::<Result<Vec<_>>>()
            })?;
            let mut columns: Vec<Vec<ReplicateOutcome>> = vec![Vec::with_capacity(per_seed.len()); methods.len()];
            for seed in per_seed {
                for (k, out) in seed.into_iter().enumerate() {
                    columns[k].push(out);
                }
            }
            let methods = methods
                .iter()
                .zip(policies)
                .zip(columns)
                .map(|((m, policy), replicates)| MethodRuns {
                    name: m.name(),
                    policy,
                    mean_curve: summarize(&replicates, level.run.steps),
                    replicates,
                })
                .collect();
            Ok(LevelComparison { sigma_sq, methods })
        })
        .collect()
}

/// ACFL against the fixed-weight baseline of `cfg.compare`. Writes nothing.
pub fn simulate_comparison(cfg: &ExperimentConfig, noise_levels: &[f64]) -> Result<Vec<LevelComparison>> {
    let fallback_alpha = match cfg.policy {
        PolicySpec::AdaptiveEstimated { fallback_alpha } => fallback_alpha,
        _ => 1.0,
    };
    let acfl = Adaptive { fallback_alpha };
    let na = FixedWeight {
        alpha: cfg.compare.baseline_alpha,
    };
    compare_with(cfg, noise_levels, &[&acfl, &na])
}

/// [`simulate_comparison`], then writes `comparison.csv`, `comparison_summary.csv`
/// and `comparison_curves.csv` into `run.output_dir`.
pub fn compare_baselines(cfg: &ExperimentConfig, noise_levels: &[f64]) -> Result<Comparison> {
    let levels = simulate_comparison(cfg, noise_levels)?;
    let written = write_comparison(&cfg.run.output_dir, &levels)?;
    Ok(Comparison { levels, written })
}

pub fn write_comparison(dir: &std::path::Path, levels: &[LevelComparison]) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let rows = dir.join("comparison.csv");
    let mut f = CsvFile::create(&rows, &COMPARISON_HEADER)?;
    for l in levels {
        for m in &l.methods {
            for r in &m.replicates {
                f.row([
                    l.sigma_sq.to_string(),
                    m.name.clone(),
                    r.replicate.to_string(),
                    r.trace.final_loss.to_string(),
                ])?;
            }
        }
    }
    f.finish()?;

    let summary = dir.join("comparison_summary.csv");
    let mut f = CsvFile::create(
        &summary,
        &["noise_sigma_sq", "method", "mean_final_loss", "stderr_final_loss", "reference", "win_rate"],
    )?;
    for l in levels {
        for (k, m) in l.methods.iter().enumerate() {
            let (mean, se) = mean_stderr(&m.final_losses());
            let (reference, win) = if k == 0 {
                (String::new(), String::new())
            } else {
                (l.methods[0].name.clone(), l.win_rate(k).to_string())
            };
            f.row([l.sigma_sq.to_string(), m.name.clone(), mean.to_string(), se.to_string(), reference, win])?;
        }
    }
    f.finish()?;

    let curves = dir.join("comparison_curves.csv");
    let mut f = CsvFile::create(&curves, &["noise_sigma_sq", "method", "t", "mean_loss", "stderr_loss"])?;
    for l in levels {
        for m in &l.methods {
            for r in &m.mean_curve {
                f.row([
                    l.sigma_sq.to_string(),
                    m.name.clone(),
                    r.t.to_string(),
                    r.mean_loss.to_string(),
                    r.stderr_loss.to_string(),
                ])?;
            }
        }
    }
    f.finish()?;
    Ok(vec![rows, summary, curves])
}
