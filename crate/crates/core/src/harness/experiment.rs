use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, PolicySpec};
use super::output;
use crate::coding::{encode_dataset, GlobalCodedData, NoiseParams};
use crate::dataset::{generate_with_label_noise, optimum, FederatedDataset, ProblemFacts, W_TRUE_MAX};
use crate::error::Result;
use crate::numerics::{uniform_matrix, Matrix, RngStream};
use crate::training::{hex, train, AggregationPolicy, TrainSpec, TrainingTrace};

/// Stream tags. Replicate `r` of a run with seed `s` uses `(s, tag, [r])`.
pub const DATASET_TAG: &str = "dataset";
pub const CODING_TAG: &str = "coding";
pub const STRAGGLER_TAG: &str = "stragglers";
pub const INIT_TAG: &str = "init";

/// SHA-256 digests of the random inputs a replicate consumed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamDigests {
    pub dataset: String,
    pub coding: String,
    pub masks: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub trace: TrainingTrace,
    pub facts_lambda: f64,
    pub digests: StreamDigests,
}

/// Per-iteration aggregate across replicates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    pub mean_loss: f64,
    pub stderr_loss: f64,
    pub mean_dist_sq: f64,
    pub stderr_dist_sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub policy: AggregationPolicy,
    pub replicates: Vec<ReplicateOutcome>,
    pub summary: Vec<SummaryRow>,
    pub written: Vec<PathBuf>,
}

impl RunResult {
    pub fn mean_final_loss(&self) -> f64 {
        mean(self.replicates.iter().map(|r| r.trace.final_loss))
    }
}

/// What a replicate needs before training: data, its optimum and the starting point.
pub struct Prepared {
    pub replicate: usize,
    pub dataset: FederatedDataset,
    pub facts: ProblemFacts,
    pub w0: Matrix,
}

pub fn prepare(cfg: &ExperimentConfig, replicate: usize) -> Result<Prepared> {
    let seed = cfg.run.master_seed;
    let r = replicate as u64;
    let c = &cfg.dataset;
    let dataset = generate_with_label_noise(
        c.n_devices,
        c.samples_per_device,
        c.d,
        c.o,
        c.label_noise_sd,
        &RngStream::new(seed, DATASET_TAG, &[r]),
    )?;
    let facts = optimum(&dataset)?;
    let w0 = uniform_matrix(&mut RngStream::new(seed, INIT_TAG, &[r]).rng(), c.d, c.o, 0.0, W_TRUE_MAX)?;
    Ok(Prepared {
        replicate,
        dataset,
        facts,
        w0,
    })
}

impl Prepared {
    pub fn encode(&self, cfg: &ExperimentConfig, noise: NoiseParams) -> Result<GlobalCodedData> {
        let stream = RngStream::new(cfg.run.master_seed, CODING_TAG, &[self.replicate as u64]);
        encode_dataset(&self.dataset, noise, &stream)
    }

    pub fn train(
        &self,
        cfg: &ExperimentConfig,
        coded: &GlobalCodedData,
        noise: NoiseParams,
        policy: AggregationPolicy,
    ) -> Result<ReplicateOutcome> {
        let spec = TrainSpec {
            policy,
            straggler: cfg.straggler_model(),
            steps: cfg.run.steps,
            schedule: cfg.lr_schedule(self.facts.lambda),
            noise,
        };
        let stream = RngStream::new(cfg.run.master_seed, STRAGGLER_TAG, &[self.replicate as u64]);
        let trace = train(&self.dataset, coded, &spec, &self.w0, &stream, &self.facts)?;
        let digests = StreamDigests {
            dataset: dataset_digest(&self.dataset),
            coding: coded_digest(coded),
            masks: trace.mask_digest.clone(),
        };
        Ok(ReplicateOutcome {
            replicate: self.replicate,
            trace,
            facts_lambda: self.facts.lambda,
            digests,
        })
    }
}

fn digest_matrices<'a>(ms: impl IntoIterator<Item = &'a Matrix>) -> String {
    let mut h = Sha256::new();
    for m in ms {
        h.update((m.rows() as u64).to_le_bytes());
        h.update((m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())
}

pub fn dataset_digest(ds: &FederatedDataset) -> String {
    digest_matrices(ds.devices().iter().flat_map(|d| [d.x(), d.y()]))
}

pub fn coded_digest(gc: &GlobalCodedData) -> String {
    digest_matrices([&gc.h_x_sum, &gc.h_y_sum])
}

/// Maps `f` over replicates `0..R`, on the rayon pool when `parallel`.
/// Results come back in replicate order either way.
pub(crate) fn for_replicates<T: Send>(
    replicates: usize,
    parallel: bool,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if parallel {
        (0..replicates).into_par_iter().map(&f).collect()
    } else {
        (0..replicates).map(f).collect()
    }
}

/// Oracle bounds `β²`, `C²` derived from calibration runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleBounds {
    pub beta_sq: f64,
    pub c_sq: f64,
    /// True when a run with these bounds never exceeded them.
    pub valid: bool,
    pub rounds: usize,
}

const CALIBRATION_ROUNDS: usize = 8;

/// Heuristic defaults for the oracle policy.
///
/// A dry run with the estimated policy seeds `β² = max ‖Gᵢ‖²` (all devices,
/// all iterations, all replicates) and `C² = max ‖W_t‖²`. The oracle policy is
/// then rerun with those bounds, enlarging them to the observed maxima until
/// the run stays within them.
pub fn calibrate_oracle_bounds(cfg: &ExperimentConfig) -> Result<OracleBounds> {
    let noise = cfg.noise_params()?;
    let prepared = for_replicates(cfg.run.replicates, cfg.run.parallel, |r| {
        let p = prepare(cfg, r)?;
        let gc = p.encode(cfg, noise)?;
        Ok((p, gc))
    })?;
    let observe = |policy: AggregationPolicy| -> Result<(f64, f64)> {
        let maxima = for_replicates(prepared.len(), cfg.run.parallel, |r| {
            let (p, gc) = &prepared[r];
            let out = p.train(cfg, gc, noise, policy)?;
            Ok((out.trace.max_device_grad_sq(), out.trace.max_w_norm_sq()))
        })?;
        Ok(maxima
            .into_iter()
            .fold((0.0f64, 0.0f64), |(b, c), (b2, c2)| (b.max(b2), c.max(c2))))
    };
    let (mut beta_sq, mut c_sq) = observe(AggregationPolicy::AdaptiveEstimated { fallback_alpha: 1.0 })?;
    // keep both strictly positive so the oracle policy validates
    beta_sq = beta_sq.max(f64::MIN_POSITIVE);
    c_sq = c_sq.max(f64::MIN_POSITIVE);
    for round in 1..=CALIBRATION_ROUNDS {
        let (b, c) = observe(AggregationPolicy::AdaptiveOracle { beta_sq, c_sq })?;
        if b <= beta_sq && c <= c_sq {
            return Ok(OracleBounds {
                beta_sq,
                c_sq,
                valid: true,
                rounds: round,
            });
        }
        beta_sq = beta_sq.max(b);
        c_sq = c_sq.max(c);
    }
    Ok(OracleBounds {
        beta_sq,
        c_sq,
        valid: false,
        rounds: CALIBRATION_ROUNDS,
    })
}

/// The training policy for `cfg`, calibrating oracle bounds when they were left out.
pub fn resolve_policy(cfg: &ExperimentConfig) -> Result<AggregationPolicy> {
    if let Some(p) = cfg.resolved_policy() {
        return Ok(p);
    }
    let PolicySpec::AdaptiveOracle { beta_sq, c_sq } = cfg.policy else {
        unreachable!("only the oracle policy can be unresolved")
    };
    let bounds = calibrate_oracle_bounds(cfg)?;
    Ok(AggregationPolicy::AdaptiveOracle {
        beta_sq: beta_sq.unwrap_or(bounds.beta_sq),
        c_sq: c_sq.unwrap_or(bounds.c_sq),
    })
}

/// Runs every replicate of `cfg` and aggregates per iteration. Writes nothing.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let noise = cfg.noise_params()?;
    let policy = resolve_policy(cfg)?;
    let replicates = for_replicates(cfg.run.replicates, cfg.run.parallel, |r| {
        let p = prepare(cfg, r)?;
        let gc = p.encode(cfg, noise)?;
        p.train(cfg, &gc, noise, policy)
    })?;
    let summary = summarize(&replicates, cfg.run.steps);
    Ok(RunResult {
        policy,
        replicates,
        summary,
        written: Vec::new(),
    })
}

/// [`simulate`], then writes `trace.csv` and `summary.csv` into `run.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    let mut result = simulate(cfg)?;
    result.written = write_run(&cfg.run.output_dir, &result)?;
    Ok(result)
}

pub fn write_run(dir: &Path, result: &RunResult) -> Result<Vec<PathBuf>> {
    output::ensure_dir(dir)?;
    let trace = dir.join("trace.csv");
    output::write_trace_csv(&trace, &result.replicates)?;
    let summary = dir.join("summary.csv");
    output::write_summary_csv(&summary, &result.summary)?;
    Ok(vec![trace, summary])
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Mean and standard error (`sd / √n`, sample sd; zero for a single value).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let m = mean(values.iter().copied());
    if n < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

pub fn summarize(replicates: &[ReplicateOutcome], steps: usize) -> Vec<SummaryRow> {
    (0..steps)
        .map(|t| {
            let losses: Vec<f64> = replicates.iter().map(|r| r.trace.records[t].loss).collect();
            let dists: Vec<f64> = replicates.iter().map(|r| r.trace.records[t].dist_sq).collect();
            let (mean_loss, stderr_loss) = mean_stderr(&losses);
            let (mean_dist_sq, stderr_dist_sq) = mean_stderr(&dists);
            SummaryRow {
                t,
                mean_loss,
                stderr_loss,
                mean_dist_sq,
                stderr_dist_sq,
            }
        })
        .collect()
}
