//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [dataset]
//! n_devices = 100
//! samples_per_device = 100
//! d = 10
//! o = 10
//!
//! [stragglers]
//! p = 0.2
//!
//! [noise]              # either both variances, or a target epsilon (nats)
//! sigma1_sq = 10.0
//! sigma2_sq = 10.0
//!
//! [policy]
//! kind = "adaptive-estimated"   # | "fixed" (alpha) | "adaptive-oracle" (beta_sq, c_sq)
//!
//! [schedule]
//! kind = "inverse-time"          # | "strong-convexity"
//! c = 0.0001
//!
//! [run]
//! steps = 2000
//! master_seed = 2024
//! replicates = 20
//! output_dir = "out/run"
//! ```
//!
//! `[compare]` and `[tradeoff]` are optional and fall back to the defaults of
//! [`CompareConfig`] and [`TradeoffConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::BoundInputs;
use crate::coding::NoiseParams;
use crate::error::{Error, Result};
use crate::privacy::{sigma_for_epsilon, PrivacyLevel};
use crate::training::{AggregationPolicy, LrSchedule, StragglerModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub stragglers: StragglerConfig,
    pub noise: NoiseSpec,
    pub policy: PolicySpec,
    pub schedule: ScheduleSpec,
    pub run: RunConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub tradeoff: TradeoffConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_devices: usize,
    pub samples_per_device: usize,
    pub d: usize,
    pub o: usize,
    /// Standard deviation of optional Gaussian label noise; 0 gives exact labels.
    #[serde(default)]
    pub label_noise_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StragglerConfig {
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma1_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_sq: Option<f64>,
    /// Target privacy level in nats; resolved with `σ₁² = σ₂²`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    Fixed {
        alpha: f64,
    },
    /// Bounds left out are derived from calibration runs.
    AdaptiveOracle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta_sq: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c_sq: Option<f64>,
    },
    AdaptiveEstimated {
        #[serde(default = "one")]
        fallback_alpha: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// `η_t = c/t`
    InverseTime { c: f64 },
    /// `η_t = 1/(λt)` with λ taken from each replicate's dataset.
    StrongConvexity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub steps: usize,
    pub master_seed: u64,
    pub replicates: usize,
    pub output_dir: PathBuf,
    /// Run replicates on the rayon pool. Outputs are identical either way.
    #[serde(default = "yes")]
    pub parallel: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Values of `σ₁² = σ₂²` to sweep.
    #[serde(default = "default_noise_levels")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "half")]
    pub baseline_alpha: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            noise_levels: default_noise_levels(),
            baseline_alpha: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TradeoffConfig {
    pub p: f64,
    pub n_devices: usize,
    pub beta_sq: f64,
    pub c_sq: f64,
    pub d: usize,
    pub o: usize,
    pub lambda: f64,
    pub steps: usize,
    pub sigma_sq_min: f64,
    pub sigma_sq_max: f64,
    pub points: usize,
    pub fixed_alphas: Vec<f64>,
}

impl Default for TradeoffConfig {
    fn default() -> Self {
        let r = BoundInputs::reference();
        TradeoffConfig {
            p: r.p,
            n_devices: r.n_devices,
            beta_sq: r.beta_sq,
            c_sq: r.c_sq,
            d: r.d,
            o: r.o,
            lambda: r.lambda,
            steps: r.steps,
            sigma_sq_min: 1e-2,
            sigma_sq_max: 1e4,
            points: 61,
            fixed_alphas: (0..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

impl TradeoffConfig {
    pub fn bound_inputs(&self) -> BoundInputs {
        BoundInputs {
            p: self.p,
            n_devices: self.n_devices,
            beta_sq: self.beta_sq,
            c_sq: self.c_sq,
            d: self.d,
            o: self.o,
            sigma1_sq: 1.0,
            sigma2_sq: 1.0,
            lambda: self.lambda,
            steps: self.steps,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

fn default_noise_levels() -> Vec<f64> {
    vec![0.1, 10.0]
}

impl ExperimentConfig {
    /// The synthetic benchmark: 100 devices × 100 samples, d = o = 10,
    /// p = 0.2, `η_t = 10⁻⁴/t`, T = 2000, 20 replicates.
    pub fn benchmark() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig {
                n_devices: 100,
                samples_per_device: 100,
                d: 10,
                o: 10,
                label_noise_sd: 0.0,
            },
            stragglers: StragglerConfig { p: 0.2 },
            noise: NoiseSpec {
                sigma1_sq: Some(10.0),
                sigma2_sq: Some(10.0),
                epsilon: None,
            },
            policy: PolicySpec::AdaptiveEstimated { fallback_alpha: 1.0 },
            schedule: ScheduleSpec::InverseTime { c: 1e-4 },
            run: RunConfig {
                steps: 2000,
                master_seed: 2024,
                replicates: 20,
                output_dir: PathBuf::from("out"),
                parallel: true,
            },
            compare: CompareConfig::default(),
            tradeoff: TradeoffConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("byte {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            Error::config(field, e.message().to_owned())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks every module precondition, reporting the dotted path of the first bad field.
    pub fn validate(&self) -> Result<()> {
        let ds = &self.dataset;
        if ds.n_devices == 0 {
            return Err(Error::config("dataset.n_devices", "must be at least 1"));
        }
        if ds.d == 0 {
            return Err(Error::config("dataset.d", "must be at least 1"));
        }
        if ds.o == 0 {
            return Err(Error::config("dataset.o", "must be at least 1"));
        }
        if ds.samples_per_device <= ds.d {
            return Err(Error::config(
                "dataset.samples_per_device",
                format!("must exceed d = {} for full column rank", ds.d),
            ));
        }
        if !(ds.label_noise_sd >= 0.0 && ds.label_noise_sd.is_finite()) {
            return Err(Error::config("dataset.label_noise_sd", "must be finite and non-negative"));
        }
        StragglerModel::new(self.stragglers.p).map_err(|e| Error::config("stragglers.p", e.to_string()))?;
        self.noise_params()?;
        match self.policy {
            PolicySpec::Fixed { alpha } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::config("policy.alpha", "must lie in [0, 1]"));
                }
            }
            PolicySpec::AdaptiveOracle { beta_sq, c_sq } => {
                for (field, v) in [("policy.beta_sq", beta_sq), ("policy.c_sq", c_sq)] {
                    if let Some(v) = v {
                        if !(v > 0.0 && v.is_finite()) {
                            return Err(Error::config(field, "must be positive and finite"));
                        }
                    }
                }
            }
            PolicySpec::AdaptiveEstimated { fallback_alpha } => {
                if !(0.0..=1.0).contains(&fallback_alpha) {
                    return Err(Error::config("policy.fallback_alpha", "must lie in [0, 1]"));
                }
            }
        }
        if let ScheduleSpec::InverseTime { c } = self.schedule {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("schedule.c", "must be positive and finite"));
            }
        }
        if self.run.master_seed > i64::MAX as u64 {
            return Err(Error::config("run.master_seed", "must fit in a signed 64-bit integer"));
        }
        if self.run.replicates == 0 {
            return Err(Error::config("run.replicates", "must be at least 1"));
        }
        if self.compare.noise_levels.is_empty() {
            return Err(Error::config("compare.noise_levels", "need at least one noise level"));
        }
        for (k, v) in self.compare.noise_levels.iter().enumerate() {
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("compare.noise_levels[{k}]"), "must be finite and non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.compare.baseline_alpha) {
            return Err(Error::config("compare.baseline_alpha", "must lie in [0, 1]"));
        }
        let t = &self.tradeoff;
        t.bound_inputs()
            .validate()
            .map_err(|e| Error::config("tradeoff", e.to_string()))?;
        if !(t.sigma_sq_min > 0.0 && t.sigma_sq_max >= t.sigma_sq_min && t.points >= 1) {
            return Err(Error::config("tradeoff.sigma_sq_min", "need 0 < sigma_sq_min <= sigma_sq_max and points >= 1"));
        }
        for (k, a) in t.fixed_alphas.iter().enumerate() {
            if !(0.0..=1.0).contains(a) {
                return Err(Error::config(format!("tradeoff.fixed_alphas[{k}]"), "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Resolves `[noise]` into concrete variances.
    pub fn noise_params(&self) -> Result<NoiseParams> {
        let n = &self.noise;
        match (n.sigma1_sq, n.sigma2_sq, n.epsilon) {
            (Some(s1), Some(s2), None) => {
                NoiseParams::new(s1, s2).map_err(|e| Error::config("noise", e.to_string()))
            }
            (None, None, Some(eps)) => {
                let level = PrivacyLevel::new(eps).map_err(|e| Error::config("noise.epsilon", e.to_string()))?;
                sigma_for_epsilon(level, self.dataset.d, self.dataset.o)
                    .map_err(|e| Error::config("noise.epsilon", e.to_string()))
            }
            _ => Err(Error::config(
                "noise",
                "give either both sigma1_sq and sigma2_sq, or epsilon alone",
            )),
        }
    }

    pub fn straggler_model(&self) -> StragglerModel {
        StragglerModel::new(self.stragglers.p).expect("validated")
    }

    /// The schedule for a replicate whose strong-convexity constant is `lambda`.
    pub fn lr_schedule(&self, lambda: f64) -> LrSchedule {
        match self.schedule {
            ScheduleSpec::InverseTime { c } => LrSchedule::InverseTime { c },
            ScheduleSpec::StrongConvexity => LrSchedule::StrongConvexity { lambda },
        }
    }

    /// The training policy when no calibration is needed.
    pub fn resolved_policy(&self) -> Option<AggregationPolicy> {
        match self.policy {
            PolicySpec::Fixed { alpha } => Some(AggregationPolicy::Fixed { alpha }),
            PolicySpec::AdaptiveEstimated { fallback_alpha } => {
                Some(AggregationPolicy::AdaptiveEstimated { fallback_alpha })
            }
            PolicySpec::AdaptiveOracle {
                beta_sq: Some(beta_sq),
                c_sq: Some(c_sq),
            } => Some(AggregationPolicy::AdaptiveOracle { beta_sq, c_sq }),
            PolicySpec::AdaptiveOracle { .. } => None,
        }
    }
}
