//! Second-stage training: straggler sampling, gradient aggregation and updates.
//!
//! Every iteration the server
//!
//! 1. receives `Gᵢ = Xᵢᵀ(XᵢW − Yᵢ)` from the devices that are not straggling,
//! 2. computes `G_S = H̃_X·W − H̃_Y` from the frozen coded dataset,
//! 3. picks a weight `α_t` from its [`AggregationPolicy`],
//! 4. forms `G_All = α_t·G_S + (1 − α_t)/(1 − p)·Σ_{present} Gᵢ`,
//! 5. steps `W ← W − η_t·G_All`.
//!
//! `G_All` is an unbiased estimate of the full gradient `Σᵢ Gᵢ` for every `α_t`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coding::{GlobalCodedData, NoiseParams};
use crate::dataset::{DeviceData, FederatedDataset, ProblemFacts};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use rand::Rng;

/// Per-device, per-iteration straggling probability `p ∈ [0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StragglerModel {
    p: f64,
}

impl StragglerModel {
    pub fn new(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(StragglerModel { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::param("p", format!("straggler probability must lie in [0, 1), got {p}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("aggregation weight must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// `present[i]` is true when device `i` responds this iteration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StragglerMask {
    pub present: Vec<bool>,
}

impl StragglerMask {
    pub fn all_present(n: usize) -> Self {
        StragglerMask { present: vec![true; n] }
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn n_present(&self) -> usize {
        self.present.iter().filter(|&&b| b).count()
    }
}

/// Draws one independent Bernoulli(1 − p) presence flag per device from `stream`.
pub fn sample_stragglers(model: StragglerModel, n: usize, stream: &RngStream) -> Result<StragglerMask> {
    check_p(model.p)?;
    let mut rng = stream.rng();
    let present = (0..n).map(|_| rng.random::<f64>() >= model.p).collect();
    Ok(StragglerMask { present })
}

/// `Xᵀ(XW − Y)`, computed directly from the raw samples.
pub fn local_gradient(dev: &DeviceData, w: &Matrix) -> Result<Matrix> {
    w.expect_shape("local_gradient", (dev.features(), dev.outputs()))?;
    let resid = dev.x().matmul(w)?.sub(dev.y())?;
    dev.x().t_matmul(&resid)
}

/// `H̃_X·W − H̃_Y`.
pub fn coded_gradient(gc: &GlobalCodedData, w: &Matrix) -> Result<Matrix> {
    gc.h_y_sum.expect_shape("coded_gradient", (w.rows(), w.cols()))?;
    gc.h_x_sum.matmul(w)?.sub(&gc.h_y_sum)
}

/// Weight minimizing the gradient second-moment bound for known `β²`, `C²`:
///
/// ```text
/// α* = a / (a + N·d·σ₁²·C² + N·σ₂²·o·d),   a = p·N·β²/(1 − p)
/// ```
///
/// Returns 0 when `p = 0` and 1 when the denominator vanishes otherwise
/// (noise-free coding with zero gradients, where every α is optimal).
pub fn alpha_oracle(
    p: f64,
    n_devices: usize,
    beta_sq: f64,
    c_sq: f64,
    d: usize,
    o: usize,
    noise: NoiseParams,
) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    let n = n_devices as f64;
    let (d, o) = (d as f64, o as f64);
    let a = p * n * beta_sq / (1.0 - p);
    let denom = a + n * d * noise.sigma1_sq * c_sq + n * noise.sigma2_sq * o * d;
    if denom == 0.0 {
        1.0
    } else {
        (a / denom).clamp(0.0, 1.0)
    }
}

/// The weight formed from running estimates `β̂²`, `Ĉ²`:
///
/// ```text
/// ᾰ = p·β̂² / (p·β̂² + d·σ₁²·Ĉ²·(1 − p) + σ₂²·o·d·(1 − p))
/// ```
pub fn alpha_from_estimates(p: f64, d: usize, o: usize, noise: NoiseParams, beta_hat_sq: f64, c_hat_sq: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    let (d, o) = (d as f64, o as f64);
    let num = p * beta_hat_sq;
    let denom = num + d * noise.sigma1_sq * c_hat_sq * (1.0 - p) + noise.sigma2_sq * o * d * (1.0 - p);
    if denom == 0.0 {
        1.0
    } else {
        (num / denom).clamp(0.0, 1.0)
    }
}

/// Server-side state for the estimated adaptive weight.
///
/// `β̂²` is the mean squared norm of the gradients received this iteration and
/// `Ĉ² = ‖W_t‖²`. When no device responds, the previous `β̂²` is reused; before
/// any estimate exists, `fallback_alpha` is returned.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaEstimator {
    fallback_alpha: f64,
    last_beta_sq: Option<f64>,
}

impl AlphaEstimator {
    pub fn new(fallback_alpha: f64) -> Result<Self> {
        check_alpha(fallback_alpha)?;
        Ok(AlphaEstimator {
            fallback_alpha,
            last_beta_sq: None,
        })
    }

    pub fn last_beta_sq(&self) -> Option<f64> {
        self.last_beta_sq
    }

    /// `grads` is indexed like `mask`; entries of absent devices are never read.
    #[allow(clippy::too_many_arguments)]
    pub fn estimate(
        &mut self,
        p: f64,
        d: usize,
        o: usize,
        noise: NoiseParams,
        mask: &StragglerMask,
        grads: &[Matrix],
        w: &Matrix,
    ) -> f64 {
        let (mut total, mut count) = (0.0, 0usize);
        for (g, _) in grads.iter().zip(&mask.present).filter(|(_, &here)| here) {
            total += g.frobenius_norm_sq();
            count += 1;
        }
        if count > 0 {
            self.last_beta_sq = Some(total / count as f64);
        }
        match self.last_beta_sq {
            Some(beta_sq) => alpha_from_estimates(p, d, o, noise, beta_sq, w.frobenius_norm_sq()),
            None => self.fallback_alpha,
        }
    }
}

/// `G_All = α·G_S + (1 − α)/(1 − p)·Σᵢ Gᵢ·Iᵢ`, summed in device order.
pub fn aggregate(g_s: &Matrix, local_grads: &[Matrix], mask: &StragglerMask, alpha: f64, p: f64) -> Result<Matrix> {
    check_alpha(alpha)?;
    check_p(p)?;
    if local_grads.len() != mask.len() {
        return Err(Error::param(
            "local_grads",
            format!("{} gradients for a mask of {} devices", local_grads.len(), mask.len()),
        ));
    }
    let mut device_sum = Matrix::zeros(g_s.rows(), g_s.cols());
    for (g, _) in local_grads.iter().zip(&mask.present).filter(|(_, &here)| here) {
        device_sum.add_scaled_assign(1.0, g)?;
    }
    let mut out = g_s.scale(alpha);
    out.add_scaled_assign((1.0 - alpha) / (1.0 - p), &device_sum)?;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AggregationPolicy {
    /// Constant `α_t = alpha`.
    Fixed { alpha: f64 },
    /// [`alpha_oracle`] with user-supplied bounds `β²`, `C²`; constant over a run.
    AdaptiveOracle { beta_sq: f64, c_sq: f64 },
    /// [`AlphaEstimator`], re-estimated every iteration.
    AdaptiveEstimated {
        #[serde(default = "default_fallback_alpha")]
        fallback_alpha: f64,
    },
}

fn default_fallback_alpha() -> f64 {
    1.0
}

impl AggregationPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AggregationPolicy::Fixed { alpha } => check_alpha(alpha),
            AggregationPolicy::AdaptiveOracle { beta_sq, c_sq } => {
                if !(beta_sq > 0.0 && beta_sq.is_finite()) {
                    return Err(Error::param("beta_sq", "must be positive and finite"));
                }
                if !(c_sq > 0.0 && c_sq.is_finite()) {
                    return Err(Error::param("c_sq", "must be positive and finite"));
                }
                Ok(())
            }
            AggregationPolicy::AdaptiveEstimated { fallback_alpha } => check_alpha(fallback_alpha),
        }
    }
}

/// Step sizes, indexed from 1: `eta(1)` drives the first update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LrSchedule {
    /// `η_t = c / t`.
    InverseTime { c: f64 },
    /// `η_t = 1 / (λ·t)`.
    StrongConvexity { lambda: f64 },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            LrSchedule::InverseTime { c } => ("c", c),
            LrSchedule::StrongConvexity { lambda } => ("lambda", lambda),
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("schedule constant must be positive, got {v}")));
        }
        Ok(())
    }

    pub fn eta(&self, t: usize) -> f64 {
        assert!(t >= 1, "schedules are 1-indexed");
        match *self {
            LrSchedule::InverseTime { c } => c / t as f64,
            LrSchedule::StrongConvexity { lambda } => 1.0 / (lambda * t as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub w: Matrix,
    pub t: usize,
}

/// Instrumentation for iteration `t`, taken at the iterate `W_t` before the update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub t: usize,
    pub alpha_t: f64,
    pub n_present: usize,
    pub loss: f64,
    pub dist_sq: f64,
    /// `‖G_All‖²`
    pub grad_norm_sq: f64,
    /// `maxᵢ ‖Gᵢ‖²` over all devices, stragglers included.
    pub max_device_grad_sq: f64,
    /// `‖W_t‖²`
    pub w_norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<IterationRecord>,
    pub final_w: Matrix,
    pub final_loss: f64,
    pub final_dist_sq: f64,
    /// SHA-256 (hex) over every straggler mask consumed by the run.
    pub mask_digest: String,
}

impl TrainingTrace {
    pub fn initial_loss(&self) -> f64 {
        self.records.first().map_or(self.final_loss, |r| r.loss)
    }

    /// Largest `‖W_t‖²` over `t = 0..=T`.
    pub fn max_w_norm_sq(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.w_norm_sq)
            .fold(self.final_w.frobenius_norm_sq(), f64::max)
    }

    pub fn max_device_grad_sq(&self) -> f64 {
        self.records.iter().map(|r| r.max_device_grad_sq).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainSpec {
    pub policy: AggregationPolicy,
    pub straggler: StragglerModel,
    pub steps: usize,
    pub schedule: LrSchedule,
    pub noise: NoiseParams,
}

/// Device-side cache of `XᵀX` and `XᵀY`; `Gᵢ = (XᵀX)W − XᵀY` equals `Xᵀ(XW − Y)`.
struct Device {
    xtx: Matrix,
    xty: Matrix,
}

impl Device {
    fn new(dev: &DeviceData) -> Result<Self> {
        Ok(Device {
            xtx: dev.x().gram(),
            xty: dev.x().t_matmul(dev.y())?,
        })
    }

    fn gradient(&self, w: &Matrix) -> Result<Matrix> {
        self.xtx.matmul(w)?.sub(&self.xty)
    }
}

/// Everything the server is allowed to see: the coded sums, never raw data.
struct Server<'a> {
    coded: &'a GlobalCodedData,
    policy: AggregationPolicy,
    estimator: Option<AlphaEstimator>,
    p: f64,
    noise: NoiseParams,
    n_devices: usize,
}

impl Server<'_> {
    fn alpha(&mut self, mask: &StragglerMask, grads: &[Matrix], w: &Matrix) -> f64 {
        let (d, o) = w.shape();
        match self.policy {
            AggregationPolicy::Fixed { alpha } => alpha,
            AggregationPolicy::AdaptiveOracle { beta_sq, c_sq } => {
                alpha_oracle(self.p, self.n_devices, beta_sq, c_sq, d, o, self.noise)
            }
            AggregationPolicy::AdaptiveEstimated { .. } => self
                .estimator
                .as_mut()
                .expect("estimator exists for the estimated policy")
                .estimate(self.p, d, o, self.noise, mask, grads, w),
        }
    }
}

/// Objective evaluator based on `f(W) = f(W*) + ½⟨W − W*, A(W − W*)⟩`, `A = Σ XᵢᵀXᵢ`.
///
/// Exact for the quadratic objective and free of the cancellation that
/// `½⟨W, AW⟩ − ⟨W, B⟩ + c` suffers near the optimum.
struct Objective<'a> {
    gram: Matrix,
    facts: &'a ProblemFacts,
}

impl Objective<'_> {
    fn eval(&self, w: &Matrix) -> Result<(f64, f64)> {
        let delta = w.sub(&self.facts.w_star)?;
        let quad = delta.dot(&self.gram.matmul(&delta)?)?;
        Ok((self.facts.loss_at_optimum + 0.5 * quad.max(0.0), delta.frobenius_norm_sq()))
    }
}

/// Runs `spec.steps` iterations from `w0`.
///
/// The mask for iteration `t` comes from `stream.child(t)`; `gc` must be the
/// coded dataset built from `ds` with `spec.noise`.
pub fn train(
    ds: &FederatedDataset,
    gc: &GlobalCodedData,
    spec: &TrainSpec,
    w0: &Matrix,
    stream: &RngStream,
    facts: &ProblemFacts,
) -> Result<TrainingTrace> {
    spec.policy.validate()?;
    spec.schedule.validate()?;
    let (d, o) = (ds.features(), ds.outputs());
    w0.expect_shape("train", (d, o))?;
    gc.h_x_sum.expect_shape("train", (d, d))?;
    gc.h_y_sum.expect_shape("train", (d, o))?;

    let devices = ds.devices().iter().map(Device::new).collect::<Result<Vec<_>>>()?;
    let estimator = match spec.policy {
        AggregationPolicy::AdaptiveEstimated { fallback_alpha } => Some(AlphaEstimator::new(fallback_alpha)?),
        _ => None,
    };
    let mut server = Server {
        coded: gc,
        policy: spec.policy,
        estimator,
        p: spec.straggler.p(),
        noise: spec.noise,
        n_devices: devices.len(),
    };
    let objective = Objective {
        gram: ds.gram_sum(),
        facts,
    };

    let mut state = ModelState { w: w0.clone(), t: 0 };
    let mut records = Vec::with_capacity(spec.steps);
    let mut digest = Sha256::new();
    while state.t < spec.steps {
        let t = state.t;
        let mask = sample_stragglers(spec.straggler, devices.len(), &stream.child(t as u64))?;
        digest.update(mask.present.iter().map(|&b| b as u8).collect::<Vec<_>>());

        // Every device's gradient is formed so the run can report maxᵢ‖Gᵢ‖²;
        // only entries flagged present reach the server.
        let grads = devices
            .iter()
            .map(|dev| dev.gradient(&state.w))
            .collect::<Result<Vec<_>>>()?;
        let g_s = coded_gradient(server.coded, &state.w)?;
        let alpha = server.alpha(&mask, &grads, &state.w);
        let g_all = aggregate(&g_s, &grads, &mask, alpha, server.p)?;

        let (loss, dist_sq) = objective.eval(&state.w)?;
        records.push(IterationRecord {
            t,
            alpha_t: alpha,
            n_present: mask.n_present(),
            loss,
            dist_sq,
            grad_norm_sq: g_all.frobenius_norm_sq(),
            max_device_grad_sq: grads.iter().map(Matrix::frobenius_norm_sq).fold(0.0, f64::max),
            w_norm_sq: state.w.frobenius_norm_sq(),
        });

        state.w.add_scaled_assign(-spec.schedule.eta(t + 1), &g_all)?;
        state.t += 1;
        if state.w.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("iterate diverged at t = {}", state.t)));
        }
    }
    let (final_loss, final_dist_sq) = objective.eval(&state.w)?;
    Ok(TrainingTrace {
        records,
        final_w: state.w,
        final_loss,
        final_dist_sq,
        mask_digest: hex(&digest.finalize()),
    })
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
