//! Mutual-information differential privacy of the one-shot upload.
//!
//! For a device that uploads `XᵀX + N₁` and `XᵀY + N₂`, the leakage about any
//! single raw entry is at most
//!
//! ```text
//! ε = (d − ½)·ln((1 + σ₁²)/σ₁²) + (o/2)·ln((1 + σ₂²)/σ₂²)
//! ```
//!
//! ε is measured in nats. Multiply by `1/ln 2` for bits.

use serde::{Deserialize, Serialize};

use crate::coding::NoiseParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PrivacyLevel {
    pub epsilon: f64,
}

impl PrivacyLevel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || epsilon.is_nan() {
            return Err(Error::param("epsilon", format!("must be non-negative, got {epsilon}")));
        }
        Ok(PrivacyLevel { epsilon })
    }

    pub fn in_bits(self) -> f64 {
        self.epsilon / std::f64::consts::LN_2
    }
}

/// `ln((1 + s)/s)` evaluated as `ln(1 + 1/s)` for accuracy at large `s`.
fn log_ratio(sigma_sq: f64) -> f64 {
    (1.0 / sigma_sq).ln_1p()
}

fn check_dims(d: usize, o: usize) -> Result<()> {
    if d == 0 || o == 0 {
        return Err(Error::param("d/o", "dimensions must be positive"));
    }
    Ok(())
}

/// Privacy level of a single device's coded upload.
pub fn epsilon_of(noise: NoiseParams, d: usize, o: usize) -> Result<PrivacyLevel> {
    check_dims(d, o)?;
    for (name, v) in [("sigma1_sq", noise.sigma1_sq), ("sigma2_sq", noise.sigma2_sq)] {
        if !(v > 0.0) {
            return Err(Error::param(name, format!("epsilon unbounded at zero noise (got {v})")));
        }
    }
    let eps = (d as f64 - 0.5) * log_ratio(noise.sigma1_sq) + 0.5 * o as f64 * log_ratio(noise.sigma2_sq);
    Ok(PrivacyLevel { epsilon: eps })
}

/// Inverts [`epsilon_of`] on the slice `σ₁² = σ₂² = σ²`:
/// `σ² = 1 / (exp(ε / (d − ½ + o/2)) − 1)`.
pub fn sigma_for_epsilon(target: PrivacyLevel, d: usize, o: usize) -> Result<NoiseParams> {
    check_dims(d, o)?;
    if !(target.epsilon > 0.0) {
        return Err(Error::param("epsilon", "target must be strictly positive"));
    }
    let weight = d as f64 - 0.5 + 0.5 * o as f64;
    let sigma_sq = 1.0 / (target.epsilon / weight).exp_m1();
    if !sigma_sq.is_finite() || sigma_sq <= 0.0 {
        return Err(Error::Numeric(format!(
            "noise variance for epsilon = {} is not representable",
            target.epsilon
        )));
    }
    Ok(NoiseParams {
        sigma1_sq: sigma_sq,
        sigma2_sq: sigma_sq,
    })
}
