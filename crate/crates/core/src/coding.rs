//! One-shot dataset encoding done before training.
//!
//! Device `i` uploads `H_X = XᵢᵀXᵢ + N₁` and `H_Y = XᵢᵀYᵢ + N₂` with i.i.d.
//! Gaussian noise of variances `σ₁²` and `σ₂²`. The server keeps only the sums
//! of the uploads. Noise is drawn once; the global coded dataset stays frozen
//! for the whole run.

use serde::{Deserialize, Serialize};

use crate::dataset::{DeviceData, FederatedDataset};
use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

impl NoiseParams {
    pub fn new(sigma1_sq: f64, sigma2_sq: f64) -> Result<Self> {
        for (name, v) in [("sigma1_sq", sigma1_sq), ("sigma2_sq", sigma2_sq)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(NoiseParams { sigma1_sq, sigma2_sq })
    }

    /// `σ₁² = σ₂² = σ²`.
    pub fn equal(sigma_sq: f64) -> Result<Self> {
        NoiseParams::new(sigma_sq, sigma_sq)
    }

    pub fn zero() -> Self {
        NoiseParams {
            sigma1_sq: 0.0,
            sigma2_sq: 0.0,
        }
    }
}

/// What one device uploads.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalCodedData {
    pub h_x: Matrix,
    pub h_y: Matrix,
}

impl LocalCodedData {
    /// Number of reals in the upload: `d² + o·d`.
    pub fn payload_len(&self) -> usize {
        self.h_x.as_slice().len() + self.h_y.as_slice().len()
    }
}

/// The server-side sums `H̃_X = Σ H_X⁽ⁱ⁾`, `H̃_Y = Σ H_Y⁽ⁱ⁾`.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalCodedData {
    pub h_x_sum: Matrix,
    pub h_y_sum: Matrix,
}

/// Encodes one device. `N₁` is drawn from `stream.child(1)`, `N₂` from `stream.child(2)`.
pub fn encode_local(dev: &DeviceData, noise: NoiseParams, stream: &RngStream) -> Result<LocalCodedData> {
    let (d, o) = (dev.features(), dev.outputs());
    let mut h_x = dev.x().gram();
    let mut h_y = dev.x().t_matmul(dev.y())?;
    h_x.add_scaled_assign(1.0, &gaussian_matrix(&stream.child(1), d, d, noise.sigma1_sq)?)?;
    h_y.add_scaled_assign(1.0, &gaussian_matrix(&stream.child(2), d, o, noise.sigma2_sq)?)?;
    Ok(LocalCodedData { h_x, h_y })
}

/// Elementwise sum in list order.
pub fn aggregate_coded(locals: &[LocalCodedData]) -> Result<GlobalCodedData> {
    let first = locals
        .first()
        .ok_or_else(|| Error::param("locals", "need at least one local coded dataset"))?;
    let mut h_x_sum = first.h_x.clone();
    let mut h_y_sum = first.h_y.clone();
    for local in &locals[1..] {
        h_x_sum.add_scaled_assign(1.0, &local.h_x)?;
        h_y_sum.add_scaled_assign(1.0, &local.h_y)?;
    }
    Ok(GlobalCodedData { h_x_sum, h_y_sum })
}

/// Encodes every device (device `i` uses `stream.child(i)`) and sums the uploads.
pub fn encode_dataset(ds: &FederatedDataset, noise: NoiseParams, stream: &RngStream) -> Result<GlobalCodedData> {
    let locals = ds
        .devices()
        .iter()
        .enumerate()
        .map(|(i, dev)| encode_local(dev, noise, &stream.child(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    aggregate_coded(&locals)
}
