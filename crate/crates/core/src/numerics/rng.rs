//! Keyed random streams.
//!
//! A stream is named by `(master_seed, purpose_tag, indices)`. The name is hashed
//! with SHA-256 into a 256-bit ChaCha12 key, so any two distinct names give
//! independent generators and the same name always replays the same sequence.
//! No generator state is ever shared between streams.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::matrix::{check_dims, Matrix};
use crate::error::{Error, Result};

/// The concrete generator handed out by [`RngStream::rng`].
pub type StreamRng = ChaCha12Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct RngStream {
    master_seed: u64,
    purpose_tag: String,
    indices: Vec<u64>,
}

impl RngStream {
    pub fn new(master_seed: u64, purpose_tag: &str, indices: &[u64]) -> Self {
        RngStream {
            master_seed,
            purpose_tag: purpose_tag.to_owned(),
            indices: indices.to_vec(),
        }
    }

    /// Same seed and tag, one more index appended.
    pub fn child(&self, index: u64) -> Self {
        let mut indices = self.indices.clone();
        indices.push(index);
        RngStream {
            master_seed: self.master_seed,
            purpose_tag: self.purpose_tag.clone(),
            indices,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn purpose_tag(&self) -> &str {
        &self.purpose_tag
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    fn key(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"acfl-rng-stream-v1");
        h.update(self.master_seed.to_le_bytes());
        h.update((self.purpose_tag.len() as u64).to_le_bytes());
        h.update(self.purpose_tag.as_bytes());
        h.update((self.indices.len() as u64).to_le_bytes());
        for idx in &self.indices {
            h.update(idx.to_le_bytes());
        }
        h.finalize().into()
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        ChaCha12Rng::from_seed(self.key())
    }
}

/// Matrix with i.i.d. `N(0, variance)` entries, filled row-major.
///
/// Standard normals come from the ziggurat sampler of `rand_distr` and are
/// scaled by `√variance`, so streams are reproducible bit for bit and a
/// zero variance gives exact zeros.
pub fn gaussian_matrix(stream: &RngStream, rows: usize, cols: usize, variance: f64) -> Result<Matrix> {
    check_dims(rows, cols)?;
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::param(
            "variance",
            format!("must be a finite non-negative number, got {variance}"),
        ));
    }
    let sd = variance.sqrt();
    let mut rng = stream.rng();
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    Matrix::new(rows, cols, data)
}

/// Matrix with i.i.d. entries uniform on `[lo, hi)`, filled row-major from `rng`.
pub fn uniform_matrix(rng: &mut StreamRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Result<Matrix> {
    check_dims(rows, cols)?;
    let dist = Uniform::new(lo, hi)
        .map_err(|e| Error::param("bounds", format!("[{lo}, {hi}): {e}")))?;
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::new(rows, cols, data)
}
