//! Adaptive coded federated learning, simulated.
//!
//! Devices upload a noisy Gram-matrix encoding of their data once
//! ([`coding`]), which bounds leakage in the mutual-information sense
//! ([`privacy`]). During training the server mixes the gradient of that coded
//! dataset with the gradients of the devices that did not straggle, using a
//! weight chosen to minimize a second-moment bound ([`training`],
//! [`analysis`]). [`harness`] wires everything into reproducible, CSV-producing
//! experiments and the `acfl` command-line tool.
//!
//! ```
//! use acfl::coding::{encode_dataset, NoiseParams};
//! use acfl::dataset::{generate, optimum};
//! use acfl::numerics::{Matrix, RngStream};
//! use acfl::training::{train, AggregationPolicy, LrSchedule, StragglerModel, TrainSpec};
//!
//! let ds = generate(10, 20, 3, 2, &RngStream::new(1, "dataset", &[]))?;
//! let facts = optimum(&ds)?;
//! let noise = NoiseParams::equal(0.1)?;
//! let coded = encode_dataset(&ds, noise, &RngStream::new(1, "coding", &[]))?;
//! let spec = TrainSpec {
//!     policy: AggregationPolicy::AdaptiveEstimated { fallback_alpha: 1.0 },
//!     straggler: StragglerModel::new(0.2)?,
//!     steps: 200,
//!     schedule: LrSchedule::InverseTime { c: 0.01 },
//!     noise,
//! };
//! let trace = train(&ds, &coded, &spec, &Matrix::zeros(3, 2), &RngStream::new(1, "stragglers", &[]), &facts)?;
//! assert!(trace.final_loss < trace.initial_loss());
//! # Ok::<(), acfl::Error>(())
//! ```

pub mod analysis;
pub mod coding;
pub mod dataset;
mod error;
pub mod harness;
pub mod numerics;
pub mod privacy;
pub mod training;

pub use error::{Error, Result};

// Book chapters are compiled as doctests so their snippets cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/numerics.md")]
    mod numerics {}
    #[doc = include_str!("../../../book/src/coding-and-privacy.md")]
    mod coding_and_privacy {}
    #[doc = include_str!("../../../book/src/aggregation.md")]
    mod aggregation {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
