//! Dense linear algebra and seeded sampling shared by every other module.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{cholesky, eig_min_sym, spd_solve, sym_eigenvalues, SYMMETRY_TOL};
pub use matrix::Matrix;
pub use rng::{gaussian_matrix, uniform_matrix, RngStream, StreamRng};
