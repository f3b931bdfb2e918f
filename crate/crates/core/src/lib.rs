//! Estimation of Gaussian moment tensors.
//!
//! The crate provides two estimators of `T = E X^{⊗p}` (and of its block,
//! asymmetric counterpart `E X⁽¹⁾ ⊗ ⋯ ⊗ X⁽ᵖ⁾`) for zero-mean Gaussian
//! vectors:
//!
//! * the sample moment tensor, the empirical average of `p`-fold outer
//!   products of the draws;
//! * the Isserlis plug-in tensor, the pairing sum of Isserlis's theorem
//!   evaluated at the sample (cross-)covariances.
//!
//! Around those sit dense tensor storage with the Frobenius inner product,
//! the entrywise maximum norm and a higher-order power method for the
//! operator norm, effective dimensions `r₂` and `r_max`, deterministic
//! perturbation bounds between moment tensors, and a seeded Monte Carlo
//! harness that measures error scaling in `N`.

pub mod effective_dim;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod gaussian;
pub mod linalg;
pub mod norms;
pub mod pairings;
pub mod perturbation;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use estimators::{EstimatorKind, EstimatorOutput};
pub use gaussian::{BlockCovariance, CovarianceFamily, CovarianceModel, SampleBatch};
pub use norms::{HopmOptions, NormKind, NormMethod, NormResult};
pub use pairings::{Pairing, PairingSet};
pub use tensor::DenseTensor;

/// Largest number of tensor entries any routine will allocate.
pub const MAX_TENSOR_ENTRIES: usize = 100_000_000;

/// Formats a float with the shortest representation that parses back to the
/// same bits.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}
