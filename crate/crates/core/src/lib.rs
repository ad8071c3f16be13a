//! Block-diagonal sensing matrices with heavy-tailed entries: sampling,
//! Orlicz-norm estimation, group restricted isometry, chaos tails, chaining
//! functionals and group-sparse recovery.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chaining;
pub mod chaos;
pub mod distributions;
pub mod error;
pub mod group_model;
pub mod matrices;
pub mod recovery;
pub mod rip;
pub mod rng;
pub mod stats;

pub use distributions::{sample, DistributionSpec, PhiFunction};
pub use error::{Error, Result};
pub use group_model::{GroupPartition, GroupSparseVector};
pub use matrices::{BlockDiagonalMatrix, DenseMatrix, OrthogonalBasis};
pub use rng::RngStream;
