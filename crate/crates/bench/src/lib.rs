//! Benchmark fixtures shared by the criterion targets.

use blockrip_core::matrices::random_block_diagonal;
use blockrip_core::{BlockDiagonalMatrix, DistributionSpec, GroupPartition, RngStream};

/// Gaussian `L` blocks of size `m × d` with contiguous groups of `group`.
pub fn gaussian_instance(num_blocks: usize, m: usize, d: usize, group: usize) -> (BlockDiagonalMatrix, GroupPartition) {
    let b = random_block_diagonal(
        &DistributionSpec::standard_gaussian(),
        num_blocks,
        m,
        d,
        RngStream::new(7, 0),
    )
    .expect("valid dimensions");
    let p = GroupPartition::contiguous(num_blocks * d, group).expect("group divides dimension");
    (b, p)
}
