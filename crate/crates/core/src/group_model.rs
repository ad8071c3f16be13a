//! Group partitions of `[D]`, mixed norms, group-sparse vectors and the
//! coherence parameter of a basis.

use crate::error::{check_len, Error, Result};
use crate::matrices::OrthogonalBasis;

/// Default tolerance below which a group counts as zero.
pub const ZERO_TOL: f64 = 1e-12;
/// Largest number of supports [`enumerate_group_supports`] will produce.
pub const MAX_SUPPORTS: u64 = 1_000_000;

/// Disjoint cover of `0..dim` by `G` groups (0-based indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPartition {
    dim: usize,
    groups: Vec<Vec<usize>>,
    max_size: usize,
}

impl GroupPartition {
    /// Validates that `groups` (0-based) are pairwise disjoint and cover `0..dim`.
    pub fn new(dim: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut owner = vec![false; dim];
        for g in &groups {
            if g.is_empty() {
                return Err(Error::Argument("partition: empty group".into()));
            }
            for &i in g {
                if i >= dim {
                    return Err(Error::Argument(format!(
                        "partition: index {} out of range 1..={dim}",
                        i + 1
                    )));
                }
                if owner[i] {
                    return Err(Error::Argument(format!("partition: overlap at index {}", i + 1)));
                }
                owner[i] = true;
            }
        }
        if let Some(i) = owner.iter().position(|o| !o) {
            return Err(Error::Argument(format!("partition: index {} not covered", i + 1)));
        }
        let max_size = groups.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self { dim, groups, max_size })
    }

    /// Same as [`GroupPartition::new`] with 1-based indices, as written in configs.
    pub fn from_one_based(dim: usize, groups: &[Vec<usize>]) -> Result<Self> {
        let zero_based = groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&i| {
                        i.checked_sub(1)
                            .ok_or_else(|| Error::Argument("partition: indices are 1-based".into()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, zero_based)
    }

    /// Consecutive groups of `size` indices.
    pub fn contiguous(dim: usize, size: usize) -> Result<Self> {
        if size == 0 || !dim.is_multiple_of(size) {
            return Err(Error::Argument(format!(
                "group size {size} must divide dimension {dim}"
            )));
        }
        Self::new(
            dim,
            (0..dim / size).map(|k| (k * size..(k + 1) * size).collect()).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    /// `g = max_i g_i`.
    pub fn max_group_size(&self) -> usize {
        self.max_size
    }

    /// Sorted column indices of the union of `support`'s groups.
    pub fn support_columns(&self, support: &[usize]) -> Vec<usize> {
        let mut cols: Vec<usize> = support.iter().flat_map(|&k| self.groups[k].iter().copied()).collect();
        cols.sort_unstable();
        cols
    }

    /// Euclidean norm of every group block of `x`.
    pub fn group_norms(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, x.len())?;
        Ok(self
            .groups
            .iter()
            .map(|g| g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
            .collect())
    }
}

/// `‖x‖_{S,p}`; pass `f64::INFINITY` for the max norm.
pub fn mixed_norm(x: &[f64], partition: &GroupPartition, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::ParameterDomain(format!("mixed norm needs p >= 1, got {p}")));
    }
    let norms = partition.group_norms(x)?;
    Ok(lp_of(&norms, p))
}

fn lp_of(values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |m, v| m.max(*v))
    } else if p == 1.0 {
        values.iter().sum()
    } else if p == 2.0 {
        values.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        values.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Number of groups with `‖x_{S_i}‖₂ > zero_tol`.
pub fn group_l0(x: &[f64], partition: &GroupPartition, zero_tol: f64) -> Result<usize> {
    if !(zero_tol >= 0.0) {
        return Err(Error::ParameterDomain(format!("zero_tol must be >= 0, got {zero_tol}")));
    }
    Ok(partition.group_norms(x)?.iter().filter(|n| **n > zero_tol).count())
}

/// A vector supported on a set of active groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSparseVector {
    data: Vec<f64>,
    active_groups: Vec<usize>,
}

impl GroupSparseVector {
    /// Fails if `data` is nonzero outside the active groups.
    pub fn new(data: Vec<f64>, partition: &GroupPartition, mut active_groups: Vec<usize>) -> Result<Self> {
        check_len(partition.dim(), data.len())?;
        active_groups.sort_unstable();
        active_groups.dedup();
        if let Some(&k) = active_groups.iter().find(|&&k| k >= partition.num_groups()) {
            return Err(Error::Argument(format!("group {k} out of range")));
        }
        let mut inside = vec![false; data.len()];
        for &k in &active_groups {
            for &i in partition.group(k) {
                inside[i] = true;
            }
        }
        if let Some(i) = (0..data.len()).find(|&i| !inside[i] && data[i] != 0.0) {
            return Err(Error::Argument(format!(
                "entry {i} is nonzero outside the active groups"
            )));
        }
        Ok(Self { data, active_groups })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn active_groups(&self) -> &[usize] {
        &self.active_groups
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Group indices of the `s` largest group norms, ties to the smaller index.
pub fn top_groups(norms: &[f64], s: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order.truncate(s);
    order.sort_unstable();
    order
}

/// Keeps the `s` groups of largest norm; the error is the `ℓ_{S,1}` mass of the rest.
pub fn best_group_approx(x: &[f64], partition: &GroupPartition, s: usize) -> Result<(GroupSparseVector, f64)> {
    if s > partition.num_groups() {
        return Err(Error::Argument(format!(
            "s = {s} exceeds the number of groups {}",
            partition.num_groups()
        )));
    }
    let norms = partition.group_norms(x)?;
    let keep = top_groups(&norms, s);
    let mut data = vec![0.0; x.len()];
    let mut kept_mass = 0.0;
    for &k in &keep {
        kept_mass += norms[k];
        for &i in partition.group(k) {
            data[i] = x[i];
        }
    }
    let total: f64 = norms.iter().sum();
    let error = norms
        .iter()
        .enumerate()
        .filter(|(k, _)| keep.binary_search(k).is_err())
        .map(|(_, n)| n)
        .sum::<f64>();
    debug_assert!((total - kept_mass - error).abs() <= 1e-9 * total.max(1.0));
    Ok((
        GroupSparseVector {
            data,
            active_groups: keep,
        },
        error,
    ))
}

/// `μ_S(Ψ) = min{√d · max_i ‖ψ_i‖_{S,∞}, 1}` over the rows `ψ_i` of `Ψ`.
pub fn coherence_mu(psi: &OrthogonalBasis, partition: &GroupPartition, d: usize) -> Result<f64> {
    let dim = psi.dim();
    check_len(partition.dim(), dim)?;
    if d == 0 || !dim.is_multiple_of(d) {
        return Err(Error::Argument(format!("d = {d} must divide D = {dim}")));
    }
    let m = psi.matrix();
    let mut worst = 0.0f64;
    for i in 0..dim {
        worst = worst.max(mixed_norm(m.row(i), partition, f64::INFINITY)?);
    }
    Ok(((d as f64).sqrt() * worst).min(1.0))
}

/// `Σ_{k=1}^{s} C(G, k)`, saturating at `u64::MAX`.
pub fn count_group_supports(num_groups: usize, s: usize) -> u64 {
    let mut total: u64 = 0;
    let mut binom: u128 = 1;
    for k in 1..=s.min(num_groups) {
        binom = binom * (num_groups - k + 1) as u128 / k as u128;
        total = total.saturating_add(u64::try_from(binom).unwrap_or(u64::MAX));
    }
    total
}

/// All nonempty supports of at most `s` groups: by size, then lexicographic.
pub fn enumerate_group_supports(num_groups: usize, s: usize) -> Result<SupportIter> {
    let total = count_group_supports(num_groups, s);
    if total > MAX_SUPPORTS {
        return Err(Error::Capacity(format!(
            "{total} supports for G = {num_groups}, s = {s} exceed {MAX_SUPPORTS}; use Monte Carlo mode"
        )));
    }
    Ok(SupportIter {
        num_groups,
        max_size: s.min(num_groups),
        current: if s == 0 || num_groups == 0 { None } else { Some(vec![0]) },
    })
}

/// Iterator returned by [`enumerate_group_supports`].
#[derive(Debug, Clone)]
pub struct SupportIter {
    num_groups: usize,
    max_size: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for SupportIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let g = self.num_groups;
        let mut next = out.clone();
        let k = next.len();
        // advance to the next k-combination in lexicographic order
        let pivot = (0..k).rev().find(|&i| next[i] < g - k + i);
        self.current = match pivot {
            Some(i) => {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                Some(next)
            }
            None if k < self.max_size => Some((0..=k).collect()),
            None => None,
        };
        Some(out)
    }
}
