//! Covering numbers, entropy-integral bounds on γ-functionals, and the
//! `V(x)` operators whose image set controls the group RIP.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::MatrixFamily;
use crate::distributions::PhiFunction;
use crate::error::{check_len, Error, Result};
use crate::group_model::GroupPartition;
use crate::matrices::{frobenius_norm, opnorm_2_2, opnorm_2_inf, DenseMatrix, OrthogonalBasis, POWER_TOL};
use crate::rng::RngStream;

/// Largest point set with a cached distance matrix.
pub const MAX_POINTS: usize = 2048;
/// Levels of the default radius grid: `diam, diam/2, …, diam/2^10`.
pub const DEFAULT_GRID_LEVELS: u32 = 10;
/// Bisection steps when locating entropy numbers.
pub const ENTROPY_BISECTION_STEPS: u32 = 8;

/// The distance rule a point set was built with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    MatrixFrobenius,
    Matrix2To2,
    Matrix2ToInf,
    /// `d_F(V(x), V(y)) = √m‖x - y‖₂`.
    VFrobenius,
    /// `d_{2→2}(V(x), V(y)) = max_l ‖Ψ_l(x - y)‖₂`.
    V2To2,
}

/// Finite metric space with its distance matrix and the norm of every point
/// (its distance to the origin of the ambient normed space).
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPointSet {
    kind: MetricKind,
    n: usize,
    dist: Vec<f64>,
    norms: Vec<f64>,
}

impl MetricPointSet {
    /// Builds the distance matrix from `dist(i, j)` for `i < j`.
    pub fn from_fn<F>(kind: MetricKind, norms: Vec<f64>, dist: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<f64> + Sync,
    {
        let n = norms.len();
        if n == 0 {
            return Err(Error::Argument("point set must be nonempty".into()));
        }
        if n > MAX_POINTS {
            return Err(Error::Capacity(format!("{n} points exceed {MAX_POINTS}")));
        }
        let rows = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| dist(i, j)).collect::<Result<Vec<f64>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut d = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Ok(Self {
            kind,
            n,
            dist: d,
            norms,
        })
    }

    pub fn euclidean(points: &[Vec<f64>]) -> Result<Self> {
        let norms = points.iter().map(|p| l2(p)).collect();
        Self::from_fn(MetricKind::Euclidean, norms, |i, j| {
            check_len(points[i].len(), points[j].len())?;
            Ok(l2_diff(&points[i], &points[j]))
        })
    }

    /// Family members under the Frobenius, `ℓ₂→ℓ₂` or `ℓ₂→ℓ∞` metric.
    pub fn matrices(members: &[DenseMatrix], kind: MetricKind) -> Result<Self> {
        let norm: fn(&DenseMatrix) -> Result<f64> = match kind {
            MetricKind::MatrixFrobenius => |a| Ok(frobenius_norm(a)),
            MetricKind::Matrix2To2 => |a| opnorm_2_2(a, POWER_TOL),
            MetricKind::Matrix2ToInf => |a| Ok(opnorm_2_inf(a)),
            other => return Err(Error::Argument(format!("{other:?} is not a matrix metric"))),
        };
        let norms = members.iter().map(norm).collect::<Result<Vec<_>>>()?;
        Self::from_fn(kind, norms, |i, j| norm(&members[i].sub(&members[j])?))
    }

    /// `{V(x)}` for the given coefficient vectors under a V-metric.
    pub fn v_operators(xs: &[Vec<f64>], psi: &OrthogonalBasis, dims: VDims, kind: MetricKind) -> Result<Self> {
        let images = xs
            .iter()
            .map(|x| {
                check_len(dims.d * dims.num_blocks, x.len())?;
                psi.apply(x)
            })
            .collect::<Result<Vec<_>>>()?;
        let sqrt_m = (dims.m as f64).sqrt();
        match kind {
            MetricKind::VFrobenius => {
                let norms = xs.iter().map(|x| sqrt_m * l2(x)).collect();
                Self::from_fn(kind, norms, |i, j| Ok(sqrt_m * l2_diff(&xs[i], &xs[j])))
            }
            MetricKind::V2To2 => {
                let norms = images.iter().map(|z| max_block_norm(z, dims.d, None)).collect();
                Self::from_fn(kind, norms, |i, j| {
                    Ok(max_block_norm(&images[i], dims.d, Some(&images[j])))
                })
            }
            other => Err(Error::Argument(format!("{other:?} is not a V-operator metric"))),
        }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// `sup_t ‖t‖`, the radius of the set about the origin.
    pub fn radius(&self) -> f64 {
        self.norms.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let c = c.abs();
        Self {
            kind: self.kind,
            n: self.n,
            dist: self.dist.iter().map(|d| c * d).collect(),
            norms: self.norms.iter().map(|v| c * v).collect(),
        }
    }

    /// Largest violation of `d(i,k) ≤ d(i,j) + d(j,k)` over `samples` random triples.
    pub fn triangle_violation(&self, samples: usize, stream: RngStream) -> f64 {
        let mut rng = stream.rng();
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let (i, j, k) = (
                rng.random_range(0..self.n),
                rng.random_range(0..self.n),
                rng.random_range(0..self.n),
            );
            worst = worst.max(self.distance(i, k) - self.distance(i, j) - self.distance(j, k));
        }
        worst
    }
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn l2_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `max_l ‖z_l - w_l‖₂` over consecutive blocks of length `d`.
fn max_block_norm(z: &[f64], d: usize, w: Option<&[f64]>) -> f64 {
    z.chunks_exact(d)
        .enumerate()
        .map(|(l, zl)| match w {
            Some(w) => l2_diff(zl, &w[l * d..(l + 1) * d]),
            None => l2(zl),
        })
        .fold(0.0, f64::max)
}

/// `(upper, lower)` bounds on the covering number at `radius`.
///
/// The upper bound is a greedy cover by points of the set (first uncovered
/// index becomes a center); the lower bound is a greedy packing with
/// separation `> 2·radius`, no two of whose points share a ball of radius
/// `radius`.
pub fn covering_number(set: &MetricPointSet, radius: f64) -> Result<(usize, usize)> {
    if !(radius > 0.0) {
        return Err(Error::Argument(format!("radius must be positive, got {radius}")));
    }
    Ok((greedy_cover(set, radius), greedy_packing(set, 2.0 * radius)))
}

fn greedy_cover(set: &MetricPointSet, radius: f64) -> usize {
    let n = set.len();
    let mut covered = vec![false; n];
    let mut centers = 0;
    for i in 0..n {
        if covered[i] {
            continue;
        }
        centers += 1;
        for (j, c) in covered.iter_mut().enumerate() {
            if !*c && set.distance(i, j) <= radius {
                *c = true;
            }
        }
    }
    centers
}

fn greedy_packing(set: &MetricPointSet, separation: f64) -> usize {
    let mut chosen: Vec<usize> = Vec::new();
    for i in 0..set.len() {
        if chosen.iter().all(|&c| set.distance(i, c) > separation) {
            chosen.push(i);
        }
    }
    chosen.len()
}

/// `diam·2^{-k}` for `k = 0..=levels`.
pub fn default_radius_grid(set: &MetricPointSet, levels: u32) -> Vec<f64> {
    let diam = set.diameter();
    (0..=levels).map(|k| diam * 0.5f64.powi(k as i32)).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("radius grid must be nonempty".into()));
    }
    if grid.iter().any(|r| !(*r > 0.0) || !r.is_finite()) || grid.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Argument(
            "radius grid must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Step function `u ↦ (log N(u))^{1/α}` on `[0, top]` as `(lo, hi, value)`
/// intervals, valued at the left endpoint's covering upper bound; the bottom
/// interval `[0, δ_min]` uses `N ≤ |T|`.
fn entropy_steps(set: &MetricPointSet, alpha: f64, grid: &[f64]) -> Vec<(f64, f64, f64)> {
    let diam = set.diameter();
    let mut radii: Vec<f64> = Vec::with_capacity(grid.len() + 1);
    if grid[0] < diam {
        radii.push(diam);
    }
    radii.extend_from_slice(grid);
    let h = |count: usize| (count as f64).ln().max(0.0).powf(1.0 / alpha);
    let mut steps = Vec::with_capacity(radii.len());
    for w in radii.windows(2) {
        steps.push((w[1], w[0], h(greedy_cover(set, w[1]))));
    }
    let bottom = *radii.last().expect("nonempty grid");
    steps.push((0.0, bottom, h(set.len())));
    steps
}

/// `α·∫₀^{diam} (log N(T, d, u))^{1/α} du` as an upper Riemann sum on the grid.
pub fn dudley_gamma(set: &MetricPointSet, alpha: f64, radius_grid: &[f64]) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::ParameterDomain(format!("alpha in (0,2], got {alpha}")));
    }
    if set.len() == 1 {
        return Ok(0.0);
    }
    check_grid(radius_grid)?;
    let sum: f64 = entropy_steps(set, alpha, radius_grid)
        .iter()
        .map(|(lo, hi, v)| (hi - lo) * v)
        .sum();
    Ok(alpha * sum)
}

/// `Σ_{n ≥ k} φ*^{-1}(2ⁿ)·e_n` with `k = ⌊log₂ p⌋` and `e_n` the smallest
/// radius whose covering upper bound is at most `2^{2ⁿ}`.
pub fn gamma_phi_p_upper(set: &MetricPointSet, phi: &PhiFunction, p: f64, radius_grid: &[f64]) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Argument(format!("p must be >= 1, got {p}")));
    }
    if set.len() == 1 {
        return Ok(0.0);
    }
    check_grid(radius_grid)?;
    let delta_min = *radius_grid.last().expect("nonempty grid");
    let k = (p.ln() / 2f64.ln()).floor() as u32;
    let mut total = 0.0;
    for n in k.. {
        // 2^{2ⁿ} ≥ |T| once 2ⁿ ≥ log₂|T|, after which e_n = 0
        let exponent = 2f64.powi(n as i32);
        let target = if exponent >= 63.0 {
            usize::MAX
        } else {
            2f64.powf(exponent) as usize
        };
        let e_n = entropy_number(set, target, radius_grid);
        if e_n < delta_min {
            break;
        }
        total += phi.conjugate_inverse(exponent) * e_n;
    }
    Ok(total)
}

fn entropy_number(set: &MetricPointSet, target: usize, grid: &[f64]) -> f64 {
    if set.len() <= target {
        return 0.0;
    }
    let ok = |r: f64| greedy_cover(set, r) <= target;
    // grid[0] may sit below the diameter; the diameter always admits one center
    let mut hi = set.diameter().max(grid[0]);
    let mut lo = None;
    for &r in grid {
        if ok(r) {
            hi = r;
        } else {
            lo = Some(r);
            break;
        }
    }
    let Some(mut lo) = lo else {
        return 0.0;
    };
    for _ in 0..ENTROPY_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Block dimensions `(m, d, L)` of the measurement model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VDims {
    pub m: usize,
    pub d: usize,
    pub num_blocks: usize,
}

/// `V(x) = diag{V_1(x), …, V_L(x)}` where `V_l(x)` stacks `m` copies of
/// `(Ψ_l x)ᵀ` block-diagonally; stored as `Ψx` only.
#[derive(Debug, Clone, PartialEq)]
pub struct VOperator {
    x: Vec<f64>,
    z: Vec<f64>,
    dims: VDims,
}

impl VOperator {
    pub fn new(x: Vec<f64>, psi: &OrthogonalBasis, dims: VDims) -> Result<Self> {
        check_len(dims.d * dims.num_blocks, x.len())?;
        check_len(psi.dim(), x.len())?;
        let z = psi.apply(&x)?;
        Ok(Self { x, z, dims })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn dims(&self) -> VDims {
        self.dims
    }

    /// `Ψ_l x`.
    pub fn block_image(&self, l: usize) -> &[f64] {
        &self.z[l * self.dims.d..(l + 1) * self.dims.d]
    }

    /// `‖V(x)‖_{2→2} = ‖V(x)‖_{2→∞} = max_l ‖Ψ_l x‖₂`.
    pub fn op_norm(&self) -> f64 {
        max_block_norm(&self.z, self.dims.d, None)
    }

    /// Dense `mL × mdL` materialization.
    pub fn to_dense(&self) -> DenseMatrix {
        let VDims { m, d, num_blocks } = self.dims;
        let mut out = DenseMatrix::zeros(m * num_blocks, m * d * num_blocks);
        for l in 0..num_blocks {
            for i in 0..m {
                for k in 0..d {
                    out.set(l * m + i, (l * m + i) * d + k, self.z[l * d + k]);
                }
            }
        }
        out
    }
}

/// `V(x)ξ`: entry `(l, i)` is `⟨Ψ_l x, ξ^l_i⟩`, with `ξ^l_i` the `d` entries
/// starting at `(l·m + i)·d`.
pub fn v_apply(v: &VOperator, xi: &[f64]) -> Result<Vec<f64>> {
    let VDims { m, d, num_blocks } = v.dims;
    check_len(m * d * num_blocks, xi.len())?;
    let mut out = Vec::with_capacity(m * num_blocks);
    for l in 0..num_blocks {
        let zl = v.block_image(l);
        for i in 0..m {
            let seg = &xi[(l * m + i) * d..(l * m + i + 1) * d];
            out.push(zl.iter().zip(seg).map(|(a, b)| a * b).sum());
        }
    }
    Ok(out)
}

/// `‖V(x)‖_F = √m‖x‖₂`.
pub fn v_frobenius(v: &VOperator) -> f64 {
    (v.dims.m as f64).sqrt() * l2(&v.x)
}

/// `d_F(V(x), V(y))`.
pub fn v_distance_frobenius(x: &[f64], y: &[f64], m: usize) -> f64 {
    (m as f64).sqrt() * l2_diff(x, y)
}

/// `d_{2→2}(V(x), V(y)) = max_l ‖Ψ_l(x - y)‖₂`.
pub fn v_distance_2_2(x: &[f64], y: &[f64], psi: &OrthogonalBasis, d: usize) -> Result<f64> {
    check_len(x.len(), y.len())?;
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    Ok(max_block_norm(&psi.apply(&diff)?, d, None))
}

/// Sampled proxy for `{V(x) : x ∈ Ω}`, with Ω the unit `s`-group-sparse vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RipMetricSet {
    /// Sampled coefficient vectors.
    pub xs: Vec<Vec<f64>>,
    /// The sample under `d_{2→2}`.
    pub set: MetricPointSet,
    /// Largest `‖V(x)‖_{2→2}` in the sample.
    pub m_2_2: f64,
    /// `√m`, the common Frobenius norm.
    pub m_f: f64,
}

/// Draws `sample_count` points of Ω (uniform support of `s` groups, Gaussian
/// direction) and equips them with the `d_{2→2}` V-metric.
pub fn build_rip_metric_set(
    psi: &OrthogonalBasis,
    partition: &GroupPartition,
    s: usize,
    dims: VDims,
    sample_count: usize,
    stream: RngStream,
) -> Result<RipMetricSet> {
    if sample_count == 0 || sample_count > MAX_POINTS {
        return Err(Error::Capacity(format!("sample_count must lie in 1..={MAX_POINTS}")));
    }
    check_len(dims.d * dims.num_blocks, partition.dim())?;
    if s == 0 || s > partition.num_groups() {
        return Err(Error::Argument(format!("s must lie in 1..={}", partition.num_groups())));
    }
    let mut rng = stream.rng();
    let xs: Vec<Vec<f64>> = (0..sample_count)
        .map(|_| {
            let sup = index::sample(&mut rng, partition.num_groups(), s).into_vec();
            let mut x = vec![0.0; partition.dim()];
            for j in partition.support_columns(&sup) {
                x[j] = rng.sample(StandardNormal);
            }
            let n = l2(&x);
            x.iter_mut().for_each(|v| *v /= n);
            x
        })
        .collect();
    let set = MetricPointSet::v_operators(&xs, psi, dims, MetricKind::V2To2)?;
    Ok(RipMetricSet {
        m_2_2: set.radius(),
        m_f: (dims.m as f64).sqrt(),
        xs,
        set,
    })
}

/// The two pieces `∫₀^λ log N du` and `∫_λ^{top} log N du` of the `α = 1`
/// entropy sum; `lambda = None` splits at `μ_S`.
pub fn gamma_split_estimate(
    set: &MetricPointSet,
    mu_s: f64,
    s: usize,
    lambda: Option<f64>,
    radius_grid: &[f64],
) -> Result<(f64, f64)> {
    let lambda = lambda.unwrap_or(mu_s);
    let cap = ((s as f64).sqrt() * mu_s)
        .max(set.diameter())
        .max(radius_grid.first().copied().unwrap_or(0.0));
    if !(lambda >= 0.0) || lambda > cap {
        return Err(Error::Argument(format!("split point {lambda} outside [0, {cap}]")));
    }
    if set.len() == 1 {
        return Ok((0.0, 0.0));
    }
    check_grid(radius_grid)?;
    let (mut low, mut high) = (0.0, 0.0);
    for (lo, hi, v) in entropy_steps(set, 1.0, radius_grid) {
        let cut = lambda.clamp(lo, hi);
        low += (cut - lo) * v;
        high += (hi - cut) * v;
    }
    Ok((low, high))
}

/// `Γ`, `U₁` and the radii of a matrix family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaU {
    pub gamma2: f64,
    pub gamma_alpha: f64,
    #[serde(rename = "Gamma")]
    pub gamma: f64,
    #[serde(rename = "U1")]
    pub u1: f64,
    #[serde(rename = "M_F")]
    pub m_f: f64,
    #[serde(rename = "M_2_2")]
    pub m_2_2: f64,
    pub sup_gram_f: f64,
}

/// `Γ = γ₂(d_{2→2}) + γ_α(d_{2→α*})` with `U₁ = Γ(Γ + M_F)`.
///
/// `d_{2→α*}` is `d_{2→∞}` for `α ≤ 1`; for `α ∈ (1, 2]` the `d_{2→2}` metric
/// is used, which dominates it. `radius_grid = None` uses
/// [`default_radius_grid`] for each metric.
pub fn gamma_u_quantities(family: &MatrixFamily, alpha: f64, radius_grid: Option<&[f64]>) -> Result<GammaU> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::ParameterDomain(format!("alpha in (0,2], got {alpha}")));
    }
    let d22 = MetricPointSet::matrices(family.members(), MetricKind::Matrix2To2)?;
    let grid_for = |set: &MetricPointSet| -> Vec<f64> {
        match radius_grid {
            Some(g) => g.to_vec(),
            None => default_radius_grid(set, DEFAULT_GRID_LEVELS),
        }
    };
    let gamma_over = |set: &MetricPointSet, a: f64| -> Result<f64> {
        if set.len() == 1 || set.diameter() == 0.0 {
            return Ok(0.0);
        }
        dudley_gamma(set, a, &grid_for(set))
    };
    let gamma2 = gamma_over(&d22, 2.0)?;
    let gamma_alpha = if alpha <= 1.0 {
        let dinf = MetricPointSet::matrices(family.members(), MetricKind::Matrix2ToInf)?;
        gamma_over(&dinf, alpha)?
    } else {
        gamma_over(&d22, alpha)?
    };
    let r = family.radii();
    let gamma = gamma2 + gamma_alpha;
    Ok(GammaU {
        gamma2,
        gamma_alpha,
        gamma,
        u1: gamma * (gamma + r.m_f),
        m_f: r.m_f,
        m_2_2: r.m_2_2,
        sup_gram_f: r.sup_gram_f,
    })
}

/// `(radius, cover_upper, cover_lower)` rows along a grid.
pub fn covering_profile(set: &MetricPointSet, radius_grid: &[f64]) -> Result<Vec<(f64, usize, usize)>> {
    check_grid(radius_grid)?;
    radius_grid
        .iter()
        .map(|&r| covering_number(set, r).map(|(u, l)| (r, u, l)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::group_model::coherence_mu;
    use crate::matrices::{haar_orthogonal, random_block_diagonal};
    use crate::stats::Moments;

    fn segment(n: usize, seed: u64) -> (Vec<f64>, MetricPointSet) {
        let mut rng = RngStream::new(seed, 0).rng();
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let set = MetricPointSet::euclidean(&xs.iter().map(|x| vec![*x]).collect::<Vec<_>>()).unwrap();
        (xs, set)
    }

    /// Exact covering number of points on a line by closed intervals of length 2r.
    fn interval_cover(xs: &[f64], r: f64) -> usize {
        let mut v = xs.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let mut count = 0;
        let mut reach = f64::NEG_INFINITY;
        for x in v {
            if x > reach {
                count += 1;
                reach = x + 2.0 * r;
            }
        }
        count
    }

    #[test]
    fn covering_examples() {
        let two = MetricPointSet::euclidean(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(covering_number(&two, 0.4).unwrap(), (2, 2));
        assert_eq!(covering_number(&two, 1.0).unwrap(), (1, 1));
        assert_eq!(covering_number(&two, 5.0).unwrap(), (1, 1));
        assert!(covering_number(&two, 0.0).is_err());
    }

    #[test]
    fn covering_sandwich_on_segments() {
        for seed in 0..5 {
            let (xs, set) = segment(100, seed);
            for k in 0..12 {
                let r = 0.5f64.powi(k) * 0.6;
                let r = r.max(1e-4);
                let (up, lo) = covering_number(&set, r).unwrap();
                let exact = interval_cover(&xs, r);
                assert!(lo <= exact && exact <= up, "r={r}: {lo} {exact} {up}");
                assert!(up as f64 / lo as f64 <= 4.0);
            }
            // non-increasing in radius
            let grid: Vec<f64> = (0..30).map(|k| 0.001 * 1.3f64.powi(k)).collect();
            let vals: Vec<(usize, usize)> = grid.iter().map(|&r| covering_number(&set, r).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[0].0 >= w[1].0 && w[0].1 >= w[1].1));
        }
    }

    #[test]
    fn dudley_examples() {
        let single = MetricPointSet::euclidean(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(dudley_gamma(&single, 2.0, &[1.0]).unwrap(), 0.0);
        for rho in [0.3, 1.0, 7.0] {
            let two = MetricPointSet::euclidean(&[vec![0.0], vec![rho]]).unwrap();
            let g = dudley_gamma(&two, 2.0, &default_radius_grid(&two, DEFAULT_GRID_LEVELS)).unwrap();
            assert!(g >= rho * 2f64.ln().sqrt() / 2.0 && g <= 4.0 * rho, "{g}");
        }
        let (_, set) = segment(60, 3);
        let g = dudley_gamma(&set, 1.0, &default_radius_grid(&set, DEFAULT_GRID_LEVELS)).unwrap();
        let scaled = set.scaled(3.5);
        let gs = dudley_gamma(&scaled, 1.0, &default_radius_grid(&scaled, DEFAULT_GRID_LEVELS)).unwrap();
        assert!((gs - 3.5 * g).abs() < 1e-12 * gs);
        assert!(dudley_gamma(&set, 1.0, &[]).is_err());
    }

    #[test]
    fn dudley_grid_stability() {
        let mut rng = RngStream::new(12, 0).rng();
        let pts: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let set = MetricPointSet::euclidean(&pts).unwrap();
        let diam = set.diameter();
        let coarse: Vec<f64> = (0..=10).map(|k| diam * 0.5f64.powi(k)).collect();
        let fine: Vec<f64> = (0..=20).map(|k| diam * 0.5f64.powf(k as f64 / 2.0)).collect();
        for alpha in [1.0, 2.0] {
            let a = dudley_gamma(&set, alpha, &coarse).unwrap();
            let b = dudley_gamma(&set, alpha, &fine).unwrap();
            assert!((a - b).abs() / a < 0.3, "{a} {b}");
        }
    }

    #[test]
    fn gamma_phi_examples() {
        let phi = PhiFunction::quadratic();
        for n in 0..5 {
            let w = phi.conjugate_inverse(2f64.powi(n));
            assert!((w - (2.0 * 2f64.powi(n)).sqrt()).abs() < 1e-12);
        }
        let single = MetricPointSet::euclidean(&[vec![0.0]]).unwrap();
        assert_eq!(gamma_phi_p_upper(&single, &phi, 1.0, &[1.0]).unwrap(), 0.0);
        let (_, set) = segment(200, 4);
        let grid = default_radius_grid(&set, DEFAULT_GRID_LEVELS);
        let g1 = gamma_phi_p_upper(&set, &phi, 1.0, &grid).unwrap();
        let g4 = gamma_phi_p_upper(&set, &phi, 4.0, &grid).unwrap();
        assert!(g1 > 0.0 && g4 <= g1, "{g1} {g4}");
        assert!(gamma_phi_p_upper(&set, &phi, 0.5, &grid).is_err());
    }

    #[test]
    fn v_operator_examples() {
        let psi = OrthogonalBasis::identity(2);
        let dims = VDims {
            m: 1,
            d: 2,
            num_blocks: 1,
        };
        let v = VOperator::new(vec![1.0, 2.0], &psi, dims).unwrap();
        assert_eq!(v_apply(&v, &[3.0, 4.0]).unwrap(), vec![11.0]);
        let zero = VOperator::new(vec![0.0, 0.0], &psi, dims).unwrap();
        assert_eq!(v_apply(&zero, &[3.0, 4.0]).unwrap(), vec![0.0]);
        assert_eq!(v_frobenius(&zero), 0.0);
        assert!(v_apply(&v, &[1.0]).is_err());
        let dims3 = VDims {
            m: 3,
            d: 2,
            num_blocks: 1,
        };
        let unit = VOperator::new(vec![0.6, 0.8], &psi, dims3).unwrap();
        assert!((v_frobenius(&unit) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn v_operator_matches_dense() {
        let dims = VDims {
            m: 3,
            d: 2,
            num_blocks: 2,
        };
        let psi = haar_orthogonal(4, RngStream::new(1, 0)).unwrap();
        let mut rng = RngStream::new(1, 1).rng();
        for _ in 0..10 {
            let x: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let vx = VOperator::new(x.clone(), &psi, dims).unwrap();
            let vy = VOperator::new(y.clone(), &psi, dims).unwrap();
            let dense = vx.to_dense();
            assert!((v_frobenius(&vx) - frobenius_norm(&dense)).abs() < 1e-12);
            let xi: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
            let fast = v_apply(&vx, &xi).unwrap();
            let slow = dense.matvec(&xi).unwrap();
            assert!(fast.iter().zip(&slow).all(|(a, b)| (a - b).abs() < 1e-12));
            let diff = dense.sub(&vy.to_dense()).unwrap();
            assert!((v_distance_frobenius(&x, &y, 3) - frobenius_norm(&diff)).abs() < 1e-12);
            let op = opnorm_2_2(&diff, 1e-13).unwrap();
            assert!((v_distance_2_2(&x, &y, &psi, 2).unwrap() - op).abs() < 1e-12, "{op}");
            assert!((vx.op_norm() - opnorm_2_inf(&dense)).abs() < 1e-12);
        }
    }

    #[test]
    fn v_operator_distribution_matches_block_model() {
        let dims = VDims {
            m: 3,
            d: 2,
            num_blocks: 2,
        };
        let psi = haar_orthogonal(4, RngStream::new(2, 0)).unwrap();
        let x = vec![0.5, -0.5, 0.5, 0.5];
        let v = VOperator::new(x.clone(), &psi, dims).unwrap();
        let spec = DistributionSpec::SymmetricWeibull { alpha: 1.0 };
        let scale = 1.0 / spec.variance().sqrt();
        let sampler = spec.sampler().unwrap();
        let (mut a, mut b) = (Moments::default(), Moments::default());
        let mut rng = RngStream::new(2, 1).rng();
        let mut xi = vec![0.0; 12];
        for t in 0..20_000u64 {
            sampler.fill(&mut rng, &mut xi);
            xi.iter_mut().for_each(|v| *v *= scale);
            a.push(v_apply(&v, &xi).unwrap().iter().map(|y| y * y).sum());
            let blk = random_block_diagonal(&spec, 2, 3, 2, RngStream::new(3, t)).unwrap();
            let y = crate::matrices::block_apply(&blk, &psi.apply(&x).unwrap()).unwrap();
            b.push(y.iter().map(|y| y * y).sum());
        }
        let se = (a.std_error().powi(2) + b.std_error().powi(2)).sqrt();
        assert!((a.mean() - b.mean()).abs() < 3.0 * se);
    }

    #[test]
    fn rip_metric_set_properties() {
        for seed in 0..5 {
            let psi = haar_orthogonal(16, RngStream::new(seed, 0)).unwrap();
            let partition = GroupPartition::contiguous(16, 2).unwrap();
            let dims = VDims {
                m: 5,
                d: 4,
                num_blocks: 4,
            };
            let rip = build_rip_metric_set(&psi, &partition, 2, dims, 300, RngStream::new(seed, 1)).unwrap();
            let mu = coherence_mu(&psi, &partition, 4).unwrap();
            assert!(rip.m_2_2 <= 2f64.sqrt() * mu + 1e-9);
            assert!(rip.set.distance(7, 7) == 0.0);
            for x in rip.xs.iter().take(20) {
                let v = VOperator::new(x.clone(), &psi, dims).unwrap();
                assert!((v_frobenius(&v) - 5f64.sqrt()).abs() < 1e-12);
            }
            assert!(rip.set.triangle_violation(2000, RngStream::new(seed, 2)) <= 1e-9);
        }
        let psi = OrthogonalBasis::identity(4);
        let p = GroupPartition::contiguous(4, 2).unwrap();
        let dims = VDims {
            m: 1,
            d: 2,
            num_blocks: 2,
        };
        assert!(build_rip_metric_set(&psi, &p, 1, dims, 4000, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn split_pieces_add_up() {
        let psi = haar_orthogonal(8, RngStream::new(5, 0)).unwrap();
        let partition = GroupPartition::contiguous(8, 2).unwrap();
        let dims = VDims {
            m: 4,
            d: 4,
            num_blocks: 2,
        };
        let rip = build_rip_metric_set(&psi, &partition, 2, dims, 400, RngStream::new(5, 1)).unwrap();
        let mu = coherence_mu(&psi, &partition, 4).unwrap();
        let grid = default_radius_grid(&rip.set, DEFAULT_GRID_LEVELS);
        let whole = dudley_gamma(&rip.set, 1.0, &grid).unwrap();
        for lambda in [None, Some(0.0), Some(0.05), Some(rip.set.diameter())] {
            let (lo, hi) = gamma_split_estimate(&rip.set, mu, 2, lambda, &grid).unwrap();
            assert!((lo + hi - whole).abs() < 1e-10);
            if lambda == Some(0.0) {
                assert_eq!(lo, 0.0);
            }
            if lambda == Some(rip.set.diameter()) {
                assert_eq!(hi, 0.0);
            }
        }
    }

    #[test]
    fn gamma_u_examples() {
        let mut rng = RngStream::new(6, 0).rng();
        let a = DenseMatrix::new(3, 3, (0..9).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let single = MatrixFamily::new(vec![a.clone()]).unwrap();
        let q = gamma_u_quantities(&single, 1.0, None).unwrap();
        assert_eq!((q.gamma, q.u1), (0.0, 0.0));

        let members: Vec<DenseMatrix> = (0..12)
            .map(|_| DenseMatrix::new(3, 3, (0..9).map(|_| rng.sample(StandardNormal)).collect()).unwrap())
            .collect();
        let fam = MatrixFamily::new(members).unwrap();
        for alpha in [1.0, 2.0] {
            let q = gamma_u_quantities(&fam, alpha, None).unwrap();
            assert!(q.u1 >= q.gamma * q.gamma);
            let c = 2.5;
            let qs = gamma_u_quantities(&fam.scaled(c).unwrap(), alpha, None).unwrap();
            assert!((qs.m_f - c * q.m_f).abs() < 1e-9 * qs.m_f);
            assert!((qs.m_2_2 - c * q.m_2_2).abs() < 1e-6 * qs.m_2_2);
            assert!((qs.gamma - c * q.gamma).abs() < 1e-6 * qs.gamma);
            assert!((qs.u1 - c * (c * q.gamma) * (q.gamma + q.m_f)).abs() < 1e-5 * qs.u1);
        }
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn covering_bounds_ordered_and_monotone(points in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 2..40)) {
            let set = MetricPointSet::euclidean(&points).unwrap();
            let (mut last_upper, mut last_lower) = (usize::MAX, usize::MAX);
            for r in [0.05, 0.1, 0.2, 0.4, 0.8, 1.6, 3.2] {
                let (upper, lower) = covering_number(&set, r).unwrap();
                prop_assert!(lower <= upper);
                prop_assert!(upper <= last_upper && lower <= last_lower);
                last_upper = upper;
                last_lower = lower;
            }
        }
    }
}
