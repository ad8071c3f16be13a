//! Group restricted isometry constants of `(1/√m)·BΨ`: exact enumeration,
//! Monte Carlo lower bounds and sample-complexity sweeps.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::group_model::{count_group_supports, enumerate_group_supports, GroupPartition};
use crate::matrices::{
    extreme_eigen_sym, haar_orthogonal, random_block_diagonal, BlockDiagonalMatrix, DenseMatrix, OrthogonalBasis,
    EIGEN_MAX_DIM, POWER_TOL,
};
use crate::rng::{chunked_trials, RngStream};
use crate::stats::{wilson, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RicMode {
    Exact,
    MonteCarloLower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicEstimate {
    pub delta: f64,
    pub mode: RicMode,
    pub supports_checked: u64,
    /// Group indices (0-based) of the maximizing support.
    pub worst_support: Vec<usize>,
    /// Random vectors tried; zero in exact mode.
    pub trials: usize,
}

/// `(1/√m)·BΨ` as a dense `mL × dL` matrix. Row block `l` is `Φ_l Ψ_l / √m`
/// where `Ψ_l` is the `l`-th block of `d` rows of `Ψ`.
pub fn sensing_matrix(b: &BlockDiagonalMatrix, psi: &OrthogonalBasis) -> Result<DenseMatrix> {
    let (m, d, big_l) = (b.m(), b.d(), b.num_blocks());
    let dim = d * big_l;
    if psi.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: psi.dim(),
        });
    }
    let scale = 1.0 / (m as f64).sqrt();
    let mut data = vec![0.0; m * big_l * dim];
    for (l, phi) in b.blocks().iter().enumerate() {
        let psi_l = psi.row_block(l, d);
        for i in 0..m {
            let out = &mut data[(l * m + i) * dim..(l * m + i + 1) * dim];
            for (k, a) in phi.row(i).iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                for (o, p) in out.iter_mut().zip(&psi_l[k * dim..(k + 1) * dim]) {
                    *o += scale * a * p;
                }
            }
        }
    }
    DenseMatrix::new(m * big_l, dim, data)
}

fn check_shapes(b: &BlockDiagonalMatrix, partition: &GroupPartition, s: usize) -> Result<()> {
    let dim = b.d() * b.num_blocks();
    if partition.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: partition.dim(),
        });
    }
    if s == 0 || s > partition.num_groups() {
        return Err(Error::Argument(format!(
            "s must lie in 1..={}, got {s}",
            partition.num_groups()
        )));
    }
    Ok(())
}

/// `max(λ_max - 1, 1 - λ_min)` of a Gram matrix.
fn gram_deviation(gram: &DenseMatrix) -> Result<f64> {
    if gram.rows() == 1 {
        return Ok((gram.get(0, 0) - 1.0).abs());
    }
    let (lo, hi) = extreme_eigen_sym(gram, POWER_TOL)?;
    Ok((hi - 1.0).max(1.0 - lo))
}

/// Exact `δ_s` by enumerating every support of at most `s` groups.
pub fn exact_group_ric(
    b: &BlockDiagonalMatrix,
    psi: &OrthogonalBasis,
    partition: &GroupPartition,
    s: usize,
) -> Result<RicEstimate> {
    check_shapes(b, partition, s)?;
    let mut sizes: Vec<usize> = partition.groups().iter().map(Vec::len).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let widest: usize = sizes.iter().take(s).sum();
    if widest > EIGEN_MAX_DIM {
        return Err(Error::Capacity(format!(
            "support Gram matrices of size {widest} exceed {EIGEN_MAX_DIM}"
        )));
    }
    let supports: Vec<Vec<usize>> = enumerate_group_supports(partition.num_groups(), s)?.collect();
    let gram = sensing_matrix(b, psi)?.gram();
    let deviations = supports
        .par_iter()
        .map(|sup| gram_deviation(&gram.principal_submatrix(&partition.support_columns(sup))))
        .collect::<Result<Vec<f64>>>()?;
    let (worst, delta) = argmax_first(&deviations);
    Ok(RicEstimate {
        delta,
        mode: RicMode::Exact,
        supports_checked: supports.len() as u64,
        worst_support: supports[worst].clone(),
        trials: 0,
    })
}

fn argmax_first(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Lower bound on `δ_s` from `trials` random unit vectors: a uniform support
/// of exactly `s` groups with Gaussian entries on it.
pub fn mc_group_ric_lower(
    b: &BlockDiagonalMatrix,
    psi: &OrthogonalBasis,
    partition: &GroupPartition,
    s: usize,
    trials: usize,
    stream: RngStream,
) -> Result<RicEstimate> {
    check_shapes(b, partition, s)?;
    if trials == 0 {
        return Err(Error::Argument("trials must be >= 1".into()));
    }
    let a = sensing_matrix(b, psi)?;
    let rows = a.rows();
    let num_groups = partition.num_groups();
    let chunks = chunked_trials(
        stream,
        trials,
        || (f64::NEG_INFINITY, 0usize, Vec::new()),
        |rng, t, best: &mut (f64, usize, Vec<usize>)| {
            let mut sup = index::sample(rng, num_groups, s).into_vec();
            sup.sort_unstable();
            let cols = partition.support_columns(&sup);
            let coef: Vec<f64> = cols.iter().map(|_| rng.sample(StandardNormal)).collect();
            let norm = coef.iter().map(|c| c * c).sum::<f64>().sqrt();
            let mut energy = 0.0;
            for r in 0..rows {
                let row = a.row(r);
                let v: f64 = cols.iter().zip(&coef).map(|(&j, c)| row[j] * c).sum::<f64>() / norm;
                energy += v * v;
            }
            let dev = (energy - 1.0).abs();
            if dev > best.0 {
                *best = (dev, t, sup);
            }
        },
    );
    let mut best = (f64::NEG_INFINITY, usize::MAX, Vec::new());
    for c in chunks {
        if c.0 > best.0 || (c.0 == best.0 && c.1 < best.1) {
            best = c;
        }
    }
    Ok(RicEstimate {
        delta: best.0,
        mode: RicMode::MonteCarloLower,
        supports_checked: trials as u64,
        worst_support: best.2,
        trials,
    })
}

/// `δ_2s < √2 - 1`.
pub fn recovery_gate(delta_2s: f64) -> bool {
    delta_2s < std::f64::consts::SQRT_2 - 1.0
}

/// How `Ψ` is chosen for each matrix draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiMode {
    Identity,
    Haar,
}

impl PsiMode {
    pub fn basis(self, dim: usize, stream: RngStream) -> Result<OrthogonalBasis> {
        match self {
            PsiMode::Identity => Ok(OrthogonalBasis::identity(dim)),
            PsiMode::Haar => haar_orthogonal(dim, stream),
        }
    }
}

/// RIC evaluation used by sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum RicMethod {
    Exact,
    MonteCarlo {
        trials: usize,
    },
    /// Exact when within capacity, otherwise Monte Carlo.
    ExactOrMonteCarlo {
        trials: usize,
    },
}

impl RicMethod {
    pub fn estimate(
        self,
        b: &BlockDiagonalMatrix,
        psi: &OrthogonalBasis,
        partition: &GroupPartition,
        s: usize,
        stream: RngStream,
    ) -> Result<RicEstimate> {
        match self {
            RicMethod::Exact => exact_group_ric(b, psi, partition, s),
            RicMethod::MonteCarlo { trials } => mc_group_ric_lower(b, psi, partition, s, trials, stream),
            RicMethod::ExactOrMonteCarlo { trials } => match exact_group_ric(b, psi, partition, s) {
                Err(Error::Capacity(_)) => mc_group_ric_lower(b, psi, partition, s, trials, stream),
                other => other,
            },
        }
    }

    /// Whether [`RicMethod::estimate`] would enumerate for this `(G, s)`.
    pub fn is_exact_for(self, num_groups: usize, s: usize) -> bool {
        match self {
            RicMethod::Exact => true,
            RicMethod::MonteCarlo { .. } => false,
            RicMethod::ExactOrMonteCarlo { .. } => {
                count_group_supports(num_groups, s) <= crate::group_model::MAX_SUPPORTS
            }
        }
    }
}

/// Parameters of a `(s, m)` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTransitionSetup {
    pub spec: DistributionSpec,
    pub psi_mode: PsiMode,
    pub num_blocks: usize,
    pub d: usize,
    pub partition: GroupPartition,
    pub s_grid: Vec<usize>,
    pub m_grid: Vec<usize>,
    pub delta_target: f64,
    pub trials_per_cell: usize,
    pub method: RicMethod,
}

/// One row of a phase-transition table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub s: usize,
    pub m: usize,
    pub prob: f64,
    pub mean_delta: f64,
    pub ci_halfwidth: f64,
    pub successes: usize,
    pub trials: usize,
    pub mode: RicMode,
}

/// Fraction of matrix draws with `δ_s ≤ delta_target`, for every `(s, m)`.
///
/// Draw `t` of cell `c` uses `stream.substream(c).substream(t)`.
pub fn phase_transition(setup: &PhaseTransitionSetup, stream: RngStream) -> Result<Vec<PhaseCell>> {
    let dim = setup.d * setup.num_blocks;
    if setup.partition.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: setup.partition.dim(),
        });
    }
    if setup.trials_per_cell == 0 {
        return Err(Error::Argument("trials_per_cell must be >= 1".into()));
    }
    if !(setup.delta_target > 0.0) {
        return Err(Error::Argument("delta_target must be positive".into()));
    }
    let mut cells = Vec::new();
    let mut cell_index = 0u64;
    for &s in &setup.s_grid {
        for &m in &setup.m_grid {
            let cell_stream = stream.substream(cell_index);
            cell_index += 1;
            let annotate = |e: Error| match e {
                Error::Capacity(msg) => Error::Capacity(format!("cell (s={s}, m={m}): {msg}")),
                other => other,
            };
            let results = (0..setup.trials_per_cell)
                .into_par_iter()
                .map(|t| {
                    let draw = cell_stream.substream(t as u64);
                    let b = random_block_diagonal(&setup.spec, setup.num_blocks, m, setup.d, draw.substream(0))?;
                    let psi = setup.psi_mode.basis(dim, draw.substream(1))?;
                    setup.method.estimate(&b, &psi, &setup.partition, s, draw.substream(2))
                })
                .collect::<Result<Vec<RicEstimate>>>()
                .map_err(annotate)?;
            let mut mom = Moments::default();
            let mut successes = 0;
            let mut mode = RicMode::Exact;
            for r in &results {
                mom.push(r.delta);
                if r.delta <= setup.delta_target {
                    successes += 1;
                }
                if r.mode == RicMode::MonteCarloLower {
                    mode = RicMode::MonteCarloLower;
                }
            }
            let ci = wilson(successes, results.len());
            cells.push(PhaseCell {
                s,
                m,
                prob: successes as f64 / results.len() as f64,
                mean_delta: mom.mean(),
                ci_halfwidth: ci.half_width,
                successes,
                trials: results.len(),
                mode,
            });
        }
    }
    Ok(cells)
}
