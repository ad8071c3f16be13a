//! Group-sparse recovery from `y = (1/√m)·BΨx` by iterative hard
//! thresholding and proximal gradient.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DistributionSpec;
use crate::error::{check_len, Error, Result};
use crate::group_model::{best_group_approx, GroupPartition, GroupSparseVector};
use crate::matrices::{norm2, random_block_diagonal, BlockDiagonalMatrix, DenseMatrix, OrthogonalBasis, POWER_TOL};
use crate::rip::{sensing_matrix, PsiMode};
use crate::rng::{RngStream, StreamRng};
use crate::stats::{wilson, Moments};

/// Relative error at or below which a recovery counts as exact.
pub const SUCCESS_TOL: f64 = 1e-4;
/// Consecutive residual increases treated as divergence.
pub const DIVERGENCE_RUN: usize = 10;
/// Default step as a fraction of `1/‖A‖²`.
pub const STEP_FRACTION: f64 = 0.9;
/// Largest ambient dimension accepted by [`recovery_experiment`].
pub const MAX_EXPERIMENT_DIM: usize = 256;

/// `y` together with `A = (1/√m)·BΨ` and the group model.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryProblem {
    y: Vec<f64>,
    a: DenseMatrix,
    op_norm: f64,
    partition: GroupPartition,
    s: usize,
}

impl RecoveryProblem {
    pub fn new(
        y: Vec<f64>,
        b: &BlockDiagonalMatrix,
        psi: &OrthogonalBasis,
        partition: GroupPartition,
        s: usize,
    ) -> Result<Self> {
        let a = sensing_matrix(b, psi)?;
        check_len(a.rows(), y.len())?;
        check_len(a.cols(), partition.dim())?;
        if s > partition.num_groups() {
            return Err(Error::Argument(format!(
                "s = {s} exceeds the number of groups {}",
                partition.num_groups()
            )));
        }
        // Ψ is orthogonal, so ‖BΨ‖ = ‖B‖ = max_l ‖Φ_l‖
        let op_norm = b.opnorm_2_2(POWER_TOL)? / (b.m() as f64).sqrt();
        Ok(Self {
            y,
            a,
            op_norm,
            partition,
            s,
        })
    }

    /// Same instance with different measurements.
    pub fn with_measurements(&self, y: Vec<f64>) -> Result<Self> {
        check_len(self.a.rows(), y.len())?;
        Ok(Self { y, ..self.clone() })
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sensing(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn partition(&self) -> &GroupPartition {
        &self.partition
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// `‖A‖_{2→2}`.
    pub fn op_norm(&self) -> f64 {
        self.op_norm
    }

    /// `0.9/‖A‖²`.
    pub fn default_step(&self) -> f64 {
        STEP_FRACTION / (self.op_norm * self.op_norm)
    }

    fn check_step(&self, step: f64) -> Result<()> {
        let limit = 2.0 / (self.op_norm * self.op_norm);
        if !(step > 0.0 && step < limit) {
            return Err(Error::Argument(format!("step must lie in (0, {limit}), got {step}")));
        }
        Ok(())
    }

    /// `y - Ax` and its norm.
    fn residual(&self, x: &[f64], r: &mut [f64]) -> f64 {
        self.a.matvec_into(x, r);
        for (ri, yi) in r.iter_mut().zip(&self.y) {
            *ri = yi - *ri;
        }
        norm2(r)
    }
}

/// Euclidean projection onto the `s`-group-sparse vectors.
pub fn group_hard_threshold(x: &[f64], partition: &GroupPartition, s: usize) -> Result<GroupSparseVector> {
    Ok(best_group_approx(x, partition, s)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub x_hat: Vec<f64>,
    /// `‖y - Ax_k‖` for each iterate, starting from `x_0 = 0`.
    pub residual_history: Vec<f64>,
    /// Objective per iterate; empty for IHT.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

struct DivergenceWatch {
    history: Vec<f64>,
    rising: usize,
}

impl DivergenceWatch {
    fn new() -> Self {
        Self {
            history: Vec::new(),
            rising: 0,
        }
    }

    fn push(&mut self, r: f64) -> Result<()> {
        if let Some(&last) = self.history.last() {
            self.rising = if r > last { self.rising + 1 } else { 0 };
        }
        self.history.push(r);
        if self.rising >= DIVERGENCE_RUN || !r.is_finite() {
            return Err(Error::Divergence {
                history: std::mem::take(&mut self.history),
            });
        }
        Ok(())
    }
}

/// Runs `x ← prox(x + step·Aᵀ(y - Ax))` from zero until `iters` steps or a fixed point.
///
/// Divergence is judged on `objective` when given, otherwise on the residual.
fn proximal_gradient<P, O>(
    problem: &RecoveryProblem,
    iters: usize,
    step: f64,
    mut prox: P,
    objective: Option<O>,
) -> Result<SolverOutcome>
where
    P: FnMut(&mut Vec<f64>) -> Result<()>,
    O: Fn(&[f64], f64) -> f64,
{
    problem.check_step(step)?;
    let n = problem.a.cols();
    let mut x = vec![0.0; n];
    let mut r = vec![0.0; problem.a.rows()];
    let mut grad = vec![0.0; n];
    let mut watch = DivergenceWatch::new();
    let mut residuals = Vec::new();
    let mut done = 0;
    let mut record = |x: &[f64], res: f64, watch: &mut DivergenceWatch| -> Result<()> {
        residuals.push(res);
        match &objective {
            Some(f) => watch.push(f(x, res)),
            None => watch.push(res),
        }
    };
    let res = problem.residual(&x, &mut r);
    record(&x, res, &mut watch)?;
    for _ in 0..iters {
        problem.a.matvec_t_into(&r, &mut grad);
        let mut next: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi + step * gi).collect();
        prox(&mut next)?;
        done += 1;
        let moved = x.iter().zip(&next).any(|(a, b)| a != b);
        x = next;
        let res = problem.residual(&x, &mut r);
        record(&x, res, &mut watch)?;
        if !moved {
            break;
        }
    }
    let objective_history = if objective.is_some() { watch.history } else { Vec::new() };
    Ok(SolverOutcome {
        x_hat: x,
        residual_history: residuals,
        objective_history,
        iterations: done,
    })
}

/// Group iterative hard thresholding.
pub fn group_iht(problem: &RecoveryProblem, iters: usize, step: f64) -> Result<SolverOutcome> {
    let partition = problem.partition.clone();
    let s = problem.s;
    proximal_gradient(
        problem,
        iters,
        step,
        |v| {
            *v = group_hard_threshold(v, &partition, s)?.into_data();
            Ok(())
        },
        None::<fn(&[f64], f64) -> f64>,
    )
}

/// `x_{S_i} ← max(0, 1 - τ/‖x_{S_i}‖₂)·x_{S_i}` for every group.
pub fn group_soft_threshold(x: &mut [f64], partition: &GroupPartition, tau: f64) {
    for g in partition.groups() {
        let n = g.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
        let shrink = if n > 0.0 { (1.0 - tau / n).max(0.0) } else { 0.0 };
        for &i in g {
            x[i] *= shrink;
        }
    }
}

/// `½‖y - Ax‖² + λ‖x‖_{S,1}`.
pub fn lasso_objective(problem: &RecoveryProblem, lambda: f64, x: &[f64]) -> Result<f64> {
    check_len(problem.a.cols(), x.len())?;
    let mut r = vec![0.0; problem.a.rows()];
    let res = problem.residual(x, &mut r);
    let penalty: f64 = problem.partition.group_norms(x)?.iter().sum();
    Ok(0.5 * res * res + lambda * penalty)
}

/// Proximal gradient (ISTA) on `½‖y - Ax‖² + λ‖x‖_{S,1}`.
pub fn group_ista(problem: &RecoveryProblem, lambda: f64, iters: usize, step: f64) -> Result<SolverOutcome> {
    if !(lambda >= 0.0) {
        return Err(Error::Argument(format!("lambda must be >= 0, got {lambda}")));
    }
    let partition = problem.partition.clone();
    let penalty = |x: &[f64], res: f64| {
        let l1: f64 = partition.group_norms(x).map(|g| g.iter().sum()).unwrap_or(f64::NAN);
        0.5 * res * res + lambda * l1
    };
    proximal_gradient(
        problem,
        iters,
        step,
        |v| {
            group_soft_threshold(v, &partition, lambda * step);
            Ok(())
        },
        Some(penalty),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum Solver {
    /// IHT, optionally followed by a least-squares refit on the final support.
    Iht {
        iters: usize,
        #[serde(default = "refit_default")]
        refit: bool,
    },
    Ista {
        lambda: f64,
        iters: usize,
    },
}

fn refit_default() -> bool {
    true
}

impl Solver {
    pub fn label(&self) -> &'static str {
        match self {
            Solver::Iht { .. } => "iht",
            Solver::Ista { .. } => "ista",
        }
    }

    /// Runs with the default step `0.9/‖A‖²`.
    pub fn solve(&self, problem: &RecoveryProblem) -> Result<SolverOutcome> {
        let step = problem.default_step();
        match *self {
            Solver::Iht { iters, refit } => {
                let mut out = group_iht(problem, iters, step)?;
                if refit {
                    out.x_hat = refit_on_support(problem, &out.x_hat)?;
                }
                Ok(out)
            }
            Solver::Ista { lambda, iters } => group_ista(problem, lambda, iters, step),
        }
    }
}

/// Least-squares solution restricted to the groups active in `x`.
///
/// Returns `x` unchanged when the restricted system is underdetermined or
/// the refit does not lower the residual.
pub fn refit_on_support(problem: &RecoveryProblem, x: &[f64]) -> Result<Vec<f64>> {
    check_len(problem.a.cols(), x.len())?;
    let active: Vec<usize> = problem
        .partition
        .group_norms(x)?
        .iter()
        .enumerate()
        .filter(|(_, n)| **n > 0.0)
        .map(|(i, _)| i)
        .collect();
    let cols = problem.partition.support_columns(&active);
    let rows = problem.a.rows();
    if cols.is_empty() || cols.len() > rows {
        return Ok(x.to_vec());
    }
    let sub = nalgebra::DMatrix::from_fn(rows, cols.len(), |i, j| problem.a.get(i, cols[j]));
    let y = nalgebra::DVector::from_column_slice(&problem.y);
    let Ok(z) = sub.svd(true, true).solve(&y, 1e-12) else {
        return Ok(x.to_vec());
    };
    let mut refit = vec![0.0; x.len()];
    for (j, &c) in cols.iter().enumerate() {
        refit[c] = z[j];
    }
    let mut r = vec![0.0; rows];
    let before = problem.residual(x, &mut r);
    let after = problem.residual(&refit, &mut r);
    Ok(if after <= before { refit } else { x.to_vec() })
}

/// Unit-norm vector on `s` uniformly chosen groups with Gaussian entries.
pub fn plant_signal(partition: &GroupPartition, s: usize, rng: &mut StreamRng) -> Vec<f64> {
    let mut x = vec![0.0; partition.dim()];
    if s == 0 {
        return x;
    }
    let sup = index::sample(rng, partition.num_groups(), s).into_vec();
    for j in partition.support_columns(&sup) {
        x[j] = rng.sample(StandardNormal);
    }
    let n = norm2(&x);
    x.iter_mut().for_each(|v| *v /= n);
    x
}

/// `‖x̂ - x₀‖/‖x₀‖`, or `‖x̂‖` when `x₀ = 0`.
pub fn relative_error(x_hat: &[f64], x0: &[f64]) -> f64 {
    let diff: f64 = x_hat.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let base = norm2(x0);
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoverySetup {
    pub spec: DistributionSpec,
    pub psi_mode: PsiMode,
    pub num_blocks: usize,
    pub d: usize,
    pub partition: GroupPartition,
    pub s: usize,
    pub m_grid: Vec<usize>,
    pub trials: usize,
    pub solver: Solver,
}

/// Success statistics for one `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub m: usize,
    pub s: usize,
    pub success_rate: f64,
    pub ci_halfwidth: f64,
    /// Mean relative error over runs that returned.
    pub mean_err: f64,
    pub successes: usize,
    pub trials: usize,
    /// Runs that ended in a solver error, counted as failures.
    pub solver_errors: usize,
    pub solver: String,
}

/// Plants, measures and recovers `trials` signals for every `m`.
///
/// Trial `t` at grid position `k` draws from `stream.substream(k).substream(t)`.
pub fn recovery_experiment(setup: &RecoverySetup, stream: RngStream) -> Result<Vec<RecoveryRow>> {
    let dim = setup.d * setup.num_blocks;
    if dim > MAX_EXPERIMENT_DIM {
        return Err(Error::Capacity(format!("dL = {dim} exceeds {MAX_EXPERIMENT_DIM}")));
    }
    check_len(dim, setup.partition.dim())?;
    if setup.s > setup.partition.num_groups() {
        return Err(Error::Argument("s exceeds the number of groups".into()));
    }
    if setup.trials == 0 {
        return Err(Error::Argument("trials must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(setup.m_grid.len());
    for (k, &m) in setup.m_grid.iter().enumerate() {
        let cell = stream.substream(k as u64);
        let outcomes: Vec<Result<f64>> = (0..setup.trials)
            .into_par_iter()
            .map(|t| {
                let draw = cell.substream(t as u64);
                let b = random_block_diagonal(&setup.spec, setup.num_blocks, m, setup.d, draw.substream(0))?;
                let psi = setup.psi_mode.basis(dim, draw.substream(1))?;
                let x0 = plant_signal(&setup.partition, setup.s, &mut draw.substream(2).rng());
                let y = sensing_matrix(&b, &psi)?.matvec(&x0)?;
                let problem = RecoveryProblem::new(y, &b, &psi, setup.partition.clone(), setup.s)?;
                let out = setup.solver.solve(&problem)?;
                Ok(relative_error(&out.x_hat, &x0))
            })
            .collect();
        let mut err = Moments::default();
        let (mut successes, mut errors) = (0, 0);
        for o in &outcomes {
            match o {
                Ok(e) => {
                    err.push(*e);
                    if *e <= SUCCESS_TOL {
                        successes += 1;
                    }
                }
                Err(Error::Capacity(msg)) => return Err(Error::Capacity(msg.clone())),
                Err(_) => errors += 1,
            }
        }
        rows.push(RecoveryRow {
            m,
            s: setup.s,
            success_rate: successes as f64 / setup.trials as f64,
            ci_halfwidth: wilson(successes, setup.trials).half_width,
            mean_err: if err.n > 0 { err.mean() } else { f64::NAN },
            successes,
            trials: setup.trials,
            solver_errors: errors,
            solver: setup.solver.label().to_string(),
        });
    }
    Ok(rows)
}
