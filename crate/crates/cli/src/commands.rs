//! One function per command; each returns header, rows and summary.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use blockrip_core::chaining::{
    build_rip_metric_set, covering_profile, default_radius_grid, dudley_gamma, gamma_split_estimate,
    gamma_u_quantities, MetricKind, MetricPointSet, VDims, DEFAULT_GRID_LEVELS, MAX_POINTS,
};
use blockrip_core::chaos::{
    calibrate_hw_constant, empirical_moment_curve, empirical_tail, tail_regime_fit, window_midpoint_split,
    MatrixFamily, MomentSampling,
};
use blockrip_core::distributions::{estimate_psi_alpha_norm, increment_tail_check, sample};
use blockrip_core::group_model::coherence_mu;
use blockrip_core::matrices::{random_block_diagonal, BlockDiagonalMatrix};
use blockrip_core::recovery::{recovery_experiment, RecoverySetup, Solver};
use blockrip_core::rip::{
    exact_group_ric, mc_group_ric_lower, phase_transition, PhaseTransitionSetup, RicEstimate, RicMethod,
};
use blockrip_core::{OrthogonalBasis, PhiFunction, RngStream};
use serde_json::Value;

use crate::config::{validate, Command, ExperimentConfig, FixtureError};
use crate::output::{config_hash, fmt_f64, write_result, ExperimentResult, VERSION};
use crate::CliError;

const STREAM_MAIN: u64 = 0;
const STREAM_FAMILY: u64 = 1;
const STREAM_BLOCKS: u64 = 2;
const STREAM_PSI: u64 = 3;

/// Default number of Monte Carlo vectors when exact RIC enumeration is out of reach.
pub const DEFAULT_MC_TRIALS: usize = 10_000;
/// Default IHT iteration budget.
pub const DEFAULT_IHT_ITERS: usize = 500;
const DEFAULT_THRESHOLDS: usize = 60;

struct Table {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
    summary: BTreeMap<String, Value>,
}

impl Table {
    fn new(header: &'static [&'static str]) -> Self {
        Self {
            header,
            rows: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }
}

/// Validates and runs a config in memory.
pub fn execute(config: &ExperimentConfig) -> Result<ExperimentResult, CliError> {
    let violations = validate(config);
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    let command = config.command.expect("validated");
    let start = Instant::now();
    let table = match command {
        Command::Sample => cmd_sample(config)?,
        Command::PsiNorm => cmd_psi_norm(config)?,
        Command::IncrementCheck => cmd_increment(config)?,
        Command::RicExact => cmd_ric(config, true)?,
        Command::RicMc => cmd_ric(config, false)?,
        Command::ChaosTail => cmd_chaos_tail(config)?,
        Command::MomentCheck => cmd_moment(config)?,
        Command::Chaining => cmd_chaining(config)?,
        Command::PhaseTransition => cmd_phase(config)?,
        Command::Recover => cmd_recover(config)?,
    };
    Ok(ExperimentResult {
        command,
        config: config.clone(),
        config_hash: config_hash(config),
        version: VERSION.to_string(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        header: table.header.iter().map(|h| h.to_string()).collect(),
        rows: table.rows,
        summary: table.summary,
    })
}

/// Where a config's CSV goes: `output_path`, else `<command>.csv`.
pub fn output_path(config: &ExperimentConfig) -> PathBuf {
    config
        .output_path
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", config.command.map(Command::name).unwrap_or("result"))))
}

/// [`execute`], then writes the CSV and sidecar.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult, CliError> {
    let result = execute(config)?;
    write_result(&result, &output_path(config))?;
    Ok(result)
}

fn main_stream(c: &ExperimentConfig) -> RngStream {
    RngStream::new(c.seed, STREAM_MAIN)
}

fn seed(c: &ExperimentConfig) -> String {
    c.seed.to_string()
}

fn family(c: &ExperimentConfig) -> Result<MatrixFamily, CliError> {
    Ok(c.family
        .clone()
        .unwrap_or_default()
        .build(RngStream::new(c.seed, STREAM_FAMILY))?)
}

fn blocks(c: &ExperimentConfig) -> Result<BlockDiagonalMatrix, CliError> {
    match c.fixture_blocks() {
        Ok(Some(b)) => Ok(b),
        Ok(None) => Ok(random_block_diagonal(
            &c.dist,
            c.dims.num_blocks,
            c.dims.m,
            c.dims.d,
            RngStream::new(c.seed, STREAM_BLOCKS),
        )?),
        Err(FixtureError::Io(s)) => Err(CliError::Io(s)),
        Err(FixtureError::Core(e)) => Err(CliError::Validation(vec![format!("fixture: {e}")])),
    }
}

fn psi(c: &ExperimentConfig) -> Result<OrthogonalBasis, CliError> {
    Ok(c.psi.basis(c.dims.dim(), RngStream::new(c.seed, STREAM_PSI))?)
}

fn s_grid(c: &ExperimentConfig) -> Vec<usize> {
    if c.grids.s.is_empty() {
        vec![c.dims.s]
    } else {
        c.grids.s.clone()
    }
}

fn m_grid(c: &ExperimentConfig) -> Vec<usize> {
    if c.grids.m.is_empty() {
        vec![c.dims.m]
    } else {
        c.grids.m.clone()
    }
}

fn cmd_sample(c: &ExperimentConfig) -> Result<Table, CliError> {
    let mut t = Table::new(&["index", "value", "seed"]);
    let xs = sample(&c.dist, c.trials, main_stream(c))?;
    let s = seed(c);
    t.rows = xs
        .iter()
        .enumerate()
        .map(|(i, x)| vec![i.to_string(), fmt_f64(*x), s.clone()])
        .collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    t.put("mean", mean);
    t.put(
        "variance",
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64,
    );
    Ok(t)
}

fn cmd_psi_norm(c: &ExperimentConfig) -> Result<Table, CliError> {
    let mut t = Table::new(&["alpha", "estimate", "samples", "seed"]);
    let alpha = c.alpha();
    let xs = sample(&c.dist, c.trials, main_stream(c))?;
    let est = estimate_psi_alpha_norm(&xs, alpha)?;
    t.rows
        .push(vec![fmt_f64(alpha), fmt_f64(est), c.trials.to_string(), seed(c)]);
    t.put("estimate", est);
    Ok(t)
}

fn cmd_increment(c: &ExperimentConfig) -> Result<Table, CliError> {
    let mut t = Table::new(&["u", "empirical", "bound", "std_error", "pass", "seed"]);
    let phi = PhiFunction::new(c.params.phi_q.unwrap_or(2.0))?;
    let u = if c.grids.u.is_empty() {
        vec![1.0, 2.0, 3.0, 4.0]
    } else {
        c.grids.u.clone()
    };
    let report = increment_tail_check(&c.dist, &phi, &u, c.trials, main_stream(c))?;
    for r in &report.rows {
        t.rows.push(vec![
            fmt_f64(r.u),
            fmt_f64(r.empirical),
            fmt_f64(r.bound),
            fmt_f64(r.std_error),
            r.pass.to_string(),
            seed(c),
        ]);
    }
    t.put("tau", report.tau);
    t.put("tau_is_exact", report.tau_is_exact);
    t.put("phi_t0", phi.conjugate_crossing());
    t.put("pass", report.pass);
    Ok(t)
}

fn ric_row(est: &RicEstimate, s: usize, seed: &str) -> Vec<String> {
    let support: Vec<String> = est.worst_support.iter().map(|g| (g + 1).to_string()).collect();
    vec![
        s.to_string(),
        fmt_f64(est.delta),
        serde_json::to_value(est.mode)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        est.supports_checked.to_string(),
        est.trials.to_string(),
        support.join(";"),
        seed.to_string(),
    ]
}

fn cmd_ric(c: &ExperimentConfig, exact: bool) -> Result<Table, CliError> {
    let mut t = Table::new(&[
        "s",
        "delta",
        "mode",
        "supports_checked",
        "trials",
        "worst_support",
        "seed",
    ]);
    let b = blocks(c)?;
    let basis = psi(c)?;
    let partition = c.build_partition()?;
    for (k, s) in s_grid(c).into_iter().enumerate() {
        let est = if exact {
            exact_group_ric(&b, &basis, &partition, s)?
        } else {
            mc_group_ric_lower(&b, &basis, &partition, s, c.trials, main_stream(c).substream(k as u64))?
        };
        t.rows.push(ric_row(&est, s, &seed(c)));
        if k == 0 {
            t.put("delta", est.delta);
        }
        t.put(&format!("delta_s{s}"), est.delta);
    }
    Ok(t)
}

fn default_thresholds(f: &MatrixFamily, count: usize) -> Vec<f64> {
    let r = f.radii().sup_gram_f;
    let (lo, hi) = (0.05 * r, 50.0 * r);
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

fn cmd_chaos_tail(c: &ExperimentConfig) -> Result<Table, CliError> {
    let mut t = Table::new(&["t_or_p", "value", "ci", "trials", "seed"]);
    let f = family(c)?;
    let thresholds = if c.grids.thresholds.is_empty() {
        default_thresholds(&f, c.params.threshold_count.unwrap_or(DEFAULT_THRESHOLDS).max(2))
    } else {
        c.grids.thresholds.clone()
    };
    let curve = empirical_tail(&f, &c.dist, &thresholds, c.trials, main_stream(c))?;
    for i in 0..curve.thresholds.len() {
        t.rows.push(vec![
            fmt_f64(curve.thresholds[i]),
            fmt_f64(curve.empirical_probs[i]),
            fmt_f64(curve.ci_halfwidths[i]),
            curve.trials.to_string(),
            seed(c),
        ]);
    }
    t.put("sup_gram_f", f.radii().sup_gram_f);
    match c.params.split.or_else(|| window_midpoint_split(&curve)) {
        Some(split) => {
            t.put("split", split);
            match tail_regime_fit(&curve, split) {
                Ok(fit) => {
                    t.put("low_exponent", fit.low_exponent);
                    t.put("high_exponent", fit.high_exponent);
                }
                Err(e) => t.put("fit_error", e.to_string()),
            }
        }
        None => t.put("fit_error", "no thresholds inside the fit window"),
    }
    if f.len() == 1 {
        // constant c of the single-matrix bound, fitted at the median threshold
        let a = &f.members()[0];
        let gram = a.transpose().matmul(a)?;
        if let Ok(hw_c) = calibrate_hw_constant(&gram, 1.0, c.alpha(), &curve) {
            t.put("hw_c", hw_c);
        }
    }
    Ok(t)
}

fn cmd_moment(c: &ExperimentConfig) -> Result<Table, CliError> {
    let mut t = Table::new(&["t_or_p", "value", "ci", "trials", "seed"]);
    let f = family(c)?;
    let p_grid: Vec<u32> = if c.grids.p.is_empty() {
        (1..=8).map(|k| 2 * k).collect()
    } else {
        c.grids.p.clone()
    };
    let sampling = c.params.sampling.unwrap_or(MomentSampling::Plain);
    let curve = empirical_moment_curve(&f.members()[0], &c.dist, &p_grid, c.trials, sampling, main_stream(c))?;
    for pt in &curve.points {
        t.rows.push(vec![
            pt.p.to_string(),
            fmt_f64(pt.empirical),
            fmt_f64(pt.ci_halfwidth),
            c.trials.to_string(),
            seed(c),
        ]);
    }
    let lo = p_grid.iter().copied().filter(|&p| p >= 4).min().unwrap_or(2);
    let hi = p_grid.iter().copied().max().unwrap_or(2);
    match curve.log_log_slope(lo, hi) {
        Ok(s) => t.put("slope", s),
        Err(e) => t.put("slope_error", e.to_string()),
    }
    t.put("slope_p_lo", lo);
    t.put("slope_p_hi", hi);
    t.put("calibration", curve.calibration);
    t.put("flagged", curve.points.iter().filter(|p| p.flagged).count());
    Ok(t)
}

fn cmd_chaining(c: &ExperimentConfig) -> Result<Table, CliError> {
    let mut t = Table::new(&["radius", "cover_upper", "cover_lower"]);
    let grid_or = |set: &MetricPointSet| {
        if c.grids.radii.is_empty() {
            default_radius_grid(set, DEFAULT_GRID_LEVELS)
        } else {
            c.grids.radii.clone()
        }
    };
    let set = if c.family.is_some() {
        let f = family(c)?;
        let explicit = (!c.grids.radii.is_empty()).then_some(c.grids.radii.as_slice());
        let g = gamma_u_quantities(&f, c.alpha(), explicit)?;
        t.put("gamma2", g.gamma2);
        t.put("gamma_alpha", g.gamma_alpha);
        t.put("Gamma", g.gamma);
        t.put("U1", g.u1);
        t.put("M_F", g.m_f);
        t.put("M_2_2", g.m_2_2);
        t.put("sup_gram_F", g.sup_gram_f);
        MetricPointSet::matrices(f.members(), MetricKind::Matrix2To2)?
    } else {
        if c.trials > MAX_POINTS {
            return Err(CliError::Capacity(format!(
                "chaining samples {} points; at most {MAX_POINTS} supported",
                c.trials
            )));
        }
        let basis = psi(c)?;
        let partition = c.build_partition()?;
        let dims = VDims {
            m: c.dims.m,
            d: c.dims.d,
            num_blocks: c.dims.num_blocks,
        };
        let rip = build_rip_metric_set(&basis, &partition, c.dims.s, dims, c.trials, main_stream(c))?;
        let mu = coherence_mu(&basis, &partition, c.dims.d)?;
        let grid = grid_or(&rip.set);
        let gamma2 = if rip.set.len() > 1 && rip.set.diameter() > 0.0 {
            dudley_gamma(&rip.set, 2.0, &grid)?
        } else {
            0.0
        };
        t.put("gamma2", gamma2);
        t.put("M_2_2", rip.m_2_2);
        t.put("M_F", rip.m_f);
        t.put("mu_S", mu);
        if rip.set.len() > 1 && rip.set.diameter() > 0.0 {
            let (low, high) = gamma_split_estimate(&rip.set, mu, c.dims.s, None, &grid)?;
            t.put("split_low", low);
            t.put("split_high", high);
        }
        rip.set
    };
    t.put("radius", set.radius());
    t.put("diameter", set.diameter());
    if set.len() > 1 && set.diameter() > 0.0 {
        for (r, up, low) in covering_profile(&set, &grid_or(&set))? {
            t.rows.push(vec![fmt_f64(r), up.to_string(), low.to_string()]);
        }
    }
    Ok(t)
}

fn cmd_phase(c: &ExperimentConfig) -> Result<Table, CliError> {
    let mut t = Table::new(&["s", "m", "prob", "mean_delta", "ci", "seed"]);
    let setup = PhaseTransitionSetup {
        spec: c.dist,
        psi_mode: c.psi,
        num_blocks: c.dims.num_blocks,
        d: c.dims.d,
        partition: c.build_partition()?,
        s_grid: s_grid(c),
        m_grid: m_grid(c),
        delta_target: c.params.delta_target.unwrap_or(std::f64::consts::SQRT_2 - 1.0),
        trials_per_cell: c.trials,
        method: c.params.ric_method.unwrap_or(RicMethod::ExactOrMonteCarlo {
            trials: DEFAULT_MC_TRIALS,
        }),
    };
    let cells = phase_transition(&setup, main_stream(c))?;
    for cell in &cells {
        t.rows.push(vec![
            cell.s.to_string(),
            cell.m.to_string(),
            fmt_f64(cell.prob),
            fmt_f64(cell.mean_delta),
            fmt_f64(cell.ci_halfwidth),
            seed(c),
        ]);
    }
    t.put("delta_target", setup.delta_target);
    t.put("cells", cells.len());
    Ok(t)
}

fn cmd_recover(c: &ExperimentConfig) -> Result<Table, CliError> {
    let mut t = Table::new(&["m", "s", "success_rate", "ci", "mean_err", "solver", "seed"]);
    let solver = c.params.solver.unwrap_or(Solver::Iht {
        iters: DEFAULT_IHT_ITERS,
        refit: true,
    });
    let setup = RecoverySetup {
        spec: c.dist,
        psi_mode: c.psi,
        num_blocks: c.dims.num_blocks,
        d: c.dims.d,
        partition: c.build_partition()?,
        s: c.dims.s,
        m_grid: m_grid(c),
        trials: c.trials,
        solver,
    };
    let rows = recovery_experiment(&setup, main_stream(c))?;
    let mut errors = 0;
    for r in &rows {
        errors += r.solver_errors;
        t.rows.push(vec![
            r.m.to_string(),
            r.s.to_string(),
            fmt_f64(r.success_rate),
            fmt_f64(r.ci_halfwidth),
            fmt_f64(r.mean_err),
            r.solver.clone(),
            seed(c),
        ]);
    }
    t.put("solver_errors", errors);
    Ok(t)
}
