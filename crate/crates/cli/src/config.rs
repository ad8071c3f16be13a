//! TOML experiment configuration and its validation.

use std::path::PathBuf;

use blockrip_core::chaos::{random_rank_one_family, MatrixFamily, MomentSampling};
use blockrip_core::matrices::BlockDiagonalMatrix;
use blockrip_core::recovery::Solver;
use blockrip_core::rip::{PsiMode, RicMethod};
use blockrip_core::{DenseMatrix, DistributionSpec, Error, GroupPartition, RngStream};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    PsiNorm,
    RicExact,
    RicMc,
    ChaosTail,
    MomentCheck,
    Chaining,
    PhaseTransition,
    Recover,
    IncrementCheck,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Sample,
        Command::PsiNorm,
        Command::RicExact,
        Command::RicMc,
        Command::ChaosTail,
        Command::MomentCheck,
        Command::Chaining,
        Command::PhaseTransition,
        Command::Recover,
        Command::IncrementCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::PsiNorm => "psi-norm",
            Command::RicExact => "ric-exact",
            Command::RicMc => "ric-mc",
            Command::ChaosTail => "chaos-tail",
            Command::MomentCheck => "moment-check",
            Command::Chaining => "chaining",
            Command::PhaseTransition => "phase-transition",
            Command::Recover => "recover",
            Command::IncrementCheck => "increment-check",
        }
    }

    pub fn parse(name: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// Measurement dimensions. `D` and `G` are optional cross-checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    #[serde(rename = "L")]
    pub num_blocks: usize,
    pub m: usize,
    pub d: usize,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub num_groups: Option<usize>,
    pub s: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            num_blocks: 2,
            m: 8,
            d: 4,
            total: None,
            num_groups: None,
            s: 1,
        }
    }
}

impl Dims {
    pub fn dim(&self) -> usize {
        self.d * self.num_blocks
    }
}

/// Explicit blocks `Φ_l` (row lists) used instead of a random draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<Vec<Vec<f64>>>,
    /// Files in the `rows cols` text format, resolved relative to the working directory.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub block_files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// `{scale · I_n}`.
    ScaledIdentity {
        n: usize,
        scale: f64,
    },
    /// `{scale · e₁e₁ᵀ}` in `ℝ^{n×n}`.
    RankOne {
        n: usize,
        scale: f64,
    },
    /// `count` random `uuᵀ`, `u` uniform on the sphere.
    RandomRankOne {
        n: usize,
        count: usize,
    },
    Explicit {
        members: Vec<Vec<Vec<f64>>>,
    },
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec::ScaledIdentity { n: 64, scale: 0.125 }
    }
}

impl FamilySpec {
    pub fn build(&self, stream: RngStream) -> blockrip_core::Result<MatrixFamily> {
        match self {
            FamilySpec::ScaledIdentity { n, scale } => {
                MatrixFamily::new(vec![DenseMatrix::diagonal(&vec![*scale; *n])])
            }
            FamilySpec::RankOne { n, scale } => {
                let mut e = vec![0.0; *n];
                if let Some(first) = e.first_mut() {
                    *first = 1.0;
                }
                MatrixFamily::new(vec![DenseMatrix::outer(&e, &e).scaled(*scale)])
            }
            FamilySpec::RandomRankOne { n, count } => random_rank_one_family(*n, *count, stream),
            FamilySpec::Explicit { members } => MatrixFamily::new(
                members
                    .iter()
                    .map(|rows| DenseMatrix::from_rows(rows))
                    .collect::<blockrip_core::Result<Vec<_>>>()?,
            ),
        }
    }
}

/// Grids; an empty grid means the command's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub u: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub s: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub radii: Vec<f64>,
}

/// Command knobs. Unset values fall back to the defaults documented per field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Orlicz / tail index; defaults to the Weibull `alpha`, else 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Exponent of `φ(x) = |x|^q/q`; default 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_q: Option<f64>,
    /// Phase-transition target; default `√2 - 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_target: Option<f64>,
    /// Default: exact when within capacity, else 10⁴ Monte Carlo trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ric_method: Option<RicMethod>,
    /// Default: plain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<MomentSampling>,
    /// Default: IHT, 500 iterations, with refit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<Solver>,
    /// Tail-fit split; default is the geometric midpoint of the fit window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<f64>,
    /// Number of default thresholds for `chaos-tail`; default 60.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default = "DistributionSpec::standard_gaussian")]
    pub dist: DistributionSpec,
    #[serde(default)]
    pub dims: Dims,
    /// 1-based index lists; default is contiguous groups of `group_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
    #[serde(default = "default_psi")]
    pub psi: PsiMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<Fixture>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub params: Params,
}

fn default_trials() -> usize {
    1000
}

fn default_psi() -> PsiMode {
    PsiMode::Identity
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            trials: default_trials(),
            output_path: None,
            dist: DistributionSpec::standard_gaussian(),
            dims: Dims::default(),
            partition: None,
            group_size: None,
            psi: default_psi(),
            fixture: None,
            family: None,
            grids: Grids::default(),
            params: Params::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| format!("config: {}", e.message().replace('\n', " ")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(c) = o.command {
            self.command = Some(c);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(p) = &o.output_path {
            self.output_path = Some(p.clone());
        }
    }

    /// The partition in force: the explicit one, or contiguous groups.
    pub fn build_partition(&self) -> blockrip_core::Result<GroupPartition> {
        let dim = self.dims.dim();
        match &self.partition {
            Some(groups) => GroupPartition::from_one_based(dim, groups),
            None => GroupPartition::contiguous(dim, self.group_size.unwrap_or(1)),
        }
    }

    pub fn fixture_blocks(&self) -> Result<Option<BlockDiagonalMatrix>, FixtureError> {
        let Some(fx) = &self.fixture else {
            return Ok(None);
        };
        let mut blocks = Vec::new();
        for rows in &fx.blocks {
            blocks.push(DenseMatrix::from_rows(rows).map_err(FixtureError::Core)?);
        }
        for path in &fx.block_files {
            let text =
                std::fs::read_to_string(path).map_err(|e| FixtureError::Io(format!("{}: {e}", path.display())))?;
            blocks.push(DenseMatrix::from_text(&text).map_err(FixtureError::Core)?);
        }
        BlockDiagonalMatrix::new(blocks).map(Some).map_err(FixtureError::Core)
    }

    /// Tail index used by `psi-norm`, `chaining` and `moment-check`.
    pub fn alpha(&self) -> f64 {
        self.params.alpha.unwrap_or(match self.dist {
            DistributionSpec::SymmetricWeibull { alpha } => alpha,
            _ => 2.0,
        })
    }
}

#[derive(Debug)]
pub enum FixtureError {
    Io(String),
    Core(Error),
}

fn core_reason(e: &Error) -> String {
    match e {
        Error::Argument(s) | Error::ParameterDomain(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Every rule the config breaks, as `field: rule`; empty when runnable.
pub fn validate(config: &ExperimentConfig) -> Vec<String> {
    let mut v = Vec::new();
    let dims = &config.dims;
    match config.dist {
        DistributionSpec::Gaussian { variance } if !(variance > 0.0 && variance.is_finite()) => {
            v.push("dist: variance > 0".to_string())
        }
        DistributionSpec::SymmetricWeibull { alpha } if !(alpha > 0.0 && alpha <= 2.0) => {
            v.push("dist: alpha in (0,2]".to_string())
        }
        DistributionSpec::PowerPhiSubGaussian { q, scale } => {
            if !(q > 1.0 && q <= 2.0) {
                v.push("dist: q in (1,2]".to_string());
            }
            if !(scale > 0.0 && scale.is_finite()) {
                v.push("dist: scale > 0".to_string());
            }
        }
        _ => {}
    }
    if dims.num_blocks == 0 || dims.m == 0 || dims.d == 0 {
        v.push("dims: L, m and d must be >= 1".to_string());
    }
    if let Some(total) = dims.total {
        if total != dims.dim() {
            v.push("dims: D must equal d*L".to_string());
        }
    }
    if config.trials == 0 {
        v.push("trials: must be >= 1".to_string());
    }
    if config.group_size == Some(0) {
        v.push("group_size: must be >= 1".to_string());
    }
    if config.partition.is_some() && config.group_size.is_some() {
        v.push("partition: give either partition or group_size".to_string());
    }
    let partition = if dims.dim() > 0 {
        match config.build_partition() {
            Ok(p) => Some(p),
            Err(e) => {
                let reason = core_reason(&e);
                v.push(if reason.starts_with("partition") {
                    reason
                } else {
                    format!("partition: {reason}")
                });
                None
            }
        }
    } else {
        None
    };
    if let Some(p) = &partition {
        if let Some(g) = dims.num_groups {
            if g != p.num_groups() {
                v.push("dims: G must equal the number of groups".to_string());
            }
        }
        if dims.s > p.num_groups() {
            v.push("dims: s must be <= G".to_string());
        }
        for &s in &config.grids.s {
            if s > p.num_groups() {
                v.push("grids.s: every s must be <= G".to_string());
                break;
            }
        }
    }
    if let Some(fx) = &config.fixture {
        if fx.blocks.is_empty() && fx.block_files.is_empty() {
            v.push("fixture: needs blocks or block_files".to_string());
        }
        for rows in &fx.blocks {
            if rows.len() != dims.m || rows.iter().any(|r| r.len() != dims.d) {
                v.push("fixture: every block must be m x d".to_string());
                break;
            }
        }
        if fx.blocks.len() + fx.block_files.len() != dims.num_blocks {
            v.push("fixture: number of blocks must equal L".to_string());
        }
    }
    if let Some(q) = config.params.phi_q {
        if !(q > 1.0 && q <= 2.0) {
            v.push("params.phi_q: q in (1,2]".to_string());
        }
    }
    if let Some(a) = config.params.alpha {
        if !(a > 0.0 && a <= 2.0) {
            v.push("params.alpha: alpha in (0,2]".to_string());
        }
    }
    if let Some(t) = config.params.delta_target {
        if !(t > 0.0) {
            v.push("params.delta_target: must be > 0".to_string());
        }
    }
    if config.grids.thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        v.push("grids.thresholds: must be strictly increasing".to_string());
    }
    if config.grids.radii.windows(2).any(|w| !(w[0] > w[1])) || config.grids.radii.iter().any(|r| !(*r > 0.0)) {
        v.push("grids.radii: must be positive and strictly decreasing".to_string());
    }
    if config.grids.p.iter().any(|&p| !(2..=20).contains(&p)) {
        v.push("grids.p: every p in [2, 20]".to_string());
    }
    if config.grids.m.contains(&0) {
        v.push("grids.m: every m must be >= 1".to_string());
    }
    if config.grids.u.iter().any(|u| !(*u > 0.0)) {
        v.push("grids.u: every u must be > 0".to_string());
    }
    if let Some(family) = &config.family {
        match family {
            FamilySpec::ScaledIdentity { n, .. } | FamilySpec::RankOne { n, .. } if *n == 0 => {
                v.push("family: n must be >= 1".to_string())
            }
            FamilySpec::RandomRankOne { n, count } if *n == 0 || *count == 0 => {
                v.push("family: n and count must be >= 1".to_string())
            }
            FamilySpec::Explicit { members } if members.is_empty() => {
                v.push("family: members must be nonempty".to_string())
            }
            _ => {}
        }
    }
    match config.command {
        Some(Command::ChaosTail) if config.trials < blockrip_core::chaos::TAIL_MIN_TRIALS => v.push(format!(
            "trials: chaos-tail needs >= {}",
            blockrip_core::chaos::TAIL_MIN_TRIALS
        )),
        Some(Command::MomentCheck) if config.trials < 2 => v.push("trials: moment-check needs >= 2".to_string()),
        Some(Command::PsiNorm) if config.trials < blockrip_core::distributions::PSI_MIN_SAMPLES => v.push(format!(
            "trials: psi-norm needs >= {}",
            blockrip_core::distributions::PSI_MIN_SAMPLES
        )),
        Some(Command::Chaining) if config.family.is_none() && dims.s == 0 => {
            v.push("dims: chaining needs s >= 1".to_string())
        }
        None => v.push("command: missing".to_string()),
        _ => {}
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_is_valid() {
        let mut c = ExperimentConfig::from_toml("command = \"sample\"").unwrap();
        assert!(validate(&c).is_empty(), "{:?}", validate(&c));
        c.dims.total = Some(9);
        assert_eq!(validate(&c), vec!["dims: D must equal d*L"]);
    }

    #[test]
    fn violations_name_field_and_rule() {
        let c =
            ExperimentConfig::from_toml("command = \"ric-exact\"\n[dist]\nkind = \"symmetric_weibull\"\nalpha = 2.5\n")
                .unwrap();
        assert_eq!(validate(&c), vec!["dist: alpha in (0,2]"]);
        let c =
            ExperimentConfig::from_toml("command = \"ric-exact\"\npartition = [[1,2],[2,3],[4,5,6,7,8]]\n").unwrap();
        assert_eq!(validate(&c), vec!["partition: overlap at index 2"]);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = ExperimentConfig::from_toml("command = \"sample\"\nseed = 3\ntrials = 10\n").unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            ..Overrides::default()
        });
        assert_eq!((c.seed, c.trials), (9, 10));
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::from_toml(
            "command = \"recover\"\ngroup_size = 4\n[dims]\nL = 4\nm = 8\nd = 16\ns = 2\n[grids]\nm = [2, 4]\n[params.solver]\nname = \"iht\"\niters = 100\n",
        )
        .unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }
}
