//! Scalar random models and Orlicz-type norm estimators.
//!
//! The φ-sub-Gaussian family is restricted to the power N-functions
//! `φ(x) = |x|^q / q`, `q ∈ (1, 2]`. Samples for that family come from the
//! generalized normal law with density proportional to `exp(-|x/a|^{q*} / q*)`,
//! whose log-MGF is asymptotically `φ(aλ)` by Legendre duality; `q = 2`
//! reduces to `N(0, a²)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRng};
use crate::stats::binomial_se;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Gaussian { variance: f64 },
    Rademacher,
    SymmetricWeibull { alpha: f64 },
    PowerPhiSubGaussian { q: f64, scale: f64 },
}

impl DistributionSpec {
    pub fn standard_gaussian() -> Self {
        DistributionSpec::Gaussian { variance: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DistributionSpec::Gaussian { variance } => {
                if !(variance > 0.0 && variance.is_finite()) {
                    return Err(Error::ParameterDomain(format!(
                        "variance must be positive, got {variance}"
                    )));
                }
            }
            DistributionSpec::Rademacher => {}
            DistributionSpec::SymmetricWeibull { alpha } => check_alpha(alpha)?,
            DistributionSpec::PowerPhiSubGaussian { q, scale } => {
                PhiFunction::new(q)?;
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::ParameterDomain(format!("scale must be positive, got {scale}")));
                }
            }
        }
        Ok(())
    }

    /// Exact second moment (all models are centered).
    pub fn variance(&self) -> f64 {
        match *self {
            DistributionSpec::Gaussian { variance } => variance,
            DistributionSpec::Rademacher => 1.0,
            DistributionSpec::SymmetricWeibull { alpha } => gamma(1.0 + 2.0 / alpha),
            DistributionSpec::PowerPhiSubGaussian { q, scale } => {
                let beta = conjugate_exponent(q);
                scale * scale * beta.powf(2.0 / beta) * gamma(3.0 / beta) / gamma(1.0 / beta)
            }
        }
    }

    /// A sampler for this model. Fails on out-of-domain parameters.
    pub fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        let kind = match *self {
            DistributionSpec::Gaussian { variance } => SamplerKind::Gaussian { sd: variance.sqrt() },
            DistributionSpec::Rademacher => SamplerKind::Rademacher,
            DistributionSpec::SymmetricWeibull { alpha } => SamplerKind::Weibull { inv_alpha: 1.0 / alpha },
            DistributionSpec::PowerPhiSubGaussian { q, scale } => {
                let beta = conjugate_exponent(q);
                if q == 2.0 {
                    SamplerKind::Gaussian { sd: scale }
                } else {
                    SamplerKind::GeneralizedNormal {
                        beta,
                        scale,
                        gamma: Gamma::new(1.0 / beta, 1.0)
                            .map_err(|e| Error::ParameterDomain(format!("generalized normal shape: {e}")))?,
                    }
                }
            }
        };
        Ok(Sampler { kind, spec: *self })
    }

    /// Log-likelihood ratio `log f(x) - log(f(x/κ)/κ)` between the model and
    /// the same model stretched by `κ`. `None` for models without a density.
    pub fn log_stretch_ratio(&self, x: f64, kappa: f64) -> Option<f64> {
        match *self {
            DistributionSpec::Gaussian { variance } => {
                Some(kappa.ln() - x * x * (1.0 - kappa.powi(-2)) / (2.0 * variance))
            }
            DistributionSpec::Rademacher => None,
            DistributionSpec::SymmetricWeibull { alpha } => {
                Some(alpha * kappa.ln() - x.abs().powf(alpha) * (1.0 - kappa.powf(-alpha)))
            }
            DistributionSpec::PowerPhiSubGaussian { q, scale } => {
                let beta = conjugate_exponent(q);
                Some(kappa.ln() - (x.abs() / scale).powf(beta) * (1.0 - kappa.powf(-beta)) / beta)
            }
        }
    }

    /// The symmetric Weibull model used as the decoupling comparison law.
    pub fn comparison_weibull(&self) -> DistributionSpec {
        let alpha = match *self {
            DistributionSpec::SymmetricWeibull { alpha } => alpha,
            DistributionSpec::PowerPhiSubGaussian { .. } => 1.0,
            DistributionSpec::Gaussian { .. } | DistributionSpec::Rademacher => 2.0,
        };
        DistributionSpec::SymmetricWeibull { alpha }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!("alpha in (0,2], got {alpha}")))
    }
}

pub(crate) fn conjugate_exponent(q: f64) -> f64 {
    q / (q - 1.0)
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Gaussian { sd: f64 },
    Rademacher,
    Weibull { inv_alpha: f64 },
    GeneralizedNormal { beta: f64, scale: f64, gamma: Gamma<f64> },
}

#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
    spec: DistributionSpec,
}

impl Sampler {
    pub fn spec(&self) -> DistributionSpec {
        self.spec
    }

    #[inline]
    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        match &self.kind {
            SamplerKind::Gaussian { sd } => sd * rng.sample::<f64, _>(StandardNormal),
            SamplerKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            SamplerKind::Weibull { inv_alpha } => {
                // inverse CDF of |ξ|: (-log U)^{1/α}, U uniform on (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                let mag = (-u.ln()).powf(*inv_alpha);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
            SamplerKind::GeneralizedNormal { beta, scale, gamma } => {
                let g: f64 = gamma.sample(rng);
                let mag = scale * (beta * g).powf(1.0 / beta);
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        }
    }

    pub fn fill(&self, rng: &mut StreamRng, out: &mut [f64]) {
        for v in out {
            *v = self.draw(rng);
        }
    }
}

/// `n` i.i.d. draws from `spec` on the given stream.
pub fn sample(spec: &DistributionSpec, n: usize, stream: RngStream) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Argument("sample count must be at least 1".into()));
    }
    let sampler = spec.sampler()?;
    let mut rng = stream.rng();
    let mut out = vec![0.0; n];
    sampler.fill(&mut rng, &mut out);
    Ok(out)
}

/// `P{|ξ| > x} = exp(-x^α)` for `ξ ~ W_s(α)`.
pub fn weibull_tail(alpha: f64, x: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(x >= 0.0) {
        return Err(Error::ParameterDomain(format!("x must be >= 0, got {x}")));
    }
    Ok((-x.powf(alpha)).exp())
}

/// Power N-function `φ(x) = |x|^q / q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiFunction {
    q: f64,
}

impl PhiFunction {
    pub fn new(q: f64) -> Result<Self> {
        if q > 1.0 && q <= 2.0 {
            Ok(Self { q })
        } else {
            Err(Error::ParameterDomain(format!("q in (1,2], got {q}")))
        }
    }

    /// `x²/2`, the Gaussian case.
    pub fn quadratic() -> Self {
        Self { q: 2.0 }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `q*` with `1/q + 1/q* = 1`.
    pub fn conjugate_exponent(&self) -> f64 {
        conjugate_exponent(self.q)
    }

    pub fn eval(&self, x: f64) -> f64 {
        x.abs().powf(self.q) / self.q
    }

    /// Inverse on `[0, ∞)`; negative arguments map to 0.
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else {
            (self.q * y).powf(1.0 / self.q)
        }
    }

    /// `φ*(y) = |y|^{q*} / q*`.
    pub fn conjugate(&self, y: f64) -> f64 {
        let qs = self.conjugate_exponent();
        y.abs().powf(qs) / qs
    }

    /// Inverse of `φ*` on `[0, ∞)`.
    pub fn conjugate_inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else {
            let qs = self.conjugate_exponent();
            (qs * y).powf(1.0 / qs)
        }
    }

    /// Threshold `t₀` beyond which `φ*(t) > t`: `t^{q*-1} > q*`, so
    /// `t₀ = q*^{1/(q*-1)}`. Equals 2 for the quadratic.
    pub fn conjugate_crossing(&self) -> f64 {
        let qs = self.conjugate_exponent();
        qs.powf(1.0 / (qs - 1.0))
    }
}

/// Closed-form Young-Fenchel transform of the power N-function.
pub fn phi_conjugate(phi: &PhiFunction, y: f64) -> f64 {
    phi.conjugate(y)
}

/// Grid-search Legendre transform `sup_x (x|y| - φ(x))`, used to cross-check
/// [`phi_conjugate`]. The maximizer lies at `|y|^{1/(q-1)}`, so the grid covers
/// `[0, 2|y|^{1/(q-1)} + 1]` with `points` equally spaced nodes; the returned
/// value is refined by golden-section search on the best grid cell.
pub fn phi_conjugate_grid(phi: &PhiFunction, y: f64, points: usize) -> f64 {
    let y = y.abs();
    if y == 0.0 {
        return 0.0;
    }
    let points = points.max(3);
    let upper = 2.0 * y.powf(1.0 / (phi.q() - 1.0)) + 1.0;
    let h = upper / (points - 1) as f64;
    let objective = |x: f64| x * y - phi.eval(x);
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..points {
        let v = objective(i as f64 * h);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let (mut a, mut b) = ((best_i as f64 - 1.0).max(0.0) * h, ((best_i + 1) as f64 * h).min(upper));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if objective(c) > objective(d) {
            b = d;
        } else {
            a = c;
        }
    }
    best.max(objective(0.5 * (a + b)))
}

/// Minimum sample count for the Orlicz-norm estimator.
pub const PSI_MIN_SAMPLES: usize = 1000;
/// Relative bisection tolerance of the norm estimators.
pub const BISECTION_RTOL: f64 = 1e-4;

/// Empirical `ψ_α` norm: the smallest `t` with `mean exp(|ξ|^α / t^α) <= 2`.
///
/// The root is bracketed by `M / (ln 2n)^{1/α}` and `M / (ln 2)^{1/α}` where
/// `M = max |ξ|`, so the bracket scales with the data. Non-finite samples
/// yield `+∞`.
pub fn estimate_psi_alpha_norm(samples: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if samples.is_empty() {
        return Err(Error::Argument("empty sample".into()));
    }
    if samples.len() < PSI_MIN_SAMPLES {
        return Err(Error::Argument(format!(
            "need at least {PSI_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let max = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !max.is_finite() || samples.iter().any(|x| x.is_nan()) {
        return Ok(f64::INFINITY);
    }
    if max == 0.0 {
        return Ok(0.0);
    }
    let n = samples.len() as f64;
    let mean_exp = |t: f64| samples.iter().map(|x| (x.abs() / t).powf(alpha).exp()).sum::<f64>() / n;
    let mut lo = max / (2.0 * n).ln().powf(1.0 / alpha);
    let mut hi = max / std::f64::consts::LN_2.powf(1.0 / alpha);
    while hi - lo > BISECTION_RTOL * hi {
        let mid = 0.5 * (lo + hi);
        if mean_exp(mid) <= 2.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Empirical MGF values above this are treated as overflow.
pub const MGF_CLIP: f64 = 1e30;

#[derive(Debug, Clone, PartialEq)]
pub struct TauEstimate {
    pub value: f64,
    pub argmax_lambda: f64,
    /// Grid points whose empirical MGF exceeded [`MGF_CLIP`].
    pub skipped: Vec<f64>,
}

/// `λ ∈ ±{0.05 · 1.15^k}` up to about 4, both signs.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = Vec::new();
    let mut l = 0.05;
    while l <= 4.0 {
        grid.push(l);
        grid.push(-l);
        l *= 1.15;
    }
    grid
}

/// `max_λ φ^{-1}(log Ê exp(λξ)) / |λ|` over the grid.
pub fn estimate_tau_phi(samples: &[f64], phi: &PhiFunction, lambda_grid: &[f64]) -> Result<TauEstimate> {
    if samples.is_empty() {
        return Err(Error::Argument("empty sample".into()));
    }
    if lambda_grid.is_empty() {
        return Err(Error::Argument("empty lambda grid".into()));
    }
    if lambda_grid.contains(&0.0) {
        return Err(Error::Argument("lambda grid must exclude 0".into()));
    }
    let n = samples.len() as f64;
    let clip = MGF_CLIP.ln();
    let mut best = f64::NEG_INFINITY;
    let mut argmax = f64::NAN;
    let mut skipped = Vec::new();
    for &lambda in lambda_grid {
        let shift = samples.iter().map(|x| lambda * x).fold(f64::NEG_INFINITY, f64::max);
        let log_mgf = shift + (samples.iter().map(|x| (lambda * x - shift).exp()).sum::<f64>() / n).ln();
        if !(log_mgf <= clip) {
            skipped.push(lambda);
            continue;
        }
        let ratio = phi.inverse(log_mgf) / lambda.abs();
        if ratio > best {
            best = ratio;
            argmax = lambda;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::Argument(
            "every lambda grid point overflowed the empirical MGF".into(),
        ));
    }
    Ok(TauEstimate {
        value: best,
        argmax_lambda: argmax,
        skipped,
    })
}

/// `τ_φ` in closed form, when known for the pair.
pub fn tau_phi_exact(spec: &DistributionSpec, phi: &PhiFunction) -> Option<f64> {
    if phi.q() != 2.0 {
        return None;
    }
    match *spec {
        DistributionSpec::Gaussian { variance } => Some(variance.sqrt()),
        // log cosh λ <= λ²/2 with equality to second order at 0
        DistributionSpec::Rademacher => Some(1.0),
        DistributionSpec::PowerPhiSubGaussian { q: 2.0, scale } => Some(scale),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementRow {
    pub u: f64,
    pub empirical: f64,
    pub bound: f64,
    pub std_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementReport {
    pub tau: f64,
    pub tau_is_exact: bool,
    pub trials: usize,
    pub rows: Vec<IncrementRow>,
    pub pass: bool,
}

/// Empirical check of `P{|X| >= u τ_φ(X)} <= 2 exp(-φ*(u))` on a grid of `u`.
///
/// `τ_φ(X)` is taken in closed form when available and estimated from the
/// same draws on [`default_lambda_grid`] otherwise.
pub fn increment_tail_check(
    spec: &DistributionSpec,
    phi: &PhiFunction,
    u_grid: &[f64],
    trials: usize,
    stream: RngStream,
) -> Result<IncrementReport> {
    let draws = sample(spec, trials, stream)?;
    let (tau, tau_is_exact) = match tau_phi_exact(spec, phi) {
        Some(t) => (t, true),
        None => (estimate_tau_phi(&draws, phi, &default_lambda_grid())?.value, false),
    };
    let rows: Vec<IncrementRow> = u_grid
        .iter()
        .map(|&u| {
            let level = u * tau;
            let hits = draws.iter().filter(|x| x.abs() >= level).count();
            let empirical = hits as f64 / trials as f64;
            let bound = 2.0 * (-phi.conjugate(u)).exp();
            let std_error = binomial_se(empirical, trials);
            IncrementRow {
                u,
                empirical,
                bound,
                std_error,
                pass: empirical <= bound + 3.0 * std_error,
            }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass);
    Ok(IncrementReport {
        tau,
        tau_is_exact,
        trials,
        rows,
        pass,
    })
}
