//! Chaos statistics `sup_A |‖Aξ‖² - E‖Aξ‖²|`, decoupled chaos moments,
//! Hanson-Wright style bound evaluators and empirical tail curves.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{DistributionSpec, Sampler};
use crate::error::{check_len, Error, Result};
use crate::matrices::{frobenius_norm, opnorm_2_2, opnorm_2_inf, DenseMatrix, POWER_TOL};
use crate::rng::{chunked_trials, RngStream, StreamRng};
use crate::stats::{linear_fit, wilson, Moments, Z95};

/// Largest moment order accepted by the moment routines.
pub const MAX_MOMENT_ORDER: f64 = 20.0;
/// Relative 95% half-width of a moment estimate above which it is flagged.
pub const MOMENT_FLAG_RELATIVE_CI: f64 = 0.5;
/// Fewest trials accepted by [`empirical_tail`].
pub const TAIL_MIN_TRIALS: usize = 1000;
/// Probability window used by [`tail_regime_fit`].
pub const FIT_PROB_WINDOW: (f64, f64) = (1e-4, 0.5);
/// Fewest points per side in [`tail_regime_fit`].
pub const FIT_MIN_POINTS: usize = 5;

/// `α* = α/(α-1)` for `α ∈ (1, 2]` and `∞` for `α ∈ (0, 1]`.
pub fn alpha_star(alpha: f64) -> f64 {
    if alpha > 1.0 {
        alpha / (alpha - 1.0)
    } else {
        f64::INFINITY
    }
}

/// Norms of one family member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberNorms {
    pub frobenius: f64,
    /// `‖A‖_F²`, summed directly rather than squared from `frobenius`.
    pub frobenius_sq: f64,
    pub op_2_2: f64,
    pub op_2_inf: f64,
    /// `‖AᵀA‖_F`.
    pub gram_frobenius: f64,
}

impl MemberNorms {
    fn of(a: &DenseMatrix) -> Result<Self> {
        Ok(Self {
            frobenius: frobenius_norm(a),
            frobenius_sq: a.data().iter().map(|v| v * v).sum(),
            op_2_2: opnorm_2_2(a, POWER_TOL)?,
            op_2_inf: opnorm_2_inf(a),
            gram_frobenius: frobenius_norm(&a.gram()),
        })
    }
}

/// Radii of a family: suprema of the member norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyRadii {
    pub m_f: f64,
    pub m_2_2: f64,
    pub m_2_inf: f64,
    pub sup_gram_f: f64,
}

/// A finite set of `m × n` matrices with cached norms.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFamily {
    members: Vec<DenseMatrix>,
    norms: Vec<MemberNorms>,
    radii: FamilyRadii,
}

impl MatrixFamily {
    pub fn new(members: Vec<DenseMatrix>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Argument("matrix family must be nonempty".into()))?;
        let (r, c) = (first.rows(), first.cols());
        if let Some(bad) = members.iter().find(|a| a.rows() != r || a.cols() != c) {
            return Err(Error::Argument(format!(
                "family members must share shape {r}x{c}, found {}x{}",
                bad.rows(),
                bad.cols()
            )));
        }
        let norms = members.iter().map(MemberNorms::of).collect::<Result<Vec<_>>>()?;
        let sup = |f: fn(&MemberNorms) -> f64| norms.iter().map(f).fold(0.0, f64::max);
        let radii = FamilyRadii {
            m_f: sup(|n| n.frobenius),
            m_2_2: sup(|n| n.op_2_2),
            m_2_inf: sup(|n| n.op_2_inf),
            sup_gram_f: sup(|n| n.gram_frobenius),
        };
        Ok(Self { members, norms, radii })
    }

    pub fn members(&self) -> &[DenseMatrix] {
        &self.members
    }

    pub fn norms(&self) -> &[MemberNorms] {
        &self.norms
    }

    pub fn radii(&self) -> FamilyRadii {
        self.radii
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `(m, n)` shape shared by all members.
    pub fn shape(&self) -> (usize, usize) {
        (self.members[0].rows(), self.members[0].cols())
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.members.iter().map(|a| a.scaled(c)).collect())
    }
}

/// `count` members `uuᵀ` with `u` uniform on the unit sphere of `ℝⁿ`.
///
/// For `count ≪ n` the members are nearly orthogonal in the trace inner product.
pub fn random_rank_one_family(n: usize, count: usize, stream: RngStream) -> Result<MatrixFamily> {
    if n == 0 || count == 0 {
        return Err(Error::Argument("random rank-one family needs n, count >= 1".into()));
    }
    let mut rng = stream.rng();
    let members = (0..count)
        .map(|_| {
            let mut u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= norm);
            DenseMatrix::outer(&u, &u)
        })
        .collect();
    MatrixFamily::new(members)
}

fn squared_image(a: &DenseMatrix, x: &[f64], buf: &mut [f64]) -> f64 {
    a.matvec_into(x, buf);
    buf.iter().map(|v| v * v).sum()
}

/// `max_A |‖Aξ‖² - ‖A‖_F²|`, assuming unit-variance entries in `ξ`.
pub fn chaos_sup_statistic(family: &MatrixFamily, xi: &[f64]) -> Result<f64> {
    let (m, n) = family.shape();
    check_len(n, xi.len())?;
    let mut buf = vec![0.0; m];
    Ok(sup_statistic_unchecked(family, xi, &mut buf))
}

fn sup_statistic_unchecked(family: &MatrixFamily, xi: &[f64], buf: &mut [f64]) -> f64 {
    family
        .members
        .iter()
        .zip(&family.norms)
        .map(|(a, nrm)| (squared_image(a, xi, buf) - nrm.frobenius_sq).abs())
        .fold(0.0, f64::max)
}

/// `ηᵀ AᵀA η̃`.
pub fn decoupled_chaos(a: &DenseMatrix, eta: &[f64], eta_tilde: &[f64]) -> Result<f64> {
    check_len(a.cols(), eta.len())?;
    check_len(a.cols(), eta_tilde.len())?;
    let u = a.matvec(eta)?;
    let v = a.matvec(eta_tilde)?;
    Ok(u.iter().zip(&v).map(|(x, y)| x * y).sum())
}

fn unit_variance_fill(sampler: &Sampler, scale: f64, rng: &mut StreamRng, out: &mut [f64]) {
    sampler.fill(rng, out);
    if scale != 1.0 {
        out.iter_mut().for_each(|v| *v *= scale);
    }
}

/// How moments are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSampling {
    /// Plain power means.
    Plain,
    /// Importance sampling: entries that `A` touches are drawn from the model
    /// stretched by the factor locating the mode of `|x|^p f(x)`, and every
    /// draw is reweighted by the likelihood ratio.
    Tilted,
}

/// One point of a moment curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub p: u32,
    /// Estimated `‖ηᵀAᵀAη̃‖_{L_p}`.
    pub empirical: f64,
    /// Delta-method 95% half-width of `empirical`.
    pub ci_halfwidth: f64,
    /// Calibrated `C·(p^{1/2}‖AᵀA‖_F + p^{2/α}‖AᵀA‖_{2→2})`.
    pub bound: f64,
    /// Set when the moment estimate's relative 95% half-width exceeds 50%.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurve {
    pub points: Vec<MomentPoint>,
    /// Constant `C`, chosen so the bound meets the empirical value at `p = 2`.
    pub calibration: f64,
    pub alpha: f64,
    pub gram_frobenius: f64,
    pub gram_op: f64,
}

impl MomentCurve {
    /// Least-squares slope of `log L_p` against `log p` over `p ∈ [lo, hi]`.
    pub fn log_log_slope(&self, lo: u32, hi: u32) -> Result<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .points
            .iter()
            .filter(|pt| pt.p >= lo && pt.p <= hi && pt.empirical > 0.0)
            .map(|pt| ((pt.p as f64).ln(), pt.empirical.ln()))
            .unzip();
        linear_fit(&x, &y)
            .map(|(slope, _)| slope)
            .ok_or_else(|| Error::FitDomain(format!("fewer than two usable points in p ∈ [{lo}, {hi}]")))
    }
}

fn tail_index(spec: &DistributionSpec) -> f64 {
    match *spec {
        DistributionSpec::SymmetricWeibull { alpha } => alpha,
        DistributionSpec::PowerPhiSubGaussian { q, .. } => crate::distributions::conjugate_exponent(q),
        DistributionSpec::Gaussian { .. } | DistributionSpec::Rademacher => 2.0,
    }
}

/// Stretch factor moving the bulk of the model onto the mode of `|x|^p f(x)`.
fn stretch_for(spec: &DistributionSpec, p: f64) -> f64 {
    match *spec {
        DistributionSpec::SymmetricWeibull { alpha } => (1.0 + p / alpha).powf(1.0 / alpha),
        DistributionSpec::Gaussian { .. } => (1.0 + p).sqrt(),
        DistributionSpec::PowerPhiSubGaussian { q, .. } => {
            (1.0 + p).powf(1.0 / crate::distributions::conjugate_exponent(q))
        }
        DistributionSpec::Rademacher => 1.0,
    }
}

/// `‖ηᵀAᵀAη̃‖_{L_p}` for each `p`, with `η`, `η̃` independent draws from `spec`.
///
/// Moment `p_grid[k]` is estimated from `stream.substream(k)`.
pub fn empirical_moment_curve(
    a: &DenseMatrix,
    spec: &DistributionSpec,
    p_grid: &[u32],
    trials: usize,
    sampling: MomentSampling,
    stream: RngStream,
) -> Result<MomentCurve> {
    spec.validate()?;
    if trials < 2 {
        return Err(Error::Argument("trials must be >= 2".into()));
    }
    if p_grid.is_empty() || p_grid.iter().any(|&p| !(2.0..=MAX_MOMENT_ORDER).contains(&(p as f64))) {
        return Err(Error::Argument(format!(
            "p grid must be nonempty within [2, {MAX_MOMENT_ORDER}]"
        )));
    }
    if sampling == MomentSampling::Tilted && spec.log_stretch_ratio(1.0, 2.0).is_none() {
        return Err(Error::Argument("tilted sampling needs a model with a density".into()));
    }
    let alpha = tail_index(spec);
    let gram = a.gram();
    let gram_f = frobenius_norm(&gram);
    let gram_op = opnorm_2_2(a, POWER_TOL)?.powi(2);
    let n = a.cols();
    // coordinates touched by AᵀA
    let active: Vec<usize> = (0..n).filter(|&j| (0..n).any(|i| gram.get(i, j) != 0.0)).collect();
    let sampler = spec.sampler()?;
    let reference = if gram_f > 0.0 { gram_f } else { 1.0 };

    let mut points = Vec::with_capacity(p_grid.len());
    for (k, &p) in p_grid.iter().enumerate() {
        let pf = p as f64;
        let kappa = match sampling {
            MomentSampling::Plain => 1.0,
            MomentSampling::Tilted => stretch_for(spec, pf),
        };
        let chunks = chunked_trials(
            stream.substream(k as u64),
            trials,
            || {
                (
                    Moments::default(),
                    vec![0.0; n],
                    vec![0.0; n],
                    vec![0.0; a.rows()],
                    vec![0.0; a.rows()],
                )
            },
            |rng, _, (mom, eta, eta_t, u, v)| {
                sampler.fill(rng, eta);
                sampler.fill(rng, eta_t);
                let mut log_w = 0.0;
                if kappa != 1.0 {
                    for &j in &active {
                        eta[j] *= kappa;
                        eta_t[j] *= kappa;
                        log_w += spec.log_stretch_ratio(eta[j], kappa).unwrap_or(0.0)
                            + spec.log_stretch_ratio(eta_t[j], kappa).unwrap_or(0.0);
                    }
                }
                a.matvec_into(eta, u);
                a.matvec_into(eta_t, v);
                let x: f64 = u.iter().zip(v.iter()).map(|(s, t)| s * t).sum::<f64>().abs() / reference;
                let val = if x == 0.0 { 0.0 } else { (pf * x.ln() + log_w).exp() };
                mom.push(val);
            },
        );
        let mut mom = Moments::default();
        for (c, ..) in &chunks {
            mom.merge(c);
        }
        let mean = mom.mean();
        let rel = if mean > 0.0 { Z95 * mom.std_error() / mean } else { 0.0 };
        let empirical = reference * mean.powf(1.0 / pf);
        points.push(MomentPoint {
            p,
            empirical: if gram_f > 0.0 { empirical } else { 0.0 },
            ci_halfwidth: if gram_f > 0.0 { empirical * rel / pf } else { 0.0 },
            bound: 0.0,
            flagged: rel > MOMENT_FLAG_RELATIVE_CI,
        });
    }

    let shape = |p: f64| p.sqrt() * gram_f + p.powf(2.0 / alpha) * gram_op;
    let calibration = if shape(2.0) > 0.0 {
        match points.iter().find(|pt| pt.p == 2) {
            Some(pt) => pt.empirical / shape(2.0),
            None => {
                // no p = 2 in the grid: calibrate on the smallest order present
                let pt = points.iter().min_by_key(|pt| pt.p).expect("nonempty grid");
                pt.empirical / shape(pt.p as f64)
            }
        }
    } else {
        0.0
    };
    for pt in &mut points {
        pt.bound = calibration * shape(pt.p as f64);
    }
    Ok(MomentCurve {
        points,
        calibration,
        alpha,
        gram_frobenius: gram_f,
        gram_op,
    })
}

/// Threshold and probability bound derived from moment growth
/// `‖ξ‖_{L_p} ≤ Σ C_k p^{β_k} + C_last` for `p ≥ p₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub threshold: f64,
    pub probability: f64,
}

fn check_terms(terms: &[(f64, f64)]) -> Result<()> {
    if terms.is_empty() || terms.iter().any(|&(c, b)| !(c > 0.0) || !(b > 0.0)) {
        return Err(Error::Argument(
            "need at least one term with C_k > 0 and β_k > 0".into(),
        ));
    }
    Ok(())
}

/// `e^{p₀}·exp(-min_k (t/C_k)^{1/β_k})` clipped to `[0, 1]`, the bound on
/// `P{|ξ| > e(mt + C_last)}`.
pub fn tails_from_moments_bound(terms: &[(f64, f64)], c_last: f64, p0: f64, t: f64) -> Result<TailBound> {
    check_terms(terms)?;
    let exponent = terms
        .iter()
        .map(|&(c, b)| (t.max(0.0) / c).powf(1.0 / b))
        .fold(f64::INFINITY, f64::min);
    Ok(TailBound {
        threshold: std::f64::consts::E * (terms.len() as f64 * t + c_last),
        probability: (p0 - exponent).exp().clamp(0.0, 1.0),
    })
}

/// Companion form: `P{|ξ| > e(Σ C_k t^{β_k} + C_last)} ≤ e^{p₀ - t}`.
pub fn tails_from_moments_level(terms: &[(f64, f64)], c_last: f64, p0: f64, t: f64) -> Result<TailBound> {
    check_terms(terms)?;
    let level: f64 = terms.iter().map(|&(c, b)| c * t.max(0.0).powf(b)).sum();
    Ok(TailBound {
        threshold: std::f64::consts::E * (level + c_last),
        probability: (p0 - t).exp().clamp(0.0, 1.0),
    })
}

/// The two exponent branches `(t²/(L⁴‖A‖_F²), (t/(L²‖A‖))^{α/2})` of the
/// Hanson-Wright bound, before the constant `c`.
pub fn hw_exponent_branches(a: &DenseMatrix, l: f64, alpha: f64, t: f64) -> Result<(f64, f64)> {
    if !a.is_symmetric(1e-10) {
        return Err(Error::Argument("Hanson-Wright matrix must be symmetric".into()));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::ParameterDomain(format!("alpha in (0,2], got {alpha}")));
    }
    if !(l >= 0.0) || !(t >= 0.0) {
        return Err(Error::Argument("L and t must be nonnegative".into()));
    }
    if t == 0.0 {
        return Ok((0.0, 0.0));
    }
    let fro = frobenius_norm(a);
    let op = opnorm_2_2(a, POWER_TOL)?;
    let l2 = l * l;
    let gauss = t * t / (l2 * l2 * fro * fro);
    let heavy = (t / (l2 * op)).powf(alpha / 2.0);
    Ok((gauss, heavy))
}

/// `2·exp(-c·min{t²/(L⁴‖A‖_F²), (t/(L²‖A‖_{2→2}))^{α/2}})`, clipped to 1.
pub fn hw_bound_alpha_with(a: &DenseMatrix, l: f64, alpha: f64, t: f64, c: f64) -> Result<f64> {
    let (g, h) = hw_exponent_branches(a, l, alpha, t)?;
    Ok((2.0 * (-c * g.min(h)).exp()).min(1.0))
}

/// [`hw_bound_alpha_with`] at `c = 1`.
pub fn hw_bound_alpha(a: &DenseMatrix, l: f64, alpha: f64, t: f64) -> Result<f64> {
    hw_bound_alpha_with(a, l, alpha, t, 1.0)
}

/// Index of the median curve point with probability strictly inside `(0, 1)`.
fn median_usable_point(curve: &TailCurve) -> Result<usize> {
    let usable: Vec<usize> = (0..curve.thresholds.len())
        .filter(|&i| curve.empirical_probs[i] > 0.0 && curve.empirical_probs[i] < 1.0 && curve.thresholds[i] > 0.0)
        .collect();
    usable
        .get(usable.len() / 2)
        .copied()
        .ok_or_else(|| Error::FitDomain("no threshold with empirical probability in (0, 1)".into()))
}

/// Largest `c` for which [`hw_bound_alpha_with`] still dominates the
/// empirical tail at the curve's median usable threshold. Calibrate once on
/// a designated instance, then freeze.
pub fn calibrate_hw_constant(a: &DenseMatrix, l: f64, alpha: f64, curve: &TailCurve) -> Result<f64> {
    let i = median_usable_point(curve)?;
    let (g, h) = hw_exponent_branches(a, l, alpha, curve.thresholds[i])?;
    let exponent = g.min(h);
    if !(exponent > 0.0) {
        return Err(Error::FitDomain("zero exponent at the calibration threshold".into()));
    }
    Ok((2.0 / curve.empirical_probs[i]).ln() / exponent)
}

/// Smallest `C₁` for which the bound `C₁·exp(-E(t))` of [`uniform_hw_bound`]
/// dominates the empirical tail at the median usable threshold, where the
/// empirical threshold is read as `C L²(U₁ + t)` with the given `c_threshold`.
pub fn calibrate_uniform_prob_constant(
    family: &MatrixFamily,
    alpha: f64,
    l: f64,
    gammas: (f64, f64),
    c_threshold: f64,
    curve: &TailCurve,
) -> Result<f64> {
    let i = median_usable_point(curve)?;
    let constants = UniformConstants {
        c_threshold,
        c_prob: 1.0,
    };
    let base = uniform_common(family, alpha, l, 0.0, gammas, constants)?.2;
    let scale = c_threshold * l * l;
    if !(scale > 0.0) {
        return Err(Error::Argument("C·L² must be positive".into()));
    }
    // the deviation t for which the bound's threshold equals the curve point
    let t = ((curve.thresholds[i] - base) / scale).max(0.0);
    let b = uniform_hw_bound(family, alpha, l, t, gammas, constants)?;
    let exponent = ratio_pow(t, b.gaussian_denominator, 2.0).min(ratio_pow(t, b.heavy_denominator, alpha / 2.0));
    Ok(curve.empirical_probs[i] * exponent.exp())
}

/// Calibration constants of the uniform bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformConstants {
    /// `C(α)` in the threshold.
    pub c_threshold: f64,
    /// `C₁(α)` in front of the exponential.
    pub c_prob: f64,
}

impl Default for UniformConstants {
    fn default() -> Self {
        Self {
            c_threshold: 1.0,
            c_prob: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformHwBound {
    /// `Γ = γ₂ + γ_α`.
    pub gamma: f64,
    /// `U₁ = Γ(Γ + M_F)`.
    pub u1: f64,
    /// `C·L²·(U₁ + t)`.
    pub threshold: f64,
    pub probability: f64,
    /// Denominator of the squared (Gaussian) branch of the exponent.
    pub gaussian_denominator: f64,
    /// `M_{2→2}²`, denominator of the `α/2` branch.
    pub heavy_denominator: f64,
}

fn uniform_common(
    family: &MatrixFamily,
    alpha: f64,
    l: f64,
    t: f64,
    gammas: (f64, f64),
    constants: UniformConstants,
) -> Result<(f64, f64, f64)> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::ParameterDomain(format!("alpha in (0,2], got {alpha}")));
    }
    if !(t >= 0.0) || !(l >= 0.0) || !(gammas.0 >= 0.0) || !(gammas.1 >= 0.0) {
        return Err(Error::Argument("t, L and γ estimates must be nonnegative".into()));
    }
    let gamma = gammas.0 + gammas.1;
    let u1 = gamma * (gamma + family.radii().m_f);
    let threshold = constants.c_threshold * l * l * (u1 + t);
    Ok((gamma, u1, threshold))
}

fn ratio_pow(t: f64, denom: f64, power: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        (t / denom).powf(power)
    }
}

/// Uniform bound with `sup_A ‖AᵀA‖_F` in the Gaussian branch:
/// `P{sup > C L²(U₁ + t)} ≤ C₁ exp(-min{(t/sup‖AᵀA‖_F)², (t/M²_{2→2})^{α/2}})`.
pub fn uniform_hw_bound(
    family: &MatrixFamily,
    alpha: f64,
    l: f64,
    t: f64,
    gammas: (f64, f64),
    constants: UniformConstants,
) -> Result<UniformHwBound> {
    let (gamma, u1, threshold) = uniform_common(family, alpha, l, t, gammas, constants)?;
    let r = family.radii();
    let heavy_denominator = r.m_2_2 * r.m_2_2;
    let exponent = ratio_pow(t, r.sup_gram_f, 2.0).min(ratio_pow(t, heavy_denominator, alpha / 2.0));
    Ok(UniformHwBound {
        gamma,
        u1,
        threshold,
        probability: (constants.c_prob * (-exponent).exp()).min(1.0),
        gaussian_denominator: r.sup_gram_f,
        heavy_denominator,
    })
}

/// `M_{2→α*}` radius. For `α ∈ (1, 2)` the `ℓ₂→ℓ_{α*}` norm is bounded by
/// the `ℓ₂→ℓ₂` norm, which is used in its place.
pub fn radius_2_to_alpha_star(family: &MatrixFamily, alpha: f64) -> f64 {
    if alpha <= 1.0 {
        family.radii().m_2_inf
    } else {
        family.radii().m_2_2
    }
}

/// Earlier uniform bound with `U₂ = M_{2→2}Γ + sup‖AᵀA‖_F` and the extra
/// `(t/U₃)^α` branch, `U₃ = M_{2→α*}Γ`.
pub fn uniform_hw_bound_u2(
    family: &MatrixFamily,
    alpha: f64,
    l: f64,
    t: f64,
    gammas: (f64, f64),
    constants: UniformConstants,
) -> Result<UniformHwBound> {
    let (gamma, u1, threshold) = uniform_common(family, alpha, l, t, gammas, constants)?;
    let r = family.radii();
    let u2 = r.m_2_2 * gamma + r.sup_gram_f;
    let u3 = radius_2_to_alpha_star(family, alpha) * gamma;
    let heavy_denominator = r.m_2_2 * r.m_2_2;
    let exponent = ratio_pow(t, u2, 2.0)
        .min(ratio_pow(t, u3, alpha))
        .min(ratio_pow(t, heavy_denominator, alpha / 2.0));
    Ok(UniformHwBound {
        gamma,
        u1,
        threshold,
        probability: (constants.c_prob * (-exponent).exp()).min(1.0),
        gaussian_denominator: u2,
        heavy_denominator,
    })
}

/// Empirical exceedance probabilities with Wilson intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub thresholds: Vec<f64>,
    pub empirical_probs: Vec<f64>,
    pub exceed_counts: Vec<u64>,
    pub trials: usize,
    pub ci_halfwidths: Vec<f64>,
}

impl TailCurve {
    pub fn from_counts(thresholds: Vec<f64>, exceed_counts: Vec<u64>, trials: usize) -> Self {
        let empirical_probs = exceed_counts.iter().map(|&c| c as f64 / trials as f64).collect();
        let ci_halfwidths = exceed_counts
            .iter()
            .map(|&c| wilson(c as usize, trials).half_width)
            .collect();
        Self {
            thresholds,
            empirical_probs,
            exceed_counts,
            trials,
            ci_halfwidths,
        }
    }
}

/// `P{chaos_sup_statistic > t}` over `trials` draws of unit-variance `ξ`.
pub fn empirical_tail(
    family: &MatrixFamily,
    spec: &DistributionSpec,
    thresholds: &[f64],
    trials: usize,
    stream: RngStream,
) -> Result<TailCurve> {
    if trials < TAIL_MIN_TRIALS {
        return Err(Error::Argument(format!("tail curves need >= {TAIL_MIN_TRIALS} trials")));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) || thresholds.iter().any(|t| !t.is_finite()) {
        return Err(Error::Argument(
            "thresholds must be finite and strictly increasing".into(),
        ));
    }
    let sampler = spec.sampler()?;
    let scale = 1.0 / spec.variance().sqrt();
    let (m, n) = family.shape();
    let k = thresholds.len();
    let chunks = chunked_trials(
        stream,
        trials,
        || (vec![0u64; k + 1], vec![0.0; n], vec![0.0; m]),
        |rng, _, (hist, xi, buf)| {
            unit_variance_fill(&sampler, scale, rng, xi);
            let stat = sup_statistic_unchecked(family, xi, buf);
            // number of thresholds strictly below stat
            hist[thresholds.partition_point(|&t| t < stat)] += 1;
        },
    );
    let mut hist = vec![0u64; k + 1];
    for (h, ..) in &chunks {
        for (a, b) in hist.iter_mut().zip(h) {
            *a += b;
        }
    }
    // exceed[j] = #{stat > t_j} = Σ_{i > j} hist[i]
    let mut exceed = vec![0u64; k];
    let mut acc = 0u64;
    for j in (0..k).rev() {
        acc += hist[j + 1];
        exceed[j] = acc;
    }
    Ok(TailCurve::from_counts(thresholds.to_vec(), exceed, trials))
}

/// Geometric midpoint of the thresholds whose probability lies inside
/// [`FIT_PROB_WINDOW`]; `None` without two such thresholds.
pub fn window_midpoint_split(curve: &TailCurve) -> Option<f64> {
    let usable: Vec<f64> = curve
        .thresholds
        .iter()
        .zip(&curve.empirical_probs)
        .filter(|(t, p)| **t > 0.0 && **p > FIT_PROB_WINDOW.0 && **p < FIT_PROB_WINDOW.1)
        .map(|(t, _)| *t)
        .collect();
    match (usable.first(), usable.last()) {
        (Some(a), Some(b)) if a < b => Some((a * b).sqrt()),
        _ => None,
    }
}

/// Slopes of `log(-log P)` against `log t` below and above `split`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeFit {
    pub low_exponent: f64,
    pub high_exponent: f64,
    pub low_points: usize,
    pub high_points: usize,
}

/// Fits the tail exponent on each side of `split`, using only points with
/// probability inside [`FIT_PROB_WINDOW`].
pub fn tail_regime_fit(curve: &TailCurve, split: f64) -> Result<RegimeFit> {
    let (lo_p, hi_p) = FIT_PROB_WINDOW;
    let usable: Vec<(f64, f64)> = curve
        .thresholds
        .iter()
        .zip(&curve.empirical_probs)
        .filter(|(t, p)| **t > 0.0 && **p > lo_p && **p < hi_p)
        .map(|(t, p)| (t.ln(), (-p.ln()).ln()))
        .collect();
    let side = |low: bool| -> Result<(f64, usize)> {
        let (x, y): (Vec<f64>, Vec<f64>) = usable
            .iter()
            .filter(|(lt, _)| if low { lt.exp() < split } else { lt.exp() >= split })
            .copied()
            .unzip();
        if x.len() < FIT_MIN_POINTS {
            return Err(Error::FitDomain(format!(
                "{} side of split {split} has {} points with probability in ({lo_p}, {hi_p}); need {FIT_MIN_POINTS}",
                if low { "low" } else { "high" },
                x.len()
            )));
        }
        let (slope, _) = linear_fit(&x, &y).ok_or_else(|| Error::FitDomain("degenerate thresholds".into()))?;
        Ok((slope, x.len()))
    };
    let (low_exponent, low_points) = side(true)?;
    let (high_exponent, high_points) = side(false)?;
    Ok(RegimeFit {
        low_exponent,
        high_exponent,
        low_points,
        high_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    /// `‖sup_A |‖Aξ‖² - E‖Aξ‖²|‖_{L_p}`.
    pub coupled_lp: f64,
    /// `‖sup_A |ηᵀAᵀAη̃|‖_{L_p}` with `η`, `η̃` from the comparison Weibull law.
    pub decoupled_lp: f64,
    /// `coupled / decoupled`; NaN when both vanish.
    pub ratio: f64,
}

/// Empirical `L_p` norms of the coupled and decoupled suprema.
pub fn decoupling_comparison(
    family: &MatrixFamily,
    spec: &DistributionSpec,
    p: u32,
    trials: usize,
    stream: RngStream,
) -> Result<DecouplingReport> {
    if !(1..=8).contains(&p) {
        return Err(Error::Argument(format!("p must lie in [1, 8], got {p}")));
    }
    if trials == 0 {
        return Err(Error::Argument("trials must be >= 1".into()));
    }
    let sampler = spec.sampler()?;
    let scale = 1.0 / spec.variance().sqrt();
    let weibull = spec.comparison_weibull().sampler()?;
    let (m, n) = family.shape();
    let pf = p as f64;
    let chunks = chunked_trials(
        stream,
        trials,
        || {
            (
                (Moments::default(), Moments::default()),
                (vec![0.0; n], vec![0.0; n], vec![0.0; n]),
                (vec![0.0; m], vec![0.0; m]),
            )
        },
        |rng, _, ((coupled, decoupled), (xi, eta, eta_t), (u, v))| {
            unit_variance_fill(&sampler, scale, rng, xi);
            coupled.push(sup_statistic_unchecked(family, xi, u).powf(pf));
            weibull.fill(rng, eta);
            weibull.fill(rng, eta_t);
            let sup = family
                .members
                .iter()
                .map(|a| {
                    a.matvec_into(eta, u);
                    a.matvec_into(eta_t, v);
                    u.iter().zip(v.iter()).map(|(x, y)| x * y).sum::<f64>().abs()
                })
                .fold(0.0, f64::max);
            decoupled.push(sup.powf(pf));
        },
    );
    let (mut c, mut d) = (Moments::default(), Moments::default());
    for ((cc, dd), ..) in &chunks {
        c.merge(cc);
        d.merge(dd);
    }
    let coupled_lp = c.mean().powf(1.0 / pf);
    let decoupled_lp = d.mean().powf(1.0 / pf);
    Ok(DecouplingReport {
        coupled_lp,
        decoupled_lp,
        ratio: coupled_lp / decoupled_lp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::sample;

    fn eye(n: usize) -> DenseMatrix {
        DenseMatrix::identity(n)
    }

    fn gaussian_matrix(r: usize, c: usize, seed: u64) -> DenseMatrix {
        let mut rng = RngStream::new(seed, 99).rng();
        DenseMatrix::new(r, c, (0..r * c).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
    }

    #[test]
    fn sup_statistic_examples() {
        let f = MatrixFamily::new(vec![eye(2)]).unwrap();
        assert_eq!(chaos_sup_statistic(&f, &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(chaos_sup_statistic(&f, &[2.0, 0.0]).unwrap(), 2.0);
        let f2 = MatrixFamily::new(vec![eye(2), eye(2).scaled(2.0)]).unwrap();
        assert_eq!(chaos_sup_statistic(&f2, &[1.0, 0.0]).unwrap(), 4.0);
        assert!(chaos_sup_statistic(&f2, &[1.0]).is_err());
    }

    #[test]
    fn singleton_statistic_is_centered_form() {
        let a = gaussian_matrix(3, 4, 1);
        let f = MatrixFamily::new(vec![a.clone()]).unwrap();
        let xi = [0.3, -1.2, 0.5, 2.0];
        let q: f64 = a.matvec(&xi).unwrap().iter().map(|v| v * v).sum();
        let expected = (q - frobenius_norm(&a).powi(2)).abs();
        assert!((chaos_sup_statistic(&f, &xi).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn family_cache_and_validation() {
        let a = gaussian_matrix(3, 3, 2);
        let f = MatrixFamily::new(vec![a.clone(), a.scaled(0.5)]).unwrap();
        assert_eq!(f.norms()[0].frobenius, frobenius_norm(&a));
        assert!((f.radii().sup_gram_f - frobenius_norm(&a.gram())).abs() < 1e-10);
        assert!(MatrixFamily::new(vec![]).is_err());
        assert!(MatrixFamily::new(vec![eye(2), eye(3)]).is_err());
    }

    #[test]
    fn decoupled_examples() {
        assert_eq!(decoupled_chaos(&eye(2), &[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(decoupled_chaos(&eye(2), &[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        let a = gaussian_matrix(3, 3, 3);
        let eta = [0.2, -0.7, 1.1];
        let eta_t = [1.5, 0.4, -0.9];
        let mut naive = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut m_ij = 0.0;
                for k in 0..3 {
                    m_ij += a.get(k, i) * a.get(k, j);
                }
                naive += eta[i] * m_ij * eta_t[j];
            }
        }
        assert!((decoupled_chaos(&a, &eta, &eta_t).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn expected_energy_matches_frobenius() {
        let specs = [
            DistributionSpec::standard_gaussian(),
            DistributionSpec::Rademacher,
            DistributionSpec::SymmetricWeibull { alpha: 1.0 },
        ];
        for (si, spec) in specs.iter().enumerate() {
            for seed in 0..5 {
                let a = gaussian_matrix(3, 5, 10 + seed);
                let target = frobenius_norm(&a).powi(2);
                let scale = 1.0 / spec.variance().sqrt();
                let xs = sample(spec, 5 * 20_000, RngStream::new(seed, si as u64)).unwrap();
                let mut mom = Moments::default();
                for xi in xs.chunks_exact(5) {
                    let xi: Vec<f64> = xi.iter().map(|v| v * scale).collect();
                    mom.push(a.matvec(&xi).unwrap().iter().map(|v| v * v).sum());
                }
                assert!((mom.mean() - target).abs() < 3.5 * mom.std_error(), "{spec:?}");
            }
        }
    }

    #[test]
    fn moment_curve_identity_p2() {
        let n = 16;
        let curve = empirical_moment_curve(
            &eye(n),
            &DistributionSpec::standard_gaussian(),
            &[2, 4],
            200_000,
            MomentSampling::Plain,
            RngStream::new(1, 1),
        )
        .unwrap();
        let l2 = curve.points[0].empirical;
        assert!((l2 - 4.0).abs() < 0.05, "{l2}");
        assert!((curve.points[0].bound - l2).abs() < 1e-12);
        let zero = empirical_moment_curve(
            &DenseMatrix::zeros(3, 3),
            &DistributionSpec::SymmetricWeibull { alpha: 1.0 },
            &[2, 8],
            100,
            MomentSampling::Plain,
            RngStream::new(1, 2),
        )
        .unwrap();
        assert!(zero.points.iter().all(|p| p.empirical == 0.0));
        assert!(empirical_moment_curve(
            &eye(2),
            &DistributionSpec::Rademacher,
            &[2],
            10,
            MomentSampling::Tilted,
            RngStream::new(0, 0)
        )
        .is_err());
        assert!(empirical_moment_curve(
            &eye(2),
            &DistributionSpec::Rademacher,
            &[1],
            10,
            MomentSampling::Plain,
            RngStream::new(0, 0)
        )
        .is_err());
    }

    #[test]
    fn tilted_moments_match_closed_form() {
        // rank one e₁e₁ᵀ: ‖η₁η̃₁‖_p = ‖η₁‖_p² and E|η|^p = Γ(1 + p/α) for W_s(α)
        let a = DenseMatrix::outer(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]);
        for alpha in [1.0, 0.5] {
            let spec = DistributionSpec::SymmetricWeibull { alpha };
            let grid = [2, 6, 12];
            let curve = empirical_moment_curve(&a, &spec, &grid, 200_000, MomentSampling::Tilted, RngStream::new(2, 0))
                .unwrap();
            for pt in &curve.points {
                let p = pt.p as f64;
                let exact = statrs::function::gamma::gamma(1.0 + p / alpha).powf(2.0 / p);
                assert!(
                    (pt.empirical / exact - 1.0).abs() < 0.05,
                    "α={alpha} p={p}: {} vs {exact}",
                    pt.empirical
                );
                assert!(!pt.flagged);
            }
        }
    }

    #[test]
    fn tails_from_moments_examples() {
        assert_eq!(
            tails_from_moments_bound(&[(1.0, 1.0)], 0.0, 0.0, 0.0)
                .unwrap()
                .probability,
            1.0
        );
        let b = tails_from_moments_bound(&[(1.0, 1.0)], 0.0, 0.0, 3.0).unwrap();
        assert!((b.probability - (-3.0f64).exp()).abs() < 1e-15);
        assert!((b.threshold - 3.0 * std::f64::consts::E).abs() < 1e-12);
        let two = tails_from_moments_bound(&[(1.0, 0.5), (1.0, 2.0)], 0.0, 0.0, 1.0).unwrap();
        assert!((two.probability - (-1.0f64).exp()).abs() < 1e-15);
        let lvl = tails_from_moments_level(&[(2.0, 0.5)], 1.0, 0.5, 4.0).unwrap();
        assert!((lvl.threshold - std::f64::consts::E * 5.0).abs() < 1e-12);
        assert!((lvl.probability - (-3.5f64).exp()).abs() < 1e-15);
        assert!(tails_from_moments_bound(&[(0.0, 1.0)], 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn hw_bound_examples() {
        let n = 16;
        let a = eye(n);
        assert_eq!(hw_bound_alpha(&a, 1.0, 2.0, 0.0).unwrap(), 1.0);
        let (g, h) = hw_exponent_branches(&a, 1.0, 2.0, n as f64).unwrap();
        assert!((g - n as f64).abs() < 1e-9);
        assert!((h - n as f64).abs() < 1e-6);
        let (_, h1) = hw_exponent_branches(&a, 1.0, 1.0, n as f64).unwrap();
        assert!((h1 - (n as f64).sqrt()).abs() < 1e-6);
        let mut last = 1.0;
        for k in 0..50 {
            let b = hw_bound_alpha(&a, 1.0, 1.0, k as f64 * 0.5).unwrap();
            assert!(b <= last + 1e-15);
            last = b;
        }
        assert!(hw_bound_alpha(&gaussian_matrix(2, 2, 4), 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn hw_min_structure() {
        let mut a = DenseMatrix::diagonal(&[3.0, 1.0, 1.0, 1.0]);
        a.set(0, 1, 0.5);
        a.set(1, 0, 0.5);
        let fro = frobenius_norm(&a);
        let op = opnorm_2_2(&a, 1e-12).unwrap();
        for t in [0.1, 1.0, 5.0, 50.0, 500.0] {
            for alpha in [0.5, 1.0, 2.0] {
                let b = hw_bound_alpha_with(&a, 1.3, alpha, t, 0.7).unwrap();
                let l2 = 1.3f64 * 1.3;
                let g = t * t / (l2 * l2 * fro * fro);
                let h = (t / (l2 * op)).powf(alpha / 2.0);
                let expected = (2.0 * (-0.7 * g.min(h)).exp()).min(1.0);
                assert!((b - expected).abs() < 1e-9 * expected.max(1e-300));
            }
        }
    }

    #[test]
    fn uniform_bounds() {
        let a = gaussian_matrix(4, 4, 5);
        let single = MatrixFamily::new(vec![a.clone()]).unwrap();
        let b = uniform_hw_bound(&single, 1.0, 1.5, 2.0, (0.0, 0.0), UniformConstants::default()).unwrap();
        assert_eq!(b.u1, 0.0);
        assert!((b.threshold - 1.5 * 1.5 * 2.0).abs() < 1e-12);

        let fam = MatrixFamily::new(vec![a.clone(), a.scaled(0.7), gaussian_matrix(4, 4, 6)]).unwrap();
        let gam = (1.3, 0.9);
        let mut last = 2.0;
        for k in 0..60 {
            let t = 0.5 * 1.3f64.powi(k);
            let p = uniform_hw_bound(&fam, 1.0, 1.0, t, gam, UniformConstants::default())
                .unwrap()
                .probability;
            assert!(p <= last);
            last = p;
        }
        assert!(last < 1e-10);

        let m22sq = fam.radii().m_2_2.powi(2);
        let t = 4.0 * m22sq;
        let p1 = uniform_hw_bound(&fam, 1.0, 1.0, t, gam, UniformConstants::default()).unwrap();
        let p2 = uniform_hw_bound(&fam, 2.0, 1.0, t, gam, UniformConstants::default()).unwrap();
        assert!(p1.probability >= p2.probability);

        let old = uniform_hw_bound_u2(&fam, 1.0, 1.0, t, gam, UniformConstants::default()).unwrap();
        assert!(old.gaussian_denominator > p1.gaussian_denominator);
        assert!(old.probability >= p1.probability);
        assert_eq!(alpha_star(2.0), 2.0);
        assert_eq!(alpha_star(1.0), f64::INFINITY);
        assert!((alpha_star(1.5) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn calibration_matches_median_point() {
        let a = DenseMatrix::diagonal(&[0.125; 16]);
        let f = MatrixFamily::new(vec![a.clone()]).unwrap();
        let thresholds: Vec<f64> = (1..=20).map(|k| 0.02 * k as f64).collect();
        let curve = empirical_tail(
            &f,
            &DistributionSpec::standard_gaussian(),
            &thresholds,
            20_000,
            RngStream::new(8, 0),
        )
        .unwrap();
        // the quadratic form of ‖Aξ‖² is AᵀA
        let gram = a.transpose().matmul(&a).unwrap();
        let c = calibrate_hw_constant(&gram, 1.0, 2.0, &curve).unwrap();
        let i = median_usable_point(&curve).unwrap();
        let t = curve.thresholds[i];
        let bound = hw_bound_alpha_with(&gram, 1.0, 2.0, t, c).unwrap();
        assert!((bound - curve.empirical_probs[i]).abs() < 1e-12);
        assert!(hw_bound_alpha_with(&gram, 1.0, 2.0, t, 0.9 * c).unwrap() > curve.empirical_probs[i]);

        let gammas = (0.3, 0.2);
        let c1 = calibrate_uniform_prob_constant(&f, 2.0, 1.0, gammas, 0.5, &curve).unwrap();
        let base = 0.5 * (0.5 * (0.5 + f.radii().m_f));
        let b = uniform_hw_bound(
            &f,
            2.0,
            1.0,
            ((t - base) / 0.5).max(0.0),
            gammas,
            UniformConstants {
                c_threshold: 0.5,
                c_prob: c1,
            },
        )
        .unwrap();
        assert!((b.threshold - t.max(base)).abs() < 1e-12);
        assert!((b.probability - curve.empirical_probs[i]).abs() < 1e-12);

        let empty = TailCurve::from_counts(vec![1.0, 2.0], vec![0, 0], 1000);
        assert!(matches!(
            calibrate_hw_constant(&gram, 1.0, 2.0, &empty),
            Err(Error::FitDomain(_))
        ));
    }

    #[test]
    fn empirical_tail_basics() {
        let f = MatrixFamily::new(vec![eye(8).scaled(1.0 / 8f64.sqrt())]).unwrap();
        let t = [0.0, 0.5, 1.0, 2.0, 1e6];
        let c = empirical_tail(
            &f,
            &DistributionSpec::standard_gaussian(),
            &t,
            20_000,
            RngStream::new(3, 3),
        )
        .unwrap();
        assert!(c.empirical_probs[0] > 0.99);
        assert_eq!(c.empirical_probs[4], 0.0);
        assert!(c.empirical_probs.windows(2).all(|w| w[0] >= w[1]));
        assert!(empirical_tail(&f, &DistributionSpec::standard_gaussian(), &t, 10, RngStream::new(3, 3)).is_err());
        assert!(empirical_tail(
            &f,
            &DistributionSpec::standard_gaussian(),
            &[1.0, 0.5],
            2000,
            RngStream::new(3, 3)
        )
        .is_err());
    }

    #[test]
    fn regime_fit_recovers_planted_exponents() {
        let ts: Vec<f64> = (0..80).map(|k| 0.05 * 1.08f64.powi(k)).collect();
        let gauss = TailCurve {
            thresholds: ts.clone(),
            empirical_probs: ts.iter().map(|t| (-t * t).exp()).collect(),
            exceed_counts: vec![0; ts.len()],
            trials: 1,
            ci_halfwidths: vec![0.0; ts.len()],
        };
        let fit = tail_regime_fit(&gauss, 1.5).unwrap();
        assert!((fit.low_exponent - 2.0).abs() < 0.05 && (fit.high_exponent - 2.0).abs() < 0.05);
        let ts2: Vec<f64> = (0..120).map(|k| 0.5 * 1.08f64.powi(k)).collect();
        let heavy = TailCurve {
            thresholds: ts2.clone(),
            empirical_probs: ts2.iter().map(|t| (-t.sqrt()).exp()).collect(),
            exceed_counts: vec![0; ts2.len()],
            trials: 1,
            ci_halfwidths: vec![0.0; ts2.len()],
        };
        let fit = tail_regime_fit(&heavy, 20.0).unwrap();
        assert!((fit.low_exponent - 0.5).abs() < 0.05 && (fit.high_exponent - 0.5).abs() < 0.05);
        assert!(matches!(tail_regime_fit(&heavy, 1e9), Err(Error::FitDomain(_))));
    }

    #[test]
    fn decoupling_reports() {
        let zero = MatrixFamily::new(vec![DenseMatrix::zeros(2, 3)]).unwrap();
        let r = decoupling_comparison(
            &zero,
            &DistributionSpec::standard_gaussian(),
            2,
            100,
            RngStream::new(0, 0),
        )
        .unwrap();
        assert_eq!((r.coupled_lp, r.decoupled_lp), (0.0, 0.0));
        let fam = MatrixFamily::new(vec![gaussian_matrix(3, 4, 7), gaussian_matrix(3, 4, 8)]).unwrap();
        let ratios: Vec<f64> = (0..5)
            .map(|k| {
                decoupling_comparison(
                    &fam,
                    &DistributionSpec::SymmetricWeibull { alpha: 1.0 },
                    2,
                    20_000,
                    RngStream::new(10 + k, 0),
                )
                .unwrap()
                .ratio
            })
            .collect();
        let mean = ratios.iter().sum::<f64>() / 5.0;
        let sd = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!(mean.is_finite() && sd / mean < 0.2, "{ratios:?}");
        assert!(decoupling_comparison(&fam, &DistributionSpec::Rademacher, 9, 10, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn tail_is_thread_count_independent() {
        let f = MatrixFamily::new(vec![eye(4), gaussian_matrix(4, 4, 9)]).unwrap();
        let t: Vec<f64> = (0..10).map(|k| 0.3 * k as f64).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    empirical_tail(
                        &f,
                        &DistributionSpec::SymmetricWeibull { alpha: 1.0 },
                        &t,
                        20_000,
                        RngStream::new(4, 4),
                    )
                    .unwrap()
                })
        };
        assert_eq!(run(1), run(4));
    }
}
