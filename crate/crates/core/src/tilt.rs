//! The one-dimensional convex core of every robust bound in this crate.
//!
//! For a centered integrand `f̄` (mean zero under the baseline), the
//! worst-case expectation over all alternative distributions within KL radius
//! `η` is
//!
//! ```text
//! I(η) = inf_{c > 0}  ( Λ(c) + η ) / c ,      Λ(c) = log E[ e^{c·f̄} ],
//! ```
//!
//! and the optimizer is the exponentially tilted distribution at the optimal
//! `c`. The infimum is characterized by the increasing function
//! `g(c) = c·Λ′(c) − Λ(c)`:
//!
//! * `g(c*) = η` has an interior root → `I = Λ′(c*)`;
//! * `η` exceeds `sup g` and `Λ` is finite arbitrarily far out (bounded
//!   integrand) → `I` is the essential supremum of `f̄`;
//! * `η` exceeds `sup g` and the CGF domain ends at a finite `d` with `Λ(d)`,
//!   `Λ′(d)` finite → `I = Λ′(d) + (η − sup g)/d`.
//!
//! Minus-side bounds reuse the same machinery on the negated integrand.
//!
//! CGF access goes through [`CgfHandle`], with implementations for the exact
//! Gaussian case, finite discrete distributions, Monte-Carlo sample sets
//! (with effective-sample-size safeguards), and user-supplied analytic CGFs.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TiltError {
    #[error("KL radius must be finite and non-negative, got {0}")]
    InvalidEta(f64),
    #[error("empty sample set")]
    EmptySample,
    #[error("tilted weights are degenerate: effective sample size {ess:.1} < {min:.0}")]
    WeightDegeneracy { ess: f64, min: f64 },
    #[error("integrand is unbounded above yet its CGF saturated; handle is inconsistent")]
    InconsistentHandle,
}

/// Whether a handle evaluates its CGF exactly or from random samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgfKind {
    ClosedForm,
    McEstimate,
}

/// What the handle knows about the supremum of its integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupEstimate {
    /// Exact essential supremum.
    Exact(f64),
    /// Largest observed sample — a lower bound on the true supremum.
    SampleMax(f64),
    Unbounded,
}

/// One evaluation of the CGF. `derivative` and `ess` are filled when the
/// handle can produce them in the same pass; the solver falls back to a
/// central difference otherwise. `tilt_kl` is the tilted KL
/// `g(c) = c·Λ′(c) − Λ(c)` computed without the cancellation the generic
/// formula suffers at large `c` (both terms grow like `c·sup f̄` while their
/// difference stays bounded); handles that can form it from their internal
/// shifted sums should do so.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgfEval {
    pub lambda: f64,
    pub derivative: Option<f64>,
    pub ess: Option<f64>,
    pub tilt_kl: Option<f64>,
}

/// A cumulant generating function `Λ(c) = log E[e^{c·f̄}]` of a centered
/// integrand, valid for `0 ≤ c < domain_limit()`. `Λ(0) = 0`, `Λ′(0) = 0`,
/// and `Λ` is convex.
pub trait CgfHandle {
    fn evaluate(&self, c: f64) -> CgfEval;

    /// Supremum of the set of `c ≥ 0` where `Λ` is finite (`∞` when the CGF
    /// exists everywhere).
    fn domain_limit(&self) -> f64 {
        f64::INFINITY
    }

    fn kind(&self) -> CgfKind;

    fn integrand_sup(&self) -> SupEstimate;

    /// Characteristic scale of the integrand (its standard deviation when
    /// known). Seeds the bracket search near `√(2η)/scale`, which is exact
    /// for Gaussian integrands and a good first guess elsewhere.
    fn tilt_scale(&self) -> Option<f64> {
        None
    }

    fn cgf(&self, c: f64) -> f64 {
        self.evaluate(c).lambda
    }
}

// ---------------------------------------------------------------------------
// Handle implementations
// ---------------------------------------------------------------------------

/// Exact CGF of a centered Gaussian integrand with variance `variance`:
/// `Λ(c) = c²·variance/2`. Symmetric, so one handle serves both directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCgf {
    variance: f64,
}

impl GaussianCgf {
    pub fn new(variance: f64) -> Self {
        assert!(variance >= 0.0, "variance must be non-negative");
        Self { variance }
    }
}

impl CgfHandle for GaussianCgf {
    fn evaluate(&self, c: f64) -> CgfEval {
        CgfEval {
            lambda: 0.5 * c * c * self.variance,
            derivative: Some(c * self.variance),
            ess: None,
            tilt_kl: Some(0.5 * c * c * self.variance),
        }
    }

    fn kind(&self) -> CgfKind {
        CgfKind::ClosedForm
    }

    fn integrand_sup(&self) -> SupEstimate {
        if self.variance == 0.0 {
            SupEstimate::Exact(0.0)
        } else {
            SupEstimate::Unbounded
        }
    }

    fn tilt_scale(&self) -> Option<f64> {
        (self.variance > 0.0).then(|| self.variance.sqrt())
    }
}

/// Exact CGF of a finite distribution over centered values.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCgf {
    values: Vec<f64>,
    probs: Vec<f64>,
    max_value: f64,
}

impl DiscreteCgf {
    /// Centers the values under the given probabilities.
    pub fn new(raw_values: &[f64], probs: &[f64]) -> Result<Self, TiltError> {
        if raw_values.is_empty() || raw_values.len() != probs.len() {
            return Err(TiltError::EmptySample);
        }
        let mean: f64 = raw_values.iter().zip(probs).map(|(v, p)| v * p).sum();
        let values: Vec<f64> = raw_values.iter().map(|v| v - mean).collect();
        let max_value = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { values, probs: probs.to_vec(), max_value })
    }

    /// The same distribution with the integrand negated (for minus-side
    /// bounds).
    pub fn negated(&self) -> Self {
        let values: Vec<f64> = self.values.iter().map(|v| -v).collect();
        let max_value = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { values, probs: self.probs.clone(), max_value }
    }
}

impl CgfHandle for DiscreteCgf {
    fn evaluate(&self, c: f64) -> CgfEval {
        let shift = c * self.max_value;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for (&v, &p) in self.values.iter().zip(&self.probs) {
            let w = p * (c * v - shift).exp();
            s0 += w;
            s1 += w * v;
        }
        // g = c·(Λ′ − max) − (Λ − c·max): both factors stay O(1) as c grows.
        let tilt_kl = c * (s1 / s0 - self.max_value) - s0.ln();
        CgfEval {
            lambda: shift + s0.ln(),
            derivative: Some(s1 / s0),
            ess: None,
            tilt_kl: Some(tilt_kl),
        }
    }

    fn kind(&self) -> CgfKind {
        CgfKind::ClosedForm
    }

    fn integrand_sup(&self) -> SupEstimate {
        SupEstimate::Exact(self.max_value)
    }

    fn tilt_scale(&self) -> Option<f64> {
        let var: f64 = self.values.iter().zip(&self.probs).map(|(v, p)| p * v * v).sum();
        (var > 0.0).then(|| var.sqrt())
    }
}

/// Empirical CGF over a fixed set of integrand samples (common random
/// numbers: the sample set never changes across `c` or `η`). Evaluation is a
/// single allocation-free pass producing `Λ`, `Λ′`, and the effective sample
/// size of the tilted weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCgf {
    values: Vec<f64>,
    max_value: f64,
}

impl SampleCgf {
    /// Centers the raw integrand samples at their mean.
    pub fn from_samples(raw: &[f64]) -> Result<Self, TiltError> {
        if raw.is_empty() {
            return Err(TiltError::EmptySample);
        }
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let values: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let max_value = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { values, max_value })
    }

    pub fn negated(&self) -> Self {
        let values: Vec<f64> = self.values.iter().map(|v| -v).collect();
        let max_value = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self { values, max_value }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl CgfHandle for SampleCgf {
    fn evaluate(&self, c: f64) -> CgfEval {
        // Max-shifted so the largest exponent is 0; for c ≥ 0 that is
        // c·max_value.
        let shift = c * self.max_value;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut sq = 0.0;
        for &v in &self.values {
            let w = (c * v - shift).exp();
            s0 += w;
            s1 += w * v;
            sq += w * w;
        }
        let n = self.values.len() as f64;
        CgfEval {
            lambda: shift + (s0 / n).ln(),
            derivative: Some(s1 / s0),
            ess: Some(s0 * s0 / sq),
            tilt_kl: Some(c * (s1 / s0 - self.max_value) - (s0 / n).ln()),
        }
    }

    fn kind(&self) -> CgfKind {
        CgfKind::McEstimate
    }

    fn integrand_sup(&self) -> SupEstimate {
        SupEstimate::SampleMax(self.max_value)
    }

    fn tilt_scale(&self) -> Option<f64> {
        // Values are already centered, so this is the (biased) sample sd.
        let n = self.values.len() as f64;
        let var = self.values.iter().map(|v| v * v).sum::<f64>() / n;
        (var > 0.0).then(|| var.sqrt())
    }
}

/// CGF given by explicit formulas, for families with known transforms (e.g.
/// gamma). The closures receive `c` within `[0, domain_limit)` and may return
/// `+∞` outside.
pub struct AnalyticCgf {
    cgf: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    derivative: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
    domain_limit: f64,
    sup: SupEstimate,
}

impl AnalyticCgf {
    pub fn new(
        cgf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: Option<Box<dyn Fn(f64) -> f64 + Send + Sync>>,
        domain_limit: f64,
        sup: SupEstimate,
    ) -> Self {
        Self { cgf: Box::new(cgf), derivative, domain_limit, sup }
    }
}

impl CgfHandle for AnalyticCgf {
    fn evaluate(&self, c: f64) -> CgfEval {
        CgfEval {
            lambda: (self.cgf)(c),
            derivative: self.derivative.as_ref().map(|d| d(c)),
            ess: None,
            tilt_kl: None,
        }
    }

    fn domain_limit(&self) -> f64 {
        self.domain_limit
    }

    fn kind(&self) -> CgfKind {
        CgfKind::ClosedForm
    }

    fn integrand_sup(&self) -> SupEstimate {
        self.sup
    }
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

/// Which optimality regime produced the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCase {
    /// `g(c*) = η` solved in the interior of the domain.
    Interior,
    /// `η` exceeds the KL reachable by tilting; the bound is the (essential)
    /// supremum of the integrand.
    EtaSaturatedEssSup,
    /// `η` exceeds the KL reachable within a finite CGF domain with finite
    /// endpoint values; the bound extrapolates linearly past the endpoint.
    EtaSaturatedFiniteDomain,
    /// Monte-Carlo handle: the optimal tilt was pulled back to keep the
    /// effective sample size above the floor. Conservative for upper bounds.
    CCappedMc,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TiltDiagnostics {
    pub iterations: usize,
    /// Effective sample size at the reported tilt (MC handles only).
    pub ess: Option<f64>,
    pub warnings: Vec<String>,
}

/// Result of one one-sided robust bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltSolution {
    /// `inf_{c>0} (Λ(c) + η)/c` — the worst-case increase of the integrand's
    /// expectation. Non-negative.
    pub value: f64,
    /// The optimal (or capped) tilt parameter; `None` when the optimum sits
    /// at `c → ∞` (essential-supremum regime).
    pub tilt: Option<f64>,
    pub boundary: BoundaryCase,
    /// `g` at the reported tilt: the KL radius actually used. Equals `η` in
    /// the interior case and is smaller when capped or saturated.
    pub achieved_eta: f64,
    pub diagnostics: TiltDiagnostics,
}

/// Minimum effective sample size before a Monte-Carlo tilt is considered
/// trustworthy.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 100.0;

const ROOT_MAX_ITERS: usize = 200;
const BRACKET_START: f64 = 1e-8;
const BRACKET_CEILING: f64 = 1e13;

fn root_tolerance(eta: f64) -> f64 {
    (1e-6 * eta).max(1e-10)
}

fn derivative_at(handle: &dyn CgfHandle, c: f64, eval: &CgfEval) -> f64 {
    if let Some(d) = eval.derivative {
        return d;
    }
    // Central difference, shrunk near the domain edge.
    let mut h = 1e-5 * (1.0 + c.abs());
    let limit = handle.domain_limit();
    if limit.is_finite() && c + h >= limit {
        h = (limit - c) * 0.5;
    }
    let hi = handle.cgf(c + h);
    let lo = handle.cgf((c - h).max(0.0));
    (hi - lo) / (c + h - (c - h).max(0.0))
}

/// `g(c) = c·Λ′(c) − Λ(c)`: the KL divergence of the tilted distribution at
/// `c` from the baseline.
pub fn eta_of_tilt(handle: &dyn CgfHandle, c: f64) -> f64 {
    let eval = handle.evaluate(c);
    match eval.tilt_kl {
        Some(g) => g,
        None => c * derivative_at(handle, c, &eval) - eval.lambda,
    }
}

#[derive(Clone, Copy)]
struct Probe {
    c: f64,
    g: f64,
    eval: CgfEval,
}

fn probe(handle: &dyn CgfHandle, c: f64) -> Probe {
    let eval = handle.evaluate(c);
    let g = match eval.tilt_kl {
        Some(g) => g,
        None => c * derivative_at(handle, c, &eval) - eval.lambda,
    };
    Probe { c, g, eval }
}

/// Computes the one-sided robust bound for the handle's integrand at KL
/// radius `eta`. For minus-side bounds, pass a handle for the negated
/// integrand and negate the returned value.
pub fn solve_index(handle: &dyn CgfHandle, eta: f64) -> Result<TiltSolution, TiltError> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(TiltError::InvalidEta(eta));
    }
    if eta == 0.0 {
        // The ball collapses to the baseline; the centered integrand has
        // mean zero, so the bound is exactly zero.
        return Ok(TiltSolution {
            value: 0.0,
            tilt: Some(0.0),
            boundary: BoundaryCase::Interior,
            achieved_eta: 0.0,
            diagnostics: TiltDiagnostics::default(),
        });
    }
    let tol = root_tolerance(eta);
    let limit = handle.domain_limit();
    let mut iterations = 0usize;

    // --- Bracket: expand until g(hi) ≥ η, the domain edge, or saturation.
    // Seed at √(2η)/scale when the handle knows its scale (exact for
    // Gaussian integrands), so sampled handles skip most of the expansion.
    // Bisection runs over [0, start], so a seed past the root is harmless.
    let cap = if limit.is_finite() { limit * 0.5 } else { BRACKET_CEILING };
    let start = match handle.tilt_scale() {
        Some(s) if s.is_finite() && s > 0.0 => ((2.0 * eta).sqrt() / s).clamp(BRACKET_START, cap),
        _ => BRACKET_START.min(cap),
    };
    let mut hi = probe(handle, start);
    let mut lo_c = 0.0;
    loop {
        iterations += 1;
        if hi.g >= eta || iterations > 300 {
            break;
        }
        let next_c = if limit.is_finite() {
            let toward_edge = 0.5 * (hi.c + limit);
            (hi.c * 2.0).min(toward_edge)
        } else {
            hi.c * 2.0
        };
        if limit.is_finite() && (limit - next_c) <= limit * 1e-12 {
            // Pinned against a finite domain edge without reaching η.
            return Ok(finite_domain_solution(handle, eta, hi, iterations));
        }
        if !limit.is_finite() && next_c > BRACKET_CEILING {
            // g is nondecreasing, and for bounded integrands it climbs to
            // −log P(f̄ = sup) < ∞: failing to reach η by the ceiling means
            // the radius exceeds everything tilting can buy. The decision is
            // made only out here — near c = 0 the growth of a sampled g sits
            // below summation noise, so any local plateau test misfires.
            return saturated_solution(handle, eta, hi, iterations);
        }
        lo_c = hi.c;
        hi = probe(handle, next_c);
    }

    // --- Bisection on the increasing g over [lo_c, hi.c]. Closed-form
    // handles are cheap and are solved to bracket collapse, landing far
    // inside the documented tolerance; sampled handles stop at the tolerance
    // since each probe walks the whole corpus.
    let run_to_collapse = handle.kind() == CgfKind::ClosedForm;
    let mut lo = lo_c;
    let mut hi_c = hi.c;
    let mut best = hi;
    for _ in 0..ROOT_MAX_ITERS {
        iterations += 1;
        let mid = 0.5 * (lo + hi_c);
        let p = probe(handle, mid);
        if (p.g - eta).abs() <= (best.g - eta).abs() {
            best = p;
        }
        if !run_to_collapse && (p.g - eta).abs() <= tol {
            break;
        }
        if p.g < eta {
            lo = mid;
        } else {
            hi_c = mid;
        }
        if (hi_c - lo) <= f64::EPSILON * hi_c {
            break;
        }
    }

    if (best.g - eta).abs() > 10.0 * tol.max(1e-9 * (1.0 + eta)) {
        // The probes did not behave like a monotone g (possible for noisy
        // handles): minimize the objective directly instead.
        return Ok(golden_section_solution(handle, eta, hi.c.max(best.c), iterations));
    }

    // --- MC safeguard: keep the effective sample size above the floor.
    if handle.kind() == CgfKind::McEstimate {
        if let Some(ess) = best.eval.ess {
            if ess < MIN_EFFECTIVE_SAMPLES {
                return Ok(capped_solution(handle, eta, best.c, iterations));
            }
        }
    }

    let value = derivative_at(handle, best.c, &best.eval);
    Ok(TiltSolution {
        value,
        tilt: Some(best.c),
        boundary: BoundaryCase::Interior,
        achieved_eta: best.g,
        diagnostics: TiltDiagnostics { iterations, ess: best.eval.ess, warnings: Vec::new() },
    })
}

/// `η` beyond the reachable KL with an unbounded domain: the optimum is the
/// supremum of the integrand.
fn saturated_solution(
    handle: &dyn CgfHandle,
    _eta: f64,
    edge: Probe,
    iterations: usize,
) -> Result<TiltSolution, TiltError> {
    let mut warnings = Vec::new();
    let value = match handle.integrand_sup() {
        SupEstimate::Exact(s) => s,
        SupEstimate::SampleMax(s) => {
            warnings.push(
                "KL radius exceeds what tilting can reach; reporting the sample maximum, \
                 a lower bound on the true essential supremum"
                    .to_string(),
            );
            s
        }
        SupEstimate::Unbounded => return Err(TiltError::InconsistentHandle),
    };
    Ok(TiltSolution {
        value,
        tilt: None,
        boundary: BoundaryCase::EtaSaturatedEssSup,
        achieved_eta: edge.g,
        diagnostics: TiltDiagnostics { iterations, ess: edge.eval.ess, warnings },
    })
}

/// `η` beyond the reachable KL at a finite domain edge with finite `Λ`, `Λ′`:
/// the objective decreases all the way to the edge and the bound extends
/// linearly in `η` beyond it.
fn finite_domain_solution(
    handle: &dyn CgfHandle,
    eta: f64,
    edge: Probe,
    iterations: usize,
) -> TiltSolution {
    let d = edge.c;
    let slope = derivative_at(handle, d, &edge.eval);
    let eta_max = edge.g;
    TiltSolution {
        value: slope + (eta - eta_max) / d,
        tilt: Some(d),
        boundary: BoundaryCase::EtaSaturatedFiniteDomain,
        achieved_eta: eta_max,
        diagnostics: TiltDiagnostics { iterations, ess: edge.eval.ess, warnings: Vec::new() },
    }
}

/// MC tilt capped at the largest `c` whose effective sample size stays above
/// the floor; the objective at the capped tilt is still a valid (more
/// conservative) upper bound.
fn capped_solution(
    handle: &dyn CgfHandle,
    eta: f64,
    root_c: f64,
    mut iterations: usize,
) -> TiltSolution {
    let mut lo = 0.0;
    let mut hi = root_c;
    for _ in 0..100 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let ess = handle.evaluate(mid).ess.unwrap_or(f64::INFINITY);
        if ess >= MIN_EFFECTIVE_SAMPLES {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = lo.max(BRACKET_START);
    let eval = handle.evaluate(c);
    let g = c * derivative_at(handle, c, &eval) - eval.lambda;
    TiltSolution {
        value: (eval.lambda + eta) / c,
        tilt: Some(c),
        boundary: BoundaryCase::CCappedMc,
        achieved_eta: g,
        diagnostics: TiltDiagnostics {
            iterations,
            ess: eval.ess,
            warnings: vec![format!(
                "tilt capped at c = {c:.6e} to keep the effective sample size above {}",
                MIN_EFFECTIVE_SAMPLES
            )],
        },
    }
}

/// Direct minimization of `(Λ(c) + η)/c` by golden-section search, used when
/// the root probes look non-monotone (noisy estimates).
fn golden_section_solution(
    handle: &dyn CgfHandle,
    eta: f64,
    c_max: f64,
    mut iterations: usize,
) -> TiltSolution {
    let objective = |c: f64| (handle.cgf(c) + eta) / c;
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut a = BRACKET_START * 1e-4;
    let mut b = c_max;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    for _ in 0..200 {
        iterations += 1;
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = objective(x2);
        }
        if (b - a) <= 1e-12 * b.max(1.0) {
            break;
        }
    }
    let c = 0.5 * (a + b);
    let eval = handle.evaluate(c);
    let g = c * derivative_at(handle, c, &eval) - eval.lambda;
    TiltSolution {
        value: objective(c),
        tilt: Some(c),
        boundary: BoundaryCase::Interior,
        achieved_eta: g,
        diagnostics: TiltDiagnostics {
            iterations,
            ess: eval.ess,
            warnings: vec![
                "tilt-KL profile was not monotone; minimized the dual objective directly"
                    .to_string(),
            ],
        },
    }
}

// ---------------------------------------------------------------------------
// Worst-case reweighting
// ---------------------------------------------------------------------------

/// Self-normalized exponential-tilt weights over a sample of integrand
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltedWeights {
    /// Normalized (sums to one).
    pub weights: Vec<f64>,
    pub ess: f64,
}

/// Reweights samples by `w_i ∝ exp(c·f_i)` (an additive shift of `f` cancels
/// in the normalization). Fails when the weights concentrate on fewer than
/// [`MIN_EFFECTIVE_SAMPLES`] points.
pub fn tilted_weights(values: &[f64], c: f64) -> Result<TiltedWeights, TiltError> {
    if values.is_empty() {
        return Err(TiltError::EmptySample);
    }
    let shift = values
        .iter()
        .map(|&v| c * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = values.iter().map(|&v| (c * v - shift).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut sumsq = 0.0;
    for w in &mut weights {
        *w /= total;
        sumsq += *w * *w;
    }
    let ess = 1.0 / sumsq;
    if ess < MIN_EFFECTIVE_SAMPLES && values.len() as f64 >= MIN_EFFECTIVE_SAMPLES {
        return Err(TiltError::WeightDegeneracy { ess, min: MIN_EFFECTIVE_SAMPLES });
    }
    Ok(TiltedWeights { weights, ess })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    #[test]
    fn gaussian_bound_matches_closed_form() {
        for &variance in &[0.25, 1.0, 3.7] {
            for &eta in &[0.01, 0.1, 0.5, 1.0, 2.0] {
                let handle = GaussianCgf::new(variance);
                let sol = solve_index(&handle, eta).unwrap();
                let expected = (2.0 * variance * eta).sqrt();
                assert!(
                    (sol.value - expected).abs() <= 1e-9 * expected,
                    "var {variance}, eta {eta}: {} vs {expected}",
                    sol.value
                );
                assert_eq!(sol.boundary, BoundaryCase::Interior);
                // Optimal tilt is √(2η/variance) and the tilted KL equals η.
                let c = sol.tilt.unwrap();
                assert!((c - (2.0 * eta / variance).sqrt()).abs() < 1e-6 * c);
                assert!((sol.achieved_eta - eta).abs() <= root_tolerance(eta));
            }
        }
    }

    #[test]
    fn zero_radius_gives_exactly_zero() {
        let sol = solve_index(&GaussianCgf::new(2.0), 0.0).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.achieved_eta, 0.0);
    }

    #[test]
    fn negative_radius_is_rejected() {
        assert!(matches!(
            solve_index(&GaussianCgf::new(1.0), -0.5),
            Err(TiltError::InvalidEta(_))
        ));
    }

    #[test]
    fn eta_of_tilt_matches_gaussian_formula() {
        let handle = GaussianCgf::new(1.7);
        for &c in &[0.1, 0.9, 2.3] {
            let expected = 0.5 * c * c * 1.7; // c·Λ′ − Λ = c²v − c²v/2
            assert!((eta_of_tilt(&handle, c) - expected).abs() < 1e-12);
        }
    }

    /// KL(Bernoulli(q) ‖ Bernoulli(p)).
    fn bernoulli_kl(q: f64, p: f64) -> f64 {
        let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
        term(q, p) + term(1.0 - q, 1.0 - p)
    }

    #[test]
    fn fair_coin_bound_matches_simplex_oracle() {
        // Integrand = the coin value itself; centered support {−½, +½}.
        let handle = DiscreteCgf::new(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        for &eta in &[0.05, 0.2, 0.5] {
            let sol = solve_index(&handle, eta).unwrap();
            // Oracle: the worst alternative is Bernoulli(q) with
            // KL(q ‖ ½) = η, q > ½, found by bisection; bias = q − ½.
            let (mut lo, mut hi) = (0.5, 1.0 - 1e-15);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if bernoulli_kl(mid, 0.5) < eta {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let oracle = 0.5 * (lo + hi) - 0.5;
            assert!(
                (sol.value - oracle).abs() < 1e-9,
                "eta {eta}: {} vs oracle {oracle}",
                sol.value
            );
            assert_eq!(sol.boundary, BoundaryCase::Interior);
        }
    }

    #[test]
    fn fair_coin_tilt_kl_profile_has_known_values() {
        // Λ(c) = log cosh(c/2) for the centered fair coin, so
        // g(2) = tanh(1) − log cosh(1).
        let handle = DiscreteCgf::new(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let lambda2 = handle.cgf(2.0);
        assert!((lambda2 - 1.0f64.cosh().ln()).abs() < 1e-14);
        let g2 = eta_of_tilt(&handle, 2.0);
        let expected = 1.0f64.tanh() - 1.0f64.cosh().ln();
        assert!((g2 - expected).abs() < 1e-12, "{g2} vs {expected}");
        assert!((g2 - 0.327_813_325_472_737_8).abs() < 1e-12);
    }

    #[test]
    fn fair_coin_saturates_at_log_two() {
        // sup g = −log P(f̄ = max) = log 2; beyond it the bound is the
        // supremum of the centered integrand, ½.
        let handle = DiscreteCgf::new(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let sol = solve_index(&handle, 0.8).unwrap(); // log 2 ≈ 0.693
        assert_eq!(sol.boundary, BoundaryCase::EtaSaturatedEssSup);
        assert_eq!(sol.value, 0.5);
        assert!(sol.tilt.is_none());
        assert!((sol.achieved_eta - std::f64::consts::LN_2).abs() < 1e-6);

        // Just below the saturation point the interior root still wins.
        let sol = solve_index(&handle, std::f64::consts::LN_2 - 1e-3).unwrap();
        assert_eq!(sol.boundary, BoundaryCase::Interior);
        assert!(sol.value < 0.5);
    }

    #[test]
    fn gamma_bound_agrees_with_direct_minimization() {
        // f̄ = X − kθ for X ~ Gamma(k, θ): Λ(c) = −k·log(1 − θc) − cθk.
        let (shape, scale) = (2.0, 0.7);
        let handle = AnalyticCgf::new(
            move |c: f64| {
                if c >= 1.0 / scale {
                    f64::INFINITY
                } else {
                    -shape * (1.0 - scale * c).ln() - c * scale * shape
                }
            },
            Some(Box::new(move |c: f64| {
                shape * scale / (1.0 - scale * c) - scale * shape
            })),
            1.0 / scale,
            SupEstimate::Unbounded,
        );
        for &eta in &[0.05, 0.3, 1.0] {
            let sol = solve_index(&handle, eta).unwrap();
            // Oracle: scan the dual objective on a fine grid.
            let mut best = f64::INFINITY;
            let steps = 400_000;
            for i in 1..steps {
                let c = (i as f64 / steps as f64) * (1.0 / scale) * 0.999_999;
                let lambda = -shape * (1.0 - scale * c).ln() - c * scale * shape;
                best = best.min((lambda + eta) / c);
            }
            assert!(
                (sol.value - best).abs() < 1e-6 * best,
                "eta {eta}: {} vs grid {best}",
                sol.value
            );
            assert_eq!(sol.boundary, BoundaryCase::Interior);
            assert!((sol.achieved_eta - eta).abs() <= root_tolerance(eta));
        }
    }

    #[test]
    fn finite_domain_edge_extends_linearly() {
        // Synthetic: Λ(c) = c²/2 but declared valid only up to d = 1.5 with
        // finite edge values. sup g = g(1.5) = 1.125; for η beyond that the
        // bound is Λ′(d) + (η − sup g)/d.
        let handle = AnalyticCgf::new(
            |c: f64| 0.5 * c * c,
            Some(Box::new(|c: f64| c)),
            1.5,
            SupEstimate::Unbounded,
        );
        let eta = 2.0;
        let sol = solve_index(&handle, eta).unwrap();
        assert_eq!(sol.boundary, BoundaryCase::EtaSaturatedFiniteDomain);
        let expected = 1.5 + (eta - 1.125) / 1.5;
        assert!((sol.value - expected).abs() < 1e-6, "{} vs {expected}", sol.value);
        // Inside the reachable range the interior solve is unaffected.
        let sol = solve_index(&handle, 1.0).unwrap();
        assert_eq!(sol.boundary, BoundaryCase::Interior);
        assert!((sol.value - 2.0f64.sqrt()).abs() < 1e-6);
    }

    fn gaussian_samples(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    }

    #[test]
    fn sample_cgf_tracks_the_population_bound() {
        let samples = gaussian_samples(200_000, 31);
        let handle = SampleCgf::from_samples(&samples).unwrap();
        assert_eq!(handle.kind(), CgfKind::McEstimate);
        for &eta in &[0.1, 0.5] {
            let sol = solve_index(&handle, eta).unwrap();
            let expected = (2.0 * eta).sqrt();
            let rel = (sol.value - expected).abs() / expected;
            assert!(rel < 0.02, "eta {eta}: rel err {rel}");
            assert_eq!(sol.boundary, BoundaryCase::Interior);
            assert!(sol.diagnostics.ess.unwrap() > MIN_EFFECTIVE_SAMPLES);
        }
    }

    #[test]
    fn small_samples_with_big_radius_get_capped() {
        let samples = gaussian_samples(400, 77);
        let handle = SampleCgf::from_samples(&samples).unwrap();
        let sol = solve_index(&handle, 3.0).unwrap();
        assert_eq!(sol.boundary, BoundaryCase::CCappedMc);
        assert!(sol.diagnostics.ess.unwrap() >= MIN_EFFECTIVE_SAMPLES * 0.99);
        assert!(sol.achieved_eta < 3.0);
        assert!(!sol.diagnostics.warnings.is_empty());
        // The capped value evaluates the same dual objective at a smaller c,
        // so it can only be larger (more conservative) than the interior
        // value would have been.
        assert!(sol.value >= (2.0f64 * 3.0).sqrt() * 0.8);
    }

    #[test]
    fn bounded_mc_integrand_saturates_to_sample_max_with_warning() {
        // Empirical fair coin: saturation KL is about log 2.
        let values: Vec<f64> = (0..5000).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        let handle = SampleCgf::from_samples(&values).unwrap();
        let sol = solve_index(&handle, 2.0).unwrap();
        assert_eq!(sol.boundary, BoundaryCase::EtaSaturatedEssSup);
        assert!((sol.value - 0.5).abs() < 1e-12);
        assert!(sol
            .diagnostics
            .warnings
            .iter()
            .any(|w| w.contains("lower bound")));
    }

    #[test]
    fn negated_handles_mirror_the_integrand() {
        let handle = DiscreteCgf::new(&[0.0, 1.0], &[0.25, 0.75]).unwrap();
        let minus = handle.negated();
        // Asymmetric distribution ⇒ the two directions differ.
        let plus_sol = solve_index(&handle, 0.1).unwrap();
        let minus_sol = solve_index(&minus, 0.1).unwrap();
        assert!(plus_sol.value != minus_sol.value);
        // Supremum of the negated centered integrand is −min.
        assert_eq!(minus.integrand_sup(), SupEstimate::Exact(0.75));
    }

    #[test]
    fn tilted_weights_normalize_and_report_ess() {
        let values = gaussian_samples(10_000, 5);
        let tw = tilted_weights(&values, 0.5).unwrap();
        assert!((tw.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(tw.ess > MIN_EFFECTIVE_SAMPLES);
        // Tilting towards +f̄ shifts the weighted mean upward.
        let mean: f64 = tw.weights.iter().zip(&values).map(|(w, v)| w * v).sum();
        assert!(mean > 0.2);
    }

    #[test]
    fn degenerate_weights_are_rejected() {
        let values = gaussian_samples(10_000, 6);
        let err = tilted_weights(&values, 50.0).unwrap_err();
        assert!(matches!(err, TiltError::WeightDegeneracy { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bound_is_monotone_in_eta(
            variance in 0.01..5.0f64,
            eta_lo in 0.001..1.0f64,
            bump in 0.001..1.0f64,
        ) {
            let handle = GaussianCgf::new(variance);
            let a = solve_index(&handle, eta_lo).unwrap().value;
            let b = solve_index(&handle, eta_lo + bump).unwrap().value;
            prop_assert!(b >= a - 1e-12);
        }

        #[test]
        fn discrete_bound_is_monotone_and_capped_by_sup(
            p in 0.05..0.95f64,
            eta in 0.001..2.0f64,
        ) {
            let handle = DiscreteCgf::new(&[0.0, 1.0], &[1.0 - p, p]).unwrap();
            let sol = solve_index(&handle, eta).unwrap();
            // Never exceeds the supremum of the centered integrand.
            prop_assert!(sol.value <= (1.0 - p) + 1e-12);
            prop_assert!(sol.value >= 0.0);
        }
    }
}
