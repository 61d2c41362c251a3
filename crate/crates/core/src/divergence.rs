//! Kullback–Leibler divergences and misspecification budgets.
//!
//! Everything here is oriented the same way: `kl(q, p)` is `R(Q‖P) =
//! E_Q[log dQ/dP]`, the divergence of an alternative model `Q` from the
//! baseline `P`. Budgets (`η` values) are KL radii: how far from the baseline
//! an adversary is allowed to move a vertex's conditional distribution.
//!
//! Absolute-continuity failures (Q puts mass where P has none) are reported
//! as `+∞` with a `support_violation` flag rather than as errors, so callers
//! can surface them in reports instead of aborting.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{digamma, ln_gamma};
use thiserror::Error;

use crate::cpd::{Cpd, GammaPrior, LinearCpd, NoiseModel};
use crate::cpd::{fit_histogram, fit_kde, CpdError, DETERMINISTIC_TOL};
use crate::network::{BayesianNetwork, NetworkError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DivergenceError {
    #[error(transparent)]
    Cpd(#[from] CpdError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("networks disagree: {0}")]
    NetworkMismatch(String),
    #[error("misspecification budget must be finite and non-negative, got {0}")]
    InvalidEta(f64),
}

/// A KL value together with diagnostics. `support_violation` marks an
/// absolute-continuity failure (the value is then `+∞`); `converged` reports
/// whether adaptive quadrature met its refinement target (always true for
/// closed forms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    pub value: f64,
    pub support_violation: bool,
    pub converged: bool,
}

impl KlEstimate {
    fn exact(value: f64) -> Self {
        Self { value, support_violation: false, converged: true }
    }

    fn violation() -> Self {
        Self { value: f64::INFINITY, support_violation: true, converged: true }
    }
}

/// `KL(N(q_mean, q_sd²) ‖ N(p_mean, p_sd²))`. Degenerate baselines are
/// handled as limits: a point mass against a point mass is 0 when the means
/// agree, everything else involving a point mass is `+∞`.
pub fn kl_gaussian(q_mean: f64, q_sd: f64, p_mean: f64, p_sd: f64) -> f64 {
    if p_sd == 0.0 {
        return if q_sd == 0.0
            && (q_mean - p_mean).abs() <= DETERMINISTIC_TOL * (1.0 + p_mean.abs())
        {
            0.0
        } else {
            f64::INFINITY
        };
    }
    if q_sd == 0.0 {
        return f64::INFINITY;
    }
    (p_sd / q_sd).ln() + (q_sd * q_sd + (q_mean - p_mean).powi(2)) / (2.0 * p_sd * p_sd) - 0.5
}

/// `KL(Gamma(k_q, θ_q) ‖ Gamma(k_p, θ_p))` in shape–scale form.
pub fn kl_gamma(q: &GammaPrior, p: &GammaPrior) -> f64 {
    (q.shape - p.shape) * digamma(q.shape) - ln_gamma(q.shape) + ln_gamma(p.shape)
        + p.shape * (p.scale / q.scale).ln()
        + q.shape * (q.scale - p.scale) / p.scale
}

/// KL between two finite distributions given as matching probability rows.
pub fn kl_discrete(q: &[f64], p: &[f64]) -> KlEstimate {
    debug_assert_eq!(q.len(), p.len());
    let mut total = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi == 0.0 {
            continue;
        }
        if pi == 0.0 {
            return KlEstimate::violation();
        }
        total += qi * (qi / pi).ln();
    }
    KlEstimate::exact(total)
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

/// 10-point Gauss–Legendre nodes and weights on [−1, 1].
const GL_NODES: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_WEIGHTS: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

const QUADRATURE_REL_TOL: f64 = 1e-6;
const QUADRATURE_MIN_PANELS: usize = 8;
const QUADRATURE_MAX_PANELS: usize = 4096;

/// `∫ q(x) log(q(x)/p(x)) dx` over `[support.0, support.1]` by adaptive
/// panel-doubling Gauss–Legendre quadrature, refined until the relative
/// change between passes drops below `1e-6`. The window should cover
/// (effectively) all of `q`'s mass. A point with `q > 0` and `p = 0` makes
/// the result `+∞` with the violation flag set.
pub fn kl_density_quadrature(
    q_log: &dyn Fn(f64) -> f64,
    p_log: &dyn Fn(f64) -> f64,
    support: (f64, f64),
) -> KlEstimate {
    let (lo, hi) = support;
    debug_assert!(hi > lo);
    let mut previous = f64::NAN;
    let mut panels = QUADRATURE_MIN_PANELS;
    loop {
        let width = (hi - lo) / panels as f64;
        let mut total = 0.0;
        for panel in 0..panels {
            let a = lo + panel as f64 * width;
            let mid = a + 0.5 * width;
            let half = 0.5 * width;
            for (node, weight) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                for x in [mid - half * node, mid + half * node] {
                    let lq = q_log(x);
                    if lq == f64::NEG_INFINITY {
                        continue;
                    }
                    let lp = p_log(x);
                    if lp == f64::NEG_INFINITY {
                        return KlEstimate::violation();
                    }
                    total += weight * half * lq.exp() * (lq - lp);
                }
            }
        }
        let close_enough = (total - previous).abs()
            <= QUADRATURE_REL_TOL * total.abs().max(1e-12);
        if close_enough {
            return KlEstimate { value: total, support_violation: false, converged: true };
        }
        if panels >= QUADRATURE_MAX_PANELS {
            return KlEstimate { value: total, support_violation: false, converged: false };
        }
        previous = total;
        panels *= 2;
    }
}

/// Interval outside which a noise model carries (effectively) no mass.
/// Unbounded models use mean ± 10 standard deviations.
pub fn noise_effective_support(noise: &NoiseModel) -> (f64, f64) {
    match noise {
        NoiseModel::Gaussian { sd } => (-10.0 * sd, 10.0 * sd),
        NoiseModel::TwoPoint { low, high, .. } => (*low, *high),
        NoiseModel::Histogram(h) => h.support(),
        NoiseModel::Kernel(k) => {
            let lo = k.points().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = k.points().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo - 10.0 * k.bandwidth(), hi + 10.0 * k.bandwidth())
        }
    }
}

fn is_continuous(noise: &NoiseModel) -> bool {
    match noise {
        NoiseModel::Gaussian { sd } => *sd > 0.0,
        NoiseModel::TwoPoint { .. } => false,
        NoiseModel::Histogram(_) | NoiseModel::Kernel(_) => true,
    }
}

fn atoms_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= DETERMINISTIC_TOL * (1.0 + b.abs())
}

/// `KL(q ‖ p)` between two noise models, dispatching to closed forms where
/// available and quadrature otherwise. Mixed discrete/continuous pairs are
/// absolute-continuity failures.
pub fn noise_kl(q: &NoiseModel, p: &NoiseModel) -> KlEstimate {
    match (q, p) {
        (NoiseModel::Gaussian { sd: q_sd }, NoiseModel::Gaussian { sd: p_sd }) => {
            KlEstimate::exact(kl_gaussian(0.0, *q_sd, 0.0, *p_sd))
        }
        (
            NoiseModel::TwoPoint { low: ql, high: qh, p_high: qp },
            NoiseModel::TwoPoint { low: pl, high: ph, p_high: pp },
        ) => {
            if atoms_match(*ql, *pl) && atoms_match(*qh, *ph) {
                kl_discrete(&[1.0 - qp, *qp], &[1.0 - pp, *pp])
            } else {
                KlEstimate::violation()
            }
        }
        _ => {
            let q_continuous = is_continuous(q);
            let p_continuous = is_continuous(p);
            if !q_continuous || !p_continuous {
                // Point masses against continuous densities (and vice versa)
                // are never absolutely continuous.
                return KlEstimate::violation();
            }
            // Bounded-support baselines cannot dominate an unbounded q.
            if let NoiseModel::Histogram(ph) = p {
                let (plo, phi) = ph.support();
                let (qlo, qhi) = match q {
                    NoiseModel::Histogram(qh) => qh.support(),
                    _ => return KlEstimate::violation(),
                };
                if qlo < plo - 1e-12 || qhi > phi + 1e-12 {
                    return KlEstimate::violation();
                }
            }
            let support = noise_effective_support(q);
            kl_density_quadrature(&|x| q.log_density(x), &|x| p.log_density(x), support)
        }
    }
}

// ---------------------------------------------------------------------------
// Misspecification budgets
// ---------------------------------------------------------------------------

/// Where an η value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetProvenance {
    UserSet,
    DataEstimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetEntry {
    pub eta: f64,
    pub provenance: BudgetProvenance,
}

/// Per-vertex and whole-model KL radii.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MisspecificationBudget {
    per_vertex: BTreeMap<usize, BudgetEntry>,
    global: Option<BudgetEntry>,
}

impl MisspecificationBudget {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_vertex(
        &mut self,
        vertex: usize,
        eta: f64,
        provenance: BudgetProvenance,
    ) -> Result<(), DivergenceError> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(DivergenceError::InvalidEta(eta));
        }
        self.per_vertex.insert(vertex, BudgetEntry { eta, provenance });
        Ok(())
    }

    pub fn set_global(
        &mut self,
        eta: f64,
        provenance: BudgetProvenance,
    ) -> Result<(), DivergenceError> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(DivergenceError::InvalidEta(eta));
        }
        self.global = Some(BudgetEntry { eta, provenance });
        Ok(())
    }

    pub fn vertex_entry(&self, vertex: usize) -> Option<BudgetEntry> {
        self.per_vertex.get(&vertex).copied()
    }

    pub fn vertex_eta(&self, vertex: usize) -> Option<f64> {
        self.vertex_entry(vertex).map(|e| e.eta)
    }

    pub fn global_entry(&self) -> Option<BudgetEntry> {
        self.global
    }

    pub fn vertices(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_vertex.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, BudgetEntry)> + '_ {
        self.per_vertex.iter().map(|(&v, &e)| (v, e))
    }
}

// ---------------------------------------------------------------------------
// Data-driven η
// ---------------------------------------------------------------------------

/// How to estimate the alternative noise density from residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualFit {
    Gaussian,
    Histogram { bins: usize },
    Kernel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaEstimate {
    pub eta: f64,
    pub fitted_noise: NoiseModel,
    pub support_violation: bool,
}

/// Estimates a vertex's misspecification radius from observations: compute
/// residuals against the modeled affine mean, fit a fresh noise density to
/// them, and return its KL divergence from the modeled noise. Valid for
/// additive-noise CPDs, where the noise law does not depend on the parents.
pub fn eta_from_samples(
    child: &[f64],
    parent_columns: &[&[f64]],
    modeled: &LinearCpd,
    fit: ResidualFit,
) -> Result<EtaEstimate, DivergenceError> {
    if parent_columns.len() != modeled.weights.len() {
        return Err(DivergenceError::NetworkMismatch(format!(
            "model expects {} parent columns, got {}",
            modeled.weights.len(),
            parent_columns.len()
        )));
    }
    for col in parent_columns {
        if col.len() != child.len() {
            return Err(CpdError::LengthMismatch { expected: child.len(), got: col.len() }.into());
        }
    }
    if child.is_empty() {
        return Err(CpdError::InsufficientData { needed: 1, got: 0 }.into());
    }
    let mut parent_buf = vec![0.0; parent_columns.len()];
    let residuals: Vec<f64> = child
        .iter()
        .enumerate()
        .map(|(row, &y)| {
            for (slot, col) in parent_columns.iter().enumerate() {
                parent_buf[slot] = col[row];
            }
            y - modeled.location(&parent_buf)
        })
        .collect();

    let fitted = match fit {
        ResidualFit::Gaussian => {
            let n = residuals.len() as f64;
            let mean = residuals.iter().sum::<f64>() / n;
            let var = residuals.iter().map(|&e| (e - mean).powi(2)).sum::<f64>() / n;
            // A mean shift in the residuals is part of the discrepancy, so
            // fold it into the fitted density rather than recentring.
            shifted_gaussian(mean, var.sqrt())
        }
        ResidualFit::Histogram { bins } => NoiseModel::Histogram(fit_histogram(&residuals, bins)?),
        ResidualFit::Kernel => NoiseModel::Kernel(fit_kde(&residuals)?),
    };
    let kl = match (&fitted, &modeled.noise) {
        (NoiseModel::Histogram(h), NoiseModel::Gaussian { sd }) if *sd > 0.0 => {
            // Histogram-vs-Gaussian is the common data path; integrate over
            // the histogram's own support.
            kl_density_quadrature(&|x| h.log_density(x), &|x| {
                NoiseModel::Gaussian { sd: *sd }.log_density(x)
            }, h.support())
        }
        _ => noise_kl(&fitted, &modeled.noise),
    };
    Ok(EtaEstimate {
        eta: kl.value,
        fitted_noise: fitted,
        support_violation: kl.support_violation,
    })
}

/// Gaussian noise with a non-zero mean, represented as a one-point kernel
/// mixture so it stays inside [`NoiseModel`].
fn shifted_gaussian(mean: f64, sd: f64) -> NoiseModel {
    if mean == 0.0 {
        NoiseModel::Gaussian { sd }
    } else {
        NoiseModel::Kernel(
            crate::cpd::KernelDensity::new(vec![mean], sd.max(1e-300))
                .expect("positive bandwidth"),
        )
    }
}

/// KL cost of coupling a formerly independent Gaussian vertex to another
/// Gaussian vertex by a unit-weight edge: under the alternative, the child's
/// mean gains the parent's value. With parent moments `(parent_mean,
/// parent_var)` and child noise sd `child_sd`, the averaged conditional KL is
/// `(parent_mean² + parent_var) / (2·child_sd²)`.
pub fn eta_unit_edge_coupling(parent_mean: f64, parent_var: f64, child_sd: f64) -> f64 {
    (parent_mean * parent_mean + parent_var) / (2.0 * child_sd * child_sd)
}

// ---------------------------------------------------------------------------
// Chain rule over networks
// ---------------------------------------------------------------------------

/// How a per-vertex KL contribution was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlMethod {
    ClosedForm,
    Exhaustive,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexKl {
    pub vertex: usize,
    pub value: f64,
    pub method: KlMethod,
}

/// `R(Q‖P)` split into per-vertex terms
/// `E_Q[ KL( Q_v(·|parents_Q) ‖ P_v(·|parents_P) ) ]`; the terms sum to the
/// joint divergence.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRuleDecomposition {
    pub per_vertex: Vec<VertexKl>,
    pub total: f64,
    pub support_violation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainRuleOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for ChainRuleOptions {
    fn default() -> Self {
        Self { samples: 20_000, seed: 0 }
    }
}

const EXHAUSTIVE_CONFIG_LIMIT: usize = 1 << 20;

/// Decomposes `R(Q‖P)` over vertices. The two networks must have the same
/// vertex count (and labels, when both are labeled); their edge sets may
/// differ. Strategy per network pair:
///
/// * both linear-Gaussian → exact, via Q's joint moments;
/// * both fully discrete and small → exact, by enumerating configurations;
/// * otherwise → Monte-Carlo over draws from Q of the conditional
///   log-density ratio, which is unbiased for each vertex term.
pub fn kl_chain_rule(
    q: &BayesianNetwork,
    p: &BayesianNetwork,
    options: &ChainRuleOptions,
) -> Result<ChainRuleDecomposition, DivergenceError> {
    let n = q.vertex_count();
    if p.vertex_count() != n {
        return Err(DivergenceError::NetworkMismatch(format!(
            "vertex counts differ: {} vs {}",
            n,
            p.vertex_count()
        )));
    }
    if let (Some(ql), Some(pl)) = (q.dag().labels(), p.dag().labels()) {
        if ql != pl {
            return Err(DivergenceError::NetworkMismatch(
                "vertex labels differ between the two networks".into(),
            ));
        }
    }

    if let Some(out) = chain_rule_linear_gaussian(q, p) {
        return Ok(out);
    }
    if let Some(out) = chain_rule_exhaustive(q, p) {
        return Ok(out);
    }
    Ok(chain_rule_monte_carlo(q, p, options))
}

fn chain_rule_linear_gaussian(
    q: &BayesianNetwork,
    p: &BayesianNetwork,
) -> Option<ChainRuleDecomposition> {
    let q_moments = q.gaussian_joint_moments().ok()?;
    if !p.is_linear_gaussian() {
        return None;
    }
    let mut per_vertex = Vec::with_capacity(q.vertex_count());
    let mut total = 0.0;
    let mut violation = false;
    for v in 0..q.vertex_count() {
        let (qb, qw, q_sd) = linear_gaussian_view(q.cpd(v))?;
        let (pb, pw, p_sd) = linear_gaussian_view(p.cpd(v))?;
        // Mean difference as an affine function over the union parent set,
        // then its Q-moments.
        let mut delta: BTreeMap<usize, f64> = BTreeMap::new();
        for (w, &parent) in qw.iter().zip(q.dag().parents(v)) {
            *delta.entry(parent).or_insert(0.0) += w;
        }
        for (w, &parent) in pw.iter().zip(p.dag().parents(v)) {
            *delta.entry(parent).or_insert(0.0) -= w;
        }
        let mean_diff = qb - pb
            + delta
                .iter()
                .map(|(&u, w)| w * q_moments.mean(u))
                .sum::<f64>();
        let mut var_diff = 0.0;
        for (&u1, w1) in &delta {
            for (&u2, w2) in &delta {
                var_diff += w1 * w2 * q_moments.covariance(u1, u2);
            }
        }
        let value = if p_sd == 0.0 {
            if q_sd == 0.0 && mean_diff.abs() <= 1e-12 && var_diff.abs() <= 1e-24 {
                0.0
            } else {
                violation = true;
                f64::INFINITY
            }
        } else if q_sd == 0.0 {
            violation = true;
            f64::INFINITY
        } else {
            // E_Q of the per-configuration Gaussian KL.
            (p_sd / q_sd).ln()
                + (q_sd * q_sd + mean_diff * mean_diff + var_diff) / (2.0 * p_sd * p_sd)
                - 0.5
        };
        total += value;
        per_vertex.push(VertexKl { vertex: v, value, method: KlMethod::ClosedForm });
    }
    Some(ChainRuleDecomposition { per_vertex, total, support_violation: violation })
}

fn linear_gaussian_view(cpd: &Cpd) -> Option<(f64, Vec<f64>, f64)> {
    match cpd {
        Cpd::Linear(l) => match l.noise {
            NoiseModel::Gaussian { sd } => Some((l.intercept, l.weights.clone(), sd)),
            _ => None,
        },
        Cpd::Deterministic(_) => {
            let (b, w) = cpd.mean_affine()?;
            Some((b, w, 0.0))
        }
        _ => None,
    }
}

fn chain_rule_exhaustive(
    q: &BayesianNetwork,
    p: &BayesianNetwork,
) -> Option<ChainRuleDecomposition> {
    let n = q.vertex_count();
    let mut supports = Vec::with_capacity(n);
    for v in 0..n {
        let (Cpd::Discrete(qd), Cpd::Discrete(pd)) = (q.cpd(v), p.cpd(v)) else {
            return None;
        };
        if qd.support() != pd.support() {
            return None;
        }
        supports.push(qd.support().to_vec());
    }
    let total_configs: usize = supports.iter().map(|s| s.len()).try_fold(1usize, |acc, c| {
        acc.checked_mul(c).filter(|&t| t <= EXHAUSTIVE_CONFIG_LIMIT)
    })?;

    let mut per_vertex: Vec<f64> = vec![0.0; n];
    let mut indices = vec![0usize; n];
    let mut x = vec![0.0f64; n];
    let mut q_parents = Vec::new();
    let mut p_parents = Vec::new();
    for _ in 0..total_configs {
        for v in 0..n {
            x[v] = supports[v][indices[v]];
        }
        let weight = q.joint_log_density(&x).exp();
        if weight > 0.0 {
            for v in 0..n {
                q_parents.clear();
                q_parents.extend(q.dag().parents(v).iter().map(|&u| x[u]));
                p_parents.clear();
                p_parents.extend(p.dag().parents(v).iter().map(|&u| x[u]));
                let lq = q.cpd(v).log_density(x[v], &q_parents);
                let lp = p.cpd(v).log_density(x[v], &p_parents);
                per_vertex[v] += weight * (lq - lp);
            }
        }
        // Odometer increment over support indices.
        for v in (0..n).rev() {
            indices[v] += 1;
            if indices[v] < supports[v].len() {
                break;
            }
            indices[v] = 0;
        }
    }
    let total: f64 = per_vertex.iter().sum();
    let violation = per_vertex.iter().any(|t| t.is_infinite() || t.is_nan());
    Some(ChainRuleDecomposition {
        per_vertex: per_vertex
            .into_iter()
            .enumerate()
            .map(|(vertex, value)| VertexKl {
                vertex,
                value: if value.is_nan() { f64::INFINITY } else { value },
                method: KlMethod::Exhaustive,
            })
            .collect(),
        total: if total.is_nan() { f64::INFINITY } else { total },
        support_violation: violation,
    })
}

fn kind_mismatch(qc: &Cpd, pc: &Cpd) -> bool {
    // A deterministic (or point-mass) Q against a continuous P — or any
    // discrete/continuous mix — breaks absolute continuity, and a naive
    // log-ratio average would silently mix base measures.
    let q_det = qc.is_deterministic();
    let p_det = pc.is_deterministic();
    if q_det || p_det {
        return !(q_det && p_det);
    }
    matches!(qc, Cpd::Discrete(_)) != matches!(pc, Cpd::Discrete(_))
}

fn chain_rule_monte_carlo(
    q: &BayesianNetwork,
    p: &BayesianNetwork,
    options: &ChainRuleOptions,
) -> ChainRuleDecomposition {
    let n = q.vertex_count();
    let mut per_vertex = vec![0.0f64; n];
    let mut violation = false;
    for v in 0..n {
        if kind_mismatch(q.cpd(v), p.cpd(v)) {
            per_vertex[v] = f64::INFINITY;
            violation = true;
        }
    }

    let samples = q.sample(options.samples, options.seed);
    let mut q_parents = Vec::new();
    let mut p_parents = Vec::new();
    for row in samples.iter_rows() {
        for v in 0..n {
            if per_vertex[v].is_infinite() {
                continue;
            }
            q_parents.clear();
            q_parents.extend(q.dag().parents(v).iter().map(|&u| row[u]));
            p_parents.clear();
            p_parents.extend(p.dag().parents(v).iter().map(|&u| row[u]));
            let lq = q.cpd(v).log_density(row[v], &q_parents);
            let lp = p.cpd(v).log_density(row[v], &p_parents);
            if lp == f64::NEG_INFINITY {
                per_vertex[v] = f64::INFINITY;
                violation = true;
                continue;
            }
            // Deterministic pairs contribute 0 when consistent; lq is then 0.
            per_vertex[v] += (lq - lp) / options.samples as f64;
        }
    }
    let total: f64 = per_vertex.iter().sum();
    ChainRuleDecomposition {
        per_vertex: per_vertex
            .into_iter()
            .enumerate()
            .map(|(vertex, value)| VertexKl { vertex, value, method: KlMethod::MonteCarlo })
            .collect(),
        total,
        support_violation: violation,
    }
}

// ---------------------------------------------------------------------------

/// Draws a reproducible RNG for divergence estimators outside the network
/// sampling path.
#[allow(dead_code)]
fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
