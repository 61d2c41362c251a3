//! Conditional probability distributions attached to network vertices.
//!
//! Four families cover the networks this crate works with:
//!
//! * [`LinearCpd`] — mean affine in the parents plus independent additive
//!   noise ([`NoiseModel`]): Gaussian (possibly degenerate, `sd = 0`),
//!   two-point, histogram, or kernel-density noise. With no parents this
//!   doubles as a plain univariate density.
//! * [`GammaPrior`] — parentless gamma density on `(0, ∞)`.
//! * [`Deterministic`] — an exact function of the parents given by an
//!   arithmetic expression; contributes a Dirac factor to the joint density.
//! * [`FiniteDiscrete`] — finite support with one probability row per parent
//!   configuration.
//!
//! Fitting helpers (`fit_linear_gaussian`, `fit_histogram`, `fit_kde`) turn
//! observation columns into CPDs; they are the data path behind the `fit`
//! workflow.

use rand::Rng;
use rand_distr::Distribution;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::expr::Expr;

/// Relative tolerance used when checking that a value is consistent with a
/// deterministic (Dirac) vertex. Exact equality would be too brittle once
/// values round-trip through decimal text.
pub const DETERMINISTIC_TOL: f64 = 1e-9;

/// Probability rows must sum to one within this absolute tolerance.
pub const PROBABILITY_ROW_TOL: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CpdError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("design matrix is rank-deficient; parent columns are collinear")]
    RankDeficientDesign,
    #[error("column length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("probability row {row} sums to {sum}, expected 1")]
    InvalidProbabilityRow { row: usize, sum: f64 },
    #[error("expression references '{name}', which is not a parent")]
    UnboundVariable { name: String },
}

// ---------------------------------------------------------------------------
// Noise models for additive-noise CPDs
// ---------------------------------------------------------------------------

/// Distribution of the additive noise term in a [`LinearCpd`].
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// `N(0, sd²)`; `sd = 0` degenerates to a point mass at the mean.
    Gaussian { sd: f64 },
    /// Two atoms `low < high` with `P(high) = p_high`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
    Histogram(HistogramDensity),
    Kernel(KernelDensity),
}

impl NoiseModel {
    pub fn gaussian(sd: f64) -> Result<Self, CpdError> {
        if !(sd >= 0.0) || !sd.is_finite() {
            return Err(CpdError::InvalidParameter(format!(
                "noise sd must be finite and non-negative, got {sd}"
            )));
        }
        Ok(NoiseModel::Gaussian { sd })
    }

    /// Mean-zero two-point noise with standard deviation `sd` and
    /// `P(high atom) = p_high`.
    pub fn two_point_mean_zero(sd: f64, p_high: f64) -> Result<Self, CpdError> {
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(CpdError::InvalidParameter(format!(
                "two-point sd must be positive, got {sd}"
            )));
        }
        if !(p_high > 0.0 && p_high < 1.0) {
            return Err(CpdError::InvalidParameter(format!(
                "p_high must lie in (0, 1), got {p_high}"
            )));
        }
        let high = sd * ((1.0 - p_high) / p_high).sqrt();
        let low = -sd * (p_high / (1.0 - p_high)).sqrt();
        Ok(NoiseModel::TwoPoint { low, high, p_high })
    }

    pub fn mean(&self) -> f64 {
        match self {
            NoiseModel::Gaussian { .. } => 0.0,
            NoiseModel::TwoPoint { low, high, p_high } => {
                p_high * high + (1.0 - p_high) * low
            }
            NoiseModel::Histogram(h) => h.mean(),
            NoiseModel::Kernel(k) => k.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            NoiseModel::Gaussian { sd } => sd * sd,
            NoiseModel::TwoPoint { low, high, p_high } => {
                let m = self.mean();
                p_high * (high - m).powi(2) + (1.0 - p_high) * (low - m).powi(2)
            }
            NoiseModel::Histogram(h) => h.variance(),
            NoiseModel::Kernel(k) => k.variance(),
        }
    }

    /// Log-density of the noise at `e` (log-probability for the two-point
    /// model, with [`DETERMINISTIC_TOL`]-relative atom matching).
    pub fn log_density(&self, e: f64) -> f64 {
        match self {
            NoiseModel::Gaussian { sd } => {
                if *sd == 0.0 {
                    if dirac_consistent(e, 0.0) {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    -0.5 * LN_2PI - sd.ln() - 0.5 * (e / sd).powi(2)
                }
            }
            NoiseModel::TwoPoint { low, high, p_high } => {
                if dirac_consistent(e, *high) {
                    p_high.ln()
                } else if dirac_consistent(e, *low) {
                    (1.0 - p_high).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            NoiseModel::Histogram(h) => h.log_density(e),
            NoiseModel::Kernel(k) => k.log_density(e),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Gaussian { sd } => {
                if *sd == 0.0 {
                    0.0
                } else {
                    rand_distr::Normal::new(0.0, *sd)
                        .expect("validated sd")
                        .sample(rng)
                }
            }
            NoiseModel::TwoPoint { low, high, p_high } => {
                if rng.gen::<f64>() < *p_high {
                    *high
                } else {
                    *low
                }
            }
            NoiseModel::Histogram(h) => h.sample(rng),
            NoiseModel::Kernel(k) => k.sample(rng),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, NoiseModel::Gaussian { sd } if *sd == 0.0)
    }
}

fn dirac_consistent(value: f64, target: f64) -> bool {
    (value - target).abs() <= DETERMINISTIC_TOL * (1.0 + target.abs())
}

// ---------------------------------------------------------------------------
// Density estimators
// ---------------------------------------------------------------------------

/// Piecewise-constant density on equal-width bins.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramDensity {
    edges: Vec<f64>,
    masses: Vec<f64>,
}

impl HistogramDensity {
    pub fn new(edges: Vec<f64>, masses: Vec<f64>) -> Result<Self, CpdError> {
        if edges.len() != masses.len() + 1 || masses.is_empty() {
            return Err(CpdError::InvalidParameter(format!(
                "need one more edge than mass, got {} edges and {} masses",
                edges.len(),
                masses.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CpdError::InvalidParameter(
                "bin edges must be strictly increasing".into(),
            ));
        }
        if masses.iter().any(|&m| !(m >= 0.0)) {
            return Err(CpdError::InvalidParameter("bin masses must be non-negative".into()));
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CpdError::InvalidProbabilityRow { row: 0, sum });
        }
        Ok(Self { edges, masses })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn support(&self) -> (f64, f64) {
        (self.edges[0], *self.edges.last().unwrap())
    }

    fn bin_of(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return None;
        }
        if x == hi {
            return Some(self.masses.len() - 1);
        }
        // Bins are equal-width when fitted, but `partition_point` keeps this
        // correct for any increasing edge vector.
        let idx = self.edges.partition_point(|&e| e <= x);
        Some(idx - 1)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        match self.bin_of(x) {
            None => f64::NEG_INFINITY,
            Some(i) => {
                let width = self.edges[i + 1] - self.edges[i];
                if self.masses[i] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (self.masses[i] / width).ln()
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.masses
            .iter()
            .enumerate()
            .map(|(i, m)| m * 0.5 * (self.edges[i] + self.edges[i + 1]))
            .sum()
    }

    pub fn variance(&self) -> f64 {
        // Exact second moment of the piecewise-uniform density.
        let mean = self.mean();
        let second: f64 = self
            .masses
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let (a, b) = (self.edges[i], self.edges[i + 1]);
                m * (a * a + a * b + b * b) / 3.0
            })
            .sum();
        second - mean * mean
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let i = self.bin_of(x).unwrap();
        let below: f64 = self.masses[..i].iter().sum();
        let frac = (x - self.edges[i]) / (self.edges[i + 1] - self.edges[i]);
        below + self.masses[i] * frac
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, m) in self.masses.iter().enumerate() {
            acc += m;
            if u <= acc || i == self.masses.len() - 1 {
                let v: f64 = rng.gen();
                return self.edges[i] + v * (self.edges[i + 1] - self.edges[i]);
            }
        }
        unreachable!("masses sum to one");
    }
}

/// Fits an equal-width histogram over `[min, max]`. A degenerate sample
/// (all values equal) gets a symmetric ε-padding so every bin has positive
/// width.
pub fn fit_histogram(samples: &[f64], bin_count: usize) -> Result<HistogramDensity, CpdError> {
    if samples.is_empty() {
        return Err(CpdError::InsufficientData { needed: 1, got: 0 });
    }
    if bin_count == 0 {
        return Err(CpdError::InvalidParameter("bin count must be positive".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in samples {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if hi - lo <= 0.0 {
        let pad = 1e-9 * (1.0 + lo.abs());
        lo -= pad;
        hi += pad;
    }
    let width = (hi - lo) / bin_count as f64;
    let edges: Vec<f64> = (0..=bin_count)
        .map(|i| {
            if i == bin_count {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut counts = vec![0usize; bin_count];
    for &x in samples {
        let idx = (((x - lo) / width) as usize).min(bin_count - 1);
        counts[idx] += 1;
    }
    let n = samples.len() as f64;
    let masses: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    HistogramDensity::new(edges, masses)
}

/// Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensity {
    points: Vec<f64>,
    bandwidth: f64,
}

impl KernelDensity {
    pub fn new(points: Vec<f64>, bandwidth: f64) -> Result<Self, CpdError> {
        if points.is_empty() {
            return Err(CpdError::InsufficientData { needed: 1, got: 0 });
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(CpdError::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self { points, bandwidth })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn log_density(&self, x: f64) -> f64 {
        // log of (1/(n h)) Σ φ((x - xi)/h), via a max-shifted log-sum-exp.
        let h = self.bandwidth;
        let mut max_term = f64::NEG_INFINITY;
        for &p in &self.points {
            let t = -0.5 * ((x - p) / h).powi(2);
            if t > max_term {
                max_term = t;
            }
        }
        let sum: f64 = self
            .points
            .iter()
            .map(|&p| (-0.5 * ((x - p) / h).powi(2) - max_term).exp())
            .sum();
        max_term + sum.ln() - (self.points.len() as f64).ln() - h.ln() - 0.5 * LN_2PI
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().sum::<f64>() / self.points.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let spread: f64 =
            self.points.iter().map(|&p| (p - m).powi(2)).sum::<f64>() / self.points.len() as f64;
        spread + self.bandwidth * self.bandwidth
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let idx = rng.gen_range(0..self.points.len());
        let z: f64 = rand_distr::StandardNormal.sample(rng);
        self.points[idx] + self.bandwidth * z
    }
}

/// Fits a Gaussian KDE with Silverman's bandwidth `1.06 σ̂ n^(-1/5)`.
pub fn fit_kde(samples: &[f64]) -> Result<KernelDensity, CpdError> {
    if samples.len() < 2 {
        return Err(CpdError::InsufficientData { needed: 2, got: samples.len() });
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut bandwidth = 1.06 * var.sqrt() * n.powf(-0.2);
    if !(bandwidth > 0.0) {
        // All observations identical: fall back to a narrow kernel so the
        // estimate stays a proper density.
        bandwidth = 1e-9 * (1.0 + mean.abs());
    }
    KernelDensity::new(samples.to_vec(), bandwidth)
}

// ---------------------------------------------------------------------------
// CPD families
// ---------------------------------------------------------------------------

/// Mean affine in the parents plus additive noise:
/// `X = intercept + Σ weights[i]·parent[i] + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCpd {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub noise: NoiseModel,
}

impl LinearCpd {
    pub fn gaussian(intercept: f64, weights: Vec<f64>, sd: f64) -> Result<Self, CpdError> {
        Ok(Self { intercept, weights, noise: NoiseModel::gaussian(sd)? })
    }

    pub fn location(&self, parents: &[f64]) -> f64 {
        debug_assert_eq!(parents.len(), self.weights.len());
        self.intercept
            + self
                .weights
                .iter()
                .zip(parents)
                .map(|(w, p)| w * p)
                .sum::<f64>()
    }
}

/// Parentless gamma density (shape–scale parameterization).
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, scale: f64) -> Result<Self, CpdError> {
        if !(shape > 0.0 && shape.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
            return Err(CpdError::InvalidParameter(format!(
                "gamma shape and scale must be positive, got shape={shape}, scale={scale}"
            )));
        }
        Ok(Self { shape, scale })
    }

    /// Gamma with prescribed mean and standard deviation
    /// (`shape = mean²/sd²`, `scale = sd²/mean`).
    pub fn with_mean_and_sd(mean: f64, sd: f64) -> Result<Self, CpdError> {
        if !(mean > 0.0) {
            return Err(CpdError::InvalidParameter(format!(
                "gamma mean must be positive, got {mean}"
            )));
        }
        if !(sd > 0.0) {
            return Err(CpdError::InvalidParameter(format!(
                "gamma sd must be positive, got {sd}"
            )));
        }
        Self::new(mean * mean / (sd * sd), sd * sd / mean)
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * x.ln() - x / self.scale
            - self.shape * self.scale.ln()
            - ln_gamma(self.shape)
    }

    /// Cumulant generating function `Λ(c) = log E[e^{cX}]`, finite for
    /// `c < 1/scale`.
    pub fn cgf(&self, c: f64) -> f64 {
        if c >= 1.0 / self.scale {
            f64::INFINITY
        } else {
            -self.shape * (1.0 - self.scale * c).ln()
        }
    }

    /// Derivative of the CGF on its domain.
    pub fn cgf_derivative(&self, c: f64) -> f64 {
        if c >= 1.0 / self.scale {
            f64::INFINITY
        } else {
            self.shape * self.scale / (1.0 - self.scale * c)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rand_distr::Gamma::new(self.shape, self.scale)
            .expect("validated parameters")
            .sample(rng)
    }
}

/// Exact function of the parents; the joint density treats it as a Dirac
/// factor (0 when consistent, −∞ otherwise).
#[derive(Debug, Clone, PartialEq)]
pub struct Deterministic {
    expr: Expr,
    parent_names: Vec<String>,
}

impl Deterministic {
    pub fn new(expr: Expr, parent_names: Vec<String>) -> Result<Self, CpdError> {
        for var in expr.variables() {
            if !parent_names.iter().any(|n| n == var) {
                return Err(CpdError::UnboundVariable { name: var.to_string() });
            }
        }
        Ok(Self { expr, parent_names })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn parent_names(&self) -> &[String] {
        &self.parent_names
    }

    pub fn value(&self, parents: &[f64]) -> f64 {
        debug_assert_eq!(parents.len(), self.parent_names.len());
        self.expr
            .eval(&|name| {
                self.parent_names
                    .iter()
                    .position(|n| n == name)
                    .map(|i| parents[i])
            })
            .expect("variables validated at construction")
    }
}

/// Finite-support CPD: one probability row per parent configuration.
///
/// Rows are stored in row-major order over the parent support indices with
/// the **last parent varying fastest**.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiscrete {
    support: Vec<f64>,
    parent_supports: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
}

impl FiniteDiscrete {
    pub fn new(
        support: Vec<f64>,
        parent_supports: Vec<Vec<f64>>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, CpdError> {
        if support.is_empty() {
            return Err(CpdError::InvalidParameter("support must be non-empty".into()));
        }
        if support.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CpdError::InvalidParameter(
                "support values must be strictly increasing".into(),
            ));
        }
        for ps in &parent_supports {
            if ps.is_empty() {
                return Err(CpdError::InvalidParameter(
                    "parent support must be non-empty".into(),
                ));
            }
            if ps.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(CpdError::InvalidParameter(
                    "parent support values must be strictly increasing".into(),
                ));
            }
        }
        let expected_rows: usize = parent_supports.iter().map(|p| p.len()).product();
        if rows.len() != expected_rows {
            return Err(CpdError::LengthMismatch { expected: expected_rows, got: rows.len() });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != support.len() {
                return Err(CpdError::LengthMismatch {
                    expected: support.len(),
                    got: row.len(),
                });
            }
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(CpdError::InvalidParameter(format!(
                    "row {i} contains a negative probability"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_ROW_TOL {
                return Err(CpdError::InvalidProbabilityRow { row: i, sum });
            }
        }
        Ok(Self { support, parent_supports, rows })
    }

    /// Parentless convenience constructor.
    pub fn marginal(support: Vec<f64>, probabilities: Vec<f64>) -> Result<Self, CpdError> {
        Self::new(support, Vec::new(), vec![probabilities])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn parent_supports(&self) -> &[Vec<f64>] {
        &self.parent_supports
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn cardinality(&self) -> usize {
        self.support.len()
    }

    /// Index of `value` in the support, matched with the Dirac tolerance.
    pub fn value_index(&self, value: f64) -> Option<usize> {
        self.support.iter().position(|&s| dirac_consistent(value, s))
    }

    /// Row index for parent support indices (last parent fastest).
    pub fn row_index(&self, parent_indices: &[usize]) -> usize {
        debug_assert_eq!(parent_indices.len(), self.parent_supports.len());
        let mut idx = 0;
        for (i, &pi) in parent_indices.iter().enumerate() {
            debug_assert!(pi < self.parent_supports[i].len());
            idx = idx * self.parent_supports[i].len() + pi;
        }
        idx
    }

    pub fn row_for_values(&self, parents: &[f64]) -> Option<&[f64]> {
        let mut indices = Vec::with_capacity(parents.len());
        for (ps, &v) in self.parent_supports.iter().zip(parents) {
            indices.push(ps.iter().position(|&s| dirac_consistent(v, s))?);
        }
        Some(&self.rows[self.row_index(&indices)])
    }

    pub fn conditional_mean(&self, parents: &[f64]) -> Option<f64> {
        let row = self.row_for_values(parents)?;
        Some(row.iter().zip(&self.support).map(|(p, v)| p * v).sum())
    }
}

// ---------------------------------------------------------------------------
// Unified CPD enum
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Cpd {
    Linear(LinearCpd),
    Gamma(GammaPrior),
    Deterministic(Deterministic),
    Discrete(FiniteDiscrete),
}

impl Cpd {
    pub fn parent_count(&self) -> usize {
        match self {
            Cpd::Linear(l) => l.weights.len(),
            Cpd::Gamma(_) => 0,
            Cpd::Deterministic(d) => d.parent_names.len(),
            Cpd::Discrete(d) => d.parent_supports.len(),
        }
    }

    /// Log-density (or log-probability) of `value` given parent values.
    /// Deterministic vertices contribute `0` when consistent and `−∞`
    /// otherwise; values off a discrete support give `−∞`.
    pub fn log_density(&self, value: f64, parents: &[f64]) -> f64 {
        match self {
            Cpd::Linear(l) => l.noise.log_density(value - l.location(parents)),
            Cpd::Gamma(g) => g.log_density(value),
            Cpd::Deterministic(d) => {
                if dirac_consistent(value, d.value(parents)) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Cpd::Discrete(d) => {
                let (Some(row), Some(vi)) = (d.row_for_values(parents), d.value_index(value))
                else {
                    return f64::NEG_INFINITY;
                };
                let p = row[vi];
                if p > 0.0 {
                    p.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, parents: &[f64], rng: &mut R) -> f64 {
        match self {
            Cpd::Linear(l) => l.location(parents) + l.noise.sample(rng),
            Cpd::Gamma(g) => g.sample(rng),
            Cpd::Deterministic(d) => d.value(parents),
            Cpd::Discrete(d) => {
                let row = d
                    .row_for_values(parents)
                    .expect("parent values must lie on the parent supports");
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, &p) in row.iter().enumerate() {
                    acc += p;
                    if u <= acc || i == row.len() - 1 {
                        return d.support[i];
                    }
                }
                unreachable!("row sums to one")
            }
        }
    }

    /// Conditional mean given parent values.
    pub fn conditional_mean(&self, parents: &[f64]) -> f64 {
        match self {
            Cpd::Linear(l) => l.location(parents) + l.noise.mean(),
            Cpd::Gamma(g) => g.mean(),
            Cpd::Deterministic(d) => d.value(parents),
            Cpd::Discrete(d) => d
                .conditional_mean(parents)
                .expect("parent values must lie on the parent supports"),
        }
    }

    /// Conditional variance given parent values (constant across parent
    /// configurations except for the discrete family).
    pub fn conditional_variance(&self, parents: &[f64]) -> f64 {
        match self {
            Cpd::Linear(l) => l.noise.variance(),
            Cpd::Gamma(g) => g.variance(),
            Cpd::Deterministic(_) => 0.0,
            Cpd::Discrete(d) => {
                let row = d
                    .row_for_values(parents)
                    .expect("parent values must lie on the parent supports");
                let m: f64 = row.iter().zip(&d.support).map(|(p, v)| p * v).sum();
                row.iter()
                    .zip(&d.support)
                    .map(|(p, v)| p * (v - m).powi(2))
                    .sum()
            }
        }
    }

    /// True when the vertex is an exact function of its parents.
    pub fn is_deterministic(&self) -> bool {
        match self {
            Cpd::Deterministic(_) => true,
            Cpd::Linear(l) => l.noise.is_degenerate(),
            _ => false,
        }
    }

    /// The conditional mean as an affine function of the parents, when it is
    /// one: returns `(intercept, weights)` aligned with the parent order.
    pub fn mean_affine(&self) -> Option<(f64, Vec<f64>)> {
        match self {
            Cpd::Linear(l) => Some((l.intercept + l.noise.mean(), l.weights.clone())),
            Cpd::Gamma(g) => Some((g.mean(), Vec::new())),
            Cpd::Deterministic(d) => {
                let form = d.expr.as_linear_form()?;
                let weights = d
                    .parent_names
                    .iter()
                    .map(|n| form.coefficients.get(n).copied().unwrap_or(0.0))
                    .collect();
                Some((form.constant, weights))
            }
            Cpd::Discrete(d) => {
                if d.parent_supports.is_empty() {
                    Some((d.conditional_mean(&[]).unwrap(), Vec::new()))
                } else {
                    None
                }
            }
        }
    }

    /// Linear-Gaussian view: `(intercept, weights, sd)` if this is an affine
    /// mean with Gaussian noise (possibly `sd = 0`).
    pub fn as_linear_gaussian(&self) -> Option<(f64, &[f64], f64)> {
        match self {
            Cpd::Linear(l) => match l.noise {
                NoiseModel::Gaussian { sd } => Some((l.intercept, &l.weights, sd)),
                _ => None,
            },
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Linear-Gaussian fitting
// ---------------------------------------------------------------------------

/// Ordinary-least-squares fit of `child ~ intercept + Σ wᵢ·parentᵢ` with the
/// maximum-likelihood noise variance (residual sum of squares divided by `n`,
/// not `n − p`).
pub fn fit_linear_gaussian(
    child: &[f64],
    parent_columns: &[&[f64]],
) -> Result<LinearCpd, CpdError> {
    let n = child.len();
    let p = parent_columns.len();
    for col in parent_columns {
        if col.len() != n {
            return Err(CpdError::LengthMismatch { expected: n, got: col.len() });
        }
    }
    if n < p + 1 {
        return Err(CpdError::InsufficientData { needed: p + 1, got: n });
    }

    // Normal equations over the design [1 | parents].
    let dim = p + 1;
    let mut xtx = vec![vec![0.0f64; dim]; dim];
    let mut xty = vec![0.0f64; dim];
    for row in 0..n {
        let mut features = Vec::with_capacity(dim);
        features.push(1.0);
        features.extend(parent_columns.iter().map(|c| c[row]));
        for i in 0..dim {
            for j in 0..dim {
                xtx[i][j] += features[i] * features[j];
            }
            xty[i] += features[i] * child[row];
        }
    }

    let beta = solve_symmetric(&mut xtx, &mut xty)?;
    let mut rss = 0.0;
    for row in 0..n {
        let mut fitted = beta[0];
        for (j, col) in parent_columns.iter().enumerate() {
            fitted += beta[j + 1] * col[row];
        }
        rss += (child[row] - fitted).powi(2);
    }
    let sd = (rss / n as f64).max(0.0).sqrt();
    LinearCpd::gaussian(beta[0], beta[1..].to_vec(), sd)
}

/// Gaussian elimination with partial pivoting; detects rank deficiency via a
/// pivot threshold relative to the largest matrix entry.
fn solve_symmetric(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<Vec<f64>, CpdError> {
    let dim = b.len();
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1.0);
    let tol = 1e-12 * scale;

    for col in 0..dim {
        let pivot_row = (col..dim)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot_row][col].abs() <= tol {
            return Err(CpdError::RankDeficientDesign);
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in (col + 1)..dim {
            let factor = a[row][col] / a[col][col];
            for k in col..dim {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for col in (0..dim).rev() {
        let mut acc = b[col];
        for k in (col + 1)..dim {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Ok(x)
}
