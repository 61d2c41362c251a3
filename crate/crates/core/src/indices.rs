//! Worst-case bias indices for a quantity of interest under KL-bounded
//! model perturbations.
//!
//! Two granularities of ambiguity are covered:
//!
//! * **Whole-model**: every conditional distribution may be perturbed
//!   jointly, subject to a single KL budget `η` on the joint. The extremal
//!   bias reduces to a one-dimensional tilt problem on the marginal law of
//!   the QoI vertices ([`model_uncertainty_index`]), and the extremal model
//!   itself is an explicit Bayesian network ([`optimizer_network`]).
//! * **Per-vertex**: only one vertex's conditional distribution may move,
//!   with budget `η_l` ([`sensitivity_index`]). The extremal bias averages
//!   per-parent-configuration tilt solves of the conditional-mean function
//!   returned by [`conditional_mean_of_qoi`]. Two variants exist: the
//!   perturbed vertex may acquire new parents among its ancestors
//!   ([`SensitivityScope::FreeParents`]) or must keep its parent set
//!   ([`SensitivityScope::FixedParents`]); the latter solve is exact when a
//!   structural conditional-independence criterion holds and otherwise the
//!   free-parent value is reported as an upper bound.
//!
//! Linear-Gaussian networks with affine QoIs get exact closed forms
//! throughout, with [`effective_coefficient`] exposing the path-product
//! constants they are built from. Fully discrete networks are solved by
//! exhaustive enumeration when the state space is small enough; everything
//! else falls back to Monte-Carlo estimators driven by [`McConfig`].

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::cpd::{Cpd, CpdError, FiniteDiscrete, LinearCpd};
use crate::expr::{Expr, ExprError};
use crate::graph::{Dag, GraphError};
use crate::network::{AffineResponse, BayesianNetwork, NetworkError};
use crate::tilt::{
    solve_index, BoundaryCase, CgfHandle, DiscreteCgf, SampleCgf, TiltDiagnostics, TiltError,
    TiltSolution,
};

/// Largest joint state space enumerated exhaustively.
const MAX_EXHAUSTIVE_CONFIGS: usize = 1 << 20;
/// Largest number of parent configurations given one tilt solve each.
const MAX_EXHAUSTIVE_SOLVES: usize = 1 << 12;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("model lacks the affine-Gaussian structure this closed form requires")]
    NonGaussianModel,
    #[error("sensitivity operations need a quantity of interest on a single vertex")]
    ScalarQoiRequired,
    #[error("expression references `{0}`, which names no vertex")]
    UnknownVertexName(String),
    #[error("unsupported model family for this operation: {0}")]
    UnsupportedFamily(String),
    #[error(
        "KL radius {eta} exceeds the largest radius {reachable} attained by any \
         tilted model; the bound saturates and no extremal model exists"
    )]
    RadiusBeyondReach { eta: f64, reachable: f64 },
    #[error("joint state space too large to enumerate ({configurations} configurations)")]
    StateSpaceTooLarge { configurations: u128 },
    #[error(
        "the quantity of interest shows no finite moment generating function near zero \
         (tilted weights degenerate immediately); its worst-case mean is unbounded"
    )]
    MgfNonexistent,
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Tilt(#[from] TiltError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cpd(#[from] CpdError),
}

/// Sampling budgets for the Monte-Carlo backends. `samples` drives
/// whole-model estimates; `outer_samples`/`inner_samples` drive the nested
/// per-vertex sensitivity estimator. All draws derive deterministically from
/// `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub samples: usize,
    pub outer_samples: usize,
    pub inner_samples: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { samples: 100_000, outer_samples: 2_000, inner_samples: 20_000, seed: 0 }
    }
}

impl McConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

// ---------------------------------------------------------------------------
// Quantity of interest
// ---------------------------------------------------------------------------

/// How a quantity of interest maps vertex values to a scalar.
#[derive(Debug, Clone, PartialEq)]
pub enum QoiForm {
    /// `slope · x_vertex + offset`.
    Affine { vertex: usize, slope: f64, offset: f64 },
    /// An arbitrary expression whose variables are bound to vertices.
    Expression { expr: Expr, bindings: BTreeMap<String, usize> },
}

/// A scalar function of one or more vertex values whose worst-case mean is
/// being bounded.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantityOfInterest {
    form: QoiForm,
    vertices: BTreeSet<usize>,
}

impl QuantityOfInterest {
    pub fn affine(vertex: usize, slope: f64, offset: f64) -> Self {
        Self {
            form: QoiForm::Affine { vertex, slope, offset },
            vertices: BTreeSet::from([vertex]),
        }
    }

    /// The identity QoI `x_vertex`.
    pub fn value_of(vertex: usize) -> Self {
        Self::affine(vertex, 1.0, 0.0)
    }

    /// Binds each expression variable to the vertex carrying that label
    /// (falling back to a bare vertex index written in decimal).
    pub fn expression(expr: Expr, dag: &Dag) -> Result<Self, IndexError> {
        let mut bindings = BTreeMap::new();
        for name in expr.variables() {
            let vertex = dag
                .vertex_by_label(name)
                .or_else(|| name.parse::<usize>().ok().filter(|&v| v < dag.vertex_count()))
                .ok_or_else(|| IndexError::UnknownVertexName(name.to_string()))?;
            bindings.insert(name.to_string(), vertex);
        }
        let vertices = bindings.values().copied().collect();
        Ok(Self { form: QoiForm::Expression { expr, bindings }, vertices })
    }

    /// The vertex set the QoI reads.
    pub fn vertices(&self) -> &BTreeSet<usize> {
        &self.vertices
    }

    pub fn form(&self) -> &QoiForm {
        &self.form
    }

    /// Evaluates the QoI on a full sample row.
    pub fn evaluate(&self, row: &[f64]) -> f64 {
        match &self.form {
            QoiForm::Affine { vertex, slope, offset } => slope * row[*vertex] + offset,
            QoiForm::Expression { expr, bindings } => expr
                .eval(&|name| bindings.get(name).map(|&v| row[v]))
                .expect("expression variables are bound at construction"),
        }
    }

    /// `(vertex, slope, offset)` when the QoI is affine in a single vertex;
    /// single-variable expressions are recognized symbolically.
    pub fn as_affine(&self) -> Option<(usize, f64, f64)> {
        match &self.form {
            QoiForm::Affine { vertex, slope, offset } => Some((*vertex, *slope, *offset)),
            QoiForm::Expression { expr, bindings } => {
                if bindings.len() != 1 {
                    return None;
                }
                let (name, &vertex) = bindings.iter().next().unwrap();
                expr.as_affine_in(name).map(|(slope, offset)| (vertex, slope, offset))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// Which family of alternative models an index ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbiguityKind {
    /// All conditional distributions may move under one joint KL budget.
    WholeModel,
    /// Only the named vertex's conditional moves; it may acquire new parents
    /// among its ancestors.
    VertexFreeParents(usize),
    /// Only the named vertex's conditional moves and its parent set is fixed.
    VertexFixedParents(usize),
}

/// How an index was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexBackend {
    GaussianClosedForm,
    ExhaustiveDiscrete,
    MonteCarlo,
    /// Decided from the graph alone (e.g. perturbing a non-ancestor cannot
    /// move the QoI), with no numerical work.
    Structural,
}

/// Two-sided worst-case bias of the QoI mean at a given KL radius.
///
/// `plus.value` is the largest achievable increase (non-negative) and
/// `minus.value` the most negative achievable decrease (non-positive); the
/// remaining fields of `minus` describe the tilt solve on the negated
/// integrand. Aggregated results (sensitivities averaging over parent
/// configurations) carry `tilt: None` and pooled diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexResult {
    pub plus: TiltSolution,
    pub minus: TiltSolution,
    pub kind: AmbiguityKind,
    /// Whether the reported value is attained by some admissible model
    /// rather than only bounding the bias from above.
    pub tight: bool,
    pub backend: IndexBackend,
    /// True when the cheaper single-solve relaxation replaced the exact
    /// outer expectation; such values are upper bounds.
    pub jensen: bool,
}

impl IndexResult {
    /// Largest achievable increase of the QoI mean.
    pub fn worst_increase(&self) -> f64 {
        self.plus.value
    }

    /// Most negative achievable change of the QoI mean (non-positive).
    pub fn worst_decrease(&self) -> f64 {
        self.minus.value
    }

    fn from_directions(
        plus: TiltSolution,
        minus_raw: TiltSolution,
        kind: AmbiguityKind,
        tight: bool,
        backend: IndexBackend,
    ) -> Self {
        debug_assert!(plus.value >= 0.0 && minus_raw.value >= 0.0);
        let mut minus = minus_raw;
        minus.value = if minus.value == 0.0 { 0.0 } else { -minus.value };
        Self { plus, minus, kind, tight, backend, jensen: false }
    }
}

fn zero_solution() -> TiltSolution {
    TiltSolution {
        value: 0.0,
        tilt: Some(0.0),
        boundary: BoundaryCase::Interior,
        achieved_eta: 0.0,
        diagnostics: TiltDiagnostics::default(),
    }
}

fn zero_result(kind: AmbiguityKind, backend: IndexBackend) -> IndexResult {
    IndexResult {
        plus: zero_solution(),
        minus: zero_solution(),
        kind,
        tight: true,
        backend,
        jensen: false,
    }
}

fn validate_eta(eta: f64) -> Result<(), IndexError> {
    if !eta.is_finite() || eta < 0.0 {
        return Err(TiltError::InvalidEta(eta).into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Whole-model indices
// ---------------------------------------------------------------------------

/// Worst-case increase/decrease of `E[f]` over all models within joint KL
/// radius `eta` of the baseline. Dispatches to the Gaussian closed form, to
/// exhaustive enumeration for small discrete networks, and otherwise to the
/// sampling estimator. The bound is attained (tight) in every regime.
pub fn model_uncertainty_index(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    eta: f64,
    mc: &McConfig,
) -> Result<IndexResult, IndexError> {
    validate_eta(eta)?;
    if network.is_linear_gaussian() {
        if let Some((vertex, slope, _)) = qoi.as_affine() {
            return gaussian_model_uncertainty_index(network, vertex, slope, eta);
        }
    }
    if let Some((values, probs)) = discrete_qoi_marginal(network, qoi)? {
        let handle = DiscreteCgf::new(&values, &probs)?;
        let plus = solve_index(&handle, eta)?;
        let minus = solve_index(&handle.negated(), eta)?;
        return Ok(IndexResult::from_directions(
            plus,
            minus,
            AmbiguityKind::WholeModel,
            true,
            IndexBackend::ExhaustiveDiscrete,
        ));
    }
    model_uncertainty_index_sampled(network, qoi, eta, mc)
}

/// The sampling estimator of [`model_uncertainty_index`], unconditionally:
/// draws `mc.samples` forward samples once and solves both directions on the
/// empirical CGF of the QoI. Useful for cross-checking the closed forms.
pub fn model_uncertainty_index_sampled(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    eta: f64,
    mc: &McConfig,
) -> Result<IndexResult, IndexError> {
    validate_eta(eta)?;
    let rows = network.sample(mc.samples, mc.seed);
    let values: Vec<f64> = rows.iter_rows().map(|r| qoi.evaluate(r)).collect();
    let handle = SampleCgf::from_samples(&values)?;
    let plus = solve_index(&handle, eta)?;
    let minus = solve_index(&handle.negated(), eta)?;
    heavy_tail_guard(&plus, &values)?;
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    heavy_tail_guard(&minus, &negated)?;
    Ok(IndexResult::from_directions(
        plus,
        minus,
        AmbiguityKind::WholeModel,
        true,
        IndexBackend::MonteCarlo,
    ))
}

/// Baseline mean of the QoI: exact affine mean propagation when every
/// ancestor's conditional mean is affine, exact enumeration when the
/// ancestry is small and discrete, otherwise the forward-sampling average
/// over `mc.samples` draws.
pub fn qoi_mean(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    mc: &McConfig,
) -> Result<f64, IndexError> {
    if let Some((vertex, slope, offset)) = qoi.as_affine() {
        if let Some(mean) = affine_vertex_mean(network, vertex)? {
            return Ok(slope * mean + offset);
        }
    }
    if let Some((values, probs)) = discrete_qoi_marginal(network, qoi)? {
        return Ok(values.iter().zip(&probs).map(|(v, p)| v * p).sum());
    }
    let n = mc.samples.max(1);
    let rows = network.sample(n, mc.seed);
    let sum: f64 = rows.iter_rows().map(|r| qoi.evaluate(r)).sum();
    Ok(sum / n as f64)
}

/// Mean of one vertex by affine propagation through its ancestry, or `None`
/// when some ancestor's conditional mean is not affine in its parents.
fn affine_vertex_mean(
    network: &BayesianNetwork,
    vertex: usize,
) -> Result<Option<f64>, IndexError> {
    let dag = network.dag();
    let closure = dag.ancestral_closure(vertex)?;
    let mut means = vec![0.0; network.vertex_count()];
    for &v in dag.topological_order() {
        if !closure.contains(&v) {
            continue;
        }
        let Some((intercept, weights)) = network.cpd(v).mean_affine() else {
            return Ok(None);
        };
        means[v] = intercept
            + dag
                .parents(v)
                .iter()
                .zip(&weights)
                .map(|(&p, w)| w * means[p])
                .sum::<f64>();
    }
    Ok(Some(means[vertex]))
}

/// Minimum sample count before single-draw domination is judged.
const MGF_GUARD_MIN_SAMPLES: usize = 5_000;
/// Tilted-mass share of a single draw beyond which the estimate is rejected.
const MGF_GUARD_MAX_SHARE: f64 = 0.05;

/// An integrand without a moment generating function (`exp` of a quadratic,
/// lognormal tails, …) still yields finite empirical solves, but they are
/// artifacts: the optimal tilt piles its mass onto the single largest draw,
/// and the answer diverges as the sample grows. A light-tailed integrand
/// spreads the tilted mass over many draws at any radius a sample of this
/// size can certify, so single-draw domination is the discriminating
/// signature.
fn heavy_tail_guard(solution: &TiltSolution, values: &[f64]) -> Result<(), IndexError> {
    if values.len() < MGF_GUARD_MIN_SAMPLES {
        return Ok(());
    }
    let Some(tilt) = solution.tilt else { return Ok(()) };
    if tilt <= 0.0 {
        return Ok(());
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = values.iter().map(|&v| (tilt * (v - max)).exp()).sum();
    if total.recip() >= MGF_GUARD_MAX_SHARE {
        return Err(IndexError::MgfNonexistent);
    }
    Ok(())
}

/// Exact whole-model index for a linear-Gaussian network and an affine QoI
/// on `vertex`: the integrand is Gaussian with variance `slope²·Var[X_k]`,
/// giving `±√(2·slope²·Var[X_k]·η)` at tilt `√(2η / (slope²·Var[X_k]))`.
pub fn gaussian_model_uncertainty_index(
    network: &BayesianNetwork,
    vertex: usize,
    slope: f64,
    eta: f64,
) -> Result<IndexResult, IndexError> {
    validate_eta(eta)?;
    let moments =
        network.gaussian_joint_moments().map_err(|_| IndexError::NonGaussianModel)?;
    if vertex >= network.vertex_count() {
        return Err(GraphError::InvalidVertex {
            vertex,
            vertex_count: network.vertex_count(),
        }
        .into());
    }
    let variance = slope * slope * moments.variance(vertex);
    Ok(gaussian_index_result(variance, eta, AmbiguityKind::WholeModel))
}

/// Packages the closed-form solution for a Gaussian integrand of the given
/// variance. Used by both the whole-model and per-vertex closed forms.
fn gaussian_index_result(variance: f64, eta: f64, kind: AmbiguityKind) -> IndexResult {
    if eta == 0.0 || variance == 0.0 {
        return zero_result(kind, IndexBackend::GaussianClosedForm);
    }
    let value = (2.0 * variance * eta).sqrt();
    let tilt = (2.0 * eta / variance).sqrt();
    let solution = TiltSolution {
        value,
        tilt: Some(tilt),
        boundary: BoundaryCase::Interior,
        achieved_eta: eta,
        diagnostics: TiltDiagnostics::default(),
    };
    IndexResult::from_directions(
        solution.clone(),
        solution,
        kind,
        true,
        IndexBackend::GaussianClosedForm,
    )
}

/// Marginal law of the QoI as a finite value/probability table, when the
/// ancestral closure of its vertices is fully discrete and small enough to
/// enumerate. Values repeat across configurations; no deduplication needed.
fn discrete_qoi_marginal(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
) -> Result<Option<(Vec<f64>, Vec<f64>)>, IndexError> {
    let verts: Vec<usize> = qoi.vertices().iter().copied().collect();
    let closure: Vec<usize> = network
        .dag()
        .ancestral_closure_of_set(&verts)?
        .into_iter()
        .collect();
    let Some(grid) = DiscreteGrid::build(network, &closure, MAX_EXHAUSTIVE_CONFIGS) else {
        return Ok(None);
    };
    let mut buffer = vec![0.0; network.vertex_count()];
    let mut values = Vec::with_capacity(grid.config_count);
    let mut probs = Vec::with_capacity(grid.config_count);
    grid.for_each(network, &mut buffer, |row, weight| {
        values.push(qoi.evaluate(row));
        probs.push(weight);
    });
    Ok(Some((values, probs)))
}

// ---------------------------------------------------------------------------
// Extremal (worst-case) networks
// ---------------------------------------------------------------------------

/// Which side of the two-sided bound an extremal model should attain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiltDirection {
    Plus,
    Minus,
}

impl TiltDirection {
    fn sign(self) -> f64 {
        match self {
            TiltDirection::Plus => 1.0,
            TiltDirection::Minus => -1.0,
        }
    }
}

/// Builds the model attaining the whole-model bound at radius `eta`: the
/// exponential tilt of the baseline by the QoI, which is again a Bayesian
/// network. Supported families: linear-Gaussian networks with affine QoIs
/// (graph and variances unchanged, intercepts of the QoI vertex and its
/// ancestors shifted) and fully discrete networks (conditional tables
/// reweighted by a backward recursion; parent sets may grow within the
/// ancestor closure).
pub fn optimizer_network(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    eta: f64,
    direction: TiltDirection,
) -> Result<BayesianNetwork, IndexError> {
    validate_eta(eta)?;
    if eta == 0.0 {
        return Ok(network.clone());
    }
    if network.is_linear_gaussian() {
        if let Some((vertex, slope, _)) = qoi.as_affine() {
            return gaussian_optimizer(network, vertex, slope, eta, direction);
        }
    }
    let verts: Vec<usize> = qoi.vertices().iter().copied().collect();
    let closure: Vec<usize> = network
        .dag()
        .ancestral_closure_of_set(&verts)?
        .into_iter()
        .collect();
    if closure.iter().all(|&v| matches!(network.cpd(v), Cpd::Discrete(_))) {
        return discrete_optimizer(network, qoi, &closure, eta, direction);
    }
    Err(IndexError::UnsupportedFamily(
        "extremal networks are constructed only for linear-Gaussian models with affine \
         QoIs or for fully discrete QoI ancestries"
            .to_string(),
    ))
}

fn gaussian_optimizer(
    network: &BayesianNetwork,
    vertex: usize,
    slope: f64,
    eta: f64,
    direction: TiltDirection,
) -> Result<BayesianNetwork, IndexError> {
    let moments =
        network.gaussian_joint_moments().map_err(|_| IndexError::NonGaussianModel)?;
    let variance = slope * slope * moments.variance(vertex);
    if variance == 0.0 {
        return Err(IndexError::RadiusBeyondReach { eta, reachable: 0.0 });
    }
    let tilt = (2.0 * eta / variance).sqrt();
    let sign = direction.sign();
    let coefficients = effective_coefficients_to(network, vertex)?;
    let mut result = network.clone();
    for &j in &network.dag().ancestral_closure(vertex)? {
        let Some((intercept, weights, sd)) = network.cpd(j).as_linear_gaussian() else {
            // Affine deterministic vertices have zero noise variance: the
            // tilted conditional is the same point mass.
            continue;
        };
        let shift = sign * tilt * slope * sd * sd * coefficients[j];
        if shift != 0.0 {
            let cpd = LinearCpd::gaussian(intercept + shift, weights.to_vec(), sd)?;
            result = result.with_cpd(j, Cpd::Linear(cpd))?;
        }
    }
    Ok(result)
}

/// Exponentially tilted discrete network via backward integration over the
/// QoI's ancestor closure: visiting vertices from the largest index down,
/// the running table `W` holds the conditional expectation of `e^{±c·f̄}`
/// with all later closure vertices integrated out, and each vertex's new
/// conditional is its baseline row reweighted by `W`.
fn discrete_optimizer(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    closure: &[usize],
    eta: f64,
    direction: TiltDirection,
) -> Result<BayesianNetwork, IndexError> {
    let Some((values, probs)) = discrete_qoi_marginal(network, qoi)? else {
        let configs: u128 = closure
            .iter()
            .map(|&v| match network.cpd(v) {
                Cpd::Discrete(d) => d.support().len() as u128,
                _ => 1,
            })
            .product();
        return Err(IndexError::StateSpaceTooLarge { configurations: configs });
    };
    let base = DiscreteCgf::new(&values, &probs)?;
    let handle = match direction {
        TiltDirection::Plus => base,
        TiltDirection::Minus => base.negated(),
    };
    let solution = solve_index(&handle, eta)?;
    let tilt = match (solution.boundary, solution.tilt) {
        (BoundaryCase::Interior, Some(c)) => c,
        _ => {
            return Err(IndexError::RadiusBeyondReach {
                eta,
                reachable: solution.achieved_eta,
            })
        }
    };
    let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
    let sign = direction.sign();
    let dag = network.dag();

    // Initial table: e^{sign·c·f̄} over the QoI vertices.
    let qoi_verts: Vec<usize> = qoi.vertices().iter().copied().collect();
    let mut table = ValueTable::from_fn(network, &qoi_verts, |row| {
        (sign * tilt * (qoi.evaluate(row) - mean)).exp()
    })?;

    let mut new_parents: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut new_cpds: BTreeMap<usize, FiniteDiscrete> = BTreeMap::new();
    let closure_set: BTreeSet<usize> = closure.iter().copied().collect();
    // Reverse topological order: integrating a vertex out may only push
    // dependence onto vertices that can serve as its parents.
    let order: Vec<usize> = dag
        .topological_order()
        .iter()
        .rev()
        .copied()
        .filter(|v| closure_set.contains(v))
        .collect();
    for l in order {
        if !table.deps.contains(&l) {
            continue; // The tilt does not reach this conditional.
        }
        let Cpd::Discrete(cpd_l) = network.cpd(l) else { unreachable!() };
        let support_l = cpd_l.support();
        let mut parent_set: BTreeSet<usize> =
            table.deps.iter().copied().filter(|&v| v != l).collect();
        parent_set.extend(dag.parents(l).iter().copied());
        let parents: Vec<usize> = parent_set.into_iter().collect();

        let union: Vec<usize> = {
            let mut u = parents.clone();
            let pos = u.binary_search(&l).unwrap_err();
            u.insert(pos, l);
            u
        };
        let union_grid = ValueTable::grid(network, &union)?;
        let parent_grid = ValueTable::grid(network, &parents)?;
        let slot_l = union.binary_search(&l).unwrap();

        let mut rows = vec![vec![0.0; support_l.len()]; parent_grid.config_count];
        let mut integrated = vec![0.0; parent_grid.config_count];
        let mut scratch = Vec::new();
        union_grid.for_each_values(|idx, union_row| {
            scratch.clear();
            scratch.extend(dag.parents(l).iter().map(|&p| union_row[p]));
            let p_row = cpd_l
                .row_for_values(&scratch)
                .expect("parent values drawn from parent supports");
            let weight = p_row[idx[slot_l]] * table.lookup(idx, &union_grid);
            let flat = parent_grid.flat_excluding(idx, slot_l);
            rows[flat][idx[slot_l]] = weight;
            integrated[flat] += weight;
        });
        for (flat, row) in rows.iter_mut().enumerate() {
            if integrated[flat] > 0.0 {
                for p in row.iter_mut() {
                    *p /= integrated[flat];
                }
            } else {
                // Baseline-null parent configuration: keep the baseline row
                // (the conditional there is arbitrary; matching P keeps the
                // KL decomposition clean).
                let values = parent_grid.values_at(flat);
                scratch.clear();
                scratch.extend(dag.parents(l).iter().map(|&p| values[p]));
                row.copy_from_slice(
                    cpd_l.row_for_values(&scratch).expect("parent supports"),
                );
            }
        }

        let parent_supports: Vec<Vec<f64>> = parents
            .iter()
            .map(|&p| match network.cpd(p) {
                Cpd::Discrete(d) => d.support().to_vec(),
                _ => unreachable!(),
            })
            .collect();
        new_cpds.insert(
            l,
            FiniteDiscrete::new(support_l.to_vec(), parent_supports, rows)?,
        );
        new_parents.insert(l, parents.clone());
        table = ValueTable { deps: parents, cards: parent_grid.cards, data: integrated };
    }
    debug_assert!(table.deps.is_empty());
    debug_assert!(
        (table.data[0].ln() - handle.cgf(tilt)).abs() < 1e-6 * (1.0 + handle.cgf(tilt).abs())
    );

    let n = network.vertex_count();
    let mut edges = Vec::new();
    for v in 0..n {
        let parents: &[usize] = new_parents
            .get(&v)
            .map(|p| p.as_slice())
            .unwrap_or_else(|| dag.parents(v));
        edges.extend(parents.iter().map(|&p| (p, v)));
    }
    let mut new_dag = Dag::new(n, &edges)?;
    if let Some(labels) = dag.labels() {
        new_dag = new_dag.with_labels(labels.to_vec())?;
    }
    let cpds: Vec<Cpd> = (0..n)
        .map(|v| match new_cpds.remove(&v) {
            Some(d) => Cpd::Discrete(d),
            None => network.cpd(v).clone(),
        })
        .collect();
    Ok(BayesianNetwork::new(new_dag, cpds)?)
}

/// Dense table of floats over the value grid of a sorted vertex set.
struct ValueTable {
    deps: Vec<usize>,
    cards: Vec<usize>,
    data: Vec<f64>,
}

/// Pure value-grid iteration helper (no probabilities): supports and index
/// arithmetic for a sorted set of discrete vertices.
struct ValueGrid {
    verts: Vec<usize>,
    supports: Vec<Vec<f64>>,
    cards: Vec<usize>,
    config_count: usize,
}

impl ValueTable {
    fn grid(network: &BayesianNetwork, verts: &[usize]) -> Result<ValueGrid, IndexError> {
        let mut supports = Vec::with_capacity(verts.len());
        let mut cards = Vec::with_capacity(verts.len());
        let mut count: usize = 1;
        for &v in verts {
            let Cpd::Discrete(d) = network.cpd(v) else {
                return Err(IndexError::UnsupportedFamily(format!(
                    "vertex {v} is not finite-discrete"
                )));
            };
            supports.push(d.support().to_vec());
            cards.push(d.support().len());
            count = count
                .checked_mul(d.support().len())
                .filter(|&c| c <= MAX_EXHAUSTIVE_CONFIGS)
                .ok_or(IndexError::StateSpaceTooLarge {
                    configurations: u128::MAX,
                })?;
        }
        Ok(ValueGrid { verts: verts.to_vec(), supports, cards, config_count: count })
    }

    fn from_fn(
        network: &BayesianNetwork,
        verts: &[usize],
        mut f: impl FnMut(&[f64]) -> f64,
    ) -> Result<Self, IndexError> {
        let grid = Self::grid(network, verts)?;
        let mut data = vec![0.0; grid.config_count];
        let mut row = vec![0.0; network.vertex_count()];
        grid.for_each_indices(|idx, flat| {
            for (slot, &v) in grid.verts.iter().enumerate() {
                row[v] = grid.supports[slot][idx[slot]];
            }
            data[flat] = f(&row);
        });
        Ok(Self { deps: grid.verts.clone(), cards: grid.cards.clone(), data })
    }

    /// Looks up the entry matching a configuration of a covering grid: every
    /// dependency of the table must appear among the grid's vertices.
    fn lookup(&self, idx: &[usize], grid: &ValueGrid) -> f64 {
        let mut flat = 0;
        for (dep, card) in self.deps.iter().zip(&self.cards) {
            let slot = grid.verts.binary_search(dep).expect("covering grid");
            flat = flat * card + idx[slot];
        }
        self.data[flat]
    }
}

impl ValueGrid {
    /// Visits each configuration as (per-slot support indices, flat index).
    fn for_each_indices(&self, mut visit: impl FnMut(&[usize], usize)) {
        let m = self.verts.len();
        let mut idx = vec![0usize; m];
        let mut flat = 0usize;
        loop {
            visit(&idx, flat);
            flat += 1;
            let mut slot = m;
            loop {
                if slot == 0 {
                    return;
                }
                slot -= 1;
                idx[slot] += 1;
                if idx[slot] < self.cards[slot] {
                    break;
                }
                idx[slot] = 0;
            }
        }
    }

    /// Visits each configuration with values scattered into a full-size row.
    fn for_each_values(&self, mut visit: impl FnMut(&[usize], &[f64])) {
        let n = 1 + self.verts.iter().copied().max().unwrap_or(0);
        let mut row = vec![0.0; n];
        self.for_each_indices(|idx, _| {
            for (slot, &v) in self.verts.iter().enumerate() {
                row[v] = self.supports[slot][idx[slot]];
            }
            visit(idx, &row);
        });
    }

    /// Flat index into this grid using a covering grid's index vector minus
    /// one excluded slot (the grids must otherwise list the same vertices).
    fn flat_excluding(&self, idx: &[usize], skip_slot: usize) -> usize {
        let mut flat = 0;
        let mut slot = 0;
        for &card in &self.cards {
            if slot == skip_slot {
                slot += 1;
            }
            flat = flat * card + idx[slot];
            slot += 1;
        }
        flat
    }

    /// Values of a configuration given by flat index, scattered into a
    /// full-size row.
    fn values_at(&self, mut flat: usize) -> Vec<f64> {
        let n = 1 + self.verts.iter().copied().max().unwrap_or(0);
        let mut row = vec![0.0; n];
        for slot in (0..self.verts.len()).rev() {
            let card = self.cards[slot];
            row[self.verts[slot]] = self.supports[slot][flat % card];
            flat /= card;
        }
        row
    }
}

// ---------------------------------------------------------------------------
// Effective coefficients
// ---------------------------------------------------------------------------

/// One directed path and the product of its edge coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PathContribution {
    /// Vertices from source to target, inclusive.
    pub vertices: Vec<usize>,
    pub coefficient: f64,
}

/// Total linear influence of one vertex's value on a downstream vertex: the
/// sum over all directed paths of the product of edge coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCoefficient {
    pub value: f64,
    pub paths: Vec<PathContribution>,
}

/// All effective coefficients into `target` in one backward sweep: entry `j`
/// is the summed path product from `j` to `target` (1 at the target itself,
/// 0 off its ancestry).
fn effective_coefficients_to(
    network: &BayesianNetwork,
    target: usize,
) -> Result<Vec<f64>, IndexError> {
    let dag = network.dag();
    let mut contrib = vec![0.0; network.vertex_count()];
    contrib[target] = 1.0;
    for &v in dag.topological_order().iter().rev() {
        if v == target {
            continue;
        }
        let mut total = 0.0;
        for &child in dag.children(v) {
            if contrib[child] == 0.0 {
                continue;
            }
            let Some((_, weights)) = network.cpd(child).mean_affine() else {
                return Err(IndexError::NonGaussianModel);
            };
            let slot = dag
                .parents(child)
                .binary_search(&v)
                .expect("v is a parent of its child");
            total += weights[slot] * contrib[child];
        }
        contrib[v] = total;
    }
    Ok(contrib)
}

/// Computes the effective coefficient from `source` into `target` together
/// with its per-path decomposition. Requires an affine-mean (linear-Gaussian)
/// network and `source` in the ancestor closure of `target`.
pub fn effective_coefficient(
    network: &BayesianNetwork,
    target: usize,
    source: usize,
) -> Result<EffectiveCoefficient, IndexError> {
    if !network.is_linear_gaussian() {
        return Err(IndexError::NonGaussianModel);
    }
    let dag = network.dag();
    let closure = dag.ancestral_closure(target)?;
    if !closure.contains(&source) {
        return Err(GraphError::NotAncestor { l: source, k: target }.into());
    }
    let value = effective_coefficients_to(network, target)?[source];
    // Structural reachability prunes the path walk; coefficient cancellation
    // cannot hide a path this way.
    let on_path: BTreeSet<usize> = closure;
    let mut paths = Vec::new();
    let mut stack = vec![source];
    walk_paths(network, dag, &mut stack, target, &on_path, 1.0, &mut paths)?;
    debug_assert!(
        (paths.iter().map(|p| p.coefficient).sum::<f64>() - value).abs()
            <= 1e-9 * (1.0 + value.abs())
    );
    Ok(EffectiveCoefficient { value, paths })
}

fn walk_paths(
    network: &BayesianNetwork,
    dag: &Dag,
    prefix: &mut Vec<usize>,
    target: usize,
    on_path: &BTreeSet<usize>,
    coefficient: f64,
    out: &mut Vec<PathContribution>,
) -> Result<(), IndexError> {
    let v = *prefix.last().unwrap();
    if v == target {
        out.push(PathContribution { vertices: prefix.clone(), coefficient });
        return Ok(());
    }
    for &child in dag.children(v) {
        if !on_path.contains(&child) {
            continue;
        }
        let Some((_, weights)) = network.cpd(child).mean_affine() else {
            return Err(IndexError::NonGaussianModel);
        };
        let slot = dag
            .parents(child)
            .binary_search(&v)
            .expect("v is a parent of its child");
        prefix.push(child);
        walk_paths(network, dag, prefix, target, on_path, coefficient * weights[slot], out)?;
        prefix.pop();
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Conditional-mean function of the QoI
// ---------------------------------------------------------------------------

/// The map `(x_l, x_{ancestors of l}) ↦ E[f | those values]` used by the
/// per-vertex sensitivity solves: everything downstream of the conditioned
/// set is averaged out.
#[derive(Debug)]
pub struct ConditionalMeanFn<'a> {
    network: &'a BayesianNetwork,
    qoi: &'a QuantityOfInterest,
    conditioned: BTreeSet<usize>,
    backend: CondMeanBackend,
}

#[derive(Debug)]
enum CondMeanBackend {
    /// Exact affine form (linear-Gaussian network, affine QoI).
    Affine { response: AffineResponse, slope: f64, offset: f64 },
    /// Exact enumeration of the free discrete vertices.
    DiscreteExact { free: Vec<usize> },
    /// Clamped forward sampling of the free vertices.
    MonteCarlo { inner_samples: usize, seed: u64 },
}

impl<'a> ConditionalMeanFn<'a> {
    /// Vertices whose values must be supplied to [`Self::evaluate`].
    pub fn conditioned_vertices(&self) -> &BTreeSet<usize> {
        &self.conditioned
    }

    /// Whether evaluation is exact (affine or enumerated) rather than
    /// sampled.
    pub fn is_exact(&self) -> bool {
        !matches!(self.backend, CondMeanBackend::MonteCarlo { .. })
    }

    /// Conditional mean of the QoI given values for every conditioned
    /// vertex. `stream` decorrelates the draws of repeated sampled
    /// evaluations while keeping them reproducible; exact backends ignore
    /// it.
    pub fn evaluate(&self, assignment: &BTreeMap<usize, f64>, stream: u64) -> f64 {
        match &self.backend {
            CondMeanBackend::Affine { response, slope, offset } => {
                slope * response.eval(&|v| assignment[&v]) + offset
            }
            CondMeanBackend::DiscreteExact { free } => {
                let mut buffer = vec![0.0; self.network.vertex_count()];
                for (&v, &x) in assignment {
                    buffer[v] = x;
                }
                let grid = DiscreteGrid::build(self.network, free, MAX_EXHAUSTIVE_CONFIGS)
                    .expect("checked at construction");
                let mut total = 0.0;
                let mut mass = 0.0;
                grid.for_each(self.network, &mut buffer, |row, weight| {
                    total += weight * self.qoi.evaluate(row);
                    mass += weight;
                });
                total / mass
            }
            CondMeanBackend::MonteCarlo { inner_samples, seed } => {
                let clamp: BTreeMap<usize, f64> = self
                    .conditioned
                    .iter()
                    .map(|&v| (v, assignment[&v]))
                    .collect();
                let call_seed = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let rows = self.network.sample_clamped(&clamp, *inner_samples, call_seed);
                let total: f64 = rows.iter_rows().map(|r| self.qoi.evaluate(r)).sum();
                total / *inner_samples as f64
            }
        }
    }
}

/// Builds the conditional-mean function of `qoi` given vertex `l` and all of
/// `l`'s ancestors. Exact backends are chosen when available (affine for
/// linear-Gaussian networks, enumeration for small discrete ancestries);
/// otherwise evaluations clamp the conditioned set and forward-sample.
/// Requires `l` to lie in the QoI's ancestor closure.
pub fn conditional_mean_of_qoi<'a>(
    network: &'a BayesianNetwork,
    qoi: &'a QuantityOfInterest,
    l: usize,
    mc: &McConfig,
) -> Result<ConditionalMeanFn<'a>, IndexError> {
    let dag = network.dag();
    let verts: Vec<usize> = qoi.vertices().iter().copied().collect();
    let closure_a = dag.ancestral_closure_of_set(&verts)?;
    if !closure_a.contains(&l) {
        let k = verts.first().copied().unwrap_or(l);
        return Err(GraphError::NotAncestor { l, k }.into());
    }
    let conditioned = dag.ancestral_closure(l)?;

    if let Some((k, slope, offset)) = qoi.as_affine() {
        match network.conditional_mean_response(k, &conditioned) {
            Ok(response) => {
                return Ok(ConditionalMeanFn {
                    network,
                    qoi,
                    conditioned,
                    backend: CondMeanBackend::Affine { response, slope, offset },
                });
            }
            // A non-affine conditional on some integrated vertex: fall back
            // to enumeration or nested sampling.
            Err(NetworkError::NotAffineMean { .. }) => {}
            Err(other) => return Err(other.into()),
        }
    }

    let free: Vec<usize> =
        closure_a.iter().copied().filter(|v| !conditioned.contains(v)).collect();
    let all_discrete = closure_a
        .iter()
        .all(|&v| matches!(network.cpd(v), Cpd::Discrete(_)));
    if all_discrete && DiscreteGrid::build(network, &free, MAX_EXHAUSTIVE_CONFIGS).is_some() {
        return Ok(ConditionalMeanFn {
            network,
            qoi,
            conditioned,
            backend: CondMeanBackend::DiscreteExact { free },
        });
    }
    Ok(ConditionalMeanFn {
        network,
        qoi,
        conditioned,
        backend: CondMeanBackend::MonteCarlo {
            inner_samples: mc.inner_samples,
            seed: mc.seed ^ 0xC0DE_F00D_u64,
        },
    })
}

// ---------------------------------------------------------------------------
// Per-vertex sensitivity indices
// ---------------------------------------------------------------------------

/// Whether the perturbed vertex may rewire to new parents among its
/// ancestors or must keep its baseline parent set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityScope {
    FreeParents,
    FixedParents,
}

impl SensitivityScope {
    fn kind(self, l: usize) -> AmbiguityKind {
        match self {
            SensitivityScope::FreeParents => AmbiguityKind::VertexFreeParents(l),
            SensitivityScope::FixedParents => AmbiguityKind::VertexFixedParents(l),
        }
    }
}

/// Exact per-vertex sensitivity for an affine QoI on `target`:
/// `±|β̃|·√(2·slope²·σ_l²·η_l)` where `β̃` is the effective coefficient from
/// `l` into `target` and `σ_l²` the conditional variance of `l`. The same
/// value is attained whether or not `l` may rewire its parents, so the
/// result is tight for both scopes.
///
/// Applicability is narrower than a fully linear-Gaussian network and wider
/// than one: `l`'s own conditional must be affine-Gaussian, and every vertex
/// on a directed path into `target` must have an affine conditional mean,
/// but the noise laws elsewhere are arbitrary. (The extremal perturbation is
/// a constant mean shift at `l`, whose propagated bias `β̃·δ` and KL cost
/// `δ²/(2σ_l²)` depend on nothing else.)
pub fn gaussian_sensitivity(
    network: &BayesianNetwork,
    target: usize,
    slope: f64,
    l: usize,
    eta_l: f64,
) -> Result<IndexResult, IndexError> {
    gaussian_sensitivity_scoped(network, target, slope, l, eta_l, SensitivityScope::FreeParents)
}

fn gaussian_sensitivity_scoped(
    network: &BayesianNetwork,
    target: usize,
    slope: f64,
    l: usize,
    eta_l: f64,
    scope: SensitivityScope,
) -> Result<IndexResult, IndexError> {
    validate_eta(eta_l)?;
    let dag = network.dag();
    if !dag.ancestral_closure(target)?.contains(&l) {
        return Ok(zero_result(scope.kind(l), IndexBackend::Structural));
    }
    let noise_sd = match network.cpd(l) {
        Cpd::Deterministic(_) => 0.0, // a point mass admits no perturbation
        cpd => match cpd.as_linear_gaussian() {
            Some((_, _, sd)) => sd,
            None => return Err(IndexError::NonGaussianModel),
        },
    };
    if noise_sd == 0.0 {
        return Ok(zero_result(scope.kind(l), IndexBackend::GaussianClosedForm));
    }
    let coefficient = effective_coefficients_to(network, target)?[l];
    let variance = coefficient * coefficient * slope * slope * noise_sd * noise_sd;
    Ok(gaussian_index_result(variance, eta_l, scope.kind(l)))
}

/// Worst-case bias of the QoI mean when only vertex `l`'s conditional
/// distribution may move within per-configuration KL radius `eta_l`.
///
/// Perturbing a vertex outside the QoI's ancestor closure cannot move the
/// QoI: the result is exactly zero with no numerical work. Otherwise the
/// index averages, over the law of `l`'s ancestors, one-dimensional tilt
/// solves of the centered conditional-mean function. Lineage: closed form
/// for linear-Gaussian networks with affine QoIs, exhaustive enumeration for
/// small discrete networks, nested sampling elsewhere.
///
/// With [`SensitivityScope::FixedParents`] the value is attained only when
/// the conditional-mean function depends on no ancestor outside `l`'s
/// parent set (a structural graph criterion); otherwise the same number is
/// returned with `tight = false`, bounding the fixed-parent bias from
/// above.
pub fn sensitivity_index(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    l: usize,
    eta_l: f64,
    scope: SensitivityScope,
    mc: &McConfig,
) -> Result<IndexResult, IndexError> {
    sensitivity_impl(network, qoi, l, eta_l, scope, mc, false, false)
}

/// The nested sampling estimator of [`sensitivity_index`], bypassing the
/// closed-form and exhaustive dispatch. Useful for cross-checking them.
pub fn sensitivity_index_sampled(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    l: usize,
    eta_l: f64,
    scope: SensitivityScope,
    mc: &McConfig,
) -> Result<IndexResult, IndexError> {
    sensitivity_impl(network, qoi, l, eta_l, scope, mc, false, true)
}

/// Single-solve relaxation of [`sensitivity_index`]: the outer expectation
/// over ancestor configurations moves inside the CGF, giving an upper bound
/// on the exact index for a fraction of its cost. Results carry
/// `jensen = true` and `tight = false`.
pub fn jensen_sensitivity_bound(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    l: usize,
    eta_l: f64,
    scope: SensitivityScope,
    mc: &McConfig,
) -> Result<IndexResult, IndexError> {
    sensitivity_impl(network, qoi, l, eta_l, scope, mc, true, false)
}

#[allow(clippy::too_many_arguments)]
fn sensitivity_impl(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    l: usize,
    eta_l: f64,
    scope: SensitivityScope,
    mc: &McConfig,
    jensen: bool,
    force_sampled: bool,
) -> Result<IndexResult, IndexError> {
    validate_eta(eta_l)?;
    let dag = network.dag();
    if qoi.vertices().len() != 1 {
        return Err(IndexError::ScalarQoiRequired);
    }
    let target = *qoi.vertices().iter().next().unwrap();
    if !dag.ancestral_closure(target)?.contains(&l) {
        return Ok(zero_result(scope.kind(l), IndexBackend::Structural));
    }

    if !force_sampled && !jensen {
        if let Some((k, slope, _)) = qoi.as_affine() {
            match gaussian_sensitivity_scoped(network, k, slope, l, eta_l, scope) {
                Ok(result) => return Ok(result),
                Err(IndexError::NonGaussianModel) => {} // fall through to generic paths
                Err(other) => return Err(other),
            }
        }
    }

    let tight = match scope {
        SensitivityScope::FreeParents => true,
        SensitivityScope::FixedParents => dag.cond_indep_given_parents(target, l)?,
    } && !jensen;

    let f = conditional_mean_of_qoi(network, qoi, l, mc)?;

    if !force_sampled {
        if let Cpd::Discrete(cpd_l) = network.cpd(l) {
            let ancestors: Vec<usize> = dag.ancestors(l)?.into_iter().collect();
            let enumerable = f.is_exact()
                && DiscreteGrid::build(network, &ancestors, MAX_EXHAUSTIVE_SOLVES).is_some();
            if enumerable {
                let (plus, minus) =
                    sensitivity_exhaustive(network, &f, l, cpd_l, &ancestors, eta_l, jensen)?;
                let mut result = IndexResult::from_directions(
                    plus,
                    minus,
                    scope.kind(l),
                    tight,
                    IndexBackend::ExhaustiveDiscrete,
                );
                result.jensen = jensen;
                return Ok(result);
            }
        }
    }

    let (plus, minus) = sensitivity_sampled(network, &f, l, eta_l, mc, jensen)?;
    let mut result = IndexResult::from_directions(
        plus,
        minus,
        scope.kind(l),
        tight,
        IndexBackend::MonteCarlo,
    );
    result.jensen = jensen;
    Ok(result)
}

/// Exact outer expectation: enumerate ancestor configurations with their
/// joint probabilities and solve the tilt problem of the centered
/// conditional mean for each.
fn sensitivity_exhaustive(
    network: &BayesianNetwork,
    f: &ConditionalMeanFn<'_>,
    l: usize,
    cpd_l: &FiniteDiscrete,
    ancestors: &[usize],
    eta_l: f64,
    jensen: bool,
) -> Result<(TiltSolution, TiltSolution), IndexError> {
    let dag = network.dag();
    let grid = DiscreteGrid::build(network, ancestors, MAX_EXHAUSTIVE_SOLVES)
        .expect("checked by caller");
    let support_l = cpd_l.support();
    let mut buffer = vec![0.0; network.vertex_count()];
    let mut configs: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    grid.for_each(network, &mut buffer, |row, weight| {
        let parent_values: Vec<f64> =
            dag.parents(l).iter().map(|&p| row[p]).collect();
        let probs = cpd_l
            .row_for_values(&parent_values)
            .expect("ancestor values drawn from supports")
            .to_vec();
        let mut assignment: BTreeMap<usize, f64> =
            f.conditioned_vertices().iter().map(|&v| (v, row[v])).collect();
        let values: Vec<f64> = support_l
            .iter()
            .map(|&x| {
                assignment.insert(l, x);
                f.evaluate(&assignment, 0)
            })
            .collect();
        configs.push((weight, values, probs));
    });

    if jensen {
        let mut pooled_values = Vec::new();
        let mut pooled_probs = Vec::new();
        for (weight, values, probs) in &configs {
            let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
            for (v, p) in values.iter().zip(probs) {
                pooled_values.push(v - mean);
                pooled_probs.push(weight * p);
            }
        }
        let handle = DiscreteCgf::new(&pooled_values, &pooled_probs)?;
        let plus = solve_index(&handle, eta_l)?;
        let minus = solve_index(&handle.negated(), eta_l)?;
        return Ok((plus, minus));
    }

    let mut plus_parts = Vec::with_capacity(configs.len());
    let mut minus_parts = Vec::with_capacity(configs.len());
    for (weight, values, probs) in &configs {
        let handle = DiscreteCgf::new(values, probs)?;
        plus_parts.push((*weight, solve_index(&handle, eta_l)?));
        minus_parts.push((*weight, solve_index(&handle.negated(), eta_l)?));
    }
    Ok((combine_weighted(plus_parts), combine_weighted(minus_parts)))
}

/// Nested sampling: outer draws of the ancestor configuration, inner draws
/// of `x_l` from its conditional, one tilt solve of the centered
/// conditional-mean sample per outer draw.
fn sensitivity_sampled(
    network: &BayesianNetwork,
    f: &ConditionalMeanFn<'_>,
    l: usize,
    eta_l: f64,
    mc: &McConfig,
    jensen: bool,
) -> Result<(TiltSolution, TiltSolution), IndexError> {
    use rand::SeedableRng;

    let dag = network.dag();
    let outer = network.sample(mc.outer_samples, mc.seed);
    let weight = 1.0 / mc.outer_samples as f64;
    let mut plus_parts = Vec::with_capacity(mc.outer_samples);
    let mut minus_parts = Vec::with_capacity(mc.outer_samples);
    let mut pooled: Vec<f64> = Vec::new();
    let mut assignment: BTreeMap<usize, f64> = BTreeMap::new();
    let mut values = vec![0.0; mc.inner_samples];

    for i in 0..mc.outer_samples {
        let row = outer.row(i);
        let parent_values: Vec<f64> =
            dag.parents(l).iter().map(|&p| row[p]).collect();
        assignment.clear();
        for &v in f.conditioned_vertices() {
            assignment.insert(v, row[v]);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mc.seed ^ 0x1417_5EED_u64);
        rng.set_stream(i as u64);
        for (j, slot) in values.iter_mut().enumerate() {
            let x = network.cpd(l).sample(&parent_values, &mut rng);
            assignment.insert(l, x);
            *slot = f.evaluate(&assignment, (i * mc.inner_samples + j) as u64);
        }
        if jensen {
            let mean: f64 = values.iter().sum::<f64>() / values.len() as f64;
            pooled.extend(values.iter().map(|v| v - mean));
        } else {
            let handle = SampleCgf::from_samples(&values)?;
            plus_parts.push((weight, solve_index(&handle, eta_l)?));
            minus_parts.push((weight, solve_index(&handle.negated(), eta_l)?));
        }
    }

    if jensen {
        let handle = SampleCgf::from_samples(&pooled)?;
        let plus = solve_index(&handle, eta_l)?;
        let minus = solve_index(&handle.negated(), eta_l)?;
        return Ok((plus, minus));
    }
    Ok((combine_weighted(plus_parts), combine_weighted(minus_parts)))
}

/// Pools per-configuration tilt solves into one solution: values and
/// achieved radii average with the configuration weights, iteration counts
/// add, the reported effective sample size is the weakest seen, and the
/// boundary reports the most severe regime encountered. A single
/// full-weight part passes through unchanged (so chains whose perturbed
/// vertex has no ancestors keep their exact tilt).
fn combine_weighted(parts: Vec<(f64, TiltSolution)>) -> TiltSolution {
    if parts.len() == 1 && (parts[0].0 - 1.0).abs() <= 1e-12 {
        return parts.into_iter().next().unwrap().1;
    }
    let mut value = 0.0;
    let mut achieved = 0.0;
    let mut iterations = 0;
    let mut ess: Option<f64> = None;
    let mut warnings: Vec<String> = Vec::new();
    let mut boundary = BoundaryCase::Interior;
    let mut off_interior = 0usize;
    let total = parts.len();
    for (weight, sol) in parts {
        value += weight * sol.value;
        achieved += weight * sol.achieved_eta;
        iterations += sol.diagnostics.iterations;
        if let Some(e) = sol.diagnostics.ess {
            ess = Some(ess.map_or(e, |cur: f64| cur.min(e)));
        }
        for w in sol.diagnostics.warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        if boundary_severity(sol.boundary) > boundary_severity(boundary) {
            boundary = sol.boundary;
        }
        if sol.boundary != BoundaryCase::Interior {
            off_interior += 1;
        }
    }
    if off_interior > 0 {
        warnings.push(format!(
            "{off_interior} of {total} parent configurations did not admit an interior tilt"
        ));
    }
    TiltSolution {
        value,
        tilt: None,
        boundary,
        achieved_eta: achieved,
        diagnostics: TiltDiagnostics { iterations, ess, warnings },
    }
}

fn boundary_severity(b: BoundaryCase) -> u8 {
    match b {
        BoundaryCase::Interior => 0,
        BoundaryCase::EtaSaturatedFiniteDomain => 1,
        BoundaryCase::EtaSaturatedEssSup => 2,
        BoundaryCase::CCappedMc => 3,
    }
}

// ---------------------------------------------------------------------------
// Discrete enumeration
// ---------------------------------------------------------------------------

/// Odometer over the joint configurations of a sorted set of discrete
/// vertices, yielding each configuration's product of conditional
/// probabilities (the joint probability when the set is ancestrally closed,
/// or the conditional probability given preset buffer values otherwise).
struct DiscreteGrid {
    verts: Vec<usize>,
    cards: Vec<usize>,
    config_count: usize,
}

impl DiscreteGrid {
    fn build(network: &BayesianNetwork, verts: &[usize], cap: usize) -> Option<Self> {
        let mut cards = Vec::with_capacity(verts.len());
        let mut count: usize = 1;
        for &v in verts {
            let Cpd::Discrete(d) = network.cpd(v) else { return None };
            cards.push(d.support().len());
            count = count.checked_mul(d.support().len())?;
            if count > cap {
                return None;
            }
        }
        Some(Self { verts: verts.to_vec(), cards, config_count: count })
    }

    fn for_each(
        &self,
        network: &BayesianNetwork,
        buffer: &mut [f64],
        mut visit: impl FnMut(&[f64], f64),
    ) {
        let dag = network.dag();
        let m = self.verts.len();
        if m == 0 {
            visit(buffer, 1.0);
            return;
        }
        let supports: Vec<&[f64]> = self
            .verts
            .iter()
            .map(|&v| match network.cpd(v) {
                Cpd::Discrete(d) => d.support(),
                _ => unreachable!("validated by build"),
            })
            .collect();
        let mut idx = vec![0usize; m];
        let mut scratch: Vec<f64> = Vec::new();
        loop {
            for (slot, &v) in self.verts.iter().enumerate() {
                buffer[v] = supports[slot][idx[slot]];
            }
            let mut weight = 1.0;
            for (slot, &v) in self.verts.iter().enumerate() {
                let Cpd::Discrete(d) = network.cpd(v) else { unreachable!() };
                scratch.clear();
                scratch.extend(dag.parents(v).iter().map(|&p| buffer[p]));
                let row = d
                    .row_for_values(&scratch)
                    .expect("parent values drawn from parent supports");
                weight *= row[idx[slot]];
            }
            visit(buffer, weight);
            let mut slot = m;
            loop {
                if slot == 0 {
                    return;
                }
                slot -= 1;
                idx[slot] += 1;
                if idx[slot] < self.cards[slot] {
                    break;
                }
                idx[slot] = 0;
            }
        }
    }
}
