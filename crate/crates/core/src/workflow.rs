//! The end-to-end analysis loop on top of the index machinery: assemble
//! per-vertex KL budgets, rank components by their worst-case influence on
//! the quantity of interest, test the total against a tolerance, and — after
//! a component has been re-modeled — decide which of the remaining indices
//! carry over and which must be recomputed.
//!
//! A typical pass:
//!
//! 1. [`build_budget`] turns user-set radii and held-out observations into a
//!    [`MisspecificationBudget`] covering every stochastic vertex.
//! 2. [`rank_components`] computes each vertex's worst-case increase
//!    [`sensitivity_index`] and reports them sorted, with relative shares
//!    and ratios against the baseline QoI mean.
//! 3. [`assess`] compares an index (absolute or relative to the mean)
//!    against a tolerance.
//! 4. After replacing the top-ranked conditional, [`correctability_check`]
//!    partitions the remaining vertices into those whose indices provably
//!    carry over and those to recompute, and recomputes the latter.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rayon::prelude::*;
use thiserror::Error;

use crate::cpd::Cpd;
use crate::divergence::{
    eta_from_samples, BudgetProvenance, DivergenceError, MisspecificationBudget, ResidualFit,
};
use crate::graph::GraphError;
use crate::indices::{
    qoi_mean, sensitivity_index, IndexError, IndexResult, McConfig, QuantityOfInterest,
    SensitivityScope,
};
use crate::network::{BayesianNetwork, NetworkError};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(
        "no misspecification radius for stochastic vertex {vertex}: supply an \
         override or observations"
    )]
    MissingBudget { vertex: usize },
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("relative tolerance is undefined when the QoI mean is zero; use absolute mode")]
    ZeroMeanRelative,
    #[error("the two models must share one vertex set and edge set")]
    StructureMismatch,
    #[error(
        "models differ at vertices {vertices:?}; corrections replace one \
         conditional at a time"
    )]
    MultiVertexDiff { vertices: Vec<usize> },
    #[error("improvement deltas compare indices of the same vertex and ambiguity set")]
    MismatchedAmbiguity,
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

// ---------------------------------------------------------------------------
// Budget assembly
// ---------------------------------------------------------------------------

/// Observations of one vertex for data-driven radius estimation: the child
/// column plus one row-aligned column per parent, in graph parent order.
#[derive(Debug, Clone, Default)]
pub struct VertexObservations {
    pub child: Vec<f64>,
    pub parent_columns: Vec<Vec<f64>>,
}

/// Assembles a per-vertex KL budget for every stochastic vertex of the
/// network. An explicit `override` always wins; otherwise held-out
/// `observations` yield a data-driven radius via [`eta_from_samples`] with
/// the given residual fit; a stochastic vertex with neither is an error.
/// Deterministic vertices are skipped — they admit no perturbation — and
/// overrides naming them are ignored.
pub fn build_budget(
    network: &BayesianNetwork,
    observations: &BTreeMap<usize, VertexObservations>,
    overrides: &BTreeMap<usize, f64>,
    fit: ResidualFit,
) -> Result<MisspecificationBudget, WorkflowError> {
    for &v in overrides.keys().chain(observations.keys()) {
        if v >= network.vertex_count() {
            return Err(GraphError::InvalidVertex {
                vertex: v,
                vertex_count: network.vertex_count(),
            }
            .into());
        }
    }
    let mut budget = MisspecificationBudget::new();
    for v in network.stochastic_vertices() {
        if let Some(&eta) = overrides.get(&v) {
            budget.set_vertex(v, eta, BudgetProvenance::UserSet)?;
        } else if let Some(obs) = observations.get(&v) {
            let Cpd::Linear(modeled) = network.cpd(v) else {
                return Err(DivergenceError::NetworkMismatch(format!(
                    "vertex {v} is not an additive-noise linear family; set its \
                     radius explicitly"
                ))
                .into());
            };
            let columns: Vec<&[f64]> =
                obs.parent_columns.iter().map(|c| c.as_slice()).collect();
            let estimate = eta_from_samples(&obs.child, &columns, modeled, fit)?;
            budget.set_vertex(v, estimate.eta, BudgetProvenance::DataEstimated)?;
        } else {
            return Err(WorkflowError::MissingBudget { vertex: v });
        }
    }
    Ok(budget)
}

/// Errors unless the budget names every stochastic vertex in the ancestral
/// closure of the QoI. Extra budget entries outside the closure are fine.
fn ensure_budget_covers(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    budget: &MisspecificationBudget,
) -> Result<BTreeSet<usize>, WorkflowError> {
    let verts: Vec<usize> = qoi.vertices().iter().copied().collect();
    let closure = network.dag().ancestral_closure_of_set(&verts)?;
    let stochastic: BTreeSet<usize> = network.stochastic_vertices().into_iter().collect();
    for &v in &closure {
        if stochastic.contains(&v) && budget.vertex_eta(v).is_none() {
            return Err(WorkflowError::MissingBudget { vertex: v });
        }
    }
    Ok(closure)
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

/// One ranked vertex: its radius, full two-sided index, share of the summed
/// worst-case increase, and ratio against the absolute baseline QoI mean
/// (`None` when that mean is zero).
#[derive(Debug, Clone)]
pub struct RankingEntry {
    pub vertex: usize,
    pub eta: f64,
    pub index: IndexResult,
    pub share: f64,
    pub ratio: Option<f64>,
}

/// A vertex whose index computation failed; the ranking proceeds without it.
#[derive(Debug)]
pub struct RankingFailure {
    pub vertex: usize,
    pub error: IndexError,
}

/// Vertices sorted by worst-case increase of the QoI mean, descending, ties
/// broken by vertex id. `degenerate` flags an all-zero ranking, in which
/// case every share is zero; otherwise shares sum to one.
#[derive(Debug)]
pub struct RankingReport {
    pub qoi_mean: f64,
    pub entries: Vec<RankingEntry>,
    pub failures: Vec<RankingFailure>,
    pub degenerate: bool,
}

impl RankingReport {
    /// The top-ranked vertex, if any index succeeded.
    pub fn leader(&self) -> Option<&RankingEntry> {
        self.entries.first()
    }
}

/// Ranks every budgeted vertex by its worst-case *increase* of the QoI mean
/// under its own radius. The per-vertex solves are independent and fan out
/// in parallel; assembly and ordering are deterministic for a fixed seed.
/// The budget must cover all stochastic vertices in the QoI's ancestry;
/// budgeted vertices outside it rank last with exactly zero indices.
pub fn rank_components(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    budget: &MisspecificationBudget,
    mc: &McConfig,
) -> Result<RankingReport, WorkflowError> {
    ensure_budget_covers(network, qoi, budget)?;
    let mean = qoi_mean(network, qoi, mc)?;
    let jobs: Vec<(usize, f64)> = budget.iter().map(|(v, e)| (v, e.eta)).collect();
    let outcomes: Vec<(usize, f64, Result<IndexResult, IndexError>)> = jobs
        .par_iter()
        .map(|&(vertex, eta)| {
            let index =
                sensitivity_index(network, qoi, vertex, eta, SensitivityScope::FreeParents, mc);
            (vertex, eta, index)
        })
        .collect();

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (vertex, eta, outcome) in outcomes {
        match outcome {
            Ok(index) => {
                entries.push(RankingEntry { vertex, eta, index, share: 0.0, ratio: None })
            }
            Err(error) => failures.push(RankingFailure { vertex, error }),
        }
    }
    entries.sort_by(|a, b| {
        b.index
            .worst_increase()
            .partial_cmp(&a.index.worst_increase())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.vertex.cmp(&b.vertex))
    });
    let total: f64 = entries.iter().map(|e| e.index.worst_increase()).sum();
    let degenerate = !(total > 0.0);
    for entry in &mut entries {
        if !degenerate {
            entry.share = entry.index.worst_increase() / total;
        }
        if mean != 0.0 {
            entry.ratio = Some(entry.index.worst_increase() / mean.abs());
        }
    }
    Ok(RankingReport { qoi_mean: mean, entries, failures, degenerate })
}

// ---------------------------------------------------------------------------
// Tolerance assessment
// ---------------------------------------------------------------------------

/// Whether a tolerance applies to the raw index or to its ratio against the
/// absolute baseline QoI mean. Relative is the default: tolerances on a
/// prediction are most naturally stated as fractions of its magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ToleranceMode {
    Absolute,
    #[default]
    Relative,
}

/// Outcome of one tolerance test. `measured` is the number actually
/// compared: the index itself in absolute mode, `index / |qoi_mean|` in
/// relative mode.
#[derive(Debug, Clone, Copy)]
pub struct Assessment {
    pub index: f64,
    pub qoi_mean: f64,
    pub tolerance: f64,
    pub mode: ToleranceMode,
    pub measured: f64,
    pub pass: bool,
}

/// Tests a worst-case index against a tolerance. A zero index passes any
/// valid tolerance; a zero mean in relative mode is an error rather than a
/// division by zero.
pub fn assess(
    index: f64,
    qoi_mean: f64,
    tolerance: f64,
    mode: ToleranceMode,
) -> Result<Assessment, WorkflowError> {
    if !tolerance.is_finite() || tolerance <= 0.0 {
        return Err(WorkflowError::InvalidTolerance(tolerance));
    }
    let measured = match mode {
        ToleranceMode::Absolute => index,
        ToleranceMode::Relative => {
            if qoi_mean == 0.0 {
                return Err(WorkflowError::ZeroMeanRelative);
            }
            index / qoi_mean.abs()
        }
    };
    Ok(Assessment { index, qoi_mean, tolerance, mode, measured, pass: measured <= tolerance })
}

// ---------------------------------------------------------------------------
// Correction bookkeeping
// ---------------------------------------------------------------------------

/// Why the unchanged set of a [`CorrectabilityReport`] is safe to reuse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionCase {
    /// The replaced conditional keeps its affine mean and swaps Gaussian
    /// noise for another mean-zero law inside an otherwise linear-Gaussian
    /// model. Neither the effective coefficients nor any other vertex's
    /// conditional variance move, so every other index — and, since the QoI
    /// mean is also preserved, every relative sensitivity — carries over
    /// identically.
    GaussianMeanZero,
    /// An arbitrary single-conditional replacement. A vertex whose own
    /// ancestry excludes the corrected vertex keeps its ancestor law and its
    /// own conditional, so its index carries over; vertices downstream of
    /// the correction are recomputed.
    GeneralDescendants,
    /// The two models are identical; nothing was corrected.
    NoChange,
}

/// Before/after indices of one recomputed vertex. `delta` is the change of
/// the worst-case increase; negative means the correction helped.
#[derive(Debug, Clone)]
pub struct RecheckEntry {
    pub vertex: usize,
    pub before: IndexResult,
    pub after: IndexResult,
    pub delta: f64,
}

/// Which per-vertex indices survive a single-conditional correction.
/// `unchanged`, the recheck vertices, and the corrected vertex partition the
/// QoI's ancestral closure. The corrected vertex's own before/after pair is
/// reported when it carries a budget radius (under the *given* budget on
/// both sides; re-estimate and [`assess`] separately if the correction also
/// changes the radius).
#[derive(Debug)]
pub struct CorrectabilityReport {
    pub corrected_vertex: Option<usize>,
    pub case: CorrectionCase,
    pub unchanged: Vec<usize>,
    pub recheck: Vec<RecheckEntry>,
    pub corrected: Option<RecheckEntry>,
}

/// Compares a baseline model against a corrected one differing in at most
/// one conditional, and reports which per-vertex indices carry over and
/// which needed recomputation (recomputing them). Both models must share
/// the graph; corrections that rewire edges or touch several vertices are
/// rejected.
pub fn correctability_check(
    baseline: &BayesianNetwork,
    corrected: &BayesianNetwork,
    qoi: &QuantityOfInterest,
    budget: &MisspecificationBudget,
    mc: &McConfig,
) -> Result<CorrectabilityReport, WorkflowError> {
    if baseline.vertex_count() != corrected.vertex_count()
        || (0..baseline.vertex_count())
            .any(|v| baseline.dag().parents(v) != corrected.dag().parents(v))
    {
        return Err(WorkflowError::StructureMismatch);
    }
    let closure = ensure_budget_covers(baseline, qoi, budget)?;

    let diff: Vec<usize> = (0..baseline.vertex_count())
        .filter(|&v| baseline.cpd(v) != corrected.cpd(v))
        .collect();
    if diff.is_empty() {
        return Ok(CorrectabilityReport {
            corrected_vertex: None,
            case: CorrectionCase::NoChange,
            unchanged: closure.into_iter().collect(),
            recheck: Vec::new(),
            corrected: None,
        });
    }
    if diff.len() > 1 {
        return Err(WorkflowError::MultiVertexDiff { vertices: diff });
    }
    let star = diff[0];

    let case = if baseline.is_linear_gaussian()
        && is_mean_zero_noise_swap(baseline.cpd(star), corrected.cpd(star))
    {
        CorrectionCase::GaussianMeanZero
    } else {
        CorrectionCase::GeneralDescendants
    };

    let mut unchanged = Vec::new();
    let mut recheck_vertices = Vec::new();
    for &l in &closure {
        if l == star {
            continue;
        }
        let keeps = match case {
            CorrectionCase::GaussianMeanZero => true,
            CorrectionCase::GeneralDescendants => {
                !baseline.dag().ancestral_closure(l)?.contains(&star)
            }
            CorrectionCase::NoChange => unreachable!("diff is non-empty"),
        };
        if keeps {
            unchanged.push(l);
        } else {
            recheck_vertices.push(l);
        }
    }

    let recompute = |l: usize| -> Result<RecheckEntry, WorkflowError> {
        let eta = budget
            .vertex_eta(l)
            .ok_or(WorkflowError::MissingBudget { vertex: l })?;
        let scope = SensitivityScope::FreeParents;
        let before = sensitivity_index(baseline, qoi, l, eta, scope, mc)?;
        let after = sensitivity_index(corrected, qoi, l, eta, scope, mc)?;
        let delta = after.worst_increase() - before.worst_increase();
        Ok(RecheckEntry { vertex: l, before, after, delta })
    };
    let recheck = recheck_vertices
        .par_iter()
        .map(|&l| recompute(l))
        .collect::<Result<Vec<_>, _>>()?;
    let corrected_entry = match budget.vertex_eta(star) {
        Some(_) if closure.contains(&star) => Some(recompute(star)?),
        _ => None,
    };

    Ok(CorrectabilityReport {
        corrected_vertex: Some(star),
        case,
        unchanged,
        recheck,
        corrected: corrected_entry,
    })
}

/// Detects the replacement pattern of [`CorrectionCase::GaussianMeanZero`]:
/// same affine mean, both noises mean-zero. The caller separately requires
/// the baseline model (hence the replaced noise) to be Gaussian.
fn is_mean_zero_noise_swap(before: &Cpd, after: &Cpd) -> bool {
    let (Cpd::Linear(b), Cpd::Linear(a)) = (before, after) else {
        return false;
    };
    let scale = 1.0 + b.noise.variance().sqrt() + a.noise.variance().sqrt();
    b.intercept == a.intercept
        && b.weights == a.weights
        && b.noise.mean().abs() <= 1e-12 * scale
        && a.noise.mean().abs() <= 1e-12 * scale
}

/// Change of the worst-case increase after a correction, for one vertex:
/// `after − before`, negative when the correction shrank the index. The two
/// results must describe the same ambiguity set.
pub fn improvement_delta(
    before: &IndexResult,
    after: &IndexResult,
) -> Result<f64, WorkflowError> {
    if before.kind != after.kind {
        return Err(WorkflowError::MismatchedAmbiguity);
    }
    Ok(after.worst_increase() - before.worst_increase())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpd::{FiniteDiscrete, LinearCpd, NoiseModel};
    use crate::graph::Dag;
    use crate::indices::{gaussian_sensitivity, AmbiguityKind, IndexBackend};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lg_chain() -> BayesianNetwork {
        // X0 ~ N(1, 1), X1 = 2·X0 + N(0, 1), X2 = 3 − X1 + N(0, 0.25)
        let dag = Dag::new(3, &[(0, 1), (1, 2)]).unwrap();
        let cpds = vec![
            Cpd::Linear(LinearCpd::gaussian(1.0, vec![], 1.0).unwrap()),
            Cpd::Linear(LinearCpd::gaussian(0.0, vec![2.0], 1.0).unwrap()),
            Cpd::Linear(LinearCpd::gaussian(3.0, vec![-1.0], 0.5).unwrap()),
        ];
        BayesianNetwork::new(dag, cpds).unwrap()
    }

    fn uniform_budget(vertices: &[usize], eta: f64) -> MisspecificationBudget {
        let mut budget = MisspecificationBudget::new();
        for &v in vertices {
            budget.set_vertex(v, eta, BudgetProvenance::UserSet).unwrap();
        }
        budget
    }

    fn binary_chain() -> BayesianNetwork {
        // X0 ~ Bern(0.3), X1 | X0, X2 | X1 on {0, 1}.
        let dag = Dag::new(3, &[(0, 1), (1, 2)]).unwrap();
        let support = vec![0.0, 1.0];
        let cpds = vec![
            Cpd::Discrete(
                FiniteDiscrete::new(support.clone(), vec![], vec![vec![0.7, 0.3]]).unwrap(),
            ),
            Cpd::Discrete(
                FiniteDiscrete::new(
                    support.clone(),
                    vec![support.clone()],
                    vec![vec![0.8, 0.2], vec![0.4, 0.6]],
                )
                .unwrap(),
            ),
            Cpd::Discrete(
                FiniteDiscrete::new(
                    support.clone(),
                    vec![support.clone()],
                    vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                )
                .unwrap(),
            ),
        ];
        BayesianNetwork::new(dag, cpds).unwrap()
    }

    #[test]
    fn general_correction_partitions_the_ancestry() {
        let baseline = binary_chain();
        let corrected = baseline
            .with_cpd(
                1,
                Cpd::Discrete(
                    FiniteDiscrete::new(
                        vec![0.0, 1.0],
                        vec![vec![0.0, 1.0]],
                        vec![vec![0.6, 0.4], vec![0.3, 0.7]],
                    )
                    .unwrap(),
                ),
            )
            .unwrap();
        let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
        let budget = uniform_budget(&[0, 1, 2], 0.1);
        let mc = McConfig::default();

        let report = correctability_check(&baseline, &corrected, &qoi, &budget, &mc).unwrap();
        assert_eq!(report.corrected_vertex, Some(1));
        assert_eq!(report.case, CorrectionCase::GeneralDescendants);
        assert_eq!(report.unchanged, vec![0]);
        let recheck: Vec<usize> = report.recheck.iter().map(|e| e.vertex).collect();
        assert_eq!(recheck, vec![2]);
        let corrected_entry = report.corrected.as_ref().unwrap();
        assert_eq!(corrected_entry.vertex, 1);

        // The three parts partition the QoI's ancestry.
        let mut seen: Vec<usize> = report.unchanged.clone();
        seen.extend(report.recheck.iter().map(|e| e.vertex));
        seen.push(1);
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2]);

        // Exact backends on both sides of every recomputation, and the
        // after-side really reflects the corrected model.
        for entry in report.recheck.iter().chain(report.corrected.as_ref()) {
            assert_eq!(entry.before.backend, IndexBackend::ExhaustiveDiscrete);
            assert_eq!(entry.after.backend, IndexBackend::ExhaustiveDiscrete);
            assert!((entry.delta
                - (entry.after.worst_increase() - entry.before.worst_increase()))
            .abs()
                < 1e-15);
            assert!(
                entry.delta.abs() > 1e-6,
                "changing the conditional at 1 must move vertex {}'s index",
                entry.vertex
            );
        }
    }

    #[test]
    fn identical_models_need_no_rechecks() {
        let net = lg_chain();
        let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
        let budget = uniform_budget(&[0, 1, 2], 0.2);
        let report =
            correctability_check(&net, &net, &qoi, &budget, &McConfig::default()).unwrap();
        assert_eq!(report.corrected_vertex, None);
        assert_eq!(report.case, CorrectionCase::NoChange);
        assert_eq!(report.unchanged, vec![0, 1, 2]);
        assert!(report.recheck.is_empty());
        assert!(report.corrected.is_none());
    }

    #[test]
    fn mean_zero_noise_swap_keeps_every_other_vertex() {
        let baseline = lg_chain();
        let swapped = Cpd::Linear(LinearCpd {
            intercept: 0.0,
            weights: vec![2.0],
            noise: NoiseModel::two_point_mean_zero(1.5, 0.3).unwrap(),
        });
        let corrected = baseline.with_cpd(1, swapped).unwrap();
        let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
        let budget = uniform_budget(&[0, 1, 2], 0.3);
        let mc = McConfig::default();

        let report = correctability_check(&baseline, &corrected, &qoi, &budget, &mc).unwrap();
        assert_eq!(report.corrected_vertex, Some(1));
        assert_eq!(report.case, CorrectionCase::GaussianMeanZero);
        assert_eq!(report.unchanged, vec![0, 2]);
        assert!(report.recheck.is_empty());
        assert!(report.corrected.is_some());

        // The carried-over indices are bit-identical, not merely close.
        for &l in &report.unchanged {
            let before = gaussian_sensitivity(&baseline, 2, 1.0, l, 0.3).unwrap();
            let after = gaussian_sensitivity(&corrected, 2, 1.0, l, 0.3).unwrap();
            assert_eq!(before.worst_increase().to_bits(), after.worst_increase().to_bits());
            assert_eq!(before.worst_decrease().to_bits(), after.worst_decrease().to_bits());
        }
        // And the QoI mean is preserved, so relative sensitivities carry too.
        let m0 = qoi_mean(&baseline, &qoi, &mc).unwrap();
        let m1 = qoi_mean(&corrected, &qoi, &mc).unwrap();
        assert!((m0 - m1).abs() < 1e-12);
    }

    #[test]
    fn random_networks_keep_identity_under_noise_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..50 {
            let n: usize = rng.gen_range(3..=6);
            let mut edges = Vec::new();
            for v in 1..n {
                edges.push((v - 1, v)); // spine keeps every vertex ancestral
                for u in 0..v.saturating_sub(1) {
                    if rng.gen_bool(0.4) {
                        edges.push((u, v));
                    }
                }
            }
            let dag = Dag::new(n, &edges).unwrap();
            let cpds: Vec<Cpd> = (0..n)
                .map(|v| {
                    let weights = dag
                        .parents(v)
                        .iter()
                        .map(|_| rng.gen_range(-2.0..2.0))
                        .collect();
                    let sd = rng.gen_range(0.3..1.5);
                    Cpd::Linear(
                        LinearCpd::gaussian(rng.gen_range(-1.0..1.0), weights, sd).unwrap(),
                    )
                })
                .collect();
            let baseline = BayesianNetwork::new(dag, cpds).unwrap();

            let target = n - 1;
            let star = rng.gen_range(0..target);
            let Cpd::Linear(old) = baseline.cpd(star) else { unreachable!() };
            let swapped = Cpd::Linear(LinearCpd {
                intercept: old.intercept,
                weights: old.weights.clone(),
                noise: NoiseModel::two_point_mean_zero(rng.gen_range(0.2..2.0), 0.4).unwrap(),
            });
            let corrected = baseline.with_cpd(star, swapped).unwrap();

            let eta = rng.gen_range(0.05..1.0);
            for l in 0..n {
                if l == star {
                    continue;
                }
                let before = gaussian_sensitivity(&baseline, target, 1.0, l, eta).unwrap();
                let after = gaussian_sensitivity(&corrected, target, 1.0, l, eta).unwrap();
                assert_eq!(
                    before.worst_increase().to_bits(),
                    after.worst_increase().to_bits(),
                    "vertex {l} moved after swapping noise at {star}"
                );
            }
        }
    }

    #[test]
    fn rejects_structural_and_multi_vertex_differences() {
        let baseline = lg_chain();
        let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
        let budget = uniform_budget(&[0, 1, 2], 0.1);
        let mc = McConfig::default();

        let rewired = BayesianNetwork::new(
            Dag::new(3, &[(0, 1), (0, 2), (1, 2)]).unwrap(),
            vec![
                Cpd::Linear(LinearCpd::gaussian(1.0, vec![], 1.0).unwrap()),
                Cpd::Linear(LinearCpd::gaussian(0.0, vec![2.0], 1.0).unwrap()),
                Cpd::Linear(LinearCpd::gaussian(3.0, vec![0.5, -1.0], 0.5).unwrap()),
            ],
        )
        .unwrap();
        let err = correctability_check(&baseline, &rewired, &qoi, &budget, &mc).unwrap_err();
        assert!(matches!(err, WorkflowError::StructureMismatch));

        let double = baseline
            .with_cpd(0, Cpd::Linear(LinearCpd::gaussian(0.5, vec![], 1.0).unwrap()))
            .unwrap()
            .with_cpd(1, Cpd::Linear(LinearCpd::gaussian(0.1, vec![2.0], 1.0).unwrap()))
            .unwrap();
        let err = correctability_check(&baseline, &double, &qoi, &budget, &mc).unwrap_err();
        match err {
            WorkflowError::MultiVertexDiff { vertices } => assert_eq!(vertices, vec![0, 1]),
            other => panic!("expected MultiVertexDiff, got {other:?}"),
        }
    }

    #[test]
    fn shares_normalize_and_order_descending() {
        // Independent sources into X3 = X0 + X1 + X2 + N(0, 1); source sds
        // 2, 1, 1 give indices proportional to 2, 1, 1, 1.
        let dag = Dag::new(4, &[(0, 3), (1, 3), (2, 3)]).unwrap();
        let cpds = vec![
            Cpd::Linear(LinearCpd::gaussian(3.0, vec![], 2.0).unwrap()),
            Cpd::Linear(LinearCpd::gaussian(0.0, vec![], 1.0).unwrap()),
            Cpd::Linear(LinearCpd::gaussian(0.0, vec![], 1.0).unwrap()),
            Cpd::Linear(LinearCpd::gaussian(0.0, vec![1.0, 1.0, 1.0], 1.0).unwrap()),
        ];
        let net = BayesianNetwork::new(dag, cpds).unwrap();
        let qoi = QuantityOfInterest::affine(3, 1.0, 0.0);
        let budget = uniform_budget(&[0, 1, 2, 3], 0.5);

        let report = rank_components(&net, &qoi, &budget, &McConfig::default()).unwrap();
        assert!(!report.degenerate);
        assert!(report.failures.is_empty());
        assert!((report.qoi_mean - 3.0).abs() < 1e-12);

        let order: Vec<usize> = report.entries.iter().map(|e| e.vertex).collect();
        assert_eq!(order, vec![0, 1, 2, 3], "descending with id tie-break");
        let shares: Vec<f64> = report.entries.iter().map(|e| e.share).collect();
        for (share, expect) in shares.iter().zip([0.4, 0.2, 0.2, 0.2]) {
            assert!((share - expect).abs() < 1e-12, "shares {shares:?}");
        }
        assert!((shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for entry in &report.entries {
            let expect = entry.index.worst_increase() / 3.0;
            assert!((entry.ratio.unwrap() - expect).abs() < 1e-15);
        }
        assert_eq!(report.leader().unwrap().vertex, 0);
    }

    #[test]
    fn zero_radius_ranking_is_degenerate() {
        let net = lg_chain();
        let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
        let budget = uniform_budget(&[0, 1, 2], 0.0);
        let report = rank_components(&net, &qoi, &budget, &McConfig::default()).unwrap();
        assert!(report.degenerate);
        assert!(report.entries.iter().all(|e| e.share == 0.0));
        assert!(report.entries.iter().all(|e| e.index.worst_increase() == 0.0));
        // Ordering falls back to vertex id.
        let order: Vec<usize> = report.entries.iter().map(|e| e.vertex).collect();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn uniform_budget_scaling_preserves_shares() {
        let net = lg_chain();
        let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
        let mc = McConfig::default();
        let small = rank_components(&net, &qoi, &uniform_budget(&[0, 1, 2], 0.1), &mc).unwrap();
        let large = rank_components(&net, &qoi, &uniform_budget(&[0, 1, 2], 0.4), &mc).unwrap();
        for (a, b) in small.entries.iter().zip(&large.entries) {
            assert_eq!(a.vertex, b.vertex);
            assert!((a.share - b.share).abs() < 1e-12);
            // √η scaling of each closed-form index.
            assert!(
                (b.index.worst_increase() - 2.0 * a.index.worst_increase()).abs() < 1e-12
            );
        }
    }

    #[test]
    fn ranking_requires_budget_coverage() {
        let net = lg_chain();
        let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
        let budget = uniform_budget(&[0, 2], 0.1); // vertex 1 missing
        let err = rank_components(&net, &qoi, &budget, &McConfig::default()).unwrap_err();
        match err {
            WorkflowError::MissingBudget { vertex } => assert_eq!(vertex, 1),
            other => panic!("expected MissingBudget, got {other:?}"),
        }
    }

    #[test]
    fn assessment_modes_and_failure_states() {
        let pass = assess(0.0928, 2.0434, 0.05, ToleranceMode::Relative).unwrap();
        assert!(pass.pass);
        assert!((pass.measured - 0.0928 / 2.0434).abs() < 1e-15);

        let fail = assess(1.0, 2.0, 0.4, ToleranceMode::Relative).unwrap();
        assert!(!fail.pass);
        assert!((fail.measured - 0.5).abs() < 1e-15);

        let abs = assess(0.3, 0.0, 0.3, ToleranceMode::Absolute).unwrap();
        assert!(abs.pass, "boundary value passes");
        assert!(assess(0.0, 0.0, 1e-9, ToleranceMode::Absolute).unwrap().pass);

        assert!(matches!(
            assess(0.1, 0.0, 0.05, ToleranceMode::Relative),
            Err(WorkflowError::ZeroMeanRelative)
        ));
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                assess(0.1, 1.0, bad, ToleranceMode::Absolute),
                Err(WorkflowError::InvalidTolerance(_))
            ));
        }
        assert_eq!(ToleranceMode::default(), ToleranceMode::Relative);
    }

    #[test]
    fn budget_prefers_overrides_then_data_and_demands_the_rest() {
        let net = lg_chain();
        let rows = net.sample(4_000, 7);
        let observed = VertexObservations {
            child: rows.iter_rows().map(|r| r[1]).collect(),
            parent_columns: vec![rows.iter_rows().map(|r| r[0]).collect()],
        };
        let mut observations = BTreeMap::new();
        observations.insert(1, observed);
        let mut overrides = BTreeMap::new();
        overrides.insert(0usize, 0.25);

        // Vertex 2 has neither an override nor data.
        let err = build_budget(&net, &observations, &overrides, ResidualFit::Gaussian)
            .unwrap_err();
        match err {
            WorkflowError::MissingBudget { vertex } => assert_eq!(vertex, 2),
            other => panic!("expected MissingBudget, got {other:?}"),
        }

        overrides.insert(2, 0.05);
        let budget =
            build_budget(&net, &observations, &overrides, ResidualFit::Gaussian).unwrap();
        let entry0 = budget.vertex_entry(0).unwrap();
        assert_eq!(entry0.provenance, BudgetProvenance::UserSet);
        assert_eq!(entry0.eta, 0.25);
        let entry1 = budget.vertex_entry(1).unwrap();
        assert_eq!(entry1.provenance, BudgetProvenance::DataEstimated);
        assert!(entry1.eta >= 0.0 && entry1.eta < 0.05, "honest data, small radius");

        // Overrides beat data when both are present.
        overrides.insert(1, 0.9);
        let budget =
            build_budget(&net, &observations, &overrides, ResidualFit::Gaussian).unwrap();
        assert_eq!(budget.vertex_entry(1).unwrap().eta, 0.9);
    }

    #[test]
    fn deterministic_vertices_stay_out_of_the_budget() {
        let dag = Dag::new(3, &[(0, 1), (1, 2)])
            .unwrap()
            .with_labels(["x0", "x1", "y"])
            .unwrap();
        let cpds = vec![
            Cpd::Linear(LinearCpd::gaussian(0.0, vec![], 1.0).unwrap()),
            Cpd::Linear(LinearCpd::gaussian(0.0, vec![1.0], 1.0).unwrap()),
            Cpd::Deterministic(
                crate::cpd::Deterministic::new(
                    crate::expr::parse_expression("2 * x1").unwrap(),
                    vec!["x1".to_string()],
                )
                .unwrap(),
            ),
        ];
        let net = BayesianNetwork::new(dag, cpds).unwrap();
        let mut overrides = BTreeMap::new();
        overrides.insert(0usize, 0.1);
        overrides.insert(1, 0.1);
        overrides.insert(2, 0.7); // ignored: deterministic
        let budget =
            build_budget(&net, &BTreeMap::new(), &overrides, ResidualFit::Gaussian).unwrap();
        assert_eq!(budget.vertex_entry(2), None);
        assert_eq!(budget.vertices().collect::<Vec<_>>(), vec![0, 1]);

        // Ranking over that budget still covers the QoI ancestry: the
        // deterministic vertex needs no radius.
        let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
        let report = rank_components(&net, &qoi, &budget, &McConfig::default()).unwrap();
        assert_eq!(report.entries.len(), 2);
    }

    #[test]
    fn improvement_deltas_need_matching_ambiguity_sets() {
        let net = lg_chain();
        let before = gaussian_sensitivity(&net, 2, 1.0, 0, 0.2).unwrap();
        let shrunk = net
            .with_cpd(0, Cpd::Linear(LinearCpd::gaussian(1.0, vec![], 0.5).unwrap()))
            .unwrap();
        let after = gaussian_sensitivity(&shrunk, 2, 1.0, 0, 0.2).unwrap();
        let delta = improvement_delta(&before, &after).unwrap();
        assert!(delta < 0.0, "halving the sd must shrink the index");
        assert!((delta - (after.worst_increase() - before.worst_increase())).abs() < 1e-15);
        assert_eq!(before.kind, AmbiguityKind::VertexFreeParents(0));

        let other = gaussian_sensitivity(&net, 2, 1.0, 1, 0.2).unwrap();
        assert!(matches!(
            improvement_delta(&before, &other),
            Err(WorkflowError::MismatchedAmbiguity)
        ));
    }

    #[test]
    fn out_of_range_override_is_rejected() {
        let net = lg_chain();
        let mut overrides = BTreeMap::new();
        overrides.insert(9usize, 0.1);
        let err = build_budget(&net, &BTreeMap::new(), &overrides, ResidualFit::Gaussian)
            .unwrap_err();
        assert!(matches!(err, WorkflowError::Graph(GraphError::InvalidVertex { .. })));
    }
}
