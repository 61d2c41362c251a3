//! Bayesian networks: a DAG with one CPD per vertex, plus the operations the
//! rest of the crate builds on — forward sampling, joint log-density,
//! closed-form Gaussian moments, and conditional-mean responses for networks
//! whose vertex means are affine in their parents.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::cpd::{Cpd, CpdError};
use crate::graph::{Dag, GraphError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Cpd(#[from] CpdError),
    #[error("expected {expected} CPDs for {expected} vertices, got {got}")]
    CpdCountMismatch { expected: usize, got: usize },
    #[error("vertex {vertex}: CPD takes {cpd_parents} parents but the graph gives it {graph_parents}")]
    ParentCountMismatch {
        vertex: usize,
        cpd_parents: usize,
        graph_parents: usize,
    },
    #[error("vertex {vertex}: deterministic CPDs require a labeled graph")]
    MissingLabels { vertex: usize },
    #[error("vertex {vertex}: expression expects parent '{expected}' at slot {slot}, graph supplies '{got}'")]
    ParentNameMismatch {
        vertex: usize,
        slot: usize,
        expected: String,
        got: String,
    },
    #[error("vertex {vertex}: discrete CPD requires discrete parents, but parent {parent} is not")]
    NonDiscreteParent { vertex: usize, parent: usize },
    #[error("vertex {vertex}: declared support for parent {parent} does not match that parent's support")]
    ParentSupportMismatch { vertex: usize, parent: usize },
    #[error("vertex {vertex} is not linear-Gaussian")]
    NotLinearGaussian { vertex: usize },
    #[error("vertex {vertex} does not have an affine conditional mean")]
    NotAffineMean { vertex: usize },
    #[error("conditioned set is not ancestrally closed: vertex {vertex} has unconditioned ancestors")]
    NotAncestrallyClosed { vertex: usize },
}

/// Row-major matrix of forward samples; one row per draw, one column per
/// vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    vertex_count: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn rows(&self) -> usize {
        if self.vertex_count == 0 {
            0
        } else {
            self.data.len() / self.vertex_count
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.vertex_count..(r + 1) * self.vertex_count]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.vertex_count)
    }

    pub fn column(&self, v: usize) -> Vec<f64> {
        assert!(v < self.vertex_count);
        self.data
            .iter()
            .skip(v)
            .step_by(self.vertex_count)
            .copied()
            .collect()
    }
}

/// Joint Gaussian law of a linear-Gaussian network.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl GaussianMoments {
    pub fn mean(&self, v: usize) -> f64 {
        self.mean[v]
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.covariance[i][j]
    }

    pub fn variance(&self, v: usize) -> f64 {
        self.covariance[v][v]
    }

    pub fn sd(&self, v: usize) -> f64 {
        self.variance(v).max(0.0).sqrt()
    }
}

/// An affine map `intercept + Σ weights[v]·x_v` over a set of conditioning
/// vertices, e.g. a conditional expectation of one vertex given others.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineResponse {
    pub intercept: f64,
    pub weights: BTreeMap<usize, f64>,
}

impl AffineResponse {
    pub fn constant(value: f64) -> Self {
        Self { intercept: value, weights: BTreeMap::new() }
    }

    pub fn eval(&self, lookup: &dyn Fn(usize) -> f64) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .map(|(&v, w)| w * lookup(v))
                .sum::<f64>()
    }
}

/// A DAG together with one CPD per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesianNetwork {
    dag: Dag,
    cpds: Vec<Cpd>,
}

impl BayesianNetwork {
    pub fn new(dag: Dag, cpds: Vec<Cpd>) -> Result<Self, NetworkError> {
        if cpds.len() != dag.vertex_count() {
            return Err(NetworkError::CpdCountMismatch {
                expected: dag.vertex_count(),
                got: cpds.len(),
            });
        }
        for (v, cpd) in cpds.iter().enumerate() {
            let graph_parents = dag.parents(v).len();
            if cpd.parent_count() != graph_parents {
                return Err(NetworkError::ParentCountMismatch {
                    vertex: v,
                    cpd_parents: cpd.parent_count(),
                    graph_parents,
                });
            }
            match cpd {
                Cpd::Deterministic(det) => {
                    if dag.labels().is_none() {
                        return Err(NetworkError::MissingLabels { vertex: v });
                    }
                    for (slot, (&parent, expected)) in
                        dag.parents(v).iter().zip(det.parent_names()).enumerate()
                    {
                        let got = dag.label(parent);
                        if &got != expected {
                            return Err(NetworkError::ParentNameMismatch {
                                vertex: v,
                                slot,
                                expected: expected.clone(),
                                got,
                            });
                        }
                    }
                }
                Cpd::Discrete(disc) => {
                    for (slot, &parent) in dag.parents(v).iter().enumerate() {
                        let Cpd::Discrete(parent_cpd) = &cpds[parent] else {
                            return Err(NetworkError::NonDiscreteParent { vertex: v, parent });
                        };
                        if parent_cpd.support() != disc.parent_supports()[slot].as_slice() {
                            return Err(NetworkError::ParentSupportMismatch { vertex: v, parent });
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(Self { dag, cpds })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn vertex_count(&self) -> usize {
        self.dag.vertex_count()
    }

    pub fn cpd(&self, v: usize) -> &Cpd {
        &self.cpds[v]
    }

    pub fn cpds(&self) -> &[Cpd] {
        &self.cpds
    }

    /// Replaces the CPD at one vertex; the new CPD must take the same number
    /// of parents (and is re-validated against the graph).
    pub fn with_cpd(&self, vertex: usize, cpd: Cpd) -> Result<Self, NetworkError> {
        let mut cpds = self.cpds.clone();
        cpds[vertex] = cpd;
        Self::new(self.dag.clone(), cpds)
    }

    /// Vertices that are genuinely random (not exact functions of parents).
    pub fn stochastic_vertices(&self) -> Vec<usize> {
        (0..self.vertex_count())
            .filter(|&v| !self.cpds[v].is_deterministic())
            .collect()
    }

    /// Log-density of a full joint configuration: the sum of per-vertex
    /// conditional log-densities. `−∞` when any factor is off-support.
    pub fn joint_log_density(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.vertex_count());
        let mut buf = Vec::new();
        let mut total = 0.0;
        for v in 0..self.vertex_count() {
            buf.clear();
            buf.extend(self.dag.parents(v).iter().map(|&p| x[p]));
            let term = self.cpds[v].log_density(x[v], &buf);
            if term == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += term;
        }
        total
    }

    fn sample_row(&self, rng: &mut ChaCha8Rng, clamped: Option<&BTreeMap<usize, f64>>, out: &mut [f64]) {
        let mut buf = Vec::new();
        for &v in self.dag.topological_order() {
            if let Some(value) = clamped.and_then(|c| c.get(&v)) {
                out[v] = *value;
                continue;
            }
            buf.clear();
            buf.extend(self.dag.parents(v).iter().map(|&p| out[p]));
            out[v] = self.cpds[v].sample(&buf, rng);
        }
    }

    /// Draws `n` joint samples. Each row uses its own deterministic RNG
    /// stream derived from `(seed, row)`, so results are bit-identical for a
    /// given `(model, n, seed)` regardless of thread count, and the first
    /// `m < n` rows of a larger draw equal the rows of a smaller one.
    pub fn sample(&self, n: usize, seed: u64) -> SampleMatrix {
        self.sample_clamped(&BTreeMap::new(), n, seed)
    }

    /// Forward sampling with some vertices pinned to fixed values. The
    /// clamped set must be ancestrally closed for the result to be a draw
    /// from the conditional law; callers condition on ancestral closures.
    pub fn sample_clamped(
        &self,
        clamped: &BTreeMap<usize, f64>,
        n: usize,
        seed: u64,
    ) -> SampleMatrix {
        let vc = self.vertex_count();
        let mut data = vec![0.0f64; n * vc];
        let clamp = if clamped.is_empty() { None } else { Some(clamped) };
        data.par_chunks_mut(vc).enumerate().for_each(|(row, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(row as u64);
            self.sample_row(&mut rng, clamp, chunk);
        });
        SampleMatrix { vertex_count: vc, data }
    }

    /// Exact mean vector and covariance matrix for a linear-Gaussian network
    /// (degenerate `sd = 0` vertices and affine deterministic vertices are
    /// allowed), by forward recursion in topological order.
    pub fn gaussian_joint_moments(&self) -> Result<GaussianMoments, NetworkError> {
        let n = self.vertex_count();
        let mut mean = vec![0.0; n];
        let mut cov = vec![vec![0.0; n]; n];
        for &v in self.dag.topological_order() {
            let (intercept, weights, sd) = match &self.cpds[v] {
                Cpd::Linear(l) => match l.noise {
                    crate::cpd::NoiseModel::Gaussian { sd } => {
                        (l.intercept, l.weights.clone(), sd)
                    }
                    _ => return Err(NetworkError::NotLinearGaussian { vertex: v }),
                },
                Cpd::Deterministic(_) => {
                    let (intercept, weights) = self.cpds[v]
                        .mean_affine()
                        .ok_or(NetworkError::NotLinearGaussian { vertex: v })?;
                    (intercept, weights, 0.0)
                }
                _ => return Err(NetworkError::NotLinearGaussian { vertex: v }),
            };
            let parents = self.dag.parents(v);
            mean[v] = intercept
                + weights
                    .iter()
                    .zip(parents)
                    .map(|(w, &p)| w * mean[p])
                    .sum::<f64>();
            for u in 0..n {
                if u == v {
                    continue;
                }
                let c: f64 = weights
                    .iter()
                    .zip(parents)
                    .map(|(w, &p)| w * cov[p][u])
                    .sum();
                cov[v][u] = c;
                cov[u][v] = c;
            }
            let mut var = sd * sd;
            for (wi, &pi) in weights.iter().zip(parents) {
                for (wj, &pj) in weights.iter().zip(parents) {
                    var += wi * wj * cov[pi][pj];
                }
            }
            cov[v][v] = var;
        }
        Ok(GaussianMoments { mean, covariance: cov })
    }

    /// True if every vertex is linear-Gaussian (or an affine deterministic
    /// function), i.e. [`Self::gaussian_joint_moments`] applies.
    pub fn is_linear_gaussian(&self) -> bool {
        self.gaussian_joint_moments().is_ok()
    }

    /// Expresses `E[X_target | X_S = x_S]` as an affine map over the
    /// conditioned set `S`, for networks whose unconditioned ancestors of
    /// `target` all have affine conditional means. `S` must be ancestrally
    /// closed; substitution of conditional means is exact in that case
    /// because each remaining noise term is independent of `X_S`.
    pub fn conditional_mean_response(
        &self,
        target: usize,
        conditioned: &BTreeSet<usize>,
    ) -> Result<AffineResponse, NetworkError> {
        if let Some(&v) = conditioned.iter().find(|&&v| {
            self.dag
                .parents(v)
                .iter()
                .any(|p| !conditioned.contains(p))
        }) {
            // Parents outside the set mean the set is not ancestrally closed.
            return Err(NetworkError::NotAncestrallyClosed { vertex: v });
        }
        let relevant = self.dag.ancestral_closure(target)?;
        let mut responses: BTreeMap<usize, AffineResponse> = BTreeMap::new();
        for &v in self.dag.topological_order() {
            if conditioned.contains(&v) {
                let mut weights = BTreeMap::new();
                weights.insert(v, 1.0);
                responses.insert(v, AffineResponse { intercept: 0.0, weights });
                continue;
            }
            // Vertices outside the target's ancestry never feed its mean, so
            // a non-affine CPD there must not fail the call.
            if !relevant.contains(&v) {
                continue;
            }
            let (intercept, weights) = self.cpds[v]
                .mean_affine()
                .ok_or(NetworkError::NotAffineMean { vertex: v })?;
            let mut acc = AffineResponse::constant(intercept);
            for (w, &p) in weights.iter().zip(self.dag.parents(v)) {
                let parent_resp = &responses[&p];
                acc.intercept += w * parent_resp.intercept;
                for (&cv, pw) in &parent_resp.weights {
                    *acc.weights.entry(cv).or_insert(0.0) += w * pw;
                }
            }
            responses.insert(v, acc);
        }
        responses
            .remove(&target)
            .ok_or(NetworkError::NotAffineMean { vertex: target })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpd::{Deterministic, FiniteDiscrete, GammaPrior, LinearCpd, NoiseModel};
    use crate::expr::parse_expression;

    /// X0 ~ N(1,1); X1 = 2·X0 + N(0,1); X2 = 3 − X1 + N(0, 0.25).
    fn lg_chain() -> BayesianNetwork {
        let dag = Dag::new(3, &[(0, 1), (1, 2)]).unwrap();
        BayesianNetwork::new(
            dag,
            vec![
                Cpd::Linear(LinearCpd::gaussian(1.0, vec![], 1.0).unwrap()),
                Cpd::Linear(LinearCpd::gaussian(0.0, vec![2.0], 1.0).unwrap()),
                Cpd::Linear(LinearCpd::gaussian(3.0, vec![-1.0], 0.5).unwrap()),
            ],
        )
        .unwrap()
    }

    #[test]
    fn cpd_parent_arity_is_validated() {
        let dag = Dag::new(2, &[(0, 1)]).unwrap();
        let err = BayesianNetwork::new(
            dag,
            vec![
                Cpd::Linear(LinearCpd::gaussian(0.0, vec![], 1.0).unwrap()),
                Cpd::Linear(LinearCpd::gaussian(0.0, vec![], 1.0).unwrap()),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, NetworkError::ParentCountMismatch { vertex: 1, .. }));
    }

    #[test]
    fn gaussian_moments_match_hand_computation() {
        let m = lg_chain().gaussian_joint_moments().unwrap();
        assert_eq!(m.means(), &[1.0, 2.0, 1.0]);
        assert!((m.covariance(0, 0) - 1.0).abs() < 1e-14);
        assert!((m.covariance(0, 1) - 2.0).abs() < 1e-14);
        assert!((m.covariance(1, 1) - 5.0).abs() < 1e-14);
        assert!((m.covariance(0, 2) + 2.0).abs() < 1e-14);
        assert!((m.covariance(1, 2) + 5.0).abs() < 1e-14);
        assert!((m.covariance(2, 2) - 5.25).abs() < 1e-14);
    }

    #[test]
    fn empirical_covariance_agrees_with_closed_form() {
        let net = lg_chain();
        let m = net.gaussian_joint_moments().unwrap();
        let n = 1_000_000usize;
        let samples = net.sample(n, 42);
        let nf = n as f64;
        let mut mean = [0.0f64; 3];
        for row in samples.iter_rows() {
            for (acc, &x) in mean.iter_mut().zip(row) {
                *acc += x;
            }
        }
        for acc in &mut mean {
            *acc /= nf;
        }
        for i in 0..3 {
            for j in i..3 {
                let mut cov = 0.0;
                for row in samples.iter_rows() {
                    cov += (row[i] - mean[i]) * (row[j] - mean[j]);
                }
                cov /= nf;
                let expected = m.covariance(i, j);
                // Large-sample standard error of a Gaussian covariance entry.
                let se = ((m.covariance(i, i) * m.covariance(j, j) + expected * expected) / nf)
                    .sqrt();
                assert!(
                    (cov - expected).abs() < 5.0 * se,
                    "cov[{i}][{j}] = {cov}, expected {expected} ± {}",
                    5.0 * se
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_stable() {
        let net = lg_chain();
        let a = net.sample(64, 7);
        let b = net.sample(64, 7);
        assert_eq!(a, b);
        let longer = net.sample(128, 7);
        for r in 0..64 {
            assert_eq!(a.row(r), longer.row(r), "row {r} changed when n grew");
        }
        let different = net.sample(64, 8);
        assert_ne!(a, different);
    }

    #[test]
    fn discrete_joint_density_sums_to_one() {
        // Three binary vertices: 0 → 1, (0,1) → 2.
        let dag = Dag::new(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let b = vec![0.0, 1.0];
        let net = BayesianNetwork::new(
            dag,
            vec![
                Cpd::Discrete(FiniteDiscrete::marginal(b.clone(), vec![0.4, 0.6]).unwrap()),
                Cpd::Discrete(
                    FiniteDiscrete::new(
                        b.clone(),
                        vec![b.clone()],
                        vec![vec![0.7, 0.3], vec![0.2, 0.8]],
                    )
                    .unwrap(),
                ),
                Cpd::Discrete(
                    FiniteDiscrete::new(
                        b.clone(),
                        vec![b.clone(), b.clone()],
                        vec![
                            vec![0.5, 0.5],
                            vec![0.1, 0.9],
                            vec![0.35, 0.65],
                            vec![0.8, 0.2],
                        ],
                    )
                    .unwrap(),
                ),
            ],
        )
        .unwrap();
        let mut total = 0.0;
        for x0 in [0.0, 1.0] {
            for x1 in [0.0, 1.0] {
                for x2 in [0.0, 1.0] {
                    total += net.joint_log_density(&[x0, x1, x2]).exp();
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-12, "total probability {total}");
    }

    #[test]
    fn deterministic_vertex_contributes_dirac_factor() {
        let dag = Dag::new(2, &[(0, 1)])
            .unwrap()
            .with_labels(vec![String::from("a"), String::from("b")])
            .unwrap();
        let net = BayesianNetwork::new(
            dag,
            vec![
                Cpd::Linear(LinearCpd::gaussian(0.0, vec![], 1.0).unwrap()),
                Cpd::Deterministic(
                    Deterministic::new(parse_expression("2 * a").unwrap(), vec!["a".into()])
                        .unwrap(),
                ),
            ],
        )
        .unwrap();
        let consistent = net.joint_log_density(&[0.5, 1.0]);
        let base = net.joint_log_density(&[0.5, 0.99]);
        assert!(consistent.is_finite());
        assert_eq!(base, f64::NEG_INFINITY);
        let samples = net.sample(16, 3);
        for row in samples.iter_rows() {
            assert_eq!(row[1], 2.0 * row[0]);
        }
    }

    #[test]
    fn discrete_child_requires_matching_parent_support() {
        let dag = Dag::new(2, &[(0, 1)]).unwrap();
        let err = BayesianNetwork::new(
            dag,
            vec![
                Cpd::Discrete(FiniteDiscrete::marginal(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()),
                Cpd::Discrete(
                    FiniteDiscrete::new(
                        vec![0.0, 1.0],
                        vec![vec![0.0, 2.0]], // wrong parent support
                        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                    )
                    .unwrap(),
                ),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, NetworkError::ParentSupportMismatch { vertex: 1, parent: 0 }));
    }

    #[test]
    fn conditional_mean_response_on_chain() {
        let net = lg_chain();
        let resp = net
            .conditional_mean_response(2, &BTreeSet::from([0]))
            .unwrap();
        // E[X2 | X0 = x] = 3 − (2x) = 3 − 2x.
        assert!((resp.intercept - 3.0).abs() < 1e-14);
        assert!((resp.weights[&0] + 2.0).abs() < 1e-14);
        assert!((resp.eval(&|_| 0.25) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn conditional_mean_response_requires_ancestral_closure() {
        let net = lg_chain();
        let err = net
            .conditional_mean_response(2, &BTreeSet::from([1]))
            .unwrap_err();
        assert!(matches!(err, NetworkError::NotAncestrallyClosed { vertex: 1 }));
    }

    #[test]
    fn mean_response_handles_non_gaussian_additive_noise() {
        let dag = Dag::new(2, &[(0, 1)]).unwrap();
        let net = BayesianNetwork::new(
            dag,
            vec![
                Cpd::Linear(LinearCpd {
                    intercept: 1.0,
                    weights: vec![],
                    noise: NoiseModel::two_point_mean_zero(0.5, 0.5).unwrap(),
                }),
                Cpd::Linear(LinearCpd::gaussian(0.0, vec![3.0], 1.0).unwrap()),
            ],
        )
        .unwrap();
        let resp = net
            .conditional_mean_response(1, &BTreeSet::new())
            .unwrap();
        assert!((resp.intercept - 3.0).abs() < 1e-14);
        assert!(resp.weights.is_empty());
    }

    #[test]
    fn gamma_vertex_is_not_linear_gaussian() {
        let dag = Dag::new(1, &[]).unwrap();
        let net = BayesianNetwork::new(
            dag,
            vec![Cpd::Gamma(GammaPrior::new(2.0, 1.0).unwrap())],
        )
        .unwrap();
        assert!(matches!(
            net.gaussian_joint_moments().unwrap_err(),
            NetworkError::NotLinearGaussian { vertex: 0 }
        ));
        assert!(!net.is_linear_gaussian());
    }

    #[test]
    fn clamped_sampling_pins_values() {
        let net = lg_chain();
        let clamped = BTreeMap::from([(0usize, 2.0f64)]);
        let samples = net.sample_clamped(&clamped, 32, 9);
        for row in samples.iter_rows() {
            assert_eq!(row[0], 2.0);
        }
        // Downstream values must respond to the clamp: E[X1 | X0=2] = 4.
        let mean1: f64 =
            samples.iter_rows().map(|r| r[1]).sum::<f64>() / samples.rows() as f64;
        assert!((mean1 - 4.0).abs() < 1.0);
    }
}
