//! The one-dimensional robust-bound solver against independent oracles: an
//! exhaustive simplex-grid search over admissible distributions, and
//! explicit optimizer constructions whose radius and bias are re-measured
//! from scratch.

mod common;

use ambit_core::cpd::{Cpd, FiniteDiscrete, LinearCpd};
use ambit_core::graph::Dag;
use ambit_core::indices::{
    model_uncertainty_index, sensitivity_index, IndexBackend, McConfig, QuantityOfInterest,
    SensitivityScope,
};
use ambit_core::network::BayesianNetwork;
use ambit_core::tilt::{solve_index, BoundaryCase, DiscreteCgf};
use common::{discrete_kl, enumerate_joint, simplex_worst_case};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ETAS: [f64; 3] = [0.01, 0.1, 0.5];

fn two_atom_fixtures() -> Vec<(Vec<f64>, Vec<f64>)> {
    vec![
        (vec![0.0, 1.0], vec![0.5, 0.5]),
        (vec![0.0, 1.0], vec![0.7, 0.3]),
        (vec![0.0, 1.0], vec![0.99, 0.01]),
        (vec![-1.0, 2.5], vec![0.35, 0.65]),
        (vec![-3.0, 0.5], vec![0.9, 0.1]),
    ]
}

fn three_atom_fixtures() -> Vec<(Vec<f64>, Vec<f64>)> {
    vec![
        (vec![-1.0, 0.0, 2.0], vec![0.3, 0.4, 0.3]),
        (vec![0.0, 1.0, 4.0], vec![0.6, 0.35, 0.05]),
        (vec![-2.0, -0.5, 1.0], vec![0.2, 0.5, 0.3]),
    ]
}

#[test]
fn solver_matches_simplex_grid_on_two_atom_distributions() {
    for (values, probs) in two_atom_fixtures() {
        let handle = DiscreteCgf::new(&values, &probs).unwrap();
        for eta in ETAS {
            let sol = solve_index(&handle, eta).unwrap();
            let oracle = simplex_worst_case(&values, &probs, eta, 1e-3);
            assert!(
                (sol.value - oracle).abs() <= 1e-3,
                "values {values:?} probs {probs:?} eta {eta}: solver {} vs grid {oracle}",
                sol.value
            );
        }
    }
}

#[test]
fn solver_matches_simplex_grid_on_three_atom_distributions() {
    for (values, probs) in three_atom_fixtures() {
        let handle = DiscreteCgf::new(&values, &probs).unwrap();
        for eta in ETAS {
            let sol = solve_index(&handle, eta).unwrap();
            let oracle = simplex_worst_case(&values, &probs, eta, 1e-3);
            assert!(
                (sol.value - oracle).abs() <= 1e-3,
                "values {values:?} probs {probs:?} eta {eta}: solver {} vs grid {oracle}",
                sol.value
            );
        }
    }
}

/// Binary three-vertex fixtures: chain, fork, and collider.
fn binary_networks() -> Vec<BayesianNetwork> {
    let support = vec![0.0, 1.0];
    let marginal =
        |p0: f64| Cpd::Discrete(FiniteDiscrete::marginal(support.clone(), vec![p0, 1.0 - p0]).unwrap());
    let table1 = |rows: Vec<Vec<f64>>| {
        Cpd::Discrete(FiniteDiscrete::new(support.clone(), vec![support.clone()], rows).unwrap())
    };
    let table2 = |rows: Vec<Vec<f64>>| {
        Cpd::Discrete(
            FiniteDiscrete::new(support.clone(), vec![support.clone(), support.clone()], rows)
                .unwrap(),
        )
    };

    let chain = BayesianNetwork::new(
        Dag::new(3, &[(0, 1), (1, 2)]).unwrap(),
        vec![
            marginal(0.7),
            table1(vec![vec![0.8, 0.2], vec![0.4, 0.6]]),
            table1(vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
        ],
    )
    .unwrap();
    let fork = BayesianNetwork::new(
        Dag::new(3, &[(0, 1), (0, 2)]).unwrap(),
        vec![
            marginal(0.45),
            table1(vec![vec![0.85, 0.15], vec![0.3, 0.7]]),
            table1(vec![vec![0.6, 0.4], vec![0.1, 0.9]]),
        ],
    )
    .unwrap();
    let collider = BayesianNetwork::new(
        Dag::new(3, &[(0, 2), (1, 2)]).unwrap(),
        vec![
            marginal(0.55),
            marginal(0.25),
            table2(vec![
                vec![0.95, 0.05],
                vec![0.5, 0.5],
                vec![0.35, 0.65],
                vec![0.05, 0.95],
            ]),
        ],
    )
    .unwrap();
    vec![chain, fork, collider]
}

#[test]
fn whole_model_index_matches_grid_on_binary_networks() {
    for network in binary_networks() {
        let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
        // Collapse the joint to the QoI's two level sets; reweighting
        // within a level set is free, so the worst case over the joint
        // equals the worst case over this marginal.
        let mut probs = [0.0f64; 2];
        for (cfg, prob) in enumerate_joint(&network) {
            probs[cfg[2] as usize] += prob;
        }
        let values = vec![0.0, 1.0];
        for eta in ETAS {
            let res = model_uncertainty_index(&network, &qoi, eta, &McConfig::default()).unwrap();
            assert_eq!(res.backend, IndexBackend::ExhaustiveDiscrete);
            let oracle = simplex_worst_case(&values, &probs.to_vec(), eta, 1e-3);
            assert!(
                (res.worst_increase() - oracle).abs() <= 1e-3,
                "eta {eta}: index {} vs grid {oracle}",
                res.worst_increase()
            );
        }
    }
}

#[test]
fn per_vertex_index_matches_config_wise_grid_on_the_chain() {
    let chain = binary_networks().remove(0);
    let qoi = QuantityOfInterest::affine(2, 1.0, 0.0);
    let joint = enumerate_joint(&chain);

    // F(x1) = E[x2 | x1] from the joint, plus the parent-config weights
    // and conditional rows the per-configuration solves act on.
    let mean_given = |v: usize, x: f64| -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (cfg, prob) in &joint {
            if cfg[v] == x {
                num += prob * cfg[2];
                den += prob;
            }
        }
        num / den
    };

    for eta in ETAS {
        // Vertex 1: one solve per value of its parent x0, averaged with
        // the parent marginal.
        let f_values = vec![mean_given(1, 0.0), mean_given(1, 1.0)];
        let p0 = [0.7, 0.3];
        let rows = [[0.8, 0.2], [0.4, 0.6]];
        let mut oracle = 0.0;
        for (weight, row) in p0.iter().zip(rows.iter()) {
            oracle += weight * simplex_worst_case(&f_values, &row.to_vec(), eta, 1e-3);
        }
        let res = sensitivity_index(
            &chain,
            &qoi,
            1,
            eta,
            SensitivityScope::FixedParents,
            &McConfig::default(),
        )
        .unwrap();
        assert_eq!(res.backend, IndexBackend::ExhaustiveDiscrete);
        assert!(
            (res.worst_increase() - oracle).abs() <= 1e-3,
            "eta {eta}: index {} vs config-wise grid {oracle}",
            res.worst_increase()
        );
    }
}

#[test]
fn discrete_optimizers_achieve_their_radius_and_bias() {
    for (values, probs) in two_atom_fixtures().into_iter().chain(three_atom_fixtures()) {
        let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
        let handle = DiscreteCgf::new(&values, &probs).unwrap();
        for eta in ETAS {
            for (sign, sol) in [
                (1.0, solve_index(&handle, eta).unwrap()),
                (-1.0, solve_index(&handle.negated(), eta).unwrap()),
            ] {
                match sol.boundary {
                    BoundaryCase::Interior => {
                        let c = sol.tilt.expect("interior solutions carry a tilt");
                        let weights: Vec<f64> = centered
                            .iter()
                            .zip(&probs)
                            .map(|(&f, &p)| p * (sign * c * f).exp())
                            .collect();
                        let total: f64 = weights.iter().sum();
                        let q: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
                        let radius = discrete_kl(&q, &probs);
                        assert!(
                            (radius - eta).abs() < 1e-8,
                            "optimizer radius {radius} vs eta {eta}"
                        );
                        let bias: f64 = q
                            .iter()
                            .zip(&centered)
                            .map(|(&qi, &f)| qi * sign * f)
                            .sum();
                        assert!(
                            (bias - sol.value).abs() < 1e-8,
                            "optimizer bias {bias} vs index {}",
                            sol.value
                        );
                    }
                    BoundaryCase::EtaSaturatedEssSup => {
                        // All tilting budget exhausted: the bound is the
                        // best atom, achieved at a smaller radius.
                        let best = centered
                            .iter()
                            .map(|&f| sign * f)
                            .fold(f64::NEG_INFINITY, f64::max);
                        assert!((sol.value - best).abs() < 1e-12);
                        assert!(sol.achieved_eta <= eta + 1e-12);
                    }
                    other => panic!("unexpected boundary case {other:?}"),
                }
            }
        }
    }
}

#[test]
fn gaussian_optimizer_is_a_mean_shifted_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..5u64 {
        let network = common::random_linear_gaussian(&mut rng, 4 + (trial as usize % 3));
        let n = network.vertex_count();
        let target = n - 1;
        let slope = 1.5;
        let qoi = QuantityOfInterest::affine(target, slope, 0.0);
        let eta = 0.4;
        let res = model_uncertainty_index(&network, &qoi, eta, &McConfig::default()).unwrap();
        assert_eq!(res.backend, IndexBackend::GaussianClosedForm);
        let index = res.worst_increase();

        // Tilting a joint Gaussian by e^{c·f} shifts its mean by c·Σa and
        // keeps the covariance, so the optimizer is the same network with
        // per-vertex intercept shifts d_v = δ_v − Σ w_vj δ_parent(j).
        let moments = network.gaussian_joint_moments().unwrap();
        let sigma_f2 = slope * slope * moments.variance(target);
        let c = (2.0 * eta / sigma_f2).sqrt();
        let delta: Vec<f64> = (0..n)
            .map(|v| c * slope * moments.covariance(v, target))
            .collect();

        let mut shifted = network.clone();
        let mut kl = 0.0;
        for v in 0..n {
            let Cpd::Linear(cpd) = network.cpd(v) else {
                panic!("generator produces linear CPDs");
            };
            let parent_shift: f64 = network
                .dag()
                .parents(v)
                .iter()
                .zip(&cpd.weights)
                .map(|(&p, w)| w * delta[p])
                .sum();
            let d = delta[v] - parent_shift;
            let sd = cpd.noise.variance().sqrt();
            kl += d * d / (2.0 * sd * sd);
            let moved =
                LinearCpd::gaussian(cpd.intercept + d, cpd.weights.clone(), sd).unwrap();
            shifted = shifted.with_cpd(v, Cpd::Linear(moved)).unwrap();
        }
        assert!((kl - eta).abs() < 1e-8, "constructed radius {kl} vs eta {eta}");

        let shifted_moments = shifted.gaussian_joint_moments().unwrap();
        let exact_bias = slope * (shifted_moments.mean(target) - moments.mean(target));
        assert!(
            (exact_bias - index).abs() < 1e-9,
            "construction bias {exact_bias} vs index {index}"
        );

        // And the sampled mean of the shifted network agrees within
        // Monte-Carlo error.
        let samples = 200_000;
        let rows = shifted.sample(samples, 31 + trial);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for i in 0..rows.rows() {
            let f = slope * rows.row(i)[target];
            sum += f;
            sumsq += f * f;
        }
        let emp_mean = sum / samples as f64;
        let emp_sd = (sumsq / samples as f64 - emp_mean * emp_mean).sqrt();
        let se = emp_sd / (samples as f64).sqrt();
        let expected = slope * moments.mean(target) + index;
        assert!(
            (emp_mean - expected).abs() <= 3.0 * se,
            "sampled mean {emp_mean} vs expected {expected} (se {se})"
        );
    }
}
