//! The vertex-wise KL decomposition against direct joint divergences:
//! exhaustive enumeration for discrete pairs, and the multivariate normal
//! closed form for linear-Gaussian pairs.

mod common;

use ambit_core::cpd::{Cpd, FiniteDiscrete};
use ambit_core::divergence::{kl_chain_rule, ChainRuleOptions};
use ambit_core::graph::Dag;
use ambit_core::network::BayesianNetwork;
use common::{gaussian_joint_kl, joint_kl_by_enumeration};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn binary_net(edges: &[(usize, usize)], cpds: Vec<Cpd>) -> BayesianNetwork {
    let n = cpds.len();
    BayesianNetwork::new(Dag::new(n, edges).unwrap(), cpds).unwrap()
}

fn marginal(p0: f64) -> Cpd {
    Cpd::Discrete(FiniteDiscrete::marginal(vec![0.0, 1.0], vec![p0, 1.0 - p0]).unwrap())
}

fn table1(rows: [[f64; 2]; 2]) -> Cpd {
    Cpd::Discrete(
        FiniteDiscrete::new(
            vec![0.0, 1.0],
            vec![vec![0.0, 1.0]],
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap(),
    )
}

fn table2(rows: [[f64; 2]; 4]) -> Cpd {
    Cpd::Discrete(
        FiniteDiscrete::new(
            vec![0.0, 1.0],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap(),
    )
}

#[test]
fn discrete_decomposition_equals_joint_enumeration() {
    let pairs: Vec<(BayesianNetwork, BayesianNetwork)> = vec![
        // Single vertex.
        (
            binary_net(&[], vec![marginal(0.3)]),
            binary_net(&[], vec![marginal(0.6)]),
        ),
        // Chain vs chain.
        (
            binary_net(
                &[(0, 1), (1, 2)],
                vec![marginal(0.7), table1([[0.8, 0.2], [0.4, 0.6]]), table1([[0.9, 0.1], [0.2, 0.8]])],
            ),
            binary_net(
                &[(0, 1), (1, 2)],
                vec![marginal(0.5), table1([[0.6, 0.4], [0.3, 0.7]]), table1([[0.75, 0.25], [0.35, 0.65]])],
            ),
        ),
        // Fork vs fork.
        (
            binary_net(
                &[(0, 1), (0, 2)],
                vec![marginal(0.45), table1([[0.85, 0.15], [0.3, 0.7]]), table1([[0.6, 0.4], [0.1, 0.9]])],
            ),
            binary_net(
                &[(0, 1), (0, 2)],
                vec![marginal(0.55), table1([[0.7, 0.3], [0.25, 0.75]]), table1([[0.5, 0.5], [0.2, 0.8]])],
            ),
        ),
        // Collider vs collider.
        (
            binary_net(
                &[(0, 2), (1, 2)],
                vec![
                    marginal(0.55),
                    marginal(0.25),
                    table2([[0.95, 0.05], [0.5, 0.5], [0.35, 0.65], [0.05, 0.95]]),
                ],
            ),
            binary_net(
                &[(0, 2), (1, 2)],
                vec![
                    marginal(0.4),
                    marginal(0.45),
                    table2([[0.8, 0.2], [0.45, 0.55], [0.6, 0.4], [0.15, 0.85]]),
                ],
            ),
        ),
    ];

    for (i, (q, p)) in pairs.iter().enumerate() {
        let decomposed = kl_chain_rule(q, p, &ChainRuleOptions::default()).unwrap();
        assert!(!decomposed.support_violation);
        let direct = joint_kl_by_enumeration(q, p);
        assert!(
            (decomposed.total - direct).abs() < 1e-10,
            "pair {i}: chain rule {} vs enumeration {direct}",
            decomposed.total
        );
        let summed: f64 = decomposed.per_vertex.iter().map(|t| t.value).sum();
        assert!((summed - decomposed.total).abs() < 1e-12);
    }
}

#[test]
fn gaussian_decomposition_equals_the_normal_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for trial in 0..6 {
        let n = 3 + trial % 4;
        let q = common::random_linear_gaussian(&mut rng, n);
        // Same support everywhere; an independently drawn network on the
        // same vertex count gives a generic second argument.
        let p = common::random_linear_gaussian(&mut rng, n);

        let decomposed = kl_chain_rule(&q, &p, &ChainRuleOptions::default()).unwrap();
        assert!(!decomposed.support_violation);

        let mq = q.gaussian_joint_moments().unwrap();
        let mp = p.gaussian_joint_moments().unwrap();
        let mean_q: Vec<f64> = (0..n).map(|v| mq.mean(v)).collect();
        let mean_p: Vec<f64> = (0..n).map(|v| mp.mean(v)).collect();
        let cov = |m: &ambit_core::network::GaussianMoments| {
            (0..n)
                .map(|i| (0..n).map(|j| m.covariance(i, j)).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        let direct = gaussian_joint_kl(&mean_q, &cov(&mq), &mean_p, &cov(&mp));
        assert!(
            (decomposed.total - direct).abs() < 1e-9,
            "trial {trial}: chain rule {} vs closed form {direct}",
            decomposed.total
        );
    }
}
