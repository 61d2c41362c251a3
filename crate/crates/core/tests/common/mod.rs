//! Shared fixtures and independent oracles for the integration tests:
//! random model generators, a Runge–Kutta–Fehlberg integrator, an
//! exhaustive simplex-grid worst-case search, joint enumeration of
//! discrete networks, and dense linear algebra small enough to hand-roll.
#![allow(dead_code)]

use ambit_core::catalog::LangmuirParams;
use ambit_core::cpd::{Cpd, FiniteDiscrete, LinearCpd};
use ambit_core::graph::Dag;
use ambit_core::network::BayesianNetwork;
use rand::Rng;

/// Random linear-Gaussian network on `n` vertices: a connected spine
/// `0 → 1 → … → n−1` plus random extra forward edges, with weights in
/// ±[0.3, 1.5), intercepts in ±2, and noise sds in [0.3, 1.2).
pub fn random_linear_gaussian<R: Rng>(rng: &mut R, n: usize) -> BayesianNetwork {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (v - 1, v)).collect();
    for u in 0..n {
        for v in (u + 2)..n {
            if rng.gen_bool(0.3) {
                edges.push((u, v));
            }
        }
    }
    let dag = Dag::new(n, &edges).unwrap();
    let cpds = (0..n)
        .map(|v| {
            let parents = dag.parents(v).len();
            let weights = (0..parents)
                .map(|_| {
                    let w = rng.gen_range(0.3..1.5);
                    if rng.gen_bool(0.5) {
                        -w
                    } else {
                        w
                    }
                })
                .collect();
            let intercept = rng.gen_range(-2.0..2.0);
            let sd = rng.gen_range(0.3..1.2);
            Cpd::Linear(LinearCpd::gaussian(intercept, weights, sd).unwrap())
        })
        .collect();
    BayesianNetwork::new(dag, cpds).unwrap()
}

/// Random connected DAG with mixed conditionals (Gaussian roots and
/// links), for structural tests that only need shape plus a sampler.
pub fn random_dag_edges<R: Rng>(rng: &mut R, n: usize) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for v in 1..n {
        let parent = rng.gen_range(0..v);
        edges.push((parent, v));
        for u in 0..v {
            if u != parent && rng.gen_bool(0.2) {
                edges.push((u, v));
            }
        }
    }
    edges
}

// ---------------------------------------------------------------------------
// Adaptive ODE integration (Runge–Kutta–Fehlberg 4(5))
// ---------------------------------------------------------------------------

/// Integrates `dy/dt = f(y)` from `t = 0` to `t_end` with adaptive step
/// control at local tolerance `tol` per unit step.
pub fn rkf45<F: Fn(&[f64; 2]) -> [f64; 2]>(
    f: F,
    mut y: [f64; 2],
    t_end: f64,
    tol: f64,
) -> [f64; 2] {
    let mut t = 0.0;
    let mut h = 1e-4;
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        let k1 = f(&y);
        let y2 = [y[0] + h * 0.25 * k1[0], y[1] + h * 0.25 * k1[1]];
        let k2 = f(&y2);
        let y3 = [
            y[0] + h * (3.0 / 32.0 * k1[0] + 9.0 / 32.0 * k2[0]),
            y[1] + h * (3.0 / 32.0 * k1[1] + 9.0 / 32.0 * k2[1]),
        ];
        let k3 = f(&y3);
        let y4 = [
            y[0] + h * (1932.0 * k1[0] - 7200.0 * k2[0] + 7296.0 * k3[0]) / 2197.0,
            y[1] + h * (1932.0 * k1[1] - 7200.0 * k2[1] + 7296.0 * k3[1]) / 2197.0,
        ];
        let k4 = f(&y4);
        let y5 = [
            y[0]
                + h * (439.0 / 216.0 * k1[0] - 8.0 * k2[0] + 3680.0 / 513.0 * k3[0]
                    - 845.0 / 4104.0 * k4[0]),
            y[1]
                + h * (439.0 / 216.0 * k1[1] - 8.0 * k2[1] + 3680.0 / 513.0 * k3[1]
                    - 845.0 / 4104.0 * k4[1]),
        ];
        let k5 = f(&y5);
        let y6 = [
            y[0]
                + h * (-8.0 / 27.0 * k1[0] + 2.0 * k2[0] - 3544.0 / 2565.0 * k3[0]
                    + 1859.0 / 4104.0 * k4[0]
                    - 11.0 / 40.0 * k5[0]),
            y[1]
                + h * (-8.0 / 27.0 * k1[1] + 2.0 * k2[1] - 3544.0 / 2565.0 * k3[1]
                    + 1859.0 / 4104.0 * k4[1]
                    - 11.0 / 40.0 * k5[1]),
        ];
        let k6 = f(&y6);

        let mut fourth = [0.0; 2];
        let mut fifth = [0.0; 2];
        let mut err: f64 = 0.0;
        for i in 0..2 {
            fourth[i] = y[i]
                + h * (25.0 / 216.0 * k1[i] + 1408.0 / 2565.0 * k3[i]
                    + 2197.0 / 4104.0 * k4[i]
                    - 0.2 * k5[i]);
            fifth[i] = y[i]
                + h * (16.0 / 135.0 * k1[i] + 6656.0 / 12825.0 * k3[i]
                    + 28561.0 / 56430.0 * k4[i]
                    - 9.0 / 50.0 * k5[i]
                    + 2.0 / 55.0 * k6[i]);
            err = err.max((fifth[i] - fourth[i]).abs());
        }

        let tolerance = tol * h.max(1e-12);
        if err <= tolerance || h <= 1e-12 {
            t += h;
            y = fifth;
        }
        let scale = if err > 0.0 {
            0.9 * (tolerance / err).powf(0.2)
        } else {
            4.0
        };
        h = (h * scale.clamp(0.2, 4.0)).min(t_end - t + 1e-30).max(1e-12);
    }
    y
}

/// Surface coverages obtained by integrating the adsorption/desorption
/// rate equations to `t_end` (desorption rates set to one, adsorption
/// rates to the equilibrium constants, so detailed balance matches the
/// closed-form isotherm).
pub fn langmuir_coverages_by_ode(
    binding_h: f64,
    binding_o: f64,
    params: &LangmuirParams,
    t_end: f64,
) -> (f64, f64) {
    let k_h = params.equilibrium_constant(binding_h);
    let k_o = params.equilibrium_constant(binding_o);
    let p_h = params.pressure_h2;
    let p_o = params.pressure_o2;
    let rates = move |y: &[f64; 2]| {
        let free = (1.0 - y[0] - y[1]).max(0.0);
        [
            k_h * p_h * free * free - y[0] * y[0],
            k_o * p_o * free * free - y[1] * y[1],
        ]
    };
    let end = rkf45(rates, [0.0, 0.0], t_end, 1e-12);
    (end[0], end[1])
}

// ---------------------------------------------------------------------------
// Exhaustive simplex-grid worst case
// ---------------------------------------------------------------------------

/// KL divergence of one finite pmf from another over a shared support
/// (`∞` when `q` puts mass where `p` has none).
pub fn discrete_kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .map(|(&qi, &pi)| {
            if qi <= 0.0 {
                0.0
            } else if pi <= 0.0 {
                f64::INFINITY
            } else {
                qi * (qi / pi).ln()
            }
        })
        .sum()
}

/// Worst-case increase of `E[values]` over every pmf on the same support
/// with `KL(q‖p) ≤ eta`, found by exhaustive grid search (coarse sweep of
/// the whole simplex, then a fine sweep around the coarse argmax so the
/// oracle error is far below the comparison tolerance). Supports two or
/// three atoms.
pub fn simplex_worst_case(values: &[f64], probs: &[f64], eta: f64, coarse: f64) -> f64 {
    let baseline: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
    match values.len() {
        2 => {
            let sweep = |lo: f64, hi: f64, step: f64| -> (f64, f64) {
                let n = ((hi - lo) / step).round() as usize;
                let mut best = (0.0f64, probs[0]);
                for i in 0..=n {
                    let q0 = (lo + i as f64 * step).clamp(0.0, 1.0);
                    let q = [q0, 1.0 - q0];
                    if discrete_kl(&q, probs) <= eta {
                        let gain = q[0] * values[0] + q[1] * values[1] - baseline;
                        if gain > best.0 {
                            best = (gain, q0);
                        }
                    }
                }
                best
            };
            let (_, at) = sweep(0.0, 1.0, coarse);
            let fine = coarse * 1e-3;
            let (gain, _) = sweep((at - 2.0 * coarse).max(0.0), (at + 2.0 * coarse).min(1.0), fine);
            gain
        }
        3 => {
            let sweep = |lo0: f64, hi0: f64, lo1: f64, hi1: f64, step: f64| -> (f64, f64, f64) {
                let n0 = ((hi0 - lo0) / step).round() as usize;
                let n1 = ((hi1 - lo1) / step).round() as usize;
                let mut best = (0.0f64, probs[0], probs[1]);
                for i in 0..=n0 {
                    let q0 = (lo0 + i as f64 * step).clamp(0.0, 1.0);
                    for j in 0..=n1 {
                        let q1 = (lo1 + j as f64 * step).clamp(0.0, 1.0);
                        if q0 + q1 > 1.0 {
                            break;
                        }
                        let q = [q0, q1, 1.0 - q0 - q1];
                        if discrete_kl(&q, probs) <= eta {
                            let gain = q[0] * values[0] + q[1] * values[1] + q[2] * values[2]
                                - baseline;
                            if gain > best.0 {
                                best = (gain, q0, q1);
                            }
                        }
                    }
                }
                best
            };
            let (_, a0, a1) = sweep(0.0, 1.0, 0.0, 1.0, coarse);
            let fine = coarse * 1e-2;
            let (gain, _, _) = sweep(
                (a0 - 2.0 * coarse).max(0.0),
                (a0 + 2.0 * coarse).min(1.0),
                (a1 - 2.0 * coarse).max(0.0),
                (a1 + 2.0 * coarse).min(1.0),
                fine,
            );
            gain
        }
        m => panic!("grid oracle supports two or three atoms, got {m}"),
    }
}

// ---------------------------------------------------------------------------
// Discrete joint enumeration
// ---------------------------------------------------------------------------

/// Every joint configuration of an all-discrete network with its
/// probability, in row-buffer form.
pub fn enumerate_joint(network: &BayesianNetwork) -> Vec<(Vec<f64>, f64)> {
    let n = network.vertex_count();
    let discretes: Vec<&FiniteDiscrete> = (0..n)
        .map(|v| match network.cpd(v) {
            Cpd::Discrete(d) => d,
            other => panic!("vertex {v} is not discrete: {other:?}"),
        })
        .collect();
    let mut out = Vec::new();
    let mut buffer = vec![0.0; n];
    fn recurse(
        network: &BayesianNetwork,
        discretes: &[&FiniteDiscrete],
        buffer: &mut Vec<f64>,
        v: usize,
        prob: f64,
        out: &mut Vec<(Vec<f64>, f64)>,
    ) {
        if v == discretes.len() {
            out.push((buffer.clone(), prob));
            return;
        }
        let parent_values: Vec<f64> = network
            .dag()
            .parents(v)
            .iter()
            .map(|&p| buffer[p])
            .collect();
        let row = discretes[v]
            .row_for_values(&parent_values)
            .expect("parent values drawn from their supports");
        let support = discretes[v].support().to_vec();
        for (idx, &x) in support.iter().enumerate() {
            buffer[v] = x;
            recurse(network, discretes, buffer, v + 1, prob * row[idx], out);
        }
    }
    recurse(network, &discretes, &mut buffer, 0, 1.0, &mut out);
    out
}

/// Direct joint KL of one all-discrete network from another by exhaustive
/// summation over configurations.
pub fn joint_kl_by_enumeration(q: &BayesianNetwork, p: &BayesianNetwork) -> f64 {
    let q_joint = enumerate_joint(q);
    let p_joint = enumerate_joint(p);
    q_joint
        .iter()
        .zip(&p_joint)
        .map(|((q_cfg, q_prob), (p_cfg, p_prob))| {
            assert_eq!(q_cfg, p_cfg, "enumeration order must agree");
            if *q_prob <= 0.0 {
                0.0
            } else {
                q_prob * (q_prob / p_prob).ln()
            }
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Small dense linear algebra
// ---------------------------------------------------------------------------

/// Inverse and determinant by Gauss–Jordan elimination with partial
/// pivoting; sized for the handful-of-vertices joints in these tests.
pub fn invert_with_det(matrix: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            panic!("singular matrix in test oracle");
        }
        if pivot != col {
            a.swap(pivot, col);
            inv.swap(pivot, col);
            det = -det;
        }
        let diag = a[col][col];
        det *= diag;
        for j in 0..n {
            a[col][j] /= diag;
            inv[col][j] /= diag;
        }
        for i in 0..n {
            if i != col {
                let factor = a[i][col];
                for j in 0..n {
                    a[i][j] -= factor * a[col][j];
                    inv[i][j] -= factor * inv[col][j];
                }
            }
        }
    }
    (inv, det)
}

/// Closed-form KL divergence `KL(Q‖P)` of two non-degenerate joint
/// Gaussians given as (mean, covariance) pairs.
pub fn gaussian_joint_kl(
    mean_q: &[f64],
    cov_q: &[Vec<f64>],
    mean_p: &[f64],
    cov_p: &[Vec<f64>],
) -> f64 {
    let n = mean_q.len();
    let (p_inv, det_p) = invert_with_det(cov_p);
    let (_, det_q) = invert_with_det(cov_q);
    let mut trace = 0.0;
    for i in 0..n {
        for k in 0..n {
            trace += p_inv[i][k] * cov_q[k][i];
        }
    }
    let diff: Vec<f64> = (0..n).map(|i| mean_p[i] - mean_q[i]).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += diff[i] * p_inv[i][j] * diff[j];
        }
    }
    0.5 * (trace + quad - n as f64 + (det_p / det_q).ln())
}
