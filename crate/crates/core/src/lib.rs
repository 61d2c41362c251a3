//! Robust uncertainty quantification for Bayesian networks.
//!
//! Given a Bayesian network `P` and a quantity of interest (QoI) `f`, this
//! crate computes worst-case bounds on how much the QoI expectation can move
//! when the model is replaced by any alternative `Q` within a
//! Kullback–Leibler ball — either around the whole joint law or around a
//! single vertex's conditional distribution. The per-vertex bounds act as
//! sensitivity indices: they rank which components of the model dominate the
//! overall uncertainty and therefore deserve better data or better physics.
//!
//! The main pieces:
//!
//! * [`graph`] — DAGs, topological order, ancestor sets, and the conditional
//!   independence test used for tightness certificates.
//! * [`cpd`] — conditional distribution families (linear-Gaussian and other
//!   additive-noise models, gamma priors, deterministic formulas, finite
//!   discrete tables) plus fitting from data.
//! * [`network`] — networks as DAG + CPDs: sampling, joint densities,
//!   closed-form Gaussian moments.
//! * [`divergence`] — KL divergences between distributions, data-driven
//!   misspecification budgets, and the chain-rule decomposition over
//!   vertices.
//! * [`tilt`] — the one-dimensional convex dual: cumulant generating
//!   functions, the robust-bound optimization in the tilt parameter, and
//!   explicit worst-case (exponentially tilted) distributions.
//! * [`indices`] — model-uncertainty and per-vertex sensitivity indices with
//!   Gaussian closed forms, Monte-Carlo backends, and tightness flags.
//! * [`workflow`] — ranking reports, tolerance assessments, and
//!   correctability checks for model-improvement loops.
//! * [`catalog`] — ready-made example networks: Markov chains, a
//!   Langmuir-adsorption surrogate, and an oxygen-reduction (ORR) catalysis
//!   volcano model.

pub mod catalog;
pub mod cpd;
pub mod divergence;
pub mod expr;
pub mod graph;
pub mod indices;
pub mod network;
pub mod tilt;
pub mod workflow;
