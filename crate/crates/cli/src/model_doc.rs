//! The JSON model-document format: a declarative description of a network,
//! one quantity of interest, optional per-vertex radii (explicit or
//! data-file backed), and Monte-Carlo settings. Documents parse into
//! [`ModelSpecDocument`] values, validate against the declared graph, and
//! build into core networks; serialization is canonical (sorted object
//! keys, stable float formatting), so emit→parse→emit is byte-stable.
//!
//! ```json
//! {
//!   "version": "1",
//!   "vertices": [
//!     { "name": "x", "cpd": { "kind": "linear-gaussian", "intercept": 0.0, "sd": 1.0, "weights": [] } },
//!     { "name": "y", "parents": ["x"], "cpd": { "kind": "linear-gaussian", "intercept": 0.0, "sd": 0.5, "weights": [0.8] } }
//!   ],
//!   "qoi": { "kind": "affine", "vertex": "y" }
//! }
//! ```

use ambit_core::cpd::{
    Cpd, CpdError, Deterministic, FiniteDiscrete, GammaPrior, HistogramDensity, KernelDensity,
    LinearCpd, NoiseModel,
};
use ambit_core::expr::{parse_expression, ExprError};
use ambit_core::graph::{Dag, GraphError};
use ambit_core::indices::{IndexError, McConfig, QuantityOfInterest};
use ambit_core::network::{BayesianNetwork, NetworkError};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DOCUMENT_VERSION: &str = "1";

/// The only QoI that is not a pointwise function of a sample row: the
/// descriptor value where the two conditional-mean lines of the
/// `orr-tableB1` preset cross. Only that preset can evaluate it.
pub const BUILTIN_QOI_XSTAR: &str = "xstar";

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ModelDocError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unsupported document version {got:?} (expected {DOCUMENT_VERSION:?})")]
    UnsupportedVersion { got: String },
    #[error("duplicate vertex name '{name}'")]
    DuplicateVertex { name: String },
    #[error("vertex '{vertex}': unknown cpd kind '{kind}'")]
    UnknownCpdKind { vertex: String, kind: String },
    #[error("vertex '{vertex}': parent '{parent}' is not a declared vertex")]
    UnresolvedParent { vertex: String, parent: String },
    #[error("directed cycle detected: {}", cycle.join(" -> "))]
    CycleDetected { cycle: Vec<String> },
    #[error("vertex '{vertex}': {message}")]
    InvalidCpdParams { vertex: String, message: String },
    #[error("vertex '{vertex}': {source}")]
    Expression { vertex: String, source: ExprError },
    #[error("qoi: {message}")]
    InvalidQoi { message: String },
    #[error("qoi expression: {source}")]
    QoiExpression { source: ExprError },
    #[error("budget for '{vertex}': {message}")]
    InvalidBudget { vertex: String, message: String },
    #[error(transparent)]
    Cpd(#[from] CpdError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

impl ModelDocError {
    /// Stable machine-readable discriminator for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            ModelDocError::Syntax { .. } => "syntax-error",
            ModelDocError::UnsupportedVersion { .. } => "unsupported-version",
            ModelDocError::DuplicateVertex { .. } => "duplicate-vertex",
            ModelDocError::UnknownCpdKind { .. } => "unknown-cpd-kind",
            ModelDocError::UnresolvedParent { .. } => "unresolved-parent",
            ModelDocError::CycleDetected { .. } => "cycle-detected",
            ModelDocError::InvalidCpdParams { .. } => "invalid-cpd-params",
            ModelDocError::Expression { .. } => "expression-error",
            ModelDocError::InvalidQoi { .. } => "invalid-qoi",
            ModelDocError::QoiExpression { .. } => "expression-error",
            ModelDocError::InvalidBudget { .. } => "invalid-budget",
            ModelDocError::Cpd(_) => "invalid-cpd-params",
            ModelDocError::Graph(_) => "graph-error",
            ModelDocError::Network(_) => "network-error",
            ModelDocError::Index(_) => "index-error",
        }
    }
}

// ---------------------------------------------------------------------------
// Document schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpecDocument {
    pub version: String,
    pub vertices: Vec<VertexSpec>,
    pub qoi: QoiSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub budgets: BTreeMap<String, BudgetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    pub cpd: CpdSpec,
}

/// A conditional distribution as written in the document: an open tagged
/// union whose `kind` is matched by name so an unrecognized tag can be
/// reported as [`ModelDocError::UnknownCpdKind`] with the vertex it sits
/// on, rather than as a bare deserialization failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpdSpec {
    pub kind: String,
    #[serde(flatten)]
    pub params: Map<String, Value>,
}

pub const CPD_KINDS: [&str; 5] =
    ["linear-gaussian", "linear", "gamma", "deterministic", "discrete"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QoiSpec {
    /// `slope · vertex + offset`.
    Affine {
        vertex: String,
        #[serde(default = "one")]
        slope: f64,
        #[serde(default)]
        offset: f64,
    },
    /// An expression over vertex names.
    Expression { expr: String },
    /// A named derived quantity; see [`BUILTIN_QOI_XSTAR`].
    Builtin { name: String },
}

fn one() -> f64 {
    1.0
}

/// Per-vertex radius: either an explicit number or a pointer to held-out
/// observations from which the radius is estimated (CSV with a column per
/// vertex; `fit` selects the residual family, `bins` sizes a histogram
/// fit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BudgetSpec {
    Eta(f64),
    Data {
        data: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fit: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bins: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct McSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<usize>,
}

impl McSpec {
    pub fn to_config(&self) -> McConfig {
        let base = McConfig::default();
        McConfig {
            samples: self.samples.unwrap_or(base.samples),
            seed: self.seed.unwrap_or(base.seed),
            outer_samples: self.outer.unwrap_or(base.outer_samples),
            inner_samples: self.inner.unwrap_or(base.inner_samples),
        }
    }
}

// ---------------------------------------------------------------------------
// Typed CPD parameter payloads
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct LinearGaussianParams {
    #[serde(default)]
    intercept: f64,
    #[serde(default)]
    weights: Vec<f64>,
    sd: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinearParams {
    #[serde(default)]
    intercept: f64,
    #[serde(default)]
    weights: Vec<f64>,
    noise: NoiseSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum NoiseSpec {
    Gaussian { sd: f64 },
    TwoPoint { low: f64, high: f64, p_high: f64 },
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
    Kernel { points: Vec<f64>, bandwidth: f64 },
}

impl NoiseSpec {
    fn build(self) -> Result<NoiseModel, CpdError> {
        Ok(match self {
            NoiseSpec::Gaussian { sd } => NoiseModel::gaussian(sd)?,
            NoiseSpec::TwoPoint { low, high, p_high } => {
                // Re-validated by the variance call below; construct directly
                // so asymmetric (non-mean-zero) atoms are expressible.
                let model = NoiseModel::TwoPoint { low, high, p_high };
                if !(low < high) || !(p_high > 0.0 && p_high < 1.0) {
                    return Err(CpdError::InvalidParameter(format!(
                        "two-point noise needs low < high and p_high in (0,1), \
                         got low={low}, high={high}, p_high={p_high}"
                    )));
                }
                model
            }
            NoiseSpec::Histogram { edges, masses } => {
                NoiseModel::Histogram(HistogramDensity::new(edges, masses)?)
            }
            NoiseSpec::Kernel { points, bandwidth } => {
                NoiseModel::Kernel(KernelDensity::new(points, bandwidth)?)
            }
        })
    }

    fn from_model(noise: &NoiseModel) -> Self {
        match noise {
            NoiseModel::Gaussian { sd } => NoiseSpec::Gaussian { sd: *sd },
            NoiseModel::TwoPoint { low, high, p_high } => {
                NoiseSpec::TwoPoint { low: *low, high: *high, p_high: *p_high }
            }
            NoiseModel::Histogram(h) => NoiseSpec::Histogram {
                edges: h.edges().to_vec(),
                masses: h.masses().to_vec(),
            },
            NoiseModel::Kernel(k) => NoiseSpec::Kernel {
                points: k.points().to_vec(),
                bandwidth: k.bandwidth(),
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GammaParams {
    shape: f64,
    scale: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DeterministicParams {
    expr: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct DiscreteParams {
    support: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Parsing and validation
// ---------------------------------------------------------------------------

/// Parses and validates a model document. All structural problems —
/// unresolved parents, unknown CPD kinds, cycles — are reported with the
/// vertex (or cycle) they occur at; JSON-level problems carry line/column.
pub fn parse_model(text: &str) -> Result<ModelSpecDocument, ModelDocError> {
    let doc: ModelSpecDocument =
        serde_json::from_str(text).map_err(|e| ModelDocError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    doc.validate()?;
    Ok(doc)
}

impl ModelSpecDocument {
    /// Vertex names in declaration order.
    pub fn names(&self) -> Vec<String> {
        self.vertices.iter().map(|v| v.name.clone()).collect()
    }

    fn name_index(&self) -> BTreeMap<&str, usize> {
        self.vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), i))
            .collect()
    }

    /// Structural validation: version, unique names, resolvable parents,
    /// known CPD kinds, weight arity, acyclicity, QoI and budget
    /// references.
    pub fn validate(&self) -> Result<(), ModelDocError> {
        if self.version != DOCUMENT_VERSION {
            return Err(ModelDocError::UnsupportedVersion { got: self.version.clone() });
        }
        let mut seen = BTreeMap::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if seen.insert(v.name.as_str(), i).is_some() {
                return Err(ModelDocError::DuplicateVertex { name: v.name.clone() });
            }
        }
        let index = self.name_index();
        let mut edges = Vec::new();
        for (child, v) in self.vertices.iter().enumerate() {
            for parent in &v.parents {
                match index.get(parent.as_str()) {
                    Some(&p) => edges.push((p, child)),
                    None => {
                        return Err(ModelDocError::UnresolvedParent {
                            vertex: v.name.clone(),
                            parent: parent.clone(),
                        })
                    }
                }
            }
            if !CPD_KINDS.contains(&v.cpd.kind.as_str()) {
                return Err(ModelDocError::UnknownCpdKind {
                    vertex: v.name.clone(),
                    kind: v.cpd.kind.clone(),
                });
            }
            self.check_arity(v)?;
        }
        if let Err(GraphError::CycleDetected(cycle)) = Dag::new(self.vertices.len(), &edges) {
            return Err(ModelDocError::CycleDetected {
                cycle: cycle.iter().map(|&v| self.vertices[v].name.clone()).collect(),
            });
        }
        self.validate_qoi(&index)?;
        for name in self.budgets.keys() {
            if !index.contains_key(name.as_str()) {
                return Err(ModelDocError::InvalidBudget {
                    vertex: name.clone(),
                    message: "not a declared vertex".into(),
                });
            }
        }
        Ok(())
    }

    fn check_arity(&self, v: &VertexSpec) -> Result<(), ModelDocError> {
        let declared = v.parents.len();
        let weights_len = |params: &Map<String, Value>| {
            params.get("weights").and_then(Value::as_array).map(|w| w.len()).unwrap_or(0)
        };
        let mismatch = match v.cpd.kind.as_str() {
            "linear-gaussian" | "linear" => {
                let got = weights_len(&v.cpd.params);
                (got != declared).then(|| format!("{got} weight(s) for {declared} parent(s)"))
            }
            "gamma" => (declared != 0)
                .then(|| format!("gamma priors are parentless, got {declared} parent(s)")),
            _ => None,
        };
        match mismatch {
            Some(message) => Err(ModelDocError::InvalidCpdParams { vertex: v.name.clone(), message }),
            None => Ok(()),
        }
    }

    fn validate_qoi(&self, index: &BTreeMap<&str, usize>) -> Result<(), ModelDocError> {
        match &self.qoi {
            QoiSpec::Affine { vertex, slope, .. } => {
                if !index.contains_key(vertex.as_str()) {
                    return Err(ModelDocError::InvalidQoi {
                        message: format!("'{vertex}' is not a declared vertex"),
                    });
                }
                if !slope.is_finite() {
                    return Err(ModelDocError::InvalidQoi {
                        message: format!("slope must be finite, got {slope}"),
                    });
                }
            }
            QoiSpec::Expression { expr } => {
                let parsed =
                    parse_expression(expr).map_err(|source| ModelDocError::QoiExpression { source })?;
                for var in parsed.variables() {
                    if !index.contains_key(var) {
                        return Err(ModelDocError::InvalidQoi {
                            message: format!("expression reads '{var}', which is not a vertex"),
                        });
                    }
                }
            }
            QoiSpec::Builtin { name } => {
                if name != BUILTIN_QOI_XSTAR {
                    return Err(ModelDocError::InvalidQoi {
                        message: format!(
                            "unknown builtin '{name}' (available: {BUILTIN_QOI_XSTAR})"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    /// Builds the network, QoI, budget sources, and Monte-Carlo settings.
    pub fn build(&self) -> Result<BuiltModel, ModelDocError> {
        self.validate()?;
        let index = self.name_index();
        let mut edges = Vec::new();
        for (child, v) in self.vertices.iter().enumerate() {
            for parent in &v.parents {
                edges.push((index[parent.as_str()], child));
            }
        }
        let dag = Dag::new(self.vertices.len(), &edges)?
            .with_labels(self.names())?;

        let mut cpds = Vec::with_capacity(self.vertices.len());
        for v in &self.vertices {
            cpds.push(self.build_cpd(v, &index)?);
        }
        let network = BayesianNetwork::new(dag, cpds)?;

        let qoi = match &self.qoi {
            QoiSpec::Affine { vertex, slope, offset } => BuiltQoi::Standard(
                QuantityOfInterest::affine(index[vertex.as_str()], *slope, *offset),
            ),
            QoiSpec::Expression { expr } => {
                let parsed =
                    parse_expression(expr).map_err(|source| ModelDocError::QoiExpression { source })?;
                BuiltQoi::Standard(QuantityOfInterest::expression(parsed, network.dag())?)
            }
            QoiSpec::Builtin { name } => BuiltQoi::Builtin(name.clone()),
        };

        let mut budgets = BTreeMap::new();
        for (name, spec) in &self.budgets {
            let v = index[name.as_str()];
            let source = match spec {
                BudgetSpec::Eta(eta) => {
                    if !eta.is_finite() || *eta < 0.0 {
                        return Err(ModelDocError::InvalidBudget {
                            vertex: name.clone(),
                            message: format!("radius must be finite and non-negative, got {eta}"),
                        });
                    }
                    BudgetSource::Eta(*eta)
                }
                BudgetSpec::Data { data, fit, bins } => BudgetSource::Data {
                    path: data.clone(),
                    fit: parse_residual_fit(name, fit.as_deref(), *bins)?,
                },
            };
            budgets.insert(v, source);
        }

        Ok(BuiltModel {
            network,
            qoi,
            budgets,
            mc: self.mc.clone().unwrap_or_default().to_config(),
        })
    }

    fn build_cpd(
        &self,
        v: &VertexSpec,
        index: &BTreeMap<&str, usize>,
    ) -> Result<Cpd, ModelDocError> {
        let bad = |message: String| ModelDocError::InvalidCpdParams {
            vertex: v.name.clone(),
            message,
        };
        let params = Value::Object(v.cpd.params.clone());
        match v.cpd.kind.as_str() {
            "linear-gaussian" => {
                let p: LinearGaussianParams =
                    serde_json::from_value(params).map_err(|e| bad(e.to_string()))?;
                Ok(Cpd::Linear(
                    LinearCpd::gaussian(p.intercept, p.weights, p.sd)
                        .map_err(|e| bad(e.to_string()))?,
                ))
            }
            "linear" => {
                let p: LinearParams =
                    serde_json::from_value(params).map_err(|e| bad(e.to_string()))?;
                let noise = p.noise.build().map_err(|e| bad(e.to_string()))?;
                Ok(Cpd::Linear(LinearCpd {
                    intercept: p.intercept,
                    weights: p.weights,
                    noise,
                }))
            }
            "gamma" => {
                let p: GammaParams =
                    serde_json::from_value(params).map_err(|e| bad(e.to_string()))?;
                Ok(Cpd::Gamma(
                    GammaPrior::new(p.shape, p.scale).map_err(|e| bad(e.to_string()))?,
                ))
            }
            "deterministic" => {
                let p: DeterministicParams =
                    serde_json::from_value(params).map_err(|e| bad(e.to_string()))?;
                let expr = parse_expression(&p.expr).map_err(|source| {
                    ModelDocError::Expression { vertex: v.name.clone(), source }
                })?;
                Ok(Cpd::Deterministic(
                    Deterministic::new(expr, v.parents.clone())
                        .map_err(|e| bad(e.to_string()))?,
                ))
            }
            "discrete" => {
                let p: DiscreteParams =
                    serde_json::from_value(params).map_err(|e| bad(e.to_string()))?;
                let mut parent_supports = Vec::with_capacity(v.parents.len());
                for parent in &v.parents {
                    let spec = &self.vertices[index[parent.as_str()]];
                    let support = spec
                        .cpd
                        .params
                        .get("support")
                        .and_then(Value::as_array)
                        .filter(|_| spec.cpd.kind == "discrete")
                        .ok_or_else(|| bad(format!("parent '{parent}' is not discrete")))?;
                    parent_supports.push(
                        support
                            .iter()
                            .map(|x| x.as_f64().ok_or_else(|| bad("non-numeric support".into())))
                            .collect::<Result<Vec<f64>, _>>()?,
                    );
                }
                Ok(Cpd::Discrete(
                    FiniteDiscrete::new(p.support, parent_supports, p.rows)
                        .map_err(|e| bad(e.to_string()))?,
                ))
            }
            other => Err(ModelDocError::UnknownCpdKind {
                vertex: v.name.clone(),
                kind: other.to_string(),
            }),
        }
    }

    /// Canonical serialization: two-space pretty JSON with a trailing
    /// newline; object keys inside CPD payloads are sorted. Emitting,
    /// parsing, and emitting again reproduces the bytes exactly.
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("schema types serialize");
        out.push('\n');
        out
    }
}

fn parse_residual_fit(
    vertex: &str,
    fit: Option<&str>,
    bins: Option<usize>,
) -> Result<ambit_core::divergence::ResidualFit, ModelDocError> {
    use ambit_core::divergence::ResidualFit;
    match fit.unwrap_or("gaussian") {
        "gaussian" => Ok(ResidualFit::Gaussian),
        "kernel" => Ok(ResidualFit::Kernel),
        "histogram" => Ok(ResidualFit::Histogram { bins: bins.unwrap_or(16) }),
        other => Err(ModelDocError::InvalidBudget {
            vertex: vertex.to_string(),
            message: format!("unknown residual fit '{other}' (gaussian, histogram, kernel)"),
        }),
    }
}

// ---------------------------------------------------------------------------
// Built artifacts
// ---------------------------------------------------------------------------

/// What a document's `qoi` field resolved to.
#[derive(Debug, Clone)]
pub enum BuiltQoi {
    Standard(QuantityOfInterest),
    /// A named derived quantity the command layer must interpret.
    Builtin(String),
}

/// Where a vertex's radius comes from.
#[derive(Debug, Clone)]
pub enum BudgetSource {
    Eta(f64),
    Data { path: String, fit: ambit_core::divergence::ResidualFit },
}

/// A document realized as core objects, ready for index computations.
#[derive(Debug)]
pub struct BuiltModel {
    pub network: BayesianNetwork,
    pub qoi: BuiltQoi,
    pub budgets: BTreeMap<usize, BudgetSource>,
    pub mc: McConfig,
}

// ---------------------------------------------------------------------------
// Network → document
// ---------------------------------------------------------------------------

/// Renders a core network (with labeled vertices) back into document form,
/// for preset export. The QoI must be expressible in the document schema.
pub fn document_from_network(
    network: &BayesianNetwork,
    qoi: &QuantityOfInterest,
) -> ModelSpecDocument {
    let dag = network.dag();
    let vertices = (0..network.vertex_count())
        .map(|v| VertexSpec {
            name: dag.label(v),
            parents: dag.parents(v).iter().map(|&p| dag.label(p)).collect(),
            cpd: cpd_to_spec(network.cpd(v)),
        })
        .collect();
    ModelSpecDocument {
        version: DOCUMENT_VERSION.to_string(),
        vertices,
        qoi: qoi_to_spec(qoi, network),
        budgets: BTreeMap::new(),
        mc: None,
    }
}

fn params_of<T: Serialize>(value: &T) -> Map<String, Value> {
    match serde_json::to_value(value).expect("parameter structs serialize") {
        Value::Object(map) => map,
        _ => unreachable!("parameter structs serialize to objects"),
    }
}

fn cpd_to_spec(cpd: &Cpd) -> CpdSpec {
    match cpd {
        Cpd::Linear(l) => match &l.noise {
            NoiseModel::Gaussian { sd } => CpdSpec {
                kind: "linear-gaussian".into(),
                params: params_of(&LinearGaussianParams {
                    intercept: l.intercept,
                    weights: l.weights.clone(),
                    sd: *sd,
                }),
            },
            other => CpdSpec {
                kind: "linear".into(),
                params: params_of(&LinearParams {
                    intercept: l.intercept,
                    weights: l.weights.clone(),
                    noise: NoiseSpec::from_model(other),
                }),
            },
        },
        Cpd::Gamma(g) => CpdSpec {
            kind: "gamma".into(),
            params: params_of(&GammaParams { shape: g.shape, scale: g.scale }),
        },
        Cpd::Deterministic(d) => CpdSpec {
            kind: "deterministic".into(),
            params: params_of(&DeterministicParams { expr: d.expr().to_string() }),
        },
        Cpd::Discrete(d) => CpdSpec {
            kind: "discrete".into(),
            params: params_of(&DiscreteParams {
                support: d.support().to_vec(),
                rows: d.rows().to_vec(),
            }),
        },
    }
}

fn qoi_to_spec(qoi: &QuantityOfInterest, network: &BayesianNetwork) -> QoiSpec {
    use ambit_core::indices::QoiForm;
    match qoi.form() {
        QoiForm::Affine { vertex, slope, offset } => QoiSpec::Affine {
            vertex: network.dag().label(*vertex),
            slope: *slope,
            offset: *offset,
        },
        QoiForm::Expression { expr, .. } => QoiSpec::Expression { expr: expr.to_string() },
    }
}
