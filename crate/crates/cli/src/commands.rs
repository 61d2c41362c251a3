//! The subcommands behind the `ambit` binary. Each one loads a model (a
//! JSON document or a named preset), resolves the quantity of interest and
//! any per-vertex radii, runs the corresponding core computation, and
//! emits a deterministic report (JSON, or CSV for `stress`).

use crate::model_doc::{
    self, document_from_network, parse_model, BudgetSource, BuiltModel, BuiltQoi, ModelDocError,
    ModelSpecDocument, BUILTIN_QOI_XSTAR,
};
use crate::report::{
    self, backend_name, error_json, render_json, AssessmentOut, CorrectionReport, Diagnostics,
    FailureOut, IndexPair, IndexRow, RecheckRow, Report,
};
use ambit_core::catalog::{
    build_preset, orr_optimal_binding_energy, orr_sensitivity_interval, CatalogError, OrrChannel,
    OrrParams, PRESET_NAMES,
};
use ambit_core::cpd::{Cpd, CpdError, KernelDensity, NoiseModel};
use ambit_core::divergence::{eta_from_samples, BudgetProvenance, DivergenceError, MisspecificationBudget};
use ambit_core::indices::{
    model_uncertainty_index, qoi_mean, sensitivity_index, IndexError, McConfig,
    QuantityOfInterest, SensitivityScope,
};
use ambit_core::network::{BayesianNetwork, NetworkError};
use ambit_core::workflow::{
    assess, correctability_check, rank_components, CorrectionCase, ToleranceMode, WorkflowError,
};
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Doc(#[from] ModelDocError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("unknown preset or missing file '{name}' (presets: {})", PRESET_NAMES.join(", "))]
    UnknownPreset { name: String },
    #[error("'{name}' is not a vertex of this model")]
    UnknownVertex { name: String },
    #[error("{0}")]
    UnsupportedQoi(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Cpd(#[from] CpdError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Doc(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Csv { .. } => "csv",
            CliError::Usage(_) => "usage",
            CliError::UnknownPreset { .. } => "unknown-preset",
            CliError::UnknownVertex { .. } => "unknown-vertex",
            CliError::UnsupportedQoi(_) => "unsupported-qoi",
            CliError::Index(_) => "index-error",
            CliError::Workflow(_) => "workflow-error",
            CliError::Catalog(_) => "catalog-error",
            CliError::Network(_) => "network-error",
            CliError::Divergence(_) => "divergence-error",
            CliError::Cpd(_) => "invalid-cpd-params",
        }
    }
}

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

/// Worst-case model-uncertainty bounds for Bayesian networks.
#[derive(Debug, Parser)]
#[command(name = "ambit", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Whole-model worst-case bias of the QoI mean at one radius.
    Index(IndexArgs),
    /// Per-vertex worst-case bias for a single named vertex.
    Sensitivity(SensitivityArgs),
    /// Rank all budgeted vertices by their worst-case increase.
    Rank(RankArgs),
    /// Sweep the radius and emit a CSV curve of the two-sided bound.
    Stress(StressArgs),
    /// Refit a model document's parametric conditionals from CSV data.
    Fit(FitArgs),
    /// Compare a corrected model against the baseline: which per-vertex
    /// indices carry over and which must be recomputed.
    CorrectCheck(CorrectCheckArgs),
    /// List presets, or emit one as a model document.
    Catalog(CatalogArgs),
}

#[derive(Debug, Args)]
pub struct ModelOpts {
    /// Path to a model document, or a preset name.
    #[arg(long)]
    pub model: String,
    /// QoI override: a preset QoI name, a vertex name, a builtin name, or
    /// an expression over vertex names.
    #[arg(long)]
    pub qoi: Option<String>,
}

#[derive(Debug, Args)]
pub struct McOpts {
    /// RNG seed for every sampling backend.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Forward-sample count for Monte-Carlo backends.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Cap on worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TolOpts {
    /// Tolerance the worst-case increase is assessed against.
    #[arg(long)]
    pub tol: Option<f64>,
    /// "relative" (default; index / |QoI mean|) or "absolute".
    #[arg(long = "tol-mode", value_parser = ["absolute", "relative"])]
    pub tol_mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct EtaOpts {
    /// One radius for every stochastic vertex.
    #[arg(long = "eta-uniform")]
    pub eta_uniform: Option<f64>,
    /// JSON file mapping vertex names to radii.
    #[arg(long = "eta-file")]
    pub eta_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub model: ModelOpts,
    /// KL radius of the whole-model ambiguity set.
    #[arg(long)]
    pub eta: f64,
    #[command(flatten)]
    pub mc: McOpts,
    #[command(flatten)]
    pub tol: TolOpts,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub model: ModelOpts,
    /// Vertex whose conditional is perturbed.
    #[arg(long)]
    pub vertex: String,
    /// KL radius for that vertex's ambiguity set.
    #[arg(long)]
    pub eta: f64,
    /// "free" (vertex may rewire to any ancestors) or "fixed".
    #[arg(long, default_value = "free", value_parser = ["free", "fixed"])]
    pub scope: String,
    #[command(flatten)]
    pub mc: McOpts,
    #[command(flatten)]
    pub tol: TolOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub model: ModelOpts,
    #[command(flatten)]
    pub eta: EtaOpts,
    #[command(flatten)]
    pub mc: McOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StressArgs {
    #[command(flatten)]
    pub model: ModelOpts,
    /// Sweep this vertex's radius; whole model when omitted.
    #[arg(long)]
    pub vertex: Option<String>,
    /// Largest radius of the sweep.
    #[arg(long = "eta-max", default_value_t = 1.0)]
    pub eta_max: f64,
    /// Number of steps between 0 and --eta-max.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value = "free", value_parser = ["free", "fixed"])]
    pub scope: String,
    #[command(flatten)]
    pub mc: McOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Template model: structure and kinds are kept, parameters refit.
    #[command(flatten)]
    pub model: ModelOpts,
    /// CSV of joint observations; header row names the vertices.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrectCheckArgs {
    #[command(flatten)]
    pub model: ModelOpts,
    /// Corrected model document to compare against the baseline.
    #[arg(long)]
    pub corrected: Option<PathBuf>,
    /// In-place noise replacement NAME=gaussian:SD, NAME=kde:FILE, or
    /// NAME=two-point:SD[,P_HIGH].
    #[arg(long)]
    pub replace: Option<String>,
    #[command(flatten)]
    pub eta: EtaOpts,
    #[command(flatten)]
    pub mc: McOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CatalogArgs {
    /// Preset to emit as a model document; lists presets when omitted.
    pub name: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Model loading
// ---------------------------------------------------------------------------

/// What the QoI resolved to. The builtin descriptor-crossing quantity is
/// not a pointwise function of sample rows, so commands dispatch on it.
enum ResolvedQoi {
    Standard(QuantityOfInterest),
    XStar(Box<OrrParams>),
}

struct Loaded {
    network: BayesianNetwork,
    qoi: ResolvedQoi,
    qoi_desc: String,
    budgets: BTreeMap<usize, BudgetSource>,
    mc: McConfig,
    source: String,
    base_dir: PathBuf,
    preset_name: Option<&'static str>,
}

fn load(model: &ModelOpts, mc_opts: &McOpts) -> Result<Loaded, CliError> {
    let mut loaded = if let Some(&name) = PRESET_NAMES.iter().find(|&&p| p == model.model) {
        let preset = build_preset(name)?;
        let (qoi_name, qoi) = preset.qois.first().expect("presets ship a QoI").clone();
        Loaded {
            network: preset.network,
            qoi: ResolvedQoi::Standard(qoi),
            qoi_desc: qoi_name,
            budgets: BTreeMap::new(),
            mc: McConfig::default(),
            source: name.to_string(),
            base_dir: PathBuf::from("."),
            preset_name: Some(name),
        }
    } else {
        let path = Path::new(&model.model);
        let text = read_file(path)?;
        let doc = parse_model(&text)?;
        let built: BuiltModel = doc.build()?;
        let qoi = match built.qoi {
            BuiltQoi::Standard(q) => ResolvedQoi::Standard(q),
            BuiltQoi::Builtin(name) => {
                return Err(CliError::UnsupportedQoi(format!(
                    "builtin QoI '{name}' requires --model orr-tableB1"
                )))
            }
        };
        Loaded {
            network: built.network,
            qoi,
            qoi_desc: "document qoi".to_string(),
            budgets: built.budgets,
            mc: built.mc,
            source: model.model.clone(),
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
            preset_name: None,
        }
    };

    if let Some(request) = &model.qoi {
        let (qoi, desc) = resolve_qoi_request(&loaded, request)?;
        loaded.qoi = qoi;
        loaded.qoi_desc = desc;
    }
    if let Some(seed) = mc_opts.seed {
        loaded.mc.seed = seed;
    }
    if let Some(samples) = mc_opts.samples {
        loaded.mc.samples = samples;
    }
    Ok(loaded)
}

fn resolve_qoi_request(loaded: &Loaded, request: &str) -> Result<(ResolvedQoi, String), CliError> {
    if request == BUILTIN_QOI_XSTAR {
        if loaded.preset_name == Some("orr-tableB1") {
            return Ok((
                ResolvedQoi::XStar(Box::new(OrrParams::table_b1())),
                BUILTIN_QOI_XSTAR.to_string(),
            ));
        }
        return Err(CliError::UnsupportedQoi(
            "builtin QoI 'xstar' requires --model orr-tableB1".into(),
        ));
    }
    if let Some(name) = loaded.preset_name {
        let preset = build_preset(name)?;
        if let Some((_, qoi)) = preset.qois.iter().find(|(n, _)| n == request) {
            return Ok((ResolvedQoi::Standard(qoi.clone()), request.to_string()));
        }
    }
    if let Some(v) = loaded.network.dag().vertex_by_label(request) {
        return Ok((
            ResolvedQoi::Standard(QuantityOfInterest::value_of(v)),
            request.to_string(),
        ));
    }
    let expr = ambit_core::expr::parse_expression(request)
        .map_err(|source| ModelDocError::QoiExpression { source })?;
    let qoi = QuantityOfInterest::expression(expr, loaded.network.dag())
        .map_err(ModelDocError::from)?;
    Ok((ResolvedQoi::Standard(qoi), request.to_string()))
}

fn scope_of(name: &str) -> SensitivityScope {
    match name {
        "fixed" => SensitivityScope::FixedParents,
        _ => SensitivityScope::FreeParents,
    }
}

fn tolerance_mode(name: Option<&str>) -> ToleranceMode {
    match name {
        Some("absolute") => ToleranceMode::Absolute,
        _ => ToleranceMode::Relative,
    }
}

fn assessment_out(
    index: f64,
    mean: f64,
    tol: &TolOpts,
) -> Result<Option<AssessmentOut>, CliError> {
    let Some(tolerance) = tol.tol else { return Ok(None) };
    let mode = tolerance_mode(tol.tol_mode.as_deref());
    let outcome = assess(index, mean, tolerance, mode)?;
    Ok(Some(AssessmentOut {
        measured: outcome.measured,
        tolerance,
        mode: match mode {
            ToleranceMode::Absolute => "absolute".into(),
            ToleranceMode::Relative => "relative".into(),
        },
        pass: outcome.pass,
    }))
}

// ---------------------------------------------------------------------------
// Budget resolution
// ---------------------------------------------------------------------------

fn resolve_budget(loaded: &Loaded, eta: &EtaOpts) -> Result<MisspecificationBudget, CliError> {
    let mut budget = MisspecificationBudget::new();
    let stochastic = loaded.network.stochastic_vertices();

    if let Some(value) = eta.eta_uniform {
        if eta.eta_file.is_some() {
            return Err(CliError::Usage(
                "--eta-uniform and --eta-file are mutually exclusive".into(),
            ));
        }
        for &v in &stochastic {
            budget.set_vertex(v, value, BudgetProvenance::UserSet).map_err(DivergenceError::from)?;
        }
        return Ok(budget);
    }

    // Document budgets first, then per-vertex overrides from --eta-file.
    for (&v, source) in &loaded.budgets {
        match source {
            BudgetSource::Eta(value) => {
                budget
                    .set_vertex(v, *value, BudgetProvenance::UserSet)
                    .map_err(DivergenceError::from)?;
            }
            BudgetSource::Data { path, fit } => {
                let resolved = loaded.base_dir.join(path);
                let (headers, columns) = read_csv_columns(&resolved)?;
                let name = loaded.network.dag().label(v);
                let child = named_column(&headers, &columns, &name, &resolved)?;
                let parent_cols: Vec<&[f64]> = loaded
                    .network
                    .dag()
                    .parents(v)
                    .iter()
                    .map(|&p| {
                        named_column(&headers, &columns, &loaded.network.dag().label(p), &resolved)
                    })
                    .collect::<Result<_, _>>()?;
                let Cpd::Linear(modeled) = loaded.network.cpd(v) else {
                    return Err(CliError::Usage(format!(
                        "data-driven radius for '{name}' needs an additive-noise linear \
                         conditional; set its radius explicitly"
                    )));
                };
                let estimate = eta_from_samples(child, &parent_cols, modeled, *fit)?;
                budget
                    .set_vertex(v, estimate.eta, BudgetProvenance::DataEstimated)
                    .map_err(DivergenceError::from)?;
            }
        }
    }

    if let Some(file) = &eta.eta_file {
        let text = read_file(file)?;
        let map: BTreeMap<String, f64> =
            serde_json::from_str(&text).map_err(|e| CliError::Csv {
                path: file.display().to_string(),
                message: format!("expected a JSON object of vertex radii: {e}"),
            })?;
        for (name, value) in map {
            let v = loaded
                .network
                .dag()
                .vertex_by_label(&name)
                .ok_or(CliError::UnknownVertex { name: name.clone() })?;
            budget
                .set_vertex(v, value, BudgetProvenance::UserSet)
                .map_err(DivergenceError::from)?;
        }
    }

    Ok(budget)
}

fn named_column<'a>(
    headers: &[String],
    columns: &'a [Vec<f64>],
    name: &str,
    path: &Path,
) -> Result<&'a [f64], CliError> {
    headers
        .iter()
        .position(|h| h == name)
        .map(|i| columns[i].as_slice())
        .ok_or_else(|| CliError::Csv {
            path: path.display().to_string(),
            message: format!("no column named '{name}'"),
        })
}

// ---------------------------------------------------------------------------
// File plumbing
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| match source.kind() {
        std::io::ErrorKind::NotFound => CliError::UnknownPreset {
            name: path.display().to_string(),
        },
        _ => CliError::Io { path: path.display().to_string(), source },
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Reads a CSV with a header row of vertex names into per-column numeric
/// vectors. Rows with missing or non-numeric cells are rejected with their
/// 1-based data row number.
pub fn read_csv_columns(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let csv_err = |message: String| CliError::Csv {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let headers: Vec<String> =
        reader.headers().map_err(|e| csv_err(e.to_string()))?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(csv_err("empty header row".into()));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_err(format!("row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(csv_err(format!(
                "row {row}: expected {} cells, got {}",
                headers.len(),
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(csv_err(format!(
                    "row {row}: missing value in column '{}'",
                    headers[j]
                )));
            }
            let value: f64 = cell.parse().map_err(|_| {
                csv_err(format!(
                    "row {row}, column '{}': invalid number '{cell}'",
                    headers[j]
                ))
            })?;
            columns[j].push(value);
        }
    }
    Ok((headers, columns))
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = match &cli.command {
        Command::Index(a) => a.mc.threads,
        Command::Sensitivity(a) => a.mc.threads,
        Command::Rank(a) => a.mc.threads,
        Command::Stress(a) => a.mc.threads,
        Command::CorrectCheck(a) => a.mc.threads,
        Command::Fit(_) | Command::Catalog(_) => None,
    } {
        // First caller wins; a failure just means a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match cli.command {
        Command::Index(args) => run_index(args),
        Command::Sensitivity(args) => run_sensitivity(args),
        Command::Rank(args) => run_rank(args),
        Command::Stress(args) => run_stress(args),
        Command::Fit(args) => run_fit(args),
        Command::CorrectCheck(args) => run_correct_check(args),
        Command::Catalog(args) => run_catalog(args),
    }
}

fn diagnostics_for(loaded: &Loaded) -> Diagnostics {
    Diagnostics {
        model: loaded.source.clone(),
        qoi: loaded.qoi_desc.clone(),
        seed: loaded.mc.seed,
        samples: loaded.mc.samples,
        ..Diagnostics::default()
    }
}

fn run_index(args: IndexArgs) -> Result<(), CliError> {
    let loaded = load(&args.model, &args.mc)?;
    let ResolvedQoi::Standard(qoi) = &loaded.qoi else {
        return Err(CliError::UnsupportedQoi(
            "the builtin 'xstar' QoI supports sensitivity, rank, and stress".into(),
        ));
    };
    let result = model_uncertainty_index(&loaded.network, qoi, args.eta, &loaded.mc)?;
    let mean = qoi_mean(&loaded.network, qoi, &loaded.mc)?;
    let mut diagnostics = diagnostics_for(&loaded);
    diagnostics.assessment = assessment_out(result.worst_increase(), mean, &args.tol)?;
    let share = if result.worst_increase() > 0.0 { 1.0 } else { 0.0 };
    let report = Report {
        qoi_mean: mean,
        indices: vec![IndexRow::from_index("model".into(), args.eta, &result, share)],
        diagnostics,
    };
    emit(&args.out, &render_json(&report))
}

fn run_sensitivity(args: SensitivityArgs) -> Result<(), CliError> {
    let loaded = load(&args.model, &args.mc)?;
    let mut diagnostics = diagnostics_for(&loaded);
    let report = match &loaded.qoi {
        ResolvedQoi::Standard(qoi) => {
            let v = loaded
                .network
                .dag()
                .vertex_by_label(&args.vertex)
                .ok_or(CliError::UnknownVertex { name: args.vertex.clone() })?;
            let result = sensitivity_index(
                &loaded.network,
                qoi,
                v,
                args.eta,
                scope_of(&args.scope),
                &loaded.mc,
            )?;
            let mean = qoi_mean(&loaded.network, qoi, &loaded.mc)?;
            diagnostics.scope = Some(args.scope.clone());
            diagnostics.assessment = assessment_out(result.worst_increase(), mean, &args.tol)?;
            let share = if result.worst_increase() > 0.0 { 1.0 } else { 0.0 };
            Report {
                qoi_mean: mean,
                indices: vec![IndexRow::from_index(args.vertex.clone(), args.eta, &result, share)],
                diagnostics,
            }
        }
        ResolvedQoi::XStar(params) => {
            let channel = channel_by_label(&args.vertex)?;
            let interval = orr_sensitivity_interval(params, channel, args.eta)?;
            let mean = orr_optimal_binding_energy(params)?;
            diagnostics.assessment = assessment_out(interval.upper, mean, &args.tol)?;
            let share = if interval.upper > 0.0 { 1.0 } else { 0.0 };
            Report {
                qoi_mean: mean,
                indices: vec![IndexRow {
                    vertex: args.vertex.clone(),
                    eta: args.eta,
                    i_plus: interval.upper,
                    i_minus: interval.lower,
                    tight: true,
                    backend: "gaussian-closed-form".into(),
                    share,
                }],
                diagnostics,
            }
        }
    };
    emit(&args.out, &render_json(&report))
}

fn channel_by_label(name: &str) -> Result<OrrChannel, CliError> {
    OrrChannel::ALL
        .into_iter()
        .find(|c| c.label() == name)
        .ok_or(CliError::UnknownVertex { name: name.to_string() })
}

fn run_rank(args: RankArgs) -> Result<(), CliError> {
    let loaded = load(&args.model, &args.mc)?;
    let diagnostics = diagnostics_for(&loaded);
    let report = match &loaded.qoi {
        ResolvedQoi::Standard(qoi) => {
            let budget = resolve_budget(&loaded, &args.eta)?;
            let ranking = rank_components(&loaded.network, qoi, &budget, &loaded.mc)?;
            let mut diagnostics = diagnostics;
            diagnostics.failures = ranking
                .failures
                .iter()
                .map(|f| FailureOut {
                    vertex: loaded.network.dag().label(f.vertex),
                    error: f.error.to_string(),
                })
                .collect();
            Report {
                qoi_mean: ranking.qoi_mean,
                indices: ranking
                    .entries
                    .iter()
                    .map(|e| {
                        IndexRow::from_index(
                            loaded.network.dag().label(e.vertex),
                            e.eta,
                            &e.index,
                            e.share,
                        )
                    })
                    .collect(),
                diagnostics,
            }
        }
        ResolvedQoi::XStar(params) => {
            let budget = resolve_budget(&loaded, &args.eta)?;
            let mean = orr_optimal_binding_energy(params)?;
            let mut rows = Vec::new();
            for channel in OrrChannel::ALL {
                let vertex = channel.vertex();
                let Some(eta) = budget.vertex_eta(vertex) else { continue };
                let interval = orr_sensitivity_interval(params, channel, eta)?;
                rows.push((vertex, channel.label().to_string(), eta, interval));
            }
            if rows.is_empty() {
                return Err(CliError::Usage(
                    "rank --qoi xstar needs radii; pass --eta-uniform or --eta-file".into(),
                ));
            }
            rows.sort_by(|a, b| {
                b.3.upper
                    .partial_cmp(&a.3.upper)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            let total: f64 = rows.iter().map(|r| r.3.upper).sum();
            Report {
                qoi_mean: mean,
                indices: rows
                    .into_iter()
                    .map(|(_, label, eta, interval)| IndexRow {
                        vertex: label,
                        eta,
                        i_plus: interval.upper,
                        i_minus: interval.lower,
                        tight: true,
                        backend: "gaussian-closed-form".into(),
                        share: if total > 0.0 { interval.upper / total } else { 0.0 },
                    })
                    .collect(),
                diagnostics,
            }
        }
    };
    emit(&args.out, &render_json(&report))
}

fn run_stress(args: StressArgs) -> Result<(), CliError> {
    if !(args.eta_max > 0.0) || !args.eta_max.is_finite() {
        return Err(CliError::Usage(format!(
            "--eta-max must be positive and finite, got {}",
            args.eta_max
        )));
    }
    if args.points == 0 {
        return Err(CliError::Usage("--points must be at least 1".into()));
    }
    let loaded = load(&args.model, &args.mc)?;
    let mut lines = String::from("eta,i_plus,i_minus\n");
    for j in 0..=args.points {
        let eta = args.eta_max * j as f64 / args.points as f64;
        let (plus, minus) = match (&loaded.qoi, &args.vertex) {
            (ResolvedQoi::Standard(qoi), None) => {
                let r = model_uncertainty_index(&loaded.network, qoi, eta, &loaded.mc)?;
                (r.worst_increase(), r.worst_decrease())
            }
            (ResolvedQoi::Standard(qoi), Some(name)) => {
                let v = loaded
                    .network
                    .dag()
                    .vertex_by_label(name)
                    .ok_or(CliError::UnknownVertex { name: name.clone() })?;
                let r = sensitivity_index(
                    &loaded.network,
                    qoi,
                    v,
                    eta,
                    scope_of(&args.scope),
                    &loaded.mc,
                )?;
                (r.worst_increase(), r.worst_decrease())
            }
            (ResolvedQoi::XStar(params), Some(name)) => {
                let interval = orr_sensitivity_interval(params, channel_by_label(name)?, eta)?;
                (interval.upper, interval.lower)
            }
            (ResolvedQoi::XStar(_), None) => {
                return Err(CliError::Usage(
                    "stress --qoi xstar needs --vertex (one channel per sweep)".into(),
                ))
            }
        };
        lines.push_str(&format!("{eta},{plus},{minus}\n"));
    }
    emit(&args.out, &lines)
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn run_fit(args: FitArgs) -> Result<(), CliError> {
    let mut doc = template_document(&args.model.model)?;
    let (headers, columns) = read_csv_columns(&args.data)?;
    let column = |name: &str| -> Result<&[f64], CliError> {
        named_column(&headers, &columns, name, &args.data)
    };

    let mut notes = Vec::new();
    let vertices = doc.vertices.clone();
    for (i, vertex) in vertices.iter().enumerate() {
        match vertex.cpd.kind.as_str() {
            "linear-gaussian" => {
                let child = column(&vertex.name)?;
                let parents: Vec<&[f64]> = vertex
                    .parents
                    .iter()
                    .map(|p| column(p))
                    .collect::<Result<_, _>>()?;
                let (intercept, weights, sd) = ols_fit(child, &parents, &vertex.name)?;
                doc.vertices[i].cpd = model_doc::linear_gaussian_spec(intercept, weights, sd);
            }
            "gamma" => {
                let child = column(&vertex.name)?;
                let (shape, scale) = gamma_moment_fit(child, &vertex.name)?;
                doc.vertices[i].cpd = model_doc::gamma_spec(shape, scale);
            }
            other => notes.push(format!("vertex '{}' ({other}) left unchanged", vertex.name)),
        }
    }
    // Refitting must still produce a loadable document.
    doc.build()?;
    let _ = notes;
    emit(&args.out, &doc.to_json())
}

fn template_document(model: &str) -> Result<ModelSpecDocument, CliError> {
    if PRESET_NAMES.contains(&model) {
        let preset = build_preset(model)?;
        let (_, qoi) = preset.qois.first().expect("presets ship a QoI");
        return Ok(document_from_network(&preset.network, qoi));
    }
    let text = read_file(Path::new(model))?;
    Ok(parse_model(&text)?)
}

/// Ordinary least squares of `child` on an intercept plus `parents`,
/// returning the fitted intercept, weights, and residual standard
/// deviation (denominator `n - p - 1`).
fn ols_fit(
    child: &[f64],
    parents: &[&[f64]],
    name: &str,
) -> Result<(f64, Vec<f64>, f64), CliError> {
    let n = child.len();
    let p = parents.len();
    if n < p + 2 {
        return Err(CliError::Usage(format!(
            "vertex '{name}': {n} rows cannot identify {p} weight(s) plus noise"
        )));
    }
    for col in parents {
        debug_assert_eq!(col.len(), n, "read_csv_columns yields equal-length columns");
    }
    let d = p + 1;
    // Normal equations (XᵀX)β = Xᵀy with X = [1 | parents].
    let mut xtx = vec![vec![0.0f64; d]; d];
    let mut xty = vec![0.0f64; d];
    for r in 0..n {
        let mut row = Vec::with_capacity(d);
        row.push(1.0);
        row.extend(parents.iter().map(|c| c[r]));
        for a in 0..d {
            xty[a] += row[a] * child[r];
            for b in 0..d {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    let beta = solve_linear_system(&mut xtx, &mut xty).ok_or_else(|| {
        CliError::Usage(format!(
            "vertex '{name}': design matrix is singular (collinear or constant columns)"
        ))
    })?;
    let mut ssr = 0.0;
    for r in 0..n {
        let mut fitted = beta[0];
        for (k, col) in parents.iter().enumerate() {
            fitted += beta[k + 1] * col[r];
        }
        let e = child[r] - fitted;
        ssr += e * e;
    }
    let sd = (ssr / (n - d) as f64).sqrt();
    Ok((beta[0], beta[1..].to_vec(), sd))
}

/// Gaussian elimination with partial pivoting; consumes its inputs.
fn solve_linear_system(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn gamma_moment_fit(column: &[f64], name: &str) -> Result<(f64, f64), CliError> {
    let n = column.len();
    if n < 2 {
        return Err(CliError::Usage(format!(
            "vertex '{name}': need at least 2 rows to fit a gamma prior"
        )));
    }
    let mean = column.iter().sum::<f64>() / n as f64;
    let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let prior = ambit_core::cpd::GammaPrior::with_mean_and_sd(mean, var.sqrt()).map_err(|e| {
        CliError::Usage(format!("vertex '{name}': {e}"))
    })?;
    Ok((prior.shape, prior.scale))
}

// ---------------------------------------------------------------------------
// correct-check
// ---------------------------------------------------------------------------

fn run_correct_check(args: CorrectCheckArgs) -> Result<(), CliError> {
    let loaded = load(&args.model, &args.mc)?;
    let ResolvedQoi::Standard(qoi) = &loaded.qoi else {
        return Err(CliError::UnsupportedQoi(
            "correct-check works on the generic pipeline; pick a vertex QoI".into(),
        ));
    };
    let corrected = match (&args.corrected, &args.replace) {
        (Some(path), None) => {
            let text = read_file(path)?;
            parse_model(&text)?.build()?.network
        }
        (None, Some(spec)) => apply_replacement(&loaded, spec)?,
        _ => {
            return Err(CliError::Usage(
                "pass exactly one of --corrected FILE or --replace NAME=SPEC".into(),
            ))
        }
    };
    let budget = resolve_budget(&loaded, &args.eta)?;
    let outcome = correctability_check(&loaded.network, &corrected, qoi, &budget, &loaded.mc)?;

    let label = |v: usize| loaded.network.dag().label(v);
    let recheck_row = |entry: &ambit_core::workflow::RecheckEntry| RecheckRow {
        vertex: label(entry.vertex),
        eta: budget.vertex_eta(entry.vertex).unwrap_or(0.0),
        before: IndexPair::from_index(&entry.before),
        after: IndexPair::from_index(&entry.after),
        delta: entry.delta,
    };
    let report = CorrectionReport {
        case: match outcome.case {
            CorrectionCase::GaussianMeanZero => "gaussian-mean-zero",
            CorrectionCase::GeneralDescendants => "general-descendants",
            CorrectionCase::NoChange => "no-change",
        }
        .to_string(),
        corrected_vertex: outcome.corrected_vertex.map(label),
        unchanged: outcome.unchanged.iter().map(|&v| label(v)).collect(),
        recheck: outcome.recheck.iter().map(recheck_row).collect(),
        corrected: outcome.corrected.as_ref().map(recheck_row),
        diagnostics: diagnostics_for(&loaded),
    };
    emit(&args.out, &render_json(&report))
}

/// Bandwidth constant of the normal-reference rule.
const SILVERMAN_FACTOR: f64 = 1.06;

fn apply_replacement(loaded: &Loaded, spec: &str) -> Result<BayesianNetwork, CliError> {
    let usage = || {
        CliError::Usage(format!(
            "bad --replace '{spec}'; expected NAME=gaussian:SD, NAME=kde:FILE, \
             or NAME=two-point:SD[,P_HIGH]"
        ))
    };
    let (name, rest) = spec.split_once('=').ok_or_else(usage)?;
    let (kind, arg) = rest.split_once(':').ok_or_else(usage)?;
    let v = loaded
        .network
        .dag()
        .vertex_by_label(name)
        .ok_or(CliError::UnknownVertex { name: name.to_string() })?;
    let Cpd::Linear(cpd) = loaded.network.cpd(v) else {
        return Err(CliError::Usage(format!(
            "--replace targets additive-noise linear conditionals; '{name}' is not one"
        )));
    };

    let noise = match kind {
        "gaussian" => {
            let sd: f64 = arg.parse().map_err(|_| usage())?;
            NoiseModel::gaussian(sd)?
        }
        "two-point" => {
            let (sd_text, p_text) = match arg.split_once(',') {
                Some((s, p)) => (s, Some(p)),
                None => (arg, None),
            };
            let sd: f64 = sd_text.parse().map_err(|_| usage())?;
            let p_high: f64 = match p_text {
                Some(p) => p.parse().map_err(|_| usage())?,
                None => 0.5,
            };
            NoiseModel::two_point_mean_zero(sd, p_high)?
        }
        "kde" => {
            let path = loaded.base_dir.join(arg);
            let (headers, columns) = read_csv_columns(&path)?;
            let column = if headers.len() == 1 {
                &columns[0]
            } else {
                named_column(&headers, &columns, name, &path)?
            };
            let n = column.len();
            if n < 2 {
                return Err(CliError::Csv {
                    path: path.display().to_string(),
                    message: "need at least 2 residuals for a kernel fit".into(),
                });
            }
            // Center the residuals so the replacement is mean-zero, then
            // apply the normal-reference bandwidth.
            let mean = column.iter().sum::<f64>() / n as f64;
            let centered: Vec<f64> = column.iter().map(|x| x - mean).collect();
            let sd = (centered.iter().map(|x| x * x).sum::<f64>() / (n - 1) as f64).sqrt();
            let bandwidth = SILVERMAN_FACTOR * sd * (n as f64).powf(-0.2);
            NoiseModel::Kernel(KernelDensity::new(centered, bandwidth)?)
        }
        _ => return Err(usage()),
    };
    let replaced = Cpd::Linear(ambit_core::cpd::LinearCpd {
        intercept: cpd.intercept,
        weights: cpd.weights.clone(),
        noise,
    });
    Ok(loaded.network.with_cpd(v, replaced)?)
}

// ---------------------------------------------------------------------------
// catalog
// ---------------------------------------------------------------------------

fn run_catalog(args: CatalogArgs) -> Result<(), CliError> {
    match &args.name {
        None => {
            #[derive(serde::Serialize)]
            struct Entry {
                name: &'static str,
                description: &'static str,
                qois: Vec<String>,
            }
            let entries: Vec<Entry> = PRESET_NAMES
                .iter()
                .map(|&name| {
                    let preset = build_preset(name)?;
                    Ok(Entry {
                        name: preset.name,
                        description: preset.description,
                        qois: preset.qois.iter().map(|(n, _)| n.clone()).collect(),
                    })
                })
                .collect::<Result<_, CatalogError>>()?;
            emit(&args.out, &render_json(&entries))
        }
        Some(name) => {
            if !PRESET_NAMES.contains(&name.as_str()) {
                return Err(CliError::UnknownPreset { name: name.clone() });
            }
            let preset = build_preset(name)?;
            let (_, qoi) = preset.qois.first().expect("presets ship a QoI");
            let doc = document_from_network(&preset.network, qoi);
            emit(&args.out, &doc.to_json())
        }
    }
}

// Re-exported so integration tests can assert on backend labels without
// duplicating the mapping.
pub use report::backend_name as backend_label;
