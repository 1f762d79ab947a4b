//! Configuration loading, checkpoint persistence, frontier CSV export, and
//! market-returns ingestion for the mean-variance problem.
//!
//! Everything human-facing is JSON (configs, checkpoints, problem files) or
//! CSV (frontier tables, loss histories, price inputs). Checkpoints
//! round-trip bit-exactly: floats are serialized in shortest-exact form.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontier::FrontierPoint;
use crate::linalg::{self, DenseMatrix};
use crate::network::{
    FeasiblePointSource, NetworkArchitecture, NetworkError, ParameterSet, TerminalActivation,
};
use crate::problem::{ProblemDescriptor, ProblemError, ProblemSpec, ScalarizationWeight};
use crate::training::{
    sample_scalarizations, EtaSetting, LossBreakdown, LossKind, SamplingMode, TrainConfig,
    TrainError,
};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure on {path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}, column {column}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        detail: String,
    },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("checkpoint format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("shape mismatch in checkpoint: {0}")]
    ShapeMismatch(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid data: {0}")]
    Data(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

fn read_file(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    fs::write(path, contents).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        detail: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

/// Terminal activation as written in config files; problem-dependent pieces
/// (Slater fallback, null-space basis) are attached during resolution.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalConfig {
    Identity,
    Relu,
    Softplus,
    NormalizedRelu,
    Projection {
        #[serde(default = "default_projection_tol")]
        tol: f64,
        #[serde(default)]
        pre_relu: bool,
    },
    DualNullspace {
        #[serde(default = "default_dual_margin")]
        margin: f64,
    },
}

fn default_projection_tol() -> f64 {
    5e-5
}

fn default_dual_margin() -> f64 {
    5e-3
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub hidden_widths: Vec<usize>,
    pub terminal: TerminalConfig,
    /// Raw output count override. For a primal network with fewer outputs
    /// than decision variables, the last output is replicated across the
    /// remaining variables.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_eta")]
    pub eta: EtaSetting,
    /// Augmentation weight; defaults to the problem's choice (0 for strictly
    /// convex problems, 1e-4 for linear ones).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "default_cs_tolerance")]
    pub cs_tolerance: f64,
    pub k: usize,
    pub sampling: SamplingMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_loss_kind")]
    pub loss_kind: LossKind,
}

fn default_learning_rate() -> f64 {
    1e-4
}

fn default_eta() -> EtaSetting {
    EtaSetting::Auto
}

fn default_cs_tolerance() -> f64 {
    5e-5
}

fn default_loss_kind() -> LossKind {
    LossKind::Kkt
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemDescriptor,
    pub primal_arch: ArchConfig,
    pub dual_arch: ArchConfig,
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<TestSection>,
}

/// Parses and validates a config file. Unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<Config, IoError> {
    let text = read_file(path)?;
    let config: Config = parse_json(path, &text)?;
    validate_config(&config)?;
    Ok(config)
}

fn validate_config(config: &Config) -> Result<(), IoError> {
    if !(config.train.learning_rate > 0.0) {
        return Err(IoError::Schema("train.learning_rate must be positive".into()));
    }
    if let Some(delta) = config.train.delta {
        if !(0.0..1.0).contains(&delta) {
            return Err(IoError::Schema("train.delta must lie in [0, 1)".into()));
        }
    }
    if config.train.cs_tolerance < 0.0 {
        return Err(IoError::Schema("train.cs_tolerance must be nonnegative".into()));
    }
    if config.train.k == 0 {
        return Err(IoError::Schema("train.k must be at least 1".into()));
    }
    if config.primal_arch.hidden_widths.is_empty() || config.dual_arch.hidden_widths.is_empty() {
        return Err(IoError::Schema("networks need at least one hidden layer".into()));
    }
    if let Some(test) = &config.test {
        let chosen = [
            test.grid_size.is_some(),
            test.samples.is_some(),
            test.weights_file.is_some(),
        ]
        .iter()
        .filter(|v| **v)
        .count();
        if chosen != 1 {
            return Err(IoError::Schema(
                "test section must set exactly one of grid_size, samples, weights_file".into(),
            ));
        }
    }
    Ok(())
}

/// Fully constructed objects for a run.
pub struct ResolvedSetup {
    pub problem: ProblemSpec,
    pub primal_arch: NetworkArchitecture,
    pub dual_arch: NetworkArchitecture,
    pub train: TrainConfig,
    pub test: Option<TestSection>,
}

pub fn resolve_config(config: &Config) -> Result<ResolvedSetup, IoError> {
    let problem = config.problem.build()?;
    let primal_arch = resolve_arch(&config.primal_arch, &problem, NetworkRole::Primal)?;
    let dual_arch = resolve_arch(&config.dual_arch, &problem, NetworkRole::Dual)?;
    let train = TrainConfig {
        epochs: config.train.epochs,
        learning_rate: config.train.learning_rate,
        eta: config.train.eta,
        delta: config.train.delta.unwrap_or_else(|| problem.default_delta()),
        cs_tolerance: config.train.cs_tolerance,
        k: config.train.k,
        sampling: config.train.sampling.clone(),
        seed: config.train.seed,
        loss_kind: config.train.loss_kind,
    };
    Ok(ResolvedSetup {
        problem,
        primal_arch,
        dual_arch,
        train,
        test: config.test.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NetworkRole {
    Primal,
    Dual,
}

fn resolve_arch(
    arch: &ArchConfig,
    problem: &ProblemSpec,
    role: NetworkRole,
) -> Result<NetworkArchitecture, IoError> {
    let p = problem.objective_dim();
    let n = problem.decision_dim();
    let m = problem.constraint_dim();

    let terminal = match (&arch.terminal, role) {
        (TerminalConfig::Identity, _) => TerminalActivation::Identity,
        (TerminalConfig::Relu, _) => TerminalActivation::Relu,
        (TerminalConfig::Softplus, _) => TerminalActivation::SoftPlus,
        (TerminalConfig::NormalizedRelu, NetworkRole::Primal) => TerminalActivation::NormalizedRelu {
            fallback: problem.slater_point().to_vec(),
        },
        (TerminalConfig::NormalizedRelu, NetworkRole::Dual) => {
            return Err(IoError::Schema(
                "normalized_relu is a primal terminal".into(),
            ))
        }
        (TerminalConfig::Projection { tol, pre_relu }, NetworkRole::Primal) => {
            let margin = problem
                .g_at_slater()
                .iter()
                .fold(f64::INFINITY, |a, g| a.min(-g));
            if !(*tol > 0.0 && *tol < margin) {
                return Err(IoError::Schema(format!(
                    "projection tol {tol} must lie in (0, {margin:.3e})"
                )));
            }
            TerminalActivation::PrimalProjection {
                tol: *tol,
                pre_relu: *pre_relu,
            }
        }
        (TerminalConfig::Projection { .. }, NetworkRole::Dual) => {
            return Err(IoError::Schema(
                "projection is a primal terminal; duals use relu, softplus, or dual_nullspace"
                    .into(),
            ))
        }
        (TerminalConfig::DualNullspace { margin }, NetworkRole::Dual) => {
            let data = problem.lvop_data().ok_or_else(|| {
                IoError::Schema(format!(
                    "dual_nullspace requires a linear problem, {} is not one",
                    problem.name()
                ))
            })?;
            if !(*margin > 0.0) {
                return Err(IoError::Schema("dual_nullspace margin must be positive".into()));
            }
            let at = data.a.transpose();
            let rank_tol = 1e-10 * at.max_abs_entry().max(1.0);
            let basis = linalg::null_space_basis(&at, rank_tol).map_err(ProblemError::from)?;
            TerminalActivation::DualNullspaceProjection {
                basis,
                source: FeasiblePointSource::LinearProgram {
                    a: data.a.clone(),
                    c: data.c.clone(),
                    margin: *margin,
                },
            }
        }
        (TerminalConfig::DualNullspace { .. }, NetworkRole::Primal) => {
            return Err(IoError::Schema("dual_nullspace is a dual terminal".into()))
        }
    };

    let target = match (&terminal, role) {
        (TerminalActivation::DualNullspaceProjection { basis, .. }, _) => basis.cols(),
        (_, NetworkRole::Primal) => n,
        (_, NetworkRole::Dual) => m,
    };
    let raw_outputs = arch.outputs.unwrap_or(target);
    let mut net = NetworkArchitecture::new(p, &arch.hidden_widths, raw_outputs, terminal);
    if raw_outputs != target {
        if role != NetworkRole::Primal || raw_outputs > target {
            return Err(IoError::Schema(format!(
                "network outputs {raw_outputs} incompatible with required {target}"
            )));
        }
        // Tail replication: the last output drives all remaining variables.
        let map: Vec<usize> = (0..target).map(|i| i.min(raw_outputs - 1)).collect();
        net.output_replication = Some(map);
    }
    net.validate()?;
    Ok(net)
}

/// Test scalarizations from a test section: a regular grid, uniform samples,
/// or an explicit JSON weights file.
pub fn resolve_test_weights(
    test: &TestSection,
    problem: &ProblemSpec,
) -> Result<Vec<ScalarizationWeight>, IoError> {
    let p = problem.objective_dim();
    let floor = problem.scalarization_floor();
    if let Some(k) = test.grid_size {
        return Ok(sample_scalarizations(p, k, &SamplingMode::Grid, floor, 0)?);
    }
    if let Some(k) = test.samples {
        return Ok(sample_scalarizations(
            p,
            k,
            &SamplingMode::Uniform,
            floor,
            test.seed,
        )?);
    }
    if let Some(path) = &test.weights_file {
        let text = read_file(path)?;
        let raw: Vec<Vec<f64>> = parse_json(path, &text)?;
        let k = raw.len();
        return Ok(sample_scalarizations(
            p,
            k,
            &SamplingMode::Explicit { weights: raw },
            floor,
            0,
        )?);
    }
    Err(IoError::Schema("empty test section".into()))
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub problem: ProblemDescriptor,
    pub primal_arch: NetworkArchitecture,
    pub dual_arch: NetworkArchitecture,
    pub primal_params: ParameterSet,
    pub dual_params: ParameterSet,
    pub train: TrainConfig,
    pub epochs_trained: usize,
    pub final_loss: Option<LossBreakdown>,
    pub eta: f64,
    pub seed: u64,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), IoError> {
    let text = serde_json::to_string(checkpoint)
        .map_err(|e| IoError::Schema(format!("serialization failed: {e}")))?;
    write_file(path, &text)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let text = read_file(path)?;
    // Version gate before strict parsing, so version errors come out as such.
    #[derive(Deserialize)]
    struct VersionProbe {
        format_version: u32,
    }
    let probe: VersionProbe = parse_json(path, &text)?;
    if probe.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(IoError::VersionMismatch {
            found: probe.format_version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let checkpoint: Checkpoint = parse_json(path, &text)?;
    if !checkpoint.primal_params.matches(&checkpoint.primal_arch) {
        return Err(IoError::ShapeMismatch(
            "primal parameters do not fit the stored architecture".into(),
        ));
    }
    if !checkpoint.dual_params.matches(&checkpoint.dual_arch) {
        return Err(IoError::ShapeMismatch(
            "dual parameters do not fit the stored architecture".into(),
        ));
    }
    Ok(checkpoint)
}

// ---------------------------------------------------------------------------
// Frontier CSV
// ---------------------------------------------------------------------------

/// Writes one row per frontier point with columns
/// `w_1..w_P, f_1..f_P, dual, epsilon[, epsilon_realized]`.
pub fn export_frontier_csv(
    path: &Path,
    points: &[FrontierPoint],
    realized: Option<&[f64]>,
) -> Result<(), IoError> {
    if points.is_empty() {
        return Err(IoError::Data("no frontier points to export".into()));
    }
    if let Some(r) = realized {
        if r.len() != points.len() {
            return Err(IoError::Data(
                "realized error column length differs from point count".into(),
            ));
        }
    }
    let p = points[0].w.len();
    let mut out = String::new();
    for i in 1..=p {
        out.push_str(&format!("w_{i},"));
    }
    for i in 1..=p {
        out.push_str(&format!("f_{i},"));
    }
    out.push_str("dual,epsilon");
    if realized.is_some() {
        out.push_str(",epsilon_realized");
    }
    out.push('\n');
    for (idx, pt) in points.iter().enumerate() {
        let mut cols: Vec<String> = Vec::with_capacity(2 * p + 3);
        for v in pt.w.iter().chain(&pt.f) {
            cols.push(format!("{v:.16e}"));
        }
        cols.push(format!("{:.16e}", pt.dual));
        cols.push(format!("{:.16e}", pt.epsilon));
        if let Some(r) = realized {
            cols.push(format!("{:.16e}", r[idx]));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    write_file(path, &out)
}

/// Loss-history CSV: one row per epoch.
pub fn export_loss_history_csv(path: &Path, history: &[LossBreakdown]) -> Result<(), IoError> {
    let mut out = String::from("epoch,total,stationarity,complementary_slackness\n");
    for (i, lb) in history.iter().enumerate() {
        out.push_str(&format!(
            "{i},{:.16e},{:.16e},{:.16e}\n",
            lb.total, lb.stationarity, lb.complementary_slackness
        ));
    }
    write_file(path, &out)
}

// ---------------------------------------------------------------------------
// Returns ingestion
// ---------------------------------------------------------------------------

/// Mean/covariance data derived from a price history, already rescaled for
/// training (means ×100²/6, covariance ×100²).
#[derive(Debug, Clone)]
pub struct ReturnsDataset {
    pub assets: Vec<String>,
    pub log_returns: DenseMatrix,
    pub mean: Vec<f64>,
    pub covariance: DenseMatrix,
    pub dropped: Vec<String>,
}

impl ReturnsDataset {
    pub fn to_problem_descriptor(&self) -> ProblemDescriptor {
        let s = self.mean.len();
        ProblemDescriptor::MeanVariance {
            mean: self.mean.clone(),
            covariance: (0..s).map(|i| self.covariance.row(i).to_vec()).collect(),
        }
    }
}

const MEAN_SCALE: f64 = 100.0 * 100.0 / 6.0;
const COV_SCALE: f64 = 100.0 * 100.0;

/// Reads a price CSV (first column date, remaining columns per-asset prices,
/// rows in ascending date order) into scaled log-return statistics. Assets
/// with any missing value are dropped with a warning; non-positive or
/// non-numeric prices are errors.
pub fn ingest_returns(path: &Path) -> Result<ReturnsDataset, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => IoError::File {
                path: path.to_path_buf(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => IoError::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(IoError::Data(
            "prices CSV needs a date column plus at least one asset".into(),
        ));
    }
    let asset_names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); asset_names.len()];
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(IoError::Data(format!(
                "row {} has {} fields, header has {}",
                rows + 2,
                record.len(),
                headers.len()
            )));
        }
        for (j, field) in record.iter().skip(1).enumerate() {
            if field.is_empty() {
                columns[j].push(None);
                continue;
            }
            let value: f64 = field.parse().map_err(|_| {
                IoError::Data(format!(
                    "non-numeric price {field:?} for asset {} (row {})",
                    asset_names[j],
                    rows + 2
                ))
            })?;
            if !(value > 0.0) || !value.is_finite() {
                return Err(IoError::Data(format!(
                    "non-positive price {value} for asset {} (row {})",
                    asset_names[j],
                    rows + 2
                )));
            }
            columns[j].push(Some(value));
        }
        rows += 1;
    }
    if rows < 3 {
        return Err(IoError::Data(format!(
            "need at least 3 price rows, got {rows}"
        )));
    }

    let mut kept_names = Vec::new();
    let mut kept_columns: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for (name, column) in asset_names.iter().zip(columns) {
        if column.iter().all(Option::is_some) {
            kept_names.push(name.clone());
            kept_columns.push(column.into_iter().map(|v| v.expect("checked")).collect());
        } else {
            dropped.push(name.clone());
        }
    }
    if kept_columns.len() < 2 {
        return Err(IoError::Data(
            "fewer than 2 assets with complete price histories".into(),
        ));
    }

    let s = kept_columns.len();
    let t_returns = rows - 1;
    let mut log_returns = DenseMatrix::zeros(t_returns, s);
    for (j, column) in kept_columns.iter().enumerate() {
        for t in 0..t_returns {
            log_returns.set(t, j, (column[t + 1] / column[t]).ln());
        }
    }
    let mut mean_raw = vec![0.0; s];
    for t in 0..t_returns {
        for j in 0..s {
            mean_raw[j] += log_returns.get(t, j);
        }
    }
    for m in mean_raw.iter_mut() {
        *m /= t_returns as f64;
    }
    // Unbiased sample covariance over the T−1 return observations.
    let mut cov = DenseMatrix::zeros(s, s);
    let denom = (t_returns - 1).max(1) as f64;
    for t in 0..t_returns {
        for i in 0..s {
            let di = log_returns.get(t, i) - mean_raw[i];
            for j in i..s {
                let dj = log_returns.get(t, j) - mean_raw[j];
                let v = cov.get(i, j) + di * dj / denom;
                cov.set(i, j, v);
            }
        }
    }
    for i in 0..s {
        for j in 0..i {
            let v = cov.get(j, i);
            cov.set(i, j, v);
        }
    }
    // Sample covariance is a Gram matrix; verify positive semidefiniteness
    // up to a small negative eigenvalue tolerance.
    check_psd(&cov, 1e-10)?;

    let mean: Vec<f64> = mean_raw.iter().map(|m| m * MEAN_SCALE).collect();
    let mut cov_scaled = cov.clone();
    for v in cov_scaled.data_mut() {
        *v *= COV_SCALE;
    }
    Ok(ReturnsDataset {
        assets: kept_names,
        log_returns,
        mean,
        covariance: cov_scaled,
        dropped,
    })
}

/// LDLᵀ-style positive-semidefiniteness check: every pivot must stay above
/// `-tol` relative to the diagonal scale.
fn check_psd(a: &DenseMatrix, tol: f64) -> Result<(), IoError> {
    let n = a.rows();
    let scale = (0..n).fold(1e-30f64, |acc, i| acc.max(a.get(i, i).abs()));
    let mut work = a.clone();
    for k in 0..n {
        let pivot = work.get(k, k);
        if pivot < -tol * scale {
            return Err(IoError::Data(format!(
                "covariance matrix has negative eigenvalue direction (pivot {pivot:.3e})"
            )));
        }
        if pivot <= tol * scale {
            continue; // semidefinite direction, nothing to eliminate
        }
        for i in k + 1..n {
            let f = work.get(i, k) / pivot;
            for j in k + 1..n {
                let v = work.get(i, j) - f * work.get(k, j);
                work.set(i, j, v);
            }
        }
    }
    Ok(())
}

/// Convenience used by the CLI: write a problem JSON next to the ingested
/// statistics.
pub fn write_problem_json(path: &Path, descriptor: &ProblemDescriptor) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(descriptor)
        .map_err(|e| IoError::Schema(format!("serialization failed: {e}")))?;
    let mut file = fs::File::create(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(text.as_bytes()).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

pub fn load_problem_json(path: &Path) -> Result<ProblemDescriptor, IoError> {
    let text = read_file(path)?;
    parse_json(path, &text)
}
