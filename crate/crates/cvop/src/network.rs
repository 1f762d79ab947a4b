//! Dense feed-forward networks with tanh hidden layers and the terminal
//! activations that make outputs feasible by construction: a segment
//! projection toward the Slater point on the primal side, and nonnegativity
//! (ReLU / soft-plus) or a null-space projection onto the dual equality
//! manifold on the dual side. Reverse-mode parameter gradients are exact,
//! including through the projection branches.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinAlgError, LinearProgram};
use crate::problem::{ProblemError, ProblemSpec};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("feasible dual point must be strictly positive (component {index} = {value})")]
    InvalidFeasiblePoint { index: usize, value: f64 },
    #[error("dual equality constraint violated: residual {residual:.3e}")]
    DualEqualityViolated { residual: f64 },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Linalg(#[from] LinAlgError),
}

/// Source of strictly feasible dual points `w ↦ λ̄(w)` for the null-space
/// projection terminal.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum FeasiblePointSource {
    /// `λ̄(w) = argmin{ Σλ_i | Aᵀλ = −Cᵀw, λ ≥ margin }`, solved per weight.
    LinearProgram {
        a: DenseMatrix,
        c: DenseMatrix,
        margin: f64,
    },
}

impl FeasiblePointSource {
    pub fn feasible_point(&self, w: &[f64]) -> Result<Vec<f64>, NetworkError> {
        match self {
            Self::LinearProgram { a, c, margin } => {
                let m = a.rows();
                let rhs: Vec<f64> = c.tmatvec(w).iter().map(|v| -v).collect();
                let lp = LinearProgram {
                    cost: vec![1.0; m],
                    eq_lhs: a.transpose(),
                    eq_rhs: rhs,
                    lower_bounds: vec![*margin; m],
                };
                let lambda = linalg::simplex_solve(&lp)?;
                for (index, &value) in lambda.iter().enumerate() {
                    if value <= 0.0 {
                        return Err(NetworkError::InvalidFeasiblePoint { index, value });
                    }
                }
                Ok(lambda)
            }
        }
    }
}

/// Final activation applied after the last affine layer (and after output
/// replication, when configured).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalActivation {
    Identity,
    Relu,
    SoftPlus,
    /// `x_i = z_i⁺ / Σ_j z_j⁺`, falling back to a fixed point when every
    /// component is clipped away.
    NormalizedRelu { fallback: Vec<f64> },
    /// Segment projection toward the Slater point with tolerance `tol`;
    /// `pre_relu` applies a ReLU before projecting.
    PrimalProjection { tol: f64, pre_relu: bool },
    /// `λ = (1 − t̄*)·basis·z + λ̄(w)` keeping `Aᵀλ = −Cᵀw` and `λ ≥ 0`.
    DualNullspaceProjection {
        basis: DenseMatrix,
        source: FeasiblePointSource,
    },
}

/// Layer widths `h_0 .. h_{ℓ+1}` plus the terminal descriptor. Hidden layers
/// apply tanh; the output layer is affine followed by the terminal.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NetworkArchitecture {
    pub layer_widths: Vec<usize>,
    pub terminal: TerminalActivation,
    /// Optional map from decision-variable index to raw network output index;
    /// lets one output drive many variables.
    pub output_replication: Option<Vec<usize>>,
}

impl NetworkArchitecture {
    pub fn new(input: usize, hidden: &[usize], output: usize, terminal: TerminalActivation) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self {
            layer_widths: widths,
            terminal,
            output_replication: None,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.layer_widths.len() < 3 {
            return Err(NetworkError::InvalidArchitecture(
                "need at least one hidden layer".into(),
            ));
        }
        if self.layer_widths.iter().any(|w| *w == 0) {
            return Err(NetworkError::InvalidArchitecture(
                "all layer widths must be at least 1".into(),
            ));
        }
        let raw = *self.layer_widths.last().expect("nonempty");
        if let Some(map) = &self.output_replication {
            if map.is_empty() {
                return Err(NetworkError::InvalidArchitecture(
                    "replication map must cover at least one variable".into(),
                ));
            }
            if map.iter().any(|idx| *idx >= raw) {
                return Err(NetworkError::InvalidArchitecture(
                    "replication map references a missing output".into(),
                ));
            }
        }
        if let TerminalActivation::PrimalProjection { tol, .. } = &self.terminal {
            if !(*tol > 0.0) {
                return Err(NetworkError::InvalidArchitecture(
                    "projection tolerance must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    /// Width of the last affine layer (before replication).
    pub fn raw_output_dim(&self) -> usize {
        *self.layer_widths.last().expect("nonempty")
    }

    /// Dimension entering the terminal activation.
    pub fn pre_terminal_dim(&self) -> usize {
        self.output_replication
            .as_ref()
            .map_or(self.raw_output_dim(), Vec::len)
    }

    /// Dimension of the network output after the terminal activation.
    pub fn output_dim(&self) -> usize {
        match &self.terminal {
            TerminalActivation::DualNullspaceProjection { basis, .. } => basis.rows(),
            _ => self.pre_terminal_dim(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayerParams {
    pub weights: DenseMatrix,
    pub bias: Vec<f64>,
}

/// All weights and biases of one network.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParameterSet {
    pub layers: Vec<LayerParams>,
}

impl ParameterSet {
    pub fn zeros_like(arch: &NetworkArchitecture) -> Self {
        let mut layers = Vec::new();
        for l in 1..arch.layer_widths.len() {
            layers.push(LayerParams {
                weights: DenseMatrix::zeros(arch.layer_widths[l], arch.layer_widths[l - 1]),
                bias: vec![0.0; arch.layer_widths[l]],
            });
        }
        Self { layers }
    }

    pub fn matches(&self, arch: &NetworkArchitecture) -> bool {
        if self.layers.len() + 1 != arch.layer_widths.len() {
            return false;
        }
        self.layers.iter().enumerate().all(|(i, layer)| {
            layer.weights.rows() == arch.layer_widths[i + 1]
                && layer.weights.cols() == arch.layer_widths[i]
                && layer.bias.len() == arch.layer_widths[i + 1]
        })
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Applies `f` to every (parameter, companion) pair across two sets with
    /// identical shapes. Used by the optimizer.
    pub fn zip_apply<F: FnMut(&mut f64, f64)>(&mut self, other: &Self, mut f: F) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.data_mut().iter_mut().zip(b.weights.data()) {
                f(x, *y);
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                f(x, *y);
            }
        }
    }

    pub fn set_zero(&mut self) {
        for layer in self.layers.iter_mut() {
            layer.weights.data_mut().fill(0.0);
            layer.bias.fill(0.0);
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for layer in self.layers.iter_mut() {
            for v in layer.weights.data_mut() {
                *v *= s;
            }
            for v in layer.bias.iter_mut() {
                *v *= s;
            }
        }
    }
}

/// Glorot-uniform weights (±√(6/(h_in + h_out))), zero biases; deterministic
/// in the seed.
pub fn init_params(arch: &NetworkArchitecture, seed: u64) -> ParameterSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for l in 1..arch.layer_widths.len() {
        let rows = arch.layer_widths[l];
        let cols = arch.layer_widths[l - 1];
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(rng.gen_range(-bound..bound));
        }
        layers.push(LayerParams {
            weights: DenseMatrix::from_vec(rows, cols, data).expect("shape"),
            bias: vec![0.0; rows],
        });
    }
    ParameterSet { layers }
}

const PAR_ROWS_THRESHOLD: usize = 256;

/// `W x + b`, parallelized over row blocks for the wide layers.
fn affine(w: &DenseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let rows = w.rows();
    if rows >= PAR_ROWS_THRESHOLD {
        (0..rows)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| linalg::dot(w.row(i), x) + b[i])
            .collect()
    } else {
        (0..rows).map(|i| linalg::dot(w.row(i), x) + b[i]).collect()
    }
}

/// `grad += c ⊗ y` (outer product accumulation).
fn accumulate_outer(grad: &mut DenseMatrix, c: &[f64], y: &[f64]) {
    let cols = grad.cols();
    let rows = grad.rows();
    debug_assert_eq!(rows, c.len());
    debug_assert_eq!(cols, y.len());
    let data = grad.data_mut();
    if rows >= PAR_ROWS_THRESHOLD {
        data.par_chunks_mut(cols)
            .zip(c.par_iter())
            .with_min_len(64)
            .for_each(|(row, ci)| {
                for (r, yi) in row.iter_mut().zip(y) {
                    *r += ci * yi;
                }
            });
    } else {
        for (i, ci) in c.iter().enumerate() {
            let row = &mut data[i * cols..(i + 1) * cols];
            for (r, yi) in row.iter_mut().zip(y) {
                *r += ci * yi;
            }
        }
    }
}

/// `Wᵀ c`.
fn transpose_apply(w: &DenseMatrix, c: &[f64]) -> Vec<f64> {
    w.tmatvec(c)
}

/// Everything a backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    input: Vec<f64>,
    /// Post-tanh outputs of each hidden layer.
    hidden: Vec<Vec<f64>>,
    /// Input to the terminal activation: the final affine output, after
    /// replication when configured.
    pre_terminal: Vec<f64>,
    terminal: TerminalTape,
}

#[derive(Debug, Clone)]
enum TerminalTape {
    Identity,
    Relu,
    SoftPlus,
    NormalizedRelu {
        positive_sum: f64,
        fallback_used: bool,
    },
    PrimalProjection {
        /// Value after the optional pre-ReLU; the projection input.
        z: Vec<f64>,
        t_star: f64,
        active_index: Option<usize>,
        g_active: f64,
        g_slater_active: f64,
    },
    DualNullspace {
        zhat: Vec<f64>,
        lambda_bar: Vec<f64>,
        t_bar: f64,
        active_index: Option<usize>,
    },
}

impl ForwardTape {
    pub fn projection_t_star(&self) -> Option<f64> {
        match &self.terminal {
            TerminalTape::PrimalProjection { t_star, .. } => Some(*t_star),
            TerminalTape::DualNullspace { t_bar, .. } => Some(*t_bar),
            _ => None,
        }
    }

    pub fn active_constraint(&self) -> Option<usize> {
        match &self.terminal {
            TerminalTape::PrimalProjection { active_index, .. } => *active_index,
            TerminalTape::DualNullspace { active_index, .. } => *active_index,
            _ => None,
        }
    }
}

/// Segment projection of a raw point toward the Slater point:
/// `x = (1 − t*) z + t* x̄` with
/// `t* = max over j with g_j(z) ≥ −tol of (g_j(z) + tol)/(g_j(z) − g_j(x̄))`.
///
/// Returns the projected point, `t*`, and the active constraint index
/// (lowest index on ties, absent when `t* = 0`).
pub fn project_primal(
    z: &[f64],
    problem: &ProblemSpec,
    tol: f64,
) -> Result<(Vec<f64>, f64, Option<usize>), NetworkError> {
    let g_z = problem.functions().constraints(z);
    let g_bar = problem.g_at_slater();
    debug_assert!(
        g_bar.iter().all(|g| tol < -g),
        "projection tolerance must stay below the Slater margin"
    );
    let mut t_star = 0.0;
    let mut active = None;
    for (j, (&gz, &gb)) in g_z.iter().zip(g_bar).enumerate() {
        if gz >= -tol {
            let t = (gz + tol) / (gz - gb);
            if t > t_star {
                t_star = t;
                active = Some(j);
            }
        }
    }
    let slater = problem.slater_point();
    let x: Vec<f64> = z
        .iter()
        .zip(slater)
        .map(|(zi, si)| (1.0 - t_star) * zi + t_star * si)
        .collect();
    Ok((x, t_star, active))
}

/// Null-space projection for dual feasibility: with `ẑ = basis·z + λ̄`,
/// `t̄* = max_j ẑ_j⁻/(ẑ_j⁻ + λ̄_j)` and `λ_j = (1 − t̄*) ẑ_j + t̄* λ̄_j`.
/// The equality `Aᵀλ = Aᵀλ̄` is preserved because the basis spans null(Aᵀ).
pub fn project_dual_nullspace(
    z: &[f64],
    basis: &DenseMatrix,
    lambda_bar: &[f64],
) -> Result<Vec<f64>, NetworkError> {
    let (lambda, _, _) = project_dual_nullspace_full(z, basis, lambda_bar)?;
    Ok(lambda)
}

fn project_dual_nullspace_full(
    z: &[f64],
    basis: &DenseMatrix,
    lambda_bar: &[f64],
) -> Result<(Vec<f64>, f64, Option<usize>), NetworkError> {
    if z.len() != basis.cols() || lambda_bar.len() != basis.rows() {
        return Err(NetworkError::ShapeMismatch(
            "null-space projection shapes inconsistent".into(),
        ));
    }
    for (index, &value) in lambda_bar.iter().enumerate() {
        if !(value > 0.0) {
            return Err(NetworkError::InvalidFeasiblePoint { index, value });
        }
    }
    let mut zhat = basis.matvec(z);
    for (zi, li) in zhat.iter_mut().zip(lambda_bar) {
        *zi += li;
    }
    let mut t_bar = 0.0;
    let mut active = None;
    for (j, (&zj, &lj)) in zhat.iter().zip(lambda_bar).enumerate() {
        if zj < 0.0 {
            let neg = -zj;
            let t = neg / (neg + lj);
            if t > t_bar {
                t_bar = t;
                active = Some(j);
            }
        }
    }
    let lambda: Vec<f64> = zhat
        .iter()
        .zip(lambda_bar)
        .map(|(&zj, &lj)| (1.0 - t_bar) * zj + t_bar * lj)
        .collect();
    Ok((lambda, t_bar, active))
}

fn softplus(v: f64) -> f64 {
    // Stable log(1 + exp(v)).
    if v > 30.0 {
        v
    } else if v < -30.0 {
        v.exp()
    } else {
        v.exp().ln_1p()
    }
}

/// Forward pass: tanh hidden layers, affine output, optional replication,
/// then the terminal activation. Returns the output and the tape needed for
/// the backward pass.
pub fn forward(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    w: &[f64],
    problem: &ProblemSpec,
) -> Result<(Vec<f64>, ForwardTape), NetworkError> {
    if w.len() != arch.input_dim() {
        return Err(NetworkError::ShapeMismatch(format!(
            "input has {} entries, architecture expects {}",
            w.len(),
            arch.input_dim()
        )));
    }
    if !params.matches(arch) {
        return Err(NetworkError::ShapeMismatch(
            "parameters do not match architecture".into(),
        ));
    }
    let n_layers = params.layers.len();
    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(n_layers - 1);
    let mut y = w.to_vec();
    for layer in &params.layers[..n_layers - 1] {
        let mut pre = affine(&layer.weights, &y, &layer.bias);
        for v in pre.iter_mut() {
            *v = v.tanh();
        }
        hidden.push(pre.clone());
        y = pre;
    }
    let last = &params.layers[n_layers - 1];
    let raw_out = affine(&last.weights, &y, &last.bias);

    let pre_terminal: Vec<f64> = match &arch.output_replication {
        Some(map) => map.iter().map(|&idx| raw_out[idx]).collect(),
        None => raw_out.clone(),
    };

    let (output, terminal) = match &arch.terminal {
        TerminalActivation::Identity => (pre_terminal.clone(), TerminalTape::Identity),
        TerminalActivation::Relu => (
            pre_terminal.iter().map(|v| v.max(0.0)).collect(),
            TerminalTape::Relu,
        ),
        TerminalActivation::SoftPlus => (
            pre_terminal.iter().map(|v| softplus(*v)).collect(),
            TerminalTape::SoftPlus,
        ),
        TerminalActivation::NormalizedRelu { fallback } => {
            let pos: Vec<f64> = pre_terminal.iter().map(|v| v.max(0.0)).collect();
            let s: f64 = pos.iter().sum();
            if s > 0.0 {
                (
                    pos.iter().map(|v| v / s).collect(),
                    TerminalTape::NormalizedRelu {
                        positive_sum: s,
                        fallback_used: false,
                    },
                )
            } else {
                (
                    fallback.clone(),
                    TerminalTape::NormalizedRelu {
                        positive_sum: 0.0,
                        fallback_used: true,
                    },
                )
            }
        }
        TerminalActivation::PrimalProjection { tol, pre_relu } => {
            let z: Vec<f64> = if *pre_relu {
                pre_terminal.iter().map(|v| v.max(0.0)).collect()
            } else {
                pre_terminal.clone()
            };
            let g_z = problem.functions().constraints(&z);
            let g_bar = problem.g_at_slater();
            let mut t_star = 0.0;
            let mut active = None;
            for (j, (&gz, &gb)) in g_z.iter().zip(g_bar).enumerate() {
                if gz >= -tol {
                    let t = (gz + tol) / (gz - gb);
                    if t > t_star {
                        t_star = t;
                        active = Some(j);
                    }
                }
            }
            let x: Vec<f64> = z
                .iter()
                .zip(problem.slater_point())
                .map(|(zi, si)| (1.0 - t_star) * zi + t_star * si)
                .collect();
            let (g_active, g_slater_active) = match active {
                Some(j) => (g_z[j], g_bar[j]),
                None => (0.0, 0.0),
            };
            (
                x,
                TerminalTape::PrimalProjection {
                    z,
                    t_star,
                    active_index: active,
                    g_active,
                    g_slater_active,
                },
            )
        }
        TerminalActivation::DualNullspaceProjection { basis, source } => {
            let lambda_bar = source.feasible_point(w)?;
            let (lambda, t_bar, active) =
                project_dual_nullspace_full(&pre_terminal, basis, &lambda_bar)?;
            // The equality Aᵀλ = −Cᵀw must survive the projection; enforce it.
            let FeasiblePointSource::LinearProgram { a, c, .. } = source;
            let mut resid = a.tmatvec(&lambda);
            let ctw = c.tmatvec(w);
            for (r, v) in resid.iter_mut().zip(&ctw) {
                *r += v;
            }
            let residual = linalg::norm_inf(&resid);
            if residual > 1e-9 {
                return Err(NetworkError::DualEqualityViolated { residual });
            }
            (
                lambda,
                TerminalTape::DualNullspace {
                    zhat: {
                        let mut zh = basis.matvec(&pre_terminal);
                        for (zi, li) in zh.iter_mut().zip(&lambda_bar) {
                            *zi += li;
                        }
                        zh
                    },
                    lambda_bar,
                    t_bar,
                    active_index: active,
                },
            )
        }
    };

    Ok((
        output,
        ForwardTape {
            input: w.to_vec(),
            hidden,
            pre_terminal,
            terminal,
        },
    ))
}

/// Reverse-mode gradients of `cotangentᵀ · output` with respect to every
/// parameter, plus the gradient with respect to the network input.
///
/// Projection terminals differentiate the active branch:
/// `dx/dz = (1−t*) I + (x̄ − z)(dt*/dz)ᵀ` with
/// `dt*/dz = ∇g_{j*}(z) (−g_{j*}(x̄) − ε)/(g_{j*}(z) − g_{j*}(x̄))²`, and
/// `dt*/dz = 0` where `t* = 0`. ReLU-style kinks take the active-branch
/// subgradient. Dependence of λ̄ on the input is treated as constant.
pub fn vjp_params(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    tape: &ForwardTape,
    cotangent: &[f64],
    problem: &ProblemSpec,
) -> Result<(ParameterSet, Vec<f64>), NetworkError> {
    let mut grads = ParameterSet::zeros_like(arch);
    let input_grad = vjp_params_into(arch, params, tape, cotangent, problem, &mut grads)?;
    Ok((grads, input_grad))
}

/// Accumulating form of [`vjp_params`]: adds the parameter gradients into
/// `grads` (which must match the architecture) and returns the input
/// gradient. Lets batched training avoid per-sample gradient buffers.
pub fn vjp_params_into(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    tape: &ForwardTape,
    cotangent: &[f64],
    problem: &ProblemSpec,
    grads: &mut ParameterSet,
) -> Result<Vec<f64>, NetworkError> {
    if !grads.matches(arch) {
        return Err(NetworkError::ShapeMismatch(
            "gradient accumulator does not match architecture".into(),
        ));
    }
    if cotangent.len() != arch.output_dim() {
        return Err(NetworkError::ShapeMismatch(format!(
            "cotangent has {} entries, output has {}",
            cotangent.len(),
            arch.output_dim()
        )));
    }
    if !params.matches(arch) {
        return Err(NetworkError::ShapeMismatch(
            "parameters do not match architecture".into(),
        ));
    }

    // Backward through the terminal activation.
    let mut c_pre: Vec<f64> = match &tape.terminal {
        TerminalTape::Identity => cotangent.to_vec(),
        TerminalTape::Relu => tape
            .pre_terminal
            .iter()
            .zip(cotangent)
            .map(|(z, c)| if *z > 0.0 { *c } else { 0.0 })
            .collect(),
        TerminalTape::SoftPlus => tape
            .pre_terminal
            .iter()
            .zip(cotangent)
            .map(|(z, c)| c / (1.0 + (-z).exp()))
            .collect(),
        TerminalTape::NormalizedRelu {
            positive_sum,
            fallback_used,
        } => {
            if *fallback_used {
                vec![0.0; tape.pre_terminal.len()]
            } else {
                // y_i = z_i⁺/s, so (Jᵀc)_j = 1{z_j > 0} (c_j − cᵀy)/s.
                let s = *positive_sum;
                let pos: Vec<f64> = tape.pre_terminal.iter().map(|v| v.max(0.0)).collect();
                let c_dot_y = linalg::dot(cotangent, &pos) / s;
                tape.pre_terminal
                    .iter()
                    .zip(cotangent)
                    .map(|(z, c)| if *z > 0.0 { (c - c_dot_y) / s } else { 0.0 })
                    .collect()
            }
        }
        TerminalTape::PrimalProjection {
            z,
            t_star,
            active_index,
            g_active,
            g_slater_active,
        } => {
            let mut v: Vec<f64> = cotangent.iter().map(|c| (1.0 - t_star) * c).collect();
            if let Some(j) = active_index {
                let jg = problem.functions().constraint_jacobian(z);
                let tol = match &arch.terminal {
                    TerminalActivation::PrimalProjection { tol, .. } => *tol,
                    _ => unreachable!("tape/terminal mismatch"),
                };
                let denom = g_active - g_slater_active;
                let k = (-g_slater_active - tol) / (denom * denom);
                let inner: f64 = cotangent
                    .iter()
                    .zip(problem.slater_point().iter().zip(z))
                    .map(|(c, (s, zi))| c * (s - zi))
                    .sum();
                for (vi, gji) in v.iter_mut().zip(jg.row(*j)) {
                    *vi += inner * k * gji;
                }
            }
            // Back through the optional pre-ReLU.
            if let TerminalActivation::PrimalProjection { pre_relu: true, .. } = &arch.terminal {
                for (vi, pre) in v.iter_mut().zip(&tape.pre_terminal) {
                    if *pre <= 0.0 {
                        *vi = 0.0;
                    }
                }
            }
            v
        }
        TerminalTape::DualNullspace {
            zhat,
            lambda_bar,
            t_bar,
            active_index,
        } => {
            let mut v: Vec<f64> = cotangent.iter().map(|c| (1.0 - t_bar) * c).collect();
            if let Some(j) = active_index {
                let denom = lambda_bar[*j] - zhat[*j];
                let dt = -lambda_bar[*j] / (denom * denom);
                let inner: f64 = cotangent
                    .iter()
                    .zip(lambda_bar.iter().zip(zhat))
                    .map(|(c, (l, zh))| c * (l - zh))
                    .sum();
                v[*j] += inner * dt;
            }
            let basis = match &arch.terminal {
                TerminalActivation::DualNullspaceProjection { basis, .. } => basis,
                _ => unreachable!("tape/terminal mismatch"),
            };
            transpose_apply(basis, &v)
        }
    };

    // Backward through replication: sum cotangents into shared outputs.
    let mut c_raw = match &arch.output_replication {
        Some(map) => {
            let mut acc = vec![0.0; arch.raw_output_dim()];
            for (i, &idx) in map.iter().enumerate() {
                acc[idx] += c_pre[i];
            }
            acc
        }
        None => std::mem::take(&mut c_pre),
    };

    // Backward through the affine stack.
    let n_layers = params.layers.len();
    for l in (0..n_layers).rev() {
        let below: &[f64] = if l == 0 {
            &tape.input
        } else {
            &tape.hidden[l - 1]
        };
        accumulate_outer(&mut grads.layers[l].weights, &c_raw, below);
        for (b, c) in grads.layers[l].bias.iter_mut().zip(&c_raw) {
            *b += c;
        }
        let mut down = transpose_apply(&params.layers[l].weights, &c_raw);
        if l > 0 {
            // tanh'(pre) = 1 − tanh(pre)², and hidden[l-1] stores tanh(pre).
            for (d, h) in down.iter_mut().zip(&tape.hidden[l - 1]) {
                *d *= 1.0 - h * h;
            }
        }
        c_raw = down;
    }
    Ok(c_raw)
}
