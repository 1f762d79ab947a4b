//! Joint training of the primal and dual networks against the KKT residual:
//! per-scalarization stationarity plus η-weighted complementary slackness,
//! full-batch Adam over a fixed set of training weights. A duality-gap loss
//! is available as an alternative for problems with an evaluable dual.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::network::{
    forward, init_params, vjp_params, NetworkArchitecture, NetworkError, ParameterSet,
    TerminalActivation,
};
use crate::problem::{ProblemError, ProblemSpec, ScalarizationWeight};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("architecture incompatible with problem: {0}")]
    IncompatibleArchitecture(String),
    #[error("unsupported sampling mode: {0}")]
    UnsupportedSampling(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// How the K training scalarizations are chosen.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Grid,
    Uniform,
    Explicit { weights: Vec<Vec<f64>> },
}

/// Weight of the complementary-slackness term: fixed, or calibrated at
/// initialization so both loss terms start at comparable magnitude.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum EtaSetting {
    Fixed(f64),
    #[serde(with = "auto_marker")]
    Auto,
}

mod auto_marker {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let tag = String::deserialize(d)?;
        if tag == "auto" {
            Ok(())
        } else {
            Err(D::Error::custom(format!(
                "eta must be a number or \"auto\", got \"{tag}\""
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Kkt,
    DualityGap,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub eta: EtaSetting,
    pub delta: f64,
    pub cs_tolerance: f64,
    pub k: usize,
    pub sampling: SamplingMode,
    pub seed: u64,
    pub loss_kind: LossKind,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(TrainError::InvalidConfig("delta must lie in [0, 1)".into()));
        }
        if self.cs_tolerance < 0.0 {
            return Err(TrainError::InvalidConfig(
                "cs_tolerance must be nonnegative".into(),
            ));
        }
        if let EtaSetting::Fixed(v) = self.eta {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(TrainError::InvalidConfig(
                    "eta must be a nonnegative number or \"auto\"".into(),
                ));
            }
        }
        if self.k == 0 {
            return Err(TrainError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-sample loss decomposition; `total = stationarity + η·cs`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub stationarity: f64,
    pub complementary_slackness: f64,
}

impl LossBreakdown {
    fn zero() -> Self {
        Self {
            total: 0.0,
            stationarity: 0.0,
            complementary_slackness: 0.0,
        }
    }

    fn add(&mut self, other: &Self) {
        self.total += other.total;
        self.stationarity += other.stationarity;
        self.complementary_slackness += other.complementary_slackness;
    }

    fn scale(&mut self, s: f64) {
        self.total *= s;
        self.stationarity *= s;
        self.complementary_slackness *= s;
    }
}

/// Draws `k` scalarization weights: a regular grid with endpoints (P = 2
/// only) or i.i.d. uniform draws on the simplex via normalized unit-rate
/// exponentials. A positive `floor` clamps grid endpoints and affinely
/// rescales uniform draws so every component stays at or above it.
pub fn sample_scalarizations(
    p: usize,
    k: usize,
    mode: &SamplingMode,
    floor: f64,
    seed: u64,
) -> Result<Vec<ScalarizationWeight>, TrainError> {
    if k == 0 {
        return Err(TrainError::InvalidConfig("k must be at least 1".into()));
    }
    if floor * p as f64 >= 1.0 {
        return Err(TrainError::InvalidConfig(format!(
            "floor {floor} is incompatible with {p} components"
        )));
    }
    let build = |v: Vec<f64>| {
        ScalarizationWeight::new(v).map_err(|e| TrainError::InvalidConfig(e.to_string()))
    };
    match mode {
        SamplingMode::Grid => {
            if p != 2 {
                return Err(TrainError::UnsupportedSampling(format!(
                    "grid sampling is only defined for P = 2 (got P = {p})"
                )));
            }
            let mut out = Vec::with_capacity(k);
            for i in 0..k {
                let raw = if k == 1 {
                    0.5
                } else {
                    i as f64 / (k - 1) as f64
                };
                // Clamp the smaller component so the floor is hit exactly.
                let (w1, w2) = if raw <= 0.5 {
                    let w1 = raw.max(floor);
                    (w1, 1.0 - w1)
                } else {
                    let w2 = (1.0 - raw).max(floor);
                    (1.0 - w2, w2)
                };
                out.push(build(vec![w1, w2])?);
            }
            Ok(out)
        }
        SamplingMode::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::with_capacity(k);
            for _ in 0..k {
                let draws: Vec<f64> = (0..p)
                    .map(|_| -f64::ln(rng.gen_range(f64::MIN_POSITIVE..1.0)))
                    .collect();
                let s: f64 = draws.iter().sum();
                let mut w: Vec<f64> = draws.iter().map(|d| d / s).collect();
                if floor > 0.0 {
                    let shrink = 1.0 - p as f64 * floor;
                    for v in w.iter_mut() {
                        *v = floor + shrink * *v;
                    }
                }
                // Pin the sum exactly to 1 against accumulated rounding.
                let last = w.len() - 1;
                w[last] = 1.0 - w[..last].iter().sum::<f64>();
                out.push(build(w)?);
            }
            Ok(out)
        }
        SamplingMode::Explicit { weights } => {
            if weights.len() != k {
                return Err(TrainError::InvalidConfig(format!(
                    "explicit list has {} weights, config says k = {k}",
                    weights.len()
                )));
            }
            let mut out = Vec::with_capacity(k);
            for w in weights {
                if w.len() != p {
                    return Err(TrainError::InvalidConfig(
                        "explicit weight has wrong dimension".into(),
                    ));
                }
                if w.iter().any(|v| *v < floor - 1e-15) {
                    return Err(TrainError::InvalidConfig(
                        "explicit weight below the problem floor".into(),
                    ));
                }
                out.push(build(w.clone())?);
            }
            Ok(out)
        }
    }
}

/// KKT-residual loss at one scalarization:
/// `‖(1−δ)Jf(x)ᵀw + 2δx + Jg(x)ᵀλ‖² + η·Σ_j [λ_j g_j(x)]²`, the slackness
/// sum restricted to constraints with `g_j(x) ≤ −cs_tol`.
pub fn kkt_loss(
    problem: &ProblemSpec,
    x: &[f64],
    lambda: &[f64],
    w: &[f64],
    eta: f64,
    delta: f64,
    cs_tol: f64,
) -> Result<LossBreakdown, TrainError> {
    let bundle = problem.evaluate(x)?;
    if lambda.len() != problem.constraint_dim() || w.len() != problem.objective_dim() {
        return Err(TrainError::IncompatibleArchitecture(
            "kkt_loss shapes inconsistent".into(),
        ));
    }
    let residual = stationarity_residual(&bundle.jf, &bundle.jg, x, lambda, w, delta);
    let stationarity = linalg::dot(&residual, &residual);
    let mut cs = 0.0;
    for (j, &gj) in bundle.g.iter().enumerate() {
        if gj <= -cs_tol {
            let t = lambda[j] * gj;
            cs += t * t;
        }
    }
    Ok(LossBreakdown {
        total: stationarity + eta * cs,
        stationarity,
        complementary_slackness: cs,
    })
}

fn stationarity_residual(
    jf: &crate::linalg::DenseMatrix,
    jg: &crate::linalg::DenseMatrix,
    x: &[f64],
    lambda: &[f64],
    w: &[f64],
    delta: f64,
) -> Vec<f64> {
    let mut r: Vec<f64> = jf.tmatvec(w).iter().map(|v| (1.0 - delta) * v).collect();
    let down = jg.tmatvec(lambda);
    for i in 0..r.len() {
        r[i] += down[i] + 2.0 * delta * x[i];
    }
    r
}

/// The two networks being trained, borrowed together.
pub struct NetworkPair<'a> {
    pub primal_arch: &'a NetworkArchitecture,
    pub primal_params: &'a ParameterSet,
    pub dual_arch: &'a NetworkArchitecture,
    pub dual_params: &'a ParameterSet,
}

/// Exact gradient of the per-sample KKT loss with respect to all parameters
/// of both networks, assembled by the chain rule: the stationarity term
/// reaches the primal parameters through the weighted Hessian-vector product
/// and the dual parameters through `Jg`, the slackness term through first
/// derivatives only.
pub fn kkt_loss_gradient(
    problem: &ProblemSpec,
    nets: &NetworkPair,
    w: &[f64],
    eta: f64,
    delta: f64,
    cs_tol: f64,
) -> Result<(ParameterSet, ParameterSet, LossBreakdown), TrainError> {
    let mut grad_primal = ParameterSet::zeros_like(nets.primal_arch);
    let mut grad_dual = ParameterSet::zeros_like(nets.dual_arch);
    let breakdown = kkt_loss_gradient_into(
        problem,
        nets,
        w,
        eta,
        delta,
        cs_tol,
        &mut grad_primal,
        &mut grad_dual,
    )?;
    Ok((grad_primal, grad_dual, breakdown))
}

/// Accumulating form of [`kkt_loss_gradient`]; adds into the two gradient
/// buffers so full-batch loops reuse their allocations.
#[allow(clippy::too_many_arguments)]
pub fn kkt_loss_gradient_into(
    problem: &ProblemSpec,
    nets: &NetworkPair,
    w: &[f64],
    eta: f64,
    delta: f64,
    cs_tol: f64,
    grad_primal: &mut ParameterSet,
    grad_dual: &mut ParameterSet,
) -> Result<LossBreakdown, TrainError> {
    let (x, tape_x) = forward(nets.primal_arch, nets.primal_params, w, problem)?;
    let (lambda, tape_l) = forward(nets.dual_arch, nets.dual_params, w, problem)?;
    let bundle = problem.evaluate(&x)?;
    let residual = stationarity_residual(&bundle.jf, &bundle.jg, &x, &lambda, w, delta);
    let stationarity = linalg::dot(&residual, &residual);

    let m = problem.constraint_dim();
    let mut cs = 0.0;
    let mut cs_mask = vec![false; m];
    for (j, &gj) in bundle.g.iter().enumerate() {
        if gj <= -cs_tol {
            cs_mask[j] = true;
            let t = lambda[j] * gj;
            cs += t * t;
        }
    }
    let breakdown = LossBreakdown {
        total: stationarity + eta * cs,
        stationarity,
        complementary_slackness: cs,
    };

    // Primal cotangent: ∂‖r‖²/∂x = 2·H·r with H the weighted Hessian, plus
    // the slackness term 2η Σ λ_j² g_j ∇g_j over unmasked constraints.
    let two_r: Vec<f64> = residual.iter().map(|v| 2.0 * v).collect();
    let mut cot_x = problem.weighted_hvp(&x, w, &lambda, delta, &two_r)?;
    if eta != 0.0 {
        let mut u = vec![0.0; m];
        for j in 0..m {
            if cs_mask[j] {
                u[j] = 2.0 * eta * lambda[j] * lambda[j] * bundle.g[j];
            }
        }
        let down = bundle.jg.tmatvec(&u);
        for (c, d) in cot_x.iter_mut().zip(&down) {
            *c += d;
        }
    }

    // Dual cotangent: ∂‖r‖²/∂λ = 2·Jg·r plus 2η λ_j g_j² on unmasked rows.
    let mut cot_l = bundle.jg.matvec(&residual);
    for v in cot_l.iter_mut() {
        *v *= 2.0;
    }
    if eta != 0.0 {
        for j in 0..m {
            if cs_mask[j] {
                cot_l[j] += 2.0 * eta * lambda[j] * bundle.g[j] * bundle.g[j];
            }
        }
    }

    vjp_params_into(nets.primal_arch, nets.primal_params, &tape_x, &cot_x, problem, grad_primal)?;
    vjp_params_into(nets.dual_arch, nets.dual_params, &tape_l, &cot_l, problem, grad_dual)?;
    Ok(breakdown)
}

/// Duality-gap loss `wᵀf(x) − d(λ, w)`; nonnegative up to the dual's
/// convergence tolerance.
pub fn duality_gap_loss(
    problem: &ProblemSpec,
    x: &[f64],
    lambda: &[f64],
    w: &ScalarizationWeight,
) -> Result<f64, TrainError> {
    let bundle = problem.evaluate(x)?;
    let dual = problem.dual_value(lambda, w)?;
    Ok(linalg::dot(w.values(), &bundle.f) - dual)
}

fn duality_gap_gradient_into(
    problem: &ProblemSpec,
    nets: &NetworkPair,
    w: &ScalarizationWeight,
    grad_primal: &mut ParameterSet,
    grad_dual: &mut ParameterSet,
) -> Result<LossBreakdown, TrainError> {
    let (x, tape_x) = forward(nets.primal_arch, nets.primal_params, w.values(), problem)?;
    let (lambda, tape_l) = forward(nets.dual_arch, nets.dual_params, w.values(), problem)?;
    let bundle = problem.evaluate(&x)?;
    let dual = problem.dual_eval(&lambda, w)?;
    let gap = linalg::dot(w.values(), &bundle.f) - dual.value;

    // ∂/∂x wᵀf(x) = Jfᵀw; ∂/∂λ (−d) = −g(x_inner) by the envelope theorem.
    let cot_x = bundle.jf.tmatvec(w.values());
    let cot_l: Vec<f64> = dual.grad_lambda.iter().map(|v| -v).collect();
    vjp_params_into(nets.primal_arch, nets.primal_params, &tape_x, &cot_x, problem, grad_primal)?;
    vjp_params_into(nets.dual_arch, nets.dual_params, &tape_l, &cot_l, problem, grad_dual)?;
    Ok(LossBreakdown {
        total: gap,
        stationarity: gap,
        complementary_slackness: 0.0,
    })
}

/// Ratio of mean stationarity to mean slackness residual at initialization;
/// falls back to 1 when the slackness mean is negligible.
pub fn calibrate_eta(
    problem: &ProblemSpec,
    nets: &NetworkPair,
    samples: &[ScalarizationWeight],
    delta: f64,
    cs_tol: f64,
) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::InvalidConfig(
            "eta calibration needs at least one sample".into(),
        ));
    }
    let mut stat_mean = 0.0;
    let mut cs_mean = 0.0;
    for w in samples {
        let (x, _) = forward(nets.primal_arch, nets.primal_params, w.values(), problem)?;
        let (lambda, _) = forward(nets.dual_arch, nets.dual_params, w.values(), problem)?;
        let breakdown = kkt_loss(problem, &x, &lambda, w.values(), 0.0, delta, cs_tol)?;
        stat_mean += breakdown.stationarity;
        cs_mean += breakdown.complementary_slackness;
    }
    stat_mean /= samples.len() as f64;
    cs_mean /= samples.len() as f64;
    if cs_mean < 1e-12 {
        Ok(1.0)
    } else {
        Ok(stat_mean / cs_mean)
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam moments for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: ParameterSet,
    v: ParameterSet,
    step: u64,
}

impl AdamState {
    pub fn new(arch: &NetworkArchitecture) -> Self {
        Self {
            m: ParameterSet::zeros_like(arch),
            v: ParameterSet::zeros_like(arch),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Standard Adam update with bias correction. Deterministic; aborts on
/// non-finite gradients.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut ParameterSet,
    grads: &ParameterSet,
    lr: f64,
) -> Result<(), TrainError> {
    if !grads.is_finite() {
        return Err(TrainError::Divergence {
            epoch: state.step as usize,
            detail: "non-finite gradient".into(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    state
        .m
        .zip_apply(grads, |m, g| *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g);
    state
        .v
        .zip_apply(grads, |v, g| *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g);
    // params ← params − lr · m̂ / (√v̂ + ε)
    for ((pl, ml), vl) in params
        .layers
        .iter_mut()
        .zip(&state.m.layers)
        .zip(&state.v.layers)
    {
        let pw = pl.weights.data_mut();
        let mw = ml.weights.data();
        let vw = vl.weights.data();
        for i in 0..pw.len() {
            let mhat = mw[i] / bc1;
            let vhat = vw[i] / bc2;
            pw[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
        for i in 0..pl.bias.len() {
            let mhat = ml.bias[i] / bc1;
            let vhat = vl.bias[i] / bc2;
            pl.bias[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Result of a training run.
pub struct TrainOutput {
    pub primal_params: ParameterSet,
    pub dual_params: ParameterSet,
    pub history: Vec<LossBreakdown>,
    pub eta: f64,
}

fn check_compatibility(
    problem: &ProblemSpec,
    primal_arch: &NetworkArchitecture,
    dual_arch: &NetworkArchitecture,
) -> Result<(), TrainError> {
    primal_arch.validate()?;
    dual_arch.validate()?;
    let p = problem.objective_dim();
    if primal_arch.input_dim() != p || dual_arch.input_dim() != p {
        return Err(TrainError::IncompatibleArchitecture(format!(
            "networks must take P = {p} inputs"
        )));
    }
    if primal_arch.output_dim() != problem.decision_dim() {
        return Err(TrainError::IncompatibleArchitecture(format!(
            "primal network must produce N = {} outputs, got {}",
            problem.decision_dim(),
            primal_arch.output_dim()
        )));
    }
    if dual_arch.output_dim() != problem.constraint_dim() {
        return Err(TrainError::IncompatibleArchitecture(format!(
            "dual network must produce M = {} outputs, got {}",
            problem.constraint_dim(),
            dual_arch.output_dim()
        )));
    }
    if let TerminalActivation::PrimalProjection { tol, .. } = &primal_arch.terminal {
        let margin = problem.g_at_slater().iter().fold(f64::INFINITY, |a, g| a.min(-g));
        if *tol >= margin {
            return Err(TrainError::IncompatibleArchitecture(format!(
                "projection tolerance {tol} is not below the Slater margin {margin}"
            )));
        }
    }
    Ok(())
}

/// Full-batch training: one Adam step per epoch per network on the mean loss
/// over the K training scalarizations. Objectives are rescaled by the
/// problem's training factor inside the loop; evaluation-time quantities are
/// unaffected. Deterministic in (seed, config, problem).
pub fn train(
    problem: &ProblemSpec,
    primal_arch: &NetworkArchitecture,
    dual_arch: &NetworkArchitecture,
    config: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    config.validate()?;
    check_compatibility(problem, primal_arch, dual_arch)?;
    let view = problem.training_view();
    let samples = sample_scalarizations(
        problem.objective_dim(),
        config.k,
        &config.sampling,
        problem.scalarization_floor(),
        config.seed,
    )?;

    let mut primal_params = init_params(primal_arch, config.seed);
    let mut dual_params = init_params(dual_arch, config.seed.wrapping_add(1));

    let eta = match config.eta {
        EtaSetting::Fixed(v) => v,
        EtaSetting::Auto => calibrate_eta(
            &view,
            &NetworkPair {
                primal_arch,
                primal_params: &primal_params,
                dual_arch,
                dual_params: &dual_params,
            },
            &samples,
            config.delta,
            config.cs_tolerance,
        )?,
    };

    let mut adam_primal = AdamState::new(primal_arch);
    let mut adam_dual = AdamState::new(dual_arch);
    let mut history = Vec::with_capacity(config.epochs);

    let param_count: usize = primal_params
        .layers
        .iter()
        .chain(&dual_params.layers)
        .map(|l| l.weights.data().len() + l.bias.len())
        .sum();
    // Parallelize over scalarizations only while the per-sample gradient
    // buffers stay affordable; wide networks parallelize inside the matvecs
    // instead.
    let parallel_samples = samples.len() > 1 && param_count * samples.len() <= 20_000_000;

    for epoch in 0..config.epochs {
        let nets = NetworkPair {
            primal_arch,
            primal_params: &primal_params,
            dual_arch,
            dual_params: &dual_params,
        };
        let per_sample = |w: &ScalarizationWeight| match config.loss_kind {
            LossKind::Kkt => kkt_loss_gradient(
                &view,
                &nets,
                w.values(),
                eta,
                config.delta,
                config.cs_tolerance,
            ),
            LossKind::DualityGap => duality_gap_gradient(&view, &nets, w),
        };
        let results: Vec<_> = if parallel_samples {
            samples.par_iter().map(per_sample).collect()
        } else {
            samples.iter().map(per_sample).collect()
        };

        let scale = 1.0 / samples.len() as f64;
        let mut mean_loss = LossBreakdown::zero();
        let mut grad_primal: Option<ParameterSet> = None;
        let mut grad_dual: Option<ParameterSet> = None;
        for item in results {
            let (gp, gd, lb) = item?;
            mean_loss.add(&lb);
            match (&mut grad_primal, &mut grad_dual) {
                (Some(ap), Some(ad)) => {
                    ap.zip_apply(&gp, |a, b| *a += b);
                    ad.zip_apply(&gd, |a, b| *a += b);
                }
                _ => {
                    grad_primal = Some(gp);
                    grad_dual = Some(gd);
                }
            }
        }
        mean_loss.scale(scale);
        if !mean_loss.total.is_finite() {
            return Err(TrainError::Divergence {
                epoch,
                detail: format!("loss became {}", mean_loss.total),
            });
        }
        let mut gp = grad_primal.expect("at least one sample");
        let mut gd = grad_dual.expect("at least one sample");
        gp.zip_apply(&gp.clone(), |a, _| *a *= scale);
        gd.zip_apply(&gd.clone(), |a, _| *a *= scale);

        history.push(mean_loss);
        adam_step(&mut adam_primal, &mut primal_params, &gp, config.learning_rate)
            .map_err(|e| divergence_at(e, epoch))?;
        adam_step(&mut adam_dual, &mut dual_params, &gd, config.learning_rate)
            .map_err(|e| divergence_at(e, epoch))?;
    }

    Ok(TrainOutput {
        primal_params,
        dual_params,
        history,
        eta,
    })
}

fn divergence_at(e: TrainError, epoch: usize) -> TrainError {
    match e {
        TrainError::Divergence { detail, .. } => TrainError::Divergence { epoch, detail },
        other => other,
    }
}
