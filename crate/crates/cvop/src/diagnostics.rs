//! Finite-difference verification harness behind `cvop gradcheck` and the
//! gradient acceptance gates: analytic Jacobians, weighted Hessian-vector
//! products, network parameter gradients, and the assembled loss gradient are
//! all checked against central differences.
//!
//! Configurations falling too close to an activation kink (projection branch
//! change, ReLU threshold, slackness indicator boundary) are redrawn so the
//! differences stay on a single smooth branch.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self};
use crate::network::{
    forward, init_params, vjp_params, FeasiblePointSource, NetworkArchitecture, ParameterSet,
    TerminalActivation,
};
use crate::problem::{ProblemError, ProblemSpec};
use crate::training::{kkt_loss, kkt_loss_gradient, NetworkPair, TrainError};

const FD_STEP: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct GradcheckReport {
    pub jacobian_max_rel: f64,
    pub hvp_max_rel: f64,
    pub vjp_max_rel: f64,
    pub loss_grad_max_rel: f64,
}

impl GradcheckReport {
    pub fn overall(&self) -> f64 {
        self.jacobian_max_rel
            .max(self.hvp_max_rel)
            .max(self.vjp_max_rel)
            .max(self.loss_grad_max_rel)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GradcheckError {
    #[error("could not find enough kink-free configurations")]
    RejectionExhausted,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
}

/// Runs every finite-difference suite with `configs` random configurations
/// each; deterministic in the seed.
pub fn run_gradcheck(
    problem: &ProblemSpec,
    seed: u64,
    configs: usize,
) -> Result<GradcheckReport, GradcheckError> {
    Ok(GradcheckReport {
        jacobian_max_rel: check_jacobians(problem, seed, configs)?,
        hvp_max_rel: check_hvp(problem, seed ^ 0x9e37, configs)?,
        vjp_max_rel: check_vjp(problem, seed ^ 0x79b9, configs)?,
        loss_grad_max_rel: check_loss_gradient(problem, seed ^ 0xc2b2, configs)?,
    })
}

fn point_near_slater(problem: &ProblemSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    problem
        .slater_point()
        .iter()
        .map(|s| s + rng.gen_range(-0.3..0.3))
        .collect()
}

/// The hyperball constraint is nondifferentiable at its center; keep test
/// points away from it.
fn smooth_at(problem: &ProblemSpec, x: &[f64]) -> bool {
    if !problem.name().starts_with("hyperball") {
        return true;
    }
    let r = linalg::norm2(
        &x.iter()
            .zip(problem.slater_point())
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    r > 0.1
}

fn random_simplex(p: usize, rng: &mut ChaCha8Rng, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..p).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
    if floor > 0.0 {
        let shrink = 1.0 - p as f64 * floor;
        for v in w.iter_mut() {
            *v = floor + shrink * *v;
        }
    }
    let last = w.len() - 1;
    w[last] = 1.0 - w[..last].iter().sum::<f64>();
    w
}

fn check_jacobians(
    problem: &ProblemSpec,
    seed: u64,
    configs: usize,
) -> Result<f64, GradcheckError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < configs {
        attempts += 1;
        if attempts > 50 * configs {
            return Err(GradcheckError::RejectionExhausted);
        }
        let x = point_near_slater(problem, &mut rng);
        if !smooth_at(problem, &x) {
            continue;
        }
        let bundle = problem.evaluate(&x)?;
        for col in 0..problem.decision_dim() {
            let mut xp = x.clone();
            xp[col] += h;
            let mut xm = x.clone();
            xm[col] -= h;
            let bp = problem.evaluate(&xp)?;
            let bm = problem.evaluate(&xm)?;
            for row in 0..problem.objective_dim() {
                let fd = (bp.f[row] - bm.f[row]) / (2.0 * h);
                let an = bundle.jf.get(row, col);
                worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1.0));
            }
            for row in 0..problem.constraint_dim() {
                let fd = (bp.g[row] - bm.g[row]) / (2.0 * h);
                let an = bundle.jg.get(row, col);
                worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()).max(1.0));
            }
        }
        done += 1;
    }
    Ok(worst)
}

fn check_hvp(problem: &ProblemSpec, seed: u64, configs: usize) -> Result<f64, GradcheckError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let n = problem.decision_dim();
    let delta = problem.default_delta();
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < configs {
        attempts += 1;
        if attempts > 50 * configs {
            return Err(GradcheckError::RejectionExhausted);
        }
        let x = point_near_slater(problem, &mut rng);
        if !smooth_at(problem, &x) {
            continue;
        }
        let w = random_simplex(problem.objective_dim(), &mut rng, 0.0);
        let lambda: Vec<f64> = (0..problem.constraint_dim())
            .map(|_| rng.gen_range(0.0..0.5))
            .collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let hvp = problem.weighted_hvp(&x, &w, &lambda, delta, &v)?;

        let residual = |pt: &[f64]| -> Result<Vec<f64>, ProblemError> {
            let e = problem.evaluate(pt)?;
            let mut r: Vec<f64> = e
                .jf
                .tmatvec(&w)
                .iter()
                .map(|t| (1.0 - delta) * t)
                .collect();
            let down = e.jg.tmatvec(&lambda);
            for i in 0..n {
                r[i] += down[i] + 2.0 * delta * pt[i];
            }
            Ok(r)
        };
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let rp = residual(&xp)?;
        let rm = residual(&xm)?;
        let scale = linalg::norm_inf(&hvp).max(1.0);
        for i in 0..n {
            let fd = (rp[i] - rm[i]) / (2.0 * h);
            worst = worst.max((fd - hvp[i]).abs() / scale);
        }
        done += 1;
    }
    Ok(worst)
}

fn small_networks(problem: &ProblemSpec) -> (NetworkArchitecture, NetworkArchitecture) {
    let primal = NetworkArchitecture::new(
        problem.objective_dim(),
        &[6, 5],
        problem.decision_dim(),
        TerminalActivation::PrimalProjection {
            tol: 5e-5,
            pre_relu: false,
        },
    );
    let dual = match problem.lvop_data() {
        Some(data) => {
            let at = data.a.transpose();
            let rank_tol = 1e-10 * at.max_abs_entry().max(1.0);
            let basis = linalg::null_space_basis(&at, rank_tol).expect("validated at build");
            let cols = basis.cols();
            NetworkArchitecture::new(
                problem.objective_dim(),
                &[6, 5],
                cols,
                TerminalActivation::DualNullspaceProjection {
                    basis,
                    source: FeasiblePointSource::LinearProgram {
                        a: data.a.clone(),
                        c: data.c.clone(),
                        margin: 5e-3,
                    },
                },
            )
        }
        None => NetworkArchitecture::new(
            problem.objective_dim(),
            &[6, 5],
            problem.constraint_dim(),
            TerminalActivation::Relu,
        ),
    };
    (primal, dual)
}

/// Margins keeping central differences on one activation branch: every
/// pre-terminal value away from its ReLU threshold and the projection away
/// from both branch boundaries.
fn branch_margins_ok(
    problem: &ProblemSpec,
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    w: &[f64],
) -> Result<bool, GradcheckError> {
    let (out, tape) = forward(arch, params, w, problem)?;
    match &arch.terminal {
        TerminalActivation::Relu => Ok(out.iter().all(|v| *v > KINK_MARGIN)
            || params_pre_terminal_margin(arch, params, w, problem)?),
        TerminalActivation::PrimalProjection { tol, .. } => {
            let raw_margin = params_pre_terminal_margin(arch, params, w, problem)?;
            let t_ok = tape.projection_t_star().map_or(true, |t| t == 0.0 || t > KINK_MARGIN);
            // Keep every constraint's activation test away from its boundary.
            let g = problem.functions().constraints(&pre_projection_point(
                arch, params, w, problem,
            )?);
            let act_ok = g.iter().all(|gj| (gj + tol).abs() > KINK_MARGIN * tol.max(1e-4));
            Ok(raw_margin && t_ok && act_ok)
        }
        TerminalActivation::DualNullspaceProjection { .. } => {
            let t_ok = tape.projection_t_star().map_or(true, |t| t == 0.0 || t > KINK_MARGIN);
            Ok(t_ok)
        }
        _ => Ok(true),
    }
}

fn pre_projection_point(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    w: &[f64],
    problem: &ProblemSpec,
) -> Result<Vec<f64>, GradcheckError> {
    // Identity twin of the architecture exposes the raw output.
    let mut twin = arch.clone();
    twin.terminal = TerminalActivation::Identity;
    let (z, _) = forward(&twin, params, w, problem)?;
    Ok(z)
}

fn params_pre_terminal_margin(
    arch: &NetworkArchitecture,
    params: &ParameterSet,
    w: &[f64],
    problem: &ProblemSpec,
) -> Result<bool, GradcheckError> {
    let z = pre_projection_point(arch, params, w, problem)?;
    Ok(z.iter().all(|v| v.abs() > KINK_MARGIN))
}

/// Random parameters with the output biases centered on `bias_center`
/// (usually the Slater point for primal networks, zero for dual ones), so
/// interior configurations come up at a usable rate.
fn spread_params(arch: &NetworkArchitecture, seed: u64, bias_center: Option<&[f64]>) -> ParameterSet {
    let mut params = init_params(arch, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1);
    let last = params.layers.len() - 1;
    for (j, b) in params.layers[last].bias.iter_mut().enumerate() {
        let center = bias_center.map_or(0.0, |c| c[j.min(c.len() - 1)]);
        *b = center + rng.gen_range(-0.4..0.4);
    }
    params
}

fn check_vjp(problem: &ProblemSpec, seed: u64, configs: usize) -> Result<f64, GradcheckError> {
    let (primal_arch, dual_arch) = small_networks(problem);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < configs {
        attempts += 1;
        if attempts > 200 * configs {
            return Err(GradcheckError::RejectionExhausted);
        }
        let (arch, center) = if done % 2 == 0 {
            (&primal_arch, Some(problem.slater_point()))
        } else {
            (&dual_arch, None)
        };
        let params = spread_params(arch, seed ^ attempts as u64, center);
        let w = random_simplex(problem.objective_dim(), &mut rng, problem.scalarization_floor());
        if !branch_margins_ok(problem, arch, &params, &w)? {
            continue;
        }
        let (out, tape) = forward(arch, &params, &w, problem)?;
        let cot: Vec<f64> = (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (grads, _) = vjp_params(arch, &params, &tape, &cot, problem)?;

        let eval = |p: &ParameterSet| -> Result<f64, GradcheckError> {
            let (o, _) = forward(arch, p, &w, problem)?;
            Ok(linalg::dot(&cot, &o))
        };
        let mut scale: f64 = 1e-8;
        for layer in &grads.layers {
            scale = scale.max(layer.weights.max_abs_entry());
            scale = scale.max(layer.bias.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
        for l in 0..params.layers.len() {
            let (rows, cols) = (params.layers[l].weights.rows(), params.layers[l].weights.cols());
            for i in 0..rows {
                for j in 0..cols {
                    let base = params.layers[l].weights.get(i, j);
                    let mut up = params.clone();
                    up.layers[l].weights.set(i, j, base + FD_STEP);
                    let mut dn = params.clone();
                    dn.layers[l].weights.set(i, j, base - FD_STEP);
                    let fd = (eval(&up)? - eval(&dn)?) / (2.0 * FD_STEP);
                    worst = worst.max((fd - grads.layers[l].weights.get(i, j)).abs() / scale);
                }
            }
            for j in 0..params.layers[l].bias.len() {
                let mut up = params.clone();
                up.layers[l].bias[j] += FD_STEP;
                let mut dn = params.clone();
                dn.layers[l].bias[j] -= FD_STEP;
                let fd = (eval(&up)? - eval(&dn)?) / (2.0 * FD_STEP);
                worst = worst.max((fd - grads.layers[l].bias[j]).abs() / scale);
            }
        }
        done += 1;
    }
    Ok(worst)
}

fn check_loss_gradient(
    problem: &ProblemSpec,
    seed: u64,
    configs: usize,
) -> Result<f64, GradcheckError> {
    let (primal_arch, dual_arch) = small_networks(problem);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = problem.default_delta();
    let cs_tol = 5e-5;
    let eta = 2.0;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    let mut attempts = 0;
    while done < configs {
        attempts += 1;
        if attempts > 200 * configs {
            return Err(GradcheckError::RejectionExhausted);
        }
        let pp = spread_params(&primal_arch, seed ^ (2 * attempts) as u64, Some(problem.slater_point()));
        let dp = spread_params(&dual_arch, seed ^ (2 * attempts + 1) as u64, None);
        let w = random_simplex(problem.objective_dim(), &mut rng, problem.scalarization_floor());
        if !branch_margins_ok(problem, &primal_arch, &pp, &w)?
            || !branch_margins_ok(problem, &dual_arch, &dp, &w)?
        {
            continue;
        }
        // An active projection pins its constraint exactly on the slackness
        // indicator boundary, where the loss is genuinely discontinuous;
        // sample interior configurations here (the projection branch
        // derivative is covered by the network-level check).
        let (x, tape_x) = forward(&primal_arch, &pp, &w, problem)?;
        if tape_x.projection_t_star() != Some(0.0) {
            continue;
        }
        let g = problem.evaluate(&x)?.g;
        if !g.iter().all(|gj| (gj + cs_tol).abs() > KINK_MARGIN * 1e-1) {
            continue;
        }
        let nets = NetworkPair {
            primal_arch: &primal_arch,
            primal_params: &pp,
            dual_arch: &dual_arch,
            dual_params: &dp,
        };
        let (gp, gd, _) = kkt_loss_gradient(problem, &nets, &w, eta, delta, cs_tol)?;

        let loss_of = |pp2: &ParameterSet, dp2: &ParameterSet| -> Result<f64, GradcheckError> {
            let (x, _) = forward(&primal_arch, pp2, &w, problem)?;
            let (l, _) = forward(&dual_arch, dp2, &w, problem)?;
            Ok(kkt_loss(problem, &x, &l, &w, eta, delta, cs_tol)?.total)
        };
        let mut scale: f64 = 1e-8;
        for layer in gp.layers.iter().chain(&gd.layers) {
            scale = scale.max(layer.weights.max_abs_entry());
            scale = scale.max(layer.bias.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        }
        // Primal parameters.
        for l in 0..pp.layers.len() {
            let (rows, cols) = (pp.layers[l].weights.rows(), pp.layers[l].weights.cols());
            for i in 0..rows {
                for j in 0..cols {
                    let base = pp.layers[l].weights.get(i, j);
                    let mut up = pp.clone();
                    up.layers[l].weights.set(i, j, base + FD_STEP);
                    let mut dn = pp.clone();
                    dn.layers[l].weights.set(i, j, base - FD_STEP);
                    let fd = (loss_of(&up, &dp)? - loss_of(&dn, &dp)?) / (2.0 * FD_STEP);
                    worst = worst.max((fd - gp.layers[l].weights.get(i, j)).abs() / scale);
                }
            }
            for j in 0..pp.layers[l].bias.len() {
                let mut up = pp.clone();
                up.layers[l].bias[j] += FD_STEP;
                let mut dn = pp.clone();
                dn.layers[l].bias[j] -= FD_STEP;
                let fd = (loss_of(&up, &dp)? - loss_of(&dn, &dp)?) / (2.0 * FD_STEP);
                worst = worst.max((fd - gp.layers[l].bias[j]).abs() / scale);
            }
        }
        // Dual parameters.
        for l in 0..dp.layers.len() {
            let (rows, cols) = (dp.layers[l].weights.rows(), dp.layers[l].weights.cols());
            for i in 0..rows {
                for j in 0..cols {
                    let base = dp.layers[l].weights.get(i, j);
                    let mut up = dp.clone();
                    up.layers[l].weights.set(i, j, base + FD_STEP);
                    let mut dn = dp.clone();
                    dn.layers[l].weights.set(i, j, base - FD_STEP);
                    let fd = (loss_of(&pp, &up)? - loss_of(&pp, &dn)?) / (2.0 * FD_STEP);
                    worst = worst.max((fd - gd.layers[l].weights.get(i, j)).abs() / scale);
                }
            }
            for j in 0..dp.layers[l].bias.len() {
                let mut up = dp.clone();
                up.layers[l].bias[j] += FD_STEP;
                let mut dn = dp.clone();
                dn.layers[l].bias[j] -= FD_STEP;
                let fd = (loss_of(&pp, &up)? - loss_of(&pp, &dn)?) / (2.0 * FD_STEP);
                worst = worst.max((fd - gd.layers[l].bias[j]).abs() / scale);
            }
        }
        done += 1;
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtins;

    #[test]
    fn gradcheck_passes_on_every_builtin() {
        let problems = vec![
            builtins::box_biobjective(5).unwrap(),
            builtins::test_instance_4(3, 6).unwrap(),
            builtins::hyperball(3, 0.01).unwrap().centered(),
            builtins::mean_variance_demo_descriptor().build().unwrap(),
            builtins::lvop_benchmark_descriptor().build().unwrap(),
        ];
        for problem in &problems {
            let report = run_gradcheck(problem, 1, 5).unwrap();
            assert!(
                report.overall() <= 1e-5,
                "{}: gradcheck max relative error {:.3e}",
                problem.name(),
                report.overall()
            );
        }
    }
}
