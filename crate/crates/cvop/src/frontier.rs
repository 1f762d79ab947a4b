//! Frontier assembly from trained networks: per-scalarization points with
//! their certified error bound ε(w) = wᵀf(x(w)) − d(λ(w), w), the inner
//! point cloud and outer half-space collection, support-function refinement
//! of the bound for bi-objective problems, and error statistics.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinAlgError, LinearProgram};
use crate::network::{forward, NetworkArchitecture, NetworkError, ParameterSet};
use crate::problem::{ProblemError, ProblemSpec, ScalarizationWeight};

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("outer approximation unbounded in the query direction (degenerate dual network)")]
    UnboundedOuter,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Linalg(#[from] LinAlgError),
}

/// One evaluated scalarization: primal point, objective values, multiplier,
/// dual value, and the certified bound ε(w) = wᵀf − dual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub lambda: Vec<f64>,
    pub dual: f64,
    pub epsilon: f64,
}

/// Generators of the inner upper set `cl co ∪ [f(x(w)) + R^P₊]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InnerApproximation {
    pub points: Vec<Vec<f64>>,
}

impl InnerApproximation {
    pub fn from_frontier(points: &[FrontierPoint]) -> Self {
        Self {
            points: points.iter().map(|p| p.f.clone()).collect(),
        }
    }
}

/// Half-spaces `{y : wᵀy ≥ d}` whose intersection is the outer set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterApproximation {
    pub halfspaces: Vec<(Vec<f64>, f64)>,
}

impl OuterApproximation {
    pub fn from_frontier(points: &[FrontierPoint]) -> Self {
        Self {
            halfspaces: points.iter().map(|p| (p.w.clone(), p.dual)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorStatistics {
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub max: f64,
}

/// The certified per-scalarization bound ε(w) = wᵀf(x) − d(λ, w);
/// nonnegative by weak duality up to the dual's convergence tolerance.
pub fn epsilon_bound(
    problem: &ProblemSpec,
    x: &[f64],
    lambda: &[f64],
    w: &ScalarizationWeight,
) -> Result<f64, FrontierError> {
    let f = problem.evaluate(x)?.f;
    let dual = problem.dual_value(lambda, w)?;
    Ok(linalg::dot(w.values(), &f) - dual)
}

/// Trained networks evaluated over a batch of scalarizations.
pub struct TrainedNetworks<'a> {
    pub primal_arch: &'a NetworkArchitecture,
    pub primal_params: &'a ParameterSet,
    pub dual_arch: &'a NetworkArchitecture,
    pub dual_params: &'a ParameterSet,
}

/// Evaluates both networks at every test scalarization, in input order.
///
/// When the problem was trained with a rescaled objective, the dual network
/// learned multipliers of the rescaled problem; they are divided back so the
/// reported multiplier, dual value, and ε refer to the true objective.
pub fn evaluate_frontier(
    problem: &ProblemSpec,
    nets: &TrainedNetworks,
    test_ws: &[ScalarizationWeight],
) -> Result<Vec<FrontierPoint>, FrontierError> {
    let scale = problem.objective_scale();
    test_ws
        .par_iter()
        .map(|w| -> Result<FrontierPoint, FrontierError> {
            let (x, _) = forward(nets.primal_arch, nets.primal_params, w.values(), problem)?;
            let (mut lambda, _) =
                forward(nets.dual_arch, nets.dual_params, w.values(), problem)?;
            if scale != 1.0 {
                for l in lambda.iter_mut() {
                    *l /= scale;
                }
            }
            let f = problem.evaluate(&x)?.f;
            let dual = problem.dual_value(&lambda, w)?;
            let epsilon = linalg::dot(w.values(), &f) - dual;
            Ok(FrontierPoint {
                w: w.values().to_vec(),
                x: problem.to_original_coords(&x),
                f,
                lambda,
                dual,
                epsilon,
            })
        })
        .collect()
}

/// Support-function refinement of the error bound for P = 2:
/// `s_in(w) − s_out(w)` with `s_in` the support of the inner point cloud and
/// `s_out` the minimum of `wᵀy` over the half-space intersection, computed by
/// the simplex solver through the LP dual. Never exceeds `epsilon_bound` at
/// the same `w` (up to solver tolerance).
pub fn realized_epsilon_2d(
    inner: &InnerApproximation,
    outer: &OuterApproximation,
    w: &ScalarizationWeight,
) -> Result<f64, FrontierError> {
    if w.len() != 2 {
        return Err(FrontierError::Unsupported(
            "realized errors are only defined for bi-objective problems".into(),
        ));
    }
    if inner.points.is_empty() || outer.halfspaces.is_empty() {
        return Err(FrontierError::EmptyInput(
            "need at least one inner point and one half-space".into(),
        ));
    }
    let s_in = inner
        .points
        .iter()
        .map(|y| linalg::dot(w.values(), y))
        .fold(f64::INFINITY, f64::min);

    // min wᵀy s.t. w_kᵀ y ≥ d_k has LP dual max Σ d_k μ_k s.t. Σ μ_k w_k = w,
    // μ ≥ 0, which fits the equality-form simplex directly.
    let k = outer.halfspaces.len();
    let mut eq = DenseMatrix::zeros(2, k);
    let mut cost = Vec::with_capacity(k);
    for (j, (wk, dk)) in outer.halfspaces.iter().enumerate() {
        eq.set(0, j, wk[0]);
        eq.set(1, j, wk[1]);
        cost.push(-dk);
    }
    let lp = LinearProgram {
        cost,
        eq_lhs: eq,
        eq_rhs: w.values().to_vec(),
        lower_bounds: vec![0.0; k],
    };
    let s_out = match linalg::simplex_solve(&lp) {
        Ok(mu) => outer
            .halfspaces
            .iter()
            .zip(&mu)
            .map(|((_, dk), m)| dk * m)
            .sum::<f64>(),
        // Dual infeasibility means the primal is unbounded below in w.
        Err(LinAlgError::LpInfeasible { .. }) => return Err(FrontierError::UnboundedOuter),
        Err(e) => return Err(e.into()),
    };
    Ok(s_in - s_out)
}

/// Order statistics with linear quantile interpolation; the 95% band is the
/// 2.5%/97.5% quantile pair.
pub fn error_stats(epsilons: &[f64]) -> Result<ErrorStatistics, FrontierError> {
    if epsilons.is_empty() {
        return Err(FrontierError::EmptyInput("no error values".into()));
    }
    let mut sorted = epsilons.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    let quantile = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    };
    Ok(ErrorStatistics {
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        median: quantile(0.5),
        q25: quantile(0.25),
        q75: quantile(0.75),
        ci95_low: quantile(0.025),
        ci95_high: quantile(0.975),
        max: *sorted.last().expect("nonempty"),
    })
}

const BASELINE_PROJECTION_TOL: f64 = 5e-5;

/// Naive benchmark: a random point in the problem's sampling box projected
/// to feasibility, paired with λ = 0, one fresh draw per test scalarization.
pub fn baseline_random(
    problem: &ProblemSpec,
    seed: u64,
    test_ws: &[ScalarizationWeight],
) -> Result<Vec<f64>, FrontierError> {
    let (lo, hi) = problem.baseline_box().ok_or_else(|| {
        FrontierError::Unsupported(format!(
            "{} does not define a baseline sampling box",
            problem.name()
        ))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.decision_dim();
    let draws: Vec<Vec<f64>> = (0..test_ws.len())
        .map(|_| {
            (0..n)
                .map(|j| {
                    if hi[j] > lo[j] {
                        rng.gen_range(lo[j]..hi[j])
                    } else {
                        lo[j]
                    }
                })
                .collect()
        })
        .collect();
    let zero_lambda = vec![0.0; problem.constraint_dim()];
    test_ws
        .par_iter()
        .zip(draws.par_iter())
        .map(|(w, raw)| {
            let (x, _, _) =
                crate::network::project_primal(raw, problem, BASELINE_PROJECTION_TOL)?;
            epsilon_bound(problem, &x, &zero_lambda, w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, NetworkArchitecture, TerminalActivation};
    use crate::problem::builtins;
    use crate::training::{sample_scalarizations, SamplingMode};

    fn w2(a: f64, b: f64) -> ScalarizationWeight {
        ScalarizationWeight::new(vec![a, b]).unwrap()
    }

    #[test]
    fn epsilon_bound_closed_form_pairs_are_exact() {
        use rand::prelude::*;
        let p = builtins::box_biobjective(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let w = w2(a, 1.0 - a);
            let (x, l) = p.closed_form_reference(&w).unwrap();
            let eps = epsilon_bound(&p, &x, &l, &w).unwrap();
            assert!(eps.abs() <= 1e-10, "ε = {eps} at w = ({a}, {})", 1.0 - a);
        }
        // Specific value from the closed forms at w = (0.75, 0.25).
        let w = w2(0.75, 0.25);
        let (x, l) = p.closed_form_reference(&w).unwrap();
        let f = p.evaluate(&x).unwrap().f;
        assert!((linalg::dot(w.values(), &f) - 0.75).abs() < 1e-12);
        assert!(epsilon_bound(&p, &x, &l, &w).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn epsilon_bound_naive_hyperball_constant() {
        let p = builtins::hyperball(4, 0.01).unwrap();
        let center = p.slater_point().to_vec();
        for a in [0.1, 0.5, 0.9] {
            let raw = vec![a, (1.0 - a) / 3.0, (1.0 - a) / 3.0, (1.0 - a) / 3.0];
            let s: f64 = raw.iter().sum();
            let w = ScalarizationWeight::new(raw.iter().map(|v| v / s).collect()).unwrap();
            let eps = epsilon_bound(&p, &center, &[0.0], &w).unwrap();
            assert!(
                (eps - 1.01f64.powi(2)).abs() < 1e-6,
                "ε = {eps}, expected (1+ε)² = {}",
                1.01f64.powi(2)
            );
        }
    }

    fn random_nets(
        problem: &ProblemSpec,
        seed: u64,
    ) -> (NetworkArchitecture, ParameterSet, NetworkArchitecture, ParameterSet) {
        let pa = NetworkArchitecture::new(
            problem.objective_dim(),
            &[8, 8],
            problem.decision_dim(),
            TerminalActivation::PrimalProjection {
                tol: 5e-5,
                pre_relu: false,
            },
        );
        let da = NetworkArchitecture::new(
            problem.objective_dim(),
            &[8, 8],
            problem.constraint_dim(),
            TerminalActivation::Relu,
        );
        (pa.clone(), init_params(&pa, seed), da.clone(), init_params(&da, seed + 1))
    }

    #[test]
    fn evaluate_frontier_basics() {
        let problem = builtins::box_biobjective(3).unwrap();
        let (pa, pp, da, dp) = random_nets(&problem, 4);
        let nets = TrainedNetworks {
            primal_arch: &pa,
            primal_params: &pp,
            dual_arch: &da,
            dual_params: &dp,
        };
        assert!(evaluate_frontier(&problem, &nets, &[]).unwrap().is_empty());

        let ws = sample_scalarizations(2, 21, &SamplingMode::Grid, 0.0, 0).unwrap();
        let points = evaluate_frontier(&problem, &nets, &ws).unwrap();
        assert_eq!(points.len(), 21);
        for (w, pt) in ws.iter().zip(&points) {
            assert_eq!(pt.w, w.values());
            let g = problem.evaluate(&pt.x).unwrap().g;
            assert!(g.iter().all(|v| *v <= 1e-12));
            assert!(pt.lambda.iter().all(|v| *v >= 0.0));
            assert!((pt.epsilon - (linalg::dot(&pt.w, &pt.f) - pt.dual)).abs() < 1e-12);
            // Weak duality with a closed-form dual.
            assert!(pt.epsilon >= -1e-9);
        }
    }

    #[test]
    fn realized_single_point_single_halfspace() {
        let inner = InnerApproximation {
            points: vec![vec![1.0, 2.0]],
        };
        let outer = OuterApproximation {
            halfspaces: vec![(vec![0.5, 0.5], 1.2)],
        };
        let w = w2(0.5, 0.5);
        let r = realized_epsilon_2d(&inner, &outer, &w).unwrap();
        assert!((r - (1.5 - 1.2)).abs() < 1e-12);
    }

    #[test]
    fn realized_exact_supports_coincide() {
        // Tangent half-space at the same direction as the inner point.
        let inner = InnerApproximation {
            points: vec![vec![1.0, 1.0]],
        };
        let outer = OuterApproximation {
            halfspaces: vec![(vec![0.5, 0.5], 1.0)],
        };
        let r = realized_epsilon_2d(&inner, &outer, &w2(0.5, 0.5)).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn realized_two_point_example_matches_grid_oracle() {
        // Box(N) exact duals at w ∈ {(¼,¾), (¾,¼)}, inner points from the
        // closed-form minimizers at w₂ = 1 and w₂ = ½.
        let inner = InnerApproximation {
            points: vec![vec![0.0, 4.0], vec![1.0, 1.0]],
        };
        let outer = OuterApproximation {
            halfspaces: vec![(vec![0.25, 0.75], 1.0), (vec![0.75, 0.25], 0.75)],
        };
        let w = w2(0.5, 0.5);
        let r = realized_epsilon_2d(&inner, &outer, &w).unwrap();

        // Brute-force oracle over a dense grid of the two support problems.
        let s_in_oracle = inner
            .points
            .iter()
            .map(|y| 0.5 * y[0] + 0.5 * y[1])
            .fold(f64::INFINITY, f64::min);
        let mut s_out_oracle = f64::INFINITY;
        let lim = 800;
        for i in 0..=lim {
            for j in 0..=lim {
                let y = [-2.0 + 8.0 * i as f64 / lim as f64, -2.0 + 8.0 * j as f64 / lim as f64];
                let ok = outer
                    .halfspaces
                    .iter()
                    .all(|(wk, dk)| wk[0] * y[0] + wk[1] * y[1] >= *dk - 1e-12);
                if ok {
                    s_out_oracle = s_out_oracle.min(0.5 * y[0] + 0.5 * y[1]);
                }
            }
        }
        let oracle = s_in_oracle - s_out_oracle;
        assert!(
            (r - oracle).abs() < 1e-2,
            "simplex route {r} vs grid oracle {oracle}"
        );
        // Exact value by hand: s_in = 1, vertex of the two half-spaces gives
        // s_out = 0.875.
        assert!((r - 0.125).abs() < 1e-9);
    }

    #[test]
    fn realized_unbounded_direction_is_flagged() {
        let inner = InnerApproximation {
            points: vec![vec![0.0, 0.0]],
        };
        // Both half-spaces share one normal; the query direction differs.
        let outer = OuterApproximation {
            halfspaces: vec![(vec![1.0, 0.0], 0.0), (vec![1.0, 0.0], -1.0)],
        };
        assert!(matches!(
            realized_epsilon_2d(&inner, &outer, &w2(0.5, 0.5)),
            Err(FrontierError::UnboundedOuter)
        ));
    }

    #[test]
    fn realized_never_exceeds_pointwise_bound() {
        let problem = builtins::box_biobjective(4).unwrap();
        let (pa, pp, da, dp) = random_nets(&problem, 9);
        let nets = TrainedNetworks {
            primal_arch: &pa,
            primal_params: &pp,
            dual_arch: &da,
            dual_params: &dp,
        };
        let ws = sample_scalarizations(2, 25, &SamplingMode::Grid, 0.0, 0).unwrap();
        let points = evaluate_frontier(&problem, &nets, &ws).unwrap();
        let inner = InnerApproximation::from_frontier(&points);
        let outer = OuterApproximation::from_frontier(&points);
        for (w, pt) in ws.iter().zip(&points) {
            let r = realized_epsilon_2d(&inner, &outer, w).unwrap();
            assert!(
                r <= pt.epsilon + 1e-9,
                "refinement {r} worse than bound {}",
                pt.epsilon
            );
        }
    }

    #[test]
    fn error_stats_examples() {
        let s = error_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.median, 2.0);
        assert_eq!(s.q25, 1.5);
        assert_eq!(s.q75, 2.5);
        assert_eq!(s.max, 3.0);

        let c = error_stats(&[0.7; 9]).unwrap();
        assert!((c.mean - 0.7).abs() < 1e-15);
        for v in [c.median, c.q25, c.q75, c.ci95_low, c.ci95_high, c.max] {
            assert_eq!(v, 0.7);
        }

        assert!(error_stats(&[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<f64> = (0..10_000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let u = error_stats(&draws).unwrap();
        assert!((u.mean - 0.5).abs() < 0.02);
        assert!(u.q25 <= u.median && u.median <= u.q75);
        assert!(u.ci95_low <= u.q25 && u.q75 <= u.ci95_high);
    }

    #[test]
    fn baseline_random_weak_duality() {
        let problem = builtins::box_biobjective(5).unwrap();
        let ws = sample_scalarizations(2, 40, &SamplingMode::Grid, 0.0, 0).unwrap();
        let eps = baseline_random(&problem, 7, &ws).unwrap();
        assert_eq!(eps.len(), 40);
        assert!(eps.iter().all(|e| *e >= -1e-8));
        // Determinism.
        let eps2 = baseline_random(&problem, 7, &ws).unwrap();
        assert_eq!(eps, eps2);
    }

    #[test]
    fn baseline_unsupported_without_box() {
        let problem = builtins::lvop_benchmark_descriptor().build().unwrap();
        let ws = sample_scalarizations(2, 3, &SamplingMode::Grid, 0.0, 0).unwrap();
        assert!(matches!(
            baseline_random(&problem, 0, &ws),
            Err(FrontierError::Unsupported(_))
        ));
    }
}
