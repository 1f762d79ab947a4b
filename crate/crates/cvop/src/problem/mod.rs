//! The convex vector optimization problem abstraction: `min f(x)` subject to
//! `g(x) ≤ 0` with strictly convex scalarizations, a strictly feasible Slater
//! point, analytic first derivatives, and weighted Hessian-vector products.
//!
//! Five benchmark problems live in [`builtins`]; user-defined problems supply
//! the same evaluator table through [`CvopFunctions`].

pub mod builtins;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinAlgError};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("non-finite entry in input")]
    NonFiniteInput,
    #[error("invalid problem parameters: {0}")]
    InvalidParameters(String),
    #[error("Slater point is not strictly feasible: g_{index}(x̄) = {value}")]
    SlaterViolation { index: usize, value: f64 },
    #[error("dual point infeasible: equality residual {residual:.3e}")]
    DualInfeasible { residual: f64 },
    #[error("inner minimization did not converge: final gradient norm {grad_norm:.3e}")]
    DualNotConverged { grad_norm: f64 },
    #[error("scalarization weight invalid: {0}")]
    InvalidWeight(String),
    #[error("weight component {index} below the problem floor {floor}")]
    WeightBelowFloor { index: usize, floor: f64 },
    #[error("unknown problem: {0}")]
    UnknownProblem(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinAlgError),
}

/// A weight on the unit simplex, the input space of both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarizationWeight(Vec<f64>);

impl ScalarizationWeight {
    pub fn new(w: Vec<f64>) -> Result<Self, ProblemError> {
        if w.is_empty() {
            return Err(ProblemError::InvalidWeight("empty weight".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFiniteInput);
        }
        if let Some((i, &v)) = w.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(ProblemError::InvalidWeight(format!("w[{i}] = {v} < 0")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ProblemError::InvalidWeight(format!(
                "components sum to {sum}, not 1"
            )));
        }
        Ok(Self(w))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for ScalarizationWeight {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Objective and constraint values with their Jacobians at one point.
#[derive(Debug, Clone)]
pub struct EvalBundle {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub jf: DenseMatrix,
    pub jg: DenseMatrix,
}

/// Value of the dual function together with its gradient in λ (which, by the
/// envelope theorem, is `g` at the inner minimizer).
#[derive(Debug, Clone)]
pub struct DualEval {
    pub value: f64,
    pub grad_lambda: Vec<f64>,
}

/// Evaluator table every problem must supply: objective/constraint values,
/// first derivatives, and the weighted second-derivative product
/// `Σ_i w_i ∇²f_i(x)·v + Σ_j λ_j ∇²g_j(x)·v`.
///
/// `dual` returns `None` when no closed form is available, in which case the
/// generic inner minimization takes over.
pub trait CvopFunctions: Send + Sync {
    fn objectives(&self, x: &[f64]) -> Vec<f64>;
    fn constraints(&self, x: &[f64]) -> Vec<f64>;
    fn objective_jacobian(&self, x: &[f64]) -> DenseMatrix;
    fn constraint_jacobian(&self, x: &[f64]) -> DenseMatrix;
    fn weighted_hessian_vp(&self, x: &[f64], w_obj: &[f64], lambda: &[f64], v: &[f64]) -> Vec<f64>;
    fn dual(&self, _lambda: &[f64], _w: &[f64]) -> Option<Result<DualEval, ProblemError>> {
        None
    }
}

/// Serializable description of a problem instance; the form stored in config
/// files and checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemDescriptor {
    BoxBiobjective {
        n: usize,
    },
    #[serde(rename = "test_instance_4")]
    TestInstance4 {
        p: usize,
        n: usize,
    },
    Hyperball {
        n: usize,
        #[serde(default = "default_ball_epsilon")]
        epsilon: f64,
        #[serde(default = "default_true")]
        centered: bool,
    },
    MeanVariance {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Lvop {
        c: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

fn default_ball_epsilon() -> f64 {
    0.01
}

fn default_true() -> bool {
    true
}

impl ProblemDescriptor {
    pub fn build(&self) -> Result<ProblemSpec, ProblemError> {
        builtins::make_builtin(self)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::BoxBiobjective { .. } => "box_biobjective",
            Self::TestInstance4 { .. } => "test_instance_4",
            Self::Hyperball { .. } => "hyperball",
            Self::MeanVariance { .. } => "mean_variance",
            Self::Lvop { .. } => "lvop",
        }
    }
}

/// Linear problem data kept around for the dual network machinery
/// (null-space basis of Aᵀ and the strictly feasible dual point LP).
#[derive(Debug, Clone)]
pub struct LvopData {
    pub c: DenseMatrix,
    pub a: DenseMatrix,
    pub b: Vec<f64>,
}

/// A fully constructed problem instance.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    n: usize,
    p: usize,
    m: usize,
    slater_point: Vec<f64>,
    g_at_slater: Vec<f64>,
    objective_scale: f64,
    scalarization_floor: f64,
    baseline_box: Option<(Vec<f64>, Vec<f64>)>,
    default_delta: f64,
    center_offset: Option<Vec<f64>>,
    lvop: Option<Arc<LvopData>>,
    descriptor: Option<ProblemDescriptor>,
    functions: Arc<dyn CvopFunctions>,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("p", &self.p)
            .field("m", &self.m)
            .finish()
    }
}

pub struct ProblemParts {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub m: usize,
    pub slater_point: Vec<f64>,
    pub objective_scale: f64,
    pub scalarization_floor: f64,
    pub baseline_box: Option<(Vec<f64>, Vec<f64>)>,
    pub default_delta: f64,
    pub lvop: Option<LvopData>,
    pub descriptor: Option<ProblemDescriptor>,
    pub functions: Arc<dyn CvopFunctions>,
}

impl ProblemSpec {
    /// Assembles and validates a problem. Checks dimensions, strict
    /// feasibility of the Slater point, and parameter sanity.
    pub fn assemble(parts: ProblemParts) -> Result<Self, ProblemError> {
        if parts.n == 0 || parts.p == 0 || parts.m == 0 {
            return Err(ProblemError::InvalidParameters(
                "N, P, M must all be at least 1".into(),
            ));
        }
        if !(parts.objective_scale > 0.0) {
            return Err(ProblemError::InvalidParameters(
                "objective_scale must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&parts.scalarization_floor) {
            return Err(ProblemError::InvalidParameters(
                "scalarization_floor must lie in [0, 1)".into(),
            ));
        }
        if parts.slater_point.len() != parts.n {
            return Err(ProblemError::DimensionMismatch(
                "Slater point length != N".into(),
            ));
        }
        let g_at_slater = parts.functions.constraints(&parts.slater_point);
        if g_at_slater.len() != parts.m {
            return Err(ProblemError::DimensionMismatch(
                "constraint evaluator returned wrong length".into(),
            ));
        }
        for (index, &value) in g_at_slater.iter().enumerate() {
            if !(value < 0.0) {
                return Err(ProblemError::SlaterViolation { index, value });
            }
        }
        Ok(Self {
            name: parts.name,
            n: parts.n,
            p: parts.p,
            m: parts.m,
            slater_point: parts.slater_point,
            g_at_slater,
            objective_scale: parts.objective_scale,
            scalarization_floor: parts.scalarization_floor,
            baseline_box: parts.baseline_box,
            default_delta: parts.default_delta,
            center_offset: None,
            lvop: parts.lvop.map(Arc::new),
            descriptor: parts.descriptor,
            functions: parts.functions,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn decision_dim(&self) -> usize {
        self.n
    }
    pub fn objective_dim(&self) -> usize {
        self.p
    }
    pub fn constraint_dim(&self) -> usize {
        self.m
    }
    pub fn slater_point(&self) -> &[f64] {
        &self.slater_point
    }
    pub fn g_at_slater(&self) -> &[f64] {
        &self.g_at_slater
    }
    pub fn objective_scale(&self) -> f64 {
        self.objective_scale
    }
    pub fn scalarization_floor(&self) -> f64 {
        self.scalarization_floor
    }
    pub fn baseline_box(&self) -> Option<(&[f64], &[f64])> {
        self.baseline_box.as_ref().map(|(l, h)| (&l[..], &h[..]))
    }
    pub fn default_delta(&self) -> f64 {
        self.default_delta
    }
    pub fn lvop_data(&self) -> Option<&LvopData> {
        self.lvop.as_deref()
    }
    pub fn descriptor(&self) -> Option<&ProblemDescriptor> {
        self.descriptor.as_ref()
    }
    pub fn center_offset(&self) -> Option<&[f64]> {
        self.center_offset.as_deref()
    }
    pub fn functions(&self) -> &dyn CvopFunctions {
        self.functions.as_ref()
    }

    /// Maps a decision vector back to the original coordinates when the
    /// problem was centered around its Slater point.
    pub fn to_original_coords(&self, x: &[f64]) -> Vec<f64> {
        match &self.center_offset {
            Some(off) => x.iter().zip(off).map(|(a, b)| a + b).collect(),
            None => x.to_vec(),
        }
    }

    /// Exact analytic values and first derivatives at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<EvalBundle, ProblemError> {
        if x.len() != self.n {
            return Err(ProblemError::DimensionMismatch(format!(
                "point has {} entries, problem has N = {}",
                x.len(),
                self.n
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFiniteInput);
        }
        Ok(EvalBundle {
            f: self.functions.objectives(x),
            g: self.functions.constraints(x),
            jf: self.functions.objective_jacobian(x),
            jg: self.functions.constraint_jacobian(x),
        })
    }

    /// `[(1−δ) Σ_i w_i ∇²f_i(x) + δ∇²f̄(x) + Σ_j λ_j ∇²g_j(x)]·v` with the
    /// augmentation term f̄(x) = ‖x‖², so ∇²f̄ = 2I.
    pub fn weighted_hvp(
        &self,
        x: &[f64],
        w: &[f64],
        lambda: &[f64],
        delta: f64,
        v: &[f64],
    ) -> Result<Vec<f64>, ProblemError> {
        if x.len() != self.n || v.len() != self.n || w.len() != self.p || lambda.len() != self.m {
            return Err(ProblemError::DimensionMismatch(
                "weighted_hvp shapes inconsistent".into(),
            ));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(ProblemError::InvalidParameters("delta must be in [0,1)".into()));
        }
        let any_bad = x
            .iter()
            .chain(v)
            .chain(w)
            .chain(lambda)
            .any(|t| !t.is_finite());
        if any_bad {
            return Err(ProblemError::NonFiniteInput);
        }
        let w_scaled: Vec<f64> = w.iter().map(|wi| (1.0 - delta) * wi).collect();
        let mut out = self.functions.weighted_hessian_vp(x, &w_scaled, lambda, v);
        if delta != 0.0 {
            for (o, vi) in out.iter_mut().zip(v) {
                *o += 2.0 * delta * vi;
            }
        }
        Ok(out)
    }

    /// The Lagrange dual function `d(λ, w)`. Uses the problem's closed form
    /// when one exists; otherwise the value of a converged numeric inner
    /// minimization, which upper-bounds the true infimum by at most the
    /// convergence tolerance.
    pub fn dual_value(
        &self,
        lambda: &[f64],
        w: &ScalarizationWeight,
    ) -> Result<f64, ProblemError> {
        Ok(self.dual_eval(lambda, w)?.value)
    }

    /// Dual value plus its λ-gradient (used by the duality-gap loss).
    pub fn dual_eval(
        &self,
        lambda: &[f64],
        w: &ScalarizationWeight,
    ) -> Result<DualEval, ProblemError> {
        if lambda.len() != self.m {
            return Err(ProblemError::DimensionMismatch(
                "multiplier length != M".into(),
            ));
        }
        if w.len() != self.p {
            return Err(ProblemError::DimensionMismatch("weight length != P".into()));
        }
        self.check_weight(w)?;
        match self.functions.dual(lambda, w.values()) {
            Some(res) => res,
            None => numeric_dual(
                self.functions.as_ref(),
                &self.slater_point,
                lambda,
                w.values(),
            ),
        }
    }

    /// Enforces the per-problem minimum admissible weight.
    pub fn check_weight(&self, w: &ScalarizationWeight) -> Result<(), ProblemError> {
        let floor = self.scalarization_floor;
        if floor > 0.0 {
            for (index, &v) in w.values().iter().enumerate() {
                if v < floor - 1e-15 {
                    return Err(ProblemError::WeightBelowFloor { index, floor });
                }
            }
        }
        Ok(())
    }

    /// Exact primal/dual solution pair when the problem has a closed form
    /// (only the box bi-objective problem does).
    pub fn closed_form_reference(
        &self,
        w: &ScalarizationWeight,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let desc = self.descriptor.as_ref()?;
        let ProblemDescriptor::BoxBiobjective { n } = desc else {
            return None;
        };
        let n = *n;
        let (w1, w2) = (w[0], w[1]);
        if w2 <= 0.5 {
            Some((vec![2.0 * w2; n], vec![0.0; 2 * n]))
        } else {
            let mut lambda = vec![0.0; 2 * n];
            let v = 2.0 / n as f64 * (w2 - w1);
            lambda[..n].fill(v);
            Some((vec![1.0; n], lambda))
        }
    }

    /// Shifts the problem so decisions are offsets from the Slater point:
    /// objectives become `f(x + x̄)`, constraints `g(x + x̄)`, and the new
    /// strictly feasible point is the origin.
    pub fn centered(&self) -> Self {
        if self.center_offset.is_some() {
            return self.clone();
        }
        let offset = self.slater_point.clone();
        let functions: Arc<dyn CvopFunctions> = Arc::new(CenteredFunctions {
            inner: Arc::clone(&self.functions),
            offset: offset.clone(),
        });
        let baseline_box = self.baseline_box.as_ref().map(|(lo, hi)| {
            (
                lo.iter().zip(&offset).map(|(a, b)| a - b).collect(),
                hi.iter().zip(&offset).map(|(a, b)| a - b).collect(),
            )
        });
        Self {
            name: self.name.clone(),
            n: self.n,
            p: self.p,
            m: self.m,
            slater_point: vec![0.0; self.n],
            g_at_slater: self.g_at_slater.clone(),
            objective_scale: self.objective_scale,
            scalarization_floor: self.scalarization_floor,
            baseline_box,
            default_delta: self.default_delta,
            center_offset: Some(offset),
            lvop: self.lvop.clone(),
            descriptor: self.descriptor.clone(),
            functions,
        }
    }

    /// View of the problem with objectives multiplied by `objective_scale`,
    /// used during training only. Evaluation paths keep the true objective;
    /// multipliers learned against the view relate to true multipliers by the
    /// same factor.
    pub fn training_view(&self) -> Self {
        if self.objective_scale == 1.0 {
            return self.clone();
        }
        let functions: Arc<dyn CvopFunctions> = Arc::new(ScaledFunctions {
            inner: Arc::clone(&self.functions),
            scale: self.objective_scale,
        });
        let mut view = self.clone();
        view.functions = functions;
        view
    }
}

/// Input-shift wrapper backing [`ProblemSpec::centered`].
struct CenteredFunctions {
    inner: Arc<dyn CvopFunctions>,
    offset: Vec<f64>,
}

impl CenteredFunctions {
    fn shift(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.offset).map(|(a, b)| a + b).collect()
    }
}

impl CvopFunctions for CenteredFunctions {
    fn objectives(&self, x: &[f64]) -> Vec<f64> {
        self.inner.objectives(&self.shift(x))
    }
    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        self.inner.constraints(&self.shift(x))
    }
    fn objective_jacobian(&self, x: &[f64]) -> DenseMatrix {
        self.inner.objective_jacobian(&self.shift(x))
    }
    fn constraint_jacobian(&self, x: &[f64]) -> DenseMatrix {
        self.inner.constraint_jacobian(&self.shift(x))
    }
    fn weighted_hessian_vp(&self, x: &[f64], w_obj: &[f64], lambda: &[f64], v: &[f64]) -> Vec<f64> {
        self.inner
            .weighted_hessian_vp(&self.shift(x), w_obj, lambda, v)
    }
    fn dual(&self, lambda: &[f64], w: &[f64]) -> Option<Result<DualEval, ProblemError>> {
        // The inner infimum ranges over all of R^N either way; the dual is
        // unchanged by the shift.
        self.inner.dual(lambda, w)
    }
}

/// Objective rescaling wrapper backing [`ProblemSpec::training_view`].
struct ScaledFunctions {
    inner: Arc<dyn CvopFunctions>,
    scale: f64,
}

impl CvopFunctions for ScaledFunctions {
    fn objectives(&self, x: &[f64]) -> Vec<f64> {
        self.inner
            .objectives(x)
            .into_iter()
            .map(|v| v * self.scale)
            .collect()
    }
    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        self.inner.constraints(x)
    }
    fn objective_jacobian(&self, x: &[f64]) -> DenseMatrix {
        let jf = self.inner.objective_jacobian(x);
        let mut data = jf.data().to_vec();
        for v in data.iter_mut() {
            *v *= self.scale;
        }
        DenseMatrix::from_vec(jf.rows(), jf.cols(), data).expect("shape preserved")
    }
    fn constraint_jacobian(&self, x: &[f64]) -> DenseMatrix {
        self.inner.constraint_jacobian(x)
    }
    fn weighted_hessian_vp(&self, x: &[f64], w_obj: &[f64], lambda: &[f64], v: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = w_obj.iter().map(|wi| wi * self.scale).collect();
        self.inner.weighted_hessian_vp(x, &scaled, lambda, v)
    }
    fn dual(&self, lambda: &[f64], w: &[f64]) -> Option<Result<DualEval, ProblemError>> {
        // d_s(λ, w) = s · d(λ/s, w); the λ-gradient is unchanged.
        let reduced: Vec<f64> = lambda.iter().map(|l| l / self.scale).collect();
        self.inner.dual(&reduced, w).map(|res| {
            res.map(|de| DualEval {
                value: de.value * self.scale,
                grad_lambda: de.grad_lambda,
            })
        })
    }
}

/// Generic inner minimization of the scalarized Lagrangian
/// `x ↦ wᵀf(x) + λᵀg(x)` by gradient descent with Armijo backtracking
/// (c = 1e-4, shrink ½), started at the Slater point. Stops at gradient norm
/// ≤ 1e-8 or 10⁵ iterations.
pub(crate) fn numeric_dual(
    fns: &dyn CvopFunctions,
    start: &[f64],
    lambda: &[f64],
    w: &[f64],
) -> Result<DualEval, ProblemError> {
    let value_at = |x: &[f64]| -> f64 {
        let f = fns.objectives(x);
        let g = fns.constraints(x);
        linalg::dot(w, &f) + linalg::dot(lambda, &g)
    };
    let grad_at = |x: &[f64]| -> Vec<f64> {
        let jf = fns.objective_jacobian(x);
        let jg = fns.constraint_jacobian(x);
        let mut grad = jf.tmatvec(w);
        let down = jg.tmatvec(lambda);
        for (gi, di) in grad.iter_mut().zip(&down) {
            *gi += di;
        }
        grad
    };

    let mut x = start.to_vec();
    let mut fx = value_at(&x);
    let mut step = 1.0_f64;
    let mut flat_iters = 0usize;
    const ARMIJO_C: f64 = 1e-4;
    const GRAD_TOL: f64 = 1e-8;
    // Value-based line search cannot certify gradients much below
    // √(L·ε·|f|); once decreases reach float resolution, a gradient at this
    // level leaves a value gap on the order of 1e-12 at worst.
    const GRAD_TOL_FLAT: f64 = 1e-6;
    const MAX_ITERS: usize = 100_000;

    for _ in 0..MAX_ITERS {
        let grad = grad_at(&x);
        let gnorm2 = linalg::dot(&grad, &grad);
        let gnorm = gnorm2.sqrt();
        if gnorm <= GRAD_TOL || (flat_iters >= 10 && gnorm <= GRAD_TOL_FLAT) {
            return Ok(DualEval {
                value: fx,
                grad_lambda: fns.constraints(&x),
            });
        }
        if !gnorm.is_finite() {
            return Err(ProblemError::DualNotConverged { grad_norm: gnorm });
        }
        // Backtracking from the previous accepted step, allowed to grow.
        step = (step * 2.0).min(1e6);
        let mut accepted = false;
        while step > 1e-20 {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
            let ft = value_at(&trial);
            if ft <= fx - ARMIJO_C * step * gnorm2 {
                if fx - ft <= 1e-15 * (1.0 + fx.abs()) {
                    flat_iters += 1;
                } else {
                    flat_iters = 0;
                }
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Function values have hit float resolution. The iterate is
            // converged for every practical purpose once the gradient is
            // small; the value error is on the order of gnorm².
            if gnorm <= 1e-6 {
                return Ok(DualEval {
                    value: fx,
                    grad_lambda: fns.constraints(&x),
                });
            }
            return Err(ProblemError::DualNotConverged { grad_norm: gnorm });
        }
    }
    let grad_norm = linalg::norm2(&grad_at(&x));
    Err(ProblemError::DualNotConverged { grad_norm })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_validation() {
        assert!(ScalarizationWeight::new(vec![0.5, 0.5]).is_ok());
        assert!(ScalarizationWeight::new(vec![0.5, 0.6]).is_err());
        assert!(ScalarizationWeight::new(vec![1.5, -0.5]).is_err());
        assert!(ScalarizationWeight::new(vec![]).is_err());
        assert!(ScalarizationWeight::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn weight_sum_tolerance() {
        // Within 1e-12 of 1 is accepted.
        let w = vec![1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0];
        assert!(ScalarizationWeight::new(w).is_ok());
    }
}
