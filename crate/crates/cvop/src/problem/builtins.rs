//! The built-in benchmark problems and their Lagrange duals.
//!
//! All constraints are written `g(x) ≤ 0`. Each problem supplies analytic
//! Jacobians and the weighted Hessian-vector product used to differentiate
//! the stationarity residual; duals are closed-form wherever the structure
//! allows, with the hyperball problem falling back to an inner minimization.

use std::sync::Arc;

use crate::linalg::{self, DenseMatrix};

use super::{
    numeric_dual, CvopFunctions, DualEval, LvopData, ProblemDescriptor, ProblemError,
    ProblemParts, ProblemSpec,
};

/// Builds one of the five built-in problems from its descriptor.
pub fn make_builtin(desc: &ProblemDescriptor) -> Result<ProblemSpec, ProblemError> {
    match desc {
        ProblemDescriptor::BoxBiobjective { n } => box_biobjective(*n),
        ProblemDescriptor::TestInstance4 { p, n } => test_instance_4(*p, *n),
        ProblemDescriptor::Hyperball {
            n,
            epsilon,
            centered,
        } => {
            let spec = hyperball(*n, *epsilon)?;
            Ok(if *centered { spec.centered() } else { spec })
        }
        ProblemDescriptor::MeanVariance { mean, covariance } => {
            let s = mean.len();
            let cov = DenseMatrix::from_rows(covariance)?;
            mean_variance(mean.clone(), cov).map_err(|e| match e {
                ProblemError::DimensionMismatch(msg) => ProblemError::InvalidParameters(format!(
                    "mean has {s} entries but covariance is inconsistent: {msg}"
                )),
                other => other,
            })
        }
        ProblemDescriptor::Lvop { c, a, b } => {
            let c = DenseMatrix::from_rows(c)?;
            let a = DenseMatrix::from_rows(a)?;
            lvop(c, a, b.clone())
        }
    }
}

/// Descriptor for the 2-objective, 5-constraint linear benchmark.
pub fn lvop_benchmark_descriptor() -> ProblemDescriptor {
    ProblemDescriptor::Lvop {
        c: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        a: vec![
            vec![-2.0, -1.0],
            vec![-1.0, -2.0],
            vec![1.0, 1.0],
            vec![-1.0, 0.0],
            vec![0.0, -1.0],
        ],
        b: vec![-2.0, -2.0, 6.0, 0.0, 0.0],
    }
}

/// Small deterministic mean-variance instance for demos and gradient checks.
pub fn mean_variance_demo_descriptor() -> ProblemDescriptor {
    let s = 6;
    let mean: Vec<f64> = (0..s).map(|i| 0.5 + 0.4 * i as f64).collect();
    let mut cov = vec![vec![0.0; s]; s];
    for i in 0..s {
        for j in 0..s {
            cov[i][j] = if i == j {
                2.0 + 0.3 * i as f64
            } else {
                0.4 / (1.0 + (i as f64 - j as f64).abs())
            };
        }
    }
    ProblemDescriptor::MeanVariance {
        mean,
        covariance: cov,
    }
}

// ---------------------------------------------------------------------------
// Box bi-objective: min (‖x‖², ‖x − 2·1‖²)/N over [0,1]^N
// ---------------------------------------------------------------------------

struct BoxBiobjective {
    n: usize,
}

impl BoxBiobjective {
    /// Aᵀλ for the box constraint matrix A = (I, −I)ᵀ.
    fn at_lambda(&self, lambda: &[f64]) -> Vec<f64> {
        (0..self.n).map(|j| lambda[j] - lambda[self.n + j]).collect()
    }
}

impl CvopFunctions for BoxBiobjective {
    fn objectives(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n as f64;
        let a: f64 = x.iter().map(|v| v * v).sum();
        let b: f64 = x.iter().map(|v| (v - 2.0) * (v - 2.0)).sum();
        vec![a / n, b / n]
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        let mut g = Vec::with_capacity(2 * self.n);
        g.extend(x.iter().map(|v| v - 1.0));
        g.extend(x.iter().map(|v| -v));
        g
    }

    fn objective_jacobian(&self, x: &[f64]) -> DenseMatrix {
        let n = self.n as f64;
        let mut data = Vec::with_capacity(2 * self.n);
        data.extend(x.iter().map(|v| 2.0 * v / n));
        data.extend(x.iter().map(|v| 2.0 * (v - 2.0) / n));
        DenseMatrix::from_vec(2, self.n, data).expect("shape")
    }

    fn constraint_jacobian(&self, _x: &[f64]) -> DenseMatrix {
        let mut jg = DenseMatrix::zeros(2 * self.n, self.n);
        for j in 0..self.n {
            jg.set(j, j, 1.0);
            jg.set(self.n + j, j, -1.0);
        }
        jg
    }

    fn weighted_hessian_vp(&self, _x: &[f64], w_obj: &[f64], _l: &[f64], v: &[f64]) -> Vec<f64> {
        let coef = 2.0 * (w_obj[0] + w_obj[1]) / self.n as f64;
        v.iter().map(|vi| coef * vi).collect()
    }

    fn dual(&self, lambda: &[f64], w: &[f64]) -> Option<Result<DualEval, ProblemError>> {
        // d(λ, w) = −(N/4)·λᵀAAᵀλ + (2w₂A1 − b)ᵀλ + 4w₁w₂ from the quadratic
        // structure of the scalarized Lagrangian.
        let n = self.n as f64;
        let (w1, w2) = (w[0], w[1]);
        let u = self.at_lambda(lambda);
        let quad: f64 = linalg::dot(&u, &u);
        let mut linear = 0.0;
        for j in 0..self.n {
            linear += (2.0 * w2 - 1.0) * lambda[j] - 2.0 * w2 * lambda[self.n + j];
        }
        let value = -(n / 4.0) * quad + linear + 4.0 * w1 * w2;
        let mut grad = vec![0.0; 2 * self.n];
        for j in 0..self.n {
            grad[j] = -(n / 2.0) * u[j] + (2.0 * w2 - 1.0);
            grad[self.n + j] = (n / 2.0) * u[j] - 2.0 * w2;
        }
        Some(Ok(DualEval {
            value,
            grad_lambda: grad,
        }))
    }
}

/// The two-objective box problem; trained with objectives rescaled by N.
pub fn box_biobjective(n: usize) -> Result<ProblemSpec, ProblemError> {
    if n == 0 {
        return Err(ProblemError::InvalidParameters("n must be ≥ 1".into()));
    }
    ProblemSpec::assemble(ProblemParts {
        name: format!("box_biobjective(n={n})"),
        n,
        p: 2,
        m: 2 * n,
        slater_point: vec![0.5; n],
        objective_scale: n as f64,
        scalarization_floor: 0.0,
        baseline_box: Some((vec![0.0; n], vec![1.0; n])),
        default_delta: 0.0,
        lvop: None,
        descriptor: Some(ProblemDescriptor::BoxBiobjective { n }),
        functions: Arc::new(BoxBiobjective { n }),
    })
}

// ---------------------------------------------------------------------------
// Test instance 4: f_i(x) = (x_i − 1)² + Σ_{j≠i} x_j², g = f − 1, P = M ≤ N
// ---------------------------------------------------------------------------

struct TestInstance4 {
    p: usize,
    n: usize,
}

impl TestInstance4 {
    fn f_values(&self, x: &[f64]) -> Vec<f64> {
        let sq: f64 = x.iter().map(|v| v * v).sum();
        (0..self.p).map(|i| sq - 2.0 * x[i] + 1.0).collect()
    }
}

impl CvopFunctions for TestInstance4 {
    fn objectives(&self, x: &[f64]) -> Vec<f64> {
        self.f_values(x)
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        self.f_values(x).into_iter().map(|v| v - 1.0).collect()
    }

    fn objective_jacobian(&self, x: &[f64]) -> DenseMatrix {
        let mut jf = DenseMatrix::zeros(self.p, self.n);
        for i in 0..self.p {
            for j in 0..self.n {
                let mut v = 2.0 * x[j];
                if i == j {
                    v -= 2.0;
                }
                jf.set(i, j, v);
            }
        }
        jf
    }

    fn constraint_jacobian(&self, x: &[f64]) -> DenseMatrix {
        self.objective_jacobian(x)
    }

    fn weighted_hessian_vp(&self, _x: &[f64], w_obj: &[f64], lambda: &[f64], v: &[f64]) -> Vec<f64> {
        let coef = 2.0 * (w_obj.iter().sum::<f64>() + lambda.iter().sum::<f64>());
        v.iter().map(|vi| coef * vi).collect()
    }

    fn dual(&self, lambda: &[f64], w: &[f64]) -> Option<Result<DualEval, ProblemError>> {
        // Inner minimizer u has u_i = (w_i + λ_i)/Σ(w_j + λ_j) on the first P
        // coordinates and 0 elsewhere.
        let coeffs: Vec<f64> = (0..self.p).map(|i| w[i] + lambda[i]).collect();
        let s: f64 = coeffs.iter().sum();
        if s <= 0.0 {
            return Some(Err(ProblemError::InvalidParameters(
                "test_instance_4 dual needs Σ(w + λ) > 0".into(),
            )));
        }
        let mut u = vec![0.0; self.n];
        for i in 0..self.p {
            u[i] = coeffs[i] / s;
        }
        let f_u = self.f_values(&u);
        let value = (0..self.p)
            .map(|i| coeffs[i] * f_u[i] - lambda[i])
            .sum::<f64>();
        let grad = f_u.iter().map(|v| v - 1.0).collect();
        Some(Ok(DualEval {
            value,
            grad_lambda: grad,
        }))
    }
}

pub fn test_instance_4(p: usize, n: usize) -> Result<ProblemSpec, ProblemError> {
    if p == 0 || n < p {
        return Err(ProblemError::InvalidParameters(
            "test_instance_4 requires 1 ≤ P = M ≤ N".into(),
        ));
    }
    let mut slater = vec![0.0; n];
    slater[..p].fill(1.0 / p as f64);
    let mut box_hi = vec![0.0; n];
    box_hi[..p].fill(1.0);
    ProblemSpec::assemble(ProblemParts {
        name: format!("test_instance_4(p={p}, n={n})"),
        n,
        p,
        m: p,
        slater_point: slater,
        objective_scale: 1.0,
        scalarization_floor: 0.0,
        baseline_box: Some((vec![0.0; n], box_hi)),
        default_delta: 0.0,
        lvop: None,
        descriptor: Some(ProblemDescriptor::TestInstance4 { p, n }),
        functions: Arc::new(TestInstance4 { p, n }),
    })
}

// ---------------------------------------------------------------------------
// Hyperball: f_i(x) = x_i², one constraint ‖x − (1+ε)1‖₂ ≤ 1, P = N
// ---------------------------------------------------------------------------

struct Hyperball {
    n: usize,
    center: Vec<f64>,
}

impl CvopFunctions for Hyperball {
    fn objectives(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v * v).collect()
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        let r2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        vec![r2.sqrt() - 1.0]
    }

    fn objective_jacobian(&self, x: &[f64]) -> DenseMatrix {
        let mut jf = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            jf.set(i, i, 2.0 * x[i]);
        }
        jf
    }

    fn constraint_jacobian(&self, x: &[f64]) -> DenseMatrix {
        // ∇g = (x − c)/‖x − c‖; the center is nondifferentiable, where the
        // zero subgradient is returned (the center is never a minimizer of
        // interest).
        let diff: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let r = linalg::norm2(&diff);
        let mut jg = DenseMatrix::zeros(1, self.n);
        if r > 0.0 {
            for j in 0..self.n {
                jg.set(0, j, diff[j] / r);
            }
        }
        jg
    }

    fn weighted_hessian_vp(&self, x: &[f64], w_obj: &[f64], lambda: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = w_obj
            .iter()
            .zip(v)
            .map(|(wi, vi)| 2.0 * wi * vi)
            .collect();
        // ∇²g = (I − uuᵀ)/r away from the center.
        let diff: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let r = linalg::norm2(&diff);
        if r > 0.0 && lambda[0] != 0.0 {
            let u: Vec<f64> = diff.iter().map(|d| d / r).collect();
            let uv = linalg::dot(&u, v);
            for j in 0..self.n {
                out[j] += lambda[0] * (v[j] - u[j] * uv) / r;
            }
        }
        out
    }

    fn dual(&self, lambda: &[f64], w: &[f64]) -> Option<Result<DualEval, ProblemError>> {
        let l = lambda[0];
        // Subgradient optimality at the cone point: the Lagrangian is
        // minimized exactly at the center when ‖2 w∘c‖₂ ≤ λ, where gradient
        // descent cannot certify convergence.
        let wc: Vec<f64> = w
            .iter()
            .zip(&self.center)
            .map(|(wi, ci)| 2.0 * wi * ci)
            .collect();
        if linalg::norm2(&wc) <= l {
            let value = w
                .iter()
                .zip(&self.center)
                .map(|(wi, ci)| wi * ci * ci)
                .sum::<f64>()
                - l;
            return Some(Ok(DualEval {
                value,
                grad_lambda: vec![-1.0],
            }));
        }
        Some(numeric_dual(self, &self.center, lambda, w))
    }
}

pub fn hyperball(n: usize, epsilon: f64) -> Result<ProblemSpec, ProblemError> {
    if n == 0 {
        return Err(ProblemError::InvalidParameters("n must be ≥ 1".into()));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(ProblemError::InvalidParameters(
            "hyperball epsilon must be positive".into(),
        ));
    }
    let center = vec![1.0 + epsilon; n];
    let lo: Vec<f64> = center.iter().map(|c| c - 1.0).collect();
    let hi: Vec<f64> = center.iter().map(|c| c + 1.0).collect();
    ProblemSpec::assemble(ProblemParts {
        name: format!("hyperball(n={n}, eps={epsilon})"),
        n,
        p: n,
        m: 1,
        slater_point: center.clone(),
        objective_scale: 1.0,
        scalarization_floor: 0.0,
        baseline_box: Some((lo, hi)),
        default_delta: 0.0,
        lvop: None,
        descriptor: Some(ProblemDescriptor::Hyperball {
            n,
            epsilon,
            centered: false,
        }),
        functions: Arc::new(Hyperball { n, center }),
    })
}

// ---------------------------------------------------------------------------
// Mean-variance: min (−r̄ᵀx̂, ½x̂ᵀCx̂) with 1ᵀx̂ = 1, x̂ ≥ 0, eliminated to
// x̂ = Bx + e_S over x ∈ R^{S−1}
// ---------------------------------------------------------------------------

struct MeanVariance {
    s: usize,
    r_bar: Vec<f64>,
    cov: DenseMatrix,
    basis: DenseMatrix,   // S×(S−1): (I, −1)ᵀ
    btcb: DenseMatrix,    // BᵀCB
    bt_r: Vec<f64>,       // Bᵀr̄
    btc_last: Vec<f64>,   // BᵀC e_S
}

impl MeanVariance {
    fn full_portfolio(&self, x: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(self.s);
        full.extend_from_slice(x);
        full.push(1.0 - x.iter().sum::<f64>());
        full
    }
}

impl CvopFunctions for MeanVariance {
    fn objectives(&self, x: &[f64]) -> Vec<f64> {
        let full = self.full_portfolio(x);
        let cx = self.cov.matvec(&full);
        vec![
            -linalg::dot(&self.r_bar, &full),
            0.5 * linalg::dot(&full, &cx),
        ]
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        self.full_portfolio(x).into_iter().map(|v| -v).collect()
    }

    fn objective_jacobian(&self, x: &[f64]) -> DenseMatrix {
        let full = self.full_portfolio(x);
        let cx = self.cov.matvec(&full);
        let grad2 = self.basis.tmatvec(&cx);
        let n = self.s - 1;
        let mut jf = DenseMatrix::zeros(2, n);
        for j in 0..n {
            jf.set(0, j, -self.bt_r[j]);
            jf.set(1, j, grad2[j]);
        }
        jf
    }

    fn constraint_jacobian(&self, _x: &[f64]) -> DenseMatrix {
        let n = self.s - 1;
        let mut jg = DenseMatrix::zeros(self.s, n);
        for j in 0..n {
            jg.set(j, j, -1.0);
            jg.set(self.s - 1, j, 1.0);
        }
        jg
    }

    fn weighted_hessian_vp(&self, _x: &[f64], w_obj: &[f64], _l: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = self.btcb.matvec(v);
        for o in out.iter_mut() {
            *o *= w_obj[1];
        }
        out
    }

    fn dual(&self, lambda: &[f64], w: &[f64]) -> Option<Result<DualEval, ProblemError>> {
        let (w1, w2) = (w[0], w[1]);
        if w2 < 1e-12 {
            return Some(Err(ProblemError::WeightBelowFloor {
                index: 1,
                floor: 1e-12,
            }));
        }
        // Stationarity of the reduced Lagrangian:
        //   w₂ BᵀCB x = w₁ Bᵀr̄ + Bᵀλ − w₂ BᵀC e_S.
        let n = self.s - 1;
        let bt_lambda = self.basis.tmatvec(lambda);
        let mut rhs = vec![0.0; n];
        for j in 0..n {
            rhs[j] = w1 * self.bt_r[j] + bt_lambda[j] - w2 * self.btc_last[j];
        }
        let mut lhs = self.btcb.clone();
        let mut data = lhs.data().to_vec();
        for v in data.iter_mut() {
            *v *= w2;
        }
        lhs = DenseMatrix::from_vec(n, n, data).expect("shape");
        let x_star = match lhs.solve(&rhs) {
            Ok(x) => x,
            Err(e) => return Some(Err(e.into())),
        };
        let full = self.full_portfolio(&x_star);
        let cx = self.cov.matvec(&full);
        let value = -w1 * linalg::dot(&self.r_bar, &full) + 0.5 * w2 * linalg::dot(&full, &cx)
            - linalg::dot(lambda, &full);
        let grad = full.iter().map(|v| -v).collect();
        Some(Ok(DualEval {
            value,
            grad_lambda: grad,
        }))
    }
}

/// Builds the reduced mean-variance problem from (already rescaled) mean
/// returns and a positive-definite covariance matrix.
pub fn mean_variance(r_bar: Vec<f64>, cov: DenseMatrix) -> Result<ProblemSpec, ProblemError> {
    let s = r_bar.len();
    if s < 2 {
        return Err(ProblemError::InvalidParameters(
            "mean_variance needs at least 2 assets".into(),
        ));
    }
    if cov.rows() != s || cov.cols() != s {
        return Err(ProblemError::DimensionMismatch(format!(
            "covariance is {}x{}, expected {s}x{s}",
            cov.rows(),
            cov.cols()
        )));
    }
    let scale = cov.max_abs_entry().max(1e-30);
    for i in 0..s {
        for j in 0..i {
            if (cov.get(i, j) - cov.get(j, i)).abs() > 1e-8 * scale {
                return Err(ProblemError::InvalidParameters(
                    "covariance matrix is not symmetric".into(),
                ));
            }
        }
    }
    cholesky_check(&cov).map_err(|min_pivot| {
        ProblemError::InvalidParameters(format!(
            "covariance matrix is not positive definite (pivot {min_pivot:.3e})"
        ))
    })?;

    let n = s - 1;
    let mut basis = DenseMatrix::zeros(s, n);
    for j in 0..n {
        basis.set(j, j, 1.0);
        basis.set(s - 1, j, -1.0);
    }
    let btcb = basis.transpose().matmul(&cov.matmul(&basis));
    let bt_r = basis.tmatvec(&r_bar);
    let c_last: Vec<f64> = (0..s).map(|i| cov.get(i, s - 1)).collect();
    let btc_last = basis.tmatvec(&c_last);

    let desc = ProblemDescriptor::MeanVariance {
        mean: r_bar.clone(),
        covariance: (0..s).map(|i| cov.row(i).to_vec()).collect(),
    };
    ProblemSpec::assemble(ProblemParts {
        name: format!("mean_variance(assets={s})"),
        n,
        p: 2,
        m: s,
        slater_point: vec![7.5e-5; n],
        objective_scale: 1.0,
        scalarization_floor: 1e-5,
        baseline_box: None,
        default_delta: 0.0,
        lvop: None,
        descriptor: Some(desc),
        functions: Arc::new(MeanVariance {
            s,
            r_bar,
            cov,
            basis,
            btcb,
            bt_r,
            btc_last,
        }),
    })
}

/// Plain Cholesky used as the positive-definiteness test. Returns the
/// offending pivot on failure.
fn cholesky_check(a: &DenseMatrix) -> Result<(), f64> {
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    let tol = 1e-12 * a.max_abs_entry().max(1e-30);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= tol {
                    return Err(sum);
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// LVOP: min Cx subject to Ax ≤ b
// ---------------------------------------------------------------------------

struct Lvop {
    c: DenseMatrix,
    a: DenseMatrix,
    b: Vec<f64>,
}

impl CvopFunctions for Lvop {
    fn objectives(&self, x: &[f64]) -> Vec<f64> {
        self.c.matvec(x)
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.a.matvec(x);
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi -= bi;
        }
        g
    }

    fn objective_jacobian(&self, _x: &[f64]) -> DenseMatrix {
        self.c.clone()
    }

    fn constraint_jacobian(&self, _x: &[f64]) -> DenseMatrix {
        self.a.clone()
    }

    fn weighted_hessian_vp(&self, _x: &[f64], _w: &[f64], _l: &[f64], v: &[f64]) -> Vec<f64> {
        vec![0.0; v.len()]
    }

    fn dual(&self, lambda: &[f64], w: &[f64]) -> Option<Result<DualEval, ProblemError>> {
        // d(λ, w) = −bᵀλ on the affine set Aᵀλ = −Cᵀw and −∞ off it.
        let mut residual_vec = self.a.tmatvec(lambda);
        let ct_w = self.c.tmatvec(w);
        for (r, c) in residual_vec.iter_mut().zip(&ct_w) {
            *r += c;
        }
        let residual = linalg::norm_inf(&residual_vec);
        if residual > 1e-6 {
            return Some(Err(ProblemError::DualInfeasible { residual }));
        }
        Some(Ok(DualEval {
            value: -linalg::dot(&self.b, lambda),
            grad_lambda: self.b.iter().map(|v| -v).collect(),
        }))
    }
}

pub fn lvop(c: DenseMatrix, a: DenseMatrix, b: Vec<f64>) -> Result<ProblemSpec, ProblemError> {
    let n = a.cols();
    let m = a.rows();
    let p = c.rows();
    if c.cols() != n || b.len() != m {
        return Err(ProblemError::DimensionMismatch(
            "lvop shapes inconsistent: C is PxN, A is MxN, b has M entries".into(),
        ));
    }
    if m < n {
        return Err(ProblemError::InvalidParameters(
            "lvop needs at least N constraints for the dual null-space construction".into(),
        ));
    }
    // Full column rank is required so (Aᵀ)⊥ has dimension M − N.
    let rank_tol = 1e-10 * a.max_abs_entry().max(1.0);
    let kernel = linalg::null_space_basis(&a, rank_tol)?;
    if kernel.cols() != 0 {
        return Err(ProblemError::InvalidParameters(
            "lvop constraint matrix A must have full column rank".into(),
        ));
    }
    let slater = chebyshev_interior_point(&a, &b)?;
    let data = LvopData {
        c: c.clone(),
        a: a.clone(),
        b: b.clone(),
    };
    let desc = ProblemDescriptor::Lvop {
        c: (0..p).map(|i| c.row(i).to_vec()).collect(),
        a: (0..m).map(|i| a.row(i).to_vec()).collect(),
        b: b.clone(),
    };
    ProblemSpec::assemble(ProblemParts {
        name: format!("lvop(p={p}, n={n}, m={m})"),
        n,
        p,
        m,
        slater_point: slater,
        objective_scale: 1.0,
        scalarization_floor: 0.0,
        baseline_box: None,
        default_delta: 1e-4,
        lvop: Some(data),
        descriptor: Some(desc),
        functions: Arc::new(Lvop { c, a, b }),
    })
}

/// Strictly feasible point of {Ax ≤ b} by a Chebyshev-style LP: maximize the
/// uniform slack t (capped at 1) subject to Ax + t·r ≤ b with r the row
/// norms of A.
fn chebyshev_interior_point(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, ProblemError> {
    let n = a.cols();
    let m = a.rows();
    // Variables: x⁺ (n), x⁻ (n), t, slack s (m), cap u; all ≥ 0.
    let nv = 2 * n + 1 + m + 1;
    let mut eq = DenseMatrix::zeros(m + 1, nv);
    let mut rhs = Vec::with_capacity(m + 1);
    for i in 0..m {
        let rnorm = linalg::norm2(a.row(i)).max(1e-12);
        for j in 0..n {
            eq.set(i, j, a.get(i, j));
            eq.set(i, n + j, -a.get(i, j));
        }
        eq.set(i, 2 * n, rnorm);
        eq.set(i, 2 * n + 1 + i, 1.0);
        rhs.push(b[i]);
    }
    // t + u = 1 keeps the LP bounded.
    eq.set(m, 2 * n, 1.0);
    eq.set(m, nv - 1, 1.0);
    rhs.push(1.0);
    let mut cost = vec![0.0; nv];
    cost[2 * n] = -1.0;
    let lp = linalg::LinearProgram {
        cost,
        eq_lhs: eq,
        eq_rhs: rhs,
        lower_bounds: vec![0.0; nv],
    };
    let sol = linalg::simplex_solve(&lp)?;
    let t = sol[2 * n];
    if t <= 1e-9 {
        return Err(ProblemError::InvalidParameters(
            "lvop feasible region has empty interior".into(),
        ));
    }
    Ok((0..n).map(|j| sol[j] - sol[n + j]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ScalarizationWeight;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn w2(a: f64, b: f64) -> ScalarizationWeight {
        ScalarizationWeight::new(vec![a, b]).unwrap()
    }

    fn all_default_problems() -> Vec<ProblemSpec> {
        vec![
            box_biobjective(40).unwrap(),
            test_instance_4(3, 6).unwrap(),
            make_builtin(&ProblemDescriptor::Hyperball {
                n: 4,
                epsilon: 0.01,
                centered: true,
            })
            .unwrap(),
            mean_variance_demo_descriptor().build().unwrap(),
            lvop_benchmark_descriptor().build().unwrap(),
        ]
    }

    #[test]
    fn box_evaluate_matches_hand_values() {
        let p = box_biobjective(2).unwrap();
        let e = p.evaluate(&[0.0, 0.0]).unwrap();
        assert_eq!(e.f, vec![0.0, 4.0]);
        assert_eq!(e.g, vec![-1.0, -1.0, 0.0, 0.0]);

        let e = p.evaluate(&[1.0, 1.0]).unwrap();
        assert_eq!(e.jf.row(0), &[1.0, 1.0]);
        assert_eq!(e.jf.row(1), &[-1.0, -1.0]);
    }

    #[test]
    fn evaluate_rejects_non_finite() {
        let p = box_biobjective(2).unwrap();
        assert!(matches!(
            p.evaluate(&[f64::INFINITY, 0.0]),
            Err(ProblemError::NonFiniteInput)
        ));
    }

    #[test]
    fn test_instance_4_hand_values() {
        let p = test_instance_4(2, 2).unwrap();
        let e = p.evaluate(&[0.5, 0.5]).unwrap();
        assert!((e.f[0] - 0.5).abs() < 1e-15);
        assert!((e.f[1] - 0.5).abs() < 1e-15);
        assert!((e.g[0] + 0.5).abs() < 1e-15);
        assert!((e.g[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn box_dual_examples() {
        let p = box_biobjective(2).unwrap();
        let d = p.dual_value(&[0.0; 4], &w2(0.5, 0.5)).unwrap();
        assert!((d - 1.0).abs() < 1e-14);

        let d = p
            .dual_value(&[0.5, 0.5, 0.0, 0.0], &w2(0.25, 0.75))
            .unwrap();
        assert!((d - 1.0).abs() < 1e-14, "got {d}");
        // Strong duality at the true KKT pair: wᵀf(x*) = 1.
        let (x_star, _) = p.closed_form_reference(&w2(0.25, 0.75)).unwrap();
        let f = p.evaluate(&x_star).unwrap().f;
        assert!((0.25 * f[0] + 0.75 * f[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn box_dual_arbitrary_n() {
        // d(0, w) = 4 w1 w2 for any N.
        let p = box_biobjective(7).unwrap();
        let d = p.dual_value(&[0.0; 14], &w2(0.3, 0.7)).unwrap();
        assert!((d - 4.0 * 0.3 * 0.7).abs() < 1e-14);
    }

    #[test]
    fn test_instance_4_dual_example() {
        for n in [2usize, 5] {
            let p = test_instance_4(2, n).unwrap();
            let d = p.dual_value(&[0.0, 0.0], &w2(0.5, 0.5)).unwrap();
            assert!((d - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn test_instance_4_dual_matches_numeric_minimization() {
        let p = test_instance_4(3, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let lambda: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..2.0)).collect();
            let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let w = ScalarizationWeight::new(raw.iter().map(|r| r / s).collect()).unwrap();
            let closed = p.dual_value(&lambda, &w).unwrap();
            let numeric = numeric_dual(p.functions(), p.slater_point(), &lambda, w.values())
                .unwrap()
                .value;
            assert!(
                (closed - numeric).abs() < 1e-6,
                "closed {closed} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn hyperball_dual_symmetric_example() {
        let p = hyperball(2, 0.01).unwrap();
        let d = p.dual_value(&[1.0], &w2(0.5, 0.5)).unwrap();
        // 1-D reduction along the diagonal: h(t) = t² + √2(1.01 − t) − 1
        // minimized at t = √2/2.
        let expected = 0.5 + 2f64.sqrt() * (1.01 - 2f64.sqrt() / 2.0) - 1.0;
        assert!((d - expected).abs() < 1e-6, "d = {d}, expected {expected}");

        // Dense grid oracle over the diagonal parametrization.
        let mut best = f64::INFINITY;
        for i in 0..=400_000 {
            let t = -2.0 + 4.0 * i as f64 / 400_000.0;
            let h = 2.0 * (0.5 * t * t) + (2f64.sqrt() * (t - 1.01).abs() - 1.0);
            best = best.min(h);
        }
        assert!((d - best).abs() < 1e-5, "d = {d}, grid = {best}");
    }

    #[test]
    fn hyperball_dual_center_branch() {
        // Large λ pins the inner minimizer at the cone point.
        let p = hyperball(3, 0.01).unwrap();
        let lam = 10.0;
        let d = p.dual_value(&[lam], &w2_n(3)).unwrap();
        let expected = 1.01f64.powi(2) - lam;
        assert!((d - expected).abs() < 1e-12);
    }

    fn w2_n(n: usize) -> ScalarizationWeight {
        ScalarizationWeight::new(vec![1.0 / n as f64; n]).unwrap()
    }

    #[test]
    fn centered_hyperball_agrees_with_uncentered() {
        let plain = hyperball(3, 0.01).unwrap();
        let centered = plain.centered();
        assert_eq!(centered.slater_point(), &[0.0, 0.0, 0.0]);
        // Same objective values along matched points.
        let z = [0.3, -0.2, 0.1];
        let x: Vec<f64> = z.iter().map(|v| v + 1.01).collect();
        let fz = centered.evaluate(&z).unwrap().f;
        let fx = plain.evaluate(&x).unwrap().f;
        for (a, b) in fz.iter().zip(&fx) {
            assert!((a - b).abs() < 1e-14);
        }
        // Identical duals.
        let w = w2_n(3);
        let d1 = plain.dual_value(&[0.7], &w).unwrap();
        let d2 = centered.dual_value(&[0.7], &w).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
        assert_eq!(centered.to_original_coords(&z), x);
    }

    #[test]
    fn mean_variance_dual_is_a_true_infimum() {
        let p = mean_variance_demo_descriptor().build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = w2(0.4, 0.6);
        for _ in 0..20 {
            let lambda: Vec<f64> = (0..p.constraint_dim())
                .map(|_| rng.gen_range(0.0..1.0))
                .collect();
            let d = p.dual_value(&lambda, &w).unwrap();
            // d must lower-bound the Lagrangian at arbitrary points.
            for _ in 0..20 {
                let x: Vec<f64> = (0..p.decision_dim())
                    .map(|_| rng.gen_range(-0.5..0.5))
                    .collect();
                let e = p.evaluate(&x).unwrap();
                let lag = 0.4 * e.f[0] + 0.6 * e.f[1] + linalg::dot(&lambda, &e.g);
                assert!(d <= lag + 1e-9, "dual {d} above Lagrangian {lag}");
            }
        }
    }

    #[test]
    fn mean_variance_rejects_bad_covariance() {
        let mean = vec![1.0, 2.0];
        // Not positive definite.
        let cov = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            mean_variance(mean.clone(), cov),
            Err(ProblemError::InvalidParameters(_))
        ));
        let asym = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(mean_variance(mean, asym).is_err());
    }

    #[test]
    fn lvop_dual_and_feasibility_error() {
        let p = lvop_benchmark_descriptor().build().unwrap();
        // Feasible multiplier for w = (0.5, 0.5).
        let lambda = [1.0 / 6.0, 1.0 / 6.0, 0.0, 0.0, 0.0];
        let d = p.dual_value(&lambda, &w2(0.5, 0.5)).unwrap();
        // −bᵀλ = −(−2 − 2)/6 = 2/3.
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            p.dual_value(&[0.0; 5], &w2(0.5, 0.5)),
            Err(ProblemError::DualInfeasible { .. })
        ));
    }

    #[test]
    fn lvop_rejects_rank_deficient() {
        let c = DenseMatrix::identity(2);
        let a = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![-1.0, -1.0]]).unwrap();
        assert!(matches!(
            lvop(c, a, vec![1.0, 2.0, 0.0]),
            Err(ProblemError::InvalidParameters(_))
        ));
    }

    #[test]
    fn lvop_auto_slater_point_is_strictly_feasible() {
        // Drop the explicit benchmark Slater point: construction must find one.
        let p = lvop_benchmark_descriptor().build().unwrap();
        let g = p.g_at_slater();
        for v in g {
            assert!(*v < -1e-3, "slack {v} too small");
        }
    }

    #[test]
    fn lvop_efficient_vertices_by_enumeration() {
        // Brute-force vertex enumeration of {Ax ≤ b} plus dominance filter.
        let p = lvop_benchmark_descriptor().build().unwrap();
        let data = p.lvop_data().unwrap();
        let (a, b) = (&data.a, &data.b);
        let mut vertices: Vec<Vec<f64>> = Vec::new();
        for i in 0..a.rows() {
            for j in (i + 1)..a.rows() {
                let sq = DenseMatrix::from_rows(&[a.row(i).to_vec(), a.row(j).to_vec()]).unwrap();
                let Ok(v) = sq.solve(&[b[i], b[j]]) else {
                    continue;
                };
                let gv = a.matvec(&v);
                if gv.iter().zip(b).all(|(l, r)| *l <= r + 1e-9) {
                    vertices.push(v);
                }
            }
        }
        let images: Vec<Vec<f64>> = vertices
            .iter()
            .map(|v| data.c.matvec(v))
            .collect();
        let efficient: Vec<&Vec<f64>> = images
            .iter()
            .filter(|y| {
                !images.iter().any(|other| {
                    other.iter().zip(y.iter()).all(|(o, yy)| *o <= yy + 1e-9)
                        && other
                            .iter()
                            .zip(y.iter())
                            .any(|(o, yy)| *o < yy - 1e-9)
                })
            })
            .collect();
        let expected = [
            vec![0.0, 2.0],
            vec![2.0 / 3.0, 2.0 / 3.0],
            vec![2.0, 0.0],
        ];
        for want in &expected {
            assert!(
                efficient
                    .iter()
                    .any(|y| (y[0] - want[0]).abs() < 1e-9 && (y[1] - want[1]).abs() < 1e-9),
                "missing efficient vertex {want:?}"
            );
        }
        assert_eq!(efficient.len(), 3);
    }

    #[test]
    fn closed_form_reference_cases() {
        let p = box_biobjective(2).unwrap();
        let (x, l) = p.closed_form_reference(&w2(0.75, 0.25)).unwrap();
        assert_eq!(x, vec![0.5, 0.5]);
        assert!(l.iter().all(|v| *v == 0.0));
        let f = p.evaluate(&x).unwrap().f;
        assert!((f[0] - 0.25).abs() < 1e-15 && (f[1] - 2.25).abs() < 1e-15);

        let (x, l) = p.closed_form_reference(&w2(0.5, 0.5)).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
        assert!(l.iter().all(|v| *v == 0.0));

        let (x, l) = p.closed_form_reference(&w2(0.25, 0.75)).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
        assert_eq!(&l[..2], &[0.5, 0.5]);
        assert_eq!(&l[2..], &[0.0, 0.0]);
        // Stationarity residual vanishes.
        let e = p.evaluate(&x).unwrap();
        let mut r = e.jf.tmatvec(&[0.25, 0.75]);
        let r2 = e.jg.tmatvec(&l);
        for (a, b) in r.iter_mut().zip(&r2) {
            *a += b;
        }
        assert!(linalg::norm_inf(&r) < 1e-15);

        // Only the box problem has a closed form.
        let other = test_instance_4(2, 3).unwrap();
        assert!(other.closed_form_reference(&w2(0.5, 0.5)).is_none());
    }

    #[test]
    fn strong_duality_at_references() {
        let p = box_biobjective(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(0.0..1.0);
            let w = w2(a, 1.0 - a);
            let (x, l) = p.closed_form_reference(&w).unwrap();
            let f = p.evaluate(&x).unwrap().f;
            let primal = w[0] * f[0] + w[1] * f[1];
            let dual = p.dual_value(&l, &w).unwrap();
            assert!(
                (primal - dual).abs() <= 1e-10,
                "gap {} at w = {:?}",
                primal - dual,
                w.values()
            );
        }
    }

    #[test]
    fn slater_points_strictly_feasible() {
        for p in all_default_problems() {
            let margin = if p.name().starts_with("mean_variance") {
                // The reduced-space Slater point sits 7.5e-5 inside.
                7e-5
            } else {
                1e-3
            };
            for (j, g) in p.g_at_slater().iter().enumerate() {
                assert!(
                    *g <= -margin,
                    "{}: g_{j}(x̄) = {g} above -{margin}",
                    p.name()
                );
            }
        }
    }

    #[test]
    fn weak_duality_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for p in all_default_problems() {
            if p.lvop_data().is_some() {
                continue; // λ = random ≥ 0 is dual-infeasible for LVOP
            }
            for _ in 0..200 {
                let raw: Vec<f64> = (0..p.objective_dim())
                    .map(|_| -f64::ln(rng.gen_range(1e-12..1.0)))
                    .collect();
                let s: f64 = raw.iter().sum();
                let mut wv: Vec<f64> = raw.iter().map(|r| r / s).collect();
                let floor = p.scalarization_floor();
                if floor > 0.0 {
                    let pdim = wv.len() as f64;
                    for v in wv.iter_mut() {
                        *v = floor + (1.0 - pdim * floor) * *v;
                    }
                }
                let last = wv.len() - 1;
                wv[last] = 1.0 - wv[..last].iter().sum::<f64>();
                let w = ScalarizationWeight::new(wv).unwrap();
                let lambda: Vec<f64> = (0..p.constraint_dim())
                    .map(|_| rng.gen_range(0.0..0.5))
                    .collect();
                // Feasible x: blend a box draw toward the Slater point.
                let x: Vec<f64> = p
                    .slater_point()
                    .iter()
                    .map(|s| s + rng.gen_range(-0.05..0.05))
                    .collect();
                let e = p.evaluate(&x).unwrap();
                if e.g.iter().any(|g| *g > 0.0) {
                    continue;
                }
                let primal = linalg::dot(w.values(), &e.f);
                let dual = p.dual_value(&lambda, &w).unwrap();
                assert!(
                    dual <= primal + 1e-8,
                    "{}: weak duality violated ({dual} > {primal})",
                    p.name()
                );
            }
        }
    }

    #[test]
    fn derivative_consistency_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let h = 1e-6;
        for p in all_default_problems() {
            for _ in 0..100 {
                let x: Vec<f64> = p
                    .slater_point()
                    .iter()
                    .map(|s| s + rng.gen_range(-0.3..0.3))
                    .collect();
                let e = p.evaluate(&x).unwrap();
                // Skip the hyperball kink neighborhood.
                if p.name().starts_with("hyperball") {
                    let r = linalg::norm2(
                        &x.iter()
                            .zip(p.slater_point())
                            .map(|(a, b)| a - b)
                            .collect::<Vec<_>>(),
                    );
                    if r < 0.05 {
                        continue;
                    }
                }
                for row in 0..p.objective_dim() {
                    for col in 0..p.decision_dim() {
                        let mut xp = x.clone();
                        xp[col] += h;
                        let mut xm = x.clone();
                        xm[col] -= h;
                        let fp = p.evaluate(&xp).unwrap().f[row];
                        let fm = p.evaluate(&xm).unwrap().f[row];
                        let fd = (fp - fm) / (2.0 * h);
                        let an = e.jf.get(row, col);
                        let denom = an.abs().max(fd.abs()).max(1.0);
                        assert!(
                            (fd - an).abs() / denom <= 1e-6,
                            "{} Jf[{row}][{col}]: fd {fd} vs analytic {an}",
                            p.name()
                        );
                    }
                }
                for row in 0..p.constraint_dim() {
                    for col in 0..p.decision_dim() {
                        let mut xp = x.clone();
                        xp[col] += h;
                        let mut xm = x.clone();
                        xm[col] -= h;
                        let gp = p.evaluate(&xp).unwrap().g[row];
                        let gm = p.evaluate(&xm).unwrap().g[row];
                        let fd = (gp - gm) / (2.0 * h);
                        let an = e.jg.get(row, col);
                        let denom = an.abs().max(fd.abs()).max(1.0);
                        assert!(
                            (fd - an).abs() / denom <= 1e-6,
                            "{} Jg[{row}][{col}]: fd {fd} vs analytic {an}",
                            p.name()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn weighted_hvp_matches_stationarity_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let h = 1e-6;
        for p in all_default_problems() {
            let np = p.decision_dim();
            for _ in 0..30 {
                let x: Vec<f64> = p
                    .slater_point()
                    .iter()
                    .map(|s| s + rng.gen_range(-0.3..0.3))
                    .collect();
                if p.name().starts_with("hyperball") {
                    let r = linalg::norm2(
                        &x.iter()
                            .zip(p.slater_point())
                            .map(|(a, b)| a - b)
                            .collect::<Vec<_>>(),
                    );
                    if r < 0.1 {
                        continue;
                    }
                }
                let raw: Vec<f64> = (0..p.objective_dim())
                    .map(|_| rng.gen_range(0.01..1.0))
                    .collect();
                let s: f64 = raw.iter().sum();
                let w: Vec<f64> = raw.iter().map(|r| r / s).collect();
                let lambda: Vec<f64> = (0..p.constraint_dim())
                    .map(|_| rng.gen_range(0.0..0.5))
                    .collect();
                let v: Vec<f64> = (0..np).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let delta = if p.lvop_data().is_some() { 1e-4 } else { 0.0 };
                let hvp = p.weighted_hvp(&x, &w, &lambda, delta, &v).unwrap();

                let resid = |pt: &[f64]| -> Vec<f64> {
                    let e = p.evaluate(pt).unwrap();
                    let mut r: Vec<f64> = e
                        .jf
                        .tmatvec(&w)
                        .iter()
                        .map(|t| (1.0 - delta) * t)
                        .collect();
                    let r2 = e.jg.tmatvec(&lambda);
                    for i in 0..np {
                        r[i] += r2[i] + 2.0 * delta * pt[i];
                    }
                    r
                };
                let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
                let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
                let rp = resid(&xp);
                let rm = resid(&xm);
                let scale = linalg::norm_inf(&hvp).max(1.0);
                for i in 0..np {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    assert!(
                        (fd - hvp[i]).abs() / scale <= 1e-5,
                        "{} hvp[{i}]: fd {fd} vs analytic {}",
                        p.name(),
                        hvp[i]
                    );
                }
            }
        }
    }

    #[test]
    fn weighted_hvp_edge_cases() {
        let p = box_biobjective(2).unwrap();
        // v = 0 → 0 by linearity.
        let z = p
            .weighted_hvp(&[0.3, 0.3], &[0.5, 0.5], &[0.0; 4], 0.0, &[0.0, 0.0])
            .unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        // Unit direction with uniform weights: (2/N)(w1+w2)e1 = e1.
        let r = p
            .weighted_hvp(&[0.3, 0.3], &[0.5, 0.5], &[0.0; 4], 0.0, &[1.0, 0.0])
            .unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15 && r[1].abs() < 1e-15);

        let lv = lvop_benchmark_descriptor().build().unwrap();
        let r = lv
            .weighted_hvp(&[0.2, 0.4], &[0.5, 0.5], &[0.1; 5], 1e-4, &[1.0, 0.0])
            .unwrap();
        assert!((r[0] - 2e-4).abs() < 1e-18 && r[1].abs() < 1e-18);
    }

    #[test]
    fn training_view_scales_objectives_only() {
        let p = box_biobjective(4).unwrap();
        let view = p.training_view();
        let x = [0.4, 0.2, 0.9, 0.1];
        let base = p.evaluate(&x).unwrap();
        let scaled = view.evaluate(&x).unwrap();
        for i in 0..2 {
            assert!((scaled.f[i] - 4.0 * base.f[i]).abs() < 1e-14);
        }
        assert_eq!(scaled.g, base.g);
        // Dual of the view: d_s(λ, w) = s · d(λ/s, w).
        let w = w2(0.3, 0.7);
        let lambda = vec![0.2, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0];
        let ds = view.dual_value(&lambda, &w).unwrap();
        let reduced: Vec<f64> = lambda.iter().map(|l| l / 4.0).collect();
        let d = p.dual_value(&reduced, &w).unwrap();
        assert!((ds - 4.0 * d).abs() < 1e-12);
    }

    #[test]
    fn make_builtin_dimensions() {
        let p = ProblemDescriptor::BoxBiobjective { n: 40 }.build().unwrap();
        assert_eq!(
            (p.decision_dim(), p.objective_dim(), p.constraint_dim()),
            (40, 2, 80)
        );
        assert!(p.g_at_slater().iter().all(|g| (*g + 0.5).abs() < 1e-15));

        let p = ProblemDescriptor::Hyperball {
            n: 2,
            epsilon: 0.01,
            centered: false,
        }
        .build()
        .unwrap();
        assert!((p.g_at_slater()[0] + 1.0).abs() < 1e-15);
        assert_eq!(p.slater_point(), &[1.01, 1.01]);
    }
}
