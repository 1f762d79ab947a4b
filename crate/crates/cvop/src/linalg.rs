//! Dense small-matrix numerics shared by the rest of the crate: products,
//! null-space bases, minimum-norm particular solutions, square solves, and a
//! two-phase dense simplex solver for small linear programs.
//!
//! Everything is plain `f64` row-major storage. These routines are meant for
//! the dense, at-most-a-few-thousand-entry matrices that show up in the
//! benchmark problems; there is no sparse or large-scale path.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinAlgError {
    #[error("non-finite entry in input")]
    NonFiniteInput,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("inconsistent linear system: residual {residual:.3e} exceeds tolerance")]
    InfeasibleSystem { residual: f64 },
    #[error("linear program infeasible: phase-1 residual {residual:.3e}")]
    LpInfeasible { residual: f64 },
    #[error("linear program unbounded below")]
    LpUnbounded,
    #[error("singular matrix in linear solve")]
    SingularMatrix,
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from nested rows. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinAlgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(LinAlgError::DimensionMismatch(format!(
                    "ragged rows: expected {c} entries, got {}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinAlgError> {
        if data.len() != rows * cols {
            return Err(LinAlgError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    /// `self * x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension mismatch");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            out[i] = dot(self.row(i), x);
        }
        out
    }

    /// `selfᵀ * x`, computed without materializing the transpose.
    pub fn tmatvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "tmatvec dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (o, r) in out.iter_mut().zip(row) {
                *o += xi * r;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Solves `self * x = b` for square `self` by Gaussian elimination with
    /// partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinAlgError> {
        if self.rows != self.cols {
            return Err(LinAlgError::DimensionMismatch(
                "solve requires a square matrix".into(),
            ));
        }
        if b.len() != self.rows {
            return Err(LinAlgError::DimensionMismatch(
                "solve rhs length mismatch".into(),
            ));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in col + 1..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-14 * self.max_abs_entry().max(1.0) {
                return Err(LinAlgError::SingularMatrix);
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                if f == 0.0 {
                    continue;
                }
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..n).rev() {
            let mut v = x[col];
            for j in col + 1..n {
                v -= a[col * n + j] * x[j];
            }
            x[col] = v / a[col * n + col];
        }
        Ok(x)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Householder QR with column pivoting: `A Π = Q R`.
///
/// `q` is square `m×m` (accumulated explicitly), `r` is `m×n` upper
/// trapezoidal, `perm[j]` gives the original column index placed at position
/// `j`. Diagonal magnitudes of `r` are nonincreasing, which is what the rank
/// decisions below rely on.
struct QrPivot {
    q: DenseMatrix,
    r: DenseMatrix,
    perm: Vec<usize>,
}

fn qr_column_pivot(a: &DenseMatrix) -> QrPivot {
    let m = a.rows();
    let n = a.cols();
    let mut r = a.clone();
    let mut q = DenseMatrix::identity(m);
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);

    for k in 0..steps {
        // Pivot: move the remaining column with the largest tail norm to k.
        let mut best = k;
        let mut best_norm = 0.0;
        for j in k..n {
            let mut s = 0.0;
            for i in k..m {
                let v = r.get(i, j);
                s += v * v;
            }
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        if best != k {
            for i in 0..m {
                let tmp = r.get(i, k);
                r.set(i, k, r.get(i, best));
                r.set(i, best, tmp);
            }
            perm.swap(k, best);
        }
        if best_norm == 0.0 {
            break;
        }

        // Householder reflector for column k.
        let mut v = vec![0.0; m - k];
        for i in k..m {
            v[i - k] = r.get(i, k);
        }
        let alpha = -v[0].signum() * norm2(&v);
        if alpha == 0.0 {
            continue;
        }
        v[0] -= alpha;
        let vnorm = norm2(&v);
        if vnorm < f64::MIN_POSITIVE {
            continue;
        }
        for vi in v.iter_mut() {
            *vi /= vnorm;
        }

        // Apply I - 2vvᵀ to the trailing block of R ...
        for j in k..n {
            let mut s = 0.0;
            for i in k..m {
                s += v[i - k] * r.get(i, j);
            }
            s *= 2.0;
            for i in k..m {
                let val = r.get(i, j) - s * v[i - k];
                r.set(i, j, val);
            }
        }
        // ... and accumulate into Q (Q ← Q (I - 2vvᵀ)).
        for i in 0..m {
            let mut s = 0.0;
            for jj in k..m {
                s += q.get(i, jj) * v[jj - k];
            }
            s *= 2.0;
            for jj in k..m {
                let val = q.get(i, jj) - s * v[jj - k];
                q.set(i, jj, val);
            }
        }
        // Clean the annihilated entries.
        r.set(k, k, alpha);
        for i in k + 1..m {
            r.set(i, k, 0.0);
        }
    }
    QrPivot { q, r, perm }
}

fn numerical_rank(r: &DenseMatrix, rank_tol: f64) -> usize {
    let steps = r.rows().min(r.cols());
    let mut rank = 0;
    for k in 0..steps {
        if r.get(k, k).abs() > rank_tol {
            rank += 1;
        } else {
            break;
        }
    }
    rank
}

/// Orthonormal basis of the null space of `a`, i.e. `B` with `a · B = 0` and
/// `Bᵀ B = I`. Column count is `cols − rank`, with the numerical rank decided
/// by comparing pivot magnitudes of a column-pivoted QR of `aᵀ` against
/// `rank_tol`.
pub fn null_space_basis(a: &DenseMatrix, rank_tol: f64) -> Result<DenseMatrix, LinAlgError> {
    if !a.is_finite() {
        return Err(LinAlgError::NonFiniteInput);
    }
    if !(rank_tol > 0.0) {
        return Err(LinAlgError::DimensionMismatch(
            "rank_tol must be positive".into(),
        ));
    }
    let n = a.cols();
    let qr = qr_column_pivot(&a.transpose());
    let rank = numerical_rank(&qr.r, rank_tol);
    let mut basis = DenseMatrix::zeros(n, n - rank);
    for i in 0..n {
        for j in rank..n {
            basis.set(i, j - rank, qr.q.get(i, j));
        }
    }
    Ok(basis)
}

/// Minimum-norm solution of `a · x = b`. Errors when `b` is not in the range
/// of `a` (consistency residual above 1e-9).
pub fn particular_solution(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinAlgError> {
    if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
        return Err(LinAlgError::NonFiniteInput);
    }
    if b.len() != a.rows() {
        return Err(LinAlgError::DimensionMismatch(
            "particular_solution rhs length mismatch".into(),
        ));
    }
    let n = a.cols();
    let m = a.rows();
    // QR of aᵀ: aᵀ Π = Q R, so Πᵀ a = Rᵀ Qᵀ and the system becomes
    // Rᵀ u = Πᵀ b with x = Q u. Forward-substitute on the rank block, zero the
    // rest; that x is the minimum-norm solution since it lies in range(aᵀ).
    let qr = qr_column_pivot(&a.transpose());
    let rank_tol = 1e-10 * a.max_abs_entry().max(f64::MIN_POSITIVE);
    let rank = numerical_rank(&qr.r, rank_tol);

    let mut c = vec![0.0; m];
    for (pos, &orig) in qr.perm.iter().enumerate() {
        c[pos] = b[orig];
    }
    let mut u = vec![0.0; n];
    for i in 0..rank {
        let mut v = c[i];
        for j in 0..i {
            // Rᵀ[i][j] = R[j][i]
            v -= qr.r.get(j, i) * u[j];
        }
        u[i] = v / qr.r.get(i, i);
    }
    let x = qr.q.matvec(&u);
    let mut residual = 0.0;
    let ax = a.matvec(&x);
    for i in 0..m {
        residual = f64::max(residual, (ax[i] - b[i]).abs());
    }
    if residual > 1e-9 * b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs())) {
        return Err(LinAlgError::InfeasibleSystem { residual });
    }
    Ok(x)
}

/// Equality-constrained LP in the form
/// `min costᵀx  s.t.  eq_lhs · x = eq_rhs,  x ≥ lower_bounds`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub eq_lhs: DenseMatrix,
    pub eq_rhs: Vec<f64>,
    pub lower_bounds: Vec<f64>,
}

const LP_EPS: f64 = 1e-9;

/// Two-phase dense simplex with Bland's rule. Intended only for small
/// instances (up to a few hundred variables); the tableau is fully dense.
pub fn simplex_solve(lp: &LinearProgram) -> Result<Vec<f64>, LinAlgError> {
    let n = lp.cost.len();
    let m = lp.eq_rhs.len();
    if lp.eq_lhs.rows() != m || lp.eq_lhs.cols() != n || lp.lower_bounds.len() != n {
        return Err(LinAlgError::DimensionMismatch(
            "linear program shapes inconsistent".into(),
        ));
    }
    if !lp.eq_lhs.is_finite()
        || lp.cost.iter().any(|v| !v.is_finite())
        || lp.eq_rhs.iter().any(|v| !v.is_finite())
        || lp.lower_bounds.iter().any(|v| !v.is_finite())
    {
        return Err(LinAlgError::NonFiniteInput);
    }

    // Shift to y = x - lb ≥ 0.
    let mut rhs = lp.eq_rhs.clone();
    let shift = lp.eq_lhs.matvec(&lp.lower_bounds);
    for i in 0..m {
        rhs[i] -= shift[i];
    }

    // Tableau over columns [y (n) | artificials (m) | rhs].
    let width = n + m + 1;
    let mut t = vec![0.0; m * width];
    for i in 0..m {
        let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * width + j] = sign * lp.eq_lhs.get(i, j);
        }
        t[i * width + n + i] = 1.0;
        t[i * width + n + m] = sign * rhs[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase-1 objective: minimize the sum of artificials, priced out over
    // the all-artificial starting basis.
    let mut obj = vec![0.0; width];
    for i in 0..m {
        obj[n + i] = 1.0;
    }
    for i in 0..m {
        for j in 0..width {
            obj[j] -= t[i * width + j];
        }
    }
    run_simplex(&mut t, &mut obj, &mut basis, m, width, n + m)?;
    let phase1 = -obj[width - 1];
    if phase1 > 1e-8 * rhs.iter().fold(1.0_f64, |acc, v| acc.max(v.abs())) {
        return Err(LinAlgError::LpInfeasible { residual: phase1 });
    }

    // Drive any artificial still in the basis out of it (degenerate rows).
    for row in 0..m {
        if basis[row] >= n {
            let mut entering = None;
            for j in 0..n {
                if t[row * width + j].abs() > LP_EPS {
                    entering = Some(j);
                    break;
                }
            }
            if let Some(j) = entering {
                pivot(&mut t, &mut obj, &mut basis, m, width, row, j);
            }
            // A fully zero row is redundant; the artificial stays basic at 0.
        }
    }

    // Phase 2: restore the true objective, priced out over the current basis.
    let mut obj2 = vec![0.0; width];
    obj2[..n].copy_from_slice(&lp.cost);
    for row in 0..m {
        let b = basis[row];
        if b < n {
            let coeff = obj2[b];
            if coeff != 0.0 {
                for j in 0..width {
                    obj2[j] -= coeff * t[row * width + j];
                }
            }
        }
    }
    // Forbid artificials from re-entering.
    run_simplex(&mut t, &mut obj2, &mut basis, m, width, n)?;

    let mut y = vec![0.0; n];
    for row in 0..m {
        if basis[row] < n {
            y[basis[row]] = t[row * width + width - 1];
        }
    }
    let mut x = y;
    for j in 0..n {
        x[j] += lp.lower_bounds[j];
    }
    Ok(x)
}

/// Bland-rule simplex iterations on a tableau whose objective row is `obj`.
/// Only columns `< active_cols` may enter the basis.
fn run_simplex(
    t: &mut [f64],
    obj: &mut [f64],
    basis: &mut [usize],
    m: usize,
    width: usize,
    active_cols: usize,
) -> Result<(), LinAlgError> {
    let max_iters = 50_000;
    for _ in 0..max_iters {
        // Bland: entering column = lowest index with negative reduced cost.
        let mut entering = None;
        for j in 0..active_cols {
            if obj[j] < -LP_EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(col) = entering else {
            return Ok(());
        };
        // Ratio test; ties broken by smallest basis variable index (Bland).
        let mut leaving: Option<(usize, f64)> = None;
        for row in 0..m {
            let a = t[row * width + col];
            if a > LP_EPS {
                let ratio = t[row * width + width - 1] / a;
                match leaving {
                    None => leaving = Some((row, ratio)),
                    Some((lrow, lratio)) => {
                        if ratio < lratio - LP_EPS
                            || (ratio < lratio + LP_EPS && basis[row] < basis[lrow])
                        {
                            leaving = Some((row, ratio));
                        }
                    }
                }
            }
        }
        let Some((row, _)) = leaving else {
            return Err(LinAlgError::LpUnbounded);
        };
        pivot(t, obj, basis, m, width, row, col);
    }
    Err(LinAlgError::IterationLimit)
}

fn pivot(
    t: &mut [f64],
    obj: &mut [f64],
    basis: &mut [usize],
    m: usize,
    width: usize,
    row: usize,
    col: usize,
) {
    let p = t[row * width + col];
    for j in 0..width {
        t[row * width + j] /= p;
    }
    t[row * width + col] = 1.0;
    for r in 0..m {
        if r == row {
            continue;
        }
        let f = t[r * width + col];
        if f != 0.0 {
            for j in 0..width {
                t[r * width + j] -= f * t[row * width + j];
            }
            t[r * width + col] = 0.0;
        }
    }
    let f = obj[col];
    if f != 0.0 {
        for j in 0..width {
            obj[j] -= f * t[row * width + j];
        }
        obj[col] = 0.0;
    }
    basis[row] = col;
}
