//! Problem containers and the change of variables that turns a strictly
//! convex QP into a nonnegativity-constrained least-distance problem.
//!
//! With `H = R'R` the upper Cholesky factorization, constraints are scaled by
//! `R^-1` so the dual Hessian becomes a Gram matrix of constraint rows; the
//! solver then only ever needs inner products of those rows. The linear parts
//! (`v`, `d`, `e`) are cheap to recompute on their own, which is what the
//! outer proximal-point loop relies on.

use nalgebra::{DMatrix, DVector};
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("Hessian is not symmetric")]
    NotSymmetric,
    #[error("Hessian is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("constraint {row} has lower bound above upper bound")]
    TriviallyInfeasible { row: usize },
    #[error("{0}")]
    DimensionMismatch(String),
}

/// Inequality right-hand sides: either `Ax <= b` or `b_lower <= Ax <= b_upper`.
#[derive(Debug, Clone, PartialEq)]
pub enum Bounds {
    Upper(DVector<f64>),
    TwoSided { lower: DVector<f64>, upper: DVector<f64> },
}

impl Bounds {
    pub fn len(&self) -> usize {
        match self {
            Bounds::Upper(b) => b.len(),
            Bounds::TwoSided { upper, .. } => upper.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_two_sided(&self) -> bool {
        matches!(self, Bounds::TwoSided { .. })
    }
}

/// Convex quadratic program
/// `min 1/2 x'Hx + f'x  s.t.  Ax <= b (or two-sided),  Gx = h`.
#[derive(Debug, Clone, PartialEq)]
pub struct QProblem {
    pub n: usize,
    pub m: usize,
    pub me: usize,
    /// Row-major `n` by `n` symmetric Hessian.
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    /// Inequality rows, `m` by `n`.
    pub a: DMatrix<f64>,
    pub bounds: Bounds,
    /// Equality rows, `me` by `n`.
    pub g: DMatrix<f64>,
    pub h_eq: DVector<f64>,
}

impl QProblem {
    /// Validates dimensions, Hessian symmetry, and bound ordering.
    pub fn new(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a: DMatrix<f64>,
        bounds: Bounds,
        g: DMatrix<f64>,
        h_eq: DVector<f64>,
    ) -> Result<Self, ProblemError> {
        let n = h.nrows();
        let m = a.nrows();
        let me = g.nrows();
        if h.ncols() != n {
            return Err(ProblemError::DimensionMismatch("Hessian must be square".into()));
        }
        if f.len() != n {
            return Err(ProblemError::DimensionMismatch(format!(
                "linear term has {} entries, expected {n}",
                f.len()
            )));
        }
        if m > 0 && a.ncols() != n {
            return Err(ProblemError::DimensionMismatch(format!(
                "A has {} columns, expected {n}",
                a.ncols()
            )));
        }
        if bounds.len() != m {
            return Err(ProblemError::DimensionMismatch(format!(
                "bounds cover {} rows, expected {m}",
                bounds.len()
            )));
        }
        if me > 0 && g.ncols() != n {
            return Err(ProblemError::DimensionMismatch(format!(
                "G has {} columns, expected {n}",
                g.ncols()
            )));
        }
        if h_eq.len() != me {
            return Err(ProblemError::DimensionMismatch(format!(
                "equality rhs has {} entries, expected {me}",
                h_eq.len()
            )));
        }
        let scale = h.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (h[(i, j)] - h[(j, i)]).abs() > 1e-12 * scale {
                    return Err(ProblemError::NotSymmetric);
                }
            }
        }
        if let Bounds::TwoSided { lower, upper } = &bounds {
            for i in 0..m {
                if lower[i] > upper[i] {
                    return Err(ProblemError::TriviallyInfeasible { row: i });
                }
            }
        }
        Ok(QProblem { n, m, me, h, f, a, bounds, g, h_eq })
    }

    /// Convenience constructor for one-sided problems without equalities.
    pub fn inequality_form(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self, ProblemError> {
        let n = h.nrows();
        QProblem::new(h, f, a, Bounds::Upper(b), DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.h * x).dot(x) + self.f.dot(x)
    }
}

/// Dual right-hand sides after the change of variables.
#[derive(Debug, Clone, PartialEq)]
pub enum DualBounds {
    /// `d = b + Mv`; active rows satisfy `M lambda = -d` rows.
    Upper(DVector<f64>),
    /// `d_upper = b_upper + Mv`, `d_lower = -(b_lower + Mv)`.
    TwoSided { upper: DVector<f64>, lower: DVector<f64> },
}

impl DualBounds {
    pub fn is_two_sided(&self) -> bool {
        matches!(self, DualBounds::TwoSided { .. })
    }

    /// Upper-side entry (the only side for one-sided problems).
    pub fn upper(&self, i: usize) -> f64 {
        match self {
            DualBounds::Upper(d) => d[i],
            DualBounds::TwoSided { upper, .. } => upper[i],
        }
    }

    /// Lower-side entry; one-sided problems have none.
    pub fn lower(&self, i: usize) -> Option<f64> {
        match self {
            DualBounds::Upper(_) => None,
            DualBounds::TwoSided { lower, .. } => Some(lower[i]),
        }
    }
}

/// The QP after scaling by the inverse Cholesky factor: constraint rows
/// `M = A R^-1`, `N = G R^-1`, shifted offsets `v`, `d`, `e`.
#[derive(Debug, Clone)]
pub struct LdProblem {
    pub n: usize,
    pub m: usize,
    pub me: usize,
    /// Inverse of the upper Cholesky factor of the (possibly regularized)
    /// Hessian, upper triangular.
    pub rinv: DMatrix<f64>,
    pub m_mat: DMatrix<f64>,
    pub v: DVector<f64>,
    pub d: DualBounds,
    pub n_mat: DMatrix<f64>,
    pub e: DVector<f64>,
    /// Regularization that was added to the Hessian diagonal.
    pub epsilon_used: f64,
}

/// Accumulates `init + sum over (rows, coeffs) of coeffs[i] * rows.row(i)`
/// with Neumaier-compensated component sums.
///
/// Working-set multipliers grow with the Hessian's condition number while
/// the combination itself stays moderate, so a plain running sum loses up
/// to `count * eps * max_term` absolutely; the compensation keeps the
/// result accurate to the rounding error of its final value, which the
/// primal slack tolerance depends on at extreme conditioning.
pub(crate) fn compensated_combination(
    n: usize,
    init: Option<&DVector<f64>>,
    terms: &[(&DMatrix<f64>, &DVector<f64>)],
) -> DVector<f64> {
    let mut sum = vec![0.0f64; n];
    let mut comp = vec![0.0f64; n];
    let absorb = |j: usize, t: f64, sum: &mut [f64], comp: &mut [f64]| {
        let s = sum[j] + t;
        comp[j] += if sum[j].abs() >= t.abs() { (sum[j] - s) + t } else { (t - s) + sum[j] };
        sum[j] = s;
    };
    if let Some(v) = init {
        assert_eq!(v.len(), n);
        for j in 0..n {
            sum[j] = v[j];
        }
    }
    for (rows, coeffs) in terms {
        assert_eq!(rows.nrows(), coeffs.len());
        assert_eq!(rows.ncols(), n);
        for i in 0..coeffs.len() {
            let c = coeffs[i];
            if c == 0.0 {
                continue;
            }
            for j in 0..n {
                absorb(j, c * rows[(i, j)], &mut sum, &mut comp);
            }
        }
    }
    DVector::from_fn(n, |j, _| sum[j] + comp[j])
}

/// Dot product with Neumaier-compensated accumulation. The per-term
/// products still round individually, but the accumulation error stops
/// growing with the length and the cancellation of the sum, which keeps
/// the scaled constraint data accurate enough for absolute slack
/// tolerances under extreme conditioning.
pub(crate) fn neumaier_dot(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (a, b) in pairs {
        let t = a * b;
        let s = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    sum + comp
}

/// `left * right` with every entry accumulated by [`neumaier_dot`].
pub(crate) fn compensated_product(left: &DMatrix<f64>, right: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(left.ncols(), right.nrows());
    DMatrix::from_fn(left.nrows(), right.ncols(), |i, j| {
        neumaier_dot((0..left.ncols()).map(|t| (left[(i, t)], right[(t, j)])))
    })
}

static CHOLESKY_COUNT: AtomicU64 = AtomicU64::new(0);

/// Number of upper Cholesky factorizations performed by this process; lets
/// tests assert that the proximal-point loop factors the Hessian only once.
pub fn cholesky_count() -> u64 {
    CHOLESKY_COUNT.load(Ordering::Relaxed)
}

/// Upper Cholesky factorization `H + reg*I = R'R` with `R` upper triangular,
/// returning `R` and its inverse.
///
/// Fails with the offending row when a pivot falls at or below
/// `1e-12 * max(1, largest |H| entry)`.
pub fn cholesky_upper(
    h: &DMatrix<f64>,
    reg: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ProblemError> {
    CHOLESKY_COUNT.fetch_add(1, Ordering::Relaxed);
    let n = h.nrows();
    assert_eq!(h.ncols(), n, "Hessian must be square");
    let scale = h.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let mut r = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let mut acc = h[(i, j)] + if i == j { reg } else { 0.0 };
            for k in 0..i {
                acc -= r[(k, i)] * r[(k, j)];
            }
            if i == j {
                if acc <= 1e-12 * scale {
                    return Err(ProblemError::NotPositiveDefinite { row: j, pivot: acc });
                }
                r[(i, j)] = acc.sqrt();
            } else {
                r[(i, j)] = acc / r[(i, i)];
            }
        }
    }
    // Invert by back substitution, one unit vector at a time.
    let mut rinv = DMatrix::zeros(n, n);
    for col in 0..n {
        let mut x = DVector::zeros(n);
        x[col] = 1.0;
        for i in (0..=col).rev() {
            let mut acc = x[i];
            for k in i + 1..=col {
                acc -= r[(i, k)] * rinv[(k, col)];
            }
            rinv[(i, col)] = acc / r[(i, i)];
        }
    }
    Ok((r, rinv))
}

/// Linear parts of the scaled problem. Shared verbatim by [`transform`] and
/// [`update_linear_terms`] so that re-deriving them along either path gives
/// the same floating-point results.
fn linear_parts(
    rinv: &DMatrix<f64>,
    m_mat: &DMatrix<f64>,
    n_mat: &DMatrix<f64>,
    f: &DVector<f64>,
    bounds: &Bounds,
    h_eq: &DVector<f64>,
) -> (DVector<f64>, DualBounds, DVector<f64>) {
    let n = rinv.ncols();
    let v = DVector::from_fn(n, |j, _| neumaier_dot((0..n).map(|t| (rinv[(t, j)], f[t]))));
    let mv = DVector::from_fn(m_mat.nrows(), |i, _| {
        neumaier_dot((0..n).map(|t| (m_mat[(i, t)], v[t])))
    });
    let d = match bounds {
        Bounds::Upper(b) => DualBounds::Upper(b + &mv),
        Bounds::TwoSided { lower, upper } => DualBounds::TwoSided {
            upper: upper + &mv,
            lower: -(lower + &mv),
        },
    };
    let e = DVector::from_fn(n_mat.nrows(), |q, _| {
        h_eq[q] + neumaier_dot((0..n).map(|t| (n_mat[(q, t)], v[t])))
    });
    (v, d, e)
}

/// Scales the problem by the inverse Cholesky factor of `H + reg*I`.
pub fn transform(qp: &QProblem, reg: f64) -> Result<LdProblem, ProblemError> {
    let (_, rinv) = cholesky_upper(&qp.h, reg)?;
    let m_mat = compensated_product(&qp.a, &rinv);
    let n_mat = compensated_product(&qp.g, &rinv);
    let (v, d, e) = linear_parts(&rinv, &m_mat, &n_mat, &qp.f, &qp.bounds, &qp.h_eq);
    Ok(LdProblem {
        n: qp.n,
        m: qp.m,
        me: qp.me,
        rinv,
        m_mat,
        v,
        d,
        n_mat,
        e,
        epsilon_used: reg,
    })
}

impl LdProblem {
    /// Recomputes `v`, `d`, and `e` for new linear terms, leaving every
    /// factored quantity untouched. Follows the exact arithmetic path of
    /// [`transform`].
    pub fn update_linear_terms(&mut self, f: &DVector<f64>, bounds: &Bounds, h_eq: &DVector<f64>) {
        assert_eq!(f.len(), self.n);
        assert_eq!(bounds.len(), self.m);
        assert_eq!(h_eq.len(), self.me);
        let (v, d, e) = linear_parts(&self.rinv, &self.m_mat, &self.n_mat, f, bounds, h_eq);
        self.v = v;
        self.d = d;
        self.e = e;
    }

    /// Primal point determined by the dual iterate:
    /// `x = -R^-1 (M_W' lambda_W + N' nu + v)`.
    ///
    /// `lambda` is full-length with zeros off the working set, so the product
    /// uses all of `M`.
    pub fn recover_primal(&self, lambda: &DVector<f64>, nu: &DVector<f64>) -> DVector<f64> {
        assert_eq!(lambda.len(), self.m);
        assert_eq!(nu.len(), self.me);
        let u = compensated_combination(
            self.n,
            Some(&self.v),
            &[(&self.m_mat, lambda), (&self.n_mat, nu)],
        );
        DVector::from_fn(self.n, |j, _| {
            -neumaier_dot((0..self.n).map(|t| (self.rinv[(j, t)], u[t])))
        })
    }
}
