//! Slow, independent reference machinery: KKT residual evaluation and an
//! exhaustive active-set enumeration solver.
//!
//! Nothing here shares code with the solver; results are computed straight
//! from the primal problem data with dense LU solves, so agreement between
//! the two paths is meaningful evidence.

use crate::problem::{Bounds, QProblem};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum OracleError {
    /// Enumeration finished without any candidate passing the optimality
    /// conditions. Says nothing about feasibility of the problem.
    #[error("no active set produced a point passing the optimality conditions")]
    NoFeasibleCandidate,
}

/// Residuals of the first-order optimality conditions at a candidate point.
/// All fields are nonnegative; a true optimum drives them all to roundoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `max| Hx + A'lambda + G'nu + f |`
    pub stationarity: f64,
    /// Worst inequality violation, zero when feasible.
    pub primal_ineq: f64,
    /// Worst multiplier sign violation. Two-sided multipliers carry their
    /// side in their sign and are never sign-infeasible.
    pub dual: f64,
    /// `max_i |lambda_i * slack_i|`, with the slack taken on the side the
    /// multiplier's sign selects.
    pub complementarity: f64,
    /// `max| Gx - h |`
    pub equality: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .max(self.primal_ineq)
            .max(self.dual)
            .max(self.complementarity)
            .max(self.equality)
    }
}

/// Evaluates the optimality residuals of `(x, lambda, nu)` for `qp`.
pub fn kkt_residual(
    qp: &QProblem,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    nu: &DVector<f64>,
) -> KktReport {
    assert_eq!(x.len(), qp.n);
    assert_eq!(lambda.len(), qp.m);
    assert_eq!(nu.len(), qp.me);

    let mut grad = &qp.h * x + &qp.f;
    if qp.m > 0 {
        grad += qp.a.transpose() * lambda;
    }
    if qp.me > 0 {
        grad += qp.g.transpose() * nu;
    }
    let stationarity = grad.abs().max();

    let ax = if qp.m > 0 { &qp.a * x } else { DVector::zeros(0) };
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    let mut compl = 0.0f64;
    for i in 0..qp.m {
        match &qp.bounds {
            Bounds::Upper(b) => {
                primal = primal.max(ax[i] - b[i]);
                dual = dual.max(-lambda[i]);
                compl = compl.max((lambda[i] * (b[i] - ax[i])).abs());
            }
            Bounds::TwoSided { lower, upper } => {
                primal = primal.max(ax[i] - upper[i]).max(lower[i] - ax[i]);
                let slack = if lambda[i] >= 0.0 { upper[i] - ax[i] } else { ax[i] - lower[i] };
                compl = compl.max((lambda[i] * slack).abs());
            }
        }
    }
    let equality = if qp.me > 0 { (&qp.g * x - &qp.h_eq).abs().max() } else { 0.0 };
    KktReport {
        stationarity,
        primal_ineq: primal.max(0.0),
        dual: dual.max(0.0),
        complementarity: compl,
        equality,
    }
}

const ORACLE_TOL: f64 = 1e-9;

/// Exhaustively enumerates candidate active sets and returns the first
/// `(x, lambda, nu)` passing the optimality conditions within `1e-9`.
///
/// Meant for cross-checking on small problems: requires `n <= 8` and
/// `m <= 14`. Subsets are visited by increasing cardinality and
/// lexicographically within a cardinality, each two-sided member trying its
/// upper bound before its lower, so ties between optimal active sets resolve
/// deterministically. Failure to find a candidate never implies the problem
/// is infeasible.
pub fn brute_force_solve(
    qp: &QProblem,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>), OracleError> {
    assert!(qp.n <= 8, "enumeration oracle is limited to n <= 8");
    assert!(qp.m <= 14, "enumeration oracle is limited to m <= 14");

    let max_active = qp.n.saturating_sub(qp.me);
    for size in 0..=max_active.min(qp.m) {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            let mut sides = vec![false; size]; // false = upper
            loop {
                if let Some(sol) = try_active_set(qp, &subset, &sides) {
                    return Ok(sol);
                }
                if !qp.bounds.is_two_sided() || !next_side_assignment(&mut sides) {
                    break;
                }
            }
            if !next_combination(&mut subset, qp.m) {
                break;
            }
        }
    }
    Err(OracleError::NoFeasibleCandidate)
}

/// Advances `subset` to the next k-combination of `0..m` in lexicographic
/// order; false when exhausted.
fn next_combination(subset: &mut [usize], m: usize) -> bool {
    let k = subset.len();
    if k == 0 {
        return false;
    }
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < m - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Binary counter over side choices; false (upper) before true (lower) with
/// the earliest member varying last.
fn next_side_assignment(sides: &mut [bool]) -> bool {
    for s in sides.iter_mut().rev() {
        if !*s {
            *s = true;
            return true;
        }
        *s = false;
    }
    false
}

fn try_active_set(
    qp: &QProblem,
    subset: &[usize],
    sides: &[bool],
) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = qp.n;
    let k = subset.len();
    let me = qp.me;
    let dim = n + k + me;

    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.h);
    for i in 0..n {
        rhs[i] = -qp.f[i];
    }
    for (r, (&ci, &lower)) in subset.iter().zip(sides).enumerate() {
        for c in 0..n {
            kkt[(n + r, c)] = qp.a[(ci, c)];
            kkt[(c, n + r)] = qp.a[(ci, c)];
        }
        rhs[n + r] = match (&qp.bounds, lower) {
            (Bounds::Upper(b), _) => b[ci],
            (Bounds::TwoSided { upper, .. }, false) => upper[ci],
            (Bounds::TwoSided { lower, .. }, true) => lower[ci],
        };
    }
    for r in 0..me {
        for c in 0..n {
            kkt[(n + k + r, c)] = qp.g[(r, c)];
            kkt[(c, n + k + r)] = qp.g[(r, c)];
        }
        rhs[n + k + r] = qp.h_eq[r];
    }

    let sol = kkt.lu().solve(&rhs)?;
    let x = DVector::from_iterator(n, (0..n).map(|i| sol[i]));
    let mut lambda = DVector::zeros(qp.m);
    for (r, (&ci, &lower)) in subset.iter().zip(sides).enumerate() {
        let mult = sol[n + r];
        // sign feasibility on the chosen side
        if lower {
            if mult > ORACLE_TOL {
                return None;
            }
        } else if mult < -ORACLE_TOL {
            return None;
        }
        lambda[ci] = mult;
    }
    let nu = DVector::from_iterator(me, (0..me).map(|r| sol[n + k + r]));

    // primal feasibility of every constraint not in the candidate set
    if qp.m > 0 {
        let ax = &qp.a * &x;
        for i in 0..qp.m {
            match &qp.bounds {
                Bounds::Upper(b) => {
                    if ax[i] > b[i] + ORACLE_TOL * (1.0 + b[i].abs()) {
                        return None;
                    }
                }
                Bounds::TwoSided { lower, upper } => {
                    if ax[i] > upper[i] + ORACLE_TOL * (1.0 + upper[i].abs())
                        || ax[i] < lower[i] - ORACLE_TOL * (1.0 + lower[i].abs())
                    {
                        return None;
                    }
                }
            }
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((x, lambda, nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simple_qp() -> QProblem {
        // min 1/2 |x|^2 - 2.1'x  s.t.  x1 + x2 <= 1, x1 <= 0.3
        QProblem::inequality_form(
            DMatrix::identity(2, 2),
            DVector::from_row_slice(&[-2.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]),
            DVector::from_row_slice(&[1.0, 0.3]),
        )
        .unwrap()
    }

    #[test]
    fn enumeration_finds_known_optimum() {
        let qp = simple_qp();
        let (x, lambda, _) = brute_force_solve(&qp).unwrap();
        assert_abs_diff_eq!(x[0], 0.3, epsilon = 1e-10);
        assert_abs_diff_eq!(x[1], 0.7, epsilon = 1e-10);
        assert_abs_diff_eq!(lambda[0], 1.3, epsilon = 1e-10);
        assert_abs_diff_eq!(lambda[1], 0.4, epsilon = 1e-10);
        let report = kkt_residual(&qp, &x, &lambda, &DVector::zeros(0));
        assert!(report.max_residual() <= 1e-9);
    }

    #[test]
    fn enumeration_handles_equalities_and_two_sided_rows() {
        // min 1/2 |x|^2 s.t. x1 + x2 = 1  ->  x = (0.5, 0.5), nu = -0.5
        let qp = QProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::zeros(0, 2),
            Bounds::Upper(DVector::zeros(0)),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_row_slice(&[1.0]),
        )
        .unwrap();
        let (x, _, nu) = brute_force_solve(&qp).unwrap();
        assert_abs_diff_eq!(x[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(nu[0], -0.5, epsilon = 1e-12);

        // min 1/2 x^2 - 3x  s.t. -1 <= x <= 1  ->  x = 1, lambda = 2
        let qp = QProblem::new(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_row_slice(&[-3.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            Bounds::TwoSided {
                lower: DVector::from_row_slice(&[-1.0]),
                upper: DVector::from_row_slice(&[1.0]),
            },
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap();
        let (x, lambda, _) = brute_force_solve(&qp).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda[0], 2.0, epsilon = 1e-12);
        // flipped sign puts it on the lower bound with a negative multiplier
        let qp2 = QProblem {
            f: DVector::from_row_slice(&[3.0]),
            ..qp
        };
        let (x, lambda, _) = brute_force_solve(&qp2).unwrap();
        assert_abs_diff_eq!(x[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lambda[0], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_problem_yields_no_candidate() {
        // x <= 0 and -x <= -1 cannot hold together
        let qp = QProblem::inequality_form(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::zeros(1),
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_row_slice(&[0.0, -1.0]),
        )
        .unwrap();
        assert_eq!(brute_force_solve(&qp).unwrap_err(), OracleError::NoFeasibleCandidate);
    }

    #[test]
    fn combination_order_is_lexicographic_within_size() {
        let mut c = vec![0usize, 1];
        let mut seen = vec![c.clone()];
        while next_combination(&mut c, 4) {
            seen.push(c.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }

    #[test]
    fn kkt_report_flags_each_violation_kind() {
        let qp = simple_qp();
        // feasible but non-optimal interior point with a sign-violating multiplier
        let x = DVector::from_row_slice(&[0.0, 0.0]);
        let lambda = DVector::from_row_slice(&[-1.0, 0.5]);
        let report = kkt_residual(&qp, &x, &lambda, &DVector::zeros(0));
        assert!(report.stationarity > 1.0);
        assert_eq!(report.primal_ineq, 0.0);
        assert_abs_diff_eq!(report.dual, 1.0, epsilon = 1e-15);
        // lambda[0] * slack[0] = -1 * 1
        assert_abs_diff_eq!(report.complementarity, 1.0, epsilon = 1e-15);
    }
}
