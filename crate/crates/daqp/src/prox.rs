//! Proximal-point outer loop.
//!
//! Regularizing the Hessian with `eps * I` makes the inner solver applicable
//! to semidefinite problems and blunts ill-conditioning; iterating
//!
//! `x_{k+1} = argmin 1/2 x'(H + eps I)x + (f - eps x_k)'x  s.t. constraints`
//!
//! converges to a solution of the original problem. Only the linear terms
//! change between passes, so the Hessian is factored exactly once and the
//! inner solver keeps its working set, multipliers, and factorization from
//! one pass to the next.

use crate::problem::{transform, ProblemError, QProblem};
use crate::solver::{DualSolver, Settings, SolveResult, Status};
use nalgebra::DVector;

/// Bookkeeping from a proximal-point run.
#[derive(Debug, Clone)]
pub struct ProxStats {
    /// Outer passes performed.
    pub outer_passes: usize,
    /// Inner solver passes summed over the outer loop.
    pub total_inner_iterations: usize,
    /// From-scratch factor builds performed by the inner solver; stays at 1
    /// no matter how many outer passes run.
    pub factor_builds: u64,
    /// Accepted primal iterate after each outer pass.
    pub x_history: Vec<DVector<f64>>,
}

/// Solves `qp` through outer proximal-point iterations, starting from `x0`
/// (the origin when `None`).
///
/// Terminates once consecutive iterates are within `settings.prox_eta` in
/// the Euclidean norm, or with `IterationLimit` after
/// `settings.prox_outer_max` passes. A non-optimal inner status ends the
/// loop immediately and is passed through, so infeasibility certificates
/// survive. The only error is an indefinite Hessian that stays indefinite
/// after regularization.
pub fn prox_solve(
    qp: &QProblem,
    settings: &Settings,
    x0: Option<&DVector<f64>>,
) -> Result<SolveResult, ProblemError> {
    prox_solve_stats(qp, settings, x0).map(|(res, _)| res)
}

/// [`prox_solve`] variant that also reports outer-loop statistics.
pub fn prox_solve_stats(
    qp: &QProblem,
    settings: &Settings,
    x0: Option<&DVector<f64>>,
) -> Result<(SolveResult, ProxStats), ProblemError> {
    settings.validate().map_err(ProblemError::DimensionMismatch)?;
    let eps = settings.prox_eps;
    let mut ldp = transform(qp, eps)?;
    let mut solver = DualSolver::new(&ldp, settings.clone());
    let mut x = match x0 {
        Some(x0) => {
            assert_eq!(x0.len(), qp.n);
            x0.clone()
        }
        None => DVector::zeros(qp.n),
    };
    let mut stats = ProxStats {
        outer_passes: 0,
        total_inner_iterations: 0,
        factor_builds: 0,
        x_history: Vec::new(),
    };

    let mut last: Option<SolveResult> = None;
    for _ in 0..settings.prox_outer_max {
        let f_shift = &qp.f - eps * &x;
        ldp.update_linear_terms(&f_shift, &qp.bounds, &qp.h_eq);
        let mut res = solver.solve(&ldp);
        stats.outer_passes += 1;
        stats.total_inner_iterations += res.iterations;
        stats.factor_builds = solver.factor_builds();
        res.iterations = stats.total_inner_iterations;
        if res.status != Status::Optimal {
            stats.x_history.push(res.x.clone());
            return Ok((res, stats));
        }
        let step = (&res.x - &x).norm();
        x = res.x.clone();
        stats.x_history.push(res.x.clone());
        if step < settings.prox_eta {
            return Ok((res, stats));
        }
        last = Some(res);
    }
    let mut res = last.expect("prox_outer_max is validated to be at least 1");
    res.status = Status::IterationLimit;
    res.iterations = stats.total_inner_iterations;
    Ok((res, stats))
}
