//! Dual active-set iteration over the scaled problem.
//!
//! The iterate is a sign-feasible dual pair `(nu, lambda)` together with a
//! working set of inequality rows. Each pass solves the working-set normal
//! equations through the recursive factor; a sign-feasible subproblem
//! solution either proves optimality or picks the most violated primal
//! constraint to add, while a sign-infeasible one (or a singular working-set
//! Gram matrix) removes a blocking row after a ratio step. Singularity with
//! no blocking rows certifies primal infeasibility.

use crate::factor::{FactorError, LdlFactor};
use crate::problem::LdProblem;
use nalgebra::DVector;

/// Which bound of a two-sided row a working-set member sits on. One-sided
/// rows always use `Upper`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

/// Tolerances and limits. Every field must be strictly positive.
#[derive(Debug, Clone)]
pub struct Settings {
    /// Primal slack tolerance deciding optimality.
    pub eps_primal: f64,
    /// Hessian regularization used by the proximal-point outer loop.
    pub prox_eps: f64,
    /// Outer-loop fixed-point tolerance on `|x - x_prev|`.
    pub prox_eta: f64,
    /// Inner iteration limit per solve call.
    pub iter_max: usize,
    /// Relative pivot tolerance of the working-set factorization.
    pub pivot_tol: f64,
    /// Relative tolerance on the required increase of the dual iterate's
    /// norm between stationary iterates; a miss means the iteration cycles.
    pub cycle_tol: f64,
    /// Outer proximal-point iteration limit.
    pub prox_outer_max: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            eps_primal: 1e-6,
            prox_eps: 1e-4,
            prox_eta: (2f64).powi(-24).sqrt(),
            iter_max: 250,
            pivot_tol: 1e-11,
            cycle_tol: 1e-12,
            prox_outer_max: 100,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("eps_primal", self.eps_primal),
            ("prox_eps", self.prox_eps),
            ("prox_eta", self.prox_eta),
            ("pivot_tol", self.pivot_tol),
            ("cycle_tol", self.cycle_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(format!("{name} must be strictly positive, got {value}"));
            }
        }
        if self.iter_max == 0 {
            return Err("iter_max must be at least 1".into());
        }
        if self.prox_outer_max == 0 {
            return Err("prox_outer_max must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    IterationLimit,
    CycleDetected,
    NumericalFailure,
}

/// Diagnostics attached to a cycle abort: the returned iterate is the one
/// with the largest dual-iterate norm seen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleInfo {
    /// Pass at which the returned iterate was recorded.
    pub best_iteration: usize,
    /// Squared norm of the dual iterate's row combination at that pass.
    pub u_norm_sq: f64,
    /// Most negative primal slack at that pass (0 when none).
    pub worst_slack: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: DVector<f64>,
    /// Full-length multipliers; two-sided rows carry their side in the sign.
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
    /// Final working set in factorization order (after the equality prefix).
    pub working_set: Vec<(usize, Side)>,
    pub status: Status,
    pub iterations: usize,
    /// One objective lower bound per stationary iterate, nondecreasing.
    pub lower_bounds: Vec<f64>,
    /// `-1/2 |u|^2` at the returned iterate.
    pub dual_objective: f64,
    /// On `PrimalInfeasible`: coefficients of a certificate ray, aligned
    /// with `[equalities..., working_set...]`. The certified combination of
    /// constraint rows vanishes while its right-hand side is negative.
    pub certificate: Option<Vec<f64>>,
    pub diagnostics: Option<CycleInfo>,
}

/// Working set of inequality rows, kept in factorization order behind the
/// permanent equality prefix.
#[derive(Debug, Clone)]
struct WorkingSet {
    me: usize,
    entries: Vec<(usize, Side)>,
    member: Vec<Option<Side>>,
}

impl WorkingSet {
    fn new(m: usize, me: usize) -> Self {
        WorkingSet { me, entries: Vec::new(), member: vec![None; m] }
    }

    /// Total factor order including the equality prefix.
    fn order(&self) -> usize {
        self.me + self.entries.len()
    }

    fn add(&mut self, idx: usize, side: Side) {
        debug_assert!(self.member[idx].is_none());
        self.member[idx] = Some(side);
        self.entries.push((idx, side));
    }

    /// Removes the entry at factor position `pos` (must be past the prefix).
    fn remove_pos(&mut self, pos: usize) -> (usize, Side) {
        debug_assert!(pos >= self.me);
        let (idx, side) = self.entries.remove(pos - self.me);
        self.member[idx] = None;
        (idx, side)
    }
}

struct Snapshot {
    u_norm_sq: f64,
    lambda: DVector<f64>,
    nu: DVector<f64>,
    entries: Vec<(usize, Side)>,
    iteration: usize,
    worst_slack: f64,
}

/// Record of one solver pass, for tracing and invariant tests.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub iteration: usize,
    pub working_set_size: usize,
    /// Whether the pass accepted a stationary (sign-feasible) subproblem
    /// solution, as opposed to removing a blocking row.
    pub stationary: bool,
    /// Dual objective value at the end of the pass.
    pub dual_objective: f64,
}

/// Persistent solver state. Keeping the instance alive between calls
/// preserves the working set, multipliers, and the factorization, which is
/// what makes warm starting across a sequence of related problems cheap: a
/// changed linear term costs no factorization work at all.
pub struct DualSolver {
    settings: Settings,
    ws: WorkingSet,
    factor: LdlFactor,
    lambda: DVector<f64>,
    nu: DVector<f64>,
    rebuild_needed: bool,
    factor_builds: u64,
}

impl DualSolver {
    /// Cold state: empty working set (equality rows are always members).
    pub fn new(ldp: &LdProblem, settings: Settings) -> Self {
        settings.validate().expect("invalid settings");
        let zeta = settings.pivot_tol;
        DualSolver {
            settings,
            ws: WorkingSet::new(ldp.m, ldp.me),
            factor: LdlFactor::empty(zeta),
            lambda: DVector::zeros(ldp.m),
            nu: DVector::zeros(ldp.me),
            rebuild_needed: true,
            factor_builds: 0,
        }
    }

    /// Seeds the iterate with a previous solution. Off-set multipliers are
    /// zeroed and members whose rows turn out linearly dependent are dropped
    /// when the factor is built, so any `(lambda, ws)` pair is safe here.
    pub fn warm_start(&mut self, ldp: &LdProblem, lambda0: &DVector<f64>, ws0: &[(usize, Side)]) {
        assert_eq!(lambda0.len(), ldp.m);
        self.ws = WorkingSet::new(ldp.m, ldp.me);
        self.lambda.fill(0.0);
        self.nu.fill(0.0);
        for &(idx, side) in ws0 {
            assert!(idx < ldp.m, "working-set index out of range");
            if self.ws.member[idx].is_none() {
                self.ws.add(idx, side);
                self.lambda[idx] = match side {
                    Side::Upper => lambda0[idx].max(0.0),
                    Side::Lower => lambda0[idx].min(0.0),
                };
            }
        }
        self.rebuild_needed = true;
    }

    /// Number of from-scratch factor builds this solver has performed.
    pub fn factor_builds(&self) -> u64 {
        self.factor_builds
    }

    pub fn solve(&mut self, ldp: &LdProblem) -> SolveResult {
        self.solve_with_trace(ldp, None)
    }

    /// Runs the iteration from the current state; `trace` receives one
    /// record per pass when given.
    pub fn solve_with_trace(
        &mut self,
        ldp: &LdProblem,
        mut trace: Option<&mut Vec<IterationRecord>>,
    ) -> SolveResult {
        assert_eq!(self.lambda.len(), ldp.m, "solver state does not match problem size");
        assert_eq!(self.nu.len(), ldp.me, "solver state does not match problem size");
        if self.rebuild_needed {
            if let Err(status) = self.build_factor(ldp, true) {
                return self.finish(ldp, status, 0, Vec::new(), None, None);
            }
            self.rebuild_needed = false;
        }
        let v_norm_sq = ldp.v.norm_squared();
        let mut last_u_norm_sq: Option<f64> = None;
        let mut best: Option<Snapshot> = None;
        let mut lower_bounds: Vec<f64> = Vec::new();
        let mut refactorized = false;
        let mut k = 0usize;

        loop {
            if k == self.settings.iter_max {
                return self.finish(ldp, Status::IterationLimit, k, lower_bounds, None, None);
            }
            k += 1;

            if !self.factor.is_singular() {
                let mut rhs = self.rhs_vector(ldp);
                for r in rhs.iter_mut() {
                    *r = -*r;
                }
                let sol = match self.factor.solve(&rhs) {
                    Ok(s) => self.refine_candidate(ldp, &rhs, s),
                    Err(_) => {
                        return self.finish(
                            ldp,
                            Status::NumericalFailure,
                            k,
                            lower_bounds,
                            None,
                            None,
                        )
                    }
                };

                let feasible = self.ws.entries.iter().enumerate().all(|(j, &(_, side))| {
                    let val = sol[self.ws.me + j];
                    match side {
                        Side::Upper => val >= 0.0,
                        Side::Lower => val <= 0.0,
                    }
                });

                if feasible {
                    for p in 0..self.ws.me {
                        self.nu[p] = sol[p];
                    }
                    for (j, &(idx, _)) in self.ws.entries.iter().enumerate() {
                        self.lambda[idx] = sol[self.ws.me + j];
                    }
                    let u = self.accumulate_u(ldp);
                    let u_norm_sq = u.norm_squared();
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(IterationRecord {
                            iteration: k,
                            working_set_size: self.ws.order(),
                            stationary: true,
                            dual_objective: -0.5 * u_norm_sq,
                        });
                    }
                    if let Some(last) = last_u_norm_sq {
                        let required = last + self.settings.cycle_tol * (1.0 + last.abs());
                        if u_norm_sq <= required {
                            return self.finish_cycle(ldp, k, lower_bounds, best);
                        }
                    }
                    last_u_norm_sq = Some(u_norm_sq);
                    lower_bounds.push(0.5 * (u_norm_sq - v_norm_sq));

                    let violation = self.worst_violation(ldp, &u);
                    let worst = violation.map(|(_, _, v)| v).unwrap_or(0.0).min(0.0);
                    if best.as_ref().map_or(true, |b| u_norm_sq > b.u_norm_sq) {
                        best = Some(Snapshot {
                            u_norm_sq,
                            lambda: self.lambda.clone(),
                            nu: self.nu.clone(),
                            entries: self.ws.entries.clone(),
                            iteration: k,
                            worst_slack: worst,
                        });
                    }
                    match violation {
                        None => {
                            return self.finish(
                                ldp,
                                Status::Optimal,
                                k,
                                lower_bounds,
                                None,
                                None,
                            )
                        }
                        Some((idx, side, _)) => {
                            if let Err(status) =
                                self.append_row(ldp, idx, side, &mut refactorized)
                            {
                                return self.finish(ldp, status, k, lower_bounds, None, None);
                            }
                        }
                    }
                } else {
                    // Blocking case: step from the current iterate toward the
                    // subproblem solution until the first member hits zero.
                    let mut p = vec![0.0; self.ws.order()];
                    for q in 0..self.ws.me {
                        p[q] = sol[q] - self.nu[q];
                    }
                    for (j, &(idx, _)) in self.ws.entries.iter().enumerate() {
                        p[self.ws.me + j] = sol[self.ws.me + j] - self.lambda[idx];
                    }
                    let blocking = self.blocking_positions(&p, |side, val| match side {
                        Side::Upper => val < 0.0,
                        Side::Lower => val > 0.0,
                    });
                    debug_assert!(!blocking.is_empty());
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(IterationRecord {
                            iteration: k,
                            working_set_size: self.ws.order(),
                            stationary: false,
                            dual_objective: 0.0,
                        });
                    }
                    if let Err(status) = self.fix_component(ldp, &p, &blocking, &mut refactorized)
                    {
                        return self.finish(ldp, status, k, lower_bounds, None, None);
                    }
                    if let Some(t) = trace.as_deref_mut() {
                        let rec = t.last_mut().unwrap();
                        rec.dual_objective = self.dual_objective_general(ldp);
                    }
                }
            } else {
                // Singular working-set Gram matrix: move along a null
                // direction of descent; with nothing blocking, that ray
                // certifies primal infeasibility.
                let mut p = self.factor.null_vector().expect("singular factor");
                let rhs = self.rhs_vector(ldp);
                let sigma: f64 = rhs.iter().zip(&p).map(|(a, b)| a * b).sum();
                let rhs_max = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let p_max = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if sigma.abs() <= 1e-12 * (1.0 + rhs_max * p_max) {
                    // Degenerate direction: the dependent row constrains
                    // nothing new; drop it and move on.
                    let zp = self.factor.zero_pivot().expect("singular factor");
                    if zp < self.ws.me {
                        return self.finish(
                            ldp,
                            Status::NumericalFailure,
                            k,
                            lower_bounds,
                            None,
                            None,
                        );
                    }
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(IterationRecord {
                            iteration: k,
                            working_set_size: self.ws.order(),
                            stationary: false,
                            dual_objective: self.dual_objective_general(ldp),
                        });
                    }
                    let (idx, _) = self.ws.remove_pos(zp);
                    self.lambda[idx] = 0.0;
                    if let Err(status) = self.remove_factor_row(ldp, zp, &mut refactorized) {
                        return self.finish(ldp, status, k, lower_bounds, None, None);
                    }
                    continue;
                }
                if sigma > 0.0 {
                    for c in p.iter_mut() {
                        *c = -*c;
                    }
                }
                let blocking = self.blocking_positions(&p, |side, val| match side {
                    Side::Upper => val < 0.0,
                    Side::Lower => val > 0.0,
                });
                if let Some(t) = trace.as_deref_mut() {
                    t.push(IterationRecord {
                        iteration: k,
                        working_set_size: self.ws.order(),
                        stationary: false,
                        dual_objective: self.dual_objective_general(ldp),
                    });
                }
                if blocking.is_empty() {
                    return self.finish(
                        ldp,
                        Status::PrimalInfeasible,
                        k,
                        lower_bounds,
                        Some(p),
                        None,
                    );
                }
                if let Err(status) = self.fix_component(ldp, &p, &blocking, &mut refactorized) {
                    return self.finish(ldp, status, k, lower_bounds, None, None);
                }
            }
        }
    }

    /// Inner products of inequality row `idx` against the stacked working
    /// rows, plus its own squared norm.
    fn products(&self, ldp: &LdProblem, idx: usize) -> (Vec<f64>, f64) {
        let row = ldp.m_mat.row(idx);
        let mut cross = Vec::with_capacity(self.ws.order());
        for q in 0..self.ws.me {
            cross.push(ldp.n_mat.row(q).dot(&row));
        }
        for &(i, _) in &self.ws.entries {
            cross.push(ldp.m_mat.row(i).dot(&row));
        }
        (cross, row.dot(&row))
    }

    /// Subproblem right-hand side in factor order: equality offsets, then
    /// the working side's dual bound per member.
    fn rhs_vector(&self, ldp: &LdProblem) -> Vec<f64> {
        let mut rhs = Vec::with_capacity(self.ws.order());
        for q in 0..self.ws.me {
            rhs.push(ldp.e[q]);
        }
        for &(idx, side) in &self.ws.entries {
            rhs.push(match side {
                Side::Upper => ldp.d.upper(idx),
                Side::Lower => -ldp.d.lower(idx).expect("lower side requires two-sided bounds"),
            });
        }
        rhs
    }

    /// Iterative refinement of the stacked subproblem solution.
    ///
    /// The multipliers grow with the conditioning of the problem while the
    /// right-hand side stays moderate, so a backward-stable solve leaves
    /// each member row with a slack residual near `order * eps * max |sol|`,
    /// which the primal feasibility tolerance cannot absorb. Re-solving
    /// against the true residual (accumulated with compensation, because
    /// its terms cancel by the same factor the multipliers grew by) pulls
    /// the member slacks down toward the rounding floor of the slack
    /// evaluation. The update-tracked factor may contract the error by a
    /// modest factor only, hence the loop: it runs until the residual
    /// reaches the floor, stalls, or a small cap.
    fn refine_candidate(&self, ldp: &LdProblem, rhs: &[f64], sol: Vec<f64>) -> Vec<f64> {
        if sol.is_empty() {
            return sol;
        }
        let me = self.ws.me;
        let residual = |cand: &[f64]| -> Vec<f64> {
            let mut lam = DVector::zeros(ldp.m);
            let mut nu = DVector::zeros(ldp.me);
            for q in 0..me {
                nu[q] = cand[q];
            }
            for (j, &(idx, _)) in self.ws.entries.iter().enumerate() {
                lam[idx] = cand[me + j];
            }
            let u = crate::problem::compensated_combination(
                ldp.n,
                None,
                &[(&ldp.m_mat, &lam), (&ldp.n_mat, &nu)],
            );
            let mut res = Vec::with_capacity(cand.len());
            for q in 0..me {
                res.push(rhs[q] - ldp.n_mat.row(q).dot(&u.transpose()));
            }
            for (j, &(idx, _)) in self.ws.entries.iter().enumerate() {
                res.push(rhs[me + j] - ldp.m_mat.row(idx).dot(&u.transpose()));
            }
            res
        };
        let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        // Member slacks share units with the primal residual gate (1e-6
        // scale), so an absolute target three orders below it is enough.
        let target = 1e-9;
        let mut best = sol;
        let mut res = residual(&best);
        let mut best_norm = inf_norm(&res);
        if best_norm <= target {
            return best;
        }
        // The update-tracked factor drifts with the length of the update
        // history and may stop contracting well above the floor; a freshly
        // factored copy of the working-set Gram restores full contraction
        // without disturbing the tracked state.
        let mut fresh: Option<LdlFactor> = None;
        for _ in 0..12 {
            let solved = match &fresh {
                Some(f) => f.solve_uncached(&res),
                None => self.factor.solve_uncached(&res),
            };
            let delta = match solved {
                Ok(d) => d,
                Err(_) => break,
            };
            let mut cand = best.clone();
            for (c, d) in cand.iter_mut().zip(&delta) {
                *c += d;
            }
            let cand_res = residual(&cand);
            let cand_norm = inf_norm(&cand_res);
            let halved = cand_norm <= 0.5 * best_norm;
            if cand_norm < best_norm {
                best = cand;
                res = cand_res;
                best_norm = cand_norm;
            }
            if best_norm <= target {
                break;
            }
            if !halved {
                if fresh.is_some() {
                    break;
                }
                fresh = self.fresh_working_factor(ldp);
                if fresh.is_none() {
                    break;
                }
            }
        }
        best
    }

    /// Freshly factors the working-set Gram matrix without touching the
    /// tracked factor; `None` when the rows come out dependent or a pivot
    /// fails, in which case the caller keeps whatever it has.
    fn fresh_working_factor(&self, ldp: &LdProblem) -> Option<LdlFactor> {
        let mut f = LdlFactor::empty(self.settings.pivot_tol);
        for q in 0..self.ws.me {
            let row = ldp.n_mat.row(q);
            let mut cross = Vec::with_capacity(q);
            for r in 0..q {
                cross.push(ldp.n_mat.row(r).dot(&row));
            }
            f.add_row(&cross, row.dot(&row)).ok()?;
        }
        for (j, &(idx, _)) in self.ws.entries.iter().enumerate() {
            let row = ldp.m_mat.row(idx);
            let mut cross = Vec::with_capacity(self.ws.me + j);
            for r in 0..self.ws.me {
                cross.push(ldp.n_mat.row(r).dot(&row));
            }
            for &(i, _) in &self.ws.entries[..j] {
                cross.push(ldp.m_mat.row(i).dot(&row));
            }
            f.add_row(&cross, row.dot(&row)).ok()?;
        }
        if f.is_singular() {
            return None;
        }
        Some(f)
    }

    /// `u = M_W' lambda_W + N' nu`, the row combination of the iterate.
    fn accumulate_u(&self, ldp: &LdProblem) -> DVector<f64> {
        crate::problem::compensated_combination(
            ldp.n,
            None,
            &[(&ldp.m_mat, &self.lambda), (&ldp.n_mat, &self.nu)],
        )
    }

    /// Most violated primal slack among non-members:
    /// `(index, side, value)` of the global minimum below `-eps_primal`, or
    /// `None` when every slack clears the tolerance. The lower slack of a
    /// row is not evaluated when its upper slack is already negative (both
    /// can never be violated at once).
    fn worst_violation(&self, ldp: &LdProblem, u: &DVector<f64>) -> Option<(usize, Side, f64)> {
        let eps = self.settings.eps_primal;
        let mut out: Option<(usize, Side, f64)> = None;
        let consider = |cand: (usize, Side, f64), out: &mut Option<(usize, Side, f64)>| {
            if out.as_ref().map_or(true, |best| cand.2 < best.2) {
                *out = Some(cand);
            }
        };
        for i in 0..ldp.m {
            if self.ws.member[i].is_some() {
                continue;
            }
            let s = ldp.m_mat.row(i).dot(&u.transpose());
            let up = s + ldp.d.upper(i);
            if up < -eps {
                consider((i, Side::Upper, up), &mut out);
            }
            if up >= 0.0 {
                if let Some(dl) = ldp.d.lower(i) {
                    let lo = -s + dl;
                    if lo < -eps {
                        consider((i, Side::Lower, lo), &mut out);
                    }
                }
            }
        }
        out
    }

    /// Factor positions of working-set members whose direction component
    /// would push their multiplier across zero.
    fn blocking_positions<F: Fn(Side, f64) -> bool>(&self, p: &[f64], blocks: F) -> Vec<usize> {
        let mut out = Vec::new();
        for (j, &(_, side)) in self.ws.entries.iter().enumerate() {
            let pos = self.ws.me + j;
            if blocks(side, p[pos]) {
                out.push(pos);
            }
        }
        out
    }

    /// Ratio step: advances the iterate along `p` until the first blocking
    /// member's multiplier reaches zero, then removes that member. Ties take
    /// the lowest constraint index.
    fn fix_component(
        &mut self,
        ldp: &LdProblem,
        p: &[f64],
        blocking: &[usize],
        refactorized: &mut bool,
    ) -> Result<(), Status> {
        let mut alpha = f64::INFINITY;
        let mut at = usize::MAX;
        let mut at_idx = usize::MAX;
        for &pos in blocking {
            let idx = self.ws.entries[pos - self.ws.me].0;
            let ratio = -self.lambda[idx] / p[pos];
            if ratio < alpha || (ratio == alpha && idx < at_idx) {
                alpha = ratio;
                at = pos;
                at_idx = idx;
            }
        }
        debug_assert!(alpha.is_finite() && alpha >= 0.0);
        for q in 0..self.ws.me {
            self.nu[q] += alpha * p[q];
        }
        for (j, &(idx, _)) in self.ws.entries.iter().enumerate() {
            self.lambda[idx] += alpha * p[self.ws.me + j];
        }
        let (idx, _) = self.ws.remove_pos(at);
        self.lambda[idx] = 0.0;
        self.remove_factor_row(ldp, at, refactorized)
    }

    fn append_row(
        &mut self,
        ldp: &LdProblem,
        idx: usize,
        side: Side,
        refactorized: &mut bool,
    ) -> Result<(), Status> {
        let (cross, self_ip) = self.products(ldp, idx);
        match self.factor.add_row(&cross, self_ip) {
            Ok(()) => {
                self.ws.add(idx, side);
                Ok(())
            }
            Err(FactorError::NegativePivot) => {
                self.recover(ldp, refactorized)?;
                let (cross, self_ip) = self.products(ldp, idx);
                match self.factor.add_row(&cross, self_ip) {
                    Ok(()) => {
                        self.ws.add(idx, side);
                        Ok(())
                    }
                    Err(_) => Err(Status::NumericalFailure),
                }
            }
            Err(_) => Err(Status::NumericalFailure),
        }
    }

    fn remove_factor_row(
        &mut self,
        ldp: &LdProblem,
        pos: usize,
        refactorized: &mut bool,
    ) -> Result<(), Status> {
        match self.factor.remove_row(pos) {
            Ok(()) => Ok(()),
            Err(FactorError::NegativePivot) => {
                // the working set no longer contains the row; a rebuild
                // reconstructs exactly the surviving members
                self.recover(ldp, refactorized)
            }
            Err(_) => Err(Status::NumericalFailure),
        }
    }

    /// One full refactorization per solve call is allowed before giving up.
    fn recover(&mut self, ldp: &LdProblem, refactorized: &mut bool) -> Result<(), Status> {
        if *refactorized {
            return Err(Status::NumericalFailure);
        }
        *refactorized = true;
        self.build_factor(ldp, false)
    }

    /// Rebuilds the factor from the working set. With `drop_dependent`,
    /// members whose rows are linearly dependent on earlier ones are dropped
    /// (their multipliers zeroed); otherwise dependence anywhere but the
    /// last row is a failure.
    fn build_factor(&mut self, ldp: &LdProblem, drop_dependent: bool) -> Result<(), Status> {
        self.factor_builds += 1;
        self.factor = LdlFactor::empty(self.settings.pivot_tol);
        for q in 0..self.ws.me {
            let row = ldp.n_mat.row(q);
            let mut cross = Vec::with_capacity(q);
            for r in 0..q {
                cross.push(ldp.n_mat.row(r).dot(&row));
            }
            if self.factor.add_row(&cross, row.dot(&row)).is_err() {
                return Err(Status::NumericalFailure);
            }
            if self.factor.is_singular() && (q + 1 < self.ws.me || !self.ws.entries.is_empty()) {
                // equality rows can never leave the set, so a dependent one
                // is unrecoverable
                return Err(Status::NumericalFailure);
            }
        }
        let mut j = 0;
        while j < self.ws.entries.len() {
            let (idx, _) = self.ws.entries[j];
            let row = ldp.m_mat.row(idx);
            let mut cross = Vec::with_capacity(self.ws.me + j);
            for r in 0..self.ws.me {
                cross.push(ldp.n_mat.row(r).dot(&row));
            }
            for &(i, _) in &self.ws.entries[..j] {
                cross.push(ldp.m_mat.row(i).dot(&row));
            }
            match self.factor.add_row(&cross, row.dot(&row)) {
                Ok(()) => {}
                Err(_) => return Err(Status::NumericalFailure),
            }
            if self.factor.is_singular() {
                let last_overall = j + 1 == self.ws.entries.len();
                if drop_dependent {
                    if self.factor.remove_row(self.ws.me + j).is_err() {
                        return Err(Status::NumericalFailure);
                    }
                    let (drop_idx, _) = self.ws.entries.remove(j);
                    self.ws.member[drop_idx] = None;
                    self.lambda[drop_idx] = 0.0;
                    continue;
                } else if !last_overall {
                    return Err(Status::NumericalFailure);
                }
            }
            j += 1;
        }
        Ok(())
    }

    /// Dual objective at the current (not necessarily stationary) iterate:
    /// `1/2 |u|^2 + rhs'(nu, lambda_W)`.
    fn dual_objective_general(&self, ldp: &LdProblem) -> f64 {
        let u = self.accumulate_u(ldp);
        let rhs = self.rhs_vector(ldp);
        let mut lin = 0.0;
        for q in 0..self.ws.me {
            lin += rhs[q] * self.nu[q];
        }
        for (j, &(idx, _)) in self.ws.entries.iter().enumerate() {
            lin += rhs[self.ws.me + j] * self.lambda[idx];
        }
        0.5 * u.norm_squared() + lin
    }

    fn finish(
        &mut self,
        ldp: &LdProblem,
        status: Status,
        iterations: usize,
        lower_bounds: Vec<f64>,
        certificate: Option<Vec<f64>>,
        diagnostics: Option<CycleInfo>,
    ) -> SolveResult {
        let x = ldp.recover_primal(&self.lambda, &self.nu);
        let u = self.accumulate_u(ldp);
        SolveResult {
            x,
            lambda: self.lambda.clone(),
            nu: self.nu.clone(),
            working_set: self.ws.entries.clone(),
            status,
            iterations,
            lower_bounds,
            dual_objective: -0.5 * u.norm_squared(),
            certificate,
            diagnostics,
        }
    }

    fn finish_cycle(
        &mut self,
        ldp: &LdProblem,
        iterations: usize,
        lower_bounds: Vec<f64>,
        best: Option<Snapshot>,
    ) -> SolveResult {
        let snap = best.expect("cycle check requires a previous stationary iterate");
        self.lambda = snap.lambda.clone();
        self.nu = snap.nu.clone();
        self.ws = WorkingSet::new(ldp.m, self.ws.me);
        for &(idx, side) in &snap.entries {
            self.ws.add(idx, side);
        }
        self.rebuild_needed = true;
        let info = CycleInfo {
            best_iteration: snap.iteration,
            u_norm_sq: snap.u_norm_sq,
            worst_slack: snap.worst_slack,
        };
        self.finish(
            ldp,
            Status::CycleDetected,
            iterations,
            lower_bounds,
            None,
            Some(info),
        )
    }
}

/// Cold-started solve: the iterate begins at zero multipliers with only the
/// equality rows in the working set.
pub fn solve(ldp: &LdProblem, settings: &Settings) -> SolveResult {
    DualSolver::new(ldp, settings.clone()).solve(ldp)
}

/// Warm-started solve from a previous solution's multipliers and working set.
pub fn solve_warm(
    ldp: &LdProblem,
    settings: &Settings,
    lambda0: &DVector<f64>,
    ws0: &[(usize, Side)],
) -> SolveResult {
    let mut solver = DualSolver::new(ldp, settings.clone());
    solver.warm_start(ldp, lambda0, ws0);
    solver.solve(ldp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{transform, Bounds, QProblem};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn corner_qp() -> QProblem {
        QProblem::inequality_form(
            DMatrix::identity(2, 2),
            DVector::from_row_slice(&[-2.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]),
            DVector::from_row_slice(&[1.0, 0.3]),
        )
        .unwrap()
    }

    #[test]
    fn walks_to_the_known_corner() {
        let qp = corner_qp();
        let ldp = transform(&qp, 0.0).unwrap();
        let res = solve(&ldp, &Settings::default());
        assert_eq!(res.status, Status::Optimal);
        assert_eq!(res.iterations, 3);
        assert_abs_diff_eq!(res.x[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(res.x[1], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(res.lambda[0], 1.3, epsilon = 1e-12);
        assert_abs_diff_eq!(res.lambda[1], 0.4, epsilon = 1e-12);
        assert_eq!(res.lower_bounds.len(), 3);
        assert_abs_diff_eq!(res.lower_bounds[0], -4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(res.lower_bounds[1], -1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(res.lower_bounds[2], -1.71, epsilon = 1e-12);
        // final bound matches the primal objective exactly in exact
        // arithmetic
        let obj = qp.objective(&res.x);
        assert_abs_diff_eq!(res.lower_bounds[2], obj, epsilon = 1e-12);
        // |v|^2 = 8 here, and the final bound is (|u|^2 - |v|^2) / 2, so the
        // dual objective -|u|^2 / 2 sits at -(J + |v|^2 / 2)
        assert_abs_diff_eq!(res.dual_objective, -(obj + 0.5 * 8.0), epsilon = 1e-12);
    }

    #[test]
    fn certifies_contradictory_rows() {
        let qp = QProblem::inequality_form(
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::zeros(1),
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_row_slice(&[0.0, -1.0]),
        )
        .unwrap();
        let ldp = transform(&qp, 0.0).unwrap();
        let res = solve(&ldp, &Settings::default());
        assert_eq!(res.status, Status::PrimalInfeasible);
        let p = res.certificate.as_ref().unwrap();
        assert_eq!(p, &vec![1.0, 1.0]);
        // certified combination of rows vanishes with negative rhs
        assert_eq!(res.working_set.len(), 2);
        let mut combo = DVector::zeros(1);
        let mut rhs = 0.0;
        let b = [0.0, -1.0];
        for (c, &(idx, _)) in p.iter().zip(&res.working_set) {
            combo += qp.a.row(idx).transpose() * *c;
            rhs += c * b[idx];
        }
        assert!(combo.abs().max() <= 1e-12);
        assert!(rhs < 0.0);
        assert!(p.iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn two_sided_scalar_box() {
        let make = |f: f64| {
            QProblem::new(
                DMatrix::from_row_slice(1, 1, &[1.0]),
                DVector::from_row_slice(&[f]),
                DMatrix::from_row_slice(1, 1, &[1.0]),
                Bounds::TwoSided {
                    lower: DVector::from_row_slice(&[-1.0]),
                    upper: DVector::from_row_slice(&[1.0]),
                },
                DMatrix::zeros(0, 1),
                DVector::zeros(0),
            )
            .unwrap()
        };
        let ldp = transform(&make(-3.0), 0.0).unwrap();
        let res = solve(&ldp, &Settings::default());
        assert_eq!(res.status, Status::Optimal);
        assert_abs_diff_eq!(res.x[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(res.lambda[0], 2.0, epsilon = 1e-14);
        assert_eq!(res.working_set, vec![(0, Side::Upper)]);

        let ldp = transform(&make(3.0), 0.0).unwrap();
        let res = solve(&ldp, &Settings::default());
        assert_eq!(res.status, Status::Optimal);
        assert_abs_diff_eq!(res.x[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(res.lambda[0], -2.0, epsilon = 1e-14);
        assert_eq!(res.working_set, vec![(0, Side::Lower)]);
    }

    #[test]
    fn equality_rows_stay_active() {
        // min 1/2|x|^2 s.t. x1 + x2 = 1, x1 <= 0.1
        let qp = QProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Bounds::Upper(DVector::from_row_slice(&[0.1])),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_row_slice(&[1.0]),
        )
        .unwrap();
        let ldp = transform(&qp, 0.0).unwrap();
        let res = solve(&ldp, &Settings::default());
        assert_eq!(res.status, Status::Optimal);
        assert_abs_diff_eq!(res.x[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(res.x[1], 0.9, epsilon = 1e-12);
        // stationarity fixes nu = -x2, lambda = x2 - x1
        assert_abs_diff_eq!(res.nu[0], -0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(res.lambda[0], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn warm_start_at_solution_takes_one_pass() {
        let qp = corner_qp();
        let ldp = transform(&qp, 0.0).unwrap();
        let settings = Settings::default();
        let first = solve(&ldp, &settings);
        let again = solve_warm(&ldp, &settings, &first.lambda, &first.working_set);
        assert_eq!(again.status, Status::Optimal);
        assert_eq!(again.iterations, 1);
        assert!((again.x - &first.x).abs().max() <= 1e-12);
    }

    #[test]
    fn unconstrained_problem_finishes_in_one_pass() {
        let qp = QProblem::inequality_form(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_row_slice(&[1.0, -1.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        let ldp = transform(&qp, 0.0).unwrap();
        let res = solve(&ldp, &Settings::default());
        assert_eq!(res.status, Status::Optimal);
        assert_eq!(res.iterations, 1);
        let expect = -qp.h.clone().lu().solve(&qp.f).unwrap();
        assert!((&res.x - expect).abs().max() <= 1e-12);
        assert_eq!(res.lower_bounds.len(), 1);
        // with an empty working set the bound -|v|^2/2 is already the optimum
        assert_abs_diff_eq!(res.lower_bounds[0], qp.objective(&res.x), epsilon = 1e-12);
        assert_eq!(res.dual_objective, -0.0);
    }

    #[test]
    fn iteration_cap_returns_sign_feasible_iterate() {
        let qp = corner_qp();
        let ldp = transform(&qp, 0.0).unwrap();
        let settings = Settings { iter_max: 2, ..Settings::default() };
        let res = solve(&ldp, &settings);
        assert_eq!(res.status, Status::IterationLimit);
        assert_eq!(res.iterations, 2);
        for (i, &l) in res.lambda.iter().enumerate() {
            let member = res.working_set.iter().any(|&(idx, _)| idx == i);
            assert!(member || l == 0.0);
            assert!(l >= 0.0);
        }
    }

    #[test]
    fn removal_path_reaches_optimum_after_overshoot() {
        // Warm-start with a wrong working set so the solver must remove a
        // member before finding the corner.
        let qp = corner_qp();
        let ldp = transform(&qp, 0.0).unwrap();
        // constraint 1 alone is not active at the optimum of this tilted
        // objective
        let qp2 = QProblem {
            f: DVector::from_row_slice(&[-0.1, -0.1]),
            ..qp
        };
        let ldp2 = transform(&qp2, 0.0).unwrap();
        let lambda0 = DVector::from_row_slice(&[0.5, 0.5]);
        let ws0 = vec![(0, Side::Upper), (1, Side::Upper)];
        let res = solve_warm(&ldp2, &Settings::default(), &lambda0, &ws0);
        assert_eq!(res.status, Status::Optimal);
        assert!((res.x - DVector::from_row_slice(&[0.1, 0.1])).abs().max() <= 1e-12);
        assert!(res.working_set.is_empty());
        let _ = ldp;
    }
}
