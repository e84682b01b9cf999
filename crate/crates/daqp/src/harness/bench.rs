//! Timing and accuracy drivers over generated problem batches.
//!
//! `run_benchmark` solves seeded batches across a condition-number sweep,
//! timing each solve and scoring it against a reference solution: the
//! enumeration oracle on problems small enough for it, a tightened
//! proximal-point solve otherwise. `run_sequence` replays a perturbed
//! problem sequence twice, cold-started and warm-started, to expose how
//! much work the carried-over working set saves.

use crate::harness::generator::{generate, GeneratorConfig};
use crate::oracle::{brute_force_solve, kkt_residual};
use crate::problem::{transform, Bounds, QProblem};
use crate::prox::prox_solve;
use crate::solver::{solve, DualSolver, Settings, SolveResult, Status};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::Write;
use std::time::Instant;

/// Batch shape for [`run_benchmark`].
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub n: usize,
    pub m: usize,
    pub me: usize,
    /// Condition numbers to sweep.
    pub kappas: Vec<f64>,
    /// Problems per condition number.
    pub count: usize,
    /// Timing repeats per problem; the median is reported.
    pub repeats: usize,
    pub seed: u64,
    pub two_sided: bool,
    /// Solve through the proximal-point outer loop instead of directly.
    pub prox: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n: 25,
            m: 100,
            me: 0,
            kappas: vec![1e2, 1e4, 1e6],
            count: 20,
            repeats: 5,
            seed: 1,
            two_sided: false,
            prox: false,
        }
    }
}

/// One solved problem in a benchmark batch.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub kappa: f64,
    pub index: usize,
    pub seed: u64,
    pub status: Status,
    pub iterations: usize,
    pub median_seconds: f64,
    /// `max|x - x_ref| / (1 + max|x_ref|)`; NaN when no reference exists.
    pub x_error: f64,
    /// Largest first-order optimality residual.
    pub kkt_residual: f64,
}

fn reference_solution(qp: &QProblem) -> Option<DVector<f64>> {
    if qp.n <= 8 && qp.m <= 14 {
        return brute_force_solve(qp).ok().map(|(x, _, _)| x);
    }
    let tight = Settings {
        prox_eps: 1e-6,
        prox_eta: 1e-10,
        prox_outer_max: 300,
        iter_max: 2000,
        ..Settings::default()
    };
    prox_solve(qp, &tight, None)
        .ok()
        .filter(|r| r.status == Status::Optimal)
        .map(|r| r.x)
}

fn solve_once(qp: &QProblem, settings: &Settings, prox: bool) -> SolveResult {
    if prox {
        match prox_solve(qp, settings, None) {
            Ok(res) => res,
            Err(_) => unreachable!("generated Hessians are positive definite"),
        }
    } else {
        let ldp = transform(qp, 0.0).expect("generated Hessians are positive definite");
        solve(&ldp, settings)
    }
}

/// Solves and times every problem in the batch.
pub fn run_benchmark(cfg: &BenchConfig) -> Vec<BenchRecord> {
    assert!(cfg.repeats >= 1);
    let settings = Settings::default();
    let mut records = Vec::with_capacity(cfg.kappas.len() * cfg.count);
    let mut seed = cfg.seed;
    for &kappa in &cfg.kappas {
        for index in 0..cfg.count {
            let gen_cfg = GeneratorConfig {
                me: cfg.me,
                kappa,
                two_sided: cfg.two_sided,
                ..GeneratorConfig::new(cfg.n, cfg.m, seed)
            };
            let qp = generate(&gen_cfg);
            let mut times = Vec::with_capacity(cfg.repeats);
            let mut res = None;
            for _ in 0..cfg.repeats {
                let start = Instant::now();
                let r = solve_once(&qp, &settings, cfg.prox);
                times.push(start.elapsed().as_secs_f64());
                res = Some(r);
            }
            let res = res.expect("repeats >= 1");
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median_seconds = times[times.len() / 2];
            let x_error = match reference_solution(&qp) {
                Some(x_ref) => {
                    (&res.x - &x_ref).amax() / (1.0 + x_ref.amax())
                }
                None => f64::NAN,
            };
            let kkt = kkt_residual(&qp, &res.x, &res.lambda, &res.nu).max_residual();
            records.push(BenchRecord {
                kappa,
                index,
                seed,
                status: res.status,
                iterations: res.iterations,
                median_seconds,
                x_error,
                kkt_residual: kkt,
            });
            seed += 1;
        }
    }
    records
}

/// Writes the records as CSV with a header row.
pub fn write_csv<W: Write>(mut w: W, records: &[BenchRecord]) -> std::io::Result<()> {
    writeln!(w, "kappa,index,seed,status,iterations,median_seconds,x_error,kkt_residual")?;
    for r in records {
        writeln!(
            w,
            "{:e},{},{},{:?},{},{:.3e},{:.3e},{:.3e}",
            r.kappa, r.index, r.seed, r.status, r.iterations, r.median_seconds, r.x_error, r.kkt_residual
        )?;
    }
    Ok(())
}

/// Per-condition-number worst cases, one line each.
pub fn summarize(records: &[BenchRecord]) -> String {
    let mut kappas: Vec<f64> = records.iter().map(|r| r.kappa).collect();
    kappas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    kappas.dedup();
    let mut out = String::new();
    for kappa in kappas {
        let group: Vec<&BenchRecord> = records.iter().filter(|r| r.kappa == kappa).collect();
        let solved = group.iter().filter(|r| r.status == Status::Optimal).count();
        let worst_x = group.iter().map(|r| r.x_error).fold(f64::NAN, f64::max);
        let worst_kkt = group.iter().map(|r| r.kkt_residual).fold(0.0, f64::max);
        let mut med: Vec<f64> = group.iter().map(|r| r.median_seconds).collect();
        med.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_time = med[med.len() / 2];
        let max_iters = group.iter().map(|r| r.iterations).max().unwrap_or(0);
        out.push_str(&format!(
            "kappa {:8.1e}  solved {}/{}  worst |x - ref| {:9.2e}  worst KKT {:9.2e}  median time {:9.2e}s  max iters {}\n",
            kappa, solved, group.len(), worst_x, worst_kkt, median_time, max_iters
        ));
    }
    out
}

/// Shape of a perturbed problem sequence for [`run_sequence`].
#[derive(Debug, Clone)]
pub struct SequenceConfig {
    pub n: usize,
    pub m: usize,
    pub me: usize,
    pub kappa: f64,
    /// Number of solves; the first is unperturbed.
    pub steps: usize,
    /// Standard deviation of the Gaussian perturbation applied to the
    /// linear cost and to the constraint right-hand sides at each step.
    pub perturb_scale: f64,
    pub seed: u64,
    pub two_sided: bool,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            n: 10,
            m: 30,
            me: 0,
            kappa: 1e2,
            steps: 20,
            perturb_scale: 0.05,
            seed: 1,
            two_sided: false,
        }
    }
}

/// Iteration counts from replaying a perturbed sequence cold and warm.
#[derive(Debug, Clone)]
pub struct SequenceReport {
    /// Inner iterations per step with a fresh solver each time.
    pub cold_iterations: Vec<usize>,
    /// Inner iterations per step with one solver carrying its working set.
    pub warm_iterations: Vec<usize>,
    /// Status per step of the warm run.
    pub statuses: Vec<Status>,
}

/// Replays a perturbed sequence of the same problem, cold and warm.
///
/// Only linear data (cost and right-hand sides) is perturbed, so the
/// Hessian factorization and constraint Gram data are computed once. Both
/// sides of two-sided rows shift together, which keeps every row's width
/// and the problem's validity intact.
pub fn run_sequence(cfg: &SequenceConfig) -> SequenceReport {
    assert!(cfg.steps >= 1);
    let gen_cfg = GeneratorConfig {
        me: cfg.me,
        kappa: cfg.kappa,
        two_sided: cfg.two_sided,
        ..GeneratorConfig::new(cfg.n, cfg.m, cfg.seed)
    };
    let qp = generate(&gen_cfg);
    let mut ldp = transform(&qp, 0.0).expect("generated Hessians are positive definite");
    let settings = Settings::default();
    let mut warm = DualSolver::new(&ldp, settings.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_A5A5_A5A5_A5A5);

    let mut f_cur = qp.f.clone();
    let mut bounds_cur = qp.bounds.clone();
    let mut report = SequenceReport {
        cold_iterations: Vec::with_capacity(cfg.steps),
        warm_iterations: Vec::with_capacity(cfg.steps),
        statuses: Vec::with_capacity(cfg.steps),
    };
    for step in 0..cfg.steps {
        if step > 0 && cfg.perturb_scale > 0.0 {
            for v in f_cur.iter_mut() {
                *v += cfg.perturb_scale * rng.sample::<f64, _>(StandardNormal);
            }
            let shift =
                DVector::from_fn(cfg.m, |_, _| cfg.perturb_scale * rng.sample::<f64, _>(StandardNormal));
            match &mut bounds_cur {
                Bounds::Upper(b) => *b += &shift,
                Bounds::TwoSided { lower, upper } => {
                    *lower += &shift;
                    *upper += &shift;
                }
            }
        }
        ldp.update_linear_terms(&f_cur, &bounds_cur, &qp.h_eq);
        let warm_res = warm.solve(&ldp);
        report.warm_iterations.push(warm_res.iterations);
        report.statuses.push(warm_res.status);
        let cold_res = solve(&ldp, &settings);
        report.cold_iterations.push(cold_res.iterations);
    }
    report
}
