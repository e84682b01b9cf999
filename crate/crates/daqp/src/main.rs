//! Command-line front end: solve problem files, generate seeded test
//! problems, benchmark batches, replay warm-start sequences, and check
//! stored solutions.
//!
//! Exit codes: 0 when the command succeeds (for `solve`, when the problem
//! is solved to optimality), 2 when the problem is certified primal
//! infeasible, 3 for every other outcome (limits, numerical failure, bad
//! input, I/O errors).

use clap::{Args, Parser, Subcommand};
use daqp::harness::fileio::{
    self, read_problem, read_solution, write_problem, write_solution, SolutionFile,
};
use daqp::harness::{
    run_benchmark, run_sequence, BenchConfig, GeneratorConfig, SequenceConfig,
};
use daqp::oracle::kkt_residual;
use daqp::{prox_solve, solve, solve_warm, transform, QProblem, Settings, SolveResult, Status};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "daqp", version, about = "Dense active-set QP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file.
    Solve(SolveArgs),
    /// Generate a seeded random problem file.
    Gen(GenArgs),
    /// Time seeded problem batches across condition numbers.
    Bench(BenchArgs),
    /// Replay a perturbed problem sequence cold- and warm-started.
    Seq(SeqArgs),
    /// Verify a stored solution against its problem file.
    Check(CheckArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file to solve.
    file: PathBuf,
    /// Solve through the proximal-point outer loop (handles semidefinite
    /// and badly conditioned Hessians).
    #[arg(long)]
    prox: bool,
    /// Warm-start from a solution file's multipliers and working set.
    #[arg(long, conflicts_with = "prox")]
    warm: Option<PathBuf>,
    /// Write the solution to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct Tuning {
    /// Primal slack tolerance deciding optimality.
    #[arg(long)]
    eps_primal: Option<f64>,
    /// Hessian regularization for the proximal-point loop.
    #[arg(long = "eps", alias = "prox-eps")]
    prox_eps: Option<f64>,
    /// Fixed-point tolerance of the proximal-point loop.
    #[arg(long = "eta", alias = "prox-eta")]
    prox_eta: Option<f64>,
    /// Inner iteration limit per solve call.
    #[arg(long)]
    iter_max: Option<usize>,
    /// Outer proximal-point iteration limit.
    #[arg(long)]
    prox_outer_max: Option<usize>,
}

impl Tuning {
    fn apply(&self, mut s: Settings) -> Result<Settings, String> {
        if let Some(v) = self.eps_primal {
            s.eps_primal = v;
        }
        if let Some(v) = self.prox_eps {
            s.prox_eps = v;
        }
        if let Some(v) = self.prox_eta {
            s.prox_eta = v;
        }
        if let Some(v) = self.iter_max {
            s.iter_max = v;
        }
        if let Some(v) = self.prox_outer_max {
            s.prox_outer_max = v;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Args)]
struct GenArgs {
    /// Where to write the problem file.
    file: PathBuf,
    /// Number of variables.
    #[arg(long)]
    n: usize,
    /// Number of inequality rows.
    #[arg(long)]
    m: usize,
    /// Number of equality rows.
    #[arg(long, default_value_t = 0)]
    me: usize,
    /// Condition number of the Hessian.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Seed; falls back to the DAQP_SEED environment variable, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Generate two-sided inequality rows.
    #[arg(long)]
    two_sided: bool,
    /// Make the last two rows contradict each other.
    #[arg(long)]
    infeasible: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Number of variables.
    #[arg(long, default_value_t = 25)]
    n: usize,
    /// Number of inequality rows.
    #[arg(long, default_value_t = 100)]
    m: usize,
    /// Number of equality rows.
    #[arg(long, default_value_t = 0)]
    me: usize,
    /// Comma-separated condition numbers to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e2, 1e4, 1e6])]
    kappas: Vec<f64>,
    /// Problems per condition number.
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Timing repeats per problem (median reported).
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Seed; falls back to the DAQP_SEED environment variable, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Generate two-sided inequality rows.
    #[arg(long)]
    two_sided: bool,
    /// Solve through the proximal-point outer loop.
    #[arg(long)]
    prox: bool,
    /// Also write per-problem records as CSV to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SeqArgs {
    /// Number of variables.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Number of inequality rows.
    #[arg(long, default_value_t = 30)]
    m: usize,
    /// Number of equality rows.
    #[arg(long, default_value_t = 0)]
    me: usize,
    /// Condition number of the Hessian.
    #[arg(long, default_value_t = 1e2)]
    kappa: f64,
    /// Number of solves in the sequence.
    #[arg(long, default_value_t = 20)]
    steps: usize,
    /// Gaussian perturbation scale on linear cost and right-hand sides.
    #[arg(long, default_value_t = 0.05)]
    perturb: f64,
    /// Seed; falls back to the DAQP_SEED environment variable, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Generate two-sided inequality rows.
    #[arg(long)]
    two_sided: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Problem file.
    problem: PathBuf,
    /// Solution file to verify.
    solution: PathBuf,
    /// Largest acceptable optimality residual.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

fn resolve_seed(explicit: Option<u64>) -> u64 {
    explicit
        .or_else(|| std::env::var("DAQP_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

fn status_exit(status: Status) -> ExitCode {
    match status {
        Status::Optimal => ExitCode::SUCCESS,
        Status::PrimalInfeasible => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(3)
}

/// Scaled stationarity, scaled complementarity, and the worst overall
/// residual: stationarity and complementarity are measured relative to the
/// magnitudes entering them, feasibility and sign violations absolutely.
fn scaled_residuals(
    qp: &QProblem,
    x: &nalgebra::DVector<f64>,
    lambda: &nalgebra::DVector<f64>,
    nu: &nalgebra::DVector<f64>,
    report: &daqp::KktReport,
) -> (f64, f64, f64) {
    let amax = |v: &nalgebra::DVector<f64>| if v.is_empty() { 0.0 } else { v.amax() };
    let hx = &qp.h * x;
    let atl = qp.a.transpose() * lambda;
    let gtn = qp.g.transpose() * nu;
    let stat_scale = 1.0 + amax(&qp.f) + amax(&hx) + amax(&atl) + amax(&gtn);
    let bound_scale = match &qp.bounds {
        daqp::Bounds::Upper(b) => amax(b),
        daqp::Bounds::TwoSided { lower, upper } => amax(lower).max(amax(upper)),
    };
    let comp_scale = (1.0 + amax(lambda)) * (1.0 + bound_scale);
    let stat = report.stationarity / stat_scale;
    let comp = report.complementarity / comp_scale;
    let worst = stat.max(report.primal_ineq).max(report.equality).max(report.dual).max(comp);
    (stat, comp, worst)
}

fn report_solution(qp: &QProblem, res: &SolveResult) {
    println!("status      {}", fileio::status_word(res.status));
    println!("iterations  {}", res.iterations);
    match res.status {
        Status::Optimal => {
            println!("objective   {:.12e}", qp.objective(&res.x));
            let fmt = |v: &nalgebra::DVector<f64>| {
                let parts: Vec<String> = v.iter().map(|c| format!("{c:.9e}")).collect();
                format!("[{}]", parts.join(", "))
            };
            println!("x           {}", fmt(&res.x));
            println!("lambda      {}", fmt(&res.lambda));
            if !res.nu.is_empty() {
                println!("nu          {}", fmt(&res.nu));
            }
            let kkt = kkt_residual(qp, &res.x, &res.lambda, &res.nu);
            let (_, _, worst) = scaled_residuals(qp, &res.x, &res.lambda, &res.nu, &kkt);
            println!("kkt residual {:.3e}", worst);
            println!("active rows {}", res.working_set.len());
            if let Some(last) = res.lower_bounds.last() {
                println!("final dual lower bound {:.12e}", last);
            }
        }
        Status::PrimalInfeasible => {
            if let Some(cert) = &res.certificate {
                let as_text: Vec<String> = cert.iter().map(|v| format!("{v:.6e}")).collect();
                println!("infeasibility certificate over {} active rows:", cert.len());
                println!("  [{}]", as_text.join(", "));
            }
        }
        _ => {
            if let Some(info) = &res.diagnostics {
                println!(
                    "best dual iterate at pass {} (worst slack {:.3e})",
                    info.best_iteration, info.worst_slack
                );
            }
        }
    }
}

fn cmd_solve(args: &SolveArgs) -> ExitCode {
    let qp = match read_problem(&args.file) {
        Ok(qp) => qp,
        Err(e) => return fail(e),
    };
    let settings = match args.tuning.apply(Settings::default()) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let res = if args.prox {
        match prox_solve(&qp, &settings, None) {
            Ok(res) => res,
            Err(e) => return fail(e),
        }
    } else {
        let ldp = match transform(&qp, 0.0) {
            Ok(ldp) => ldp,
            Err(e) => {
                return fail(format!("{e}; a semidefinite Hessian needs --prox"));
            }
        };
        match &args.warm {
            Some(path) => match read_solution(path) {
                Ok(sol) => {
                    if sol.lambda.len() != qp.m {
                        return fail(format!(
                            "warm-start multipliers have {} rows, problem has {}",
                            sol.lambda.len(),
                            qp.m
                        ));
                    }
                    solve_warm(&ldp, &settings, &sol.lambda, &sol.working_set)
                }
                Err(e) => return fail(e),
            },
            None => solve(&ldp, &settings),
        }
    };
    report_solution(&qp, &res);
    if let Some(out) = &args.out {
        if let Err(e) = write_solution(out, &SolutionFile::from_result(&res)) {
            return fail(e);
        }
    }
    status_exit(res.status)
}

fn cmd_gen(args: &GenArgs) -> ExitCode {
    let cfg = GeneratorConfig {
        n: args.n,
        m: args.m,
        me: args.me,
        kappa: args.kappa,
        seed: resolve_seed(args.seed),
        two_sided: args.two_sided,
        feasible: !args.infeasible,
    };
    if cfg.n < 1 || cfg.me > cfg.n || cfg.kappa < 1.0 || (!cfg.feasible && cfg.m < 2) {
        return fail("invalid generator shape: need n >= 1, me <= n, kappa >= 1, and m >= 2 for --infeasible");
    }
    let qp = daqp::harness::generate(&cfg);
    match write_problem(&args.file, &qp) {
        Ok(()) => {
            println!(
                "wrote {} (n {}, m {}, me {}, kappa {:.1e}, seed {})",
                args.file.display(),
                cfg.n,
                cfg.m,
                cfg.me,
                cfg.kappa,
                cfg.seed
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn cmd_bench(args: &BenchArgs) -> ExitCode {
    let cfg = BenchConfig {
        n: args.n,
        m: args.m,
        me: args.me,
        kappas: args.kappas.clone(),
        count: args.count,
        repeats: args.repeats,
        seed: resolve_seed(args.seed),
        two_sided: args.two_sided,
        prox: args.prox,
    };
    if cfg.kappas.is_empty() || cfg.count == 0 || cfg.repeats == 0 {
        return fail("bench needs at least one kappa, count >= 1, and repeats >= 1");
    }
    let records = run_benchmark(&cfg);
    print!("{}", daqp::harness::bench::summarize(&records));
    if let Some(path) = &args.csv {
        let file = match std::fs::File::create(path) {
            Ok(f) => f,
            Err(e) => return fail(e),
        };
        if let Err(e) = daqp::harness::bench::write_csv(file, &records) {
            return fail(e);
        }
        println!("wrote {}", path.display());
    }
    if records.iter().all(|r| r.status == Status::Optimal) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn cmd_seq(args: &SeqArgs) -> ExitCode {
    let cfg = SequenceConfig {
        n: args.n,
        m: args.m,
        me: args.me,
        kappa: args.kappa,
        steps: args.steps,
        perturb_scale: args.perturb,
        seed: resolve_seed(args.seed),
        two_sided: args.two_sided,
    };
    if cfg.steps == 0 {
        return fail("seq needs at least one step");
    }
    let report = run_sequence(&cfg);
    println!("step  cold  warm  status");
    for i in 0..report.cold_iterations.len() {
        println!(
            "{:4}  {:4}  {:4}  {}",
            i,
            report.cold_iterations[i],
            report.warm_iterations[i],
            fileio::status_word(report.statuses[i])
        );
    }
    let cold: usize = report.cold_iterations.iter().sum();
    let warm: usize = report.warm_iterations.iter().sum();
    println!("total cold iterations {cold}, warm iterations {warm}");
    if report.statuses.iter().all(|&s| s == Status::Optimal) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}

fn cmd_check(args: &CheckArgs) -> ExitCode {
    let qp = match read_problem(&args.problem) {
        Ok(qp) => qp,
        Err(e) => return fail(e),
    };
    let sol = match read_solution(&args.solution) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if sol.status != Status::Optimal {
        return fail(format!(
            "solution file reports status '{}'; only optimal solutions carry a checkable point",
            fileio::status_word(sol.status)
        ));
    }
    if sol.x.len() != qp.n || sol.lambda.len() != qp.m || sol.nu.len() != qp.me {
        return fail("solution dimensions do not match the problem");
    }
    let report = kkt_residual(&qp, &sol.x, &sol.lambda, &sol.nu);
    // Stationarity and complementarity grow with the data and multiplier
    // magnitudes entering them, so the tolerance is applied to their scaled
    // values; feasibility violations are judged as printed.
    let (stat, comp, worst) = scaled_residuals(&qp, &sol.x, &sol.lambda, &sol.nu, &report);
    println!("stationarity     {:.3e} (scaled {:.3e})", report.stationarity, stat);
    println!("primal (ineq)    {:.3e}", report.primal_ineq);
    println!("primal (eq)      {:.3e}", report.equality);
    println!("dual sign        {:.3e}", report.dual);
    println!("complementarity  {:.3e} (scaled {:.3e})", report.complementarity, comp);
    if worst <= args.tol {
        println!("ok: worst residual {:.3e} within {:.1e}", worst, args.tol);
        ExitCode::SUCCESS
    } else {
        println!("FAIL: worst residual {:.3e} above {:.1e}", worst, args.tol);
        ExitCode::from(3)
    }
}

fn main() -> ExitCode {
    // Die quietly when stdout closes early (e.g. piped into `head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 3u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Seq(args) => cmd_seq(args),
        Command::Check(args) => cmd_check(args),
    }
}
