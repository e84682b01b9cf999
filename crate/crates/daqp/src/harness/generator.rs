//! Seeded random problem generation.
//!
//! Problems are built from a ChaCha stream seeded with a single `u64`, so a
//! `(config, seed)` pair always yields the same problem down to the last
//! bit. The Hessian is synthesized with a prescribed condition number by
//! rotating a log-spaced eigenvalue ladder with a random orthogonal matrix.

use crate::problem::{Bounds, QProblem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Shape and character of a generated problem.
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    /// Number of decision variables (at least 1).
    pub n: usize,
    /// Number of inequality rows.
    pub m: usize,
    /// Number of equality rows (at most `n`).
    pub me: usize,
    /// Condition number of the Hessian; eigenvalues are log-spaced from 1
    /// up to this value.
    pub kappa: f64,
    /// Seed for the random stream.
    pub seed: u64,
    /// Generate two-sided inequality rows instead of upper bounds only.
    pub two_sided: bool,
    /// When false, the last two inequality rows contradict each other and
    /// the problem has no feasible point (requires `m >= 2`).
    pub feasible: bool,
}

impl GeneratorConfig {
    /// Feasible one-sided problem with identity-conditioned Hessian.
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        GeneratorConfig {
            n,
            m,
            me: 0,
            kappa: 1.0,
            seed,
            two_sided: false,
            feasible: true,
        }
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Generates a problem from `cfg`. Same config, same problem.
pub fn generate(cfg: &GeneratorConfig) -> QProblem {
    assert!(cfg.n >= 1, "need at least one variable");
    assert!(cfg.me <= cfg.n, "more equality rows than variables");
    assert!(cfg.kappa >= 1.0, "condition number must be at least 1");
    assert!(
        cfg.feasible || cfg.m >= 2,
        "an infeasible problem needs two rows for the contradictory pair"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;
    let m = cfg.m;

    // H = Q diag(lambda) Q' with lambda log-spaced on [1, kappa] and Q the
    // orthogonal factor of a random Gaussian matrix.
    let q = gaussian_matrix(&mut rng, n, n).qr().q();
    let lambda = DVector::from_fn(n, |i, _| {
        if n == 1 {
            1.0
        } else {
            cfg.kappa.powf(i as f64 / (n - 1) as f64)
        }
    });
    let mut h = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    // Rotation roundoff leaves h very slightly asymmetric; fold it out.
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = avg;
            h[(j, i)] = avg;
        }
    }

    let f = gaussian_vector(&mut rng, n) * cfg.kappa.sqrt();
    let mut a = gaussian_matrix(&mut rng, m, n);
    let g = gaussian_matrix(&mut rng, cfg.me, n);

    // Interior point the inequality rows are anchored to; equality rows
    // pass through it exactly, so equalities never cause infeasibility.
    let x0 = gaussian_vector(&mut rng, n);
    let h_eq = &g * &x0;
    let ax0 = &a * &x0;

    let margin =
        |rng: &mut ChaCha8Rng| -> f64 { rng.sample::<f64, _>(StandardNormal).abs() + 0.01 };
    let mut upper = DVector::zeros(m);
    let mut lower = DVector::zeros(m);
    for i in 0..m {
        upper[i] = ax0[i] + margin(&mut rng);
        lower[i] = ax0[i] - margin(&mut rng);
    }

    if !cfg.feasible {
        // Rows m-2 and m-1 demand a'x <= beta and a'x >= beta + 1.
        let pair = a.row(m - 2).transpose().clone_owned();
        let beta = pair.dot(&x0);
        for j in 0..n {
            a[(m - 1, j)] = -pair[j];
        }
        upper[m - 2] = beta;
        lower[m - 2] = beta - 1e6;
        upper[m - 1] = -beta - 1.0;
        lower[m - 1] = -beta - 1.0 - 1e6;
    }

    let bounds = if cfg.two_sided {
        Bounds::TwoSided { lower, upper }
    } else {
        Bounds::Upper(upper)
    };
    QProblem::new(h, f, a, bounds, g, h_eq).expect("generated problem is structurally valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::prox_solve;
    use crate::solver::{solve, Settings, Status};

    #[test]
    fn same_seed_reproduces_every_bit() {
        let cfg = GeneratorConfig {
            me: 1,
            kappa: 1e4,
            two_sided: true,
            ..GeneratorConfig::new(4, 7, 99)
        };
        let p1 = generate(&cfg);
        let p2 = generate(&cfg);
        assert_eq!(p1.h, p2.h);
        assert_eq!(p1.f, p2.f);
        assert_eq!(p1.a, p2.a);
        assert_eq!(p1.g, p2.g);
        assert_eq!(p1.h_eq, p2.h_eq);
        match (&p1.bounds, &p2.bounds) {
            (
                Bounds::TwoSided { lower: l1, upper: u1 },
                Bounds::TwoSided { lower: l2, upper: u2 },
            ) => {
                assert_eq!(l1, l2);
                assert_eq!(u1, u2);
            }
            _ => panic!("expected two-sided bounds"),
        }
        let other = generate(&GeneratorConfig { seed: 100, ..cfg });
        assert_ne!(p1.f, other.f);
    }

    #[test]
    fn hessian_spectrum_is_log_spaced() {
        let cfg = GeneratorConfig { kappa: 1e6, ..GeneratorConfig::new(5, 1, 3) };
        let p = generate(&cfg);
        let mut eigs: Vec<f64> = p.h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, ev) in eigs.iter().enumerate() {
            let want = 1e6f64.powf(i as f64 / 4.0);
            assert!(
                (ev - want).abs() <= 1e-8 * want,
                "eigenvalue {} is {}, wanted {}",
                i,
                ev,
                want
            );
        }
    }

    #[test]
    fn feasible_problems_solve_and_anchor_point_is_interior() {
        for seed in 0..10u64 {
            let cfg = GeneratorConfig { me: 1, ..GeneratorConfig::new(3, 6, seed) };
            let qp = generate(&cfg);
            let ldp = crate::problem::transform(&qp, 0.0).unwrap();
            let res = solve(&ldp, &Settings::default());
            assert_eq!(res.status, Status::Optimal, "seed {seed}");
        }
    }

    #[test]
    fn infeasible_pair_is_certified() {
        for &two_sided in &[false, true] {
            let cfg = GeneratorConfig {
                feasible: false,
                two_sided,
                ..GeneratorConfig::new(3, 5, 7)
            };
            let qp = generate(&cfg);
            let res = prox_solve(&qp, &Settings::default(), None).unwrap();
            assert_eq!(res.status, Status::PrimalInfeasible);
            assert!(res.certificate.is_some());
        }
    }
}
