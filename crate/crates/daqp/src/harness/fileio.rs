//! Plain-text problem and solution files.
//!
//! Problem files:
//!
//! ```text
//! DAQP 1
//! # comments run from '#' to end of line
//! <n> <m> <me> <sided>
//! H
//! <n*n numbers, row major>
//! f
//! <n numbers>
//! A
//! <m*n numbers, row major>
//! b            # sided = 1: upper bounds only
//! <m numbers>
//! bl           # sided = 2: lower then upper bounds
//! <m numbers>
//! bu
//! <m numbers>
//! G            # present exactly when me > 0
//! <me*n numbers, row major>
//! h
//! <me numbers>
//! ```
//!
//! Whitespace and line breaks are interchangeable outside comments. Numbers
//! are written with 17 significant digits, so a write/read round trip
//! reproduces every value bit for bit.
//!
//! Solution files start with `DAQP-SOL 1`, then a status word, the three
//! dimensions, sections `x`, `lambda`, `nu`, and a `ws` section listing the
//! active rows as `index side` pairs with side `U` or `L`.

use crate::problem::{Bounds, ProblemError, QProblem};
use crate::solver::{Side, SolveResult, Status};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Reasons a problem or solution file fails to load.
#[derive(Debug, Error)]
pub enum FileError {
    /// The first line is not the expected magic.
    #[error("not a recognized file: expected magic '{0}'")]
    BadMagic(&'static str),
    /// A token could not be parsed as what the format requires there.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// A required section keyword is absent (or mistyped).
    #[error("missing section '{0}'")]
    MissingSection(&'static str),
    /// Reading or writing the file itself failed.
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// The numbers loaded fine but do not form a valid problem.
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Contents of a solution file.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFile {
    pub status: Status,
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub nu: DVector<f64>,
    pub working_set: Vec<(usize, Side)>,
}

impl SolutionFile {
    /// Captures the parts of a solve result that belong in a file.
    pub fn from_result(res: &SolveResult) -> Self {
        SolutionFile {
            status: res.status,
            x: res.x.clone(),
            lambda: res.lambda.clone(),
            nu: res.nu.clone(),
            working_set: res.working_set.clone(),
        }
    }
}

/// Stable one-word spelling of a status, as used in solution files.
pub fn status_word(status: Status) -> &'static str {
    match status {
        Status::Optimal => "optimal",
        Status::PrimalInfeasible => "infeasible",
        Status::IterationLimit => "iteration-limit",
        Status::CycleDetected => "cycle",
        Status::NumericalFailure => "numerical-failure",
    }
}

fn status_from_word(word: &str) -> Option<Status> {
    Some(match word {
        "optimal" => Status::Optimal,
        "infeasible" => Status::PrimalInfeasible,
        "iteration-limit" => Status::IterationLimit,
        "cycle" => Status::CycleDetected,
        "numerical-failure" => Status::NumericalFailure,
        _ => return None,
    })
}

/// Token stream with line numbers, comments stripped.
struct Tokens<'a> {
    items: Vec<(&'a str, usize)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let mut items = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let data = line.split('#').next().unwrap_or("");
            for tok in data.split_whitespace() {
                items.push((tok, lineno + 1));
            }
        }
        Tokens { items, pos: 0 }
    }

    fn next(&mut self) -> Option<(&'a str, usize)> {
        let item = self.items.get(self.pos).copied();
        self.pos += 1;
        item
    }

    fn last_line(&self) -> usize {
        self.items.last().map_or(1, |&(_, l)| l)
    }

    fn expect_keyword(&mut self, name: &'static str) -> Result<(), FileError> {
        match self.next() {
            Some((tok, _)) if tok == name => Ok(()),
            _ => Err(FileError::MissingSection(name)),
        }
    }

    fn usize(&mut self, what: &str) -> Result<usize, FileError> {
        let (tok, line) = self
            .next()
            .ok_or(FileError::Parse { line: self.last_line(), msg: format!("expected {what}") })?;
        tok.parse().map_err(|_| FileError::Parse {
            line,
            msg: format!("expected {what}, found '{tok}'"),
        })
    }

    fn float(&mut self, what: &str) -> Result<f64, FileError> {
        let (tok, line) = self
            .next()
            .ok_or(FileError::Parse { line: self.last_line(), msg: format!("expected {what}") })?;
        tok.parse().map_err(|_| FileError::Parse {
            line,
            msg: format!("expected a number for {what}, found '{tok}'"),
        })
    }

    fn floats(&mut self, count: usize, what: &str) -> Result<Vec<f64>, FileError> {
        (0..count).map(|_| self.float(what)).collect()
    }

    fn finish(&mut self) -> Result<(), FileError> {
        match self.next() {
            None => Ok(()),
            Some((tok, line)) => Err(FileError::Parse {
                line,
                msg: format!("unexpected trailing input starting at '{tok}'"),
            }),
        }
    }
}

fn check_magic(tokens: &mut Tokens, word: &'static str) -> Result<(), FileError> {
    let magic = tokens.next();
    let version = tokens.next();
    match (magic, version) {
        (Some((m, _)), Some(("1", _))) if m == word.split_whitespace().next().unwrap() => Ok(()),
        _ => Err(FileError::BadMagic(word)),
    }
}

/// Parses a problem from text in the format described at the module level.
pub fn parse_problem(text: &str) -> Result<QProblem, FileError> {
    let mut t = Tokens::new(text);
    check_magic(&mut t, "DAQP 1")?;
    let n = t.usize("variable count n")?;
    let m = t.usize("inequality count m")?;
    let me = t.usize("equality count me")?;
    let sided = t.usize("sided flag (1 or 2)")?;
    if sided < 1 || sided > 2 {
        return Err(FileError::Parse {
            line: t.last_line(),
            msg: format!("sided flag must be 1 or 2, found {sided}"),
        });
    }

    t.expect_keyword("H")?;
    let h = DMatrix::from_row_slice(n, n, &t.floats(n * n, "H entry")?);
    t.expect_keyword("f")?;
    let f = DVector::from_column_slice(&t.floats(n, "f entry")?);
    t.expect_keyword("A")?;
    let a = DMatrix::from_row_slice(m, n, &t.floats(m * n, "A entry")?);
    let bounds = if sided == 1 {
        t.expect_keyword("b")?;
        Bounds::Upper(DVector::from_column_slice(&t.floats(m, "b entry")?))
    } else {
        t.expect_keyword("bl")?;
        let lower = DVector::from_column_slice(&t.floats(m, "bl entry")?);
        t.expect_keyword("bu")?;
        let upper = DVector::from_column_slice(&t.floats(m, "bu entry")?);
        Bounds::TwoSided { lower, upper }
    };
    let (g, h_eq) = if me > 0 {
        t.expect_keyword("G")?;
        let g = DMatrix::from_row_slice(me, n, &t.floats(me * n, "G entry")?);
        t.expect_keyword("h")?;
        let h_eq = DVector::from_column_slice(&t.floats(me, "h entry")?);
        (g, h_eq)
    } else {
        (DMatrix::zeros(0, n), DVector::zeros(0))
    };
    t.finish()?;
    Ok(QProblem::new(h, f, a, bounds, g, h_eq)?)
}

fn push_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

fn push_matrix(out: &mut String, name: &str, mat: &DMatrix<f64>) {
    out.push_str(name);
    out.push('\n');
    for i in 0..mat.nrows() {
        let row: Vec<f64> = mat.row(i).iter().copied().collect();
        push_row(out, &row);
    }
}

fn push_vector(out: &mut String, name: &str, v: &DVector<f64>) {
    out.push_str(name);
    out.push('\n');
    push_row(out, v.as_slice());
}

/// Renders a problem in the format described at the module level.
pub fn problem_to_string(qp: &QProblem) -> String {
    let mut out = String::new();
    let sided = if qp.bounds.is_two_sided() { 2 } else { 1 };
    let _ = writeln!(out, "DAQP 1");
    let _ = writeln!(out, "{} {} {} {}", qp.n, qp.m, qp.me, sided);
    push_matrix(&mut out, "H", &qp.h);
    push_vector(&mut out, "f", &qp.f);
    push_matrix(&mut out, "A", &qp.a);
    match &qp.bounds {
        Bounds::Upper(b) => push_vector(&mut out, "b", b),
        Bounds::TwoSided { lower, upper } => {
            push_vector(&mut out, "bl", lower);
            push_vector(&mut out, "bu", upper);
        }
    }
    if qp.me > 0 {
        push_matrix(&mut out, "G", &qp.g);
        push_vector(&mut out, "h", &qp.h_eq);
    }
    out
}

/// Loads a problem file.
pub fn read_problem(path: &Path) -> Result<QProblem, FileError> {
    parse_problem(&std::fs::read_to_string(path)?)
}

/// Writes a problem file.
pub fn write_problem(path: &Path, qp: &QProblem) -> Result<(), FileError> {
    Ok(std::fs::write(path, problem_to_string(qp))?)
}

/// Parses a solution from text.
pub fn parse_solution(text: &str) -> Result<SolutionFile, FileError> {
    let mut t = Tokens::new(text);
    check_magic(&mut t, "DAQP-SOL 1")?;
    t.expect_keyword("status")?;
    let status = match t.next() {
        Some((word, line)) => status_from_word(word).ok_or(FileError::Parse {
            line,
            msg: format!("unknown status '{word}'"),
        })?,
        None => {
            return Err(FileError::Parse {
                line: t.last_line(),
                msg: "expected a status word".into(),
            })
        }
    };
    let n = t.usize("variable count n")?;
    let m = t.usize("inequality count m")?;
    let me = t.usize("equality count me")?;
    t.expect_keyword("x")?;
    let x = DVector::from_column_slice(&t.floats(n, "x entry")?);
    t.expect_keyword("lambda")?;
    let lambda = DVector::from_column_slice(&t.floats(m, "lambda entry")?);
    t.expect_keyword("nu")?;
    let nu = DVector::from_column_slice(&t.floats(me, "nu entry")?);
    t.expect_keyword("ws")?;
    let k = t.usize("working set size")?;
    let mut working_set = Vec::with_capacity(k);
    for _ in 0..k {
        let idx = t.usize("working set row index")?;
        let side = match t.next() {
            Some(("U", _)) => Side::Upper,
            Some(("L", _)) => Side::Lower,
            Some((tok, line)) => {
                return Err(FileError::Parse {
                    line,
                    msg: format!("expected side U or L, found '{tok}'"),
                })
            }
            None => {
                return Err(FileError::Parse {
                    line: t.last_line(),
                    msg: "expected side U or L".into(),
                })
            }
        };
        if idx >= m {
            return Err(FileError::Parse {
                line: t.last_line(),
                msg: format!("working set row {idx} out of range for m = {m}"),
            });
        }
        working_set.push((idx, side));
    }
    t.finish()?;
    Ok(SolutionFile { status, x, lambda, nu, working_set })
}

/// Renders a solution.
pub fn solution_to_string(sol: &SolutionFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "DAQP-SOL 1");
    let _ = writeln!(out, "status {}", status_word(sol.status));
    let _ = writeln!(out, "{} {} {}", sol.x.len(), sol.lambda.len(), sol.nu.len());
    push_vector(&mut out, "x", &sol.x);
    push_vector(&mut out, "lambda", &sol.lambda);
    push_vector(&mut out, "nu", &sol.nu);
    let _ = writeln!(out, "ws {}", sol.working_set.len());
    for &(idx, side) in &sol.working_set {
        let _ = writeln!(out, "{} {}", idx, if side == Side::Upper { "U" } else { "L" });
    }
    out
}

/// Loads a solution file.
pub fn read_solution(path: &Path) -> Result<SolutionFile, FileError> {
    parse_solution(&std::fs::read_to_string(path)?)
}

/// Writes a solution file.
pub fn write_solution(path: &Path, sol: &SolutionFile) -> Result<(), FileError> {
    Ok(std::fs::write(path, solution_to_string(sol))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::generator::{generate, GeneratorConfig};

    #[test]
    fn problem_round_trip_is_bit_exact() {
        for seed in 0..5u64 {
            for &two_sided in &[false, true] {
                let cfg = GeneratorConfig {
                    me: 1,
                    kappa: 1e3,
                    two_sided,
                    ..GeneratorConfig::new(3, 4, seed)
                };
                let qp = generate(&cfg);
                let text = problem_to_string(&qp);
                let back = parse_problem(&text).unwrap();
                assert_eq!(qp.h, back.h);
                assert_eq!(qp.f, back.f);
                assert_eq!(qp.a, back.a);
                assert_eq!(qp.g, back.g);
                assert_eq!(qp.h_eq, back.h_eq);
                match (&qp.bounds, &back.bounds) {
                    (Bounds::Upper(a), Bounds::Upper(b)) => assert_eq!(a, b),
                    (
                        Bounds::TwoSided { lower: l1, upper: u1 },
                        Bounds::TwoSided { lower: l2, upper: u2 },
                    ) => {
                        assert_eq!(l1, l2);
                        assert_eq!(u1, u2);
                    }
                    _ => panic!("bounds changed shape in the round trip"),
                }
            }
        }
    }

    #[test]
    fn comments_and_odd_whitespace_are_tolerated() {
        let text = "# leading comment\nDAQP 1\n2 1 0 1   # dims\nH\n1 0\n0   1\nf\n0 0\nA\n1 1\nb\n3\n";
        let qp = parse_problem(text).unwrap();
        assert_eq!(qp.n, 2);
        assert_eq!(qp.h[(1, 1)], 1.0);
    }

    #[test]
    fn malformed_inputs_each_get_the_right_error() {
        assert!(matches!(parse_problem(""), Err(FileError::BadMagic(_))));
        assert!(matches!(parse_problem("NOPE 1\n"), Err(FileError::BadMagic(_))));
        assert!(matches!(
            parse_problem("DAQP 2\n"),
            Err(FileError::BadMagic(_))
        ));
        let bad_sided = "DAQP 1\n1 0 0 0\nH\n1\nf\n0\nA\nb\n";
        match parse_problem(bad_sided) {
            Err(FileError::Parse { msg, .. }) => assert!(msg.contains("1 or 2")),
            other => panic!("expected a parse error, got {other:?}"),
        }
        let missing_f = "DAQP 1\n1 0 0 1\nH\n1\nA\nb\n";
        assert!(matches!(parse_problem(missing_f), Err(FileError::MissingSection("f"))));
        let bad_number = "DAQP 1\n1 0 0 1\nH\nbanana\nf\n0\nA\nb\n";
        match parse_problem(bad_number) {
            Err(FileError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected a parse error, got {other:?}"),
        }
        let short_h = "DAQP 1\n2 0 0 1\nH\n1 0 0\nf\n0 0\nA\nb\n";
        assert!(matches!(parse_problem(short_h), Err(FileError::Parse { .. })));
        let crossed = "DAQP 1\n1 1 0 2\nH\n1\nf\n0\nA\n1\nbl\n2\nbu\n1\n";
        assert!(matches!(
            parse_problem(crossed),
            Err(FileError::Problem(ProblemError::TriviallyInfeasible { .. }))
        ));
        let trailing = "DAQP 1\n1 0 0 1\nH\n1\nf\n0\nA\nb\n7\n";
        assert!(matches!(parse_problem(trailing), Err(FileError::Parse { .. })));
    }

    #[test]
    fn solution_round_trip() {
        let sol = SolutionFile {
            status: Status::Optimal,
            x: DVector::from_row_slice(&[0.25, -1.5]),
            lambda: DVector::from_row_slice(&[0.0, 1.0 / 3.0, -2e-13]),
            nu: DVector::from_row_slice(&[-0.5]),
            working_set: vec![(1, Side::Upper), (2, Side::Lower)],
        };
        let back = parse_solution(&solution_to_string(&sol)).unwrap();
        assert_eq!(sol, back);
    }

    #[test]
    fn solution_rejects_out_of_range_rows() {
        let sol = SolutionFile {
            status: Status::Optimal,
            x: DVector::zeros(1),
            lambda: DVector::zeros(1),
            nu: DVector::zeros(0),
            working_set: vec![(1, Side::Upper)],
        };
        assert!(matches!(
            parse_solution(&solution_to_string(&sol)),
            Err(FileError::Parse { .. })
        ));
    }
}
