//! Recursive LDL' factorization of a symmetric positive semidefinite matrix
//! that grows and shrinks one row/column at a time.
//!
//! The factored matrix is the Gram matrix of a set of rows; callers supply
//! inner products, never the rows themselves. Appending a row costs one
//! forward solve, deleting a row costs a positive rank-one update of the
//! trailing block, and singularity is always exposed through a zero diagonal
//! entry of D, from which a null vector of the factored matrix can be read
//! off directly.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FactorError {
    /// The input matrix is not symmetric.
    #[error("matrix is not symmetric")]
    NotSymmetric,
    /// A pivot fell below the negative tolerance while factoring a full
    /// matrix; the input is not positive semidefinite.
    #[error("matrix is not positive semidefinite")]
    IndefiniteMatrix,
    /// A singular factor cannot be extended with another row.
    #[error("cannot append a row to a singular factor")]
    SingularBase,
    /// An update produced a pivot below the negative tolerance.
    #[error("update produced a negative pivot")]
    NegativePivot,
    /// Row index out of range.
    #[error("row index out of range")]
    IndexOutOfRange,
    /// The operation requires a nonsingular factor.
    #[error("factor is singular")]
    SingularFactor,
    /// The operation requires a singular factor.
    #[error("factor is nonsingular")]
    NotSingular,
}

/// Default relative tolerance under which a pivot is treated as zero.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-11;

/// LDL' factor of a symmetric positive semidefinite Gram matrix.
///
/// `L` is unit lower triangular and stored as its strictly lower part packed
/// by rows, so appending a trailing row is a contiguous append and deleting
/// an interior row is a single compaction pass followed by a rank-one update
/// of the trailing block. At most one diagonal entry of `D` may be zero, and
/// by construction it is always the last one: a fresh factorization stops at
/// the first zero pivot, appends refuse a singular base, and a positive
/// rank-one update cannot zero a healthy interior pivot.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    order: usize,
    /// Strictly lower triangle of L, packed by rows: row i starts at
    /// i*(i-1)/2 and holds i entries.
    l: Vec<f64>,
    d: Vec<f64>,
    zero_pivot: Option<usize>,
    zeta: f64,
    /// Forward-substitution cache: the first `fresh_prefix` components of
    /// `cache_y` are the forward solve of `cache_rhs` against rows of L that
    /// have not changed since. Reuse never changes results because a cached
    /// component is only taken when its rhs entry is bit-identical.
    fresh_prefix: usize,
    cache_rhs: Vec<f64>,
    cache_y: Vec<f64>,
}

#[inline]
fn row_off(i: usize) -> usize {
    (i * i - i) / 2
}

impl LdlFactor {
    /// Empty factor of order zero.
    pub fn empty(zeta: f64) -> Self {
        assert!(zeta > 0.0, "pivot tolerance must be positive");
        LdlFactor {
            order: 0,
            l: Vec::new(),
            d: Vec::new(),
            zero_pivot: None,
            zeta,
            fresh_prefix: 0,
            cache_rhs: Vec::new(),
            cache_y: Vec::new(),
        }
    }

    /// Factors a dense symmetric matrix `s` (row-major, `n` by `n`) from
    /// scratch by appending its rows one at a time.
    ///
    /// Stops at the first zero pivot, so a rank-deficient input yields a
    /// factor whose order is the index of the first dependent row plus one;
    /// callers that need every row represented must check `order()`.
    pub fn fresh(n: usize, s: &[f64], zeta: f64) -> Result<Self, FactorError> {
        assert_eq!(s.len(), n * n, "matrix storage does not match order");
        let mut scale = 1.0f64;
        for v in s {
            scale = scale.max(v.abs());
        }
        for i in 0..n {
            for j in 0..i {
                if (s[i * n + j] - s[j * n + i]).abs() > 1e-12 * scale {
                    return Err(FactorError::NotSymmetric);
                }
            }
        }
        let mut f = LdlFactor::empty(zeta);
        for i in 0..n {
            match f.add_row(&s[i * n..i * n + i], s[i * n + i]) {
                Ok(()) => {}
                Err(FactorError::SingularBase) => break,
                Err(FactorError::NegativePivot) => return Err(FactorError::IndefiniteMatrix),
                Err(e) => return Err(e),
            }
        }
        Ok(f)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Index of the zero diagonal entry of D, if the factor is singular.
    pub fn zero_pivot(&self) -> Option<usize> {
        self.zero_pivot
    }

    pub fn is_singular(&self) -> bool {
        self.zero_pivot.is_some()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Entry of L below the diagonal; `i > j` required.
    pub fn l_entry(&self, i: usize, j: usize) -> f64 {
        debug_assert!(j < i && i < self.order);
        self.l[row_off(i) + j]
    }

    /// Number of leading forward-substitution components the next solve can
    /// take from cache, provided the right-hand side still matches.
    pub fn fresh_prefix(&self) -> usize {
        self.fresh_prefix
    }

    /// Appends one row to the factored Gram matrix. `cross` holds the inner
    /// products of the new row with each existing row in factor order, and
    /// `self_ip` the new row's inner product with itself.
    ///
    /// The new pivot is `self_ip - l'Dl`; a value within `zeta * max(1,
    /// |self_ip|)` of zero marks the factor singular, anything below the
    /// negative of that tolerance is rejected.
    pub fn add_row(&mut self, cross: &[f64], self_ip: f64) -> Result<(), FactorError> {
        assert_eq!(cross.len(), self.order, "cross products must cover every row");
        if self.zero_pivot.is_some() {
            return Err(FactorError::SingularBase);
        }
        let k = self.order;
        // Forward solve L c = cross, then l = D^-1 c and delta = self_ip - c'l.
        let mut c = cross.to_vec();
        for i in 0..k {
            let off = row_off(i);
            let mut acc = c[i];
            for j in 0..i {
                acc -= self.l[off + j] * c[j];
            }
            c[i] = acc;
        }
        let mut delta = self_ip;
        let off = row_off(k);
        self.l.reserve(k);
        for i in 0..k {
            let li = c[i] / self.d[i];
            delta -= c[i] * li;
            self.l.push(li);
        }
        debug_assert_eq!(self.l.len(), off + k);
        let tol = self.zeta * f64::max(1.0, self_ip.abs());
        if delta < -tol {
            self.l.truncate(off);
            return Err(FactorError::NegativePivot);
        }
        if delta <= tol {
            self.zero_pivot = Some(k);
        }
        self.d.push(delta);
        self.order += 1;
        Ok(())
    }

    /// Deletes row/column `i` of the factored Gram matrix.
    ///
    /// Deleting the last row is a truncation. For an interior row the packed
    /// storage is compacted in one pass and the trailing block is restored
    /// with a positive rank-one update (the deleted pivot times the outer
    /// product of the deleted subdiagonal column of L).
    pub fn remove_row(&mut self, i: usize) -> Result<(), FactorError> {
        if i >= self.order {
            return Err(FactorError::IndexOutOfRange);
        }
        let n = self.order;
        self.fresh_prefix = self.fresh_prefix.min(i);
        self.cache_rhs.truncate(self.fresh_prefix);
        self.cache_y.truncate(self.fresh_prefix);

        if i + 1 == n {
            self.l.truncate(row_off(i));
            self.d.truncate(i);
            self.order = i;
            if self.zero_pivot == Some(i) {
                self.zero_pivot = None;
            }
            return Ok(());
        }

        // Deleted subdiagonal column of L and its pivot drive the update of
        // the trailing block: L2' D2' L2'' = L2 D2 L2' + d_i w w'.
        let alpha = self.d[i];
        let mut w: Vec<f64> = (i + 1..n).map(|r| self.l[row_off(r) + i]).collect();

        // Compact: drop row i and column i entries in one forward pass.
        let mut dst = row_off(i);
        for r in i + 1..n {
            let off = row_off(r);
            for jj in 0..r {
                if jj != i {
                    self.l[dst] = self.l[off + jj];
                    dst += 1;
                }
            }
        }
        self.l.truncate(dst);
        self.d.remove(i);
        self.order = n - 1;
        let was_singular = self.zero_pivot.take();
        debug_assert!(was_singular.is_none() || was_singular == Some(n - 1));

        // Positive rank-one update of the trailing block (rows i.. of the
        // shrunken factor). A healthy interior pivot cannot be driven to
        // zero by a positive update, so the guard can only fire at the last
        // position, where nothing below it needs beta or the carried scalar.
        let t = self.order - i;
        let mut a = alpha;
        for j in 0..t {
            let p = w[j];
            let bump = a * p * p;
            let dj = self.d[i + j];
            let dnew = dj + bump;
            self.d[i + j] = dnew;
            if dnew <= self.zeta * f64::max(1.0, dj.abs() + bump) {
                if j + 1 < t {
                    return Err(FactorError::NegativePivot);
                }
                self.zero_pivot = Some(i + j);
                break;
            }
            let beta = p * a / dnew;
            a = dj * a / dnew;
            for r in j + 1..t {
                let idx = row_off(i + r) + i + j;
                let lrj = self.l[idx];
                w[r] -= p * lrj;
                self.l[idx] = lrj + beta * w[r];
            }
        }
        Ok(())
    }

    /// Solves `(L D L') x = rhs` for a nonsingular factor.
    ///
    /// Leading forward-substitution components are reused from the previous
    /// solve when both the rows of L and the rhs entries are unchanged; the
    /// result is bit-identical either way because a cached component is the
    /// output of the exact computation being skipped.
    pub fn solve(&mut self, rhs: &[f64]) -> Result<Vec<f64>, FactorError> {
        assert_eq!(rhs.len(), self.order, "rhs length must match factor order");
        if self.zero_pivot.is_some() {
            return Err(FactorError::SingularFactor);
        }
        let n = self.order;
        let mut y = vec![0.0; n];
        let mut reuse = self.fresh_prefix.min(self.cache_rhs.len());
        for i in 0..n {
            if i < reuse && rhs[i].to_bits() == self.cache_rhs[i].to_bits() {
                y[i] = self.cache_y[i];
                continue;
            }
            reuse = reuse.min(i);
            let off = row_off(i);
            let mut acc = rhs[i];
            for j in 0..i {
                acc -= self.l[off + j] * y[j];
            }
            y[i] = acc;
        }
        self.cache_rhs = rhs.to_vec();
        self.cache_y = y.clone();
        self.fresh_prefix = n;

        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = y[i] / self.d[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for r in i + 1..n {
                acc -= self.l[row_off(r) + i] * x[r];
            }
            x[i] = acc;
        }
        Ok(x)
    }

    /// Solves `(L D L') x = rhs` without touching the forward-substitution
    /// cache, so a secondary right-hand side (a refinement residual) does
    /// not evict the cached components of the main solve.
    pub fn solve_uncached(&self, rhs: &[f64]) -> Result<Vec<f64>, FactorError> {
        assert_eq!(rhs.len(), self.order, "rhs length must match factor order");
        if self.zero_pivot.is_some() {
            return Err(FactorError::SingularFactor);
        }
        let n = self.order;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let off = row_off(i);
            let mut acc = rhs[i];
            for j in 0..i {
                acc -= self.l[off + j] * y[j];
            }
            y[i] = acc;
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[i] = y[i] / self.d[i];
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for r in i + 1..n {
                acc -= self.l[row_off(r) + i] * x[r];
            }
            x[i] = acc;
        }
        Ok(x)
    }

    /// Null vector of a singular factored matrix.
    ///
    /// With the zero pivot at position `i`, the vector solves
    /// `L1' q = -l_i` over the leading block and is extended with a one at
    /// position `i` and zeros after, so `(L D L') p = 0` exactly in the
    /// factored representation.
    pub fn null_vector(&self) -> Result<Vec<f64>, FactorError> {
        let i = self.zero_pivot.ok_or(FactorError::NotSingular)?;
        let mut p = vec![0.0; self.order];
        p[i] = 1.0;
        let row = &self.l[row_off(i)..row_off(i) + i];
        for r in (0..i).rev() {
            let mut acc = -row[r];
            for q in r + 1..i {
                acc -= self.l[row_off(q) + r] * p[q];
            }
            p[r] = acc;
        }
        Ok(p)
    }

    /// Dense reconstruction `L D L'` (row-major), for diagnostics and tests.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.order;
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..=j.min(i) {
                    let lik = if k == i { 1.0 } else { self.l[row_off(i) + k] };
                    let ljk = if k == j { 1.0 } else { self.l[row_off(j) + k] };
                    acc += lik * self.d[k] * ljk;
                }
                s[i * n + j] = acc;
                s[j * n + i] = acc;
            }
        }
        s
    }

    /// Dense unit lower triangular L (row-major), for diagnostics and tests.
    pub fn dense_l(&self) -> Vec<f64> {
        let n = self.order;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
            for j in 0..i {
                m[i * n + j] = self.l[row_off(i) + j];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram(rows: &[&[f64]]) -> (usize, Vec<f64>) {
        let k = rows.len();
        let mut s = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                s[i * k + j] = rows[i].iter().zip(rows[j]).map(|(a, b)| a * b).sum();
            }
        }
        (k, s)
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn fresh_identity_is_trivial() {
        let s = [1.0, 0.0, 0.0, 1.0];
        let f = LdlFactor::fresh(2, &s, DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(f.order(), 2);
        assert_eq!(f.d(), &[1.0, 1.0]);
        assert_eq!(f.l_entry(1, 0), 0.0);
        assert_eq!(f.zero_pivot(), None);
    }

    #[test]
    fn fresh_rank_deficient_flags_zero_pivot() {
        let s = [1.0, 2.0, 2.0, 4.0];
        let f = LdlFactor::fresh(2, &s, DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(f.order(), 2);
        assert_eq!(f.d()[0], 1.0);
        assert!(f.d()[1].abs() <= 1e-12);
        assert_eq!(f.zero_pivot(), Some(1));
        assert!(max_abs_diff(&f.reconstruct(), &s) <= 1e-12);
    }

    #[test]
    fn fresh_rejects_asymmetric_and_indefinite() {
        let s = [1.0, 2.0, 0.5, 4.0];
        assert_eq!(
            LdlFactor::fresh(2, &s, DEFAULT_PIVOT_TOL).unwrap_err(),
            FactorError::NotSymmetric
        );
        let s = [1.0, 2.0, 2.0, 1.0]; // eigenvalues 3 and -1
        assert_eq!(
            LdlFactor::fresh(2, &s, DEFAULT_PIVOT_TOL).unwrap_err(),
            FactorError::IndefiniteMatrix
        );
    }

    #[test]
    fn add_row_to_empty_factor() {
        let mut f = LdlFactor::empty(DEFAULT_PIVOT_TOL);
        f.add_row(&[], 4.0).unwrap();
        assert_eq!(f.order(), 1);
        assert_eq!(f.d(), &[4.0]);
    }

    #[test]
    fn add_row_detects_dependence() {
        // Gram [[2,1],[1,1]] extended with a row whose cross products (1,1)
        // and norm 1 make it a combination of the first two.
        let mut f = LdlFactor::fresh(2, &[2.0, 1.0, 1.0, 1.0], DEFAULT_PIVOT_TOL).unwrap();
        f.add_row(&[1.0, 1.0], 1.0).unwrap();
        assert_eq!(f.zero_pivot(), Some(2));
        assert_eq!(f.d()[2].abs(), 0.0);
        assert_eq!(
            f.add_row(&[1.0, 1.0, 1.0], 1.0).unwrap_err(),
            FactorError::SingularBase
        );
    }

    #[test]
    fn add_row_rejects_negative_pivot() {
        let mut f = LdlFactor::empty(DEFAULT_PIVOT_TOL);
        f.add_row(&[], 1.0).unwrap();
        // cross product larger than the norms allow: delta = 1 - 4 < 0.
        assert_eq!(f.add_row(&[2.0], 1.0).unwrap_err(), FactorError::NegativePivot);
        // failed append must leave the factor intact
        assert_eq!(f.order(), 1);
        f.add_row(&[0.5], 1.0).unwrap();
        assert_eq!(f.order(), 2);
    }

    #[test]
    fn remove_last_row_truncates() {
        let rows: [&[f64]; 3] = [&[1.0, 0.0, 2.0], &[0.0, 3.0, 1.0], &[1.0, 1.0, 1.0]];
        let (n, s) = gram(&rows);
        let mut f = LdlFactor::fresh(n, &s, DEFAULT_PIVOT_TOL).unwrap();
        f.remove_row(2).unwrap();
        let (n2, s2) = gram(&rows[..2].to_vec().iter().map(|r| *r).collect::<Vec<_>>());
        let g = LdlFactor::fresh(n2, &s2, DEFAULT_PIVOT_TOL).unwrap();
        assert!(max_abs_diff(&f.reconstruct(), &g.reconstruct()) <= 1e-12);
    }

    #[test]
    fn remove_interior_row_matches_fresh() {
        let rows: [&[f64]; 3] = [&[1.0, 0.5, 2.0], &[0.2, 3.0, 1.0], &[1.0, 1.0, 1.5]];
        let (n, s) = gram(&rows);
        let mut f = LdlFactor::fresh(n, &s, DEFAULT_PIVOT_TOL).unwrap();
        f.remove_row(1).unwrap();
        let kept: [&[f64]; 2] = [rows[0], rows[2]];
        let (n2, s2) = gram(&kept);
        let g = LdlFactor::fresh(n2, &s2, DEFAULT_PIVOT_TOL).unwrap();
        assert!(max_abs_diff(&f.reconstruct(), &g.reconstruct()) <= 1e-10);
        assert!(max_abs_diff(&f.dense_l(), &g.dense_l()) <= 1e-10);
        assert_eq!(f.remove_row(5).unwrap_err(), FactorError::IndexOutOfRange);
    }

    #[test]
    fn remove_interior_row_can_heal_singularity() {
        // Third row equals the sum of the first two; dropping the first row
        // leaves an independent pair, so the zero pivot must disappear.
        let r1 = [1.0, 0.0];
        let r2 = [0.0, 1.0];
        let r3 = [1.0, 1.0];
        let rows: [&[f64]; 3] = [&r1, &r2, &r3];
        let (n, s) = gram(&rows);
        let mut f = LdlFactor::fresh(n, &s, DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(f.zero_pivot(), Some(2));
        f.remove_row(0).unwrap();
        assert_eq!(f.zero_pivot(), None);
        let kept: [&[f64]; 2] = [&r2, &r3];
        let (n2, s2) = gram(&kept);
        let g = LdlFactor::fresh(n2, &s2, DEFAULT_PIVOT_TOL).unwrap();
        assert!(max_abs_diff(&f.reconstruct(), &g.reconstruct()) <= 1e-10);
    }

    #[test]
    fn solve_matches_direct_elimination() {
        let mut f = LdlFactor::empty(DEFAULT_PIVOT_TOL);
        f.add_row(&[], 2.0).unwrap();
        let x = f.solve(&[3.0]).unwrap();
        assert_eq!(x, vec![1.5]);

        let rows: [&[f64]; 3] = [&[2.0, 0.1, 0.0], &[0.1, 1.0, 0.3], &[0.4, 0.3, 1.5]];
        let (n, s) = gram(&rows);
        let mut f = LdlFactor::fresh(n, &s, DEFAULT_PIVOT_TOL).unwrap();
        let rhs = [1.0, -2.0, 0.5];
        let x = f.solve(&rhs).unwrap();
        // residual against the Gram matrix itself
        for i in 0..n {
            let ax: f64 = (0..n).map(|j| s[i * n + j] * x[j]).sum();
            assert!((ax - rhs[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn solve_reuse_is_bit_identical() {
        let rows: [&[f64]; 4] = [
            &[2.0, 0.1, 0.0, 0.5],
            &[0.1, 1.0, 0.3, -0.2],
            &[0.4, 0.3, 1.5, 0.9],
            &[1.0, -1.0, 0.2, 2.0],
        ];
        let (n, s) = gram(&rows);
        let mut warm = LdlFactor::fresh(n, &s, DEFAULT_PIVOT_TOL).unwrap();
        let rhs1 = [1.0, -2.0, 0.5, 3.0];
        warm.solve(&rhs1).unwrap();
        assert_eq!(warm.fresh_prefix(), 4);
        // second solve shares a two-component prefix with the first
        let rhs2 = [1.0, -2.0, 0.7, 3.0];
        let cold = LdlFactor::fresh(n, &s, DEFAULT_PIVOT_TOL)
            .unwrap()
            .solve(&rhs2)
            .unwrap();
        let reused = warm.solve(&rhs2).unwrap();
        for (a, b) in reused.iter().zip(&cold) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn solve_after_append_keeps_prefix_and_stays_exact() {
        let rows: [&[f64]; 3] = [
            &[2.0, 0.1, 0.0, 0.7],
            &[0.1, 1.0, 0.3, -0.4],
            &[0.4, 0.3, 1.5, 0.2],
        ];
        let (n, s) = gram(&rows);
        let mut f = LdlFactor::fresh(n, &s, DEFAULT_PIVOT_TOL).unwrap();
        f.solve(&[1.0, 2.0, 3.0]).unwrap();
        let extra = [1.0, 1.0, -0.5, 0.6];
        let cross: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&extra).map(|(a, b)| a * b).sum())
            .collect();
        let self_ip = extra.iter().map(|v| v * v).sum();
        f.add_row(&cross, self_ip).unwrap();
        assert_eq!(f.fresh_prefix(), 3);
        let rhs = [1.0, 2.0, 3.0, -1.0];
        let reused = f.solve(&rhs).unwrap();
        let mut target = s.clone();
        // embed into the 4x4 Gram and compare against a cold solve
        let mut s4 = vec![0.0; 16];
        for i in 0..3 {
            for j in 0..3 {
                s4[i * 4 + j] = target.remove(0);
            }
            s4[i * 4 + 3] = cross[i];
            s4[3 * 4 + i] = cross[i];
        }
        s4[15] = self_ip;
        let cold = LdlFactor::fresh(4, &s4, DEFAULT_PIVOT_TOL)
            .unwrap()
            .solve(&rhs)
            .unwrap();
        for (a, b) in reused.iter().zip(&cold) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn solve_rejects_singular_factor() {
        let s = [1.0, 2.0, 2.0, 4.0];
        let mut f = LdlFactor::fresh(2, &s, DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(f.solve(&[1.0, 1.0]).unwrap_err(), FactorError::SingularFactor);
    }

    #[test]
    fn null_vector_of_duplicated_row() {
        // rows [1,0] and [2,0]: Gram [[1,2],[2,4]]
        let mut f = LdlFactor::empty(DEFAULT_PIVOT_TOL);
        f.add_row(&[], 1.0).unwrap();
        f.add_row(&[2.0], 4.0).unwrap();
        assert_eq!(f.zero_pivot(), Some(1));
        let p = f.null_vector().unwrap();
        assert_eq!(p[1], 1.0);
        assert_eq!(p, vec![-2.0, 1.0]);
    }

    #[test]
    fn null_vector_of_summed_rows() {
        let r1 = [1.0, 0.0, 0.5];
        let r2 = [0.0, 1.0, -0.25];
        let r3: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| a + b).collect();
        let rows: [&[f64]; 3] = [&r1, &r2, &r3];
        let (n, s) = gram(&rows);
        let f = LdlFactor::fresh(n, &s, DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(f.zero_pivot(), Some(2));
        let p = f.null_vector().unwrap();
        assert_eq!(p[2], 1.0);
        for i in 0..n {
            let gp: f64 = (0..n).map(|j| s[i * n + j] * p[j]).sum();
            assert!(gp.abs() <= 1e-9, "Gram * p = {gp} at {i}");
        }
        assert_eq!(
            LdlFactor::fresh(2, &[1.0, 0.0, 0.0, 1.0], DEFAULT_PIVOT_TOL)
                .unwrap()
                .null_vector()
                .unwrap_err(),
            FactorError::NotSingular
        );
    }

    #[test]
    fn reconstruction_survives_update_sequences() {
        // deterministic pseudo-random rows; exercises add and interior
        // remove against fresh factorizations of the surviving rows
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let dim = 5;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut f = LdlFactor::empty(DEFAULT_PIVOT_TOL);
        for step in 0..40 {
            if rows.len() < dim && (rows.is_empty() || step % 3 != 0) {
                let r: Vec<f64> = (0..dim).map(|_| next()).collect();
                let cross: Vec<f64> = rows
                    .iter()
                    .map(|q| q.iter().zip(&r).map(|(a, b)| a * b).sum())
                    .collect();
                let ip = r.iter().map(|v| v * v).sum();
                f.add_row(&cross, ip).unwrap();
                rows.push(r);
            } else {
                let i = step % rows.len();
                f.remove_row(i).unwrap();
                rows.remove(i);
            }
            let k = rows.len();
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let (_, s) = gram(&refs);
            let maxabs = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(
                max_abs_diff(&f.reconstruct(), &s) <= 1e-8 * (1.0 + maxabs),
                "reconstruction drifted at step {step} with {k} rows"
            );
        }
    }
}
