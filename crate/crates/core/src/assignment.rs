//! Maximum-similarity linear assignment.
//!
//! [`solve_assignment`] runs a dense O(n^3) Kuhn-Munkres solver on negated
//! scores, then walks the rows in order and fixes each row to the smallest
//! column that still admits an optimal completion. The result is the
//! lexicographically smallest optimal permutation, which keeps tracking runs
//! reproducible when scores tie (e.g. an all-zero memory readout).
//!
//! [`brute_force_assignment`] enumerates every permutation and applies the
//! same tie rule. It exists to check the solver.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::scalar::Scalar;

/// Largest size accepted by [`brute_force_assignment`].
pub const BRUTE_FORCE_MAX_N: usize = 9;

/// Square matrix of similarity scores, row-major.
///
/// Rows are current detections, columns are track slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Scalar> ScoreMatrix<T> {
    pub fn new(n: usize, values: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("score matrix"));
        }
        if values.len() != n * n {
            return Err(shape(format!(
                "score matrix of size {n} needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "score matrix entry ({}, {})",
                pos / n,
                pos % n
            )));
        }
        Ok(Self { n, values })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(shape(format!(
                    "row {i} has {} columns, expected {n} (matrix must be square)",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(n, values)
    }

    pub fn filled(n: usize, value: T) -> Result<Self> {
        Self::new(n, vec![value; n * n])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.n..(row + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.n)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    /// Sum of the entries selected by `permutation`, accumulated in row order.
    pub fn total(&self, permutation: &[usize]) -> T {
        permutation
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, &j)| acc + self.get(i, j))
    }

    /// Applies `f` entrywise. Non-finite outputs are rejected.
    pub fn try_map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.n, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Returns the matrix whose row `i` is row `order[i]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.n)?;
        let mut values = Vec::with_capacity(self.values.len());
        for &r in order {
            values.extend_from_slice(self.row(r));
        }
        Ok(Self { n: self.n, values })
    }
}

/// Solver output: `permutation[row]` is the column assigned to `row`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult<T> {
    pub permutation: Vec<usize>,
    pub total_score: T,
}

impl<T> AssignmentResult<T> {
    /// Column-to-row view of the permutation.
    pub fn inverse(&self) -> Vec<usize> {
        invert_permutation(&self.permutation)
    }
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(shape(format!(
            "permutation has {} entries, expected {n}",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(invalid(format!("{perm:?} is not a permutation of 0..{n}")));
        }
    }
    Ok(())
}

/// Totals closer than this to the optimum count as co-optimal.
///
/// Different summation orders of the same entries can disagree by a few
/// ulps; anything inside this band is treated as a tie and resolved
/// lexicographically.
pub fn tie_tolerance<T: Scalar>(s: &ScoreMatrix<T>) -> T {
    T::lit(16.0) * T::epsilon() * T::from_count(s.n()) * (T::one() + s.max_abs())
}

/// Maximum-total assignment with lexicographically smallest tie-break.
pub fn solve_assignment<T: Scalar>(s: &ScoreMatrix<T>) -> AssignmentResult<T> {
    let n = s.n();
    let tol = tie_tolerance(s);
    let best = s.total(&max_assignment(n, |i, j| s.get(i, j)));

    let mut permutation = Vec::with_capacity(n);
    let mut used = vec![false; n];
    let mut prefix = T::zero();
    for row in 0..n {
        let mut fallback: Option<(usize, T)> = None;
        let mut chosen = None;
        for col in 0..n {
            if used[col] {
                continue;
            }
            used[col] = true;
            let rest = completion_value(s, row + 1, &used);
            used[col] = false;
            let candidate = prefix + s.get(row, col) + rest;
            if candidate >= best - tol {
                chosen = Some(col);
                break;
            }
            if fallback.is_none_or(|(_, v)| candidate > v) {
                fallback = Some((col, candidate));
            }
        }
        // Only reachable if rounding pushes every candidate below the band.
        let col = chosen.unwrap_or_else(|| fallback.expect("free column").0);
        used[col] = true;
        prefix += s.get(row, col);
        permutation.push(col);
    }

    let total_score = s.total(&permutation);
    AssignmentResult {
        permutation,
        total_score,
    }
}

/// Best total over rows `first_row..n` restricted to the unused columns.
fn completion_value<T: Scalar>(s: &ScoreMatrix<T>, first_row: usize, used: &[bool]) -> T {
    let cols: Vec<usize> = (0..s.n()).filter(|&c| !used[c]).collect();
    let m = cols.len();
    debug_assert_eq!(m, s.n() - first_row);
    if m == 0 {
        return T::zero();
    }
    let sub = max_assignment(m, |i, j| s.get(first_row + i, cols[j]));
    sub.iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &j)| acc + s.get(first_row + i, cols[j]))
}

/// Kuhn-Munkres with row/column potentials, minimizing the negated score.
/// Returns `perm[row] = col`.
fn max_assignment<T: Scalar>(n: usize, score: impl Fn(usize, usize) -> T) -> Vec<usize> {
    let cost = |i: usize, j: usize| -score(i, j);
    let inf = T::infinity();
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Exhaustive search over all `n!` permutations, for `n <= 9`.
pub fn brute_force_assignment<T: Scalar>(s: &ScoreMatrix<T>) -> Result<AssignmentResult<T>> {
    let n = s.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge(format!(
            "brute force refuses n = {n} (limit {BRUTE_FORCE_MAX_N})"
        )));
    }
    let tol = tie_tolerance(s);

    let mut totals = Vec::new();
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        totals.push((perm.clone(), s.total(&perm)));
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let best = totals
        .iter()
        .map(|(_, t)| *t)
        .fold(T::neg_infinity(), T::max);
    // Enumeration order is lexicographic, so the first co-optimal one wins.
    let (permutation, total_score) = totals
        .into_iter()
        .find(|(_, t)| *t >= best - tol)
        .expect("at least one permutation");
    Ok(AssignmentResult {
        permutation,
        total_score,
    })
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_prefers_diagonal() {
        let s = ScoreMatrix::from_rows(&[[0.9, 0.2], [0.3, 0.8]]).unwrap();
        let r = solve_assignment(&s);
        assert_eq!(r.permutation, vec![0, 1]);
        assert_eq!(r.total_score, 0.9 + 0.8);
        // enumeration: [0,1] -> 1.7, [1,0] -> 0.5
        assert_eq!(brute_force_assignment(&s).unwrap(), r);
    }

    #[test]
    fn all_equal_ties_resolve_to_identity() {
        let s = ScoreMatrix::filled(3, 0.5f64).unwrap();
        let r = solve_assignment(&s);
        assert_eq!(r.permutation, vec![0, 1, 2]);
        assert_eq!(r.total_score, 1.5);
    }

    #[test]
    fn single_entry() {
        let s = ScoreMatrix::from_rows(&[[-0.4f64]]).unwrap();
        let r = solve_assignment(&s);
        assert_eq!(r.permutation, vec![0]);
        assert_eq!(r.total_score, -0.4);
    }

    #[test]
    fn identity_matrix_brute_force() {
        for n in 1..=5 {
            let mut v = vec![0.0f64; n * n];
            for i in 0..n {
                v[i * n + i] = 1.0;
            }
            let s = ScoreMatrix::new(n, v).unwrap();
            let r = brute_force_assignment(&s).unwrap();
            assert_eq!(r.permutation, (0..n).collect::<Vec<_>>());
            assert_eq!(r.total_score, n as f64);
        }
    }

    #[test]
    fn partial_tie_takes_smallest_column_first() {
        // [0,1] and [1,0] both total 2; [1,0] is not lexicographically first.
        let s = ScoreMatrix::from_rows(&[[1.0f64, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(solve_assignment(&s).permutation, vec![0, 1]);
        // Ties on a non-identity optimum.
        let s = ScoreMatrix::from_rows(&[
            [0.0f64, 1.0, 1.0],
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
        ])
        .unwrap();
        let r = solve_assignment(&s);
        assert_eq!(r.permutation, vec![1, 0, 2]);
        assert_eq!(brute_force_assignment(&s).unwrap().permutation, r.permutation);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            ScoreMatrix::from_rows(&[vec![1.0f64, 2.0]]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            ScoreMatrix::from_rows(&[[f64::NAN]]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            ScoreMatrix::<f64>::new(0, vec![]),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn brute_force_refuses_large_problems() {
        let s = ScoreMatrix::filled(10, 0.0f64).unwrap();
        assert!(matches!(brute_force_assignment(&s), Err(Error::TooLarge(_))));
    }

    #[test]
    fn works_in_single_precision() {
        let s = ScoreMatrix::from_rows(&[[0.2f32, 0.8], [0.8, 0.2]]).unwrap();
        assert_eq!(solve_assignment(&s).permutation, vec![1, 0]);
    }

    #[test]
    fn next_permutation_enumerates_in_order() {
        let mut p = vec![0, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 1, 2],
                vec![0, 2, 1],
                vec![1, 0, 2],
                vec![1, 2, 0],
                vec![2, 0, 1],
                vec![2, 1, 0]
            ]
        );
    }
}
