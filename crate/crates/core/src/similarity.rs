//! Cosine similarity between embedding sets and weighted score fusion.

use serde::{Deserialize, Serialize};

use crate::assignment::ScoreMatrix;
use crate::error::{invalid, shape, Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// `n` embeddings of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet<T> {
    n: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> EmbeddingSet<T> {
    pub fn new(n: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::Empty("embedding set"));
        }
        if data.len() != n * dim {
            return Err(shape(format!(
                "embedding set {n}x{dim} needs {} values, got {}",
                n * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding {} component {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { n, dim, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(shape(format!(
                    "embedding {i} has dimension {}, expected {dim}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn zeros(n: usize, dim: usize) -> Result<Self> {
        Self::new(n, dim, vec![T::zero(); n * dim])
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Returns the set whose row `k` is row `order[k]` of `self`.
    pub fn select_rows(&self, order: &[usize]) -> Result<Self> {
        crate::assignment::check_permutation(order, self.n)?;
        let mut data = Vec::with_capacity(self.data.len());
        for &r in order {
            data.extend_from_slice(self.row(r));
        }
        Ok(Self {
            n: self.n,
            dim: self.dim,
            data,
        })
    }

    pub fn scaled(&self, c: T) -> Result<Self> {
        Self::new(self.n, self.dim, self.data.iter().map(|&x| x * c).collect())
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.n == other.n && self.dim == other.dim
    }
}

/// Weights of the object and appearance similarity terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights<T> {
    pub lambda_obj: T,
    pub lambda_app: T,
}

impl<T: Scalar> FusionWeights<T> {
    pub fn new(lambda_obj: T, lambda_app: T) -> Result<Self> {
        let w = Self {
            lambda_obj,
            lambda_app,
        };
        w.validate()?;
        Ok(w)
    }

    /// Object similarity only.
    pub fn object_only() -> Self {
        Self {
            lambda_obj: T::one(),
            lambda_app: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: T| x.is_finite() && x >= T::zero();
        if !ok(self.lambda_obj) || !ok(self.lambda_app) {
            return Err(invalid("fusion weights must be finite and non-negative"));
        }
        if self.lambda_obj == T::zero() && self.lambda_app == T::zero() {
            return Err(invalid("fusion weights cannot both be zero"));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for FusionWeights<T> {
    /// The plain sum of both similarities.
    fn default() -> Self {
        Self {
            lambda_obj: T::one(),
            lambda_app: T::one(),
        }
    }
}

/// Cosine similarity of a single pair; zero if either vector has zero norm.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let denom = norm(a) * norm(b);
    if denom == T::zero() {
        T::zero()
    } else {
        (dot(a, b) / denom).max(-T::one()).min(T::one())
    }
}

/// Entry `(i, j)` is the cosine similarity between `a[i]` and `b[j]`.
pub fn cosine_similarity_matrix<T: Scalar>(
    a: &EmbeddingSet<T>,
    b: &EmbeddingSet<T>,
) -> Result<ScoreMatrix<T>> {
    if a.dim() != b.dim() {
        return Err(shape(format!(
            "embedding dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.n() != b.n() {
        return Err(shape(format!(
            "embedding counts differ: {} vs {}",
            a.n(),
            b.n()
        )));
    }
    let a_norms: Vec<T> = a.rows().map(norm).collect();
    let b_norms: Vec<T> = b.rows().map(norm).collect();
    let mut values = Vec::with_capacity(a.n() * b.n());
    for (ai, &na) in a.rows().zip(&a_norms) {
        for (bj, &nb) in b.rows().zip(&b_norms) {
            let denom = na * nb;
            values.push(if denom == T::zero() {
                T::zero()
            } else {
                // Rounding can leave |cos| a hair above 1.
                (dot(ai, bj) / denom).max(-T::one()).min(T::one())
            });
        }
    }
    ScoreMatrix::new(a.n(), values)
}

/// `lambda_obj * s_obj + lambda_app * s_app`, entrywise.
pub fn fuse_scores<T: Scalar>(
    s_obj: &ScoreMatrix<T>,
    s_app: &ScoreMatrix<T>,
    w: FusionWeights<T>,
) -> Result<ScoreMatrix<T>> {
    w.validate()?;
    if s_obj.n() != s_app.n() {
        return Err(shape(format!(
            "score matrices differ in size: {} vs {}",
            s_obj.n(),
            s_app.n()
        )));
    }
    let values = s_obj
        .as_slice()
        .iter()
        .zip(s_app.as_slice())
        .map(|(&o, &a)| w.lambda_obj * o + w.lambda_app * a)
        .collect();
    ScoreMatrix::new(s_obj.n(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::solve_assignment;
    use approx::assert_abs_diff_eq;

    fn single(v: &[f64]) -> EmbeddingSet<f64> {
        EmbeddingSet::from_rows(&[v]).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let s = cosine_similarity_matrix(&single(&[1.0, 0.0]), &single(&[0.0, 1.0])).unwrap();
        assert_eq!(s.get(0, 0), 0.0);
        let s = cosine_similarity_matrix(&single(&[1.0, 2.0]), &single(&[3.0, 6.0])).unwrap();
        assert_abs_diff_eq!(s.get(0, 0), 1.0, epsilon = 1e-15);
        let s = cosine_similarity_matrix(&single(&[1.0, 0.0]), &single(&[1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(s.get(0, 0), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn zero_norm_gives_zero() {
        let s = cosine_similarity_matrix(&single(&[0.0, 0.0]), &single(&[1.0, 1.0])).unwrap();
        assert_eq!(s.get(0, 0), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let err = cosine_similarity_matrix(&single(&[1.0, 0.0]), &single(&[1.0, 0.0, 0.0]));
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn fuse_examples() {
        let o = ScoreMatrix::from_rows(&[[1.0f64]]).unwrap();
        let a = ScoreMatrix::from_rows(&[[0.5f64]]).unwrap();
        let f = fuse_scores(&o, &a, FusionWeights::default()).unwrap();
        assert_eq!(f.as_slice(), &[1.5]);
        let f = fuse_scores(&o, &a, FusionWeights::object_only()).unwrap();
        assert_eq!(f, o);
    }

    #[test]
    fn appearance_flips_the_assignment() {
        let o = ScoreMatrix::from_rows(&[[0.2f64, 0.8], [0.8, 0.2]]).unwrap();
        let a = ScoreMatrix::from_rows(&[[0.9f64, 0.1], [0.1, 0.9]]).unwrap();
        let f = fuse_scores(&o, &a, FusionWeights::default()).unwrap();
        let expected = [1.1, 0.9, 0.9, 1.1];
        for (x, e) in f.as_slice().iter().zip(expected) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-15);
        }
        assert_eq!(solve_assignment(&o).permutation, vec![1, 0]);
        assert_eq!(solve_assignment(&f).permutation, vec![0, 1]);
    }

    #[test]
    fn fusion_weights_validation() {
        assert!(FusionWeights::new(0.0f64, 0.0).is_err());
        assert!(FusionWeights::new(-1.0f64, 1.0).is_err());
        assert!(FusionWeights::new(0.0f64, 1.0).is_ok());
    }

    #[test]
    fn shape_mismatch_in_fusion() {
        let o = ScoreMatrix::from_rows(&[[1.0f64]]).unwrap();
        let a = ScoreMatrix::filled(2, 0.0f64).unwrap();
        assert!(fuse_scores(&o, &a, FusionWeights::default()).is_err());
    }
}
