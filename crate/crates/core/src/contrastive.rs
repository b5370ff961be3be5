//! Pairwise contrastive objective on embedding dot products.
//!
//! For a key `v` with positives `p_b` and negatives `n_a`:
//!
//! ```text
//! L = log(1 + sum_a sum_b exp(v.n_a - v.p_b))
//! ```
//!
//! Gradients are analytic. With `z_ab = v.n_a - v.p_b` every partial
//! derivative goes through the weight `exp(z_ab - L)`, which stays in
//! `[0, 1]` and is computed from the stabilized log-sum-exp, so large
//! embeddings do not overflow.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, shape, Result};
use crate::scalar::{dot, Scalar};
use crate::similarity::{cosine, EmbeddingSet};

/// Default multiplier of the contrastive term in a combined objective.
pub const DEFAULT_LOSS_WEIGHT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastivePair<T> {
    pub key: Vec<T>,
    pub positives: Vec<Vec<T>>,
    pub negatives: Vec<Vec<T>>,
}

impl<T: Scalar> ContrastivePair<T> {
    pub fn new(key: Vec<T>, positives: Vec<Vec<T>>, negatives: Vec<Vec<T>>) -> Result<Self> {
        let p = Self {
            key,
            positives,
            negatives,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.key.len();
        if dim == 0 {
            return Err(shape("key embedding is empty"));
        }
        if self.positives.is_empty() {
            return Err(invalid("a contrastive pair needs at least one positive"));
        }
        for (kind, set) in [("positive", &self.positives), ("negative", &self.negatives)] {
            if let Some(i) = set.iter().position(|e| e.len() != dim) {
                return Err(shape(format!(
                    "{kind} {i} has dimension {}, key has {dim}",
                    set[i].len()
                )));
            }
        }
        let finite = |e: &Vec<T>| e.iter().all(|x| x.is_finite());
        if !finite(&self.key) || !self.positives.iter().all(finite) || !self.negatives.iter().all(finite) {
            return Err(crate::error::Error::NonFinite("contrastive pair".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<T> {
    pub value: T,
    pub grad_key: Vec<T>,
    pub grad_positives: Vec<Vec<T>>,
    pub grad_negatives: Vec<Vec<T>>,
}

pub fn contrastive_loss<T: Scalar>(p: &ContrastivePair<T>) -> Result<LossReport<T>> {
    p.validate()?;
    let dim = p.key.len();
    let v = &p.key;
    let mut grad_key = vec![T::zero(); dim];
    let mut grad_positives = vec![vec![T::zero(); dim]; p.positives.len()];
    let mut grad_negatives = vec![vec![T::zero(); dim]; p.negatives.len()];

    if p.negatives.is_empty() {
        return Ok(LossReport {
            value: T::zero(),
            grad_key,
            grad_positives,
            grad_negatives,
        });
    }

    let pos_dots: Vec<T> = p.positives.iter().map(|k| dot(v, k)).collect();
    let neg_dots: Vec<T> = p.negatives.iter().map(|k| dot(v, k)).collect();
    let z: Vec<T> = neg_dots
        .iter()
        .flat_map(|&dn| pos_dots.iter().map(move |&dp| dn - dp))
        .collect();

    let zmax = z.iter().copied().fold(T::neg_infinity(), T::max);
    let value = if zmax <= T::zero() {
        z.iter().map(|&x| x.exp()).sum::<T>().ln_1p()
    } else {
        zmax + ((-zmax).exp() + z.iter().map(|&x| (x - zmax).exp()).sum::<T>()).ln()
    };

    let n_pos = p.positives.len();
    for (a, neg) in p.negatives.iter().enumerate() {
        for (b, pos) in p.positives.iter().enumerate() {
            let w = (z[a * n_pos + b] - value).exp();
            if w == T::zero() {
                continue;
            }
            for c in 0..dim {
                grad_key[c] += w * (neg[c] - pos[c]);
                grad_negatives[a][c] += w * v[c];
                grad_positives[b][c] -= w * v[c];
            }
        }
    }

    Ok(LossReport {
        value,
        grad_key,
        grad_positives,
        grad_negatives,
    })
}

/// Largest discrepancy between the analytic gradient and central finite
/// differences with step `eps`, over every coordinate of every input.
///
/// The error of a coordinate is `|g - fd| / max(1, |g|, |fd|)`: relative for
/// gradients of magnitude one or more, absolute below that.
pub fn gradient_check<T: Scalar>(p: &ContrastivePair<T>, eps: T) -> Result<T> {
    if !(eps > T::zero() && eps <= T::lit(1e-3)) {
        return Err(invalid(format!("finite-difference step {eps} outside (0, 1e-3]")));
    }
    let analytic = contrastive_loss(p)?;
    let mut probe = p.clone();
    let two_eps = eps + eps;

    let coords = (0..p.key.len())
        .map(|c| (Coord::Key(c), analytic.grad_key[c]))
        .chain(analytic.grad_positives.iter().enumerate().flat_map(|(b, g)| {
            g.iter().enumerate().map(move |(c, &gc)| (Coord::Positive(b, c), gc))
        }))
        .chain(analytic.grad_negatives.iter().enumerate().flat_map(|(a, g)| {
            g.iter().enumerate().map(move |(c, &gc)| (Coord::Negative(a, c), gc))
        }));

    let mut worst = T::zero();
    for (coord, g) in coords {
        let orig = *coord.get(&mut probe);
        *coord.get(&mut probe) = orig + eps;
        let up = contrastive_loss(&probe)?.value;
        *coord.get(&mut probe) = orig - eps;
        let down = contrastive_loss(&probe)?.value;
        *coord.get(&mut probe) = orig;
        let fd = (up - down) / two_eps;
        let err = (g - fd).abs() / T::one().max(g.abs()).max(fd.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Clone, Copy)]
enum Coord {
    Key(usize),
    Positive(usize, usize),
    Negative(usize, usize),
}

impl Coord {
    fn get<T>(self, p: &mut ContrastivePair<T>) -> &mut T {
        match self {
            Coord::Key(c) => &mut p.key[c],
            Coord::Positive(b, c) => &mut p.positives[b][c],
            Coord::Negative(a, c) => &mut p.negatives[a][c],
        }
    }
}

/// Embeddings with an identity label each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings<T> {
    pub labels: Vec<u32>,
    pub embeddings: EmbeddingSet<T>,
}

impl<T: Scalar> LabeledEmbeddings<T> {
    pub fn new(labels: Vec<u32>, embeddings: EmbeddingSet<T>) -> Result<Self> {
        if labels.len() != embeddings.n() {
            return Err(shape(format!(
                "{} labels for {} embeddings",
                labels.len(),
                embeddings.n()
            )));
        }
        Ok(Self { labels, embeddings })
    }

    fn check_refinable(&self) -> Result<()> {
        let mut counts = std::collections::BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0usize) += 1;
        }
        if counts.len() < 2 {
            return Err(invalid("refinement needs at least two identities"));
        }
        if let Some((l, _)) = counts.iter().find(|(_, &c)| c < 2) {
            return Err(invalid(format!("identity {l} has fewer than two samples")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineConfig<T> {
    pub steps: usize,
    pub lr: T,
    /// Positives drawn per key and step; `None` uses every same-label sample.
    pub refs_per_key: Option<usize>,
    pub loss_weight: T,
    pub seed: u64,
}

impl<T: Scalar> Default for RefineConfig<T> {
    fn default() -> Self {
        Self {
            steps: 50,
            lr: T::lit(0.05),
            refs_per_key: None,
            loss_weight: T::lit(DEFAULT_LOSS_WEIGHT),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineResult<T> {
    pub refined: LabeledEmbeddings<T>,
    pub silhouette_before: T,
    pub silhouette_after: T,
    /// Mean loss at the start of each step.
    pub loss_history: Vec<T>,
}

/// Full-batch gradient descent on the mean contrastive loss, using every
/// sample in turn as the key.
pub fn refine_embeddings<T: Scalar>(
    data: &LabeledEmbeddings<T>,
    cfg: &RefineConfig<T>,
) -> Result<RefineResult<T>> {
    data.check_refinable()?;
    if !(cfg.lr.is_finite() && cfg.lr >= T::zero()) {
        return Err(invalid("learning rate must be finite and non-negative"));
    }
    if cfg.refs_per_key == Some(0) {
        return Err(invalid("refs_per_key must be positive"));
    }
    let silhouette_before = silhouette_cosine(data)?;
    let n = data.embeddings.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = data.embeddings.clone();
    let mut loss_history = Vec::with_capacity(cfg.steps);
    let scale = cfg.loss_weight / T::from_count(n);

    for _ in 0..cfg.steps {
        let mut grads = vec![T::zero(); current.as_slice().len()];
        let mut total = T::zero();
        for key in 0..n {
            let label = data.labels[key];
            let mut pos_idx: Vec<usize> =
                (0..n).filter(|&j| j != key && data.labels[j] == label).collect();
            if let Some(k) = cfg.refs_per_key.filter(|&k| k < pos_idx.len()) {
                let mut picked: Vec<usize> = sample(&mut rng, pos_idx.len(), k)
                    .into_iter()
                    .map(|i| pos_idx[i])
                    .collect();
                picked.sort_unstable();
                pos_idx = picked;
            }
            let neg_idx: Vec<usize> = (0..n).filter(|&j| data.labels[j] != label).collect();
            let pair = ContrastivePair {
                key: current.row(key).to_vec(),
                positives: pos_idx.iter().map(|&j| current.row(j).to_vec()).collect(),
                negatives: neg_idx.iter().map(|&j| current.row(j).to_vec()).collect(),
            };
            let r = contrastive_loss(&pair)?;
            total += r.value;
            add_into(&mut grads, current.dim(), key, &r.grad_key);
            for (&j, g) in pos_idx.iter().zip(&r.grad_positives) {
                add_into(&mut grads, current.dim(), j, g);
            }
            for (&j, g) in neg_idx.iter().zip(&r.grad_negatives) {
                add_into(&mut grads, current.dim(), j, g);
            }
        }
        loss_history.push(total / T::from_count(n));
        if cfg.lr == T::zero() {
            continue;
        }
        let step: Vec<T> = current
            .as_slice()
            .iter()
            .zip(&grads)
            .map(|(&x, &g)| x - cfg.lr * scale * g)
            .collect();
        current = EmbeddingSet::new(n, current.dim(), step)?;
    }

    let refined = LabeledEmbeddings {
        labels: data.labels.clone(),
        embeddings: current,
    };
    Ok(RefineResult {
        silhouette_after: silhouette_cosine(&refined)?,
        silhouette_before,
        refined,
        loss_history,
    })
}

fn add_into<T: Scalar>(grads: &mut [T], dim: usize, row: usize, g: &[T]) {
    for (a, &x) in grads[row * dim..(row + 1) * dim].iter_mut().zip(g) {
        *a += x;
    }
}

/// Mean silhouette coefficient under cosine distance `1 - cos`.
///
/// Samples alone in their cluster score 0.
pub fn silhouette_cosine<T: Scalar>(data: &LabeledEmbeddings<T>) -> Result<T> {
    let n = data.embeddings.n();
    if n != data.labels.len() {
        return Err(shape("labels and embeddings differ in length"));
    }
    let mut labels: Vec<u32> = data.labels.clone();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() < 2 {
        return Err(invalid("silhouette needs at least two clusters"));
    }
    let dist = |i: usize, j: usize| T::one() - cosine(data.embeddings.row(i), data.embeddings.row(j));

    let mut acc = T::zero();
    for i in 0..n {
        let mut sums = vec![(T::zero(), 0usize); labels.len()];
        for j in (0..n).filter(|&j| j != i) {
            let c = labels.binary_search(&data.labels[j]).expect("known label");
            sums[c].0 += dist(i, j);
            sums[c].1 += 1;
        }
        let own = labels.binary_search(&data.labels[i]).expect("known label");
        if sums[own].1 == 0 {
            continue;
        }
        let a = sums[own].0 / T::from_count(sums[own].1);
        let b = sums
            .iter()
            .enumerate()
            .filter(|&(c, s)| c != own && s.1 > 0)
            .map(|(_, s)| s.0 / T::from_count(s.1))
            .fold(T::infinity(), T::min);
        let denom = a.max(b);
        if denom > T::zero() {
            acc += (b - a) / denom;
        }
    }
    Ok(acc / T::from_count(n))
}
