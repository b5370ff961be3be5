//! Sliding-window memory of track-aligned embeddings.
//!
//! The readout for slot `k` is
//!
//! ```text
//! m_k = sum_{w = 1..min(W, len)} e_k(age w) * conf_k(age w) * W / w
//! ```
//!
//! where age 1 is the most recent record. Recent, confident frames dominate;
//! a record pushed with zero confidence contributes nothing. The sum is not
//! normalized since it is only ever compared through cosine similarity.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::scalar::Scalar;
use crate::similarity::EmbeddingSet;

/// One frame worth of track-aligned state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord<T> {
    pub e_obj: EmbeddingSet<T>,
    pub e_app: EmbeddingSet<T>,
    pub conf: Vec<T>,
}

/// Weighted memory embeddings for both streams.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryReadout<T> {
    pub m_obj: EmbeddingSet<T>,
    pub m_app: EmbeddingSet<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank<T> {
    window: usize,
    n: usize,
    dim: usize,
    // oldest at the front
    records: VecDeque<MemoryRecord<T>>,
}

impl<T: Scalar> MemoryBank<T> {
    pub fn new(window: usize, n: usize, dim: usize) -> Result<Self> {
        if window == 0 {
            return Err(invalid("memory window must be at least 1"));
        }
        if n == 0 || dim == 0 {
            return Err(Error::Empty("memory bank slots"));
        }
        Ok(Self {
            window,
            n,
            dim,
            records: VecDeque::with_capacity(window + 1),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records from oldest to newest.
    pub fn records(&self) -> impl DoubleEndedIterator<Item = &MemoryRecord<T>> {
        self.records.iter()
    }

    /// Appends a record, evicting the oldest once more than `window` are held.
    ///
    /// The embeddings must already be ordered by track slot.
    pub fn push(
        &mut self,
        e_obj: EmbeddingSet<T>,
        e_app: EmbeddingSet<T>,
        conf: Vec<T>,
    ) -> Result<()> {
        for (name, e) in [("object", &e_obj), ("appearance", &e_app)] {
            if e.n() != self.n || e.dim() != self.dim {
                return Err(shape(format!(
                    "{name} embeddings are {}x{}, bank holds {}x{}",
                    e.n(),
                    e.dim(),
                    self.n,
                    self.dim
                )));
            }
        }
        if conf.len() != self.n {
            return Err(shape(format!(
                "{} confidences for {} slots",
                conf.len(),
                self.n
            )));
        }
        if let Some(c) = conf
            .iter()
            .find(|c| !(c.is_finite() && **c >= T::zero() && **c <= T::one()))
        {
            return Err(invalid(format!("confidence {c} outside [0, 1]")));
        }
        self.records.push_back(MemoryRecord { e_obj, e_app, conf });
        while self.records.len() > self.window {
            self.records.pop_front();
        }
        Ok(())
    }

    /// Confidence- and recency-weighted sum over the retained records.
    pub fn read_memory(&self) -> Result<MemoryReadout<T>> {
        if self.records.is_empty() {
            return Err(Error::Empty("memory bank has no records"));
        }
        let window = T::from_count(self.window);
        let mut m_obj = vec![T::zero(); self.n * self.dim];
        let mut m_app = vec![T::zero(); self.n * self.dim];
        for (age0, rec) in self.records.iter().rev().enumerate() {
            let recency = window / T::from_count(age0 + 1);
            for k in 0..self.n {
                let w = rec.conf[k] * recency;
                accumulate(&mut m_obj[k * self.dim..(k + 1) * self.dim], rec.e_obj.row(k), w);
                accumulate(&mut m_app[k * self.dim..(k + 1) * self.dim], rec.e_app.row(k), w);
            }
        }
        Ok(MemoryReadout {
            m_obj: EmbeddingSet::new(self.n, self.dim, m_obj)?,
            m_app: EmbeddingSet::new(self.n, self.dim, m_app)?,
        })
    }
}

fn accumulate<T: Scalar>(acc: &mut [T], e: &[T], w: T) {
    for (a, &x) in acc.iter_mut().zip(e) {
        *a += x * w;
    }
}
