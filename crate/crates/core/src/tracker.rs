//! Online association loop.
//!
//! Every frame carries `N` detections in arbitrary order. The tracker keeps
//! `N` fixed slots; at frame 1 slot `k` is simply detection `k`. From then on
//! each frame is scored against the memory of earlier frames, matched with
//! [`solve_assignment`], emitted in slot order and pushed into memory.
//! There is no thresholding, NMS, birth or death: every detection lands in
//! exactly one slot.
//!
//! [`TrackerConfig::literal_order`] switches to the statement order of the
//! original pseudo-code listing, where memory is updated and predictions are
//! emitted with the permutation computed on the *previous* frame, before the
//! current frame is matched. It is kept only for A/B comparison.

use serde::{Deserialize, Serialize};

use crate::assignment::{invert_permutation, solve_assignment, ScoreMatrix};
use crate::dataset_io::RleMask;
use crate::error::{invalid, shape, Error, Result};
use crate::memory_bank::MemoryBank;
use crate::scalar::Scalar;
use crate::similarity::{cosine_similarity_matrix, fuse_scores, EmbeddingSet, FusionWeights};

/// Default memory window.
pub const DEFAULT_WINDOW: usize = 5;

/// Simulated (or real) detector output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections<T> {
    pub frame_index: usize,
    pub e_obj: EmbeddingSet<T>,
    pub e_app: EmbeddingSet<T>,
    pub conf: Vec<T>,
    pub class_ids: Vec<u32>,
    pub masks: Option<Vec<RleMask>>,
    /// Ground-truth instance behind each detection. Never read by the
    /// tracker; it is carried through so evaluation can follow identities.
    pub gt_ids: Option<Vec<u32>>,
}

impl<T: Scalar> FrameDetections<T> {
    pub fn n(&self) -> usize {
        self.e_obj.n()
    }

    pub fn dim(&self) -> usize {
        self.e_obj.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if !self.e_obj.same_shape(&self.e_app) {
            return Err(shape(format!(
                "frame {}: object embeddings {}x{} vs appearance {}x{}",
                self.frame_index,
                n,
                self.dim(),
                self.e_app.n(),
                self.e_app.dim()
            )));
        }
        let lens = [
            ("confidences", Some(self.conf.len())),
            ("class ids", Some(self.class_ids.len())),
            ("masks", self.masks.as_ref().map(Vec::len)),
            ("gt ids", self.gt_ids.as_ref().map(Vec::len)),
        ];
        for (name, len) in lens {
            if let Some(len) = len.filter(|&l| l != n) {
                return Err(shape(format!(
                    "frame {}: {len} {name} for {n} detections",
                    self.frame_index
                )));
            }
        }
        if let Some(c) = self
            .conf
            .iter()
            .find(|c| !(c.is_finite() && **c >= T::zero() && **c <= T::one()))
        {
            return Err(invalid(format!(
                "frame {}: confidence {c} outside [0, 1]",
                self.frame_index
            )));
        }
        Ok(())
    }

    fn prediction(&self, det: usize) -> Prediction<T> {
        Prediction {
            detection: det,
            class_id: self.class_ids[det],
            confidence: self.conf[det],
            mask: self.masks.as_ref().map(|m| m[det].clone()),
            gt_id: self.gt_ids.as_ref().map(|g| g[det]),
        }
    }
}

/// A detection placed into a track slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    /// Index of the detection within its frame.
    pub detection: usize,
    pub class_id: u32,
    pub confidence: T,
    #[serde(default, rename = "mask_rle", skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_id: Option<u32>,
}

/// Tracker output for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput<T> {
    pub frame_index: usize,
    /// `assignment[detection] = slot`.
    pub assignment: Vec<usize>,
    /// One prediction per slot, in slot order.
    pub slots: Vec<Prediction<T>>,
    /// Fused score matrix (rows: detections, columns: slots). Absent for
    /// the first frame, which is matched by identity.
    pub scores: Option<ScoreMatrix<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput<T> {
    pub frames: Vec<FrameOutput<T>>,
}

impl<T> TrackOutput<T> {
    pub fn n_slots(&self) -> usize {
        self.frames.first().map_or(0, |f| f.slots.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig<T> {
    pub window: usize,
    pub fusion: FusionWeights<T>,
    /// When false the memory keeps the previous frame only.
    pub use_memory: bool,
    /// Run the listing's statement order instead of the causal one.
    pub literal_order: bool,
    /// Multiplier applied to embeddings as they enter memory. Has no effect
    /// on assignments (cosine similarity is scale invariant); exposed so that
    /// invariance can be checked end to end.
    pub memory_scale: T,
}

impl<T: Scalar> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            fusion: FusionWeights::default(),
            use_memory: true,
            literal_order: false,
            memory_scale: T::one(),
        }
    }
}

impl<T: Scalar> TrackerConfig<T> {
    pub fn effective_window(&self) -> usize {
        if self.use_memory {
            self.window
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(invalid("window must be at least 1"));
        }
        self.fusion.validate()?;
        if !(self.memory_scale.is_finite() && self.memory_scale > T::zero()) {
            return Err(invalid("memory scale must be positive and finite"));
        }
        Ok(())
    }
}

/// Per-video tracker state.
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    cfg: TrackerConfig<T>,
    bank: Option<MemoryBank<T>>,
    last_frame: Option<usize>,
    // slot -> detection order carried between frames in literal mode
    lagged_order: Vec<usize>,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(cfg: TrackerConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            bank: None,
            last_frame: None,
            lagged_order: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.cfg
    }

    pub fn memory(&self) -> Option<&MemoryBank<T>> {
        self.bank.as_ref()
    }

    pub fn step(&mut self, frame: &FrameDetections<T>) -> Result<FrameOutput<T>> {
        frame.validate()?;
        if let Some(last) = self.last_frame {
            if frame.frame_index <= last {
                return Err(invalid(format!(
                    "frame index {} does not follow {last}",
                    frame.frame_index
                )));
            }
        }
        let n = frame.n();
        let bank = match &mut self.bank {
            Some(bank) => {
                let held = bank.records().next().expect("non-empty bank");
                if held.e_obj.n() != n || held.e_obj.dim() != frame.dim() {
                    return Err(shape(format!(
                        "frame {} has {}x{} embeddings, video started with {}x{}",
                        frame.frame_index,
                        n,
                        frame.dim(),
                        held.e_obj.n(),
                        held.e_obj.dim()
                    )));
                }
                bank
            }
            None => {
                self.lagged_order = (0..n).collect();
                self.bank
                    .insert(MemoryBank::new(self.cfg.effective_window(), n, frame.dim())?)
            }
        };
        let first = self.last_frame.is_none();
        self.last_frame = Some(frame.frame_index);

        let scale = self.cfg.memory_scale;
        let push = |bank: &mut MemoryBank<T>, order: &[usize]| -> Result<()> {
            let conf = order.iter().map(|&d| frame.conf[d]).collect();
            bank.push(
                scaled_rows(&frame.e_obj, order, scale)?,
                scaled_rows(&frame.e_app, order, scale)?,
                conf,
            )
        };
        let score = |bank: &MemoryBank<T>| -> Result<ScoreMatrix<T>> {
            let m = bank.read_memory()?;
            let s_obj = cosine_similarity_matrix(&frame.e_obj, &m.m_obj)?;
            let s_app = cosine_similarity_matrix(&frame.e_app, &m.m_app)?;
            fuse_scores(&s_obj, &s_app, self.cfg.fusion)
        };

        let (order, scores) = if self.cfg.literal_order {
            let order = std::mem::take(&mut self.lagged_order);
            push(bank, &order)?;
            let s = score(bank)?;
            self.lagged_order = solve_assignment(&s).inverse();
            (order, Some(s))
        } else if first {
            let order: Vec<usize> = (0..n).collect();
            push(bank, &order)?;
            (order, None)
        } else {
            let s = score(bank)?;
            let order = solve_assignment(&s).inverse();
            push(bank, &order)?;
            (order, Some(s))
        };

        Ok(FrameOutput {
            frame_index: frame.frame_index,
            assignment: invert_permutation(&order),
            slots: order.iter().map(|&d| frame.prediction(d)).collect(),
            scores,
        })
    }
}

fn scaled_rows<T: Scalar>(e: &EmbeddingSet<T>, order: &[usize], scale: T) -> Result<EmbeddingSet<T>> {
    let rows = e.select_rows(order)?;
    if scale == T::one() {
        Ok(rows)
    } else {
        rows.scaled(scale)
    }
}

/// Tracks a whole video with the configured fusion weights.
pub fn track_video<T: Scalar>(
    frames: &[FrameDetections<T>],
    cfg: &TrackerConfig<T>,
) -> Result<TrackOutput<T>> {
    if frames.is_empty() {
        return Err(Error::Empty("video has no frames"));
    }
    let mut tracker = Tracker::new(*cfg)?;
    let frames = frames
        .iter()
        .map(|f| tracker.step(f))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrackOutput { frames })
}

/// [`track_video`] with the appearance term switched off.
pub fn track_video_object_only<T: Scalar>(
    frames: &[FrameDetections<T>],
    cfg: &TrackerConfig<T>,
) -> Result<TrackOutput<T>> {
    let cfg = TrackerConfig {
        fusion: FusionWeights::object_only(),
        ..*cfg
    };
    track_video(frames, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(index: usize, obj: &[&[f64]], app: &[&[f64]], conf: &[f64]) -> FrameDetections<f64> {
        let n = obj.len();
        FrameDetections {
            frame_index: index,
            e_obj: EmbeddingSet::from_rows(obj).unwrap(),
            e_app: EmbeddingSet::from_rows(app).unwrap(),
            conf: conf.to_vec(),
            class_ids: (0..n as u32).collect(),
            masks: None,
            gt_ids: Some((0..n as u32).collect()),
        }
    }

    #[test]
    fn single_frame_is_identity() {
        let f = frame(0, &[&[1.0, 0.0], &[0.0, 1.0]], &[&[1.0, 0.0], &[0.0, 1.0]], &[0.9, 0.8]);
        let out = track_video(&[f], &TrackerConfig::default()).unwrap();
        assert_eq!(out.frames.len(), 1);
        assert_eq!(out.frames[0].assignment, vec![0, 1]);
        assert_eq!(out.frames[0].slots[1].confidence, 0.8);
        assert!(out.frames[0].scores.is_none());
    }

    #[test]
    fn fused_scores_fix_position_only_mistake() {
        // Object stream says "stay in place", appearance says "swapped".
        let f0 = frame(0, &[&[1.0, 0.0], &[0.0, 1.0]], &[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, 1.0]);
        let f1 = frame(1, &[&[1.0, 0.1], &[0.1, 1.0]], &[&[0.0, 1.0], &[1.0, 0.0]], &[1.0, 1.0]);
        let frames = [f0, f1];
        let fused = track_video(&frames, &TrackerConfig::default()).unwrap();
        assert_eq!(fused.frames[1].assignment, vec![1, 0]);
        let obj = track_video_object_only(&frames, &TrackerConfig::default()).unwrap();
        assert_eq!(obj.frames[1].assignment, vec![0, 1]);
    }

    #[test]
    fn rejects_bad_sequences() {
        let cfg = TrackerConfig::<f64>::default();
        assert!(matches!(track_video(&[], &cfg), Err(Error::Empty(_))));
        let f0 = frame(0, &[&[1.0, 0.0]], &[&[1.0, 0.0]], &[1.0]);
        let f1 = frame(1, &[&[1.0, 0.0], &[0.0, 1.0]], &[&[1.0, 0.0], &[0.0, 1.0]], &[1.0, 1.0]);
        assert!(matches!(
            track_video(&[f0.clone(), f1], &cfg),
            Err(Error::Shape(_))
        ));
        assert!(track_video(&[f0.clone(), f0], &cfg).is_err());
    }

    #[test]
    fn literal_order_lags_by_one_frame() {
        let a: &[f64] = &[1.0, 0.0];
        let b: &[f64] = &[0.0, 1.0];
        let f0 = frame(0, &[a, b], &[a, b], &[1.0, 1.0]);
        let mut f1 = frame(1, &[b, a], &[b, a], &[1.0, 1.0]);
        f1.gt_ids = Some(vec![1, 0]);
        let mut f2 = frame(2, &[b, a], &[b, a], &[1.0, 1.0]);
        f2.gt_ids = Some(vec![1, 0]);
        let frames = [f0, f1, f2];
        let causal = track_video(&frames, &TrackerConfig::default()).unwrap();
        let ids = |o: &TrackOutput<f64>, t: usize| -> Vec<u32> {
            o.frames[t].slots.iter().map(|p| p.gt_id.unwrap()).collect()
        };
        assert_eq!(ids(&causal, 1), vec![0, 1]);
        assert_eq!(ids(&causal, 2), vec![0, 1]);
        let literal = track_video(
            &frames,
            &TrackerConfig {
                literal_order: true,
                ..Default::default()
            },
        )
        .unwrap();
        // Frame 1 is emitted with the permutation found on frame 0.
        assert_eq!(ids(&literal, 1), vec![1, 0]);
    }
}
