//! Evaluation of tracker output against ground truth.
//!
//! Identities are followed per frame: each ground-truth instance is located
//! in some slot, either through the hidden id the simulator attaches to
//! every detection or, for mask-only predictions, through a per-frame
//! maximum-IoU matching. The slot an instance occupies at the first frame is
//! its anchor.
//!
//! * ID switches: per instance, one for every frame whose slot differs from
//!   the previous frame's.
//! * Association accuracy: share of (frame, instance) pairs after the first
//!   frame whose slot equals the anchor. A one-frame video scores 1.
//! * Spatio-temporal AP: mask tubes compared by video-level IoU, matched
//!   greedily by mean confidence at thresholds 0.50, 0.55, ..., 0.95.

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, ScoreMatrix};
use crate::dataset_io::RleMask;
use crate::error::{invalid, shape, Error, Result};
use crate::scenario_gen::{GroundTruth, ScenarioKind};
use crate::tracker::TrackOutput;

/// IoU thresholds of the AP average.
pub fn ap_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// How predicted slots are tied to ground-truth instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotMatching {
    HiddenId,
    MaskIou,
}

/// Slot of every instance in every frame: `[frame][instance] = slot`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotTracks {
    pub slots: Vec<Vec<usize>>,
}

impl SlotTracks {
    pub fn anchor(&self) -> &[usize] {
        &self.slots[0]
    }

    pub fn id_switches(&self) -> usize {
        self.slots
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count())
            .sum()
    }

    pub fn association_accuracy(&self) -> f64 {
        let n = self.anchor().len();
        let pairs = (self.slots.len() - 1) * n;
        if pairs == 0 {
            return 1.0;
        }
        let anchor = self.anchor();
        let correct: usize = self.slots[1..]
            .iter()
            .map(|f| f.iter().zip(anchor).filter(|(a, b)| a == b).count())
            .sum();
        correct as f64 / pairs as f64
    }
}

fn check_shapes(pred: &TrackOutput<f64>, gt: &GroundTruth) -> Result<()> {
    if pred.frames.len() != gt.frames.len() {
        return Err(shape(format!(
            "prediction has {} frames, ground truth {}",
            pred.frames.len(),
            gt.frames.len()
        )));
    }
    if pred.frames.is_empty() {
        return Err(Error::Empty("no frames to evaluate"));
    }
    let n = gt.n_instances();
    for (t, f) in pred.frames.iter().enumerate() {
        if f.slots.len() != n || gt.frames[t].len() != n {
            return Err(shape(format!(
                "frame {t}: {} slots, {} ground-truth instances",
                f.slots.len(),
                gt.frames[t].len()
            )));
        }
    }
    Ok(())
}

/// Picks hidden ids when every slot carries one, masks otherwise.
pub fn default_matching(pred: &TrackOutput<f64>) -> Result<SlotMatching> {
    let all = |f: &dyn Fn(&crate::tracker::Prediction<f64>) -> bool| {
        pred.frames.iter().all(|fr| fr.slots.iter().all(f))
    };
    if all(&|p| p.gt_id.is_some()) {
        Ok(SlotMatching::HiddenId)
    } else if all(&|p| p.mask.is_some()) {
        Ok(SlotMatching::MaskIou)
    } else {
        Err(invalid("predictions carry neither ground-truth ids nor masks"))
    }
}

pub fn slot_tracks(
    pred: &TrackOutput<f64>,
    gt: &GroundTruth,
    matching: SlotMatching,
) -> Result<SlotTracks> {
    check_shapes(pred, gt)?;
    let n = gt.n_instances();
    let mut slots = Vec::with_capacity(pred.frames.len());
    for (t, f) in pred.frames.iter().enumerate() {
        let mut of_instance = vec![usize::MAX; n];
        match matching {
            SlotMatching::HiddenId => {
                for (slot, p) in f.slots.iter().enumerate() {
                    let id = p
                        .gt_id
                        .ok_or_else(|| invalid(format!("frame {t} slot {slot} has no id")))?
                        as usize;
                    if id >= n || of_instance[id] != usize::MAX {
                        return Err(invalid(format!("frame {t}: bad or repeated id {id}")));
                    }
                    of_instance[id] = slot;
                }
            }
            SlotMatching::MaskIou => {
                let mut iou = Vec::with_capacity(n * n);
                for inst in &gt.frames[t] {
                    for (slot, p) in f.slots.iter().enumerate() {
                        let m = p.mask.as_ref().ok_or_else(|| {
                            invalid(format!("frame {t} slot {slot} has no mask"))
                        })?;
                        iou.push(mask_iou(&inst.visible, m)?);
                    }
                }
                let s = ScoreMatrix::new(n, iou)?;
                of_instance = solve_assignment(&s).permutation;
            }
        }
        slots.push(of_instance);
    }
    Ok(SlotTracks { slots })
}

pub fn count_id_switches(pred: &TrackOutput<f64>, gt: &GroundTruth) -> Result<usize> {
    Ok(slot_tracks(pred, gt, default_matching(pred)?)?.id_switches())
}

pub fn association_accuracy(pred: &TrackOutput<f64>, gt: &GroundTruth) -> Result<f64> {
    Ok(slot_tracks(pred, gt, default_matching(pred)?)?.association_accuracy())
}

fn mask_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    let inter = a.intersection(b)?;
    let union = a.foreground() + b.foreground() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApValues {
    /// Mean over the ten thresholds, in percent.
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// Per-threshold values, in percent.
    pub per_threshold: Vec<f64>,
}

/// Video-level IoU of every (slot tube, instance tube) pair:
/// `[slot][instance]`.
pub fn tube_ious(pred: &TrackOutput<f64>, gt: &GroundTruth) -> Result<Vec<Vec<f64>>> {
    check_shapes(pred, gt)?;
    let n = gt.n_instances();
    let mut inter = vec![vec![0u64; n]; n];
    let mut pred_area = vec![0u64; n];
    let mut gt_area = vec![0u64; n];
    for (t, f) in pred.frames.iter().enumerate() {
        for (g, inst) in gt.frames[t].iter().enumerate() {
            gt_area[g] += inst.visible.foreground();
        }
        for (s, p) in f.slots.iter().enumerate() {
            let m = p
                .mask
                .as_ref()
                .ok_or_else(|| invalid(format!("frame {t} slot {s} has no mask")))?;
            pred_area[s] += m.foreground();
            for (g, inst) in gt.frames[t].iter().enumerate() {
                inter[s][g] += m.intersection(&inst.visible)?;
            }
        }
    }
    Ok((0..n)
        .map(|s| {
            (0..n)
                .map(|g| {
                    let union = pred_area[s] + gt_area[g] - inter[s][g];
                    if union == 0 {
                        0.0
                    } else {
                        inter[s][g] as f64 / union as f64
                    }
                })
                .collect()
        })
        .collect())
}

/// Average precision at one IoU threshold for scored tubes.
///
/// `ious[p][g]`; `scores[p]`. Predictions are visited by descending score
/// (ties by index) and each takes the unmatched ground truth of highest IoU
/// at or above `threshold`. The result is the mean, over ground truths, of
/// the precision at the rank where each was recalled (0 for misses).
pub fn average_precision(ious: &[Vec<f64>], scores: &[f64], n_gt: usize, threshold: f64) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut taken = vec![false; n_gt];
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &p) in order.iter().enumerate() {
        let best = (0..n_gt)
            .filter(|&g| !taken[g] && ious[p][g] >= threshold)
            .max_by(|&a, &b| ious[p][a].total_cmp(&ious[p][b]).then(b.cmp(&a)));
        if let Some(g) = best {
            taken[g] = true;
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    sum / n_gt as f64
}

/// Spatio-temporal mask AP of the slot tubes, in percent.
///
/// Each slot is scored by its mean confidence. Instances that are never
/// visible are left out of the ground-truth count.
pub fn spatiotemporal_ap(
    pred: &TrackOutput<f64>,
    gt: &GroundTruth,
    thresholds: &[f64],
) -> Result<ApValues> {
    if thresholds.is_empty() {
        return Err(invalid("no IoU thresholds"));
    }
    let ious = tube_ious(pred, gt)?;
    let n = gt.n_instances();
    let frames = pred.frames.len() as f64;
    let scores: Vec<f64> = (0..n)
        .map(|s| pred.frames.iter().map(|f| f.slots[s].confidence).sum::<f64>() / frames)
        .collect();
    let visible: Vec<usize> = (0..n)
        .filter(|&g| gt.frames.iter().any(|f| f[g].visible.foreground() > 0))
        .collect();
    let ious: Vec<Vec<f64>> = ious
        .iter()
        .map(|row| visible.iter().map(|&g| row[g]).collect())
        .collect();
    let at = |thr: f64| 100.0 * average_precision(&ious, &scores, visible.len(), thr);
    let per_threshold: Vec<f64> = thresholds.iter().map(|&t| at(t)).collect();
    Ok(ApValues {
        ap: per_threshold.iter().sum::<f64>() / per_threshold.len() as f64,
        ap50: at(0.5),
        ap75: at(0.75),
        per_threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoReport {
    pub video_id: String,
    pub kind: ScenarioKind,
    pub variant: String,
    pub id_switches: usize,
    pub association_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap: Option<ApValues>,
}

/// Aggregate over a set of videos of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ScenarioKind>,
    pub videos: usize,
    pub id_switches: usize,
    /// Mean of per-video accuracies.
    pub association_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap50: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap75: Option<f64>,
    pub per_video: Vec<VideoReport>,
}

/// Evaluates one video. AP is computed only when every slot carries a mask.
/// How two variants' outputs differ over the same videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderComparison {
    pub variant: String,
    pub baseline: String,
    pub videos: usize,
    pub frames: usize,
    /// Videos with at least one differing frame, in input order.
    pub differing_videos: Vec<String>,
    pub differing_frames: usize,
}

/// Frames whose slot order differs between two runs over the same video.
pub fn differing_frames(a: &TrackOutput<f64>, b: &TrackOutput<f64>) -> Result<usize> {
    if a.frames.len() != b.frames.len() {
        return Err(shape(format!(
            "outputs cover {} and {} frames",
            a.frames.len(),
            b.frames.len()
        )));
    }
    Ok(a.frames
        .iter()
        .zip(&b.frames)
        .filter(|(x, y)| x.assignment != y.assignment)
        .count())
}

pub fn evaluate_video(
    video_id: &str,
    kind: ScenarioKind,
    variant: &str,
    pred: &TrackOutput<f64>,
    gt: &GroundTruth,
) -> Result<VideoReport> {
    let tracks = slot_tracks(pred, gt, default_matching(pred)?)?;
    let has_masks = pred
        .frames
        .iter()
        .all(|f| f.slots.iter().all(|p| p.mask.is_some()));
    let ap = if has_masks {
        Some(spatiotemporal_ap(pred, gt, &ap_thresholds())?)
    } else {
        None
    };
    Ok(VideoReport {
        video_id: video_id.to_string(),
        kind,
        variant: variant.to_string(),
        id_switches: tracks.id_switches(),
        association_accuracy: tracks.association_accuracy(),
        ap,
    })
}

/// Aggregates video reports. AP means are reported only when every video
/// has AP.
pub fn aggregate(variant: &str, kind: Option<ScenarioKind>, videos: Vec<VideoReport>) -> TrackingReport {
    let count = videos.len();
    let mean = |f: &dyn Fn(&VideoReport) -> Option<f64>| -> Option<f64> {
        if count == 0 {
            return None;
        }
        let vals: Option<Vec<f64>> = videos.iter().map(f).collect();
        vals.map(|v| v.iter().sum::<f64>() / count as f64)
    };
    TrackingReport {
        variant: variant.to_string(),
        kind,
        videos: count,
        id_switches: videos.iter().map(|v| v.id_switches).sum(),
        association_accuracy: mean(&|v| Some(v.association_accuracy)).unwrap_or(1.0),
        ap: mean(&|v| v.ap.as_ref().map(|a| a.ap)),
        ap50: mean(&|v| v.ap.as_ref().map(|a| a.ap50)),
        ap75: mean(&|v| v.ap.as_ref().map(|a| a.ap75)),
        per_video: videos,
    }
}
