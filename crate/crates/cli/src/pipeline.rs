//! In-memory stages of an experiment. The commands wrap these with file IO;
//! the acceptance suite calls them directly.

use std::time::{Duration, Instant};

use aga_core::dataset_io::{ReportFile, ScenarioBundle, TrackBundle};
use aga_core::metrics::{aggregate, differing_frames, evaluate_video, OrderComparison, VideoReport};
use aga_core::scenario_gen::{
    generate_scenario, simulate_detections, ScenarioKind, ScenarioParams, SimulatorParams,
};
use aga_core::track_video;
use rayon::prelude::*;

use crate::config::{VariantConfig, VideoSpec};
use crate::error::{CliError, Result};

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot start {jobs} workers: {e}")))
}

/// Maps `f` over `items` on `jobs` workers. Results come back in input
/// order, and the reported error is the first one in input order, so the
/// outcome never depends on scheduling.
pub fn par_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let results: Vec<Result<R>> = if jobs <= 1 {
        items.iter().map(&f).collect()
    } else {
        thread_pool(jobs)?.install(|| items.par_iter().map(&f).collect())
    };
    results.into_iter().collect()
}

pub fn generate_video(
    spec: &VideoSpec,
    params: &ScenarioParams,
    simulator: &SimulatorParams,
) -> Result<ScenarioBundle> {
    let (scenario, ground_truth) =
        generate_scenario(spec.video_id.clone(), spec.seed, spec.kind, params)?;
    let detections = simulate_detections(&scenario, &ground_truth, simulator)?;
    Ok(ScenarioBundle {
        scenario,
        simulator: simulator.clone(),
        ground_truth,
        detections,
    })
}

pub struct Tracked {
    pub bundle: TrackBundle,
    pub elapsed: Duration,
}

pub fn track_variants(video: &ScenarioBundle, variants: &[VariantConfig]) -> Result<Vec<Tracked>> {
    variants
        .iter()
        .map(|v| {
            let config = v.tracker_config()?;
            let start = Instant::now();
            let output = track_video(&video.detections, &config)?;
            Ok(Tracked {
                bundle: TrackBundle {
                    video_id: video.scenario.video_id.clone(),
                    variant: v.name.clone(),
                    config,
                    output,
                },
                elapsed: start.elapsed(),
            })
        })
        .collect()
}

/// Per-video evaluation of every variant, plus the frame differences for
/// each listing-order variant against its twin.
pub struct VideoEvaluation {
    pub video_id: String,
    pub kind: ScenarioKind,
    pub reports: Vec<VideoReport>,
    /// Differing frames, one entry per pair from [`order_pairs`].
    pub order_diffs: Vec<usize>,
    pub frames: usize,
}

/// `(variant index, baseline index)` for each listing-order variant with a
/// causal-order twin.
pub fn order_pairs(variants: &[VariantConfig]) -> Vec<(usize, usize)> {
    variants
        .iter()
        .enumerate()
        .filter(|(_, v)| v.literal_order)
        .filter_map(|(i, v)| {
            variants
                .iter()
                .position(|b| !b.literal_order && v.is_order_twin_of(b))
                .map(|j| (i, j))
        })
        .collect()
}

pub fn evaluate_outputs(
    video: &ScenarioBundle,
    variants: &[VariantConfig],
    outputs: &[TrackBundle],
) -> Result<VideoEvaluation> {
    let sc = &video.scenario;
    if outputs.len() != variants.len() {
        return Err(CliError::Mismatch(format!(
            "{}: {} outputs for {} variants",
            sc.video_id,
            outputs.len(),
            variants.len()
        )));
    }
    let mut reports = Vec::with_capacity(variants.len());
    for (v, out) in variants.iter().zip(outputs) {
        if out.video_id != sc.video_id || out.variant != v.name {
            return Err(CliError::Mismatch(format!(
                "expected output of {} for {}, found {} for {}",
                v.name, sc.video_id, out.variant, out.video_id
            )));
        }
        reports.push(evaluate_video(&sc.video_id, sc.kind, &v.name, &out.output, &video.ground_truth)?);
    }
    let order_diffs = order_pairs(variants)
        .into_iter()
        .map(|(i, j)| differing_frames(&outputs[i].output, &outputs[j].output))
        .collect::<aga_core::Result<Vec<_>>>()?;
    Ok(VideoEvaluation {
        video_id: sc.video_id.clone(),
        kind: sc.kind,
        reports,
        order_diffs,
        frames: sc.frames,
    })
}

/// Aggregate tables (one block per kind, one row per variant, in config
/// order) and the listing-order comparison.
pub fn build_report(variants: &[VariantConfig], videos: &[VideoEvaluation]) -> ReportFile {
    let mut reports = Vec::new();
    for kind in [ScenarioKind::Track, ScenarioKind::Swap] {
        let of_kind: Vec<&VideoEvaluation> = videos.iter().filter(|v| v.kind == kind).collect();
        if of_kind.is_empty() {
            continue;
        }
        for (i, v) in variants.iter().enumerate() {
            let per_video = of_kind.iter().map(|e| e.reports[i].clone()).collect();
            reports.push(aggregate(&v.name, Some(kind), per_video));
        }
    }

    let mut comparisons = Vec::new();
    let mut notes = Vec::new();
    for (c, (i, j)) in order_pairs(variants).into_iter().enumerate() {
        let differing: Vec<&VideoEvaluation> =
            videos.iter().filter(|e| e.order_diffs[c] > 0).collect();
        let cmp = OrderComparison {
            variant: variants[i].name.clone(),
            baseline: variants[j].name.clone(),
            videos: videos.len(),
            frames: videos.iter().map(|e| e.frames).sum(),
            differing_videos: differing.iter().map(|e| e.video_id.clone()).collect(),
            differing_frames: videos.iter().map(|e| e.order_diffs[c]).sum(),
        };
        notes.push(format!(
            "{} vs {}: slot order differs on {} of {} videos ({} of {} frames). \
             The listing order emits and stores each frame with the previous frame's assignment.",
            cmp.variant,
            cmp.baseline,
            cmp.differing_videos.len(),
            cmp.videos,
            cmp.differing_frames,
            cmp.frames
        ));
        comparisons.push(cmp);
    }
    let mut report = ReportFile::new(reports, notes);
    report.order_comparisons = comparisons;
    report
}

/// Generate, track and evaluate without touching the disk.
pub fn run_in_memory(
    specs: &[VideoSpec],
    params: &ScenarioParams,
    simulator: &SimulatorParams,
    variants: &[VariantConfig],
    jobs: usize,
) -> Result<ReportFile> {
    let evaluations = par_map(jobs, specs, |spec| {
        let video = generate_video(spec, params, simulator)?;
        let outputs: Vec<TrackBundle> = track_variants(&video, variants)?
            .into_iter()
            .map(|t| t.bundle)
            .collect();
        evaluate_outputs(&video, variants, &outputs)
    })?;
    Ok(build_report(variants, &evaluations))
}
