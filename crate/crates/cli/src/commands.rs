//! The file-backed subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use aga_core::dataset_io::{
    read_scenario_file, read_track_file, write_long_csv, write_report, write_scenario_file,
    write_summary_csv, write_track_file, ReportFile, FORMAT_VERSION,
};
use aga_core::scenario_gen::{ScenarioKind, SimulatorParams};
use log::{debug, info};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SuiteConfig, VariantConfig};
use crate::error::{CliError, Result};
use crate::pipeline::{build_report, evaluate_outputs, generate_video, par_map, track_variants};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    /// Path relative to the dataset directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub record: String,
    pub suite: SuiteConfig,
    pub simulator: SimulatorParams,
    pub videos: Vec<VideoEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub format_version: u32,
    pub record: String,
    /// The dataset's video list, copied so evaluation can detect a mismatch.
    pub dataset_videos: Vec<VideoEntry>,
    pub variants: Vec<VariantConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantTiming {
    pub variant: String,
    pub videos: usize,
    pub total_seconds: f64,
    pub mean_ms_per_video: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let v = serde_json::to_value(value).map_err(|e| CliError::Invalid(e.to_string()))?;
    let text = serde_json::to_string_pretty(&v).map_err(|e| CliError::Invalid(e.to_string()))?;
    fs::write(path, text + "\n").map_err(CliError::io(path))
}

fn read_json<T: DeserializeOwned>(path: &Path, record: &str) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Mismatch(format!(
        "{}: not a manifest: {e}",
        path.display()
    )))?;
    if v.get("record").and_then(|r| r.as_str()) != Some(record) {
        return Err(CliError::Mismatch(format!(
            "{}: expected a {record} manifest",
            path.display()
        )));
    }
    if v.get("format_version").and_then(|r| r.as_u64()) != Some(FORMAT_VERSION as u64) {
        return Err(CliError::Mismatch(format!(
            "{}: unsupported manifest version",
            path.display()
        )));
    }
    serde_json::from_value(v).map_err(|e| CliError::Mismatch(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> aga_core::dataset_io::IoResult<()>,
{
    let mut w = BufWriter::new(File::create(path).map_err(CliError::io(path))?);
    f(&mut w).map_err(CliError::dataset(path))?;
    w.flush().map_err(CliError::io(path))
}

pub fn load_dataset_manifest(dir: &Path) -> Result<DatasetManifest> {
    read_json(&dir.join(MANIFEST), "dataset")
}

pub fn load_output_manifest(dir: &Path) -> Result<OutputManifest> {
    read_json(&dir.join(MANIFEST), "outputs")
}

/// One scenario file per video plus a manifest.
pub fn generate(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<DatasetManifest> {
    cfg.validate()?;
    let videos_dir = out.join("videos");
    create_dir(&videos_dir)?;
    let specs = cfg.suite.videos();
    let params = cfg.suite.scenario_params();
    info!("generating {} videos into {}", specs.len(), out.display());
    let entries = par_map(jobs, &specs, |spec| {
        let bundle = generate_video(spec, &params, &cfg.simulator)?;
        let file = format!("videos/{}.jsonl", spec.video_id);
        let path = out.join(&file);
        write_scenario_file(&path, &bundle).map_err(CliError::dataset(&path))?;
        debug!("wrote {}", path.display());
        Ok(VideoEntry {
            video_id: spec.video_id.clone(),
            kind: spec.kind,
            seed: spec.seed,
            file,
        })
    })?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        record: "dataset".into(),
        suite: cfg.suite.clone(),
        simulator: cfg.simulator.clone(),
        videos: entries,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

fn check_files(dir: &Path, videos: &[VideoEntry], file: impl Fn(&VideoEntry) -> PathBuf) -> Result<()> {
    let missing: Vec<String> = videos
        .iter()
        .filter(|v| !dir.join(file(v)).is_file())
        .map(|v| v.video_id.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Missing(missing))
    }
}

fn output_file(variant: &str, video_id: &str) -> PathBuf {
    PathBuf::from(variant).join(format!("{video_id}.jsonl"))
}

/// One output file per (video, variant), a manifest and a timing summary.
pub fn track(
    variants: &[VariantConfig],
    dataset: &Path,
    out: &Path,
    jobs: usize,
) -> Result<(OutputManifest, Vec<VariantTiming>)> {
    if variants.is_empty() {
        return Err(CliError::Invalid("no variants to run".into()));
    }
    let manifest = load_dataset_manifest(dataset)?;
    check_files(dataset, &manifest.videos, |v| PathBuf::from(&v.file))?;
    for v in variants {
        create_dir(&out.join(&v.name))?;
    }
    info!(
        "tracking {} videos with {} variants",
        manifest.videos.len(),
        variants.len()
    );
    let per_video = par_map(jobs, &manifest.videos, |entry| {
        let path = dataset.join(&entry.file);
        let video = read_scenario_file(&path).map_err(CliError::dataset(&path))?;
        if video.scenario.video_id != entry.video_id || video.scenario.seed != entry.seed {
            return Err(CliError::Mismatch(format!(
                "{} does not hold video {}",
                path.display(),
                entry.video_id
            )));
        }
        let tracked = track_variants(&video, variants)?;
        for t in &tracked {
            let path = out.join(output_file(&t.bundle.variant, &entry.video_id));
            write_track_file(&path, &t.bundle).map_err(CliError::dataset(&path))?;
        }
        Ok(tracked.iter().map(|t| t.elapsed).collect::<Vec<Duration>>())
    })?;

    let timing: Vec<VariantTiming> = variants
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let total: Duration = per_video.iter().map(|d| d[i]).sum();
            let n = per_video.len();
            VariantTiming {
                variant: v.name.clone(),
                videos: n,
                total_seconds: total.as_secs_f64(),
                mean_ms_per_video: if n == 0 { 0.0 } else { total.as_secs_f64() * 1e3 / n as f64 },
            }
        })
        .collect();
    for t in &timing {
        info!(
            "{}: {} videos, {:.3} s tracking ({:.3} ms/video)",
            t.variant, t.videos, t.total_seconds, t.mean_ms_per_video
        );
    }
    let outputs = OutputManifest {
        format_version: FORMAT_VERSION,
        record: "outputs".into(),
        dataset_videos: manifest.videos,
        variants: variants.to_vec(),
    };
    write_json(&out.join(MANIFEST), &outputs)?;
    // Wall-clock numbers live apart from the deterministic artifacts.
    write_json(&out.join("timing.json"), &timing)?;
    Ok((outputs, timing))
}

/// Aggregate report as JSON plus summary and long-format CSV.
pub fn evaluate(dataset: &Path, outputs: &Path, out: &Path, jobs: usize) -> Result<ReportFile> {
    let data = load_dataset_manifest(dataset)?;
    let produced = load_output_manifest(outputs)?;
    if produced.dataset_videos != data.videos {
        return Err(CliError::Mismatch(format!(
            "outputs in {} were produced from a different dataset than {}",
            outputs.display(),
            dataset.display()
        )));
    }
    let variants = produced.variants;
    let mut missing = Vec::new();
    for v in &variants {
        for e in &data.videos {
            if !outputs.join(output_file(&v.name, &e.video_id)).is_file() {
                missing.push(format!("{}/{}", v.name, e.video_id));
            }
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Missing(missing));
    }
    info!(
        "evaluating {} videos x {} variants",
        data.videos.len(),
        variants.len()
    );
    let evaluations = par_map(jobs, &data.videos, |entry| {
        let path = dataset.join(&entry.file);
        let video = read_scenario_file(&path).map_err(CliError::dataset(&path))?;
        let outs = variants
            .iter()
            .map(|v| {
                let path = outputs.join(output_file(&v.name, &entry.video_id));
                read_track_file(&path).map_err(CliError::dataset(&path))
            })
            .collect::<Result<Vec<_>>>()?;
        evaluate_outputs(&video, &variants, &outs)
    })?;
    let report = build_report(&variants, &evaluations);
    write_report_dir(out, &report)?;
    Ok(report)
}

pub fn write_report_dir(out: &Path, report: &ReportFile) -> Result<()> {
    create_dir(out)?;
    write_with(&out.join("report.json"), |w| write_report(w, report))?;
    write_with(&out.join("summary.csv"), |w| write_summary_csv(w, &report.reports))?;
    write_with(&out.join("long.csv"), |w| write_long_csv(w, &report.reports))?;
    for r in &report.reports {
        info!(
            "{:>6} {:<16} acc {:.4}  switches {:>5}  AP {}",
            r.kind.map_or("all", |k| k.as_str()),
            r.variant,
            r.association_accuracy,
            r.id_switches,
            r.ap.map_or("-".to_string(), |a| format!("{a:.1}"))
        );
    }
    Ok(())
}

/// Window-size sweep: one full-model variant per configured window.
pub fn sweep(cfg: &ExperimentConfig, dataset: Option<&Path>, out: &Path, jobs: usize) -> Result<ReportFile> {
    let dataset = match dataset {
        Some(d) => d.to_path_buf(),
        None => {
            let d = out.join("dataset");
            generate(cfg, &d, jobs)?;
            d
        }
    };
    let variants: Vec<VariantConfig> = cfg
        .sweep_windows
        .iter()
        .map(|&w| VariantConfig::window(format!("window-{w}"), w))
        .collect();
    let outputs = out.join("outputs");
    track(&variants, &dataset, &outputs, jobs)?;
    evaluate(&dataset, &outputs, &out.join("report"), jobs)
}
