//! On-disk formats shared by the generator, the tracker and the evaluator.
//!
//! Scenario and track files are JSON lines: a header record followed by one
//! record per frame, numbered from 1. Every record is written with sorted
//! keys and shortest round-trip float formatting, so equal data always
//! serializes to identical bytes and every `f64` parses back exactly.

mod rle;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use rle::{
    rle_decode, rle_decode_bits, rle_encode, rle_encode_bits, RleMask, BINARIZE_THRESHOLD,
};

use crate::assignment::ScoreMatrix;
use crate::metrics::{OrderComparison, TrackingReport};
use crate::scenario_gen::{GroundTruth, InstanceFrame, Scenario, SimulatorParams};
use crate::similarity::EmbeddingSet;
use crate::tracker::{FrameDetections, FrameOutput, Prediction, TrackOutput, TrackerConfig};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: unsupported format_version {found} (this build reads {expected})")]
    Version {
        line: usize,
        found: String,
        expected: u32,
    },
    #[error("line {line}: expected a {expected:?} record, found {found:?}")]
    RecordType {
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error("line {line}: malformed record: {message} (last good line: {last_good_line})")]
    Json {
        line: usize,
        last_good_line: usize,
        message: String,
    },
    #[error("line {line}: expected frame {expected}, found frame {found}")]
    NonContiguous {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error(
        "file truncated after line {last_good_line}: header declares {expected} frames, found {found}"
    )]
    Truncated {
        last_good_line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        source: crate::Error,
    },
    #[error("empty file: no header record")]
    MissingHeader,
}

impl DatasetError {
    /// Short machine-readable class name.
    pub fn class(&self) -> &'static str {
        match self {
            DatasetError::Io(_) => "io",
            DatasetError::Version { .. } => "version",
            DatasetError::RecordType { .. } => "record_type",
            DatasetError::Json { .. } => "malformed",
            DatasetError::NonContiguous { .. } => "non_contiguous",
            DatasetError::Truncated { .. } => "truncated",
            DatasetError::Invalid { .. } => "invalid",
            DatasetError::MissingHeader => "missing_header",
        }
    }
}

pub type IoResult<T> = std::result::Result<T, DatasetError>;

/// Serializes with sorted keys on a single line.
pub fn canonical_json<T: Serialize>(value: &T) -> IoResult<String> {
    let v = serde_json::to_value(value).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    Ok(v.to_string())
}

trait Framed {
    fn frame_number(&self) -> usize;
}

trait Headed {
    const RECORD: &'static str;
    fn declared_frames(&self) -> usize;
}

fn write_jsonl<H: Serialize, F: Serialize>(
    mut w: impl Write,
    header: &H,
    frames: &[F],
) -> IoResult<()> {
    writeln!(w, "{}", canonical_json(header)?)?;
    for f in frames {
        writeln!(w, "{}", canonical_json(f)?)?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<H, F>(r: impl BufRead) -> IoResult<(H, Vec<(usize, F)>)>
where
    H: DeserializeOwned + Headed,
    F: DeserializeOwned + Framed,
{
    let mut header: Option<H> = None;
    let mut frames: Vec<(usize, F)> = Vec::new();
    let mut last_good = 0usize;
    for (i, line) in r.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |e: serde_json::Error| DatasetError::Json {
            line: line_no,
            last_good_line: last_good,
            message: e.to_string(),
        };
        let value: Value = serde_json::from_str(&line).map_err(malformed)?;
        match &header {
            None => {
                check_header(&value, line_no, H::RECORD)?;
                header = Some(serde_json::from_value(value).map_err(malformed)?);
            }
            Some(_) => {
                let rec: F = serde_json::from_value(value).map_err(malformed)?;
                let expected = frames.len() + 1;
                if rec.frame_number() != expected {
                    return Err(DatasetError::NonContiguous {
                        line: line_no,
                        expected,
                        found: rec.frame_number(),
                    });
                }
                frames.push((line_no, rec));
            }
        }
        last_good = line_no;
    }
    let header = header.ok_or(DatasetError::MissingHeader)?;
    if frames.len() != header.declared_frames() {
        return Err(DatasetError::Truncated {
            last_good_line: last_good,
            expected: header.declared_frames(),
            found: frames.len(),
        });
    }
    Ok((header, frames))
}

fn check_header(value: &Value, line: usize, record: &'static str) -> IoResult<()> {
    let version = value.get("format_version");
    if version.and_then(Value::as_u64) != Some(FORMAT_VERSION as u64) {
        return Err(DatasetError::Version {
            line,
            found: version.map_or_else(|| "<missing>".to_string(), Value::to_string),
            expected: FORMAT_VERSION,
        });
    }
    let found = value.get("record").and_then(Value::as_str).unwrap_or("");
    if found != record {
        return Err(DatasetError::RecordType {
            line,
            expected: record,
            found: found.to_string(),
        });
    }
    Ok(())
}

fn invalid_at(line: usize) -> impl Fn(crate::Error) -> DatasetError {
    move |source| DatasetError::Invalid { line, source }
}

// ---------------------------------------------------------------- scenarios

/// Everything stored in a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBundle {
    pub scenario: Scenario,
    pub simulator: SimulatorParams,
    pub ground_truth: GroundTruth,
    pub detections: Vec<FrameDetections<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioHeader {
    format_version: u32,
    record: String,
    #[serde(flatten)]
    scenario: Scenario,
    simulator: SimulatorParams,
}

impl Headed for ScenarioHeader {
    const RECORD: &'static str = "scenario";
    fn declared_frames(&self) -> usize {
        self.scenario.frames
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: u32,
    center: [f64; 2],
    visibility: f64,
    amodal_rle: RleMask,
    mask_rle: RleMask,
}

#[derive(Serialize, Deserialize)]
struct DetectionRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gt_id: Option<u32>,
    class_id: u32,
    confidence: f64,
    e_obj: Vec<f64>,
    e_app: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_rle: Option<RleMask>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFrameRecord {
    frame_index: usize,
    instances: Vec<InstanceRecord>,
    detections: Vec<DetectionRecord>,
}

impl Framed for ScenarioFrameRecord {
    fn frame_number(&self) -> usize {
        self.frame_index
    }
}

pub fn write_scenario(w: impl Write, b: &ScenarioBundle) -> IoResult<()> {
    if b.ground_truth.frames.len() != b.scenario.frames || b.detections.len() != b.scenario.frames {
        return Err(DatasetError::Invalid {
            line: 0,
            source: crate::Error::Shape("bundle frame counts disagree".into()),
        });
    }
    let header = ScenarioHeader {
        format_version: FORMAT_VERSION,
        record: ScenarioHeader::RECORD.into(),
        scenario: b.scenario.clone(),
        simulator: b.simulator.clone(),
    };
    let frames: Vec<ScenarioFrameRecord> = b
        .ground_truth
        .frames
        .iter()
        .zip(&b.detections)
        .enumerate()
        .map(|(t, (truth, det))| ScenarioFrameRecord {
            frame_index: t + 1,
            instances: truth
                .iter()
                .enumerate()
                .map(|(k, f)| InstanceRecord {
                    id: k as u32,
                    center: [f.center.x, f.center.y],
                    visibility: f.visibility,
                    amodal_rle: f.amodal.clone(),
                    mask_rle: f.visible.clone(),
                })
                .collect(),
            detections: (0..det.n())
                .map(|d| DetectionRecord {
                    gt_id: det.gt_ids.as_ref().map(|g| g[d]),
                    class_id: det.class_ids[d],
                    confidence: det.conf[d],
                    e_obj: det.e_obj.row(d).to_vec(),
                    e_app: det.e_app.row(d).to_vec(),
                    mask_rle: det.masks.as_ref().map(|m| m[d].clone()),
                })
                .collect(),
        })
        .collect();
    write_jsonl(w, &header, &frames)
}

pub fn read_scenario(r: impl BufRead) -> IoResult<ScenarioBundle> {
    let (header, records) = read_jsonl::<ScenarioHeader, ScenarioFrameRecord>(r)?;
    header.scenario.validate().map_err(invalid_at(1))?;
    let n = header.scenario.instances.len();
    let mut gt_frames = Vec::with_capacity(records.len());
    let mut detections = Vec::with_capacity(records.len());
    for (line, rec) in records {
        let bad = invalid_at(line);
        if rec.instances.len() != n || rec.detections.len() != n {
            return Err(bad(crate::Error::Shape(format!(
                "{} instances and {} detections, scenario has {n}",
                rec.instances.len(),
                rec.detections.len()
            ))));
        }
        let mut truth = Vec::with_capacity(n);
        for (k, inst) in rec.instances.into_iter().enumerate() {
            if inst.id as usize != k {
                return Err(bad(crate::Error::Malformed(format!(
                    "instance record {k} has id {}",
                    inst.id
                ))));
            }
            inst.amodal_rle.validate().map_err(&bad)?;
            inst.mask_rle.validate().map_err(&bad)?;
            truth.push(InstanceFrame {
                center: crate::scenario_gen::Point::new(inst.center[0], inst.center[1]),
                visibility: inst.visibility,
                amodal: inst.amodal_rle,
                visible: inst.mask_rle,
            });
        }
        gt_frames.push(truth);

        let dets = rec.detections;
        let e_obj: Vec<&[f64]> = dets.iter().map(|d| d.e_obj.as_slice()).collect();
        let e_app: Vec<&[f64]> = dets.iter().map(|d| d.e_app.as_slice()).collect();
        let all_or_none = |count: usize, what: &str| -> IoResult<bool> {
            if count == 0 || count == n {
                Ok(count == n)
            } else {
                Err(bad(crate::Error::Malformed(format!(
                    "{what} present on {count} of {n} detections"
                ))))
            }
        };
        let has_ids = all_or_none(dets.iter().filter(|d| d.gt_id.is_some()).count(), "gt_id")?;
        let has_masks =
            all_or_none(dets.iter().filter(|d| d.mask_rle.is_some()).count(), "mask_rle")?;
        let frame = FrameDetections {
            frame_index: rec.frame_index - 1,
            e_obj: EmbeddingSet::from_rows(&e_obj).map_err(&bad)?,
            e_app: EmbeddingSet::from_rows(&e_app).map_err(&bad)?,
            conf: dets.iter().map(|d| d.confidence).collect(),
            class_ids: dets.iter().map(|d| d.class_id).collect(),
            masks: has_masks.then(|| dets.iter().filter_map(|d| d.mask_rle.clone()).collect()),
            gt_ids: has_ids.then(|| dets.iter().filter_map(|d| d.gt_id).collect()),
        };
        frame.validate().map_err(&bad)?;
        detections.push(frame);
    }
    Ok(ScenarioBundle {
        scenario: header.scenario,
        simulator: header.simulator,
        ground_truth: GroundTruth { frames: gt_frames },
        detections,
    })
}

// ------------------------------------------------------------ track outputs

/// A tracker run over one video.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackBundle {
    pub video_id: String,
    pub variant: String,
    pub config: TrackerConfig<f64>,
    pub output: TrackOutput<f64>,
}

#[derive(Serialize, Deserialize)]
struct TrackHeader {
    format_version: u32,
    record: String,
    video_id: String,
    variant: String,
    frames: usize,
    n_slots: usize,
    config: TrackerConfig<f64>,
}

impl Headed for TrackHeader {
    const RECORD: &'static str = "track";
    fn declared_frames(&self) -> usize {
        self.frames
    }
}

#[derive(Serialize, Deserialize)]
struct TrackFrameRecord {
    frame_index: usize,
    assignment: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<Vec<f64>>>,
    slots: Vec<Prediction<f64>>,
}

impl Framed for TrackFrameRecord {
    fn frame_number(&self) -> usize {
        self.frame_index
    }
}

pub fn write_track(w: impl Write, b: &TrackBundle) -> IoResult<()> {
    let header = TrackHeader {
        format_version: FORMAT_VERSION,
        record: TrackHeader::RECORD.into(),
        video_id: b.video_id.clone(),
        variant: b.variant.clone(),
        frames: b.output.frames.len(),
        n_slots: b.output.n_slots(),
        config: b.config,
    };
    let frames: Vec<TrackFrameRecord> = b
        .output
        .frames
        .iter()
        .enumerate()
        .map(|(t, f)| TrackFrameRecord {
            frame_index: t + 1,
            assignment: f.assignment.clone(),
            scores: f
                .scores
                .as_ref()
                .map(|s| s.rows().map(<[f64]>::to_vec).collect()),
            slots: f.slots.clone(),
        })
        .collect();
    write_jsonl(w, &header, &frames)
}

pub fn read_track(r: impl BufRead) -> IoResult<TrackBundle> {
    let (header, records) = read_jsonl::<TrackHeader, TrackFrameRecord>(r)?;
    let mut frames = Vec::with_capacity(records.len());
    for (line, rec) in records {
        let bad = invalid_at(line);
        if rec.slots.len() != header.n_slots {
            return Err(bad(crate::Error::Shape(format!(
                "{} slots, header declares {}",
                rec.slots.len(),
                header.n_slots
            ))));
        }
        crate::assignment::check_permutation(&rec.assignment, header.n_slots).map_err(&bad)?;
        let scores = rec
            .scores
            .map(|rows| ScoreMatrix::from_rows(&rows))
            .transpose()
            .map_err(&bad)?;
        frames.push(FrameOutput {
            frame_index: rec.frame_index - 1,
            assignment: rec.assignment,
            slots: rec.slots,
            scores,
        });
    }
    Ok(TrackBundle {
        video_id: header.video_id,
        variant: header.variant,
        config: header.config,
        output: TrackOutput { frames },
    })
}

// ------------------------------------------------------------------ reports

/// Aggregate reports plus free-form notes, as written by the evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    pub reports: Vec<TrackingReport>,
    #[serde(default)]
    pub order_comparisons: Vec<OrderComparison>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ReportFile {
    pub fn new(reports: Vec<TrackingReport>, notes: Vec<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            reports,
            order_comparisons: Vec::new(),
            notes,
        }
    }
}

pub fn write_report(mut w: impl Write, report: &ReportFile) -> IoResult<()> {
    let v = serde_json::to_value(report).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let text = serde_json::to_string_pretty(&v).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    writeln!(w, "{text}")?;
    w.flush()?;
    Ok(())
}

pub fn read_report(mut r: impl io::Read) -> IoResult<ReportFile> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| DatasetError::Json {
        line: e.line(),
        last_good_line: e.line().saturating_sub(1),
        message: e.to_string(),
    })?;
    if value.get("format_version").and_then(Value::as_u64) != Some(FORMAT_VERSION as u64) {
        return Err(DatasetError::Version {
            line: 1,
            found: value
                .get("format_version")
                .map_or_else(|| "<missing>".to_string(), Value::to_string),
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| DatasetError::Json {
        line: 1,
        last_good_line: 0,
        message: e.to_string(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per aggregate report.
pub fn write_summary_csv(mut w: impl Write, reports: &[TrackingReport]) -> IoResult<()> {
    writeln!(
        w,
        "variant,kind,videos,id_switches,association_accuracy,ap,ap50,ap75"
    )?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.variant,
            r.kind.map_or("all", |k| k.as_str()),
            r.videos,
            r.id_switches,
            r.association_accuracy,
            opt(r.ap),
            opt(r.ap50),
            opt(r.ap75)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per (variant, video, metric).
pub fn write_long_csv(mut w: impl Write, reports: &[TrackingReport]) -> IoResult<()> {
    writeln!(w, "variant,kind,video_id,metric,value")?;
    for r in reports {
        for v in &r.per_video {
            let mut row = |metric: &str, value: String| {
                writeln!(w, "{},{},{},{metric},{value}", v.variant, v.kind, v.video_id)
            };
            row("id_switches", v.id_switches.to_string())?;
            row("association_accuracy", v.association_accuracy.to_string())?;
            if let Some(ap) = &v.ap {
                row("ap", ap.ap.to_string())?;
                row("ap50", ap.ap50.to_string())?;
                row("ap75", ap.ap75.to_string())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

// ------------------------------------------------------------ path helpers

pub fn write_scenario_file(path: impl AsRef<Path>, b: &ScenarioBundle) -> IoResult<()> {
    write_scenario(BufWriter::new(File::create(path)?), b)
}

pub fn read_scenario_file(path: impl AsRef<Path>) -> IoResult<ScenarioBundle> {
    read_scenario(BufReader::new(File::open(path)?))
}

pub fn write_track_file(path: impl AsRef<Path>, b: &TrackBundle) -> IoResult<()> {
    write_track(BufWriter::new(File::create(path)?), b)
}

pub fn read_track_file(path: impl AsRef<Path>) -> IoResult<TrackBundle> {
    read_track(BufReader::new(File::open(path)?))
}
