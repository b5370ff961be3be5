use std::io::Cursor;

use aga_core::dataset_io::{
    read_report, read_scenario, read_track, rle_decode_bits, rle_encode_bits, write_long_csv,
    write_report, write_scenario, write_summary_csv, write_track, DatasetError, ReportFile,
    ScenarioBundle, TrackBundle,
};
use aga_core::metrics::{aggregate, evaluate_video};
use aga_core::scenario_gen::{
    generate_scenario, simulate_detections, ScenarioKind, ScenarioParams, SimulatorParams,
};
use aga_core::{track_video, TrackerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bundle(seed: u64, kind: ScenarioKind, params: &ScenarioParams, masks: bool) -> ScenarioBundle {
    let (scenario, ground_truth) = generate_scenario(format!("{}-{seed:04}", kind.as_str()), seed, kind, params).unwrap();
    let simulator = SimulatorParams {
        include_masks: masks,
        ..Default::default()
    };
    let detections = simulate_detections(&scenario, &ground_truth, &simulator).unwrap();
    ScenarioBundle {
        scenario,
        simulator,
        ground_truth,
        detections,
    }
}

fn to_bytes(b: &ScenarioBundle) -> Vec<u8> {
    let mut out = Vec::new();
    write_scenario(&mut out, b).unwrap();
    out
}

fn tiny() -> ScenarioBundle {
    let params = ScenarioParams {
        frames: 4,
        instance_count: Some(2),
        resolutions: vec![600],
        raster_scale: 0.02,
        embedding_dim: 4,
        ..Default::default()
    };
    bundle(1, ScenarioKind::Swap, &params, true)
}

#[test]
fn scenario_roundtrip() {
    for (seed, masks) in [(1, true), (2, false), (3, true)] {
        for kind in [ScenarioKind::Track, ScenarioKind::Swap] {
            let b = bundle(seed, kind, &ScenarioParams::default(), masks);
            let bytes = to_bytes(&b);
            let back = read_scenario(Cursor::new(&bytes)).unwrap();
            assert_eq!(back, b);
            assert_eq!(to_bytes(&back), bytes);
        }
    }
}

#[test]
fn track_and_report_roundtrip() {
    let b = bundle(5, ScenarioKind::Swap, &ScenarioParams::default(), true);
    let cfg = TrackerConfig::default();
    let output = track_video(&b.detections, &cfg).unwrap();
    let tb = TrackBundle {
        video_id: b.scenario.video_id.clone(),
        variant: "full".into(),
        config: cfg,
        output,
    };
    let mut bytes = Vec::new();
    write_track(&mut bytes, &tb).unwrap();
    assert_eq!(read_track(Cursor::new(&bytes)).unwrap(), tb);

    let video = evaluate_video(&tb.video_id, b.scenario.kind, &tb.variant, &tb.output, &b.ground_truth).unwrap();
    let report = ReportFile::new(vec![aggregate("full", Some(ScenarioKind::Swap), vec![video])], vec!["note".into()]);
    let mut bytes = Vec::new();
    write_report(&mut bytes, &report).unwrap();
    assert_eq!(read_report(Cursor::new(&bytes)).unwrap(), report);

    let mut csv = Vec::new();
    write_summary_csv(&mut csv, &report.reports).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("variant,kind,videos,"));
    assert_eq!(csv.lines().count(), 2);
    let mut long = Vec::new();
    write_long_csv(&mut long, &report.reports).unwrap();
    assert_eq!(String::from_utf8(long).unwrap().lines().count(), 1 + 5);
}

#[test]
fn golden_fixture() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/tiny_swap.jsonl");
    let bytes = to_bytes(&tiny());
    if std::env::var_os("AGA_UPDATE_GOLDEN").is_some() {
        std::fs::write(path, &bytes).unwrap();
    }
    let golden = std::fs::read(path).expect("golden fixture");
    assert_eq!(String::from_utf8(bytes).unwrap(), String::from_utf8(golden.clone()).unwrap());
    assert_eq!(read_scenario(Cursor::new(golden)).unwrap(), tiny());
}

#[test]
fn unknown_version_is_rejected() {
    let text = String::from_utf8(to_bytes(&tiny())).unwrap().replacen("\"format_version\":1", "\"format_version\":2", 1);
    match read_scenario(Cursor::new(text)) {
        Err(DatasetError::Version { line: 1, found, .. }) => assert_eq!(found, "2"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_file_names_last_good_line() {
    let text = String::from_utf8(to_bytes(&tiny())).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    // Whole records dropped.
    let cut = lines[..3].join("\n");
    match read_scenario(Cursor::new(cut)) {
        Err(DatasetError::Truncated { last_good_line: 3, expected: 4, found: 2 }) => {}
        other => panic!("{other:?}"),
    }
    // Cut mid-record.
    let mut cut = lines[..4].join("\n");
    cut.push('\n');
    cut.push_str(&lines[4][..lines[4].len() / 2]);
    match read_scenario(Cursor::new(cut)) {
        Err(DatasetError::Json { line: 5, last_good_line: 4, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn non_contiguous_frames_are_rejected() {
    let text = String::from_utf8(to_bytes(&tiny())).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines.swap(2, 3);
    match read_scenario(Cursor::new(lines.join("\n"))) {
        Err(DatasetError::NonContiguous { line: 3, expected: 2, found: 3 }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_content_is_rejected() {
    let text = String::from_utf8(to_bytes(&tiny())).unwrap();
    // Confidence out of range on frame 2.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let v: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
    let mut v = v;
    v["detections"][0]["confidence"] = serde_json::json!(3.5);
    lines[2] = v.to_string();
    match read_scenario(Cursor::new(lines.join("\n"))) {
        Err(DatasetError::Invalid { line: 3, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert!(matches!(read_scenario(Cursor::new("")), Err(DatasetError::MissingHeader)));
    assert!(matches!(read_report(Cursor::new("{\"reports\":[]}")), Err(DatasetError::Version { .. })));
}

#[test]
fn rle_roundtrip_on_random_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let (w, h) = (rng.random_range(1..40u32), rng.random_range(1..40u32));
        let density: f64 = rng.random();
        let bits: Vec<bool> = (0..w * h).map(|_| rng.random_bool(density)).collect();
        let r = rle_encode_bits(w, h, &bits);
        r.validate().unwrap();
        assert_eq!(rle_decode_bits(&r).unwrap(), bits);
    }
}
