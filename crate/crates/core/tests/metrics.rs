use aga_core::dataset_io::RleMask;
use aga_core::metrics::{
    ap_thresholds, association_accuracy, count_id_switches, evaluate_video, spatiotemporal_ap,
    slot_tracks, SlotMatching,
};
use aga_core::scenario_gen::{generate_scenario, GroundTruth, ScenarioKind, ScenarioParams};
use aga_core::{FrameOutput, Prediction, TrackOutput};

/// Tracker output that reproduces the ground truth, optionally with the
/// slots of `pair` exchanged from frame `from` on.
fn oracle(gt: &GroundTruth, swap: Option<((usize, usize), usize)>) -> TrackOutput<f64> {
    let n = gt.n_instances();
    let frames = gt
        .frames
        .iter()
        .enumerate()
        .map(|(t, truth)| {
            let mut order: Vec<usize> = (0..n).collect();
            if let Some(((a, b), from)) = swap {
                if t >= from {
                    order.swap(a, b);
                }
            }
            let slots = order
                .iter()
                .map(|&k| Prediction {
                    detection: k,
                    class_id: 0,
                    confidence: 1.0,
                    mask: Some(truth[k].visible.clone()),
                    gt_id: Some(k as u32),
                })
                .collect();
            let mut assignment = vec![0; n];
            for (slot, &k) in order.iter().enumerate() {
                assignment[k] = slot;
            }
            FrameOutput {
                frame_index: t,
                assignment,
                slots,
                scores: None,
            }
        })
        .collect();
    TrackOutput { frames }
}

fn scenario(seed: u64) -> GroundTruth {
    generate_scenario("v", seed, ScenarioKind::Track, &ScenarioParams::default()).unwrap().1
}

#[test]
fn perfect_predictions() {
    for seed in 0..10 {
        let gt = scenario(seed);
        let pred = oracle(&gt, None);
        assert_eq!(count_id_switches(&pred, &gt).unwrap(), 0);
        assert_eq!(association_accuracy(&pred, &gt).unwrap(), 1.0);
        let ap = spatiotemporal_ap(&pred, &gt, &ap_thresholds()).unwrap();
        assert_eq!((ap.ap, ap.ap50, ap.ap75), (100.0, 100.0, 100.0));
        // Mask matching agrees with hidden ids on a perfect labeling.
        let by_mask = slot_tracks(&pred, &gt, SlotMatching::MaskIou).unwrap();
        assert_eq!(by_mask.id_switches(), 0);
    }
}

#[test]
fn permanent_swap_closed_form() {
    let gt = generate_scenario(
        "v",
        3,
        ScenarioKind::Track,
        &ScenarioParams {
            instance_count: Some(2),
            ..Default::default()
        },
    )
    .unwrap()
    .1;
    let pred = oracle(&gt, Some(((0, 1), 18)));
    assert_eq!(count_id_switches(&pred, &gt).unwrap(), 2);
    assert!((association_accuracy(&pred, &gt).unwrap() - 17.0 / 35.0).abs() < 1e-12);
}

#[test]
fn accuracy_one_iff_no_switches() {
    for seed in 0..10 {
        let gt = scenario(seed);
        for from in [1, 10, 35] {
            let pred = oracle(&gt, Some(((0, 1), from)));
            let acc = association_accuracy(&pred, &gt).unwrap();
            let sw = count_id_switches(&pred, &gt).unwrap();
            assert_eq!(acc == 1.0, sw == 0);
        }
    }
}

#[test]
fn ap_is_monotone_in_threshold() {
    for seed in 0..10 {
        let gt = scenario(seed);
        // Swapping halfway leaves tubes with intermediate IoU.
        let pred = oracle(&gt, Some(((0, 1), 12 + seed as usize)));
        let ap = spatiotemporal_ap(&pred, &gt, &ap_thresholds()).unwrap();
        for w in ap.per_threshold.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", ap.per_threshold);
        }
        assert!(ap.per_threshold.iter().all(|v| (0.0..=100.0).contains(v)));
    }
}

#[test]
fn ap_ignores_gt_labels() {
    for seed in 0..10 {
        let gt = scenario(seed);
        let pred = oracle(&gt, Some(((0, 1), 20)));
        let mut relabeled = gt.clone();
        for f in &mut relabeled.frames {
            f.reverse();
        }
        let a = spatiotemporal_ap(&pred, &gt, &ap_thresholds()).unwrap();
        let b = spatiotemporal_ap(&pred, &relabeled, &ap_thresholds()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn empty_predictions_score_zero() {
    let gt = scenario(1);
    let mut pred = oracle(&gt, None);
    for f in &mut pred.frames {
        for p in &mut f.slots {
            let m = p.mask.as_ref().unwrap();
            p.mask = Some(RleMask::empty(m.width, m.height));
        }
    }
    let ap = spatiotemporal_ap(&pred, &gt, &ap_thresholds()).unwrap();
    assert_eq!(ap.ap, 0.0);
}

#[test]
fn shape_mismatch_is_an_error() {
    let gt = scenario(1);
    let mut pred = oracle(&gt, None);
    pred.frames.pop();
    assert!(count_id_switches(&pred, &gt).is_err());
    assert!(evaluate_video("v", ScenarioKind::Track, "full", &pred, &gt).is_err());
}
