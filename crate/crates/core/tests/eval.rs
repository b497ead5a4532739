mod common;

use proptest::prelude::*;

use stblob::eval::{
    classify_frame, curve_mean, one_pass, overlap, precision_curve, sequence_metrics, start_offsets, success_curve,
    tre_harness, Classification,
};
use stblob::synth::{generate, OccluderSpec, SynthSpec};
use stblob::{PipelineConfig, Rect};

fn rect() -> impl Strategy<Value = Rect> {
    (0i32..80, 0i32..80, 1i32..40, 1i32..40).prop_map(|(x, y, w, h)| Rect::new(x, y, w, h))
}

fn frame_case() -> impl Strategy<Value = (Option<Rect>, Option<Rect>)> {
    (prop::option::of(rect()), prop::option::of(rect()))
}

proptest! {
    #[test]
    fn overlap_is_symmetric_and_bounded(a in rect(), b in rect()) {
        let s = overlap(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, overlap(&b, &a));
        prop_assert_eq!(overlap(&a, &a), 1.0);
    }

    #[test]
    fn curves_are_monotone(cases in prop::collection::vec(frame_case(), 1..40)) {
        let outcomes: Vec<_> = cases
            .iter()
            .enumerate()
            .map(|(f, (p, g))| classify_frame(f, p.as_ref(), g.as_ref()))
            .collect();
        let precision = precision_curve(&outcomes);
        let success = success_curve(&outcomes);
        prop_assert!(precision.windows(2).all(|w| w[0].1 <= w[1].1));
        prop_assert!(success.windows(2).all(|w| w[0].1 >= w[1].1));
        prop_assert!(precision.iter().chain(&success).all(|&(_, v)| (0.0..=1.0).contains(&v)));
        let m = sequence_metrics(&outcomes, None).unwrap();
        prop_assert!((m.auc - curve_mean(&success)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&m.auc));
    }

    #[test]
    fn frame_accounting(cases in prop::collection::vec(frame_case(), 1..40)) {
        let outcomes: Vec<_> = cases
            .iter()
            .enumerate()
            .map(|(f, (p, g))| classify_frame(f, p.as_ref(), g.as_ref()))
            .collect();
        let m = sequence_metrics(&outcomes, None).unwrap();
        prop_assert_eq!(m.n_td + m.n_fd + m.n_md + m.n_nogt, cases.len());
        let with_gt = cases.iter().filter(|(_, g)| g.is_some()).count();
        let fd_with_gt = outcomes
            .iter()
            .filter(|o| o.classification == Classification::FalseDetection && o.cle.is_some())
            .count();
        prop_assert_eq!(m.n_td + m.n_md + fd_with_gt, with_gt);
    }
}

#[test]
fn offsets_are_even_and_unique() {
    assert_eq!(start_offsets(60, 4), vec![0, 15, 30, 45]);
    assert_eq!(start_offsets(3, 5), vec![0, 1, 2]);
    assert_eq!(start_offsets(60, 1), vec![0]);
}

fn steady_spec() -> SynthSpec {
    let mut spec = SynthSpec::occlusion_scenario();
    spec.length = 40;
    spec.occluders = Vec::<OccluderSpec>::new();
    spec
}

#[test]
fn single_start_equals_one_pass() {
    let spec = steady_spec();
    let (frames, gt) = generate(&spec, 2).unwrap();
    let config = PipelineConfig::default();
    let ope = one_pass::<f64>(&frames, &gt, &config).unwrap();
    let tre = tre_harness::<f64>(&frames, &gt, &config, 1).unwrap();
    assert_eq!(tre.per_start.len(), 1);
    assert_eq!(tre.mean.td, ope.td);
    assert_eq!(tre.mean.auc, ope.auc);
}

#[test]
fn steady_target_tre_matches_one_pass() {
    let spec = steady_spec();
    let (frames, gt) = generate(&spec, 3).unwrap();
    let config = PipelineConfig::default();
    let ope = one_pass::<f64>(&frames, &gt, &config).unwrap();
    let tre = tre_harness::<f64>(&frames, &gt, &config, 4).unwrap();
    assert_eq!(tre.per_start.len(), 4);
    assert!((tre.mean.td - ope.td).abs() <= 2.0, "{} vs {}", tre.mean.td, ope.td);
}

#[test]
fn too_short_starts_are_skipped() {
    let mut spec = steady_spec();
    spec.length = 12;
    let (frames, gt) = generate(&spec, 4).unwrap();
    let tre = tre_harness::<f64>(&frames, &gt, &PipelineConfig::default(), 4).unwrap();
    assert_eq!(tre.skipped_starts, vec![6, 9]);
    assert_eq!(tre.per_start.len(), 2);
}

#[test]
fn no_frames_is_an_error() {
    assert!(sequence_metrics(&[], None).is_err());
}
