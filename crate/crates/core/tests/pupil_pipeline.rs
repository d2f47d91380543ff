mod common;

use std::f64::consts::PI;

use common::{events_of, four_class_case, par_scenario, score, twenty_events};
use parbci::pupil::{
    classify_par_command, condition, detect_par_events, detect_pupil, ConditionConfig,
    DetectorConfig, DetectorEvent, EyeFrame, FitConfig, PupilDetector, PupilEvent, PupilPipeline,
    PupilSample,
};
use parbci::sim::{render_eye, Blink, EyeGeometry, ParSpec};
use proptest::prelude::*;

fn frame_area(g: &EyeGeometry) -> f64 {
    let f = render_eye(200, 150, g, 0.0);
    let (s, _) = detect_pupil(&f, &FitConfig::default(), None);
    assert!(s.valid);
    s.area
}

#[test]
fn disc_area_within_two_percent() {
    let g = EyeGeometry {
        center: (97.3, 71.8),
        semi_axes: (40.0, 40.0),
        angle: 0.0,
    };
    let a = frame_area(&g);
    let truth = PI * 1600.0;
    assert!((a / truth - 1.0).abs() < 0.02, "{a} vs {truth}");
}

#[test]
fn ellipse_area_within_two_percent() {
    for angle in [0.0, 0.4, 1.1, 2.0] {
        let g = EyeGeometry {
            center: (101.0, 74.5),
            semi_axes: (30.0, 20.0),
            angle,
        };
        let a = frame_area(&g);
        assert!((a / (PI * 600.0) - 1.0).abs() < 0.02, "angle {angle}: {a}");
    }
}

#[test]
fn blank_frame_is_invalid() {
    let f = EyeFrame::new(64, 48, vec![255; 64 * 48], 0.0).unwrap();
    assert!(!detect_pupil(&f, &FitConfig::default(), None).0.valid);
}

#[test]
fn tracked_frames_follow_the_trace() {
    let s = par_scenario(
        4,
        10.0,
        vec![ParSpec {
            onset: 4.0,
            duration: 1.2,
            depth: 0.3,
        }],
    );
    let trace = s.gen_pupil().unwrap();
    let frames = s.render_frames(&trace, 3.0);
    let mut det = PupilDetector::new(FitConfig::default());
    let measured: Vec<PupilSample> = frames.iter().map(|f| det.push(f)).collect();
    for (m, t) in measured.iter().zip(&trace) {
        assert!(m.valid);
        assert!(
            (m.area / t.area - 1.0).abs() < 0.02,
            "t={}: {} vs {}",
            t.timestamp,
            m.area,
            t.area
        );
    }
    let (ev, truth) = (events_of(&measured), events_of(&trace));
    assert_eq!(ev.len(), 1);
    assert_eq!(truth.len(), 1);
    assert!(
        (ev[0].onset - truth[0].onset).abs() <= 2.0 / 60.0,
        "{ev:?} vs {truth:?}"
    );
    assert!(
        (ev[0].duration - truth[0].duration).abs() <= 2.0 / 60.0,
        "{ev:?} vs {truth:?}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn area_ignores_intensity_offset(offset in -30i32..=30, r in 15.0f64..45.0, cx in 80.0f64..120.0) {
        let g = EyeGeometry { center: (cx, 75.0), semi_axes: (r, 0.8 * r), angle: 0.3 };
        let f = render_eye(200, 150, &g, 0.0);
        let shifted = EyeFrame::new(
            f.width,
            f.height,
            f.pixels.iter().map(|&p| (p as i32 + offset).clamp(0, 255) as u8).collect(),
            0.0,
        )
        .unwrap();
        let cfg = FitConfig::default();
        let (a, _) = detect_pupil(&f, &cfg, None);
        let (b, _) = detect_pupil(&shifted, &cfg, None);
        prop_assert!(a.valid && b.valid);
        prop_assert!((b.area / a.area - 1.0).abs() < 0.02);
    }

    #[test]
    fn events_ignore_area_scale(seed in any::<u64>(), k in 0.01f64..100.0) {
        let s = par_scenario(seed, 20.0, vec![
            ParSpec { onset: 6.0, duration: 0.8, depth: 0.3 },
            ParSpec { onset: 12.0, duration: 1.6, depth: 0.25 },
        ]);
        let trace = s.gen_pupil().unwrap();
        let scaled: Vec<PupilSample> = trace.iter().map(|x| PupilSample { area: x.area * k, ..*x }).collect();
        let (a, b) = (events_of(&trace), events_of(&scaled));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.onset - y.onset).abs() < 1e-9 && (x.duration - y.duration).abs() < 1e-9);
        }
    }

    #[test]
    fn events_are_ordered_and_disjoint(seed in any::<u64>(), noise in 0.0f64..0.05, gaps in prop::collection::vec(1.0f64..4.0, 1..8)) {
        let mut schedule = Vec::new();
        let mut t = 2.0;
        for g in gaps {
            schedule.push(ParSpec { onset: t, duration: g / 2.0, depth: 0.3 });
            t += g / 2.0 + g;
        }
        let mut s = par_scenario(seed, t + 2.0, schedule);
        s.pupil.noise_level = noise;
        let ev = events_of(&s.gen_pupil().unwrap());
        for w in ev.windows(2) {
            prop_assert!(w[0].onset < w[1].onset);
            prop_assert!(w[0].onset + w[0].duration <= w[1].onset);
        }
        for e in &ev {
            prop_assert!(e.duration > 0.0 && e.depth >= 0.15);
        }
    }
}

#[test]
fn hippus_alone_stays_in_band_without_events() {
    for seed in 0..10 {
        let s = par_scenario(seed, 60.0, Vec::new());
        let trace = s.gen_pupil().unwrap();
        let n = condition(&trace, &ConditionConfig::default()).unwrap();
        for x in n
            .iter()
            .filter(|x| x.timestamp >= ConditionConfig::default().baseline_window)
        {
            let v = x.value.unwrap();
            assert!(
                (0.93..=1.07).contains(&v),
                "seed {seed} t={}: {v}",
                x.timestamp
            );
        }
        assert!(detect_par_events(&n, &DetectorConfig::default())
            .unwrap()
            .is_empty());
    }
}

fn single_event(seed: u64) -> PupilEvent {
    let s = par_scenario(
        seed,
        12.0,
        vec![ParSpec {
            onset: 5.0,
            duration: 1.2,
            depth: 0.3,
        }],
    );
    let ev = events_of(&s.gen_pupil().unwrap());
    assert_eq!(ev.len(), 1, "seed {seed}: {ev:?}");
    ev[0]
}

#[test]
fn single_constriction_matches_schedule() {
    let e = single_event(0);
    assert!((e.onset - 5.0).abs() <= 0.1, "{e:?}");
    assert!((e.duration - 1.2).abs() <= 0.1, "{e:?}");
    assert!((e.depth - 0.3).abs() <= 0.06, "{e:?}");
}

/// Closing at θ_off rather than θ_on lengthens events by about 0.05 s, and
/// the hippus phase at the edges spreads that by several hundredths.
#[test]
fn constriction_timing_across_seeds() {
    let events: Vec<PupilEvent> = (0..100).map(single_event).collect();
    let mut bias = 0.0;
    for (seed, e) in events.iter().enumerate() {
        assert!((e.onset - 5.0).abs() <= 0.1, "seed {seed}: {e:?}");
        assert!(
            (-0.1..=0.2).contains(&(e.duration - 1.2)),
            "seed {seed}: {e:?}"
        );
        bias += (e.duration - 1.2) / events.len() as f64;
    }
    assert!(bias.abs() <= 0.1, "mean duration error {bias}");
}

#[test]
fn short_dip_is_filtered_by_hold() {
    let trace: Vec<PupilSample> = (0..600)
        .map(|i| {
            let t = i as f64 / 60.0;
            PupilSample::valid(
                t,
                if (6.0..6.1).contains(&t) {
                    500.0
                } else {
                    1000.0
                },
            )
        })
        .collect();
    let cfg = ConditionConfig {
        smoothing: 0.0,
        ..Default::default()
    };
    let n = condition(&trace, &cfg).unwrap();
    assert!(n.iter().any(|x| x.value.unwrap() < 0.85));
    assert!(detect_par_events(&n, &DetectorConfig::default())
        .unwrap()
        .is_empty());
}

#[test]
fn short_blink_is_bridged() {
    let mut s = par_scenario(1, 10.0, Vec::new());
    s.pupil.blinks = vec![Blink {
        start: 4.0,
        duration: 0.2,
    }];
    let n = condition(&s.gen_pupil().unwrap(), &ConditionConfig::default()).unwrap();
    assert!(n.iter().all(|x| x.value.is_some()));
}

#[test]
fn streaming_pipeline_matches_batch() {
    let mut s = par_scenario(
        7,
        30.0,
        vec![
            ParSpec {
                onset: 6.0,
                duration: 0.7,
                depth: 0.3,
            },
            ParSpec {
                onset: 15.0,
                duration: 1.5,
                depth: 0.3,
            },
        ],
    );
    s.pupil.blinks = vec![
        Blink {
            start: 10.0,
            duration: 0.25,
        },
        Blink {
            start: 20.0,
            duration: 1.0,
        },
    ];
    let trace = s.gen_pupil().unwrap();
    let mut p = PupilPipeline::new(ConditionConfig::default(), DetectorConfig::default()).unwrap();
    let mut normalized = Vec::new();
    let mut closed = Vec::new();
    let mut outputs: Vec<_> = trace.iter().map(|x| p.push(*x).unwrap()).collect();
    outputs.push(p.finish());
    for o in outputs {
        normalized.extend(o.normalized);
        closed.extend(o.events.into_iter().filter_map(|e| match e {
            DetectorEvent::Closed(ev) => Some(ev),
            DetectorEvent::Opened { .. } => None,
        }));
    }
    assert_eq!(
        normalized,
        condition(&trace, &ConditionConfig::default()).unwrap()
    );
    assert_eq!(closed, events_of(&trace));
}

#[test]
fn clean_schedule_fully_detected() {
    let schedule = twenty_events();
    for seed in 0..5 {
        let mut s = par_scenario(seed, 125.0, schedule.clone());
        s.pupil.noise_level = 0.0;
        let ev = events_of(&s.gen_pupil().unwrap());
        assert_eq!(score(&schedule, &ev), (20, 0), "seed {seed}: {ev:?}");
    }
}

#[test]
fn default_noise_detection_rate() {
    let schedule = twenty_events();
    for seed in 0..5 {
        let s = par_scenario(seed, 125.0, schedule.clone());
        let (hits, _) = score(&schedule, &events_of(&s.gen_pupil().unwrap()));
        assert!(hits >= 19, "seed {seed}: {hits}/20");
    }
}

#[test]
fn four_class_mapping_on_clean_schedule() {
    let (s, prompts, expected) = four_class_case();
    let ev = events_of(&s.gen_pupil().unwrap());
    let got: Vec<Option<u8>> = ev
        .iter()
        .map(|e| classify_par_command(e, &prompts))
        .collect();
    assert_eq!(got, expected.into_iter().map(Some).collect::<Vec<_>>());
}
