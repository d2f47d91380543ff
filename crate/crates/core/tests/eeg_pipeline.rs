mod common;

use common::*;
use nalgebra::DMatrix;
use parbci::eeg::{
    bandpass, covariance, covariance_of, epoch_stream, BandpassFilter, EegStream, Epocher,
};
use parbci::label::{label, TaskLabel};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn sine_stream(fs: f64, freq: f64, seconds: f64) -> EegStream {
    let n = (fs * seconds) as usize;
    let x = DMatrix::from_fn(1, n, |_, j| {
        (2.0 * std::f64::consts::PI * freq * j as f64 / fs).sin()
    });
    EegStream::new(fs, vec!["c".into()], x, None).unwrap()
}

/// Peak amplitude over the stream with the first and last second discarded.
fn steady_amplitude(s: &EegStream) -> f64 {
    let skip = s.fs as usize;
    s.samples
        .row(0)
        .iter()
        .skip(skip)
        .take(s.len() - 2 * skip)
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn passband_and_stopband_match_analytic_response() {
    for fs in [256.0, 250.0] {
        let oracle_pass = butterworth_bandpass_power_gain(20.0, fs, 8.0, 30.0, 4);
        let oracle_stop = butterworth_bandpass_power_gain(50.0, fs, 8.0, 30.0, 4);
        assert!(oracle_pass >= 0.95);
        assert!(10.0 * oracle_stop.log10() <= -20.0);

        let pass = steady_amplitude(&bandpass(&sine_stream(fs, 20.0, 6.0), 8.0, 30.0, 4).unwrap());
        let stop = steady_amplitude(&bandpass(&sine_stream(fs, 50.0, 6.0), 8.0, 30.0, 4).unwrap());
        assert!(pass >= 0.95, "20 Hz amplitude ratio {pass}");
        assert!(
            (pass - oracle_pass).abs() < 2e-3,
            "{pass} vs analytic {oracle_pass}"
        );
        assert!(
            20.0 * stop.log10() <= -20.0,
            "50 Hz attenuation {} dB",
            20.0 * stop.log10()
        );
        assert!((stop - oracle_stop).abs() < 1e-3);
    }
}

#[test]
fn design_matches_closed_form_magnitude() {
    let f = BandpassFilter::butterworth(256.0, 8.0, 30.0, 4).unwrap();
    for hz in [1.0, 5.0, 8.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 100.0] {
        let expected = butterworth_bandpass_power_gain(hz, 256.0, 8.0, 30.0, 4).sqrt();
        assert!(
            (f.magnitude(hz) - expected).abs() < 1e-9,
            "{hz} Hz: {} vs {expected}",
            f.magnitude(hz)
        );
    }
}

/// Denominators of `scipy.signal.butter(4, [8, 30], 'bandpass', fs=256, output='sos')`.
#[test]
fn denominators_match_reference_design() {
    let reference: [[f64; 2]; 4] = [
        [-1.2855205212201488, 0.5026672111047097],
        [-1.6459797600249935, 0.7081438593062901],
        [-1.3098247812867185, 0.7365682500158628],
        [-1.8722787344364682, 0.9112648144065534],
    ];
    let f = BandpassFilter::butterworth(256.0, 8.0, 30.0, 4).unwrap();
    let mut ours: Vec<[f64; 2]> = f.sections.iter().map(|s| [s.a[1], s.a[2]]).collect();
    let mut theirs = reference.to_vec();
    ours.sort_by(|x, y| x[1].total_cmp(&y[1]));
    theirs.sort_by(|x, y| x[1].total_cmp(&y[1]));
    for (o, t) in ours.iter().zip(&theirs) {
        assert!(
            (o[0] - t[0]).abs() < 1e-6 && (o[1] - t[1]).abs() < 1e-6,
            "{o:?} vs {t:?}"
        );
    }
}

/// Output of `scipy.signal.sosfiltfilt` with the reference design on
/// `sin(2π·20t) + 0.5·sin(2π·50t) + 0.1·t`, fs = 256, 512 samples.
#[test]
fn filtfilt_matches_reference_output() {
    let fs = 256.0;
    let x: Vec<f64> = (0..512)
        .map(|n| {
            let t = n as f64 / fs;
            (2.0 * std::f64::consts::PI * 20.0 * t).sin()
                + 0.5 * (2.0 * std::f64::consts::PI * 50.0 * t).sin()
                + 0.1 * t
        })
        .collect();
    let y = BandpassFilter::butterworth(fs, 8.0, 30.0, 4)
        .unwrap()
        .filtfilt(&x);
    let reference = [
        (0, 0.03443578242368403),
        (1, 0.5115226751033525),
        (50, -0.5608111870376078),
        (100, -0.9233350948235601),
        (255, -0.4719825518237917),
        (256, 2.9704707754096837e-06),
        (400, 0.9981816393479241),
        (510, -0.10217833638427021),
        (511, 0.06690396914074942),
    ];
    for (i, v) in reference {
        assert!((y[i] - v).abs() < 1e-6, "sample {i}: {} vs {v}", y[i]);
    }
}

#[test]
fn second_pass_deviation_is_bounded_by_squared_first() {
    let s = sine_stream(256.0, 20.0, 6.0);
    let once = bandpass(&s, 8.0, 30.0, 4).unwrap();
    let twice = bandpass(&once, 8.0, 30.0, 4).unwrap();
    let a1 = steady_amplitude(&once);
    let a2 = steady_amplitude(&twice);
    let dev1 = (1.0 - a1).abs();
    let change = (a2 / a1 - 1.0).abs();
    assert!(
        change <= dev1 + 1e-6 || change <= dev1 * dev1 + 1e-6,
        "change {change}, single-pass deviation {dev1}"
    );
}

#[test]
fn white_noise_covariance_is_near_identity() {
    let mut r = rng(7);
    let data = DMatrix::from_fn(8, 1024, |_, _| r.sample::<f64, _>(StandardNormal));
    let c = covariance_of(&data, 0.0).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            let v = c.as_matrix()[(i, j)];
            if i == j {
                assert!((v - 1.0).abs() < 0.15, "c[{i}{i}] = {v}");
            } else {
                assert!(v.abs() < 0.15, "c[{i}{j}] = {v}");
            }
        }
    }
}

#[test]
fn covariance_ignores_channel_offsets() {
    let mut r = rng(8);
    let data = DMatrix::from_fn(4, 128, |_, _| r.sample::<f64, _>(StandardNormal));
    let shifted = DMatrix::from_fn(4, 128, |i, j| data[(i, j)] + 100.0 * (i as f64 + 1.0));
    let a = covariance_of(&data, 0.1).unwrap();
    let b = covariance_of(&shifted, 0.1).unwrap();
    assert!((a.as_matrix() - b.as_matrix()).amax() < 1e-9);
}

#[test]
fn epoch_covariances_come_out_spd() {
    let mut r = rng(9);
    let s = EegStream::new(
        250.0,
        (0..6).map(|i| format!("c{i}")).collect(),
        DMatrix::from_fn(6, 750, |_, _| r.sample::<f64, _>(StandardNormal)),
        None,
    )
    .unwrap();
    let f = bandpass(&s, 8.0, 30.0, 4).unwrap();
    for e in epoch_stream(&f, 0.5, 0.5).unwrap() {
        assert_eq!(e.data.ncols(), 125);
        assert!(covariance(&e, 0.1).unwrap().min_eigenvalue() > 0.0);
    }
}

proptest! {
    #[test]
    fn streaming_epocher_equals_batch(
        cuts in proptest::collection::vec(1usize..200, 1..12),
        overlap in 0.0f64..0.9,
        fs in prop_oneof![Just(250.0), Just(256.0)],
    ) {
        let n = 900;
        let labels: Vec<TaskLabel> = (0..n)
            .map(|j| if (j / 170) % 2 == 1 { label("right_hand") } else { TaskLabel::idle() })
            .collect();
        let s = EegStream::new(
            fs,
            vec!["a".into(), "b".into()],
            DMatrix::from_fn(2, n, |i, j| (j * (i + 1)) as f64),
            Some(labels.clone()),
        ).unwrap();
        let batch = epoch_stream(&s, 0.5, overlap).unwrap();

        let mut ep = Epocher::new(fs, 2, 0.5, overlap).unwrap();
        let mut streamed = Vec::new();
        let mut pos = 0;
        for c in cuts.iter().cycle() {
            if pos >= n { break; }
            let end = (pos + c).min(n);
            streamed.extend(ep.push(&s.samples.columns(pos, end - pos).into_owned(), &labels[pos..end]));
            pos = end;
        }
        prop_assert_eq!(batch, streamed);
    }
}
