mod common;

use common::*;
use parbci::eeg::BandConfig;
use parbci::mi::{AdaptationParams, MiModel};
use parbci::spd::riemannian_distance;
use parbci::{label, SpdMatrix, TaskLabel};
use proptest::prelude::*;

#[test]
fn prototypes_match_generator_ground_truth() {
    let classes = two_classes();
    let s = block_scenario(1, 120.0, &classes);
    let model = MiModel::train(
        &classes,
        &labeled_covariances(&s),
        AdaptationParams::default(),
    )
    .unwrap();
    for (c, p) in classes.iter().zip(model.prototypes()) {
        let truth = s
            .ground_truth_covariance(c, &BandConfig::default(), 0.1)
            .unwrap();
        let d = riemannian_distance(p, &truth).unwrap();
        assert!(d <= 0.2, "{c}: δ(prototype, truth) = {d}");
    }
}

#[test]
fn held_out_accuracy_two_classes() {
    let classes = two_classes();
    let model = MiModel::train(
        &classes,
        &labeled_covariances(&block_scenario(1, 120.0, &classes)),
        AdaptationParams::default(),
    )
    .unwrap();
    let test = labeled_covariances(&block_scenario(2, 60.0, &classes));
    let acc = accuracy(&model, &test[..200]);
    assert!(acc >= 0.9, "accuracy {acc}");
}

#[test]
fn held_out_accuracy_three_classes() {
    let classes = three_classes();
    let model = MiModel::train(
        &classes,
        &labeled_covariances(&block_scenario(1, 120.0, &classes)),
        AdaptationParams::default(),
    )
    .unwrap();
    let test = labeled_covariances(&block_scenario(2, 60.0, &classes));
    let acc = accuracy(&model, &test[..200]);
    assert!(acc >= 0.9, "accuracy {acc}");
}

#[test]
fn adaptation_tracks_covariance_drift() {
    let (fixed, adaptive) = drift_experiment(5, 1.5, 60.0, 300.0, 60.0);
    assert!(adaptive >= fixed, "static {fixed}, adaptive {adaptive}");
    let (fixed, adaptive) = drift_experiment(5, 2.0, 60.0, 300.0, 60.0);
    assert!(
        adaptive >= fixed + 0.05,
        "static {fixed}, adaptive {adaptive}"
    );
}

#[test]
fn deeper_erd_is_more_separable() {
    let classes = three_classes();
    let separability = |depth: f64| {
        let mut s = block_scenario(3, 120.0, &classes);
        s.eeg.erd_depth = depth;
        let data = labeled_covariances(&s);
        let model = MiModel::train(&classes, &data, AdaptationParams::default()).unwrap();
        model.performance_metrics(&data).unwrap().separability
    };
    let (base, doubled) = (separability(0.3), separability(0.6));
    assert!(doubled > base, "{base} vs {doubled}");
}

fn random_model_and_data(seed: u64, dim: usize) -> (MiModel, Vec<(SpdMatrix, TaskLabel)>) {
    let mut r = rng(seed);
    let classes = vec![TaskLabel::idle(), label("a"), label("b")];
    let centers: Vec<SpdMatrix> = classes
        .iter()
        .map(|_| random_spd(&mut r, dim, 1.0))
        .collect();
    let mut data = Vec::new();
    for (c, center) in classes.iter().zip(&centers) {
        for _ in 0..4 {
            let noise = random_spd(&mut r, dim, 0.3);
            let s = center.sqrt();
            data.push((
                SpdMatrix::new(&s * noise.as_matrix() * &s).unwrap(),
                c.clone(),
            ));
        }
    }
    let model = MiModel::train(&classes, &data, AdaptationParams::default()).unwrap();
    (model, data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn decisions_are_congruence_invariant(seed in any::<u64>(), dim in 2usize..=5) {
        let (model, data) = random_model_and_data(seed, dim);
        let w = random_invertible(&mut rng(seed ^ 0x5eed), dim);
        let moved: Vec<(SpdMatrix, TaskLabel)> =
            data.iter().map(|(c, l)| (c.congruence(&w).unwrap(), l.clone())).collect();
        let moved_model = MiModel::train(model.classes(), &moved, AdaptationParams::default()).unwrap();
        let mut r = rng(seed.wrapping_add(1));
        for _ in 0..10 {
            let probe = random_spd(&mut r, dim, 1.0);
            let a = model.classify(&probe).unwrap().label;
            let b = moved_model.classify(&probe.congruence(&w).unwrap()).unwrap().label;
            prop_assert_eq!(a, b);
        }
        let sa = model.performance_metrics(&data).unwrap().separability;
        let sb = moved_model.performance_metrics(&moved).unwrap().separability;
        prop_assert!((sa - sb).abs() < 1e-6 * sa.max(1.0), "{} vs {}", sa, sb);
    }

    #[test]
    fn empty_adaptation_is_idempotent(seed in any::<u64>()) {
        let (model, _) = random_model_and_data(seed, 3);
        let once = model.adapt(&[]).unwrap();
        prop_assert_eq!(&once, &model);
        prop_assert_eq!(once.adapt(&[]).unwrap(), once);
    }

    #[test]
    fn far_classes_do_not_change_decisions(seed in any::<u64>()) {
        let (model, _) = random_model_and_data(seed, 3);
        let mut r = rng(seed.wrapping_mul(3));
        let probe = random_spd(&mut r, 3, 1.0);
        let before = model.classify(&probe).unwrap();
        let winner = before.distances.iter().cloned().fold(f64::INFINITY, f64::min);
        // scaling the probe by e^k moves every log-eigenvalue by k
        let k = winner + 1.0;
        let far = SpdMatrix::new(probe.as_matrix() * k.exp()).unwrap();
        let mut classes = model.classes().to_vec();
        classes.push(label("far"));
        let mut protos = model.prototypes().to_vec();
        protos.push(far);
        let extended = MiModel::from_prototypes(classes, protos, model.params()).unwrap();
        prop_assert_eq!(extended.classify(&probe).unwrap().label, before.label);
    }
}

#[test]
fn alpha_zero_keeps_model_exactly() {
    let (model, data) = random_model_and_data(9, 4);
    let frozen = model
        .with_params(AdaptationParams {
            alpha: 0.0,
            period: 2,
        })
        .unwrap();
    let mut m = frozen.clone();
    for (c, l) in &data {
        m.record(c.clone(), l).unwrap();
    }
    assert_eq!(m.prototypes(), frozen.prototypes());
}
