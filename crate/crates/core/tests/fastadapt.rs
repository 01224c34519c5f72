mod common;

use common::*;
use nds_core::experts::{serialize_expert, train_expert_ss, train_expert_ts, ExpertModel, InputKind, Mlp};
use nds_core::fastadapt::{fast_adapt, linear_probe, proxy_accuracy, Mode, ProbeConfig};
use nds_core::manifest::{DatasetManifest, Role};
use nds_core::{ExpertKind, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rotation_expert(d_in: usize, seed: u64) -> ExpertModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ExpertModel::from_network(
        ExpertKind::Rotation,
        InputKind::Image,
        Mlp::random(d_in, 5, 4, 2.0, &mut rng),
    )
}

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    }
}

#[test]
fn matching_expert_outscores_a_foreign_one() {
    let stripes = image_items("s", 120, 1, stripe_image);
    let corners = image_items("c", 120, 2, corner_image);
    let same = train_expert_ss(&stripes.iter().collect::<Vec<_>>(), &quick())
        .unwrap()
        .model;
    let other = train_expert_ss(&corners.iter().collect::<Vec<_>>(), &quick())
        .unwrap()
        .model;

    let target = image_manifest("t", Role::Target, image_items("t", 60, 3, stripe_image));
    let z_same = proxy_accuracy(&same, &target).unwrap();
    let z_other = proxy_accuracy(&other, &target).unwrap();
    assert!(z_same > z_other, "same {z_same} other {z_other}");
}

#[test]
fn perfectly_fit_single_item_scores_one() {
    let items = image_items("one", 1, 11, stripe_image);
    let expert = train_expert_ss(&items.iter().collect::<Vec<_>>(), &TrainConfig::default())
        .unwrap()
        .model;
    let target = image_manifest("t", Role::Target, items);
    assert_eq!(proxy_accuracy(&expert, &target).unwrap(), 1.0);
}

#[test]
fn proxy_mode_leaves_expert_bytes_untouched() {
    let expert = random_rotation_expert(64, 5);
    let before = serialize_expert(&expert);
    let target = image_manifest("t", Role::Target, image_items("t", 10, 6, stripe_image));
    proxy_accuracy(&expert, &target).unwrap();
    assert_eq!(serialize_expert(&expert), before);
}

#[test]
fn probe_on_the_training_subset_is_accurate() {
    let items = two_class_items(50, 6, 1.5, 21);
    let refs: Vec<_> = items.iter().collect();
    let expert = train_expert_ts(&refs, &TrainConfig::default()).unwrap().model;
    let target = DatasetManifest::new("t", Role::Target, 6, None, vec!["neg".into(), "pos".into()], items).unwrap();
    let z = linear_probe(&expert, &target, &ProbeConfig::default()).unwrap();
    assert!(z >= 0.9, "probe accuracy {z}");
}

#[test]
fn probe_with_shuffled_labels_is_at_chance() {
    let mut items = two_class_items(1250, 6, 1.5, 22);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let train_items: Vec<_> = items.iter().take(200).cloned().collect();
    let expert = train_expert_ts(&train_items.iter().collect::<Vec<_>>(), &quick())
        .unwrap()
        .model;
    for item in &mut items {
        item.label = Some(rng.random_range(0..2));
    }
    let target = DatasetManifest::new("t", Role::Target, 6, None, vec!["neg".into(), "pos".into()], items).unwrap();
    let z = linear_probe(&expert, &target, &ProbeConfig::default()).unwrap();
    assert!((z - 0.5).abs() <= 0.1, "probe accuracy {z}");
}

#[test]
fn bundle_order_is_evaluation_order() {
    let experts: Vec<_> = (0..3).map(|s| random_rotation_expert(64, 40 + s)).collect();
    let target = image_manifest("t", Role::Target, image_items("t", 25, 7, stripe_image));
    let z = fast_adapt(&experts, &target, Mode::Proxy, &ProbeConfig::default(), "d")
        .unwrap()
        .z;
    for perm in [[2, 0, 1], [1, 2, 0], [2, 1, 0]] {
        let shuffled: Vec<_> = perm.iter().map(|&i| experts[i].clone()).collect();
        let zp = fast_adapt(&shuffled, &target, Mode::Proxy, &ProbeConfig::default(), "d")
            .unwrap()
            .z;
        let expected: Vec<f64> = perm.iter().map(|&i| z[i]).collect();
        assert_eq!(zp, expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn report_carries_only_scores_and_scalars(k in 1usize..5, n in 1usize..40, seed in any::<u64>()) {
        let experts: Vec<_> = (0..k as u64).map(|i| random_rotation_expert(64, seed ^ i)).collect();
        let target = image_manifest("t", Role::Target, image_items("t", n, seed, stripe_image));
        let report = fast_adapt(&experts, &target, Mode::Proxy, &ProbeConfig::default(), "src").unwrap();
        let json = serde_json::to_value(&report).unwrap();
        let obj = json.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort_unstable();
        prop_assert_eq!(keys, vec!["client_nonce", "dataset_ref", "mode", "target_size", "z"]);
        prop_assert_eq!(obj["z"].as_array().unwrap().len(), k);
        prop_assert!(obj["z"].as_array().unwrap().iter().all(|v| v.is_f64()));
        for (key, value) in obj {
            if key != "z" {
                prop_assert!(!value.is_array() && !value.is_object(), "{} is structured", key);
            }
        }
        let nonce = obj["client_nonce"].as_str().unwrap();
        prop_assert_eq!(nonce.len(), 32);
    }

    #[test]
    fn proxy_scores_stay_in_unit_interval(seed in any::<u64>(), n in 1usize..20, scale in 0.1f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let expert = ExpertModel::from_network(ExpertKind::Rotation, InputKind::Image, Mlp::random(64, 3, 4, scale, &mut rng));
        let target = image_manifest("t", Role::Target, image_items("t", n, seed, corner_image));
        let z = proxy_accuracy(&expert, &target).unwrap();
        prop_assert!((0.0..=1.0).contains(&z));
        prop_assert_eq!((z * 4.0 * n as f64).fract(), 0.0);
    }
}
