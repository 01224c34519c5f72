use nds_core::experts::TrainConfig;
use nds_lab::incremental::{incremental_build_check, IncrementalConfig};

#[test]
fn building_b_leaves_a_untouched() {
    let mut cfg = IncrementalConfig {
        a_items: 100,
        b_items: 100,
        repeats: 1,
        ..IncrementalConfig::default()
    };
    cfg.build.train_cfg = TrainConfig {
        epochs: 2,
        hidden: 8,
        ..TrainConfig::default()
    };
    let report = incremental_build_check(&cfg).unwrap();
    assert!(report.a_blobs_identical);
    assert_eq!(report.a_items_small, 100);
    assert_eq!(report.a_items_large, 1000);
    assert_eq!(report.b_items, 100);
    assert_eq!(report.build_b_seconds_small.len(), 1);
    assert!(report.ratio >= 1.0);
}
