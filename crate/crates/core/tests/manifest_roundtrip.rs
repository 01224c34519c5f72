use nds_core::manifest::{DatasetManifest, Image, ImageShape, Item, Role};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![prop::num::f64::NORMAL, Just(0.0), -1e3f64..1e3]
}

fn manifest() -> impl Strategy<Value = DatasetManifest> {
    (1usize..5, 1usize..4, 1usize..3, 0usize..3, any::<bool>(), 1usize..12).prop_flat_map(
        |(dim, side, channels, n_labels, with_images, n)| {
            let item = (
                prop::collection::vec(finite(), dim),
                prop::option::of(0..n_labels.max(1)),
                prop::collection::vec(any::<u8>(), side * side * channels),
                prop::option::of(any::<u64>()),
                "[a-z0-9/:.]{0,20}",
            );
            prop::collection::vec(item, n).prop_map(move |raw| {
                let shape = ImageShape { size: side, channels };
                let label_set: Vec<String> = (0..n_labels).map(|l| format!("class-{l}")).collect();
                let items = raw
                    .into_iter()
                    .enumerate()
                    .map(|(i, (features, label, pixels, size_bytes, url))| Item {
                        id: format!("item-{i}"),
                        url,
                        label: if n_labels == 0 { None } else { label },
                        features,
                        image: with_images.then(|| Image::new(shape, pixels).unwrap()),
                        size_bytes,
                    })
                    .collect();
                DatasetManifest::new(
                    "prop",
                    if n % 2 == 0 { Role::Source } else { Role::Target },
                    dim,
                    with_images.then_some(shape),
                    label_set,
                    items,
                )
                .unwrap()
            })
        },
    )
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(m in manifest()) {
        let text = m.to_jsonl();
        let back = DatasetManifest::parse(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.to_jsonl(), text);
    }
}

#[test]
fn save_and_load_through_a_file() {
    let items = vec![Item {
        id: "a1".into(),
        url: "https://example.org/a1.jpg".into(),
        label: Some(1),
        features: vec![0.1, -2.5e-9, 3.0, 4.0],
        image: None,
        size_bytes: Some(2048),
    }];
    let m = DatasetManifest::new("one", Role::Source, 4, None, vec!["cat".into(), "dog".into()], items).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    m.save(&path).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), m);
}
