//! Dataset manifests: the JSON-lines container for source and target items.
//!
//! ```text
//! {"meta": {"name": "coco-mini", "feature_dim": 4, "image_shape": [8, 1], "label_set": ["cat", "dog"], "role": "source"}}
//! {"id": "a1", "url": "https://example.org/a1.jpg", "features": [0.1, 0.2, 0.3, 0.4], "label": "cat", "image": "<base64>"}
//! ```
//!
//! The first line is a header object keyed by `meta`; every following line is
//! one item. Images are 8-bit, row-major `H x H x C`, base64 encoded.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
}

/// Side length and channel count of the square images in a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct ImageShape {
    pub size: usize,
    pub channels: usize,
}

impl From<[usize; 2]> for ImageShape {
    fn from([size, channels]: [usize; 2]) -> Self {
        ImageShape { size, channels }
    }
}

impl From<ImageShape> for [usize; 2] {
    fn from(shape: ImageShape) -> Self {
        [shape.size, shape.channels]
    }
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.size * self.size * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A square 8-bit image tensor stored row-major as `H x H x C`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    shape: ImageShape,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(shape: ImageShape, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != shape.len() {
            return Err(Error::InvalidConfig(format!(
                "image of shape {}x{}x{} needs {} bytes, got {}",
                shape.size,
                shape.size,
                shape.channels,
                shape.len(),
                pixels.len()
            )));
        }
        Ok(Image { shape, pixels })
    }

    /// Builds an image from an `height x width x channels` buffer, rejecting
    /// non-square grids.
    pub fn from_grid(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if height != width {
            return Err(Error::NonSquareImage { height, width });
        }
        Image::new(ImageShape { size: height, channels }, pixels)
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn size(&self) -> usize {
        self.shape.size
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.pixels[(row * self.shape.size + col) * self.shape.channels + channel]
    }

    /// Pixel values scaled into `[0, 1]`.
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p) / 255.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: String,
    /// Opaque locator of the raw datum. Never dereferenced.
    pub url: String,
    /// Index into the manifest label set.
    pub label: Option<usize>,
    pub features: Vec<f64>,
    pub image: Option<Image>,
    /// Optional on-disk size of the raw datum, used for byte budgets.
    pub size_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub role: Role,
    pub feature_dim: usize,
    pub image_shape: Option<ImageShape>,
    pub label_set: Vec<String>,
    pub items: Vec<Item>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaderLine {
    meta: MetaRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct MetaRecord {
    name: String,
    feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_shape: Option<ImageShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label_set: Option<Vec<String>>,
    role: Role,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemRecord {
    id: String,
    url: String,
    features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size_bytes: Option<u64>,
}

impl DatasetManifest {
    /// Validates every manifest invariant and returns the manifest.
    pub fn new(
        name: impl Into<String>,
        role: Role,
        feature_dim: usize,
        image_shape: Option<ImageShape>,
        label_set: Vec<String>,
        items: Vec<Item>,
    ) -> Result<Self> {
        let manifest = DatasetManifest {
            name: name.into(),
            role,
            feature_dim,
            image_shape,
            label_set,
            items,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidManifest("empty dataset name".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidManifest("feature_dim must be positive".into()));
        }
        if self.items.is_empty() {
            return Err(Error::InvalidManifest("manifest has no items".into()));
        }
        let mut labels = HashSet::new();
        for label in &self.label_set {
            if !labels.insert(label.as_str()) {
                return Err(Error::InvalidManifest(format!("duplicate label `{label}`")));
            }
        }
        let mut ids = HashSet::with_capacity(self.items.len());
        for item in &self.items {
            if item.id.is_empty() {
                return Err(Error::InvalidManifest("item with empty id".into()));
            }
            if !ids.insert(item.id.as_str()) {
                return Err(Error::DuplicateId(item.id.clone()));
            }
            if item.features.len() != self.feature_dim {
                return Err(Error::DimensionMismatch {
                    id: item.id.clone(),
                    expected: self.feature_dim,
                    found: item.features.len(),
                });
            }
            if let Some(pos) = item.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidItem {
                    id: item.id.clone(),
                    message: format!("feature {pos} is not finite"),
                });
            }
            if let Some(label) = item.label {
                if label >= self.label_set.len() {
                    return Err(Error::InvalidItem {
                        id: item.id.clone(),
                        message: format!("label index {label} outside the label set"),
                    });
                }
            }
            if let Some(image) = &item.image {
                match self.image_shape {
                    Some(shape) if shape == image.shape() => {}
                    Some(shape) => {
                        return Err(Error::InvalidItem {
                            id: item.id.clone(),
                            message: format!(
                                "image shape [{}, {}] differs from declared [{}, {}]",
                                image.size(),
                                image.channels(),
                                shape.size,
                                shape.channels
                            ),
                        })
                    }
                    None => {
                        return Err(Error::InvalidItem {
                            id: item.id.clone(),
                            message: "image present but the manifest declares no image_shape".into(),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (header_line, header) = lines.next().ok_or_else(|| Error::parse(1, "empty manifest"))?;
        let header: HeaderLine =
            serde_json::from_str(header).map_err(|e| Error::parse(header_line, format!("bad header: {e}")))?;
        let meta = header.meta;

        let declared_labels = meta.label_set.is_some();
        let mut label_set = meta.label_set.unwrap_or_default();
        let mut items = Vec::new();
        for (line, raw) in lines {
            let record: ItemRecord = serde_json::from_str(raw).map_err(|e| Error::parse(line, e.to_string()))?;
            let label = match record.label {
                None => None,
                Some(name) => match label_set.iter().position(|l| *l == name) {
                    Some(index) => Some(index),
                    None if !declared_labels => {
                        label_set.push(name);
                        Some(label_set.len() - 1)
                    }
                    None => {
                        return Err(Error::InvalidItem {
                            id: record.id,
                            message: format!("label `{name}` is not in the label set"),
                        })
                    }
                },
            };
            let image = match record.image {
                None => None,
                Some(encoded) => {
                    let shape = meta.image_shape.ok_or_else(|| Error::InvalidItem {
                        id: record.id.clone(),
                        message: "image present but the manifest declares no image_shape".into(),
                    })?;
                    let bytes = BASE64
                        .decode(encoded.as_bytes())
                        .map_err(|e| Error::parse(line, format!("bad image encoding: {e}")))?;
                    let image = Image::new(shape, bytes).map_err(|e| Error::InvalidItem {
                        id: record.id.clone(),
                        message: e.to_string(),
                    })?;
                    Some(image)
                }
            };
            items.push(Item {
                id: record.id,
                url: record.url,
                label,
                features: record.features,
                image,
                size_bytes: record.size_bytes,
            });
        }

        DatasetManifest::new(
            meta.name,
            meta.role,
            meta.feature_dim,
            meta.image_shape,
            label_set,
            items,
        )
    }

    pub fn to_jsonl(&self) -> String {
        let header = HeaderLine {
            meta: MetaRecord {
                name: self.name.clone(),
                feature_dim: self.feature_dim,
                image_shape: self.image_shape,
                label_set: (!self.label_set.is_empty()).then(|| self.label_set.clone()),
                role: self.role,
            },
        };
        let mut out = String::new();
        // Serializing plain data structures to a String cannot fail.
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for item in &self.items {
            let record = ItemRecord {
                id: item.id.clone(),
                url: item.url.clone(),
                features: item.features.clone(),
                label: item.label.map(|l| self.label_set[l].clone()),
                image: item.image.as_ref().map(|img| BASE64.encode(img.pixels())),
                size_bytes: item.size_bytes,
            };
            out.push_str(&serde_json::to_string(&record).expect("item serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|item| item.id == id)
    }

    /// True when every item carries a label.
    pub fn is_labeled(&self) -> bool {
        !self.label_set.is_empty() && self.items.iter().all(|item| item.label.is_some())
    }

    /// Labels of all items, failing if any item is unlabeled.
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.items
            .iter()
            .map(|item| item.label.ok_or(Error::MissingLabels))
            .collect()
    }
}

/// Hex-encoded SHA-256 digest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = r#"{"meta":{"name":"toy","feature_dim":4,"label_set":["a","b"],"role":"source"}}"#;

    fn with_items(items: &[&str]) -> String {
        let mut text = String::from(HEADER);
        for item in items {
            text.push('\n');
            text.push_str(item);
        }
        text
    }

    #[test]
    fn loads_three_valid_records() {
        let text = with_items(&[
            r#"{"id":"x1","url":"u/1","features":[1,2,3,4],"label":"a"}"#,
            r#"{"id":"x2","url":"u/2","features":[0,0,0,0],"label":"b"}"#,
            r#"{"id":"x3","url":"u/3","features":[0.5,0.25,-1,2]}"#,
        ]);
        let manifest = DatasetManifest::parse(&text).unwrap();
        assert_eq!(manifest.len(), 3);
        assert_eq!(manifest.items[1].label, Some(1));
        assert_eq!(manifest.items[2].label, None);
        assert_eq!(manifest.role, Role::Source);
        assert!(!manifest.is_labeled());
    }

    #[test]
    fn short_feature_vector_names_the_item() {
        let text = with_items(&[
            r#"{"id":"ok","url":"u","features":[1,2,3,4]}"#,
            r#"{"id":"short","url":"u","features":[1,2,3]}"#,
        ]);
        match DatasetManifest::parse(&text) {
            Err(Error::DimensionMismatch { id, expected, found }) => {
                assert_eq!((id.as_str(), expected, found), ("short", 4, 3));
            }
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = with_items(&[
            r#"{"id":"a1","url":"u","features":[1,2,3,4]}"#,
            r#"{"id":"a1","url":"v","features":[1,2,3,4]}"#,
        ]);
        assert!(matches!(DatasetManifest::parse(&text), Err(Error::DuplicateId(id)) if id == "a1"));
    }

    #[test]
    fn malformed_record_reports_line() {
        let text = with_items(&[r#"{"id":"a1","url":"u","features":[1,2,3,4]}"#, "{not json"]);
        assert!(matches!(
            DatasetManifest::parse(&text),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn undeclared_label_is_rejected() {
        let text = with_items(&[r#"{"id":"a1","url":"u","features":[1,2,3,4],"label":"zebra"}"#]);
        assert!(matches!(DatasetManifest::parse(&text), Err(Error::InvalidItem { .. })));
    }

    #[test]
    fn labels_without_declared_set_follow_first_appearance() {
        let text = concat!(
            r#"{"meta":{"name":"t","feature_dim":1,"role":"target"}}"#,
            "\n",
            r#"{"id":"1","url":"u","features":[1],"label":"dog"}"#,
            "\n",
            r#"{"id":"2","url":"u","features":[1],"label":"cat"}"#,
            "\n",
            r#"{"id":"3","url":"u","features":[1],"label":"dog"}"#,
        );
        let manifest = DatasetManifest::parse(text).unwrap();
        assert_eq!(manifest.label_set, vec!["dog", "cat"]);
        assert_eq!(manifest.labels().unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn image_length_must_match_shape() {
        let text = concat!(
            r#"{"meta":{"name":"t","feature_dim":1,"image_shape":[2,1],"role":"source"}}"#,
            "\n",
            r#"{"id":"1","url":"u","features":[1],"image":"AAEC"}"#,
        );
        assert!(matches!(DatasetManifest::parse(text), Err(Error::InvalidItem { .. })));
    }

    #[test]
    fn non_square_grid_is_rejected() {
        assert!(matches!(
            Image::from_grid(2, 3, 1, vec![0; 6]),
            Err(Error::NonSquareImage { height: 2, width: 3 })
        ));
    }

    #[test]
    fn empty_manifest_is_invalid() {
        assert!(matches!(DatasetManifest::parse(HEADER), Err(Error::InvalidManifest(_))));
        assert!(matches!(DatasetManifest::parse(""), Err(Error::Parse { .. })));
    }
}
