//! Hard gating: every source item belongs to exactly one expert's subset.
//!
//! Two schemes build the gate. The unsupervised scheme runs k-means over item
//! features. The superclass scheme runs k-means over per-class mean features,
//! so whole classes move together. Features are clustered as ingested; callers
//! who want cosine-style clusters should L2-normalize before writing the
//! manifest.

mod kmeans;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use self::kmeans::{kmeans, KMeans, KMeansConfig};
use crate::error::{Error, Result};
use crate::manifest::DatasetManifest;

pub const PARTITION_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Superclass,
    Unsupervised,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Superclass => "superclass",
            Scheme::Unsupervised => "unsupervised",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatingConfig {
    pub k: usize,
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iters() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-6
}

impl GatingConfig {
    pub fn unsupervised(k: usize, seed: u64) -> Self {
        GatingConfig {
            k,
            scheme: Scheme::Unsupervised,
            seed,
            max_iters: default_max_iters(),
            tol: default_tol(),
        }
    }

    pub fn superclass(k: usize, seed: u64) -> Self {
        GatingConfig {
            scheme: Scheme::Superclass,
            ..Self::unsupervised(k, seed)
        }
    }

    fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            seed: self.seed,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

/// Assignment of every source item to one of `k` experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub version: u32,
    pub k: usize,
    pub scheme: Scheme,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Item id to expert index, in manifest order.
    pub assignment: IndexMap<String, usize>,
}

impl Partition {
    fn from_labels(manifest: &DatasetManifest, cfg: &GatingConfig, labels: &[usize], centroids: Vec<Vec<f64>>) -> Self {
        let mut sizes = vec![0; cfg.k];
        let assignment = manifest
            .items
            .iter()
            .zip(labels)
            .map(|(item, &l)| {
                sizes[l] += 1;
                (item.id.clone(), l)
            })
            .collect();
        Partition {
            version: PARTITION_FORMAT_VERSION,
            k: cfg.k,
            scheme: cfg.scheme,
            seed: cfg.seed,
            sizes,
            centroids,
            assignment,
        }
    }

    /// Expert index whose gate is 1 for `item_id`.
    pub fn gate(&self, item_id: &str) -> Result<usize> {
        self.assignment
            .get(item_id)
            .copied()
            .ok_or_else(|| Error::UnknownItem(item_id.to_owned()))
    }

    /// One-hot gate vector for `item_id`.
    pub fn gate_vector(&self, item_id: &str) -> Result<Vec<u8>> {
        let i = self.gate(item_id)?;
        let mut v = vec![0; self.k];
        v[i] = 1;
        Ok(v)
    }

    /// Ids routed to `expert`, in manifest order.
    pub fn members(&self, expert: usize) -> impl Iterator<Item = &str> {
        self.assignment
            .iter()
            .filter(move |(_, &e)| e == expert)
            .map(|(id, _)| id.as_str())
    }

    /// Expert index of every item, in manifest order.
    pub fn labels(&self) -> Vec<usize> {
        self.assignment.values().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PARTITION_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported partition version {}",
                self.version
            )));
        }
        if self.k == 0 || self.sizes.len() != self.k || self.centroids.len() != self.k {
            return Err(Error::InvalidConfig("partition shape does not match K".into()));
        }
        let mut counts = vec![0; self.k];
        for &e in self.assignment.values() {
            if e >= self.k {
                return Err(Error::InvalidConfig(format!("expert index {e} out of range")));
            }
            counts[e] += 1;
        }
        if counts != self.sizes {
            return Err(Error::InvalidConfig("partition sizes disagree with assignment".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidConfig("partition has an empty subset".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("partition serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let partition: Partition = serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
        partition.validate()?;
        Ok(partition)
    }
}

pub fn unsupervised_partition(source: &DatasetManifest, cfg: &GatingConfig) -> Result<Partition> {
    if cfg.scheme != Scheme::Unsupervised {
        return Err(Error::InvalidConfig("expected the unsupervised scheme".into()));
    }
    let points: Vec<&[f64]> = source.items.iter().map(|i| i.features.as_slice()).collect();
    let km = kmeans(&points, &cfg.kmeans())?;
    Ok(Partition::from_labels(source, cfg, &km.labels, km.centroids))
}

/// Mean feature vector of every class that has items, in label order.
pub fn class_means(source: &DatasetManifest) -> Result<Vec<Vec<f64>>> {
    let labels = source.labels()?;
    let mut sums = vec![vec![0.0; source.feature_dim]; source.label_set.len()];
    let mut counts = vec![0usize; source.label_set.len()];
    for (item, &l) in source.items.iter().zip(&labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(&item.features) {
            *s += v;
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .filter(|(_, c)| *c > 0)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect())
}

pub fn superclass_partition(source: &DatasetManifest, cfg: &GatingConfig) -> Result<Partition> {
    if cfg.scheme != Scheme::Superclass {
        return Err(Error::InvalidConfig("expected the superclass scheme".into()));
    }
    let labels = source.labels()?;
    // Classes declared but never used take no part in clustering.
    let mut present: Vec<usize> = labels.clone();
    present.sort_unstable();
    present.dedup();
    let means = class_means(source)?;
    if cfg.k > means.len() {
        return Err(Error::KTooLarge {
            k: cfg.k,
            available: means.len(),
        });
    }
    let km = kmeans(&means, &cfg.kmeans())?;
    let mut cluster_of_label = vec![usize::MAX; source.label_set.len()];
    for (&label, &cluster) in present.iter().zip(&km.labels) {
        cluster_of_label[label] = cluster;
    }
    let item_labels: Vec<usize> = labels.iter().map(|&l| cluster_of_label[l]).collect();
    Ok(Partition::from_labels(source, cfg, &item_labels, km.centroids))
}

pub fn partition(source: &DatasetManifest, cfg: &GatingConfig) -> Result<Partition> {
    match cfg.scheme {
        Scheme::Unsupervised => unsupervised_partition(source, cfg),
        Scheme::Superclass => superclass_partition(source, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{Item, Role};

    fn item(id: String, features: Vec<f64>, label: Option<usize>) -> Item {
        Item {
            url: format!("https://data.example/{id}"),
            id,
            label,
            features,
            image: None,
            size_bytes: None,
        }
    }

    /// 100 items in 5 blobs spaced 50 apart with a small deterministic jitter.
    fn five_blobs() -> DatasetManifest {
        let items = (0..100)
            .map(|i| {
                let blob = i / 20;
                let jitter = ((i * 37) % 11) as f64 / 10.0 - 0.5;
                item(
                    format!("b{blob}-{i}"),
                    vec![blob as f64 * 50.0 + jitter, jitter * 0.3],
                    None,
                )
            })
            .collect();
        DatasetManifest::new("blobs", Role::Source, 2, None, vec![], items).unwrap()
    }

    #[test]
    fn five_blobs_give_five_clusters_of_twenty() {
        let m = five_blobs();
        let p = unsupervised_partition(&m, &GatingConfig::unsupervised(5, 1)).unwrap();
        let mut sizes = p.sizes.clone();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![20; 5]);
        for blob in 0..5 {
            let experts: std::collections::HashSet<_> = (0..20)
                .map(|j| p.gate(&format!("b{blob}-{}", blob * 20 + j)).unwrap())
                .collect();
            assert_eq!(experts.len(), 1);
        }
        p.validate().unwrap();
    }

    #[test]
    fn k_one_and_k_all() {
        let m = five_blobs();
        let one = unsupervised_partition(&m, &GatingConfig::unsupervised(1, 0)).unwrap();
        assert_eq!(one.sizes, vec![100]);
        let all = unsupervised_partition(&m, &GatingConfig::unsupervised(100, 0)).unwrap();
        assert!(all.sizes.iter().all(|&s| s == 1));
    }

    fn four_classes() -> DatasetManifest {
        // Class means: 0 and 1 near the origin, 2 and 3 near (40, 40).
        let means = [[0.0, 0.0], [1.0, 0.5], [40.0, 40.0], [41.0, 39.0]];
        let mut items = Vec::new();
        for (c, m) in means.iter().enumerate() {
            for j in 0..6 {
                let off = j as f64 * 0.1 - 0.25;
                items.push(item(format!("c{c}-{j}"), vec![m[0] + off, m[1] - off], Some(c)));
            }
        }
        let labels = ["w", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
        DatasetManifest::new("classes", Role::Source, 2, None, labels, items).unwrap()
    }

    #[test]
    fn superclasses_pair_nearby_class_means() {
        let m = four_classes();
        // Brute force over every split of the 4 class means into two
        // non-empty groups: minimum within-group scatter pairs {0,1} / {2,3}.
        let means = class_means(&m).unwrap();
        let scatter = |group: &[usize]| {
            let n = group.len() as f64;
            let centroid: Vec<f64> = (0..2)
                .map(|d| group.iter().map(|&c| means[c][d]).sum::<f64>() / n)
                .collect();
            group
                .iter()
                .map(|&c| kmeans::squared_distance(&means[c], &centroid))
                .sum::<f64>()
        };
        let best = (1u32..15)
            .map(|mask| {
                let (a, b): (Vec<usize>, Vec<usize>) = (0..4).partition(|&c| mask >> c & 1 == 1);
                (scatter(&a) + scatter(&b), mask)
            })
            .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap())
            .unwrap();
        assert!(best.1 == 0b0011 || best.1 == 0b1100);

        let p = superclass_partition(&m, &GatingConfig::superclass(2, 4)).unwrap();
        let e = |c: usize| p.gate(&format!("c{c}-0")).unwrap();
        assert_eq!(e(0), e(1));
        assert_eq!(e(2), e(3));
        assert_ne!(e(0), e(2));
        // Purity: every item of a class shares the expert.
        for c in 0..4 {
            for j in 0..6 {
                assert_eq!(p.gate(&format!("c{c}-{j}")).unwrap(), e(c));
            }
        }
    }

    #[test]
    fn superclass_k_equals_classes_and_errors() {
        let m = four_classes();
        let p = superclass_partition(&m, &GatingConfig::superclass(4, 0)).unwrap();
        assert!(p.sizes.iter().all(|&s| s == 6));
        assert!(matches!(
            superclass_partition(&m, &GatingConfig::superclass(5, 0)),
            Err(Error::KTooLarge { k: 5, available: 4 })
        ));
        assert!(matches!(
            superclass_partition(&five_blobs(), &GatingConfig::superclass(2, 0)),
            Err(Error::MissingLabels)
        ));
    }

    #[test]
    fn gate_lookup_and_consistency() {
        let m = five_blobs();
        let p = unsupervised_partition(&m, &GatingConfig::unsupervised(5, 2)).unwrap();
        assert!(matches!(p.gate("nope"), Err(Error::UnknownItem(_))));
        let mut counts = vec![0; 5];
        for item in &m.items {
            let g = p.gate_vector(&item.id).unwrap();
            assert_eq!(g.iter().map(|&v| v as usize).sum::<usize>(), 1);
            counts[p.gate(&item.id).unwrap()] += 1;
        }
        assert_eq!(counts, p.sizes);
        assert_eq!(p.members(0).count(), p.sizes[0]);
    }

    #[test]
    fn deterministic_and_json_round_trip() {
        let m = five_blobs();
        let cfg = GatingConfig::unsupervised(3, 42);
        let a = unsupervised_partition(&m, &cfg).unwrap();
        let b = unsupervised_partition(&m, &cfg).unwrap();
        assert_eq!(a, b);
        let back = Partition::from_json(&a.to_json()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn corrupted_partition_json_fails_validation() {
        let m = five_blobs();
        let mut p = unsupervised_partition(&m, &GatingConfig::unsupervised(2, 0)).unwrap();
        p.sizes[0] += 1;
        assert!(Partition::from_json(&p.to_json()).is_err());
    }
}
