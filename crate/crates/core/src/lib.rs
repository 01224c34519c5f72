//! Neural data selection for transfer learning.
//!
//! A dataserver partitions each source dataset with a hard gate and trains one
//! small expert per subset. A client scores every expert on its private target
//! data and sends back only those scores. The server turns the scores into
//! per-item sampling probabilities and returns a budgeted list of source items.

pub mod error;
pub mod experts;
pub mod fastadapt;
pub mod gating;
pub mod index;
pub mod linear;
pub mod manifest;
pub mod protocol;
pub mod selection;
pub mod split;

pub use error::{Error, Result};
pub use experts::{
    deserialize_expert, serialize_expert, train_expert, ExpertKind, ExpertModel, InputKind, TrainConfig, TrainedExpert,
};
pub use fastadapt::{fast_adapt, AccuracyReport, Mode, ProbeConfig};
pub use gating::{partition, GatingConfig, Partition, Scheme};
pub use manifest::{DatasetManifest, Image, ImageShape, Item, Role};
pub use selection::{recommend, RecommendOptions, Recommendation, SourceIndex, WeightVector};
pub use split::{split, Split, SplitSpec};
