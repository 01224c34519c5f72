//! Rotation pretext task: quarter-turn rotations and the labelled instances
//! they generate.

use crate::error::{Error, Result};
use crate::manifest::{Image, Item};

/// Number of rotation classes: 0, 90, 180 and 270 degrees.
pub const ROTATIONS: usize = 4;

/// Rotates a row-major `height x width x channels` grid counterclockwise by
/// `90 * quarter_turns` degrees. Pure index permutation.
pub fn rotate_grid<T: Copy>(
    data: &[T],
    height: usize,
    width: usize,
    channels: usize,
    quarter_turns: usize,
) -> Result<Vec<T>> {
    if height != width {
        return Err(Error::NonSquareImage { height, width });
    }
    if quarter_turns >= ROTATIONS {
        return Err(Error::InvalidConfig(format!(
            "rotation index must be in 0..4, got {quarter_turns}"
        )));
    }
    if data.len() != height * width * channels {
        return Err(Error::InvalidConfig("grid size does not match its shape".into()));
    }
    let n = height;
    let last = n.saturating_sub(1);
    let mut out = Vec::with_capacity(data.len());
    for r in 0..n {
        for c in 0..n {
            let (sr, sc) = match quarter_turns {
                0 => (r, c),
                1 => (c, last - r),
                2 => (last - r, last - c),
                _ => (last - c, r),
            };
            let base = (sr * n + sc) * channels;
            out.extend_from_slice(&data[base..base + channels]);
        }
    }
    Ok(out)
}

pub fn rotate(image: &Image, quarter_turns: usize) -> Result<Image> {
    let n = image.size();
    let pixels = rotate_grid(image.pixels(), n, n, image.channels(), quarter_turns)?;
    Image::new(image.shape(), pixels)
}

/// What a rotation expert consumes: the item's image, or its feature vector
/// laid out as a single-channel square grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RotationSource {
    Image,
    FeatureGrid,
}

impl RotationSource {
    /// Picks the image path when any item carries an image, otherwise the
    /// feature grid.
    pub fn for_items<'a>(items: impl IntoIterator<Item = &'a Item>) -> RotationSource {
        if items.into_iter().any(|i| i.image.is_some()) {
            RotationSource::Image
        } else {
            RotationSource::FeatureGrid
        }
    }
}

fn grid_side(len: usize) -> Option<usize> {
    let side = (len as f64).sqrt().round() as usize;
    (side * side == len).then_some(side)
}

/// Network input for `item` rotated by `quarter_turns`. Image pixels are
/// scaled to `[0, 1]` and centred by subtracting 0.5.
pub fn rotation_input(item: &Item, source: RotationSource, quarter_turns: usize) -> Result<Vec<f64>> {
    match source {
        RotationSource::Image => {
            let image = item
                .image
                .as_ref()
                .ok_or_else(|| Error::MissingImage(item.id.clone()))?;
            let rotated = rotate(image, quarter_turns)?;
            Ok(rotated.pixels().iter().map(|&p| f64::from(p) / 255.0 - 0.5).collect())
        }
        RotationSource::FeatureGrid => {
            let side = grid_side(item.features.len()).ok_or_else(|| Error::MissingImage(item.id.clone()))?;
            rotate_grid(&item.features, side, side, 1, quarter_turns)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationInstance<'a> {
    pub base_item_id: &'a str,
    pub quarter_turns: usize,
    pub input: Vec<f64>,
}

impl RotationInstance<'_> {
    pub fn target(&self) -> usize {
        self.quarter_turns
    }
}

/// All four rotated copies of every item, targets 0..4 in order.
pub fn rotation_instances<'a>(items: &[&'a Item], source: RotationSource) -> Result<Vec<RotationInstance<'a>>> {
    let mut out = Vec::with_capacity(items.len() * ROTATIONS);
    for item in items {
        for j in 0..ROTATIONS {
            out.push(RotationInstance {
                base_item_id: &item.id,
                quarter_turns: j,
                input: rotation_input(item, source, j)?,
            });
        }
    }
    Ok(out)
}
