//! Binary expert format.
//!
//! ```text
//! magic      4 bytes  "NDSX"
//! version    u16
//! kind       u8       0 = rotation, 1 = task-specific
//! activation u8       0 = tanh
//! input      u8       0 = features, 1 = image, 2 = feature grid
//! d_in       u32
//! hidden     u32
//! n_out      u32
//! subset     u32      subset index within the partition
//! trained_on u32      subset size
//! classes    n_out x u32, task-specific experts only
//! weights    f32 x (d_in*hidden + hidden + hidden*n_out + n_out)
//! ```
//!
//! All integers and floats are little-endian. Weights follow the order
//! `w1` (row-major `d_in x hidden`), `b1`, `w2` (row-major `hidden x n_out`), `b2`.

use super::{Activation, ExpertKind, ExpertModel, InputKind, Mlp};
use crate::error::{Error, Result};

pub const BLOB_MAGIC: [u8; 4] = *b"NDSX";
pub const BLOB_VERSION: u16 = 1;

pub fn serialize_expert(expert: &ExpertModel) -> Vec<u8> {
    let net = &expert.net;
    let mut out = Vec::with_capacity(32 + 4 * net.parameter_count());
    out.extend_from_slice(&BLOB_MAGIC);
    out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    out.push(match expert.kind {
        ExpertKind::Rotation => 0,
        ExpertKind::TaskSpecific => 1,
    });
    out.push(match expert.activation {
        Activation::Tanh => 0,
    });
    out.push(match expert.input {
        InputKind::Features => 0,
        InputKind::Image => 1,
        InputKind::FeatureGrid => 2,
    });
    for v in [
        net.d_in,
        net.hidden,
        net.n_out,
        expert.subset_index,
        expert.trained_on_size,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    if expert.kind == ExpertKind::TaskSpecific {
        for &c in &expert.classes {
            out.extend_from_slice(&(c as u32).to_le_bytes());
        }
    }
    for &w in net.parameters() {
        out.extend_from_slice(&(w as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.bytes.len())
            .ok_or_else(|| Error::CorruptBlob(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f64::from(f32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        )))
    }
}

pub fn deserialize_expert(bytes: &[u8]) -> Result<ExpertModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != BLOB_MAGIC {
        return Err(Error::CorruptBlob("bad magic".into()));
    }
    let version = r.u16()?;
    if version != BLOB_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: BLOB_VERSION,
        });
    }
    let kind = match r.u8()? {
        0 => ExpertKind::Rotation,
        1 => ExpertKind::TaskSpecific,
        other => return Err(Error::CorruptBlob(format!("unknown kind {other}"))),
    };
    let activation = match r.u8()? {
        0 => Activation::Tanh,
        other => return Err(Error::CorruptBlob(format!("unknown activation {other}"))),
    };
    let input = match r.u8()? {
        0 => InputKind::Features,
        1 => InputKind::Image,
        2 => InputKind::FeatureGrid,
        other => return Err(Error::CorruptBlob(format!("unknown input kind {other}"))),
    };
    let d_in = r.u32()?;
    let hidden = r.u32()?;
    let n_out = r.u32()?;
    let subset_index = r.u32()?;
    let trained_on_size = r.u32()?;
    if d_in == 0 || hidden == 0 || n_out == 0 {
        return Err(Error::CorruptBlob("zero dimension".into()));
    }
    if kind == ExpertKind::Rotation && n_out != super::ROTATIONS {
        return Err(Error::CorruptBlob(format!("rotation expert with {n_out} outputs")));
    }
    let classes = if kind == ExpertKind::TaskSpecific {
        (0..n_out).map(|_| r.u32()).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let expected = d_in
        .checked_mul(hidden)
        .and_then(|a| hidden.checked_mul(n_out).map(|b| a + b + hidden + n_out))
        .ok_or_else(|| Error::CorruptBlob("dimensions overflow".into()))?;
    let remaining = bytes.len() - r.pos;
    if remaining != expected * 4 {
        return Err(Error::CorruptBlob(format!(
            "expected {} weight bytes, found {remaining}",
            expected * 4
        )));
    }
    let mut net = Mlp::zeros(d_in, hidden, n_out);
    for w in net.parameters_mut() {
        *w = r.f32()?;
        if !w.is_finite() {
            return Err(Error::CorruptBlob("non-finite weight".into()));
        }
    }
    Ok(ExpertModel {
        kind,
        input,
        activation,
        subset_index,
        trained_on_size,
        classes,
        net,
    })
}
