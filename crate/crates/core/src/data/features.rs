//! `SCPF` binary feature files.
//!
//! Layout, all integers little-endian `u32`:
//! magic `SCPF`, version, N, b, C, then C length-prefixed UTF-8 class names,
//! then N records of b little-endian `f32` values followed by the label.

use std::path::Path;

use super::{ClassCatalog, LabeledFeatureSet};
use crate::error::{Error, Result};
use crate::fsio::{put_string, put_u32, read_bytes, write_atomic, Reader};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"SCPF";
pub const FEATURE_VERSION: u32 = 1;

pub fn encode_features<T: Scalar>(set: &LabeledFeatureSet<T>) -> Result<Vec<u8>> {
    let n = u32::try_from(set.len()).map_err(|_| Error::Data("too many rows".into()))?;
    let b = set.feature_dim() as u32;
    let mut out = Vec::with_capacity(20 + set.len() * (set.feature_dim() + 1) * 4);
    out.extend_from_slice(FEATURE_MAGIC);
    put_u32(&mut out, FEATURE_VERSION);
    put_u32(&mut out, n);
    put_u32(&mut out, b);
    put_u32(&mut out, set.catalog().len() as u32);
    for name in set.catalog().names() {
        put_string(&mut out, name);
    }
    for (i, &label) in set.labels().iter().enumerate() {
        for &v in set.feature(i) {
            let v = v.as_f64() as f32;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("feature row {i} at 32-bit precision")));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_u32(&mut out, label);
    }
    Ok(out)
}

pub fn decode_features<T: Scalar>(bytes: &[u8]) -> Result<LabeledFeatureSet<T>> {
    let mut r = Reader::new(bytes, "feature file");
    r.magic(FEATURE_MAGIC)?;
    let version = r.u32()?;
    if version != FEATURE_VERSION {
        return Err(Error::Version {
            format: "SCPF",
            version,
        });
    }
    let n = r.u32()? as usize;
    let b = r.u32()? as usize;
    let c = r.u32()? as usize;
    if n == 0 || b == 0 {
        return Err(Error::Data(format!("feature file declares N={n}, b={b}")));
    }
    let mut names = Vec::with_capacity(c.min(1 << 16));
    for _ in 0..c {
        names.push(r.string()?);
    }
    let catalog = ClassCatalog::new(names)?;

    let record = (b + 1) * 4;
    if r.remaining() / record < n {
        return Err(Error::Truncated(format!(
            "feature file holds {} bytes of records, {n} records need {}",
            r.remaining(),
            n.saturating_mul(record)
        )));
    }
    let mut data = Vec::with_capacity(n * b);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        for _ in 0..b {
            let v = r.f32()?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("feature row {i}")));
            }
            data.push(T::lit(v as f64));
        }
        let label = r.u32()?;
        if label as usize >= catalog.len() {
            return Err(Error::LabelOutOfRange {
                label,
                classes: catalog.len(),
            });
        }
        labels.push(label);
    }
    r.finish()?;
    LabeledFeatureSet::new(Tensor::new(n, b, data)?, labels, catalog)
}

pub fn write_feature_file<T: Scalar>(set: &LabeledFeatureSet<T>, path: &Path) -> Result<()> {
    write_atomic(path, &encode_features(set)?)
}

pub fn read_feature_file<T: Scalar>(path: &Path) -> Result<LabeledFeatureSet<T>> {
    decode_features(&read_bytes(path)?)
}
