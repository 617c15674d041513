use std::path::Path;

use crate::bow::Codebook;
use crate::descriptors::{DescriptorKind, DescriptorSet};
use crate::error::{Error, Result};

use super::json::write_atomic;
use super::FrameSequence;

const FSQ_MAGIC: &[u8; 4] = b"FSQ1";
const DSC_MAGIC: &[u8; 4] = b"DSC1";
const CBK_MAGIC: &[u8; 4] = b"CBK1";

struct Header<'a> {
    fields: [u32; 3],
    payload: &'a [u8],
}

fn parse_header<'a>(
    path: &Path,
    bytes: &'a [u8],
    magic: &[u8; 4],
    field_count: usize,
) -> Result<Header<'a>> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("expected magic {:?}", String::from_utf8_lossy(magic)),
        });
    }
    let header_len = 4 + 4 * field_count;
    if bytes.len() < header_len {
        return Err(Error::Corruption {
            path: path.into(),
            msg: format!("header truncated ({} bytes)", bytes.len()),
        });
    }
    let mut fields = [0u32; 3];
    for (i, f) in fields.iter_mut().take(field_count).enumerate() {
        let at = 4 + 4 * i;
        *f = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    }
    Ok(Header {
        fields,
        payload: &bytes[header_len..],
    })
}

fn check_payload(path: &Path, payload: &[u8], expected: usize) -> Result<()> {
    if payload.len() != expected {
        return Err(Error::Corruption {
            path: path.into(),
            msg: format!(
                "header declares {expected} payload bytes but file holds {}",
                payload.len()
            ),
        });
    }
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn decode_f64s(payload: &[u8]) -> Vec<f64> {
    payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn encode(magic: &[u8; 4], fields: &[u32], payload_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * fields.len() + payload_len);
    out.extend_from_slice(magic);
    for f in fields {
        out.extend_from_slice(&f.to_le_bytes());
    }
    out
}

pub fn read_frame_sequence(path: impl AsRef<Path>) -> Result<FrameSequence> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let h = parse_header(path, &bytes, FSQ_MAGIC, 3)?;
    let [w, ht, t] = h.fields;
    if w == 0 || ht == 0 || t == 0 {
        return Err(Error::Validation(format!(
            "{}: zero dimension ({w}x{ht}x{t})",
            path.display()
        )));
    }
    check_payload(path, h.payload, w as usize * ht as usize * t as usize)?;
    FrameSequence::from_raw(w, ht, t, h.payload.to_vec())
}

pub fn write_frame_sequence(seq: &FrameSequence, path: impl AsRef<Path>) -> Result<()> {
    let fields = [seq.width, seq.height, seq.frame_count() as u32];
    let mut out = encode(FSQ_MAGIC, &fields, seq.data.len());
    out.extend_from_slice(&seq.data);
    write_atomic(path.as_ref(), &out)
}

fn read_f64_table(path: &Path, magic: &[u8; 4], min_rows: u32) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = read_bytes(path)?;
    let h = parse_header(path, &bytes, magic, 2)?;
    let [dim, rows, _] = h.fields;
    if dim == 0 || rows < min_rows {
        return Err(Error::Validation(format!(
            "{}: invalid dimensions (dim {dim}, rows {rows})",
            path.display()
        )));
    }
    check_payload(path, h.payload, dim as usize * rows as usize * 8)?;
    Ok((dim as usize, rows as usize, decode_f64s(h.payload)))
}

fn write_f64_table(path: &Path, magic: &[u8; 4], dim: usize, rows: usize, values: &[f64]) -> Result<()> {
    let mut out = encode(magic, &[dim as u32, rows as u32], values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &out)
}

pub fn read_descriptor_set(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    let (dim, _, values) = read_f64_table(path.as_ref(), DSC_MAGIC, 0)?;
    DescriptorSet::from_flat(dim, values)
}

pub fn write_descriptor_set(set: &DescriptorSet, path: impl AsRef<Path>) -> Result<()> {
    write_f64_table(path.as_ref(), DSC_MAGIC, set.dim(), set.len(), set.as_flat())
}

/// The `.cbk` payload carries no type tag; the caller supplies it.
pub fn read_codebook(path: impl AsRef<Path>, kind: DescriptorKind) -> Result<Codebook> {
    Codebook::new(kind, read_codebook_centroids(path)?)
}

/// Centroid rows of a `.cbk` file without attaching a descriptor type.
pub fn read_codebook_centroids(path: impl AsRef<Path>) -> Result<DescriptorSet> {
    let (dim, _, values) = read_f64_table(path.as_ref(), CBK_MAGIC, 1)?;
    DescriptorSet::from_flat(dim, values)
}

pub fn write_codebook(cb: &Codebook, path: impl AsRef<Path>) -> Result<()> {
    let c = cb.centroids();
    write_f64_table(path.as_ref(), CBK_MAGIC, c.dim(), c.len(), c.as_flat())
}
