//! IDX files: a big-endian magic word (`0x00000803` for 3-D unsigned-byte
//! image arrays, `0x00000801` for 1-D label arrays), big-endian `u32`
//! dimension sizes, then the raw bytes.

use std::path::Path;

use udp_core::{Dataset, Matrix};

use crate::error::{io_err, Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Dimensions and payload of one IDX file.
fn parse<'a>(path: &Path, bytes: &'a [u8], magic: u32) -> Result<(Vec<usize>, &'a [u8])> {
    let fmt = |msg: String| Error::Format { path: path.into(), msg };
    let word = |at: usize| -> Option<u32> { bytes.get(at..at + 4).map(|b| u32::from_be_bytes(b.try_into().unwrap())) };
    let found = word(0).ok_or_else(|| fmt("file shorter than the magic number".into()))?;
    if found != magic {
        return Err(fmt(format!("magic {found:#010x}, expected {magic:#010x}")));
    }
    let rank = (magic & 0xff) as usize;
    let dims: Vec<usize> = (0..rank)
        .map(|k| word(4 + 4 * k).map(|d| d as usize))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Length {
            path: path.into(),
            msg: "truncated header".into(),
        })?;
    let start = 4 + 4 * rank;
    let want: usize = dims.iter().product();
    let payload = &bytes[start..];
    if payload.len() < want {
        return Err(Error::Length {
            path: path.into(),
            msg: format!(
                "payload has {} bytes, dimensions {:?} need {}",
                payload.len(),
                dims,
                want
            ),
        });
    }
    if payload.len() > want {
        return Err(Error::Length {
            path: path.into(),
            msg: format!("{} trailing bytes after payload", payload.len() - want),
        });
    }
    Ok((dims, payload))
}

/// Images scaled by 1/255, one flattened image per row.
pub fn read_images(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (dims, payload) = parse(path, &bytes, IMAGES_MAGIC)?;
    let (n, d) = (dims[0], dims[1] * dims[2]);
    if n == 0 || d == 0 {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("empty image array {dims:?}"),
        });
    }
    let data = payload.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Matrix::from_vec(n, d, data)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let (_, payload) = parse(path, &bytes, LABELS_MAGIC)?;
    Ok(payload.iter().map(|&b| usize::from(b)).collect())
}

/// Images with their labels; the class count is `max label + 1`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = read_images(images)?;
    let y = read_labels(labels)?;
    if x.rows() != y.len() {
        return Err(Error::Consistency(format!(
            "{} has {} images but {} has {} labels",
            images.display(),
            x.rows(),
            labels.display(),
            y.len()
        )));
    }
    let c = y.iter().max().map_or(1, |m| m + 1);
    Ok(Dataset::new(x, Some(y), Some(c))?)
}

/// Encodes images (values already in `0..=255`) as an IDX byte stream.
pub fn encode_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for d in [n, rows, cols] {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
