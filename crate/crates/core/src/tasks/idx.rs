//! Big-endian IDX files, plain or gzip-wrapped.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use nalgebra::DMatrix;

use super::{Split, TaskDataset};
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Train images, train labels, test images, test labels.
pub const MNIST_FILES: [&str; 4] =
    ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse(format!("{what}: truncated header")))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "image file")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Parse(format!("image file: bad magic 0x{magic:08x}, expected 0x{IMAGE_MAGIC:08x}")));
    }
    let count = be_u32(bytes, 4, "image file")? as usize;
    let rows = be_u32(bytes, 8, "image file")? as usize;
    let cols = be_u32(bytes, 12, "image file")? as usize;
    let need = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < need {
        return Err(Error::Parse(format!("image file: truncated payload, {} of {need} bytes", payload.len())));
    }
    Ok(IdxImages { count, rows, cols, pixels: payload[..need].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "label file")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Parse(format!("label file: bad magic 0x{magic:08x}, expected 0x{LABEL_MAGIC:08x}")));
    }
    let count = be_u32(bytes, 4, "label file")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Parse(format!("label file: truncated payload, {} of {count} bytes", payload.len())));
    }
    Ok(payload[..count].to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads `name` or `name.gz`, inflating when the gzip magic is present.
fn read_maybe_gz(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let plain = dir.join(name);
    let gz = dir.join(format!("{name}.gz"));
    let path: PathBuf = if plain.exists() {
        plain
    } else if gz.exists() {
        gz
    } else {
        return Err(Error::Parse(format!("missing file {} (or .gz)", plain.display())));
    };
    let raw = fs::read(&path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Parse(format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn to_dataset(images: IdxImages, labels: Vec<u8>, split: Split) -> Result<TaskDataset> {
    if images.count != labels.len() {
        return Err(Error::Parse(format!("{} images but {} labels", images.count, labels.len())));
    }
    let d = images.rows * images.cols;
    let inputs = DMatrix::from_fn(images.count, d, |i, j| images.pixels[i * d + j] as f64 / 255.0);
    TaskDataset::new(inputs, labels.into_iter().map(usize::from).collect(), 0, split)
}

#[derive(Debug, Clone)]
pub struct Mnist {
    pub train: TaskDataset,
    pub test: TaskDataset,
}

/// Loads the four MNIST IDX files from `dir`, pixels scaled to `[0, 1]`.
pub fn load_mnist(dir: &Path) -> Result<Mnist> {
    let bytes: Vec<Vec<u8>> = MNIST_FILES.iter().map(|f| read_maybe_gz(dir, f)).collect::<Result<_>>()?;
    let train = to_dataset(parse_idx_images(&bytes[0])?, parse_idx_labels(&bytes[1])?, Split::Train)?;
    let test = to_dataset(parse_idx_images(&bytes[2])?, parse_idx_labels(&bytes[3])?, Split::Test)?;
    Ok(Mnist { train, test })
}
