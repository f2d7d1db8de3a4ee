//! IDX (big-endian) image/label files as used by MNIST.
//!
//! ```text
//! images: 0x00000803  count  rows  cols  count·rows·cols unsigned bytes
//! labels: 0x00000801  count             count unsigned bytes
//! ```
//!
//! A file shorter than its own header is an I/O error. A header whose magic
//! is wrong, or whose dimensions disagree with the payload length, is a
//! format error. Two well-formed files with different counts are a
//! consistency error.

use std::io::{self, ErrorKind};
use std::path::Path;

use super::Dataset;
use crate::ndnn::DenseMatrix;
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const MNIST_CLASSES: usize = 10;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn header(bytes: &[u8], magic: u32, kind: &str, dims: usize, path: &Path) -> Result<Vec<u32>> {
    let short = |need: usize| {
        Error::io(
            path,
            io::Error::new(
                ErrorKind::UnexpectedEof,
                format!("file holds {} bytes, header needs {need}", bytes.len()),
            ),
        )
    };
    if bytes.len() < 4 {
        return Err(short(4));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(format_err(
            path,
            format!("expected {kind} magic 0x{magic:08x}, found 0x{found:08x}"),
        ));
    }
    let len = 4 + 4 * dims;
    if bytes.len() < len {
        return Err(short(len));
    }
    Ok((0..=dims).map(|i| be_u32(bytes, 4 * i)).collect())
}

fn format_err(path: &Path, detail: String) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail,
    }
}

fn check_payload(bytes: &[u8], header_len: usize, dims: &[u32], path: &Path) -> Result<usize> {
    let declared = dims
        .iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(u64::from(d)))
        .ok_or_else(|| format_err(path, format!("dimensions {dims:?} overflow")))?;
    let found = (bytes.len() - header_len) as u64;
    if declared != found {
        return Err(format_err(
            path,
            format!("header dimensions {dims:?} declare {declared} payload bytes, found {found}"),
        ));
    }
    Ok(declared as usize)
}

/// Parses in-memory IDX images and labels. Paths are used for messages only.
pub fn parse_idx(images: &[u8], labels: &[u8], images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let ih = header(images, IDX_IMAGES_MAGIC, "image", 3, images_path)?;
    check_payload(images, 16, &ih[1..], images_path)?;

    let lh = header(labels, IDX_LABELS_MAGIC, "label", 1, labels_path)?;
    check_payload(labels, 8, &lh[1..], labels_path)?;

    let (count, rows, cols) = (ih[1] as usize, ih[2] as usize, ih[3] as usize);
    if lh[1] as usize != count {
        return Err(Error::Consistency(format!(
            "{} holds {count} images but {} holds {} labels",
            images_path.display(),
            labels_path.display(),
            lh[1]
        )));
    }
    if count == 0 || rows * cols == 0 {
        return Err(format_err(images_path, "empty image set".into()));
    }
    let y: Vec<usize> = labels[8..].iter().map(|&b| usize::from(b)).collect();
    if let Some(bad) = y.iter().find(|&&c| c >= MNIST_CLASSES) {
        return Err(format_err(labels_path, format!("label {bad} outside 0..{MNIST_CLASSES}")));
    }
    let data = images[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    let x = DenseMatrix::from_vec(count, rows * cols, data)?;
    Dataset::labeled(x, y, MNIST_CLASSES)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = std::fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let labels = std::fs::read(lp).map_err(|e| Error::io(lp, e))?;
    parse_idx(&images, &labels, ip, lp)
}

/// Serialises a dataset of `rows × cols` images. Pixels are mapped back with
/// `round(v·255)`, so bytes produced by [`parse_idx`] round-trip exactly.
pub fn encode_idx(ds: &Dataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if ds.dim() != rows * cols {
        return Err(Error::shape("encode_idx pixels", rows * cols, ds.dim()));
    }
    let y = ds.labels()?;
    if let Some(bad) = y.iter().find(|&&c| c > u8::MAX as usize) {
        return Err(Error::arg(format!("label {bad} does not fit a byte")));
    }
    let count = u32::try_from(ds.len()).map_err(|_| Error::arg("too many images for IDX"))?;
    let mut images = Vec::with_capacity(16 + ds.x.data().len());
    for v in [IDX_IMAGES_MAGIC, count, rows as u32, cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(ds.x.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut labels = Vec::with_capacity(8 + y.len());
    for v in [IDX_LABELS_MAGIC, count] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    labels.extend(y.iter().map(|&c| c as u8));
    Ok((images, labels))
}

pub fn write_idx(
    ds: &Dataset,
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let (images, labels) = encode_idx(ds, rows, cols)?;
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    std::fs::write(ip, images).map_err(|e| Error::io(ip, e))?;
    std::fs::write(lp, labels).map_err(|e| Error::io(lp, e))
}
