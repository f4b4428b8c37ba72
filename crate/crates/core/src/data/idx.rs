//! IDX container format: a big-endian `u32` magic whose low byte is the
//! number of dimensions, then one big-endian `u32` per dimension, then raw
//! `u8` payload.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

/// A parsed unsigned-byte IDX array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn parse_err(name: &str, offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: name.to_string(),
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, name: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_err(name, bytes.len(), "truncated header"))
}

/// Parse an IDX byte buffer, checking the magic against `expected_magic`.
pub fn parse_idx(bytes: &[u8], expected_magic: u32, name: &str) -> Result<IdxArray> {
    let magic = read_u32(bytes, 0, name)?;
    if magic != expected_magic {
        return Err(parse_err(
            name,
            0,
            format!("bad magic {magic}, expected {expected_magic}"),
        ));
    }
    if (magic >> 8) & 0xff != 0x08 {
        return Err(parse_err(name, 2, "only unsigned byte payloads are supported"));
    }
    let ndim = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        dims.push(read_u32(bytes, 4 + 4 * i, name)? as usize);
    }
    let header = 4 + 4 * ndim;
    let len: usize = dims.iter().product();
    let have = bytes.len() - header;
    if have < len {
        return Err(parse_err(
            name,
            bytes.len(),
            format!("truncated payload: expected {len} bytes after header, found {have}"),
        ));
    }
    if have > len {
        return Err(parse_err(
            name,
            header + len,
            format!("{} trailing bytes", have - len),
        ));
    }
    Ok(IdxArray {
        magic,
        dims,
        data: bytes[header..].to_vec(),
    })
}

/// Serialize an [`IdxArray`]. Used for fixtures and round-trip tests.
pub fn write_idx(arr: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * arr.dims.len() + arr.data.len());
    out.extend_from_slice(&arr.magic.to_be_bytes());
    for &d in &arr.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&arr.data);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Load an MNIST-style image/label file pair. Pixels are divided by 255.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let iname = images_path.display().to_string();
    let lname = labels_path.display().to_string();
    let images = parse_idx(&read_file(images_path)?, IDX_IMAGES_MAGIC, &iname)?;
    let labels = parse_idx(&read_file(labels_path)?, IDX_LABELS_MAGIC, &lname)?;
    if images.dims.len() != 3 {
        return Err(parse_err(&iname, 3, "image file must have 3 dimensions"));
    }
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != n {
        return Err(parse_err(
            &lname,
            4,
            format!("{} labels but {n} images", labels.dims[0]),
        ));
    }
    if n == 0 {
        return Err(parse_err(&iname, 4, "empty image file"));
    }
    let pixels = images.data.iter().map(|&p| p as f64 / 255.0).collect();
    let tensor = Tensor::new(vec![n, h, w, 1], pixels)?;
    let num_classes = labels.data.iter().copied().max().unwrap_or(0) as usize + 1;
    LabeledDataset::new(tensor, labels.data, num_classes.max(10))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(n: usize, fill: u8) -> (Vec<u8>, Vec<u8>) {
        let images = IdxArray {
            magic: IDX_IMAGES_MAGIC,
            dims: vec![n, 28, 28],
            data: vec![fill; n * 784],
        };
        let labels = IdxArray {
            magic: IDX_LABELS_MAGIC,
            dims: vec![n],
            data: (0..n as u8).collect(),
        };
        (write_idx(&images), write_idx(&labels))
    }

    #[test]
    fn round_trip() {
        let (bytes, _) = fixture(2, 9);
        let arr = parse_idx(&bytes, IDX_IMAGES_MAGIC, "t").unwrap();
        assert_eq!(arr.dims, vec![2, 28, 28]);
        assert_eq!(write_idx(&arr), bytes);
    }

    #[test]
    fn bad_magic() {
        let (bytes, _) = fixture(1, 0);
        let err = parse_idx(&bytes, IDX_LABELS_MAGIC, "t").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }));
    }

    #[test]
    fn truncated_names_offset() {
        let (bytes, _) = fixture(2, 0);
        let cut = &bytes[..bytes.len() - 10];
        match parse_idx(cut, IDX_IMAGES_MAGIC, "t").unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, cut.len()),
            other => panic!("{other}"),
        }
        match parse_idx(&bytes[..6], IDX_IMAGES_MAGIC, "t").unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, 6),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn zero_images_load_as_zero() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(2, 0);
        let ip = dir.path().join("img");
        let lp = dir.path().join("lab");
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        let ds = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.images().shape(), &[2, 28, 28, 1]);
        assert!(ds.images().data().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (img, _) = fixture(3, 0);
        let (_, lab) = fixture(2, 0);
        let ip = dir.path().join("img");
        let lp = dir.path().join("lab");
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        assert!(matches!(load_mnist_idx(&ip, &lp), Err(Error::Parse { .. })));
    }
}
