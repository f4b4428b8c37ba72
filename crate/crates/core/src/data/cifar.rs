//! CIFAR-10 binary batches: 3073-byte records of one label byte followed by
//! the red, green and blue 32x32 planes.

use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
const PLANE: usize = 32 * 32;

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Decode records from one buffer into `(labels, hwc pixels)`.
pub fn parse_cifar10(bytes: &[u8], name: &str) -> Result<(Vec<u8>, Vec<f64>)> {
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Parse {
            source_name: name.to_string(),
            offset: bytes.len() - bytes.len() % CIFAR_RECORD,
            message: format!(
                "length {} is not a positive multiple of {CIFAR_RECORD}",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = vec![0.0; n * 3 * PLANE];
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(Error::Parse {
                source_name: name.to_string(),
                offset: i * CIFAR_RECORD,
                message: format!("label {} > 9", rec[0]),
            });
        }
        labels.push(rec[0]);
        let out = &mut pixels[i * 3 * PLANE..(i + 1) * 3 * PLANE];
        for c in 0..3 {
            let plane = &rec[1 + c * PLANE..1 + (c + 1) * PLANE];
            for (p, &v) in plane.iter().enumerate() {
                out[p * 3 + c] = v as f64 / 255.0;
            }
        }
    }
    Ok((labels, pixels))
}

/// Concatenate one or more batch files.
pub fn load_cifar10_bin<P: AsRef<Path>>(paths: &[P]) -> Result<LabeledDataset> {
    if paths.is_empty() {
        return Err(Error::arg("no CIFAR-10 batch files given"));
    }
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
        let (l, px) = parse_cifar10(&bytes, &p.display().to_string())?;
        labels.extend(l);
        pixels.extend(px);
    }
    let n = labels.len();
    let images = Tensor::new(vec![n, 32, 32, 3], pixels)?;
    Ok(LabeledDataset::new(images, labels, 10)?
        .with_class_names(CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect()))
}

/// Write a dataset of 32x32x3 images back to the binary record format.
/// Pixels are rounded to the nearest multiple of 1/255.
pub fn save_cifar10_bin(ds: &LabeledDataset, path: &Path) -> Result<()> {
    if ds.images().shape()[1..] != [32, 32, 3] {
        return Err(Error::dim(format!(
            "CIFAR records hold 32x32x3 images, got {:?}",
            &ds.images().shape()[1..]
        )));
    }
    let mut out = Vec::with_capacity(ds.len() * CIFAR_RECORD);
    for (i, &label) in ds.labels().iter().enumerate() {
        out.push(label);
        let img = ds.image(i);
        for c in 0..3 {
            out.extend((0..PLANE).map(|p| (img[p * 3 + c] * 255.0).round() as u8));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_255_record_is_white() {
        let rec = vec![255u8; CIFAR_RECORD];
        let mut bytes = rec.clone();
        bytes[0] = 2;
        let (labels, px) = parse_cifar10(&bytes, "t").unwrap();
        assert_eq!(labels, vec![2]);
        assert!(px.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn planar_to_hwc() {
        let mut bytes = vec![0u8; CIFAR_RECORD];
        bytes[1] = 10; // R at (0,0)
        bytes[1 + PLANE] = 20; // G at (0,0)
        bytes[1 + 2 * PLANE + 33] = 30; // B at (1,1)
        let (_, px) = parse_cifar10(&bytes, "t").unwrap();
        assert_eq!(px[0], 10.0 / 255.0);
        assert_eq!(px[1], 20.0 / 255.0);
        assert_eq!(px[33 * 3 + 2], 30.0 / 255.0);
    }

    #[test]
    fn bad_length_and_label() {
        assert!(parse_cifar10(&[0u8; 100], "t").is_err());
        let mut bytes = vec![0u8; 2 * CIFAR_RECORD];
        bytes[CIFAR_RECORD] = 10;
        match parse_cifar10(&bytes, "t").unwrap_err() {
            Error::Parse { offset, .. } => assert_eq!(offset, CIFAR_RECORD),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn save_load_round_trip() {
        let mut bytes = vec![0u8; CIFAR_RECORD];
        bytes[0] = 7;
        for (i, b) in bytes[1..].iter_mut().enumerate() {
            *b = (i * 7 % 256) as u8;
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        std::fs::write(&p, &bytes).unwrap();
        let ds = load_cifar10_bin(&[&p]).unwrap();
        assert_eq!(ds.labels(), &[7]);
        let q = dir.path().join("b.bin");
        save_cifar10_bin(&ds, &q).unwrap();
        assert_eq!(std::fs::read(&q).unwrap(), bytes);
    }
}
