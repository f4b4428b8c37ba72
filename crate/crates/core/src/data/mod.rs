//! Datasets: MNIST (IDX), CIFAR-10 (binary batches) and a seeded synthetic
//! two-blob generator. Images are stored `n x h x w x c` with pixels in
//! `[0, 1]`.

mod cifar;
mod idx;
mod synthetic;

pub use cifar::{load_cifar10_bin, parse_cifar10, save_cifar10_bin, CIFAR10_CLASSES, CIFAR_RECORD};
pub use idx::{load_mnist_idx, parse_idx, write_idx, IdxArray, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synthetic::{make_synthetic, SYNTHETIC_SIGMA};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{Shape2D, Tensor};

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "ROBUSTLAB_DATA_DIR";

/// `$ROBUSTLAB_DATA_DIR`, or `./data` when unset.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    images: Tensor,
    labels: Vec<u8>,
    num_classes: usize,
    class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<u8>, num_classes: usize) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::dim(format!(
                "images must be [n,h,w,c], got {:?}",
                images.shape()
            )));
        }
        if images.outer() != labels.len() {
            return Err(Error::dim(format!(
                "{} images but {} labels",
                images.outer(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::arg(format!("label {bad} out of range 0..{num_classes}")));
        }
        if images.data().iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::arg("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = Some(names);
        self
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Labels as class indices.
    pub fn class_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> Shape2D {
        let s = self.images.shape();
        Shape2D::new(s[1], s[2], s[3])
    }

    pub fn feature_dim(&self) -> usize {
        self.images.row_len()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::arg("empty subset"));
        }
        let images = self.images.select_rows(idx)?;
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Ok(Self {
            images,
            labels,
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        })
    }

    /// The first `n` examples (or all of them if fewer).
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn class_count(&self, class: u8) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

/// Two classes of a [`LabeledDataset`] relabelled to `y = +1` (`class_a`)
/// and `y = -1` (`class_b`).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryView {
    images: Tensor,
    y: Vec<f64>,
    class_a: u8,
    class_b: u8,
}

/// Class index used for `y = +1` when a binary model is driven through the
/// multi-class interface.
pub const POSITIVE_CLASS: usize = 0;
/// Class index used for `y = -1`.
pub const NEGATIVE_CLASS: usize = 1;

pub fn sign_to_class(y: f64) -> usize {
    if y > 0.0 {
        POSITIVE_CLASS
    } else {
        NEGATIVE_CLASS
    }
}

pub fn class_to_sign(c: usize) -> f64 {
    if c == POSITIVE_CLASS {
        1.0
    } else {
        -1.0
    }
}

impl BinaryView {
    pub fn from_parts(images: Tensor, y: Vec<f64>, class_a: u8, class_b: u8) -> Result<Self> {
        if images.outer() != y.len() {
            return Err(Error::dim(format!(
                "{} images but {} labels",
                images.outer(),
                y.len()
            )));
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::arg("binary labels must be +1 or -1"));
        }
        Ok(Self {
            images,
            y,
            class_a,
            class_b,
        })
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `+1 -> 0`, `-1 -> 1`.
    pub fn class_labels(&self) -> Vec<usize> {
        self.y.iter().map(|&y| sign_to_class(y)).collect()
    }

    pub fn classes(&self) -> (u8, u8) {
        (self.class_a, self.class_b)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.images.row_len()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    pub fn count(&self, y: f64) -> usize {
        self.y.iter().filter(|&&v| v == y).count()
    }

    /// Feature-wise mean over the examples labelled `y`.
    pub fn class_mean(&self, y: f64) -> Result<Vec<f64>> {
        let d = self.feature_dim();
        let mut acc = vec![0.0; d];
        let mut n = 0usize;
        for (row, &label) in self.images.rows().zip(&self.y) {
            if label == y {
                n += 1;
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
        }
        if n == 0 {
            return Err(Error::arg(format!("no examples with label {y:+}")));
        }
        Ok(acc.into_iter().map(|v| v / n as f64).collect())
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Ok(Self {
            images: self.images.select_rows(idx)?,
            y: idx.iter().map(|&i| self.y[i]).collect(),
            class_a: self.class_a,
            class_b: self.class_b,
        })
    }

    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }
}

/// Keep only `class_a` (mapped to `y = +1`) and `class_b` (`y = -1`).
pub fn binary_filter(ds: &LabeledDataset, class_a: u8, class_b: u8) -> Result<BinaryView> {
    if class_a == class_b {
        return Err(Error::arg("binary_filter needs two distinct classes"));
    }
    let mut idx = Vec::new();
    let mut y = Vec::new();
    for (i, &l) in ds.labels().iter().enumerate() {
        if l == class_a {
            idx.push(i);
            y.push(1.0);
        } else if l == class_b {
            idx.push(i);
            y.push(-1.0);
        }
    }
    for c in [class_a, class_b] {
        if ds.class_count(c) == 0 {
            return Err(Error::arg(format!("class {c} is empty")));
        }
    }
    BinaryView::from_parts(ds.images().select_rows(&idx)?, y, class_a, class_b)
}

/// Standard file names below the data root.
pub struct DataLayout {
    root: PathBuf,
}

impl DataLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn mnist_train(&self) -> (PathBuf, PathBuf) {
        let d = self.root.join("mnist");
        (
            d.join("train-images-idx3-ubyte"),
            d.join("train-labels-idx1-ubyte"),
        )
    }

    pub fn mnist_test(&self) -> (PathBuf, PathBuf) {
        let d = self.root.join("mnist");
        (
            d.join("t10k-images-idx3-ubyte"),
            d.join("t10k-labels-idx1-ubyte"),
        )
    }

    pub fn cifar_train(&self) -> Vec<PathBuf> {
        let d = self.root.join("cifar-10-batches-bin");
        (1..=5).map(|i| d.join(format!("data_batch_{i}.bin"))).collect()
    }

    pub fn cifar_test(&self) -> PathBuf {
        self.root.join("cifar-10-batches-bin").join("test_batch.bin")
    }

    /// MNIST "3" (y = +1) versus "7" (y = -1), training and test splits.
    pub fn mnist_3v7(&self) -> Result<(BinaryView, BinaryView)> {
        let (ti, tl) = self.mnist_train();
        let (vi, vl) = self.mnist_test();
        let train = load_mnist_idx(&ti, &tl)?;
        let test = load_mnist_idx(&vi, &vl)?;
        Ok((binary_filter(&train, 3, 7)?, binary_filter(&test, 3, 7)?))
    }
}
