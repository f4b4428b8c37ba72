use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// 8-bit image, 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

pub type GrayImage = Image;
pub type RgbImage = Image;

impl Image {
    fn blank(width: usize, height: usize, channels: usize, fill: u8) -> Self {
        Self {
            width,
            height,
            channels,
            pixels: vec![fill; width * height * channels],
        }
    }

    fn put(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }
}

/// Map signed values to bytes around mid-grey: `128 + round(127 v / max|v|)`;
/// all-zero input gives a uniform 128.
pub fn symmetric_gray(values: &[f64]) -> Vec<u8> {
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    values
        .iter()
        .map(|&v| if m == 0.0 { 128 } else { (128.0 + (127.0 * v / m).round()) as u8 })
        .collect()
}

/// Binary (P5) PGM bytes, maxval 255.
pub fn encode_pgm(img: &Image) -> Result<Vec<u8>> {
    if img.channels != 1 {
        return Err(Error::arg("pgm holds grayscale images only"));
    }
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    Ok(out)
}

pub fn write_pgm(path: &Path, img: &Image) -> Result<()> {
    std::fs::write(path, encode_pgm(img)?).map_err(|e| Error::io(path, e))
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(if img.channels == 3 { png::ColorType::Rgb } else { png::ColorType::Grayscale });
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    enc.write_header()
        .map_err(to_io)?
        .write_image_data(&img.pixels)
        .map_err(to_io)
}

/// Weight vector of `height * width` values as a symmetric grey PGM.
pub fn export_weight_image(values: &[f64], height: usize, width: usize, path: &Path) -> Result<()> {
    if values.len() != height * width {
        return Err(Error::dim(format!("{} values for a {height}x{width} image", values.len())));
    }
    let img = Image {
        width,
        height,
        channels: 1,
        pixels: symmetric_gray(values),
    };
    write_pgm(path, &img)
}

/// Tile a `[kh, kw, c_in, c_out]` filter bank into a grid with 1-pixel
/// white separators, scaled symmetrically over the whole bank. RGB when
/// `c_in == 3`, otherwise the input channels are averaged to grey.
pub fn conv1_filter_grid<T: Scalar>(kernel: &Tensor<T>, cols: usize) -> Result<Image> {
    let s = kernel.shape();
    if s.len() != 4 || cols == 0 {
        return Err(Error::dim(format!("expected a 4-d filter bank, got {s:?}")));
    }
    let (kh, kw, cin, cout) = (s[0], s[1], s[2], s[3]);
    let channels = if cin == 3 { 3 } else { 1 };
    let at = |i: usize, j: usize, c: usize, o: usize| kernel.data()[((i * kw + j) * cin + c) * cout + o].f64();
    let mut vals = Vec::with_capacity(kh * kw * channels * cout);
    for o in 0..cout {
        for i in 0..kh {
            for j in 0..kw {
                if channels == 3 {
                    vals.extend((0..3).map(|c| at(i, j, c, o)));
                } else {
                    vals.push((0..cin).map(|c| at(i, j, c, o)).sum::<f64>() / cin as f64);
                }
            }
        }
    }
    let bytes = symmetric_gray(&vals);
    let rows = cout.div_ceil(cols);
    let mut img = Image::blank(cols * (kw + 1) + 1, rows * (kh + 1) + 1, channels, 255);
    let per = kh * kw * channels;
    for o in 0..cout {
        let (gx, gy) = ((o % cols) * (kw + 1) + 1, (o / cols) * (kh + 1) + 1);
        for i in 0..kh {
            for j in 0..kw {
                for c in 0..channels {
                    img.put(gx + j, gy + i, c, bytes[o * per + (i * kw + j) * channels + c]);
                }
            }
        }
    }
    Ok(img)
}

/// `0.5 + 0.5 * delta`, clamped to `[0, 1]`, so zero change is mid-grey.
pub fn perturbation_to_unit(delta: &[f64]) -> Vec<f64> {
    delta.iter().map(|d| (0.5 + 0.5 * d).clamp(0.0, 1.0)).collect()
}

/// Tile `[h, w, c]` images with values in `[0, 1]` into a grid.
pub fn image_grid(images: &[Vec<f64>], shape: [usize; 3], cols: usize) -> Result<Image> {
    let [h, w, c] = shape;
    if images.is_empty() || cols == 0 || !(c == 1 || c == 3) {
        return Err(Error::arg("image grid needs images, cols >= 1 and 1 or 3 channels"));
    }
    if let Some(bad) = images.iter().find(|im| im.len() != h * w * c) {
        return Err(Error::dim(format!("image of {} values for shape {shape:?}", bad.len())));
    }
    let cols = cols.min(images.len());
    let rows = images.len().div_ceil(cols);
    let mut img = Image::blank(cols * (w + 1) + 1, rows * (h + 1) + 1, c, 255);
    for (k, im) in images.iter().enumerate() {
        let (gx, gy) = ((k % cols) * (w + 1) + 1, (k / cols) * (h + 1) + 1);
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    let v = im[(i * w + j) * c + ch].clamp(0.0, 1.0);
                    img.put(gx + j, gy + i, ch, (v * 255.0).round() as u8);
                }
            }
        }
    }
    Ok(img)
}
