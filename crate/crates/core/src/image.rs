//! Image containers at the API boundary and their 8-bit PNG encoding.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Result, SamcError};
use crate::tensor::{Scalar, Tensor};

/// `H x W x 3` image with values in `[-1, 1]`, stored row-major, channels last.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(SamcError::Shape(format!(
                "image data has {} values, expected {height}x{width}x3",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(SamcError::Shape(format!("image value {v} outside [-1, 1]")));
        }
        Ok(ImageTensor {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| value).collect();
        ImageTensor {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * 3 + ch]
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub(crate) fn set_pixel(&mut self, row: usize, col: usize, px: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        for (k, v) in px.into_iter().enumerate() {
            self.data[i + k] = v.clamp(-1.0, 1.0);
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| encode_unit(v)).collect()
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * 3 {
            return Err(SamcError::Shape(format!(
                "rgb buffer has {} bytes, expected {}",
                bytes.len(),
                height * width * 3
            )));
        }
        Ok(ImageTensor {
            height,
            width,
            data: bytes.iter().map(|&b| decode_unit(b)).collect(),
        })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let (w, h, bytes) = read_png(path, png::ColorType::Rgb)?;
        Self::from_rgb8(h, w, &bytes)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        write_png(
            path,
            self.width,
            self.height,
            png::ColorType::Rgb,
            &self.to_rgb8(),
        )
    }
}

/// `H x W` map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl AttentionMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(SamcError::Shape(format!(
                "attention data has {} values, expected {height}x{width}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SamcError::Shape(format!("attention value {v} outside [0, 1]")));
        }
        Ok(AttentionMap {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Grayscale bytes, 0 -> black and 1 -> white.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        write_png(
            path,
            self.width,
            self.height,
            png::ColorType::Grayscale,
            &self.to_gray8(),
        )
    }

    /// The input image darkened where attention is high, so cosmetic regions
    /// show up as dark patches over the face.
    pub fn overlay(&self, image: &ImageTensor) -> Result<ImageTensor> {
        if (image.height, image.width) != (self.height, self.width) {
            return Err(SamcError::Shape("overlay size mismatch".into()));
        }
        let mut out = image.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                let a = self.data[r * self.width + c];
                let px = image.pixel(r, c).map(|v| (v + 1.0) * (1.0 - 0.8 * a) - 1.0);
                out.set_pixel(r, c, px);
            }
        }
        Ok(out)
    }
}

/// 8-bit value to `[-1, 1]`: `v / 127.5 - 1`.
#[inline]
pub fn decode_unit(b: u8) -> f32 {
    b as f32 / 127.5 - 1.0
}

#[inline]
pub fn encode_unit(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Pack images into a `[3, N, H, W]` tensor.
pub fn images_to_tensor<T: Scalar>(images: &[&ImageTensor]) -> Result<Tensor<T>> {
    let first = images
        .first()
        .ok_or_else(|| SamcError::Shape("empty image batch".into()))?;
    let (h, w) = (first.height, first.width);
    let n = images.len();
    let mut t = Tensor::zeros(3, n, h, w);
    for (i, img) in images.iter().enumerate() {
        if (img.height, img.width) != (h, w) {
            return Err(SamcError::Shape("images in a batch differ in size".into()));
        }
        for ch in 0..3 {
            let plane = t.plane_slice_mut(ch, i);
            for (p, v) in plane.iter_mut().enumerate() {
                *v = T::lit(img.data[p * 3 + ch] as f64);
            }
        }
    }
    Ok(t)
}

/// Unpack a `[3, N, H, W]` tensor; values are clamped into `[-1, 1]`.
pub fn tensor_to_images<T: Scalar>(t: &Tensor<T>) -> Vec<ImageTensor> {
    assert_eq!(t.c, 3);
    (0..t.n)
        .map(|i| {
            let mut data = vec![0.0f32; t.h * t.w * 3];
            for ch in 0..3 {
                for (p, v) in t.plane_slice(ch, i).iter().enumerate() {
                    data[p * 3 + ch] = (v.as_f64() as f32).clamp(-1.0, 1.0);
                }
            }
            ImageTensor {
                height: t.h,
                width: t.w,
                data,
            }
        })
        .collect()
}

/// Unpack a `[1, N, H, W]` tensor of probabilities.
pub fn tensor_to_attention<T: Scalar>(t: &Tensor<T>) -> Vec<AttentionMap> {
    assert_eq!(t.c, 1);
    (0..t.n)
        .map(|i| AttentionMap {
            height: t.h,
            width: t.w,
            data: t
                .plane_slice(0, i)
                .iter()
                .map(|v| (v.as_f64() as f32).clamp(0.0, 1.0))
                .collect(),
        })
        .collect()
}

pub(crate) fn read_png(path: &Path, want: png::ColorType) -> Result<(usize, usize, Vec<u8>)> {
    let img_err = |reason: String| SamcError::Image {
        path: path.to_path_buf(),
        reason,
    };
    let file = File::open(path).map_err(|e| SamcError::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| img_err(e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| img_err("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| img_err(e.to_string()))?;
    buf.truncate(info.buffer_size());
    let (w, h) = (info.width as usize, info.height as usize);
    let out = match (info.color_type, want) {
        (a, b) if a == b => buf,
        (png::ColorType::Rgba, png::ColorType::Rgb) => buf
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        (png::ColorType::Grayscale, png::ColorType::Rgb) => {
            buf.iter().flat_map(|&g| [g, g, g]).collect()
        }
        (got, _) => {
            return Err(img_err(format!(
                "unsupported color type {got:?}, expected {want:?}"
            )))
        }
    };
    Ok((w, h, out))
}

pub(crate) fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    bytes: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| SamcError::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let img_err = |e: png::EncodingError| SamcError::Image {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(img_err)?;
    writer.write_image_data(bytes).map_err(img_err)?;
    writer.finish().map_err(img_err)?;
    Ok(())
}
