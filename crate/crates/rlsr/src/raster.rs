//! In-memory raster images: interleaved f32 samples in [0, 1], row-major,
//! 1 (gray) or 3 (RGB) channels, plus PNG/JPEG codec round-trips and
//! conversions to and from (1,C,H,W) tensors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};
use std::io::Cursor;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    /// Interleaved samples, len = width * height * channels.
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput {
                op: "image",
                message: format!("channels must be 1 or 3, got {channels}"),
            });
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput {
                op: "image",
                message: format!("extents must be positive, got {width}x{height}"),
            });
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput {
                op: "image",
                message: format!(
                    "{width}x{height}x{channels} needs {} samples, got {}",
                    width * height * channels,
                    data.len()
                ),
            });
        }
        Ok(Image { width, height, channels, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        Image::new(width, height, channels, vec![0.0; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set_sample(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Clamp every sample into [0, 1].
    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Quantize to 8-bit with round-half-away (the codec convention), then
    /// back to f32. Mirrors what a save/load round-trip does to the samples.
    pub fn quantize_8bit(&self) -> Image {
        let data = self.data.iter().map(|&v| u8_from_unit(v) as f32 / 255.0).collect();
        Image { width: self.width, height: self.height, channels: self.channels, data }
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| u8_from_unit(v)).collect()
    }

    pub fn from_u8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        Image::new(width, height, channels, data)
    }

    /// Lay out as a (1, C, H, W) tensor (planar).
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        let (w, h, c) = (self.width, self.height, self.channels);
        let mut out = vec![S::zero(); c * h * w];
        for ci in 0..c {
            let plane = &mut out[ci * h * w..][..h * w];
            for y in 0..h {
                for x in 0..w {
                    plane[y * w + x] = S::from_f64(self.data[(y * w + x) * c + ci] as f64);
                }
            }
        }
        Tensor::from_vec(out, &[1, c, h, w]).expect("image extents form a valid tensor shape")
    }

    /// Rebuild from a (1, C, H, W) tensor, clamping into [0, 1].
    pub fn from_tensor<S: Scalar>(t: &Tensor<S>) -> Result<Self> {
        let (c, h, w) = match *t.shape() {
            [1, c, h, w] => (c, h, w),
            _ => {
                return Err(Error::Shape {
                    op: "image_from_tensor",
                    message: format!("expected (1,C,H,W), got {:?}", t.shape()),
                })
            }
        };
        let src = t.data();
        let mut data = vec![0.0f32; c * h * w];
        for ci in 0..c {
            let plane = &src[ci * h * w..][..h * w];
            for y in 0..h {
                for x in 0..w {
                    data[(y * w + x) * c + ci] = plane[y * w + x].to_f64_().clamp(0.0, 1.0) as f32;
                }
            }
        }
        Image::new(w, h, c, data)
    }

    /// Extract the window at (x0, y0) with the given extents.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidInput {
                op: "crop",
                message: format!(
                    "window {w}x{h}+{x0}+{y0} exceeds image {}x{}",
                    self.width, self.height
                ),
            });
        }
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let row = &self.data[(y * self.width + x0) * self.channels..][..w * self.channels];
            data.extend_from_slice(row);
        }
        Image::new(w, h, self.channels, data)
    }

    /// Average the color channels into one gray channel.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| (px[0] + px[1] + px[2]) / 3.0)
            .collect();
        Image { width: self.width, height: self.height, channels: 1, data }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        let enc = PngEncoder::new(Cursor::new(&mut buf));
        enc.write_image(
            &self.to_u8(),
            self.width as u32,
            self.height as u32,
            self.color_type(),
        )?;
        Ok(buf)
    }

    /// JPEG-encode at the given quality (1..=100).
    pub fn encode_jpeg(&self, quality: u8) -> Result<Vec<u8>> {
        if quality == 0 || quality > 100 {
            return Err(Error::InvalidInput {
                op: "encode_jpeg",
                message: format!("quality must be in 1..=100, got {quality}"),
            });
        }
        let mut buf = Vec::new();
        let enc = JpegEncoder::new_with_quality(Cursor::new(&mut buf), quality);
        enc.write_image(
            &self.to_u8(),
            self.width as u32,
            self.height as u32,
            self.color_type(),
        )?;
        Ok(buf)
    }

    /// Decode a PNG or JPEG byte stream (format sniffed from the content).
    pub fn decode(bytes: &[u8]) -> Result<Image> {
        let reader = ImageReader::new(Cursor::new(bytes)).with_guessed_format()?;
        let img = reader.decode()?;
        Ok(match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = (g.width() as usize, g.height() as usize);
                Image::from_u8(w, h, 1, g.as_raw())?
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                Image::from_u8(w, h, 3, rgb.as_raw())?
            }
        })
    }

    pub fn save_png<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Image> {
        Image::decode(&std::fs::read(path)?)
    }

    fn color_type(&self) -> ExtendedColorType {
        if self.channels == 1 {
            ExtendedColorType::L8
        } else {
            ExtendedColorType::Rgb8
        }
    }
}

/// Unit-interval f32 to u8 with round-half-away, saturating.
#[inline]
pub fn u8_from_unit(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
