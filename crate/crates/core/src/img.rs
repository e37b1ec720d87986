//! Float image buffers and PNG / float-map I/O.

use std::path::Path;

use crate::container::Container;
use crate::error::{Error, Result};

/// Row-major float image, channel-interleaved: `data[(y*w + x)*c + ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.idx(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.idx(x, y, c);
        self.data[i] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Rec.601 luma for 3-channel images; identity for single-channel.
    pub fn luma(&self) -> Image {
        match self.channels {
            1 => self.clone(),
            3 => {
                let mut out = Image::new(self.width, self.height, 1);
                for p in 0..self.width * self.height {
                    let r = self.data[p * 3];
                    let g = self.data[p * 3 + 1];
                    let b = self.data[p * 3 + 2];
                    out.data[p] = 0.299 * r + 0.587 * g + 0.114 * b;
                }
                out
            }
            c => panic!("luma undefined for {c}-channel image"),
        }
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer + 0.5), clamped at the border.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let fx = (x - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (y - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let v00 = self.get(x0, y0, c);
        let v10 = self.get(x1, y0, c);
        let v01 = self.get(x0, y1, c);
        let v11 = self.get(x1, y1, c);
        v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// 8-bit PNG, values clamped to [0,1]. 1 or 3 channels.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let w = self.width as u32;
        let h = self.height as u32;
        let to8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        match self.channels {
            1 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| to8(v)).collect();
                image::GrayImage::from_raw(w, h, buf)
                    .ok_or_else(|| Error::invariant("gray buffer size mismatch"))?
                    .save(path)?;
            }
            3 => {
                let buf: Vec<u8> = self.data.iter().map(|&v| to8(v)).collect();
                image::RgbImage::from_raw(w, h, buf)
                    .ok_or_else(|| Error::invariant("rgb buffer size mismatch"))?
                    .save(path)?;
            }
            c => return Err(Error::invariant(format!("cannot save {c}-channel png"))),
        }
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
        let img = image::open(path)?;
        match img {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = (g.width() as usize, g.height() as usize);
                let data = g.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
                Ok(Image {
                    width: w,
                    height: h,
                    channels: 1,
                    data,
                })
            }
            other => {
                let rgb = other.into_rgb8();
                let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                let data = rgb.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
                Ok(Image {
                    width: w,
                    height: h,
                    channels: 3,
                    data,
                })
            }
        }
    }

    /// Lossless f32 sidecar via the named-array container.
    pub fn save_float(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut c = Container::new();
        c.meta = serde_json::json!({"kind": "float_image"});
        c.insert_f32(
            "data",
            vec![self.height, self.width, self.channels],
            self.data.iter().map(|&v| v as f32).collect(),
        )?;
        c.write(path)
    }

    pub fn load_float(path: impl AsRef<Path>) -> Result<Image> {
        let c = Container::read(path)?;
        let arr = c.require("data")?;
        if arr.shape.len() != 3 {
            return Err(Error::parse("float image must have shape [h, w, c]"));
        }
        Ok(Image {
            width: arr.shape[1],
            height: arr.shape[0],
            channels: arr.shape[2],
            data: arr.as_f64()?,
        })
    }
}

/// Per-pixel outputs shared by every renderer. Depth is the camera-z of
/// expected ray termination (0 where alpha is 0); `normal` is filled by the
/// mesh rasterizer only.
#[derive(Debug, Clone)]
pub struct RenderBuffers {
    pub rgb: Image,
    pub alpha: Image,
    pub depth: Image,
    pub feature: Image,
    pub normal: Option<Image>,
}

impl RenderBuffers {
    pub fn new(width: usize, height: usize, background: [f64; 3]) -> Self {
        let mut rgb = Image::new(width, height, 3);
        let mut feature = Image::new(width, height, 3);
        for p in 0..width * height {
            for c in 0..3 {
                rgb.data[p * 3 + c] = background[c];
                feature.data[p * 3 + c] = background[c];
            }
        }
        RenderBuffers {
            rgb,
            alpha: Image::new(width, height, 1),
            depth: Image::new(width, height, 1),
            feature,
            normal: None,
        }
    }
}
