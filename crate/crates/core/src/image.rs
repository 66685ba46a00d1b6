//! Decoded raster frames and sub-pixel region cropping.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major pixel planes, 1 (gray) or 3 (RGB) channels, values in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::dims(width * height * channels, data.len()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn gray(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(width, height, 1, data)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        if img.color().has_color() {
            let rgb = img.to_rgb8();
            let (w, h) = rgb.dimensions();
            let data = rgb.into_raw().into_iter().map(f64::from).collect();
            Self::new(w as usize, h as usize, 3, data)
        } else {
            let gray = img.to_luma8();
            let (w, h) = gray.dimensions();
            let data = gray.into_raw().into_iter().map(f64::from).collect();
            Self::new(w as usize, h as usize, 1, data)
        }
    }

    /// Saves as 8-bit PNG (values rounded and clamped).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, color).map_err(
            |source| Error::Image {
                path: path.to_path_buf(),
                source,
            },
        )
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn at(&self, x: usize, y: usize, ch: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + ch]
    }

    /// Single luminance plane (ITU-R 601 weights for RGB input).
    pub fn luma(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    /// One plane per channel.
    pub fn planes(&self) -> Vec<Vec<f64>> {
        (0..self.channels)
            .map(|ch| self.data.iter().skip(ch).step_by(self.channels).copied().collect())
            .collect()
    }

    /// Bilinear sample with edge replication outside the frame.
    pub fn sample(&self, x: f64, y: f64, ch: usize) -> f64 {
        let (x0, x1, tx) = bracket(x, self.width);
        let (y0, y1, ty) = bracket(y, self.height);
        let top = lerp(self.at(x0, y0, ch), self.at(x1, y0, ch), tx);
        let bottom = lerp(self.at(x0, y1, ch), self.at(x1, y1, ch), tx);
        lerp(top, bottom, ty)
    }

    /// Resamples the `size = (w, h)` region centered at `center = (x, y)` onto an
    /// `out_w × out_h` raster. Pixel centers of the output span the region
    /// uniformly; positions outside the frame replicate the border.
    pub fn crop(&self, center: (f64, f64), size: (f64, f64), out_w: usize, out_h: usize) -> Frame {
        let (cx, cy) = center;
        let (w, h) = size;
        let sx = w / out_w as f64;
        let sy = h / out_h as f64;
        let x0 = cx - w / 2.0;
        let y0 = cy - h / 2.0;
        let mut data = Vec::with_capacity(out_w * out_h * self.channels);
        for i in 0..out_h {
            let y = y0 + (i as f64 + 0.5) * sy - 0.5;
            for j in 0..out_w {
                let x = x0 + (j as f64 + 0.5) * sx - 0.5;
                for ch in 0..self.channels {
                    data.push(self.sample(x, y, ch));
                }
            }
        }
        Frame {
            width: out_w,
            height: out_h,
            channels: self.channels,
            data,
        }
    }
}

#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Neighboring integer positions around `x` clamped to `[0, len)`, plus the
/// interpolation weight toward the upper one.
#[inline]
pub(crate) fn bracket(x: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let x = x.clamp(0.0, max);
    let lo = x.floor();
    let i0 = lo as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, x - lo)
}

/// Bilinear resize of a single plane using pixel-center alignment.
pub fn resample_plane(
    src: &[f64],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Vec<f64> {
    let sx = src_w as f64 / dst_w as f64;
    let sy = src_h as f64 / dst_h as f64;
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for i in 0..dst_h {
        let (y0, y1, ty) = bracket((i as f64 + 0.5) * sy - 0.5, src_h);
        for j in 0..dst_w {
            let (x0, x1, tx) = bracket((j as f64 + 0.5) * sx - 0.5, src_w);
            let top = lerp(src[y0 * src_w + x0], src[y0 * src_w + x1], tx);
            let bottom = lerp(src[y1 * src_w + x0], src[y1 * src_w + x1], tx);
            out.push(lerp(top, bottom, ty));
        }
    }
    out
}
