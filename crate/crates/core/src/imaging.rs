//! Grayscale frames, pixel rectangles and clipped region statistics.
//!
//! Coordinates follow image-file order: `x` is the column and grows to the
//! right, `y` is the row and grows downward, and the origin is the top-left
//! pixel. Rectangles are half-open: a rect covers columns
//! `left..left + width` and rows `top..top + height`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel 8-bit intensity raster, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "frame of {width}x{height} needs {expected} intensities, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// A frame where every pixel has intensity `value`.
    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Decodes a PNG or JPEG file, converting colour input to Rec.601 luma.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        match img {
            image::DynamicImage::ImageLuma8(gray) => {
                let (w, h) = gray.dimensions();
                Self::new(w, h, gray.into_raw())
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                to_gray(w, h, rgb.as_raw())
            }
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_image().save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_image(&self) -> image::GrayImage {
        image::GrayImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer length checked at construction")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn intensities(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// The rect covering the whole frame.
    pub fn bounds(&self) -> PixelRect {
        PixelRect {
            left: 0,
            top: 0,
            width: self.width,
            height: self.height,
        }
    }

    /// True when the real-valued point lies on a pixel of this frame.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64
    }

    pub(crate) fn row(&self, y: u32) -> &[u8] {
        let start = y as usize * self.width as usize;
        &self.data[start..start + self.width as usize]
    }
}

/// Axis-aligned rectangle on the pixel grid. May extend past frame bounds
/// until it is clipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub left: i64,
    pub top: i64,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub fn new(left: i64, top: i64, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "rect dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Self {
            left,
            top,
            width,
            height,
        })
    }

    /// Exclusive right edge.
    pub fn right(&self) -> i64 {
        self.left + self.width as i64
    }

    /// Exclusive bottom edge.
    pub fn bottom(&self) -> i64 {
        self.top + self.height as i64
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn contains_pixel(&self, x: i64, y: i64) -> bool {
        x >= self.left && x < self.right() && y >= self.top && y < self.bottom()
    }

    pub fn contains_rect(&self, other: &PixelRect) -> bool {
        other.left >= self.left
            && other.top >= self.top
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Pixel-count area shared with `other`.
    pub fn intersection_area(&self, other: &PixelRect) -> u64 {
        let w = (self.right().min(other.right()) - self.left.max(other.left)).max(0) as u64;
        let h = (self.bottom().min(other.bottom()) - self.top.max(other.top)).max(0) as u64;
        w * h
    }

    pub fn translate(&self, dx: i64, dy: i64) -> PixelRect {
        PixelRect {
            left: self.left + dx,
            top: self.top + dy,
            ..*self
        }
    }

    /// True when the rect lies entirely inside a `width`x`height` frame.
    pub fn is_clipped_to(&self, width: u32, height: u32) -> bool {
        self.left >= 0
            && self.top >= 0
            && self.right() <= width as i64
            && self.bottom() <= height as i64
    }
}

/// Rounds to the nearest integer, halves toward positive infinity.
#[inline]
pub fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Converts interleaved 8-bit RGB to luma with Rec.601 weights
/// (0.299, 0.587, 0.114), rounded half-up.
pub fn to_gray(width: u32, height: u32, rgb: &[u8]) -> Result<GrayFrame> {
    let pixels = width as usize * height as usize;
    if rgb.len() != pixels * 3 {
        return Err(Error::InvalidInput(format!(
            "rgb raster of {width}x{height} needs {} channel values, got {}",
            pixels * 3,
            rgb.len()
        )));
    }
    let data = rgb
        .chunks_exact(3)
        .map(|px| luma(px[0], px[1], px[2]))
        .collect();
    GrayFrame::new(width, height, data)
}

/// Converts three separate channel planes; all planes must share one length.
pub fn to_gray_planes(width: u32, height: u32, r: &[u8], g: &[u8], b: &[u8]) -> Result<GrayFrame> {
    let pixels = width as usize * height as usize;
    if r.len() != pixels || g.len() != pixels || b.len() != pixels {
        return Err(Error::InvalidInput(format!(
            "channel planes have lengths {}, {}, {}; expected {pixels}",
            r.len(),
            g.len(),
            b.len()
        )));
    }
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| luma(r, g, b))
        .collect();
    GrayFrame::new(width, height, data)
}

#[inline]
fn luma(r: u8, g: u8, b: u8) -> u8 {
    // Integer weights in thousandths keep the half-up rounding exact.
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000) as u8
}

/// Intersects `rect` with the frame.
pub fn clip_rect(rect: &PixelRect, frame: &GrayFrame) -> Result<PixelRect> {
    clip_to(rect, frame.width, frame.height)
}

pub(crate) fn clip_to(rect: &PixelRect, width: u32, height: u32) -> Result<PixelRect> {
    let left = rect.left.max(0);
    let top = rect.top.max(0);
    let right = rect.right().min(width as i64);
    let bottom = rect.bottom().min(height as i64);
    if right <= left || bottom <= top {
        return Err(Error::RectOutsideFrame);
    }
    Ok(PixelRect {
        left,
        top,
        width: (right - left) as u32,
        height: (bottom - top) as u32,
    })
}

/// Integer sum of intensities and the pixel count inside a clipped rect.
pub fn region_sum(frame: &GrayFrame, rect: &PixelRect) -> Result<(u64, u64)> {
    if !rect.is_clipped_to(frame.width, frame.height) || rect.area() == 0 {
        return Err(Error::InvalidInput(format!(
            "region {rect:?} is not a non-empty rect inside the {}x{} frame",
            frame.width, frame.height
        )));
    }
    let x0 = rect.left as usize;
    let x1 = rect.right() as usize;
    let mut sum = 0u64;
    for y in rect.top as u32..rect.bottom() as u32 {
        sum += frame.row(y)[x0..x1].iter().map(|&v| v as u64).sum::<u64>();
    }
    Ok((sum, rect.area()))
}

/// Arithmetic mean intensity of a clipped, non-empty rect.
pub fn region_mean(frame: &GrayFrame, rect: &PixelRect) -> Result<f64> {
    let (sum, count) = region_sum(frame, rect)?;
    Ok(sum as f64 / count as f64)
}
