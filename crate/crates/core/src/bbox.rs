use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PixelRect;

/// Which extractor produced a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxSource {
    Pic,
    Fixed,
    Threshold,
    Human,
    Segmenter,
}

impl fmt::Display for BoxSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoxSource::Pic => "pic",
            BoxSource::Fixed => "fixed",
            BoxSource::Threshold => "threshold",
            BoxSource::Human => "human",
            BoxSource::Segmenter => "segmenter",
        };
        f.write_str(s)
    }
}

/// An annotation box on integer pixels, always inside its frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
    pub source: BoxSource,
}

impl BBox {
    pub fn new(left: u32, top: u32, width: u32, height: u32, source: BoxSource) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "box dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Self {
            left,
            top,
            width,
            height,
            source,
        })
    }

    /// Converts an already clipped rect.
    pub fn from_rect(rect: &PixelRect, source: BoxSource) -> Result<Self> {
        if rect.left < 0 || rect.top < 0 {
            return Err(Error::InvalidInput(format!(
                "rect {rect:?} has negative origin"
            )));
        }
        Self::new(
            rect.left as u32,
            rect.top as u32,
            rect.width,
            rect.height,
            source,
        )
    }

    pub fn rect(&self) -> PixelRect {
        PixelRect {
            left: self.left as i64,
            top: self.top as i64,
            width: self.width,
            height: self.height,
        }
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    pub fn right(&self) -> u32 {
        self.left + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.top + self.height
    }

    pub fn with_source(self, source: BoxSource) -> Self {
        Self { source, ..self }
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.right() <= width && self.bottom() <= height
    }
}
