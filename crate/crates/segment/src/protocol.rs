//! Version 1 of the box-prompt wire format.
//!
//! Request and response are single JSON documents sent over HTTP POST.
//!
//! ```json
//! {"version": "v1",
//!  "image": {"width": 1920, "height": 1080, "encoding": "png", "data": "<base64>"},
//!  "prompts": [{"left": 10, "top": 20, "width": 30, "height": 40}]}
//! ```
//!
//! ```json
//! {"version": "v1",
//!  "masks": [{"width": 1920, "height": 1080, "counts": [0, 5, ...], "confidence": 0.93}]}
//! ```
//!
//! `counts` is a column-major run-length encoding that starts with a
//! background run. A mask entry may carry `"error"` instead of a usable mask,
//! in which case the box is reported as failed.

use std::io::Cursor;

use base64::Engine as _;
use base64::engine::general_purpose::STANDARD as BASE64;
use image::{DynamicImage, ImageFormat};
use pointbox_core::mask::MaskRle;
use pointbox_core::{BBox, GrayFrame};
use serde::{Deserialize, Serialize};

use crate::error::SegmentError;

pub const PROTOCOL_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub width: u32,
    pub height: u32,
    pub encoding: String,
    pub data: String,
}

impl ImagePayload {
    pub fn from_image(img: &DynamicImage) -> Result<Self, SegmentError> {
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png)
            .map_err(|e| SegmentError::InvalidInput(format!("png encoding failed: {e}")))?;
        Ok(Self {
            width: img.width(),
            height: img.height(),
            encoding: "png".into(),
            data: BASE64.encode(buf.into_inner()),
        })
    }

    pub fn from_gray(frame: &GrayFrame) -> Result<Self, SegmentError> {
        Self::from_image(&DynamicImage::ImageLuma8(frame.to_image()))
    }

    pub fn decode(&self) -> Result<DynamicImage, SegmentError> {
        if self.encoding != "png" {
            return Err(SegmentError::Protocol(format!(
                "unsupported image encoding {:?}",
                self.encoding
            )));
        }
        let bytes = BASE64
            .decode(&self.data)
            .map_err(|e| SegmentError::Protocol(format!("bad base64 image: {e}")))?;
        let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png)
            .map_err(|e| SegmentError::Protocol(format!("bad png image: {e}")))?;
        if img.width() != self.width || img.height() != self.height {
            return Err(SegmentError::Protocol(format!(
                "image is {}x{} but header says {}x{}",
                img.width(),
                img.height(),
                self.width,
                self.height
            )));
        }
        Ok(img)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub left: u32,
    pub top: u32,
    pub width: u32,
    pub height: u32,
}

impl From<&BBox> for Prompt {
    fn from(b: &BBox) -> Self {
        Self {
            left: b.left,
            top: b.top,
            width: b.width,
            height: b.height,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub version: String,
    pub image: ImagePayload,
    pub prompts: Vec<Prompt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub counts: Vec<u32>,
    #[serde(default)]
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl MaskEntry {
    pub fn from_rle(rle: MaskRle, confidence: f64) -> Self {
        Self {
            width: rle.width,
            height: rle.height,
            counts: rle.counts,
            confidence,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub version: String,
    pub masks: Vec<MaskEntry>,
}

/// A mask returned for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedMask {
    pub rle: MaskRle,
    pub confidence: f64,
    /// Set when the service could not produce a mask for this box; `rle` is
    /// then all background and `confidence` is zero.
    pub failure: Option<String>,
}

impl SegmentedMask {
    pub fn failed(width: u32, height: u32, reason: impl Into<String>) -> Self {
        Self {
            rle: MaskRle::empty(width, height),
            confidence: 0.0,
            failure: Some(reason.into()),
        }
    }
}

/// Checks a response against the request it answers and converts it.
pub fn validate_response(
    response: SegmentResponse,
    width: u32,
    height: u32,
    prompts: usize,
) -> Result<Vec<SegmentedMask>, SegmentError> {
    if response.version != PROTOCOL_VERSION {
        return Err(SegmentError::Protocol(format!(
            "response version {:?}, expected {PROTOCOL_VERSION:?}",
            response.version
        )));
    }
    if response.masks.len() != prompts {
        return Err(SegmentError::Protocol(format!(
            "{} masks returned for {prompts} prompts",
            response.masks.len()
        )));
    }
    response
        .masks
        .into_iter()
        .map(|entry| {
            if let Some(reason) = entry.error {
                return Ok(SegmentedMask::failed(width, height, reason));
            }
            if entry.width != width || entry.height != height {
                return Err(SegmentError::Protocol(format!(
                    "mask is {}x{} but image is {width}x{height}",
                    entry.width, entry.height
                )));
            }
            if !(0.0..=1.0).contains(&entry.confidence) {
                return Err(SegmentError::Protocol(format!(
                    "confidence {} outside [0, 1]",
                    entry.confidence
                )));
            }
            let rle = MaskRle {
                width: entry.width,
                height: entry.height,
                counts: entry.counts,
            };
            rle.validate()
                .map_err(|e| SegmentError::Protocol(format!("bad mask: {e}")))?;
            Ok(SegmentedMask {
                rle,
                confidence: entry.confidence,
                failure: None,
            })
        })
        .collect()
}
