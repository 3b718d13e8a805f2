//! Normalized label files: `<class> <cx> <cy> <w> <h>` for boxes and
//! `<class> x1 y1 x2 y2 ...` polygons for instance masks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, BoxSource};
use crate::error::{Error, Result};
use crate::imaging::round_half_up;
use crate::mask::{outer_contour, rle_decode, MaskRle};

const CLASS_ID: u32 = 0;

/// Annotations for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_path: String,
    pub frame_index: u64,
    pub boxes: Vec<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<MaskRle>>,
    pub image_size: (u32, u32),
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        if w == 0 || h == 0 {
            return Err(Error::InvalidInput("image size must be positive".into()));
        }
        if let Some(b) = self.boxes.iter().find(|b| !b.fits_within(w, h) || b.area() == 0) {
            return Err(Error::InvalidInput(format!(
                "{}: box {b:?} is not inside the {w}x{h} image",
                self.image_path
            )));
        }
        if let Some(masks) = &self.masks {
            if masks.len() != self.boxes.len() {
                return Err(Error::InvalidInput(format!(
                    "{}: {} masks for {} boxes",
                    self.image_path,
                    masks.len(),
                    self.boxes.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedBox {
    pub class: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormalizedBox {
    pub fn from_bbox(b: &BBox, width: u32, height: u32) -> Self {
        let (iw, ih) = (width as f64, height as f64);
        Self {
            class: CLASS_ID,
            cx: (b.left as f64 + b.width as f64 / 2.0) / iw,
            cy: (b.top as f64 + b.height as f64 / 2.0) / ih,
            w: b.width as f64 / iw,
            h: b.height as f64 / ih,
        }
    }
}

/// One line per box, six decimals, class 0.
pub fn emit_detection_label(record: &AnnotationRecord) -> Result<String> {
    record.validate()?;
    let (w, h) = record.image_size;
    let mut out = String::new();
    for b in &record.boxes {
        let n = NormalizedBox::from_bbox(b, w, h);
        let _ = writeln!(out, "{} {:.6} {:.6} {:.6} {:.6}", n.class, n.cx, n.cy, n.w, n.h);
    }
    Ok(out)
}

pub fn parse_detection_label(text: &str) -> Result<Vec<NormalizedBox>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: "<label>".into(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let class: u32 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad class {:?}", fields[0])))?;
        let mut vals = [0.0f64; 4];
        for (slot, f) in vals.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| err(format!("bad value {f:?}")))?;
            if !(0.0..=1.0).contains(slot) {
                return Err(err(format!("value {f} outside [0, 1]")));
            }
        }
        boxes.push(NormalizedBox {
            class,
            cx: vals[0],
            cy: vals[1],
            w: vals[2],
            h: vals[3],
        });
    }
    Ok(boxes)
}

/// Back to integer pixels for an image of the given size, clipped to it.
pub fn denormalize(n: &NormalizedBox, width: u32, height: u32, source: BoxSource) -> Result<BBox> {
    let (iw, ih) = (width as f64, height as f64);
    let bw = round_half_up(n.w * iw).max(1);
    let bh = round_half_up(n.h * ih).max(1);
    let left = round_half_up(n.cx * iw - bw as f64 / 2.0).clamp(0, width as i64 - 1);
    let top = round_half_up(n.cy * ih - bh as f64 / 2.0).clamp(0, height as i64 - 1);
    let right = (left + bw).min(width as i64);
    let bottom = (top + bh).min(height as i64);
    BBox::new(
        left as u32,
        top as u32,
        (right - left) as u32,
        (bottom - top) as u32,
        source,
    )
}

/// One polygon line per mask with foreground. Masks without foreground are
/// skipped with a warning.
pub fn emit_segmentation_label(record: &AnnotationRecord) -> Result<String> {
    record.validate()?;
    let masks = record.masks.as_ref().ok_or_else(|| {
        Error::InvalidInput(format!("{}: record carries no masks", record.image_path))
    })?;
    let mut out = String::new();
    for (i, rle) in masks.iter().enumerate() {
        let mask = rle_decode(rle)?;
        let Some(contour) = outer_contour(&mask) else {
            log::warn!("{}: mask {i} is empty; skipping instance", record.image_path);
            continue;
        };
        let (w, h) = (rle.width as f64, rle.height as f64);
        let _ = write!(out, "{CLASS_ID}");
        for (x, y) in contour {
            let _ = write!(out, " {:.6} {:.6}", x as f64 / w, y as f64 / h);
        }
        out.push('\n');
    }
    Ok(out)
}
