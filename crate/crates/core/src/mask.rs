//! Binary instance masks: run-length coding, tight boxes and outer contours.
//!
//! Run lengths are column-major (pixel `(x, y)` is at index `x * height + y`)
//! and always begin with a background run, which may be empty. This matches
//! the uncompressed COCO RLE layout.

use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, BoxSource};
use crate::error::{Error, Result};
use crate::imaging::PixelRect;

/// Row-major binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("mask dimensions must be positive".into()));
        }
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidInput(format!(
                "mask of {width}x{height} needs {} values, got {}",
                width as usize * height as usize,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![false; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// A mask that is set exactly on `rect` (after clipping to the mask).
    pub fn from_rect(width: u32, height: u32, rect: &PixelRect) -> Result<Self> {
        Self::from_fn(width, height, |x, y| rect.contains_pixel(x as i64, y as i64))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub width: u32,
    pub height: u32,
    pub counts: Vec<u32>,
}

impl MaskRle {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("mask dimensions must be positive".into()));
        }
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        let expected = self.width as u64 * self.height as u64;
        if total != expected {
            return Err(Error::InvalidInput(format!(
                "run lengths sum to {total}, expected {expected}"
            )));
        }
        Ok(())
    }

    /// All-background mask of the given size.
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            counts: vec![width * height],
        }
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }
}

pub fn rle_encode(mask: &BinaryMask) -> MaskRle {
    let (w, h) = (mask.width, mask.height);
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..w {
        for y in 0..h {
            let v = mask.get(x, y);
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    MaskRle {
        width: w,
        height: h,
        counts,
    }
}

pub fn rle_decode(rle: &MaskRle) -> Result<BinaryMask> {
    rle.validate()?;
    let (w, h) = (rle.width, rle.height);
    let mut mask = BinaryMask::empty(w, h)?;
    let mut index = 0u64;
    for (i, &run) in rle.counts.iter().enumerate() {
        if i % 2 == 1 {
            for k in index..index + run as u64 {
                mask.set((k / h as u64) as u32, (k % h as u64) as u32, true);
            }
        }
        index += run as u64;
    }
    Ok(mask)
}

/// Tight box around the foreground of an encoded mask.
pub fn bbox_from_mask(rle: &MaskRle) -> Result<BBox> {
    rle.validate()?;
    let h = rle.height as u64;
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (u64::MAX, u64::MAX, 0u64, 0u64);
    let mut index = 0u64;
    for (i, &run) in rle.counts.iter().enumerate() {
        let run = run as u64;
        if i % 2 == 1 && run > 0 {
            let (first, last) = (index, index + run - 1);
            let (x0, x1) = (first / h, last / h);
            min_x = min_x.min(x0);
            max_x = max_x.max(x1);
            if x0 == x1 {
                min_y = min_y.min(first % h);
                max_y = max_y.max(last % h);
            } else {
                // A run crossing a column boundary touches both the bottom row
                // of one column and the top row of the next.
                min_y = 0;
                max_y = h - 1;
            }
        }
        index += run;
    }
    if min_x == u64::MAX {
        return Err(Error::EmptyMask);
    }
    BBox::new(
        min_x as u32,
        min_y as u32,
        (max_x - min_x + 1) as u32,
        (max_y - min_y + 1) as u32,
        BoxSource::Segmenter,
    )
}

/// Outer contour of the largest 4-connected foreground component, as pixel
/// corner coordinates in clockwise order (y pointing down). Only corners where
/// the boundary changes direction are kept, so a rectangle yields its four
/// corners and a single pixel yields the pixel's four corners.
pub fn outer_contour(mask: &BinaryMask) -> Option<Vec<(u32, u32)>> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let labels = largest_component(mask)?;
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h && labels[(y * w + x) as usize];

    let start_index = labels.iter().position(|&v| v)?;
    let start = ((start_index as i64) % w, (start_index as i64) / w);

    // Directions: east, south, west, north. Turning right is +1.
    const STEPS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
    let ahead = |v: (i64, i64), dir: usize| -> (bool, bool) {
        let (x, y) = v;
        let (left, right) = match dir {
            0 => ((x, y - 1), (x, y)),
            1 => ((x, y), (x - 1, y)),
            2 => ((x - 1, y), (x - 1, y - 1)),
            _ => ((x - 1, y - 1), (x, y - 1)),
        };
        (inside(left.0, left.1), inside(right.0, right.1))
    };

    let mut vertices = vec![(start.0 as u32, start.1 as u32)];
    let mut dir = 0usize;
    let mut pos = (start.0 + 1, start.1);
    loop {
        let (left_in, right_in) = ahead(pos, dir);
        let next = if !right_in {
            (dir + 1) % 4
        } else if left_in {
            (dir + 3) % 4
        } else {
            dir
        };
        if pos == start && next == 0 {
            break;
        }
        if next != dir {
            vertices.push((pos.0 as u32, pos.1 as u32));
            dir = next;
        }
        pos = (pos.0 + STEPS[dir].0, pos.1 + STEPS[dir].1);
    }
    Some(vertices)
}

/// Membership flags of the largest 4-connected component (first in scan
/// order on ties), or `None` for an empty mask.
fn largest_component(mask: &BinaryMask) -> Option<Vec<bool>> {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut label = vec![0u32; w * h];
    let mut best = (0usize, 0u32);
    let mut next_label = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || label[start] != 0 {
            continue;
        }
        next_label += 1;
        label[start] = next_label;
        stack.push(start);
        let mut size = 0usize;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.data[j] && label[j] == 0 {
                    label[j] = next_label;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if size > best.0 {
            best = (size, next_label);
        }
    }
    if best.0 == 0 {
        return None;
    }
    Some(label.into_iter().map(|l| l == best.1).collect())
}
