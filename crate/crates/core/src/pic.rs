//! Patch intensity convergence.
//!
//! Starting from a square patch around a trajectory point, the patch grows by
//! a fixed step on every side and the mean intensity inside it is tracked.
//! Growth stops as soon as one step changes the mean by less than `epsilon`;
//! at that point the last step only added background and the patch before it
//! is taken as the object boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, BoxSource};
use crate::dataset::SequenceKey;
use crate::error::{Error, Result};
use crate::imaging::{clip_rect, region_sum, round_half_up, GrayFrame, PixelRect};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicConfig {
    /// Initial patch width in pixels.
    pub w0: u32,
    /// Initial patch height in pixels.
    pub h0: u32,
    /// Growth of width and height per step.
    pub delta: u32,
    /// Halting threshold on the absolute change of mean intensity.
    pub epsilon: f64,
    /// Upper bound on expansion steps.
    pub max_iters: u32,
    /// Return the patch after the halting step instead of the one before it.
    #[serde(default)]
    pub return_expanded: bool,
}

impl Default for PicConfig {
    fn default() -> Self {
        Self {
            w0: 8,
            h0: 8,
            delta: 5,
            epsilon: 4.0,
            max_iters: 64,
            return_expanded: false,
        }
    }
}

impl PicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w0 == 0 || self.h0 == 0 {
            return Err(Error::Config("w0 and h0 must be at least 1".into()));
        }
        if self.delta == 0 {
            return Err(Error::Config("delta must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config("epsilon must be a positive number".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// A per-frame object location in real-valued pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub y: f64,
    pub frame_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceKey>,
}

impl TrajectoryPoint {
    pub fn new(x: f64, y: f64, frame_index: u64) -> Self {
        Self {
            x,
            y,
            frame_index,
            sequence: None,
        }
    }

    /// The pixel under the point.
    pub fn pixel(&self) -> (i64, i64) {
        (self.x.floor() as i64, self.y.floor() as i64)
    }

    pub(crate) fn ensure_inside(&self, frame: &GrayFrame) -> Result<()> {
        if frame.contains_point(self.x, self.y) {
            Ok(())
        } else {
            Err(Error::PointOutsideFrame {
                x: self.x,
                y: self.y,
                width: frame.width(),
                height: frame.height(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Halt {
    Converged,
    MaxItersReached,
    FrameSaturated,
}

/// Every patch visited and its mean intensity, in visiting order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityTrace {
    pub means: Vec<f64>,
    /// Clipped patches; `boxes[t]` is the region `means[t]` was taken over.
    pub boxes: Vec<PixelRect>,
    pub halt: Halt,
}

/// A patch with a real-valued centre. Rounding only happens in [`Patch::raster`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub center_x: f64,
    pub center_y: f64,
    pub width: u32,
    pub height: u32,
}

impl Patch {
    pub fn around(point: &TrajectoryPoint, width: u32, height: u32) -> Self {
        Self {
            center_x: point.x,
            center_y: point.y,
            width,
            height,
        }
    }

    pub fn grow(&self, delta: u32) -> Self {
        Self {
            width: self.width + delta,
            height: self.height + delta,
            ..*self
        }
    }

    pub fn raster(&self) -> PixelRect {
        PixelRect {
            left: round_half_up(self.center_x - self.width as f64 / 2.0),
            top: round_half_up(self.center_y - self.height as f64 / 2.0),
            width: self.width,
            height: self.height,
        }
    }
}

/// Initial `w0` x `h0` patch centred on the point, before clipping.
pub fn init_box(point: &TrajectoryPoint, config: &PicConfig) -> PixelRect {
    Patch::around(point, config.w0, config.h0).raster()
}

/// Grows a rasterized rect by `delta` around its own centre, before clipping.
///
/// [`pic_box`] keeps the fractional point as the centre instead, so repeated
/// growth does not accumulate rounding; for integer centres the two agree.
pub fn expand(rect: &PixelRect, config: &PicConfig) -> PixelRect {
    Patch {
        center_x: rect.left as f64 + rect.width as f64 / 2.0,
        center_y: rect.top as f64 + rect.height as f64 / 2.0,
        width: rect.width,
        height: rect.height,
    }
    .grow(config.delta)
    .raster()
}

/// Exact `|s1/n1 - s0/n0|` evaluated from integer sums so that shifting every
/// intensity by a constant yields bit-identical deltas.
fn mean_delta((s0, n0): (u64, u64), (s1, n1): (u64, u64)) -> f64 {
    let num = (s1 as i128 * n0 as i128 - s0 as i128 * n1 as i128).unsigned_abs();
    num as f64 / (n0 as f64 * n1 as f64)
}

/// Runs patch intensity convergence for one point.
pub fn pic_box(
    frame: &GrayFrame,
    point: &TrajectoryPoint,
    config: &PicConfig,
) -> Result<(BBox, IntensityTrace)> {
    config.validate()?;
    point.ensure_inside(frame)?;

    let full = frame.bounds();
    let mut patch = Patch::around(point, config.w0, config.h0);
    let first = clip_rect(&patch.raster(), frame)?;
    let mut prev_stats = region_sum(frame, &first)?;

    let mut trace = IntensityTrace {
        means: vec![prev_stats.0 as f64 / prev_stats.1 as f64],
        boxes: vec![first],
        halt: Halt::FrameSaturated,
    };
    if first == full {
        return finish(trace, first);
    }

    for _ in 0..config.max_iters {
        patch = patch.grow(config.delta);
        let rect = clip_rect(&patch.raster(), frame)?;
        let stats = region_sum(frame, &rect)?;
        let previous = *trace.boxes.last().expect("trace is never empty");
        trace.means.push(stats.0 as f64 / stats.1 as f64);
        trace.boxes.push(rect);

        if mean_delta(prev_stats, stats) < config.epsilon {
            trace.halt = Halt::Converged;
            let chosen = if config.return_expanded { rect } else { previous };
            return finish(trace, chosen);
        }
        if rect == full {
            trace.halt = Halt::FrameSaturated;
            return finish(trace, rect);
        }
        prev_stats = stats;
    }

    trace.halt = Halt::MaxItersReached;
    let last = *trace.boxes.last().expect("trace is never empty");
    finish(trace, last)
}

fn finish(trace: IntensityTrace, rect: PixelRect) -> Result<(BBox, IntensityTrace)> {
    Ok((BBox::from_rect(&rect, BoxSource::Pic)?, trace))
}

/// Runs [`pic_box`] over many items in parallel. Output order matches input
/// order and each item fails independently.
pub fn pic_batch<F>(items: &[(F, TrajectoryPoint)], config: &PicConfig) -> Vec<Result<(BBox, IntensityTrace)>>
where
    F: AsRef<GrayFrame> + Sync,
{
    items
        .par_iter()
        .map(|(frame, point)| pic_box(frame.as_ref(), point, config))
        .collect()
}

impl AsRef<GrayFrame> for GrayFrame {
    fn as_ref(&self) -> &GrayFrame {
        self
    }
}
