//! Synthetic scenes with exact ground truth, and a closed-form intensity
//! trace for single-rectangle scenes that never reads a pixel.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, BoxSource};
use crate::error::{Error, Result};
use crate::imaging::{clip_rect, round_half_up, GrayFrame, PixelRect};
use crate::pic::{Halt, IntensityTrace, PicConfig, TrajectoryPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub shape: Shape,
    pub center_x: f64,
    pub center_y: f64,
    pub width: u32,
    pub height: u32,
    pub intensity: u8,
    /// Allows the target to extend past the frame edge.
    #[serde(default)]
    pub border_crossing: bool,
}

impl Target {
    pub fn rect(center_x: f64, center_y: f64, width: u32, height: u32, intensity: u8) -> Self {
        Self {
            shape: Shape::Rect,
            center_x,
            center_y,
            width,
            height,
            intensity,
            border_crossing: false,
        }
    }

    /// Pixel footprint of the target's bounding rectangle, before clipping.
    pub fn extent(&self) -> PixelRect {
        PixelRect {
            left: round_half_up(self.center_x - self.width as f64 / 2.0),
            top: round_half_up(self.center_y - self.height as f64 / 2.0),
            width: self.width,
            height: self.height,
        }
    }

    fn covers(&self, x: i64, y: i64) -> bool {
        let ext = self.extent();
        match self.shape {
            Shape::Rect => ext.contains_pixel(x, y),
            Shape::Ellipse => {
                // Pixel centres inside the ellipse inscribed in the extent.
                let cx = ext.left as f64 + ext.width as f64 / 2.0;
                let cy = ext.top as f64 + ext.height as f64 / 2.0;
                let dx = (x as f64 + 0.5 - cx) / (ext.width as f64 / 2.0);
                let dy = (y as f64 + 0.5 - cy) / (ext.height as f64 / 2.0);
                dx * dx + dy * dy <= 1.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub background: u8,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub noise: Option<Noise>,
}

impl SceneSpec {
    pub fn blank(width: u32, height: u32, background: u8) -> Self {
        Self {
            width,
            height,
            background,
            targets: Vec::new(),
            noise: None,
        }
    }

    pub fn with_target(mut self, target: Target) -> Self {
        self.targets.push(target);
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("scene dimensions must be positive".into()));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.width == 0 || t.height == 0 {
                return Err(Error::InvalidInput(format!("target {i} has zero size")));
            }
            if !t.border_crossing && !t.extent().is_clipped_to(self.width, self.height) {
                return Err(Error::InvalidInput(format!(
                    "target {i} extends past the frame; mark it border_crossing to allow this"
                )));
            }
        }
        if let Some(n) = self.noise {
            if !(n.sigma >= 0.0) || !n.sigma.is_finite() {
                return Err(Error::InvalidInput("noise sigma must be finite and >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Rasterizes the scene. Later targets paint over earlier ones; each target
/// still reports its own full extent (clipped to the frame).
pub fn render(spec: &SceneSpec) -> Result<(GrayFrame, Vec<BBox>)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut data = vec![spec.background; w as usize * h as usize];
    let mut truths = Vec::with_capacity(spec.targets.len());

    for t in &spec.targets {
        let ext = t.extent();
        let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        let ys = ext.top.max(0)..ext.bottom().min(h as i64);
        for y in ys {
            for x in ext.left.max(0)..ext.right().min(w as i64) {
                if t.covers(x, y) {
                    data[y as usize * w as usize + x as usize] = t.intensity;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        if x0 == i64::MAX {
            return Err(Error::InvalidInput("target has no pixels inside the frame".into()));
        }
        truths.push(BBox::new(
            x0 as u32,
            y0 as u32,
            (x1 - x0 + 1) as u32,
            (y1 - y0 + 1) as u32,
            BoxSource::Human,
        )?);
    }

    if let Some(noise) = spec.noise.filter(|n| n.sigma > 0.0) {
        let normal = Normal::new(0.0, noise.sigma)
            .map_err(|e| Error::InvalidInput(format!("noise: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        for v in data.iter_mut() {
            let noisy = *v as f64 + normal.sample(&mut rng);
            *v = noisy.round().clamp(0.0, 255.0) as u8;
        }
    }

    Ok((GrayFrame::new(w, h, data)?, truths))
}

/// Closed-form trace for a noise-free scene with one rectangular target.
///
/// Each patch mean is `(b * A + (f - b) * overlap) / A`, with `A` the clipped
/// patch area and `overlap` its intersection with the target, both from
/// interval arithmetic on rectangle edges.
pub fn oracle_trace(spec: &SceneSpec, point: &TrajectoryPoint, config: &PicConfig) -> Result<IntensityTrace> {
    spec.validate()?;
    config.validate()?;
    if spec.noise.is_some_and(|n| n.sigma > 0.0) {
        return Err(Error::InvalidInput("oracle needs a noise-free scene".into()));
    }
    let target = match spec.targets.as_slice() {
        [t] if t.shape == Shape::Rect => t,
        _ => {
            return Err(Error::InvalidInput(
                "oracle needs exactly one rectangular target".into(),
            ))
        }
    };
    let frame_w = spec.width as i64;
    let frame_h = spec.height as i64;
    if !(point.x >= 0.0 && point.y >= 0.0 && point.x < frame_w as f64 && point.y < frame_h as f64) {
        return Err(Error::PointOutsideFrame {
            x: point.x,
            y: point.y,
            width: spec.width,
            height: spec.height,
        });
    }

    let b = spec.background as i64;
    let f = target.intensity as i64;
    let tx0 = (target.center_x - target.width as f64 / 2.0 + 0.5).floor() as i64;
    let ty0 = (target.center_y - target.height as f64 / 2.0 + 0.5).floor() as i64;
    let (tx1, ty1) = (tx0 + target.width as i64, ty0 + target.height as i64);

    // Clipped patch edges (x0, y0, x1, y1), half-open.
    let patch = |w: i64, h: i64| -> (i64, i64, i64, i64) {
        let x0 = (point.x - w as f64 / 2.0 + 0.5).floor() as i64;
        let y0 = (point.y - h as f64 / 2.0 + 0.5).floor() as i64;
        (x0.max(0), y0.max(0), (x0 + w).min(frame_w), (y0 + h).min(frame_h))
    };
    let stats = |(x0, y0, x1, y1): (i64, i64, i64, i64)| -> (i64, i64) {
        let area = (x1 - x0) * (y1 - y0);
        let ow = (x1.min(tx1) - x0.max(tx0)).max(0);
        let oh = (y1.min(ty1) - y0.max(ty0)).max(0);
        (b * area + (f - b) * ow * oh, area)
    };
    let as_rect = |(x0, y0, x1, y1): (i64, i64, i64, i64)| PixelRect {
        left: x0,
        top: y0,
        width: (x1 - x0) as u32,
        height: (y1 - y0) as u32,
    };
    let full = (0, 0, frame_w, frame_h);

    let (mut w, mut h) = (config.w0 as i64, config.h0 as i64);
    let mut edges = patch(w, h);
    let mut prev = stats(edges);
    let mut trace = IntensityTrace {
        means: vec![prev.0 as f64 / prev.1 as f64],
        boxes: vec![as_rect(edges)],
        halt: Halt::FrameSaturated,
    };
    if edges == full {
        return Ok(trace);
    }
    for _ in 0..config.max_iters {
        w += config.delta as i64;
        h += config.delta as i64;
        edges = patch(w, h);
        let cur = stats(edges);
        trace.means.push(cur.0 as f64 / cur.1 as f64);
        trace.boxes.push(as_rect(edges));
        // |s1/a1 - s0/a0| < eps  <=>  |s1*a0 - s0*a1| / (a0*a1) < eps
        let num = (cur.0 as i128 * prev.1 as i128 - prev.0 as i128 * cur.1 as i128).unsigned_abs();
        if (num as f64) / (prev.1 as f64 * cur.1 as f64) < config.epsilon {
            trace.halt = Halt::Converged;
            return Ok(trace);
        }
        if edges == full {
            trace.halt = Halt::FrameSaturated;
            return Ok(trace);
        }
        prev = cur;
    }
    trace.halt = Halt::MaxItersReached;
    Ok(trace)
}

/// Box a tracer would report for `trace`: the patch before the halting step
/// on convergence, otherwise the last patch.
pub fn trace_answer(trace: &IntensityTrace, return_expanded: bool) -> PixelRect {
    let n = trace.boxes.len();
    match trace.halt {
        Halt::Converged if !return_expanded => trace.boxes[n - 2],
        _ => trace.boxes[n - 1],
    }
}

/// Clipped ground-truth rect of a target.
pub fn target_rect(spec: &SceneSpec, target: &Target) -> Result<PixelRect> {
    let frame = GrayFrame::filled(spec.width, spec.height, 0)?;
    clip_rect(&target.extent(), &frame)
}
