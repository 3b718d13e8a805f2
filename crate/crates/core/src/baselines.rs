//! Reference extractors: a fixed-size box and intensity thresholding with
//! connected components.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, BoxSource};
use crate::error::{Error, Result};
use crate::imaging::{clip_rect, round_half_up, GrayFrame, PixelRect};
use crate::pic::TrajectoryPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedConfig {
    pub width: u32,
    pub height: u32,
}

impl Default for FixedConfig {
    fn default() -> Self {
        Self {
            width: 50,
            height: 50,
        }
    }
}

impl FixedConfig {
    pub fn square(size: u32) -> Self {
        Self {
            width: size,
            height: size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("fixed box size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which side of the threshold counts as object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Pixels strictly darker than the threshold are foreground.
    ForegroundBelow,
    /// Pixels strictly brighter than the threshold are foreground.
    ForegroundAbove,
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "foreground_below" | "below" => Ok(Polarity::ForegroundBelow),
            "foreground_above" | "above" => Ok(Polarity::ForegroundAbove),
            other => Err(Error::Config(format!("unknown polarity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub threshold: u8,
    pub polarity: Polarity,
    pub connectivity: Connectivity,
    pub search_radius: u32,
    pub fallback_size: u32,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            threshold: 150,
            polarity: Polarity::ForegroundBelow,
            connectivity: Connectivity::Eight,
            search_radius: 50,
            fallback_size: 50,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.search_radius == 0 || self.fallback_size == 0 {
            return Err(Error::Config(
                "search_radius and fallback_size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn is_foreground(&self, v: u8) -> bool {
        match self.polarity {
            Polarity::ForegroundBelow => v < self.threshold,
            Polarity::ForegroundAbove => v > self.threshold,
        }
    }
}

/// Result of the threshold extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdOutcome {
    pub bbox: BBox,
    /// No component qualified; `bbox` is a fixed box of `fallback_size`.
    pub fallback: bool,
}

fn centred_box(
    point: &TrajectoryPoint,
    frame: &GrayFrame,
    width: u32,
    height: u32,
    source: BoxSource,
) -> Result<BBox> {
    point.ensure_inside(frame)?;
    let rect = PixelRect {
        left: round_half_up(point.x - width as f64 / 2.0),
        top: round_half_up(point.y - height as f64 / 2.0),
        width,
        height,
    };
    BBox::from_rect(&clip_rect(&rect, frame)?, source)
}

/// A box of fixed size centred on the point, clipped to the frame.
pub fn fixed_box(point: &TrajectoryPoint, frame: &GrayFrame, config: &FixedConfig) -> Result<BBox> {
    config.validate()?;
    centred_box(point, frame, config.width, config.height, BoxSource::Fixed)
}

/// Binarizes the frame and boxes the connected component under (or nearest
/// to) the point.
pub fn threshold_box(
    frame: &GrayFrame,
    point: &TrajectoryPoint,
    config: &ThresholdConfig,
) -> Result<ThresholdOutcome> {
    config.validate()?;
    point.ensure_inside(frame)?;

    let seed = match nearest_foreground(frame, point, config) {
        Some(seed) => seed,
        None => {
            let bbox = centred_box(
                point,
                frame,
                config.fallback_size,
                config.fallback_size,
                BoxSource::Threshold,
            )?;
            return Ok(ThresholdOutcome {
                bbox,
                fallback: true,
            });
        }
    };

    let rect = component_bounds(frame, seed, config);
    Ok(ThresholdOutcome {
        bbox: BBox::from_rect(&rect, BoxSource::Threshold)?,
        fallback: false,
    })
}

/// Foreground pixel closest to the point's pixel within the search radius.
/// Ties go to the first pixel in row-major order.
fn nearest_foreground(
    frame: &GrayFrame,
    point: &TrajectoryPoint,
    config: &ThresholdConfig,
) -> Option<(u32, u32)> {
    let (px, py) = point.pixel();
    if config.is_foreground(frame.get(px as u32, py as u32)) {
        return Some((px as u32, py as u32));
    }
    let r = config.search_radius as i64;
    let r2 = r * r;
    let x0 = (px - r).max(0);
    let x1 = (px + r).min(frame.width() as i64 - 1);
    let y0 = (py - r).max(0);
    let y1 = (py + r).min(frame.height() as i64 - 1);

    let mut best: Option<(i64, (u32, u32))> = None;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d2 = (x - px).pow(2) + (y - py).pow(2);
            if d2 > r2 || best.is_some_and(|(bd, _)| d2 >= bd) {
                continue;
            }
            if config.is_foreground(frame.get(x as u32, y as u32)) {
                best = Some((d2, (x as u32, y as u32)));
            }
        }
    }
    best.map(|(_, p)| p)
}

/// Flood-fills the component containing `seed` and returns its tight bounds.
fn component_bounds(frame: &GrayFrame, seed: (u32, u32), config: &ThresholdConfig) -> PixelRect {
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let mut visited = vec![false; (w * h) as usize];
    let mut queue = VecDeque::new();
    let idx = |x: i64, y: i64| (y * w + x) as usize;

    let (sx, sy) = (seed.0 as i64, seed.1 as i64);
    visited[idx(sx, sy)] = true;
    queue.push_back((sx, sy));
    let (mut min_x, mut min_y, mut max_x, mut max_y) = (sx, sy, sx, sy);

    while let Some((x, y)) = queue.pop_front() {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
        for &(dx, dy) in config.connectivity.offsets() {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let i = idx(nx, ny);
            if !visited[i] && config.is_foreground(frame.get(nx as u32, ny as u32)) {
                visited[i] = true;
                queue.push_back((nx, ny));
            }
        }
    }

    PixelRect {
        left: min_x,
        top: min_y,
        width: (max_x - min_x + 1) as u32,
        height: (max_y - min_y + 1) as u32,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(blobs: &[(u32, u32, u32, u32)]) -> GrayFrame {
        GrayFrame::from_fn(200, 200, |x, y| {
            if blobs
                .iter()
                .any(|&(l, t, w, h)| x >= l && x < l + w && y >= t && y < t + h)
            {
                50
            } else {
                200
            }
        })
        .unwrap()
    }

    #[test]
    fn fixed_box_interior() {
        let f = GrayFrame::filled(1920, 1080, 0).unwrap();
        let b = fixed_box(&TrajectoryPoint::new(500.0, 500.0, 0), &f, &FixedConfig::default()).unwrap();
        assert_eq!((b.left, b.top, b.width, b.height), (475, 475, 50, 50));
        assert_eq!(b.source, BoxSource::Fixed);
        assert_eq!(b.area(), 2500);
    }

    #[test]
    fn fixed_box_clipped_at_corner() {
        let f = GrayFrame::filled(1920, 1080, 0).unwrap();
        let b = fixed_box(&TrajectoryPoint::new(10.0, 10.0, 0), &f, &FixedConfig::default()).unwrap();
        assert_eq!((b.left, b.top, b.width, b.height), (0, 0, 35, 35));
    }

    #[test]
    fn fixed_box_single_pixel() {
        let f = GrayFrame::filled(20, 20, 0).unwrap();
        let b = fixed_box(&TrajectoryPoint::new(7.6, 3.2, 0), &f, &FixedConfig::square(1)).unwrap();
        assert_eq!((b.left, b.top, b.width, b.height), (7, 3, 1, 1));
    }

    #[test]
    fn fixed_box_outside_errors() {
        let f = GrayFrame::filled(20, 20, 0).unwrap();
        assert!(fixed_box(&TrajectoryPoint::new(25.0, 3.0, 0), &f, &FixedConfig::default()).is_err());
    }

    #[test]
    fn threshold_single_square() {
        let f = scene(&[(95, 95, 10, 10)]);
        let out = threshold_box(&f, &TrajectoryPoint::new(100.0, 100.0, 0), &ThresholdConfig::default()).unwrap();
        assert!(!out.fallback);
        assert_eq!(out.bbox.rect(), PixelRect::new(95, 95, 10, 10).unwrap());
        assert_eq!(out.bbox.source, BoxSource::Threshold);
    }

    #[test]
    fn threshold_uniform_falls_back() {
        let f = GrayFrame::filled(200, 200, 200).unwrap();
        let out = threshold_box(&f, &TrajectoryPoint::new(100.0, 100.0, 0), &ThresholdConfig::default()).unwrap();
        assert!(out.fallback);
        assert_eq!(out.bbox.rect(), PixelRect::new(75, 75, 50, 50).unwrap());
    }

    #[test]
    fn containment_beats_size() {
        // Point sits on the small blob A; the large blob B is nearby.
        let f = scene(&[(40, 40, 4, 4), (50, 30, 60, 60)]);
        let out = threshold_box(&f, &TrajectoryPoint::new(41.0, 41.0, 0), &ThresholdConfig::default()).unwrap();
        assert_eq!(out.bbox.rect(), PixelRect::new(40, 40, 4, 4).unwrap());
    }

    #[test]
    fn nearest_component_within_radius() {
        let f = scene(&[(120, 100, 5, 5), (60, 100, 5, 5)]);
        // Point at (100,102): blob at x=120 is 20 px away, blob at x<=64 is 36 px away.
        let out = threshold_box(&f, &TrajectoryPoint::new(100.0, 102.0, 0), &ThresholdConfig::default()).unwrap();
        assert!(!out.fallback);
        assert_eq!(out.bbox.rect(), PixelRect::new(120, 100, 5, 5).unwrap());
        let tight = ThresholdConfig { search_radius: 10, ..Default::default() };
        assert!(threshold_box(&f, &TrajectoryPoint::new(100.0, 102.0, 0), &tight).unwrap().fallback);
    }

    #[test]
    fn diagonal_pixels_join_only_with_eight_connectivity() {
        let f = GrayFrame::from_fn(10, 10, |x, y| if x == y && x < 4 { 0 } else { 255 }).unwrap();
        let p = TrajectoryPoint::new(0.5, 0.5, 0);
        let eight = threshold_box(&f, &p, &ThresholdConfig::default()).unwrap();
        assert_eq!(eight.bbox.rect(), PixelRect::new(0, 0, 4, 4).unwrap());
        let four = ThresholdConfig { connectivity: Connectivity::Four, ..Default::default() };
        let four = threshold_box(&f, &p, &four).unwrap();
        assert_eq!(four.bbox.rect(), PixelRect::new(0, 0, 1, 1).unwrap());
    }

    #[test]
    fn polarity_above() {
        let f = GrayFrame::from_fn(50, 50, |x, y| if (10..20).contains(&x) && (5..9).contains(&y) { 240 } else { 20 }).unwrap();
        let c = ThresholdConfig { polarity: Polarity::ForegroundAbove, ..Default::default() };
        let out = threshold_box(&f, &TrajectoryPoint::new(12.0, 6.0, 0), &c).unwrap();
        assert_eq!(out.bbox.rect(), PixelRect::new(10, 5, 10, 4).unwrap());
    }

    #[test]
    fn tight_box_has_foreground_unless_fallback() {
        let f = scene(&[(10, 10, 3, 7), (150, 150, 20, 2)]);
        for (x, y) in [(11.0, 12.0), (30.0, 30.0), (160.0, 140.0), (100.0, 100.0)] {
            let c = ThresholdConfig::default();
            let out = threshold_box(&f, &TrajectoryPoint::new(x, y, 0), &c).unwrap();
            if !out.fallback {
                let b = out.bbox;
                let any = (b.top..b.bottom())
                    .any(|yy| (b.left..b.right()).any(|xx| c.is_foreground(f.get(xx, yy))));
                assert!(any);
            }
        }
    }
}
