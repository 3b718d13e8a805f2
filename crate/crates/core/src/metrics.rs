//! Box overlap, per-method evaluation and extractor timing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{fixed_box, threshold_box, FixedConfig, ThresholdConfig};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::imaging::GrayFrame;
use crate::pic::{pic_box, PicConfig, TrajectoryPoint};

/// Intersection over union on integer pixel areas.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    if a.area() == 0 || b.area() == 0 {
        return Err(Error::InvalidInput("iou of a zero-area box".into()));
    }
    let inter = a.rect().intersection_area(&b.rect());
    let union = a.area() + b.area() - inter;
    Ok(inter as f64 / union as f64)
}

/// Anything that turns a frame and a point into a box.
pub trait Extractor: Sync {
    fn name(&self) -> &str;
    fn extract(&self, frame: &GrayFrame, point: &TrajectoryPoint) -> Result<BBox>;
}

pub struct PicExtractor(pub PicConfig);

impl Extractor for PicExtractor {
    fn name(&self) -> &str {
        "pic"
    }

    fn extract(&self, frame: &GrayFrame, point: &TrajectoryPoint) -> Result<BBox> {
        pic_box(frame, point, &self.0).map(|(b, _)| b)
    }
}

pub struct FixedExtractor(pub FixedConfig);

impl Extractor for FixedExtractor {
    fn name(&self) -> &str {
        "fixed"
    }

    fn extract(&self, frame: &GrayFrame, point: &TrajectoryPoint) -> Result<BBox> {
        fixed_box(point, frame, &self.0)
    }
}

pub struct ThresholdExtractor(pub ThresholdConfig);

impl Extractor for ThresholdExtractor {
    fn name(&self) -> &str {
        "threshold"
    }

    fn extract(&self, frame: &GrayFrame, point: &TrajectoryPoint) -> Result<BBox> {
        threshold_box(frame, point, &self.0).map(|o| o.bbox)
    }
}

/// Wraps a closure as a named extractor.
pub struct FnExtractor<F> {
    name: String,
    f: F,
}

impl<F> FnExtractor<F>
where
    F: Fn(&GrayFrame, &TrajectoryPoint) -> Result<BBox> + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self {
            name: name.into(),
            f,
        }
    }
}

impl<F> Extractor for FnExtractor<F>
where
    F: Fn(&GrayFrame, &TrajectoryPoint) -> Result<BBox> + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn extract(&self, frame: &GrayFrame, point: &TrajectoryPoint) -> Result<BBox> {
        (self.f)(frame, point)
    }
}

/// One evaluation sample: a decoded frame, the guiding point, the reference box.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    pub frame: Arc<GrayFrame>,
    pub point: TrajectoryPoint,
    pub truth: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub method: String,
    pub predicted: Option<BBox>,
    pub truth: BBox,
    pub iou: f64,
    /// Seconds spent inside the extractor call.
    pub elapsed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_iou: f64,
    pub mean_elapsed: f64,
    pub n: usize,
    #[serde(default)]
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub records: Vec<EvalRecord>,
    pub summaries: Vec<MethodSummary>,
}

/// Runs every method on every item. Calls are timed one at a time on the
/// calling thread. A failed extraction scores zero and is kept.
pub fn evaluate(items: &[EvalItem], methods: &[&dyn Extractor]) -> Evaluation {
    let mut records = Vec::with_capacity(items.len() * methods.len());
    for method in methods {
        for item in items {
            let start = Instant::now();
            let outcome = method.extract(&item.frame, &item.point);
            let elapsed = start.elapsed().as_secs_f64();
            let record = match outcome.and_then(|b| iou(&b, &item.truth).map(|v| (b, v))) {
                Ok((predicted, score)) => EvalRecord {
                    item_id: item.id.clone(),
                    method: method.name().to_string(),
                    predicted: Some(predicted),
                    truth: item.truth,
                    iou: score,
                    elapsed,
                    failure: None,
                },
                Err(e) => EvalRecord {
                    item_id: item.id.clone(),
                    method: method.name().to_string(),
                    predicted: None,
                    truth: item.truth,
                    iou: 0.0,
                    elapsed,
                    failure: Some(e.to_string()),
                },
            };
            records.push(record);
        }
    }
    let summaries = summarize(&records);
    Evaluation { records, summaries }
}

/// Per-method means, in order of first appearance.
pub fn summarize(records: &[EvalRecord]) -> Vec<MethodSummary> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry(&r.method)
            .or_insert_with(|| {
                order.push(r.method.as_str());
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|name| {
            let group = &groups[name];
            MethodSummary {
                method: name.to_string(),
                mean_iou: order_free_mean(group.iter().map(|r| r.iou)),
                mean_elapsed: order_free_mean(group.iter().map(|r| r.elapsed)),
                n: group.len(),
                failures: group.iter().filter(|r| r.failure.is_some()).count(),
            }
        })
        .collect()
}

/// Mean of values summed in sorted order, so the result does not depend on
/// the order the values arrive in.
fn order_free_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median seconds per call over `repeats` runs (lower median for even counts).
pub fn time_extractor(
    extractor: &dyn Extractor,
    frame: &GrayFrame,
    point: &TrajectoryPoint,
    repeats: usize,
) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let samples = (0..repeats).map(|_| {
        let start = Instant::now();
        let _ = std::hint::black_box(extractor.extract(frame, point));
        start.elapsed().as_secs_f64()
    });
    Ok(median(samples.collect()))
}

pub(crate) fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    samples[(samples.len() - 1) / 2]
}

/// Fixed-width text table of summaries.
pub fn format_table(summaries: &[MethodSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>12} {:>14} {:>8} {:>9}",
        "method", "mean_iou", "runtime_s", "n", "failures"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<16} {:>12.3} {:>14.6} {:>8} {:>9}",
            s.method, s.mean_iou, s.mean_elapsed, s.n, s.failures
        );
    }
    out
}
