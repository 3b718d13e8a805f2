//! Dataset assembly.
//!
//! Input layout under the root:
//!
//! ```text
//! d{dataset}/c{camera}/trajectory.csv
//! d{dataset}/c{camera}/frames/frame_000000.png   (or .jpg / .jpeg)
//! ```
//!
//! Output layout:
//!
//! ```text
//! images/{split}/d1_c0_frame_000000.png
//! labels/{split}/d1_c0_frame_000000.txt
//! labels-seg/{split}/d1_c0_frame_000000.txt      (only with a mask provider)
//! manifest.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::dataset::labels::{emit_detection_label, emit_segmentation_label, AnnotationRecord};
use crate::dataset::split::{SequenceKey, Split, SplitPlan};
use crate::dataset::trajectory::{frame_file_name, ingest_trajectory, sample_frames};
use crate::error::{Error, Result};
use crate::imaging::GrayFrame;
use crate::mask::MaskRle;
use crate::pic::{pic_box, PicConfig, TrajectoryPoint};

const TRAJECTORY_FILE: &str = "trajectory.csv";
const FRAMES_DIR: &str = "frames";
const FRAME_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];
const MANIFEST_FILE: &str = "manifest.json";

/// Source of instance masks for box prompts, e.g. a segmentation service.
pub trait MaskProvider: Sync {
    /// One mask per box, in box order, each sized like the frame.
    fn masks(&self, image_path: &Path, frame: &GrayFrame, boxes: &[BBox]) -> Result<Vec<MaskRle>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub stride: u64,
    pub pic: PicConfig,
    /// Worker threads; `None` uses every core.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            stride: 10,
            pic: PicConfig::default(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub frame_index: u64,
    pub x: f64,
    pub y: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceReport {
    pub split: Option<Split>,
    pub annotated_points: usize,
    pub annotated_frames: usize,
    pub sampled_frames: usize,
    pub images: usize,
    pub boxes: usize,
    /// Sampled frames whose image file was missing.
    pub gaps: Vec<u64>,
    pub failures: Vec<PointFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitTotals {
    pub images: usize,
    pub boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestConfig {
    pub stride: u64,
    pub pic: PicConfig,
    pub plan: BTreeMap<SequenceKey, Split>,
    pub segmentation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ManifestConfig,
    pub splits: BTreeMap<Split, SplitTotals>,
    pub sequences: BTreeMap<SequenceKey, SequenceReport>,
}

impl Manifest {
    fn new(plan: &SplitPlan, options: &BuildOptions, segmentation: bool) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: ManifestConfig {
                stride: options.stride,
                pic: options.pic,
                plan: plan.assignments().clone(),
                segmentation,
            },
            splits: BTreeMap::new(),
            sequences: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn total_gaps(&self) -> usize {
        self.sequences.values().map(|s| s.gaps.len()).sum()
    }

    pub fn total_failures(&self) -> usize {
        self.sequences.values().map(|s| s.failures.len()).sum()
    }
}

fn discover_sequences(root: &Path) -> Result<Vec<(SequenceKey, PathBuf)>> {
    let read = |dir: &Path| -> Result<Vec<(String, PathBuf)>> {
        let mut entries = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
                entries.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
            }
        }
        Ok(entries)
    };

    let mut found = Vec::new();
    for (dname, dpath) in read(root)? {
        let Some(dataset) = dname.strip_prefix('d').and_then(|v| v.parse::<u8>().ok()) else {
            continue;
        };
        for (cname, cpath) in read(&dpath)? {
            let Some(camera) = cname.strip_prefix('c').and_then(|v| v.parse::<u8>().ok()) else {
                continue;
            };
            let key = SequenceKey::new(dataset, camera)?;
            found.push((key, cpath));
        }
    }
    found.sort_by_key(|(k, _)| *k);
    Ok(found)
}

/// The image file for a frame in a `frames` directory, trying each supported extension.
pub fn find_frame(dir: &Path, frame_index: u64) -> Option<PathBuf> {
    let stem = frame_file_name(frame_index);
    FRAME_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Samples, annotates and writes every planned sequence under `root` into
/// `out`, returning the manifest that was written alongside.
///
/// Runs are deterministic: identical inputs give byte-identical label files
/// and manifests. A root without sequences yields an empty manifest and
/// writes nothing.
pub fn build_dataset(
    root: &Path,
    out: &Path,
    plan: &SplitPlan,
    options: &BuildOptions,
    masks: Option<&dyn MaskProvider>,
) -> Result<Manifest> {
    options.pic.validate()?;
    if options.stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let mut manifest = Manifest::new(plan, options, masks.is_some());
    let sequences = discover_sequences(root)?;
    if sequences.is_empty() {
        return Ok(manifest);
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let planned: Vec<(SequenceKey, PathBuf, Split)> = sequences
        .into_iter()
        .map(|(key, path)| plan.assign(&key).map(|split| (key, path, split)))
        .collect::<Result<_>>()?;

    for (_, _, split) in &planned {
        if *split == Split::Excluded {
            continue;
        }
        let mut dirs = vec![out.join("images").join(split.as_str()), out.join("labels").join(split.as_str())];
        if masks.is_some() {
            dirs.push(out.join("labels-seg").join(split.as_str()));
        }
        for d in dirs {
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
    }

    let run = || {
        planned
            .par_iter()
            .map(|(key, path, split)| build_sequence(*key, path, *split, out, options, masks))
            .collect::<Vec<_>>()
    };
    let reports = match options.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    };

    for ((key, _, split), report) in planned.iter().zip(reports) {
        let report = report?;
        if *split != Split::Excluded {
            let totals = manifest.splits.entry(*split).or_default();
            totals.images += report.images;
            totals.boxes += report.boxes;
        }
        manifest.sequences.insert(*key, report);
    }

    let path = out.join(MANIFEST_FILE);
    write_file(&path, manifest.to_json()?.as_bytes())?;
    Ok(manifest)
}

fn build_sequence(
    key: SequenceKey,
    dir: &Path,
    split: Split,
    out: &Path,
    options: &BuildOptions,
    masks: Option<&dyn MaskProvider>,
) -> Result<SequenceReport> {
    let mut report = SequenceReport {
        split: Some(split),
        ..Default::default()
    };
    if split == Split::Excluded {
        return Ok(report);
    }

    let points = ingest_trajectory(dir.join(TRAJECTORY_FILE), Some(key))?;
    report.annotated_points = points.len();
    let sampled = sample_frames(&points, options.stride)?;

    report.annotated_frames = points.iter().map(|p| p.frame_index).collect::<BTreeSet<_>>().len();

    let mut by_frame: BTreeMap<u64, Vec<TrajectoryPoint>> = BTreeMap::new();
    for p in sampled {
        by_frame.entry(p.frame_index).or_default().push(p);
    }
    report.sampled_frames = by_frame.len();

    let frames_dir = dir.join(FRAMES_DIR);
    for (frame_index, frame_points) in by_frame {
        let Some(src) = find_frame(&frames_dir, frame_index) else {
            log::warn!("{key}: frame {frame_index} is missing");
            report.gaps.push(frame_index);
            continue;
        };
        let frame = GrayFrame::load(&src)?;

        let mut boxes = Vec::with_capacity(frame_points.len());
        for p in &frame_points {
            match pic_box(&frame, p, &options.pic) {
                Ok((b, _)) => boxes.push(b),
                Err(e) => report.failures.push(PointFailure {
                    frame_index,
                    x: p.x,
                    y: p.y,
                    reason: e.to_string(),
                }),
            }
        }

        let ext = src.extension().and_then(|e| e.to_str()).unwrap_or("png");
        let stem = format!("{}_{}", key.slug(), frame_file_name(frame_index));
        let image_rel = format!("images/{split}/{stem}.{ext}");
        let image_dst = out.join(&image_rel);
        fs::copy(&src, &image_dst).map_err(|e| Error::io(&image_dst, e))?;

        let mut record = AnnotationRecord {
            image_path: image_rel,
            frame_index,
            boxes,
            masks: None,
            image_size: (frame.width(), frame.height()),
        };
        let label = emit_detection_label(&record)?;
        write_file(&out.join(format!("labels/{split}/{stem}.txt")), label.as_bytes())?;

        if let Some(provider) = masks {
            let rles = if record.boxes.is_empty() {
                Vec::new()
            } else {
                provider.masks(&src, &frame, &record.boxes)?
            };
            record.masks = Some(rles);
            let seg = emit_segmentation_label(&record)?;
            write_file(&out.join(format!("labels-seg/{split}/{stem}.txt")), seg.as_bytes())?;
        }

        report.images += 1;
        report.boxes += record.boxes.len();
    }
    Ok(report)
}
