use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use pointbox_core::dataset::{emit_detection_label, find_frame, frame_file_name, ingest_trajectory, sample_frames, AnnotationRecord};
use pointbox_core::{pic_box, BBox, GrayFrame, IntensityTrace, PicConfig, TrajectoryPoint};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{resolve_dump_traces, resolve_stride, FileConfig, JobsArgs, PicArgs};
use crate::files;
use crate::Status;

#[derive(Debug, clap::Args)]
pub struct AnnotateArgs {
    /// Directory of frame_NNNNNN.{png,jpg} images
    #[arg(long)]
    pub frames: PathBuf,
    /// CSV with a `frame,x,y` header
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Output directory; labels go to labels/, traces to traces/
    #[arg(long, env = "POINTBOX_OUT")]
    pub out: PathBuf,
    /// Keep every k-th annotated frame [default: 1]
    #[arg(long, env = "POINTBOX_STRIDE")]
    pub stride: Option<u64>,
    /// Also write each point's expansion trace as JSON
    #[arg(long, env = "POINTBOX_DUMP_TRACES")]
    pub dump_traces: bool,
    #[command(flatten)]
    pub pic: PicArgs,
    #[command(flatten)]
    pub jobs: JobsArgs,
}

/// Contents of a `traces/<frame>.json` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDump {
    pub frame_index: u64,
    pub image_size: (u32, u32),
    pub config: PicConfig,
    pub points: Vec<PointTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTrace {
    pub x: f64,
    pub y: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub trace: IntensityTrace,
}

struct FrameOutcome {
    stem: String,
    label: Option<String>,
    dump: Option<TraceDump>,
    boxes: usize,
    failures: Vec<String>,
}

fn annotate_frame(frames_dir: &std::path::Path, frame_index: u64, points: &[TrajectoryPoint], config: &PicConfig) -> FrameOutcome {
    let stem = frame_file_name(frame_index);
    let mut outcome = FrameOutcome {
        stem: stem.clone(),
        label: None,
        dump: None,
        boxes: 0,
        failures: Vec::new(),
    };
    let Some(path) = find_frame(frames_dir, frame_index) else {
        outcome.failures.push(format!("{stem}: image not found in {}", frames_dir.display()));
        return outcome;
    };
    let frame = match GrayFrame::load(&path) {
        Ok(f) => f,
        Err(e) => {
            outcome.failures.push(format!("{stem}: {e}"));
            return outcome;
        }
    };

    let mut boxes = Vec::with_capacity(points.len());
    let mut traces = Vec::with_capacity(points.len());
    for p in points {
        match pic_box(&frame, p, config) {
            Ok((bbox, trace)) => {
                boxes.push(bbox);
                traces.push(PointTrace { x: p.x, y: p.y, bbox, trace });
            }
            Err(e) => outcome.failures.push(format!("{stem}: point ({}, {}): {e}", p.x, p.y)),
        }
    }
    let record = AnnotationRecord {
        image_path: path.display().to_string(),
        frame_index,
        boxes,
        masks: None,
        image_size: (frame.width(), frame.height()),
    };
    match emit_detection_label(&record) {
        Ok(label) => outcome.label = Some(label),
        Err(e) => outcome.failures.push(format!("{stem}: {e}")),
    }
    outcome.boxes = record.boxes.len();
    outcome.dump = Some(TraceDump {
        frame_index,
        image_size: record.image_size,
        config: *config,
        points: traces,
    });
    outcome
}

pub fn run(args: AnnotateArgs, file: &FileConfig) -> anyhow::Result<Status> {
    let config = args.pic.resolve(file)?;
    let stride = resolve_stride(args.stride, file, 1)?;
    let jobs = args.jobs.resolve(file)?;
    let dump = resolve_dump_traces(args.dump_traces, file);
    if !args.frames.is_dir() {
        anyhow::bail!("{} is not a directory", args.frames.display());
    }

    let points = ingest_trajectory(&args.trajectory, None)?;
    let mut by_frame: BTreeMap<u64, Vec<TrajectoryPoint>> = BTreeMap::new();
    for p in sample_frames(&points, stride)? {
        by_frame.entry(p.frame_index).or_default().push(p);
    }
    let work: Vec<_> = by_frame.into_iter().collect();

    let outcomes = files::with_jobs(jobs, || {
        work.par_iter()
            .map(|(index, pts)| annotate_frame(&args.frames, *index, pts, &config))
            .collect::<Vec<_>>()
    })?;

    let labels_dir = args.out.join("labels");
    let traces_dir = args.out.join("traces");
    files::create_dir(&labels_dir)?;
    if dump {
        files::create_dir(&traces_dir)?;
    }
    let (mut frames, mut boxes, mut failures) = (0, 0, Vec::new());
    for o in outcomes {
        if let Some(label) = &o.label {
            files::write(&labels_dir.join(format!("{}.txt", o.stem)), label)?;
            frames += 1;
            boxes += o.boxes;
        }
        if let (true, Some(d)) = (dump, &o.dump) {
            let json = serde_json::to_string_pretty(d).context("serializing trace")?;
            files::write(&traces_dir.join(format!("{}.json", o.stem)), json + "\n")?;
        }
        failures.extend(o.failures);
    }

    println!("{frames} frames labelled, {boxes} boxes");
    if failures.is_empty() {
        return Ok(Status::Success);
    }
    eprintln!("{} items failed:", failures.len());
    for f in &failures {
        eprintln!("  {f}");
    }
    Ok(Status::ItemFailures)
}
