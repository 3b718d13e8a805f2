use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use pointbox_core::baselines::{FixedConfig, ThresholdConfig};
use pointbox_core::dataset::{denormalize, find_frame, ingest_trajectory, parse_detection_label};
use pointbox_core::metrics::{evaluate, format_table, EvalItem, Evaluation, Extractor, FixedExtractor, PicExtractor, ThresholdExtractor};
use pointbox_core::{BBox, BoxSource, GrayFrame, PicConfig, TrajectoryPoint};
use serde::Serialize;

use crate::config::{BaselineArgs, FileConfig, PicArgs};
use crate::files;
use crate::Status;

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Directory of frame_NNNNNN.{png,jpg} images
    #[arg(long)]
    pub frames: PathBuf,
    /// CSV with a `frame,x,y` header
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Directory of reference labels named frame_NNNNNN.txt; only these frames are scored
    #[arg(long)]
    pub truth: PathBuf,
    /// Methods to compare, from pic, fixed, threshold
    #[arg(long, value_delimiter = ',', default_value = "pic,fixed,threshold")]
    pub methods: Vec<String>,
    /// Where summary.json and records.csv are written
    #[arg(long, env = "POINTBOX_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub pic: PicArgs,
    #[command(flatten)]
    pub baselines: BaselineArgs,
}

#[derive(Serialize)]
struct Summary<'a> {
    items: usize,
    pic: PicConfig,
    threshold: ThresholdConfig,
    fixed: FixedConfig,
    methods: &'a [pointbox_core::metrics::MethodSummary],
}

/// Pairs each point with the reference box whose centre is nearest. Every
/// box must be claimed by exactly one point.
fn pair(stem: &str, points: &[TrajectoryPoint], truth: &[BBox]) -> anyhow::Result<Vec<(TrajectoryPoint, BBox)>> {
    if points.len() != truth.len() {
        bail!("{stem}: {} trajectory points but {} reference boxes", points.len(), truth.len());
    }
    let mut claimed = vec![false; truth.len()];
    let mut pairs = Vec::with_capacity(points.len());
    for p in points {
        let distance = |b: &BBox| {
            let cx = b.left as f64 + b.width as f64 / 2.0;
            let cy = b.top as f64 + b.height as f64 / 2.0;
            (cx - p.x).powi(2) + (cy - p.y).powi(2)
        };
        let (best, _) = truth
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| distance(a).total_cmp(&distance(b)))
            .expect("counts checked above");
        if std::mem::replace(&mut claimed[best], true) {
            bail!("{stem}: two points pair with the same reference box");
        }
        pairs.push((*p, truth[best]));
    }
    Ok(pairs)
}

fn load_items(args: &EvaluateArgs) -> anyhow::Result<Vec<EvalItem>> {
    let mut by_frame: BTreeMap<u64, Vec<TrajectoryPoint>> = BTreeMap::new();
    for p in ingest_trajectory(&args.trajectory, None)? {
        by_frame.entry(p.frame_index).or_default().push(p);
    }

    let mut truth_files = BTreeMap::new();
    for entry in std::fs::read_dir(&args.truth).with_context(|| format!("reading {}", args.truth.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let index = files::frame_index_of(&stem)
                .with_context(|| format!("{}: expected a frame_NNNNNN.txt name", path.display()))?;
            truth_files.insert(index, (stem, path));
        }
    }
    if truth_files.is_empty() {
        bail!("no reference labels in {}", args.truth.display());
    }

    let mut items = Vec::new();
    for (index, (stem, path)) in truth_files {
        let points = by_frame.get(&index).map(Vec::as_slice).unwrap_or_default();
        let image = find_frame(&args.frames, index).with_context(|| format!("{stem}: image not found"))?;
        let frame = Arc::new(GrayFrame::load(&image)?);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let truth = parse_detection_label(&text)
            .with_context(|| path.display().to_string())?
            .iter()
            .map(|n| denormalize(n, frame.width(), frame.height(), BoxSource::Human))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, (point, truth)) in pair(&stem, points, &truth)?.into_iter().enumerate() {
            items.push(EvalItem {
                id: format!("{stem}#{i}"),
                frame: frame.clone(),
                point,
                truth,
            });
        }
    }
    Ok(items)
}

fn write_records(path: &std::path::Path, evaluation: &Evaluation) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record([
        "item", "method", "iou", "elapsed_s", "pred_left", "pred_top", "pred_width", "pred_height", "truth_left",
        "truth_top", "truth_width", "truth_height", "failure",
    ])?;
    for r in &evaluation.records {
        let pred = r.predicted.map(|b| [b.left, b.top, b.width, b.height].map(|v| v.to_string()));
        let pred = pred.unwrap_or_else(|| Default::default());
        let t = [r.truth.left, r.truth.top, r.truth.width, r.truth.height].map(|v| v.to_string());
        let mut row = vec![r.item_id.clone(), r.method.clone(), format!("{:.6}", r.iou), format!("{:.9}", r.elapsed)];
        row.extend(pred);
        row.extend(t);
        row.push(r.failure.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: EvaluateArgs, file: &FileConfig) -> anyhow::Result<Status> {
    let pic = args.pic.resolve(file)?;
    let (threshold, fixed) = args.baselines.resolve(file)?;
    let (pic_x, fixed_x, threshold_x) = (PicExtractor(pic), FixedExtractor(fixed), ThresholdExtractor(threshold));
    let mut methods: Vec<&dyn Extractor> = Vec::new();
    for name in &args.methods {
        let m: &dyn Extractor = match name.trim() {
            "pic" => &pic_x,
            "fixed" => &fixed_x,
            "threshold" => &threshold_x,
            other => bail!("unknown method {other:?}; expected pic, fixed or threshold"),
        };
        if methods.iter().any(|x| x.name() == m.name()) {
            bail!("method {name} listed twice");
        }
        methods.push(m);
    }

    let items = load_items(&args)?;
    let evaluation = evaluate(&items, &methods);

    files::create_dir(&args.out)?;
    let summary = Summary {
        items: items.len(),
        pic,
        threshold,
        fixed,
        methods: &evaluation.summaries,
    };
    files::write(&args.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    write_records(&args.out.join("records.csv"), &evaluation)?;
    print!("{}", format_table(&evaluation.summaries));

    if evaluation.records.iter().any(|r| r.failure.is_some()) {
        return Ok(Status::ItemFailures);
    }
    Ok(Status::Success)
}
