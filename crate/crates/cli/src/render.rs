use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use image::{Rgb, RgbImage};
use pointbox_core::dataset::{denormalize, parse_detection_label};
use pointbox_core::{BoxSource, PixelRect};

use crate::annotate::TraceDump;
use crate::files;
use crate::Status;

const BOX_COLOR: Rgb<u8> = Rgb([255, 40, 40]);
const POLYGON_COLOR: Rgb<u8> = Rgb([40, 220, 80]);
const TRACE_FIRST: [f64; 3] = [255.0, 230.0, 0.0];
const TRACE_LAST: [f64; 3] = [0.0, 160.0, 255.0];

#[derive(Debug, clap::Args)]
pub struct RenderArgs {
    /// Directory of frame images
    #[arg(long)]
    pub frames: PathBuf,
    /// Box labels named after the frames (<stem>.txt)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Polygon labels named after the frames (<stem>.txt)
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Trace dumps from `annotate --dump-traces` (<stem>.json)
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Output directory for the PNG overlays
    #[arg(long, env = "POINTBOX_OUT")]
    pub out: PathBuf,
}

fn draw_rect(img: &mut RgbImage, r: &PixelRect, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0, x1, y1) = (r.left, r.top, r.right() - 1, r.bottom() - 1);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for x in x0..=x1 {
        put(x, y0);
        put(x, y1);
    }
    for y in y0..=y1 {
        put(x0, y);
        put(x1, y);
    }
}

fn draw_line(img: &mut RgbImage, (ax, ay): (f64, f64), (bx, by): (f64, f64), color: Rgb<u8>) {
    let steps = (bx - ax).abs().max((by - ay).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = ((ax + (bx - ax) * t).floor(), (ay + (by - ay) * t).floor());
        // Polygon vertices sit on pixel corners; the right and bottom edges
        // land one past the last pixel.
        let x = (x as i64).min(img.width() as i64 - 1);
        let y = (y as i64).min(img.height() as i64 - 1);
        if x >= 0 && y >= 0 {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn parse_polygons(text: &str, origin: &Path) -> anyhow::Result<Vec<Vec<(f64, f64)>>> {
    let mut polygons = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let coords = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{}: bad coordinate", origin.display(), i + 1))?;
        if coords.len() < 6 || coords.len() % 2 != 0 {
            bail!("{}:{}: a polygon needs at least three x y pairs", origin.display(), i + 1);
        }
        polygons.push(coords.chunks(2).map(|c| (c[0], c[1])).collect());
    }
    Ok(polygons)
}

fn trace_color(step: usize, steps: usize) -> Rgb<u8> {
    let t = if steps > 1 { step as f64 / (steps - 1) as f64 } else { 0.0 };
    Rgb(std::array::from_fn(|c| (TRACE_FIRST[c] + (TRACE_LAST[c] - TRACE_FIRST[c]) * t).round() as u8))
}

fn read_optional(dir: Option<&PathBuf>, stem: &str, ext: &str) -> anyhow::Result<Option<(PathBuf, String)>> {
    let Some(dir) = dir else { return Ok(None) };
    let path = dir.join(format!("{stem}.{ext}"));
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some((path, text)))
}

pub fn run(args: RenderArgs) -> anyhow::Result<Status> {
    let images = files::list_images(&args.frames)?;
    files::create_dir(&args.out)?;
    let mut unlabelled = 0;
    for (stem, src) in &images {
        let mut img = image::open(src).with_context(|| format!("decoding {}", src.display()))?.to_rgb8();
        let (w, h) = img.dimensions();
        let mut drew = false;

        if let Some((_, text)) = read_optional(args.traces.as_ref(), stem, "json")? {
            let dump: TraceDump = serde_json::from_str(&text).with_context(|| format!("{stem}: bad trace dump"))?;
            for point in &dump.points {
                let n = point.trace.boxes.len();
                for (step, r) in point.trace.boxes.iter().enumerate() {
                    draw_rect(&mut img, r, trace_color(step, n));
                    drew = true;
                }
            }
        }
        if let Some((path, text)) = read_optional(args.masks.as_ref(), stem, "txt")? {
            for polygon in parse_polygons(&text, &path)? {
                let pts: Vec<(f64, f64)> = polygon.iter().map(|(x, y)| (x * w as f64, y * h as f64)).collect();
                for (i, a) in pts.iter().enumerate() {
                    draw_line(&mut img, *a, pts[(i + 1) % pts.len()], POLYGON_COLOR);
                }
                drew = true;
            }
        }
        match read_optional(args.labels.as_ref(), stem, "txt")? {
            Some((path, text)) => {
                for n in parse_detection_label(&text).with_context(|| path.display().to_string())? {
                    let b = denormalize(&n, w, h, BoxSource::Human)?;
                    draw_rect(&mut img, &b.rect(), BOX_COLOR);
                    drew = true;
                }
            }
            None if args.labels.is_some() => {
                log::warn!("{stem}: no label file; writing the frame unannotated");
                unlabelled += 1;
            }
            None => {}
        }

        let dst = args.out.join(format!("{stem}.png"));
        let is_png = src.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !drew && is_png {
            std::fs::copy(src, &dst).with_context(|| format!("copying to {}", dst.display()))?;
        } else {
            img.save(&dst).with_context(|| format!("writing {}", dst.display()))?;
        }
    }
    println!("{} overlays written ({unlabelled} without labels)", images.len());
    Ok(Status::Success)
}
