use std::path::PathBuf;

use anyhow::{bail, Context};
use pointbox_core::dataset::{emit_detection_label, frame_file_name, AnnotationRecord};
use pointbox_core::synth::{render, SceneSpec};

use crate::files;
use crate::Status;

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Scene description (JSON)
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory
    #[arg(long, env = "POINTBOX_OUT")]
    pub out: PathBuf,
    /// Render a sequence of this many frames with frames/, truth/ and trajectory.csv
    #[arg(long)]
    pub sequence: Option<u64>,
    /// Horizontal motion of the first target per frame, in pixels
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub step_x: f64,
    /// Vertical motion of the first target per frame, in pixels
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub step_y: f64,
}

fn label(spec: &SceneSpec, frame_index: u64, boxes: Vec<pointbox_core::BBox>) -> anyhow::Result<String> {
    Ok(emit_detection_label(&AnnotationRecord {
        image_path: frame_file_name(frame_index),
        frame_index,
        boxes,
        masks: None,
        image_size: (spec.width, spec.height),
    })?)
}

pub fn run(args: SynthArgs) -> anyhow::Result<Status> {
    let spec = SceneSpec::load(&args.spec).with_context(|| format!("loading {}", args.spec.display()))?;
    files::create_dir(&args.out)?;

    let Some(count) = args.sequence else {
        let (frame, truth) = render(&spec)?;
        frame.save_png(args.out.join("scene.png"))?;
        files::write(&args.out.join("scene.txt"), label(&spec, 0, truth)?)?;
        println!("scene.png written with {} targets", spec.targets.len());
        return Ok(Status::Success);
    };
    if spec.targets.is_empty() {
        bail!("a sequence needs at least one target to follow");
    }
    let (dx, dy) = (args.step_x, args.step_y);
    let (frames_dir, truth_dir) = (args.out.join("frames"), args.out.join("truth"));
    files::create_dir(&frames_dir)?;
    files::create_dir(&truth_dir)?;
    let mut trajectory = String::from("frame,x,y\n");
    for i in 0..count {
        let mut scene = spec.clone();
        let t = &mut scene.targets[0];
        t.center_x += dx * i as f64;
        t.center_y += dy * i as f64;
        let (cx, cy) = (t.center_x, t.center_y);
        let (frame, mut truth) = render(&scene).with_context(|| format!("frame {i}"))?;
        truth.truncate(1);
        let stem = frame_file_name(i);
        frame.save_png(frames_dir.join(format!("{stem}.png")))?;
        files::write(&truth_dir.join(format!("{stem}.txt")), label(&scene, i, truth)?)?;
        trajectory.push_str(&format!("{i},{cx},{cy}\n"));
    }
    files::write(&args.out.join("trajectory.csv"), trajectory)?;
    println!("{count} frames written to {}", args.out.display());
    Ok(Status::Success)
}
