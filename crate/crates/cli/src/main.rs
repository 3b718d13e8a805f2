//! `pointbox`: boxes and masks for small objects from trajectory points.

mod annotate;
mod config;
mod evaluate;
mod files;
mod masks;
mod render;
mod synth;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pointbox_core::dataset::{build_dataset, BuildOptions};
use pointbox_segment::SegmentError;

use config::{resolve_plan, resolve_stride, EndpointArgs, FileConfig, JobsArgs, PicArgs};

/// Outcome of a subcommand that ran to the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Finished, but some frames or points could not be processed.
    ItemFailures,
}

const EXIT_INPUT: u8 = 1;
const EXIT_ITEMS: u8 = 2;
const EXIT_SERVICE: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "pointbox", version, about = "Bounding boxes and masks for small objects from trajectory points")]
#[command(after_help = "Exit codes: 0 success, 1 input error, 2 some items failed, 3 segmentation service failure.\n\
Every value flag can also be set through the POINTBOX_<FLAG> environment variable or a --config file.")]
struct Cli {
    /// TOML file with default flag values (keys are flag names with underscores)
    #[arg(long, global = true, env = "POINTBOX_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Box every trajectory point in a frame sequence
    Annotate(annotate::AnnotateArgs),
    /// Compare box extractors against reference labels
    Evaluate(evaluate::EvaluateArgs),
    /// Assemble a split dataset from a tree of sequences
    Build(BuildArgs),
    /// Draw labels, masks and expansion traces over frames
    Render(render::RenderArgs),
    /// Turn box labels into polygon labels via a segmentation service
    Masks(masks::MasksArgs),
    /// Render synthetic scenes with exact reference boxes
    Synth(synth::SynthArgs),
    /// Run the bundled prompt-echo segmentation server
    MockServer(masks::MockServerArgs),
}

#[derive(Debug, clap::Args)]
struct BuildArgs {
    /// Source root holding d<N>/c<M>/ sequence directories
    #[arg(long)]
    root: PathBuf,
    /// Output dataset directory
    #[arg(long, env = "POINTBOX_OUT")]
    out: PathBuf,
    /// Split plan file, or `canonical` [default: canonical]
    #[arg(long, env = "POINTBOX_PLAN")]
    plan: Option<String>,
    /// Keep every k-th annotated frame [default: 10]
    #[arg(long, env = "POINTBOX_STRIDE")]
    stride: Option<u64>,
    #[command(flatten)]
    pic: PicArgs,
    #[command(flatten)]
    jobs: JobsArgs,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

fn build(args: BuildArgs, file: &FileConfig) -> anyhow::Result<Status> {
    let plan = resolve_plan(args.plan.as_deref(), file)?;
    let options = BuildOptions {
        stride: resolve_stride(args.stride, file, 10)?,
        pic: args.pic.resolve(file)?,
        jobs: args.jobs.resolve(file)?,
    };
    let service = masks::connect(args.endpoint.resolve(file), args.jobs.resolve(file)?)?;
    let provider = service.as_ref().map(|s| s.segmenter() as &dyn pointbox_core::dataset::MaskProvider);

    let manifest = build_dataset(&args.root, &args.out, &plan, &options, provider)
        .with_context(|| format!("building dataset from {}", args.root.display()))?;
    for (split, totals) in &manifest.splits {
        println!("{split:<6} {:>7} images {:>7} boxes", totals.images, totals.boxes);
    }
    let (gaps, failures) = (manifest.total_gaps(), manifest.total_failures());
    if gaps + failures > 0 {
        eprintln!("{gaps} missing frames, {failures} failed points; see manifest.json");
        return Ok(Status::ItemFailures);
    }
    Ok(Status::Success)
}

fn is_service_failure(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        matches!(cause.downcast_ref::<SegmentError>(), Some(SegmentError::Unreachable { .. } | SegmentError::Protocol(_)))
            || matches!(cause.downcast_ref::<pointbox_core::Error>(), Some(pointbox_core::Error::MaskProvider(_)))
    })
}

/// The error and its causes on one line, skipping causes that the previous
/// message already spells out.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let message = cause.to_string();
        if out.ends_with(&message) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&message);
    }
    out
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Annotate(args) => annotate::run(args, &file),
        Command::Evaluate(args) => evaluate::run(args, &file),
        Command::Build(args) => build(args, &file),
        Command::Render(args) => render::run(args),
        Command::Masks(args) => masks::run(args, &file),
        Command::Synth(args) => synth::run(args),
        Command::MockServer(args) => masks::serve(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::ItemFailures) => ExitCode::from(EXIT_ITEMS),
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            if is_service_failure(&err) {
                ExitCode::from(EXIT_SERVICE)
            } else {
                ExitCode::from(EXIT_INPUT)
            }
        }
    }
}
