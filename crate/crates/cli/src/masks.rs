use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context};
use pointbox_core::dataset::{denormalize, emit_segmentation_label, parse_detection_label, AnnotationRecord};
use pointbox_core::{BoxSource, GrayFrame};
use pointbox_segment::{BackgroundMock, BlockingSegmenter, ClientConfig, MockOptions};

use crate::config::{EndpointArgs, FileConfig, JobsArgs, Segmentation};
use crate::files;
use crate::Status;

#[derive(Debug, clap::Args)]
pub struct MasksArgs {
    /// Directory of frame images
    #[arg(long)]
    pub frames: PathBuf,
    /// Box labels named after the frames (<stem>.txt)
    #[arg(long)]
    pub labels: PathBuf,
    /// Output directory for polygon labels
    #[arg(long, env = "POINTBOX_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    #[command(flatten)]
    pub jobs: JobsArgs,
}

#[derive(Debug, clap::Args)]
pub struct MockServerArgs {
    /// Address to listen on
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Upper bound of a random delay added to each response, in milliseconds
    #[arg(long, default_value_t = 0)]
    pub max_delay_ms: u64,
    /// Answer the first N requests with 503
    #[arg(long, default_value_t = 0)]
    pub fail_first: usize,
}

/// A connected segmentation client, plus the mock it talks to if any.
pub struct Service {
    segmenter: BlockingSegmenter,
    _mock: Option<BackgroundMock>,
}

impl Service {
    pub fn segmenter(&self) -> &BlockingSegmenter {
        &self.segmenter
    }
}

pub fn connect(mode: Segmentation, in_flight: Option<usize>) -> anyhow::Result<Option<Service>> {
    let (endpoint, mock) = match mode {
        Segmentation::Off => return Ok(None),
        Segmentation::Remote(url) => (url, None),
        Segmentation::Mock => {
            let mock = BackgroundMock::start(MockOptions::default())?;
            (mock.endpoint(), Some(mock))
        }
    };
    let mut config = ClientConfig::new(endpoint);
    if let Some(n) = in_flight {
        config.max_in_flight = n;
    }
    Ok(Some(Service {
        segmenter: BlockingSegmenter::new(config)?,
        _mock: mock,
    }))
}

pub fn run(args: MasksArgs, file: &FileConfig) -> anyhow::Result<Status> {
    let mode = args.endpoint.resolve(file);
    if matches!(mode, Segmentation::Off) {
        bail!("masks needs --endpoint <url> or --mock");
    }
    let images = files::list_images(&args.frames)?;
    if !args.labels.is_dir() {
        bail!("{} is not a directory", args.labels.display());
    }
    let service = connect(mode, args.jobs.resolve(file)?)?.expect("segmentation is on");

    // Everything is collected first so that a service outage leaves no
    // partial output behind.
    let mut outputs = Vec::new();
    let mut failed_boxes = 0;
    for (stem, src) in &images {
        let label_path = args.labels.join(format!("{stem}.txt"));
        if !label_path.is_file() {
            log::warn!("{stem}: no box label; skipped");
            continue;
        }
        let text = std::fs::read_to_string(&label_path).with_context(|| format!("reading {}", label_path.display()))?;
        let frame = GrayFrame::load(src)?;
        let boxes = parse_detection_label(&text)
            .with_context(|| label_path.display().to_string())?
            .iter()
            .map(|n| denormalize(n, frame.width(), frame.height(), BoxSource::Pic))
            .collect::<Result<Vec<_>, _>>()?;
        let masks = service
            .segmenter()
            .segment_file(src, &frame, &boxes)
            .with_context(|| format!("segmenting {stem}"))?;
        for m in &masks {
            if let Some(reason) = &m.failure {
                eprintln!("{stem}: box failed: {reason}");
                failed_boxes += 1;
            }
        }
        let record = AnnotationRecord {
            image_path: src.display().to_string(),
            frame_index: files::frame_index_of(stem).unwrap_or(0),
            boxes,
            masks: Some(masks.into_iter().map(|m| m.rle).collect()),
            image_size: (frame.width(), frame.height()),
        };
        outputs.push((format!("{stem}.txt"), emit_segmentation_label(&record)?));
    }

    files::create_dir(&args.out)?;
    for (name, text) in &outputs {
        files::write(&args.out.join(name), text)?;
    }
    println!("{} polygon label files written", outputs.len());
    if failed_boxes > 0 {
        eprintln!("{failed_boxes} boxes got no mask");
        return Ok(Status::ItemFailures);
    }
    Ok(Status::Success)
}

pub fn serve(args: MockServerArgs) -> anyhow::Result<Status> {
    let options = MockOptions {
        max_delay: Duration::from_millis(args.max_delay_ms),
        fail_first: args.fail_first,
    };
    let mock = BackgroundMock::bind(args.listen, options)?;
    println!("mock segmentation server listening on {}", mock.endpoint());
    mock.wait();
    Ok(Status::Success)
}
