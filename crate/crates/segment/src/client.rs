use std::path::Path;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use pointbox_core::dataset::MaskProvider;
use pointbox_core::mask::MaskRle;
use pointbox_core::{BBox, GrayFrame};

use crate::error::SegmentError;
use crate::protocol::{validate_response, ImagePayload, Prompt, SegmentRequest, SegmentResponse, SegmentedMask, PROTOCOL_VERSION};

/// Retry and timeout settings for one HTTP exchange.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts per request, including the first.
    pub attempts: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_secs(2),
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub endpoint: String,
    pub policy: RetryPolicy,
    /// Requests allowed in flight at once.
    pub max_in_flight: usize,
    /// Prompts bundled into one request.
    pub prompts_per_request: usize,
}

impl ClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            policy: RetryPolicy::default(),
            max_in_flight: 4,
            prompts_per_request: 1,
        }
    }
}

/// Outcome of one request after retries.
enum ChunkOutcome {
    Served(Vec<SegmentedMask>),
    Unreachable(String),
}

/// Async client for a box-prompted segmentation service.
#[derive(Debug, Clone)]
pub struct SegmentClient {
    config: ClientConfig,
    http: reqwest::Client,
}

impl SegmentClient {
    pub fn new(config: ClientConfig) -> Result<Self, SegmentError> {
        if config.max_in_flight == 0 || config.prompts_per_request == 0 || config.policy.attempts == 0 {
            return Err(SegmentError::InvalidInput(
                "max_in_flight, prompts_per_request and attempts must be at least 1".into(),
            ));
        }
        let http = reqwest::Client::builder()
            .timeout(config.policy.timeout)
            .build()
            .map_err(|e| SegmentError::Runtime(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    /// One mask per box, in box order.
    ///
    /// Boxes are sent in chunks with at most `max_in_flight` requests
    /// outstanding. A box the service rejects comes back as an empty mask with
    /// zero confidence and a failure note. If the service cannot be reached
    /// for some chunk after all retries, the whole call fails and names the
    /// boxes left unserved.
    pub async fn segment_boxes(&self, image: &ImagePayload, boxes: &[BBox]) -> Result<Vec<SegmentedMask>, SegmentError> {
        if boxes.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(b) = boxes.iter().find(|b| !b.fits_within(image.width, image.height)) {
            return Err(SegmentError::InvalidInput(format!(
                "box {b:?} lies outside the {}x{} image",
                image.width, image.height
            )));
        }

        let chunks: Vec<(usize, &[BBox])> = boxes
            .chunks(self.config.prompts_per_request)
            .enumerate()
            .map(|(i, c)| (i * self.config.prompts_per_request, c))
            .collect();

        let outcomes: Vec<Result<ChunkOutcome, SegmentError>> = stream::iter(chunks.iter())
            .map(|(_, chunk)| self.send_chunk(image, chunk))
            .buffered(self.config.max_in_flight)
            .collect()
            .await;

        let mut masks = Vec::with_capacity(boxes.len());
        let mut unserved = Vec::new();
        let mut last_error = String::new();
        for ((start, chunk), outcome) in chunks.iter().zip(outcomes) {
            match outcome? {
                ChunkOutcome::Served(m) => masks.extend(m),
                ChunkOutcome::Unreachable(message) => {
                    unserved.extend(*start..*start + chunk.len());
                    last_error = message;
                }
            }
        }
        if !unserved.is_empty() {
            return Err(SegmentError::Unreachable {
                unserved,
                message: last_error,
            });
        }
        Ok(masks)
    }

    async fn send_chunk(&self, image: &ImagePayload, chunk: &[BBox]) -> Result<ChunkOutcome, SegmentError> {
        let request = SegmentRequest {
            version: PROTOCOL_VERSION.into(),
            image: image.clone(),
            prompts: chunk.iter().map(Prompt::from).collect(),
        };
        let policy = self.config.policy;
        // (server answered, message) of the latest failed attempt
        let mut last = (false, String::new());

        for attempt in 0..policy.attempts {
            if attempt > 0 {
                tokio::time::sleep(policy.backoff(attempt - 1)).await;
            }
            let sent = self.http.post(&self.config.endpoint).json(&request).send().await;
            let response = match sent {
                Ok(r) => r,
                Err(e) => {
                    log::debug!("segmentation attempt {} failed: {e}", attempt + 1);
                    last = (false, e.to_string());
                    continue;
                }
            };
            let status = response.status();
            if status.is_server_error() {
                last = (true, format!("server returned {status}"));
                continue;
            }
            if !status.is_success() {
                let reason = format!("server returned {status}");
                let failed = chunk
                    .iter()
                    .map(|_| SegmentedMask::failed(image.width, image.height, reason.clone()))
                    .collect();
                return Ok(ChunkOutcome::Served(failed));
            }
            let body = response
                .bytes()
                .await
                .map_err(|e| SegmentError::Protocol(format!("reading response: {e}")))?;
            let parsed: SegmentResponse = serde_json::from_slice(&body)
                .map_err(|e| SegmentError::Protocol(format!("malformed response: {e}")))?;
            let masks = validate_response(parsed, image.width, image.height, chunk.len())?;
            return Ok(ChunkOutcome::Served(masks));
        }

        // Persistent server errors mean the service is up but cannot serve these boxes.
        let (answered, message) = last;
        if answered {
            let failed = chunk
                .iter()
                .map(|_| SegmentedMask::failed(image.width, image.height, message.clone()))
                .collect();
            return Ok(ChunkOutcome::Served(failed));
        }
        Ok(ChunkOutcome::Unreachable(message))
    }
}

/// Synchronous wrapper that owns its own runtime, for use from worker
/// threads that are not inside an async context.
pub struct BlockingSegmenter {
    client: SegmentClient,
    runtime: tokio::runtime::Runtime,
}

impl BlockingSegmenter {
    pub fn new(config: ClientConfig) -> Result<Self, SegmentError> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| SegmentError::Runtime(e.to_string()))?;
        let client = runtime.block_on(async { SegmentClient::new(config) })?;
        Ok(Self { client, runtime })
    }

    pub fn segment_boxes(&self, image: &ImagePayload, boxes: &[BBox]) -> Result<Vec<SegmentedMask>, SegmentError> {
        self.runtime.block_on(self.client.segment_boxes(image, boxes))
    }

    /// Encodes the image file losslessly (falling back to the decoded gray
    /// frame) and segments the boxes.
    pub fn segment_file(&self, image_path: &Path, frame: &GrayFrame, boxes: &[BBox]) -> Result<Vec<SegmentedMask>, SegmentError> {
        let payload = match image::open(image_path) {
            Ok(img) => ImagePayload::from_image(&image::DynamicImage::ImageRgb8(img.to_rgb8()))?,
            Err(e) => {
                log::warn!("{}: {e}; sending grayscale frame", image_path.display());
                ImagePayload::from_gray(frame)?
            }
        };
        self.segment_boxes(&payload, boxes)
    }
}

impl MaskProvider for BlockingSegmenter {
    fn masks(&self, image_path: &Path, frame: &GrayFrame, boxes: &[BBox]) -> pointbox_core::Result<Vec<MaskRle>> {
        let masks = self
            .segment_file(image_path, frame, boxes)
            .map_err(|e| pointbox_core::Error::MaskProvider(e.to_string()))?;
        Ok(masks
            .into_iter()
            .map(|m| {
                if let Some(reason) = &m.failure {
                    log::warn!("{}: segmentation failed for a box: {reason}", image_path.display());
                }
                m.rle
            })
            .collect())
    }
}
