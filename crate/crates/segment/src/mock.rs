//! Prompt-echo stand-in for a segmentation service: every box prompt comes
//! back as a filled rectangular mask with confidence 1.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use pointbox_core::imaging::PixelRect;
use pointbox_core::mask::{rle_encode, BinaryMask};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::error::SegmentError;
use crate::protocol::{MaskEntry, SegmentRequest, SegmentResponse, PROTOCOL_VERSION};

pub const SEGMENT_PATH: &str = "/v1/segment";

#[derive(Debug, Clone, Copy, Default)]
pub struct MockOptions {
    /// Upper bound on an artificial per-request delay. The delay is derived
    /// from the prompts, so responses complete out of submission order.
    pub max_delay: Duration,
    /// Answer the first N requests with 503.
    pub fail_first: usize,
}

#[derive(Debug, Default)]
struct Stats {
    requests: AtomicUsize,
}

#[derive(Clone)]
struct AppState {
    options: MockOptions,
    stats: Arc<Stats>,
}

pub fn router(options: MockOptions) -> Router {
    router_with_stats(options, Arc::new(Stats::default()))
}

fn router_with_stats(options: MockOptions, stats: Arc<Stats>) -> Router {
    Router::new()
        .route(SEGMENT_PATH, post(segment))
        .with_state(AppState { options, stats })
}

async fn segment(State(state): State<AppState>, Json(request): Json<SegmentRequest>) -> Response {
    let n = state.stats.requests.fetch_add(1, Ordering::SeqCst);
    if n < state.options.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, "warming up").into_response();
    }
    if request.version != PROTOCOL_VERSION {
        return (StatusCode::BAD_REQUEST, "unsupported protocol version").into_response();
    }
    let (w, h) = (request.image.width, request.image.height);
    if let Err(e) = request.image.decode() {
        return (StatusCode::BAD_REQUEST, e.to_string()).into_response();
    }

    let max_ms = state.options.max_delay.as_millis() as u64;
    if max_ms > 0 {
        let seed = request
            .prompts
            .iter()
            .fold(0x9e37_79b9_7f4a_7c15u64, |acc, p| {
                (acc ^ (p.left as u64) << 32 ^ p.top as u64 ^ (p.width as u64) << 16 ^ p.height as u64)
                    .wrapping_mul(0x0100_0000_01b3)
            });
        tokio::time::sleep(Duration::from_millis(seed % (max_ms + 1))).await;
    }

    let mut masks = Vec::with_capacity(request.prompts.len());
    for p in &request.prompts {
        let rect = PixelRect {
            left: p.left as i64,
            top: p.top as i64,
            width: p.width.max(1),
            height: p.height.max(1),
        };
        match BinaryMask::from_rect(w, h, &rect) {
            Ok(mask) => masks.push(MaskEntry::from_rle(rle_encode(&mask), 1.0)),
            Err(e) => masks.push(MaskEntry {
                width: w,
                height: h,
                counts: Vec::new(),
                confidence: 0.0,
                error: Some(e.to_string()),
            }),
        }
    }
    Json(SegmentResponse {
        version: PROTOCOL_VERSION.into(),
        masks,
    })
    .into_response()
}

/// A mock server running on the current tokio runtime.
pub struct MockServer {
    addr: SocketAddr,
    stats: Arc<Stats>,
    shutdown: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl MockServer {
    pub async fn spawn(addr: SocketAddr, options: MockOptions) -> Result<Self, SegmentError> {
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|e| SegmentError::Runtime(format!("binding {addr}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| SegmentError::Runtime(e.to_string()))?;
        let stats = Arc::new(Stats::default());
        let app = router_with_stats(options, stats.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            let served = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = served {
                log::error!("mock segmentation server stopped: {e}");
            }
        });
        Ok(Self {
            addr,
            stats,
            shutdown: Some(tx),
            task,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Full URL to post requests to.
    pub fn endpoint(&self) -> String {
        format!("http://{}{SEGMENT_PATH}", self.addr)
    }

    /// Requests received so far.
    pub fn requests(&self) -> usize {
        self.stats.requests.load(Ordering::SeqCst)
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// A mock server on its own runtime, for synchronous callers.
pub struct BackgroundMock {
    server: Option<MockServer>,
    runtime: tokio::runtime::Runtime,
}

impl BackgroundMock {
    /// Binds an ephemeral localhost port.
    pub fn start(options: MockOptions) -> Result<Self, SegmentError> {
        Self::bind(SocketAddr::from(([127, 0, 0, 1], 0)), options)
    }

    pub fn bind(addr: SocketAddr, options: MockOptions) -> Result<Self, SegmentError> {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| SegmentError::Runtime(e.to_string()))?;
        let server = runtime.block_on(MockServer::spawn(addr, options))?;
        Ok(Self {
            server: Some(server),
            runtime,
        })
    }

    pub fn endpoint(&self) -> String {
        self.server.as_ref().expect("server present until drop").endpoint()
    }

    pub fn requests(&self) -> usize {
        self.server.as_ref().map_or(0, |s| s.requests())
    }

    /// Serves until the process is interrupted.
    pub fn wait(self) {
        self.runtime.block_on(async {
            let _ = tokio::signal::ctrl_c().await;
        });
    }
}

impl Drop for BackgroundMock {
    fn drop(&mut self) {
        if let Some(server) = self.server.take() {
            self.runtime.block_on(server.shutdown());
        }
    }
}
