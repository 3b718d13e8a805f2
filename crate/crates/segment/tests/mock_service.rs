use std::net::SocketAddr;
use std::time::Duration;

use axum::routing::post;
use axum::{Json, Router};
use pointbox_core::mask::{bbox_from_mask, rle_decode};
use pointbox_core::{BBox, BoxSource, GrayFrame};
use pointbox_segment::protocol::{MaskEntry, SegmentRequest, SegmentResponse};
use pointbox_segment::{ClientConfig, ImagePayload, MockOptions, MockServer, RetryPolicy, SegmentClient, SegmentError, PROTOCOL_VERSION};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn local() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 0))
}

fn payload(w: u32, h: u32) -> ImagePayload {
    let f = GrayFrame::from_fn(w, h, |x, y| ((x * 7 + y * 3) % 256) as u8).unwrap();
    ImagePayload::from_gray(&f).unwrap()
}

fn fast_policy() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        initial_backoff: Duration::from_millis(5),
        max_backoff: Duration::from_millis(20),
        timeout: Duration::from_secs(10),
    }
}

fn client(endpoint: String) -> SegmentClient {
    let mut c = ClientConfig::new(endpoint);
    c.policy = fast_policy();
    SegmentClient::new(c).unwrap()
}

#[tokio::test]
async fn echoed_mask_has_prompt_as_tight_box() {
    let server = MockServer::spawn(local(), MockOptions::default()).await.unwrap();
    let boxes = vec![
        BBox::new(3, 4, 10, 6, BoxSource::Pic).unwrap(),
        BBox::new(0, 0, 40, 30, BoxSource::Pic).unwrap(),
        BBox::new(39, 29, 1, 1, BoxSource::Pic).unwrap(),
    ];
    let masks = client(server.endpoint()).segment_boxes(&payload(40, 30), &boxes).await.unwrap();
    assert_eq!(masks.len(), 3);
    for (m, b) in masks.iter().zip(&boxes) {
        assert!(m.failure.is_none());
        assert_eq!(m.confidence, 1.0);
        assert_eq!(bbox_from_mask(&m.rle).unwrap().rect(), b.rect());
        assert_eq!(rle_decode(&m.rle).unwrap().count() as u64, b.area());
    }
    assert_eq!(server.requests(), 3);
}

#[tokio::test]
async fn zero_boxes_make_no_request() {
    let server = MockServer::spawn(local(), MockOptions::default()).await.unwrap();
    let masks = client(server.endpoint()).segment_boxes(&payload(8, 8), &[]).await.unwrap();
    assert!(masks.is_empty());
    assert_eq!(server.requests(), 0);
}

#[tokio::test]
async fn order_preserved_when_responses_arrive_out_of_order() {
    let options = MockOptions {
        max_delay: Duration::from_millis(30),
        fail_first: 0,
    };
    let server = MockServer::spawn(local(), options).await.unwrap();
    let mut config = ClientConfig::new(server.endpoint());
    config.policy = fast_policy();
    config.max_in_flight = 4;
    let c = SegmentClient::new(config).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    let image = payload(64, 48);
    for _ in 0..10 {
        let boxes: Vec<BBox> = (0..rng.random_range(1..12))
            .map(|_| {
                let w = rng.random_range(1..=64);
                let h = rng.random_range(1..=48);
                BBox::new(rng.random_range(0..=64 - w), rng.random_range(0..=48 - h), w, h, BoxSource::Pic).unwrap()
            })
            .collect();
        let masks = c.segment_boxes(&image, &boxes).await.unwrap();
        let got: Vec<_> = masks.iter().map(|m| bbox_from_mask(&m.rle).unwrap().rect()).collect();
        let want: Vec<_> = boxes.iter().map(|b| b.rect()).collect();
        assert_eq!(got, want);
    }
}

#[tokio::test]
async fn bundled_prompts_are_split_back_in_order() {
    let server = MockServer::spawn(local(), MockOptions::default()).await.unwrap();
    let mut config = ClientConfig::new(server.endpoint());
    config.prompts_per_request = 3;
    let c = SegmentClient::new(config).unwrap();
    let boxes: Vec<BBox> = (0..7).map(|i| BBox::new(i, i, 2 + i, 3, BoxSource::Pic).unwrap()).collect();
    let masks = c.segment_boxes(&payload(20, 20), &boxes).await.unwrap();
    for (m, b) in masks.iter().zip(&boxes) {
        assert_eq!(bbox_from_mask(&m.rle).unwrap().rect(), b.rect());
    }
    assert_eq!(server.requests(), 3);
}

#[tokio::test]
async fn transient_server_errors_are_retried() {
    let options = MockOptions {
        max_delay: Duration::ZERO,
        fail_first: 2,
    };
    let server = MockServer::spawn(local(), options).await.unwrap();
    let boxes = [BBox::new(1, 1, 4, 4, BoxSource::Pic).unwrap()];
    let masks = client(server.endpoint()).segment_boxes(&payload(10, 10), &boxes).await.unwrap();
    assert!(masks[0].failure.is_none());
    assert_eq!(server.requests(), 3);
}

#[tokio::test]
async fn persistent_server_errors_fail_the_box_only() {
    let options = MockOptions {
        max_delay: Duration::ZERO,
        fail_first: 100,
    };
    let server = MockServer::spawn(local(), options).await.unwrap();
    let boxes = [BBox::new(1, 1, 4, 4, BoxSource::Pic).unwrap()];
    let masks = client(server.endpoint()).segment_boxes(&payload(10, 10), &boxes).await.unwrap();
    assert!(masks[0].failure.is_some());
    assert_eq!(masks[0].confidence, 0.0);
    assert_eq!(masks[0].rle.area(), 0);
}

#[tokio::test]
async fn unreachable_endpoint_lists_unserved_boxes() {
    let listener = std::net::TcpListener::bind(local()).unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let boxes: Vec<BBox> = (0..3).map(|i| BBox::new(i, 0, 1, 1, BoxSource::Pic).unwrap()).collect();
    let err = client(format!("http://{addr}/v1/segment"))
        .segment_boxes(&payload(5, 5), &boxes)
        .await
        .unwrap_err();
    match err {
        SegmentError::Unreachable { unserved, .. } => assert_eq!(unserved, vec![0, 1, 2]),
        other => panic!("expected unreachable, got {other}"),
    }
}

#[tokio::test]
async fn box_outside_image_is_rejected_before_sending() {
    let server = MockServer::spawn(local(), MockOptions::default()).await.unwrap();
    let boxes = [BBox::new(8, 8, 4, 4, BoxSource::Pic).unwrap()];
    let err = client(server.endpoint()).segment_boxes(&payload(10, 10), &boxes).await.unwrap_err();
    assert!(matches!(err, SegmentError::InvalidInput(_)));
    assert_eq!(server.requests(), 0);
}

async fn misbehaving(respond: fn(SegmentRequest) -> SegmentResponse) -> String {
    let app = Router::new().route("/v1/segment", post(move |Json(r): Json<SegmentRequest>| async move { Json(respond(r)) }));
    let listener = tokio::net::TcpListener::bind(local()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1/segment")
}

#[tokio::test]
async fn mismatched_mask_count_is_protocol_error() {
    let endpoint = misbehaving(|r| SegmentResponse {
        version: PROTOCOL_VERSION.into(),
        masks: vec![
            MaskEntry {
                width: r.image.width,
                height: r.image.height,
                counts: vec![r.image.width * r.image.height],
                confidence: 0.5,
                error: None,
            };
            r.prompts.len() + 1
        ],
    })
    .await;
    let boxes = [BBox::new(0, 0, 2, 2, BoxSource::Pic).unwrap()];
    let err = client(endpoint).segment_boxes(&payload(6, 6), &boxes).await.unwrap_err();
    assert!(matches!(err, SegmentError::Protocol(_)), "{err}");
}

#[tokio::test]
async fn wrong_mask_size_is_protocol_error() {
    let endpoint = misbehaving(|r| SegmentResponse {
        version: PROTOCOL_VERSION.into(),
        masks: vec![
            MaskEntry {
                width: 1,
                height: 1,
                counts: vec![1],
                confidence: 0.5,
                error: None,
            };
            r.prompts.len()
        ],
    })
    .await;
    let boxes = [BBox::new(0, 0, 2, 2, BoxSource::Pic).unwrap()];
    let err = client(endpoint).segment_boxes(&payload(6, 6), &boxes).await.unwrap_err();
    assert!(matches!(err, SegmentError::Protocol(_)));
}

#[test]
fn blocking_wrapper_works_from_sync_code() {
    let mock = pointbox_segment::BackgroundMock::start(MockOptions::default()).unwrap();
    let seg = pointbox_segment::BlockingSegmenter::new(ClientConfig::new(mock.endpoint())).unwrap();
    let boxes = [BBox::new(2, 3, 5, 4, BoxSource::Pic).unwrap()];
    let masks = seg.segment_boxes(&payload(12, 12), &boxes).unwrap();
    assert_eq!(bbox_from_mask(&masks[0].rle).unwrap().rect(), boxes[0].rect());
    assert_eq!(mock.requests(), 1);
}
