//! Box-prompted segmentation over HTTP.
//!
//! [`client::SegmentClient`] sends frames with box prompts to a segmentation
//! service and reassembles the returned masks in prompt order.
//! [`mock`] provides a local server that echoes each prompt as a filled mask,
//! for tests and dry runs.

pub mod client;
pub mod error;
pub mod mock;
pub mod protocol;

pub use client::{BlockingSegmenter, ClientConfig, RetryPolicy, SegmentClient};
pub use error::SegmentError;
pub use mock::{BackgroundMock, MockOptions, MockServer};
pub use protocol::{ImagePayload, SegmentedMask, PROTOCOL_VERSION};
