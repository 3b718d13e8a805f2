use thiserror::Error;

#[derive(Debug, Error)]
pub enum SegmentError {
    /// The service could not be reached even after retrying.
    #[error("segmentation endpoint unreachable ({message}); unserved boxes: {unserved:?}")]
    Unreachable { unserved: Vec<usize>, message: String },

    /// The service answered with something that does not follow the protocol.
    #[error("segmentation protocol error: {0}")]
    Protocol(String),

    #[error("invalid segmentation input: {0}")]
    InvalidInput(String),

    #[error("segmentation runtime error: {0}")]
    Runtime(String),
}
