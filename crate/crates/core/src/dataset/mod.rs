//! Sequence bookkeeping, trajectory input, split planning, label output and
//! dataset assembly.

mod build;
mod labels;
mod split;
mod trajectory;

pub use build::{build_dataset, find_frame, BuildOptions, Manifest, MaskProvider, PointFailure, SequenceReport, SplitTotals};
pub use labels::{
    denormalize, emit_detection_label, emit_segmentation_label, parse_detection_label, AnnotationRecord,
    NormalizedBox,
};
pub use split::{SequenceInfo, SequenceKey, Split, SplitPlan, SOURCE_SEQUENCES};
pub use trajectory::{frame_file_name, ingest_trajectory, parse_trajectory, sample_frames};
