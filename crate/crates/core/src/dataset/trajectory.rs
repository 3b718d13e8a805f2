use std::path::Path;

use crate::dataset::SequenceKey;
use crate::error::{Error, Result};
use crate::pic::TrajectoryPoint;

const HEADER: [&str; 3] = ["frame", "x", "y"];

/// Name of the pre-extracted image for a frame, without extension.
pub fn frame_file_name(frame_index: u64) -> String {
    format!("frame_{frame_index:06}")
}

/// Reads a `frame,x,y` trajectory table.
pub fn ingest_trajectory(path: impl AsRef<Path>, sequence: Option<SequenceKey>) -> Result<Vec<TrajectoryPoint>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&text, &path.display().to_string(), sequence)
}

/// Parses trajectory text. Rows come back sorted by frame index; rows that
/// were out of order are reordered with a warning.
pub fn parse_trajectory(text: &str, origin: &str, sequence: Option<SequenceKey>) -> Result<Vec<TrajectoryPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };

    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(err(1, format!("expected header `frame,x,y`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }

    let mut points = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| row.get(i).unwrap_or("");
        let frame_index: u64 = field(0)
            .parse()
            .map_err(|_| err(line, format!("bad frame index {:?}", field(0))))?;
        let x: f64 = field(1)
            .parse()
            .map_err(|_| err(line, format!("bad x coordinate {:?}", field(1))))?;
        let y: f64 = field(2)
            .parse()
            .map_err(|_| err(line, format!("bad y coordinate {:?}", field(2))))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(err(line, "coordinates must be finite".into()));
        }
        points.push(TrajectoryPoint {
            x,
            y,
            frame_index,
            sequence,
        });
    }

    if points.windows(2).any(|w| w[1].frame_index < w[0].frame_index) {
        log::warn!("{origin}: frame indices are not monotonic; reordering");
        points.sort_by_key(|p| p.frame_index);
    }
    Ok(points)
}

/// Keeps every `stride`-th annotated frame, counting from the first annotated
/// frame. Frames without annotations are never produced.
pub fn sample_frames(points: &[TrajectoryPoint], stride: u64) -> Result<Vec<TrajectoryPoint>> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let Some(anchor) = points.iter().map(|p| p.frame_index).min() else {
        return Ok(Vec::new());
    };
    Ok(points
        .iter()
        .filter(|p| (p.frame_index - anchor) % stride == 0)
        .copied()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(points: &[TrajectoryPoint]) -> Vec<u64> {
        points.iter().map(|p| p.frame_index).collect()
    }

    fn at(indices: impl IntoIterator<Item = u64>) -> Vec<TrajectoryPoint> {
        indices.into_iter().map(|i| TrajectoryPoint::new(1.0, 1.0, i)).collect()
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_trajectory("frame,x,y\n", "t", None).unwrap().is_empty());
    }

    #[test]
    fn parses_fractional_row() {
        let p = parse_trajectory("frame,x,y\n12,960.5,540.25\n", "t", None).unwrap();
        assert_eq!(p, vec![TrajectoryPoint::new(960.5, 540.25, 12)]);
    }

    #[test]
    fn hundred_rows_sorted() {
        let mut text = String::from("frame,x,y\n");
        for i in (0..100u64).rev() {
            text.push_str(&format!("{},{}.0,{}.5\n", i * 3, i, i));
        }
        let p = parse_trajectory(&text, "t", None).unwrap();
        assert_eq!(p.len(), 100);
        assert!(p.windows(2).all(|w| w[0].frame_index <= w[1].frame_index));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_trajectory("frame,x,y\n1,2,3\n2,abc,4\n", "traj.csv", None).unwrap_err();
        match err {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "traj.csv");
            }
            other => panic!("{other}"),
        }
        assert!(parse_trajectory("frame,x,y\n1,2\n", "t", None).is_err());
        assert!(parse_trajectory("f,x,y\n1,2,3\n", "t", None).is_err());
        assert!(parse_trajectory("", "t", None).is_err());
    }

    #[test]
    fn sequence_key_propagates() {
        let key = SequenceKey::new(2, 3).unwrap();
        let p = parse_trajectory("frame,x,y\n0,1,1\n", "t", Some(key)).unwrap();
        assert_eq!(p[0].sequence, Some(key));
    }

    #[test]
    fn stride_ten_over_contiguous_frames() {
        assert_eq!(frames(&sample_frames(&at(0..25), 10).unwrap()), vec![0, 10, 20]);
    }

    #[test]
    fn stride_one_is_identity() {
        let pts = at([3, 4, 9, 100]);
        assert_eq!(sample_frames(&pts, 1).unwrap(), pts);
    }

    #[test]
    fn stride_anchored_at_first_annotation() {
        assert_eq!(frames(&sample_frames(&at([5, 7, 15, 25, 26]), 10).unwrap()), vec![5, 15, 25]);
        assert!(sample_frames(&[], 10).unwrap().is_empty());
        assert!(sample_frames(&at([1]), 0).is_err());
    }

    #[test]
    fn frame_names_are_zero_padded() {
        assert_eq!(frame_file_name(42), "frame_000042");
    }
}
