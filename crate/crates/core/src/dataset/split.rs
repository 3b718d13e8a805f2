use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One recorded sequence of the source footage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceInfo {
    pub key: SequenceKey,
    pub frames: u32,
    pub width: u32,
    pub height: u32,
    /// Split in the published release and its image count; `None` for
    /// sequences without trajectory data.
    pub reference: Option<(Split, u32)>,
}

const fn seq(
    dataset: u8,
    camera: u8,
    frames: u32,
    width: u32,
    height: u32,
    reference: Option<(Split, u32)>,
) -> SequenceInfo {
    SequenceInfo {
        key: SequenceKey { dataset, camera },
        frames,
        width,
        height,
        reference,
    }
}

use Split::{Test, Train, Valid};

/// Every sequence of the multi-view drone tracking footage: frame count,
/// resolution and the split it was assigned in the reference release.
pub const SOURCE_SEQUENCES: [SequenceInfo; 27] = [
    seq(1, 0, 5334, 1920, 1080, Some((Train, 291))),
    seq(1, 1, 4941, 1920, 1080, Some((Valid, 303))),
    seq(1, 2, 8016, 1920, 1080, Some((Train, 394))),
    seq(1, 3, 4080, 1920, 1080, Some((Test, 348))),
    seq(2, 0, 4377, 1920, 1080, Some((Test, 237))),
    seq(2, 1, 4749, 1920, 1080, Some((Train, 343))),
    seq(2, 2, 8688, 1920, 1080, Some((Train, 809))),
    seq(2, 3, 4332, 1920, 1080, Some((Valid, 426))),
    seq(3, 0, 33875, 1920, 1080, Some((Train, 3190))),
    seq(3, 1, 19960, 1920, 1080, Some((Train, 841))),
    seq(3, 2, 17166, 3840, 2160, Some((Valid, 1067))),
    seq(3, 3, 14196, 1440, 1080, Some((Train, 638))),
    seq(3, 4, 18900, 1920, 1080, Some((Test, 1253))),
    seq(3, 5, 28080, 1920, 1080, Some((Train, 1303))),
    seq(4, 0, 31075, 1920, 1080, Some((Test, 2355))),
    seq(4, 1, 15409, 1920, 1080, Some((Train, 416))),
    seq(4, 2, 15678, 1920, 1080, Some((Train, 701))),
    seq(4, 3, 10933, 3840, 2160, Some((Train, 727))),
    seq(4, 4, 17640, 1920, 1080, Some((Valid, 924))),
    seq(4, 5, 32016, 1920, 1080, Some((Train, 1110))),
    seq(4, 6, 11292, 1440, 1080, Some((Test, 385))),
    seq(5, 0, 20970, 1920, 1080, None),
    seq(5, 1, 28047, 1920, 1080, None),
    seq(5, 2, 31860, 2704, 2028, None),
    seq(5, 3, 31992, 1920, 1080, None),
    seq(5, 4, 21523, 2288, 1080, None),
    seq(5, 5, 17550, 1920, 1080, None),
];

/// A (dataset, camera) pair, written `d{dataset}/c{camera}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SequenceKey {
    pub dataset: u8,
    pub camera: u8,
}

impl SequenceKey {
    /// Validates against the known source sequences.
    pub fn new(dataset: u8, camera: u8) -> Result<Self> {
        let key = Self { dataset, camera };
        key.info()
            .map(|_| key)
            .ok_or_else(|| Error::UnknownSequence(key.to_string()))
    }

    pub fn info(&self) -> Option<&'static SequenceInfo> {
        SOURCE_SEQUENCES.iter().find(|s| s.key == *self)
    }

    /// File-name friendly form, `d1_c0`.
    pub fn slug(&self) -> String {
        format!("d{}_c{}", self.dataset, self.camera)
    }
}

impl fmt::Display for SequenceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}/c{}", self.dataset, self.camera)
    }
}

impl FromStr for SequenceKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownSequence(s.to_string());
        let (d, c) = s.trim().split_once('/').ok_or_else(bad)?;
        let dataset = d.strip_prefix('d').and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let camera = c.strip_prefix('c').and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        Self::new(dataset, camera)
    }
}

impl Serialize for SequenceKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SequenceKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
    Excluded,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Excluded => "excluded",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "valid" | "val" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "excluded" => Ok(Split::Excluded),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Assignment of sequences to splits.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitPlan {
    assignments: BTreeMap<SequenceKey, Split>,
}

impl SplitPlan {
    /// The assignment used by the reference release; dataset 5 has no
    /// trajectories and is held out entirely.
    pub fn canonical() -> Self {
        let assignments = SOURCE_SEQUENCES
            .iter()
            .map(|s| (s.key, s.reference.map_or(Split::Excluded, |(split, _)| split)))
            .collect();
        Self { assignments }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (SequenceKey, Split)>) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for (k, v) in pairs {
            if assignments.insert(k, v).is_some() {
                return Err(Error::Config(format!("sequence {k} assigned twice")));
            }
        }
        Ok(Self { assignments })
    }

    /// Parses `d1/c0=train` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected key=split".into()))?;
            let key: SequenceKey = k.trim().parse().map_err(|e: Error| err(e.to_string()))?;
            let split: Split = v.parse().map_err(|e: Error| err(e.to_string()))?;
            if assignments.insert(key, split).is_some() {
                return Err(err(format!("sequence {key} assigned twice")));
            }
        }
        Ok(Self { assignments })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        self.assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn assign(&self, key: &SequenceKey) -> Result<Split> {
        self.assignments
            .get(key)
            .copied()
            .ok_or_else(|| Error::UnknownSequence(key.to_string()))
    }

    pub fn assignments(&self) -> &BTreeMap<SequenceKey, Split> {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}
