//! Annotated image corpora: records, manifests, splitting and summaries.

mod manifest;
mod split;
mod stats;

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use manifest::{load_manifest, load_manifest_as, parse_manifest, save_manifest, write_manifest};
pub use split::{split_corpus, SplitOptions, SplitRatios};
pub use stats::{corpus_stats, CorpusStats};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("duplicate record id `{0}`")]
    DuplicateId(String),
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("record `{0}` already has a split; pass allow_reassign to overwrite")]
    AlreadyAssigned(String),
}

/// Axis-aligned box in integer pixels, top-left origin.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub label: String,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32, label: impl Into<String>) -> Self {
        Self {
            x,
            y,
            w,
            h,
            label: label.into(),
        }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn right(&self) -> u64 {
        self.x as u64 + self.w as u64
    }

    pub fn bottom(&self) -> u64 {
        self.y as u64 + self.h as u64
    }

    /// Positive extent and fully inside a `width` x `height` canvas.
    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w > 0 && self.h > 0 && self.right() <= width as u64 && self.bottom() <= height as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Augmented,
}

/// The three image classes. Declaration order is the argmax tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Tityus,
    Bothriurus,
    None,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Tityus, ClassLabel::Bothriurus, ClassLabel::None];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Tityus => "Tityus",
            ClassLabel::Bothriurus => "Bothriurus",
            ClassLabel::None => "None",
        }
    }

    /// Only *Tityus* is of sanitary importance.
    pub fn is_dangerous(self) -> bool {
        self == ClassLabel::Tityus
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Tityus" => Ok(ClassLabel::Tityus),
            "Bothriurus" => Ok(ClassLabel::Bothriurus),
            "None" => Ok(ClassLabel::None),
            other => Err(format!("unknown class `{other}`")),
        }
    }
}

/// One manifest record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnnotatedImage {
    pub id: String,
    pub path: String,
    pub width: u32,
    pub height: u32,
    pub split: Split,
    pub origin: Origin,
    pub parent_id: Option<String>,
    pub boxes: Vec<BoundingBox>,
    #[serde(rename = "class")]
    pub class_label: Option<ClassLabel>,
    /// Fields this version does not know about, kept for round-tripping.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl AnnotatedImage {
    pub fn new(id: impl Into<String>, path: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            width,
            height,
            split: Split::Unassigned,
            origin: Origin::Original,
            parent_id: None,
            boxes: Vec::new(),
            class_label: None,
            extra: Map::new(),
        }
    }

    pub fn with_boxes(mut self, boxes: Vec<BoundingBox>) -> Self {
        self.boxes = boxes;
        self
    }

    pub fn with_class(mut self, class: ClassLabel) -> Self {
        self.class_label = Some(class);
        self
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Image-level ground truth for presence evaluation.
    pub fn is_positive(&self) -> bool {
        !self.boxes.is_empty()
    }

    /// The record's class: its explicit label, or for detection records
    /// `None` without boxes and otherwise the label of the largest box.
    pub fn truth_class(&self) -> Option<ClassLabel> {
        if self.class_label.is_some() {
            return self.class_label;
        }
        match self.boxes.iter().rev().max_by_key(|b| b.area()) {
            None => Some(ClassLabel::None),
            Some(b) => b.label.parse().ok(),
        }
    }

    /// Checks the record in isolation. Returns the offending field and a message.
    pub(crate) fn check(&self) -> Result<(), (String, String)> {
        if self.id.is_empty() {
            return Err(("id".into(), "must not be empty".into()));
        }
        if self.width == 0 {
            return Err(("width".into(), "must be > 0".into()));
        }
        if self.height == 0 {
            return Err(("height".into(), "must be > 0".into()));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if b.w == 0 {
                return Err((format!("boxes[{i}].w"), "must be > 0".into()));
            }
            if b.h == 0 {
                return Err((format!("boxes[{i}].h"), "must be > 0".into()));
            }
            if !b.fits(self.width, self.height) {
                return Err((
                    format!("boxes[{i}]"),
                    format!(
                        "box ({},{},{},{}) lies outside the {}x{} image",
                        b.x, b.y, b.w, b.h, self.width, self.height
                    ),
                ));
            }
        }
        if self.origin == Origin::Augmented && self.parent_id.is_none() {
            return Err(("parent_id".into(), "augmented records need a parent".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Detection,
    Classification,
}

/// Ordered, validated collection of records.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    kind: CorpusKind,
    records: Vec<AnnotatedImage>,
}

impl Corpus {
    pub fn new(kind: CorpusKind, records: Vec<AnnotatedImage>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            rec.check().map_err(|(field, message)| CorpusError::InvalidRecord {
                id: rec.id.clone(),
                reason: format!("{field}: {message}"),
            })?;
            if !seen.insert(rec.id.as_str()) {
                return Err(CorpusError::DuplicateId(rec.id.clone()));
            }
            if kind == CorpusKind::Classification && rec.class_label.is_none() {
                return Err(CorpusError::InvalidRecord {
                    id: rec.id.clone(),
                    reason: "classification records need a class".into(),
                });
            }
        }
        for rec in &records {
            if let Some(parent) = &rec.parent_id {
                if !seen.contains(parent.as_str()) {
                    return Err(CorpusError::InvalidRecord {
                        id: rec.id.clone(),
                        reason: format!("parent `{parent}` is not in the corpus"),
                    });
                }
            }
        }
        Ok(Self { kind, records })
    }

    pub fn empty(kind: CorpusKind) -> Self {
        Self {
            kind,
            records: Vec::new(),
        }
    }

    pub fn kind(&self) -> CorpusKind {
        self.kind
    }

    pub fn records(&self) -> &[AnnotatedImage] {
        &self.records
    }

    pub fn into_records(self) -> Vec<AnnotatedImage> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedImage> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &AnnotatedImage> {
        self.records.iter().filter(move |r| r.split == split)
    }
}
