//! Inference backend contract and the deterministic reference backend.

mod reference;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedImage, BoundingBox, ClassLabel};

pub use reference::ReferenceBackend;

/// Below this top probability a classification is flagged uncertain.
pub const LOW_CONFIDENCE: f64 = 0.5;
const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("undecodable image: {0}")]
    Decode(String),
    #[error("no ground truth for `{0}`")]
    NoGroundTruth(String),
    #[error("{0}")]
    Unsupported(String),
}

/// What a backend is asked about: a corpus id or encoded image bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ImageInput {
    Id(String),
    Bytes(Vec<u8>),
}

/// Class probabilities indexed in `ClassLabel::ALL` order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassScores {
    probs: [f64; 3],
}

impl ClassScores {
    /// Requires finite, non-negative probabilities summing to 1 within 1e-6.
    pub fn new(probs: [f64; 3]) -> Result<Self, String> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0 + PROB_SUM_TOLERANCE) {
            return Err(format!("probabilities {probs:?} must lie in [0, 1]"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(format!("probabilities sum to {sum}, not 1"));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: [f64; 3]) -> Result<Self, String> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(format!("weights {weights:?} must be finite and non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err("weights sum to zero".into());
        }
        Self::new(weights.map(|w| w / sum))
    }

    pub fn one_hot(label: ClassLabel) -> Self {
        let mut probs = [0.0; 3];
        probs[label.index()] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> [f64; 3] {
        self.probs
    }

    pub fn prob(&self, label: ClassLabel) -> f64 {
        self.probs[label.index()]
    }

    /// Argmax; ties go to the earlier class in Tityus, Bothriurus, None.
    pub fn label(&self) -> ClassLabel {
        let mut best = 0;
        for i in 1..3 {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        ClassLabel::ALL[best]
    }

    pub fn dangerous(&self) -> bool {
        self.label().is_dangerous()
    }

    pub fn low_confidence(&self) -> bool {
        self.probs[self.label().index()] < LOW_CONFIDENCE
    }
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct ProbsWire {
    Tityus: f64,
    Bothriurus: f64,
    None: f64,
}

#[derive(Serialize, Deserialize)]
struct ClassScoresWire {
    probs: ProbsWire,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<ClassLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dangerous: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    low_confidence: Option<bool>,
}

impl Serialize for ClassScores {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ClassScoresWire {
            probs: ProbsWire {
                Tityus: self.probs[0],
                Bothriurus: self.probs[1],
                None: self.probs[2],
            },
            label: Some(self.label()),
            dangerous: Some(self.dangerous()),
            low_confidence: Some(self.low_confidence()),
        }
        .serialize(s)
    }
}

/// Derived fields are optional on input but must agree with the
/// probabilities when present.
impl<'de> Deserialize<'de> for ClassScores {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let w = ClassScoresWire::deserialize(d)?;
        let scores = ClassScores::new([w.probs.Tityus, w.probs.Bothriurus, w.probs.None]).map_err(D::Error::custom)?;
        if w.label.is_some_and(|l| l != scores.label()) {
            return Err(D::Error::custom("label is not the argmax of probs"));
        }
        if w.dangerous.is_some_and(|v| v != scores.dangerous()) {
            return Err(D::Error::custom("dangerous disagrees with label"));
        }
        if w.low_confidence.is_some_and(|v| v != scores.low_confidence()) {
            return Err(D::Error::custom("low_confidence disagrees with probs"));
        }
        Ok(scores)
    }
}

/// One scored box. On the wire it is flat:
/// `{image_id, x, y, w, h, score, label}`, with `image_id` omitted when empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionWire", into = "DetectionWire")]
pub struct Detection {
    pub image_id: String,
    pub bbox: BoundingBox,
    pub score: f64,
}

impl Detection {
    pub fn new(image_id: impl Into<String>, bbox: BoundingBox, score: f64) -> Self {
        Self {
            image_id: image_id.into(),
            bbox,
            score,
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        if self.bbox.w == 0 || self.bbox.h == 0 {
            return Err("box has zero width or height".into());
        }
        Ok(())
    }

    pub fn fits(&self, record: &AnnotatedImage) -> bool {
        self.bbox.fits(record.width, record.height)
    }
}

#[derive(Serialize, Deserialize)]
struct DetectionWire {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    image_id: String,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    score: f64,
    label: String,
}

impl TryFrom<DetectionWire> for Detection {
    type Error = String;

    fn try_from(w: DetectionWire) -> Result<Self, String> {
        let d = Detection::new(w.image_id, BoundingBox::new(w.x, w.y, w.w, w.h, w.label), w.score);
        d.check()?;
        Ok(d)
    }
}

impl From<Detection> for DetectionWire {
    fn from(d: Detection) -> Self {
        Self {
            image_id: d.image_id,
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            score: d.score,
            label: d.bbox.label,
        }
    }
}

/// Highest score first; equal scores by lower x, then lower y.
pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.bbox.x.cmp(&b.bbox.x))
            .then(a.bbox.y.cmp(&b.bbox.y))
    });
}

/// A detector plus classifier. Implementations must be safe to call from
/// several threads at once.
pub trait Backend: Send + Sync {
    fn name(&self) -> String;
    /// Every detection the model produces, sorted per [`sort_detections`].
    fn detect(&self, input: &ImageInput) -> Result<Vec<Detection>, BackendError>;
    fn classify(&self, input: &ImageInput) -> Result<ClassScores, BackendError>;
    fn health(&self) -> Result<(), BackendError>;
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackendKind {
    Reference { manifest: String, noise_eps: f64, seed: u64 },
    Remote { endpoint: String },
}

/// Parsed `--backend` value: `reference:<manifest>:<eps>:<seed>` or an
/// `http(s)://` URL.
#[derive(Clone, Debug, PartialEq)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
}

impl FromStr for BackendDescriptor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.starts_with("http://") || s.starts_with("https://") {
            return Ok(Self {
                name: "remote".into(),
                kind: BackendKind::Remote {
                    endpoint: s.trim_end_matches('/').to_string(),
                },
            });
        }
        let Some(rest) = s.strip_prefix("reference:") else {
            return Err(format!("`{s}` is neither `reference:<manifest>:<eps>:<seed>` nor an http(s) URL"));
        };
        // The manifest path may itself contain ':'; eps and seed are the last two fields.
        let mut parts = rest.rsplitn(3, ':');
        let (Some(seed), Some(eps), Some(manifest)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("`{s}` must look like reference:<manifest>:<eps>:<seed>"));
        };
        let noise_eps: f64 = eps.parse().map_err(|_| format!("noise `{eps}` is not a number"))?;
        if !(0.0..=1.0).contains(&noise_eps) {
            return Err(format!("noise {noise_eps} outside [0, 1]"));
        }
        let seed: u64 = seed.parse().map_err(|_| format!("seed `{seed}` is not an unsigned integer"))?;
        if manifest.is_empty() {
            return Err("empty manifest path".into());
        }
        Ok(Self {
            name: "reference".into(),
            kind: BackendKind::Reference {
                manifest: manifest.to_string(),
                noise_eps,
                seed,
            },
        })
    }
}

impl fmt::Display for BackendDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            BackendKind::Reference {
                manifest,
                noise_eps,
                seed,
            } => write!(f, "reference:{manifest}:{noise_eps}:{seed}"),
            BackendKind::Remote { endpoint } => f.write_str(endpoint),
        }
    }
}
