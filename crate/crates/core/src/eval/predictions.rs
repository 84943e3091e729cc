use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::infer::{ClassScores, Detection};

#[derive(Debug, thiserror::Error)]
pub enum PredictionError {
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Contents of a predictions file. A file holds either detection lines or
/// classification lines, never both.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Predictions {
    pub detections: Vec<Detection>,
    pub classes: BTreeMap<String, ClassScores>,
}

#[derive(Deserialize)]
#[allow(non_snake_case)]
struct Weights {
    Tityus: f64,
    Bothriurus: f64,
    None: f64,
}

/// Classification lines may carry unnormalized weights; they are rescaled
/// to sum to one.
pub fn parse_predictions(text: &str) -> Result<Predictions, PredictionError> {
    let mut out = Predictions::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |message: String| PredictionError::Malformed { line, message };
        let obj: Map<String, Value> = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        if let Some(probs) = obj.get("probs") {
            if !out.detections.is_empty() {
                return Err(bad("classification line in a detection file".into()));
            }
            let id = match obj.get("image_id") {
                Some(Value::String(s)) if !s.is_empty() => s.clone(),
                _ => return Err(bad("field `image_id` must be a non-empty string".into())),
            };
            let w: Weights =
                serde_json::from_value(probs.clone()).map_err(|e| bad(format!("field `probs`: {e}")))?;
            let scores = ClassScores::from_weights([w.Tityus, w.Bothriurus, w.None])
                .map_err(|e| bad(format!("field `probs`: {e}")))?;
            if out.classes.insert(id.clone(), scores).is_some() {
                return Err(bad(format!("duplicate prediction for `{id}`")));
            }
        } else {
            if !out.classes.is_empty() {
                return Err(bad("detection line in a classification file".into()));
            }
            let d: Detection = serde_json::from_value(Value::Object(obj)).map_err(|e| bad(e.to_string()))?;
            if d.image_id.is_empty() {
                return Err(bad("field `image_id` must be a non-empty string".into()));
            }
            out.detections.push(d);
        }
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Predictions, PredictionError> {
    let text = std::fs::read_to_string(path).map_err(|source| PredictionError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_predictions(&text)
}

pub fn write_detections<W: Write>(dets: &[Detection], mut out: W) -> std::io::Result<()> {
    for d in dets {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClassLine<'a> {
    image_id: &'a str,
    #[serde(flatten)]
    scores: &'a ClassScores,
}

pub fn write_class_predictions<W: Write>(preds: &BTreeMap<String, ClassScores>, mut out: W) -> std::io::Result<()> {
    for (id, scores) in preds {
        serde_json::to_writer(&mut out, &ClassLine { image_id: id, scores })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
