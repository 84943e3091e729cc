//! Line-delimited JSON manifest reader and writer.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use super::{AnnotatedImage, BoundingBox, ClassLabel, Corpus, CorpusError, CorpusKind, Origin};

const KNOWN_FIELDS: [&str; 9] = [
    "id", "path", "width", "height", "split", "origin", "parent_id", "boxes", "class",
];

/// Reads a manifest, inferring the corpus kind: classification when every
/// record carries a class, detection otherwise.
pub fn load_manifest(path: &Path) -> Result<Corpus, CorpusError> {
    let text = read(path)?;
    parse_manifest(&text, None)
}

pub fn load_manifest_as(path: &Path, kind: CorpusKind) -> Result<Corpus, CorpusError> {
    let text = read(path)?;
    parse_manifest(&text, Some(kind))
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_manifest(text: &str, kind: Option<CorpusKind>) -> Result<Corpus, CorpusError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
            line,
            field: "<record>".into(),
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(CorpusError::Malformed {
                line,
                field: "<record>".into(),
                message: "expected a JSON object".into(),
            });
        };
        let rec = record_from_object(obj, line)?;
        rec.check()
            .map_err(|(field, message)| CorpusError::Malformed { line, field, message })?;
        records.push(rec);
        lines.push(line);
    }

    let kind = kind.unwrap_or_else(|| {
        let classification = !records.is_empty()
            && records.iter().all(|r| r.class_label.is_some());
        if classification {
            CorpusKind::Classification
        } else {
            CorpusKind::Detection
        }
    });

    // Corpus::new re-validates, but line numbers are more useful here.
    let mut seen = std::collections::HashSet::new();
    for (rec, &line) in records.iter().zip(&lines) {
        if !seen.insert(rec.id.as_str()) {
            return Err(CorpusError::Malformed {
                line,
                field: "id".into(),
                message: format!("duplicate id `{}`", rec.id),
            });
        }
        if kind == CorpusKind::Classification && rec.class_label.is_none() {
            return Err(CorpusError::Malformed {
                line,
                field: "class".into(),
                message: "classification records need a class".into(),
            });
        }
    }
    for (rec, &line) in records.iter().zip(&lines) {
        if let Some(parent) = &rec.parent_id {
            if !seen.contains(parent.as_str()) {
                return Err(CorpusError::Malformed {
                    line,
                    field: "parent_id".into(),
                    message: format!("parent `{parent}` is not in the manifest"),
                });
            }
        }
    }
    Corpus::new(kind, records)
}

fn record_from_object(mut obj: Map<String, Value>, line: usize) -> Result<AnnotatedImage, CorpusError> {
    let bad = |field: &str, message: String| CorpusError::Malformed {
        line,
        field: field.to_string(),
        message,
    };

    let id = take_string(&mut obj, "id").map_err(|m| bad("id", m))?;
    let path = take_string(&mut obj, "path").map_err(|m| bad("path", m))?;
    let width = take_u32(&mut obj, "width").map_err(|m| bad("width", m))?;
    let height = take_u32(&mut obj, "height").map_err(|m| bad("height", m))?;
    let split = take_string(&mut obj, "split")
        .and_then(|s| s.parse())
        .map_err(|m| bad("split", m))?;
    let origin = match take_string(&mut obj, "origin").map_err(|m| bad("origin", m))?.as_str() {
        "original" => Origin::Original,
        "augmented" => Origin::Augmented,
        other => return Err(bad("origin", format!("unknown origin `{other}`"))),
    };
    let parent_id = match obj.remove("parent_id") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(other) => return Err(bad("parent_id", format!("expected string or null, got {other}"))),
    };
    let boxes = match obj.remove("boxes") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, item)| parse_box(item).map_err(|(f, m)| bad(&format!("boxes[{i}]{f}"), m)))
            .collect::<Result<Vec<_>, _>>()?,
        Some(other) => return Err(bad("boxes", format!("expected array, got {other}"))),
    };
    let class_label = match obj.remove("class") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.parse::<ClassLabel>().map_err(|m| bad("class", m))?),
        Some(other) => return Err(bad("class", format!("expected string or null, got {other}"))),
    };
    debug_assert!(KNOWN_FIELDS.iter().all(|k| !obj.contains_key(*k)));

    Ok(AnnotatedImage {
        id,
        path,
        width,
        height,
        split,
        origin,
        parent_id,
        boxes,
        class_label,
        extra: obj,
    })
}

fn parse_box(value: Value) -> Result<BoundingBox, (String, String)> {
    let Value::Object(mut obj) = value else {
        return Err((String::new(), "expected an object".into()));
    };
    let mut coord = |k: &str| take_u32(&mut obj, k).map_err(|m| (format!(".{k}"), m));
    let x = coord("x")?;
    let y = coord("y")?;
    let w = coord("w")?;
    let h = coord("h")?;
    let label = take_string(&mut obj, "label").map_err(|m| (".label".to_string(), m))?;
    Ok(BoundingBox { x, y, w, h, label })
}

fn take_string(obj: &mut Map<String, Value>, key: &str) -> Result<String, String> {
    match obj.remove(key) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(format!("expected string, got {other}")),
        None => Err("missing".into()),
    }
}

fn take_u32(obj: &mut Map<String, Value>, key: &str) -> Result<u32, String> {
    match obj.remove(key) {
        Some(Value::Number(n)) => n
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| format!("expected a non-negative integer, got {n}")),
        Some(other) => Err(format!("expected integer, got {other}")),
        None => Err("missing".into()),
    }
}

/// Serializes records one per line, newline-terminated.
pub fn write_manifest<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for rec in corpus.records() {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_manifest(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    write_manifest(corpus, &mut buf).expect("writing to a Vec cannot fail");
    fs::write(path, buf).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"id":"a","path":"img/a.png","width":100,"height":50,"split":"unassigned","origin":"original","parent_id":null,"boxes":[{"x":10,"y":5,"w":20,"h":10,"label":"scorpion"}],"class":null,"camera":"trap-3"}"#;

    #[test]
    fn empty_text_is_empty_corpus() {
        let c = parse_manifest("", None).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.kind(), CorpusKind::Detection);
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let c = parse_manifest(LINE, None).unwrap();
        assert_eq!(c.records()[0].extra["camera"], "trap-3");
        let mut out = Vec::new();
        write_manifest(&c, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{LINE}\n"));
    }

    #[test]
    fn zero_width_box_names_line_and_field() {
        let bad = LINE.replace(r#""w":20"#, r#""w":0"#);
        let text = format!("{LINE}\n{}", bad.replace(r#""id":"a""#, r#""id":"b""#));
        match parse_manifest(&text, None).unwrap_err() {
            CorpusError::Malformed { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "boxes[0].w");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn box_outside_image_is_rejected() {
        let bad = LINE.replace(r#""x":10"#, r#""x":90"#);
        let err = parse_manifest(&bad, None).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, ref field, .. } if field == "boxes[0]"));
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = parse_manifest(&format!("{LINE}\n\n{{not json"), None).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 3, .. }));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_manifest(Path::new("/definitely/not/here.jsonl")).unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    #[test]
    fn infers_classification_kind() {
        let line = r#"{"id":"t","path":"t.png","width":8,"height":8,"split":"train","origin":"original","parent_id":null,"boxes":[],"class":"Tityus"}"#;
        let c = parse_manifest(line, None).unwrap();
        assert_eq!(c.kind(), CorpusKind::Classification);
        assert_eq!(c.records()[0].class_label, Some(ClassLabel::Tityus));
    }
}
