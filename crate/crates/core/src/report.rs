//! Evaluation runs and their report documents. The CLI and the service both
//! go through [`run_evaluation`] and [`Report::to_json`], so identical inputs
//! give byte-identical reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::corpus::{load_manifest, AnnotatedImage, ClassLabel, Corpus, CorpusError, CorpusKind};
use crate::eval::{
    classify_eval, dangerous_roc, evaluate_detections, read_predictions, sweep_thresholds, EvalError, EvalScope,
    MatchConfig, MatchMode, PredictionError,
};
use crate::infer::{Backend, BackendError, ClassScores, Detection, ImageInput};
use crate::metrics::{metrics_from_binary, MetricSet, RocCurve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Detect,
    Classify,
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "detect" => Ok(EvalMode::Detect),
            "classify" => Ok(EvalMode::Classify),
            other => Err(format!("unknown mode `{other}` (expected detect or classify)")),
        }
    }
}

fn default_threshold() -> f64 {
    0.5
}

/// Body of `POST /evaluate`. Without `predictions` the caller's backend is
/// queried for every image in scope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    pub mode: EvalMode,
    pub manifest: String,
    #[serde(default)]
    pub predictions: Option<String>,
    #[serde(default = "default_threshold")]
    pub iou_threshold: f64,
    #[serde(default = "default_threshold")]
    pub score_threshold: f64,
    #[serde(default)]
    pub match_mode: MatchMode,
    #[serde(default)]
    pub scope: EvalScope,
}

impl EvalRequest {
    pub fn new(mode: EvalMode, manifest: impl Into<String>) -> Self {
        Self {
            mode,
            manifest: manifest.into(),
            predictions: None,
            iou_threshold: 0.5,
            score_threshold: 0.5,
            match_mode: MatchMode::Presence,
            scope: EvalScope::Auto,
        }
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            iou_threshold: self.iou_threshold,
            score_threshold: self.score_threshold,
            mode: self.match_mode,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// The request contradicts its inputs (wrong mode for the corpus, etc.).
    #[error("inconsistent request: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Predictions(#[from] PredictionError),
    #[error("backend failed on `{id}`: {source}")]
    Backend { id: String, source: BackendError },
    #[error("cannot read image {}: {source}", path.display())]
    Image { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A finished evaluation. Serialized field order is fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub mode: EvalMode,
    pub document: Value,
    pub roc: Option<RocCurve<f64>>,
}

impl Report {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&self.document).expect("report serializes");
        out.push(b'\n');
        out
    }

    pub fn roc_csv(&self) -> Option<String> {
        self.roc.as_ref().map(RocCurve::to_csv)
    }

    pub fn roc_svg(&self) -> Option<String> {
        self.roc.as_ref().map(|c| {
            let pts: Vec<(f64, f64)> = c.points().iter().map(|p| (p.fpr, p.tpr)).collect();
            roc_svg(&pts, c.auc())
        })
    }
}

fn metrics_value(m: &MetricSet<f64>) -> Value {
    json!({
        "accuracy": m.accuracy,
        "precision": m.precision,
        "recall": m.recall,
        "f_measure": m.f_measure,
    })
}

fn roc_value(curve: &Option<RocCurve<f64>>) -> Value {
    curve.as_ref().map_or(Value::Null, |c| serde_json::to_value(c).expect("curve serializes"))
}

fn check_kind(mode: EvalMode, corpus: &Corpus) -> Result<(), RunError> {
    let expected = match mode {
        EvalMode::Detect => CorpusKind::Detection,
        EvalMode::Classify => CorpusKind::Classification,
    };
    if corpus.kind() != expected {
        return Err(RunError::Inconsistent(format!(
            "{mode:?} mode needs a {expected:?} corpus, got {:?}",
            corpus.kind()
        )));
    }
    Ok(())
}

fn image_bytes(rec: &AnnotatedImage, base: &Path) -> Result<Vec<u8>, RunError> {
    let p = Path::new(&rec.path);
    let path = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::fs::read(&path).map_err(|source| RunError::Image { path, source })
}

/// Asks the backend by id first and falls back to the image bytes.
fn ask<T>(
    rec: &AnnotatedImage,
    base: &Path,
    call: impl Fn(&ImageInput) -> Result<T, BackendError>,
) -> Result<T, RunError> {
    let wrap = |source| RunError::Backend {
        id: rec.id.clone(),
        source,
    };
    match call(&ImageInput::Id(rec.id.clone())) {
        Err(BackendError::Unsupported(_)) => {
            let bytes = image_bytes(rec, base)?;
            call(&ImageInput::Bytes(bytes)).map_err(wrap)
        }
        other => other.map_err(wrap),
    }
}

pub fn backend_detections(
    backend: &dyn Backend,
    records: &[&AnnotatedImage],
    base: &Path,
) -> Result<Vec<Detection>, RunError> {
    let mut all = Vec::new();
    for rec in records {
        for mut d in ask(rec, base, |i| backend.detect(i))? {
            d.image_id = rec.id.clone();
            all.push(d);
        }
    }
    Ok(all)
}

pub fn backend_classes(
    backend: &dyn Backend,
    records: &[&AnnotatedImage],
    base: &Path,
) -> Result<BTreeMap<String, ClassScores>, RunError> {
    records
        .iter()
        .map(|rec| Ok((rec.id.clone(), ask(rec, base, |i| backend.classify(i))?)))
        .collect()
}

/// Loads the manifest, gathers predictions (file or backend) and evaluates.
pub fn run_evaluation(req: &EvalRequest, backend: Option<&dyn Backend>) -> Result<Report, RunError> {
    req.match_config().validate()?;
    let manifest = Path::new(&req.manifest);
    let corpus = load_manifest(manifest)?;
    check_kind(req.mode, &corpus)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let records = req.scope.select(&corpus);

    let (detections, classes) = match (&req.predictions, backend) {
        (Some(path), _) => {
            let p = read_predictions(Path::new(path))?;
            match req.mode {
                EvalMode::Detect if !p.classes.is_empty() => {
                    return Err(RunError::Inconsistent("detect mode given classification predictions".into()))
                }
                EvalMode::Classify if !p.detections.is_empty() => {
                    return Err(RunError::Inconsistent("classify mode given detection predictions".into()))
                }
                _ => (p.detections, p.classes),
            }
        }
        (None, Some(b)) => match req.mode {
            EvalMode::Detect => (backend_detections(b, &records, base)?, BTreeMap::new()),
            EvalMode::Classify => (Vec::new(), backend_classes(b, &records, base)?),
        },
        (None, None) => return Err(RunError::Inconsistent("no predictions file and no backend".into())),
    };

    match req.mode {
        EvalMode::Detect => detect_report(req, &corpus, &detections),
        EvalMode::Classify => classify_report(req, &corpus, &classes),
    }
}

fn settings(req: &EvalRequest) -> Value {
    json!({
        "iou_threshold": req.iou_threshold,
        "score_threshold": req.score_threshold,
        "match_mode": req.match_mode,
        "scope": req.scope,
    })
}

pub fn detect_report(req: &EvalRequest, corpus: &Corpus, dets: &[Detection]) -> Result<Report, RunError> {
    let cfg = req.match_config();
    let result = evaluate_detections(corpus, dets, &cfg, req.scope)?;
    let metrics = metrics_from_binary::<f64>(&result.confusion).map_err(EvalError::from)?;
    let roc = match sweep_thresholds::<f64>(corpus, dets, req.scope) {
        Ok(s) => Some(s.curve),
        Err(EvalError::Metrics(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut doc = Map::new();
    doc.insert("mode".into(), json!("detect"));
    doc.insert("n".into(), json!(req.scope.select(corpus).len()));
    doc.insert("settings".into(), settings(req));
    doc.insert("confusion".into(), serde_json::to_value(result.confusion).expect("serializes"));
    doc.insert("metrics".into(), metrics_value(&metrics));
    doc.insert("roc".into(), roc_value(&roc));
    doc.insert("localization_errors".into(), json!(result.localization_errors));
    Ok(Report {
        mode: EvalMode::Detect,
        document: Value::Object(doc),
        roc,
    })
}

/// `metrics` and `roc` describe Tityus (dangerous) against the rest;
/// `per_class` holds every one-vs-rest metric set.
pub fn classify_report(
    req: &EvalRequest,
    corpus: &Corpus,
    preds: &BTreeMap<String, ClassScores>,
) -> Result<Report, RunError> {
    let matrix = classify_eval(corpus, preds, req.scope)?;
    let roc = match dangerous_roc::<f64>(corpus, preds, req.scope) {
        Ok(c) => Some(c),
        Err(EvalError::Metrics(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut per_class = Map::new();
    for c in ClassLabel::ALL {
        let m = matrix.per_class_metrics::<f64>(c.as_str()).map_err(EvalError::from)?;
        per_class.insert(c.as_str().into(), metrics_value(&m));
    }
    let dangerous = matrix
        .per_class_metrics::<f64>(ClassLabel::Tityus.as_str())
        .map_err(EvalError::from)?;
    let mut doc = Map::new();
    doc.insert("mode".into(), json!("classify"));
    doc.insert("n".into(), json!(matrix.total()));
    doc.insert("settings".into(), json!({ "scope": req.scope }));
    doc.insert(
        "confusion".into(),
        json!({ "labels": matrix.labels(), "counts": matrix.counts() }),
    );
    doc.insert("metrics".into(), metrics_value(&dangerous));
    doc.insert("per_class".into(), Value::Object(per_class));
    doc.insert("roc".into(), roc_value(&roc));
    Ok(Report {
        mode: EvalMode::Classify,
        document: Value::Object(doc),
        roc,
    })
}

/// ROC CSV and SVG rebuilt from a serialized report's `roc` member. A
/// `null` threshold is the `+inf` sentinel at the first point and `-inf`
/// elsewhere.
pub fn roc_exports(document: &Value) -> Option<(String, String)> {
    let roc = document.get("roc")?;
    let auc = roc.get("auc")?.as_f64()?;
    let mut csv = String::from("threshold,fpr,tpr\n");
    let mut pts = Vec::new();
    for (i, p) in roc.get("points")?.as_array()?.iter().enumerate() {
        let p = p.as_array()?;
        let (fpr, tpr) = (p.first()?.as_f64()?, p.get(1)?.as_f64()?);
        let thr = match p.get(2)?.as_f64() {
            Some(t) => t,
            None if i == 0 => f64::INFINITY,
            None => f64::NEG_INFINITY,
        };
        let _ = writeln!(csv, "{thr},{fpr},{tpr}");
        pts.push((fpr, tpr));
    }
    Some((csv, roc_svg(&pts, auc)))
}

/// Self-contained SVG plot of a ROC curve on a 0..1 square.
pub fn roc_svg(points: &[(f64, f64)], auc: f64) -> String {
    const SIZE: f64 = 320.0;
    const PAD: f64 = 40.0;
    let sx = |v: f64| PAD + v * SIZE;
    let sy = |v: f64| PAD + (1.0 - v) * SIZE;
    let total = SIZE + 2.0 * PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(s, r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 4"/>"#,
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(1.0)
    );
    let path: Vec<String> = points.iter().map(|(x, y)| format!("{:.3},{:.3}", sx(*x), sy(*y))).collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="firebrick" stroke-width="2"/>"#,
        path.join(" ")
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14">AUC = {auc:.4}</text>"#,
        PAD + SIZE * 0.55,
        PAD + SIZE * 0.9
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">false positive rate</text>"#,
        PAD + SIZE / 2.0,
        total - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">true positive rate</text>"#,
        PAD + SIZE / 2.0,
        PAD + SIZE / 2.0
    );
    s.push_str("</svg>\n");
    s
}
