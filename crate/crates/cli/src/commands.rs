use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::Duration;

use num_rational::Ratio;
use serde_json::Value;

use scorpid_core::augment::{augment_corpus_with, AugmentError, AugmentSpec, FsImageSource};
use scorpid_core::corpus::{
    corpus_stats, load_manifest, save_manifest, split_corpus, Corpus, CorpusError, SplitOptions, SplitRatios,
};
use scorpid_core::eval::{EvalScope, MatchMode};
use scorpid_core::infer::BackendDescriptor;
use scorpid_core::metrics::{
    reconstruct_confusion, reconstruct_multiclass, ClassTargets, MetricTargets, SearchBudget, SearchStatus, Target,
};
use scorpid_core::report::{roc_exports, run_evaluation, EvalMode, EvalRequest, RunError};
use scorpid_service::client::ClientError;
use scorpid_service::{build_backend, ServiceConfig};

use crate::args::*;
use crate::Failure;

type Result<T> = std::result::Result<T, Failure>;

fn op(e: impl std::fmt::Display) -> Failure {
    Failure::Operational(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split(a) => split(a),
        Command::Augment(a) => augment(a),
        Command::Eval(a) => eval(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Serve(a) => serve(a),
        Command::Report(a) => report(a),
    }
}

fn load(path: &Path) -> Result<Corpus> {
    load_manifest(path).map_err(|e| match e {
        CorpusError::Io { .. } => op(e),
        other => usage(other),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| op(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| op(format!("{}: {e}", path.display())))
}

fn split(a: SplitArgs) -> Result<()> {
    let ratios = SplitRatios::parse(&a.ratios).map_err(usage)?;
    let corpus = load(&a.manifest)?;
    let opts = SplitOptions {
        seed: a.seed,
        stratify: a.stratify,
        allow_reassign: a.reassign,
    };
    let out = split_corpus(&corpus, &ratios, &opts).map_err(usage)?;
    save_manifest(&out, &a.out).map_err(op)?;
    println!("{}", corpus_stats(&out));
    Ok(())
}

fn dir_of(path: &Path) -> PathBuf {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf()
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> AugmentError {
    AugmentError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn augment(a: AugmentArgs) -> Result<()> {
    let spec = AugmentSpec {
        rotate_max_deg: a.rotate_max_deg,
        shear_max_deg: a.shear_max_deg,
        saturation_pct: a.saturation_pct,
        exposure_pct: a.exposure_pct,
        blur_px: a.blur_px,
        noise_frac: a.noise_frac,
        per_image_variants: a.k,
        seed: a.seed,
        max_retries: a.max_retries,
        ..AugmentSpec::default()
    };
    spec.validate().map_err(usage)?;
    let corpus = load(&a.manifest)?;
    let src_dir = dir_of(&a.manifest);
    fs::create_dir_all(&a.out_dir).map_err(|e| op(format!("{}: {e}", a.out_dir.display())))?;

    // Original paths are relative to the input manifest; re-anchor them when
    // the output manifest lives elsewhere.
    let same_dir = fs::canonicalize(&src_dir).ok() == fs::canonicalize(&a.out_dir).ok();
    let source = FsImageSource::new(&src_dir);
    let ledger_path = a.out_dir.join("transforms.jsonl");
    let mut ledger = BufWriter::new(File::create(&ledger_path).map_err(|e| op(format!("{}: {e}", ledger_path.display())))?);
    let out_dir = a.out_dir.clone();
    let (augmented, dropped) = augment_corpus_with(&corpus, &spec, &source, "augmented", |v| {
        let path = out_dir.join(&v.record.path);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| write_error(parent, e))?;
        }
        v.image.save(&path).map_err(|e| write_error(&path, e))?;
        serde_json::to_writer(&mut ledger, &v.ledger)
            .map_err(|e| write_error(&ledger_path, e))
            .and_then(|_| ledger.write_all(b"\n").map_err(|e| write_error(&ledger_path, e)))
    })
    .map_err(|e| match e {
        AugmentError::InvalidSpec(_) | AugmentError::Unsplit(_) => usage(e),
        other => op(other),
    })?;
    ledger.flush().map_err(op)?;

    let mut records = augmented.into_records();
    if !same_dir {
        let base = std::path::absolute(&src_dir).map_err(op)?;
        for r in records.iter_mut().filter(|r| r.parent_id.is_none()) {
            if Path::new(&r.path).is_relative() {
                r.path = base.join(&r.path).to_string_lossy().into_owned();
            }
        }
    }
    let out = Corpus::new(corpus.kind(), records).map_err(op)?;
    save_manifest(&out, &a.out_dir.join("manifest.jsonl")).map_err(op)?;
    for id in &dropped {
        eprintln!("warning: dropped {id}: every box degenerated");
    }
    println!("{}", corpus_stats(&out));
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let scope: EvalScope = a.scope.parse().map_err(usage)?;
    let mut req = EvalRequest::new(
        match a.mode {
            Mode::Detect => EvalMode::Detect,
            Mode::Classify => EvalMode::Classify,
        },
        a.manifest.to_string_lossy(),
    );
    req.predictions = a.predictions.as_ref().map(|p| p.to_string_lossy().into_owned());
    req.iou_threshold = a.iou;
    req.score_threshold = a.threshold;
    req.match_mode = match a.match_mode {
        MatchModeArg::Presence => MatchMode::Presence,
        MatchModeArg::PerBox => MatchMode::PerBox,
    };
    req.scope = scope;
    req.match_config().validate().map_err(usage)?;
    let timeout = Duration::from_millis(a.timeout_ms);

    let bytes = if let Some(server) = &a.server {
        let (_, bytes) = scorpid_service::client::evaluate(server, &req, timeout).map_err(|e| match e {
            ClientError::Status { status: 400 | 422, .. } => usage(e),
            other => op(other),
        })?;
        bytes
    } else {
        let backend = match (&a.predictions, &a.backend) {
            (Some(_), _) => None,
            (None, Some(desc)) => {
                let desc: BackendDescriptor = desc.parse().map_err(usage)?;
                Some(build_backend(&desc, timeout).map_err(op)?)
            }
            (None, None) => return Err(usage("one of --predictions, --backend or --server is required")),
        };
        run_evaluation(&req, backend.as_deref())
            .map_err(|e| match e {
                RunError::Inconsistent(_) => usage(e),
                other => op(other),
            })?
            .to_json()
    };

    match &a.report {
        Some(path) => write_file(path, &bytes)?,
        None => std::io::stdout().write_all(&bytes).map_err(op)?,
    }
    if a.roc_csv.is_some() || a.svg.is_some() {
        let doc: Value = serde_json::from_slice(&bytes).map_err(op)?;
        export_roc(&doc, a.roc_csv.as_deref(), a.svg.as_deref())?;
    }
    Ok(())
}

fn export_roc(doc: &Value, csv: Option<&Path>, svg: Option<&Path>) -> Result<()> {
    let Some((csv_text, svg_text)) = roc_exports(doc) else {
        return Err(op("report has no ROC curve (the evaluated set has a single class)"));
    };
    if let Some(p) = csv {
        write_file(p, csv_text.as_bytes())?;
    }
    if let Some(p) = svg {
        write_file(p, svg_text.as_bytes())?;
    }
    Ok(())
}

fn parse_target(s: &str) -> Result<Target> {
    match s.trim() {
        "*" => Ok(Target::Any),
        "undef" | "undefined" => Ok(Target::Undefined),
        v => match v.parse::<f64>() {
            Ok(x) if (0.0..=1.0).contains(&x) => Ok(Target::decimal(x)),
            _ => Err(usage(format!("`{v}` is not a metric value in [0, 1], `*` or `undef`"))),
        },
    }
}

fn parse_targets(s: &str) -> Result<MetricTargets> {
    let parts: Vec<&str> = s.split(',').collect();
    let [a, p, r, f] = parts.as_slice() else {
        return Err(usage(format!("expected accuracy,precision,recall,f_measure, got `{s}`")));
    };
    Ok(MetricTargets {
        accuracy: parse_target(a)?,
        precision: parse_target(p)?,
        recall: parse_target(r)?,
        f_measure: parse_target(f)?,
    })
}

fn parse_tol(s: &str) -> Result<Ratio<i64>> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => match Target::decimal(v) {
            Target::Value(q) => Ok(q),
            _ => unreachable!(),
        },
        _ => Err(usage(format!("tolerance `{s}` must be a number in [0, 1]"))),
    }
}

fn parse_range(s: &str) -> Option<RangeInclusive<u64>> {
    let (lo, hi) = s.split_once("..")?;
    Some(lo.trim().parse().ok()?..=hi.trim().parse().ok()?)
}

fn reconstruct(a: ReconstructArgs) -> Result<()> {
    let tol = parse_tol(&a.tol)?;
    match a.kind {
        Kind::Binary => {
            let metrics = a.metrics.as_deref().ok_or_else(|| usage("--metrics is required for --kind binary"))?;
            let targets = parse_targets(metrics)?;
            let found = reconstruct_confusion(&targets, a.n, tol);
            if found.is_empty() {
                println!("infeasible");
            }
            for m in &found {
                println!("(tp={},tn={},fp={},fn={})", m.tp, m.tn, m.fp, m.fn_);
            }
            println!("{} solution(s)", found.len());
        }
        Kind::Multi => {
            if a.classes.len() < 2 {
                return Err(usage("--kind multi needs at least two --class LABEL=a,p,r,f"));
            }
            let mut classes = Vec::new();
            for c in &a.classes {
                let (label, values) = c
                    .split_once('=')
                    .ok_or_else(|| usage(format!("`{c}` must look like LABEL=a,p,r,f")))?;
                classes.push(ClassTargets {
                    label: label.trim().to_string(),
                    targets: parse_targets(values)?,
                    row_hint: None,
                });
            }
            for r in &a.rows {
                let (label, range) = r.split_once('=').ok_or_else(|| usage(format!("`{r}` must look like LABEL=lo..hi")))?;
                let range = parse_range(range).ok_or_else(|| usage(format!("`{range}` must look like lo..hi")))?;
                let class = classes
                    .iter_mut()
                    .find(|c| c.label == label.trim())
                    .ok_or_else(|| usage(format!("--rows names unknown class `{label}`")))?;
                class.row_hint = Some(range);
            }
            let budget = SearchBudget {
                max_nodes: a.max_nodes,
                max_solutions: a.max_solutions,
            };
            let search = reconstruct_multiclass(&classes, a.n, tol, budget).map_err(usage)?;
            let status = match search.status {
                SearchStatus::Feasible => "feasible",
                SearchStatus::Infeasible => "infeasible",
                SearchStatus::BudgetExceeded => "budget exceeded",
            };
            println!("status: {status}");
            for (c, count) in classes.iter().zip(&search.class_candidates) {
                println!("candidates {}: {count}", c.label);
            }
            for m in &search.solutions {
                println!("{}", serde_json::to_string(m.counts()).map_err(op)?);
            }
            println!("{} solution(s), {} search node(s)", search.solutions.len(), search.nodes);
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let desc: BackendDescriptor = a.backend.parse().map_err(usage)?;
    let config = ServiceConfig {
        host: a.host,
        port: a.port,
        backend: desc,
        log_path: a.log_path,
        max_body_bytes: a.max_body_bytes,
        backend_timeout: Duration::from_millis(a.backend_timeout_ms),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(op)?;
    rt.block_on(scorpid_service::serve(config)).map_err(op)
}

fn fmt_metric(v: &Value) -> String {
    v.as_f64().map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

fn report(a: ReportArgs) -> Result<()> {
    let text = fs::read(&a.input).map_err(|e| op(format!("{}: {e}", a.input.display())))?;
    let doc: Value = serde_json::from_slice(&text).map_err(|e| usage(format!("{}: {e}", a.input.display())))?;
    let mode = doc["mode"].as_str().ok_or_else(|| usage("not a scorpid report: missing `mode`"))?;
    println!("mode: {mode}");
    println!("images: {}", doc["n"]);
    println!("confusion: {}", doc["confusion"]);
    for key in ["accuracy", "precision", "recall", "f_measure"] {
        println!("{key}: {}", fmt_metric(&doc["metrics"][key]));
    }
    match doc["roc"]["auc"].as_f64() {
        Some(auc) => println!("auc: {auc:.4}"),
        None => println!("auc: undefined"),
    }
    if let Some(le) = doc.get("localization_errors") {
        println!("localization_errors: {le}");
    }
    if a.roc_csv.is_some() || a.svg.is_some() {
        export_roc(&doc, a.roc_csv.as_deref(), a.svg.as_deref())?;
    }
    Ok(())
}
