use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ctw_core::annotations::{
    dataset_stats, parse_annotation_line, parse_detection_text, AnnotationSet, Detection, DetectionSet, ShapeKind,
};
use ctw_core::evaluation::{evaluate, EvalError, EvalReport, Subset};
use ctw_core::geometry::is_simple;
use ctw_core::suppression::{nps, pnms, SuppressionConfig, SuppressionMode};
use serde::Serialize;
use serde_json::{json, Value};

use crate::check::{check_annotations, stem, txt_files, Violation, NON_SIMPLE};

/// What a command produced: machine output for stdout, an optional human line for
/// stderr, and whether the inputs were clean.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub json: Value,
    pub summary: Option<String>,
    pub clean: bool,
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn with_file(vs: Vec<Violation>, file: &Path) -> impl Iterator<Item = Violation> + '_ {
    vs.into_iter().map(move |v| v.in_file(file))
}

pub fn validate(dir: &Path) -> Result<Outcome> {
    let files = txt_files(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut regions = 0;
    let mut violations = Vec::new();
    for f in &files {
        let (ok, bad) = check_annotations(&read(f)?);
        regions += ok.len();
        violations.extend(with_file(bad, f));
    }
    let summary = format!("{} files, {regions} valid regions, {} violations", files.len(), violations.len());
    Ok(Outcome {
        clean: violations.is_empty(),
        json: json!({ "files": files.len(), "regions": regions, "violations": violations }),
        summary: Some(summary),
    })
}

/// Rewrites rect and quad lines as 32-value curve lines. Curve lines, blank lines and
/// line endings are copied as they are. Files with any bad line are not written.
pub fn interp(input: &Path, output: &Path) -> Result<Outcome> {
    let files = txt_files(input).with_context(|| format!("listing {}", input.display()))?;
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let mut converted = 0;
    let mut written = 0;
    let mut errors = Vec::new();
    for f in &files {
        let text = read(f)?;
        let mut out = String::with_capacity(text.len());
        let mut file_converted = 0;
        let before = errors.len();
        for (i, raw) in text.split_inclusive('\n').enumerate() {
            let body = raw.trim_end_matches(['\n', '\r']);
            let ending = &raw[body.len()..];
            if body.trim().is_empty() {
                out.push_str(raw);
                continue;
            }
            let bad = |message: String| Violation {
                file: Some(f.display().to_string()),
                line: i + 1,
                message,
            };
            match parse_annotation_line(body) {
                Ok(a) if a.shape_kind == ShapeKind::Curve => out.push_str(raw),
                Ok(a) => {
                    let line = a.to_curve_line();
                    // small regions collapse once the division points are rounded
                    if let Err(e) = parse_annotation_line(&line) {
                        errors.push(bad(format!("cannot be written as a curve line: {e}")));
                        continue;
                    }
                    out.push_str(&line);
                    out.push_str(ending);
                    file_converted += 1;
                }
                Err(e) => errors.push(bad(e.to_string())),
            }
        }
        if errors.len() == before {
            let dest = output.join(f.file_name().expect("listed files have names"));
            fs::write(&dest, out).with_context(|| format!("writing {}", dest.display()))?;
            converted += file_converted;
            written += 1;
        }
    }
    Ok(Outcome {
        clean: errors.is_empty(),
        summary: Some(format!("{converted} lines converted in {written} files, {} errors", errors.len())),
        json: json!({ "files": written, "converted": converted, "errors": errors }),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    /// `None` skips polygon suppression.
    pub pnms: Option<SuppressionConfig>,
    pub subset: Subset,
}

#[derive(Debug, Clone, Serialize)]
struct EvalOutput {
    iou_threshold: f64,
    pnms_threshold: Option<f64>,
    mode: Option<SuppressionMode>,
    subset: Subset,
    nps_removed: usize,
    pnms_removed: usize,
    report: EvalReport,
}

fn load_ground_truth(dir: &Path, violations: &mut Vec<Violation>) -> Result<AnnotationSet> {
    let mut gt = AnnotationSet::new();
    for f in txt_files(dir).with_context(|| format!("listing {}", dir.display()))? {
        let (ok, bad) = check_annotations(&read(&f)?);
        violations.extend(with_file(bad, &f));
        gt.insert(stem(&f), ok.into_iter().map(|(_, a)| a).collect());
    }
    Ok(gt)
}

fn load_detections(dir: &Path, violations: &mut Vec<Violation>) -> Result<DetectionSet> {
    let mut dets = DetectionSet::new();
    for f in txt_files(dir).with_context(|| format!("listing {}", dir.display()))? {
        let mut v = Vec::new();
        for l in parse_detection_text(&read(&f)?) {
            match l.result {
                Ok(d) => v.push(d),
                Err(e) => violations.push(Violation {
                    file: Some(f.display().to_string()),
                    line: l.line,
                    message: e.to_string(),
                }),
            }
        }
        dets.insert(stem(&f), v);
    }
    Ok(dets)
}

/// Non-polygon suppression, optional polygon suppression, then evaluation.
pub fn eval(gt_dir: &Path, det_dir: &Path, opts: EvalOptions) -> Result<Outcome> {
    let mut violations = Vec::new();
    let gt = load_ground_truth(gt_dir, &mut violations)?;
    let dets = load_detections(det_dir, &mut violations)?;
    if let Some(k) = dets.keys().find(|k| !gt.contains_key(*k)) {
        return Err(EvalError::KeyMismatch(k.clone()).into());
    }
    if !violations.is_empty() {
        return Ok(Outcome {
            summary: Some(format!("{} invalid input lines, nothing evaluated", violations.len())),
            json: json!({ "violations": violations }),
            clean: false,
        });
    }
    let (mut nps_removed, mut pnms_removed) = (0, 0);
    let mut filtered = DetectionSet::new();
    for (k, v) in dets {
        let valid = nps(&v);
        nps_removed += v.len() - valid.len();
        let kept = match &opts.pnms {
            Some(cfg) => pnms(&valid, cfg)?,
            None => valid.clone(),
        };
        pnms_removed += valid.len() - kept.len();
        filtered.insert(k, kept);
    }
    let report = evaluate(&gt, &filtered, opts.iou_threshold, opts.subset)?;
    let summary = report.summary();
    let out = EvalOutput {
        iou_threshold: opts.iou_threshold,
        pnms_threshold: opts.pnms.map(|c| c.threshold()),
        mode: opts.pnms.map(|c| c.mode),
        subset: opts.subset,
        nps_removed,
        pnms_removed,
        report,
    };
    Ok(Outcome {
        json: serde_json::to_value(out)?,
        summary: Some(summary),
        clean: true,
    })
}

/// Suppresses each detection file into `out_dir`. Unparseable and non-simple lines
/// are reported and dropped.
pub fn pnms_dir(det_dir: &Path, out_dir: &Path, cfg: &SuppressionConfig) -> Result<Outcome> {
    let files = txt_files(det_dir).with_context(|| format!("listing {}", det_dir.display()))?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let (mut total, mut kept_total) = (0, 0);
    let mut issues = Vec::new();
    for f in &files {
        let mut dets: Vec<Detection> = Vec::new();
        for l in parse_detection_text(&read(f)?) {
            total += 1;
            let message = match l.result {
                Ok(d) if is_simple(d.polygon.as_polygon()) => {
                    dets.push(d);
                    continue;
                }
                Ok(_) => NON_SIMPLE.to_string(),
                Err(e) => e.to_string(),
            };
            issues.push(Violation {
                file: Some(f.display().to_string()),
                line: l.line,
                message,
            });
        }
        let kept = pnms(&dets, cfg)?;
        kept_total += kept.len();
        let mut text = String::new();
        for d in &kept {
            text.push_str(&d.to_line());
            text.push('\n');
        }
        let dest = out_dir.join(f.file_name().expect("listed files have names"));
        fs::write(&dest, text).with_context(|| format!("writing {}", dest.display()))?;
    }
    Ok(Outcome {
        clean: issues.is_empty(),
        summary: Some(format!(
            "{} files, {total} detections, {kept_total} kept, {} dropped lines",
            files.len(),
            issues.len()
        )),
        json: json!({ "files": files.len(), "detections": total, "kept": kept_total, "issues": issues }),
    })
}

pub fn stats(dir: &Path) -> Result<Outcome> {
    let files = txt_files(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut images = Vec::new();
    let mut violations = Vec::new();
    for f in &files {
        let (ok, bad) = check_annotations(&read(f)?);
        violations.extend(with_file(bad, f));
        images.push(ok.into_iter().map(|(_, a)| a).collect::<Vec<_>>());
    }
    let s = dataset_stats(images.iter());
    let summary = violations
        .iter()
        .map(|v| format!("{}:{}: {}", v.file.as_deref().unwrap_or("?"), v.line, v.message))
        .collect::<Vec<_>>();
    Ok(Outcome {
        json: serde_json::to_value(s)?,
        summary: (!summary.is_empty()).then(|| summary.join("\n")),
        clean: violations.is_empty(),
    })
}

/// Image file names in `dir` with a known image extension, sorted.
pub fn image_names(dir: &Path) -> Result<Vec<String>> {
    const EXT: [&str; 7] = ["jpg", "jpeg", "png", "bmp", "gif", "webp", "tif"];
    let mut names = BTreeSet::new();
    for e in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let p = e?.path();
        let ok = p
            .extension()
            .map(|x| x.to_string_lossy().to_ascii_lowercase())
            .is_some_and(|x| EXT.contains(&x.as_str()));
        if p.is_file() && ok {
            match p.file_name().and_then(|n| n.to_str()) {
                Some(n) => names.insert(n.to_string()),
                None => bail!("non UTF-8 file name in {}", dir.display()),
            };
        }
    }
    Ok(names.into_iter().collect())
}
