//! Polygon-IoU detection evaluation.
//!
//! Per image, detections are visited in descending score order and each one is
//! matched to the unmatched care ground truth with the highest IoU. A match at or
//! above the threshold is a true positive. A detection that fails to match but
//! overlaps a don't-care region by more than the threshold is ignored; anything
//! else is a false positive. Don't-care regions never count towards recall.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{Annotation, AnnotationSet, Detection, DetectionSet, ShapeKind};
use crate::geometry::{GeometryError, PreparedPolygon};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("detections for image '{0}' have no ground-truth file")]
    KeyMismatch(String),
    #[error("IoU threshold {0} must lie in (0, 1)")]
    InvalidThreshold(f64),
    #[error("image '{image}': ground truth {index}: {source}")]
    GroundTruth {
        image: String,
        index: usize,
        source: GeometryError,
    },
    #[error("image '{image}': detection {index}: {source}")]
    Detection {
        image: String,
        index: usize,
        source: GeometryError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    #[default]
    Whole,
    CurveOnly,
    NoncurveOnly,
}

impl Subset {
    /// Care flag of `a` once the other kind of text is treated as difficult.
    fn care(self, a: &Annotation) -> bool {
        let curve = a.shape_kind == ShapeKind::Curve;
        a.care
            && match self {
                Subset::Whole => true,
                Subset::CurveOnly => curve,
                Subset::NoncurveOnly => !curve,
            }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    /// Index into the image's detection list as given.
    pub detection_index: usize,
    /// Set only for true positives.
    pub matched_gt_index: Option<usize>,
    /// Best IoU against an unmatched care region, or the absorbing IoU when ignored.
    pub iou: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMatches {
    pub image: String,
    pub matches: Vec<MatchRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall: f64,
    pub precision: f64,
    pub hmean: f64,
    pub tp: usize,
    pub fp: usize,
    pub ignored: usize,
    pub num_care_gt: usize,
    pub per_image: Vec<ImageMatches>,
}

impl EvalReport {
    /// One-line human summary in percent.
    pub fn summary(&self) -> String {
        format!(
            "R={:.1}% P={:.1}% H={:.1}%",
            100.0 * self.recall,
            100.0 * self.precision,
            100.0 * self.hmean
        )
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn hmean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Total order used to sort detections: score descending, then vertex coordinates,
/// so the result does not depend on the order detections were listed in.
fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| {
        a.polygon
            .vertices()
            .iter()
            .zip(b.polygon.vertices())
            .map(|(p, q)| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

struct ImageResult {
    matches: Vec<MatchRecord>,
    tp: usize,
    fp: usize,
    ignored: usize,
    care: usize,
}

fn evaluate_image(
    image: &str,
    gt: &[Annotation],
    dets: &[Detection],
    threshold: f64,
    subset: Subset,
) -> Result<ImageResult, EvalError> {
    let gt_prep = gt
        .iter()
        .enumerate()
        .map(|(index, a)| {
            PreparedPolygon::new(a.polygon.as_polygon()).map_err(|source| EvalError::GroundTruth {
                image: image.to_string(),
                index,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let det_prep = dets
        .iter()
        .enumerate()
        .map(|(index, d)| {
            PreparedPolygon::new(d.polygon.as_polygon()).map_err(|source| EvalError::Detection {
                image: image.to_string(),
                index,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let care: Vec<bool> = gt.iter().map(|a| subset.care(a)).collect();

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| detection_order(&dets[a], &dets[b]).then(a.cmp(&b)));

    let iou = |d: usize, g: usize| det_prep[d].iou(&gt_prep[g]).unwrap_or(0.0);
    let mut taken = vec![false; gt.len()];
    let mut res = ImageResult {
        matches: Vec::with_capacity(dets.len()),
        tp: 0,
        fp: 0,
        ignored: 0,
        care: care.iter().filter(|&&c| c).count(),
    };
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for g in (0..gt.len()).filter(|&g| care[g] && !taken[g]) {
            let v = iou(d, g);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        let best_iou = best.map_or(0.0, |(_, v)| v);
        let record = match best {
            Some((g, v)) if v >= threshold => {
                taken[g] = true;
                res.tp += 1;
                MatchRecord {
                    detection_index: d,
                    matched_gt_index: Some(g),
                    iou: v,
                    outcome: Outcome::TruePositive,
                }
            }
            _ => {
                let absorbing = (0..gt.len())
                    .filter(|&g| !care[g])
                    .map(|g| iou(d, g))
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
                match absorbing {
                    Some(v) if v > threshold => {
                        res.ignored += 1;
                        MatchRecord {
                            detection_index: d,
                            matched_gt_index: None,
                            iou: v,
                            outcome: Outcome::Ignored,
                        }
                    }
                    _ => {
                        res.fp += 1;
                        MatchRecord {
                            detection_index: d,
                            matched_gt_index: None,
                            iou: best_iou,
                            outcome: Outcome::FalsePositive,
                        }
                    }
                }
            }
        };
        res.matches.push(record);
    }
    Ok(res)
}

/// Evaluates `dets` against `gt` at `iou_threshold` over the chosen subset.
///
/// Images present only in `gt` contribute their care regions as misses. Images present
/// only in `dets` are an error.
pub fn evaluate(
    gt: &AnnotationSet,
    dets: &DetectionSet,
    iou_threshold: f64,
    subset: Subset,
) -> Result<EvalReport, EvalError> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(EvalError::InvalidThreshold(iou_threshold));
    }
    if let Some(k) = dets.keys().find(|k| !gt.contains_key(*k)) {
        return Err(EvalError::KeyMismatch(k.clone()));
    }
    let empty = Vec::new();
    let images: Vec<(&String, &Vec<Annotation>)> = gt.iter().collect();
    let results = images
        .par_iter()
        .map(|(image, g)| {
            let d = dets.get(*image).unwrap_or(&empty);
            evaluate_image(image, g, d, iou_threshold, subset)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let (mut tp, mut fp, mut ignored, mut care) = (0, 0, 0, 0);
    let mut per_image = Vec::with_capacity(results.len());
    for ((image, _), r) in images.iter().zip(results) {
        tp += r.tp;
        fp += r.fp;
        ignored += r.ignored;
        care += r.care;
        per_image.push(ImageMatches {
            image: (*image).clone(),
            matches: r.matches,
        });
    }
    let recall = ratio(tp, care);
    let precision = ratio(tp, tp + fp);
    Ok(EvalReport {
        recall,
        precision,
        hmean: hmean(precision, recall),
        tp,
        fp,
        ignored,
        num_care_gt: care,
        per_image,
    })
}
