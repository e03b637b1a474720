//! Detection post-processing: non-polygon suppression and polygonal NMS.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::Detection;
use crate::geometry::{self, circumscribed_rect, AARect, PreparedPolygon};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SuppressionError {
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("detection {index} is not a simple polygon")]
    NonSimpleInput { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionMode {
    /// Overlap is the IoU of the polygons.
    #[default]
    Pnms,
    /// Overlap is the IoU of the circumscribed rectangles.
    RectNms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuppressionConfig {
    pnms_threshold: f64,
    pub mode: SuppressionMode,
}

impl SuppressionConfig {
    pub fn new(pnms_threshold: f64, mode: SuppressionMode) -> Result<Self, SuppressionError> {
        if !(0.0..=1.0).contains(&pnms_threshold) {
            return Err(SuppressionError::InvalidThreshold(pnms_threshold));
        }
        Ok(Self {
            pnms_threshold,
            mode,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.pnms_threshold
    }
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        Self {
            pnms_threshold: 0.1,
            mode: SuppressionMode::Pnms,
        }
    }
}

/// Drops every detection whose polygon has intersecting sides. Order is kept.
pub fn nps(dets: &[Detection]) -> Vec<Detection> {
    dets.iter()
        .filter(|d| geometry::is_simple(d.polygon.as_polygon()))
        .cloned()
        .collect()
}

/// Indices sorted by descending score, ties in input order.
pub fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Greedy suppression with a caller-supplied overlap measure.
///
/// Returns the kept indices in score order. A candidate is removed when its overlap
/// with an already kept detection is strictly greater than `threshold`.
pub fn suppress_with<F>(dets: &[Detection], threshold: f64, mut overlap: F) -> Vec<usize>
where
    F: FnMut(usize, usize) -> f64,
{
    let order = score_order(dets);
    let mut removed = vec![false; dets.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if removed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !removed[j] && overlap(i, j) > threshold {
                removed[j] = true;
            }
        }
    }
    keep
}

/// Indices kept by [`pnms`], in score order.
pub fn pnms_indices(dets: &[Detection], cfg: &SuppressionConfig) -> Result<Vec<usize>, SuppressionError> {
    match cfg.mode {
        SuppressionMode::Pnms => {
            let prepared = dets
                .iter()
                .enumerate()
                .map(|(index, d)| {
                    PreparedPolygon::new(d.polygon.as_polygon())
                        .map_err(|_| SuppressionError::NonSimpleInput { index })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(suppress_with(dets, cfg.pnms_threshold, |i, j| {
                prepared[i].iou(&prepared[j]).unwrap_or(0.0)
            }))
        }
        SuppressionMode::RectNms => {
            if let Some(index) = dets
                .iter()
                .position(|d| !geometry::is_simple(d.polygon.as_polygon()))
            {
                return Err(SuppressionError::NonSimpleInput { index });
            }
            let rects: Vec<AARect> = dets
                .iter()
                .map(|d| circumscribed_rect(d.polygon.as_polygon()))
                .collect();
            Ok(suppress_with(dets, cfg.pnms_threshold, |i, j| rects[i].iou(&rects[j])))
        }
    }
}

/// Polygonal non-maximum suppression. Output is in descending score order.
pub fn pnms(dets: &[Detection], cfg: &SuppressionConfig) -> Result<Vec<Detection>, SuppressionError> {
    Ok(pnms_indices(dets, cfg)?
        .into_iter()
        .map(|i| dets[i].clone())
        .collect())
}
