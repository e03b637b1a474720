//! Point-offset regression targets.
//!
//! Every polygon point is measured from its datum, the top-left corner of the
//! polygon's circumscribed rectangle. A target is the difference between the
//! ground-truth and reference offsets, normalized by the proposal's width or height.
//! The rectangle itself is regressed with the usual center-offset / log-size deltas.
//!
//! A rectangle proposal's 14 reference points are its long-side interpolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotations::{interpolate_quad, AnnotationError, Polygon14, POLYGON_POINTS};
use crate::geometry::{circumscribed_rect, AARect, Point};

/// Proposals narrower or shorter than this (pixels) cannot normalize targets.
pub const MIN_PROPOSAL_SIDE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("degenerate proposal {width}x{height}, both sides must be at least {MIN_PROPOSAL_SIDE} px")]
    DegenerateProposal { width: f64, height: f64 },
    #[error("non-finite target or coordinate")]
    NonFinite,
    #[error(transparent)]
    Polygon(#[from] AnnotationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetTargets {
    pub d_w: [f64; POLYGON_POINTS],
    pub d_h: [f64; POLYGON_POINTS],
    /// `(dx, dy, dw, dh)`: center shift over proposal size, then log size ratios.
    pub rect_targets: [f64; 4],
}

impl OffsetTargets {
    pub fn zeros() -> Self {
        Self {
            d_w: [0.0; POLYGON_POINTS],
            d_h: [0.0; POLYGON_POINTS],
            rect_targets: [0.0; 4],
        }
    }

    /// The 32 regression values, rectangle terms first.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.rect_targets.to_vec();
        for i in 0..POLYGON_POINTS {
            v.push(self.d_w[i]);
            v.push(self.d_h[i]);
        }
        v
    }

    fn is_finite(&self) -> bool {
        self.d_w
            .iter()
            .chain(&self.d_h)
            .chain(&self.rect_targets)
            .all(|v| v.is_finite())
    }
}

/// Anything that can act as a proposal box.
#[derive(Debug, Clone, PartialEq)]
pub enum Proposal {
    Rect(AARect),
    /// Only the circumscribed rectangle of the polygon is used.
    Polygon(Polygon14),
}

impl Proposal {
    pub fn rect(&self) -> AARect {
        match self {
            Proposal::Rect(r) => *r,
            Proposal::Polygon(p) => circumscribed_rect(p.as_polygon()),
        }
    }
}

impl From<AARect> for Proposal {
    fn from(r: AARect) -> Self {
        Proposal::Rect(r)
    }
}

impl From<Polygon14> for Proposal {
    fn from(p: Polygon14) -> Self {
        Proposal::Polygon(p)
    }
}

fn checked(rect: &AARect) -> Result<(), CodecError> {
    let (width, height) = (rect.width(), rect.height());
    if !(width >= MIN_PROPOSAL_SIDE && height >= MIN_PROPOSAL_SIDE) {
        return Err(CodecError::DegenerateProposal { width, height });
    }
    Ok(())
}

/// Offsets of the proposal's reference points from its datum.
pub fn reference_offsets(rect: &AARect) -> Result<[(f64, f64); POLYGON_POINTS], CodecError> {
    checked(rect)?;
    let pts = interpolate_quad(&rect.corners())?;
    let mut out = [(0.0, 0.0); POLYGON_POINTS];
    for (o, p) in out.iter_mut().zip(pts.vertices()) {
        *o = (p.x - rect.x_min, p.y - rect.y_min);
    }
    Ok(out)
}

pub fn encode(gt: &Polygon14, proposal: impl Into<Proposal>) -> Result<OffsetTargets, CodecError> {
    let prop = proposal.into().rect();
    let reference = reference_offsets(&prop)?;
    let (w, h) = (prop.width(), prop.height());
    let g = circumscribed_rect(gt.as_polygon());

    let mut t = OffsetTargets::zeros();
    for (i, p) in gt.vertices().iter().enumerate() {
        let (ref_w, ref_h) = reference[i];
        t.d_w[i] = ((p.x - g.x_min) - ref_w) / w;
        t.d_h[i] = ((p.y - g.y_min) - ref_h) / h;
    }
    let (pcx, pcy) = (prop.x_min + 0.5 * w, prop.y_min + 0.5 * h);
    let (gw, gh) = (g.width(), g.height());
    let (gcx, gcy) = (g.x_min + 0.5 * gw, g.y_min + 0.5 * gh);
    t.rect_targets = [(gcx - pcx) / w, (gcy - pcy) / h, (gw / w).ln(), (gh / h).ln()];
    if !t.is_finite() {
        return Err(CodecError::NonFinite);
    }
    Ok(t)
}

/// Applies the rectangle deltas to `proposal`.
pub fn refine_rect(rect_targets: &[f64; 4], proposal: &AARect) -> AARect {
    let (w, h) = (proposal.width(), proposal.height());
    let cx = proposal.x_min + 0.5 * w + rect_targets[0] * w;
    let cy = proposal.y_min + 0.5 * h + rect_targets[1] * h;
    let nw = w * rect_targets[2].exp();
    let nh = h * rect_targets[3].exp();
    AARect {
        x_min: cx - 0.5 * nw,
        y_min: cy - 0.5 * nh,
        x_max: cx + 0.5 * nw,
        y_max: cy + 0.5 * nh,
    }
}

/// Reconstructs the polygon. Point offsets are denormalized with the proposal's own
/// size and placed at the refined rectangle's datum.
pub fn decode(t: &OffsetTargets, proposal: &AARect) -> Result<Polygon14, CodecError> {
    if !t.is_finite() {
        return Err(CodecError::NonFinite);
    }
    let reference = reference_offsets(proposal)?;
    let (w, h) = (proposal.width(), proposal.height());
    let refined = refine_rect(&t.rect_targets, proposal);
    let pts = (0..POLYGON_POINTS)
        .map(|i| {
            let (ref_w, ref_h) = reference[i];
            Point::new(
                refined.x_min + (ref_w + t.d_w[i] * w),
                refined.y_min + (ref_h + t.d_h[i] * h),
            )
        })
        .collect();
    Ok(Polygon14::new(pts)?)
}
