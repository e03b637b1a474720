use serde::{Deserialize, Serialize};

use super::NetError;
use crate::annotations::POLYGON_POINTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocLossKind {
    #[default]
    SmoothL1,
    /// `(|d| + 1) ln(|d| + 1) - |d|`
    SmoothLn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Classification weight.
    pub lambda: f64,
    /// Point-offset weight.
    pub mu: f64,
    pub loc_loss_kind: LocLossKind,
    /// Number of sampled proposals (positive and negative).
    pub n: usize,
    /// Number of positive proposals.
    pub n_p: usize,
}

impl LossConfig {
    pub fn new(lambda: f64, mu: f64, loc_loss_kind: LocLossKind, n: usize, n_p: usize) -> Result<Self, NetError> {
        if !(lambda >= 0.0 && mu >= 0.0 && lambda.is_finite() && mu.is_finite()) {
            return Err(NetError::InvalidConfig(format!(
                "weights must be finite and non-negative (lambda {lambda}, mu {mu})"
            )));
        }
        if n == 0 || n_p > n {
            return Err(NetError::InvalidConfig(format!(
                "need 0 < N and N_p <= N (N {n}, N_p {n_p})"
            )));
        }
        Ok(Self {
            lambda,
            mu,
            loc_loss_kind,
            n,
            n_p,
        })
    }
}

pub fn loc_loss(kind: LocLossKind, d: f64) -> f64 {
    let a = d.abs();
    match kind {
        LocLossKind::SmoothL1 => {
            if a < 1.0 {
                0.5 * d * d
            } else {
                a - 0.5
            }
        }
        LocLossKind::SmoothLn => (a + 1.0) * a.ln_1p() - a,
    }
}

/// Derivative of [`loc_loss`] (subgradient 0 at `d = 0` for smooth-Ln).
pub fn loc_loss_grad(kind: LocLossKind, d: f64) -> f64 {
    match kind {
        LocLossKind::SmoothL1 => {
            if d.abs() < 1.0 {
                d
            } else {
                d.signum()
            }
        }
        LocLossKind::SmoothLn => d.signum() * d.abs().ln_1p(),
    }
}

/// One mini-batch. Class, box terms cover all `N` proposals; width and height
/// offsets cover only the `N_p` positives.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    /// Softmax class probabilities per proposal.
    pub class_scores: &'a [Vec<f64>],
    pub class_targets: &'a [usize],
    pub boxes: &'a [[f64; 4]],
    pub box_targets: &'a [[f64; 4]],
    pub widths: &'a [[f64; POLYGON_POINTS]],
    pub width_targets: &'a [[f64; POLYGON_POINTS]],
    pub heights: &'a [[f64; POLYGON_POINTS]],
    pub height_targets: &'a [[f64; POLYGON_POINTS]],
}

impl LossBatch<'_> {
    fn check(&self, cfg: &LossConfig) -> Result<(), NetError> {
        let n = [
            self.class_scores.len(),
            self.class_targets.len(),
            self.boxes.len(),
            self.box_targets.len(),
        ];
        if n.iter().any(|&v| v != cfg.n) {
            return Err(NetError::ShapeMismatch(format!(
                "class/box inputs have lengths {n:?}, expected N = {}",
                cfg.n
            )));
        }
        let np = [
            self.widths.len(),
            self.width_targets.len(),
            self.heights.len(),
            self.height_targets.len(),
        ];
        if np.iter().any(|&v| v != cfg.n_p) {
            return Err(NetError::ShapeMismatch(format!(
                "offset inputs have lengths {np:?}, expected N_p = {}",
                cfg.n_p
            )));
        }
        for (k, (s, &t)) in self.class_scores.iter().zip(self.class_targets).enumerate() {
            if t >= s.len() {
                return Err(NetError::ShapeMismatch(format!(
                    "proposal {k}: class target {t} outside {} scores",
                    s.len()
                )));
            }
        }
        Ok(())
    }
}

fn sum_loc<const K: usize>(kind: LocLossKind, pred: &[[f64; K]], target: &[[f64; K]]) -> f64 {
    pred.iter()
        .zip(target)
        .flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| loc_loss(kind, a - b)))
        .sum()
}

/// `(λ·ΣL_cls + ΣL_loc(b)) / N + μ/N_p · (ΣL_loc(h) + ΣL_loc(w))`, with cross-entropy
/// classification. The offset term is 0 when there are no positives.
pub fn multitask_loss(batch: &LossBatch<'_>, cfg: &LossConfig) -> Result<f64, NetError> {
    batch.check(cfg)?;
    let cls: f64 = batch
        .class_scores
        .iter()
        .zip(batch.class_targets)
        .map(|(s, &t)| -s[t].ln())
        .sum();
    let kind = cfg.loc_loss_kind;
    let bbox = sum_loc(kind, batch.boxes, batch.box_targets);
    let offsets = if cfg.n_p == 0 {
        0.0
    } else {
        cfg.mu / cfg.n_p as f64
            * (sum_loc(kind, batch.heights, batch.height_targets)
                + sum_loc(kind, batch.widths, batch.width_targets))
    };
    let loss = (cfg.lambda * cls + bbox) / cfg.n as f64 + offsets;
    if !loss.is_finite() {
        return Err(NetError::NonFinite("loss".into()));
    }
    Ok(loss)
}

/// Gradient of [`multitask_loss`] with respect to the box and offset predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub boxes: Vec<[f64; 4]>,
    pub widths: Vec<[f64; POLYGON_POINTS]>,
    pub heights: Vec<[f64; POLYGON_POINTS]>,
}

fn grad_rows<const K: usize>(kind: LocLossKind, scale: f64, pred: &[[f64; K]], target: &[[f64; K]]) -> Vec<[f64; K]> {
    pred.iter()
        .zip(target)
        .map(|(p, t)| std::array::from_fn(|k| scale * loc_loss_grad(kind, p[k] - t[k])))
        .collect()
}

pub fn multitask_loss_grad(batch: &LossBatch<'_>, cfg: &LossConfig) -> Result<LossGrad, NetError> {
    batch.check(cfg)?;
    let kind = cfg.loc_loss_kind;
    let off = if cfg.n_p == 0 { 0.0 } else { cfg.mu / cfg.n_p as f64 };
    Ok(LossGrad {
        boxes: grad_rows(kind, 1.0 / cfg.n as f64, batch.boxes, batch.box_targets),
        widths: grad_rows(kind, off, batch.widths, batch.width_targets),
        heights: grad_rows(kind, off, batch.heights, batch.height_targets),
    })
}
