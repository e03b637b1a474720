use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::NetError;
use crate::annotations::POLYGON_POINTS;

pub const DEFAULT_HIDDEN: usize = 256;

/// One LSTM direction. Gate rows are stacked input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[4H, D]`
    pub w_ih: Array2<f64>,
    /// `[4H, H]`
    pub w_hh: Array2<f64>,
    /// `[4H]`
    pub bias: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_ih.ncols()
    }

    fn check(&self, name: &str, hidden: usize, input: usize) -> Result<(), NetError> {
        let ok = self.w_ih.dim() == (4 * hidden, input)
            && self.w_hh.dim() == (4 * hidden, hidden)
            && self.bias.len() == 4 * hidden;
        if !ok {
            return Err(NetError::ShapeMismatch(format!(
                "{name}: w_ih {:?}, w_hh {:?}, bias {} for hidden {hidden}, input {input}",
                self.w_ih.dim(),
                self.w_hh.dim(),
                self.bias.len()
            )));
        }
        let finite = self
            .w_ih
            .iter()
            .chain(self.w_hh.iter())
            .chain(self.bias.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(NetError::NonFinite(format!("{name} weights")));
        }
        Ok(())
    }

    /// Hidden states for every step of `seq` (`[T, D]`), in visiting order.
    fn run<'a>(&self, steps: impl Iterator<Item = ArrayView1<'a, f64>>) -> Vec<Array1<f64>> {
        let hdim = self.hidden();
        let mut h = Array1::<f64>::zeros(hdim);
        let mut c = Array1::<f64>::zeros(hdim);
        let mut out = Vec::new();
        for x in steps {
            let z = self.w_ih.dot(&x) + self.w_hh.dot(&h) + &self.bias;
            for k in 0..hdim {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[hdim + k]);
                let g = z[2 * hdim + k].tanh();
                let o = sigmoid(z[3 * hdim + k]);
                c[k] = f * c[k] + i * g;
                h[k] = o * c[k].tanh();
            }
            out.push(h.clone());
        }
        out
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Bidirectional LSTM followed by a `1×H` pooling kernel applied per step.
#[derive(Debug, Clone, PartialEq)]
pub struct BlstmWeights {
    pub forward: LstmParams,
    pub backward: LstmParams,
    /// `[H]`
    pub pool_kernel: Array1<f64>,
    pub pool_bias: f64,
}

impl BlstmWeights {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            forward: LstmParams::zeros(hidden, input),
            backward: LstmParams::zeros(hidden, input),
            pool_kernel: Array1::zeros(hidden),
            pool_bias: 0.0,
        }
    }

    pub fn hidden(&self) -> usize {
        self.pool_kernel.len()
    }

    pub fn input(&self) -> usize {
        self.forward.input()
    }

    /// The same network with the two directions exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            forward: self.backward.clone(),
            backward: self.forward.clone(),
            pool_kernel: self.pool_kernel.clone(),
            pool_bias: self.pool_bias,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let (h, d) = (self.hidden(), self.input());
        self.forward.check("forward", h, d)?;
        self.backward.check("backward", h, d)?;
        if !(self.pool_bias.is_finite() && self.pool_kernel.iter().all(|v| v.is_finite())) {
            return Err(NetError::NonFinite("pool kernel".into()));
        }
        Ok(())
    }
}

/// Merges the two directions' hidden states at one step: their element-wise mean.
pub fn merge_directions(fwd: &Array1<f64>, bwd: &Array1<f64>) -> Array1<f64> {
    (fwd + bwd) * 0.5
}

/// Runs the offset recurrence over 14 steps of `[14, p²]` features, one offset per step.
pub fn tloc_forward(features: ArrayView2<'_, f64>, weights: &BlstmWeights) -> Result<[f64; POLYGON_POINTS], NetError> {
    weights.validate()?;
    let (steps, width) = features.dim();
    if steps != POLYGON_POINTS || width != weights.input() {
        return Err(NetError::ShapeMismatch(format!(
            "features {steps}x{width}, expected {POLYGON_POINTS}x{}",
            weights.input()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(NetError::NonFinite("features".into()));
    }
    let fwd = weights.forward.run(features.outer_iter());
    let mut bwd = weights.backward.run(features.outer_iter().rev());
    bwd.reverse();
    let mut out = [0.0; POLYGON_POINTS];
    for (t, o) in out.iter_mut().enumerate() {
        let merged = merge_directions(&fwd[t], &bwd[t]);
        *o = weights.pool_kernel.dot(&merged) + weights.pool_bias;
        if !o.is_finite() {
            return Err(NetError::NonFinite(format!("output at step {t}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_zero_offsets() {
        let w = BlstmWeights::zeros(DEFAULT_HIDDEN, 49);
        let x = Array2::from_shape_fn((14, 49), |(t, k)| (t * 49 + k) as f64 * 0.01);
        assert_eq!(tloc_forward(x.view(), &w).unwrap(), [0.0; 14]);
    }

    #[test]
    fn bias_passes_through_pooling() {
        let mut w = BlstmWeights::zeros(4, 3);
        w.pool_bias = 0.25;
        let x = Array2::zeros((14, 3));
        assert_eq!(tloc_forward(x.view(), &w).unwrap(), [0.25; 14]);
    }

    #[test]
    fn shape_checks() {
        let w = BlstmWeights::zeros(4, 3);
        assert!(matches!(
            tloc_forward(Array2::zeros((13, 3)).view(), &w),
            Err(NetError::ShapeMismatch(_))
        ));
        assert!(matches!(
            tloc_forward(Array2::zeros((14, 4)).view(), &w),
            Err(NetError::ShapeMismatch(_))
        ));
        let mut bad = w.clone();
        bad.backward.bias = Array1::zeros(3);
        assert!(matches!(
            tloc_forward(Array2::zeros((14, 3)).view(), &bad),
            Err(NetError::ShapeMismatch(_))
        ));
        let mut nan = w;
        nan.forward.w_hh[[0, 0]] = f64::NAN;
        assert!(matches!(
            tloc_forward(Array2::zeros((14, 3)).view(), &nan),
            Err(NetError::NonFinite(_))
        ));
    }
}
