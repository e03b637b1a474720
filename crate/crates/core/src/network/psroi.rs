use std::ops::Range;

use ndarray::{Array3, ArrayView3};

use super::NetError;

/// Score maps of shape `[channels, height, width]`.
///
/// Channel `(c * p + i) * p + j` holds the map for target `c` and bin row `i`,
/// column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMapStack {
    data: Array3<f64>,
}

impl ScoreMapStack {
    pub fn new(data: Array3<f64>) -> Result<Self, NetError> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite("score map".into()));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }
}

/// Region of interest on the score-map grid, half-open: `[x_min, x_max) × [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl Roi {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self, NetError> {
        if x_max <= x_min || y_max <= y_min {
            return Err(NetError::InvalidRoi(format!(
                "empty region [{x_min},{x_max})x[{y_min},{y_max})"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min
    }
}

/// Splits `len` pixels starting at `start` into `p` bins.
///
/// With `len >= p` every bin gets `len / p` pixels and the last `len % p` bins get one
/// more. With `len < p` each bin samples the single pixel `start + k * len / p`, so
/// neighbouring bins share pixels.
pub fn bin_ranges(start: usize, len: usize, p: usize) -> Vec<Range<usize>> {
    if len >= p {
        let base = len / p;
        let first_long = p - len % p;
        let mut edge = start;
        (0..p)
            .map(|k| {
                let size = base + usize::from(k >= first_long);
                let r = edge..edge + size;
                edge += size;
                r
            })
            .collect()
    } else {
        (0..p)
            .map(|k| {
                let px = start + k * len / p;
                px..px + 1
            })
            .collect()
    }
}

/// Position-sensitive average pooling of `roi` into `[targets, p, p]`.
pub fn psroi_pool(maps: &ScoreMapStack, roi: &Roi, p: usize, targets: usize) -> Result<Array3<f64>, NetError> {
    if p == 0 || targets == 0 {
        return Err(NetError::ShapeMismatch("p and targets must be positive".into()));
    }
    if maps.channels() != targets * p * p {
        return Err(NetError::ShapeMismatch(format!(
            "{} channels, expected {targets}x{p}x{p} = {}",
            maps.channels(),
            targets * p * p
        )));
    }
    if roi.x_max > maps.width() || roi.y_max > maps.height() {
        return Err(NetError::InvalidRoi(format!(
            "region ends at ({}, {}) beyond the {}x{} map",
            roi.x_max,
            roi.y_max,
            maps.width(),
            maps.height()
        )));
    }
    let rows = bin_ranges(roi.y_min, roi.height(), p);
    let cols = bin_ranges(roi.x_min, roi.width(), p);
    let data = maps.data();
    let mut out = Array3::<f64>::zeros((targets, p, p));
    for c in 0..targets {
        for (i, ys) in rows.iter().enumerate() {
            for (j, xs) in cols.iter().enumerate() {
                let ch = (c * p + i) * p + j;
                let mut sum = 0.0;
                for y in ys.clone() {
                    for x in xs.clone() {
                        sum += data[[ch, y, x]];
                    }
                }
                out[[c, i, j]] = sum / (ys.len() * xs.len()) as f64;
            }
        }
    }
    Ok(out)
}

/// Per-class mean of the pooled bins and the softmax over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub means: Vec<f64>,
    pub scores: Vec<f64>,
}

pub fn vote(pooled: ArrayView3<'_, f64>) -> Vote {
    let (classes, ph, pw) = pooled.dim();
    let bins = (ph * pw) as f64;
    let means: Vec<f64> = (0..classes)
        .map(|c| pooled.index_axis(ndarray::Axis(0), c).sum() / bins)
        .collect();
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = means.iter().map(|m| (m - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Vote {
        scores: exps.iter().map(|e| e / z).collect(),
        means,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_partition_with_trailing_remainder() {
        assert_eq!(bin_ranges(0, 7, 3), vec![0..2, 2..4, 4..7]);
        assert_eq!(bin_ranges(10, 8, 3), vec![10..12, 12..15, 15..18]);
        assert_eq!(bin_ranges(0, 6, 3), vec![0..2, 2..4, 4..6]);
        assert_eq!(bin_ranges(5, 2, 4), vec![5..6, 5..6, 6..7, 6..7]);
    }

    #[test]
    fn constant_map_pools_to_constant() {
        let maps = ScoreMapStack::new(Array3::from_elem((2 * 9, 12, 12), 0.75)).unwrap();
        let roi = Roi::new(1, 2, 11, 9).unwrap();
        let out = psroi_pool(&maps, &roi, 3, 2).unwrap();
        assert!(out.iter().all(|&v| v == 0.75));
        // RoI narrower than p still yields values
        let small = Roi::new(4, 4, 6, 5).unwrap();
        assert!(psroi_pool(&maps, &small, 3, 2).unwrap().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn indicator_maps_select_their_bin() {
        let (p, targets) = (3, 2);
        let roi = Roi::new(0, 0, 9, 6).unwrap();
        let rows = bin_ranges(0, 6, p);
        let cols = bin_ranges(0, 9, p);
        let mut data = Array3::<f64>::zeros((targets * p * p, 6, 9));
        for c in 0..targets {
            for i in 0..p {
                for j in 0..p {
                    let ch = (c * p + i) * p + j;
                    for y in rows[i].clone() {
                        for x in cols[j].clone() {
                            data[[ch, y, x]] = 1.0;
                        }
                    }
                }
            }
        }
        let out = psroi_pool(&ScoreMapStack::new(data).unwrap(), &roi, p, targets).unwrap();
        assert!(out.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn shape_and_roi_errors() {
        let maps = ScoreMapStack::new(Array3::zeros((10, 4, 4))).unwrap();
        let roi = Roi::new(0, 0, 4, 4).unwrap();
        assert!(matches!(psroi_pool(&maps, &roi, 3, 1), Err(NetError::ShapeMismatch(_))));
        let maps = ScoreMapStack::new(Array3::zeros((9, 4, 4))).unwrap();
        let outside = Roi::new(0, 0, 5, 4).unwrap();
        assert!(matches!(psroi_pool(&maps, &outside, 3, 1), Err(NetError::InvalidRoi(_))));
        assert!(Roi::new(2, 0, 2, 4).is_err());
        assert!(ScoreMapStack::new(Array3::from_elem((1, 1, 1), f64::NAN)).is_err());
    }

    #[test]
    fn softmax_arithmetic() {
        let mut pooled = Array3::<f64>::zeros((2, 2, 2));
        let v = vote(pooled.view());
        assert_eq!(v.scores, vec![0.5, 0.5]);
        pooled.index_axis_mut(ndarray::Axis(0), 1).fill(3f64.ln());
        let v = vote(pooled.view());
        assert!((v.scores[0] - 0.25).abs() < 1e-15);
        assert!((v.scores[1] - 0.75).abs() < 1e-15);
        // huge logits do not overflow
        pooled.fill(1e4);
        let v = vote(pooled.view());
        assert_eq!(v.scores, vec![0.5, 0.5]);
    }
}
