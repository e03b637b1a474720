//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use ctw_core::annotations::{Detection, Polygon14};
use ctw_core::geometry::{Point, Polygon};
use ndarray::{Array1, Array2, Array3, ArrayView2};
use num::{BigRational, Signed, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// polygon generators

/// Star-shaped polygon around `c`: sorted angles, radii in `[r_min, r_max]`. Simple
/// by construction, concave in general.
pub fn star(rng: &mut impl Rng, n: usize, c: Point, r_min: f64, r_max: f64) -> Polygon {
    loop {
        let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        angles.sort_by(f64::total_cmp);
        let gaps: Vec<f64> = angles
            .windows(2)
            .map(|w| w[1] - w[0])
            .chain(std::iter::once(angles[0] + 2.0 * PI - angles[n - 1]))
            .collect();
        // every wedge narrower than a half-turn keeps the centre in the kernel
        if gaps.iter().any(|&g| !(0.05..=0.8 * PI).contains(&g)) {
            continue;
        }
        let pts = angles
            .iter()
            .map(|a| {
                let r = rng.random_range(r_min..=r_max);
                Point::new(c.x + r * a.cos(), c.y + r * a.sin())
            })
            .collect();
        if let Ok(p) = Polygon::new(pts) {
            return p;
        }
    }
}

/// Convex polygon: points on a circle.
pub fn convex(rng: &mut impl Rng, n: usize, c: Point, r: f64) -> Polygon {
    star(rng, n, c, r, r)
}

/// A 14-point band along a circular arc, the shape of a curved text line.
pub fn arc_band(rng: &mut impl Rng, c: Point, radius: f64, thickness: f64, sweep: f64) -> Polygon14 {
    let start = rng.random_range(0.0..2.0 * PI);
    let jitter = thickness * 0.1;
    let mut pts = Vec::with_capacity(14);
    for k in 0..7 {
        let a = start + sweep * k as f64 / 6.0;
        let r = radius + thickness + rng.random_range(-jitter..=jitter);
        pts.push(Point::new(c.x + r * a.cos(), c.y + r * a.sin()));
    }
    for k in (0..7).rev() {
        let a = start + sweep * k as f64 / 6.0;
        let r = radius + rng.random_range(-jitter..=jitter);
        pts.push(Point::new(c.x + r * a.cos(), c.y + r * a.sin()));
    }
    Polygon14::new(pts).expect("arc band")
}

/// Random simple polygon with 4 to 14 vertices: convex, star-shaped or an arc band.
pub fn random_simple(rng: &mut impl Rng, c: Point, scale: f64) -> Polygon {
    match rng.random_range(0..3) {
        0 => {
            let n = rng.random_range(4..=14);
            convex(rng, n, c, scale)
        }
        1 => {
            let n = rng.random_range(4..=14);
            star(rng, n, c, 0.3 * scale, scale)
        }
        _ => {
            let sweep = rng.random_range(0.5..2.5);
            arc_band(rng, c, scale * 0.7, scale * 0.3, sweep).as_polygon().clone()
        }
    }
}

/// Two random simple polygons whose centres are close enough to overlap.
pub fn overlapping_pair(rng: &mut impl Rng) -> (Polygon, Polygon) {
    let scale = rng.random_range(20.0..200.0);
    let c = Point::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0));
    let d = Point::new(
        c.x + rng.random_range(-0.6..0.6) * scale,
        c.y + rng.random_range(-0.6..0.6) * scale,
    );
    let s2 = scale * rng.random_range(0.6..1.4);
    (random_simple(rng, c, scale), random_simple(rng, d, s2))
}

pub fn detection(polygon: Polygon14, score: f64) -> Detection {
    Detection { polygon, score }
}

// ---------------------------------------------------------------------------
// Monte-Carlo overlap oracle

/// Crossing abscissae of the horizontal line `y` with the polygon's edges, sorted.
fn crossings(p: &Polygon, y: f64, out: &mut Vec<f64>) {
    out.clear();
    let v = p.vertices();
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if (a.y > y) != (b.y > y) {
            out.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
        }
    }
    out.sort_by(f64::total_cmp);
}

#[derive(Debug, Clone, Copy)]
pub struct McOverlap {
    pub area_a: f64,
    pub area_b: f64,
    pub intersection: f64,
    pub iou: f64,
}

/// Stratified Monte-Carlo estimate over the union bounding box: a `k×k` grid of cells
/// (`k² ≈ samples`), one jittered sample per cell, membership by the even-odd rule.
pub fn mc_overlap(a: &Polygon, b: &Polygon, samples: usize, rng: &mut impl Rng) -> McOverlap {
    let k = (samples as f64).sqrt().round() as usize;
    let all: Vec<Point> = a.vertices().iter().chain(b.vertices()).copied().collect();
    let x0 = all.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x1 = all.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let y0 = all.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y1 = all.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let (dx, dy) = ((x1 - x0) / k as f64, (y1 - y0) / k as f64);
    let (mut ca, mut cb, mut cab) = (0u64, 0u64, 0u64);
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for r in 0..k {
        let y = y0 + (r as f64 + rng.random::<f64>()) * dy;
        crossings(a, y, &mut xa);
        crossings(b, y, &mut xb);
        let (mut ia, mut ib) = (0, 0);
        for c in 0..k {
            let x = x0 + (c as f64 + rng.random::<f64>()) * dx;
            while ia < xa.len() && xa[ia] < x {
                ia += 1;
            }
            while ib < xb.len() && xb[ib] < x {
                ib += 1;
            }
            let (in_a, in_b) = (ia % 2 == 1, ib % 2 == 1);
            ca += in_a as u64;
            cb += in_b as u64;
            cab += (in_a && in_b) as u64;
        }
    }
    let cell = dx * dy;
    let union = ca + cb - cab;
    McOverlap {
        area_a: ca as f64 * cell,
        area_b: cb as f64 * cell,
        intersection: cab as f64 * cell,
        iou: if union == 0 { 0.0 } else { cab as f64 / union as f64 },
    }
}

// ---------------------------------------------------------------------------
// exact simplicity oracle

type Q = BigRational;

fn q(v: f64) -> Q {
    BigRational::from_float(v).expect("finite")
}

fn qcross(o: &(Q, Q), a: &(Q, Q), b: &(Q, Q)) -> Q {
    (&a.0 - &o.0) * (&b.1 - &o.1) - (&a.1 - &o.1) * (&b.0 - &o.0)
}

/// Closed segments `p1-p2`, `q1-q2` share a point, by parametric solve in exact arithmetic.
fn exact_segments_meet(p1: &(Q, Q), p2: &(Q, Q), q1: &(Q, Q), q2: &(Q, Q)) -> bool {
    let d1 = (&p2.0 - &p1.0, &p2.1 - &p1.1);
    let d2 = (&q2.0 - &q1.0, &q2.1 - &q1.1);
    let denom = &d1.0 * &d2.1 - &d1.1 * &d2.0;
    let w = (&q1.0 - &p1.0, &q1.1 - &p1.1);
    let zero = Q::zero();
    let one = Q::from_integer(1.into());
    if denom.is_zero() {
        // parallel: must be collinear, then compare projections on d1
        if !(&w.0 * &d1.1 - &w.1 * &d1.0).is_zero() {
            return false;
        }
        let len2 = &d1.0 * &d1.0 + &d1.1 * &d1.1;
        let proj = |p: &(Q, Q)| ((&p.0 - &p1.0) * &d1.0 + (&p.1 - &p1.1) * &d1.1) / &len2;
        let (s0, s1) = (proj(q1), proj(q2));
        let (lo, hi) = if s0 <= s1 { (s0, s1) } else { (s1, s0) };
        return lo <= one && hi >= zero;
    }
    let t = (&w.0 * &d2.1 - &w.1 * &d2.0) / &denom;
    let u = (&w.0 * &d1.1 - &w.1 * &d1.0) / &denom;
    t >= zero && t <= one && u >= zero && u <= one
}

/// Closed bounding boxes of edges `i` and `j` intersect. Comparisons of input floats
/// are exact, so this only prunes pairs that cannot meet.
fn boxes_touch(v: &[Point], i: usize, j: usize) -> bool {
    let n = v.len();
    let (a, b) = (v[i], v[(i + 1) % n]);
    let (c, d) = (v[j], v[(j + 1) % n]);
    a.x.min(b.x) <= c.x.max(d.x)
        && c.x.min(d.x) <= a.x.max(b.x)
        && a.y.min(b.y) <= c.y.max(d.y)
        && c.y.min(d.y) <= a.y.max(b.y)
}

/// Exhaustive pairwise test in exact rational arithmetic.
pub fn simple_oracle(p: &Polygon) -> bool {
    let raw = p.vertices();
    let v: Vec<(Q, Q)> = p.vertices().iter().map(|p| (q(p.x), q(p.y))).collect();
    let n = v.len();
    let mut twice_area = Q::zero();
    for i in 0..n {
        let (a, b) = (&v[i], &v[(i + 1) % n]);
        twice_area += &a.0 * &b.1 - &b.0 * &a.1;
    }
    if twice_area.abs() / Q::from_integer(2.into()) <= q(1e-6) {
        return false;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (a1, a2) = (&v[i], &v[(i + 1) % n]);
            let (b1, b2) = (&v[j], &v[(j + 1) % n]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // shared vertex s; the edges overlap iff collinear and heading the same way from s
                let (s, x, y) = if j == i + 1 { (a2, a1, b2) } else { (a1, a2, b1) };
                if qcross(s, x, y).is_zero() {
                    let dot = (&x.0 - &s.0) * (&y.0 - &s.0) + (&x.1 - &s.1) * (&y.1 - &s.1);
                    if dot > Q::zero() {
                        return false;
                    }
                }
            } else if boxes_touch(raw, i, j) && exact_segments_meet(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// greedy suppression reference

/// Full overlap matrix, then each candidate in score order is checked against every
/// previously kept one.
pub fn greedy_reference(dets: &[Detection], threshold: f64, overlap: impl Fn(&Detection, &Detection) -> f64) -> Vec<usize> {
    greedy_reference_with(dets, threshold, &overlap_matrix(dets, overlap))
}

pub fn overlap_matrix(dets: &[Detection], overlap: impl Fn(&Detection, &Detection) -> f64) -> Vec<Vec<f64>> {
    let n = dets.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { overlap(&dets[i], &dets[j]) }).collect())
        .collect()
}

/// [`greedy_reference`] over a precomputed overlap matrix.
pub fn greedy_reference_with(dets: &[Detection], threshold: f64, m: &[Vec<f64>]) -> Vec<usize> {
    let n = dets.len();
    // insertion sort: stable, descending score
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let pos = order
            .iter()
            .position(|&o| dets[o].score < dets[i].score)
            .unwrap_or(order.len());
        order.insert(pos, i);
    }
    let mut kept: Vec<usize> = Vec::new();
    for &i in &order {
        if kept.iter().all(|&k| m[k][i] <= threshold) {
            kept.push(i);
        }
    }
    kept
}

// ---------------------------------------------------------------------------
// network oracles

/// Which bin along one axis pixel offset `u` (within a length-`len` span) falls into.
fn bin_of(u: usize, len: usize, p: usize) -> usize {
    let base = len / p;
    let short_bins = p - len % p;
    if u < short_bins * base {
        u / base
    } else {
        short_bins + (u - short_bins * base) / (base + 1)
    }
}

/// Naive position-sensitive pooling: every pixel of the region is visited for every
/// output cell and tested for membership.
pub fn psroi_oracle(
    maps: &Array3<f64>,
    (x_min, y_min, x_max, y_max): (usize, usize, usize, usize),
    p: usize,
    targets: usize,
) -> Array3<f64> {
    let (w, h) = (x_max - x_min, y_max - y_min);
    let mut out = Array3::zeros((targets, p, p));
    for c in 0..targets {
        for i in 0..p {
            for j in 0..p {
                let ch = c * p * p + i * p + j;
                let (mut sum, mut count) = (0.0, 0usize);
                if h >= p && w >= p {
                    for y in y_min..y_max {
                        for x in x_min..x_max {
                            if bin_of(y - y_min, h, p) == i && bin_of(x - x_min, w, p) == j {
                                sum += maps[[ch, y, x]];
                                count += 1;
                            }
                        }
                    }
                } else {
                    let ys: Vec<usize> = if h >= p {
                        (y_min..y_max).filter(|y| bin_of(y - y_min, h, p) == i).collect()
                    } else {
                        vec![y_min + (i * h) / p]
                    };
                    let xs: Vec<usize> = if w >= p {
                        (x_min..x_max).filter(|x| bin_of(x - x_min, w, p) == j).collect()
                    } else {
                        vec![x_min + (j * w) / p]
                    };
                    for &y in &ys {
                        for &x in &xs {
                            sum += maps[[ch, y, x]];
                            count += 1;
                        }
                    }
                }
                out[[c, i, j]] = sum / count as f64;
            }
        }
    }
    out
}

/// Plain softmax over per-class bin means, without max subtraction.
pub fn vote_oracle(pooled: &Array3<f64>) -> (Vec<f64>, Vec<f64>) {
    let (classes, ph, pw) = pooled.dim();
    let mut means = vec![0.0; classes];
    for c in 0..classes {
        for i in 0..ph {
            for j in 0..pw {
                means[c] += pooled[[c, i, j]];
            }
        }
        means[c] /= (ph * pw) as f64;
    }
    let exps: Vec<f64> = means.iter().map(|m| m.exp()).collect();
    let z: f64 = exps.iter().sum();
    (means, exps.into_iter().map(|e| e / z).collect())
}

pub fn smooth_l1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

pub struct LstmOracleParams<'a> {
    pub w_ih: &'a Array2<f64>,
    pub w_hh: &'a Array2<f64>,
    pub bias: &'a Array1<f64>,
}

fn sigm(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One LSTM step, each gate computed on its own with explicit loops.
fn lstm_step(p: &LstmOracleParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hd = h.len();
    let gate = |g: usize, k: usize| -> f64 {
        let row = g * hd + k;
        let mut s = p.bias[row];
        for (d, xv) in x.iter().enumerate() {
            s += p.w_ih[[row, d]] * xv;
        }
        for (d, hv) in h.iter().enumerate() {
            s += p.w_hh[[row, d]] * hv;
        }
        s
    };
    let mut h2 = vec![0.0; hd];
    let mut c2 = vec![0.0; hd];
    for k in 0..hd {
        let i = sigm(gate(0, k));
        let f = sigm(gate(1, k));
        let g = gate(2, k).tanh();
        let o = sigm(gate(3, k));
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    (h2, c2)
}

/// Step-by-step bidirectional pass, directions averaged, then the pooling kernel.
pub fn tloc_oracle(
    x: ArrayView2<f64>,
    fwd: &LstmOracleParams,
    bwd: &LstmOracleParams,
    kernel: &Array1<f64>,
    bias: f64,
) -> Vec<f64> {
    let t_len = x.nrows();
    let hd = kernel.len();
    let row = |t: usize| x.row(t).to_vec();
    let mut hf = vec![vec![0.0; hd]; t_len];
    let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
    for t in 0..t_len {
        let (h2, c2) = lstm_step(fwd, &row(t), &h, &c);
        hf[t] = h2.clone();
        h = h2;
        c = c2;
    }
    let mut hb = vec![vec![0.0; hd]; t_len];
    let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
    for t in (0..t_len).rev() {
        let (h2, c2) = lstm_step(bwd, &row(t), &h, &c);
        hb[t] = h2.clone();
        h = h2;
        c = c2;
    }
    (0..t_len)
        .map(|t| {
            let mut s = bias;
            for k in 0..hd {
                s += kernel[k] * 0.5 * (hf[t][k] + hb[t][k]);
            }
            s
        })
        .collect()
}

// ---------------------------------------------------------------------------
// quads, scenes

/// Convex quadrilateral with corners on a jittered rotated rectangle.
pub fn random_quad(rng: &mut impl Rng, c: Point, scale: f64) -> [Point; 4] {
    loop {
        let w = rng.random_range(0.3..1.0) * scale;
        let h = rng.random_range(0.1..0.6) * scale;
        let th = rng.random_range(0.0..2.0 * PI);
        let (s, co) = th.sin_cos();
        let j = 0.1 * h;
        let q: [Point; 4] = std::array::from_fn(|k| {
            let (u, v) = [(-w, -h), (w, -h), (w, h), (-w, h)][k];
            let (u, v) = (0.5 * u + rng.random_range(-j..=j), 0.5 * v + rng.random_range(-j..=j));
            Point::new(c.x + u * co - v * s, c.y + u * s + v * co)
        });
        if let Ok(p) = Polygon::new(q.to_vec()) {
            if simple_oracle(&p) {
                return q;
            }
        }
    }
}

/// A text-like 14-point region: an arc band or an interpolated quad.
pub fn text_region(rng: &mut impl Rng, c: Point, scale: f64) -> Polygon14 {
    if rng.random_bool(0.5) {
        let sweep = rng.random_range(0.4..2.0);
        arc_band(rng, Point::new(c.x, c.y), scale * 0.6, scale * 0.3, sweep)
    } else {
        ctw_core::annotations::interpolate_quad(&random_quad(rng, c, scale)).expect("quad")
    }
}

/// Jitters every vertex of `p` by up to `amount`, retrying until the result is simple.
pub fn jitter(rng: &mut impl Rng, p: &Polygon14, amount: f64) -> Polygon14 {
    let dx = rng.random_range(-amount..=amount);
    let dy = rng.random_range(-amount..=amount);
    loop {
        let noise: Vec<(f64, f64)> = (0..14)
            .map(|_| (rng.random_range(-0.2..=0.2) * amount, rng.random_range(-0.2..=0.2) * amount))
            .collect();
        let pts = p
            .vertices()
            .iter()
            .zip(&noise)
            .map(|(q, n)| Point::new(q.x + dx + n.0, q.y + dy + n.1))
            .collect();
        let Ok(moved) = Polygon14::new(pts) else { continue };
        if simple_oracle(moved.as_polygon()) {
            return moved;
        }
    }
}

/// Up to `max` scored regions clustered around a few centres so that many overlap.
/// Scores sit on a coarse grid so ties occur.
pub fn scene(rng: &mut impl Rng, max: usize) -> Vec<Detection> {
    let n = rng.random_range(1..=max);
    let clusters: Vec<(Point, f64)> = (0..rng.random_range(1..=6))
        .map(|_| {
            (
                Point::new(rng.random_range(0.0..600.0), rng.random_range(0.0..600.0)),
                rng.random_range(40.0..150.0),
            )
        })
        .collect();
    (0..n)
        .map(|_| {
            let (c, s) = clusters[rng.random_range(0..clusters.len())];
            let base = text_region(rng, c, s);
            let poly = jitter(rng, &base, 0.3 * s);
            detection(poly, rng.random_range(0..=20) as f64 / 20.0)
        })
        .collect()
}

/// A bowtie in 14 points: the two long sides cross.
pub fn bowtie14(x: f64, y: f64) -> Polygon14 {
    let mut pts: Vec<Point> = (0..7).map(|k| Point::new(x + 10.0 * k as f64, y)).collect();
    // far side runs the wrong way, so the closing edges cross
    pts.extend((0..7).map(|k| Point::new(x + 10.0 * k as f64, y + 20.0)));
    Polygon14::new(pts).expect("bowtie")
}
