//! Annotation and detection files.
//!
//! An annotation line holds one text region in one of four layouts:
//!
//! * 32 integers: `x_min,y_min,x_max,y_max` followed by 14 `(w,h)` pairs relative to
//!   `(x_min, y_min)`. This is the canonical curve layout.
//! * 28 integers: 14 absolute `(x,y)` pairs (curve).
//! * 8 integers: a quadrilateral, lifted to 14 points by long-side interpolation.
//! * 4 integers: `x_min,y_min,x_max,y_max`, lifted the same way from its corners.
//!
//! A trailing `#care=0` marks the region as "don't care". Detection lines are
//! `score,x1,y1,...,x14,y14` with real-valued fields.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, circumscribed_rect, GeometryError, Point, Polygon};

pub const POLYGON_POINTS: usize = 14;

/// Number of interior division points placed on each divided side.
const DIVISIONS: usize = 5;

/// Sides shorter than this (pixels) make a quad degenerate.
const MIN_SIDE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotationError {
    #[error("format error: {0}")]
    Format(String),
    #[error("bounds error: {0}")]
    Bounds(String),
    #[error("degenerate quadrilateral: {0}")]
    DegenerateQuad(String),
    #[error("score {0} outside [0, 1]")]
    ScoreRange(f64),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(#[from] GeometryError),
}

/// A polygon with exactly 14 vertices.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Polygon14(Polygon);

impl Polygon14 {
    pub fn new(points: Vec<Point>) -> Result<Self, AnnotationError> {
        if points.len() != POLYGON_POINTS {
            return Err(AnnotationError::Format(format!(
                "expected {POLYGON_POINTS} points, got {}",
                points.len()
            )));
        }
        Ok(Self(Polygon::new(points)?))
    }

    pub fn as_polygon(&self) -> &Polygon {
        &self.0
    }

    pub fn vertices(&self) -> &[Point] {
        self.0.vertices()
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Result<Self, AnnotationError> {
        Ok(Self(self.0.map(f)?))
    }
}

impl TryFrom<Polygon> for Polygon14 {
    type Error = AnnotationError;

    fn try_from(p: Polygon) -> Result<Self, Self::Error> {
        if p.len() != POLYGON_POINTS {
            return Err(AnnotationError::Format(format!(
                "expected {POLYGON_POINTS} points, got {}",
                p.len()
            )));
        }
        Ok(Self(p))
    }
}

impl AsRef<Polygon> for Polygon14 {
    fn as_ref(&self) -> &Polygon {
        &self.0
    }
}

impl<'de> Deserialize<'de> for Polygon14 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let p = Polygon::deserialize(d)?;
        Polygon14::try_from(p).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rect,
    Quad,
    Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub polygon: Polygon14,
    pub shape_kind: ShapeKind,
    pub care: bool,
}

impl Annotation {
    pub fn curve(polygon: Polygon14) -> Self {
        Self {
            polygon,
            shape_kind: ShapeKind::Curve,
            care: true,
        }
    }

    /// The four source corners of a rect/quad annotation, in interpolation order.
    pub fn corners(&self) -> Option<[Point; 4]> {
        match self.shape_kind {
            ShapeKind::Curve => None,
            _ => {
                let v = self.polygon.vertices();
                Some([v[0], v[DIVISIONS + 1], v[DIVISIONS + 2], v[POLYGON_POINTS - 1]])
            }
        }
    }

    /// Canonical 32-value line regardless of the source kind. Coordinates are rounded
    /// to the nearest pixel.
    pub fn to_curve_line(&self) -> String {
        let pts: Vec<(i64, i64)> = self
            .polygon
            .vertices()
            .iter()
            .map(|p| (p.x.round() as i64, p.y.round() as i64))
            .collect();
        let x_min = pts.iter().map(|p| p.0).min().unwrap_or(0);
        let y_min = pts.iter().map(|p| p.1).min().unwrap_or(0);
        let x_max = pts.iter().map(|p| p.0).max().unwrap_or(0);
        let y_max = pts.iter().map(|p| p.1).max().unwrap_or(0);
        let mut s = format!("{x_min},{y_min},{x_max},{y_max}");
        for (x, y) in pts {
            let _ = write!(s, ",{},{}", x - x_min, y - y_min);
        }
        self.push_care(s)
    }

    fn push_care(&self, mut s: String) -> String {
        if !self.care {
            s.push_str(",#care=0");
        }
        s
    }

    /// Serializes in the layout matching `shape_kind`: 4 values for rects, 8 for quads,
    /// the 32-value form for curves.
    pub fn to_line(&self) -> String {
        match self.shape_kind {
            ShapeKind::Curve => self.to_curve_line(),
            ShapeKind::Rect => {
                let r = circumscribed_rect(self.polygon.as_polygon());
                self.push_care(format!(
                    "{},{},{},{}",
                    fmt_int(r.x_min),
                    fmt_int(r.y_min),
                    fmt_int(r.x_max),
                    fmt_int(r.y_max)
                ))
            }
            ShapeKind::Quad => {
                let c = self.corners().expect("quad has corners");
                let body = c
                    .iter()
                    .map(|p| format!("{},{}", fmt_int(p.x), fmt_int(p.y)))
                    .collect::<Vec<_>>()
                    .join(",");
                self.push_care(body)
            }
        }
    }
}

fn fmt_int(v: f64) -> i64 {
    v.round() as i64
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub polygon: Polygon14,
    pub score: f64,
}

impl Detection {
    pub fn to_line(&self) -> String {
        let mut s = format!("{}", self.score);
        for p in self.polygon.vertices() {
            let _ = write!(s, ",{},{}", p.x, p.y);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    #[serde(rename = "images")]
    pub image_count: usize,
    #[serde(rename = "boxes")]
    pub box_count: usize,
    #[serde(rename = "curve_boxes")]
    pub curve_box_count: usize,
}

/// Splits off an optional `#care=0|1` suffix.
fn split_care(line: &str) -> Result<(&str, bool), AnnotationError> {
    match line.split_once('#') {
        None => Ok((line, true)),
        Some((body, tag)) => {
            let care = match tag.trim() {
                "care=0" => false,
                "care=1" => true,
                other => {
                    return Err(AnnotationError::Format(format!(
                        "unknown trailing token '#{other}'"
                    )))
                }
            };
            Ok((body.trim_end().trim_end_matches(',').trim_end(), care))
        }
    }
}

fn parse_ints(body: &str) -> Result<Vec<i64>, AnnotationError> {
    body.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<i64>()
                .map_err(|_| AnnotationError::Format(format!("non-integer token '{t}'")))
        })
        .collect()
}

fn pt(x: i64, y: i64) -> Point {
    Point::new(x as f64, y as f64)
}

/// Parses one annotation line (see the module docs for the accepted layouts).
pub fn parse_annotation_line(line: &str) -> Result<Annotation, AnnotationError> {
    let (body, care) = split_care(line.trim())?;
    if body.is_empty() {
        return Err(AnnotationError::Format("empty line".into()));
    }
    let v = parse_ints(body)?;
    let (polygon, shape_kind) = match v.len() {
        32 => (parse_relative(&v)?, ShapeKind::Curve),
        28 => {
            let pts = v.chunks_exact(2).map(|c| pt(c[0], c[1])).collect();
            (Polygon14::new(pts)?, ShapeKind::Curve)
        }
        8 => {
            let q = [pt(v[0], v[1]), pt(v[2], v[3]), pt(v[4], v[5]), pt(v[6], v[7])];
            (interpolate_quad(&q)?, ShapeKind::Quad)
        }
        4 => {
            if v[2] < v[0] || v[3] < v[1] {
                return Err(AnnotationError::Bounds(format!(
                    "inverted rectangle {},{},{},{}",
                    v[0], v[1], v[2], v[3]
                )));
            }
            let q = [pt(v[0], v[1]), pt(v[2], v[1]), pt(v[2], v[3]), pt(v[0], v[3])];
            (interpolate_quad(&q)?, ShapeKind::Rect)
        }
        n => {
            return Err(AnnotationError::Format(format!(
                "expected 32, 28, 8 or 4 values, got {n}"
            )))
        }
    };
    Ok(Annotation {
        polygon,
        shape_kind,
        care,
    })
}

fn parse_relative(v: &[i64]) -> Result<Polygon14, AnnotationError> {
    let (x_min, y_min, x_max, y_max) = (v[0], v[1], v[2], v[3]);
    if x_max < x_min || y_max < y_min {
        return Err(AnnotationError::Bounds(format!(
            "inverted rectangle {x_min},{y_min},{x_max},{y_max}"
        )));
    }
    let mut pts = Vec::with_capacity(POLYGON_POINTS);
    for (i, c) in v[4..].chunks_exact(2).enumerate() {
        let (w, h) = (c[0], c[1]);
        if w < 0 || h < 0 {
            return Err(AnnotationError::Bounds(format!(
                "point {} has negative offset ({w},{h})",
                i + 1
            )));
        }
        let (x, y) = (x_min + w, y_min + h);
        if x > x_max + 1 || y > y_max + 1 {
            return Err(AnnotationError::Bounds(format!(
                "point {} at ({x},{y}) lies outside the declared rectangle",
                i + 1
            )));
        }
        pts.push(pt(x, y));
    }
    Polygon14::new(pts)
}

/// Parses `score,x1,y1,...,x14,y14`.
pub fn parse_detection_line(line: &str) -> Result<Detection, AnnotationError> {
    let vals: Vec<f64> = line
        .trim()
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| AnnotationError::Format(format!("bad number '{t}'")))
        })
        .collect::<Result<_, _>>()?;
    if vals.len() != 1 + 2 * POLYGON_POINTS {
        return Err(AnnotationError::Format(format!(
            "expected {} values, got {}",
            1 + 2 * POLYGON_POINTS,
            vals.len()
        )));
    }
    let score = vals[0];
    if !(0.0..=1.0).contains(&score) {
        return Err(AnnotationError::ScoreRange(score));
    }
    let pts = vals[1..]
        .chunks_exact(2)
        .map(|c| Point::new(c[0], c[1]))
        .collect();
    Ok(Detection {
        polygon: Polygon14::new(pts)?,
        score,
    })
}

/// Parse result for one line of a file, 1-based line numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct LineResult<T> {
    pub line: usize,
    pub result: Result<T, AnnotationError>,
}

/// Parses every non-blank line of an annotation file.
pub fn parse_annotation_text(text: &str) -> Vec<LineResult<Annotation>> {
    parse_lines(text, parse_annotation_line)
}

/// Parses every non-blank line of a detection file.
pub fn parse_detection_text(text: &str) -> Vec<LineResult<Detection>> {
    parse_lines(text, parse_detection_line)
}

fn parse_lines<T>(text: &str, f: impl Fn(&str) -> Result<T, AnnotationError>) -> Vec<LineResult<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| LineResult {
            line: i + 1,
            result: f(l),
        })
        .collect()
}

fn lerp(a: Point, b: Point, k: usize) -> Point {
    let k = k as f64;
    let steps = (DIVISIONS + 1) as f64;
    Point::new(a.x + (b.x - a.x) * k / steps, a.y + (b.y - a.y) * k / steps)
}

/// Lifts a quadrilateral to 14 points by long-side interpolation.
///
/// The longest side (ties go to the lowest starting index) and its opposite side each
/// receive five equally spaced interior points. Output starts at the longest side's
/// first corner and follows the input's cyclic order.
pub fn interpolate_quad(q: &[Point; 4]) -> Result<Polygon14, AnnotationError> {
    let mut longest = 0;
    let mut best = -1.0;
    for i in 0..4 {
        let (a, b) = (q[i], q[(i + 1) % 4]);
        let len2 = (b.x - a.x).powi(2) + (b.y - a.y).powi(2);
        if len2.sqrt() < MIN_SIDE {
            return Err(AnnotationError::DegenerateQuad(format!("side {i} has zero length")));
        }
        if len2 > best {
            best = len2;
            longest = i;
        }
    }
    let quad = Polygon::new(q.to_vec())?;
    if !geometry::is_simple(&quad) {
        return Err(AnnotationError::DegenerateQuad("quadrilateral is not simple".into()));
    }
    let c = |k: usize| q[(longest + k) % 4];
    let mut pts = Vec::with_capacity(POLYGON_POINTS);
    pts.push(c(0));
    pts.extend((1..=DIVISIONS).map(|k| lerp(c(0), c(1), k)));
    pts.push(c(1));
    pts.push(c(2));
    pts.extend((1..=DIVISIONS).map(|k| lerp(c(2), c(3), k)));
    pts.push(c(3));
    Polygon14::new(pts)
}

/// Counts images, boxes and curve boxes.
pub fn dataset_stats<'a, I, A>(images: I) -> DatasetStats
where
    I: IntoIterator<Item = A>,
    A: IntoIterator<Item = &'a Annotation>,
{
    let mut s = DatasetStats::default();
    for img in images {
        s.image_count += 1;
        for a in img {
            s.box_count += 1;
            if a.shape_kind == ShapeKind::Curve {
                s.curve_box_count += 1;
            }
        }
    }
    s
}

/// Per-image annotations keyed by file stem.
pub type AnnotationSet = BTreeMap<String, Vec<Annotation>>;

/// Per-image detections keyed by file stem.
pub type DetectionSet = BTreeMap<String, Vec<Detection>>;
