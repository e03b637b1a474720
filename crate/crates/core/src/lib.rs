//! Geometry, suppression and evaluation for curved scene-text regions described
//! by 14-point polygons.
//!
//! * [`geometry`]: polygon area, simplicity and exact intersection / IoU.
//! * [`annotations`]: label and detection file formats, long-side interpolation.
//! * [`offset_codec`]: point-offset regression targets relative to the datum corner.
//! * [`suppression`]: non-polygon suppression and polygonal NMS.
//! * [`evaluation`]: polygon-IoU matching with don't-care handling.
//! * [`network`]: forward references for the detector head.

pub mod annotations;
pub mod evaluation;
pub mod geometry;
pub mod network;
pub mod offset_codec;
pub mod suppression;

pub use annotations::{Annotation, Detection, Polygon14, ShapeKind};
pub use geometry::{AARect, Point, Polygon};
