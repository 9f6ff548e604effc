//! Closed curves, image grids, signed distance maps, level lines and
//! rasterization.
//!
//! Coordinates: x to the right, y down, pixel centers at integer positions.

mod curve;
mod fill;
mod level_lines;
mod point;
mod raster;
mod sdm;

pub use curve::{curve_length, outer_normals, resample_uniform, Curve, CurveJson, MIN_LENGTH};
pub use fill::rasterize;
pub use level_lines::{extract_level_lines, iso_contours};
pub use point::{Point2, Vec2};
pub use raster::{bilinear, BinaryMask, RasterImage};
pub use sdm::{signed_distance_map, SignedDistanceMap};

#[cfg(test)]
pub(crate) use sdm::tests::disk;
