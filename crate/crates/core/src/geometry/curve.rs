use serde::{Deserialize, Serialize};

use super::point::{Point2, Vec2};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimum admissible segment length between consecutive vertices.
pub const MIN_SEGMENT: f64 = 1e-9;
/// Curves shorter than this cannot be resampled.
pub const MIN_LENGTH: f64 = 1e-6;

/// Closed polyline; vertex `K-1` connects back to vertex `0`.
///
/// Orientation is counterclockwise as seen on screen. With y pointing down
/// this means the shoelace sum [`Curve::signed_area`] is **negative**, and the
/// outer normal of an edge with tangent `(tx, ty)` is `(-ty, tx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve<T> {
    vertices: Vec<Point2<T>>,
}

impl<T: Real> Curve<T> {
    /// Validate and orientation-normalize a vertex list.
    pub fn new(vertices: Vec<Point2<T>>) -> Result<Self> {
        if vertices.len() < 4 {
            return Err(Error::InvalidCurve(format!(
                "need at least 4 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidCurve(format!("vertex {i} is not finite")));
        }
        let k = vertices.len();
        for i in 0..k {
            let d = vertices[i].distance(vertices[(i + 1) % k]).f64();
            if d <= MIN_SEGMENT {
                return Err(Error::InvalidCurve(format!(
                    "vertices {i} and {} coincide",
                    (i + 1) % k
                )));
            }
        }
        let mut curve = Self { vertices };
        curve.normalize_orientation();
        Ok(curve)
    }

    /// Build from arbitrary points: drops non-finite points and consecutive
    /// duplicates before validating.
    pub fn from_points_dedup(points: impl IntoIterator<Item = Point2<T>>) -> Result<Self> {
        let mut out: Vec<Point2<T>> = Vec::new();
        for p in points.into_iter().filter(|p| p.is_finite()) {
            if out
                .last()
                .map_or(true, |q| q.distance(p).f64() > MIN_SEGMENT)
            {
                out.push(p);
            }
        }
        while out.len() > 1 && out[0].distance(out[out.len() - 1]).f64() <= MIN_SEGMENT {
            out.pop();
        }
        Self::new(out)
    }

    /// Wrap vertices without any checks. Used inside the evolution loop where
    /// the next resampling restores the invariants.
    pub(crate) fn from_raw(vertices: Vec<Point2<T>>) -> Self {
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point2<T>] {
        &self.vertices
    }

    pub fn into_vertices(self) -> Vec<Point2<T>> {
        self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace sum `½ Σ (x_i y_{i+1} - x_{i+1} y_i)`; negative for valid curves.
    pub fn signed_area(&self) -> T {
        let k = self.vertices.len();
        let mut acc = T::zero();
        for i in 0..k {
            acc = acc + self.vertices[i].cross(self.vertices[(i + 1) % k]);
        }
        acc * T::of(0.5)
    }

    pub fn area(&self) -> T {
        self.signed_area().abs()
    }

    fn normalize_orientation(&mut self) {
        if self.signed_area() > T::zero() {
            self.vertices.reverse();
        }
    }

    /// Same curve traversed in the opposite direction, normalized again.
    pub fn reversed(&self) -> Result<Self> {
        let mut v = self.vertices.clone();
        v.reverse();
        Self::new(v)
    }

    /// Perimeter including the closing segment.
    pub fn length(&self) -> T {
        segment_lengths(&self.vertices).into_iter().sum()
    }

    /// Arc length from vertex 0 to each vertex.
    pub fn cumulative_lengths(&self) -> Vec<T> {
        let mut acc = T::zero();
        let mut out = Vec::with_capacity(self.vertices.len());
        for l in segment_lengths(&self.vertices) {
            out.push(acc);
            acc = acc + l;
        }
        out
    }

    pub fn centroid(&self) -> Point2<T> {
        let n = T::of(self.vertices.len() as f64);
        let s = self.vertices.iter().fold(Point2::zero(), |acc, &p| acc + p);
        s * (T::one() / n)
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounds(&self) -> (Point2<T>, Point2<T>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for p in &self.vertices[1..] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn translated(&self, by: Vec2<T>) -> Self {
        Self::from_raw(self.vertices.iter().map(|&p| p + by).collect())
    }

    pub fn cast<S: Real>(&self) -> Curve<S> {
        Curve::from_raw(self.vertices.iter().map(|p| p.cast()).collect())
    }
}

fn segment_lengths<T: Real>(v: &[Point2<T>]) -> Vec<T> {
    let k = v.len();
    (0..k).map(|i| v[i].distance(v[(i + 1) % k])).collect()
}

/// Curve length in pixels.
pub fn curve_length<T: Real>(curve: &Curve<T>) -> T {
    curve.length()
}

/// Resample to `k` vertices spaced `L/k` apart along the input polyline,
/// starting at the input's first vertex.
pub fn resample_uniform<T: Real>(curve: &Curve<T>, k: usize) -> Result<Curve<T>> {
    if k < 4 {
        return Err(Error::InvalidCurve(format!(
            "cannot resample to {k} < 4 points"
        )));
    }
    let v = curve.vertices();
    let seg = segment_lengths(v);
    let total: T = seg.iter().copied().sum();
    if !(total.f64() >= MIN_LENGTH) {
        return Err(Error::DegenerateCurve(total.f64()));
    }
    let n = v.len();
    let step = total / T::of(k as f64);
    let mut out = Vec::with_capacity(k);
    let mut seg_idx = 0;
    let mut seg_start = T::zero();
    for i in 0..k {
        let target = step * T::of(i as f64);
        while seg_idx + 1 < n && seg_start + seg[seg_idx] <= target {
            seg_start = seg_start + seg[seg_idx];
            seg_idx += 1;
        }
        let a = v[seg_idx];
        let b = v[(seg_idx + 1) % n];
        let len = seg[seg_idx];
        let t = if len > T::zero() {
            ((target - seg_start) / len).max(T::zero()).min(T::one())
        } else {
            T::zero()
        };
        out.push(a + (b - a) * t);
    }
    Ok(Curve::from_raw(out))
}

/// Unit outer normals, one per vertex, from the central difference of the
/// neighbouring vertices rotated a quarter turn toward the outside.
pub fn outer_normals<T: Real>(curve: &Curve<T>) -> Vec<Vec2<T>> {
    let v = curve.vertices();
    let k = v.len();
    (0..k)
        .map(|j| {
            let prev = v[(j + k - 1) % k];
            let next = v[(j + 1) % k];
            let mut t = next - prev;
            if t.norm().f64() <= MIN_SEGMENT {
                // Hairpin: fall back to the outgoing edge.
                t = next - v[j];
            }
            let n = Vec2::new(-t.y, t.x);
            let len = n.norm();
            if len > T::zero() {
                n * (T::one() / len)
            } else {
                Vec2::new(T::zero(), -T::one())
            }
        })
        .collect()
}

/// JSON form: `{"vertices": [[x, y], ...], "closed": true}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveJson {
    pub vertices: Vec<[f64; 2]>,
    #[serde(default = "yes")]
    pub closed: bool,
}

fn yes() -> bool {
    true
}

impl<T: Real> From<&Curve<T>> for CurveJson {
    fn from(c: &Curve<T>) -> Self {
        Self {
            vertices: c
                .vertices()
                .iter()
                .map(|p| [p.x.f64(), p.y.f64()])
                .collect(),
            closed: true,
        }
    }
}

impl CurveJson {
    pub fn to_curve<T: Real>(&self) -> Result<Curve<T>> {
        if !self.closed {
            return Err(Error::InvalidCurve(
                "only closed curves are supported".into(),
            ));
        }
        Curve::new(
            self.vertices
                .iter()
                .map(|&[x, y]| Point2::new(T::of(x), T::of(y)))
                .collect(),
        )
    }
}
