//! Exact Euclidean signed distance maps.
//!
//! The boundary sits halfway between an inside pixel center and its nearest
//! outside pixel center: an outside pixel stores `d_in - 0.5`, where `d_in` is
//! the distance to the nearest inside pixel center, and an inside pixel stores
//! `-(d_out - 0.5)`. Values are negative inside and the zero level set
//! separates the two classes.

use super::point::{Point2, Vec2};
use super::raster::{bilinear, BinaryMask};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceMap<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Real> SignedDistanceMap<T> {
    /// Wrap precomputed values (row-major).
    pub fn from_values(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "distance map {width}x{height} with {} values",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    /// Bilinear value with clamp-to-edge reads.
    #[inline]
    pub fn sample(&self, p: Point2<T>) -> T {
        bilinear(self.width, self.height, p, |x, y| self.get(x, y))
    }

    /// Central-difference gradient (step 1 px) of the bilinear interpolant.
    pub fn gradient(&self, p: Point2<T>) -> Vec2<T> {
        let one = T::one();
        let half = T::of(0.5);
        let gx = (self.sample(Point2::new(p.x + one, p.y))
            - self.sample(Point2::new(p.x - one, p.y)))
            * half;
        let gy = (self.sample(Point2::new(p.x, p.y + one))
            - self.sample(Point2::new(p.x, p.y - one)))
            * half;
        Vec2::new(gx, gy)
    }

    /// `-φ ∇φ`: points from `p` toward the zero level set with length equal to
    /// the distance to it.
    pub fn flow_to_boundary(&self, p: Point2<T>) -> Vec2<T> {
        self.gradient(p) * (-self.sample(p))
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Whether `p` lies at least `margin` px inside the grid.
    pub fn contains_with_margin(&self, p: Point2<T>, margin: f64) -> bool {
        let (x, y) = (p.x.f64(), p.y.f64());
        x >= margin
            && y >= margin
            && x <= (self.width - 1) as f64 - margin
            && y <= (self.height - 1) as f64 - margin
    }
}

/// Signed Euclidean distance map of a mask (negative inside).
pub fn signed_distance_map<T: Real>(mask: &BinaryMask) -> Result<SignedDistanceMap<T>> {
    let inside = mask.count();
    if inside == 0 || inside == mask.bits().len() {
        return Err(Error::NoBoundary);
    }
    let (w, h) = (mask.width(), mask.height());
    let to_inside = squared_edt(w, h, |i| mask.bits()[i]);
    let to_outside = squared_edt(w, h, |i| !mask.bits()[i]);
    let values = mask
        .bits()
        .iter()
        .enumerate()
        .map(|(i, &inside)| {
            let v = if inside {
                -(to_outside[i].sqrt() - 0.5)
            } else {
                to_inside[i].sqrt() - 0.5
            };
            T::of(v)
        })
        .collect();
    Ok(SignedDistanceMap {
        width: w,
        height: h,
        values,
    })
}

/// Squared distance from every pixel center to the nearest feature pixel
/// center: separable lower-envelope-of-parabolas transform, columns then rows.
fn squared_edt(w: usize, h: usize, feature: impl Fn(usize) -> bool) -> Vec<f64> {
    // Any real distance is below this; keeps the parabola arithmetic finite.
    let far = ((w * w + h * h) as f64 + 1.0) * 4.0;
    let mut grid: Vec<f64> = (0..w * h)
        .map(|i| if feature(i) { 0.0 } else { far })
        .collect();

    let mut f = vec![0.0; w.max(h)];
    let mut d = vec![0.0; w.max(h)];
    let mut v = vec![0usize; w.max(h)];
    let mut z = vec![0.0; w.max(h) + 1];

    for x in 0..w {
        for y in 0..h {
            f[y] = grid[y * w + x];
        }
        edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = d[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    grid
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        let mut s = inter(q, v[k]);
        // z[0] = -inf stops the walk at k = 0.
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}
