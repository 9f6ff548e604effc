use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Vec2};
use crate::scalar::Real;

/// Local coordinate system of a patch.
///
/// Patch-local axes are `u` (right) and `v` (down). The frame rotation maps the
/// local "up" direction `(0, -1)` onto the outer normal, so the enclosed region
/// lies toward the bottom of the patch. `scale` multiplies the sampling step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchFrame<T> {
    pub center: Point2<T>,
    pub normal_angle: T,
    pub scale: T,
}

impl<T: Real> PatchFrame<T> {
    pub fn new(center: Point2<T>, normal_angle: T, scale: T) -> Self {
        Self {
            center,
            normal_angle: wrap_angle(normal_angle),
            scale,
        }
    }

    /// Frame whose outer normal is `normal` (need not be unit length).
    pub fn from_normal(center: Point2<T>, normal: Vec2<T>) -> Self {
        Self::new(center, normal.angle(), T::one())
    }

    /// Patch-local vector to world coordinates.
    #[inline]
    pub fn to_world(&self, local: Vec2<T>) -> Vec2<T> {
        let (s, c) = self.normal_angle.sin_cos();
        Vec2::new(-s * local.x - c * local.y, c * local.x - s * local.y)
    }

    /// World vector to patch-local coordinates (inverse of [`Self::to_world`]).
    #[inline]
    pub fn to_local(&self, world: Vec2<T>) -> Vec2<T> {
        let (s, c) = self.normal_angle.sin_cos();
        Vec2::new(-s * world.x + c * world.y, -c * world.x - s * world.y)
    }

    pub fn rotated(&self, delta: T) -> Self {
        Self::new(self.center, self.normal_angle + delta, self.scale)
    }
}

/// Wrap into `[-π, π)`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let tau = T::TAU();
    let mut w = (a + T::PI()) % tau;
    if w < T::zero() {
        w = w + tau;
    }
    let out = w - T::PI();
    if out >= T::PI() {
        out - tau
    } else {
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn up_maps_to_normal() {
        for theta in [-3.0, -1.0, 0.0, 0.7, 2.5] {
            let f = PatchFrame::new(Point2::new(0.0, 0.0), theta, 1.0);
            let n = f.to_world(Vec2::new(0.0, -1.0));
            assert!(n.distance(Vec2::from_angle(theta)) < 1e-12);
            let back = f.to_local(Vec2::new(0.3, -2.0));
            assert!(f.to_world(back).distance(Vec2::new(0.3, -2.0)) < 1e-12);
        }
        // Normal pointing up on screen: local and world axes coincide.
        let id = PatchFrame::new(Point2::new(0.0, 0.0), -FRAC_PI_2, 1.0);
        assert!(
            id.to_world(Vec2::new(1.0, 2.0))
                .distance(Vec2::new(1.0, 2.0))
                < 1e-12
        );
    }

    #[test]
    fn angles_wrap_half_open() {
        assert!((wrap_angle(PI) + PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) + PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI + 0.5) - (-PI + 0.5)).abs() < 1e-9);
        assert!((wrap_angle(0.25f64) - 0.25).abs() < 1e-15);
    }
}
