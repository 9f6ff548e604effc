use super::frame::PatchFrame;
use crate::error::{Error, Result};
use crate::geometry::{Point2, RasterImage, SignedDistanceMap, Vec2};
use crate::scalar::Real;

/// Side length of network input patches.
pub const PATCH_SIZE: usize = 64;

/// Square crop in a [`PatchFrame`], stored channel-planar (`c`, `v`, `u`).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<T> {
    size: usize,
    channels: usize,
    samples: Vec<T>,
    frame: PatchFrame<T>,
}

impl<T: Real> Patch<T> {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn frame(&self) -> &PatchFrame<T> {
        &self.frame
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, c: usize) -> T {
        self.samples[(c * self.size + v) * self.size + u]
    }

    /// Add a per-channel offset and clamp into `[0, 1]`.
    pub fn with_bias(mut self, bias: &[T]) -> Self {
        let plane = self.size * self.size;
        for (c, chunk) in self.samples.chunks_mut(plane).enumerate() {
            let b = bias.get(c).copied().unwrap_or_else(T::zero);
            for s in chunk {
                *s = (*s + b).max(T::zero()).min(T::one());
            }
        }
        self
    }
}

/// Bilinear crop of `PATCH_SIZE`² samples in `frame` (clamp-to-edge).
pub fn sample_patch<T: Real>(image: &RasterImage<T>, frame: &PatchFrame<T>) -> Patch<T> {
    sample_patch_sized(image, frame, PATCH_SIZE)
}

/// Sample `(u, v)` reads the image at
/// `center + scale * R * (u - (size-1)/2, v - (size-1)/2)`.
pub fn sample_patch_sized<T: Real>(
    image: &RasterImage<T>,
    frame: &PatchFrame<T>,
    size: usize,
) -> Patch<T> {
    let channels = image.channels();
    let half = T::of((size as f64 - 1.0) * 0.5);
    let mut samples = vec![T::zero(); channels * size * size];
    for v in 0..size {
        for u in 0..size {
            let off = Vec2::new(T::of(u as f64) - half, T::of(v as f64) - half) * frame.scale;
            let p = frame.center + frame.to_world(off);
            for c in 0..channels {
                samples[(c * size + v) * size + u] = image.sample(p, c);
            }
        }
    }
    Patch {
        size,
        channels,
        samples,
        frame: *frame,
    }
}

/// Ground-truth flow `-φ ∇φ` at the frame center, in patch-local coordinates.
///
/// For the negative-inside convention this points from the center toward the
/// zero level set with length equal to the distance to it.
pub fn local_target_vector<T: Real>(
    sdm: &SignedDistanceMap<T>,
    frame: &PatchFrame<T>,
) -> Result<Vec2<T>> {
    let c: Point2<T> = frame.center;
    if !sdm.contains_with_margin(c, 2.0) {
        return Err(Error::OutsideGradientRegion(c.x.f64(), c.y.f64()));
    }
    Ok(frame.to_local(sdm.flow_to_boundary(c)))
}
