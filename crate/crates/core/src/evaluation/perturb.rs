use crate::geometry::{outer_normals, Curve};
use crate::scalar::Real;
use crate::{Error, Result};

/// Amplitude cap in px.
pub const MAX_PERTURBATION: f64 = 20.0;
/// Amplitude as a fraction of the smaller bounding-box extent.
pub const PERTURBATION_FRACTION: f64 = 0.12;

/// `min(0.12·min(Δx, Δy), 20)` for the curve's bounding box.
pub fn perturbation_amplitude<T: Real>(curve: &Curve<T>) -> f64 {
    let (lo, hi) = curve.bounds();
    let extent = (hi.x - lo.x).f64().min((hi.y - lo.y).f64());
    (PERTURBATION_FRACTION * extent).min(MAX_PERTURBATION)
}

/// Displaces every vertex along its outer normal by
/// `A·r1·sin(10π·s·r2/L)`, with `s` the arc length up to the vertex.
pub fn perturb_init<T: Real>(curve: &Curve<T>, r1: f64, r2: f64) -> Result<Curve<T>> {
    if !(0.0..=1.0).contains(&r1) || !(0.0..=1.0).contains(&r2) {
        return Err(Error::InvalidConfig(format!("perturbation parameters must lie in [0, 1], got {r1}, {r2}")));
    }
    let amp = perturbation_amplitude(curve) * r1;
    let length = curve.length().f64();
    let s = curve.cumulative_lengths();
    let normals = outer_normals(curve);
    let moved = curve
        .vertices()
        .iter()
        .zip(&normals)
        .zip(&s)
        .map(|((&p, &n), &s)| {
            let gamma = amp * (10.0 * std::f64::consts::PI * s.f64() * r2 / length).sin();
            p + n * T::of(gamma)
        })
        .collect();
    Curve::new(moved)
}
