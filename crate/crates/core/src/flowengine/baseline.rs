use crate::geometry::{signed_distance_map, BinaryMask, Curve, Point2, RasterImage, Vec2};
use crate::scalar::Real;
use crate::{Error, Result};

use super::FlowField;

/// Width of the outer band used for the outside mean.
pub const MEAN_BAND: f64 = 3.0;

/// Two-region speed `(I - μo)² - (I - μi)²` at `p`. Positive where the
/// pixel looks like the inside, so the contour grows there.
pub fn region_speed<T: Real>(image: &RasterImage<T>, p: Point2<T>, mu_in: T, mu_out: T) -> T {
    let i = image.intensity(p);
    (i - mu_out) * (i - mu_out) - (i - mu_in) * (i - mu_in)
}

pub fn baseline_speed<T: Real>(
    image: &RasterImage<T>,
    curve: &Curve<T>,
    normals: &[Vec2<T>],
    mu_in: T,
    mu_out: T,
) -> Result<FlowField<T>> {
    if normals.len() != curve.len() {
        return Err(Error::LengthMismatch(curve.len(), normals.len()));
    }
    FlowField::new(
        curve
            .vertices()
            .iter()
            .zip(normals)
            .map(|(&c, &n)| n * region_speed(image, c, mu_in, mu_out))
            .collect(),
    )
}

/// Inside mean over the mask, outside mean over the band `0 < φ ≤ 3`.
pub fn estimate_means<T: Real>(image: &RasterImage<T>, mask: &BinaryMask) -> Result<(T, T)> {
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::ExtentMismatch(image.width(), image.height(), mask.width(), mask.height()));
    }
    let sdm = signed_distance_map::<f64>(mask)?;
    let pixel = |x: usize, y: usize| {
        (0..image.channels()).map(|c| image.get(x, y, c).f64()).sum::<f64>() / image.channels() as f64
    };
    let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                si += pixel(x, y);
                ni += 1;
            } else {
                let phi = sdm.get(x, y);
                if phi > 0.0 && phi <= MEAN_BAND {
                    so += pixel(x, y);
                    no += 1;
                }
            }
        }
    }
    if ni == 0 || no == 0 {
        return Err(Error::EmptyInput("mean estimation band is empty".into()));
    }
    Ok((T::of(si / ni as f64), T::of(so / no as f64)))
}

/// Piecewise-constant energy `Σ_in (I - μi)² + Σ_out (I - μo)²` of a mask.
pub fn region_energy<T: Real>(image: &RasterImage<T>, mask: &BinaryMask, mu_in: T, mu_out: T) -> f64 {
    let (mi, mo) = (mu_in.f64(), mu_out.f64());
    let mut e = 0.0;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            for c in 0..image.channels() {
                let v = image.get(x, y, c).f64();
                let d = if mask.get(x, y) { v - mi } else { v - mo };
                e += d * d;
            }
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{disk, outer_normals};

    fn disk_image(w: usize, h: usize, cx: f64, cy: f64, r: f64, fg: f64, bg: f64) -> (RasterImage<f64>, BinaryMask) {
        let m = disk(w, h, cx, cy, r);
        let img = RasterImage::from_fn(w, h, 1, |x, y, _| if m.get(x, y) { fg } else { bg });
        (img, m)
    }

    #[test]
    fn speed_sign_examples() {
        let (mi, mo) = (0.8, 0.2);
        let img = |v: f64| RasterImage::filled(8, 8, 1, v);
        let p = Point2::new(4.0, 4.0);
        assert!((region_speed(&img(mi), p, mi, mo) - (mi - mo).powi(2)).abs() < 1e-12);
        assert!((region_speed(&img(mo), p, mi, mo) + (mi - mo).powi(2)).abs() < 1e-12);
        assert!(region_speed(&img(0.5), p, mi, mo).abs() < 1e-12);
        // Equal means give no motion at all.
        assert_eq!(region_speed(&img(0.3), p, 0.6, 0.6), 0.0);
    }

    #[test]
    fn baseline_field_is_normal() {
        let (img, _) = disk_image(64, 64, 32.0, 32.0, 12.0, 1.0, 0.0);
        let c = Curve::new(
            (0..40)
                .map(|i| {
                    let t = -std::f64::consts::TAU * i as f64 / 40.0;
                    Point2::new(32.0 + 6.0 * t.cos(), 32.0 + 6.0 * t.sin())
                })
                .collect(),
        )
        .unwrap();
        let n = outer_normals(&c);
        let f = baseline_speed(&img, &c, &n, 1.0, 0.0).unwrap();
        for (v, nn) in f.vectors().iter().zip(&n) {
            assert!((v.dot(*nn) - 1.0).abs() < 1e-12);
            assert!(v.cross(*nn).abs() < 1e-12);
        }
        assert!(baseline_speed(&img, &c, &n[..3], 1.0, 0.0).is_err());
    }

    #[test]
    fn means_of_binary_disk() {
        let (img, m) = disk_image(50, 40, 24.0, 20.0, 9.0, 1.0, 0.0);
        assert_eq!(estimate_means(&img, &m).unwrap(), (1.0, 0.0));
        let flat = RasterImage::filled(50, 40, 1, 0.37);
        let (a, b): (f64, f64) = estimate_means(&flat, &m).unwrap();
        assert!((a - 0.37).abs() < 1e-12 && (b - 0.37).abs() < 1e-12);
        assert!(estimate_means(&flat, &BinaryMask::empty(50, 40)).is_err());
        assert!(estimate_means(&flat, &BinaryMask::empty(10, 40)).is_err());
    }

    #[test]
    fn band_matches_brute_force_distance() {
        let (_, m) = disk_image(48, 48, 20.3, 25.1, 10.0, 1.0, 0.0);
        // Encode each pixel's band membership in its intensity.
        let mut inside = Vec::new();
        for y in 0..48 {
            for x in 0..48 {
                if m.get(x, y) {
                    inside.push((x as f64, y as f64));
                }
            }
        }
        let in_band = |x: usize, y: usize| {
            !m.get(x, y) && {
                let d = inside
                    .iter()
                    .map(|&(ix, iy)| ((ix - x as f64).powi(2) + (iy - y as f64).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min);
                d - 0.5 <= MEAN_BAND
            }
        };
        let img = RasterImage::from_fn(48, 48, 1, |x, y, _| {
            if m.get(x, y) {
                0.5
            } else if in_band(x, y) {
                1.0
            } else {
                0.0
            }
        });
        let (mi, mo) = estimate_means(&img, &m).unwrap();
        assert_eq!(mi, 0.5);
        assert_eq!(mo, 1.0);
    }
}
