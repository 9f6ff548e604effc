use rand::Rng;
use serde::{Deserialize, Serialize};

use super::frame::PatchFrame;
use super::patch::{local_target_vector, sample_patch_sized, Patch, PATCH_SIZE};
use crate::error::{Error, Result};
use crate::geometry::{
    iso_contours, signed_distance_map, BinaryMask, Curve, Point2, RasterImage, SignedDistanceMap,
    Vec2,
};
use crate::scalar::Real;

/// Patch with its ground-truth flow in patch-local pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair<T> {
    pub patch: Patch<T>,
    pub target: Vec2<T>,
    /// Image rescale factor the pair was drawn at.
    pub image_scale: f64,
    pub level: i32,
    /// Arc-length index along the level line.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub scales: Vec<f64>,
    pub level_lo: i32,
    pub level_hi: i32,
    /// About `L / spacing_divisor` points per level line of length `L`.
    pub spacing_divisor: f64,
    pub augment: bool,
    pub seed: u64,
    pub patch_size: usize,
    /// Rotation jitter half-range in radians.
    pub max_rotation: f64,
    /// Intensity bias half-range.
    pub max_bias: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 0.75, 0.5],
            level_lo: -15,
            level_hi: 15,
            spacing_divisor: 32.0,
            augment: false,
            seed: 0,
            patch_size: PATCH_SIZE,
            max_rotation: std::f64::consts::FRAC_PI_4,
            max_bias: 0.1,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig(
                "scales must be positive and non-empty".into(),
            ));
        }
        if self.level_lo > self.level_hi {
            return Err(Error::InvalidConfig("level_lo > level_hi".into()));
        }
        if !(self.spacing_divisor > 0.0) || self.patch_size < 2 {
            return Err(Error::InvalidConfig(
                "spacing divisor and patch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Position and unit outer normal at `n` points evenly spaced in arc length.
pub fn arc_length_samples<T: Real>(curve: &Curve<T>, n: usize) -> Vec<(Point2<T>, Vec2<T>)> {
    let total = curve.length();
    let cum = curve.cumulative_lengths();
    let v = curve.vertices();
    let k = v.len();
    let at = |s: T| -> Point2<T> {
        let s = ((s % total) + total) % total;
        let i = cum.partition_point(|&c| c <= s).saturating_sub(1);
        let a = v[i];
        let b = v[(i + 1) % k];
        let seg = a.distance(b);
        let t = if seg > T::zero() {
            (s - cum[i]) / seg
        } else {
            T::zero()
        };
        a + (b - a) * t
    };
    let h = T::one().min(total * T::of(0.05));
    (0..n)
        .map(|j| {
            let s = total * T::of(j as f64 / n as f64);
            let t = at(s + h) - at(s - h);
            let nrm = Vec2::new(-t.y, t.x);
            let len = nrm.norm();
            let nrm = if len > T::zero() {
                nrm * (T::one() / len)
            } else {
                Vec2::new(T::zero(), -T::one())
            };
            (at(s), nrm)
        })
        .collect()
}

/// Training pairs from one annotated image: every integer level line of the
/// signed distance map in `[level_lo, level_hi]`, at every configured scale,
/// with `⌈L / spacing_divisor⌉` normal-aligned patches per line.
///
/// Output order is canonical: scale, level, line, arc-length index.
pub fn generate_training_set<T: Real>(
    image: &RasterImage<T>,
    mask: &BinaryMask,
    cfg: &GenConfig,
    rng: &mut impl Rng,
) -> Result<Vec<TrainingPair<T>>> {
    cfg.validate()?;
    if mask.count() == 0 {
        return Err(Error::EmptyInput("mask has no foreground".into()));
    }
    if image.width() != mask.width() || image.height() != mask.height() {
        return Err(Error::ExtentMismatch(
            image.width(),
            image.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let mut out = Vec::new();
    for &scale in &cfg.scales {
        let (img, m) = if scale == 1.0 {
            (image.clone(), mask.clone())
        } else {
            (image.rescale(scale), mask.rescale(scale))
        };
        // The object can vanish (or fill the frame) at coarse scales.
        let Ok(sdm) = signed_distance_map::<T>(&m) else {
            continue;
        };
        for level in cfg.level_lo..=cfg.level_hi {
            for line in iso_contours(&sdm, T::of(level as f64)) {
                let n = (line.length().f64() / cfg.spacing_divisor).ceil().max(1.0) as usize;
                for (index, (p, normal)) in arc_length_samples(&line, n).into_iter().enumerate() {
                    let frame = PatchFrame::from_normal(p, normal);
                    let Ok(target) = local_target_vector(&sdm, &frame) else {
                        continue;
                    };
                    let mut pair = TrainingPair {
                        patch: sample_patch_sized(&img, &frame, cfg.patch_size),
                        target,
                        image_scale: scale,
                        level,
                        index,
                    };
                    if cfg.augment {
                        pair = augment(&pair, &img, &sdm, cfg, rng)?;
                    }
                    out.push(pair);
                }
            }
        }
    }
    Ok(out)
}

/// Random rotation jitter (re-sampled from the source image) and
/// per-channel intensity bias.
pub fn augment<T: Real>(
    pair: &TrainingPair<T>,
    image: &RasterImage<T>,
    sdm: &SignedDistanceMap<T>,
    cfg: &GenConfig,
    rng: &mut impl Rng,
) -> Result<TrainingPair<T>> {
    let delta = if cfg.max_rotation > 0.0 {
        rng.gen_range(-cfg.max_rotation..cfg.max_rotation)
    } else {
        0.0
    };
    let bias: Vec<T> = (0..image.channels())
        .map(|_| {
            if cfg.max_bias > 0.0 {
                T::of(rng.gen_range(-cfg.max_bias..cfg.max_bias))
            } else {
                T::zero()
            }
        })
        .collect();
    augment_with(pair, image, sdm, T::of(delta), &bias)
}

/// Deterministic core of [`augment`].
pub fn augment_with<T: Real>(
    pair: &TrainingPair<T>,
    image: &RasterImage<T>,
    sdm: &SignedDistanceMap<T>,
    delta: T,
    bias: &[T],
) -> Result<TrainingPair<T>> {
    let frame = pair.patch.frame().rotated(delta);
    let patch = sample_patch_sized(image, &frame, pair.patch.size()).with_bias(bias);
    Ok(TrainingPair {
        patch,
        target: local_target_vector(sdm, &frame)?,
        ..pair.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::disk;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn disk_case(r: f64) -> (RasterImage<f64>, BinaryMask) {
        let m = disk(128, 128, 64., 64., r);
        let img = RasterImage::from_fn(128, 128, 1, |x, y, _| if m.get(x, y) { 0.8 } else { 0.2 });
        (img, m)
    }

    fn single_scale() -> GenConfig {
        GenConfig {
            scales: vec![1.0],
            patch_size: 16,
            ..GenConfig::default()
        }
    }

    #[test]
    fn disk_pair_count_matches_level_line_perimeters() {
        let (img, m) = disk_case(24.0);
        let cfg = single_scale();
        let pairs =
            generate_training_set(&img, &m, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let sdm = signed_distance_map::<f64>(&m).unwrap();
        let zero = &iso_contours(&sdm, 0.0)[0];
        let r0 = zero
            .vertices()
            .iter()
            .map(|p| p.distance(Point2::new(64.0, 64.0)))
            .sum::<f64>()
            / zero.len() as f64;
        let mut expected = 0;
        for level in -15i32..=15 {
            let lines = iso_contours(&sdm, level as f64);
            // Analytic: one circle of radius r0 + level.
            assert_eq!(lines.len(), 1, "level {level}");
            let analytic = std::f64::consts::TAU * (r0 + level as f64);
            // Lines near zero follow the pixel staircase of the mask.
            let tol = if level.abs() >= 3 { 0.05 } else { 0.08 };
            assert!(
                (lines[0].length() / analytic - 1.0).abs() < tol,
                "level {level}: {} vs {analytic}",
                lines[0].length()
            );
            expected += (lines[0].length() / 32.0).ceil() as usize;
        }
        assert_eq!(pairs.len(), expected);
        for p in &pairs {
            assert!(
                (p.target.norm() - (p.level as f64).abs()).abs() <= 1.0,
                "level {} |t| {}",
                p.level,
                p.target.norm()
            );
            assert!(p.target.norm() <= 16.0);
        }
    }

    #[test]
    fn three_scales_roughly_triple() {
        let (img, m) = disk_case(30.0);
        let one =
            generate_training_set(&img, &m, &single_scale(), &mut ChaCha8Rng::seed_from_u64(1))
                .unwrap();
        let cfg = GenConfig {
            patch_size: 16,
            ..GenConfig::default()
        };
        let three =
            generate_training_set(&img, &m, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // Coarser scales have shorter level lines and lose the innermost ones.
        assert!(three.len() > 2 * one.len() && three.len() < 3 * one.len());
        let scales: std::collections::BTreeSet<_> = three
            .iter()
            .map(|p| (p.image_scale * 100.0) as i64)
            .collect();
        assert_eq!(scales.into_iter().collect::<Vec<_>>(), vec![50, 75, 100]);
    }

    #[test]
    fn targets_lead_to_the_boundary() {
        let (img, m) = disk_case(22.0);
        let pairs =
            generate_training_set(&img, &m, &single_scale(), &mut ChaCha8Rng::seed_from_u64(1))
                .unwrap();
        let boundary: Vec<(f64, f64)> = (0..128)
            .flat_map(|y| (0..128).map(move |x| (x, y)))
            .filter(|&(x, y)| {
                m.get(x, y)
                    && (x == 0
                        || !m.get(x - 1, y)
                        || !m.get(x + 1, y)
                        || !m.get(x, y - 1)
                        || !m.get(x, y + 1))
            })
            .map(|(x, y)| (x as f64, y as f64))
            .collect();
        for p in &pairs {
            let end = p.patch.frame().center + p.patch.frame().to_world(p.target);
            let d = boundary
                .iter()
                .map(|&(x, y)| ((x - end.x).powi(2) + (y - end.y).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            // Boundary pixels sit half a pixel inside the zero level set.
            assert!(d <= 1.0 + 0.5, "endpoint {d} px from boundary");
        }
    }

    #[test]
    fn empty_mask_is_an_error() {
        let img = RasterImage::filled(32, 32, 1, 0.5f64);
        let r = generate_training_set(
            &img,
            &BinaryMask::empty(32, 32),
            &single_scale(),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(r, Err(Error::EmptyInput(_))));
    }

    #[test]
    fn generation_is_reproducible() {
        let (img, m) = disk_case(20.0);
        let cfg = GenConfig {
            augment: true,
            ..single_scale()
        };
        let a = generate_training_set(&img, &m, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_training_set(&img, &m, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn augmentation_identity_and_length_preservation() {
        let (img, m) = disk_case(24.0);
        let sdm = signed_distance_map::<f64>(&m).unwrap();
        let pairs =
            generate_training_set(&img, &m, &single_scale(), &mut ChaCha8Rng::seed_from_u64(1))
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = GenConfig::default();
        for p in pairs.iter().step_by(7) {
            let same = augment_with(p, &img, &sdm, 0.0, &[0.0]).unwrap();
            assert_eq!(&same, p);
            let a = augment(p, &img, &sdm, &cfg, &mut rng).unwrap();
            assert!((a.target.norm() - p.target.norm()).abs() <= 1.0);
            assert!(a.patch.samples().iter().all(|s| (0.0..=1.0).contains(s)));
        }
    }

    #[test]
    fn rigid_rotation_gives_matching_pairs() {
        let m = BinaryMask::from_fn(128, 128, |x, y| {
            let dx = (x as f64 - 60.0) / 30.0;
            let dy = (y as f64 - 66.0) / 20.0;
            dx * dx + dy * dy <= 1.0
        });
        let img = RasterImage::from_fn(128, 128, 1, |x, y, _| {
            let base = if m.get(x, y) { 0.7 } else { 0.25 };
            base + 0.05 * ((x + 2 * y) as f64 * 0.3).sin()
        });
        let cfg = single_scale();
        let a = generate_training_set(&img, &m, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (img_r, m_r) = (img.rotate90(), m.rotate90());
        let sdm_r = signed_distance_map::<f64>(&m_r).unwrap();
        let b =
            generate_training_set(&img_r, &m_r, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a.len(), b.len());
        // Re-sample every pair at its rotated counterpart.
        let h = 128.0;
        let mut worst = 0.0f64;
        for pa in &a {
            let f = pa.patch.frame();
            let c = Point2::new(h - 1.0 - f.center.y, f.center.x);
            let fr = PatchFrame::new(c, f.normal_angle + std::f64::consts::FRAC_PI_2, 1.0);
            let pb = sample_patch_sized(&img_r, &fr, cfg.patch_size);
            let tb = local_target_vector(&sdm_r, &fr).unwrap();
            assert!(pa.target.distance(tb) < 1e-6);
            for (x, y) in pa.patch.samples().iter().zip(pb.samples()) {
                worst = worst.max((x - y).abs());
            }
        }
        assert!(worst <= 0.02, "max sample deviation {worst}");
    }
}
