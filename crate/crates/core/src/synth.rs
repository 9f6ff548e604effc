//! Synthetic corpus: textured ellipses and rounded polygons on textured
//! backgrounds, with intensity ramps and additive noise.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::evaluation::Case;
use crate::geometry::{BinaryMask, RasterImage};
use crate::scalar::Real;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    /// Range of the shape's mean radius, px.
    pub min_radius: f64,
    pub max_radius: f64,
    /// Minimum gap between the shape and the image border, px.
    pub margin: f64,
    /// Minimum foreground/background contrast.
    pub min_contrast: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise: f64,
    /// Amplitude of the sinusoidal textures.
    pub texture: f64,
    /// Peak-to-peak amplitude of the linear intensity ramp.
    pub ramp: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            channels: 1,
            min_radius: 15.0,
            max_radius: 40.0,
            margin: 6.0,
            min_contrast: 0.25,
            noise: 0.04,
            texture: 0.06,
            ramp: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.channels != 1 && self.channels != 3 {
            return bad("channels must be 1 or 3");
        }
        if !(self.min_radius >= 2.0 && self.max_radius >= self.min_radius) {
            return bad("radius range must satisfy 2 <= min_radius <= max_radius");
        }
        let room = (self.width.min(self.height) as f64) / 2.0 - self.margin;
        if self.max_radius * 1.3 > room {
            return bad("image too small for max_radius and margin");
        }
        if !(0.0..=0.8).contains(&self.min_contrast) || self.noise < 0.0 || self.texture < 0.0 || self.ramp < 0.0 {
            return bad("contrast, noise, texture and ramp must be non-negative (contrast at most 0.8)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Ellipse,
    RoundedPolygon,
}

/// Region membership of a shape.
enum Shape {
    Ellipse { cx: f64, cy: f64, a: f64, b: f64, angle: f64 },
    Rounded { vertices: Vec<(f64, f64)>, rounding: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Ellipse { cx, cy, a, b, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            }
            Shape::Rounded { vertices, rounding } => {
                point_in_polygon(vertices, x, y) || polygon_distance(vertices, x, y) <= *rounding
            }
        }
    }
}

fn point_in_polygon(v: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = v.len();
    for i in 0..n {
        let (xi, yi) = v[i];
        let (xj, yj) = v[(i + n - 1) % n];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
    }
    inside
}

fn polygon_distance(v: &[(f64, f64)], x: f64, y: f64) -> f64 {
    let n = v.len();
    (0..n)
        .map(|i| {
            let (ax, ay) = v[i];
            let (bx, by) = v[(i + 1) % n];
            let (ex, ey) = (bx - ax, by - ay);
            let t = (((x - ax) * ex + (y - ay) * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
            ((x - ax - t * ex).powi(2) + (y - ay - t * ey).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

fn random_shape(rng: &mut impl Rng, cfg: &SynthConfig, kind: ShapeKind) -> Shape {
    let r = rng.gen_range(cfg.min_radius..=cfg.max_radius);
    // Leave room for the shape's largest extent (1.3 r).
    let reach = 1.3 * r + cfg.margin;
    let cx = rng.gen_range(reach..=(cfg.width as f64 - reach).max(reach));
    let cy = rng.gen_range(reach..=(cfg.height as f64 - reach).max(reach));
    match kind {
        ShapeKind::Ellipse => {
            let ratio: f64 = rng.gen_range(0.6..=1.0);
            Shape::Ellipse {
                cx,
                cy,
                a: r * 1.3f64.min(1.0 / ratio.sqrt()),
                b: r * ratio.sqrt(),
                angle: rng.gen_range(0.0..PI),
            }
        }
        ShapeKind::RoundedPolygon => {
            let n = rng.gen_range(3..=7);
            let rounding = rng.gen_range(0.15..=0.35) * r;
            let phase = rng.gen_range(0.0..TAU);
            let vertices = (0..n)
                .map(|i| {
                    let t = phase + TAU * (i as f64 + rng.gen_range(-0.25..=0.25)) / n as f64;
                    let rr = (r - rounding) * rng.gen_range(0.8..=1.2);
                    (cx + rr * t.cos(), cy + rr * t.sin())
                })
                .collect();
            Shape::Rounded { vertices, rounding }
        }
    }
}

/// Smooth texture: a sum of two random plane waves.
struct Texture {
    waves: [(f64, f64, f64); 2],
    amp: f64,
}

impl Texture {
    fn random(rng: &mut impl Rng, amp: f64) -> Self {
        let mut wave = || {
            let dir = rng.gen_range(0.0..TAU);
            let freq = rng.gen_range(0.05..0.6);
            (freq * dir.cos(), freq * dir.sin(), rng.gen_range(0.0..TAU))
        };
        Self {
            waves: [wave(), wave()],
            amp,
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.amp * 0.5 * self.waves.iter().map(|(kx, ky, p)| (kx * x + ky * y + p).sin()).sum::<f64>()
    }
}

/// One image and its mask.
pub fn synth_case<T: Real>(cfg: &SynthConfig, kind: ShapeKind, rng: &mut impl Rng) -> Result<(RasterImage<T>, BinaryMask)> {
    cfg.validate()?;
    let shape = random_shape(rng, cfg, kind);
    let (w, h) = (cfg.width, cfg.height);
    let mask = BinaryMask::from_fn(w, h, |x, y| shape.contains(x as f64, y as f64));
    if mask.count() == 0 {
        return Err(Error::EmptyInput("generated shape covers no pixel".into()));
    }
    let lo = 0.15 + 0.5 * cfg.texture;
    let hi = 0.85 - 0.5 * cfg.texture;
    let (mut fg, mut bg);
    loop {
        fg = rng.gen_range(lo..=hi);
        bg = rng.gen_range(lo..=hi);
        if (fg - bg).abs() >= cfg.min_contrast {
            break;
        }
    }
    let tint: Vec<(f64, f64)> = (0..cfg.channels)
        .map(|_| {
            if cfg.channels == 1 {
                (0.0, 0.0)
            } else {
                (rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08))
            }
        })
        .collect();
    let tex_in = Texture::random(rng, cfg.texture);
    let tex_out = Texture::random(rng, cfg.texture);
    let ramp_dir = rng.gen_range(0.0..TAU);
    let (rx, ry) = (ramp_dir.cos(), ramp_dir.sin());
    let span = (w.max(h)) as f64;
    let noise = Normal::new(0.0, cfg.noise.max(1e-12)).expect("finite sigma");
    let mut data = Vec::with_capacity(w * h * cfg.channels);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let ramp = cfg.ramp * ((xf - w as f64 / 2.0) * rx + (yf - h as f64 / 2.0) * ry) / span;
            let inside = mask.get(x, y);
            for &(ti, to) in &tint {
                let base = if inside { fg + ti + tex_in.at(xf, yf) } else { bg + to + tex_out.at(xf, yf) };
                let n = if cfg.noise > 0.0 { noise.sample(rng) } else { 0.0 };
                data.push(T::of((base + ramp + n).clamp(0.0, 1.0)));
            }
        }
    }
    Ok((RasterImage::new(w, h, cfg.channels, data)?, mask))
}

/// `n` cases alternating ellipses and rounded polygons, seeded.
pub fn synth_corpus<T: Real>(cfg: &SynthConfig, n: usize, seed: u64) -> Result<Vec<Case<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let kind = if i % 2 == 0 { ShapeKind::Ellipse } else { ShapeKind::RoundedPolygon };
            let (image, mask) = synth_case(cfg, kind, &mut rng)?;
            Ok(Case {
                name: format!("synth_{i:04}"),
                image,
                mask,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::signed_distance_map;

    #[test]
    fn corpus_is_reproducible_and_valid() {
        let cfg = SynthConfig::default();
        let a = synth_corpus::<f32>(&cfg, 6, 3).unwrap();
        let b = synth_corpus::<f32>(&cfg, 6, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.mask, y.mask);
        }
        let c = synth_corpus::<f32>(&cfg, 6, 4).unwrap();
        assert_ne!(a[0].image, c[0].image);
        for case in &a {
            let n = case.mask.count();
            assert!(n > 500, "{} px", n);
            // Closed shape away from the border.
            for x in 0..cfg.width {
                assert!(!case.mask.get(x, 0) && !case.mask.get(x, cfg.height - 1));
            }
            for y in 0..cfg.height {
                assert!(!case.mask.get(0, y) && !case.mask.get(cfg.width - 1, y));
            }
            assert!(signed_distance_map::<f32>(&case.mask).is_ok());
        }
    }

    #[test]
    fn foreground_and_background_differ() {
        let cfg = SynthConfig {
            noise: 0.0,
            ..Default::default()
        };
        for case in synth_corpus::<f64>(&cfg, 8, 11).unwrap() {
            let (mut si, mut ni, mut so, mut no) = (0.0, 0.0, 0.0, 0.0);
            for y in 0..cfg.height {
                for x in 0..cfg.width {
                    let v = case.image.get(x, y, 0);
                    if case.mask.get(x, y) {
                        si += v;
                        ni += 1.0;
                    } else {
                        so += v;
                        no += 1.0;
                    }
                }
            }
            assert!((si / ni - so / no).abs() > 0.15, "{}", case.name);
        }
    }

    #[test]
    fn rgb_and_validation() {
        let cfg = SynthConfig {
            channels: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (img, _) = synth_case::<f32>(&cfg, ShapeKind::RoundedPolygon, &mut rng).unwrap();
        assert_eq!(img.channels(), 3);
        assert!(SynthConfig { channels: 2, ..Default::default() }.validate().is_err());
        assert!(SynthConfig { width: 64, ..Default::default() }.validate().is_err());
    }
}
