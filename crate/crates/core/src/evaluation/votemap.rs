use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, RasterImage, Vec2};
use crate::neuralflow::ConvNet;
use crate::patchdata::{sample_patch_sized, PatchFrame};
use crate::scalar::Real;
use crate::{Error, Result};

/// Per-pixel tally of predicted boundary endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteMap {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u32>,
    /// Grid positions evaluated (each casts four votes).
    pub visited: u64,
    /// Votes whose endpoint fell outside the image.
    pub out_of_image: u64,
}

impl VoteMap {
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.counts[y * self.width + x]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn max(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Brightness `ln(1 + c) / ln(1 + max)`; more votes are lighter.
    pub fn to_log_image(&self) -> RasterImage<f32> {
        let denom = (1.0 + self.max() as f32).ln().max(f32::MIN_POSITIVE);
        RasterImage::from_fn(self.width, self.height, 1, |x, y, _| (1.0 + self.get(x, y) as f32).ln() / denom)
    }

    /// `x,y,count` rows for every pixel with at least one vote.
    pub fn write_counts_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "x,y,count")?;
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.get(x, y);
                if c > 0 {
                    writeln!(out, "{x},{y},{c}")?;
                }
            }
        }
        writeln!(out, "# visited={} out_of_image={}", self.visited, self.out_of_image)
    }
}

/// Normal angles of the four cardinal patch orientations.
pub fn cardinal_angles<T: Real>() -> [T; 4] {
    let h = T::FRAC_PI_2();
    [T::zero(), h, h + h, -h]
}

/// Nearest integer, ties toward negative infinity.
fn round_half_down(v: f64) -> f64 {
    (v - 0.5).ceil()
}

/// Votes from every `stride`-spaced pixel in four orientations.
pub fn vote_map<T: Real>(image: &RasterImage<T>, net: &ConvNet<T>, stride: usize) -> Result<VoteMap> {
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be at least 1".into()));
    }
    if image.channels() != net.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: net.in_channels(),
            actual: image.channels(),
        });
    }
    let (w, h) = (image.width(), image.height());
    let mut map = VoteMap {
        width: w,
        height: h,
        counts: vec![0; w * h],
        visited: 0,
        out_of_image: 0,
    };
    let angles = cardinal_angles::<T>();
    let net_size = net.shape().input_size;
    for y in (0..h).step_by(stride) {
        let mut frames = Vec::new();
        for x in (0..w).step_by(stride) {
            let c = Point2::new(T::of(x as f64), T::of(y as f64));
            frames.extend(angles.iter().map(|&a| PatchFrame::new(c, a, T::one())));
            map.visited += 1;
        }
        for frames in frames.chunks(256) {
            let patches: Vec<_> = frames.iter().map(|f| sample_patch_sized(image, f, net_size)).collect();
            let preds = net.forward_patches(&patches)?;
            for (f, v) in frames.iter().zip(preds) {
                let end = f.center + f.to_world(Vec2::new(v[0], v[1]));
                let ex = round_half_down(end.x.f64());
                let ey = round_half_down(end.y.f64());
                if ex >= 0.0 && ey >= 0.0 && ex < w as f64 && ey < h as f64 {
                    map.counts[ey as usize * w + ex as usize] += 1;
                } else {
                    map.out_of_image += 1;
                }
            }
        }
    }
    Ok(map)
}
