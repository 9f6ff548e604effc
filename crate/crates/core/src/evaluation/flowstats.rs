use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::scalar::Real;
use crate::{Error, Result};

/// Thresholds, in degrees, of the angle table.
pub const ANGLE_THRESHOLDS: [f64; 4] = [5.0, 10.0, 45.0, 90.0];

/// Fraction of predictions whose angle to the truth is strictly below each threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleErrorStats {
    pub below_5: f64,
    pub below_10: f64,
    pub below_45: f64,
    pub below_90: f64,
    pub count: usize,
}

impl AngleErrorStats {
    pub fn fractions(&self) -> [f64; 4] {
        [self.below_5, self.below_10, self.below_45, self.below_90]
    }
}

/// Unsigned angle in degrees; a zero-length prediction counts as 180°.
pub fn angle_error<T: Real>(pred: Vec2<T>, gt: Vec2<T>) -> f64 {
    let (p, g) = (pred.cast::<f64>(), gt.cast::<f64>());
    if p.norm() == 0.0 || g.norm() == 0.0 {
        return 180.0;
    }
    p.cross(g).atan2(p.dot(g)).abs().to_degrees()
}

pub fn angle_stats<T: Real>(pred: &[Vec2<T>], gt: &[Vec2<T>]) -> Result<AngleErrorStats> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("no flow vectors to compare".into()));
    }
    let mut hits = [0usize; 4];
    for (&p, &g) in pred.iter().zip(gt) {
        let a = angle_error(p, g);
        for (h, t) in hits.iter_mut().zip(ANGLE_THRESHOLDS) {
            if a < t {
                *h += 1;
            }
        }
    }
    let n = pred.len() as f64;
    Ok(AngleErrorStats {
        below_5: hits[0] as f64 / n,
        below_10: hits[1] as f64 / n,
        below_45: hits[2] as f64 / n,
        below_90: hits[3] as f64 / n,
        count: pred.len(),
    })
}

/// Histogram of `|pred| - |gt|` with 1 px bins centred on the integers
/// `-range..=range`, plus underflow and overflow tallies.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub range: i32,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

pub const LENGTH_HISTOGRAM_RANGE: i32 = 16;

impl LengthHistogram {
    pub fn new(range: i32) -> Self {
        Self {
            range,
            counts: vec![0; (2 * range + 1) as usize],
            underflow: 0,
            overflow: 0,
        }
    }

    pub fn add(&mut self, err: f64) {
        // Bin b holds [b - 0.5, b + 0.5).
        let b = (err + 0.5).floor();
        if b < -(self.range as f64) || err.is_nan() {
            self.underflow += 1;
        } else if b > self.range as f64 {
            self.overflow += 1;
        } else {
            self.counts[(b as i32 + self.range) as usize] += 1;
        }
    }

    pub fn count_at(&self, bin: i32) -> u64 {
        if bin.abs() > self.range {
            return 0;
        }
        self.counts[(bin + self.range) as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Share of all samples in the bins `lo..=hi`.
    pub fn fraction_within(&self, lo: i32, hi: i32) -> f64 {
        let t = self.total();
        if t == 0 {
            return 0.0;
        }
        (lo..=hi).map(|b| self.count_at(b)).sum::<u64>() as f64 / t as f64
    }

    /// `bin_center,count` rows; the tails are written as `underflow` and `overflow`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "bin_center,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{}", i as i32 - self.range, c)?;
        }
        writeln!(out, "underflow,{}", self.underflow)?;
        writeln!(out, "overflow,{}", self.overflow)
    }
}

pub fn signed_length_error<T: Real>(pred: &[Vec2<T>], gt: &[Vec2<T>]) -> Result<LengthHistogram> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    let mut h = LengthHistogram::new(LENGTH_HISTOGRAM_RANGE);
    for (p, g) in pred.iter().zip(gt) {
        h.add(p.norm().f64() - g.norm().f64());
    }
    Ok(h)
}
