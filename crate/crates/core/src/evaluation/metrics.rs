use serde::{Deserialize, Serialize};

use crate::geometry::BinaryMask;
use crate::Result;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Pixelwise counts of `pred` against `gt`.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    pred.same_extent(gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.bits().iter().zip(gt.bits()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Region scores. `None` marks a 0/0 ratio.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Sensitivity.
    pub p: Option<f64>,
    /// Specificity.
    pub q: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    /// Jaccard index.
    pub j: Option<f64>,
    /// Dice score.
    pub d: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    P,
    Q,
    Ppv,
    Npv,
    J,
    D,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::P, Metric::Q, Metric::Ppv, Metric::Npv, Metric::J, Metric::D];

    pub fn label(self) -> &'static str {
        match self {
            Metric::P => "p",
            Metric::Q => "q",
            Metric::Ppv => "PPV",
            Metric::Npv => "NPV",
            Metric::J => "J",
            Metric::D => "D",
        }
    }
}

impl MetricsReport {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::P => self.p,
            Metric::Q => self.q,
            Metric::Ppv => self.ppv,
            Metric::Npv => self.npv,
            Metric::J => self.j,
            Metric::D => self.d,
        }
    }

    pub fn set(&mut self, m: Metric, v: Option<f64>) {
        match m {
            Metric::P => self.p = v,
            Metric::Q => self.q = v,
            Metric::Ppv => self.ppv = v,
            Metric::Npv => self.npv = v,
            Metric::J => self.j = v,
            Metric::D => self.d = v,
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> MetricsReport {
    MetricsReport {
        p: ratio(c.tp, c.tp + c.fn_),
        q: ratio(c.tn, c.tn + c.fp),
        ppv: ratio(c.tp, c.tp + c.fp),
        npv: ratio(c.tn, c.tn + c.fn_),
        j: ratio(c.tp, c.tp + c.fp + c.fn_),
        d: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
    }
}

/// Mean and median over the defined values, plus how many were undefined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub count: usize,
    pub excluded: usize,
}

pub fn summarize(values: impl IntoIterator<Item = Option<f64>>) -> MetricSummary {
    let mut defined = Vec::new();
    let mut excluded = 0;
    for v in values {
        match v {
            Some(x) => defined.push(x),
            None => excluded += 1,
        }
    }
    if defined.is_empty() {
        return MetricSummary {
            excluded,
            ..Default::default()
        };
    }
    defined.sort_by(f64::total_cmp);
    let n = defined.len();
    let median = if n % 2 == 1 {
        defined[n / 2]
    } else {
        0.5 * (defined[n / 2 - 1] + defined[n / 2])
    };
    MetricSummary {
        mean: Some(defined.iter().sum::<f64>() / n as f64),
        median: Some(median),
        count: n,
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::Error;

    #[test]
    fn identical_masks() {
        let m = BinaryMask::from_fn(10, 8, |x, y| x > 3 && y < 5);
        let c = confusion(&m, &m).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        assert_eq!(c.total(), 80);
        let r = metrics(&c);
        for m in Metric::ALL {
            assert_eq!(r.get(m), Some(1.0));
        }
    }

    #[test]
    fn empty_prediction() {
        let gt = BinaryMask::from_fn(10, 10, |x, y| x < 4 && y < 10);
        let c = confusion(&BinaryMask::empty(10, 10), &gt).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 0, fn_: 40, tn: 60 });
        let r = metrics(&c);
        assert_eq!(r.ppv, None);
        assert_eq!(r.d, Some(0.0));
        assert!(matches!(confusion(&gt, &BinaryMask::empty(9, 10)), Err(Error::ExtentMismatch(..))));
    }

    #[test]
    fn worked_example() {
        let r = metrics(&ConfusionCounts { tp: 50, fp: 0, fn_: 50, tn: 100 });
        assert_eq!(r.p, Some(0.5));
        assert_eq!(r.ppv, Some(1.0));
        assert_eq!(r.j, Some(0.5));
        assert!((r.d.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn all_negative_is_undefined_not_zero() {
        let r = metrics(&ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 9 });
        assert_eq!((r.p, r.ppv, r.j, r.d), (None, None, None, None));
        assert_eq!(r.q, Some(1.0));
        let json = serde_json::to_value(r).unwrap();
        assert!(json["d"].is_null());
    }

    #[test]
    fn matches_pixel_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let a: Vec<bool> = (0..256).map(|_| rng.gen()).collect();
            let b: Vec<bool> = (0..256).map(|_| rng.gen_bool(0.3)).collect();
            let c = confusion(
                &BinaryMask::new(16, 16, a.clone()).unwrap(),
                &BinaryMask::new(16, 16, b.clone()).unwrap(),
            )
            .unwrap();
            let count = |pa: bool, pb: bool| a.iter().zip(&b).filter(|(x, y)| **x == pa && **y == pb).count() as u64;
            assert_eq!(c, ConfusionCounts { tp: count(true, true), fp: count(true, false), fn_: count(false, true), tn: count(false, false) });
        }
    }

    #[test]
    fn summary_excludes_undefined() {
        let s = summarize([Some(0.9), None, Some(0.5), Some(0.7), None]);
        assert_eq!(s.count, 3);
        assert_eq!(s.excluded, 2);
        assert_eq!(s.median, Some(0.7));
        assert!((s.mean.unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(summarize([Some(1.0), Some(2.0)]).median, Some(1.5));
        assert_eq!(summarize([None]).mean, None);
    }

    proptest! {
        #[test]
        fn dice_jaccard_identity(tp in 0u64..10_000, fp in 0u64..10_000, fn_ in 0u64..10_000, tn in 0u64..10_000) {
            let r = metrics(&ConfusionCounts { tp, fp, fn_, tn });
            if let (Some(j), Some(d)) = (r.j, r.d) {
                prop_assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
                prop_assert!((j - tp as f64 / (tp + fp + fn_) as f64).abs() < 1e-15);
            } else {
                prop_assert_eq!(tp + fp + fn_, 0);
            }
            for m in Metric::ALL {
                if let Some(v) = r.get(m) {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
