use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::flowengine::{evolve, EvolutionConfig, FlowPredictor, Termination};
use crate::geometry::{iso_contours, rasterize, signed_distance_map, BinaryMask, Curve, RasterImage};
use crate::scalar::Real;
use crate::{Error, Result};

use super::metrics::{confusion, metrics, summarize, ConfusionCounts, Metric, MetricSummary, MetricsReport};
use super::perturb::perturb_init;

/// An image with its ground-truth mask.
#[derive(Clone, Debug)]
pub struct Case<T> {
    pub name: String,
    pub image: RasterImage<T>,
    pub mask: BinaryMask,
}

/// Something that yields a flow predictor for a test case, e.g. a trained
/// network or a per-case baseline fitted to the ground truth.
pub trait CaseModel<T: Real> {
    fn predictor(&self, case: &Case<T>) -> Result<Box<dyn FlowPredictor<T>>>;
}

impl<T: Real, F> CaseModel<T> for F
where
    F: Fn(&Case<T>) -> Result<Box<dyn FlowPredictor<T>>>,
{
    fn predictor(&self, case: &Case<T>) -> Result<Box<dyn FlowPredictor<T>>> {
        self(case)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossvalConfig {
    pub folds: usize,
    pub inits_per_image: usize,
    pub seed: u64,
    pub evolution: EvolutionConfig,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self {
            folds: 3,
            inits_per_image: 10,
            seed: 0,
            evolution: EvolutionConfig::default(),
        }
    }
}

/// Outcome of one evolution from one perturbed start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub case: usize,
    pub name: String,
    pub fold: usize,
    pub init: usize,
    pub r1: f64,
    pub r2: f64,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub confusion: Option<ConfusionCounts>,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

/// Mean/median per metric over a set of runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    /// Runs that produced no segmentation at all.
    pub failures: usize,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl Aggregate {
    pub fn from_runs<'a>(runs: impl IntoIterator<Item = &'a RunRecord>) -> Self {
        let runs: Vec<&RunRecord> = runs.into_iter().collect();
        let scored: Vec<&MetricsReport> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let metrics = Metric::ALL
            .iter()
            .map(|&m| (m.label().to_string(), summarize(scored.iter().map(|r| r.get(m)))))
            .collect();
        Self {
            runs: runs.len(),
            failures: runs.len() - scored.len(),
            metrics,
        }
    }

    pub fn summary(&self, m: Metric) -> MetricSummary {
        self.metrics.get(m.label()).copied().unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub training_error: Option<String>,
    pub aggregate: Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub folds: Vec<FoldReport>,
    pub overall: Aggregate,
    pub runs: Vec<RunRecord>,
}

/// Shuffled split of `0..n` into `folds` parts whose sizes differ by at most one.
pub fn partition(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds == 0 || n < folds {
        return Err(Error::InvalidConfig(format!("cannot split {n} items into {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut part = idx[start..start + len].to_vec();
        part.sort_unstable();
        out.push(part);
        start += len;
    }
    Ok(out)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one `(case, init)` run, independent of evaluation order.
pub fn run_seed(master: u64, case: usize, init: usize) -> u64 {
    splitmix(splitmix(master ^ splitmix(case as u64)) ^ init as u64)
}

/// Longest zero level line of the mask's signed distance map.
pub fn mask_boundary<T: Real>(mask: &BinaryMask) -> Result<Curve<T>> {
    let sdm = signed_distance_map::<T>(mask)?;
    iso_contours(&sdm, T::zero())
        .into_iter()
        .max_by(|a, b| a.length().f64().total_cmp(&b.length().f64()))
        .ok_or(Error::NoBoundary)
}

/// Evolves from `inits` perturbed ground-truth contours and scores each result.
///
/// A collapsed contour counts as an empty segmentation; any other failure is
/// recorded without metrics.
pub fn evaluate_case<T: Real, P: FlowPredictor<T> + ?Sized>(
    index: usize,
    fold: usize,
    case: &Case<T>,
    predictor: &P,
    cfg: &CrossvalConfig,
) -> Vec<RunRecord> {
    let boundary = mask_boundary::<T>(&case.mask);
    (0..cfg.inits_per_image)
        .map(|init| {
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(cfg.seed, index, init));
            let (r1, r2) = (rng.gen::<f64>(), rng.gen::<f64>());
            let mut rec = RunRecord {
                case: index,
                name: case.name.clone(),
                fold,
                init,
                r1,
                r2,
                iterations: 0,
                termination: None,
                confusion: None,
                metrics: None,
                error: None,
            };
            let start = match &boundary {
                Ok(b) => perturb_init(b, r1, r2).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            let start = match start {
                Ok(c) => c,
                Err(e) => {
                    rec.error = Some(e);
                    return rec;
                }
            };
            let (w, h) = (case.mask.width(), case.mask.height());
            let pred = match evolve(&case.image, &start, predictor, &cfg.evolution) {
                Ok((curve, trace)) => {
                    rec.iterations = trace.steps.len();
                    rec.termination = trace.termination;
                    rasterize(&curve, w, h)
                }
                Err(e) if matches!(e.error, Error::CurveCollapse { .. }) => {
                    rec.iterations = e.trace.steps.len();
                    rec.termination = e.trace.termination;
                    rec.error = Some(e.error.to_string());
                    BinaryMask::empty(w, h)
                }
                Err(e) => {
                    rec.iterations = e.trace.steps.len();
                    rec.error = Some(e.error.to_string());
                    return rec;
                }
            };
            match confusion(&pred, &case.mask) {
                Ok(c) => {
                    rec.confusion = Some(c);
                    rec.metrics = Some(metrics(&c));
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

/// Scores `model` on the listed cases.
pub fn evaluate_model<T: Real, M: CaseModel<T> + ?Sized>(
    cases: &[Case<T>],
    indices: &[usize],
    fold: usize,
    model: &M,
    cfg: &CrossvalConfig,
) -> Vec<RunRecord> {
    let mut runs = Vec::new();
    for &i in indices {
        match model.predictor(&cases[i]) {
            Ok(p) => runs.extend(evaluate_case(i, fold, &cases[i], &*p, cfg)),
            Err(e) => runs.extend(failed_runs(i, fold, &cases[i], cfg, &e)),
        }
    }
    runs
}

fn failed_runs<T>(index: usize, fold: usize, case: &Case<T>, cfg: &CrossvalConfig, e: &Error) -> Vec<RunRecord> {
    (0..cfg.inits_per_image)
        .map(|init| RunRecord {
            case: index,
            name: case.name.clone(),
            fold,
            init,
            r1: f64::NAN,
            r2: f64::NAN,
            iterations: 0,
            termination: None,
            confusion: None,
            metrics: None,
            error: Some(e.to_string()),
        })
        .collect()
}

/// K-fold protocol: `train` is called once per fold with the other folds'
/// cases and the resulting model is scored on the held-out fold.
pub fn crossval<T, M, F>(cases: &[Case<T>], cfg: &CrossvalConfig, mut train: F) -> Result<CrossvalReport>
where
    T: Real,
    M: CaseModel<T>,
    F: FnMut(usize, &[&Case<T>]) -> Result<M>,
{
    cfg.evolution.validate()?;
    let parts = partition(cases.len(), cfg.folds, cfg.seed)?;
    let mut folds = Vec::with_capacity(parts.len());
    let mut runs = Vec::new();
    for (f, test) in parts.iter().enumerate() {
        let train_idx: Vec<usize> = (0..cases.len()).filter(|i| !test.contains(i)).collect();
        let train_cases: Vec<&Case<T>> = train_idx.iter().map(|&i| &cases[i]).collect();
        let (fold_runs, training_error) = match train(f, &train_cases) {
            Ok(model) => (evaluate_model(cases, test, f, &model, cfg), None),
            Err(e) => (
                test.iter().flat_map(|&i| failed_runs(i, f, &cases[i], cfg, &e)).collect(),
                Some(e.to_string()),
            ),
        };
        folds.push(FoldReport {
            fold: f,
            train: train_idx,
            test: test.clone(),
            training_error,
            aggregate: Aggregate::from_runs(&fold_runs),
        });
        runs.extend(fold_runs);
    }
    Ok(CrossvalReport {
        folds,
        overall: Aggregate::from_runs(&runs),
        runs,
    })
}
