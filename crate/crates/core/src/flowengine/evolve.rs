use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::geometry::{outer_normals, resample_uniform, Curve, Point2, RasterImage};
use crate::scalar::Real;
use crate::{Error, Result};

use super::kernel::regularize_flow;
use super::predictor::FlowPredictor;
use super::FlowField;

/// Curves shorter than this (px), or turned inside out, are treated as collapsed.
pub const COLLAPSE_LENGTH: f64 = 4.0;

/// Arc length handed to the kernel. The contour is parametrized over
/// `[0, 1)`, which keeps the low-mode gain independent of object size.
pub const KERNEL_LENGTH: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Maximum number of iterations `N`.
    pub iterations: usize,
    /// Step size `τ` in px.
    pub step_size: f64,
    /// Contour points `K`.
    pub points: usize,
    pub beta: f64,
    /// Mean displacement (px) below which the evolution stops.
    pub epsilon: f64,
    pub resample_every: usize,
    /// Apply the smoothing kernel to the raw flow.
    pub regularize: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            step_size: 0.5,
            points: 100,
            beta: 0.01,
            epsilon: 0.05,
            resample_every: 1,
            regularize: true,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if self.points < 8 {
            return bad("points must be at least 8");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be non-negative");
        }
        if self.resample_every == 0 {
            return bad("resample_every must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Collapsed,
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<T> {
    /// 1-based iteration index.
    pub iteration: usize,
    /// Contour after advection and resampling.
    pub curve: Vec<Point2<T>>,
    pub raw_flow: FlowField<T>,
    pub regularized_flow: FlowField<T>,
    /// Mean vertex displacement of this iteration, px.
    pub displacement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace<T> {
    /// Initial contour after resampling to `K` points.
    pub initial: Vec<Point2<T>>,
    pub steps: Vec<StepRecord<T>>,
    pub termination: Option<Termination>,
}

impl<T: Real> EvolutionTrace<T> {
    pub fn displacements(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.displacement).collect()
    }
}

/// Evolution failure with everything recorded up to that point.
#[derive(Debug)]
pub struct EvolveError<T> {
    pub error: Error,
    pub trace: EvolutionTrace<T>,
}

impl<T> fmt::Display for EvolveError<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl<T: fmt::Debug> std::error::Error for EvolveError<T> {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// True iff the mean vertex displacement from `prev` to `next` is below `epsilon`.
pub fn converged<T: Real>(prev: &Curve<T>, next: &Curve<T>, epsilon: f64) -> Result<bool> {
    Ok(mean_displacement(prev.vertices(), next.vertices())? < epsilon)
}

fn mean_displacement<T: Real>(a: &[Point2<T>], b: &[Point2<T>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(b).map(|(p, q)| p.distance(*q).f64()).sum();
    Ok(sum / a.len() as f64)
}

/// Resumable evolution state; one call to [`Evolution::step`] is one iteration.
#[derive(Clone, Debug)]
pub struct Evolution<T> {
    cfg: EvolutionConfig,
    curve: Curve<T>,
    trace: EvolutionTrace<T>,
}

impl<T: Real> Evolution<T> {
    pub fn new(init: &Curve<T>, cfg: EvolutionConfig) -> Result<Self> {
        cfg.validate()?;
        let curve = resample_uniform(init, cfg.points)?;
        let trace = EvolutionTrace {
            initial: curve.vertices().to_vec(),
            steps: Vec::new(),
            termination: if cfg.iterations == 0 {
                Some(Termination::MaxIterations)
            } else {
                None
            },
        };
        Ok(Self { cfg, curve, trace })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    pub fn curve(&self) -> &Curve<T> {
        &self.curve
    }

    pub fn trace(&self) -> &EvolutionTrace<T> {
        &self.trace
    }

    pub fn iteration(&self) -> usize {
        self.trace.steps.len()
    }

    /// Set once the evolution converged, ran out of iterations or collapsed.
    pub fn termination(&self) -> Option<Termination> {
        self.trace.termination
    }

    pub fn is_finished(&self) -> bool {
        self.trace.termination.is_some()
    }

    pub fn into_parts(self) -> (Curve<T>, EvolutionTrace<T>) {
        (self.curve, self.trace)
    }

    /// Runs one iteration. Returns `None` when the evolution already finished.
    pub fn step<P>(&mut self, image: &RasterImage<T>, predictor: &P) -> Result<Option<&StepRecord<T>>>
    where
        P: FlowPredictor<T> + ?Sized,
    {
        if self.is_finished() {
            return Ok(None);
        }
        let iteration = self.iteration() + 1;
        let normals = outer_normals(&self.curve);
        let raw = predictor.predict(image, &self.curve, &normals)?;
        if raw.len() != self.curve.len() {
            return Err(Error::LengthMismatch(self.curve.len(), raw.len()));
        }
        let regularized = if self.cfg.regularize {
            regularize_flow(&raw, KERNEL_LENGTH, self.cfg.beta)
        } else {
            raw.clone()
        };
        let tau = T::of(self.cfg.step_size);
        let advected: Vec<Point2<T>> = self
            .curve
            .vertices()
            .iter()
            .zip(regularized.vectors())
            .zip(&normals)
            .map(|((&c, &v), &n)| c + n * (tau * v.dot(n)))
            .collect();
        let displacement = mean_displacement(self.curve.vertices(), &advected)?;
        let moved = Curve::from_raw(advected);
        let length = moved.length().f64();
        // A contour that shrank through itself comes out turned inside out.
        let inverted = !(moved.signed_area() < T::zero());
        if !(length >= COLLAPSE_LENGTH) || inverted {
            self.trace.termination = Some(Termination::Collapsed);
            return Err(Error::CurveCollapse { iteration, length });
        }
        // A curve that did not move keeps its vertices; re-resampling a
        // polygon is not idempotent and would drift.
        let still = moved.vertices() == self.curve.vertices();
        let next = if iteration % self.cfg.resample_every == 0 && !still {
            resample_uniform(&moved, self.cfg.points)?
        } else {
            moved
        };
        self.curve = next;
        self.trace.steps.push(StepRecord {
            iteration,
            curve: self.curve.vertices().to_vec(),
            raw_flow: raw,
            regularized_flow: regularized,
            displacement,
        });
        if displacement < self.cfg.epsilon {
            self.trace.termination = Some(Termination::Converged);
        } else if iteration >= self.cfg.iterations {
            self.trace.termination = Some(Termination::MaxIterations);
        }
        Ok(self.trace.steps.last())
    }

    /// Steps until finished, `max_steps` iterations were taken, or `cancel`
    /// is raised. Cancellation is polled between iterations and is not terminal.
    pub fn run<P>(
        &mut self,
        image: &RasterImage<T>,
        predictor: &P,
        max_steps: usize,
        cancel: Option<&AtomicBool>,
    ) -> Result<Option<Termination>>
    where
        P: FlowPredictor<T> + ?Sized,
    {
        for _ in 0..max_steps {
            if cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
                return Ok(Some(Termination::Cancelled));
            }
            if self.step(image, predictor)?.is_none() {
                break;
            }
            if self.is_finished() {
                break;
            }
        }
        Ok(self.termination())
    }
}

/// Evolves `init` until convergence or `cfg.iterations` iterations.
pub fn evolve<T, P>(
    image: &RasterImage<T>,
    init: &Curve<T>,
    predictor: &P,
    cfg: &EvolutionConfig,
) -> std::result::Result<(Curve<T>, EvolutionTrace<T>), EvolveError<T>>
where
    T: Real,
    P: FlowPredictor<T> + ?Sized,
{
    evolve_cancellable(image, init, predictor, cfg, None)
}

pub fn evolve_cancellable<T, P>(
    image: &RasterImage<T>,
    init: &Curve<T>,
    predictor: &P,
    cfg: &EvolutionConfig,
    cancel: Option<&AtomicBool>,
) -> std::result::Result<(Curve<T>, EvolutionTrace<T>), EvolveError<T>>
where
    T: Real,
    P: FlowPredictor<T> + ?Sized,
{
    let empty = || EvolutionTrace {
        initial: Vec::new(),
        steps: Vec::new(),
        termination: None,
    };
    if let Some(expected) = predictor.channels() {
        if expected != image.channels() {
            return Err(EvolveError {
                error: Error::ChannelMismatch {
                    expected,
                    actual: image.channels(),
                },
                trace: empty(),
            });
        }
    }
    let mut state = Evolution::new(init, cfg.clone()).map_err(|error| EvolveError { error, trace: empty() })?;
    match state.run(image, predictor, usize::MAX, cancel) {
        Ok(t) => {
            let (curve, mut trace) = state.into_parts();
            if t == Some(Termination::Cancelled) {
                trace.termination = t;
            }
            Ok((curve, trace))
        }
        Err(error) => Err(EvolveError {
            error,
            trace: state.into_parts().1,
        }),
    }
}
