//! Contour evolution driven by a predicted flow field.

mod baseline;
mod evolve;
mod field;
mod kernel;
mod predictor;


pub use baseline::{baseline_speed, estimate_means, region_energy, region_speed, MEAN_BAND};
pub use evolve::{
    converged, evolve, evolve_cancellable, Evolution, EvolutionConfig, EvolutionTrace, EvolveError, StepRecord,
    Termination, COLLAPSE_LENGTH, KERNEL_LENGTH,
};
pub use field::FlowField;
pub use kernel::{regularize_flow, sobolev_kernel, sobolev_kernel_value, sobolev_weights};
pub use predictor::{BaselinePredictor, CnnPredictor, FlowPredictor, FnPredictor, OracleSdmPredictor};
