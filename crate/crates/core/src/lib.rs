pub mod error;
pub mod evaluation;
pub mod flowengine;
pub mod geometry;
pub mod io;
pub mod neuralflow;
pub mod patchdata;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Curve32 = geometry::Curve<f32>;
pub type Curve64 = geometry::Curve<f64>;
pub type Image32 = geometry::RasterImage<f32>;
pub type Image64 = geometry::RasterImage<f64>;
pub type Net32 = neuralflow::ConvNet<f32>;
pub type Net64 = neuralflow::ConvNet<f64>;
pub type Sdm32 = geometry::SignedDistanceMap<f32>;
pub type Sdm64 = geometry::SignedDistanceMap<f64>;
