use std::sync::Arc;

use crate::geometry::{Curve, RasterImage, SignedDistanceMap, Vec2};
use crate::neuralflow::ConvNet;
use crate::patchdata::{sample_patch_sized, PatchFrame};
use crate::scalar::Real;
use crate::{Error, Result};

use super::baseline::baseline_speed;
use super::FlowField;

/// Produces one flow vector per contour vertex.
pub trait FlowPredictor<T: Real>: Send + Sync {
    fn predict(&self, image: &RasterImage<T>, curve: &Curve<T>, normals: &[Vec2<T>]) -> Result<FlowField<T>>;

    /// Image channel count the predictor requires, if any.
    fn channels(&self) -> Option<usize> {
        None
    }
}

/// Samples a normal-aligned patch per vertex and runs the network on the batch.
#[derive(Clone, Debug)]
pub struct CnnPredictor<T> {
    net: Arc<ConvNet<T>>,
}

impl<T: Real> CnnPredictor<T> {
    pub fn new(net: Arc<ConvNet<T>>) -> Self {
        Self { net }
    }

    pub fn net(&self) -> &ConvNet<T> {
        &self.net
    }
}

impl<T: Real> FlowPredictor<T> for CnnPredictor<T> {
    fn predict(&self, image: &RasterImage<T>, curve: &Curve<T>, normals: &[Vec2<T>]) -> Result<FlowField<T>> {
        if image.channels() != self.net.in_channels() {
            return Err(Error::ChannelMismatch {
                expected: self.net.in_channels(),
                actual: image.channels(),
            });
        }
        let net_size = self.net.shape().input_size;
        let frames: Vec<PatchFrame<T>> = curve
            .vertices()
            .iter()
            .zip(normals)
            .map(|(&c, &n)| PatchFrame::from_normal(c, n))
            .collect();
        let patches: Vec<_> = frames.iter().map(|f| sample_patch_sized(image, f, net_size)).collect();
        let local = self.net.forward_patches(&patches)?;
        FlowField::new(
            frames
                .iter()
                .zip(local)
                .map(|(f, v)| f.to_world(Vec2::new(v[0], v[1])))
                .collect(),
        )
    }

    fn channels(&self) -> Option<usize> {
        Some(self.net.in_channels())
    }
}

/// `-φ∇φ` read from a known signed distance map.
#[derive(Clone, Debug)]
pub struct OracleSdmPredictor<T> {
    sdm: SignedDistanceMap<T>,
}

impl<T: Real> OracleSdmPredictor<T> {
    pub fn new(sdm: SignedDistanceMap<T>) -> Self {
        Self { sdm }
    }

    pub fn sdm(&self) -> &SignedDistanceMap<T> {
        &self.sdm
    }
}

impl<T: Real> FlowPredictor<T> for OracleSdmPredictor<T> {
    fn predict(&self, _image: &RasterImage<T>, curve: &Curve<T>, _normals: &[Vec2<T>]) -> Result<FlowField<T>> {
        FlowField::new(curve.vertices().iter().map(|&p| self.sdm.flow_to_boundary(p)).collect())
    }
}

/// Two-region speed times the outer normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselinePredictor<T> {
    pub mu_in: T,
    pub mu_out: T,
}

impl<T: Real> BaselinePredictor<T> {
    pub fn new(mu_in: T, mu_out: T) -> Self {
        Self { mu_in, mu_out }
    }
}

impl<T: Real> FlowPredictor<T> for BaselinePredictor<T> {
    fn predict(&self, image: &RasterImage<T>, curve: &Curve<T>, normals: &[Vec2<T>]) -> Result<FlowField<T>> {
        baseline_speed(image, curve, normals, self.mu_in, self.mu_out)
    }
}

/// Wraps a closure; handy for synthetic fields.
pub struct FnPredictor<F>(pub F);

impl<T, F> FlowPredictor<T> for FnPredictor<F>
where
    T: Real,
    F: Fn(&RasterImage<T>, &Curve<T>, &[Vec2<T>]) -> Vec<Vec2<T>> + Send + Sync,
{
    fn predict(&self, image: &RasterImage<T>, curve: &Curve<T>, normals: &[Vec2<T>]) -> Result<FlowField<T>> {
        FlowField::new((self.0)(image, curve, normals))
    }
}

impl<T: Real, P: FlowPredictor<T> + ?Sized> FlowPredictor<T> for Box<P> {
    fn predict(&self, image: &RasterImage<T>, curve: &Curve<T>, normals: &[Vec2<T>]) -> Result<FlowField<T>> {
        (**self).predict(image, curve, normals)
    }

    fn channels(&self) -> Option<usize> {
        (**self).channels()
    }
}

impl<T: Real, P: FlowPredictor<T> + ?Sized> FlowPredictor<T> for Arc<P> {
    fn predict(&self, image: &RasterImage<T>, curve: &Curve<T>, normals: &[Vec2<T>]) -> Result<FlowField<T>> {
        (**self).predict(image, curve, normals)
    }

    fn channels(&self) -> Option<usize> {
        (**self).channels()
    }
}
