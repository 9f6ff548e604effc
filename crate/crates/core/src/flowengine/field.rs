use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::scalar::Real;
use crate::{Error, Result};

/// One world-frame vector per contour vertex, in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowField<T> {
    vectors: Vec<Vec2<T>>,
}

impl<T: Real> FlowField<T> {
    pub fn new(vectors: Vec<Vec2<T>>) -> Result<Self> {
        if let Some(bad) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidCurve(format!("flow vector {bad} is not finite")));
        }
        Ok(Self { vectors })
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            vectors: vec![Vec2::zero(); k],
        }
    }

    pub fn vectors(&self) -> &[Vec2<T>] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<Vec2<T>> {
        self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn mean(&self) -> Vec2<T> {
        if self.vectors.is_empty() {
            return Vec2::zero();
        }
        let n = T::of(self.vectors.len() as f64);
        let s = self.vectors.iter().fold(Vec2::zero(), |a, &v| a + v);
        Vec2::new(s.x / n, s.y / n)
    }

    /// Scalar speeds `v_j · n_j`.
    pub fn normal_speeds(&self, normals: &[Vec2<T>]) -> Vec<T> {
        self.vectors.iter().zip(normals).map(|(v, n)| v.dot(*n)).collect()
    }

    pub fn cast<S: Real>(&self) -> FlowField<S> {
        FlowField {
            vectors: self.vectors.iter().map(|v| v.cast()).collect(),
        }
    }
}
