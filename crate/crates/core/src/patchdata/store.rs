//! Columnar training sets and their on-disk form.
//!
//! A dataset directory holds `records.bin`, a sequence of fixed-size records
//! (`size*size*d` little-endian `f32` samples in channel-planar order, then the
//! two `f32` target components), and `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::{GenConfig, TrainingPair};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const RECORDS_FILE: &str = "records.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Training inputs and targets stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub size: usize,
    pub channels: usize,
    pub inputs: Vec<T>,
    pub targets: Vec<[T; 2]>,
}

impl<T: Real> Dataset<T> {
    pub fn new(size: usize, channels: usize) -> Self {
        Self {
            size,
            channels,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn from_pairs(pairs: &[TrainingPair<T>]) -> Result<Self> {
        let first = pairs
            .first()
            .ok_or_else(|| Error::EmptyInput("no training pairs".into()))?;
        let mut ds = Self::new(first.patch.size(), first.patch.channels());
        for p in pairs {
            ds.push(p.patch.samples(), [p.target.x, p.target.y])?;
        }
        Ok(ds)
    }

    pub fn input_len(&self) -> usize {
        self.size * self.size * self.channels
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, input: &[T], target: [T; 2]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::LengthMismatch(input.len(), self.input_len()));
        }
        self.inputs.extend_from_slice(input);
        self.targets.push(target);
        Ok(())
    }

    pub fn append(&mut self, other: &Dataset<T>) -> Result<()> {
        if other.size != self.size || other.channels != self.channels {
            return Err(Error::DatasetFormat(format!(
                "cannot append {}x{}x{} records to {}x{}x{}",
                other.size, other.size, other.channels, self.size, self.size, self.channels
            )));
        }
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
        Ok(())
    }

    pub fn input(&self, i: usize) -> &[T] {
        let n = self.input_len();
        &self.inputs[i * n..(i + 1) * n]
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::new(self.size, self.channels);
        for &i in indices {
            out.inputs.extend_from_slice(self.input(i));
            out.targets.push(self.targets[i]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub d: usize,
    pub size: usize,
    pub seed: u64,
    pub config: GenConfig,
    #[serde(default)]
    pub sources: Vec<String>,
}

pub fn write_dataset<T: Real>(
    dir: &Path,
    ds: &Dataset<T>,
    config: &GenConfig,
    sources: Vec<String>,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bytes = Vec::with_capacity(ds.len() * (ds.input_len() + 2) * 4);
    for i in 0..ds.len() {
        for &s in ds.input(i) {
            bytes.extend_from_slice(&(s.f64() as f32).to_le_bytes());
        }
        for t in ds.targets[i] {
            bytes.extend_from_slice(&(t.f64() as f32).to_le_bytes());
        }
    }
    let path = dir.join(RECORDS_FILE);
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    let manifest = Manifest {
        count: ds.len(),
        d: ds.channels,
        size: ds.size,
        seed: config.seed,
        config: config.clone(),
        sources,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_slice(&text)?)
}

pub fn read_dataset<T: Real>(dir: &Path) -> Result<(Dataset<T>, Manifest)> {
    let manifest = read_manifest(dir)?;
    let path = dir.join(RECORDS_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let per = manifest.size * manifest.size * manifest.d;
    let record = (per + 2) * 4;
    if bytes.len() != record * manifest.count {
        return Err(Error::DatasetFormat(format!(
            "{} bytes on disk, manifest implies {}",
            bytes.len(),
            record * manifest.count
        )));
    }
    let mut ds = Dataset::new(manifest.size, manifest.d);
    ds.inputs.reserve(per * manifest.count);
    for rec in bytes.chunks_exact(record) {
        let vals: Vec<T> = rec
            .chunks_exact(4)
            .map(|b| T::of(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64))
            .collect();
        ds.inputs.extend_from_slice(&vals[..per]);
        ds.targets.push([vals[per], vals[per + 1]]);
    }
    Ok((ds, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = Dataset::<f32>::new(4, 1);
        for i in 0..5 {
            ds.push(&[i as f32 / 10.0; 16], [i as f32, -(i as f32)])
                .unwrap();
        }
        let cfg = GenConfig::default();
        let m = write_dataset(dir.path(), &ds, &cfg, vec!["a.png".into()]).unwrap();
        assert_eq!(m.count, 5);
        let (back, m2) = read_dataset::<f32>(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(m2, m);
        let rec = dir.path().join(RECORDS_FILE);
        let bytes = fs::read(&rec).unwrap();
        fs::write(&rec, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            read_dataset::<f32>(dir.path()),
            Err(Error::DatasetFormat(_))
        ));
    }

    #[test]
    fn push_checks_record_length() {
        let mut ds = Dataset::<f64>::new(4, 3);
        assert!(ds.push(&[0.0; 16], [0.0, 0.0]).is_err());
        assert!(ds.push(&[0.0; 48], [0.0, 0.0]).is_ok());
    }
}
