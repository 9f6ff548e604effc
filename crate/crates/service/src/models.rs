//! Weight files on disk and a process-wide cache of loaded networks.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use flowsnake::neuralflow::{load_weights, read_shape};
use flowsnake::Net32;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelInfo {
    pub name: String,
    pub channels: usize,
    pub input_size: usize,
    pub parameters: usize,
}

/// Readable weight files in `dir`, sorted by name. Files that fail header
/// validation are skipped.
pub fn list_models(dir: &Path) -> Vec<ModelInfo> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return Vec::new();
    };
    let mut out: Vec<ModelInfo> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| {
            let shape = read_shape(&e.path()).ok()?;
            Some(ModelInfo {
                name: e.file_name().to_string_lossy().into_owned(),
                channels: shape.in_channels,
                input_size: shape.input_size,
                parameters: shape.param_count(),
            })
        })
        .collect();
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

/// Loaded networks keyed by path; sessions share one copy per file.
#[derive(Default)]
pub struct ModelCache {
    nets: Mutex<HashMap<PathBuf, Arc<Net32>>>,
}

impl ModelCache {
    pub fn get(&self, path: &Path) -> flowsnake::Result<Arc<Net32>> {
        if let Some(net) = self.nets.lock().unwrap().get(path) {
            return Ok(net.clone());
        }
        let net = Arc::new(load_weights(path)?);
        Ok(self
            .nets
            .lock()
            .unwrap()
            .entry(path.to_path_buf())
            .or_insert(net)
            .clone())
    }

    pub fn len(&self) -> usize {
        self.nets.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
