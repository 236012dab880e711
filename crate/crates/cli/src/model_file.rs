//! JSON file holding a fitted model together with the reduction it expects
//! its input to pass through.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use simembed::{Error, PcaReduction64, ProjectionModel64};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub version: u32,
    pub dataset: String,
    pub pca: PcaReduction64,
    pub model: ProjectionModel64,
}

impl SavedModel {
    pub fn new(dataset: impl Into<String>, pca: PcaReduction64, model: ProjectionModel64) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            dataset: dataset.into(),
            pca,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let saved: SavedModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if saved.version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "model file version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                saved.version
            )));
        }
        Ok(saved)
    }

    /// Reduces raw feature rows and maps them into the visual space.
    pub fn project(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>, Error> {
        let x = self.pca.transform(features)?;
        self.model.project(x.view())
    }
}
