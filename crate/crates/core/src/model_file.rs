//! Self-describing JSON model file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{IdIndex, InteractionDataset};
use crate::hybrid::{FusionMode, HybridModel, Model};
use crate::linalg::Matrix;
use crate::mf::{FactorModel, TrainConfig};
use crate::semantic::{ItemEmbeddingTable, Projection};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelMode {
    Mf,
    Hybrid,
}

/// Where the item embeddings of a hybrid model came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingProviderInfo {
    HashedBow { d_e: usize, source: PathBuf },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub mode: ModelMode,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_e: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionMode>,
    pub split_seed: u64,
    pub train_config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_provider: Option<EmbeddingProviderInfo>,
    pub user_index: IdIndex,
    pub item_index: IdIndex,
    /// Deduplicated training items per user, by dense index.
    pub train_items: Vec<Vec<usize>>,
    #[serde(rename = "P")]
    pub p: Matrix,
    #[serde(rename = "Q")]
    pub q: Matrix,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<ItemEmbeddingTable>,
}

impl ModelFile {
    pub fn new(
        model: &Model,
        dataset: &InteractionDataset,
        train_config: &TrainConfig,
        split_seed: u64,
        embedding_provider: Option<EmbeddingProviderInfo>,
    ) -> Self {
        let factors = model.factors();
        let (mode, d_e, alpha, fusion, w, embeddings) = match model {
            Model::Mf(_) => (ModelMode::Mf, None, None, None, None, None),
            Model::Hybrid(h) => (
                ModelMode::Hybrid,
                Some(h.embeddings.dim()),
                Some(h.alpha),
                Some(h.mode),
                Some(h.projection.weights.clone()),
                Some(h.embeddings.clone()),
            ),
        };
        Self {
            version: FORMAT_VERSION,
            mode,
            k: factors.k,
            d_e,
            alpha,
            fusion,
            split_seed,
            train_config: train_config.clone(),
            embedding_provider: if mode == ModelMode::Hybrid { embedding_provider } else { None },
            user_index: dataset.users.clone(),
            item_index: dataset.items.clone(),
            train_items: dataset.train_items_by_user(),
            p: factors.users.clone(),
            q: factors.items.clone(),
            w,
            embeddings,
        }
    }

    /// Rebuilds the in-memory model, validating every shape.
    pub fn to_model(&self) -> Result<Model> {
        if self.p.rows() != self.user_index.len() || self.q.rows() != self.item_index.len() {
            return Err(Error::ShapeMismatch(format!(
                "factor rows ({}, {}) do not match index sizes ({}, {})",
                self.p.rows(),
                self.q.rows(),
                self.user_index.len(),
                self.item_index.len()
            )));
        }
        if self.p.cols() != self.k {
            return Err(Error::ShapeMismatch(format!("P has {} columns, k is {}", self.p.cols(), self.k)));
        }
        if self.train_items.len() != self.user_index.len() {
            return Err(Error::ShapeMismatch("train_items length differs from user count".into()));
        }
        let factors = FactorModel::new(self.p.clone(), self.q.clone())?;
        match self.mode {
            ModelMode::Mf => Ok(Model::Mf(factors)),
            ModelMode::Hybrid => {
                let missing = |what: &str| Error::InvalidArgument(format!("hybrid model file lacks {what}"));
                let w = self.w.clone().ok_or_else(|| missing("W"))?;
                let embeddings = self.embeddings.clone().ok_or_else(|| missing("embeddings"))?;
                let alpha = self.alpha.ok_or_else(|| missing("alpha"))?;
                if self.d_e != Some(embeddings.dim()) {
                    return Err(Error::ShapeMismatch("d_e does not match the embedding table".into()));
                }
                let model = HybridModel::new(
                    factors,
                    Projection::new(w)?,
                    embeddings,
                    alpha,
                    self.fusion.unwrap_or_default(),
                )?;
                Ok(Model::Hybrid(model))
            }
        }
    }

    /// Number of distinct training users per item; zero marks a cold item.
    pub fn item_train_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.item_index.len()];
        for items in &self.train_items {
            for &i in items {
                if let Some(c) = counts.get_mut(i) {
                    *c += 1;
                }
            }
        }
        counts
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::InvalidArgument("model file has no version field".into()))?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::Version {
                found: version.min(u32::MAX as u64) as u32,
                expected: FORMAT_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
