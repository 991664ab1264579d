//! Fusion of collaborative and semantic scores.
//!
//! The semantic score of item `i` for user `u` is `P_u · (W E_i)`: the user's
//! affinity to the item's embedding carried into latent space. The fused
//! prediction adds it to the CF dot product with weight `α`; cold items are
//! scored by the semantic score alone.

use serde::{Deserialize, Serialize};

use crate::dataset::InteractionDataset;
use crate::linalg::{dot, Matrix};
use crate::mf::{self, FactorModel, SgdSemantic, TrainConfig, TrainOutcome};
use crate::semantic::{ItemEmbeddingTable, Projection};
use crate::{Error, Result};

/// How the CF and semantic scores are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// `cf + α · semantic`
    #[default]
    Additive,
    /// `(1 − α) · cf + α · semantic`
    Convex,
}

impl FusionMode {
    /// `(cf weight, semantic weight)` for a given `α`.
    #[inline]
    pub fn weights(self, alpha: f64) -> (f64, f64) {
        match self {
            FusionMode::Additive => (1.0, alpha),
            FusionMode::Convex => (1.0 - alpha, alpha),
        }
    }
}

/// Borrowed view of the semantic half of a hybrid model.
#[derive(Clone, Copy, Debug)]
pub struct SemanticTerm<'a> {
    pub projection: &'a Projection,
    pub embeddings: &'a ItemEmbeddingTable,
    pub alpha: f64,
    pub mode: FusionMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub factors: FactorModel,
    pub projection: Projection,
    pub embeddings: ItemEmbeddingTable,
    pub alpha: f64,
    #[serde(default)]
    pub mode: FusionMode,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

impl HybridModel {
    pub fn new(
        factors: FactorModel,
        projection: Projection,
        embeddings: ItemEmbeddingTable,
        alpha: f64,
        mode: FusionMode,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let w = &projection.weights;
        if w.rows() != factors.k || w.cols() != embeddings.dim() {
            return Err(Error::ShapeMismatch(format!(
                "projection is {}x{}, expected {}x{}",
                w.rows(),
                w.cols(),
                factors.k,
                embeddings.dim()
            )));
        }
        if embeddings.n_items() != factors.n_items() {
            return Err(Error::ShapeMismatch(format!(
                "embedding table covers {} items, model has {}",
                embeddings.n_items(),
                factors.n_items()
            )));
        }
        Ok(Self {
            factors,
            projection,
            embeddings,
            alpha,
            mode,
        })
    }

    pub fn term(&self) -> SemanticTerm<'_> {
        SemanticTerm {
            projection: &self.projection,
            embeddings: &self.embeddings,
            alpha: self.alpha,
            mode: self.mode,
        }
    }

    fn check(&self, u: usize, i: usize) -> Result<()> {
        self.factors.check_user(u)?;
        self.factors.check_item(i)
    }

    #[inline]
    pub(crate) fn semantic_unchecked(&self, u: usize, i: usize) -> Option<f64> {
        let e = self.embeddings.get(i)?;
        let p = self.factors.users.row(u);
        let w = &self.projection.weights;
        Some((0..w.rows()).map(|f| p[f] * dot(w.row(f), e)).sum())
    }

    #[inline]
    pub(crate) fn fused_unchecked(&self, u: usize, i: usize) -> f64 {
        let (cf, sw) = self.mode.weights(self.alpha);
        cf * self.factors.dot_unchecked(u, i) + sw * self.semantic_unchecked(u, i).unwrap_or(0.0)
    }

    /// `P_u · (W E_i)`; zero when the item has no embedding.
    pub fn semantic_score(&self, u: usize, i: usize) -> Result<f64> {
        self.check(u, i)?;
        Ok(self.semantic_unchecked(u, i).unwrap_or(0.0))
    }

    /// `P_u · Q_i + α · P_u · (W E_i)` (or the convex blend).
    pub fn predict(&self, u: usize, i: usize) -> Result<f64> {
        self.check(u, i)?;
        Ok(self.fused_unchecked(u, i))
    }

    /// Content-only score `P_u · (W E_i)` for items without interactions. Never reads `Q`.
    pub fn predict_cold_start(&self, u: usize, i: usize) -> Result<f64> {
        self.check(u, i)?;
        self.semantic_unchecked(u, i).ok_or(Error::ColdItemWithoutContent(i))
    }

    /// Regularized objective of this model over `data`.
    pub fn loss(&self, data: &[crate::dataset::Rating], lambda: f64) -> Result<f64> {
        mf::loss_regularized(&self.factors, Some(&self.term()), data, lambda)
    }
}

/// Jointly trains `P`, `Q` and `W` on `dataset.train`; embeddings stay fixed.
///
/// `P` and `Q` are drawn exactly as in [`mf::train_mf`], then `W` from the same
/// generator, so at `α = 0` (additive) the factors match pure MF bit for bit.
pub fn train_hybrid(
    dataset: &InteractionDataset,
    embeddings: &ItemEmbeddingTable,
    config: &TrainConfig,
    alpha: f64,
    mode: FusionMode,
) -> Result<TrainOutcome<HybridModel>> {
    check_alpha(alpha)?;
    if dataset.train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if embeddings.is_empty() {
        return Err(Error::Empty("embedding table (no item has content)"));
    }
    if embeddings.n_items() != dataset.n_items() {
        return Err(Error::ShapeMismatch(format!(
            "embedding table covers {} items, dataset has {}",
            embeddings.n_items(),
            dataset.n_items()
        )));
    }
    let (mut factors, mut rng) = mf::init_factors_with_rng(dataset.n_users(), dataset.n_items(), config)?;
    let mut w = Matrix::zeros(config.k, embeddings.dim());
    mf::fill_uniform(&mut rng, &mut w, config.init_scale);

    let loss_trace = mf::run_sgd(
        &dataset.train,
        &mut factors,
        Some(SgdSemantic {
            projection: &mut w,
            embeddings,
            alpha,
            mode,
        }),
        config,
    )?;
    let model = HybridModel::new(factors, Projection::new(w)?, embeddings.clone(), alpha, mode)?;
    Ok(TrainOutcome { model, loss_trace })
}

/// Which scoring path produced a recommendation score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScorePath {
    /// Plain `P_u · Q_i`.
    Cf,
    /// Fused CF + semantic score.
    Fused,
    /// Content-only score for an item with no training interactions.
    ColdStart,
}

impl ScorePath {
    pub fn label(self) -> &'static str {
        match self {
            ScorePath::Cf => "cf",
            ScorePath::Fused => "cf+semantic",
            ScorePath::ColdStart => "cold-start",
        }
    }
}

/// A trained model of either kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Mf(FactorModel),
    Hybrid(HybridModel),
}

impl Model {
    pub fn factors(&self) -> &FactorModel {
        match self {
            Model::Mf(m) => m,
            Model::Hybrid(h) => &h.factors,
        }
    }
}

/// Scores items for recommendation, sending cold items through the
/// content-only path.
///
/// An item is cold when it had no training interactions. Routing applies only
/// to hybrid models with `α > 0`; at `α = 0` the semantic half is inactive and
/// every item is scored by the CF dot product.
#[derive(Clone, Debug)]
pub struct RoutedScorer<'a> {
    model: &'a Model,
    cold: Vec<bool>,
    // W E_i per item, cached for hybrid models.
    projected: Vec<Option<Vec<f64>>>,
}

impl<'a> RoutedScorer<'a> {
    pub fn new(model: &'a Model, item_train_counts: &[usize]) -> Result<Self> {
        let n_items = model.factors().n_items();
        if item_train_counts.len() != n_items {
            return Err(Error::ShapeMismatch(format!(
                "{} item counts for a model with {n_items} items",
                item_train_counts.len()
            )));
        }
        let projected = match model {
            Model::Mf(_) => Vec::new(),
            Model::Hybrid(h) => (0..n_items)
                .map(|i| {
                    h.embeddings.get(i).map(|e| {
                        let mut v = vec![0.0; h.factors.k];
                        h.projection.weights.mul_vec_into(e, &mut v);
                        v
                    })
                })
                .collect(),
        };
        Ok(Self {
            model,
            cold: item_train_counts.iter().map(|&c| c == 0).collect(),
            projected,
        })
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn is_cold(&self, item: usize) -> bool {
        self.cold[item]
    }

    /// Score and path for an in-range `(u, i)` pair.
    ///
    /// Bit-identical to [`HybridModel::predict`] / [`HybridModel::predict_cold_start`].
    pub fn score_with_path(&self, u: usize, i: usize) -> (f64, ScorePath) {
        match self.model {
            Model::Mf(m) => (m.dot_unchecked(u, i), ScorePath::Cf),
            Model::Hybrid(h) => {
                let p = h.factors.users.row(u);
                let semantic = self.projected[i].as_deref().map_or(0.0, |v| dot(p, v));
                if self.cold[i] && h.alpha > 0.0 {
                    (semantic, ScorePath::ColdStart)
                } else {
                    let (cf, sw) = h.mode.weights(h.alpha);
                    (cf * h.factors.dot_unchecked(u, i) + sw * semantic, ScorePath::Fused)
                }
            }
        }
    }
}
