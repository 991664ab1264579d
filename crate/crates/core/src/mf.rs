//! Latent-factor collaborative filtering.
//!
//! A [`FactorModel`] predicts `ŷ_ui = P_u · Q_i` with no bias terms. Training
//! is per-interaction SGD on the regularized squared error
//!
//! ```text
//! L = 1/N Σ_(u,i)∈D [ (ŷ_ui − y_ui)² + λ (‖P_u‖² + ‖Q_i‖²) ]  +  λ ‖W‖²
//! ```
//!
//! where the `W` term is present only for hybrid models. Each SGD step is a
//! stochastic gradient step on exactly this objective.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionDataset, Rating};
use crate::hybrid::SemanticTerm;
use crate::linalg::{dot, Matrix};
use crate::{Error, Result};

/// SGD hyperparameters shared by the MF and hybrid trainers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 32,
            learning_rate: 0.005,
            regularization: 0.02,
            epochs: 30,
            init_scale: 0.05,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_owned()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive and finite");
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return bad("regularization must be non-negative and finite");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad("init scale must be non-negative and finite");
        }
        Ok(())
    }
}

/// User factors `P` (n_users × k) and item factors `Q` (n_items × k).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub k: usize,
    pub users: Matrix,
    pub items: Matrix,
}

impl FactorModel {
    pub fn new(users: Matrix, items: Matrix) -> Result<Self> {
        if users.cols() != items.cols() {
            return Err(Error::ShapeMismatch(format!(
                "user factors have {} columns, item factors {}",
                users.cols(),
                items.cols()
            )));
        }
        if !users.is_finite() || !items.is_finite() {
            return Err(Error::InvalidArgument("factor matrices have non-finite entries".into()));
        }
        Ok(Self {
            k: users.cols(),
            users,
            items,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.rows()
    }

    pub fn n_items(&self) -> usize {
        self.items.rows()
    }

    pub fn check_user(&self, u: usize) -> Result<()> {
        if u >= self.n_users() {
            return Err(Error::IndexOutOfRange {
                kind: "user",
                index: u,
                size: self.n_users(),
            });
        }
        Ok(())
    }

    pub fn check_item(&self, i: usize) -> Result<()> {
        if i >= self.n_items() {
            return Err(Error::IndexOutOfRange {
                kind: "item",
                index: i,
                size: self.n_items(),
            });
        }
        Ok(())
    }

    /// `P_u · Q_i`.
    pub fn predict(&self, u: usize, i: usize) -> Result<f64> {
        self.check_user(u)?;
        self.check_item(i)?;
        Ok(self.dot_unchecked(u, i))
    }

    #[inline]
    pub(crate) fn dot_unchecked(&self, u: usize, i: usize) -> f64 {
        dot(self.users.row(u), self.items.row(i))
    }
}

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn fill_uniform(rng: &mut ChaCha8Rng, m: &mut Matrix, scale: f64) {
    if scale == 0.0 {
        m.as_mut_slice().fill(0.0);
        return;
    }
    for x in m.as_mut_slice() {
        *x = rng.gen_range(-scale..=scale);
    }
}

/// Draws `P` then `Q` uniformly from `[-init_scale, init_scale]`.
pub fn init_factors(n_users: usize, n_items: usize, config: &TrainConfig) -> Result<FactorModel> {
    let (model, _) = init_factors_with_rng(n_users, n_items, config)?;
    Ok(model)
}

/// Like [`init_factors`], also handing back the generator so further
/// parameters can be drawn from the same sequence.
pub(crate) fn init_factors_with_rng(
    n_users: usize,
    n_items: usize,
    config: &TrainConfig,
) -> Result<(FactorModel, ChaCha8Rng)> {
    config.validate()?;
    if n_users == 0 || n_items == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least one user and one item (got {n_users} users, {n_items} items)"
        )));
    }
    let mut rng = seeded_rng(config.seed, 0);
    let mut users = Matrix::zeros(n_users, config.k);
    let mut items = Matrix::zeros(n_items, config.k);
    fill_uniform(&mut rng, &mut users, config.init_scale);
    fill_uniform(&mut rng, &mut items, config.init_scale);
    Ok((
        FactorModel {
            k: config.k,
            users,
            items,
        },
        rng,
    ))
}

/// Mean squared error over `(prediction, target)` pairs.
pub fn loss_mse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    let sum: f64 = pairs.iter().map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sum / pairs.len() as f64)
}

fn check_data(model: &FactorModel, data: &[Rating]) -> Result<()> {
    for r in data {
        model.check_user(r.user)?;
        model.check_item(r.item)?;
    }
    Ok(())
}

fn check_semantic(model: &FactorModel, sem: &SemanticTerm<'_>) -> Result<()> {
    let w = &sem.projection.weights;
    if w.rows() != model.k || w.cols() != sem.embeddings.dim() {
        return Err(Error::ShapeMismatch(format!(
            "projection is {}x{}, expected {}x{}",
            w.rows(),
            w.cols(),
            model.k,
            sem.embeddings.dim()
        )));
    }
    if sem.embeddings.n_items() != model.n_items() {
        return Err(Error::ShapeMismatch(format!(
            "embedding table covers {} items, model has {}",
            sem.embeddings.n_items(),
            model.n_items()
        )));
    }
    Ok(())
}

/// Prediction under the optional semantic term, for in-range indices.
fn predict_with(model: &FactorModel, sem: Option<&SemanticTerm<'_>>, u: usize, i: usize, buf: &mut [f64]) -> f64 {
    match sem {
        None => model.dot_unchecked(u, i),
        Some(sem) => {
            let (cf, sw) = sem.mode.weights(sem.alpha);
            let p = model.users.row(u);
            let semantic = match sem.embeddings.get(i) {
                Some(e) => {
                    sem.projection.weights.mul_vec_into(e, buf);
                    dot(p, buf)
                }
                None => 0.0,
            };
            cf * dot(p, model.items.row(i)) + sw * semantic
        }
    }
}

/// Touch counts of every user and item row in `data`.
fn row_counts(model: &FactorModel, data: &[Rating]) -> (Vec<usize>, Vec<usize>) {
    let mut users = vec![0; model.n_users()];
    let mut items = vec![0; model.n_items()];
    for r in data {
        users[r.user] += 1;
        items[r.item] += 1;
    }
    (users, items)
}

/// `Σ_rows count · ‖row‖²`.
fn weighted_squared_norm(m: &Matrix, counts: &[usize]) -> f64 {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(r, &c)| c as f64 * dot(m.row(r), m.row(r)))
        .sum()
}

/// Regularized objective over `data`: mean of squared error plus
/// `λ (‖P_u‖² + ‖Q_i‖²)` per interaction, plus `λ ‖W‖²` when a semantic term
/// is given.
pub fn loss_regularized(
    model: &FactorModel,
    semantic: Option<&SemanticTerm<'_>>,
    data: &[Rating],
    lambda: f64,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("interaction list"));
    }
    check_data(model, data)?;
    if let Some(sem) = semantic {
        check_semantic(model, sem)?;
    }
    let mut buf = vec![0.0; model.k];
    let sse: f64 = data
        .iter()
        .map(|r| {
            let e = predict_with(model, semantic, r.user, r.item, &mut buf) - r.value;
            e * e
        })
        .sum();
    let (user_counts, item_counts) = row_counts(model, data);
    let row_penalty =
        weighted_squared_norm(&model.users, &user_counts) + weighted_squared_norm(&model.items, &item_counts);
    let n = data.len() as f64;
    let mut loss = (sse + lambda * row_penalty) / n;
    if let Some(sem) = semantic {
        loss += lambda * sem.projection.weights.squared_norm();
    }
    Ok(loss)
}

/// Full-batch gradient of [`loss_regularized`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub users: Matrix,
    pub items: Matrix,
    pub projection: Option<Matrix>,
}

/// Analytic gradient of [`loss_regularized`] with respect to `P`, `Q` and `W`.
pub fn objective_gradient(
    model: &FactorModel,
    semantic: Option<&SemanticTerm<'_>>,
    data: &[Rating],
    lambda: f64,
) -> Result<Gradient> {
    if data.is_empty() {
        return Err(Error::Empty("interaction list"));
    }
    check_data(model, data)?;
    if let Some(sem) = semantic {
        check_semantic(model, sem)?;
    }
    let k = model.k;
    let scale = 2.0 / data.len() as f64;
    let mut g_users = Matrix::zeros(model.n_users(), k);
    let mut g_items = Matrix::zeros(model.n_items(), k);
    let mut g_proj = semantic.map(|s| Matrix::zeros(k, s.embeddings.dim()));
    let mut v = vec![0.0; k];

    for r in data {
        let e = predict_with(model, semantic, r.user, r.item, &mut v) - r.value;
        let p = model.users.row(r.user);
        let q = model.items.row(r.item);
        match semantic {
            None => {
                for f in 0..k {
                    g_users[(r.user, f)] += scale * e * q[f];
                    g_items[(r.item, f)] += scale * e * p[f];
                }
            }
            Some(sem) => {
                let (cf, sw) = sem.mode.weights(sem.alpha);
                let emb = sem.embeddings.get(r.item);
                if emb.is_none() {
                    v.fill(0.0);
                }
                for f in 0..k {
                    g_users[(r.user, f)] += scale * e * (cf * q[f] + sw * v[f]);
                    g_items[(r.item, f)] += scale * e * cf * p[f];
                }
                if let (Some(emb), Some(gw)) = (emb, g_proj.as_mut()) {
                    for f in 0..k {
                        let row = gw.row_mut(f);
                        for (c, x) in emb.iter().enumerate() {
                            row[c] += scale * e * sw * p[f] * x;
                        }
                    }
                }
            }
        }
    }

    let (user_counts, item_counts) = row_counts(model, data);
    let decay = |g: &mut Matrix, m: &Matrix, counts: &[usize]| {
        for (r, &c) in counts.iter().enumerate() {
            let w = 2.0 * lambda * c as f64 / data.len() as f64;
            for (gx, x) in g.row_mut(r).iter_mut().zip(m.row(r)) {
                *gx += w * x;
            }
        }
    };
    decay(&mut g_users, &model.users, &user_counts);
    decay(&mut g_items, &model.items, &item_counts);
    if let (Some(gw), Some(sem)) = (g_proj.as_mut(), semantic) {
        for (gx, x) in gw.as_mut_slice().iter_mut().zip(sem.projection.weights.as_slice()) {
            *gx += 2.0 * lambda * x;
        }
    }
    Ok(Gradient {
        users: g_users,
        items: g_items,
        projection: g_proj,
    })
}

/// Trained parameters plus the objective recorded after each epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome<M> {
    pub model: M,
    pub loss_trace: Vec<f64>,
}

/// Trains `P` and `Q` by SGD over `dataset.train`.
pub fn train_mf(dataset: &InteractionDataset, config: &TrainConfig) -> Result<TrainOutcome<FactorModel>> {
    if dataset.train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut model = init_factors(dataset.n_users(), dataset.n_items(), config)?;
    let loss_trace = run_sgd(&dataset.train, &mut model, None, config)?;
    Ok(TrainOutcome { model, loss_trace })
}

/// Mutable semantic parameters handed to [`run_sgd`].
pub(crate) struct SgdSemantic<'a> {
    pub projection: &'a mut Matrix,
    pub embeddings: &'a crate::semantic::ItemEmbeddingTable,
    pub alpha: f64,
    pub mode: crate::hybrid::FusionMode,
}

/// Shared SGD loop. Each epoch visits `train` in a fresh permutation drawn
/// from stream `epoch + 1` of the seeded generator.
pub(crate) fn run_sgd(
    train: &[Rating],
    model: &mut FactorModel,
    mut semantic: Option<SgdSemantic<'_>>,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    check_data(model, train)?;
    let k = model.k;
    let lr = config.learning_rate;
    let reg = config.regularization;
    let mut p_old = vec![0.0; k];
    let mut v = vec![0.0; k];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.iter_mut().enumerate().for_each(|(n, o)| *o = n);
        order.shuffle(&mut seeded_rng(config.seed, epoch as u64));

        for &ix in &order {
            let r = train[ix];
            p_old.copy_from_slice(model.users.row(r.user));
            match semantic.as_mut() {
                None => {
                    let q = model.items.row(r.item);
                    let e = dot(&p_old, q) - r.value;
                    // Both rows move on the same error, using the pre-update P_u.
                    let p = model.users.row_mut(r.user);
                    for f in 0..k {
                        p[f] = p_old[f] - lr * (e * q[f] + reg * p_old[f]);
                    }
                    let q = model.items.row_mut(r.item);
                    for f in 0..k {
                        q[f] -= lr * (e * p_old[f] + reg * q[f]);
                    }
                }
                Some(sem) => {
                    let (cf, sw) = sem.mode.weights(sem.alpha);
                    let emb = sem.embeddings.get(r.item);
                    match emb {
                        Some(x) => sem.projection.mul_vec_into(x, &mut v),
                        None => v.fill(0.0),
                    }
                    let q = model.items.row(r.item);
                    let e = cf * dot(&p_old, q) + sw * dot(&p_old, &v) - r.value;
                    let p = model.users.row_mut(r.user);
                    for f in 0..k {
                        p[f] = p_old[f] - lr * (e * (cf * q[f] + sw * v[f]) + reg * p_old[f]);
                    }
                    let q = model.items.row_mut(r.item);
                    for f in 0..k {
                        q[f] -= lr * (e * cf * p_old[f] + reg * q[f]);
                    }
                    let w = &mut *sem.projection;
                    match emb {
                        Some(x) => {
                            for f in 0..k {
                                let g = sw * e * p_old[f];
                                for (wc, xc) in w.row_mut(f).iter_mut().zip(x) {
                                    *wc -= lr * (g * xc + reg * *wc);
                                }
                            }
                        }
                        None => {
                            for wc in w.as_mut_slice() {
                                *wc -= lr * (reg * *wc);
                            }
                        }
                    }
                }
            }
        }

        let loss = match semantic.as_ref() {
            None => loss_regularized(model, None, train, reg)?,
            Some(sem) => {
                let projection = crate::semantic::Projection {
                    weights: sem.projection.clone(),
                };
                let term = SemanticTerm {
                    projection: &projection,
                    embeddings: sem.embeddings,
                    alpha: sem.alpha,
                    mode: sem.mode,
                };
                loss_regularized(model, Some(&term), train, reg)?
            }
        };
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: loss {loss:.6}");
        trace.push(loss);
    }
    Ok(trace)
}
