//! Top-K recommendation and offline metrics.
//!
//! Precision and recall are micro-averaged over users with at least one
//! relevant test item (test rating ≥ threshold). Coverage is the share of the
//! catalog that appears in at least one generated list.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionDataset, Rating};
use crate::hybrid::{self, FusionMode, HybridModel, Model, RoutedScorer};
use crate::mf::{FactorModel, TrainConfig};
use crate::semantic::ItemEmbeddingTable;
use crate::{Error, Result};

/// Anything that assigns a score to an in-range `(user, item)` pair.
pub trait Scorer: Sync {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    fn score(&self, user: usize, item: usize) -> f64;
}

impl Scorer for FactorModel {
    fn n_users(&self) -> usize {
        FactorModel::n_users(self)
    }

    fn n_items(&self) -> usize {
        FactorModel::n_items(self)
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        self.dot_unchecked(user, item)
    }
}

impl Scorer for HybridModel {
    fn n_users(&self) -> usize {
        self.factors.n_users()
    }

    fn n_items(&self) -> usize {
        self.factors.n_items()
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        self.fused_unchecked(user, item)
    }
}

impl Scorer for RoutedScorer<'_> {
    fn n_users(&self) -> usize {
        self.model().factors().n_users()
    }

    fn n_items(&self) -> usize {
        self.model().factors().n_items()
    }

    fn score(&self, user: usize, item: usize) -> f64 {
        self.score_with_path(user, item).0
    }
}

/// Descending by score, ties by ascending item index.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `k` best `(item, score)` pairs from `candidates`, best first.
pub fn top_k_of(mut candidates: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    if k == 0 || candidates.is_empty() {
        return Vec::new();
    }
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank_order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_order);
    candidates
}

/// The `k` highest-scoring items for `user` outside `exclude`.
pub fn topk_scored(scorer: &dyn Scorer, user: usize, k: usize, exclude: &HashSet<usize>) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if user >= scorer.n_users() {
        return Err(Error::IndexOutOfRange {
            kind: "user",
            index: user,
            size: scorer.n_users(),
        });
    }
    let candidates = (0..scorer.n_items())
        .filter(|i| !exclude.contains(i))
        .map(|i| (i, scorer.score(user, i)))
        .collect();
    Ok(top_k_of(candidates, k))
}

pub fn topk(scorer: &dyn Scorer, user: usize, k: usize, exclude: &HashSet<usize>) -> Result<Vec<usize>> {
    Ok(topk_scored(scorer, user, k, exclude)?.into_iter().map(|(i, _)| i).collect())
}

/// Relevant test items per user.
fn relevant_sets(test: &[Rating], threshold: f64) -> BTreeMap<usize, HashSet<usize>> {
    let mut out: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
    for r in test {
        if r.value >= threshold {
            out.entry(r.user).or_default().insert(r.item);
        }
    }
    out
}

/// Micro-averaged `(precision, recall)` over users with ≥ 1 relevant test item.
pub fn precision_recall(
    recommendations: &BTreeMap<usize, Vec<usize>>,
    test: &[Rating],
    threshold: f64,
) -> Result<(f64, f64)> {
    precision_recall_with(recommendations, test, threshold, false)
}

/// As [`precision_recall`]; with `count_unevaluable`, users without relevant
/// test items still add their list length to the precision denominator.
pub fn precision_recall_with(
    recommendations: &BTreeMap<usize, Vec<usize>>,
    test: &[Rating],
    threshold: f64,
    count_unevaluable: bool,
) -> Result<(f64, f64)> {
    let relevant = relevant_sets(test, threshold);
    if relevant.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }
    let mut hits = 0usize;
    let mut recommended = 0usize;
    let mut n_relevant = 0usize;
    for (user, rel) in &relevant {
        let recs = recommendations.get(user).map_or(&[][..], Vec::as_slice);
        hits += recs.iter().filter(|i| rel.contains(i)).count();
        recommended += recs.len();
        n_relevant += rel.len();
    }
    if count_unevaluable {
        recommended += recommendations
            .iter()
            .filter(|(u, _)| !relevant.contains_key(u))
            .map(|(_, recs)| recs.len())
            .sum::<usize>();
    }
    let precision = if recommended == 0 {
        0.0
    } else {
        hits as f64 / recommended as f64
    };
    Ok((precision, hits as f64 / n_relevant as f64))
}

/// Distinct recommended items over catalog size.
pub fn coverage(recommendations: &BTreeMap<usize, Vec<usize>>, n_items: usize) -> f64 {
    if n_items == 0 {
        return 0.0;
    }
    let distinct: HashSet<usize> = recommendations.values().flatten().copied().collect();
    distinct.len() as f64 / n_items as f64
}

/// Root mean squared error of `scorer` on `test`.
pub fn rmse(scorer: &dyn Scorer, test: &[Rating]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut sse = 0.0;
    for r in test {
        if r.user >= scorer.n_users() {
            return Err(Error::IndexOutOfRange {
                kind: "user",
                index: r.user,
                size: scorer.n_users(),
            });
        }
        if r.item >= scorer.n_items() {
            return Err(Error::IndexOutOfRange {
                kind: "item",
                index: r.item,
                size: scorer.n_items(),
            });
        }
        let e = scorer.score(r.user, r.item) - r.value;
        sse += e * e;
    }
    Ok((sse / test.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    pub relevance_threshold: f64,
    pub exclude_train: bool,
    /// Count users without relevant test items in the precision denominator.
    pub count_unevaluable: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            relevance_threshold: 4.0,
            exclude_train: true,
            count_unevaluable: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub alpha: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub coverage: f64,
    pub rmse: f64,
    pub n_users_evaluated: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aligned plain-text table, one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6}  {:>13}  {:>10}  {:>12}  {:>8}  {:>6}",
        "alpha", "Precision (%)", "Recall (%)", "Coverage (%)", "RMSE", "Users"
    );
    for r in reports {
        let alpha = r.alpha.map_or_else(|| "-".to_owned(), |a| format!("{a}"));
        let _ = writeln!(
            out,
            "{:>6}  {:>13.2}  {:>10.2}  {:>12.2}  {:>8.4}  {:>6}",
            alpha,
            r.precision * 100.0,
            r.recall * 100.0,
            r.coverage * 100.0,
            r.rmse,
            r.n_users_evaluated
        );
    }
    out
}

/// Top-K lists for `users`, computed on `workers` threads (0 = rayon default).
///
/// Output is independent of the worker count.
pub fn recommend_all(
    scorer: &dyn Scorer,
    users: &[usize],
    k: usize,
    exclusions: &[HashSet<usize>],
    workers: usize,
) -> Result<BTreeMap<usize, Vec<usize>>> {
    let empty = HashSet::new();
    let run = || -> Result<Vec<(usize, Vec<usize>)>> {
        users
            .par_iter()
            .map(|&u| {
                let exclude = exclusions.get(u).unwrap_or(&empty);
                Ok((u, topk(scorer, u, k, exclude)?))
            })
            .collect()
    };
    let lists = if workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run)?
    };
    Ok(lists.into_iter().collect())
}

/// Evaluates `scorer` on `dataset.test`.
pub fn evaluate(scorer: &dyn Scorer, dataset: &InteractionDataset, config: &EvalConfig) -> Result<EvalReport> {
    evaluate_with_workers(scorer, dataset, config, 0)
}

pub fn evaluate_with_workers(
    scorer: &dyn Scorer,
    dataset: &InteractionDataset,
    config: &EvalConfig,
    workers: usize,
) -> Result<EvalReport> {
    if config.k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if scorer.n_users() != dataset.n_users() || scorer.n_items() != dataset.n_items() {
        return Err(Error::Mismatch(format!(
            "model has {}x{} users/items, dataset {}x{}",
            scorer.n_users(),
            scorer.n_items(),
            dataset.n_users(),
            dataset.n_items()
        )));
    }
    let relevant = relevant_sets(&dataset.test, config.relevance_threshold);
    if relevant.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }
    let mut users: Vec<usize> = relevant.keys().copied().collect();
    if config.count_unevaluable {
        let extra: HashSet<usize> = dataset.test.iter().map(|r| r.user).collect();
        users.extend(extra.into_iter().filter(|u| !relevant.contains_key(u)));
        users.sort_unstable();
    }
    let exclusions: Vec<HashSet<usize>> = if config.exclude_train {
        dataset
            .train_items_by_user()
            .into_iter()
            .map(|v| v.into_iter().collect())
            .collect()
    } else {
        Vec::new()
    };
    let recs = recommend_all(scorer, &users, config.k, &exclusions, workers)?;
    let (precision, recall) =
        precision_recall_with(&recs, &dataset.test, config.relevance_threshold, config.count_unevaluable)?;
    Ok(EvalReport {
        alpha: None,
        precision,
        recall,
        coverage: coverage(&recs, dataset.n_items()),
        rmse: rmse(scorer, &dataset.test)?,
        n_users_evaluated: relevant.len(),
    })
}

/// Trains one hybrid model per `α` (same seed) and evaluates each on the
/// test split with cold-item routing. Reports keep the order of `alphas`.
pub fn sweep_alpha(
    dataset: &InteractionDataset,
    embeddings: &ItemEmbeddingTable,
    config: &TrainConfig,
    mode: FusionMode,
    alphas: &[f64],
    eval: &EvalConfig,
) -> Result<Vec<EvalReport>> {
    if alphas.is_empty() {
        return Err(Error::Empty("alpha grid"));
    }
    let counts = dataset.item_train_counts();
    alphas
        .iter()
        .map(|&alpha| {
            let trained = hybrid::train_hybrid(dataset, embeddings, config, alpha, mode)?;
            let model = Model::Hybrid(trained.model);
            let scorer = RoutedScorer::new(&model, &counts)?;
            let mut report = evaluate(&scorer, dataset, eval)?;
            report.alpha = Some(alpha);
            Ok(report)
        })
        .collect()
}
