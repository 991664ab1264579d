//! `rexfuse` command line: train, evaluate, recommend, sweep.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{build_dataset, load_interactions, load_item_text, DataFormat, InteractionDataset};
use crate::eval::{self, render_table, EvalConfig, EvalReport};
use crate::hybrid::{train_hybrid, FusionMode, Model, RoutedScorer, ScorePath};
use crate::mf::{train_mf, TrainConfig};
use crate::model_file::{EmbeddingProviderInfo, ModelFile, ModelMode};
use crate::semantic::{load_embeddings_file, HashedBow, ItemEmbeddingTable};
use crate::{Error, Result};

/// Dimension of hashed bag-of-words embeddings built from `--item-text`.
pub const DEFAULT_EMBEDDING_DIM: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "rexfuse", version, about = "Hybrid CF + text-embedding recommender")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an MF or hybrid model and write it to disk.
    Train(TrainArgs),
    /// Evaluate a saved model on the test split of its data file.
    Evaluate(EvaluateArgs),
    /// Print the top-K items for one user.
    Recommend(RecommendArgs),
    /// Train and evaluate hybrid models over a grid of alpha values.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Interaction file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "movielens100k")]
    pub format: DataFormat,
}

#[derive(Debug, Args)]
pub struct ContentArgs {
    /// JSON lines `{"item_id", "text"}`, embedded with hashed bag-of-words.
    #[arg(long, conflicts_with = "embeddings")]
    pub item_text: Option<PathBuf>,
    /// JSON lines `{"item_id", "vector"}` of precomputed embeddings.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.02)]
    pub reg: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Seed for the split and for training.
    #[arg(long, env = "REXFUSE_SEED", default_value_t = 42)]
    pub seed: u64,
}

impl TrainingArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            k: self.k,
            learning_rate: self.lr,
            regularization: self.reg,
            epochs: self.epochs,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "k-at", default_value_t = 10)]
    pub k_at: usize,
    #[arg(long, default_value_t = 4.0)]
    pub threshold: f64,
    /// Also write the report(s) as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

impl EvalArgs {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            k: self.k_at,
            relevance_threshold: self.threshold,
            ..EvalConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub content: ContentArgs,
    #[arg(long, value_enum, default_value = "mf")]
    pub mode: ModelMode,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// External user id.
    #[arg(long)]
    pub user: String,
    #[arg(long = "k-at", default_value_t = 10)]
    pub k_at: usize,
    /// Also rank items without training interactions by their content.
    #[arg(long)]
    pub include_cold: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub content: ContentArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub alphas: Vec<f64>,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub eval: EvalArgs,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::InvalidArgument(e.to_string().trim().to_owned()))?;
    run(cli, out)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::Recommend(a) => cmd_recommend(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn load_dataset(data: &DataArgs, seed: u64) -> Result<InteractionDataset> {
    let interactions = load_interactions(&data.data, data.format)?;
    build_dataset(&interactions, seed)
}

fn load_content(content: &ContentArgs, dataset: &InteractionDataset) -> Result<(ItemEmbeddingTable, EmbeddingProviderInfo)> {
    if let Some(path) = &content.embeddings {
        let loaded = load_embeddings_file(path, &dataset.items)?;
        if loaded.skipped > 0 {
            log::warn!("{} embedding lines referenced unknown items", loaded.skipped);
        }
        return Ok((loaded.table, EmbeddingProviderInfo::File { path: path.clone() }));
    }
    if let Some(path) = &content.item_text {
        let corpus = load_item_text(path, &dataset.items)?;
        if corpus.skipped > 0 {
            log::warn!("{} item-text lines referenced unknown items", corpus.skipped);
        }
        let provider = HashedBow::new(DEFAULT_EMBEDDING_DIM)?;
        let table = ItemEmbeddingTable::from_corpus(&corpus, dataset.n_items(), &provider)?;
        return Ok((
            table,
            EmbeddingProviderInfo::HashedBow {
                d_e: DEFAULT_EMBEDDING_DIM,
                source: path.clone(),
            },
        ));
    }
    Err(Error::InvalidArgument(
        "hybrid mode needs item content: pass --item-text or --embeddings".into(),
    ))
}

fn write_json(path: &Path, json: &str) -> Result<()> {
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let config = args.training.config();
    config.validate()?;
    let dataset = load_dataset(&args.data, config.seed)?;
    let (model, trace, provider) = match args.mode {
        ModelMode::Mf => {
            let trained = train_mf(&dataset, &config)?;
            (Model::Mf(trained.model), trained.loss_trace, None)
        }
        ModelMode::Hybrid => {
            let (table, provider) = load_content(&args.content, &dataset)?;
            let trained = train_hybrid(&dataset, &table, &config, args.alpha, FusionMode::Additive)?;
            (Model::Hybrid(trained.model), trained.loss_trace, Some(provider))
        }
    };
    let mut log = String::new();
    for (epoch, loss) in trace.iter().enumerate() {
        log.push_str(&format!("epoch {:>3}  loss {loss:.6}\n", epoch + 1));
    }
    write_out(out, &log)?;
    ModelFile::new(&model, &dataset, &config, config.seed, provider).save(&args.out)?;
    write_out(out, &format!("model written to {}\n", args.out.display()))
}

/// Loads the model and rebuilds its exact split from `data`.
fn model_and_dataset(model_path: &Path, data: &DataArgs) -> Result<(ModelFile, Model, InteractionDataset)> {
    let file = ModelFile::load(model_path)?;
    let model = file.to_model()?;
    let dataset = load_dataset(data, file.split_seed)?;
    check_index("user", file.user_index.ids(), dataset.users.ids())?;
    check_index("item", file.item_index.ids(), dataset.items.ids())?;
    Ok((file, model, dataset))
}

fn check_index(kind: &str, model_ids: &[String], data_ids: &[String]) -> Result<()> {
    if model_ids == data_ids {
        return Ok(());
    }
    let data: HashSet<&str> = data_ids.iter().map(String::as_str).collect();
    if let Some(id) = model_ids.iter().find(|id| !data.contains(id.as_str())) {
        return Err(Error::Mismatch(format!("model {kind} {id:?} does not occur in the data file")));
    }
    Err(Error::Mismatch(format!(
        "{kind} index differs between model ({} ids) and data ({} ids)",
        model_ids.len(),
        data_ids.len()
    )))
}

pub fn evaluate_model(model: &Model, dataset: &InteractionDataset, config: &EvalConfig) -> Result<EvalReport> {
    let scorer = RoutedScorer::new(model, &dataset.item_train_counts())?;
    let mut report = eval::evaluate(&scorer, dataset, config)?;
    if let Model::Hybrid(h) = model {
        report.alpha = Some(h.alpha);
    }
    Ok(report)
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let (_, model, dataset) = model_and_dataset(&args.model, &args.data)?;
    let report = evaluate_model(&model, &dataset, &args.eval.config())?;
    write_out(out, &render_table(std::slice::from_ref(&report)))?;
    if let Some(path) = &args.eval.json {
        write_json(path, &report.to_json())?;
    }
    Ok(())
}

/// One ranked line of `recommend` output.
#[derive(Clone, Debug, PartialEq)]
pub struct Recommendation {
    pub item: String,
    pub score: f64,
    pub path: ScorePath,
}

/// Top-K for one user, excluding items the user rated in training.
pub fn recommend(file: &ModelFile, model: &Model, user: &str, k: usize, include_cold: bool) -> Result<Vec<Recommendation>> {
    if k == 0 {
        return Err(Error::InvalidArgument("--k-at must be at least 1".into()));
    }
    let u = file.user_index.get(user).ok_or_else(|| Error::UnknownUser(user.to_owned()))?;
    let counts = file.item_train_counts();
    let seen: HashSet<usize> = file.train_items[u].iter().copied().collect();
    let hybrid = match model {
        Model::Hybrid(h) => Some(h),
        Model::Mf(_) if include_cold => {
            return Err(Error::InvalidArgument("--include-cold needs a hybrid model".into()));
        }
        Model::Mf(_) => None,
    };

    let mut candidates = Vec::new();
    let mut paths = vec![ScorePath::Cf; counts.len()];
    for (i, &count) in counts.iter().enumerate() {
        if seen.contains(&i) {
            continue;
        }
        let score = match (hybrid, count == 0) {
            (None, false) => model.factors().predict(u, i)?,
            (Some(h), false) => {
                paths[i] = ScorePath::Fused;
                h.predict(u, i)?
            }
            (Some(h), true) if include_cold => match h.predict_cold_start(u, i) {
                Ok(s) => {
                    paths[i] = ScorePath::ColdStart;
                    s
                }
                Err(Error::ColdItemWithoutContent(_)) => continue,
                Err(e) => return Err(e),
            },
            (_, true) => continue,
        };
        candidates.push((i, score));
    }
    Ok(eval::top_k_of(candidates, k)
        .into_iter()
        .map(|(i, score)| Recommendation {
            item: file.item_index.id(i).unwrap_or_default().to_owned(),
            score,
            path: paths[i],
        })
        .collect())
}

pub fn cmd_recommend(args: &RecommendArgs, out: &mut dyn Write) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let model = file.to_model()?;
    let recs = recommend(&file, &model, &args.user, args.k_at, args.include_cold)?;
    let mut text = String::new();
    for (rank, r) in recs.iter().enumerate() {
        text.push_str(&format!("{},{},{:.6},{}\n", rank + 1, r.item, r.score, r.path.label()));
    }
    write_out(out, &text)
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let config = args.training.config();
    config.validate()?;
    let dataset = load_dataset(&args.data, config.seed)?;
    let (table, _) = load_content(&args.content, &dataset)?;
    let reports = eval::sweep_alpha(
        &dataset,
        &table,
        &config,
        FusionMode::Additive,
        &args.alphas,
        &args.eval.config(),
    )?;
    write_out(out, &render_table(&reports))?;
    if let Some(path) = &args.eval.json {
        write_json(path, &serde_json::to_string_pretty(&reports)?)?;
    }
    Ok(())
}
