//! Command-line front end: layered configuration and the pipeline subcommands.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::baselines::{cross_validate, fit_and_score, BaselineKind};
use crate::corpus::{
    drop_unlabeled, load_dataset, make_synthetic_corpus, stratified_split, write_dataset,
    DatasetSplit, LabelSchema, PaperRecord,
};
use crate::embeddings::{train_static_embeddings, EmbeddingMode};
use crate::error::{Error, Result};
use crate::metrics::EvalReport;
use crate::models::{parse_key_values, Family, Model, ModelConfig, Pooling};
use crate::saliency::{render_heatmap, token_saliency, HeatmapFormat, Normalization};
use crate::textpipe::{encode, preprocess_title, Vocabulary};
use crate::trainer::{
    derive_seed, grid_search, save_trial, score, summary_csv, train, EncodedSet, GridAxes,
    TrainConfig, TrialStatus,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRIAL: i32 = 3;

pub const OUT_ENV: &str = "TITLETOPIC_OUT";
const DEFAULT_OUT: &str = "titletopic-out";
const SPLIT_FILES: [&str; 3] = ["train.csv", "validation.csv", "test.csv"];

#[derive(Parser, Debug)]
#[command(
    name = "titletopic",
    version,
    about = "Predict a paper's AI sub-field from its title"
)]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// rnn, lstm, gru or transformer.
    #[arg(long, global = true, visible_alias = "family")]
    model: Option<String>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    layers: Option<usize>,
    #[arg(long, global = true)]
    heads: Option<usize>,
    #[arg(long = "embed-dim", global = true)]
    embed_dim: Option<usize>,
    /// lookup, skipgram or subword.
    #[arg(long, global = true)]
    embedding: Option<String>,
    /// first or last.
    #[arg(long, global = true)]
    pooling: Option<String>,
    /// Output directory (default: $TITLETOPIC_OUT, then ./titletopic-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent grid trials.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Dataset file, or a directory holding a materialized split.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Directory written by `train`.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long = "batch-size", global = true)]
    batch_size: Option<usize>,
    #[arg(long = "max-epochs", global = true)]
    max_epochs: Option<usize>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    #[arg(long = "min-count", global = true)]
    min_count: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a pivot-table CSV and write a normalized copy.
    Ingest,
    /// Write stratified train/validation/test files.
    Split,
    /// Train static word vectors on the dataset titles.
    Embed,
    /// Train one model and write its logs and checkpoint.
    Train,
    /// Train every cell of a hyper-parameter grid.
    Grid {
        /// recurrent, transformer or embedding (default follows --model).
        #[arg(long)]
        axes: Option<String>,
        #[arg(long = "grid-hidden", value_delimiter = ',')]
        grid_hidden: Vec<usize>,
        #[arg(long = "grid-layers", value_delimiter = ',')]
        grid_layers: Vec<usize>,
        #[arg(long = "grid-heads", value_delimiter = ',')]
        grid_heads: Vec<usize>,
        #[arg(long = "grid-embed-dims", value_delimiter = ',')]
        grid_embed_dims: Vec<usize>,
        #[arg(long = "grid-embeddings", value_delimiter = ',')]
        grid_embeddings: Vec<String>,
    },
    /// Score a checkpoint (or a classical baseline) on the test split.
    Eval {
        /// nb, cnb or knn instead of a checkpoint.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Cross-validate the baseline over this many folds instead.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Token saliency heatmap for one title.
    Explain {
        #[arg(long)]
        title: String,
        /// Label name or index (default: best-scoring label).
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value = "html")]
        format: String,
        /// max or sequence.
        #[arg(long, default_value = "max")]
        normalize: String,
    },
    /// Write a keyword-planted synthetic corpus.
    Synth {
        #[arg(long = "per-label", default_value_t = 200)]
        per_label: usize,
    },
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub family: Family,
    /// `None` means the family default.
    pub hidden: Option<usize>,
    pub layers: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub embedding: EmbeddingMode,
    pub pooling: Option<Pooling>,
    pub out: PathBuf,
    pub parallel: usize,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            family: Family::Gru,
            hidden: None,
            layers: 1,
            heads: 8,
            embed_dim: 128,
            embedding: EmbeddingMode::Lookup,
            pooling: None,
            out: std::env::var_os(OUT_ENV)
                .map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from),
            parallel: 1,
            data: None,
            checkpoint: None,
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl RunConfig {
    /// Set one key from its text form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "model" | "family" => self.family = value.parse()?,
            "hidden" => self.hidden = Some(parse(key, value)?),
            "layers" => self.layers = parse(key, value)?,
            "heads" => self.heads = parse(key, value)?,
            "embed_dim" | "embed-dim" => self.embed_dim = parse(key, value)?,
            "embedding" => self.embedding = value.parse()?,
            "pooling" => self.pooling = Some(value.parse()?),
            "out" => self.out = PathBuf::from(value),
            "parallel" => self.parallel = parse(key, value)?,
            "data" => self.data = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "lr" => self.train.lr = parse(key, value)?,
            "batch_size" | "batch-size" => self.train.batch_size = parse(key, value)?,
            "max_epochs" | "max-epochs" => self.train.max_epochs = parse(key, value)?,
            "patience" => self.train.patience = parse(key, value)?,
            "min_count" | "min-count" => self.train.min_count = parse(key, value)?,
            "beta1" => self.train.beta1 = parse(key, value)?,
            "beta2" => self.train.beta2 = parse(key, value)?,
            "restore_best" => self.train.restore_best = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults, then the config file, then flags.
    fn resolve(flags: &Flags) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &flags.config {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (k, v) in parse_key_values(&text)? {
                cfg.apply(&k, &v)?;
            }
        }
        let mut set = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                set.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        put("seed", flags.seed.map(|v| v.to_string()));
        put("model", flags.model.clone());
        put("hidden", flags.hidden.map(|v| v.to_string()));
        put("layers", flags.layers.map(|v| v.to_string()));
        put("heads", flags.heads.map(|v| v.to_string()));
        put("embed_dim", flags.embed_dim.map(|v| v.to_string()));
        put("embedding", flags.embedding.clone());
        put("pooling", flags.pooling.clone());
        put("out", path(&flags.out));
        put("parallel", flags.parallel.map(|v| v.to_string()));
        put("data", path(&flags.data));
        put("checkpoint", path(&flags.checkpoint));
        put("lr", flags.lr.map(|v| v.to_string()));
        put("batch_size", flags.batch_size.map(|v| v.to_string()));
        put("max_epochs", flags.max_epochs.map(|v| v.to_string()));
        put("patience", flags.patience.map(|v| v.to_string()));
        put("min_count", flags.min_count.map(|v| v.to_string()));
        for (k, v) in set {
            cfg.apply(&k, &v)?;
        }
        cfg.train.seed = cfg.seed;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Model configuration with family defaults filled in.
    pub fn model_config(&self, schema: &LabelSchema) -> Result<ModelConfig> {
        let hidden = self
            .hidden
            .unwrap_or(if self.family.is_recurrent() { 512 } else { 128 });
        let mut m = ModelConfig::new(self.family, hidden, self.layers, 1);
        m.heads = self.heads;
        m.embed_dim = self.embed_dim;
        m.embedding = self.embedding;
        if let Some(p) = self.pooling {
            m.pooling = p;
        }
        m.n_labels = schema.n_trainable();
        m.validate()?;
        Ok(m)
    }

    /// Flat key=value text that `apply` reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "model={}", self.family);
        if let Some(h) = self.hidden {
            let _ = writeln!(s, "hidden={h}");
        }
        let _ = writeln!(s, "layers={}", self.layers);
        let _ = writeln!(s, "heads={}", self.heads);
        let _ = writeln!(s, "embed_dim={}", self.embed_dim);
        let _ = writeln!(s, "embedding={}", self.embedding);
        if let Some(p) = self.pooling {
            let _ = writeln!(s, "pooling={p}");
        }
        let _ = writeln!(s, "out={}", self.out.display());
        let _ = writeln!(s, "parallel={}", self.parallel);
        if let Some(d) = &self.data {
            let _ = writeln!(s, "data={}", d.display());
        }
        if let Some(c) = &self.checkpoint {
            let _ = writeln!(s, "checkpoint={}", c.display());
        }
        let t = &self.train;
        let _ = writeln!(s, "lr={}", t.lr);
        let _ = writeln!(s, "beta1={}", t.beta1);
        let _ = writeln!(s, "beta2={}", t.beta2);
        let _ = writeln!(s, "batch_size={}", t.batch_size);
        let _ = writeln!(s, "max_epochs={}", t.max_epochs);
        let _ = writeln!(s, "patience={}", t.patience);
        let _ = writeln!(s, "min_count={}", t.min_count);
        let _ = writeln!(s, "restore_best={}", t.restore_best);
        s
    }

    fn data(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("--data is required".into()))
    }

    fn checkpoint(&self) -> Result<&Path> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| Error::Config("--checkpoint is required".into()))
    }
}

/// Exit status for an error: configuration problems are usage errors,
/// everything else is a data error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Parse `args` (program name first), run, and return the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    let schema = LabelSchema::default();
    std::fs::create_dir_all(&cfg.out)?;
    std::fs::write(cfg.out.join("run.cfg"), cfg.to_text())?;
    info!("output directory {}", cfg.out.display());
    match cli.command {
        Command::Ingest => ingest(&cfg, &schema),
        Command::Split => split_cmd(&cfg, &schema),
        Command::Embed => embed(&cfg, &schema),
        Command::Train => train_cmd(&cfg, &schema),
        Command::Grid {
            axes,
            grid_hidden,
            grid_layers,
            grid_heads,
            grid_embed_dims,
            grid_embeddings,
        } => {
            let mut a = match axes.as_deref() {
                None if cfg.family.is_recurrent() => GridAxes::recurrent(),
                None | Some("transformer") => GridAxes::transformer(),
                Some("recurrent") => GridAxes::recurrent(),
                Some("embedding") => {
                    let base = cfg.model_config(&schema)?;
                    GridAxes::embeddings(base.hidden, base.layers, base.heads, base.pooling)
                }
                Some(other) => return Err(Error::Config(format!("unknown grid axes {other:?}"))),
            };
            if axes.as_deref() != Some("embedding") {
                a.embed_dims = vec![cfg.embed_dim];
                a.embed_modes = vec![cfg.embedding];
                if let Some(p) = cfg.pooling {
                    a.poolings = vec![p];
                }
                if cfg.family.is_recurrent() {
                    a.heads = vec![cfg.heads];
                    a.poolings = vec![cfg.pooling.unwrap_or(Pooling::Last)];
                }
            }
            if !grid_hidden.is_empty() {
                a.hidden = grid_hidden;
            }
            if !grid_layers.is_empty() {
                a.layers = grid_layers;
            }
            if !grid_heads.is_empty() {
                a.heads = grid_heads;
            }
            if !grid_embed_dims.is_empty() {
                a.embed_dims = grid_embed_dims;
            }
            if !grid_embeddings.is_empty() {
                a.embed_modes = grid_embeddings
                    .iter()
                    .map(|m| m.parse())
                    .collect::<Result<_>>()?;
            }
            grid_cmd(&cfg, &schema, &a)
        }
        Command::Eval { baseline, k, folds } => {
            eval_cmd(&cfg, &schema, baseline.as_deref(), k, folds)
        }
        Command::Explain {
            title,
            target,
            format,
            normalize,
        } => explain(
            &cfg,
            &schema,
            &title,
            target.as_deref(),
            &format,
            &normalize,
        ),
        Command::Synth { per_label } => {
            let records = make_synthetic_corpus(&schema, per_label, derive_seed(cfg.seed, "synth"));
            let path = cfg.out.join("synthetic.csv");
            write_dataset(&path, &records, &schema)?;
            println!("wrote {} records to {}", records.len(), path.display());
            Ok(EXIT_OK)
        }
    }
}

fn ingest(cfg: &RunConfig, schema: &LabelSchema) -> Result<i32> {
    let loaded = load_dataset(cfg.data()?, schema)?;
    let total = loaded.records.len();
    let records = drop_unlabeled(loaded.records, schema);
    let path = cfg.out.join("dataset.csv");
    write_dataset(&path, &records, schema)?;
    println!(
        "kept {} records ({} empty titles, {} without a trainable label dropped) -> {}",
        records.len(),
        loaded.rejected,
        total - records.len(),
        path.display()
    );
    Ok(EXIT_OK)
}

fn load_records(path: &Path, schema: &LabelSchema) -> Result<Vec<PaperRecord>> {
    if !path.is_file() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} not found", path.display()),
        )));
    }
    Ok(drop_unlabeled(load_dataset(path, schema)?.records, schema))
}

/// A materialized split directory, or a dataset split on the fly.
fn load_split(cfg: &RunConfig, schema: &LabelSchema) -> Result<DatasetSplit> {
    let data = cfg.data()?;
    if data.is_dir() {
        let part = |i: usize| load_records(&data.join(SPLIT_FILES[i]), schema);
        let (train, validation, test) = (part(0)?, part(1)?, part(2)?);
        let n = (train.len() + validation.len() + test.len()).max(1) as f64;
        let ratios = [
            train.len() as f64 / n,
            validation.len() as f64 / n,
            test.len() as f64 / n,
        ];
        return Ok(DatasetSplit {
            train,
            validation,
            test,
            ratios,
        });
    }
    stratified_split(
        &load_records(data, schema)?,
        [0.9, 0.05, 0.05],
        derive_seed(cfg.seed, "split"),
    )
}

fn split_cmd(cfg: &RunConfig, schema: &LabelSchema) -> Result<i32> {
    let split = stratified_split(
        &load_records(cfg.data()?, schema)?,
        [0.9, 0.05, 0.05],
        derive_seed(cfg.seed, "split"),
    )?;
    for (name, part) in SPLIT_FILES
        .iter()
        .zip([&split.train, &split.validation, &split.test])
    {
        write_dataset(&cfg.out.join(name), part, schema)?;
        println!("{name}: {} records", part.len());
    }
    Ok(EXIT_OK)
}

fn embed(cfg: &RunConfig, schema: &LabelSchema) -> Result<i32> {
    let data = cfg.data()?;
    let records = if data.is_dir() {
        load_split(cfg, schema)?.train
    } else {
        load_records(data, schema)?
    };
    let titles: Vec<String> = records.iter().map(|r| preprocess_title(&r.title)).collect();
    let vectors = train_static_embeddings(
        &titles,
        cfg.embed_dim,
        cfg.embedding,
        derive_seed(cfg.seed, "static-embedding"),
    )?;
    let path = cfg.out.join("vectors.txt");
    vectors.save(&path)?;
    println!(
        "wrote {} {}-d vectors to {}",
        vectors.len(),
        cfg.embed_dim,
        path.display()
    );
    Ok(EXIT_OK)
}

fn train_cmd(cfg: &RunConfig, schema: &LabelSchema) -> Result<i32> {
    let split = load_split(cfg, schema)?;
    let model_cfg = cfg.model_config(schema)?;
    let trial = train(&model_cfg, &cfg.train, &split, schema)?;
    save_trial(&cfg.out, &trial, schema)?;
    let r = &trial.result;
    match &r.status {
        TrialStatus::Completed => {
            println!(
                "best epoch {} of {}; test macro AUROC {}",
                r.best_epoch,
                r.epochs.len(),
                r.test_auroc().map_or("n/a".into(), |a| format!("{a:.4}"))
            );
            Ok(EXIT_OK)
        }
        TrialStatus::Failed(reason) => {
            eprintln!("trial failed: {reason}");
            Ok(EXIT_TRIAL)
        }
    }
}

fn grid_cmd(cfg: &RunConfig, schema: &LabelSchema, axes: &GridAxes) -> Result<i32> {
    let split = load_split(cfg, schema)?;
    let base = cfg.model_config(schema)?;
    let out = cfg.out.clone();
    let save = |i: usize, trial: &crate::trainer::Trial| {
        if let Err(e) = save_trial(&out.join(format!("cell-{i:03}")), trial, schema) {
            log::warn!("could not save cell {i}: {e}");
        }
    };
    let results = grid_search(&base, axes, &split, schema, &cfg.train, cfg.parallel, &save)?;
    let csv = summary_csv(&results);
    std::fs::write(cfg.out.join("summary.csv"), &csv)?;
    print!("{csv}");
    let failed = results
        .iter()
        .filter(|r| r.status != TrialStatus::Completed)
        .count();
    if failed > 0 {
        eprintln!("{failed} of {} trials failed", results.len());
        return Ok(EXIT_TRIAL);
    }
    Ok(EXIT_OK)
}

fn label_names(schema: &LabelSchema) -> Vec<String> {
    schema
        .trainable_names()
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn eval_cmd(
    cfg: &RunConfig,
    schema: &LabelSchema,
    baseline: Option<&str>,
    k: usize,
    folds: Option<usize>,
) -> Result<i32> {
    let names = label_names(schema);
    if let Some(b) = baseline {
        let kind = match b {
            "nb" => BaselineKind::NaiveBayes,
            "cnb" => BaselineKind::ComplementNb,
            "knn" => BaselineKind::Knn(k),
            other => return Err(Error::Config(format!("unknown baseline {other:?}"))),
        };
        if let Some(folds) = folds {
            let data = cfg.data()?;
            let records = if data.is_dir() {
                let s = load_split(cfg, schema)?;
                [s.train, s.validation, s.test].concat()
            } else {
                load_records(data, schema)?
            };
            let cv = cross_validate(
                kind,
                &records,
                schema,
                folds,
                derive_seed(cfg.seed, "folds"),
            )?;
            let text = format!(
                "baseline={}\nfolds={folds}\nmean_macro_auroc={}\nsem={}\n",
                kind.name(),
                cv.mean,
                cv.sem
            );
            std::fs::write(cfg.out.join("eval.txt"), &text)?;
            print!("{text}");
            return Ok(EXIT_OK);
        }
        let split = load_split(cfg, schema)?;
        let scores = fit_and_score(kind, &split.train, &split.test, schema)?;
        let labels: Vec<Vec<u8>> = split
            .test
            .iter()
            .map(|r| {
                schema
                    .trainable_indices()
                    .iter()
                    .map(|&i| r.labels[i])
                    .collect()
            })
            .collect();
        return write_report(cfg, &EvalReport::from_scores(&scores, &labels)?, &names);
    }
    let dir = cfg.checkpoint()?;
    let model = Model::load(dir)?;
    let vocab = Vocabulary::load(&dir.join("vocab.tsv"))?;
    let split = load_split(cfg, schema)?;
    let test = EncodedSet::new(&split.test, schema, &vocab, &model.config);
    write_report(
        cfg,
        &EvalReport::from_scores(&score(&model, &test)?, &test.labels)?,
        &names,
    )
}

fn write_report(cfg: &RunConfig, report: &EvalReport, names: &[String]) -> Result<i32> {
    let text = report.to_key_values(names);
    std::fs::write(cfg.out.join("eval.txt"), &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}

fn explain(
    cfg: &RunConfig,
    schema: &LabelSchema,
    title: &str,
    target: Option<&str>,
    format: &str,
    normalize: &str,
) -> Result<i32> {
    let format: HeatmapFormat = format.parse()?;
    let how: Normalization = normalize.parse()?;
    let dir = cfg.checkpoint()?;
    let model = Model::load(dir)?;
    let vocab = Vocabulary::load(&dir.join("vocab.tsv"))?;
    let names = label_names(schema);
    let target = match target {
        None => None,
        Some(t) => Some(match t.parse::<usize>() {
            Ok(i) => i,
            Err(_) => names
                .iter()
                .position(|n| n == t)
                .ok_or_else(|| Error::Config(format!("unknown label {t:?}")))?,
        }),
    };
    let seq = encode(
        &preprocess_title(title),
        &vocab,
        model.config.max_len,
        model.config.uses_cls(),
    );
    let map = token_saliency(&model, &vocab, &seq, target, how)?;
    let ext = match format {
        HeatmapFormat::Ansi => "txt",
        HeatmapFormat::Html => "html",
    };
    let path = cfg.out.join(format!("saliency.{ext}"));
    render_heatmap(&map, format, &path, &names)?;
    for (i, p) in &map.top3 {
        println!("{} {:.4}", names[*i], p);
    }
    for (tok, s) in map.tokens.iter().zip(&map.scores) {
        println!("  {tok}\t{s:.4}");
    }
    println!("heatmap: {}", path.display());
    Ok(EXIT_OK)
}
