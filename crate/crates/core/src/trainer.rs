//! Multi-label training with early stopping, and the grid-search harness.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Adam, AdamConfig, Graph, ParamStore};
use crate::corpus::{DatasetSplit, LabelSchema, PaperRecord};
use crate::embeddings::{freeze_into_table, train_static_embeddings, EmbeddingMode};
use crate::error::{Error, Result};
use crate::metrics::{macro_auroc, EvalReport};
use crate::models::{bce_multilabel_loss, Family, Model, ModelConfig, Pooling};
use crate::textpipe::{build_vocab, encode, preprocess_title, TokenSequence, Vocabulary};

/// Independent seed for a named random stream.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // final avalanche (splitmix64)
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Minimum vocabulary count when the trainer builds the vocabulary.
    pub min_count: usize,
    /// Return the best-validation parameters rather than the last ones.
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 64,
            max_epochs: 200,
            patience: 15,
            seed: 0,
            min_count: 1,
            restore_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "patience, batch_size and max_epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Stop once the last `patience` values all fail to beat the best value seen
/// before them. Returns the decision and the index of the first best value.
pub fn early_stopping_check(history: &[f64], patience: usize) -> (StopDecision, usize) {
    let mut best = 0;
    for (i, &v) in history.iter().enumerate() {
        if v > history[best] {
            best = i;
        }
    }
    let stalled = history.len() > patience && history.len() - 1 - best >= patience;
    (
        if stalled {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        },
        best,
    )
}

/// Encoded titles with their trainable-label targets.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSet {
    pub seqs: Vec<TokenSequence>,
    pub labels: Vec<Vec<u8>>,
}

impl EncodedSet {
    pub fn new(
        records: &[PaperRecord],
        schema: &LabelSchema,
        vocab: &Vocabulary,
        config: &ModelConfig,
    ) -> Self {
        let idx = schema.trainable_indices();
        EncodedSet {
            seqs: records
                .iter()
                .map(|r| {
                    encode(
                        &preprocess_title(&r.title),
                        vocab,
                        config.max_len,
                        config.uses_cls(),
                    )
                })
                .collect(),
            labels: records
                .iter()
                .map(|r| idx.iter().map(|&i| r.labels[i]).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }

    /// Drop titles with no real token (nothing to classify).
    fn non_empty(mut self) -> Self {
        let keep: Vec<bool> = self.seqs.iter().map(|s| s.real_len() > 0).collect();
        let mut k = keep.iter();
        self.seqs.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.labels.retain(|_| *k.next().unwrap());
        self
    }
}

pub const EVAL_BATCH: usize = 256;

pub fn score(model: &Model, set: &EncodedSet) -> Result<Vec<Vec<f64>>> {
    model.predict_logits(&set.seqs, EVAL_BATCH)
}

pub fn macro_auroc_of(model: &Model, set: &EncodedSet) -> Result<f64> {
    Ok(macro_auroc(&score(model, set)?, &set.labels)?.macro_auroc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_auroc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrialStatus {
    Completed,
    Failed(String),
}

impl TrialStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TrialStatus::Completed => "ok",
            TrialStatus::Failed(_) => "failed",
        }
    }
}

/// Outcome of the optimisation loop alone.
#[derive(Clone, Debug, PartialEq)]
pub struct FitOutcome {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 if none finished.
    pub best_epoch: usize,
    pub best_val: f64,
    pub status: TrialStatus,
}

/// Mini-batch Adam on mean BCE with validation-AUROC early stopping. On
/// return the model holds the best parameters seen, unless
/// `restore_best` is off.
pub fn fit(
    model: &mut Model,
    train: &EncodedSet,
    val: &EncodedSet,
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Empty(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let width = model.config.n_labels;
    if train.labels[0].len() != width {
        return Err(Error::shape("targets", &[train.labels[0].len()], &[width]));
    }
    let mut adam = Adam::new(&model.params, cfg.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::new();
    let mut epochs = Vec::new();
    let mut best: Option<(ParamStore, usize, f64)> = None;
    let mut status = TrialStatus::Completed;

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TokenSequence> = chunk.iter().map(|&i| &train.seqs[i]).collect();
            let targets: Vec<f64> = chunk
                .iter()
                .flat_map(|&i| train.labels[i].iter().map(|&y| f64::from(y)))
                .collect();
            let (loss, grads) = {
                let mut g = Graph::with_params(&model.params);
                let f = model.forward(&mut g, &batch)?;
                let l = bce_multilabel_loss(&mut g, f.logits, &targets)?;
                let loss = g.value(l).item();
                if !loss.is_finite() {
                    status = TrialStatus::Failed(format!("non-finite loss at epoch {epoch}"));
                    break 'epochs;
                }
                (loss, g.backward(l)?)
            };
            model.params.zero_grads();
            model.params.accumulate(&grads);
            adam.step(&mut model.params)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;
        let monitor = match macro_auroc_of(model, val) {
            Ok(v) => v,
            Err(e) => {
                status = TrialStatus::Failed(format!("validation failed at epoch {epoch}: {e}"));
                break;
            }
        };
        info!("epoch {epoch}: train_loss={train_loss:.6} val_macro_auroc={monitor:.6}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_macro_auroc: monitor,
        });
        history.push(monitor);
        let (decision, best_idx) = early_stopping_check(&history, cfg.patience);
        if best_idx + 1 == epoch {
            let params = if cfg.restore_best {
                model.params.clone()
            } else {
                ParamStore::new()
            };
            best = Some((params, epoch, monitor));
        }
        if decision == StopDecision::Stop {
            info!(
                "early stop after epoch {epoch}; best epoch {}",
                best_idx + 1
            );
            break;
        }
    }
    let (best_epoch, best_val) = match best {
        Some((params, e, v)) => {
            if cfg.restore_best {
                model.params = params;
            }
            (e, v)
        }
        None => (0, f64::NAN),
    };
    if let TrialStatus::Failed(reason) = &status {
        warn!("trial failed: {reason}");
    }
    Ok(FitOutcome {
        epochs,
        best_epoch,
        best_val,
        status,
    })
}

/// One full trial: configuration, curve, and held-out scores.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub status: TrialStatus,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
    pub test: Option<EvalReport>,
    pub seconds: f64,
}

impl TrialResult {
    pub fn test_auroc(&self) -> Option<f64> {
        self.test.as_ref().map(|r| r.macro_auroc)
    }

    pub fn epoch_log_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_macro_auroc\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{}", e.epoch, e.train_loss, e.val_macro_auroc);
        }
        s
    }

    pub fn summary_row(&self) -> String {
        let c = &self.model_config;
        let transformer = c.family == Family::Transformer;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            c.family,
            c.layers,
            if transformer {
                c.heads.to_string()
            } else {
                String::new()
            },
            c.hidden,
            c.embedding,
            c.embed_dim,
            if transformer { c.pooling.as_str() } else { "" },
            self.test_auroc().map(|a| a.to_string()).unwrap_or_default(),
            self.status.label()
        )
    }
}

pub const SUMMARY_HEADER: &str =
    "family,layers,heads,hidden,embed_mode,embed_dim,pooling,test_auroc,status";

/// A trained trial with everything needed to reuse the model.
pub struct Trial {
    pub result: TrialResult,
    pub model: Model,
    pub vocab: Vocabulary,
}

/// Vocabulary from the training titles, and a freshly initialised model for
/// it; static modes train and freeze their vectors first.
pub fn prepare_model(
    config: &ModelConfig,
    train_records: &[PaperRecord],
    min_count: usize,
    seed: u64,
) -> Result<(Vocabulary, Model)> {
    let titles: Vec<String> = train_records
        .iter()
        .map(|r| preprocess_title(&r.title))
        .collect();
    let vocab = build_vocab(&titles, min_count);
    let mut config = config.clone();
    config.vocab_size = vocab.len();
    let init_seed = derive_seed(seed, "init");
    let model = match config.embedding {
        EmbeddingMode::Lookup => Model::init(config, init_seed)?,
        mode => {
            let vectors = train_static_embeddings(
                &titles,
                config.embed_dim,
                mode,
                derive_seed(seed, "static-embedding"),
            )?;
            let table = freeze_into_table(&vectors, &vocab, config.embed_dim)?;
            Model::init_with_table(config, table, init_seed)?
        }
    };
    Ok((vocab, model))
}

fn shape_only(config: &ModelConfig) -> ModelConfig {
    ModelConfig {
        vocab_size: config.vocab_size.max(1),
        ..config.clone()
    }
}

/// Build, fit and test one configuration on a split.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    split: &DatasetSplit,
    schema: &LabelSchema,
) -> Result<Trial> {
    train_cfg.validate()?;
    shape_only(model_cfg).validate()?;
    if model_cfg.n_labels != schema.n_trainable() {
        return Err(Error::Config(format!(
            "model has {} outputs but the schema trains {} labels",
            model_cfg.n_labels,
            schema.n_trainable()
        )));
    }
    let start = Instant::now();
    let (vocab, mut model) =
        prepare_model(model_cfg, &split.train, train_cfg.min_count, train_cfg.seed)?;
    let cfg = model.config.clone();
    let tr = EncodedSet::new(&split.train, schema, &vocab, &cfg).non_empty();
    let va = EncodedSet::new(&split.validation, schema, &vocab, &cfg).non_empty();
    let te = EncodedSet::new(&split.test, schema, &vocab, &cfg).non_empty();
    let outcome = fit(&mut model, &tr, &va, train_cfg)?;
    let test = match (&outcome.status, te.is_empty()) {
        (TrialStatus::Completed, false) => {
            Some(EvalReport::from_scores(&score(&model, &te)?, &te.labels)?)
        }
        _ => None,
    };
    Ok(Trial {
        result: TrialResult {
            model_config: cfg,
            train_config: train_cfg.clone(),
            status: outcome.status,
            best_epoch: outcome.best_epoch,
            epochs: outcome.epochs,
            test,
            seconds: start.elapsed().as_secs_f64(),
        },
        model,
        vocab,
    })
}

/// Write a trial's curve, result, checkpoint and vocabulary under `dir`.
pub fn save_trial(dir: &Path, trial: &Trial, schema: &LabelSchema) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("epochs.csv"), trial.result.epoch_log_csv())?;
    let r = &trial.result;
    let mut s = String::new();
    let _ = writeln!(s, "status={}", r.status.label());
    if let TrialStatus::Failed(reason) = &r.status {
        let _ = writeln!(s, "failure={reason}");
    }
    let _ = writeln!(s, "best_epoch={}", r.best_epoch);
    let _ = writeln!(s, "epochs_run={}", r.epochs.len());
    let _ = writeln!(s, "seconds={:.3}", r.seconds);
    if let Some(t) = &r.test {
        let names: Vec<String> = schema
            .trainable_names()
            .iter()
            .map(|n| n.to_string())
            .collect();
        s.push_str(&t.to_key_values(&names));
    }
    std::fs::write(dir.join("result.txt"), s)?;
    trial.model.save(dir)?;
    trial.vocab.save(&dir.join("vocab.tsv"))?;
    Ok(())
}

/// Values tried along each grid axis.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAxes {
    pub hidden: Vec<usize>,
    pub layers: Vec<usize>,
    pub heads: Vec<usize>,
    pub embed_dims: Vec<usize>,
    pub embed_modes: Vec<EmbeddingMode>,
    pub poolings: Vec<Pooling>,
}

impl GridAxes {
    /// Hidden {128,256,512} × layers {1..4}.
    pub fn recurrent() -> Self {
        GridAxes {
            hidden: vec![128, 256, 512],
            layers: vec![1, 2, 3, 4],
            heads: vec![8],
            embed_dims: vec![128],
            embed_modes: vec![EmbeddingMode::Lookup],
            poolings: vec![Pooling::Last],
        }
    }

    /// Layers {1..4} × heads {8,16,32} × hidden {128,256,512}.
    pub fn transformer() -> Self {
        GridAxes {
            heads: vec![8, 16, 32],
            poolings: vec![Pooling::First],
            ..GridAxes::recurrent()
        }
    }

    /// Embedding mode × embedding dimension at a fixed architecture.
    pub fn embeddings(hidden: usize, layers: usize, heads: usize, pooling: Pooling) -> Self {
        GridAxes {
            hidden: vec![hidden],
            layers: vec![layers],
            heads: vec![heads],
            embed_dims: vec![128, 256, 512],
            embed_modes: vec![
                EmbeddingMode::Lookup,
                EmbeddingMode::Skipgram,
                EmbeddingMode::Subword,
            ],
            poolings: vec![pooling],
        }
    }

    pub fn len(&self) -> usize {
        self.hidden.len()
            * self.layers.len()
            * self.heads.len()
            * self.embed_dims.len()
            * self.embed_modes.len()
            * self.poolings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every cell as a model configuration, in a fixed nesting order.
    pub fn cells(&self, base: &ModelConfig) -> Result<Vec<ModelConfig>> {
        if self.is_empty() {
            return Err(Error::Config("grid axis is empty".into()));
        }
        let mut out = Vec::with_capacity(self.len());
        for &mode in &self.embed_modes {
            for &embed_dim in &self.embed_dims {
                for &layers in &self.layers {
                    for &heads in &self.heads {
                        for &hidden in &self.hidden {
                            for &pooling in &self.poolings {
                                let c = ModelConfig {
                                    hidden,
                                    layers,
                                    heads,
                                    embed_dim,
                                    pooling,
                                    embedding: mode,
                                    ..base.clone()
                                };
                                shape_only(&c).validate()?;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One trial per grid cell, each seeded from (base seed, cell index). Up to
/// `parallel` trials run at once; results come back in cell order. A failing
/// cell is recorded and never stops its siblings.
pub fn grid_search(
    base: &ModelConfig,
    axes: &GridAxes,
    split: &DatasetSplit,
    schema: &LabelSchema,
    train_cfg: &TrainConfig,
    parallel: usize,
    on_done: &(dyn Fn(usize, &Trial) + Sync),
) -> Result<Vec<TrialResult>> {
    let cells = axes.cells(base)?;
    let slots: Mutex<Vec<Option<TrialResult>>> = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= cells.len() {
            break;
        }
        let cfg = TrainConfig {
            seed: derive_seed(train_cfg.seed, &format!("cell-{i}")),
            ..train_cfg.clone()
        };
        let result = match train(&cells[i], &cfg, split, schema) {
            Ok(trial) => {
                on_done(i, &trial);
                trial.result
            }
            Err(e) => TrialResult {
                model_config: cells[i].clone(),
                train_config: cfg,
                status: TrialStatus::Failed(e.to_string()),
                best_epoch: 0,
                epochs: Vec::new(),
                test: None,
                seconds: 0.0,
            },
        };
        slots.lock().unwrap()[i] = Some(result);
    };
    std::thread::scope(|s| {
        for _ in 1..parallel.max(1) {
            s.spawn(worker);
        }
        worker();
    });
    Ok(slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(Option::unwrap)
        .collect())
}

pub fn summary_csv(results: &[TrialResult]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in results {
        s.push_str(&r.summary_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_synthetic_corpus, stratified_split};

    #[test]
    fn early_stopping_examples() {
        assert_eq!(
            early_stopping_check(&[0.5, 0.6, 0.7], 15),
            (StopDecision::Continue, 2)
        );
        let mut h = vec![0.7];
        h.extend([
            0.7, 0.6, 0.65, 0.7, 0.5, 0.69, 0.7, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.7,
        ]);
        assert_eq!(h.len(), 16);
        assert_eq!(early_stopping_check(&h, 15), (StopDecision::Stop, 0));
        assert_eq!(
            early_stopping_check(&h[..15], 15),
            (StopDecision::Continue, 0)
        );
        let mut reset = h[..15].to_vec();
        reset.push(0.71);
        assert_eq!(
            early_stopping_check(&reset, 15),
            (StopDecision::Continue, 15)
        );
    }

    #[test]
    fn plateau_stops_at_start_plus_patience() {
        let curve: Vec<f64> = (0..40)
            .map(|e| if e < 10 { e as f64 / 10.0 } else { 0.9 })
            .collect();
        let mut stopped = None;
        for n in 1..=curve.len() {
            if let (StopDecision::Stop, best) = early_stopping_check(&curve[..n], 15) {
                stopped = Some((n - 1, best));
                break;
            }
        }
        assert_eq!(stopped, Some((9 + 15, 9)));
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, "init"), derive_seed(1, "shuffle"));
        assert_ne!(derive_seed(1, "init"), derive_seed(2, "init"));
        assert_eq!(derive_seed(7, "cell-3"), derive_seed(7, "cell-3"));
    }

    #[test]
    fn grid_shapes() {
        let base = ModelConfig::new(Family::Gru, 128, 1, 10);
        assert_eq!(GridAxes::recurrent().cells(&base).unwrap().len(), 12);
        let t = ModelConfig::transformer_default(10);
        assert_eq!(GridAxes::transformer().cells(&t).unwrap().len(), 36);
        assert_eq!(
            GridAxes::embeddings(128, 1, 8, Pooling::First)
                .cells(&t)
                .unwrap()
                .len(),
            9
        );
        let mut empty = GridAxes::recurrent();
        empty.layers.clear();
        assert!(matches!(empty.cells(&base), Err(Error::Config(_))));
    }

    fn tiny_split() -> (DatasetSplit, LabelSchema) {
        let schema = LabelSchema::default();
        let records = make_synthetic_corpus(&schema, 6, 0);
        (
            stratified_split(&records, [0.6, 0.2, 0.2], 1).unwrap(),
            schema,
        )
    }

    #[test]
    fn training_is_deterministic_and_restores_best() {
        let (split, schema) = tiny_split();
        let mut mc = ModelConfig::new(Family::Gru, 8, 1, 0);
        mc.embed_dim = 8;
        let tc = TrainConfig {
            lr: 1e-2,
            batch_size: 16,
            max_epochs: 6,
            patience: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let a = train(&mc, &tc, &split, &schema).unwrap();
        let b = train(&mc, &tc, &split, &schema).unwrap();
        assert_eq!(a.result.epochs, b.result.epochs);
        assert_eq!(a.result.status, TrialStatus::Completed);
        let best = &a.result.epochs[a.result.best_epoch - 1];
        let va = EncodedSet::new(&split.validation, &schema, &a.vocab, &a.model.config);
        assert_eq!(macro_auroc_of(&a.model, &va).unwrap(), best.val_macro_auroc);
        assert!(a.result.test_auroc().is_some());
        let dir = tempfile::tempdir().unwrap();
        save_trial(dir.path(), &a, &schema).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("epochs.csv")).unwrap();
        assert!(csv.starts_with("epoch,train_loss,val_macro_auroc\n"));
        assert_eq!(csv.lines().count(), a.result.epochs.len() + 1);
        let back = Model::load(dir.path()).unwrap();
        assert_eq!(score(&back, &va).unwrap(), score(&a.model, &va).unwrap());
    }

    #[test]
    fn divergence_fails_the_trial_not_the_grid() {
        let (split, schema) = tiny_split();
        let mut mc = ModelConfig::new(Family::Rnn, 8, 1, 0);
        mc.embed_dim = 8;
        let axes = GridAxes {
            hidden: vec![8],
            layers: vec![1, 2],
            ..GridAxes::recurrent()
        };
        let bad = TrainConfig {
            lr: f64::MAX,
            batch_size: 8,
            max_epochs: 3,
            patience: 1,
            ..TrainConfig::default()
        };
        let results = grid_search(&mc, &axes, &split, &schema, &bad, 2, &|_, _| {}).unwrap();
        assert_eq!(results.len(), 2);
        for r in &results {
            assert!(matches!(r.status, TrialStatus::Failed(_)), "{:?}", r.status);
            assert!(r.summary_row().ends_with(",failed"));
        }
        let csv = summary_csv(&results);
        assert!(csv.starts_with(SUMMARY_HEADER));
    }
}
