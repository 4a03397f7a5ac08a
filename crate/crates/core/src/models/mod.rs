//! Sequence classifiers: vanilla RNN, LSTM, GRU and a transformer encoder,
//! each ending in a multi-label linear head that emits raw logits.

mod recurrent;
mod transformer;


use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::checkpoint::{load_checkpoint, save_checkpoint};
use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::embeddings::{EmbeddingMode, EmbeddingTable};
use crate::error::{Error, Result};
use crate::textpipe::{TokenSequence, CLS_ID, MAX_LEN, PAD_ID};

pub use recurrent::recurrent_forward;
pub use transformer::{multi_head_attention, transformer_encode, Attention};

pub const N_LABELS: usize = 15;
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "model.cfg";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Rnn,
    Lstm,
    Gru,
    Transformer,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Rnn => "rnn",
            Family::Lstm => "lstm",
            Family::Gru => "gru",
            Family::Transformer => "transformer",
        }
    }

    pub fn is_recurrent(self) -> bool {
        self != Family::Transformer
    }

    /// Stacked gate blocks in the recurrent weight matrices.
    pub(crate) fn gates(self) -> usize {
        match self {
            Family::Rnn => 1,
            Family::Gru => 3,
            Family::Lstm => 4,
            Family::Transformer => 0,
        }
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(Family::Rnn),
            "lstm" => Ok(Family::Lstm),
            "gru" => Ok(Family::Gru),
            // both encoders are the same network without their pretraining objectives
            "transformer" | "bert" | "electra" => Ok(Family::Transformer),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which position feeds the head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pooling {
    /// `<cls>` at position 0 through a tanh pooler.
    First,
    /// The last non-pad position.
    Last,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::First => "first",
            Pooling::Last => "last",
        }
    }
}

impl FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(Pooling::First),
            "last" => Ok(Pooling::Last),
            other => Err(Error::Config(format!("unknown pooling {other:?}"))),
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub family: Family,
    pub hidden: usize,
    pub layers: usize,
    /// Attention heads; transformer only.
    pub heads: usize,
    pub embed_dim: usize,
    /// Transformer only; recurrent models always read the last state.
    pub pooling: Pooling,
    pub embedding: EmbeddingMode,
    pub n_labels: usize,
    pub vocab_size: usize,
    pub max_len: usize,
}

impl ModelConfig {
    pub fn new(family: Family, hidden: usize, layers: usize, vocab_size: usize) -> Self {
        ModelConfig {
            family,
            hidden,
            layers,
            heads: 8,
            embed_dim: 128,
            pooling: if family.is_recurrent() {
                Pooling::Last
            } else {
                Pooling::First
            },
            embedding: EmbeddingMode::Lookup,
            n_labels: N_LABELS,
            vocab_size,
            max_len: MAX_LEN,
        }
    }

    /// One layer, 8 heads, hidden 128, first-token pooling.
    pub fn transformer_default(vocab_size: usize) -> Self {
        ModelConfig::new(Family::Transformer, 128, 1, vocab_size)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("embed_dim", self.embed_dim),
            ("n_labels", self.n_labels),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.family == Family::Transformer
            && (self.heads == 0 || !self.hidden.is_multiple_of(self.heads))
        {
            return Err(Error::Config(format!(
                "hidden {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }

    /// Whether encoded titles must start with `<cls>`.
    pub fn uses_cls(&self) -> bool {
        self.family == Family::Transformer && self.pooling == Pooling::First
    }

    pub fn to_text(&self) -> String {
        format!(
            "family={}\nhidden={}\nlayers={}\nheads={}\nembed_dim={}\npooling={}\nembedding={}\nn_labels={}\nvocab_size={}\nmax_len={}\n",
            self.family,
            self.hidden,
            self.layers,
            self.heads,
            self.embed_dim,
            self.pooling,
            self.embedding,
            self.n_labels,
            self.vocab_size,
            self.max_len
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Format(format!("model config lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("model config {k} is not a count")))
        };
        let cfg = ModelConfig {
            family: get("family")?.parse()?,
            hidden: num("hidden")?,
            layers: num("layers")?,
            heads: num("heads")?,
            embed_dim: num("embed_dim")?,
            pooling: get("pooling")?.parse()?,
            embedding: get("embedding")?.parse()?,
            n_labels: num("n_labels")?,
            vocab_size: num("vocab_size")?,
            max_len: num("max_len")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..bound))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let normal = rand_distr::Normal::new(0.0, 0.02).unwrap();
    let data = (0..rows * cols).map(|_| rng.sample(normal)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Flat `key=value` lines; blank lines and `#` comments ignored.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: i + 1,
            column: "line".into(),
            message: format!("expected key=value, got {line:?}"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Mean binary cross-entropy over every (sample, label) cell of
/// `[batch × n_labels]` logits; `targets` is row-major.
pub fn bce_multilabel_loss(g: &mut Graph, logits: Var, targets: &[f64]) -> Result<Var> {
    g.bce_with_logits(logits, targets)
}

/// Where each embedded token row sits in the stacked input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub batch: usize,
    pub steps: usize,
    /// Row `t * batch + b` when true, `b * steps + t` otherwise.
    pub time_major: bool,
    pub lens: Vec<usize>,
}

impl Layout {
    pub fn row(&self, b: usize, t: usize) -> usize {
        if self.time_major {
            t * self.batch + b
        } else {
            b * self.steps + t
        }
    }
}

/// Handles into a graph after a forward pass.
pub struct Forward {
    /// `[batch × n_labels]` raw logits.
    pub logits: Var,
    /// Gathered embedding rows, laid out per `layout`.
    pub embedded: Var,
    pub layout: Layout,
}

/// A classifier: configuration plus its named parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Fresh weights with a random embedding table, trainable only in lookup mode.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = EmbeddingTable::random(config.vocab_size, config.embed_dim, &mut rng);
        table.trainable = config.embedding == EmbeddingMode::Lookup;
        Self::build(config, table, &mut rng)
    }

    /// Fresh weights around a given table (typically frozen static vectors).
    pub fn init_with_table(config: ModelConfig, table: EmbeddingTable, seed: u64) -> Result<Model> {
        config.validate()?;
        if table.matrix.shape() != [config.vocab_size, config.embed_dim] {
            return Err(Error::shape(
                "embedding table",
                table.matrix.shape(),
                &[config.vocab_size, config.embed_dim],
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // keep the weight stream aligned with `init`
        let _ = EmbeddingTable::random(config.vocab_size, config.embed_dim, &mut rng);
        Self::build(config, table, &mut rng)
    }

    fn build(config: ModelConfig, table: EmbeddingTable, rng: &mut ChaCha8Rng) -> Result<Model> {
        let mut p = ParamStore::new();
        let mut pos_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let h = config.hidden;
        let e = config.embed_dim;
        let bound = 1.0 / (h as f64).sqrt();
        let mut uniform = |rows: usize, cols: usize| uniform_matrix(rng, rows, cols, bound);
        let zeros = |n: usize| Tensor::vector(vec![0.0; n]);

        p.add("embedding", table.matrix, table.trainable)?;
        match config.family {
            Family::Transformer => {
                if e != h {
                    p.add("encoder.in_proj.w", uniform(e, h), true)?;
                    p.add("encoder.in_proj.b", zeros(h), true)?;
                }
                p.add(
                    "encoder.pos",
                    normal_matrix(&mut pos_rng, config.max_len, h),
                    true,
                )?;
                for l in 0..config.layers {
                    for m in ["q", "k", "v", "o"] {
                        p.add(&format!("encoder.{l}.{m}.w"), uniform(h, h), true)?;
                        p.add(&format!("encoder.{l}.{m}.b"), zeros(h), true)?;
                    }
                    p.add(
                        &format!("encoder.{l}.ln1.gamma"),
                        Tensor::vector(vec![1.0; h]),
                        true,
                    )?;
                    p.add(&format!("encoder.{l}.ln1.beta"), zeros(h), true)?;
                    p.add(&format!("encoder.{l}.ffn1.w"), uniform(h, 4 * h), true)?;
                    p.add(&format!("encoder.{l}.ffn1.b"), zeros(4 * h), true)?;
                    p.add(&format!("encoder.{l}.ffn2.w"), uniform(4 * h, h), true)?;
                    p.add(&format!("encoder.{l}.ffn2.b"), zeros(h), true)?;
                    p.add(
                        &format!("encoder.{l}.ln2.gamma"),
                        Tensor::vector(vec![1.0; h]),
                        true,
                    )?;
                    p.add(&format!("encoder.{l}.ln2.beta"), zeros(h), true)?;
                }
                if config.pooling == Pooling::First {
                    p.add("pooler.w", uniform(h, h), true)?;
                    p.add("pooler.b", zeros(h), true)?;
                }
            }
            family => {
                let gh = family.gates() * h;
                for l in 0..config.layers {
                    let input = if l == 0 { e } else { h };
                    p.add(&format!("rnn.{l}.w_ih"), uniform(input, gh), true)?;
                    p.add(&format!("rnn.{l}.w_hh"), uniform(h, gh), true)?;
                    p.add(&format!("rnn.{l}.b_ih"), zeros(gh), true)?;
                    p.add(&format!("rnn.{l}.b_hh"), zeros(gh), true)?;
                }
            }
        }
        p.add("classifier.w", uniform(h, config.n_labels), true)?;
        p.add("classifier.b", zeros(config.n_labels), true)?;
        Ok(Model { config, params: p })
    }

    pub fn embedding_table(&self) -> EmbeddingTable {
        let p = self
            .params
            .by_name("embedding")
            .expect("embedding parameter");
        EmbeddingTable {
            matrix: p.value.clone(),
            trainable: p.trainable,
        }
    }

    /// Bind a named parameter into `g`.
    pub fn param<'p>(&'p self, g: &mut Graph<'p>, name: &str) -> Result<Var> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::Contract(format!("model has no parameter {name}")))?;
        g.param(id)
    }

    /// Forward a batch of encoded titles. The time axis is trimmed to the
    /// longest real length in the batch.
    pub fn forward<'p>(&'p self, g: &mut Graph<'p>, batch: &[&TokenSequence]) -> Result<Forward> {
        if batch.is_empty() {
            return Err(Error::Empty("forward on an empty batch".into()));
        }
        let lens: Vec<usize> = batch.iter().map(|s| s.real_len()).collect();
        if lens.contains(&0) {
            return Err(Error::Empty("sequence has no real tokens".into()));
        }
        if self.config.uses_cls() && batch.iter().any(|s| s.ids[0] != CLS_ID) {
            return Err(Error::Contract(
                "first-token pooling needs <cls> at position 0".into(),
            ));
        }
        let steps = *lens.iter().max().unwrap();
        if steps > self.config.max_len {
            return Err(Error::Size(format!(
                "sequence length {steps} exceeds {}",
                self.config.max_len
            )));
        }
        let layout = Layout {
            batch: batch.len(),
            steps,
            time_major: self.config.family.is_recurrent(),
            lens,
        };
        let mut ids = vec![PAD_ID as usize; batch.len() * steps];
        for (b, s) in batch.iter().enumerate() {
            for t in 0..steps {
                ids[layout.row(b, t)] = s.ids[t] as usize;
            }
        }
        let table = self.param(g, "embedding")?;
        let embedded = g.gather_rows(table, &ids, Some(PAD_ID as usize))?;
        let logits = self.forward_embedded(g, embedded, &layout)?;
        Ok(Forward {
            logits,
            embedded,
            layout,
        })
    }

    /// Logits from already-embedded input laid out per `layout`.
    pub fn forward_embedded<'p>(
        &'p self,
        g: &mut Graph<'p>,
        x: Var,
        layout: &Layout,
    ) -> Result<Var> {
        let expect = [layout.batch * layout.steps, self.config.embed_dim];
        if g.value(x).dims2() != (expect[0], expect[1]) {
            return Err(Error::shape("forward_embedded", g.shape(x), &expect));
        }
        if layout.time_major != self.config.family.is_recurrent() {
            return Err(Error::Contract(
                "input layout does not match the model family".into(),
            ));
        }
        if layout.lens.iter().any(|&l| l == 0 || l > layout.steps) {
            return Err(Error::Empty("sequence has no real tokens".into()));
        }
        let pooled = if self.config.family.is_recurrent() {
            recurrent_forward(g, self, x, layout)?
        } else {
            let hs = transformer_encode(g, self, x, layout)?;
            self.pool(g, hs, layout)?
        };
        let w = self.param(g, "classifier.w")?;
        let b = self.param(g, "classifier.b")?;
        let z = g.matmul(pooled, w)?;
        g.add_row(z, b)
    }

    /// `[batch × hidden]` pooled rows from encoder output `[batch·steps × hidden]`.
    fn pool<'p>(&'p self, g: &mut Graph<'p>, hs: Var, layout: &Layout) -> Result<Var> {
        match self.config.pooling {
            Pooling::First => {
                let rows: Vec<usize> = (0..layout.batch).map(|b| layout.row(b, 0)).collect();
                let first = g.gather_rows(hs, &rows, None)?;
                let w = self.param(g, "pooler.w")?;
                let b = self.param(g, "pooler.b")?;
                let z = g.matmul(first, w)?;
                let z = g.add_row(z, b)?;
                Ok(g.tanh(z))
            }
            Pooling::Last => {
                let rows: Vec<usize> = (0..layout.batch)
                    .map(|b| layout.row(b, layout.lens[b] - 1))
                    .collect();
                g.gather_rows(hs, &rows, None)
            }
        }
    }

    /// Logits for every sequence, evaluated in chunks of `batch_size`.
    pub fn predict_logits(
        &self,
        seqs: &[TokenSequence],
        batch_size: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(batch_size.max(1)) {
            let refs: Vec<&TokenSequence> = chunk.iter().collect();
            let mut g = Graph::with_params(&self.params);
            let f = self.forward(&mut g, &refs)?;
            let z = g.value(f.logits);
            out.extend((0..z.rows()).map(|r| z.row(r).to_vec()));
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CONFIG_FILE), self.config.to_text())?;
        save_checkpoint(&self.params, &dir.join(CHECKPOINT_FILE))
    }

    /// Load a model saved by [`Model::save`]. Tensors are matched by name
    /// against the layout the configuration implies.
    pub fn load(dir: &Path) -> Result<Model> {
        let config = ModelConfig::from_text(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?;
        let stored = load_checkpoint(&dir.join(CHECKPOINT_FILE))?;
        let mut model = Model::init(config, 0)?;
        if stored.len() != model.params.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {} tensors, configuration implies {}",
                stored.len(),
                model.params.len()
            )));
        }
        for p in model.params.iter_mut() {
            let src = stored
                .by_name(&p.name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {}", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::shape(
                    "checkpoint tensor",
                    src.value.shape(),
                    p.value.shape(),
                ));
            }
            p.value = src.value.clone();
            p.trainable = src.trainable;
        }
        Ok(model)
    }
}
