//! Token embeddings: an end-to-end trainable lookup table, and two-stage
//! static vectors (skip-gram with negative sampling, optionally composed
//! from hashed character n-grams) frozen into a table afterwards.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::textpipe::{TokenSequence, Vocabulary, N_RESERVED, PAD_ID};

/// How token vectors reach a classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EmbeddingMode {
    /// Trainable table learned with the classifier.
    Lookup,
    /// Frozen word-level skip-gram vectors.
    Skipgram,
    /// Frozen skip-gram vectors composed with character n-gram buckets.
    Subword,
}

impl EmbeddingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingMode::Lookup => "lookup",
            EmbeddingMode::Skipgram => "skipgram",
            EmbeddingMode::Subword => "subword",
        }
    }
}

impl std::str::FromStr for EmbeddingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lookup" => Ok(EmbeddingMode::Lookup),
            "skipgram" | "word2vec" => Ok(EmbeddingMode::Skipgram),
            "subword" | "fasttext" => Ok(EmbeddingMode::Subword),
            other => Err(Error::Config(format!("unknown embedding mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(vocab_size × dim)` token matrix whose `<pad>` row is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Normal(0, 0.02) rows, pad row zeroed.
    pub fn random(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let normal = rand_distr::Normal::new(0.0, 0.02).unwrap();
        let mut data: Vec<f64> = (0..vocab_size * dim).map(|_| rng.sample(normal)).collect();
        let pad = dim.min(data.len());
        data[..pad].iter_mut().for_each(|x| *x = 0.0);
        EmbeddingTable {
            matrix: Tensor::matrix(vocab_size, dim, data).unwrap(),
            trainable: true,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// Gather the rows of `table` for every position of `seq`. Pad positions read
/// as zero and pass no gradient back to the table.
pub fn embed_lookup(g: &mut Graph, table: Var, seq: &TokenSequence) -> Result<Var> {
    let ids: Vec<usize> = seq.ids.iter().map(|&i| i as usize).collect();
    g.gather_rows(table, &ids, Some(PAD_ID as usize))
}

/// Boundary-marked character n-grams of `word` for every n in `nmin..=nmax`,
/// grouped by n and in left-to-right order.
pub fn subword_ngrams(word: &str, nmin: usize, nmax: usize) -> Vec<String> {
    let marked: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut out = Vec::new();
    for n in nmin..=nmax {
        if n > marked.len() {
            break;
        }
        for start in 0..=marked.len() - n {
            out.push(marked[start..start + n].iter().collect());
        }
    }
    if out.is_empty() {
        // too short for nmin: the marked word itself is the only gram
        out.push(marked.iter().collect());
    }
    out
}

/// 32-bit FNV-1a, the n-gram bucket hash.
pub fn fnv1a(s: &str) -> u32 {
    let mut h: u32 = 2_166_136_261;
    for b in s.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(16_777_619);
    }
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct SkipGramConfig {
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub buckets: u32,
    pub nmin: usize,
    pub nmax: usize,
    pub table_size: usize,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            window: 5,
            negatives: 5,
            epochs: 5,
            lr: 0.025,
            buckets: 1 << 21,
            nmin: 3,
            nmax: 6,
            table_size: 1_000_000,
        }
    }
}

/// Hashed n-gram vectors. The full `buckets × dim` matrix is virtual: a bucket
/// gets storage once training touches it, and untouched buckets read their
/// seeded initial value.
#[derive(Clone, Debug, PartialEq)]
pub struct SubwordBuckets {
    pub buckets: u32,
    pub nmin: usize,
    pub nmax: usize,
    seed: u64,
    dim: usize,
    touched: HashMap<u32, Vec<f64>>,
}

impl SubwordBuckets {
    fn new(buckets: u32, nmin: usize, nmax: usize, dim: usize, seed: u64) -> Self {
        SubwordBuckets {
            buckets,
            nmin,
            nmax,
            seed,
            dim,
            touched: HashMap::new(),
        }
    }

    pub fn bucket_of(&self, gram: &str) -> u32 {
        fnv1a(gram) % self.buckets
    }

    pub fn word_buckets(&self, word: &str) -> Vec<u32> {
        subword_ngrams(word, self.nmin, self.nmax)
            .iter()
            .map(|g| self.bucket_of(g))
            .collect()
    }

    fn initial(&self, bucket: u32) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (u64::from(bucket).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        let half = 0.5 / self.dim as f64;
        (0..self.dim).map(|_| rng.gen_range(-half..half)).collect()
    }

    pub fn vector(&self, bucket: u32) -> Vec<f64> {
        self.touched
            .get(&bucket)
            .cloned()
            .unwrap_or_else(|| self.initial(bucket))
    }

    fn vector_mut(&mut self, bucket: u32) -> &mut Vec<f64> {
        if !self.touched.contains_key(&bucket) {
            let init = self.initial(bucket);
            self.touched.insert(bucket, init);
        }
        self.touched.get_mut(&bucket).unwrap()
    }

    /// Σ of bucket vectors over the n-grams of `word`.
    pub fn compose(&self, word: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for b in self.word_buckets(word) {
            for (o, v) in out.iter_mut().zip(self.vector(b)) {
                *o += v;
            }
        }
        out
    }
}

/// Trained static vectors: word-level input vectors and, in subword mode, the
/// n-gram buckets they are composed with.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticVectors {
    pub dim: usize,
    pub mode: EmbeddingMode,
    words: Vec<String>,
    index: HashMap<String, usize>,
    word_vectors: Vec<Vec<f64>>,
    pub subword: Option<SubwordBuckets>,
}

impl StaticVectors {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// The word-level component alone.
    pub fn word_component(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| self.word_vectors[i].as_slice())
    }

    /// Final vector of `word`. Subword mode covers every string; skip-gram
    /// mode only the training vocabulary.
    pub fn vector(&self, word: &str) -> Option<Vec<f64>> {
        match &self.subword {
            Some(sw) => {
                let mut v = sw.compose(word);
                if let Some(w) = self.word_component(word) {
                    for (o, x) in v.iter_mut().zip(w) {
                        *o += x;
                    }
                }
                Some(v)
            }
            None => self.word_component(word).map(<[f64]>::to_vec),
        }
    }

    /// `count dim` header, then one `word v1 … vdim` line per word.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.words.len(), self.dim)?;
        for word in &self.words {
            let v = self.vector(word).expect("vocabulary word");
            write!(w, "{word}")?;
            for x in v {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_text(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Read a vector file as word-level skip-gram vectors.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty vector file".into()))??;
        let mut parts = header.split_whitespace();
        let parse = |s: Option<&str>, what: &str| -> Result<usize> {
            s.and_then(|x| x.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad {what} in vector header")))
        };
        let count = parse(parts.next(), "count")?;
        let dim = parse(parts.next(), "dim")?;
        let mut words = Vec::with_capacity(count);
        let mut vectors = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let word = fields.next().unwrap().to_string();
            let v: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    row: i + 2,
                    column: word.clone(),
                    message: e.to_string(),
                })?;
            if v.len() != dim {
                return Err(Error::Format(format!(
                    "line {} has {} values, expected {dim}",
                    i + 2,
                    v.len()
                )));
            }
            words.push(word);
            vectors.push(v);
        }
        if words.len() != count {
            return Err(Error::Format(format!(
                "header announces {count} vectors, found {}",
                words.len()
            )));
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(StaticVectors {
            dim,
            mode: EmbeddingMode::Skipgram,
            words,
            index,
            word_vectors: vectors,
            subword: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_text(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn sigmoid(x: f64) -> f64 {
    crate::autodiff::sigmoid(x)
}

/// Skip-gram with negative sampling over preprocessed titles. In subword mode
/// each input word is the sum of its word vector and its n-gram buckets.
pub fn train_static_embeddings<S: AsRef<str>>(
    corpus: &[S],
    dim: usize,
    mode: EmbeddingMode,
    seed: u64,
) -> Result<StaticVectors> {
    train_static_embeddings_with(corpus, dim, mode, seed, &SkipGramConfig::default())
}

pub fn train_static_embeddings_with<S: AsRef<str>>(
    corpus: &[S],
    dim: usize,
    mode: EmbeddingMode,
    seed: u64,
    cfg: &SkipGramConfig,
) -> Result<StaticVectors> {
    if mode == EmbeddingMode::Lookup {
        return Err(Error::Config(
            "lookup tables are trained with the classifier".into(),
        ));
    }
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let sentences: Vec<Vec<&str>> = corpus
        .iter()
        .map(|t| {
            t.as_ref()
                .split(' ')
                .filter(|w| !w.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|s| !s.is_empty())
        .collect();
    if sentences.is_empty() {
        return Err(Error::Empty(
            "static embeddings need a non-empty corpus".into(),
        ));
    }

    // vocabulary in first-seen order
    let mut words: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut counts: Vec<usize> = Vec::new();
    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| {
            s.iter()
                .map(|&w| {
                    let id = *index.entry(w.to_string()).or_insert_with(|| {
                        words.push(w.to_string());
                        counts.push(0);
                        words.len() - 1
                    });
                    counts[id] += 1;
                    id
                })
                .collect()
        })
        .collect();
    let v = words.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 / dim as f64;
    let mut input: Vec<Vec<f64>> = (0..v)
        .map(|_| (0..dim).map(|_| rng.gen_range(-half..half)).collect())
        .collect();
    let mut output: Vec<Vec<f64>> = vec![vec![0.0; dim]; v];
    let mut subword = (mode == EmbeddingMode::Subword)
        .then(|| SubwordBuckets::new(cfg.buckets, cfg.nmin, cfg.nmax, dim, seed));
    let word_buckets: Vec<Vec<u32>> = match &subword {
        Some(sw) => words.iter().map(|w| sw.word_buckets(w)).collect(),
        None => vec![Vec::new(); v],
    };

    let neg_table = unigram_table(&counts, cfg.table_size.max(v));
    let total_steps = (cfg.epochs * encoded.iter().map(Vec::len).sum::<usize>()).max(1);
    let mut step = 0usize;
    let mut hidden = vec![0.0; dim];
    let mut grad = vec![0.0; dim];

    for _ in 0..cfg.epochs {
        for sent in &encoded {
            for (pos, &center) in sent.iter().enumerate() {
                let lr = cfg.lr * (1.0 - step as f64 / total_steps as f64).max(1e-4);
                step += 1;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(sent.len());
                // composed input vector of the centre word
                hidden.copy_from_slice(&input[center]);
                if let Some(sw) = &subword {
                    for &b in &word_buckets[center] {
                        for (h, x) in hidden.iter_mut().zip(sw.vector(b)) {
                            *h += x;
                        }
                    }
                }
                for (cpos, &context) in sent.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|x| *x = 0.0);
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = neg_table[rng.gen_range(0..neg_table.len())];
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out = &mut output[target];
                        let score: f64 = hidden.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
                        let gcoef = lr * (label - sigmoid(score));
                        for j in 0..dim {
                            grad[j] += gcoef * out[j];
                            out[j] += gcoef * hidden[j];
                        }
                    }
                    // spread the input gradient over the composed parts
                    let parts = 1 + word_buckets[center].len();
                    let share = 1.0 / parts as f64;
                    for (x, g) in input[center].iter_mut().zip(&grad) {
                        *x += g * share;
                    }
                    if let Some(sw) = subword.as_mut() {
                        for &b in &word_buckets[center] {
                            let bv = sw.vector_mut(b);
                            for (x, g) in bv.iter_mut().zip(&grad) {
                                *x += g * share;
                            }
                        }
                    }
                    for (h, g) in hidden.iter_mut().zip(&grad) {
                        *h += g * share * parts as f64;
                    }
                }
            }
        }
    }

    // reported word vectors are input + context (w + c)
    for (w, c) in input.iter_mut().zip(&output) {
        for (x, y) in w.iter_mut().zip(c) {
            *x += y;
        }
    }
    Ok(StaticVectors {
        dim,
        mode,
        words,
        index,
        word_vectors: input,
        subword,
    })
}

/// Negative-sampling table with word frequency raised to the 3/4 power.
fn unigram_table(counts: &[usize], size: usize) -> Vec<usize> {
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let mut table = Vec::with_capacity(size);
    let mut cum = 0.0;
    let mut word = 0;
    for i in 0..size {
        let frac = (i as f64 + 0.5) / size as f64;
        while word + 1 < weights.len() && (cum + weights[word]) / total < frac {
            cum += weights[word];
            word += 1;
        }
        table.push(word);
    }
    table
}

/// Build a frozen table for `vocab` from static vectors. Reserved tokens get
/// zero rows; out-of-vocabulary words get their n-gram composition in subword
/// mode and zero otherwise.
pub fn freeze_into_table(
    vectors: &StaticVectors,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<EmbeddingTable> {
    if vectors.dim != dim {
        return Err(Error::shape("freeze_into_table", &[vectors.dim], &[dim]));
    }
    let mut m = Tensor::zeros(&[vocab.len(), dim]);
    for (i, tok) in vocab.tokens().iter().enumerate().skip(N_RESERVED) {
        if let Some(v) = vectors.vector(tok) {
            m.row_mut(i).copy_from_slice(&v);
        }
    }
    Ok(EmbeddingTable {
        matrix: m,
        trainable: false,
    })
}
