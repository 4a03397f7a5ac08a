//! Classical per-label baselines over bag-of-token counts: multinomial and
//! complement naive Bayes, and cosine k-nearest-neighbours.

use std::collections::BTreeMap;

use crate::corpus::{stratified_folds, LabelSchema, PaperRecord};
use crate::error::{Error, Result};
use crate::metrics::{macro_auroc, sem};
use crate::textpipe::{
    build_vocab, encode, preprocess_title, TokenSequence, Vocabulary, CLS_ID, MAX_LEN, PAD_ID,
};

/// Sparse token counts of one document; `<pad>` and `<cls>` never appear.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BagVector {
    counts: BTreeMap<u32, u32>,
}

impl BagVector {
    pub fn from_sequence(seq: &TokenSequence) -> Self {
        let mut counts = BTreeMap::new();
        for &id in seq.real_ids() {
            if id != PAD_ID && id != CLS_ID {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        BagVector { counts }
    }

    /// Preprocess, encode without `<cls>`, and count.
    pub fn from_title(title: &str, vocab: &Vocabulary) -> Self {
        Self::from_sequence(&encode(&preprocess_title(title), vocab, MAX_LEN, false))
    }

    pub fn from_counts(pairs: &[(u32, u32)]) -> Self {
        let mut counts = BTreeMap::new();
        for &(id, c) in pairs {
            if c > 0 && id != PAD_ID && id != CLS_ID {
                *counts.entry(id).or_insert(0) += c;
            }
        }
        BagVector { counts }
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn norm(&self) -> f64 {
        self.counts
            .values()
            .map(|&c| f64::from(c).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &BagVector) -> f64 {
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .counts
            .iter()
            .filter_map(|(k, &a)| large.counts.get(k).map(|&b| f64::from(a) * f64::from(b)))
            .sum()
    }
}

/// One training example: bag and its 0/1 label row.
pub type Example = (BagVector, Vec<u8>);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NbVariant {
    Standard,
    /// Token distributions estimated from the complement class over
    /// L2-normalised training documents; the class score uses the negated
    /// complement log-probabilities.
    Complement,
}

/// Per-label binary naive Bayes.
#[derive(Clone, Debug, PartialEq)]
pub struct NaiveBayesModel {
    pub variant: NbVariant,
    pub alpha: f64,
    pub vocab_size: usize,
    labels: Vec<LabelModel>,
}

#[derive(Clone, Debug, PartialEq)]
struct LabelModel {
    log_prior: [f64; 2],
    /// `[negative, positive]` token log-probabilities, length `vocab_size`.
    log_prob: [Vec<f64>; 2],
    /// Value of an unseen token in each slot.
    log_floor: [f64; 2],
}

/// Fit every label independently. Probabilities are Laplace-smoothed with
/// `alpha` over `vocab_size` token slots; priors are `alpha`-smoothed too.
pub fn nb_fit(
    train: &[Example],
    vocab_size: usize,
    alpha: f64,
    variant: NbVariant,
) -> Result<NaiveBayesModel> {
    if train.is_empty() {
        return Err(Error::Empty("naive Bayes needs training documents".into()));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Config(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let n_labels = train[0].1.len();
    for (bag, labels) in train {
        if labels.len() != n_labels {
            return Err(Error::shape("nb_fit labels", &[labels.len()], &[n_labels]));
        }
        if let Some((id, _)) = bag.iter().find(|&(id, _)| id as usize >= vocab_size) {
            return Err(Error::Index {
                what: "vocabulary",
                index: id as usize,
                size: vocab_size,
            });
        }
    }
    let n = train.len() as f64;
    let v = vocab_size as f64;
    let weights: Vec<f64> = train
        .iter()
        .map(|(bag, _)| match variant {
            NbVariant::Standard => 1.0,
            NbVariant::Complement => {
                let norm = bag.norm();
                if norm > 0.0 {
                    1.0 / norm
                } else {
                    0.0
                }
            }
        })
        .collect();

    let mut labels = Vec::with_capacity(n_labels);
    for j in 0..n_labels {
        let mut counts = [vec![0.0; vocab_size], vec![0.0; vocab_size]];
        let mut docs = [0.0; 2];
        for ((bag, y), &w) in train.iter().zip(&weights) {
            let class = usize::from(y[j] != 0);
            docs[class] += 1.0;
            for (id, c) in bag.iter() {
                counts[class][id as usize] += w * f64::from(c);
            }
        }
        let log_dist = |c: &[f64]| -> (Vec<f64>, f64) {
            let total: f64 = c.iter().sum();
            let denom = total + alpha * v;
            (
                c.iter().map(|&x| ((x + alpha) / denom).ln()).collect(),
                (alpha / denom).ln(),
            )
        };
        let [neg, pos] = &counts;
        let ((lneg, fneg), (lpos, fpos)) = (log_dist(neg), log_dist(pos));
        let (log_prob, log_floor) = match variant {
            NbVariant::Standard => ([lneg, lpos], [fneg, fpos]),
            // class c scores with −log θ(c̄)
            NbVariant::Complement => (
                [
                    lpos.iter().map(|x| -x).collect(),
                    lneg.iter().map(|x| -x).collect(),
                ],
                [-fpos, -fneg],
            ),
        };
        let prior = |d: f64| ((d + alpha) / (n + 2.0 * alpha)).ln();
        labels.push(LabelModel {
            log_prior: [prior(docs[0]), prior(docs[1])],
            log_prob,
            log_floor,
        });
    }
    Ok(NaiveBayesModel {
        variant,
        alpha,
        vocab_size,
        labels,
    })
}

impl NaiveBayesModel {
    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    /// Smoothed `P(token | class)` of the standard variant.
    pub fn token_prob(&self, label: usize, positive: bool, token: u32) -> f64 {
        self.labels[label].log_prob[usize::from(positive)][token as usize].exp()
    }

    pub fn prior(&self, label: usize, positive: bool) -> f64 {
        self.labels[label].log_prior[usize::from(positive)].exp()
    }

    /// Positive-class log-odds per label. Tokens outside the vocabulary get
    /// the smoothed floor of an unseen token.
    pub fn predict(&self, doc: &BagVector) -> Vec<f64> {
        self.labels
            .iter()
            .map(|m| {
                let mut s = m.log_prior[1] - m.log_prior[0];
                for (id, c) in doc.iter() {
                    let c = f64::from(c);
                    let (lp, ln) = if (id as usize) < self.vocab_size {
                        (m.log_prob[1][id as usize], m.log_prob[0][id as usize])
                    } else {
                        (m.log_floor[1], m.log_floor[0])
                    };
                    s += c * (lp - ln);
                }
                s
            })
            .collect()
    }
}

/// Per-label fraction of the `k` most cosine-similar training documents that
/// carry the label. Equal similarities keep training order.
pub fn knn_predict(train: &[Example], query: &BagVector, k: usize) -> Result<Vec<f64>> {
    KnnIndex::new(train)?.predict(query, k)
}

/// Training documents with cached norms for repeated queries.
pub struct KnnIndex<'a> {
    train: &'a [Example],
    norms: Vec<f64>,
}

impl<'a> KnnIndex<'a> {
    pub fn new(train: &'a [Example]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Empty("kNN needs training documents".into()));
        }
        Ok(KnnIndex {
            train,
            norms: train.iter().map(|(b, _)| b.norm()).collect(),
        })
    }

    pub fn predict(&self, query: &BagVector, k: usize) -> Result<Vec<f64>> {
        if k == 0 || k > self.train.len() {
            return Err(Error::Config(format!(
                "k={k} needs 1 ≤ k ≤ {} training documents",
                self.train.len()
            )));
        }
        let qn = query.norm();
        let sims: Vec<f64> = self
            .train
            .iter()
            .zip(&self.norms)
            .map(|((b, _), &n)| {
                if qn > 0.0 && n > 0.0 {
                    // equal cosines must tie exactly for the training-order rule
                    (query.dot(b) / (qn * n) * 1e12).round()
                } else {
                    0.0
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..sims.len()).collect();
        order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]));
        let width = self.train[0].1.len();
        let mut out = vec![0.0; width];
        for &i in &order[..k] {
            for (o, &y) in out.iter_mut().zip(&self.train[i].1) {
                *o += f64::from(y);
            }
        }
        out.iter_mut().for_each(|o| *o /= k as f64);
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaselineKind {
    NaiveBayes,
    ComplementNb,
    Knn(usize),
}

impl BaselineKind {
    pub fn name(self) -> String {
        match self {
            BaselineKind::NaiveBayes => "naive-bayes".into(),
            BaselineKind::ComplementNb => "complement-nb".into(),
            BaselineKind::Knn(k) => format!("knn-{k}"),
        }
    }
}

/// Bags and trainable-label rows for `records` under `vocab`.
pub fn examples(records: &[PaperRecord], schema: &LabelSchema, vocab: &Vocabulary) -> Vec<Example> {
    let idx = schema.trainable_indices();
    records
        .iter()
        .map(|r| {
            (
                BagVector::from_title(&r.title, vocab),
                idx.iter().map(|&i| r.labels[i]).collect(),
            )
        })
        .collect()
}

/// Fit on `train` and score `test`, returning one score row per test record.
pub fn fit_and_score(
    kind: BaselineKind,
    train: &[PaperRecord],
    test: &[PaperRecord],
    schema: &LabelSchema,
) -> Result<Vec<Vec<f64>>> {
    let titles: Vec<String> = train.iter().map(|r| preprocess_title(&r.title)).collect();
    let vocab = build_vocab(&titles, 1);
    let tr = examples(train, schema, &vocab);
    let te = examples(test, schema, &vocab);
    match kind {
        BaselineKind::NaiveBayes | BaselineKind::ComplementNb => {
            let variant = if kind == BaselineKind::NaiveBayes {
                NbVariant::Standard
            } else {
                NbVariant::Complement
            };
            let m = nb_fit(&tr, vocab.len(), 1.0, variant)?;
            Ok(te.iter().map(|(b, _)| m.predict(b)).collect())
        }
        BaselineKind::Knn(k) => {
            let index = KnnIndex::new(&tr)?;
            te.iter().map(|(b, _)| index.predict(b, k)).collect()
        }
    }
}

/// Macro AUROC of every held-out fold, with their mean and SEM.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossValidation {
    pub fold_aurocs: Vec<f64>,
    pub mean: f64,
    pub sem: f64,
}

pub fn cross_validate(
    kind: BaselineKind,
    records: &[PaperRecord],
    schema: &LabelSchema,
    folds: usize,
    seed: u64,
) -> Result<CrossValidation> {
    let parts = stratified_folds(records, folds, seed)?;
    let idx = schema.trainable_indices();
    let mut fold_aurocs = Vec::with_capacity(folds);
    for (f, held) in parts.iter().enumerate() {
        let train: Vec<PaperRecord> = parts
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, p)| p.iter().map(|&i| records[i].clone()))
            .collect();
        let test: Vec<PaperRecord> = held.iter().map(|&i| records[i].clone()).collect();
        let scores = fit_and_score(kind, &train, &test, schema)?;
        let labels: Vec<Vec<u8>> = test
            .iter()
            .map(|r| idx.iter().map(|&i| r.labels[i]).collect())
            .collect();
        fold_aurocs.push(macro_auroc(&scores, &labels)?.macro_auroc);
    }
    let mean = fold_aurocs.iter().sum::<f64>() / fold_aurocs.len() as f64;
    Ok(CrossValidation {
        sem: sem(&fold_aurocs)?,
        mean,
        fold_aurocs,
    })
}
