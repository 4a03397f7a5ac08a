//! Title→topic datasets in pivot-table form: loading, writing, stratified
//! splitting and synthetic corpora for tests.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// The sixteen topic names of the pivot table, in column order.
pub const DEFAULT_LABELS: [&str; 16] = [
    "adversarial",
    "audio",
    "computer-code",
    "computer-vision",
    "graphs",
    "knowledge-base",
    "medical",
    "methodology",
    "miscellaneous",
    "music",
    "natural-language-processing",
    "playing-games",
    "reasoning",
    "robots",
    "speech",
    "time-series",
];

/// Ordered label names plus the subset held out of training.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSchema {
    names: Vec<String>,
    excluded: Vec<String>,
}

impl Default for LabelSchema {
    fn default() -> Self {
        LabelSchema::new(
            DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
            vec!["methodology".to_string()],
        )
        .expect("default schema is valid")
    }
}

impl LabelSchema {
    pub fn new(names: Vec<String>, excluded: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for n in &names {
            let ok = !n.is_empty()
                && n.chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
            if !ok {
                return Err(Error::Schema(format!("invalid label name {n:?}")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::Schema(format!("duplicate label name {n:?}")));
            }
        }
        for e in &excluded {
            if !seen.contains(e.as_str()) {
                return Err(Error::Schema(format!(
                    "excluded label {e:?} is not in the schema"
                )));
            }
        }
        if names.len() == excluded.len() {
            return Err(Error::Schema("every label is excluded".into()));
        }
        Ok(LabelSchema { names, excluded })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn excluded(&self) -> &[String] {
        &self.excluded
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Column positions of the labels used for training.
    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.names.len())
            .filter(|&i| !self.excluded.contains(&self.names[i]))
            .collect()
    }

    pub fn trainable_names(&self) -> Vec<&str> {
        self.trainable_indices()
            .into_iter()
            .map(|i| self.names[i].as_str())
            .collect()
    }

    pub fn n_trainable(&self) -> usize {
        self.names.len() - self.excluded.len()
    }
}

/// One title with one 0/1 slot per schema label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaperRecord {
    pub title: String,
    pub labels: Vec<u8>,
}

impl PaperRecord {
    /// 0/1 targets restricted to the trainable labels.
    pub fn targets(&self, schema: &LabelSchema) -> Vec<f64> {
        schema
            .trainable_indices()
            .into_iter()
            .map(|i| f64::from(self.labels[i]))
            .collect()
    }

    pub fn has_trainable_label(&self, schema: &LabelSchema) -> bool {
        schema
            .trainable_indices()
            .into_iter()
            .any(|i| self.labels[i] == 1)
    }
}

/// Records that survived loading, plus the number of rows dropped for an
/// empty title.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub records: Vec<PaperRecord>,
    pub rejected: usize,
}

pub fn load_dataset(path: &Path, schema: &LabelSchema) -> Result<LoadedDataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: &LabelSchema) -> Result<LoadedDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0).map(str::trim) != Some("title") {
        return Err(Error::Schema("first column must be `title`".into()));
    }
    // column position in file -> schema slot
    let mut slots = Vec::with_capacity(header.len() - 1);
    let mut seen = HashSet::new();
    for name in header.iter().skip(1) {
        let name = name.trim();
        let slot = schema
            .position(name)
            .ok_or_else(|| Error::Schema(format!("unexpected label column {name:?}")))?;
        if !seen.insert(slot) {
            return Err(Error::Schema(format!("duplicate label column {name:?}")));
        }
        slots.push(slot);
    }
    if let Some(missing) = schema
        .names()
        .iter()
        .find(|n| !seen.contains(&schema.position(n).unwrap()))
    {
        return Err(Error::Schema(format!("missing label column {missing:?}")));
    }

    let mut records = Vec::new();
    let mut rejected = 0;
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        if row.len() != header.len() {
            return Err(Error::Parse {
                row: row_no,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), row.len()),
            });
        }
        let title = row[0].trim();
        let mut labels = vec![0u8; schema.len()];
        for (col, &slot) in slots.iter().enumerate() {
            let cell = row[col + 1].trim();
            labels[slot] = match cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse {
                        row: row_no,
                        column: header[col + 1].trim().to_string(),
                        message: format!("expected 0 or 1, found {other:?}"),
                    })
                }
            };
        }
        if title.is_empty() {
            rejected += 1;
            continue;
        }
        records.push(PaperRecord {
            title: title.to_string(),
            labels,
        });
    }
    if rejected > 0 {
        log::warn!("rejected {rejected} rows with an empty title");
    }
    Ok(LoadedDataset { records, rejected })
}

pub fn write_dataset(path: &Path, records: &[PaperRecord], schema: &LabelSchema) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset_to(file, records, schema)
}

pub fn write_dataset_to<W: std::io::Write>(
    writer: W,
    records: &[PaperRecord],
    schema: &LabelSchema,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["title"];
    header.extend(schema.names().iter().map(String::as_str));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.title.clone()];
        row.extend(r.labels.iter().map(|b| b.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Keep only records carrying at least one trainable label.
pub fn drop_unlabeled(records: Vec<PaperRecord>, schema: &LabelSchema) -> Vec<PaperRecord> {
    records
        .into_iter()
        .filter(|r| r.has_trainable_label(schema))
        .collect()
}

/// Train / validation / test partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<PaperRecord>,
    pub validation: Vec<PaperRecord>,
    pub test: Vec<PaperRecord>,
    pub ratios: [f64; 3],
}

/// Partition sizes by largest-remainder rounding; ties go to the earlier
/// partition.
pub fn partition_sizes(n: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &j in order.iter().take(n.saturating_sub(assigned)) {
        sizes[j] += 1;
    }
    sizes
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.iter().any(|&r| r.is_nan() || r <= 0.0) {
        return Err(Error::Config(format!(
            "ratios must be positive: {ratios:?}"
        )));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("ratios must sum to 1, got {total}")));
    }
    Ok(())
}

/// Greedy iterative multi-label stratification.
///
/// Records are visited rarest-label first (seeded shuffle breaks ties) and
/// each goes to the partition whose remaining demand for that label is
/// largest. Partition sizes are fixed up front by [`partition_sizes`].
pub fn stratified_partition(
    labels: &[Vec<u8>],
    ratios: &[f64],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    check_ratios(ratios)?;
    if labels.is_empty() {
        return Err(Error::Empty("no records to split".into()));
    }
    let n = labels.len();
    let sizes = partition_sizes(n, ratios);
    if let Some(j) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Size(format!(
            "partition {j} would be empty ({n} records, ratios {ratios:?})"
        )));
    }
    let n_labels = labels[0].len();
    let mut label_counts = vec![0usize; n_labels];
    for row in labels {
        for (l, &b) in row.iter().enumerate() {
            label_counts[l] += b as usize;
        }
    }
    let mut demand: Vec<Vec<f64>> = (0..n_labels)
        .map(|l| ratios.iter().map(|r| r * label_counts[l] as f64).collect())
        .collect();
    let mut capacity = sizes.clone();

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let rarest = |i: usize| -> Option<usize> {
        labels[i]
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .min_by_key(|&(l, _)| (label_counts[l], l))
            .map(|(l, _)| l)
    };
    // stable sort keeps the shuffled order among equals
    order.sort_by_key(|&i| rarest(i).map_or(usize::MAX, |l| label_counts[l]));

    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); ratios.len()];
    for i in order {
        let open = (0..ratios.len()).filter(|&j| capacity[j] > 0);
        let target = match rarest(i) {
            Some(l) => open.max_by(|&a, &b| {
                demand[l][a]
                    .partial_cmp(&demand[l][b])
                    .unwrap()
                    .then(capacity[a].cmp(&capacity[b]))
                    .then(b.cmp(&a))
            }),
            None => open.max_by(|&a, &b| {
                let fa = capacity[a] as f64 / sizes[a] as f64;
                let fb = capacity[b] as f64 / sizes[b] as f64;
                fa.partial_cmp(&fb).unwrap().then(b.cmp(&a))
            }),
        }
        .expect("capacity remains while records remain");
        capacity[target] -= 1;
        for (l, &b) in labels[i].iter().enumerate() {
            if b == 1 {
                demand[l][target] -= 1.0;
            }
        }
        parts[target].push(i);
    }
    refine_by_swaps(labels, ratios, &mut parts, &mut rng);
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Seeded pairwise swaps between partitions, kept only when they reduce the
/// squared gap between per-partition label counts and their targets.
/// Partition sizes never change.
fn refine_by_swaps(
    labels: &[Vec<u8>],
    ratios: &[f64],
    parts: &mut [Vec<usize>],
    rng: &mut ChaCha8Rng,
) {
    let n = labels.len();
    let n_labels = labels[0].len();
    let mut owner = vec![0usize; n];
    for (j, p) in parts.iter().enumerate() {
        for &i in p {
            owner[i] = j;
        }
    }
    let mut totals = vec![0.0; n_labels];
    let mut counts = vec![vec![0.0; ratios.len()]; n_labels];
    for (i, row) in labels.iter().enumerate() {
        for (l, &b) in row.iter().enumerate() {
            if b == 1 {
                totals[l] += 1.0;
                counts[l][owner[i]] += 1.0;
            }
        }
    }
    let target = |l: usize, j: usize| ratios[j] * totals[l];
    let proposals = 40 * n;
    for _ in 0..proposals {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let (pa, pb) = (owner[a], owner[b]);
        if pa == pb {
            continue;
        }
        let mut delta = 0.0;
        for l in 0..n_labels {
            let d = labels[a][l] as f64 - labels[b][l] as f64;
            if d == 0.0 {
                continue;
            }
            // a moves pa→pb, b moves pb→pa
            let ea = counts[l][pa] - target(l, pa);
            let eb = counts[l][pb] - target(l, pb);
            delta += (ea - d).powi(2) - ea * ea + (eb + d).powi(2) - eb * eb;
        }
        if delta < -1e-9 {
            for l in 0..n_labels {
                let d = labels[a][l] as f64 - labels[b][l] as f64;
                counts[l][pa] -= d;
                counts[l][pb] += d;
            }
            owner[a] = pb;
            owner[b] = pa;
        }
    }
    for p in parts.iter_mut() {
        p.clear();
    }
    for (i, &j) in owner.iter().enumerate() {
        parts[j].push(i);
    }
}

pub fn stratified_split(
    records: &[PaperRecord],
    ratios: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit> {
    let labels: Vec<Vec<u8>> = records.iter().map(|r| r.labels.clone()).collect();
    let parts = stratified_partition(&labels, &ratios, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&parts[0]),
        validation: pick(&parts[1]),
        test: pick(&parts[2]),
        ratios,
    })
}

/// `k` stratified folds of equal share, as index lists into `records`.
pub fn stratified_folds(records: &[PaperRecord], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config("need at least two folds".into()));
    }
    let labels: Vec<Vec<u8>> = records.iter().map(|r| r.labels.clone()).collect();
    stratified_partition(&labels, &vec![1.0 / k as f64; k], seed)
}

/// Neutral title words used as filler in synthetic titles. None of them is a
/// label keyword.
const FILLER: &[&str] = &[
    "a",
    "an",
    "the",
    "of",
    "for",
    "with",
    "via",
    "towards",
    "on",
    "in",
    "and",
    "using",
    "from",
    "to",
    "by",
    "under",
    "beyond",
    "efficient",
    "robust",
    "scalable",
    "simple",
    "novel",
    "fast",
    "deep",
    "neural",
    "learning",
    "network",
    "networks",
    "model",
    "models",
    "approach",
    "method",
    "framework",
    "analysis",
    "study",
    "improved",
    "better",
    "large",
    "small",
    "sparse",
    "dense",
    "adaptive",
    "unified",
    "generalized",
    "hierarchical",
    "probabilistic",
    "bayesian",
    "latent",
    "representation",
    "representations",
    "training",
    "inference",
    "optimization",
    "estimation",
    "structured",
    "unsupervised",
    "supervised",
    "semi",
    "self",
    "contrastive",
    "attention",
    "transformer",
    "recurrent",
    "convolutional",
    "layer",
    "layers",
    "embedding",
    "embeddings",
    "benchmark",
    "dataset",
    "evaluation",
    "transfer",
    "multi",
    "task",
    "domain",
    "generalization",
    "regularization",
    "loss",
    "objective",
    "gradient",
    "stochastic",
    "online",
    "continual",
    "few",
    "shot",
    "zero",
    "meta",
    "policy",
    "search",
    "neighbor",
    "kernel",
    "spectral",
    "temporal",
    "spatial",
    "invariant",
    "equivariant",
    "2",
    "3",
    "v2",
    "revisited",
    "rethinking",
    "understanding",
    "scaling",
    "pretraining",
    "fine",
    "tuning",
    "compression",
    "pruning",
    "quantization",
    "distillation",
    "uncertainty",
    "calibration",
    "interpretable",
];

/// Keyword planted for a label in synthetic titles.
pub fn synthetic_keyword(label: &str) -> String {
    let known = match label {
        "adversarial" => "adversarial",
        "audio" => "audio",
        "computer-code" => "code",
        "computer-vision" => "vision",
        "graphs" => "graph",
        "knowledge-base" => "knowledge",
        "medical" => "medical",
        "methodology" => "methodology",
        "miscellaneous" => "miscellaneous",
        "music" => "music",
        "natural-language-processing" => "translation",
        "playing-games" => "games",
        "reasoning" => "reasoning",
        "robots" => "robot",
        "speech" => "speech",
        "time-series" => "forecasting",
        other => {
            return other
                .chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .collect()
        }
    };
    known.to_string()
}

/// `per_label` single-label records for every trainable label. Each title is
/// the label keyword planted at a random position among 3–7 filler words.
pub fn make_synthetic_corpus(
    schema: &LabelSchema,
    per_label: usize,
    seed: u64,
) -> Vec<PaperRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(per_label * schema.n_trainable());
    for slot in schema.trainable_indices() {
        let keyword = synthetic_keyword(&schema.names()[slot]);
        for _ in 0..per_label {
            let n_fill = rng.gen_range(3..=7);
            let mut words: Vec<&str> = (0..n_fill)
                .map(|_| *FILLER.choose(&mut rng).unwrap())
                .collect();
            let pos = rng.gen_range(0..=words.len());
            words.insert(pos, &keyword);
            let mut labels = vec![0u8; schema.len()];
            labels[slot] = 1;
            records.push(PaperRecord {
                title: words.join(" "),
                labels,
            });
        }
    }
    records.shuffle(&mut rng);
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(title: &str, slot: usize, schema: &LabelSchema) -> PaperRecord {
        let mut labels = vec![0; schema.len()];
        labels[slot] = 1;
        PaperRecord {
            title: title.into(),
            labels,
        }
    }

    #[test]
    fn default_schema_has_fifteen_trainable() {
        let s = LabelSchema::default();
        assert_eq!(s.len(), 16);
        assert_eq!(s.n_trainable(), 15);
        assert!(!s.trainable_names().contains(&"methodology"));
        assert!(s.trainable_names().contains(&"time-series"));
    }

    #[test]
    fn schema_validation() {
        let bad = LabelSchema::new(vec!["Vision".into()], vec![]);
        assert!(matches!(bad, Err(Error::Schema(_))));
        let dup = LabelSchema::new(vec!["a".into(), "a".into()], vec![]);
        assert!(matches!(dup, Err(Error::Schema(_))));
        let ghost = LabelSchema::new(vec!["a".into()], vec!["b".into()]);
        assert!(matches!(ghost, Err(Error::Schema(_))));
    }

    fn header(schema: &LabelSchema) -> String {
        format!("title,{}\n", schema.names().join(","))
    }

    fn row(title: &str, set: &[usize], n: usize) -> String {
        let cells: Vec<String> = (0..n)
            .map(|i| {
                if set.contains(&i) {
                    "1".into()
                } else {
                    "0".into()
                }
            })
            .collect();
        format!("{title},{}\n", cells.join(","))
    }

    #[test]
    fn load_three_rows_and_single_bit() {
        let s = LabelSchema::default();
        let nlp = s.position("natural-language-processing").unwrap();
        let mut text = header(&s);
        text += &row("attention is all you need", &[nlp], 16);
        text += &row("\"graphs, nets, and more\"", &[4, 3], 16);
        text += &row("deep residual learning", &[3], 16);
        let loaded = read_dataset(text.as_bytes(), &s).unwrap();
        assert_eq!(loaded.records.len(), 3);
        assert_eq!(loaded.rejected, 0);
        let first = &loaded.records[0];
        assert_eq!(first.title, "attention is all you need");
        assert_eq!(first.labels.iter().map(|&b| b as usize).sum::<usize>(), 1);
        assert_eq!(first.labels[nlp], 1);
        assert_eq!(loaded.records[1].title, "graphs, nets, and more");
    }

    #[test]
    fn header_is_order_insensitive() {
        let s = LabelSchema::new(vec!["a".into(), "b".into()], vec![]).unwrap();
        let text = "title,b,a\nx,1,0\n";
        let r = read_dataset(text.as_bytes(), &s).unwrap();
        assert_eq!(r.records[0].labels, vec![0, 1]);
    }

    #[test]
    fn load_errors() {
        let s = LabelSchema::new(vec!["a".into(), "b".into()], vec![]).unwrap();
        assert!(matches!(
            read_dataset("title,a\nx,1\n".as_bytes(), &s),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            read_dataset("title,a,b,c\nx,1,0,0\n".as_bytes(), &s),
            Err(Error::Schema(_))
        ));
        match read_dataset("title,a,b\nx,1,0\ny,2,0\n".as_bytes(), &s) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("{other:?}"),
        }
        let r = read_dataset("title,a,b\n  ,1,0\ny,0,1\n".as_bytes(), &s).unwrap();
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.rejected, 1);
    }

    #[test]
    fn forty_records_split_36_2_2() {
        let s = LabelSchema::default();
        let recs: Vec<_> = (0..40)
            .map(|i| single(&format!("t{i}"), i % 15 + (i % 15 >= 7) as usize, &s))
            .collect();
        let split = stratified_split(&recs, [0.9, 0.05, 0.05], 1).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (36, 2, 2)
        );
    }

    #[test]
    fn full_corpus_split_sizes() {
        // 38,414 titles keep a trainable label out of 49,980 scraped
        assert_eq!(
            partition_sizes(38_414, &[0.9, 0.05, 0.05]),
            vec![34_572, 1_921, 1_921]
        );
    }

    #[test]
    fn split_errors() {
        let s = LabelSchema::default();
        let recs: Vec<_> = (0..10).map(|i| single("t", i % 3, &s)).collect();
        assert!(matches!(
            stratified_split(&recs, [0.9, 0.05, 0.05], 0),
            Err(Error::Size(_))
        ));
        assert!(matches!(
            stratified_split(&recs, [0.5, 0.5, 0.5], 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            stratified_split(&[], [0.8, 0.1, 0.1], 0),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn synthetic_corpus_contract() {
        let s = LabelSchema::default();
        let recs = make_synthetic_corpus(&s, 10, 5);
        assert_eq!(recs.len(), 150);
        let keywords: Vec<(usize, String)> = s
            .trainable_indices()
            .into_iter()
            .map(|i| (i, synthetic_keyword(&s.names()[i])))
            .collect();
        for r in &recs {
            let words: Vec<&str> = r.title.split(' ').collect();
            for (slot, kw) in &keywords {
                let count = words.iter().filter(|w| *w == kw).count();
                // label bit set iff keyword present, exactly once
                assert_eq!(count, r.labels[*slot] as usize, "{} / {kw}", r.title);
            }
        }
        assert_eq!(recs, make_synthetic_corpus(&s, 10, 5));
        assert_ne!(recs, make_synthetic_corpus(&s, 10, 6));
    }

    #[test]
    fn filler_never_contains_keywords() {
        let s = LabelSchema::default();
        for name in s.names() {
            let kw = synthetic_keyword(name);
            assert!(!FILLER.contains(&kw.as_str()), "{kw}");
        }
    }

    #[test]
    fn write_then_load_round_trip() {
        let s = LabelSchema::default();
        let recs = make_synthetic_corpus(&s, 3, 9);
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &recs, &s).unwrap();
        let back = read_dataset(buf.as_slice(), &s).unwrap();
        assert_eq!(back.records, recs);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn random_labels(n: usize, n_labels: usize, seed: u64) -> Vec<Vec<u8>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n)
                .map(|_| {
                    let mut row = vec![0u8; n_labels];
                    // skewed, multi-label
                    let first = (rng.gen::<f64>().powi(2) * n_labels as f64) as usize;
                    row[first.min(n_labels - 1)] = 1;
                    if rng.gen_bool(0.3) {
                        row[rng.gen_range(0..n_labels)] = 1;
                    }
                    row
                })
                .collect()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(40))]
            #[test]
            fn partitions_are_disjoint_exhaustive_and_stratified(
                n in 60usize..1500,
                n_labels in 2usize..16,
                seed in any::<u64>(),
            ) {
                let labels = random_labels(n, n_labels, seed);
                let ratios = [0.9, 0.05, 0.05];
                let parts = stratified_partition(&labels, &ratios, seed).unwrap();
                let mut all: Vec<usize> = parts.concat();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert_eq!(parts.iter().map(Vec::len).collect::<Vec<_>>(), partition_sizes(n, &ratios));
                for l in 0..n_labels {
                    let total: usize = labels.iter().map(|r| r[l] as usize).sum();
                    if total < 20 {
                        continue;
                    }
                    let global = total as f64 / n as f64;
                    let pos: usize = parts[0].iter().map(|&i| labels[i][l] as usize).sum();
                    let train_rate = pos as f64 / parts[0].len() as f64;
                    prop_assert!((train_rate - global).abs() <= 0.02, "label {l}: {train_rate} vs {global}");
                }
            }
        }

        #[test]
        fn large_split_stratifies_every_partition() {
            let labels = random_labels(3000, 15, 42);
            let parts = stratified_partition(&labels, &[0.9, 0.05, 0.05], 7).unwrap();
            for l in 0..15 {
                let total: usize = labels.iter().map(|r| r[l] as usize).sum();
                if total < 20 {
                    continue;
                }
                let global = total as f64 / 3000.0;
                for p in &parts {
                    let pos: usize = p.iter().map(|&i| labels[i][l] as usize).sum();
                    assert!((pos as f64 / p.len() as f64 - global).abs() <= 0.02);
                }
            }
        }

        #[test]
        fn same_seed_same_split() {
            let labels = random_labels(500, 6, 3);
            let a = stratified_partition(&labels, &[0.8, 0.1, 0.1], 11).unwrap();
            let b = stratified_partition(&labels, &[0.8, 0.1, 0.1], 11).unwrap();
            assert_eq!(a, b);
        }
    }
}
