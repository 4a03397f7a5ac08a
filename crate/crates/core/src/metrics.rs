//! Ranking metrics for multi-label scores: AUROC, macro AUROC, SEM across
//! folds, and top-N accuracy.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Mann–Whitney AUROC: the probability that a random positive outscores a
/// random negative, ties counting half. Sort-based, O(n log n).
pub fn binary_auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "binary_auroc",
            &[scores.len()],
            &[labels.len()],
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Contract("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l != 0).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "{pos} positives and {neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    // twice the concordant-plus-half-tied count, kept integral
    let mut twice: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] != 0 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        twice += p * (2 * neg_below + n);
        neg_below += n;
        i = j;
    }
    Ok(twice as f64 / (2 * pos * neg) as f64)
}

/// Per-label AUROC over the columns of `[n × labels]` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroAuroc {
    pub macro_auroc: f64,
    /// `None` where the label has a single class in the evaluation set.
    pub per_label: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
}

pub fn macro_auroc(scores: &[Vec<f64>], labels: &[Vec<u8>]) -> Result<MacroAuroc> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "macro_auroc",
            &[scores.len()],
            &[labels.len()],
        ));
    }
    let width = scores.first().map_or(0, Vec::len);
    for (s, l) in scores.iter().zip(labels) {
        if s.len() != width || l.len() != width {
            return Err(Error::shape("macro_auroc", &[s.len()], &[l.len()]));
        }
    }
    let mut per_label = Vec::with_capacity(width);
    let mut skipped = Vec::new();
    let mut col_s = vec![0.0; scores.len()];
    let mut col_l = vec![0u8; scores.len()];
    for j in 0..width {
        for i in 0..scores.len() {
            col_s[i] = scores[i][j];
            col_l[i] = labels[i][j];
        }
        match binary_auroc(&col_s, &col_l) {
            Ok(a) => per_label.push(Some(a)),
            Err(Error::UndefinedMetric(_)) => {
                skipped.push(j);
                per_label.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let defined: Vec<f64> = per_label.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMetric(
            "every label has a single class".into(),
        ));
    }
    Ok(MacroAuroc {
        macro_auroc: defined.iter().sum::<f64>() / defined.len() as f64,
        per_label,
        skipped,
    })
}

/// Standard error of the mean with the n−1 sample deviation.
pub fn sem(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Size(format!(
            "SEM needs at least 2 values, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    // shifted by the first value, so constant input gives exactly zero
    let shift = values[0];
    let mean = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| (v - shift - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok(var.sqrt() / n.sqrt())
}

/// Label indices ordered by descending score, ties by ascending index.
pub fn ranked_labels(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Fraction of samples whose `n` best-scored labels hit a true label.
pub fn topn_accuracy(scores: &[Vec<f64>], labels: &[Vec<u8>], n: usize) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "topn_accuracy",
            &[scores.len()],
            &[labels.len()],
        ));
    }
    if scores.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    let width = scores[0].len();
    if n == 0 || n > width {
        return Err(Error::Config(format!(
            "top-n needs 1 ≤ n ≤ {width}, got {n}"
        )));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| ranked_labels(s).iter().take(n).any(|&j| l[j] != 0))
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Everything reported for one scored evaluation set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub per_label: Vec<Option<f64>>,
    pub macro_auroc: f64,
    pub sem: Option<f64>,
    /// Top-1, top-2, top-3 accuracy.
    pub top_n: [f64; 3],
    pub skipped: usize,
}

impl EvalReport {
    pub fn from_scores(scores: &[Vec<f64>], labels: &[Vec<u8>]) -> Result<Self> {
        let m = macro_auroc(scores, labels)?;
        let mut top_n = [0.0; 3];
        for (k, slot) in top_n.iter_mut().enumerate() {
            *slot = topn_accuracy(scores, labels, (k + 1).min(scores[0].len()))?;
        }
        Ok(EvalReport {
            per_label: m.per_label,
            macro_auroc: m.macro_auroc,
            sem: None,
            top_n,
            skipped: m.skipped.len(),
        })
    }

    /// `key=value` lines; per-label entries use the given names.
    pub fn to_key_values(&self, names: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "macro_auroc={}", self.macro_auroc);
        if let Some(e) = self.sem {
            let _ = writeln!(s, "sem={e}");
        }
        for (k, v) in self.top_n.iter().enumerate() {
            let _ = writeln!(s, "top{}_accuracy={v}", k + 1);
        }
        let _ = writeln!(s, "skipped_labels={}", self.skipped);
        for (i, a) in self.per_label.iter().enumerate() {
            let name = names.get(i).cloned().unwrap_or_else(|| format!("label{i}"));
            match a {
                Some(a) => {
                    let _ = writeln!(s, "auroc.{name}={a}");
                }
                None => {
                    let _ = writeln!(s, "auroc.{name}=skipped");
                }
            }
        }
        s
    }

    pub fn csv_header() -> &'static str {
        "macro_auroc,sem,top1,top2,top3,skipped"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.macro_auroc,
            self.sem.map(|v| v.to_string()).unwrap_or_default(),
            self.top_n[0],
            self.top_n[1],
            self.top_n[2],
            self.skipped
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(binary_auroc(&[0.9, 0.8, 0.1], &[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(binary_auroc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(
            binary_auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(),
            0.75
        );
        assert!(matches!(
            binary_auroc(&[0.1, 0.2], &[1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    fn brute(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    proptest! {
        #[test]
        fn auroc_matches_pair_count(
            data in proptest::collection::vec((0u8..8, any::<bool>()), 2..120)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 8.0).collect();
            let labels: Vec<u8> = data.iter().map(|(_, l)| *l as u8).collect();
            match binary_auroc(&scores, &labels) {
                Ok(a) => prop_assert!((a - brute(&scores, &labels)).abs() <= 1e-12),
                Err(_) => prop_assert!(labels.iter().all(|&l| l == labels[0])),
            }
        }

        #[test]
        fn auroc_is_rank_invariant_and_complementary(
            data in proptest::collection::vec((-1e3f64..1e3, any::<bool>()), 2..80)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let labels: Vec<u8> = data.iter().map(|(_, l)| *l as u8).collect();
            prop_assume!(labels.contains(&1) && labels.contains(&0));
            let a = binary_auroc(&scores, &labels).unwrap();
            let warped: Vec<f64> = scores.iter().map(|s| (s / 100.0).tanh() * 3.0 + 7.0).collect();
            prop_assert_eq!(binary_auroc(&warped, &labels).unwrap(), a);
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[0] < w[1]) {
                let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
                prop_assert!((a + binary_auroc(&scores, &flipped).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn macro_skips_single_class_labels() {
        // column 0: AUROC 0.75; column 1: all negative; column 2: 1.0
        let scores = vec![
            vec![0.1, 0.5, 0.9],
            vec![0.4, 0.5, 0.1],
            vec![0.35, 0.5, 0.8],
            vec![0.8, 0.5, 0.2],
        ];
        let labels = vec![vec![0, 0, 1], vec![0, 0, 0], vec![1, 0, 1], vec![1, 0, 0]];
        let m = macro_auroc(&scores, &labels).unwrap();
        assert_eq!(m.skipped, vec![1]);
        assert_eq!(m.per_label[0], Some(0.75));
        assert_eq!(m.per_label[2], Some(1.0));
        assert_abs_diff_eq!(m.macro_auroc, 0.875);

        let perm = [2, 0, 1];
        let ps: Vec<Vec<f64>> = scores
            .iter()
            .map(|r| perm.iter().map(|&j| r[j]).collect())
            .collect();
        let pl: Vec<Vec<u8>> = labels
            .iter()
            .map(|r| perm.iter().map(|&j| r[j]).collect())
            .collect();
        assert_eq!(macro_auroc(&ps, &pl).unwrap().macro_auroc, m.macro_auroc);

        let none = vec![vec![0u8; 3]; 4];
        assert!(macro_auroc(&scores, &none).is_err());
    }

    #[test]
    fn macro_is_plain_mean() {
        // two labels with AUROC 0.8 and 0.6
        let s0 = [0.9, 0.2, 0.6, 0.4, 0.5, 0.1, 0.3, 0.7, 0.8, 0.0];
        let l0: [u8; 10] = [1, 0, 1, 0, 1, 0, 0, 1, 0, 1];
        let a0 = binary_auroc(&s0, &l0).unwrap();
        let s1 = [0.1, 0.9, 0.8, 0.3, 0.5, 0.2, 0.7, 0.4, 0.6, 0.0];
        let l1: [u8; 10] = [1, 1, 0, 0, 1, 0, 1, 1, 0, 0];
        let a1 = binary_auroc(&s1, &l1).unwrap();
        let scores: Vec<Vec<f64>> = (0..10).map(|i| vec![s0[i], s1[i]]).collect();
        let labels: Vec<Vec<u8>> = (0..10).map(|i| vec![l0[i], l1[i]]).collect();
        assert_abs_diff_eq!(
            macro_auroc(&scores, &labels).unwrap().macro_auroc,
            (a0 + a1) / 2.0
        );
    }

    #[test]
    fn sem_examples() {
        assert_eq!(sem(&[0.4, 0.4, 0.4]).unwrap(), 0.0);
        assert_abs_diff_eq!(sem(&[0.0, 1.0]).unwrap(), 0.5, epsilon = 1e-15);
        let v = [0.81, 0.84, 0.79, 0.9];
        let scaled: Vec<f64> = v.iter().map(|x| -3.0 * x).collect();
        assert_abs_diff_eq!(
            sem(&scaled).unwrap(),
            3.0 * sem(&v).unwrap(),
            epsilon = 1e-12
        );
        assert!(sem(&[1.0]).is_err());
    }

    #[test]
    fn topn_examples() {
        // labels: 0 robots, 1 computer-vision, 2 medical, 3 other
        let scores = vec![vec![0.9, 0.8, 0.7, 0.1]];
        let labels = vec![vec![0, 1, 0, 0]];
        assert_eq!(topn_accuracy(&scores, &labels, 1).unwrap(), 0.0);
        assert_eq!(topn_accuracy(&scores, &labels, 2).unwrap(), 1.0);
        assert_eq!(topn_accuracy(&scores, &labels, 4).unwrap(), 1.0);
        let flat = vec![vec![0.5; 4], vec![0.5; 4]];
        let l = vec![vec![1, 0, 0, 0], vec![0, 0, 0, 1]];
        assert_eq!(topn_accuracy(&flat, &l, 1).unwrap(), 0.5);
        assert_eq!(ranked_labels(&[0.5; 4]), vec![0, 1, 2, 3]);
        assert!(topn_accuracy(&flat, &l, 0).is_err());
        assert!(topn_accuracy(&flat, &l, 5).is_err());
    }

    #[test]
    fn report_serialises() {
        let scores = vec![vec![0.9, 0.1], vec![0.2, 0.7]];
        let labels = vec![vec![1, 0], vec![0, 1]];
        let r = EvalReport::from_scores(&scores, &labels).unwrap();
        assert_eq!(r.macro_auroc, 1.0);
        let kv = r.to_key_values(&["a".into(), "b".into()]);
        assert!(kv.contains("macro_auroc=1\n"));
        assert!(kv.contains("auroc.b=1\n"));
        assert_eq!(
            r.to_csv_row().split(',').count(),
            EvalReport::csv_header().split(',').count()
        );
    }
}
