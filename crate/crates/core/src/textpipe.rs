//! Title normalisation, vocabulary construction and fixed-length encoding.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const CLS: &str = "<cls>";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const N_RESERVED: usize = 3;

/// Token positions per encoded title.
pub const MAX_LEN: usize = 64;

/// Collapse whitespace, turn every character that is not an ASCII letter,
/// digit or space into a space, collapse again, then lowercase.
pub fn preprocess_title(raw: &str) -> String {
    let collapsed = collapse_whitespace(raw);
    let cleaned: String = collapsed
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == ' ' {
                c
            } else {
                ' '
            }
        })
        .collect();
    collapse_whitespace(&cleaned).to_ascii_lowercase()
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Token → index map with `<pad>`, `<unk>` and `<cls>` at 0, 1, 2.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    min_count: usize,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, min_count: usize) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (i, t) in self.tokens.iter().enumerate() {
            writeln!(w, "{t}\t{i}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut tokens = Vec::new();
        for (line_no, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (tok, idx) = line.split_once('\t').ok_or_else(|| Error::Parse {
                row: line_no + 1,
                column: "index".into(),
                message: "expected token<TAB>index".into(),
            })?;
            let idx: usize = idx.trim().parse().map_err(|_| Error::Parse {
                row: line_no + 1,
                column: "index".into(),
                message: format!("bad index {idx:?}"),
            })?;
            if idx != tokens.len() {
                return Err(Error::Format(format!(
                    "vocabulary indices must be contiguous; line {} has {idx}",
                    line_no + 1
                )));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < N_RESERVED || tokens[..N_RESERVED] != [PAD, UNK, CLS] {
            return Err(Error::Format("reserved tokens must come first".into()));
        }
        Ok(Vocabulary::from_tokens(tokens, 1))
    }

    /// Space-joined tokens of the real positions of `seq`, `<cls>` dropped.
    pub fn decode(&self, seq: &TokenSequence) -> String {
        seq.real_ids()
            .iter()
            .filter(|&&id| id != CLS_ID)
            .map(|&id| self.token(id).unwrap_or(UNK))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Build a vocabulary from preprocessed titles. Tokens seen fewer than
/// `min_count` times are dropped; the rest are ordered by descending count,
/// then lexicographically.
pub fn build_vocab<S: AsRef<str>>(titles: &[S], min_count: usize) -> Vocabulary {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in titles {
        for tok in t.as_ref().split(' ').filter(|s| !s.is_empty()) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(tok, c)| c >= min_count && ![PAD, UNK, CLS].contains(&tok))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens: Vec<String> = [PAD, UNK, CLS].iter().map(|s| s.to_string()).collect();
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens, min_count)
}

/// Fixed-length id sequence; `mask[i]` is true at real-token positions, which
/// always form a prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
}

impl TokenSequence {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Number of real (unmasked) positions.
    pub fn real_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    pub fn real_ids(&self) -> &[u32] {
        &self.ids[..self.real_len()]
    }
}

pub fn encode(title: &str, vocab: &Vocabulary, max_len: usize, prepend_cls: bool) -> TokenSequence {
    let mut ids = Vec::with_capacity(max_len);
    if prepend_cls && max_len > 0 {
        ids.push(CLS_ID);
    }
    for tok in title.split(' ').filter(|s| !s.is_empty()) {
        if ids.len() == max_len {
            break;
        }
        ids.push(vocab.id_or_unk(tok));
    }
    let real = ids.len();
    ids.resize(max_len, PAD_ID);
    let mask = (0..max_len).map(|i| i < real).collect();
    TokenSequence { ids, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn preprocess_examples() {
        assert_eq!(
            preprocess_title(
                "Faster R-CNN: Towards Real-Time Object Detection with Region Proposal Networks"
            ),
            "faster r cnn towards real time object detection with region proposal networks"
        );
        assert_eq!(preprocess_title("  GPT-3   Rocks!! "), "gpt 3 rocks");
        assert_eq!(preprocess_title(""), "");
        assert_eq!(preprocess_title("Café\tNoir"), "caf noir");
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent_and_clean(s in "\\PC{0,80}") {
            let once = preprocess_title(&s);
            prop_assert_eq!(preprocess_title(&once), once.clone());
            prop_assert!(once.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == ' '));
            prop_assert!(!once.contains("  "));
            prop_assert!(!once.starts_with(' ') && !once.ends_with(' '));
        }

        #[test]
        fn encode_decode_round_trip(words in proptest::collection::vec("[a-z]{1,6}", 0..20), cls in any::<bool>()) {
            let title = words.join(" ");
            let vocab = build_vocab(&[title.as_str()], 1);
            let seq = encode(&title, &vocab, 24, cls);
            let again = encode(&vocab.decode(&seq), &vocab, 24, cls);
            prop_assert_eq!(&again, &seq);
            // mask is a prefix of trues; ids are pad exactly off-mask
            let r = seq.real_len();
            prop_assert!(seq.mask[r..].iter().all(|m| !m));
            for (id, m) in seq.ids.iter().zip(&seq.mask) {
                prop_assert_eq!(*id == PAD_ID, !*m);
            }
        }
    }

    #[test]
    fn vocab_frequency_order() {
        let v = build_vocab(&["deep learning", "deep nets"], 1);
        assert_eq!(
            v.tokens(),
            &["<pad>", "<unk>", "<cls>", "deep", "learning", "nets"]
        );
        assert_eq!(v.get("deep"), Some(3));
        let v2 = build_vocab(&["deep learning", "deep nets"], 2);
        assert_eq!(v2.tokens(), &["<pad>", "<unk>", "<cls>", "deep"]);
        let empty: Vec<&str> = vec![];
        assert_eq!(build_vocab(&empty, 1).len(), 3);
    }

    fn small_vocab() -> Vocabulary {
        Vocabulary::from_tokens(
            ["<pad>", "<unk>", "<cls>", "deep", "learning"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            1,
        )
    }

    #[test]
    fn encode_examples() {
        let v = small_vocab();
        let s = encode("deep learning", &v, 6, false);
        assert_eq!(s.ids, vec![3, 4, 0, 0, 0, 0]);
        assert_eq!(s.mask, vec![true, true, false, false, false, false]);
        let s = encode("deep flickering", &v, 6, false);
        assert_eq!(s.ids, vec![3, 1, 0, 0, 0, 0]);
        let long = vec!["deep"; 70].join(" ");
        let s = encode(&long, &v, MAX_LEN, false);
        assert_eq!(s.ids.len(), 64);
        assert!(s.mask.iter().all(|&m| m));
        let s = encode("learning", &v, 4, true);
        assert_eq!(s.ids, vec![CLS_ID, 4, 0, 0]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        let v = build_vocab(&["a b b c", "c c"], 1);
        v.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("<pad>\t0\n<unk>\t1\n<cls>\t2\n"));
        assert_eq!(Vocabulary::load(&path).unwrap().tokens(), v.tokens());
        std::fs::write(&path, "x\t0\n").unwrap();
        assert!(Vocabulary::load(&path).is_err());
    }
}
