//! Gradient saliency over input tokens, and heatmap rendering.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::autodiff::{sigmoid, Graph};
use crate::embeddings::EmbeddingMode;
use crate::error::{Error, Result};
use crate::metrics::ranked_labels;
use crate::models::Model;
use crate::textpipe::{TokenSequence, Vocabulary};

/// How per-token gradient norms are scaled for presentation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Divide by the largest score, so the top token is 1.
    #[default]
    Max,
    /// Divide by the L2 norm of the whole score vector.
    Sequence,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Normalization::Max),
            "sequence" | "l2" => Ok(Normalization::Sequence),
            _ => Err(Error::Config(format!("unknown normalization {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    pub target_label: usize,
    /// Best three labels as (index, probability).
    pub top3: Vec<(usize, f64)>,
}

impl SaliencyMap {
    /// Index of the highest-scoring token, first on ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &s) in self.scores.iter().enumerate() {
            if best.is_none_or(|b| s > self.scores[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// Scale raw per-token norms.
pub fn normalize_scores(raw: &[f64], how: Normalization) -> Vec<f64> {
    let denom = match how {
        Normalization::Max => raw.iter().cloned().fold(0.0, f64::max),
        Normalization::Sequence => raw.iter().map(|v| v * v).sum::<f64>().sqrt(),
    };
    if denom > 0.0 {
        raw.iter().map(|v| v / denom).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

/// L2 norm of the target logit's gradient at each real token's embedding,
/// `<cls>` and pads excluded. `target = None` picks the highest logit.
pub fn token_saliency(
    model: &Model,
    vocab: &Vocabulary,
    seq: &TokenSequence,
    target: Option<usize>,
    how: Normalization,
) -> Result<SaliencyMap> {
    let trainable = model
        .params
        .by_name("embedding")
        .is_some_and(|p| p.trainable);
    if model.config.embedding != EmbeddingMode::Lookup || !trainable {
        return Err(Error::Unsupported(
            "saliency needs the trainable lookup embedding".into(),
        ));
    }
    let n_labels = model.config.n_labels;
    if let Some(t) = target {
        if t >= n_labels {
            return Err(Error::Index {
                what: "target label",
                index: t,
                size: n_labels,
            });
        }
    }
    let mut g = Graph::with_params(&model.params);
    let f = model.forward(&mut g, &[seq])?;
    let logits = g.value(f.logits).row(0).to_vec();
    let target = target.unwrap_or_else(|| ranked_labels(&logits)[0]);
    let picked = g.slice(f.logits, 0..1, target..target + 1)?;
    let picked = g.sum(picked);
    let grads = g.backward(picked)?;

    let skip = usize::from(model.config.uses_cls());
    let positions = skip..seq.real_len();
    let raw: Vec<f64> = match grads.get(f.embedded) {
        Some(grad) => positions
            .clone()
            .map(|t| {
                grad.row(f.layout.row(0, t))
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect(),
        None => vec![0.0; positions.len()],
    };
    let tokens = positions
        .map(|t| {
            vocab
                .token(seq.ids[t])
                .unwrap_or(crate::textpipe::UNK)
                .to_string()
        })
        .collect();
    let top3 = ranked_labels(&logits)
        .into_iter()
        .take(3)
        .map(|i| (i, sigmoid(logits[i])))
        .collect();
    Ok(SaliencyMap {
        tokens,
        scores: normalize_scores(&raw, how),
        target_label: target,
        top3,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatmapFormat {
    Ansi,
    Html,
}

impl FromStr for HeatmapFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ansi" => Ok(HeatmapFormat::Ansi),
            "html" => Ok(HeatmapFormat::Html),
            _ => Err(Error::Config(format!("unknown heatmap format {s:?}"))),
        }
    }
}

/// Background intensity for a score, 0 (none) to 255 (full).
pub fn intensity(score: f64) -> u8 {
    let s = if score.is_finite() {
        score.clamp(0.0, 1.0)
    } else {
        0.0
    };
    (s * 255.0).round() as u8
}

fn label_name(names: &[String], i: usize) -> String {
    names
        .get(i)
        .cloned()
        .unwrap_or_else(|| format!("label-{i}"))
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Heatmap document text; one cell per token.
pub fn heatmap_text(map: &SaliencyMap, format: HeatmapFormat, label_names: &[String]) -> String {
    let mut s = String::new();
    match format {
        HeatmapFormat::Ansi => {
            let top: Vec<String> = map
                .top3
                .iter()
                .map(|&(i, p)| format!("{} {:.3}", label_name(label_names, i), p))
                .collect();
            let _ = writeln!(s, "top-3: {}", top.join(" | "));
            let _ = writeln!(s, "target: {}", label_name(label_names, map.target_label));
            let cells: Vec<String> = map
                .tokens
                .iter()
                .zip(&map.scores)
                .map(|(tok, &sc)| {
                    let fade = 255 - intensity(sc);
                    format!("\x1b[48;2;255;{fade};{fade}m\x1b[38;2;0;0;0m {tok} \x1b[0m")
                })
                .collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        HeatmapFormat::Html => {
            s.push_str("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>saliency</title></head>\n");
            s.push_str("<body style=\"font-family:sans-serif\">\n<ol class=\"top3\">\n");
            for &(i, p) in &map.top3 {
                let _ = writeln!(
                    s,
                    "<li>{} {:.3}</li>",
                    html_escape(&label_name(label_names, i)),
                    p
                );
            }
            let _ = writeln!(
                s,
                "</ol>\n<p>target: {}</p>\n<p>",
                html_escape(&label_name(label_names, map.target_label))
            );
            for (tok, &sc) in map.tokens.iter().zip(&map.scores) {
                let _ = writeln!(
                    s,
                    "<span class=\"tok\" style=\"background:rgba(220,30,30,{:.4});padding:2px 4px\">{}</span>",
                    f64::from(intensity(sc)) / 255.0,
                    html_escape(tok)
                );
            }
            s.push_str("</p>\n</body></html>\n");
        }
    }
    s
}

/// Write a heatmap to `out` via a temporary file in the same directory.
pub fn render_heatmap(
    map: &SaliencyMap,
    format: HeatmapFormat,
    out: &Path,
    label_names: &[String],
) -> Result<()> {
    let dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(heatmap_text(map, format, label_names).as_bytes())?;
    tmp.persist(out).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
