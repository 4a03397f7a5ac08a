use super::{Layout, Model};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Output of one attention block.
pub struct Attention {
    /// `[batch·steps × hidden]` after the output projection.
    pub output: Var,
    /// `[steps × steps]` weight matrices, index `b * heads + head`.
    pub weights: Vec<Var>,
}

/// Scaled dot-product self-attention of layer `layer` over batch-major input
/// `[batch·steps × hidden]`. Keys at pad positions are masked to −∞.
pub fn multi_head_attention<'p>(
    g: &mut Graph<'p>,
    model: &'p Model,
    layer: usize,
    x: Var,
    layout: &Layout,
) -> Result<Attention> {
    let cfg = &model.config;
    let (h, heads) = (cfg.hidden, cfg.heads);
    if heads == 0 || h % heads != 0 {
        return Err(Error::Config(format!(
            "hidden {h} is not divisible by {heads} heads"
        )));
    }
    if layout.time_major {
        return Err(Error::Contract(
            "attention input must be batch-major".into(),
        ));
    }
    let dh = h / heads;
    let steps = layout.steps;
    let proj = |g: &mut Graph<'p>, m: &str| -> Result<Var> {
        let w = model.param(g, &format!("encoder.{layer}.{m}.w"))?;
        let b = model.param(g, &format!("encoder.{layer}.{m}.b"))?;
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    };
    let q = proj(g, "q")?;
    let q = g.scale(q, 1.0 / (dh as f64).sqrt());
    let k = proj(g, "k")?;
    let v = proj(g, "v")?;

    let mut weights = Vec::with_capacity(layout.batch * heads);
    let mut rows = Vec::with_capacity(layout.batch);
    for b in 0..layout.batch {
        let r = b * steps..(b + 1) * steps;
        let len = layout.lens[b];
        let mask = (len < steps).then(|| {
            let mut m = Tensor::zeros(&[steps, steps]);
            for i in 0..steps {
                m.row_mut(i)[len..].fill(f64::NEG_INFINITY);
            }
            g.constant(m)
        });
        let mut cols = Vec::with_capacity(heads);
        for hd in 0..heads {
            let c = hd * dh..(hd + 1) * dh;
            let qh = g.slice(q, r.clone(), c.clone())?;
            let kh = g.slice(k, r.clone(), c.clone())?;
            let vh = g.slice(v, r.clone(), c)?;
            let kt = g.transpose(kh)?;
            let mut s = g.matmul(qh, kt)?;
            if let Some(m) = mask {
                s = g.add(s, m)?;
            }
            let a = g.softmax(s)?;
            weights.push(a);
            cols.push(g.matmul(a, vh)?);
        }
        rows.push(if heads == 1 {
            cols[0]
        } else {
            g.concat_cols(&cols)?
        });
    }
    let joined = if rows.len() == 1 {
        rows[0]
    } else {
        g.concat_rows(&rows)?
    };
    let w = model.param(g, &format!("encoder.{layer}.o.w"))?;
    let b = model.param(g, &format!("encoder.{layer}.o.b"))?;
    let y = g.matmul(joined, w)?;
    Ok(Attention {
        output: g.add_row(y, b)?,
        weights,
    })
}

/// Post-norm encoder over batch-major input `[batch·steps × embed]`;
/// returns `[batch·steps × hidden]`.
pub fn transformer_encode<'p>(
    g: &mut Graph<'p>,
    model: &'p Model,
    x: Var,
    layout: &Layout,
) -> Result<Var> {
    let cfg = &model.config;
    if layout.steps > cfg.max_len {
        return Err(Error::Size(format!(
            "{} positions exceed {}",
            layout.steps, cfg.max_len
        )));
    }
    let mut hs = if cfg.embed_dim != cfg.hidden {
        let w = model.param(g, "encoder.in_proj.w")?;
        let b = model.param(g, "encoder.in_proj.b")?;
        let y = g.matmul(x, w)?;
        g.add_row(y, b)?
    } else {
        x
    };
    let pos = model.param(g, "encoder.pos")?;
    let positions: Vec<usize> = (0..layout.batch).flat_map(|_| 0..layout.steps).collect();
    let pe = g.gather_rows(pos, &positions, None)?;
    hs = g.add(hs, pe)?;

    for l in 0..cfg.layers {
        let att = multi_head_attention(g, model, l, hs, layout)?;
        let res = g.add(hs, att.output)?;
        hs = layer_norm(g, model, res, &format!("encoder.{l}.ln1"))?;

        let w1 = model.param(g, &format!("encoder.{l}.ffn1.w"))?;
        let b1 = model.param(g, &format!("encoder.{l}.ffn1.b"))?;
        let w2 = model.param(g, &format!("encoder.{l}.ffn2.w"))?;
        let b2 = model.param(g, &format!("encoder.{l}.ffn2.b"))?;
        let f = g.matmul(hs, w1)?;
        let f = g.add_row(f, b1)?;
        let f = g.relu(f);
        let f = g.matmul(f, w2)?;
        let f = g.add_row(f, b2)?;
        let res = g.add(hs, f)?;
        hs = layer_norm(g, model, res, &format!("encoder.{l}.ln2"))?;
    }
    Ok(hs)
}

fn layer_norm<'p>(g: &mut Graph<'p>, model: &'p Model, x: Var, prefix: &str) -> Result<Var> {
    let gamma = model.param(g, &format!("{prefix}.gamma"))?;
    let beta = model.param(g, &format!("{prefix}.beta"))?;
    g.layer_norm(x, gamma, beta, LAYER_NORM_EPS)
}
