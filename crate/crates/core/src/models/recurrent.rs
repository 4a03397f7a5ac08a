use super::{Family, Layout, Model};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Run the stacked recurrence over time-major input `[steps·batch × embed]`
/// and return the top layer's state at each sequence's last real position,
/// `[batch × hidden]`.
///
/// Gate blocks follow the usual column order: GRU `[r | z | n]`, LSTM
/// `[i | f | g | o]`. Padded steps carry the previous state through unchanged.
pub fn recurrent_forward<'p>(
    g: &mut Graph<'p>,
    model: &'p Model,
    x: Var,
    layout: &Layout,
) -> Result<Var> {
    let cfg = &model.config;
    if !cfg.family.is_recurrent() {
        return Err(Error::Contract(format!(
            "{} is not a recurrent family",
            cfg.family
        )));
    }
    if !layout.time_major {
        return Err(Error::Contract("recurrent input must be time-major".into()));
    }
    let (bsz, steps, h) = (layout.batch, layout.steps, cfg.hidden);
    let gh = cfg.family.gates() * h;
    let mut input = x;
    let mut top = None;
    for l in 0..cfg.layers {
        let w_ih = model.param(g, &format!("rnn.{l}.w_ih"))?;
        let w_hh = model.param(g, &format!("rnn.{l}.w_hh"))?;
        let b_ih = model.param(g, &format!("rnn.{l}.b_ih"))?;
        let b_hh = model.param(g, &format!("rnn.{l}.b_hh"))?;
        let xp = g.matmul(input, w_ih)?;
        let xp = g.add_row(xp, b_ih)?;

        let zero_state = g.constant(Tensor::zeros(&[bsz, h]));
        let zero_gates = g.constant(Tensor::zeros(&[bsz, gh]));
        let mut hs = zero_state;
        let mut cs = zero_state;
        let mut outs = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = g.slice(xp, t * bsz..(t + 1) * bsz, 0..gh)?;
            let hp = if t == 0 {
                g.add_row(zero_gates, b_hh)?
            } else {
                let m = g.matmul(hs, w_hh)?;
                g.add_row(m, b_hh)?
            };
            let (h_new, c_new) = cell(g, cfg.family, xt, hp, hs, cs, h, bsz)?;
            let live: Vec<bool> = layout.lens.iter().map(|&n| t < n).collect();
            if live.iter().all(|&a| a) {
                hs = h_new;
                cs = c_new;
            } else {
                hs = g.select_rows(&live, h_new, hs)?;
                if cfg.family == Family::Lstm {
                    cs = g.select_rows(&live, c_new, cs)?;
                }
            }
            outs.push(hs);
        }
        top = Some(hs);
        if l + 1 < cfg.layers {
            input = g.concat_rows(&outs)?;
        }
    }
    Ok(top.expect("at least one layer"))
}

#[allow(clippy::too_many_arguments)]
fn cell(
    g: &mut Graph,
    family: Family,
    xt: Var,
    hp: Var,
    h_prev: Var,
    c_prev: Var,
    h: usize,
    bsz: usize,
) -> Result<(Var, Var)> {
    let rows = 0..bsz;
    match family {
        Family::Rnn => {
            let s = g.add(xt, hp)?;
            Ok((g.tanh(s), c_prev))
        }
        Family::Gru => {
            let xrz = g.slice(xt, rows.clone(), 0..2 * h)?;
            let hrz = g.slice(hp, rows.clone(), 0..2 * h)?;
            let s = g.add(xrz, hrz)?;
            let rz = g.sigmoid(s);
            let r = g.slice(rz, rows.clone(), 0..h)?;
            let z = g.slice(rz, rows.clone(), h..2 * h)?;
            let xn = g.slice(xt, rows.clone(), 2 * h..3 * h)?;
            let hn = g.slice(hp, rows, 2 * h..3 * h)?;
            let rh = g.mul(r, hn)?;
            let s = g.add(xn, rh)?;
            let n = g.tanh(s);
            // (1 - z)·n + z·h = n + z·(h - n)
            let d = g.sub(h_prev, n)?;
            let zd = g.mul(z, d)?;
            Ok((g.add(n, zd)?, c_prev))
        }
        Family::Lstm => {
            let s = g.add(xt, hp)?;
            let i = g.slice(s, rows.clone(), 0..h)?;
            let f = g.slice(s, rows.clone(), h..2 * h)?;
            let c = g.slice(s, rows.clone(), 2 * h..3 * h)?;
            let o = g.slice(s, rows, 3 * h..4 * h)?;
            let (i, f, c, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(c), g.sigmoid(o));
            let fc = g.mul(f, c_prev)?;
            let ic = g.mul(i, c)?;
            let c_new = g.add(fc, ic)?;
            let tc = g.tanh(c_new);
            Ok((g.mul(o, tc)?, c_new))
        }
        Family::Transformer => unreachable!("checked by caller"),
    }
}
