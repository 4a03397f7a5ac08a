#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use titletopic::autodiff::{Elementwise, Graph, Tensor, Var};
use titletopic::models::{bce_multilabel_loss, Family, Model, ModelConfig, Pooling};
use titletopic::textpipe::{TokenSequence, CLS_ID, PAD_ID};

pub const STEP: f64 = 1e-5;

/// Elementwise relative error with a small floor so that near-zero
/// gradients are compared absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect(),
    )
    .unwrap()
}

/// Values bounded away from zero, for ops with a kink there.
pub fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.gen_range(0.1..1.5);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

pub type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Var>;

/// Scalar from a possibly non-scalar output: a fixed random projection.
fn reduce(g: &mut Graph, out: Var) -> Var {
    if g.value(out).is_scalar() {
        return out;
    }
    let shape = g.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
    let w = Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let w = g.constant(w);
    let p = g.mul(out, w).unwrap();
    g.sum(p)
}

fn eval(inputs: &[Tensor], build: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = build(&mut g, &vars);
    let l = reduce(&mut g, out);
    g.value(l).item()
}

/// Worst relative error between backward and central differences over every
/// input coordinate.
pub fn check_op(inputs: &[Tensor], build: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = build(&mut g, &vars);
    let l = reduce(&mut g, out);
    let grads = g.backward(l).unwrap();
    let mut worst: f64 = 0.0;
    for (k, t) in inputs.iter().enumerate() {
        let analytic = grads
            .get(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(t.shape()));
        for i in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= STEP;
            let numeric = (eval(&plus, build) - eval(&minus, build)) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic.data()[i], numeric));
        }
    }
    worst
}

/// Every differentiable op with inputs drawn from `seed`.
pub fn op_cases(seed: u64) -> Vec<(&'static str, Vec<Tensor>, Build)> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut r;
    let mut cases: Vec<(&'static str, Vec<Tensor>, Build)> = vec![(
        "matmul",
        vec![random_tensor(r, 3, 4), random_tensor(r, 4, 2)],
        Box::new(|g, v| g.matmul(v[0], v[1]).unwrap()),
    )];
    cases.push((
        "transpose",
        vec![random_tensor(r, 3, 4)],
        Box::new(|g, v| g.transpose(v[0]).unwrap()),
    ));
    cases.push((
        "add",
        vec![random_tensor(r, 3, 4), random_tensor(r, 3, 4)],
        Box::new(|g, v| g.add(v[0], v[1]).unwrap()),
    ));
    cases.push((
        "add_row",
        vec![random_tensor(r, 3, 4), random_tensor(r, 1, 4)],
        Box::new(|g, v| g.add_row(v[0], v[1]).unwrap()),
    ));
    cases.push((
        "sub",
        vec![random_tensor(r, 3, 4), random_tensor(r, 3, 4)],
        Box::new(|g, v| g.sub(v[0], v[1]).unwrap()),
    ));
    cases.push((
        "mul",
        vec![random_tensor(r, 3, 4), random_tensor(r, 3, 4)],
        Box::new(|g, v| g.mul(v[0], v[1]).unwrap()),
    ));
    cases.push((
        "scale",
        vec![random_tensor(r, 3, 4)],
        Box::new(|g, v| g.scale(v[0], -1.7)),
    ));
    cases.push((
        "sigmoid",
        vec![random_tensor(r, 3, 4)],
        Box::new(|g, v| g.sigmoid(v[0])),
    ));
    cases.push((
        "tanh",
        vec![random_tensor(r, 3, 4)],
        Box::new(|g, v| g.tanh(v[0])),
    ));
    cases.push((
        "relu",
        vec![away_from_zero(r, 3, 4)],
        Box::new(|g, v| g.relu(v[0])),
    ));
    for (name, kind, arity) in [
        ("elementwise-add", Elementwise::Add, 2),
        ("elementwise-mul", Elementwise::Mul, 2),
        ("elementwise-sigmoid", Elementwise::Sigmoid, 1),
        ("elementwise-tanh", Elementwise::Tanh, 1),
        ("elementwise-relu", Elementwise::Relu, 1),
        ("elementwise-scale", Elementwise::Scale(0.3), 1),
    ] {
        let inputs = (0..arity).map(|_| away_from_zero(r, 2, 3)).collect();
        cases.push((
            name,
            inputs,
            Box::new(move |g, v| g.elementwise(kind, &v[..arity]).unwrap()),
        ));
    }
    cases.push((
        "scale_rows",
        vec![random_tensor(r, 3, 4)],
        Box::new(|g, v| g.scale_rows(v[0], vec![0.5, 0.0, -2.0]).unwrap()),
    ));
    cases.push((
        "select_rows",
        vec![random_tensor(r, 4, 3), random_tensor(r, 4, 3)],
        Box::new(|g, v| {
            g.select_rows(&[true, false, false, true], v[0], v[1])
                .unwrap()
        }),
    ));
    cases.push((
        "softmax",
        vec![random_tensor(r, 3, 5)],
        Box::new(|g, v| g.softmax(v[0]).unwrap()),
    ));
    cases.push((
        "softmax-masked",
        vec![random_tensor(r, 3, 5)],
        Box::new(|g, v| {
            let mut m = Tensor::zeros(&[3, 5]);
            for i in 0..3 {
                m.row_mut(i)[3..].fill(f64::NEG_INFINITY);
            }
            let m = g.constant(m);
            let s = g.add(v[0], m).unwrap();
            let a = g.softmax(s).unwrap();
            // masked columns are exactly zero; project only the live block
            g.slice(a, 0..3, 0..3).unwrap()
        }),
    ));
    cases.push((
        "layer_norm",
        vec![
            random_tensor(r, 3, 6),
            random_tensor(r, 1, 6),
            random_tensor(r, 1, 6),
        ],
        Box::new(|g, v| g.layer_norm(v[0], v[1], v[2], 1e-5).unwrap()),
    ));
    cases.push((
        "gather_rows",
        vec![random_tensor(r, 5, 3)],
        Box::new(|g, v| g.gather_rows(v[0], &[0, 2, 2, 4, 1], Some(1)).unwrap()),
    ));
    cases.push((
        "slice",
        vec![random_tensor(r, 4, 5)],
        Box::new(|g, v| g.slice(v[0], 1..3, 2..5).unwrap()),
    ));
    cases.push((
        "concat_cols",
        vec![random_tensor(r, 3, 2), random_tensor(r, 3, 4)],
        Box::new(|g, v| g.concat_cols(&[v[0], v[1]]).unwrap()),
    ));
    cases.push((
        "concat_rows",
        vec![random_tensor(r, 2, 3), random_tensor(r, 1, 3)],
        Box::new(|g, v| g.concat_rows(&[v[0], v[1]]).unwrap()),
    ));
    cases.push((
        "sum",
        vec![random_tensor(r, 3, 4)],
        Box::new(|g, v| g.sum(v[0])),
    ));
    cases.push((
        "mean",
        vec![random_tensor(r, 3, 4)],
        Box::new(|g, v| g.mean(v[0])),
    ));
    let targets: Vec<f64> = (0..12).map(|_| f64::from(r.gen_range(0..2u8))).collect();
    cases.push((
        "bce_with_logits",
        vec![random_tensor(r, 3, 4)],
        Box::new(move |g, v| g.bce_with_logits(v[0], &targets).unwrap()),
    ));
    cases
}

/// Tiny model of `family` (T=4, H=8, E=8) with a batch of two sequences of
/// different lengths.
pub fn tiny_model(
    family: Family,
    pooling: Pooling,
    seed: u64,
) -> (Model, Vec<TokenSequence>, Vec<f64>) {
    let vocab = 12;
    let mut cfg = ModelConfig::new(family, 8, 2, vocab);
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.pooling = pooling;
    cfg.n_labels = 3;
    cfg.max_len = 4;
    let model = Model::init(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let cls = model.config.uses_cls();
    let seqs = [4usize, 2]
        .iter()
        .map(|&len| {
            let ids: Vec<u32> = (0..4)
                .map(|t| {
                    if t >= len {
                        PAD_ID
                    } else if cls && t == 0 {
                        CLS_ID
                    } else {
                        rng.gen_range(3..vocab as u32)
                    }
                })
                .collect();
            let mask = (0..4).map(|t| t < len).collect();
            TokenSequence { ids, mask }
        })
        .collect();
    let targets = (0..6).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
    (model, seqs, targets)
}

pub fn model_loss(model: &Model, seqs: &[TokenSequence], targets: &[f64]) -> f64 {
    let mut g = Graph::with_params(&model.params);
    let refs: Vec<&TokenSequence> = seqs.iter().collect();
    let f = model.forward(&mut g, &refs).unwrap();
    let l = bce_multilabel_loss(&mut g, f.logits, targets).unwrap();
    g.value(l).item()
}

/// Worst relative error over up to `per_tensor` sampled coordinates of every
/// parameter tensor.
pub fn check_model(family: Family, pooling: Pooling, seed: u64, per_tensor: usize) -> f64 {
    let (model, seqs, targets) = tiny_model(family, pooling, seed);
    let grads = {
        let mut g = Graph::with_params(&model.params);
        let refs: Vec<&TokenSequence> = seqs.iter().collect();
        let f = model.forward(&mut g, &refs).unwrap();
        let l = bce_multilabel_loss(&mut g, f.logits, &targets).unwrap();
        let grads = g.backward(l).unwrap();
        let mut by_param = std::collections::HashMap::new();
        for (id, t) in grads.param_grads() {
            by_param.insert(id.index(), t.clone());
        }
        by_param
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (id, p) in model.params.iter() {
        let n = p.value.len();
        let coords: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..n)).collect()
        };
        for i in coords {
            let analytic = grads.get(&id.index()).map_or(0.0, |t| t.data()[i]);
            let mut plus = model.clone();
            plus.params.get_mut(id).value.data_mut()[i] += STEP;
            let mut minus = model.clone();
            minus.params.get_mut(id).value.data_mut()[i] -= STEP;
            let numeric = (model_loss(&plus, &seqs, &targets)
                - model_loss(&minus, &seqs, &targets))
                / (2.0 * STEP);
            worst = worst.max(rel_err(analytic, numeric));
        }
    }
    worst
}

pub const FAMILIES: [(Family, Pooling); 5] = [
    (Family::Rnn, Pooling::Last),
    (Family::Lstm, Pooling::Last),
    (Family::Gru, Pooling::Last),
    (Family::Transformer, Pooling::First),
    (Family::Transformer, Pooling::Last),
];

/// O(n²) pair count: ties score one half.
pub fn brute_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}
