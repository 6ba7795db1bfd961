use rand::Rng;

use super::params::{DirectionIdx, Layout};
use super::{ModelConfig, RnnVariant};
use crate::tensor::{Graph, Result, Tensor, Var};

/// Handles into a recorded forward pass over one or more sentences whose
/// rows are stacked in order.
pub(crate) struct Forward {
    pub params: Vec<Var>,
    /// `N × d` encoder states, `N = Σ n_s`.
    pub states: Var,
    pub layers: Vec<LayerVars>,
    /// `N × 5` label distributions.
    pub probs: Var,
}

pub(crate) struct LayerVars {
    /// `N × 2K` per task.
    pub r: [Var; 2],
    /// `N` attention weights per task; each sentence's slice sums to 1.
    pub alpha: [Var; 2],
    /// `S × d` prototypes after this layer's update, one row per sentence.
    pub u: [Var; 2],
}

/// Runs one recurrent direction over `xw = X·W + b` (precomputed for all
/// steps), visiting rows in `order`. Returns one state var per row of `xw`.
fn run_direction(g: &mut Graph<'_>, rnn: RnnVariant, xw: Var, u: Var, h: usize, order: &[usize]) -> Result<Vec<Var>> {
    let mut out = vec![None; order.len()];
    let mut state = g.constant(Tensor::zeros(&[h]));
    let mut cell = g.constant(Tensor::zeros(&[h]));
    let (u_zr, u_n) = if rnn.is_lstm() {
        (u, u)
    } else {
        (g.slice_last(u, 0, 2 * h)?, g.slice_last(u, 2 * h, h)?)
    };
    for &t in order {
        let xt = g.row(xw, t)?;
        let prev = g.reshape(state, &[1, h])?;
        if rnn.is_lstm() {
            let hu = g.matmul(prev, u)?;
            let hu = g.reshape(hu, &[4 * h])?;
            let pre = g.add(xt, hu)?;
            let ifg = g.slice_last(pre, 0, 2 * h)?;
            let ifg = g.sigmoid(ifg)?;
            let i = g.slice_last(ifg, 0, h)?;
            let f = g.slice_last(ifg, h, h)?;
            let cand = g.slice_last(pre, 2 * h, h)?;
            let cand = g.tanh(cand)?;
            let o = g.slice_last(pre, 3 * h, h)?;
            let o = g.sigmoid(o)?;
            let keep = g.mul(f, cell)?;
            let write = g.mul(i, cand)?;
            cell = g.add(keep, write)?;
            let squashed = g.tanh(cell)?;
            state = g.mul(o, squashed)?;
        } else {
            let hu = g.matmul(prev, u_zr)?;
            let hu = g.reshape(hu, &[2 * h])?;
            let x_zr = g.slice_last(xt, 0, 2 * h)?;
            let zr = g.add(x_zr, hu)?;
            let zr = g.sigmoid(zr)?;
            let z = g.slice_last(zr, 0, h)?;
            let r = g.slice_last(zr, h, h)?;
            let gated = g.mul(r, state)?;
            let gated = g.reshape(gated, &[1, h])?;
            let hn = g.matmul(gated, u_n)?;
            let hn = g.reshape(hn, &[h])?;
            let x_n = g.slice_last(xt, 2 * h, h)?;
            let cand = g.add(x_n, hn)?;
            let cand = g.tanh(cand)?;
            // h = z⊙h_prev + (1−z)⊙cand
            let diff = g.sub(state, cand)?;
            let carry = g.mul(z, diff)?;
            state = g.add(cand, carry)?;
        }
        out[t] = Some(state);
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

fn encode(g: &mut Graph<'_>, config: &ModelConfig, dirs: &[DirectionIdx], params: &[Var], x: Var) -> Result<Var> {
    let n = g.shape(x)[0];
    let h = config.hidden_units;
    let forward: Vec<usize> = (0..n).collect();
    let backward: Vec<usize> = (0..n).rev().collect();
    let mut halves = Vec::with_capacity(dirs.len());
    for (k, dir) in dirs.iter().enumerate() {
        let xw = g.matmul(x, params[dir.w])?;
        let xw = g.add_row(xw, params[dir.b])?;
        let order = if k == 0 { &forward } else { &backward };
        let states = run_direction(g, config.rnn, xw, params[dir.u], h, order)?;
        halves.push(g.stack_rows(&states)?);
    }
    if halves.len() == 1 {
        Ok(halves[0])
    } else {
        g.concat(&halves)
    }
}

/// Records the full network on `g` for a batch of `n_s × input_dim` feature
/// matrices. Each sentence draws its dropout masks from its own generator, and
/// no computation mixes rows of different sentences, so every sentence's
/// outputs are independent of what else is in the batch.
pub(crate) fn build<'p, R: Rng>(
    g: &mut Graph<'p>,
    config: &ModelConfig,
    layout: &Layout,
    tensors: &'p [Tensor],
    features: &[&'p Tensor],
    training: bool,
    rngs: &mut [R],
) -> Result<Forward> {
    assert_eq!(features.len(), rngs.len(), "one generator per sentence");
    let params: Vec<Var> = tensors.iter().map(|t| g.param(t)).collect();
    let mut per_sentence = Vec::with_capacity(features.len());
    let mut spans = Vec::with_capacity(features.len());
    let mut segments = Vec::new();
    for (s, (f, rng)) in features.iter().zip(rngs.iter_mut()).enumerate() {
        let x = g.constant_ref(f);
        let x = g.dropout(x, config.dropout, training, rng)?;
        let states = encode(g, config, &layout.directions, &params, x)?;
        let states = g.dropout(states, config.dropout, training, rng)?;
        let n = g.shape(states)[0];
        spans.push((segments.len(), n));
        segments.extend(std::iter::repeat_n(s, n));
        per_sentence.push(states);
    }
    let states = if per_sentence.len() == 1 {
        per_sentence[0]
    } else {
        g.concat_rows(&per_sentence)?
    };
    let d = g.shape(states)[1];

    let mut layers = Vec::with_capacity(layout.layers.len());
    let features_in = if let Some(protos) = layout.prototypes {
        let sentences = features.len();
        let mut u = [
            g.stack_rows(&vec![params[protos[0]]; sentences])?,
            g.stack_rows(&vec![params[protos[1]]; sentences])?,
        ];
        let mut total: Option<Var> = None;
        for idx in &layout.layers {
            let mut r = [u[0]; 2];
            let mut alpha = [u[0]; 2];
            let mut next = u;
            for m in 0..2 {
                let own = g.bilinear_segments(states, params[idx.g[m]], u[m], &segments)?;
                let cross = g.bilinear_segments(states, params[idx.d[m]], u[1 - m], &segments)?;
                let joined = g.concat(&[own, cross])?;
                r[m] = g.tanh(joined)?;
                let width = g.shape(params[idx.v[m]])[0];
                let v = g.reshape(params[idx.v[m]], &[width, 1])?;
                let scores = g.matmul(r[m], v)?;
                let scores = g.reshape(scores, &[segments.len()])?;
                let mut alphas = Vec::with_capacity(sentences);
                let mut updated = Vec::with_capacity(sentences);
                for (s, &(start, n)) in spans.iter().enumerate() {
                    let h_s = per_sentence[s];
                    let sc = if sentences == 1 { scores } else { g.slice_last(scores, start, n)? };
                    let a = g.softmax(sc)?;
                    let a_row = g.reshape(a, &[1, n])?;
                    let context = g.matmul(a_row, h_s)?;
                    let context = g.reshape(context, &[d])?;
                    let u_s = g.row(u[m], s)?;
                    updated.push(g.add(u_s, context)?);
                    alphas.push(a);
                }
                alpha[m] = if sentences == 1 { alphas[0] } else { g.concat(&alphas)? };
                next[m] = g.stack_rows(&updated)?;
            }
            u = next;
            let both = g.concat(&r)?;
            total = Some(match total {
                None => both,
                Some(t) => g.add(t, both)?,
            });
            layers.push(LayerVars { r, alpha, u });
        }
        total.expect("at least one attention layer")
    } else {
        states
    };

    let logits = g.matmul(features_in, params[layout.out_w])?;
    let logits = g.add_row(logits, params[layout.out_b])?;
    let probs = g.softmax(logits)?;
    Ok(Forward {
        params,
        states,
        layers,
        probs,
    })
}
