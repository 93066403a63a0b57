//! Single-layer tanh recurrent cell shared by both players.
//!
//! `s_0 = tanh(W_ctx·c + b_init)`, `s_k = tanh(W_in·E[x_k] + W_rec·s_{k-1} + b)`.

use rand::Rng;

use crate::numerics::{DenseMatrix, ParameterSet};
use crate::world::TokenId;

/// Block indices of the cell inside a parameter set.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellBlocks {
    pub embed: usize,
    pub w_ctx: usize,
    pub b_init: usize,
    pub w_in: usize,
    pub w_rec: usize,
    pub b: usize,
}

pub(crate) const INIT_RANGE: f64 = 0.08;

pub(crate) fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, || rng.gen_range(-INIT_RANGE..INIT_RANGE))
}

/// Appends the cell's blocks (prefixed by `prefix`) and returns their indices.
pub(crate) fn cell_blocks<R: Rng + ?Sized>(
    blocks: &mut Vec<(String, DenseMatrix)>,
    vocab: usize,
    embed: usize,
    hidden: usize,
    context: usize,
    rng: Option<&mut R>,
) -> CellBlocks {
    let mut push = |name: &str, m: DenseMatrix| {
        blocks.push((name.to_string(), m));
        blocks.len() - 1
    };
    match rng {
        Some(rng) => CellBlocks {
            embed: push("embed", uniform(vocab, embed, rng)),
            w_ctx: push("w_ctx", uniform(hidden, context, rng)),
            b_init: push("b_init", DenseMatrix::zeros(hidden, 1)),
            w_in: push("w_in", uniform(hidden, embed, rng)),
            w_rec: push("w_rec", uniform(hidden, hidden, rng)),
            b: push("b", DenseMatrix::zeros(hidden, 1)),
        },
        None => CellBlocks {
            embed: push("embed", DenseMatrix::zeros(vocab, embed)),
            w_ctx: push("w_ctx", DenseMatrix::zeros(hidden, context)),
            b_init: push("b_init", DenseMatrix::zeros(hidden, 1)),
            w_in: push("w_in", DenseMatrix::zeros(hidden, embed)),
            w_rec: push("w_rec", DenseMatrix::zeros(hidden, hidden)),
            b: push("b", DenseMatrix::zeros(hidden, 1)),
        },
    }
}

pub(crate) fn initial_state(p: &ParameterSet, c: CellBlocks, context: &[f64]) -> Vec<f64> {
    let mut s = p.block(c.b_init).as_slice().to_vec();
    p.block(c.w_ctx).matvec_acc(context, &mut s);
    s.iter_mut().for_each(|v| *v = v.tanh());
    s
}

pub(crate) fn transition(p: &ParameterSet, c: CellBlocks, state: &[f64], token: TokenId) -> Vec<f64> {
    let mut s = p.block(c.b).as_slice().to_vec();
    p.block(c.w_in).matvec_acc(p.block(c.embed).row(token), &mut s);
    p.block(c.w_rec).matvec_acc(state, &mut s);
    s.iter_mut().for_each(|v| *v = v.tanh());
    s
}

/// States `s_0..=s_n` after consuming `inputs`.
pub(crate) fn unroll(p: &ParameterSet, c: CellBlocks, context: &[f64], inputs: &[TokenId]) -> Vec<Vec<f64>> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(initial_state(p, c, context));
    for &x in inputs {
        let next = transition(p, c, states.last().unwrap(), x);
        states.push(next);
    }
    states
}

/// Backpropagates `d_states` (gradients w.r.t. each `s_k`, consumed in place)
/// through the unrolled cell into `grads`.
pub(crate) fn backward(
    p: &ParameterSet,
    c: CellBlocks,
    context: &[f64],
    inputs: &[TokenId],
    states: &[Vec<f64>],
    d_states: &mut [Vec<f64>],
    grads: &mut ParameterSet,
) {
    let hidden = states[0].len();
    let mut dz = vec![0.0; hidden];
    for k in (1..states.len()).rev() {
        for ((z, d), s) in dz.iter_mut().zip(&d_states[k]).zip(&states[k]) {
            *z = d * (1.0 - s * s);
        }
        if dz.iter().all(|&v| v == 0.0) {
            continue;
        }
        let x = inputs[k - 1];
        let emb = p.block(c.embed).row(x).to_vec();
        grads.block_mut(c.w_in).add_outer(&dz, &emb);
        let mut d_emb = vec![0.0; emb.len()];
        p.block(c.w_in).matvec_t_acc(&dz, &mut d_emb);
        for (g, d) in grads.block_mut(c.embed).row_mut(x).iter_mut().zip(&d_emb) {
            *g += d;
        }
        grads.block_mut(c.w_rec).add_outer(&dz, &states[k - 1]);
        for (g, d) in grads.block_mut(c.b).as_mut_slice().iter_mut().zip(&dz) {
            *g += d;
        }
        let (head, _) = d_states.split_at_mut(k);
        p.block(c.w_rec).matvec_t_acc(&dz, &mut head[k - 1]);
    }
    for ((z, d), s) in dz.iter_mut().zip(&d_states[0]).zip(&states[0]) {
        *z = d * (1.0 - s * s);
    }
    grads.block_mut(c.w_ctx).add_outer(&dz, context);
    for (g, d) in grads.block_mut(c.b_init).as_mut_slice().iter_mut().zip(&dz) {
        *g += d;
    }
}
