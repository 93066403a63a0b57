use rand::Rng;

use super::policy::ModelDims;
use super::recurrent::{self, CellBlocks};
use crate::error::{invalid, Result};
use crate::numerics::{sigmoid, DenseMatrix, ParameterSet};
use crate::world::{Context, TokenId};

const CELL: CellBlocks = CellBlocks {
    embed: 0,
    w_ctx: 1,
    b_init: 2,
    w_in: 3,
    w_rec: 4,
    b: 5,
};
const G_W1: usize = 6;
const G_B1: usize = 7;
const G_W2: usize = 8;
const G_B2: usize = 9;
const H_W: usize = 10;
const H_B: usize = 11;
const GAN_W: usize = 12;
const GAN_B: usize = 13;

/// Recurrent discriminator with reward head `g_θ`, shaping head `h_φ` and a
/// sentence-level head used only by the GAN baseline.
///
/// The encoder reads `w_1..w_n` (no BOS), so token `w_k` is scored with the
/// state before it, `s_{k-1}`, and after it, `s_k`:
///
/// - `g(w, s, s') = v·tanh(W_g [E_d[w]; s; s'] + b_g) + c`
/// - `h(s) = tanh(u·s + b_h)`
/// - `f = g + γ·h(s') - h(s)`
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNet {
    dims: ModelDims,
    gamma: f64,
    params: ParameterSet,
}

/// Discriminator forward pass over one sequence.
#[derive(Debug, Clone)]
pub struct DiscriminatorTrace {
    pub(crate) tokens: Vec<TokenId>,
    pub(crate) context: Vec<f64>,
    /// `s_0..=s_n`
    pub states: Vec<Vec<f64>>,
    /// `h(s_k)` for every state.
    pub shaping: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    g_hidden: Vec<Vec<f64>>,
}

impl DiscriminatorTrace {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }
}

impl DiscriminatorNet {
    fn build<R: Rng + ?Sized>(dims: ModelDims, gamma: f64, mut rng: Option<&mut R>) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(invalid(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        let ModelDims {
            vocab_size,
            embed_dim,
            hidden_dim,
            context_dim,
        } = dims;
        let mut blocks = Vec::new();
        recurrent::cell_blocks(&mut blocks, vocab_size, embed_dim, hidden_dim, context_dim, rng.as_deref_mut());
        let g_in = embed_dim + 2 * hidden_dim;
        let mut w = |rows: usize, cols: usize| match rng.as_deref_mut() {
            Some(r) => recurrent::uniform(rows, cols, r),
            None => DenseMatrix::zeros(rows, cols),
        };
        let g_w1 = w(hidden_dim, g_in);
        let g_w2 = w(1, hidden_dim);
        let h_w = w(1, hidden_dim);
        let gan_w = w(1, hidden_dim);
        blocks.push(("g_w1".into(), g_w1));
        blocks.push(("g_b1".into(), DenseMatrix::zeros(hidden_dim, 1)));
        blocks.push(("g_w2".into(), g_w2));
        blocks.push(("g_b2".into(), DenseMatrix::zeros(1, 1)));
        blocks.push(("h_w".into(), h_w));
        blocks.push(("h_b".into(), DenseMatrix::zeros(1, 1)));
        blocks.push(("gan_w".into(), gan_w));
        blocks.push(("gan_b".into(), DenseMatrix::zeros(1, 1)));
        Ok(Self {
            dims,
            gamma,
            params: ParameterSet::new(blocks)?,
        })
    }

    pub fn new<R: Rng + ?Sized>(dims: ModelDims, gamma: f64, rng: &mut R) -> Result<Self> {
        Self::build(dims, gamma, Some(rng))
    }

    pub fn zeros(dims: ModelDims, gamma: f64) -> Result<Self> {
        Self::build::<rand_chacha::ChaCha8Rng>(dims, gamma, None)
    }

    pub fn from_params(dims: ModelDims, gamma: f64, params: ParameterSet) -> Result<Self> {
        let template = Self::zeros(dims, gamma)?;
        if !template.params.same_layout(&params) {
            return Err(invalid("discriminator parameter layout does not match dimensions"));
        }
        if !params.is_finite() {
            return Err(invalid("discriminator parameters must be finite"));
        }
        Ok(Self { dims, gamma, params })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Output bias of `g_θ`; with all other reward weights zero, `g` is this
    /// constant.
    pub fn reward_bias_mut(&mut self) -> &mut f64 {
        &mut self.params.block_mut(G_B2).as_mut_slice()[0]
    }

    /// Bias of the GAN sentence head.
    pub fn sentence_bias_mut(&mut self) -> &mut f64 {
        &mut self.params.block_mut(GAN_B).as_mut_slice()[0]
    }

    fn check(&self, context: &Context, tokens: &[TokenId]) -> Result<()> {
        if context.feature.len() != self.dims.context_dim {
            return Err(invalid("context feature dimension does not match discriminator"));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.dims.vocab_size) {
            return Err(invalid(format!("token id {t} outside the vocabulary")));
        }
        Ok(())
    }

    /// State trajectory `s_0..=s_n`.
    pub fn encode(&self, context: &Context, tokens: &[TokenId]) -> Result<Vec<Vec<f64>>> {
        self.check(context, tokens)?;
        Ok(recurrent::unroll(&self.params, CELL, &context.feature, tokens))
    }

    /// `h_φ(s)`.
    pub fn shaping(&self, state: &[f64]) -> f64 {
        let mut z = self.params.block(H_B).as_slice()[0];
        z += self.params.block(H_W).row(0)
            .iter()
            .zip(state)
            .map(|(a, b)| a * b)
            .sum::<f64>();
        z.tanh()
    }

    fn g_hidden(&self, token: TokenId, s: &[f64], s_next: &[f64]) -> Vec<f64> {
        let w1 = self.params.block(G_W1);
        let e = self.params.block(CELL.embed).row(token);
        let mut u = self.params.block(G_B1).as_slice().to_vec();
        let (ed, hd) = (self.dims.embed_dim, self.dims.hidden_dim);
        for (r, ur) in u.iter_mut().enumerate() {
            let row = w1.row(r);
            let mut acc = 0.0;
            for (a, b) in row[..ed].iter().zip(e) {
                acc += a * b;
            }
            for (a, b) in row[ed..ed + hd].iter().zip(s) {
                acc += a * b;
            }
            for (a, b) in row[ed + hd..].iter().zip(s_next) {
                acc += a * b;
            }
            *ur += acc;
        }
        u.iter_mut().for_each(|v| *v = v.tanh());
        u
    }

    fn g_from_hidden(&self, u: &[f64]) -> f64 {
        self.params.block(G_B2).as_slice()[0]
            + self
                .params
                .block(G_W2)
                .row(0)
                .iter()
                .zip(u)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// `g_θ(w, s; s')`.
    pub fn reward_g(&self, token: TokenId, s: &[f64], s_next: &[f64]) -> f64 {
        self.g_from_hidden(&self.g_hidden(token, s, s_next))
    }

    /// `(g, f)` with `f = g + γ·h(s') - h(s)`.
    pub fn reward_f(&self, token: TokenId, s: &[f64], s_next: &[f64]) -> (f64, f64) {
        let g = self.reward_g(token, s, s_next);
        (g, shaped(g, self.shaping(s), self.shaping(s_next), self.gamma))
    }

    /// Full forward pass over `tokens`.
    pub fn trace(&self, context: &Context, tokens: &[TokenId]) -> Result<DiscriminatorTrace> {
        let states = self.encode(context, tokens)?;
        let shaping: Vec<f64> = states.iter().map(|s| self.shaping(s)).collect();
        let mut g = Vec::with_capacity(tokens.len());
        let mut f = Vec::with_capacity(tokens.len());
        let mut g_hidden = Vec::with_capacity(tokens.len());
        for (k, &t) in tokens.iter().enumerate() {
            let u = self.g_hidden(t, &states[k], &states[k + 1]);
            let gk = self.g_from_hidden(&u);
            f.push(shaped(gk, shaping[k], shaping[k + 1], self.gamma));
            g.push(gk);
            g_hidden.push(u);
        }
        Ok(DiscriminatorTrace {
            tokens: tokens.to_vec(),
            context: context.feature.clone(),
            states,
            shaping,
            g,
            f,
            g_hidden,
        })
    }

    /// Sentence-level probability of being real, read from the final state.
    pub fn sentence_score(&self, trace: &DiscriminatorTrace) -> f64 {
        let s = trace.final_state();
        let z = self.params.block(GAN_B).as_slice()[0]
            + self
                .params
                .block(GAN_W)
                .row(0)
                .iter()
                .zip(s)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        sigmoid(z)
    }

    /// Accumulates the gradient of `Σ_k d_f[k]·f_k + d_sentence·z_gan` where
    /// `z_gan` is the pre-sigmoid sentence logit.
    pub fn backward(&self, trace: &DiscriminatorTrace, d_f: &[f64], d_sentence: f64, grads: &mut ParameterSet) {
        let (ed, hd) = (self.dims.embed_dim, self.dims.hidden_dim);
        let n = trace.tokens.len();
        let mut d_states = vec![vec![0.0; hd]; n + 1];
        let mut d_h = vec![0.0; n + 1];
        let mut d_u = vec![0.0; hd];
        let mut d_x = vec![0.0; ed + 2 * hd];
        for k in 0..n {
            let df = d_f[k];
            if df == 0.0 {
                continue;
            }
            d_h[k + 1] += self.gamma * df;
            d_h[k] -= df;
            // g head
            let u = &trace.g_hidden[k];
            grads.block_mut(G_B2).as_mut_slice()[0] += df;
            let w2 = self.params.block(G_W2).row(0);
            for ((gw, du), (&uj, &wj)) in grads
                .block_mut(G_W2)
                .row_mut(0)
                .iter_mut()
                .zip(d_u.iter_mut())
                .zip(u.iter().zip(w2))
            {
                *gw += df * uj;
                *du = df * wj * (1.0 - uj * uj);
            }
            let token = trace.tokens[k];
            let e = self.params.block(CELL.embed).row(token);
            let x: Vec<f64> = e
                .iter()
                .chain(&trace.states[k])
                .chain(&trace.states[k + 1])
                .copied()
                .collect();
            grads.block_mut(G_W1).add_outer(&d_u, &x);
            for (g, d) in grads.block_mut(G_B1).as_mut_slice().iter_mut().zip(&d_u) {
                *g += d;
            }
            d_x.iter_mut().for_each(|v| *v = 0.0);
            self.params.block(G_W1).matvec_t_acc(&d_u, &mut d_x);
            for (g, d) in grads.block_mut(CELL.embed).row_mut(token).iter_mut().zip(&d_x[..ed]) {
                *g += d;
            }
            for (g, d) in d_states[k].iter_mut().zip(&d_x[ed..ed + hd]) {
                *g += d;
            }
            for (g, d) in d_states[k + 1].iter_mut().zip(&d_x[ed + hd..]) {
                *g += d;
            }
        }
        // h head
        let hw = self.params.block(H_W).row(0).to_vec();
        for k in 0..=n {
            if d_h[k] == 0.0 {
                continue;
            }
            let h = trace.shaping[k];
            let dz = d_h[k] * (1.0 - h * h);
            grads.block_mut(H_B).as_mut_slice()[0] += dz;
            for (g, s) in grads.block_mut(H_W).row_mut(0).iter_mut().zip(&trace.states[k]) {
                *g += dz * s;
            }
            for (d, w) in d_states[k].iter_mut().zip(&hw) {
                *d += dz * w;
            }
        }
        if d_sentence != 0.0 {
            grads.block_mut(GAN_B).as_mut_slice()[0] += d_sentence;
            let gw = self.params.block(GAN_W).row(0).to_vec();
            for (g, s) in grads.block_mut(GAN_W).row_mut(0).iter_mut().zip(trace.final_state()) {
                *g += d_sentence * s;
            }
            for (d, w) in d_states[n].iter_mut().zip(&gw) {
                *d += d_sentence * w;
            }
        }
        recurrent::backward(
            &self.params,
            CELL,
            &trace.context,
            &trace.tokens,
            &trace.states,
            &mut d_states,
            grads,
        );
    }
}

/// `g + γ·h_next − h`.
#[inline]
pub fn shaped(g: f64, h: f64, h_next: f64, gamma: f64) -> f64 {
    g + gamma * h_next - h
}
