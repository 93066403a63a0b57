use rand::Rng;
use serde::{Deserialize, Serialize};

use super::recurrent::{self, CellBlocks};
use crate::error::{invalid, Result};
use crate::numerics::{log_softmax, DenseMatrix, ParameterSet};
use crate::world::{Context, SampleSource, SequenceSample, TokenId, BOS, EOS};

/// Layer sizes shared by both players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub vocab_size: usize,
    #[serde(default = "default_embed")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_context")]
    pub context_dim: usize,
}

fn default_embed() -> usize {
    16
}
fn default_hidden() -> usize {
    32
}
fn default_context() -> usize {
    8
}

impl ModelDims {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: default_embed(),
            hidden_dim: default_hidden(),
            context_dim: default_context(),
        }
    }
}

/// Hidden state of a recurrent player at step `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub vector: Vec<f64>,
    pub step: usize,
}

const W_OUT: usize = 6;
const B_OUT: usize = 7;
const CELL: CellBlocks = CellBlocks {
    embed: 0,
    w_ctx: 1,
    b_init: 2,
    w_in: 3,
    w_rec: 4,
    b: 5,
};

/// Recurrent softmax generator π_ψ.
///
/// The state after consuming `BOS, w_1, …, w_{k-1}` produces the logits for
/// `w_k` through `W_out·s_k + b_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    dims: ModelDims,
    params: ParameterSet,
}

/// One sampled sequence with the exact log-probability of every token.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRollout {
    pub sample: SequenceSample,
    pub log_probs: Vec<f64>,
}

/// Forward pass along a fixed token sequence, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct PolicyTrace {
    pub(crate) inputs: Vec<TokenId>,
    pub(crate) tokens: Vec<TokenId>,
    pub(crate) states: Vec<Vec<f64>>,
    pub(crate) context: Vec<f64>,
    /// Full distribution at each step.
    pub probs: Vec<Vec<f64>>,
    /// `log π(w_k)` of each token in the sequence.
    pub log_probs: Vec<f64>,
}

impl PolicyNet {
    fn build<R: Rng + ?Sized>(dims: ModelDims, rng: Option<&mut R>) -> Self {
        let mut blocks = Vec::new();
        let ModelDims {
            vocab_size,
            embed_dim,
            hidden_dim,
            context_dim,
        } = dims;
        let w_out = match rng {
            Some(rng) => {
                recurrent::cell_blocks(&mut blocks, vocab_size, embed_dim, hidden_dim, context_dim, Some(&mut *rng));
                recurrent::uniform(vocab_size, hidden_dim, rng)
            }
            None => {
                recurrent::cell_blocks::<R>(&mut blocks, vocab_size, embed_dim, hidden_dim, context_dim, None);
                DenseMatrix::zeros(vocab_size, hidden_dim)
            }
        };
        blocks.push(("w_out".into(), w_out));
        blocks.push(("b_out".into(), DenseMatrix::zeros(vocab_size, 1)));
        let params = ParameterSet::new(blocks).expect("unique policy block names");
        Self { dims, params }
    }

    /// Weights uniform in [-0.08, 0.08], biases zero.
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Self {
        Self::build(dims, Some(rng))
    }

    /// All-zero parameters: the uniform policy.
    pub fn zeros(dims: ModelDims) -> Self {
        Self::build::<rand_chacha::ChaCha8Rng>(dims, None)
    }

    pub fn from_params(dims: ModelDims, params: ParameterSet) -> Result<Self> {
        let template = Self::zeros(dims);
        if !template.params.same_layout(&params) {
            return Err(invalid("policy parameter layout does not match dimensions"));
        }
        if !params.is_finite() {
            return Err(invalid("policy parameters must be finite"));
        }
        Ok(Self { dims, params })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Output bias; exposed for constructing degenerate test policies.
    pub fn output_bias_mut(&mut self) -> &mut DenseMatrix {
        self.params.block_mut(B_OUT)
    }

    pub fn output_weights_mut(&mut self) -> &mut DenseMatrix {
        self.params.block_mut(W_OUT)
    }

    fn check_context(&self, feature: &[f64]) -> Result<()> {
        if feature.len() != self.dims.context_dim {
            return Err(invalid(format!(
                "context feature has dimension {}, policy expects {}",
                feature.len(),
                self.dims.context_dim
            )));
        }
        Ok(())
    }

    fn check_token(&self, t: TokenId) -> Result<()> {
        if t >= self.dims.vocab_size {
            return Err(invalid(format!("token id {t} outside the vocabulary")));
        }
        Ok(())
    }

    pub fn init_state(&self, context: &Context) -> Result<RecurrentState> {
        self.check_context(&context.feature)?;
        Ok(RecurrentState {
            vector: recurrent::initial_state(&self.params, CELL, &context.feature),
            step: 0,
        })
    }

    fn logits(&self, state: &[f64]) -> Vec<f64> {
        let mut out = self.params.block(B_OUT).as_slice().to_vec();
        self.params.block(W_OUT).matvec_acc(state, &mut out);
        out
    }

    /// Consumes `prev` and returns the next state with the logits for the
    /// next token.
    pub fn step(&self, state: &RecurrentState, prev: TokenId) -> Result<(RecurrentState, Vec<f64>)> {
        self.check_token(prev)?;
        let next = recurrent::transition(&self.params, CELL, &state.vector, prev);
        let logits = self.logits(&next);
        Ok((
            RecurrentState {
                vector: next,
                step: state.step + 1,
            },
            logits,
        ))
    }

    /// Samples until EOS or `max_len` tokens.
    pub fn sample_sequence<R: Rng + ?Sized>(
        &self,
        context: &Context,
        rng: &mut R,
        max_len: usize,
    ) -> Result<PolicyRollout> {
        self.sample_continuation(context, &[], rng, max_len)
    }

    /// Reads `prefix`, then samples until EOS or until the whole sequence has
    /// `max_len` tokens. The rollout holds the full sequence; `log_probs`
    /// covers only the sampled suffix.
    pub fn sample_continuation<R: Rng + ?Sized>(
        &self,
        context: &Context,
        prefix: &[TokenId],
        rng: &mut R,
        max_len: usize,
    ) -> Result<PolicyRollout> {
        if max_len == 0 || prefix.len() >= max_len {
            return Err(invalid("max_len must exceed the prefix length"));
        }
        let mut state = self.init_state(context)?;
        let mut prev = BOS;
        for &t in prefix {
            state = self.step(&state, prev)?.0;
            prev = t;
        }
        let mut tokens = prefix.to_vec();
        let mut log_probs = Vec::with_capacity(max_len - prefix.len());
        while tokens.len() < max_len {
            let (next, logits) = self.step(&state, prev)?;
            let logp = log_softmax(&logits)?;
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut chosen = logp.len() - 1;
            for (i, lp) in logp.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            tokens.push(chosen);
            log_probs.push(logp[chosen]);
            state = next;
            prev = chosen;
            if chosen == EOS {
                break;
            }
        }
        Ok(PolicyRollout {
            sample: SequenceSample {
                context: context.id,
                tokens,
                source: SampleSource::Generated,
            },
            log_probs,
        })
    }

    /// Runs the policy along `tokens`, recording every step distribution.
    pub fn trace(&self, context: &Context, tokens: &[TokenId]) -> Result<PolicyTrace> {
        self.check_context(&context.feature)?;
        for &t in tokens {
            self.check_token(t)?;
        }
        let mut inputs = Vec::with_capacity(tokens.len());
        inputs.push(BOS);
        inputs.extend_from_slice(&tokens[..tokens.len().saturating_sub(1)]);
        inputs.truncate(tokens.len());
        let states = recurrent::unroll(&self.params, CELL, &context.feature, &inputs);
        let mut probs = Vec::with_capacity(tokens.len());
        let mut log_probs = Vec::with_capacity(tokens.len());
        for (k, &t) in tokens.iter().enumerate() {
            let logits = self.logits(&states[k + 1]);
            let lp = log_softmax(&logits)?;
            log_probs.push(lp[t]);
            probs.push(lp.iter().map(|v| v.exp()).collect());
        }
        Ok(PolicyTrace {
            inputs,
            tokens: tokens.to_vec(),
            states,
            context: context.feature.clone(),
            probs,
            log_probs,
        })
    }

    /// `log π(w_k)` of every token of `tokens`.
    pub fn sequence_log_probs(&self, context: &Context, tokens: &[TokenId]) -> Result<Vec<f64>> {
        Ok(self.trace(context, tokens)?.log_probs)
    }

    /// Accumulates into `grads` the gradient of `Σ_k d_logits[k]·z_k`, where
    /// `z_k` are the logits at step `k` of `trace`.
    pub fn backward_logits(&self, trace: &PolicyTrace, d_logits: &[Vec<f64>], grads: &mut ParameterSet) {
        let hidden = self.dims.hidden_dim;
        let mut d_states = vec![vec![0.0; hidden]; trace.states.len()];
        for (k, dz) in d_logits.iter().enumerate() {
            let s = &trace.states[k + 1];
            grads.block_mut(W_OUT).add_outer(dz, s);
            for (g, d) in grads.block_mut(B_OUT).as_mut_slice().iter_mut().zip(dz) {
                *g += d;
            }
            self.params.block(W_OUT).matvec_t_acc(dz, &mut d_states[k + 1]);
        }
        recurrent::backward(
            &self.params,
            CELL,
            &trace.context,
            &trace.inputs,
            &trace.states,
            &mut d_states,
            grads,
        );
    }

    /// Accumulates the gradient of `Σ_k coeffs[k]·log π(w_k)`.
    pub fn backward_log_probs(&self, trace: &PolicyTrace, coeffs: &[f64], grads: &mut ParameterSet) {
        let d_logits: Vec<Vec<f64>> = coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                // d log π(w) / d z = e_w - π
                let mut d: Vec<f64> = trace.probs[k].iter().map(|p| -c * p).collect();
                d[trace.tokens[k]] += c;
                d
            })
            .collect();
        self.backward_logits(trace, &d_logits, grads);
    }
}
