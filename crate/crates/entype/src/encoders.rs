//! Mention and context representations.
//!
//! The mention vector is the mean of its token embeddings. The context is
//! summarized by one of three encoders over the C-token windows on each
//! side of the mention: embedding averages, final LSTM outputs, or an
//! attention-weighted sum of shared bi-LSTM outputs. Padding embeds to the
//! zero vector and is kept in sequence positions (no masking).

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, MentionInstance, PAD_TOKEN};
use crate::numerics::{LstmCache, LstmWeights, NumericsError, Parameter, Tensor};

/// Context encoder family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Averaging,
    Lstm,
    Attentive,
}

impl EncoderKind {
    /// Dimension of the context representation this encoder produces.
    pub fn context_dim(self, mention_dim: usize, hidden_dim: usize) -> usize {
        match self {
            EncoderKind::Averaging => 2 * mention_dim,
            EncoderKind::Lstm | EncoderKind::Attentive => 2 * hidden_dim,
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::Averaging => "averaging",
            EncoderKind::Lstm => "lstm",
            EncoderKind::Attentive => "attentive",
        })
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "averaging" => Ok(EncoderKind::Averaging),
            "lstm" => Ok(EncoderKind::Lstm),
            "attentive" => Ok(EncoderKind::Attentive),
            other => Err(format!(
                "unknown encoder {other:?} (expected averaging, lstm, or attentive)"
            )),
        }
    }
}

/// The C-padded token windows to the left and right of a mention, both in
/// sentence order. Slots beyond the sentence hold [`PAD_TOKEN`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextWindows {
    pub left: Vec<String>,
    pub right: Vec<String>,
}

impl ContextWindows {
    pub fn window_size(&self) -> usize {
        self.left.len()
    }
}

/// Builds the windows: `left` holds the C tokens ending just before the
/// mention, `right` the C tokens starting just after it; the mention itself
/// is excluded and missing slots are padded on the far side.
pub fn build_context_windows(inst: &MentionInstance, window: usize) -> ContextWindows {
    assert!(window >= 1, "context window size must be at least 1");
    let left = (0..window)
        .map(|j| {
            let pos = inst.start as isize - window as isize + j as isize;
            if pos >= 0 {
                inst.tokens[pos as usize].clone()
            } else {
                PAD_TOKEN.to_string()
            }
        })
        .collect();
    let right = (0..window)
        .map(|j| {
            inst.tokens
                .get(inst.end + j)
                .cloned()
                .unwrap_or_else(|| PAD_TOKEN.to_string())
        })
        .collect();
    ContextWindows { left, right }
}

fn embed_sequence(tokens: &[String], table: &EmbeddingTable) -> Vec<Vec<f64>> {
    tokens.iter().map(|t| table.embed(t).to_vec()).collect()
}

/// Embeds both windows; padding becomes the zero vector.
pub(crate) fn embed_windows(
    w: &ContextWindows,
    table: &EmbeddingTable,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (
        embed_sequence(&w.left, table),
        embed_sequence(&w.right, table),
    )
}

/// Mean of the mention tokens' embeddings.
pub fn mention_representation(
    mention_tokens: &[String],
    table: &EmbeddingTable,
) -> Result<Tensor, NumericsError> {
    if mention_tokens.is_empty() {
        return Err(NumericsError::InvalidShape { shape: vec![0] });
    }
    let dim = table.dimension();
    let mut mean = vec![0.0; dim];
    for tok in mention_tokens {
        for (m, v) in mean.iter_mut().zip(table.embed(tok)) {
            *m += v;
        }
    }
    let n = mention_tokens.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Tensor::vector(mean)
}

fn mean_of(embeds: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for e in embeds {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    // Padding embeds to zero but still counts in the divisor.
    let n = embeds.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Averaging encoder: concatenation of the left and right embedding means.
pub fn averaging_context(w: &ContextWindows, table: &EmbeddingTable) -> Tensor {
    let (left, right) = embed_windows(w, table);
    averaging_context_embedded(&left, &right, table.dimension())
}

pub(crate) fn averaging_context_embedded(
    left: &[Vec<f64>],
    right: &[Vec<f64>],
    dim: usize,
) -> Tensor {
    let mut out = mean_of(left, dim);
    out.extend(mean_of(right, dim));
    Tensor::vector(out).expect("finite context average")
}

/// Cached forward state of the LSTM encoder.
pub(crate) struct LstmContextCache {
    pub left: LstmCache,
    pub right: LstmCache,
}

/// LSTM encoder: the left window is processed in sentence order, the right
/// window in reverse, and the two final outputs are concatenated.
pub fn lstm_context(
    w: &ContextWindows,
    table: &EmbeddingTable,
    left_weights: &LstmWeights,
    right_weights: &LstmWeights,
) -> Tensor {
    let (left, right) = embed_windows(w, table);
    lstm_context_embedded(&left, &right, left_weights, right_weights).0
}

pub(crate) fn lstm_context_embedded(
    left: &[Vec<f64>],
    right: &[Vec<f64>],
    left_weights: &LstmWeights,
    right_weights: &LstmWeights,
) -> (Tensor, LstmContextCache) {
    let left_refs: Vec<&[f64]> = left.iter().map(Vec::as_slice).collect();
    let mut right_refs: Vec<&[f64]> = right.iter().map(Vec::as_slice).collect();
    right_refs.reverse();

    let left_cache = crate::numerics::lstm::lstm_forward(left_weights, &left_refs);
    let right_cache = crate::numerics::lstm::lstm_forward(right_weights, &right_refs);

    let mut v = left_cache.final_output().to_vec();
    v.extend_from_slice(right_cache.final_output());
    (
        Tensor::vector(v).expect("finite lstm context"),
        LstmContextCache {
            left: left_cache,
            right: right_cache,
        },
    )
}

pub(crate) fn lstm_context_backward(
    left_weights: &mut LstmWeights,
    right_weights: &mut LstmWeights,
    cache: &LstmContextCache,
    d_context: &[f64],
) {
    let dh = left_weights.hidden_size;
    let steps = cache.left.steps.len();
    let mut d_left = vec![Vec::new(); steps];
    d_left[steps - 1] = d_context[..dh].to_vec();
    crate::numerics::lstm::lstm_backward(left_weights, &cache.left, &d_left);

    let mut d_right = vec![Vec::new(); steps];
    d_right[steps - 1] = d_context[dh..].to_vec();
    crate::numerics::lstm::lstm_backward(right_weights, &cache.right, &d_right);
}

/// Normalized attention over the 2C context positions: strictly positive,
/// summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl AttentionWeights {
    pub fn sum(&self) -> f64 {
        self.left.iter().chain(self.right.iter()).sum()
    }

    /// Index of the largest weight over left-then-right positions; ties go
    /// to the earliest position.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, &v) in self.left.iter().chain(self.right.iter()).enumerate() {
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        best
    }
}

/// Cached forward state of the attentive encoder.
pub(crate) struct AttentiveCache {
    left_fw: LstmCache,
    left_bw: LstmCache,
    right_fw: LstmCache,
    right_bw: LstmCache,
    /// Stacked bi-LSTM outputs per position: left 1..C then right 1..C,
    /// each of length 2 * hidden.
    stacked: Vec<Vec<f64>>,
    /// Attention feed-forward hidden layers, one per position.
    hidden: Vec<Vec<f64>>,
    /// Normalized attention weights, one per position.
    pub weights: Vec<f64>,
}

/// Attentive encoder: a bi-LSTM (shared between left and right windows)
/// followed by a two-layer attention scorer, producing the weighted sum of
/// stacked outputs and the attention weights themselves.
pub fn attentive_context(
    w: &ContextWindows,
    table: &EmbeddingTable,
    forward_weights: &LstmWeights,
    backward_weights: &LstmWeights,
    attn_hidden: &Parameter,
    attn_score: &Parameter,
) -> (Tensor, AttentionWeights) {
    let (left, right) = embed_windows(w, table);
    let (v, cache) = attentive_context_embedded(
        &left,
        &right,
        forward_weights,
        backward_weights,
        attn_hidden,
        attn_score,
    );
    let c = w.window_size();
    let att = AttentionWeights {
        left: cache.weights[..c].to_vec(),
        right: cache.weights[c..].to_vec(),
    };
    (v, att)
}

fn bilstm_stack(
    embeds: &[Vec<f64>],
    forward_weights: &LstmWeights,
    backward_weights: &LstmWeights,
) -> (LstmCache, LstmCache, Vec<Vec<f64>>) {
    let refs: Vec<&[f64]> = embeds.iter().map(Vec::as_slice).collect();
    let mut rev_refs = refs.clone();
    rev_refs.reverse();
    let fw = crate::numerics::lstm::lstm_forward(forward_weights, &refs);
    let bw = crate::numerics::lstm::lstm_forward(backward_weights, &rev_refs);
    let c = embeds.len();
    let stacked = (0..c)
        .map(|i| {
            let mut h = fw.output_at(i).to_vec();
            h.extend_from_slice(bw.output_at(c - 1 - i));
            h
        })
        .collect();
    (fw, bw, stacked)
}

pub(crate) fn attentive_context_embedded(
    left: &[Vec<f64>],
    right: &[Vec<f64>],
    forward_weights: &LstmWeights,
    backward_weights: &LstmWeights,
    attn_hidden: &Parameter,
    attn_score: &Parameter,
) -> (Tensor, AttentiveCache) {
    let (left_fw, left_bw, mut stacked) = bilstm_stack(left, forward_weights, backward_weights);
    let (right_fw, right_bw, right_stack) =
        bilstm_stack(right, forward_weights, backward_weights);
    stacked.extend(right_stack);

    // Attention scores: e_i = tanh(W_hidden * h_i), s_i = w_score . e_i.
    let hidden: Vec<Vec<f64>> = stacked
        .iter()
        .map(|h| {
            attn_hidden
                .value
                .matvec(h)
                .into_iter()
                .map(f64::tanh)
                .collect()
        })
        .collect();
    let scores: Vec<f64> = hidden.iter().map(|e| attn_score.value.matvec(e)[0]).collect();

    // exp-normalize; subtracting the max leaves the weights unchanged.
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();

    let dim = stacked[0].len();
    let mut v = vec![0.0; dim];
    for (a, h) in weights.iter().zip(&stacked) {
        for (o, x) in v.iter_mut().zip(h) {
            *o += a * x;
        }
    }

    (
        Tensor::vector(v).expect("finite attentive context"),
        AttentiveCache {
            left_fw,
            left_bw,
            right_fw,
            right_bw,
            stacked,
            hidden,
            weights,
        },
    )
}

pub(crate) fn attentive_context_backward(
    forward_weights: &mut LstmWeights,
    backward_weights: &mut LstmWeights,
    attn_hidden: &mut Parameter,
    attn_score: &mut Parameter,
    cache: &AttentiveCache,
    d_context: &[f64],
) {
    let positions = cache.stacked.len();
    let c = positions / 2;
    let dh = forward_weights.hidden_size;

    // Through the weighted sum: both the weights and the stacked outputs
    // receive gradient.
    let d_attn: Vec<f64> = cache
        .stacked
        .iter()
        .map(|h| h.iter().zip(d_context).map(|(x, g)| x * g).sum())
        .collect();
    let mut d_stacked: Vec<Vec<f64>> = cache
        .weights
        .iter()
        .map(|&a| d_context.iter().map(|g| a * g).collect())
        .collect();

    // Softmax backward.
    let weighted: f64 = cache
        .weights
        .iter()
        .zip(&d_attn)
        .map(|(a, d)| a * d)
        .sum();
    let d_scores: Vec<f64> = cache
        .weights
        .iter()
        .zip(&d_attn)
        .map(|(a, d)| a * (d - weighted))
        .collect();

    // Attention feed-forward backward.
    let score_row = attn_score.value.data().to_vec();
    for (i, ds) in d_scores.iter().enumerate() {
        let e = &cache.hidden[i];
        for (g, ev) in attn_score.grad.data_mut().iter_mut().zip(e) {
            *g += ds * ev;
        }
        let d_pre: Vec<f64> = e
            .iter()
            .zip(&score_row)
            .map(|(ev, w)| ds * w * (1.0 - ev * ev))
            .collect();
        attn_hidden.grad.add_outer(&d_pre, &cache.stacked[i]);
        let back = attn_hidden.value.matvec_t(&d_pre);
        for (a, b) in d_stacked[i].iter_mut().zip(back) {
            *a += b;
        }
    }

    // Split stacked gradients back into the four LSTM runs. Forward runs
    // see position order; backward runs see reversed order.
    let assemble = |range: std::ops::Range<usize>, take_fw: bool, reverse: bool| -> Vec<Vec<f64>> {
        let mut grads: Vec<Vec<f64>> = range
            .map(|i| {
                if take_fw {
                    d_stacked[i][..dh].to_vec()
                } else {
                    d_stacked[i][dh..].to_vec()
                }
            })
            .collect();
        if reverse {
            grads.reverse();
        }
        grads
    };

    let left_fw_grads = assemble(0..c, true, false);
    let left_bw_grads = assemble(0..c, false, true);
    let right_fw_grads = assemble(c..positions, true, false);
    let right_bw_grads = assemble(c..positions, false, true);

    crate::numerics::lstm::lstm_backward(forward_weights, &cache.left_fw, &left_fw_grads);
    crate::numerics::lstm::lstm_backward(forward_weights, &cache.right_fw, &right_fw_grads);
    crate::numerics::lstm::lstm_backward(backward_weights, &cache.left_bw, &left_bw_grads);
    crate::numerics::lstm::lstm_backward(backward_weights, &cache.right_bw, &right_bw_grads);
}
