use rand::Rng;

use super::{embed_tokens, vocab::PAD};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Result, SanError};
use crate::params::{glorot_uniform, Bound, ParamId, ParamStore};

pub const WINDOW_SIZES: [usize; 3] = [1, 2, 3];
pub const DEFAULT_FILTERS: [usize; 3] = [128, 256, 256];

/// Unigram, bigram and trigram convolution parameters over a shared embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TextCnnParams {
    pub w_e: ParamId,
    /// `(W_c, b_c)` per window size; `W_c` is `filters_c × (c·e)`.
    pub convs: [(ParamId, ParamId); 3],
    pub filters: [usize; 3],
    pub vocab_size: usize,
    pub embed_dim: usize,
}

impl TextCnnParams {
    pub fn init(
        store: &mut ParamStore,
        vocab_size: usize,
        embed_dim: usize,
        filters: [usize; 3],
        rng: &mut impl Rng,
    ) -> Self {
        let w_e = store.add("cnn.w_e", glorot_uniform(vocab_size, embed_dim, rng));
        let convs = std::array::from_fn(|i| {
            let c = WINDOW_SIZES[i];
            let w = store.add(format!("cnn.w_{c}"), glorot_uniform(filters[i], c * embed_dim, rng));
            let b = store.add(format!("cnn.b_{c}"), Tensor::zeros(&[filters[i], 1]));
            (w, b)
        });
        TextCnnParams { w_e, convs, filters, vocab_size, embed_dim }
    }

    pub fn output_dim(&self) -> usize {
        self.filters.iter().sum()
    }
}

/// `tanh(W_c x_{t:t+c-1} + b_c)` for every window, max-pooled over positions
/// and concatenated in window order.
///
/// Only the first `mask` tokens are read. Questions shorter than three tokens
/// are padded with PAD up to three, and every PAD column is zeroed before the
/// convolution.
pub fn encode_cnn(tape: &mut Tape<'_>, bound: &Bound, p: &TextCnnParams, tokens: &[usize], mask: usize) -> Result<Var> {
    if mask == 0 || tokens.is_empty() {
        return Err(SanError::contract("cannot encode an empty question"));
    }
    if mask > tokens.len() {
        return Err(SanError::contract(format!("mask {mask} exceeds padded length {}", tokens.len())));
    }
    let len = mask.max(3);
    let mut ids = tokens[..mask].to_vec();
    ids.resize(len, PAD);

    let mut x = embed_tokens(tape, bound[p.w_e], &ids)?;
    if mask < len {
        let e = p.embed_dim;
        let keep = (0..e * len).map(|i| if i % len < mask { 1.0 } else { 0.0 }).collect();
        let keep = tape.constant(Tensor::matrix(e, len, keep)?);
        x = tape.mul(x, keep)?;
    }

    let mut pooled = Vec::with_capacity(3);
    for (&c, &(w, b)) in WINDOW_SIZES.iter().zip(&p.convs) {
        let positions = len - c + 1;
        let shifted = (0..c).map(|j| tape.slice_columns(x, j, positions)).collect::<Result<Vec<_>>>()?;
        let windows = if c == 1 { shifted[0] } else { tape.concat(&shifted, 0)? };
        let conv = tape.matmul(bound[w], windows)?;
        let conv = tape.add_columns(conv, bound[b])?;
        let conv = tape.tanh(conv)?;
        pooled.push(tape.max(conv, 1)?);
    }
    tape.concat(&pooled, 0)
}
