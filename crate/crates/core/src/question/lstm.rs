use rand::Rng;

use super::embed_tokens;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Result, SanError};
use crate::params::{glorot_uniform, Bound, ParamId, ParamStore};

/// LSTM question model parameters.
///
/// `W_x*` are `d×e`, `W_h*` are `d×d`, biases are `d×1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_e: ParamId,
    pub w_xi: ParamId,
    pub w_hi: ParamId,
    pub w_xf: ParamId,
    pub w_hf: ParamId,
    pub w_xo: ParamId,
    pub w_ho: ParamId,
    pub w_xc: ParamId,
    pub w_hc: ParamId,
    pub b_i: ParamId,
    pub b_f: ParamId,
    pub b_o: ParamId,
    pub b_c: ParamId,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    /// Registers the parameters in `store`. With `forget_bias_one` the forget
    /// gate bias starts at 1.0 instead of 0.
    pub fn init(
        store: &mut ParamStore,
        vocab_size: usize,
        embed_dim: usize,
        hidden: usize,
        forget_bias_one: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let (e, d) = (embed_dim, hidden);
        let mut w = |name: &str, rows, cols, rng: &mut _| store.add(name, glorot_uniform(rows, cols, rng));
        let w_e = w("lstm.w_e", vocab_size, e, rng);
        let w_xi = w("lstm.w_xi", d, e, rng);
        let w_hi = w("lstm.w_hi", d, d, rng);
        let w_xf = w("lstm.w_xf", d, e, rng);
        let w_hf = w("lstm.w_hf", d, d, rng);
        let w_xo = w("lstm.w_xo", d, e, rng);
        let w_ho = w("lstm.w_ho", d, d, rng);
        let w_xc = w("lstm.w_xc", d, e, rng);
        let w_hc = w("lstm.w_hc", d, d, rng);
        let b_i = store.add("lstm.b_i", Tensor::zeros(&[d, 1]));
        let forget = if forget_bias_one { 1.0 } else { 0.0 };
        let b_f = store.add("lstm.b_f", Tensor::filled(&[d, 1], forget));
        let b_o = store.add("lstm.b_o", Tensor::zeros(&[d, 1]));
        let b_c = store.add("lstm.b_c", Tensor::zeros(&[d, 1]));
        LstmParams {
            w_e,
            w_xi,
            w_hi,
            w_xf,
            w_hf,
            w_xo,
            w_ho,
            w_xc,
            w_hc,
            b_i,
            b_f,
            b_o,
            b_c,
            vocab_size,
            embed_dim,
            hidden,
        }
    }
}

fn gate(tape: &mut Tape<'_>, w_x: Var, w_h: Var, b: Var, x: Var, h: Var) -> Result<Var> {
    let wx = tape.matmul(w_x, x)?;
    let wh = tape.matmul(w_h, h)?;
    let s = tape.add(wx, wh)?;
    tape.add(s, b)
}

/// Gate activations of one step, all `d×1`.
#[derive(Debug, Clone, Copy)]
pub struct LstmGates {
    pub input: Var,
    pub forget: Var,
    pub output: Var,
    pub candidate: Var,
}

/// One step of the recurrence:
///
/// ```text
/// i = σ(W_xi x + W_hi h + b_i)     f = σ(W_xf x + W_hf h + b_f)
/// o = σ(W_xo x + W_ho h + b_o)     c' = f·c + i·tanh(W_xc x + W_hc h + b_c)
/// h' = o·tanh(c')
/// ```
pub fn lstm_step(
    tape: &mut Tape<'_>,
    bound: &Bound,
    p: &LstmParams,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    lstm_step_with_gates(tape, bound, p, x_t, h_prev, c_prev).map(|(h, c, _)| (h, c))
}

pub fn lstm_step_with_gates(
    tape: &mut Tape<'_>,
    bound: &Bound,
    p: &LstmParams,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var, LstmGates)> {
    let (e, d) = (p.embed_dim, p.hidden);
    for (what, v, want) in [("x_t", x_t, [e, 1]), ("h_prev", h_prev, [d, 1]), ("c_prev", c_prev, [d, 1])] {
        if tape.value(v).shape() != want {
            return Err(SanError::dim(
                "lstm_step",
                format!("{what} has shape {:?}, expected {want:?}", tape.value(v).shape()),
            ));
        }
    }
    let pre_i = gate(tape, bound[p.w_xi], bound[p.w_hi], bound[p.b_i], x_t, h_prev)?;
    let i = tape.sigmoid(pre_i)?;
    let pre_f = gate(tape, bound[p.w_xf], bound[p.w_hf], bound[p.b_f], x_t, h_prev)?;
    let f = tape.sigmoid(pre_f)?;
    let pre_o = gate(tape, bound[p.w_xo], bound[p.w_ho], bound[p.b_o], x_t, h_prev)?;
    let o = tape.sigmoid(pre_o)?;
    let pre_c = gate(tape, bound[p.w_xc], bound[p.w_hc], bound[p.b_c], x_t, h_prev)?;
    let candidate = tape.tanh(pre_c)?;

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, candidate)?;
    let c = tape.add(keep, write)?;
    let squashed = tape.tanh(c)?;
    let h = tape.mul(o, squashed)?;
    Ok((h, c, LstmGates { input: i, forget: f, output: o, candidate }))
}

/// Runs the LSTM over the first `mask` tokens from a zero state and returns
/// the hidden state at the last real token.
pub fn encode_lstm(tape: &mut Tape<'_>, bound: &Bound, p: &LstmParams, tokens: &[usize], mask: usize) -> Result<Var> {
    if mask == 0 || tokens.is_empty() {
        return Err(SanError::contract("cannot encode an empty question"));
    }
    if mask > tokens.len() {
        return Err(SanError::contract(format!("mask {mask} exceeds padded length {}", tokens.len())));
    }
    let x = embed_tokens(tape, bound[p.w_e], &tokens[..mask])?;
    let mut h = tape.constant(Tensor::zeros(&[p.hidden, 1]));
    let mut c = tape.constant(Tensor::zeros(&[p.hidden, 1]));
    for t in 0..mask {
        let x_t = if mask == 1 { x } else { tape.slice_columns(x, t, 1)? };
        (h, c) = lstm_step(tape, bound, p, x_t, h, c)?;
    }
    Ok(h)
}
