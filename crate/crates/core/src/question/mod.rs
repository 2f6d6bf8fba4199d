//! Question encoders: word embedding followed by an LSTM or an n-gram CNN.

mod cnn;
mod lstm;
#[cfg(test)]
pub(crate) mod test_oracle;
mod vocab;

pub use cnn::{encode_cnn, TextCnnParams, DEFAULT_FILTERS, WINDOW_SIZES};
pub use lstm::{encode_lstm, lstm_step, lstm_step_with_gates, LstmGates, LstmParams};
pub use vocab::{Vocab, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

use crate::autodiff::{Tape, Var};
use crate::error::{Result, SanError};
use crate::params::Bound;

/// Embeds `tokens` as the columns of an `e×T` matrix (row lookup in `W_e`,
/// equivalent to multiplying by one-hot columns).
pub fn embed_tokens(tape: &mut Tape<'_>, w_e: Var, tokens: &[usize]) -> Result<Var> {
    let vocab_size = tape.value(w_e).rows();
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
        return Err(SanError::Vocab(format!("token id {bad} outside vocabulary of {vocab_size}")));
    }
    if tokens.is_empty() {
        return Err(SanError::contract("cannot embed an empty token list"));
    }
    tape.lookup_columns(w_e, tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Lstm,
    Cnn,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Lstm => "lstm",
            EncoderKind::Cnn => "cnn",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(EncoderKind::Lstm),
            "cnn" => Ok(EncoderKind::Cnn),
            other => Err(SanError::Config(format!("unknown encoder {other:?}, expected lstm or cnn"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuestionEncoder {
    Lstm(LstmParams),
    Cnn(TextCnnParams),
}

impl QuestionEncoder {
    pub fn kind(&self) -> EncoderKind {
        match self {
            QuestionEncoder::Lstm(_) => EncoderKind::Lstm,
            QuestionEncoder::Cnn(_) => EncoderKind::Cnn,
        }
    }

    /// Length of the question vector.
    pub fn output_dim(&self) -> usize {
        match self {
            QuestionEncoder::Lstm(p) => p.hidden,
            QuestionEncoder::Cnn(p) => p.output_dim(),
        }
    }

    pub fn encode(&self, tape: &mut Tape<'_>, bound: &Bound, tokens: &[usize], mask: usize) -> Result<Var> {
        match self {
            QuestionEncoder::Lstm(p) => encode_lstm(tape, bound, p, tokens, mask),
            QuestionEncoder::Cnn(p) => encode_cnn(tape, bound, p, tokens, mask),
        }
    }
}
