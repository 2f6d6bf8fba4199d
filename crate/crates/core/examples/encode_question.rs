//! Encodes one question with the LSTM and the n-gram CNN encoders.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use san::autodiff::Tape;
use san::data::standard_vocab;
use san::params::ParamStore;
use san::question::{LstmParams, QuestionEncoder, TextCnnParams, DEFAULT_FILTERS};

fn main() -> san::Result<()> {
    let vocab = standard_vocab();
    let words = ["what", "color", "is", "the", "object", "next", "to", "the", "star"];
    let tokens = vocab.encode(&words);
    println!("tokens {tokens:?}");

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let lstm = QuestionEncoder::Lstm(LstmParams::init(&mut store, vocab.len(), 32, 64, true, &mut rng));
    let cnn = QuestionEncoder::Cnn(TextCnnParams::init(&mut store, vocab.len(), 32, DEFAULT_FILTERS, &mut rng));

    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false);
    for enc in [&lstm, &cnn] {
        let v_q = enc.encode(&mut tape, &bound, &tokens, tokens.len())?;
        let v = tape.value(v_q);
        let norm = v.sq_norm().sqrt();
        println!("{:?}: v_Q has {} dims (declared {}), norm {norm:.3}", enc.kind(), v.numel(), enc.output_dim());
    }
    Ok(())
}
