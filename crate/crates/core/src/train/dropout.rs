use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Result, SanError};

/// Forward-pass mode. Training carries the dropout rate and mask RNG.
#[derive(Debug)]
pub enum Mode<'r> {
    Eval,
    Train { rate: f64, rng: &'r mut ChaCha8Rng },
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train { .. })
    }
}

/// Inverted dropout: zero with probability `rate`, scale survivors by
/// `1/(1-rate)`. Identity in eval mode and at rate 0.
pub fn dropout(tape: &mut Tape<'_>, x: Var, mode: &mut Mode<'_>) -> Result<Var> {
    let Mode::Train { rate, rng } = mode else { return Ok(x) };
    let rate = *rate;
    if !(0.0..1.0).contains(&rate) {
        return Err(SanError::contract(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    if rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let shape = tape.value(x).shape().to_vec();
    let n: usize = shape.iter().product();
    let mask = (0..n).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
    let mask = tape.constant(Tensor::new(shape, mask)?);
    tape.mul(x, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn input(tape: &mut Tape<'_>, n: usize) -> Var {
        tape.constant(Tensor::column((0..n).map(|i| i as f64 * 0.37 - 1.0).collect()))
    }

    #[test]
    fn eval_is_bitwise_identity() {
        let mut tape = Tape::new();
        let x = input(&mut tape, 7);
        let y = dropout(&mut tape, x, &mut Mode::Eval).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn rate_zero_is_identity() {
        let mut tape = Tape::new();
        let x = input(&mut tape, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = dropout(&mut tape, x, &mut Mode::Train { rate: 0.0, rng: &mut rng }).unwrap();
        assert_eq!(tape.value(x), tape.value(y));
    }

    #[test]
    fn rate_one_is_rejected() {
        let mut tape = Tape::new();
        let x = input(&mut tape, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for rate in [1.0, 1.5, -0.1] {
            assert!(dropout(&mut tape, x, &mut Mode::Train { rate, rng: &mut rng }).is_err());
        }
    }

    #[test]
    fn half_rate_is_unbiased() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::column(vec![1.0; 1_000_000]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = dropout(&mut tape, x, &mut Mode::Train { rate: 0.5, rng: &mut rng }).unwrap();
        let out = tape.value(y).data();
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!(out.iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
