use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Result, SanError};
use crate::params::{glorot_uniform, Bound, ParamId, ParamStore};

/// Parameters of one attention layer. Every layer owns its own set.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayerParams {
    /// `W_{I,A}`: `k×d`
    pub w_ia: ParamId,
    /// `W_{Q,A}`: `k×d`
    pub w_qa: ParamId,
    /// `b_A`: `k×1`
    pub b_a: ParamId,
    /// `W_P`: `1×k`
    pub w_p: ParamId,
    /// `b_P`: scalar
    pub b_p: ParamId,
    pub dim: usize,
    pub hidden: usize,
}

impl AttentionLayerParams {
    pub fn init(store: &mut ParamStore, layer: usize, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w_ia = store.add(format!("attn.{layer}.w_ia"), glorot_uniform(hidden, dim, rng));
        let w_qa = store.add(format!("attn.{layer}.w_qa"), glorot_uniform(hidden, dim, rng));
        let b_a = store.add(format!("attn.{layer}.b_a"), Tensor::zeros(&[hidden, 1]));
        let w_p = store.add(format!("attn.{layer}.w_p"), glorot_uniform(1, hidden, rng));
        let b_p = store.add(format!("attn.{layer}.b_p"), Tensor::zeros(&[1, 1]));
        AttentionLayerParams { w_ia, w_qa, b_a, w_p, b_p, dim, hidden }
    }
}

/// `W_u` (`|A|×d`) and `b_u` (`|A|×1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub w_u: ParamId,
    pub b_u: ParamId,
    pub answers: usize,
}

impl ClassifierParams {
    pub fn init(store: &mut ParamStore, dim: usize, answers: usize, rng: &mut impl Rng) -> Self {
        let w_u = store.add("cls.w_u", glorot_uniform(answers, dim, rng));
        let b_u = store.add("cls.b_u", Tensor::zeros(&[answers, 1]));
        ClassifierParams { w_u, b_u, answers }
    }
}

/// Attention distribution over the `m` regions, as an `m×1` column:
///
/// ```text
/// h = tanh(W_{I,A} v_I ⊕ (W_{Q,A} u + b_A))
/// p = softmax(W_P h + b_P)
/// ```
pub fn attention_step(
    tape: &mut Tape<'_>,
    bound: &Bound,
    layer: &AttentionLayerParams,
    v_i: Var,
    u_prev: Var,
) -> Result<Var> {
    let d = layer.dim;
    if tape.value(v_i).rows() != d || tape.value(u_prev).shape() != [d, 1] {
        return Err(SanError::dim(
            "attention_step",
            format!("v_I {:?} and u {:?} must have {d} rows", tape.value(v_i).shape(), tape.value(u_prev).shape()),
        ));
    }
    let image_part = tape.matmul(bound[layer.w_ia], v_i)?;
    let query_part = tape.matmul(bound[layer.w_qa], u_prev)?;
    let query_part = tape.add(query_part, bound[layer.b_a])?;
    let h = tape.add_columns(image_part, query_part)?;
    let h = tape.tanh(h)?;
    let logits = tape.matmul(bound[layer.w_p], h)?;
    let logits = tape.add_columns(logits, bound[layer.b_p])?;
    let logits = tape.transpose(logits)?;
    tape.softmax(logits, 0)
}

/// `ṽ = Σ_i p_i v_i` and `u = ṽ + u_prev`.
pub fn aggregate_and_refine(tape: &mut Tape<'_>, v_i: Var, p: Var, u_prev: Var) -> Result<(Var, Var)> {
    let m = tape.value(v_i).cols();
    let probs = tape.value(p);
    if probs.shape() != [m, 1] {
        return Err(SanError::dim("aggregate_and_refine", format!("p {:?} for {m} regions", probs.shape())));
    }
    let total = probs.sum();
    if (total - 1.0).abs() > 1e-6 || probs.data().iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(SanError::contract(format!("attention weights are not a distribution (sum {total})")));
    }
    let v_tilde = tape.matmul(v_i, p)?;
    let u = tape.add(v_tilde, u_prev)?;
    Ok((v_tilde, u))
}

/// Answer logits `W_u u + b_u` and their softmax.
pub fn classify(tape: &mut Tape<'_>, bound: &Bound, cls: &ClassifierParams, u: Var) -> Result<(Var, Var)> {
    let z = tape.matmul(bound[cls.w_u], u)?;
    let logits = tape.add(z, bound[cls.b_u])?;
    let p_ans = tape.softmax(logits, 0)?;
    Ok((logits, p_ans))
}

/// Index of the most probable answer; ties go to the lowest index.
pub fn predict_answer(p_ans: &[f64]) -> Result<usize> {
    if p_ans.is_empty() {
        return Err(SanError::contract("cannot predict from an empty distribution"));
    }
    let mut best = 0;
    for (i, &p) in p_ans.iter().enumerate().skip(1) {
        if p > p_ans[best] {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_layer(store: &mut ParamStore) -> AttentionLayerParams {
        let layer = AttentionLayerParams::init(store, 0, 1, 1, &mut ChaCha8Rng::seed_from_u64(0));
        *store.get_mut(layer.w_ia) = Tensor::scalar(1.0);
        *store.get_mut(layer.w_qa) = Tensor::scalar(1.0);
        *store.get_mut(layer.w_p) = Tensor::scalar(1.0);
        layer
    }

    #[test]
    fn zero_projection_gives_uniform_attention() {
        let mut store = ParamStore::new();
        let layer = AttentionLayerParams::init(&mut store, 0, 3, 4, &mut ChaCha8Rng::seed_from_u64(1));
        *store.get_mut(layer.w_p) = Tensor::zeros(&[1, 4]);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let v = tape.constant(crate::autodiff::tests_support::random_matrix(3, 5, 2));
        let u = tape.constant(Tensor::column(vec![0.1, 0.2, 0.3]));
        let p = attention_step(&mut tape, &bound, &layer, v, u).unwrap();
        assert_eq!(tape.value(p).data(), &[0.2; 5]);
    }

    #[test]
    fn scalar_worked_instance() {
        let mut store = ParamStore::new();
        let layer = scalar_layer(&mut store);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let v = tape.constant(Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap());
        let u0 = tape.constant(Tensor::scalar(0.0));
        let p = attention_step(&mut tape, &bound, &layer, v, u0).unwrap();
        let pd = tape.value(p).data().to_vec();

        let t = 1f64.tanh();
        let p0 = t.exp() / (t.exp() + (-t).exp());
        assert!((pd[0] - p0).abs() < 1e-15);
        // quoted four-digit figures are off by one in the last place
        assert!((pd[0] - 0.8211).abs() < 2.5e-4 && (pd[1] - 0.1789).abs() < 2.5e-4);

        let (v_tilde, u) = aggregate_and_refine(&mut tape, v, p, u0).unwrap();
        assert!((tape.value(v_tilde).item() - (pd[0] - pd[1])).abs() < 1e-15);
        assert!((tape.value(u).item() - (2.0 * p0 - 1.0)).abs() < 1e-15);
        assert!((tape.value(u).item() - 0.6422).abs() < 2.5e-4);
    }

    #[test]
    fn duplicate_regions_get_equal_weight() {
        let mut store = ParamStore::new();
        let layer = AttentionLayerParams::init(&mut store, 0, 2, 3, &mut ChaCha8Rng::seed_from_u64(3));
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let v = tape.constant(Tensor::matrix(2, 3, vec![0.4, 0.9, 0.4, -0.3, 0.1, -0.3]).unwrap());
        let u = tape.constant(Tensor::column(vec![0.5, -0.5]));
        let p = attention_step(&mut tape, &bound, &layer, v, u).unwrap();
        let pd = tape.value(p).data();
        assert_eq!(pd[0], pd[2]);
    }

    #[test]
    fn identical_regions_aggregate_to_that_region() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::matrix(2, 3, vec![0.25, 0.25, 0.25, -0.5, -0.5, -0.5]).unwrap());
        let p = tape.constant(Tensor::column(vec![0.2, 0.3, 0.5]));
        let u = tape.constant(Tensor::column(vec![0.0, 0.0]));
        let (vt, _) = aggregate_and_refine(&mut tape, v, p, u).unwrap();
        for (a, b) in tape.value(vt).data().iter().zip([0.25, -0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_attention_selects_region() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let p = tape.constant(Tensor::column(vec![0.0, 1.0, 0.0]));
        let u = tape.constant(Tensor::column(vec![10.0, 20.0]));
        let (vt, u1) = aggregate_and_refine(&mut tape, v, p, u).unwrap();
        assert_eq!(tape.value(vt).data(), &[2.0, 5.0]);
        assert_eq!(tape.value(u1).data(), &[12.0, 25.0]);
    }

    #[test]
    fn unnormalised_weights_are_rejected() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::zeros(&[2, 2]));
        let p = tape.constant(Tensor::column(vec![0.5, 0.6]));
        let u = tape.constant(Tensor::column(vec![0.0, 0.0]));
        assert!(matches!(aggregate_and_refine(&mut tape, v, p, u), Err(SanError::Contract(_))));
    }

    #[test]
    fn prediction_breaks_ties_low() {
        assert_eq!(predict_answer(&[0.1, 0.7, 0.2]).unwrap(), 1);
        assert_eq!(predict_answer(&[0.5, 0.5]).unwrap(), 0);
        assert_eq!(predict_answer(&[0.0, 0.0, 1.0, 0.0]).unwrap(), 2);
        assert!(predict_answer(&[]).is_err());
    }
}
