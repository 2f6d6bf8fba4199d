//! One attention step on two scalar regions, by hand and through the tape.

use san::autodiff::{Tape, Tensor};
use san::model::{aggregate_and_refine, attention_step, AttentionLayerParams};
use san::params::ParamStore;

fn main() -> san::Result<()> {
    let mut store = ParamStore::new();
    let layer = AttentionLayerParams::init(&mut store, 0, 1, 1, &mut rand::thread_rng());
    for id in [layer.w_ia, layer.w_qa, layer.w_p] {
        *store.get_mut(id) = Tensor::scalar(1.0);
    }
    for id in [layer.b_a, layer.b_p] {
        *store.get_mut(id) = Tensor::zeros(store.get(id).shape());
    }

    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false);
    let v = tape.constant(Tensor::matrix(1, 2, vec![1.0, -1.0])?);
    let u0 = tape.constant(Tensor::scalar(0.0));
    let p = attention_step(&mut tape, &bound, &layer, v, u0)?;
    let (v_tilde, u1) = aggregate_and_refine(&mut tape, v, p, u0)?;

    let t = 1f64.tanh();
    let p0 = 1.0 / (1.0 + (-2.0 * t).exp());
    println!("logits     ({t:.4}, {:.4})", -t);
    println!("p  tape    {:?}", tape.value(p).data());
    println!("p  by hand [{p0}, {}]", 1.0 - p0);
    println!("v~ = {:.6}, u1 = {:.6}", tape.value(v_tilde).item(), tape.value(u1).item());
    Ok(())
}
