//! Trains SAN(1, LSTM) on 64 one-hop questions until it answers all of them.

use san::data::{generate_dataset, GeneratorConfig, QType};
use san::model::{ModelConfig, SanModel};
use san::train::{evaluate_accuracy, fit_with, TrainConfig};

fn main() -> san::Result<()> {
    let gen = GeneratorConfig { qtypes: vec![QType::OneHop], ..Default::default() };
    let ds = generate_dataset(&gen, 64, 0, 4)?;
    let mut model = SanModel::new(ModelConfig {
        layers: 1,
        vocab_size: ds.vocab.len(),
        answer_count: ds.answers.len(),
        raw_dim: gen.raw_dim,
        embed_dim: 32,
        hidden: 32,
        ..ModelConfig::default()
    })?;
    let cfg = TrainConfig { lr: 0.1, batch_size: 8, dropout: 0.0, epochs: 1, ..Default::default() };
    for epoch in 0..200u64 {
        let reports = fit_with(&mut model, &ds, None, &TrainConfig { seed: epoch, ..cfg.clone() }, None, |_| {})?;
        let acc = evaluate_accuracy(&model, &ds)?;
        if epoch % 10 == 9 || acc == 1.0 {
            println!("epoch {:>3}  loss {:.4}  train accuracy {acc:.3}", epoch + 1, reports[0].mean_loss);
        }
        if acc == 1.0 {
            break;
        }
    }
    Ok(())
}
