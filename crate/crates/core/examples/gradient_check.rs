//! Checks every parameter gradient of small SAN models against central
//! differences.

use san::data::{generate_dataset, GeneratorConfig};
use san::model::{ModelConfig, SanModel};
use san::question::EncoderKind;
use san::train::check_gradients;

fn main() -> san::Result<()> {
    let gen = GeneratorConfig { grid_side: 3, raw_dim: 10, min_objects: 2, max_objects: 4, ..Default::default() };
    let ds = generate_dataset(&gen, 4, 0, 7)?;
    for encoder in [EncoderKind::Lstm, EncoderKind::Cnn] {
        for layers in 1..=3 {
            let model = SanModel::new(ModelConfig {
                encoder,
                layers,
                vocab_size: ds.vocab.len(),
                answer_count: ds.answers.len(),
                raw_dim: gen.raw_dim,
                embed_dim: 3,
                hidden: 4,
                cnn_filters: [2, 1, 2],
                init_seed: layers as u64,
                ..Default::default()
            })?;
            let checks = check_gradients(&model, &ds, &[0, 1, 2, 3], 1e-5)?;
            let worst = checks.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).expect("parameters");
            println!(
                "{:<13} {:>2} tensors, {:>4} coordinates, worst {:.2e} ({})",
                model.tag(),
                checks.len(),
                checks.iter().map(|c| c.numel).sum::<usize>(),
                worst.max_rel_error,
                worst.name
            );
        }
    }
    Ok(())
}
