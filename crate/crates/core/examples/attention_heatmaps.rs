//! Trains a small SAN(2) on one-hop questions and renders both layers'
//! attention for one test question as PGM heatmaps plus an ASCII overlay.

use san::data::{generate_splits, GeneratorConfig, QType};
use san::model::{predict_answer, ModelConfig, SanModel};
use san::train::{evaluate_accuracy, fit, TrainConfig};
use san::viz::{default_sigma, export_pgm, gaussian_blur, overlay_ascii, upsample_attention};

fn main() -> san::Result<()> {
    let gen = GeneratorConfig { qtypes: vec![QType::OneHop], ..Default::default() };
    let splits = generate_splits(&gen, [600, 0, 100], 1)?;
    let mut model = SanModel::new(ModelConfig {
        vocab_size: splits.train.vocab.len(),
        answer_count: splits.train.answers.len(),
        raw_dim: gen.raw_dim,
        embed_dim: 16,
        hidden: 16,
        ..ModelConfig::default()
    })?;
    fit(
        &mut model,
        &splits.train,
        None,
        &TrainConfig { lr: 0.1, dropout: 0.0, epochs: 15, ..Default::default() },
        None,
    )?;
    println!("{} test accuracy {:.3}", model.tag(), evaluate_accuracy(&model, &splits.test)?);

    let test = &splits.test;
    let sample = &test.samples[0];
    let features = test.features_of(sample)?;
    let scene = &test.scenes[&sample.scene];
    let (p_ans, trace) = model.forward(features, &sample.tokens, sample.mask)?;
    println!("question: {}", test.vocab.decode(&sample.tokens)?.join(" "));
    println!(
        "answer {} / predicted {}",
        test.answers.word(sample.answer)?,
        test.answers.word(predict_answer(&p_ans)?)?
    );

    let size = 224;
    let sigma = default_sigma(features.grid_side(), size);
    let dir = std::env::temp_dir().join("san-heatmaps");
    std::fs::create_dir_all(&dir).map_err(|e| san::SanError::io(&dir, e))?;
    for (k, layer) in trace.layers.iter().enumerate() {
        let mut h = gaussian_blur(&upsample_attention(&layer.p, features.grid_side(), size)?, sigma)?;
        h.layer = k + 1;
        let path = dir.join(format!("layer{}.pgm", k + 1));
        export_pgm(&h, &path)?;
        println!("\nlayer {} -> {}", k + 1, path.display());
        print!("{}", overlay_ascii(&h, scene));
    }
    Ok(())
}
