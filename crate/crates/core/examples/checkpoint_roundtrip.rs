//! Writes feature and checkpoint files and reads them back bit for bit.

use san::data::{generate_dataset, AnswerVocab, GeneratorConfig};
use san::image::RegionFeatureMap;
use san::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelConfig, SanModel};

fn main() -> san::Result<()> {
    let dir = std::env::temp_dir().join("san-checkpoint-roundtrip");
    std::fs::create_dir_all(&dir).map_err(|e| san::SanError::Io { path: dir.clone(), source: e })?;

    let ds = generate_dataset(&GeneratorConfig::default(), 1, 0, 3)?;
    let features = ds.features_of(&ds.samples[0])?;
    let sanf = dir.join("0.sanf");
    features.write(&sanf)?;
    let back = RegionFeatureMap::read(&sanf)?;
    println!("SANF {} regions x {} dims, identical: {}", back.regions(), back.raw_dim(), &back == features);

    let answers = AnswerVocab::standard();
    let model = SanModel::new(ModelConfig {
        vocab_size: ds.vocab.len(),
        answer_count: answers.len(),
        embed_dim: 8,
        hidden: 8,
        ..Default::default()
    })?;
    let ck = Checkpoint { model, vocab: ds.vocab.clone(), answers };
    let sanc = dir.join("model.sanc");
    save_checkpoint(&sanc, &ck)?;
    let loaded = load_checkpoint(&sanc)?;
    println!(
        "SANC {} with {} parameters, identical: {}, bytes identical: {}",
        loaded.model.tag(),
        loaded.model.store.total_size(),
        loaded == ck,
        loaded.to_bytes() == ck.to_bytes()
    );
    Ok(())
}
