//! Generates a few grid scenes with questions and re-checks each answer
//! with the independent resolver.

use san::data::{generate_dataset, resolve, GeneratorConfig};

fn main() -> san::Result<()> {
    let ds = generate_dataset(&GeneratorConfig::default(), 6, 0, 42)?;
    for s in &ds.samples {
        let scene = &ds.scenes[&s.scene];
        let words = ds.vocab.decode(&s.tokens)?;
        println!("scene {} ({} objects)", scene.id, scene.object_count());
        for y in 0..scene.grid_side {
            let row: Vec<String> = (0..scene.grid_side).map(|x| scene.label(y * scene.grid_side + x)).collect();
            println!("  {}", row.join(" "));
        }
        let answer = ds.answers.word(s.answer)?;
        let check = resolve(scene, &words)?;
        println!("  [{}] {} ? -> {answer} (resolver: {})\n", s.qtype, words.join(" "), check.answer);
    }
    let f = ds.features_of(&ds.samples[0])?;
    println!("features per scene: {} regions x {} dims", f.regions(), f.raw_dim());
    Ok(())
}
