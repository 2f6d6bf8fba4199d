//! Accuracy, the ten-annotator consensus score and thresholded WUPS.

use san::metrics::{accuracy, vqa_consensus, wu_palmer, wups_score, TaxonomyTree, ANSWER_TAXONOMY, TOY_TAXONOMY};

fn main() -> san::Result<()> {
    println!("accuracy [1,2,3,4] vs [1,2,3,0] = {}", accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0])?);

    for k in 0..=4 {
        let labels: Vec<&str> = (0..10).map(|i| if i < k { "two" } else { "three" }).collect();
        println!("consensus with {k} matching labels = {:.4}", vqa_consensus("two", &labels)?);
    }

    let toy = TaxonomyTree::parse(TOY_TAXONOMY)?;
    println!("wu_palmer(dog, cat) = {:.4}", wu_palmer("dog", "cat", &toy)?);
    println!(
        "WUPS@0.9 = {}, WUPS@0.0 = {:.4}",
        wups_score(&["dog"], &["cat"], &toy, 0.9)?,
        wups_score(&["dog"], &["cat"], &toy, 0.0)?
    );

    let answers = TaxonomyTree::parse(ANSWER_TAXONOMY)?;
    let preds = ["red", "circle", "two", "blue"];
    let labels = ["red", "square", "two", "three"];
    println!(
        "synthetic answers: WUPS@0.9 {:.4}, WUPS@0.0 {:.4}",
        wups_score(&preds, &labels, &answers, 0.9)?,
        wups_score(&preds, &labels, &answers, 0.0)?
    );
    Ok(())
}
