//! Sentence and corpus scores for the six published example predictions.
//!
//! Run with `cargo run --example evaluate_predictions`.

use std::error::Error;

use ffr::metrics::{evaluate_lines, EvaluationMode, Metric};
use ffr::samples::PREDICTIONS;
use ffr::DiacriticMode;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let hyps: Vec<&str> = PREDICTIONS.iter().map(|p| p.hypothesis).collect();
    let refs: Vec<&str> = PREDICTIONS.iter().map(|p| p.reference).collect();

    let sentence = evaluate_lines(&hyps, &refs, EvaluationMode::Sentence, DiacriticMode::Preserve)?;
    print!("{}", sentence.render(Metric::Bleu));
    assert_eq!(sentence.sentence_scores.as_deref(), Some(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.25][..]));

    println!();
    let corpus = evaluate_lines(&hyps, &refs, EvaluationMode::Corpus, DiacriticMode::Preserve)?;
    print!("{}", corpus.render(Metric::Both));
    println!("{}", corpus.to_json());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
