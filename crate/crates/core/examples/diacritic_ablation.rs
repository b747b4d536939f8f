//! Train the same model on 40 tone-mark minimal pairs with and without
//! diacritics. Stripping merges each pair into one input, so at most one of
//! its two targets can be produced.
//!
//! Run with `cargo run --release --example diacritic_ablation`.

use std::error::Error;

use ffr::samples::minimal_pairs;
use ffr::tokenizer::build_vocab;
use ffr::training::train;
use ffr::{DiacriticMode, ModelConfig, ParallelCorpus, TrainConfig, Translator};

/// Fraction of training pairs reproduced exactly after training in `mode`.
pub fn exact_match(corpus: &ParallelCorpus, mode: DiacriticMode) -> Result<f64, Box<dyn Error>> {
    let src = build_vocab(&corpus.sources().collect::<Vec<_>>(), mode, 1)?;
    let tgt = build_vocab(&corpus.targets().collect::<Vec<_>>(), mode, 1)?;
    let model_config = ModelConfig::new(src.len(), tgt.len()).with_dims(32, 32, 16);
    let config = TrainConfig {
        learning_rate: 0.01,
        batch_size: 4,
        epochs: 300,
        seed: 0,
        ..TrainConfig::default()
    };
    let (checkpoint, _) = train(corpus, corpus, &src, &tgt, model_config, &config)?;
    let translator = Translator::from_checkpoint(&checkpoint)?;
    let mut hits = 0;
    for pair in corpus.pairs() {
        if translator.translate(&pair.source, 8)? == pair.target {
            hits += 1;
        }
    }
    Ok(hits as f64 / corpus.len() as f64)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let corpus = minimal_pairs(40);
    println!("{} sentence pairs, e.g. {} -> {}, {} -> {}", corpus.len(),
        corpus.pairs()[0].source, corpus.pairs()[0].target,
        corpus.pairs()[1].source, corpus.pairs()[1].target);
    for mode in [DiacriticMode::Preserve, DiacriticMode::Strip] {
        let score = exact_match(&corpus, mode)?;
        println!("{:<9} exact match {:>6.1}%", mode.as_str(), 100.0 * score);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
