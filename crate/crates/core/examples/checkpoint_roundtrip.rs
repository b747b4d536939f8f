//! Save, reload and re-save a checkpoint, then show that a flipped bit is
//! caught by the checksum.
//!
//! Run with `cargo run --example checkpoint_roundtrip`.

use std::error::Error;

use ffr::samples::word_for_word;
use ffr::tokenizer::build_vocab;
use ffr::training::{train, TrainingError};
use ffr::{Checkpoint, DiacriticMode, ModelConfig, TrainConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let corpus = word_for_word(6, 1);
    let src = build_vocab(&corpus.sources().collect::<Vec<_>>(), DiacriticMode::Preserve, 1)?;
    let tgt = build_vocab(&corpus.targets().collect::<Vec<_>>(), DiacriticMode::Preserve, 1)?;
    let config = TrainConfig { epochs: 2, batch_size: 3, ..TrainConfig::default() };
    let model_config = ModelConfig::new(src.len(), tgt.len()).with_dims(8, 6, 4);
    let (ckpt, _) = train(&corpus, &corpus, &src, &tgt, model_config, &config)?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path)?;
    let first = std::fs::read(&path)?;
    let reloaded = Checkpoint::load(&path)?;
    assert_eq!(reloaded.to_bytes()?, first);
    println!(
        "{} bytes, {} tensors, {} optimizer moments, step {}: reload is byte-identical",
        first.len(),
        reloaded.tensors.len(),
        reloaded.optimizer.len(),
        reloaded.step
    );

    let mut damaged = first.clone();
    damaged[first.len() / 2] ^= 0x10;
    match Checkpoint::from_bytes(&damaged) {
        Err(TrainingError::CorruptCheckpoint(why)) => println!("flipped bit rejected: {why}"),
        other => panic!("damaged checkpoint accepted: {other:?}"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
