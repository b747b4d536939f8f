//! Train a small model until it memorises 32 synthetic pairs, then translate
//! with greedy decoding and score the output.
//!
//! Run with `cargo run --release --example train_and_translate`.

use std::error::Error;

use ffr::metrics::bleu_corpus;
use ffr::samples::word_for_word;
use ffr::tokenizer::{build_vocab, tokenize};
use ffr::training::train;
use ffr::{BleuConfig, DiacriticMode, ModelConfig, TrainConfig, Translator};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let corpus = word_for_word(32, 11);
    let mode = DiacriticMode::Preserve;
    let src = build_vocab(&corpus.sources().collect::<Vec<_>>(), mode, 1)?;
    let tgt = build_vocab(&corpus.targets().collect::<Vec<_>>(), mode, 1)?;

    let model_config = ModelConfig::new(src.len(), tgt.len()).with_dims(32, 16, 8);
    let config = TrainConfig {
        learning_rate: 0.01,
        batch_size: 4,
        epochs: 300,
        seed: 0,
        ..TrainConfig::default()
    };
    let (checkpoint, report) = train(&corpus, &corpus, &src, &tgt, model_config, &config)?;
    for (i, e) in report.epochs.iter().enumerate().filter(|(i, _)| (i + 1) % 50 == 0) {
        println!("epoch {:>3}  train {:.4}  val {:.4}", i + 1, e.train_loss, e.val_loss);
    }

    let translator = Translator::from_checkpoint(&checkpoint)?;
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    for (i, pair) in corpus.pairs().iter().enumerate() {
        let out = translator.translate(&pair.source, 20)?;
        if i < 4 {
            println!("{:<28} -> {}", pair.source, out);
        }
        hyps.push(tokenize(&out, mode).unwrap_or_default());
        refs.push(tokenize(&pair.target, mode)?);
    }
    let bleu = bleu_corpus(&hyps, &refs, &BleuConfig::default())?;
    println!("corpus BLEU {bleu:.2}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
