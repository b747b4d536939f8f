//! Length buckets and a seeded train/validation/test split of a small corpus.
//!
//! Run with `cargo run --example corpus_analysis`.

use std::error::Error;

use ffr::corpus::{analyze, split};
use ffr::samples::{word_for_word, PREDICTIONS};
use ffr::{ParallelCorpus, SplitSpec};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut tsv: String = PREDICTIONS.iter().map(|p| format!("{}\t{}\n", p.source, p.reference)).collect();
    tsv += &word_for_word(14, 5).to_tsv();
    // one long pair so every bucket below "Long" has something in it
    let long_src = vec!["nú"; 12].join(" ");
    let long_tgt = vec!["chose"; 12].join(" ");
    tsv += &format!("{long_src}\t{long_tgt}\n");

    let corpus = ParallelCorpus::parse(tsv.as_bytes())?;
    let stats = analyze(&corpus)?;
    println!("{stats}\n");

    let spec = SplitSpec { train_n: 15, val_n: 3, test_n: 3, seed: 2020 };
    let parts = split(&corpus, &spec)?;
    for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
        let ids: Vec<usize> = part.pairs().iter().map(|p| p.id).collect();
        println!("{name:<6}{:>3} pairs  ids {ids:?}", part.len());
    }
    // same seed, same split
    assert_eq!(split(&corpus, &spec)?, parts);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
