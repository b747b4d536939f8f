//! The two diacritic modes side by side. Preserve keeps `hɔ́n` (porte) and
//! `hɔn` (fuire) apart; Strip maps both to the same token.
//!
//! Run with `cargo run --example diacritic_tokenization`.

use std::error::Error;

use ffr::samples::PREDICTIONS;
use ffr::tokenizer::{build_vocab, encode_text, tokenize};
use ffr::DiacriticMode;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    println!("{:<20} {:<22} {}", "source", "preserve", "strip");
    for p in PREDICTIONS {
        let keep = tokenize(p.source, DiacriticMode::Preserve)?;
        let strip = tokenize(p.source, DiacriticMode::Strip)?;
        println!("{:<20} {:<22} {}", p.source, keep.join("|"), strip.join("|"));
    }

    let sources: Vec<&str> = PREDICTIONS.iter().map(|p| p.source).collect();
    let keep = build_vocab(&sources, DiacriticMode::Preserve, 1)?;
    let strip = build_vocab(&sources, DiacriticMode::Strip, 1)?;
    println!("\nvocabulary size: preserve {}, strip {}", keep.len(), strip.len());
    assert!(keep.len() > strip.len());

    for vocab in [&keep, &strip] {
        let a = encode_text("hɔ́n", vocab)?;
        let b = encode_text("hɔn", vocab)?;
        println!("{:<8} hɔ́n -> {:?}  hɔn -> {:?}", vocab.mode().as_str(), a.ids(), b.ids());
    }
    print!("\n{}", strip.to_file_string());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
