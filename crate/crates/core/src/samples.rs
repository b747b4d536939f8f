//! Small built-in datasets used by the examples and tests.

use crate::corpus::ParallelCorpus;
use crate::rng::Rng;

/// One row of the prediction table: source, reference translation and the
/// model's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub source: &'static str,
    pub reference: &'static str,
    pub hypothesis: &'static str,
}

/// The six published example predictions, in order.
pub const PREDICTIONS: [Prediction; 6] = [
    Prediction { source: "yí bo wa", reference: "prends et viens", hypothesis: "prends et viens" },
    Prediction { source: "yi bo wa", reference: "va et viens", hypothesis: "va viens" },
    Prediction { source: "hɔ́n", reference: "porte", hypothesis: "scorpion" },
    Prediction { source: "hɔn", reference: "fuire", hypothesis: "porte" },
    Prediction {
        source: "sá amasín dŏ wŭ",
        reference: "oindre avec un médicament",
        hypothesis: "se masser le remede",
    },
    Prediction {
        source: "gbɛ́",
        reference: "pousser de nouvelles feuilles",
        hypothesis: "esprit de la vie",
    },
];

const ONSETS: [&str; 20] = [
    "b", "d", "f", "g", "h", "k", "l", "m", "n", "s", "t", "w", "x", "y", "z", "gb", "kp", "ny", "j", "v",
];
const VOWELS: [(&str, &str); 7] = [
    ("a", "á"),
    ("ɔ", "ɔ́"),
    ("e", "é"),
    ("ɛ", "ɛ́"),
    ("o", "ó"),
    ("i", "í"),
    ("u", "ú"),
];

/// `n` minimal pairs (`2n` sentence pairs): words like `hɔ́n` / `hɔn` that
/// differ only by a tone mark and translate to different targets
/// (`mot{k}a` / `mot{k}b`). At most 140.
pub fn minimal_pairs(n: usize) -> ParallelCorpus {
    assert!(n <= ONSETS.len() * VOWELS.len(), "at most 140 minimal pairs");
    let mut pairs = Vec::with_capacity(2 * n);
    for k in 0..n {
        let onset = ONSETS[k % ONSETS.len()];
        let (plain, marked) = VOWELS[k / ONSETS.len()];
        pairs.push((format!("{onset}{marked}n"), format!("mot{k}a")));
        pairs.push((format!("{onset}{plain}n"), format!("mot{k}b")));
    }
    ParallelCorpus::from_pairs(pairs).expect("non-empty pairs")
}

const LEXICON: [(&str, &str); 12] = [
    ("àsì", "femme"),
    ("vǐ", "enfant"),
    ("xwé", "maison"),
    ("nú", "chose"),
    ("gbɛ̌", "vie"),
    ("tɔ́", "père"),
    ("kɛ́kɛ́", "vélo"),
    ("wǎ", "faire"),
    ("yì", "partir"),
    ("dó", "planter"),
    ("mɛ̀", "personne"),
    ("akwɛ́", "argent"),
];

/// `n` distinct sentence pairs of 2 to 5 words, each target the word-for-word
/// gloss of its source under a fixed twelve-word lexicon.
pub fn word_for_word(n: usize, seed: u64) -> ParallelCorpus {
    let mut rng = Rng::new(seed);
    let mut pairs: Vec<(String, String)> = Vec::with_capacity(n);
    while pairs.len() < n {
        let len = 2 + rng.below(4);
        let words: Vec<(&str, &str)> = (0..len).map(|_| LEXICON[rng.below(LEXICON.len())]).collect();
        let source = words.iter().map(|w| w.0).collect::<Vec<_>>().join(" ");
        if pairs.iter().any(|(s, _)| *s == source) {
            continue;
        }
        pairs.push((source, words.iter().map(|w| w.1).collect::<Vec<_>>().join(" ")));
    }
    ParallelCorpus::from_pairs(pairs).expect("non-empty pairs")
}
