//! Normalisation, the two diacritic encodings, tokenization and vocabularies.
//!
//! In [`DiacriticMode::Preserve`] accented forms such as `hɔ́n` and `hɔn` are
//! distinct tokens. [`DiacriticMode::Strip`] removes every nonspacing mark
//! (general category `Mn`) after canonical decomposition, so both collapse to
//! `hɔn`. Base letters like `ɔ` and `ɛ` are never touched.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategory, GeneralCategoryGroup, UnicodeGeneralCategory};

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("input produced no tokens")]
    EmptyInput,
    #[error("cannot build a vocabulary from zero sentences")]
    EmptyCorpus,
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdRange { id: usize, size: usize },
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("unknown diacritic mode `{0}` (expected `preserve` or `strip`)")]
    UnknownMode(String),
    #[error("vocabulary file line {line}: {message}")]
    VocabFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiacriticMode {
    Preserve,
    Strip,
}

impl DiacriticMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiacriticMode::Preserve => "preserve",
            DiacriticMode::Strip => "strip",
        }
    }

    /// Applies the mode's transform to already normalised text.
    pub fn apply(self, text: &str) -> String {
        match self {
            DiacriticMode::Preserve => text.to_owned(),
            DiacriticMode::Strip => strip_diacritics(text),
        }
    }
}

impl fmt::Display for DiacriticMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DiacriticMode {
    type Err = TokenizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "preserve" => Ok(DiacriticMode::Preserve),
            "strip" => Ok(DiacriticMode::Strip),
            other => Err(TokenizerError::UnknownMode(other.to_owned())),
        }
    }
}

/// Canonical composition (NFC).
pub fn normalize(text: &str) -> String {
    text.nfc().collect()
}

fn is_nonspacing_mark(c: char) -> bool {
    c.general_category() == GeneralCategory::NonspacingMark
}

fn is_punctuation(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Decomposes, drops every nonspacing mark, and recomposes.
pub fn strip_diacritics(text: &str) -> String {
    text.nfd().filter(|&c| !is_nonspacing_mark(c)).nfc().collect()
}

/// Full Unicode case folding followed by NFC.
pub fn fold_case(text: &str) -> String {
    normalize(&caseless::default_case_fold_str(text))
}

/// Splits one whitespace-delimited chunk into leading punctuation, the core,
/// and trailing punctuation. A punctuation character keeps any marks that
/// follow it, so accent removal never moves a token boundary.
fn split_punctuation(chunk: &str, out: &mut Vec<String>) {
    // Clusters of (base char + following nonspacing marks).
    let mut clusters: Vec<&str> = Vec::new();
    let mut start = None;
    for (i, c) in chunk.char_indices() {
        if is_nonspacing_mark(c) && start.is_some() {
            continue;
        }
        if let Some(s) = start {
            clusters.push(&chunk[s..i]);
        }
        start = Some(i);
    }
    if let Some(s) = start {
        clusters.push(&chunk[s..]);
    }
    let is_punct = |cluster: &str| cluster.chars().next().is_some_and(is_punctuation);

    let lead = clusters.iter().take_while(|c| is_punct(c)).count();
    if lead == clusters.len() {
        out.extend(clusters.iter().map(|c| c.to_string()));
        return;
    }
    let trail = clusters.iter().rev().take_while(|c| is_punct(c)).count();
    out.extend(clusters[..lead].iter().map(|c| c.to_string()));
    out.push(clusters[lead..clusters.len() - trail].concat());
    out.extend(clusters[clusters.len() - trail..].iter().map(|c| c.to_string()));
}

/// Case-folds, normalises, splits on whitespace and peels leading/trailing
/// punctuation into separate tokens, then applies the diacritic mode to each
/// token. Tokens emptied by stripping (a bare combining mark) are dropped.
pub fn tokenize(text: &str, mode: DiacriticMode) -> Result<Vec<String>, TokenizerError> {
    let folded = fold_case(text);
    let mut raw = Vec::new();
    for chunk in folded.split_whitespace() {
        split_punctuation(chunk, &mut raw);
    }
    let tokens: Vec<String> = raw
        .into_iter()
        .map(|t| mode.apply(&t))
        .filter(|t| !t.is_empty())
        .collect();
    if tokens.is_empty() {
        return Err(TokenizerError::EmptyInput);
    }
    Ok(tokens)
}

/// Token ids wrapped in `SOS ... EOS`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedSentence {
    ids: Vec<usize>,
}

impl EncodedSentence {
    /// Validates the framing and that no PAD occurs inside.
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self, TokenizerError> {
        if let Some(&id) = ids.iter().find(|&&id| id >= vocab_size) {
            return Err(TokenizerError::IdRange { id, size: vocab_size });
        }
        if ids.len() < 2
            || ids[0] != SOS
            || ids[ids.len() - 1] != EOS
            || ids.contains(&PAD)
        {
            return Err(TokenizerError::EmptyInput);
        }
        Ok(Self { ids })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Content ids without the SOS/EOS frame.
    pub fn content(&self) -> &[usize] {
        &self.ids[1..self.ids.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    mode: DiacriticMode,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(mode: DiacriticMode, tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { mode, tokens, index }
    }

    /// A vocabulary holding only the four special tokens.
    pub fn specials_only(mode: DiacriticMode) -> Self {
        Self::from_tokens(mode, SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect())
    }

    /// Builds from already tokenized sentences. Tokens with frequency
    /// `>= min_count` follow the specials, ordered by descending frequency,
    /// then by code point.
    pub fn from_token_lists<'a, I>(
        mode: DiacriticMode,
        sentences: I,
        min_count: usize,
    ) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if min_count == 0 {
            return Err(TokenizerError::InvalidMinCount);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut seen_any = false;
        for sentence in sentences {
            seen_any = true;
            for token in sentence {
                *counts.entry(token.as_str()).or_default() += 1;
            }
        }
        if !seen_any {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !SPECIAL_TOKENS.contains(t))
            .collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().map(|(t, _)| t.to_owned()));
        Ok(Self::from_tokens(mode, tokens))
    }

    pub fn mode(&self) -> DiacriticMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "#mode={}", self.mode)?;
        for token in &self.tokens {
            writeln!(w, "{token}")?;
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("tokens are valid UTF-8")
    }

    /// FNV-1a 64 over the serialised vocabulary file.
    pub fn content_hash(&self) -> u64 {
        crate::training::checkpoint::fnv1a64(self.to_file_string().as_bytes())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, TokenizerError> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.ok_or(TokenizerError::VocabFormat {
            line: 1,
            message: "missing `#mode=` header".into(),
        })?;
        let mode = header
            .strip_prefix("#mode=")
            .ok_or(TokenizerError::VocabFormat {
                line: 1,
                message: format!("expected `#mode=preserve|strip`, found `{header}`"),
            })?
            .parse::<DiacriticMode>()?;
        let mut tokens = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line_no = i + 2;
            if i < SPECIAL_TOKENS.len() && line != SPECIAL_TOKENS[i] {
                return Err(TokenizerError::VocabFormat {
                    line: line_no,
                    message: format!("expected `{}`, found `{line}`", SPECIAL_TOKENS[i]),
                });
            }
            if line.is_empty() {
                return Err(TokenizerError::VocabFormat {
                    line: line_no,
                    message: "empty token".into(),
                });
            }
            tokens.push(line);
        }
        if tokens.len() < SPECIAL_TOKENS.len() {
            return Err(TokenizerError::VocabFormat {
                line: tokens.len() + 2,
                message: "vocabulary is missing special tokens".into(),
            });
        }
        let vocab = Self::from_tokens(mode, tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(TokenizerError::VocabFormat {
                line: 0,
                message: "duplicate tokens".into(),
            });
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TokenizerError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, TokenizerError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

/// Tokenizes every sentence with `mode` and builds a vocabulary.
pub fn build_vocab<S: AsRef<str>>(
    sentences: &[S],
    mode: DiacriticMode,
    min_count: usize,
) -> Result<Vocabulary, TokenizerError> {
    if sentences.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let tokenized = sentences
        .iter()
        .map(|s| tokenize(s.as_ref(), mode))
        .collect::<Result<Vec<_>, _>>()?;
    Vocabulary::from_token_lists(mode, tokenized.iter().map(Vec::as_slice), min_count)
}

/// Wraps tokens in SOS/EOS; unknown tokens map to UNK.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Result<EncodedSentence, TokenizerError> {
    if tokens.is_empty() {
        return Err(TokenizerError::EmptyInput);
    }
    let mut ids = Vec::with_capacity(tokens.len() + 2);
    ids.push(SOS);
    ids.extend(tokens.iter().map(|t| vocab.id(t.as_ref()).unwrap_or(UNK)));
    ids.push(EOS);
    Ok(EncodedSentence { ids })
}

/// Maps ids back to token text, dropping PAD/SOS/EOS.
pub fn decode(ids: &[usize], vocab: &Vocabulary) -> Result<Vec<String>, TokenizerError> {
    ids.iter()
        .filter(|&&id| !matches!(id, PAD | SOS | EOS))
        .map(|&id| {
            vocab
                .token(id)
                .map(str::to_owned)
                .ok_or(TokenizerError::IdRange { id, size: vocab.len() })
        })
        .collect()
}

/// Tokenizes and encodes one sentence in the vocabulary's own mode.
pub fn encode_text(text: &str, vocab: &Vocabulary) -> Result<EncodedSentence, TokenizerError> {
    encode(&tokenize(text, vocab.mode())?, vocab)
}
