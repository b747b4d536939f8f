//! Corpus BLEU, the sentence-level score convention, and GLEU.
//!
//! Corpus BLEU pools clipped n-gram counts over all sentences before
//! dividing, then takes `BP · exp(mean ln p_n)` with `BP = min(1, e^{1−r/c})`.
//! A zero precision at any order gives 0 unless add-one smoothing is on.
//! Orders longer than every hypothesis are skipped.
//!
//! Sentence scores are clipped unigram precision with no brevity penalty, so
//! `va viens` against `va et viens` scores 1.0.
//!
//! GLEU pools every 1..=N-gram of the corpus and reports
//! `min(matched / hyp_total, matched / ref_total)`.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{tokenize, DiacriticMode, TokenizerError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("hypothesis file has {hyps} lines but reference file has {refs}")]
    LineCountMismatch { hyps: usize, refs: usize },
    #[error("empty hypothesis")]
    EmptyHypothesis,
    #[error("max_n must be at least 1")]
    InvalidOrder,
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// `[0, 1]`
    Unit,
    /// `[0, 100]`
    Percent,
}

impl Scale {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Scale::Unit => x,
            Scale::Percent => 100.0 * x,
        }
    }

    pub fn max(self) -> f64 {
        self.apply(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    pub use_brevity_penalty: bool,
    pub scale: Scale,
    /// Add-one smoothing of orders `n >= 2`.
    pub smoothing: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_n: 4,
            use_brevity_penalty: true,
            scale: Scale::Percent,
            smoothing: false,
        }
    }
}

/// Every contiguous `n`-token window with its multiplicity.
pub fn ngram_multiset<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}

/// `(Σ_g min(count_hyp(g), count_ref(g)), hypothesis n-gram count)`.
pub fn clipped_precision<T: Eq + Hash>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let h = ngram_multiset(hyp, n);
    let r = ngram_multiset(reference, n);
    let matched = h
        .iter()
        .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched, hyp.len().saturating_sub(n - 1).min(hyp.len()))
}

/// Pooled per-order counts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct Pooled {
    matched: Vec<usize>,
    total: Vec<usize>,
    hyp_len: usize,
    ref_len: usize,
}

fn pool<T: Eq + Hash, H: AsRef<[T]>, R: AsRef<[T]>>(hyps: &[H], refs: &[R], max_n: usize) -> Result<Pooled, MetricsError> {
    if hyps.len() != refs.len() {
        return Err(MetricsError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if max_n == 0 {
        return Err(MetricsError::InvalidOrder);
    }
    let mut p = Pooled {
        matched: vec![0; max_n],
        total: vec![0; max_n],
        ..Pooled::default()
    };
    for (h, r) in hyps.iter().zip(refs) {
        let (h, r) = (h.as_ref(), r.as_ref());
        p.hyp_len += h.len();
        p.ref_len += r.len();
        for n in 1..=max_n {
            let (m, t) = clipped_precision(h, r, n);
            p.matched[n - 1] += m;
            p.total[n - 1] += t;
        }
    }
    Ok(p)
}

/// Corpus BLEU and the pooled per-order precisions.
pub fn bleu_corpus_detailed<T: Eq + Hash, H: AsRef<[T]>, R: AsRef<[T]>>(
    hyps: &[H],
    refs: &[R],
    config: &BleuConfig,
) -> Result<(f64, Vec<f64>), MetricsError> {
    let p = pool(hyps, refs, config.max_n)?;
    let precisions: Vec<f64> = (0..config.max_n)
        .map(|i| {
            let (m, t) = (p.matched[i] as f64, p.total[i] as f64);
            if config.smoothing && i > 0 {
                (m + 1.0) / (t + 1.0)
            } else if t == 0.0 {
                0.0
            } else {
                m / t
            }
        })
        .collect();
    // An order no hypothesis is long enough to have (0/0) is left out of the
    // mean rather than counted as a zero precision.
    let used: Vec<f64> = precisions
        .iter()
        .zip(&p.total)
        .filter(|&(_, &t)| t > 0)
        .map(|(&x, _)| x)
        .collect();
    if used.is_empty() || used.iter().any(|&x| x == 0.0) {
        return Ok((0.0, precisions));
    }
    let log_mean = used.iter().map(|x| x.ln()).sum::<f64>() / used.len() as f64;
    let bp = if config.use_brevity_penalty && p.hyp_len < p.ref_len {
        (1.0 - p.ref_len as f64 / p.hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok((config.scale.apply(bp * log_mean.exp()), precisions))
}

pub fn bleu_corpus<T: Eq + Hash, H: AsRef<[T]>, R: AsRef<[T]>>(
    hyps: &[H],
    refs: &[R],
    config: &BleuConfig,
) -> Result<f64, MetricsError> {
    bleu_corpus_detailed(hyps, refs, config).map(|(score, _)| score)
}

/// Clipped unigram precision on the unit scale, no brevity penalty.
pub fn bleu_sentence<T: Eq + Hash>(hyp: &[T], reference: &[T]) -> Result<f64, MetricsError> {
    if hyp.is_empty() {
        return Err(MetricsError::EmptyHypothesis);
    }
    let (matched, total) = clipped_precision(hyp, reference, 1);
    Ok(matched as f64 / total as f64)
}

/// Corpus GLEU over orders `1..=max_n`.
pub fn gleu<T: Eq + Hash, H: AsRef<[T]>, R: AsRef<[T]>>(
    hyps: &[H],
    refs: &[R],
    max_n: usize,
    scale: Scale,
) -> Result<f64, MetricsError> {
    let p = pool(hyps, refs, max_n)?;
    let matched: usize = p.matched.iter().sum();
    let hyp_total: usize = p.total.iter().sum();
    let ref_total: usize = refs
        .iter()
        .map(|r| (1..=max_n).map(|n| (r.as_ref().len() + 1).saturating_sub(n)).sum::<usize>())
        .sum();
    if hyp_total == 0 || ref_total == 0 {
        return Ok(0.0);
    }
    let precision = matched as f64 / hyp_total as f64;
    let recall = matched as f64 / ref_total as f64;
    Ok(scale.apply(precision.min(recall)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationMode {
    Corpus,
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub mode: EvaluationMode,
    pub scale: Scale,
    /// Corpus BLEU, or the mean sentence score in sentence mode.
    pub bleu: f64,
    /// Corpus GLEU, or the mean per-sentence GLEU in sentence mode.
    pub gleu: f64,
    pub n_sentences: usize,
    /// Pooled clipped precisions for orders 1..=4.
    pub precisions: Vec<f64>,
    /// Per-line scores in sentence mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence_scores: Option<Vec<f64>>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Which summary columns a rendered report shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    Gleu,
    #[default]
    Both,
}

impl EvaluationReport {
    /// Two-decimal table: per-line scores (sentence mode), then the summary.
    pub fn render(&self, metric: Metric) -> String {
        let mut out = String::new();
        if let Some(scores) = &self.sentence_scores {
            out += &format!("{:<6}{:>8}\n", "ID", "BLEU");
            for (i, s) in scores.iter().enumerate() {
                out += &format!("{i:<6}{s:>8.2}\n");
            }
            out.push('\n');
        }
        let (bleu, gleu) = (metric != Metric::Gleu, metric != Metric::Bleu);
        out += &format!("{:<12}", "Sentences");
        if bleu {
            out += &format!("{:>8}", "BLEU");
        }
        if gleu {
            out += &format!("{:>8}", "GLEU");
        }
        out += &format!("\n{:<12}", self.n_sentences);
        if bleu {
            out += &format!("{:>8.2}", self.bleu);
        }
        if gleu {
            out += &format!("{:>8.2}", self.gleu);
        }
        out.push('\n');
        out
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.render(Metric::Both).trim_end())
    }
}

fn tokenize_line(line: &str, mode: DiacriticMode) -> Result<Vec<String>, MetricsError> {
    if line.trim().is_empty() {
        return Ok(Vec::new());
    }
    Ok(tokenize(line, mode)?)
}

fn read_lines(path: &Path) -> Result<Vec<String>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    Ok(text.lines().map(str::to_owned).collect())
}

/// Scores line-aligned hypothesis/reference texts.
pub fn evaluate_lines<S: AsRef<str>>(
    hyps: &[S],
    refs: &[S],
    mode: EvaluationMode,
    diacritics: DiacriticMode,
) -> Result<EvaluationReport, MetricsError> {
    if hyps.len() != refs.len() {
        return Err(MetricsError::LineCountMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    let h = hyps
        .iter()
        .map(|l| tokenize_line(l.as_ref(), diacritics))
        .collect::<Result<Vec<_>, _>>()?;
    let r = refs
        .iter()
        .map(|l| tokenize_line(l.as_ref(), diacritics))
        .collect::<Result<Vec<_>, _>>()?;
    let (corpus_bleu, precisions) = bleu_corpus_detailed(&h, &r, &BleuConfig::default())?;
    match mode {
        EvaluationMode::Corpus => Ok(EvaluationReport {
            mode,
            scale: Scale::Percent,
            bleu: corpus_bleu,
            gleu: gleu(&h, &r, 4, Scale::Percent)?,
            n_sentences: h.len(),
            precisions,
            sentence_scores: None,
        }),
        EvaluationMode::Sentence => {
            let scores: Vec<f64> = h
                .iter()
                .zip(&r)
                .map(|(h, r)| bleu_sentence(h, r).unwrap_or(0.0))
                .collect();
            let per_gleu = h
                .iter()
                .zip(&r)
                .map(|(h, r)| gleu(std::slice::from_ref(h), std::slice::from_ref(r), 4, Scale::Unit))
                .collect::<Result<Vec<_>, _>>()?;
            let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
            Ok(EvaluationReport {
                mode,
                scale: Scale::Unit,
                bleu: mean(&scores),
                gleu: mean(&per_gleu),
                n_sentences: h.len(),
                precisions,
                sentence_scores: Some(scores),
            })
        }
    }
}

pub fn evaluate_files(
    hyp_path: &Path,
    ref_path: &Path,
    mode: EvaluationMode,
    diacritics: DiacriticMode,
) -> Result<EvaluationReport, MetricsError> {
    evaluate_lines(&read_lines(hyp_path)?, &read_lines(ref_path)?, mode, diacritics)
}
