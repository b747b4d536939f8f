//! Parallel corpora: loading, length statistics and seeded splitting.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::tokenizer::normalize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("corpus is not valid UTF-8: {0}")]
    Encoding(#[from] std::str::Utf8Error),
    #[error("word count must be at least 1")]
    Domain,
    #[error("corpus has no sentence pairs")]
    EmptyCorpus,
    #[error("split sizes {requested} exceed corpus size {available}")]
    Size { requested: usize, available: usize },
    #[error("invalid provenance: {0}")]
    Provenance(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    /// Position in the originating file (after skipping blank lines).
    pub id: usize,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub name: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParallelCorpus {
    pairs: Vec<SentencePair>,
    provenance: Option<Vec<Provenance>>,
}

impl ParallelCorpus {
    /// Builds a corpus from raw text pairs, normalising both sides and
    /// assigning ids `0..n`.
    pub fn from_pairs<S, T>(pairs: impl IntoIterator<Item = (S, T)>) -> Result<Self, CorpusError>
    where
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut out = Vec::new();
        for (i, (s, t)) in pairs.into_iter().enumerate() {
            let (source, target) = (normalize(s.as_ref().trim()), normalize(t.as_ref().trim()));
            if source.is_empty() || target.is_empty() {
                return Err(CorpusError::Format {
                    line: i + 1,
                    message: "empty side".into(),
                });
            }
            out.push(SentencePair { id: i, source, target });
        }
        Ok(Self { pairs: out, provenance: None })
    }

    /// Parses `source<TAB>target` lines. A leading BOM is dropped and blank
    /// lines are skipped.
    pub fn parse(bytes: &[u8]) -> Result<Self, CorpusError> {
        let text = std::str::from_utf8(bytes)?;
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (source, target) = match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(t), None) => (s.trim(), t.trim()),
                _ => {
                    return Err(CorpusError::Format {
                        line: line_no,
                        message: format!("expected exactly one tab, found {}", line.matches('\t').count()),
                    })
                }
            };
            if source.is_empty() || target.is_empty() {
                return Err(CorpusError::Format {
                    line: line_no,
                    message: "empty side".into(),
                });
            }
            pairs.push(SentencePair {
                id: pairs.len(),
                source: normalize(source),
                target: normalize(target),
            });
        }
        Ok(Self { pairs, provenance: None })
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.source.as_str())
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.target.as_str())
    }

    pub fn provenance(&self) -> Option<&[Provenance]> {
        self.provenance.as_deref()
    }

    /// Attaches source-composition metadata; fractions must sum to 1 within 1e-9.
    pub fn with_provenance(mut self, provenance: Vec<Provenance>) -> Result<Self, CorpusError> {
        if let Some(p) = provenance.iter().find(|p| !(0.0..=1.0).contains(&p.fraction)) {
            return Err(CorpusError::Provenance(format!("{} has fraction {}", p.name, p.fraction)));
        }
        let total: f64 = provenance.iter().map(|p| p.fraction).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Provenance(format!("fractions sum to {total}")));
        }
        self.provenance = Some(provenance);
        Ok(self)
    }

    /// Serialises back to the TSV format.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            let _ = writeln!(out, "{}\t{}", p.source, p.target);
        }
        out
    }
}

pub fn load_corpus(path: &Path) -> Result<ParallelCorpus, CorpusError> {
    ParallelCorpus::parse(&std::fs::read(path)?)
}

/// Number of maximal non-whitespace runs.
pub fn word_count(sentence: &str) -> usize {
    sentence.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LengthBucket {
    VeryShort,
    Short,
    Medium,
    Long,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 4] = [
        LengthBucket::VeryShort,
        LengthBucket::Short,
        LengthBucket::Medium,
        LengthBucket::Long,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LengthBucket::VeryShort => "Very Short sentences (1-5 words)",
            LengthBucket::Short => "Short sentences (6-10 words)",
            LengthBucket::Medium => "Medium sentences (11-30 words)",
            LengthBucket::Long => "Long sentences (31+ words)",
        }
    }
}

pub fn bucket(count: usize) -> Result<LengthBucket, CorpusError> {
    match count {
        0 => Err(CorpusError::Domain),
        1..=5 => Ok(LengthBucket::VeryShort),
        6..=10 => Ok(LengthBucket::Short),
        11..=30 => Ok(LengthBucket::Medium),
        _ => Ok(LengthBucket::Long),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pair_count: usize,
    pub bucket_counts_source: BTreeMap<LengthBucket, usize>,
    pub bucket_counts_target: BTreeMap<LengthBucket, usize>,
    pub max_len_source: usize,
    pub max_len_target: usize,
}

impl CorpusStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialise")
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<36}{:>10}{:>10}", "#", "Source", "Target")?;
        for b in LengthBucket::ALL {
            writeln!(
                f,
                "{:<36}{:>10}{:>10}",
                b.label(),
                self.bucket_counts_source[&b],
                self.bucket_counts_target[&b]
            )?;
        }
        writeln!(f, "{:<36}{:>10}{:>10}", "Max words", self.max_len_source, self.max_len_target)?;
        write!(f, "{:<36}{:>10}", "Pairs", self.pair_count)
    }
}

pub fn analyze(corpus: &ParallelCorpus) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let empty: BTreeMap<LengthBucket, usize> = LengthBucket::ALL.iter().map(|&b| (b, 0)).collect();
    let mut stats = CorpusStats {
        pair_count: corpus.len(),
        bucket_counts_source: empty.clone(),
        bucket_counts_target: empty,
        max_len_source: 0,
        max_len_target: 0,
    };
    for pair in corpus.pairs() {
        let (ls, lt) = (word_count(&pair.source), word_count(&pair.target));
        *stats.bucket_counts_source.get_mut(&bucket(ls)?).unwrap() += 1;
        *stats.bucket_counts_target.get_mut(&bucket(lt)?).unwrap() += 1;
        stats.max_len_source = stats.max_len_source.max(ls);
        stats.max_len_target = stats.max_len_target.max(lt);
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_n: usize,
    pub val_n: usize,
    pub test_n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: ParallelCorpus,
    pub val: ParallelCorpus,
    pub test: ParallelCorpus,
}

/// Seeded Fisher-Yates shuffle of pair positions, then consecutive slices of
/// the requested sizes. Pairs keep their original ids so the parts can be
/// checked for disjointness; provenance is carried over.
pub fn split(corpus: &ParallelCorpus, spec: &SplitSpec) -> Result<CorpusSplit, CorpusError> {
    let requested = spec.train_n + spec.val_n + spec.test_n;
    if requested > corpus.len() {
        return Err(CorpusError::Size {
            requested,
            available: corpus.len(),
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    Rng::new(spec.seed).shuffle(&mut order);
    let take = |range: std::ops::Range<usize>| ParallelCorpus {
        pairs: order[range].iter().map(|&i| corpus.pairs[i].clone()).collect(),
        provenance: corpus.provenance.clone(),
    };
    let a = spec.train_n;
    let b = a + spec.val_n;
    Ok(CorpusSplit {
        train: take(0..a),
        val: take(a..b),
        test: take(b..requested),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn parse_table_pairs() {
        let c = ParallelCorpus::parse("yí bo wa\tprends et viens\nhɔn\tfuire\n".as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.pairs()[0].id, 0);
        assert_eq!(c.pairs()[1].id, 1);
        assert_eq!(c.pairs()[1].source, "hɔn");
    }

    #[test]
    fn parse_edge_cases() {
        assert!(ParallelCorpus::parse(b"").unwrap().is_empty());
        let c = ParallelCorpus::parse("\u{feff}a\tb\r\n\n  \nc\td\n".as_bytes()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.pairs()[0].source, "a");
        assert_eq!(c.pairs()[1].target, "d");
        // Decomposed input is stored composed.
        let c = ParallelCorpus::parse("e\u{301}\tx\n".as_bytes()).unwrap();
        assert_eq!(c.pairs()[0].source, "\u{e9}");
    }

    #[test]
    fn parse_errors_report_line() {
        let err = ParallelCorpus::parse(b"a\tb\nc\td\nabc def\n").unwrap_err();
        assert!(matches!(err, CorpusError::Format { line: 3, .. }), "{err}");
        assert!(matches!(
            ParallelCorpus::parse(b"a\tb\tc\n").unwrap_err(),
            CorpusError::Format { line: 1, .. }
        ));
        assert!(matches!(
            ParallelCorpus::parse(b"a\t \n").unwrap_err(),
            CorpusError::Format { line: 1, .. }
        ));
        assert!(matches!(ParallelCorpus::parse(&[0xff, 0xfe, b'\t']).unwrap_err(), CorpusError::Encoding(_)));
    }

    #[test]
    fn word_counts() {
        assert_eq!(word_count("yí bo wa"), 3);
        assert_eq!(word_count("a"), 1);
        assert_eq!(word_count("  a   b  "), 2);
    }

    #[test]
    fn bucket_boundaries() {
        assert_eq!(bucket(1).unwrap(), LengthBucket::VeryShort);
        assert_eq!(bucket(5).unwrap(), LengthBucket::VeryShort);
        assert_eq!(bucket(6).unwrap(), LengthBucket::Short);
        assert_eq!(bucket(10).unwrap(), LengthBucket::Short);
        assert_eq!(bucket(11).unwrap(), LengthBucket::Medium);
        assert_eq!(bucket(30).unwrap(), LengthBucket::Medium);
        assert_eq!(bucket(31).unwrap(), LengthBucket::Long);
        assert!(matches!(bucket(0), Err(CorpusError::Domain)));
    }

    #[test]
    fn analyze_small() {
        let c = ParallelCorpus::parse(b"a b\tc\n").unwrap();
        let s = analyze(&c).unwrap();
        assert_eq!(s.bucket_counts_source[&LengthBucket::VeryShort], 1);
        assert_eq!(s.bucket_counts_target[&LengthBucket::VeryShort], 1);
        assert_eq!((s.max_len_source, s.max_len_target), (2, 1));
        assert!(matches!(analyze(&ParallelCorpus::default()), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn analyze_lengths_one_to_twelve() {
        let pairs: Vec<(String, String)> = (1..=12).map(|n| (vec!["w"; n].join(" "), "t".to_string())).collect();
        let s = analyze(&ParallelCorpus::from_pairs(pairs).unwrap()).unwrap();
        let got: Vec<usize> = LengthBucket::ALL.iter().map(|b| s.bucket_counts_source[b]).collect();
        assert_eq!(got, vec![5, 5, 2, 0]);
        assert_eq!(s.max_len_source, 12);
        let table = s.to_string();
        assert!(table.contains("Very Short sentences (1-5 words)"));
        let json: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert_eq!(json["bucket_counts_source"]["Short"], 5);
    }

    #[test]
    fn provenance_must_sum_to_one() {
        let c = ParallelCorpus::from_pairs([("a", "b")]).unwrap();
        let ok = vec![
            Provenance { name: "JW300".into(), fraction: 0.246 },
            Provenance { name: "BeninLanguages".into(), fraction: 0.754 },
        ];
        assert!(c.clone().with_provenance(ok).is_ok());
        let bad = vec![Provenance { name: "x".into(), fraction: 0.5 }];
        assert!(c.with_provenance(bad).is_err());
    }

    fn ten() -> ParallelCorpus {
        ParallelCorpus::from_pairs((0..10).map(|i| (format!("s{i}"), format!("t{i}")))).unwrap()
    }

    #[test]
    fn split_partitions() {
        let s = split(&ten(), &SplitSpec { train_n: 8, val_n: 1, test_n: 1, seed: 3 }).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        let ids: HashSet<usize> = [&s.train, &s.val, &s.test]
            .iter()
            .flat_map(|c| c.pairs().iter().map(|p| p.id))
            .collect();
        assert_eq!(ids, (0..10).collect());
        assert!(matches!(
            split(&ten(), &SplitSpec { train_n: 9, val_n: 1, test_n: 1, seed: 3 }),
            Err(CorpusError::Size { requested: 11, available: 10 })
        ));
    }

    proptest! {
        #[test]
        fn split_is_deterministic_partition(
            (n, a, b, c) in (1usize..60).prop_flat_map(|n| (Just(n), 0..=n)).prop_flat_map(|(n, a)| (Just(n), Just(a), 0..=n - a)).prop_flat_map(|(n, a, b)| (Just(n), Just(a), Just(b), 0..=n - a - b)),
            seed: u64,
        ) {
            let corpus = ParallelCorpus::from_pairs((0..n).map(|i| (format!("s{i}"), format!("t{i}")))).unwrap();
            let spec = SplitSpec { train_n: a, val_n: b, test_n: c, seed };
            let first = split(&corpus, &spec).unwrap();
            prop_assert_eq!(&first, &split(&corpus, &spec).unwrap());
            prop_assert_eq!((first.train.len(), first.val.len(), first.test.len()), (a, b, c));
            let mut seen = HashSet::new();
            for part in [&first.train, &first.val, &first.test] {
                for p in part.pairs() {
                    prop_assert!(seen.insert(p.id));
                }
            }
        }

        #[test]
        fn histogram_conserves(lines in prop::collection::vec((1usize..40, 1usize..40), 1..30)) {
            let pairs: Vec<(String, String)> = lines.iter().map(|&(s, t)| (vec!["x"; s].join(" "), vec!["y"; t].join(" "))).collect();
            let stats = analyze(&ParallelCorpus::from_pairs(pairs).unwrap()).unwrap();
            prop_assert_eq!(stats.bucket_counts_source.values().sum::<usize>(), stats.pair_count);
            prop_assert_eq!(stats.bucket_counts_target.values().sum::<usize>(), stats.pair_count);
        }
    }
}
