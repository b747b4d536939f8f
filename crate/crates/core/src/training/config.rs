//! Flat `key = value` training configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! train_corpus = data/train.tsv
//! val_corpus = data/val.tsv
//! diacritics = preserve
//! epochs = 20
//! ```
//!
//! Relative corpus paths resolve against the directory holding the config
//! file. Unknown keys and repeated keys are errors.

use std::path::{Path, PathBuf};

use super::{TrainConfig, TrainingError};
use crate::tokenizer::DiacriticMode;

/// Everything the `train` command needs besides the output path.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_corpus: PathBuf,
    pub val_corpus: PathBuf,
    pub diacritics: DiacriticMode,
    pub min_count: usize,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub num_layers: usize,
    pub max_decode_len: usize,
    pub train: TrainConfig,
}

pub const KEYS: &[&str] = &[
    "train_corpus",
    "val_corpus",
    "diacritics",
    "min_count",
    "emb_dim",
    "hidden_dim",
    "attn_dim",
    "num_layers",
    "max_decode_len",
    "learning_rate",
    "batch_size",
    "epochs",
    "teacher_forcing_ratio",
    "grad_clip_norm",
    "seed",
    "beta1",
    "beta2",
    "adam_eps",
    "patience",
];

pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, TrainingError> {
    let mut train_corpus = None;
    let mut val_corpus = None;
    let mut cfg = RunConfig {
        train_corpus: PathBuf::new(),
        val_corpus: PathBuf::new(),
        diacritics: DiacriticMode::Preserve,
        min_count: 1,
        emb_dim: 512,
        hidden_dim: 128,
        attn_dim: 30,
        num_layers: 1,
        max_decode_len: 112,
        train: TrainConfig::default(),
    };
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| TrainingError::ConfigSyntax { line: line_no, message };
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err("expected `key = value`".into()))?;
        if !KEYS.contains(&key) {
            return Err(err(format!("unknown key `{key}`")));
        }
        if !seen.insert(key.to_owned()) {
            return Err(err(format!("duplicate key `{key}`")));
        }
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("invalid value `{v}`"))
        }
        let res: Result<(), String> = (|| {
            match key {
                "train_corpus" => train_corpus = Some(base_dir.join(value)),
                "val_corpus" => val_corpus = Some(base_dir.join(value)),
                "diacritics" => cfg.diacritics = value.parse().map_err(|e| format!("{e}"))?,
                "min_count" => cfg.min_count = num(value)?,
                "emb_dim" => cfg.emb_dim = num(value)?,
                "hidden_dim" => cfg.hidden_dim = num(value)?,
                "attn_dim" => cfg.attn_dim = num(value)?,
                "num_layers" => cfg.num_layers = num(value)?,
                "max_decode_len" => cfg.max_decode_len = num(value)?,
                "learning_rate" => cfg.train.learning_rate = num(value)?,
                "batch_size" => cfg.train.batch_size = num(value)?,
                "epochs" => cfg.train.epochs = num(value)?,
                "teacher_forcing_ratio" => cfg.train.teacher_forcing_ratio = num(value)?,
                "grad_clip_norm" => cfg.train.grad_clip_norm = num(value)?,
                "seed" => cfg.train.seed = num(value)?,
                "beta1" => cfg.train.beta1 = num(value)?,
                "beta2" => cfg.train.beta2 = num(value)?,
                "adam_eps" => cfg.train.adam_eps = num(value)?,
                "patience" => cfg.train.patience = Some(num(value)?),
                _ => unreachable!("checked against KEYS"),
            }
            Ok(())
        })();
        res.map_err(err)?;
    }
    let missing = |k: &str| TrainingError::ConfigSyntax {
        line: 0,
        message: format!("missing required key `{k}`"),
    };
    cfg.train_corpus = train_corpus.ok_or_else(|| missing("train_corpus"))?;
    cfg.val_corpus = val_corpus.ok_or_else(|| missing("val_corpus"))?;
    if cfg.min_count == 0 {
        return Err(TrainingError::InvalidConfig("min_count must be at least 1".into()));
    }
    cfg.train.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, TrainingError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_keys() {
        let text = "# toy\ntrain_corpus = a.tsv\nval_corpus=b.tsv\n\ndiacritics = strip\nepochs = 3\nlearning_rate = 0.01\npatience = 2\nhidden_dim = 16\n";
        let cfg = parse_config(text, Path::new("/data")).unwrap();
        assert_eq!(cfg.train_corpus, PathBuf::from("/data/a.tsv"));
        assert_eq!(cfg.diacritics, DiacriticMode::Strip);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.train.patience, Some(2));
        assert_eq!(cfg.hidden_dim, 16);
        assert_eq!(cfg.emb_dim, 512);
        assert_eq!(cfg.train.batch_size, 32);
    }

    #[test]
    fn rejects_bad_input() {
        let base = Path::new(".");
        let line_of = |text: &str| match parse_config(text, base) {
            Err(TrainingError::ConfigSyntax { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(line_of("train_corpus = a\nwarmup = 3\n"), 2);
        assert_eq!(line_of("epochs\n"), 1);
        assert_eq!(line_of("epochs = many\n"), 1);
        assert_eq!(line_of("epochs = 1\nepochs = 2\n"), 2);
        assert_eq!(line_of("val_corpus = b\n"), 0);
        assert!(matches!(
            parse_config("train_corpus=a\nval_corpus=b\nbatch_size=0\n", base),
            Err(TrainingError::InvalidConfig(_))
        ));
    }
}
