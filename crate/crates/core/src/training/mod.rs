//! Mini-batch teacher-forced training with Adam and global-norm clipping.

mod adam;
pub mod checkpoint;
pub mod config;

use std::time::Instant;

use log::{debug, info};
use serde::Serialize;
use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use config::{parse_config, RunConfig};

use crate::corpus::ParallelCorpus;
use crate::model::{batch_loss, greedy_decode, Feeding, ModelConfig, ModelError, ModelParameters};
use crate::numerics::{NumericsError, Tape};
use crate::rng::Rng;
use crate::tokenizer::{decode, encode_text, EncodedSentence, TokenizerError, Vocabulary};

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub teacher_forcing_ratio: f64,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Stop after this many epochs without a new best validation loss.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            teacher_forcing_ratio: 1.0,
            grad_clip_norm: 5.0,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::InvalidConfig(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing_ratio) {
            return bad("teacher_forcing_ratio must be in [0, 1]");
        }
        if !(self.grad_clip_norm >= 0.0) {
            return bad("grad_clip_norm must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must be in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

/// A corpus encoded against a vocabulary pair.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub pairs: Vec<(EncodedSentence, EncodedSentence)>,
}

impl EncodedCorpus {
    pub fn new(corpus: &ParallelCorpus, src: &Vocabulary, tgt: &Vocabulary) -> Result<Self, TrainingError> {
        let pairs = corpus
            .pairs()
            .iter()
            .map(|p| Ok((encode_text(&p.source, src)?, encode_text(&p.target, tgt)?)))
            .collect::<Result<Vec<_>, TokenizerError>>()?;
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn target_tokens(&self, idx: &[usize]) -> usize {
        idx.iter().map(|&i| self.pairs[i].1.len() - 1).sum()
    }

    /// Token-weighted mean teacher-forced loss, evaluated in batches.
    pub fn mean_loss(&self, model: &ModelParameters, batch_size: usize) -> Result<f64, TrainingError> {
        let order: Vec<usize> = (0..self.len()).collect();
        let mut total = 0.0;
        for chunk in order.chunks(batch_size.max(1)) {
            let batch: Vec<_> = chunk.iter().map(|&i| (&self.pairs[i].0, &self.pairs[i].1)).collect();
            let loss = crate::model::forward_loss(model, &batch)?;
            total += loss * self.target_tokens(chunk) as f64;
        }
        Ok(total / self.target_tokens(&order) as f64)
    }
}

/// Shuffles, groups by source length, cuts batches, then shuffles batch order.
fn make_batches(data: &EncodedCorpus, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    order.sort_by_key(|&i| data.pairs[i].0.len());
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    rng.shuffle(&mut batches);
    batches
}

/// Model, optimizer state and per-epoch history after training.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ModelParameters,
    pub optimizer: Adam,
    pub report: TrainReport,
}

/// Trains `model` in place on already-encoded data.
pub fn train_model(
    model: ModelParameters,
    optimizer: Adam,
    train: &EncodedCorpus,
    val: &EncodedCorpus,
    config: &TrainConfig,
) -> Result<Trained, TrainingError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainingError::EmptyCorpus("training"));
    }
    if val.is_empty() {
        return Err(TrainingError::EmptyCorpus("validation"));
    }
    let mut model = model;
    let mut optimizer = optimizer;
    let mut rng = Rng::new(config.seed);
    let mut report = TrainReport::default();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut weighted = 0.0;
        for batch_idx in make_batches(train, config.batch_size, &mut rng) {
            let batch: Vec<_> = batch_idx.iter().map(|&i| (&train.pairs[i].0, &train.pairs[i].1)).collect();
            let mut tape = Tape::new();
            let feeding = if config.teacher_forcing_ratio >= 1.0 {
                Feeding::Teacher
            } else {
                Feeding::Scheduled {
                    ratio: config.teacher_forcing_ratio,
                    rng: &mut rng,
                }
            };
            let loss = batch_loss(&mut tape, &model, &batch, feeding)?;
            let value = tape.value(loss).item();
            tape.backward(loss, model.params_mut())?;
            let norm = optimizer.step(model.params_mut(), config)?;
            debug!("step {} loss {value:.6} grad-norm {norm:.4}", optimizer.step_count());
            weighted += value * train.target_tokens(&batch_idx) as f64;
        }
        let train_loss = weighted / train.target_tokens(&(0..train.len()).collect::<Vec<_>>()) as f64;
        let val_loss = val.mean_loss(&model, config.batch_size)?;
        let stats = EpochStats {
            train_loss,
            val_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {} train {:.5} val {:.5} ({:.2}s)",
            epoch + 1,
            stats.train_loss,
            stats.val_loss,
            stats.wall_seconds
        );
        report.epochs.push(stats);
        if val_loss < best {
            best = val_loss;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if config.patience.is_some_and(|p| since_best >= p) {
            info!("early stop after epoch {}", epoch + 1);
            break;
        }
    }
    Ok(Trained { model, optimizer, report })
}

/// Encodes both corpora, initialises the model from `config.seed`, trains,
/// and packages the result as a checkpoint.
pub fn train(
    train_corpus: &ParallelCorpus,
    val_corpus: &ParallelCorpus,
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<(Checkpoint, TrainReport), TrainingError> {
    if src_vocab.mode() != tgt_vocab.mode() {
        return Err(TrainingError::ConfigMismatch(format!(
            "source vocabulary is {} but target vocabulary is {}",
            src_vocab.mode(),
            tgt_vocab.mode()
        )));
    }
    if model_config.src_vocab_size != src_vocab.len() || model_config.tgt_vocab_size != tgt_vocab.len() {
        return Err(TrainingError::ConfigMismatch(format!(
            "model expects vocabularies of {}/{} tokens, got {}/{}",
            model_config.src_vocab_size,
            model_config.tgt_vocab_size,
            src_vocab.len(),
            tgt_vocab.len()
        )));
    }
    config.validate()?;
    if train_corpus.is_empty() {
        return Err(TrainingError::EmptyCorpus("training"));
    }
    if val_corpus.is_empty() {
        return Err(TrainingError::EmptyCorpus("validation"));
    }
    let train_data = EncodedCorpus::new(train_corpus, src_vocab, tgt_vocab)?;
    let val_data = EncodedCorpus::new(val_corpus, src_vocab, tgt_vocab)?;
    let model = ModelParameters::init(model_config, config.seed)?;
    let optimizer = Adam::new(model.params());
    let trained = train_model(model, optimizer, &train_data, &val_data, config)?;
    let ckpt = Checkpoint::new(&trained.model, &trained.optimizer, src_vocab, tgt_vocab);
    Ok((ckpt, trained.report))
}

/// A model with its vocabularies, ready for greedy decoding.
#[derive(Debug, Clone)]
pub struct Translator {
    pub model: ModelParameters,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
}

impl Translator {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, TrainingError> {
        Ok(Self {
            model: ckpt.model()?,
            src_vocab: ckpt.src_vocab.clone(),
            tgt_vocab: ckpt.tgt_vocab.clone(),
        })
    }

    /// Space-joined target tokens; blank input gives an empty string.
    pub fn translate(&self, text: &str, max_len: usize) -> Result<String, TrainingError> {
        if text.trim().is_empty() {
            return Ok(String::new());
        }
        let src = encode_text(text, &self.src_vocab)?;
        let ids = greedy_decode(&src, &self.model, max_len)?;
        Ok(decode(&ids, &self.tgt_vocab)?.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{build_vocab, DiacriticMode};

    fn toy() -> (ParallelCorpus, Vocabulary, Vocabulary) {
        let corpus = ParallelCorpus::from_pairs([
            ("yí bo wa", "prends et viens"),
            ("yi bo wa", "va et viens"),
            ("hɔ́n", "porte"),
            ("hɔn", "fuire"),
        ])
        .unwrap();
        let src = build_vocab(&corpus.sources().collect::<Vec<_>>(), DiacriticMode::Preserve, 1).unwrap();
        let tgt = build_vocab(&corpus.targets().collect::<Vec<_>>(), DiacriticMode::Preserve, 1).unwrap();
        (corpus, src, tgt)
    }

    fn small(src: &Vocabulary, tgt: &Vocabulary) -> ModelConfig {
        ModelConfig::new(src.len(), tgt.len()).with_dims(8, 8, 4)
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let (c, s, t) = toy();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (ckpt, report) = train(&c, &c, &s, &t, small(&s, &t), &cfg).unwrap();
        assert!(report.epochs.is_empty());
        let init = ModelParameters::init(small(&s, &t), cfg.seed).unwrap();
        let expected = Checkpoint::new(&init, &Adam::new(init.params()), &s, &t);
        assert_eq!(ckpt, expected);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let (c, s, t) = toy();
        let cfg = TrainConfig { epochs: 15, batch_size: 2, learning_rate: 0.02, seed: 4, ..TrainConfig::default() };
        let (a, ra) = train(&c, &c, &s, &t, small(&s, &t), &cfg).unwrap();
        let (b, rb) = train(&c, &c, &s, &t, small(&s, &t), &cfg).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        let losses = |r: &TrainReport| r.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect::<Vec<_>>();
        assert_eq!(losses(&ra), losses(&rb));
        assert!(ra.epochs.iter().all(|e| e.train_loss.is_finite() && e.val_loss.is_finite()));
        assert!(ra.epochs.last().unwrap().train_loss < ra.epochs[0].train_loss);
        assert_eq!(a.step, 15 * 2);
    }

    #[test]
    fn scheduled_sampling_runs() {
        let (c, s, t) = toy();
        let cfg = TrainConfig { epochs: 2, batch_size: 4, teacher_forcing_ratio: 0.5, ..TrainConfig::default() };
        let (_, r) = train(&c, &c, &s, &t, small(&s, &t), &cfg).unwrap();
        assert_eq!(r.epochs.len(), 2);
    }

    #[test]
    fn patience_stops_early() {
        let (c, s, t) = toy();
        let cfg = TrainConfig { epochs: 5, patience: Some(0), ..TrainConfig::default() };
        let (_, r) = train(&c, &c, &s, &t, small(&s, &t), &cfg).unwrap();
        assert_eq!(r.epochs.len(), 1);
    }

    #[test]
    fn mismatches_are_rejected() {
        let (c, s, t) = toy();
        let strip = build_vocab(&c.targets().collect::<Vec<_>>(), DiacriticMode::Strip, 1).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&c, &c, &s, &strip, small(&s, &strip), &cfg),
            Err(TrainingError::ConfigMismatch(_))
        ));
        assert!(matches!(
            train(&c, &c, &s, &t, ModelConfig::new(99, t.len()), &cfg),
            Err(TrainingError::ConfigMismatch(_))
        ));
        assert!(matches!(
            train(&c, &ParallelCorpus::default(), &s, &t, small(&s, &t), &cfg),
            Err(TrainingError::EmptyCorpus("validation"))
        ));
        let bad = TrainConfig { teacher_forcing_ratio: 1.5, ..TrainConfig::default() };
        assert!(matches!(train(&c, &c, &s, &t, small(&s, &t), &bad), Err(TrainingError::InvalidConfig(_))));
    }
}
