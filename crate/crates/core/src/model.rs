//! GRU encoder-decoder with additive attention.
//!
//! Shapes follow row-vector convention: a batch of `B` states is `[B×H]` and
//! every projection is `x · W` with `W[in×out]`.
//!
//! ```text
//! z  = σ(x·W_z + h·U_z + b_z)
//! r  = σ(x·W_r + h·U_r + b_r)
//! h̃  = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//!
//! e_i     = tanh(s·W_a + enc_i·U_a) · v_a
//! α       = softmax(e) over unmasked source positions
//! context = Σ α_i enc_i
//! s'      = GRU([E_tgt[y] ; context], s)
//! logits  = s'·W_o + b_o
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{NumericsError, ParamId, ParamSet, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::tokenizer::{EncodedSentence, EOS, PAD, SOS};

pub const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdRange { id: usize, size: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("parameter `{0}` is missing or has the wrong shape")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub src_vocab_size: usize,
    pub tgt_vocab_size: usize,
    pub max_decode_len: usize,
    /// Stacked GRU layers in both encoder and decoder.
    pub num_layers: usize,
}

impl ModelConfig {
    /// 512-dim embeddings, 128-dim GRUs, 30-dim attention, one layer,
    /// decoding capped at 112 steps.
    pub fn new(src_vocab_size: usize, tgt_vocab_size: usize) -> Self {
        Self {
            emb_dim: 512,
            hidden_dim: 128,
            attn_dim: 30,
            src_vocab_size,
            tgt_vocab_size,
            max_decode_len: 112,
            num_layers: 1,
        }
    }

    pub fn with_dims(mut self, emb_dim: usize, hidden_dim: usize, attn_dim: usize) -> Self {
        self.emb_dim = emb_dim;
        self.hidden_dim = hidden_dim;
        self.attn_dim = attn_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("emb_dim", self.emb_dim),
            ("hidden_dim", self.hidden_dim),
            ("attn_dim", self.attn_dim),
            ("num_layers", self.num_layers),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be at least 1")));
        }
        // The four special tokens are always present.
        if self.src_vocab_size < 4 || self.tgt_vocab_size < 4 {
            return Err(ModelError::Config("vocabularies need the 4 special tokens".into()));
        }
        if self.max_decode_len < 2 {
            return Err(ModelError::Config("max_decode_len must be at least 2".into()));
        }
        Ok(())
    }
}

/// Parameter ids of one GRU layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruWeights {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    config: ModelConfig,
    params: ParamSet,
    e_src: ParamId,
    e_tgt: ParamId,
    encoder: Vec<GruWeights>,
    decoder: Vec<GruWeights>,
    w_a: ParamId,
    u_a: ParamId,
    v_a: ParamId,
    w_o: ParamId,
    b_o: ParamId,
}

fn layer_prefix(side: &str, layer: usize) -> String {
    if layer == 0 {
        side.to_owned()
    } else {
        format!("{side}.{layer}")
    }
}

/// `(name, shape, is_bias)` for every parameter, in canonical order.
pub fn parameter_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, bool)> {
    let (e, h, a) = (config.emb_dim, config.hidden_dim, config.attn_dim);
    let mut out = vec![
        ("E_src".to_owned(), vec![config.src_vocab_size, e], false),
        ("E_tgt".to_owned(), vec![config.tgt_vocab_size, e], false),
    ];
    let mut gru = |prefix: String, input: usize| {
        for gate in ["z", "r", "h"] {
            out.push((format!("{prefix}.W_{gate}"), vec![input, h], false));
        }
        for gate in ["z", "r", "h"] {
            out.push((format!("{prefix}.U_{gate}"), vec![h, h], false));
        }
        for gate in ["z", "r", "h"] {
            out.push((format!("{prefix}.b_{gate}"), vec![h], true));
        }
    };
    for l in 0..config.num_layers {
        gru(layer_prefix("enc", l), if l == 0 { e } else { h });
    }
    for l in 0..config.num_layers {
        gru(layer_prefix("dec", l), if l == 0 { e + h } else { h });
    }
    out.push(("attn.W_a".to_owned(), vec![h, a], false));
    out.push(("attn.U_a".to_owned(), vec![h, a], false));
    out.push(("attn.v_a".to_owned(), vec![a], false));
    out.push(("out.W_o".to_owned(), vec![h, config.tgt_vocab_size], false));
    out.push(("out.b_o".to_owned(), vec![config.tgt_vocab_size], true));
    out
}

impl ModelParameters {
    /// Weights ~ Uniform(−0.08, 0.08) drawn in layout order; biases zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut params = ParamSet::new();
        for (name, shape, is_bias) in parameter_layout(&config) {
            let n = shape.iter().product();
            let data = if is_bias {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.uniform(-INIT_RANGE, INIT_RANGE)).collect()
            };
            params.insert(name, Tensor::new(shape, data)?)?;
        }
        Self::from_param_set(config, params)
    }

    /// Every parameter zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        for (name, shape, _) in parameter_layout(&config) {
            params.insert(name, Tensor::zeros(&shape))?;
        }
        Self::from_param_set(config, params)
    }

    /// Wraps an existing parameter set after checking names and shapes.
    pub fn from_param_set(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let layout = parameter_layout(&config);
        if params.len() != layout.len() {
            return Err(ModelError::Parameter(format!(
                "expected {} parameters, found {}",
                layout.len(),
                params.len()
            )));
        }
        for (name, shape, _) in &layout {
            match params.by_name(name) {
                Some(p) if p.value().shape() == shape.as_slice() => {}
                _ => return Err(ModelError::Parameter(name.clone())),
            }
        }
        let id = |name: &str| params.id(name).expect("checked above");
        let gru = |prefix: String| GruWeights {
            w_z: id(&format!("{prefix}.W_z")),
            w_r: id(&format!("{prefix}.W_r")),
            w_h: id(&format!("{prefix}.W_h")),
            u_z: id(&format!("{prefix}.U_z")),
            u_r: id(&format!("{prefix}.U_r")),
            u_h: id(&format!("{prefix}.U_h")),
            b_z: id(&format!("{prefix}.b_z")),
            b_r: id(&format!("{prefix}.b_r")),
            b_h: id(&format!("{prefix}.b_h")),
        };
        Ok(Self {
            e_src: id("E_src"),
            e_tgt: id("E_tgt"),
            encoder: (0..config.num_layers).map(|l| gru(layer_prefix("enc", l))).collect(),
            decoder: (0..config.num_layers).map(|l| gru(layer_prefix("dec", l))).collect(),
            w_a: id("attn.W_a"),
            u_a: id("attn.U_a"),
            v_a: id("attn.v_a"),
            w_o: id("out.W_o"),
            b_o: id("out.b_o"),
            config,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.by_name(name).map(|p| p.value())
    }

    pub fn encoder_layers(&self) -> &[GruWeights] {
        &self.encoder
    }

    pub fn decoder_layers(&self) -> &[GruWeights] {
        &self.decoder
    }
}

/// Shorthand for registering parameters on a tape.
struct Bound<'a> {
    model: &'a ModelParameters,
}

impl Bound<'_> {
    fn p(&self, tape: &mut Tape, id: ParamId) -> Var {
        tape.param(&self.model.params, id)
    }
}

/// One GRU step over a batch: `x[B×in]`, `h[B×H]` → `h'[B×H]`.
pub fn gru_cell(tape: &mut Tape, params: &ParamSet, w: &GruWeights, x: Var, h: Var) -> Result<Var> {
    let gate = |tape: &mut Tape, wx: ParamId, uh: ParamId, b: ParamId, hin: Var| -> Result<Var> {
        let wv = tape.param(params, wx);
        let uv = tape.param(params, uh);
        let bv = tape.param(params, b);
        let xw = tape.matmul(x, wv)?;
        let hu = tape.matmul(hin, uv)?;
        let sum = tape.add(xw, hu)?;
        Ok(tape.add_bias(sum, bv)?)
    };
    let z_pre = gate(tape, w.w_z, w.u_z, w.b_z, h)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, w.w_r, w.u_r, w.b_r, h)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h)?;
    let cand_pre = gate(tape, w.w_h, w.u_h, w.b_h, rh)?;
    let cand = tape.tanh(cand_pre);
    // h' = h + z ⊙ (h̃ − h)
    let diff = tape.sub(cand, h)?;
    let step = tape.mul(z, diff)?;
    Ok(tape.add(h, step)?)
}

/// Encoder states recorded on a tape for a padded batch.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    /// One `[B×H]` var per source position.
    pub states: Vec<Var>,
    /// `states[i] · U_a`, precomputed for attention.
    keys: Vec<Var>,
    /// Row-major `[B×S]`; `true` where a real token sits.
    pub mask: Vec<bool>,
    /// Top-layer state after each row's last real token.
    pub final_state: Var,
    pub batch: usize,
}

fn check_ids(ids: &[usize], size: usize) -> Result<()> {
    match ids.iter().find(|&&id| id >= size) {
        Some(&id) => Err(ModelError::IdRange { id, size }),
        None => Ok(()),
    }
}

fn blend(tape: &mut Tape, new: Var, old: Var, active: &[bool], width: usize) -> Result<Var> {
    if active.iter().all(|&a| a) {
        return Ok(new);
    }
    let keep: Vec<f64> = active.iter().flat_map(|&a| std::iter::repeat_n(if a { 1.0 } else { 0.0 }, width)).collect();
    let hold: Vec<f64> = keep.iter().map(|k| 1.0 - k).collect();
    let keep = tape.constant(Tensor::matrix(active.len(), width, keep)?);
    let hold = tape.constant(Tensor::matrix(active.len(), width, hold)?);
    let a = tape.mul(new, keep)?;
    let b = tape.mul(old, hold)?;
    Ok(tape.add(a, b)?)
}

/// Runs the encoder left to right from a zero state over a batch of
/// sentences, padding to the longest. Padded steps carry the previous state
/// forward and are masked out of attention.
pub fn encode_batch(tape: &mut Tape, model: &ModelParameters, sources: &[&[usize]]) -> Result<EncodedBatch> {
    if sources.is_empty() || sources.iter().any(|s| s.is_empty()) {
        return Err(ModelError::EmptyBatch);
    }
    let cfg = model.config;
    let bound = Bound { model };
    for s in sources {
        check_ids(s, cfg.src_vocab_size)?;
    }
    let b = sources.len();
    let len = sources.iter().map(|s| s.len()).max().unwrap();
    let h = cfg.hidden_dim;
    let e_src = bound.p(tape, model.e_src);
    let u_a = bound.p(tape, model.u_a);
    let zero = tape.constant(Tensor::zeros(&[b, h]));
    let mut layer_state = vec![zero; cfg.num_layers];
    let mut states = Vec::with_capacity(len);
    let mut keys = Vec::with_capacity(len);
    let mut mask = vec![false; b * len];
    for t in 0..len {
        let active: Vec<bool> = sources.iter().map(|s| t < s.len()).collect();
        for (row, &a) in active.iter().enumerate() {
            mask[row * len + t] = a;
        }
        let ids: Vec<usize> = sources.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect();
        let mut input = tape.gather(e_src, &ids)?;
        for (l, w) in model.encoder.iter().enumerate() {
            let next = gru_cell(tape, &model.params, w, input, layer_state[l])?;
            layer_state[l] = blend(tape, next, layer_state[l], &active, h)?;
            input = layer_state[l];
        }
        states.push(input);
        keys.push(tape.matmul(input, u_a)?);
    }
    Ok(EncodedBatch {
        states,
        keys,
        mask,
        final_state: *layer_state.last().unwrap(),
        batch: b,
    })
}

/// Additive attention of decoder state `s[B×H]` over the encoded batch.
/// Returns `(context[B×H], weights[B×S])`.
pub fn attend(tape: &mut Tape, model: &ModelParameters, s: Var, enc: &EncodedBatch) -> Result<(Var, Var)> {
    let w_a = tape.param(&model.params, model.w_a);
    let v_a = tape.param(&model.params, model.v_a);
    let v_col = tape.reshape(v_a, &[model.config.attn_dim, 1])?;
    let query = tape.matmul(s, w_a)?;
    let mut scores = Vec::with_capacity(enc.keys.len());
    for &key in &enc.keys {
        let sum = tape.add(query, key)?;
        let act = tape.tanh(sum);
        scores.push(tape.matmul(act, v_col)?);
    }
    let scores = tape.concat(&scores)?;
    let weights = tape.softmax_rows(scores, Some(&enc.mask))?;
    let mut context: Option<Var> = None;
    for (i, &state) in enc.states.iter().enumerate() {
        let col = tape.column(weights, i)?;
        let part = tape.scale_rows(state, col)?;
        context = Some(match context {
            Some(c) => tape.add(c, part)?,
            None => part,
        });
    }
    Ok((context.expect("non-empty source"), weights))
}

/// Decoder state: one `[B×H]` var per layer.
#[derive(Debug, Clone)]
pub struct DecoderVars {
    pub layers: Vec<Var>,
}

impl DecoderVars {
    pub fn zeros(tape: &mut Tape, model: &ModelParameters, batch: usize) -> Self {
        let zero = tape.constant(Tensor::zeros(&[batch, model.config.hidden_dim]));
        Self {
            layers: vec![zero; model.config.num_layers],
        }
    }

    pub fn top(&self) -> Var {
        *self.layers.last().unwrap()
    }
}

/// One decoder step: returns `(logits[B×V], next state, attention weights[B×S])`.
pub fn decoder_step(
    tape: &mut Tape,
    model: &ModelParameters,
    prev_ids: &[usize],
    state: &DecoderVars,
    enc: &EncodedBatch,
) -> Result<(Var, DecoderVars, Var)> {
    check_ids(prev_ids, model.config.tgt_vocab_size)?;
    let (context, weights) = attend(tape, model, state.top(), enc)?;
    let e_tgt = tape.param(&model.params, model.e_tgt);
    let emb = tape.gather(e_tgt, prev_ids)?;
    let mut input = tape.concat(&[emb, context])?;
    let mut layers = Vec::with_capacity(state.layers.len());
    for (w, &h) in model.decoder.iter().zip(&state.layers) {
        input = gru_cell(tape, &model.params, w, input, h)?;
        layers.push(input);
    }
    let w_o = tape.param(&model.params, model.w_o);
    let b_o = tape.param(&model.params, model.b_o);
    let proj = tape.matmul(input, w_o)?;
    let logits = tape.add_bias(proj, b_o)?;
    Ok((logits, DecoderVars { layers }, weights))
}

/// Where the decoder takes its next input from during training.
pub enum Feeding<'a> {
    /// Always the gold previous token.
    Teacher,
    /// Gold token with probability `ratio`, otherwise the model's own argmax.
    Scheduled { ratio: f64, rng: &'a mut Rng },
}

/// Teacher-forced token-level mean cross-entropy of a batch, recorded on
/// `tape`. Step `t` feeds target token `t` and predicts token `t + 1`;
/// positions past a sentence's end are masked.
pub fn batch_loss(
    tape: &mut Tape,
    model: &ModelParameters,
    batch: &[(&EncodedSentence, &EncodedSentence)],
    mut feeding: Feeding<'_>,
) -> Result<Var> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let sources: Vec<&[usize]> = batch.iter().map(|(s, _)| s.ids()).collect();
    let targets: Vec<&[usize]> = batch.iter().map(|(_, t)| t.ids()).collect();
    for t in &targets {
        check_ids(t, model.config.tgt_vocab_size)?;
    }
    let enc = encode_batch(tape, model, &sources)?;
    let steps = targets.iter().map(|t| t.len() - 1).max().unwrap();
    let total: usize = targets.iter().map(|t| t.len() - 1).sum();
    let mut state = DecoderVars::zeros(tape, model, batch.len());
    let mut prev: Vec<usize> = targets.iter().map(|t| t[0]).collect();
    let mut loss: Option<Var> = None;
    for step in 0..steps {
        let (logits, next, _) = decoder_step(tape, model, &prev, &state, &enc)?;
        state = next;
        let active: Vec<bool> = targets.iter().map(|t| step + 1 < t.len()).collect();
        let gold: Vec<usize> = targets.iter().map(|t| t.get(step + 1).copied().unwrap_or(PAD)).collect();
        let count = active.iter().filter(|&&a| a).count();
        let ce = tape.cross_entropy(logits, &gold, &active)?;
        let weighted = tape.affine(ce, count as f64 / total as f64, 0.0);
        loss = Some(match loss {
            Some(l) => tape.add(l, weighted)?,
            None => weighted,
        });
        prev = match &mut feeding {
            Feeding::Teacher => gold,
            Feeding::Scheduled { ratio, rng } => {
                let predicted = argmax_rows(tape.value(logits), &[]);
                gold.iter()
                    .zip(predicted)
                    .map(|(&g, p)| if rng.next_f64() < *ratio { g } else { p })
                    .collect()
            }
        };
    }
    Ok(loss.expect("targets have at least SOS and EOS"))
}

/// Batch mean loss (no gradient).
pub fn forward_loss(model: &ModelParameters, batch: &[(&EncodedSentence, &EncodedSentence)]) -> Result<f64> {
    let mut tape = Tape::inference();
    let loss = batch_loss(&mut tape, model, batch, Feeding::Teacher)?;
    Ok(tape.value(loss).item())
}

/// Row-wise argmax (lowest index on ties), never choosing ids in `excluded`.
fn argmax_rows(logits: &Tensor, excluded: &[usize]) -> Vec<usize> {
    let v = *logits.shape().last().unwrap();
    logits
        .data()
        .chunks(v)
        .map(|row| {
            let mut best = None;
            for (i, &x) in row.iter().enumerate() {
                if excluded.contains(&i) {
                    continue;
                }
                match best {
                    Some((_, bx)) if x <= bx => {}
                    _ => best = Some((i, x)),
                }
            }
            best.map_or(EOS, |(i, _)| i)
        })
        .collect()
}

/// Encoder output for one sentence as plain tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    /// `[src_len × hidden]`
    pub states: Tensor,
    /// `[hidden]`
    pub final_state: Tensor,
    pub mask: Vec<bool>,
}

fn rows_to_tensor(tape: &Tape, rows: &[Var]) -> Result<Tensor> {
    let width = tape.value(rows[0]).numel();
    let data: Vec<f64> = rows.iter().flat_map(|&r| tape.value(r).data().to_vec()).collect();
    Ok(Tensor::matrix(rows.len(), width, data)?)
}

pub fn encode_sequence(src: &EncodedSentence, model: &ModelParameters) -> Result<EncoderOutput> {
    let mut tape = Tape::inference();
    let enc = encode_batch(&mut tape, model, &[src.ids()])?;
    Ok(EncoderOutput {
        states: rows_to_tensor(&tape, &enc.states)?,
        final_state: Tensor::vector(tape.value(enc.final_state).data().to_vec()),
        mask: enc.mask,
    })
}

fn rebuild(tape: &mut Tape, model: &ModelParameters, enc: &EncoderOutput) -> Result<EncodedBatch> {
    let (len, h) = (enc.states.shape()[0], enc.states.shape()[1]);
    let u_a = tape.param(&model.params, model.u_a);
    let mut states = Vec::with_capacity(len);
    let mut keys = Vec::with_capacity(len);
    for i in 0..len {
        let row = tape.constant(Tensor::matrix(1, h, enc.states.data()[i * h..(i + 1) * h].to_vec())?);
        keys.push(tape.matmul(row, u_a)?);
        states.push(row);
    }
    let final_state = tape.constant(Tensor::matrix(1, h, enc.final_state.data().to_vec())?);
    Ok(EncodedBatch {
        states,
        keys,
        mask: enc.mask.clone(),
        final_state,
        batch: 1,
    })
}

/// `(context[hidden], weights[src_len])` for a single decoder state.
pub fn attention(s_prev: &Tensor, enc: &EncoderOutput, model: &ModelParameters) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::inference();
    let batch = rebuild(&mut tape, model, enc)?;
    let s = tape.constant(s_prev.reshape(&[1, model.config.hidden_dim])?);
    let (ctx, w) = attend(&mut tape, model, s, &batch)?;
    Ok((
        Tensor::vector(tape.value(ctx).data().to_vec()),
        Tensor::vector(tape.value(w).data().to_vec()),
    ))
}

/// Result of [`decode_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Tensor,
    /// One `[hidden]` tensor per layer.
    pub state: Vec<Tensor>,
    pub weights: Tensor,
}

/// One decoder step for a single sentence; `s_prev` holds one `[hidden]`
/// tensor per layer.
pub fn decode_step(y_prev: usize, s_prev: &[Tensor], enc: &EncoderOutput, model: &ModelParameters) -> Result<StepOutput> {
    let mut tape = Tape::inference();
    let batch = rebuild(&mut tape, model, enc)?;
    let h = model.config.hidden_dim;
    if s_prev.len() != model.config.num_layers {
        return Err(ModelError::Config(format!(
            "expected {} decoder layer states, got {}",
            model.config.num_layers,
            s_prev.len()
        )));
    }
    let layers = s_prev
        .iter()
        .map(|s| Ok(tape.constant(s.reshape(&[1, h])?)))
        .collect::<Result<Vec<_>>>()?;
    let (logits, next, weights) = decoder_step(&mut tape, model, &[y_prev], &DecoderVars { layers }, &batch)?;
    Ok(StepOutput {
        logits: Tensor::vector(tape.value(logits).data().to_vec()),
        state: next
            .layers
            .iter()
            .map(|&v| Tensor::vector(tape.value(v).data().to_vec()))
            .collect(),
        weights: Tensor::vector(tape.value(weights).data().to_vec()),
    })
}

/// Greedy decoding from SOS and a zero decoder state. At most `max_len`
/// tokens are emitted; decoding stops early at EOS. PAD and SOS are never
/// chosen and the result carries no SOS/EOS.
pub fn greedy_decode(src: &EncodedSentence, model: &ModelParameters, max_len: usize) -> Result<Vec<usize>> {
    let mut tape = Tape::inference();
    let enc = encode_batch(&mut tape, model, &[src.ids()])?;
    let mut state = DecoderVars::zeros(&mut tape, model, 1);
    let mut prev = SOS;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let (logits, next, _) = decoder_step(&mut tape, model, &[prev], &state, &enc)?;
        state = next;
        let token = argmax_rows(tape.value(logits), &[PAD, SOS])[0];
        if token == EOS {
            break;
        }
        out.push(token);
        prev = token;
    }
    Ok(out)
}
