//! Acceptance run: one line per criterion, non-zero exit if any fails.
//!
//! The dataset statistics check needs the real corpus; point `FFR_DATASET`
//! at its TSV file to enable it, otherwise it is reported as SKIP.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use tower::ServiceExt;

use ffr::cms::{router, session_log_path, table_items, CmsStore};
use ffr::corpus::{analyze, load_corpus, split};
use ffr::metrics::{bleu_corpus, bleu_sentence, evaluate_lines, gleu, EvaluationMode};
use ffr::model::{batch_loss, forward_loss, Feeding};
use ffr::samples::{minimal_pairs, word_for_word, PREDICTIONS};
use ffr::tokenizer::{build_vocab, EOS, SOS};

use ffr::training::{train, Adam, TrainingError};
use ffr::{
    BleuConfig, Checkpoint, DiacriticMode, EncodedSentence, LengthBucket, ModelConfig, ModelParameters,
    ParallelCorpus, Rng, Scale, SplitSpec, Tape, TrainConfig, Translator,
};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn main() -> ExitCode {
    let checks: [(&str, Check); 9] = [
        ("gradient check against central differences", gradient_check),
        ("overfit 32 synthetic pairs", overfit),
        ("diacritic ablation direction", ablation),
        ("example prediction sentence scores", prediction_scores),
        ("BLEU/GLEU against brute-force oracle", metric_oracle),
        ("dataset length statistics", dataset_statistics),
        ("split sizes 105326/5691/6012", split_sizes),
        ("checkpoint round trip and corruption", checkpoint_round_trip),
        ("CMS replay and score validation", cms_replay),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag}  {name:<42} {detail} [{secs:.1}s]");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

macro_rules! attempt {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return Verdict::Fail(format!("error: {e}")),
        }
    };
}

fn sentence(ids: &[usize], vocab: usize) -> EncodedSentence {
    let mut v = vec![SOS];
    v.extend_from_slice(ids);
    v.push(EOS);
    EncodedSentence::new(v, vocab).expect("ids inside vocabulary")
}

/// Reverse-mode gradients of the taped loss against central differences of
/// the tape-free forward pass, over every parameter entry.
fn gradient_check() -> Verdict {
    let eps = 1e-5;
    let config = ModelConfig::new(10, 10).with_dims(8, 6, 4);
    let mut model = attempt!(ModelParameters::init(config, 42));
    let batch = [
        (sentence(&[4, 5, 6], 10), sentence(&[7, 8], 10)),
        (sentence(&[9, 4], 10), sentence(&[5, 6, 7, 4], 10)),
    ];
    let refs: Vec<_> = batch.iter().map(|(s, t)| (s, t)).collect();

    model.params_mut().zero_grad();
    let mut tape = Tape::new();
    let loss = attempt!(batch_loss(&mut tape, &model, &refs, Feeding::Teacher));
    attempt!(tape.backward(loss, model.params_mut()));
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.data().to_vec()).collect();

    let (mut checked, mut max_rel, mut max_tiny_abs) = (0usize, 0.0f64, 0.0f64);
    for (k, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let mut shifted = |delta: f64| -> Result<f64, ffr::model::ModelError> {
                let p = model.params_mut().iter_mut().nth(k).unwrap();
                let original = p.value().data()[i];
                p.value_mut().data_mut()[i] = original + delta;
                let l = forward_loss(&model, &refs);
                model.params_mut().iter_mut().nth(k).unwrap().value_mut().data_mut()[i] = original;
                l
            };
            let up = attempt!(shifted(eps));
            let down = attempt!(shifted(-eps));
            let n = (up - down) / (2.0 * eps);
            let scale = a.abs().max(n.abs());
            // Below 1e-6 the difference quotient is dominated by rounding.
            if scale < 1e-6 {
                max_tiny_abs = max_tiny_abs.max((a - n).abs());
            } else {
                max_rel = max_rel.max((a - n).abs() / scale);
            }
            checked += 1;
        }
    }
    verdict(
        max_rel < 1e-4 && max_tiny_abs < 1e-9,
        format!("{checked} entries, max rel {max_rel:.2e}, max abs on tiny entries {max_tiny_abs:.2e}"),
    )
}

fn train_on(
    corpus: &ParallelCorpus,
    mode: DiacriticMode,
    dims: (usize, usize, usize),
) -> Result<(Checkpoint, ffr::TrainReport), Box<dyn std::error::Error>> {
    let src = build_vocab(&corpus.sources().collect::<Vec<_>>(), mode, 1)?;
    let tgt = build_vocab(&corpus.targets().collect::<Vec<_>>(), mode, 1)?;
    let model_config = ModelConfig::new(src.len(), tgt.len()).with_dims(dims.0, dims.1, dims.2);
    let config = TrainConfig {
        learning_rate: 0.01,
        batch_size: 4,
        epochs: 300,
        seed: 0,
        ..TrainConfig::default()
    };
    Ok(train(corpus, corpus, &src, &tgt, model_config, &config)?)
}

fn exact_matches(translator: &Translator, corpus: &ParallelCorpus) -> Result<(usize, Vec<String>), TrainingError> {
    let mut hits = 0;
    let mut outputs = Vec::with_capacity(corpus.len());
    for pair in corpus.pairs() {
        let out = translator.translate(&pair.source, 16)?;
        hits += usize::from(out == pair.target);
        outputs.push(out);
    }
    Ok((hits, outputs))
}

fn overfit() -> Verdict {
    let start = Instant::now();
    let corpus = word_for_word(32, 11);
    let (ckpt, report) = attempt!(train_on(&corpus, DiacriticMode::Preserve, (32, 16, 8)));
    let elapsed = start.elapsed();
    let translator = attempt!(Translator::from_checkpoint(&ckpt));
    let (hits, outputs) = attempt!(exact_matches(&translator, &corpus));
    let hyps: Vec<Vec<&str>> = outputs.iter().map(|s| s.split_whitespace().collect()).collect();
    let refs: Vec<Vec<&str>> = corpus.targets().map(|s| s.split_whitespace().collect()).collect();
    let bleu = attempt!(bleu_corpus(&hyps, &refs, &BleuConfig::default()));
    let loss = report.final_train_loss().unwrap_or(f64::INFINITY);
    let bleu_text = format!("{bleu:.2}");
    verdict(
        loss < 0.1 && hits == 32 && bleu_text == "100.00" && elapsed < Duration::from_secs(300),
        format!(
            "{} epochs, final loss {loss:.4}, exact {hits}/32, BLEU {bleu_text}",
            report.epochs.len()
        ),
    )
}

fn ablation() -> Verdict {
    let corpus = minimal_pairs(40);
    let mut rates = Vec::new();
    for mode in [DiacriticMode::Preserve, DiacriticMode::Strip] {
        let (ckpt, _) = attempt!(train_on(&corpus, mode, (32, 32, 16)));
        let translator = attempt!(Translator::from_checkpoint(&ckpt));
        let (hits, _) = attempt!(exact_matches(&translator, &corpus));
        rates.push(hits as f64 / corpus.len() as f64);
    }
    verdict(
        rates[0] == 1.0 && rates[1] <= 0.5,
        format!("preserve {:.1}%, strip {:.1}%", 100.0 * rates[0], 100.0 * rates[1]),
    )
}

fn prediction_scores() -> Verdict {
    let hyps: Vec<&str> = PREDICTIONS.iter().map(|p| p.hypothesis).collect();
    let refs: Vec<&str> = PREDICTIONS.iter().map(|p| p.reference).collect();
    let report = attempt!(evaluate_lines(&hyps, &refs, EvaluationMode::Sentence, DiacriticMode::Preserve));
    let scores = report.sentence_scores.unwrap_or_default();
    verdict(scores == [1.0, 1.0, 0.0, 0.0, 0.0, 0.25], format!("{scores:?}"))
}

/// Occurrences of `gram` in `seq`, by scanning every position.
fn occurrences(seq: &[usize], gram: &[usize]) -> usize {
    if gram.len() > seq.len() {
        return 0;
    }
    (0..=seq.len() - gram.len()).filter(|&i| &seq[i..i + gram.len()] == gram).count()
}

/// (clipped matches, hypothesis n-gram count) without hashing.
fn brute_clipped(hyp: &[usize], reference: &[usize], n: usize) -> (usize, usize) {
    if hyp.len() < n {
        return (0, 0);
    }
    let mut matched = 0;
    for i in 0..=hyp.len() - n {
        let gram = &hyp[i..i + n];
        let first = (0..i).all(|j| &hyp[j..j + n] != gram);
        if first {
            matched += occurrences(hyp, gram).min(occurrences(reference, gram));
        }
    }
    (matched, hyp.len() + 1 - n)
}

fn brute_bleu(pairs: &[(Vec<usize>, Vec<usize>)]) -> f64 {
    let mut logs = Vec::new();
    for n in 1..=4 {
        let (mut m, mut t) = (0usize, 0usize);
        for (h, r) in pairs {
            let (a, b) = brute_clipped(h, r, n);
            m += a;
            t += b;
        }
        if t == 0 {
            continue;
        }
        if m == 0 {
            return 0.0;
        }
        logs.push((m as f64 / t as f64).ln());
    }
    if logs.is_empty() {
        return 0.0;
    }
    let c: usize = pairs.iter().map(|(h, _)| h.len()).sum();
    let r: usize = pairs.iter().map(|(_, r)| r.len()).sum();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

fn brute_gleu(pairs: &[(Vec<usize>, Vec<usize>)]) -> f64 {
    let (mut m, mut ht, mut rt) = (0usize, 0usize, 0usize);
    for (h, r) in pairs {
        for n in 1..=4 {
            let (a, b) = brute_clipped(h, r, n);
            m += a;
            ht += b;
            rt += (r.len() + 1).saturating_sub(n);
        }
    }
    if ht == 0 || rt == 0 {
        return 0.0;
    }
    (m as f64 / ht as f64).min(m as f64 / rt as f64)
}

fn random_pairs(rng: &mut Rng, count: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let seq = |rng: &mut Rng| -> Vec<usize> { (0..1 + rng.below(40)).map(|_| rng.below(20)).collect() };
    (0..count)
        .map(|k| {
            let r = seq(rng);
            // Half the hypotheses are edited copies so that higher orders match.
            let h = if k % 2 == 0 {
                seq(rng)
            } else {
                let mut h = r.clone();
                for _ in 0..rng.below(4) {
                    let at = rng.below(h.len());
                    match rng.below(3) {
                        0 => h[at] = rng.below(20),
                        1 if h.len() > 1 => {
                            h.remove(at);
                        }
                        _ => h.insert(at, rng.below(20)),
                    }
                }
                h
            };
            (h, r)
        })
        .collect()
}

fn metric_oracle() -> Verdict {
    let mut rng = Rng::new(2024);
    let pairs = random_pairs(&mut rng, 200);
    let unit = BleuConfig { scale: Scale::Unit, ..BleuConfig::default() };
    let mut worst = 0.0f64;
    let mut nonzero_bleu = 0;
    let mut compare = |slice: &[(Vec<usize>, Vec<usize>)]| -> Result<(), ffr::metrics::MetricsError> {
        let hyps: Vec<&[usize]> = slice.iter().map(|(h, _)| h.as_slice()).collect();
        let refs: Vec<&[usize]> = slice.iter().map(|(_, r)| r.as_slice()).collect();
        let b = bleu_corpus(&hyps, &refs, &unit)?;
        let g = gleu(&hyps, &refs, 4, Scale::Unit)?;
        let expected = brute_bleu(slice);
        nonzero_bleu += usize::from(expected > 0.0);
        worst = worst.max((b - expected).abs()).max((g - brute_gleu(slice)).abs());
        Ok(())
    };
    attempt!(compare(&pairs));
    for chunk in pairs.chunks(10) {
        attempt!(compare(chunk));
    }
    for pair in pairs.chunks(1) {
        attempt!(compare(pair));
    }
    for (h, r) in &pairs {
        let s = attempt!(bleu_sentence(h, r));
        let (m, t) = brute_clipped(h, r, 1);
        worst = worst.max((s - m as f64 / t as f64).abs());
    }
    verdict(
        worst <= 1e-9,
        format!("200 pairs, {nonzero_bleu} non-zero BLEU corpora, max deviation {worst:.1e}"),
    )
}

fn dataset_statistics() -> Verdict {
    let Some(path) = std::env::var_os("FFR_DATASET") else {
        return Verdict::Skip("set FFR_DATASET to the corpus TSV to run".into());
    };
    let corpus = attempt!(load_corpus(Path::new(&path)));
    let stats = attempt!(analyze(&corpus));
    let counts = |m: &BTreeMap<LengthBucket, usize>| -> Vec<usize> { LengthBucket::ALL.iter().map(|b| m[b]).collect() };
    let (src, tgt) = (counts(&stats.bucket_counts_source), counts(&stats.bucket_counts_target));
    let parts = attempt!(split(&corpus, &SplitSpec { train_n: 105326, val_n: 5691, test_n: 6012, seed: 0 }));
    let sizes = [parts.train.len(), parts.val.len(), parts.test.len()];
    verdict(
        src == [64301, 13848, 29113, 9767]
            && tgt == [64255, 17183, 29857, 5734]
            && (stats.max_len_source, stats.max_len_target) == (109, 111)
            && sizes == [105326, 5691, 6012],
        format!(
            "source {src:?}, target {tgt:?}, max {}/{}, split {sizes:?}",
            stats.max_len_source, stats.max_len_target
        ),
    )
}

fn split_sizes() -> Verdict {
    let corpus = attempt!(ParallelCorpus::from_pairs((0..117_029).map(|i| (format!("s{i}"), format!("t{i}")))));
    let parts = attempt!(split(&corpus, &SplitSpec { train_n: 105326, val_n: 5691, test_n: 6012, seed: 0 }));
    let mut ids: Vec<&str> = parts
        .train
        .sources()
        .chain(parts.val.sources())
        .chain(parts.test.sources())
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let sizes = [parts.train.len(), parts.val.len(), parts.test.len()];
    verdict(
        sizes == [105326, 5691, 6012] && ids.len() == 117_029,
        format!("117029 synthetic pairs -> {sizes:?}, disjoint"),
    )
}

fn random_checkpoint(rng: &mut Rng, seed: u64) -> Result<Checkpoint, Box<dyn std::error::Error>> {
    let words = |rng: &mut Rng, prefix: &str| -> Vec<String> {
        (0..1 + rng.below(8)).map(|k| format!("{prefix}{k}")).collect()
    };
    let mode = if rng.below(2) == 0 { DiacriticMode::Preserve } else { DiacriticMode::Strip };
    let src = build_vocab(&words(rng, "s"), mode, 1)?;
    let tgt = build_vocab(&words(rng, "t"), mode, 1)?;
    let config =
        ModelConfig::new(src.len(), tgt.len()).with_dims(1 + rng.below(8), 1 + rng.below(6), 1 + rng.below(4));
    let mut model = ModelParameters::init(config, seed)?;
    let mut adam = Adam::new(model.params());
    for _ in 0..1 + rng.below(3) {
        for p in model.params_mut().iter_mut() {
            for g in p.grad.data_mut() {
                *g = rng.uniform(-1.0, 1.0);
            }
        }
        adam.step(model.params_mut(), &TrainConfig::default())?;
    }
    Ok(Checkpoint::new(&model, &adam, &src, &tgt))
}

fn checkpoint_round_trip() -> Verdict {
    let dir = attempt!(tempfile::tempdir());
    let mut rng = Rng::new(7);
    let (mut rejected, mut attempts) = (0usize, 0usize);
    for seed in 0..20u64 {
        let ckpt = attempt!(random_checkpoint(&mut rng, seed));
        let (first, second) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        attempt!(ckpt.save(&first));
        attempt!(attempt!(Checkpoint::load(&first)).save(&second));
        let (a, b) = (attempt!(std::fs::read(&first)), attempt!(std::fs::read(&second)));
        if a != b {
            return Verdict::Fail(format!("set {seed}: re-saved file differs"));
        }

        let mut damaged = vec![Vec::new(), a[..a.len() / 2].to_vec(), a[..a.len() - 1].to_vec()];
        for _ in 0..5 {
            let mut flipped = a.clone();
            let at = rng.below(flipped.len());
            flipped[at] ^= 1 << rng.below(8);
            damaged.push(flipped);
        }
        let mut appended = a.clone();
        appended.push(0);
        damaged.push(appended);
        for bytes in damaged {
            attempt!(std::fs::write(&first, &bytes));
            attempts += 1;
            match Checkpoint::load(&first) {
                Err(TrainingError::CorruptCheckpoint(_)) => rejected += 1,
                other => return Verdict::Fail(format!("set {seed}: damaged file gave {:?}", other.map(|_| ()))),
            }
        }
    }
    verdict(
        rejected == attempts,
        format!("20 sets byte-identical, {rejected}/{attempts} damaged files rejected"),
    )
}

const SCALE: f64 = (1u64 << 60) as f64;

/// The f64 nearest to `sum / (n * 2^60)`, by exact integer comparison of the
/// neighbouring candidates (ties to even).
fn nearest_f64(sum: i128, n: i128) -> f64 {
    let rough = sum as f64 / n as f64 / SCALE;
    let mut best: Option<(i128, f64)> = None;
    let mut c = f64::from_bits(rough.to_bits().saturating_sub(3));
    for _ in 0..7 {
        let scaled = c * SCALE;
        if scaled.fract() != 0.0 {
            c = f64::from_bits(c.to_bits() + 1);
            continue;
        }
        let dist = (scaled as i128 * n - sum).abs();
        let better = match best {
            None => true,
            Some((d, b)) => dist < d || (dist == d && c.to_bits() % 2 == 0 && b.to_bits() % 2 == 1),
        };
        if better {
            best = Some((dist, c));
        }
        c = f64::from_bits(c.to_bits() + 1);
    }
    best.unwrap().1
}

/// Per-item means straight from the JSONL lines: last write wins per
/// (annotator, item), then the exact mean of the stored values, rounded once.
fn brute_force_means(log: &str) -> BTreeMap<String, (f64, usize)> {
    let mut latest: HashMap<(String, String), f64> = HashMap::new();
    for line in log.lines().filter(|l| !l.trim().is_empty()) {
        let event: serde_json::Value = serde_json::from_str(line).expect("log line is JSON");
        if event["type"] == "score_submitted" {
            let p = &event["payload"];
            latest.insert(
                (p["annotator"].as_str().unwrap().to_owned(), p["item_id"].as_str().unwrap().to_owned()),
                p["value"].as_f64().unwrap(),
            );
        }
    }
    let mut grouped: BTreeMap<String, Vec<i128>> = BTreeMap::new();
    for ((_, item), value) in latest {
        let scaled = value * SCALE;
        assert_eq!(scaled.fract(), 0.0, "grid values are multiples of 2^-60");
        grouped.entry(item).or_default().push(scaled as i128);
    }
    grouped
        .into_iter()
        .map(|(item, xs)| {
            let n = xs.len();
            (item, (nearest_f64(xs.iter().sum(), n as i128), n))
        })
        .collect()
}

fn submit_request(session: &str, value: serde_json::Value) -> Request<Body> {
    Request::post(format!("/api/sessions/{session}/scores"))
        .header("content-type", "application/json")
        .body(Body::from(
            serde_json::json!({"annotator": "a0", "item_id": "0", "value": value}).to_string(),
        ))
        .unwrap()
}

fn cms_replay() -> Verdict {
    let mut rng = Rng::new(5);
    let mut logs_checked = 0;
    for _ in 0..200 {
        let dir = attempt!(tempfile::tempdir());
        let session = {
            let store = attempt!(CmsStore::open(dir.path()));
            let id = attempt!(store.create_session("acceptance", table_items()));
            let mut cells: Vec<(usize, usize)> = (0..5).flat_map(|a| (0..6).map(move |i| (a, i))).collect();
            rng.shuffle(&mut cells);
            for _ in 0..20 {
                cells.push((rng.below(5), rng.below(6)));
            }
            for (a, i) in cells {
                let value = rng.below(21) as f64 / 20.0;
                attempt!(store.submit_score(&id, &format!("a{a}"), &i.to_string(), value));
            }
            id
        };
        let replayed = attempt!(CmsStore::open(dir.path()));
        let aggregate = attempt!(replayed.aggregate(&session));
        let log = attempt!(std::fs::read_to_string(session_log_path(dir.path(), &session)));
        let expected = brute_force_means(&log);
        let got: BTreeMap<String, (f64, usize)> = aggregate
            .per_item
            .iter()
            .map(|(k, v)| (k.clone(), (v.mean, v.n_annotators)))
            .collect();
        if got != expected {
            return Verdict::Fail(format!("replayed {got:?} but log gives {expected:?}"));
        }
        logs_checked += 1;
    }

    let dir = attempt!(tempfile::tempdir());
    let store = Arc::new(attempt!(CmsStore::open(dir.path())));
    let id = attempt!(store.create_session("http", table_items()));
    let runtime = attempt!(tokio::runtime::Builder::new_current_thread().enable_all().build());
    let statuses: Vec<StatusCode> = runtime.block_on(async {
        let mut out = Vec::new();
        for value in [serde_json::json!(1.5), serde_json::json!(-0.25), serde_json::json!(0.75)] {
            let app = router(store.clone(), None);
            out.push(app.oneshot(submit_request(&id, value)).await.map(|r| r.status()).unwrap());
        }
        out
    });
    let scored = attempt!(store.summary(&id)).n_scores;
    verdict(
        statuses == [StatusCode::BAD_REQUEST, StatusCode::BAD_REQUEST, StatusCode::NO_CONTENT] && scored == 1,
        format!("{logs_checked} logs of 5x6 replayed exactly, HTTP {statuses:?}"),
    )
}
