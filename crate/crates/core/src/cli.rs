//! The `ffr` command line. Machine-readable output goes to stdout, diagnostics
//! to stderr (verbosity from `FFR_LOG`).
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 internal
//! failure.

use std::ffi::OsString;
use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::cms::{CmsError, CmsStore};
use crate::corpus::{self, CorpusError, SplitSpec};
use crate::metrics::{self, EvaluationMode, Metric, MetricsError};
use crate::model::{ModelConfig, ModelError};
use crate::tokenizer::{self, DiacriticMode, TokenizerError};
use crate::training::{self, Checkpoint, TrainingError, Translator};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ffr", version, about = "Diacritic-aware translation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Diacritics {
    Preserve,
    Strip,
}

impl From<Diacritics> for DiacriticMode {
    fn from(d: Diacritics) -> Self {
        match d {
            Diacritics::Preserve => DiacriticMode::Preserve,
            Diacritics::Strip => DiacriticMode::Strip,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Side {
    Src,
    Tgt,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Corpus,
    Sentence,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Bleu,
    Gleu,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Length-bucket statistics of a parallel corpus.
    Analyze {
        #[arg(long)]
        corpus: PathBuf,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Seeded train/validation/test split into DIR/{train,val,test}.tsv.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        train: usize,
        #[arg(long)]
        val: usize,
        #[arg(long)]
        test: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Vocabulary file for one side of a corpus.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        side: Side,
        #[arg(long, value_enum)]
        diacritics: Diacritics,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from a `key = value` config and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy-decode one sentence per input line.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Defaults to the checkpoint's configured limit.
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// BLEU/GLEU of line-aligned hypothesis and reference files.
    Evaluate {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, value_enum, default_value = "corpus")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "both")]
        metric: MetricArg,
        #[arg(long, value_enum)]
        diacritics: Diacritics,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the CMS scoring service until interrupted.
    CmsServe {
        #[arg(long)]
        port: u16,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Static annotation UI bundle served at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Write a session's per-item CMS means as CSV.
    CmsExport {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        session: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }
}

fn at(path: &Path) -> impl Fn(String) -> CliError + '_ {
    move |m| CliError::data(format!("{}: {m}", path.display()))
}

fn corpus_err(path: &Path) -> impl Fn(CorpusError) -> CliError + '_ {
    move |e| at(path)(e.to_string())
}

fn tokenizer_err(path: &Path) -> impl Fn(TokenizerError) -> CliError + '_ {
    move |e| at(path)(e.to_string())
}

fn training_err(e: TrainingError) -> CliError {
    match e {
        TrainingError::Numerics(_)
        | TrainingError::NonFiniteGradient(_)
        | TrainingError::Model(ModelError::Numerics(_) | ModelError::Parameter(_) | ModelError::EmptyBatch) => {
            CliError::internal(e.to_string())
        }
        _ => CliError::data(e.to_string()),
    }
}

fn cms_err(e: CmsError) -> CliError {
    CliError::data(e.to_string())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| at(path)(e.to_string()))
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FFR_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (program name first) and runs the command, writing machine
/// output to `out`. Returns the process exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// [`run_with`] against the real stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let code = run_with(args, &mut lock);
    let _ = lock.flush();
    code
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    let emit = |out: &mut dyn Write, s: &str| -> Result<(), CliError> {
        out.write_all(s.as_bytes())
            .map_err(|e| CliError::data(format!("stdout: {e}")))
    };
    match command {
        Command::Analyze { corpus: path, json } => {
            let c = corpus::load_corpus(&path).map_err(corpus_err(&path))?;
            let stats = corpus::analyze(&c).map_err(corpus_err(&path))?;
            let text = if json { stats.to_json() } else { stats.to_string() };
            emit(out, &format!("{text}\n"))
        }
        Command::Split {
            corpus: path,
            train,
            val,
            test,
            seed,
            out: dir,
        } => {
            let c = corpus::load_corpus(&path).map_err(corpus_err(&path))?;
            let spec = SplitSpec {
                train_n: train,
                val_n: val,
                test_n: test,
                seed,
            };
            let parts = corpus::split(&c, &spec).map_err(corpus_err(&path))?;
            std::fs::create_dir_all(&dir).map_err(|e| at(&dir)(e.to_string()))?;
            for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
                write_file(&dir.join(format!("{name}.tsv")), part.to_tsv().as_bytes())?;
            }
            emit(
                out,
                &format!("train\t{}\nval\t{}\ntest\t{}\n", parts.train.len(), parts.val.len(), parts.test.len()),
            )
        }
        Command::BuildVocab {
            corpus: path,
            side,
            diacritics,
            min_count,
            out: vocab_path,
        } => {
            let c = corpus::load_corpus(&path).map_err(corpus_err(&path))?;
            let sentences: Vec<&str> = match side {
                Side::Src => c.sources().collect(),
                Side::Tgt => c.targets().collect(),
            };
            let vocab = tokenizer::build_vocab(&sentences, diacritics.into(), min_count).map_err(tokenizer_err(&path))?;
            vocab.save(&vocab_path).map_err(tokenizer_err(&vocab_path))?;
            emit(out, &format!("{}\n", vocab.len()))
        }
        Command::Train { config, out: ckpt_path } => {
            let run = training::config::load_config(&config).map_err(|e| at(&config)(e.to_string()))?;
            let train_c = corpus::load_corpus(&run.train_corpus).map_err(corpus_err(&run.train_corpus))?;
            let val_c = corpus::load_corpus(&run.val_corpus).map_err(corpus_err(&run.val_corpus))?;
            let src = tokenizer::build_vocab(&train_c.sources().collect::<Vec<_>>(), run.diacritics, run.min_count)
                .map_err(tokenizer_err(&run.train_corpus))?;
            let tgt = tokenizer::build_vocab(&train_c.targets().collect::<Vec<_>>(), run.diacritics, run.min_count)
                .map_err(tokenizer_err(&run.train_corpus))?;
            let mut model_config =
                ModelConfig::new(src.len(), tgt.len()).with_dims(run.emb_dim, run.hidden_dim, run.attn_dim);
            model_config.num_layers = run.num_layers;
            model_config.max_decode_len = run.max_decode_len;
            ::log::info!(
                "training on {} pairs, vocab {}/{}, {} epochs",
                train_c.len(),
                src.len(),
                tgt.len(),
                run.train.epochs
            );
            let started = Instant::now();
            let (ckpt, report) =
                training::train(&train_c, &val_c, &src, &tgt, model_config, &run.train).map_err(training_err)?;
            ::log::info!("trained in {:.1}s", started.elapsed().as_secs_f64());
            ckpt.save(&ckpt_path).map_err(|e| at(&ckpt_path)(e.to_string()))?;
            let mut text = String::from("epoch\ttrain_loss\tval_loss\n");
            for (i, e) in report.epochs.iter().enumerate() {
                text += &format!("{}\t{:.6}\t{:.6}\n", i + 1, e.train_loss, e.val_loss);
            }
            emit(out, &text)
        }
        Command::Translate {
            checkpoint,
            input,
            output,
            max_len,
        } => {
            let ckpt = Checkpoint::load(&checkpoint).map_err(|e| at(&checkpoint)(e.to_string()))?;
            let translator = Translator::from_checkpoint(&ckpt).map_err(training_err)?;
            let max_len = max_len.unwrap_or(ckpt.model_config.max_decode_len);
            let text = std::fs::read_to_string(&input).map_err(|e| at(&input)(e.to_string()))?;
            let mut translated = String::new();
            for (i, line) in text.lines().enumerate() {
                let out = translator.translate(line, max_len).map_err(|e| match e {
                    TrainingError::Tokenizer(e) => at(&input)(format!("line {}: {e}", i + 1)),
                    other => training_err(other),
                })?;
                translated += &out;
                translated.push('\n');
            }
            write_file(&output, translated.as_bytes())
        }
        Command::Evaluate {
            hyp,
            reference,
            mode,
            metric,
            diacritics,
            json,
        } => {
            let mode = match mode {
                Mode::Corpus => EvaluationMode::Corpus,
                Mode::Sentence => EvaluationMode::Sentence,
            };
            let metric = match metric {
                MetricArg::Bleu => Metric::Bleu,
                MetricArg::Gleu => Metric::Gleu,
                MetricArg::Both => Metric::Both,
            };
            let report = metrics::evaluate_files(&hyp, &reference, mode, diacritics.into())
                .map_err(|e: MetricsError| CliError::data(e.to_string()))?;
            if json {
                emit(out, &format!("{}\n", report.to_json()))
            } else {
                emit(out, &report.render(metric))
            }
        }
        Command::CmsServe {
            port,
            data_dir,
            host,
            ui_dir,
        } => {
            let store = Arc::new(CmsStore::open(&data_dir).map_err(cms_err)?);
            ::log::info!("{} session(s) loaded from {}", store.session_ids().len(), data_dir.display());
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| CliError::internal(e.to_string()))?;
            let shutdown = async {
                let _ = tokio::signal::ctrl_c().await;
                ::log::info!("shutting down");
            };
            runtime
                .block_on(crate::cms::serve(store, SocketAddr::new(host, port), ui_dir.as_deref(), shutdown))
                .map_err(|e| CliError::data(format!("{host}:{port}: {e}")))
        }
        Command::CmsExport {
            data_dir,
            session,
            out: csv_path,
        } => {
            let store = CmsStore::open(&data_dir).map_err(cms_err)?;
            let csv = store.export_csv(&session).map_err(cms_err)?;
            write_file(&csv_path, csv.as_bytes())
        }
    }
}
