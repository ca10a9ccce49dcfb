use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use amanda_core::dialogue::{bundled_kb, load_kb, Thresholds};
use amanda_core::evaluation::{load_mos_csv, load_sus_csv, mos_aggregate, sus_summary, Ingested, MosReport};
use amanda_core::nlu::{bundled_corpus, load_corpus, IntentClassifier, Language, NluTrainConfig};
use amanda_core::signal::{write_wav, GriffinLimConfig};
use amanda_core::tts::{
    load_corpus_dir, synthesize, AudioSettings, ToyRecipe, TrainConfig, Trainer, TtsConfig, TtsModelParams, Vocab,
};
use amanda_service::http::{build_engine, serve, BuildError};
use amanda_service::{ChatEngine, ChatRequest, MemoryStore, ServiceConfig};
use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

/// Error caused by the caller's input rather than the environment.
#[derive(Debug)]
struct Invalid(String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(e: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(Invalid(e.to_string()))
}

#[derive(Parser)]
#[command(name = "amanda", version, about = "Diabetes self-care agent: training, synthesis, evaluation and serving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the bidirectional TTS model and write a checkpoint.
    TrainTts {
        /// Corpus directory with metadata.csv and WAVs.
        #[arg(long, required_unless_present = "toy", conflicts_with = "toy")]
        data: Option<PathBuf>,
        /// Use the synthetic copy-task corpus and model instead of --data.
        #[arg(long)]
        toy: bool,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Defaults to 32 (8 with --toy).
        #[arg(long)]
        batch: Option<usize>,
        /// Initial learning rate; defaults to 1e-3 (1e-2 with --toy).
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long = "lambda", default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        log_every: usize,
    },
    /// Synthesize speech from a checkpoint to a WAV file.
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        out: PathBuf,
        /// Frame cap; defaults to 10 per character, at least 20.
        #[arg(long)]
        max_frames: Option<usize>,
        #[arg(long, default_value_t = 32)]
        gl_iters: usize,
    },
    /// Train the intent classifier.
    TrainNlu {
        /// Labelled utterances (JSON); the bundled corpus when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Terminal chat session.
    Chat {
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "en")]
        lang: Language,
    },
    /// Aggregate listening-test scores.
    EvalMos {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Score System Usability Scale questionnaires.
    EvalSus {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service.
    Serve {
        /// JSON config; falls back to $AMANDA_CONFIG.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<Invalid>()) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::TrainTts { data, toy, steps, batch, lr, lambda, seed, out, log_every } => {
            train_tts(data.as_deref(), toy, steps, batch, lr, lambda, seed, &out, log_every)
        }
        Command::Synth { ckpt, text, out, max_frames, gl_iters } => synth(&ckpt, &text, &out, max_frames, gl_iters),
        Command::TrainNlu { corpus, out, epochs, lr, seed } => train_nlu(corpus.as_deref(), &out, epochs, lr, seed),
        Command::Chat { kb, model, lang } => chat(kb.as_deref(), model.as_deref(), lang),
        Command::EvalMos { csv, json } => eval_mos(&csv, json),
        Command::EvalSus { csv, json } => eval_sus(&csv, json),
        Command::Serve { config, port } => serve_cmd(config.as_deref(), port),
    }
}

#[allow(clippy::too_many_arguments)]
fn train_tts(
    data: Option<&Path>,
    toy: bool,
    steps: usize,
    batch: Option<usize>,
    lr: Option<f64>,
    lambda: f64,
    seed: u64,
    out: &Path,
    log_every: usize,
) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("--lambda {lambda} must be a non-negative number")));
    }
    let (corpus, params, mut cfg) = if toy {
        let recipe = ToyRecipe::standard(seed);
        (recipe.data()?, recipe.init_params()?, recipe.train)
    } else {
        let dir = data.expect("clap requires --data without --toy");
        let audio = AudioSettings::default();
        let corpus = load_corpus_dir(dir, &audio, &Vocab::default()).map_err(invalid)?;
        let params = TtsModelParams::init(TtsConfig::default(), audio, seed)?;
        (corpus, params, TrainConfig { seed, ..TrainConfig::default() })
    };
    if corpus.is_empty() {
        return Err(invalid("training corpus is empty"));
    }
    if let Some(b) = batch {
        if b == 0 {
            return Err(invalid("--batch must be positive"));
        }
        cfg.batch_size = b;
    }
    if let Some(lr) = lr {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(invalid(format!("--lr {lr} must be positive")));
        }
        cfg.schedule = cfg.schedule.with_initial_lr(lr);
    }
    cfg.lambda = lambda;
    tracing::info!("{} utterances, {} parameters, {steps} steps", corpus.len(), params.parameter_count());
    let mut trainer = Trainer::new(params, cfg)?;
    for step in 1..=steps {
        let batch = trainer.sample_batch(&corpus);
        let loss = trainer.train_step(&batch)?;
        if log_every > 0 && (step % log_every == 0 || step == 1 || step == steps) {
            tracing::info!("step {step}: total {:.5} stop {:.5}", loss.total, loss.l_stop);
        }
    }
    trainer.params.save(out, trainer.schedule_json()).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} after {steps} steps", out.display());
    Ok(())
}

fn synth(ckpt: &Path, text: &str, out: &Path, max_frames: Option<usize>, gl_iters: usize) -> Result<()> {
    let params = TtsModelParams::load(ckpt).map_err(invalid)?;
    let seq = Vocab::default().encode(text).map_err(invalid)?;
    if seq.ids().iter().any(|&i| i >= params.config.vocab_size) {
        return Err(invalid("text uses symbols outside the checkpoint vocabulary"));
    }
    let cap = max_frames.unwrap_or((10 * seq.len()).max(20));
    let output = synthesize(&seq, &params, cap).map_err(invalid)?;
    let clip = params.audio.vocode(&output.mel_after, GriffinLimConfig { iterations: gl_iters, seed: 0 })?;
    write_wav(out, &clip).with_context(|| format!("writing {}", out.display()))?;
    let summary = serde_json::json!({
        "stop_step": output.stop_step,
        "wav_frames": params.audio.frame_count(clip.samples().len()),
        "samples": clip.samples().len(),
        "sample_rate": clip.sample_rate(),
        "out": out,
    });
    println!("{summary}");
    Ok(())
}

fn train_nlu(corpus: Option<&Path>, out: &Path, epochs: Option<usize>, lr: Option<f64>, seed: u64) -> Result<()> {
    let examples = match corpus {
        Some(p) => load_corpus(p).map_err(invalid)?,
        None => bundled_corpus(),
    };
    let defaults = NluTrainConfig::default();
    let cfg = NluTrainConfig { epochs: epochs.unwrap_or(defaults.epochs), lr: lr.unwrap_or(defaults.lr), seed };
    let (clf, initial, last) = IntentClassifier::train_with_trace(&examples, &cfg).map_err(invalid)?;
    let acc = clf.accuracy(&examples)?;
    clf.save(out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{} examples, {} intents; loss {initial:.4} -> {last:.4}; training accuracy {:.1}%; wrote {}",
        examples.len(),
        clf.labels().len(),
        100.0 * acc,
        out.display()
    );
    Ok(())
}

fn chat(kb: Option<&Path>, model: Option<&Path>, lang: Language) -> Result<()> {
    let kb = match kb {
        Some(p) => load_kb(p).map_err(invalid)?,
        None => bundled_kb(),
    };
    let nlu = match model {
        Some(p) => IntentClassifier::load(p).map_err(invalid)?,
        None => IntentClassifier::train(&bundled_corpus(), &NluTrainConfig::default())?,
    };
    let engine = ChatEngine::new(kb, Arc::new(nlu), Thresholds::default(), Arc::new(MemoryStore::default()), None, Path::new("."))?;
    let session = "terminal".to_string();
    let mut language = lang;
    engine.create_session(Some(session.clone()), language)?;
    println!("Type a question (/lang en|zh to switch, /quit to leave).");
    let stdin = std::io::stdin();
    let mut stdout = std::io::stdout();
    loop {
        print!("> ");
        stdout.flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim() == "/quit" {
            break;
        }
        if let Some(code) = line.trim().strip_prefix("/lang ") {
            match code.trim().parse() {
                Ok(l) => language = l,
                Err(e) => println!("{e}"),
            }
            continue;
        }
        let reply = engine.chat(&ChatRequest { session_id: session.clone(), text: line.to_string(), language: Some(language) })?;
        println!("[{:?}] {}", reply.kind, reply.reply_text);
        for s in &reply.suggestions {
            println!("  * {s}");
        }
    }
    Ok(())
}

fn report_row_errors<T>(ingested: &Ingested<T>) -> Result<()> {
    for e in &ingested.errors {
        eprintln!("{e}");
    }
    if ingested.errors.is_empty() {
        Ok(())
    } else {
        Err(invalid(format!("{} invalid row(s)", ingested.errors.len())))
    }
}

fn eval_mos(csv: &Path, json: bool) -> Result<()> {
    let ingested = load_mos_csv(csv).map_err(invalid)?;
    report_row_errors(&ingested)?;
    if ingested.rows.is_empty() {
        return Err(invalid("no MOS responses"));
    }
    let report = MosReport::new(mos_aggregate(&ingested.rows).map_err(invalid)?);
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn eval_sus(csv: &Path, json: bool) -> Result<()> {
    let ingested = load_sus_csv(csv).map_err(invalid)?;
    report_row_errors(&ingested)?;
    let summary = sus_summary(&ingested.rows).map_err(invalid)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{}", summary.to_text());
    }
    Ok(())
}

fn serve_cmd(config: Option<&Path>, port: Option<u16>) -> Result<()> {
    let mut cfg = ServiceConfig::locate(config).map_err(invalid)?;
    if let Some(p) = port {
        cfg.port = p;
    }
    let engine = build_engine(&cfg).map_err(|e| match e {
        BuildError::Config(m) => invalid(m),
        BuildError::Runtime(m) => anyhow!(m),
    })?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let addr = format!("{}:{}", cfg.bind, cfg.port);
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, Arc::new(engine), cfg.static_dir.clone(), shutdown).await?;
        Ok(())
    })
}
