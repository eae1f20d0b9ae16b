//! The `carmen` command line.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{self, DensityConfig, FlagClass};
use crate::attention::{self, HeatmapLegend, Reduction, SaliencyMap, Upsample, Visualizer};
use crate::config::RunConfig;
use crate::corpus::{ingest, read_manifest, split_and_window, Corpus, SampleWindow, Split};
use crate::encoding::{line_text, save_samples, Lexicon};
use crate::error::{Error, Result};
use crate::models::{build_cnn_with, build_lstm, evaluate_with_lexicon, train, Checkpoint, History, ModelKind, Network};
use crate::phonology::{syllabify, transcribe};
use crate::pipeline::{prepare_dataset, tokenize_corpus, TokenizedCorpus};
use crate::scansion::scan_line;

pub const BUILD_ID: &str = env!("CARMEN_BUILD_ID");

const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (build ", env!("CARMEN_BUILD_ID"), ")");

#[derive(Parser, Debug)]
#[command(name = "carmen", version = LONG_VERSION, about = "Latin hexameter scansion, encoding and authorship models", arg_required_else_help = true)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the phonetic form of each input line.
    Transcribe(TextInput),
    /// Print the foot pattern and syllable tokens of each input line.
    Scan(TextInput),
    /// Print the token text of each input line.
    Tokenize(TextInput),
    /// Tokenize the corpus and write the lexicon.
    BuildLexicon(RunArgs),
    /// Write the lexicon, the window manifest and encoded samples.
    Encode(RunArgs),
    /// Train a model and write its checkpoint and history.
    Train(RunArgs),
    /// Evaluate a checkpoint on one split and write metrics.
    Evaluate(EvaluateArgs),
    /// Render an attention heatmap for one sample.
    Attend(AttendArgs),
    /// Export and analyse the trained syllable embeddings.
    EmbedAnalyze(EmbedArgs),
}

#[derive(Args, Debug)]
struct TextInput {
    /// Input file, one verse per line (default: standard input).
    input: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

/// Configuration file plus per-key overrides; flags win over the file.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML run configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus manifest, one `label = path` per line.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Artifact directory (default: carmen-out).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed for initialization, shuffling and dropout.
    #[arg(long)]
    seed: Option<u64>,
    /// cnn or lstm
    #[arg(long)]
    kind: Option<String>,
    /// full, metre_only or sound_only
    #[arg(long)]
    ablation: Option<String>,
    /// average or max
    #[arg(long)]
    pooling: Option<String>,
    /// Maximum training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Training batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate (default: per model kind).
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long)]
    patience: Option<usize>,
    /// Running-statistics momentum of batch normalization.
    #[arg(long)]
    bn_momentum: Option<f64>,
    /// Recompute batch-normalization statistics over the training set after each epoch.
    #[arg(long)]
    bn_recalibrate: bool,
    /// Lines per sample.
    #[arg(long)]
    window: Option<usize>,
    /// Line offset between consecutive training windows.
    #[arg(long)]
    train_stride: Option<usize>,
    /// Line offset between consecutive validation and test windows.
    #[arg(long)]
    eval_stride: Option<usize>,
    /// Accept a spondee in the fifth foot.
    #[arg(long)]
    spondeiazon: bool,
    /// heterosyllabic or tautosyllabic
    #[arg(long)]
    muta_cum_liquida: Option<String>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Defaults to `model.ckpt` in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// train, val or test
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Args, Debug)]
struct AttendArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Defaults to `model.ckpt` in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Work label of the sample.
    #[arg(long)]
    work: String,
    /// First line of the sample (1-based).
    #[arg(long)]
    start: usize,
    /// vanilla, gradcam or scorecam
    #[arg(long, default_value = "vanilla")]
    visualizer: String,
    /// Convolutional layer for the CAM visualizers (default: the last one).
    #[arg(long)]
    layer: Option<String>,
    /// Target class label (default: the sample's own work).
    #[arg(long)]
    class: Option<String>,
    /// Heatmap path (default: under `attention/` in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mean absolute value instead of maximum across embedding channels.
    #[arg(long)]
    mean_abs: bool,
    /// Nearest-neighbour instead of bilinear upsampling.
    #[arg(long)]
    nearest: bool,
    /// Masked forward passes per batch for scorecam.
    #[arg(long, default_value_t = 16)]
    chunk: usize,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Defaults to `model.ckpt` in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Defaults to `lexicon.tsv` in the output directory.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Random subsets per class for the clustering z-score.
    #[arg(long, default_value_t = 1000)]
    subsets: usize,
    /// Density grid cells per axis.
    #[arg(long, default_value_t = 200)]
    grid: usize,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let d = &mut cfg.data;
        if let Some(v) = &self.manifest {
            d.manifest = Some(v.clone());
        }
        if let Some(v) = &self.output {
            d.output = Some(v.clone());
        }
        if let Some(v) = &self.ablation {
            d.ablation = v.clone();
        }
        if let Some(v) = self.window {
            d.window = v;
        }
        if let Some(v) = self.train_stride {
            d.train_stride = v;
        }
        if let Some(v) = self.eval_stride {
            d.eval_stride = v;
        }
        if self.spondeiazon {
            d.spondeiazon = true;
        }
        if let Some(v) = &self.muta_cum_liquida {
            d.muta_cum_liquida = v.clone();
        }
        if let Some(v) = &self.kind {
            cfg.model.kind = v.clone();
        }
        if let Some(v) = &self.pooling {
            cfg.model.pooling = v.clone();
        }
        let t = &mut cfg.train;
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = Some(v);
        }
        if let Some(v) = self.patience {
            t.patience = v;
        }
        if let Some(v) = self.bn_momentum {
            t.bn_momentum = v;
        }
        if self.bn_recalibrate {
            t.bn_recalibrate = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse `args` (program name first) and run; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already configured: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Transcribe(a) => text_command(&a, |line, _| Ok(transcribe(line)?.to_string())),
        Command::Scan(a) => text_command(&a, |line, cfg| {
            let opts = cfg.scan_options()?;
            let words = syllabify(&transcribe(line)?, opts.muta_cum_liquida)?;
            Ok(match scan_line(&words, &opts) {
                Ok(s) => format!("{}\t{}", s.pattern(), crate::encoding::line_tokens(&s).join(" ")),
                Err(Error::Unscannable(_)) => "-\tunscannable".to_string(),
                Err(e) => return Err(e),
            })
        }),
        Command::Tokenize(a) => text_command(&a, |line, cfg| {
            let t = crate::encoding::tokenize_line(line, &cfg.scan_options()?)?;
            Ok(line_text(&crate::encoding::ablate_all(&t.tokens, cfg.ablation()?)))
        }),
        Command::BuildLexicon(a) => build_lexicon(&a.config()?),
        Command::Encode(a) => encode(&a.config()?),
        Command::Train(a) => train_command(&a.config()?),
        Command::Evaluate(a) => evaluate_command(&a),
        Command::Attend(a) => attend(&a),
        Command::EmbedAnalyze(a) => embed_analyze(&a),
    }
}

fn text_command(a: &TextInput, f: impl Fn(&str, &RunConfig) -> Result<String>) -> Result<()> {
    let cfg = a.run.config()?;
    let reader: Box<dyn BufRead> = match &a.input {
        Some(p) => Box::new(io::BufReader::new(fs::File::open(p).map_err(|e| Error::read(p, e))?)),
        None => Box::new(io::stdin().lock()),
    };
    let mut out = io::stdout().lock();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(out, "{}", f(&line, &cfg)?)?;
    }
    Ok(())
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output();
    fs::create_dir_all(&dir).map_err(|e| Error::write(&dir, e))?;
    Ok(dir)
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let manifest = cfg.manifest()?;
    let corpus = ingest(&read_manifest(manifest)?)?;
    log::info!("corpus: {}", corpus.summary().trim_end());
    Ok(corpus)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::write(path, e))
}

fn build_lexicon(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let out = output_dir(cfg)?;
    let tokens = tokenize_corpus(&corpus, &cfg.scan_options()?, cfg.ablation()?)?;
    let lex = tokens.lexicon()?;
    lex.save(&out.join("lexicon.tsv"))?;
    log::info!("lexicon of {} tokens; {} lines did not scan", lex.size(), tokens.unscanned);
    Ok(())
}

fn encode(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let out = output_dir(cfg)?;
    let data = prepare_dataset(&corpus, &cfg.windows(), &cfg.scan_options()?, cfg.ablation()?)?;
    data.lexicon.save(&out.join("lexicon.tsv"))?;
    let splits = out.join("splits.tsv");
    fs::write(&splits, data.splits.manifest()).map_err(|e| Error::write(&splits, e))?;
    for split in Split::ALL {
        save_samples(&out.join(format!("{}.samples", split.name())), data.get(split), data.lexicon.eol_id())?;
    }
    log::info!(
        "{} train, {} val, {} test windows",
        data.train.len(),
        data.validation.len(),
        data.test.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainReport<'a> {
    kind: &'a str,
    labels: Vec<String>,
    lexicon_size: usize,
    lexicon_fingerprint: String,
    trainable_params: usize,
    history: &'a History,
    config: &'a RunConfig,
}

fn build_model(cfg: &RunConfig, vocab: usize, classes: usize) -> Result<crate::models::ModelSpec> {
    match cfg.kind()? {
        ModelKind::Cnn => build_cnn_with(vocab, classes, cfg.cnn_options()?),
        ModelKind::Lstm => build_lstm(vocab, classes),
    }
}

fn train_command(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let out = output_dir(cfg)?;
    let data = prepare_dataset(&corpus, &cfg.windows(), &cfg.scan_options()?, cfg.ablation()?)?;
    let spec = build_model(cfg, data.lexicon.size(), corpus.n_classes())?;
    let mut net = Network::new(spec, data.lexicon.fingerprint(), cfg.train.seed)?;
    log::info!("{} model, {} trainable parameters", cfg.model.kind, net.trainable_count());
    let outcome = train(&mut net, &data.train, &data.validation, &cfg.train_config())?;
    data.lexicon.save(&out.join("lexicon.tsv"))?;
    Checkpoint::from_network(&net, Some(&outcome.rng)).save(&out.join("model.ckpt"))?;
    write_json(
        &out.join("history.json"),
        &TrainReport {
            kind: net.kind().name(),
            labels: corpus.labels(),
            lexicon_size: data.lexicon.size(),
            lexicon_fingerprint: format!("{:016x}", data.lexicon.fingerprint()),
            trainable_params: net.trainable_count(),
            history: &outcome.history,
            config: cfg,
        },
    )
}

struct Trained {
    net: Network,
    lexicon: Lexicon,
    corpus: Corpus,
    tokens: TokenizedCorpus,
}

fn load_trained(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Trained> {
    let corpus = load_corpus(cfg)?;
    let out = cfg.output();
    let ckpt_path = checkpoint.map_or_else(|| out.join("model.ckpt"), Path::to_path_buf);
    let net = Checkpoint::load(&ckpt_path)?.network()?;
    let lexicon = Lexicon::load(&out.join("lexicon.tsv"))?;
    net.check_lexicon(lexicon.fingerprint())?;
    if net.spec().n_classes != corpus.n_classes() {
        return Err(Error::Config(format!(
            "checkpoint has {} classes, corpus has {}",
            net.spec().n_classes,
            corpus.n_classes()
        )));
    }
    let tokens = tokenize_corpus(&corpus, &cfg.scan_options()?, cfg.ablation()?)?;
    Ok(Trained {
        net,
        lexicon,
        corpus,
        tokens,
    })
}

#[derive(Serialize)]
struct SampleRecord {
    work: String,
    start: usize,
    label: usize,
    prediction: usize,
    logits: Vec<f64>,
}

#[derive(Serialize)]
struct Metrics<'a> {
    split: &'a str,
    samples: usize,
    accuracy: f64,
    loss: f64,
    labels: Vec<String>,
    /// Rows are true classes, columns predictions.
    confusion: Vec<Vec<usize>>,
    per_sample: Vec<SampleRecord>,
    config: &'a RunConfig,
}

fn parse_split(s: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|x| x.name() == s || (s == "validation" && *x == Split::Validation))
        .ok_or_else(|| Error::Config(format!("unknown split {s:?}")))
}

fn evaluate_command(a: &EvaluateArgs) -> Result<()> {
    let cfg = a.run.config()?;
    let split = parse_split(&a.split)?;
    let t = load_trained(&cfg, a.checkpoint.as_deref())?;
    let windows = split_and_window(&t.corpus, &cfg.windows())?;
    let windows = windows.get(split);
    let samples = t.tokens.encode(windows, &t.lexicon)?;
    let e = evaluate_with_lexicon(&t.net, &samples, t.lexicon.fingerprint())?;
    log::info!("{} accuracy {:.4} over {} windows", split.name(), e.accuracy, samples.len());
    let per_sample = windows
        .iter()
        .zip(e.labels.iter().zip(&e.predictions).zip(&e.logits))
        .map(|(w, ((&label, &prediction), logits))| SampleRecord {
            work: w.label.clone(),
            start: w.start,
            label,
            prediction,
            logits: logits.clone(),
        })
        .collect();
    let out = output_dir(&cfg)?;
    write_json(
        &out.join(format!("metrics_{}.json", split.name())),
        &Metrics {
            split: split.name(),
            samples: samples.len(),
            accuracy: e.accuracy,
            loss: e.loss,
            labels: t.corpus.labels(),
            confusion: e.confusion,
            per_sample,
            config: &cfg,
        },
    )
}

#[derive(Serialize)]
struct AttentionSidecar<'a> {
    visualizer: &'a str,
    work: &'a str,
    start: usize,
    class: &'a str,
    layer: Option<&'a str>,
    channel_weights: Option<&'a [f64]>,
    rows: usize,
    cols: usize,
    values: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eol: Option<&'a [f64]>,
}

fn attend(a: &AttendArgs) -> Result<()> {
    let cfg = a.run.config()?;
    let visualizer: Visualizer = a.visualizer.parse()?;
    let t = load_trained(&cfg, a.checkpoint.as_deref())?;
    let class_of = |label: &str| {
        t.corpus
            .class_of(label)
            .ok_or_else(|| Error::Config(format!("no work labelled {label:?}")))
    };
    let work_class = class_of(&a.work)?;
    let work = &t.corpus.works[work_class];
    let window = cfg.data.window;
    if a.start == 0 || a.start + window - 1 > work.line_count() {
        return Err(Error::Config(format!(
            "lines {}..{} outside {} ({} lines)",
            a.start,
            a.start + window - 1,
            a.work,
            work.line_count()
        )));
    }
    let w = SampleWindow {
        label: a.work.clone(),
        class: work_class,
        start: a.start,
        split: Split::Test,
        lines: work.lines[a.start - 1..a.start - 1 + window].to_vec(),
    };
    let sample = t.tokens.encode(std::slice::from_ref(&w), &t.lexicon)?.remove(0);
    let class_label = a.class.clone().unwrap_or_else(|| a.work.clone());
    let class = class_of(&class_label)?;
    let upsample = if a.nearest { Upsample::Nearest } else { Upsample::Bilinear };
    let (map, cam): (SaliencyMap, Option<attention::CamResult>) = match visualizer {
        Visualizer::Vanilla => {
            let r = if a.mean_abs { Reduction::MeanAbs } else { Reduction::MaxAbs };
            (attention::vanilla_saliency(&t.net, &sample, class, r)?, None)
        }
        Visualizer::GradCam => {
            let c = attention::grad_cam(&t.net, &sample, class, a.layer.as_deref(), upsample)?;
            (c.map.clone(), Some(c))
        }
        Visualizer::ScoreCam => {
            let c = attention::score_cam(&t.net, &sample, class, a.layer.as_deref(), upsample, a.chunk)?;
            (c.map.clone(), Some(c))
        }
    };
    let svg_path = match &a.out {
        Some(p) => p.clone(),
        None => {
            let dir = output_dir(&cfg)?.join("attention");
            fs::create_dir_all(&dir).map_err(|e| Error::write(&dir, e))?;
            dir.join(format!("{}_{}_{}_{}.svg", a.work, a.start, a.visualizer, class_label))
        }
    };
    let tokens = t.tokens.window_lines(&w);
    let text: Vec<String> = w.lines.iter().map(|l| l.text.clone()).collect();
    let legend = HeatmapLegend {
        class_label: class_label.clone(),
        model_id: format!("{} {:016x}", t.net.kind().name(), t.net.fingerprint()),
        visualizer: a.visualizer.clone(),
    };
    attention::write_heatmap(&svg_path, &attention::render_heatmap(&map, tokens, &text, &legend)?)?;
    write_json(
        &svg_path.with_extension("json"),
        &AttentionSidecar {
            visualizer: &a.visualizer,
            work: &a.work,
            start: a.start,
            class: &class_label,
            layer: cam.as_ref().map(|c| c.layer.as_str()),
            channel_weights: cam.as_ref().map(|c| c.channel_weights.as_slice()),
            rows: map.rows,
            cols: map.cols,
            values: map.row_major(),
            eol: map.eol.as_deref(),
        },
    )?;
    log::info!("wrote {}", svg_path.display());
    Ok(())
}

#[derive(Serialize)]
struct EmbedReport<'a> {
    method: &'a str,
    tokens: usize,
    explained_variance: [f64; 2],
    explained_ratio: [f64; 2],
    skipped: Vec<(String, usize)>,
    report: analysis::DensityReport,
}

fn embed_analyze(a: &EmbedArgs) -> Result<()> {
    let cfg = a.run.config()?;
    let out = output_dir(&cfg)?.join("embed");
    fs::create_dir_all(&out).map_err(|e| Error::write(&out, e))?;
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| cfg.output().join("model.ckpt"));
    let lex_path = a.lexicon.clone().unwrap_or_else(|| cfg.output().join("lexicon.tsv"));
    let net = Checkpoint::load(&ckpt)?.network()?;
    let lexicon = Lexicon::load(&lex_path)?;
    let matrix = analysis::export_embeddings(&net, &lexicon)?;
    matrix.save(&out.join("embeddings.tsv"))?;
    let proj = analysis::project_2d(&matrix)?;
    let mut coords = String::from("token\tx\ty\n");
    for (tok, c) in matrix.tokens.iter().zip(&proj.coords) {
        coords.push_str(&format!("{tok}\t{:?}\t{:?}\n", c[0], c[1]));
    }
    let coords_path = out.join("coords.tsv");
    fs::write(&coords_path, coords).map_err(|e| Error::write(&coords_path, e))?;
    let (classes, skipped): (Vec<FlagClass>, Vec<FlagClass>) = analysis::flag_classes(&lexicon)
        .into_iter()
        .partition(|c| c.members.len() >= analysis::MIN_CLASS);
    for c in &skipped {
        log::warn!("class {} has {} members; skipped", c.name, c.members.len());
    }
    let cfg_density = DensityConfig {
        subsets: a.subsets,
        grid: a.grid,
        seed: cfg.train.seed,
        ..DensityConfig::default()
    };
    let report = analysis::class_density_report(&proj.coords, &classes, &analysis::syllable_ids(&lexicon), &cfg_density)?;
    for g in &report.densities {
        let p = out.join(format!("density_{}.pgm", g.class));
        fs::write(&p, analysis::density_pgm(g)).map_err(|e| Error::write(&p, e))?;
    }
    for s in &report.stats {
        log::info!(
            "{}: {} members, z = {:.2}{}",
            s.class,
            s.members,
            s.z,
            if s.small_sample { " (small sample)" } else { "" }
        );
    }
    write_json(
        &out.join("stats.json"),
        &EmbedReport {
            method: &proj.method,
            tokens: matrix.rows(),
            explained_variance: proj.explained_variance,
            explained_ratio: proj.explained_ratio,
            skipped: skipped.into_iter().map(|c| (c.name, c.members.len())).collect(),
            report,
        },
    )
}
