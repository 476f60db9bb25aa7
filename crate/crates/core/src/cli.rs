//! The `bdma` command line.
//!
//! Settings resolve as defaults, then an optional `key = value` config file
//! (`--config`), then flags. Structured results (reports, summaries) go to
//! stdout as JSON; logs go to stderr.
//!
//! Exit statuses: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use log::{info, warn};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dictionary::{BilingualDictionary, SampleMode};
use crate::embeddings::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linalg::{gaussian, normalize_rows};
use crate::losses::{grad_check, kink_margin, CandidatePools, LossKind};
use crate::mapper::{Mapper, MapperKind, Sharing, MODEL_FORMAT_VERSION};
use crate::retrieval::{precision_at_k, translate, Direction, RetrievalMethod};
use crate::synth::{generate, SynthSpec, TransformKind};
use crate::trainer::{train, PoolPolicy, TrainingConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Minimum `|cos|` a gradcheck batch must keep away from the kink at zero.
const KINK_GUARD: f64 = 1e-2;

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::NonFiniteLoss { .. } | Error::NonFinite(_) | Error::GradCheck { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Every setting a subcommand may read, after merging all sources.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainingConfig,
    /// Cap on training pairs after the unique filter.
    pub max_pairs: usize,
    pub unique_filter: bool,
    /// Tail fraction of the training pairs held out when no validation
    /// dictionary is given.
    pub val_fraction: f64,
    /// Run normalize, center, normalize on loaded embeddings.
    pub preprocess: bool,
    pub method: MethodName,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodName {
    Nn,
    Csls,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainingConfig::default(),
            max_pairs: 5000,
            unique_filter: true,
            val_fraction: 0.1,
            preprocess: true,
            method: MethodName::Csls,
            threads: None,
        }
    }
}

/// Keys accepted in config files.
pub const CONFIG_KEYS: &[&str] = &[
    "batch_size",
    "learning_rate",
    "lr_decay",
    "lr_shrink",
    "map_beta",
    "ortho",
    "max_vocab",
    "epochs",
    "loss",
    "rcsls_k",
    "rcsls_pool",
    "arch",
    "hidden",
    "sharing",
    "seed",
    "k",
    "val_pool",
    "max_pairs",
    "unique_filter",
    "val_fraction",
    "preprocess",
    "method",
    "threads",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on/off, got {value:?}"))),
    }
}

impl RunConfig {
    /// Set one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "batch_size" => t.batch_size = parse_num(key, value)?,
            "learning_rate" => t.learning_rate = parse_num(key, value)?,
            "lr_decay" => t.lr_decay = parse_num(key, value)?,
            "lr_shrink" => t.lr_shrink = parse_num(key, value)?,
            "map_beta" => t.map_beta = parse_num(key, value)?,
            "ortho" => t.ortho = parse_bool(key, value)?,
            "max_vocab" => t.max_vocab = parse_num(key, value)?,
            "epochs" => t.epochs = parse_num(key, value)?,
            "loss" => {
                t.loss = LossKind::parse(value)
                    .ok_or_else(|| Error::Config(format!("loss: unknown kind {value:?}")))?
            }
            "rcsls_k" => t.rcsls_k = parse_num(key, value)?,
            "rcsls_pool" => {
                t.pool = match value {
                    "full" => PoolPolicy::Full,
                    n => PoolPolicy::Sampled(parse_num(key, n)?),
                }
            }
            "arch" => {
                t.kind = match value {
                    "linear" => MapperKind::Linear,
                    "ffn" => MapperKind::Ffn,
                    _ => return Err(Error::Config(format!("arch: expected linear or ffn, got {value:?}"))),
                }
            }
            "hidden" => t.hidden = parse_num(key, value)?,
            "sharing" => {
                t.sharing = match value {
                    "shared" => Sharing::Shared,
                    "independent" => Sharing::Independent,
                    _ => return Err(Error::Config(format!("sharing: expected shared or independent, got {value:?}"))),
                }
            }
            "seed" => t.seed = parse_num(key, value)?,
            "k" => t.eval_k = parse_num(key, value)?,
            "val_pool" => {
                t.val_pool = match value {
                    "full" => None,
                    n => Some(parse_num(key, n)?),
                }
            }
            "max_pairs" => self.max_pairs = parse_num(key, value)?,
            "unique_filter" => self.unique_filter = parse_bool(key, value)?,
            "val_fraction" => {
                let f: f64 = parse_num(key, value)?;
                if !(f > 0.0 && f < 1.0) {
                    return Err(Error::Config("val_fraction must be in (0, 1)".into()));
                }
                self.val_fraction = f;
            }
            "preprocess" => self.preprocess = parse_bool(key, value)?,
            "method" => {
                self.method = match value {
                    "nn" => MethodName::Nn,
                    "csls" => MethodName::Csls,
                    _ => return Err(Error::Config(format!("method: expected nn or csls, got {value:?}"))),
                }
            }
            "threads" => {
                let n: usize = parse_num(key, value)?;
                if n == 0 {
                    return Err(Error::Config("threads must be at least 1".into()));
                }
                self.threads = Some(n);
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply a config file body: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("config line {}: expected `key = value`", no + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then `flags` in order.
    pub fn resolve(file: Option<&Path>, flags: &[(&str, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for (key, value) in flags {
            cfg.set(key, value)?;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn retrieval(&self) -> RetrievalMethod {
        match self.method {
            MethodName::Nn => RetrievalMethod::Nn,
            MethodName::Csls => RetrievalMethod::Csls { k: self.train.eval_k },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "bdma", about = "Bi-directional manifold alignment of word embeddings")]
struct Cli {
    /// `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize, center and renormalize a .vec file.
    Preprocess(PreprocessArgs),
    /// Write a synthetic benchmark with a known ground-truth map.
    Synth(SynthArgs),
    /// Train a mapper and write the model and per-epoch report.
    Train(TrainArgs),
    /// Precision@1/5/10 of a model on a dictionary.
    Evaluate(EvaluateArgs),
    /// Ranked translations of a few words.
    Translate(TranslateArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    max_vocab: Option<usize>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    d: usize,
    /// identity, orthogonal, general-linear or nonlinear.
    #[arg(long, default_value = "orthogonal")]
    kind: String,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.9)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.05)]
    val_frac: f64,
    #[arg(long, default_value_t = 0.05)]
    test_frac: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Flags shared by the subcommands that load embeddings.
#[derive(Args, Debug)]
struct EmbArgs {
    #[arg(long)]
    src_emb: PathBuf,
    #[arg(long)]
    tgt_emb: PathBuf,
    #[arg(long)]
    max_vocab: Option<usize>,
    /// Skip normalize, center, normalize on load.
    #[arg(long, action = ArgAction::SetTrue)]
    no_preprocess: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    emb: EmbArgs,
    #[arg(long)]
    train_dict: PathBuf,
    #[arg(long)]
    val_dict: Option<PathBuf>,
    /// mse, cos, rcsls or cos+rcsls.
    #[arg(long)]
    loss: Option<String>,
    /// linear or ffn.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    hidden: Option<usize>,
    /// shared or independent reverse parameters.
    #[arg(long)]
    sharing: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    rcsls_k: Option<usize>,
    #[arg(long)]
    map_beta: Option<f64>,
    /// on or off.
    #[arg(long)]
    ortho: Option<String>,
    #[arg(long)]
    max_pairs: Option<usize>,
    #[arg(long, action = ArgAction::SetTrue)]
    no_unique_filter: bool,
    #[arg(long)]
    model_out: PathBuf,
    /// JSON lines, one per epoch.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    emb: EmbArgs,
    #[arg(long)]
    eval_dict: PathBuf,
    /// fwd or rev.
    #[arg(long, default_value = "fwd")]
    direction: String,
    /// nn or csls.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Cap on the mapped query-side pool used for CSLS.
    #[arg(long)]
    pool: Option<usize>,
    #[arg(long, action = ArgAction::SetTrue)]
    no_unique_filter: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    emb: EmbArgs,
    #[arg(long, default_value = "fwd")]
    direction: String,
    /// Comma-separated tokens.
    #[arg(long, value_delimiter = ',', required = true)]
    words: Vec<String>,
    #[arg(long)]
    method: Option<String>,
    /// Translations per word.
    #[arg(long, default_value_t = 5)]
    top: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value = "cos+rcsls")]
    loss: String,
    #[arg(long, default_value = "linear")]
    arch: String,
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    #[arg(long, default_value = "shared")]
    sharing: String,
    #[arg(long, default_value_t = 12)]
    d: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Include the orthogonal penalty with this weight.
    #[arg(long)]
    map_beta: Option<f64>,
}

fn version_line() -> &'static str {
    Box::leak(format!("{} (model format {MODEL_FORMAT_VERSION})", crate::VERSION).into_boxed_str())
}

/// Run the command line and return the process exit status.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let matches = match Cli::command().version(version_line()).try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut flags: Vec<(&str, String)> = Vec::new();
    if let Some(n) = cli.threads {
        flags.push(("threads", n.to_string()));
    }
    collect_flags(&cli.command, &mut flags);
    let cfg = RunConfig::resolve(cli.config.as_deref(), &flags)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Preprocess(a) => run_preprocess(a, &cfg),
        Command::Synth(a) => run_synth(a),
        Command::Train(a) => run_train(a, &cfg),
        Command::Evaluate(a) => run_evaluate(a, &cfg),
        Command::Translate(a) => run_translate(a, &cfg),
        Command::Gradcheck(a) => run_gradcheck(a),
    })
}

/// Flags that override config keys, in a fixed order.
fn collect_flags(cmd: &Command, out: &mut Vec<(&'static str, String)>) {
    fn push<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
        if let Some(v) = v {
            out.push((key, v.to_string()));
        }
    }
    let emb = |out: &mut Vec<(&'static str, String)>, e: &EmbArgs| {
        push(out, "max_vocab", &e.max_vocab);
        if e.no_preprocess {
            out.push(("preprocess", "off".into()));
        }
    };
    match cmd {
        Command::Preprocess(a) => push(out, "max_vocab", &a.max_vocab),
        Command::Synth(_) | Command::Gradcheck(_) => {}
        Command::Train(a) => {
            emb(out, &a.emb);
            push(out, "loss", &a.loss);
            push(out, "arch", &a.arch);
            push(out, "hidden", &a.hidden);
            push(out, "sharing", &a.sharing);
            push(out, "epochs", &a.epochs);
            push(out, "seed", &a.seed);
            push(out, "batch_size", &a.batch_size);
            push(out, "learning_rate", &a.learning_rate);
            push(out, "rcsls_k", &a.rcsls_k);
            push(out, "map_beta", &a.map_beta);
            push(out, "ortho", &a.ortho);
            push(out, "max_pairs", &a.max_pairs);
            if a.no_unique_filter {
                out.push(("unique_filter", "off".into()));
            }
        }
        Command::Evaluate(a) => {
            emb(out, &a.emb);
            push(out, "method", &a.method);
            push(out, "k", &a.k);
            push(out, "val_pool", &a.pool);
            push(out, "seed", &a.seed);
            if a.no_unique_filter {
                out.push(("unique_filter", "off".into()));
            }
        }
        Command::Translate(a) => {
            emb(out, &a.emb);
            push(out, "method", &a.method);
            push(out, "seed", &a.seed);
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

fn load_embeddings(path: &Path, cfg: &RunConfig) -> Result<EmbeddingSet> {
    let (set, stats) = EmbeddingSet::parse_vec(BufReader::new(File::open(path)?), cfg.train.max_vocab)?;
    if stats.duplicates_skipped > 0 {
        warn!("{}: skipped {} duplicate tokens", path.display(), stats.duplicates_skipped);
    }
    info!("{}: {} words, dim {}", path.display(), set.len(), set.dim());
    if cfg.preprocess {
        set.preprocess()
    } else {
        Ok(set)
    }
}

fn load_dictionary(path: &Path) -> Result<BilingualDictionary> {
    BilingualDictionary::parse(BufReader::new(File::open(path)?))
}

fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "fwd" | "forward" => Ok(Direction::Forward),
        "rev" | "reverse" => Ok(Direction::Reverse),
        _ => Err(Error::Config(format!("direction: expected fwd or rev, got {s:?}"))),
    }
}

fn run_preprocess(a: &PreprocessArgs, cfg: &RunConfig) -> Result<()> {
    let (set, stats) = EmbeddingSet::parse_vec(BufReader::new(File::open(&a.input)?), cfg.train.max_vocab)?;
    let out = set.preprocess()?;
    out.write_vec(BufWriter::new(File::create(&a.output)?))?;
    #[derive(Serialize)]
    struct Summary {
        words: usize,
        dim: usize,
        duplicates_skipped: usize,
    }
    print_json(&Summary {
        words: out.len(),
        dim: out.dim(),
        duplicates_skipped: stats.duplicates_skipped,
    })
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n: a.n,
        d: a.d,
        noise: a.noise,
        kind: a.kind.parse::<TransformKind>()?,
        seed: a.seed,
        train_frac: a.train_frac,
        val_frac: a.val_frac,
        test_frac: a.test_frac,
        ..SynthSpec::default()
    };
    let data = generate(&spec)?;
    fs::create_dir_all(&a.out_dir)?;
    data.src.write_vec(BufWriter::new(File::create(a.out_dir.join("src.vec"))?))?;
    data.tgt.write_vec(BufWriter::new(File::create(a.out_dir.join("tgt.vec"))?))?;
    for (name, dict) in [("train.dict", &data.train), ("val.dict", &data.val), ("test.dict", &data.test)] {
        fs::write(a.out_dir.join(name), dict.to_text())?;
    }
    #[derive(Serialize)]
    struct Summary {
        n: usize,
        d: usize,
        kind: String,
        seed: u64,
        train: usize,
        val: usize,
        test: usize,
    }
    print_json(&Summary {
        n: spec.n,
        d: spec.d,
        kind: spec.kind.to_string(),
        seed: spec.seed,
        train: data.train.len(),
        val: data.val.len(),
        test: data.test.len(),
    })
}

fn run_train(a: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    let src = load_embeddings(&a.emb.src_emb, cfg)?;
    let tgt = load_embeddings(&a.emb.tgt_emb, cfg)?;
    let mut dict = load_dictionary(&a.train_dict)?;
    if cfg.unique_filter {
        dict = dict.filter_unique();
    }
    dict = dict.sample_unique(cfg.max_pairs, SampleMode::Head, cfg.train.seed);
    let (train_dict, val_dict) = match &a.val_dict {
        Some(p) => (dict, load_dictionary(p)?),
        None => dict.split_tail(cfg.val_fraction),
    };
    let pairs = train_dict.bind(&src, &tgt)?;
    info!(
        "{} training pairs ({} source OOV, {} target OOV)",
        pairs.len(),
        pairs.src_oov,
        pairs.tgt_oov
    );
    let (val_groups, _) = val_dict.eval_groups(&src, &tgt)?;
    let (mapper, report) = train(&src, &tgt, &pairs, &val_groups, &cfg.train)?;
    mapper.save(&a.model_out)?;
    if let Some(path) = &a.report_out {
        fs::write(path, report.to_json_lines())?;
    }
    info!("trained in {:.2?}", report.wall_time);
    print_json(&report)
}

fn run_evaluate(a: &EvaluateArgs, cfg: &RunConfig) -> Result<()> {
    let mapper = Mapper::load(&a.model)?;
    let src = load_embeddings(&a.emb.src_emb, cfg)?;
    let tgt = load_embeddings(&a.emb.tgt_emb, cfg)?;
    let mut dict = load_dictionary(&a.eval_dict)?;
    if cfg.unique_filter {
        dict = dict.filter_unique();
    }
    let direction = parse_direction(&a.direction)?;
    let (groups, bound) = match direction {
        Direction::Forward => dict.eval_groups(&src, &tgt)?,
        Direction::Reverse => dict.reversed().eval_groups(&tgt, &src)?,
    };
    let mut report = precision_at_k(&mapper, direction, &groups, &src, &tgt, cfg.retrieval(), cfg.train.val_pool)?;
    (report.src_oov, report.tgt_oov) = match direction {
        Direction::Forward => (bound.src_oov, bound.tgt_oov),
        Direction::Reverse => (bound.tgt_oov, bound.src_oov),
    };
    print_json(&report)
}

fn run_translate(a: &TranslateArgs, cfg: &RunConfig) -> Result<()> {
    let mapper = Mapper::load(&a.model)?;
    let src = load_embeddings(&a.emb.src_emb, cfg)?;
    let tgt = load_embeddings(&a.emb.tgt_emb, cfg)?;
    let direction = parse_direction(&a.direction)?;
    let words: Vec<&str> = a.words.iter().map(String::as_str).collect();
    let results = translate(&mapper, &words, direction, &src, &tgt, cfg.retrieval(), a.top)?;
    #[derive(Serialize)]
    struct Entry<'a> {
        word: &'a str,
        translations: Option<Vec<String>>,
    }
    let entries: Vec<Entry> = words
        .iter()
        .zip(results)
        .map(|(w, t)| Entry {
            word: w,
            translations: t,
        })
        .collect();
    print_json(&entries)
}

fn run_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    cfg.set("loss", &a.loss)?;
    cfg.set("arch", &a.arch)?;
    cfg.set("sharing", &a.sharing)?;
    if a.d == 0 || a.batch == 0 || a.hidden == 0 {
        return Err(Error::Config("d, batch and hidden must be at least 1".into()));
    }
    let kind = cfg.train.loss;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let rand_unit = |rows: usize, rng: &mut ChaCha8Rng| -> Array2<f64> { normalize_rows(gaussian(rows, a.d, rng).view()) };
    let pool_rows = (4 * a.batch).max(10 + 1);
    let pool_t = rand_unit(pool_rows, &mut rng);
    let pool_s = rand_unit(pool_rows, &mut rng);
    let pools = CandidatePools {
        target: pool_t.view(),
        source: pool_s.view(),
        k: 10,
    };
    // Random weights rather than the identity start, so every entry matters.
    let mapper = random_mapper(cfg.train.kind, a.d, a.hidden, cfg.train.sharing, &mut rng)?;
    // Redraw batches that sit on the |cos| kink, where no derivative exists.
    let (xs, xt) = loop {
        let xs = rand_unit(a.batch, &mut rng);
        let xt = rand_unit(a.batch, &mut rng);
        if kink_margin(&mapper, xs.view(), xt.view())? >= KINK_GUARD {
            break (xs, xt);
        }
    };
    let report = grad_check(&mapper, xs.view(), xt.view(), kind, Some(&pools), a.map_beta, a.eps, a.tolerance)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        loss: &'a str,
        arch: &'a str,
        max_rel_err: f64,
        per_tensor: &'a [f64],
        worst: (usize, usize),
        tolerance: f64,
    }
    print_json(&Summary {
        loss: kind.name(),
        arch: &a.arch,
        max_rel_err: report.max_rel_err,
        per_tensor: &report.per_tensor,
        worst: report.worst,
        tolerance: report.tolerance,
    })
}

fn random_mapper(kind: MapperKind, d: usize, h: usize, sharing: Sharing, rng: &mut ChaCha8Rng) -> Result<Mapper> {
    use crate::mapper::Network;
    let mut net = || match kind {
        MapperKind::Linear => Network::Linear {
            w: gaussian(d, d, rng) / (d as f64).sqrt(),
        },
        MapperKind::Ffn => Network::Ffn {
            w1: gaussian(h, d, rng) / (d as f64).sqrt(),
            w2: gaussian(d, h, rng) / (h as f64).sqrt(),
        },
    };
    let forward = net();
    let reverse = match sharing {
        Sharing::Shared => None,
        Sharing::Independent => Some(net()),
    };
    Mapper::from_networks(forward, reverse)
}
