//! The `dcot` command line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{build_vocabulary, select_prototypes, tokenize, vectorize, Corpus, TokenizerConfig};
use crate::encoder::{CorruptionConfig, DEFAULT_MAX_DIM, DEFAULT_RIDGE};
use crate::error::DcotError;
use crate::eval::{compare_representations, LabeledCorpus, Metric};
use crate::model_io;
use crate::stack::{train_stack_with_fits, DcotModel, StackConfig};
use crate::synthetic::{synonym_corpus, SynonymCorpusConfig};
use crate::verify::{self, VerifyConfig};

#[derive(Debug, Parser)]
#[command(name = "dcot", version, about = "Marginalized denoising encoders for bag-of-words text")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn a stacked model from a line corpus (one document per line).
    Train(TrainArgs),
    /// Encode a line corpus with a trained model.
    Transform(TransformArgs),
    /// Check the closed form against explicit-corruption references.
    Verify(VerifyArgs),
    /// Compare kNN accuracy on raw counts and on model output.
    Eval(EvalArgs),
    /// Write the seeded synonym corpus (corpus.txt and labeled.tsv).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Number of prototype terms r.
    #[arg(long)]
    pub prototypes: usize,
    /// Probability a feature survives corruption, in (0,1].
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub corruption: f64,
    /// Number of stacked layers l.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    /// Ridge coefficient relative to the mean diagonal of E[Q].
    #[arg(long, default_value_t = DEFAULT_RIDGE, allow_negative_numbers = true)]
    pub ridge: f64,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    /// Largest vocabulary accepted for dense scatter accumulation.
    #[arg(long, default_value_t = DEFAULT_MAX_DIM)]
    pub max_dim: usize,
    /// Keep layer outputs linear instead of squashing them with tanh.
    #[arg(long)]
    pub no_squash: bool,
    /// Keep token case.
    #[arg(long)]
    pub keep_case: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub keep_case: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Feature count of the synthetic corpora.
    #[arg(long, default_value_t = 10)]
    pub dims: usize,
    #[arg(long, default_value_t = 20)]
    pub docs: usize,
    #[arg(long, default_value_t = 3)]
    pub prototypes: usize,
    /// Survival probability used by the Monte-Carlo check.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub corruption: f64,
    /// Largest number of corrupted copies per document.
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 5)]
    pub mc_seeds: usize,
    /// Run only the exhaustive enumeration check.
    #[arg(long)]
    pub enumerate: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled line corpus: `label<TAB>text`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// cosine or euclidean.
    #[arg(long, default_value = "cosine")]
    pub metric: String,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub keep_case: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// A failure at a named pipeline stage, reported on one line.
#[derive(Debug)]
struct Failure {
    stage: &'static str,
    message: String,
}

fn at<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> Failure {
    move |e| Failure {
        stage,
        message: e.to_string(),
    }
}

fn fail(stage: &'static str, message: impl Into<String>) -> Failure {
    Failure {
        stage,
        message: message.into(),
    }
}

type CmdResult = std::result::Result<i32, Failure>;

fn tokenizer(keep_case: bool) -> TokenizerConfig {
    TokenizerConfig { lowercase: !keep_case }
}

fn read_lines(path: &Path, stage: &'static str) -> std::result::Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fail(stage, DcotError::Io(e).to_string()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn write_file(path: &Path, bytes: &[u8], stage: &'static str) -> std::result::Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| fail(stage, DcotError::Io(e).to_string()))
}

fn load_model(path: &Path) -> std::result::Result<DcotModel, Failure> {
    let file = fs::File::open(path).map_err(|e| fail("loading model", DcotError::Io(e).to_string()))?;
    model_io::load(std::io::BufReader::new(file)).map_err(at("loading model"))
}

fn validate_train(args: &TrainArgs) -> std::result::Result<(), Failure> {
    let v = |msg: &str| Err(fail("validating arguments", msg));
    if !(args.corruption > 0.0 && args.corruption <= 1.0) {
        return v("corruption survival probability must be in (0,1]");
    }
    if args.prototypes < 1 {
        return v("prototype count must be at least 1");
    }
    if args.layers < 1 {
        return v("layer count must be at least 1");
    }
    if !(args.ridge.is_finite() && args.ridge >= 0.0) {
        return v("ridge must be non-negative");
    }
    if args.min_count < 1 {
        return v("min-count must be at least 1");
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> CmdResult {
    validate_train(args)?;
    let tok = tokenizer(args.keep_case);
    let lines = read_lines(&args.input, "reading corpus")?;
    let token_docs: Vec<Vec<String>> = lines.iter().map(|l| tokenize(l, &tok)).collect();
    let vocab = build_vocabulary(&token_docs, args.min_count).map_err(at("building vocabulary"))?;
    let prototypes = select_prototypes(&vocab, args.prototypes).map_err(at("selecting prototypes"))?;
    let docs = token_docs.iter().map(|t| vectorize(t, &vocab)).collect();
    let corpus = Corpus::new(vocab.len(), docs).map_err(at("vectorizing"))?;
    let config = StackConfig {
        corruption: CorruptionConfig {
            p: args.corruption,
            ridge: args.ridge,
            max_dim: args.max_dim,
        },
        layers: args.layers,
        squash: !args.no_squash,
    };
    let (model, fits) = train_stack_with_fits(vocab, &corpus, prototypes, &config).map_err(at("training"))?;
    let bytes = model_io::save_to_vec(&model);
    write_file(&args.out, &bytes, "writing model")?;

    println!("documents: {}", corpus.n());
    println!("d: {}", model.d());
    println!("r: {}", model.r());
    println!("l: {}", model.depth());
    println!("p: {}", model.p());
    for (k, fit) in fits.iter().enumerate() {
        println!(
            "layer {}: shape {}x{} ridge {:.3e} residual {:.3e}",
            k + 1,
            fit.weights.r(),
            fit.weights.input_dim() + 1,
            fit.ridge,
            fit.residual
        );
    }
    println!("model: {} ({} bytes)", args.out.display(), bytes.len());
    Ok(0)
}

/// One output line: `i:c i:c<TAB>z1 z1 ...<TAB>z2 ...`.
pub fn format_representation(rep: &crate::stack::DenseRepresentation) -> String {
    let mut line = String::new();
    for (n, &(i, c)) in rep.original.entries().iter().enumerate() {
        if n > 0 {
            line.push(' ');
        }
        let _ = write!(line, "{i}:{c}");
    }
    for z in &rep.layer_outputs {
        line.push('\t');
        for (n, v) in z.iter().enumerate() {
            if n > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{v}");
        }
    }
    line
}

fn cmd_transform(args: &TransformArgs) -> CmdResult {
    let model = load_model(&args.model)?;
    let lines = read_lines(&args.input, "reading corpus")?;
    let tok = tokenizer(args.keep_case);
    let mut out = String::new();
    for line in &lines {
        let x = vectorize(&tokenize(line, &tok), model.vocab());
        let rep = model.transform(&x).map_err(at("transforming"))?;
        out.push_str(&format_representation(&rep));
        out.push('\n');
    }
    match &args.out {
        Some(path) => write_file(path, out.as_bytes(), "writing output")?,
        None => print!("{out}"),
    }
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> CmdResult {
    if !(args.corruption > 0.0 && args.corruption <= 1.0) {
        return Err(fail(
            "validating arguments",
            "corruption survival probability must be in (0,1]",
        ));
    }
    if args.dims < 2 || args.prototypes < 1 || args.prototypes >= args.dims {
        return Err(fail("validating arguments", "need dims >= 2 and 1 <= prototypes < dims"));
    }
    let config = VerifyConfig {
        seed: args.seed,
        dims: args.dims,
        docs: args.docs,
        prototypes: args.prototypes,
        p: args.corruption,
        mc_samples: args.mc_samples,
        mc_seeds: args.mc_seeds,
        enumerate_only: args.enumerate,
        ..Default::default()
    };
    let results = verify::run(&config).map_err(at("verifying"))?;
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!(
            "{:<width$}  {}  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    Ok(if results.iter().all(|r| r.passed) { 0 } else { 2 })
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let metric: Metric = args.metric.parse().map_err(at("validating arguments"))?;
    if args.k < 1 {
        return Err(fail("validating arguments", "k must be at least 1"));
    }
    let model = load_model(&args.model)?;
    let lines = read_lines(&args.input, "reading labeled corpus")?;
    let labeled =
        LabeledCorpus::from_lines(&lines, model.vocab(), &tokenizer(args.keep_case)).map_err(at("reading labeled corpus"))?;
    let report = compare_representations(&labeled, &model, args.seed, args.k, metric).map_err(at("evaluating"))?;
    print!("{}", report.to_text());
    if let Some(path) = &args.json {
        write_file(path, report.to_json().as_bytes(), "writing report")?;
    }
    Ok(0)
}

fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let sc = synonym_corpus(&SynonymCorpusConfig::default(), args.seed);
    fs::create_dir_all(&args.out_dir).map_err(|e| fail("writing corpus", DcotError::Io(e).to_string()))?;
    let join = |lines: &[String]| lines.iter().map(|l| format!("{l}\n")).collect::<String>();
    write_file(&args.out_dir.join("corpus.txt"), join(&sc.texts).as_bytes(), "writing corpus")?;
    write_file(&args.out_dir.join("labeled.tsv"), join(&sc.labeled_lines()).as_bytes(), "writing corpus")?;
    println!("documents: {}", sc.texts.len());
    println!("labeled: {}", sc.labeled.len());
    println!("suggested prototypes: {}", SynonymCorpusConfig::default().frequent_terms());
    Ok(0)
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        // Only the first initialization of the global pool takes effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let (name, result) = match &cli.command {
        Command::Train(a) => ("train", cmd_train(a)),
        Command::Transform(a) => ("transform", cmd_transform(a)),
        Command::Verify(a) => ("verify", cmd_verify(a)),
        Command::Eval(a) => ("eval", cmd_eval(a)),
        Command::Synth(a) => ("synth", cmd_synth(a)),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("dcot {name}: {}: {}", f.stage, f.message);
            1
        }
    }
}

/// Parses `args` and runs; argument errors exit 1, help and version 0.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
