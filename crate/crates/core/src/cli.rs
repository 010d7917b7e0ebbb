//! Command-line front end. [`run`] takes explicit argument, input and
//! output handles so it can be driven from tests; the `desm` binary is a
//! thin wrapper around it.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::corpus::{
    corpus_stats, generate_synthetic, load_parallel_tsv, synthetic_phonology, to_parallel_tsv, NoiseSpec,
    PhonologySpec,
};
use crate::desm::{build_lattice_with_mode, LatticeMode, DEFAULT_M_MAX};
use crate::eval::{desk_train_config, run_ablation, score, AblationSetup, BenchmarkSpec, Variant};
use crate::lexicon::Lexicon;
use crate::pinyin::{FuzzyClassTable, PinyinTable};
use crate::pipeline::{build_vocab, Corrector};
use crate::train::{TrainConfig, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "desm", version, about = "Phonetic error correction for Chinese text")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a serialized lexicon from a `word<TAB>frequency` file.
    BuildLexicon(BuildLexiconArgs),
    /// Generate a synthetic word list and pinyin table.
    GenLexicon(GenLexiconArgs),
    /// Print the char-word lattice of each sentence as JSON lines.
    Match(MatchArgs),
    /// Generate a noisy parallel corpus from a lexicon.
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Correct text line by line.
    Correct(CorrectArgs),
    /// Score a checkpoint on a test corpus, or score precomputed predictions.
    Evaluate(EvaluateArgs),
    /// Train and score the standard model variants.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    /// Serialized lexicon written by `build-lexicon`.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// `char<TAB>reading...` table.
    #[arg(long)]
    pub pinyin_table: PathBuf,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildLexiconArgs {
    /// `word<TAB>frequency` file.
    #[arg(long)]
    pub words: PathBuf,
    #[arg(long)]
    pub pinyin_table: PathBuf,
    /// Fuzzy class file; the built-in classes when omitted.
    #[arg(long)]
    pub fuzzy_table: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenLexiconArgs {
    #[arg(long, default_value_t = 500)]
    pub words: usize,
    #[arg(long, default_value_t = 90)]
    pub syllables: usize,
    #[arg(long, default_value_t = 3)]
    pub chars_per_syllable: usize,
    #[arg(long, default_value_t = 1.0)]
    pub zipf: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub fuzzy_table: Option<PathBuf>,
    /// Destination of the word file.
    #[arg(long)]
    pub out_words: PathBuf,
    /// Destination of the pinyin table.
    #[arg(long)]
    pub out_pinyin: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub data: LexiconArgs,
    #[arg(long, default_value_t = DEFAULT_M_MAX)]
    pub m_max: usize,
    #[arg(long, default_value = "desm")]
    pub mode: LatticeMode,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sentences to match; one per line of standard input when omitted.
    pub sentences: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub data: LexiconArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 6)]
    pub min_len: usize,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.15)]
    pub error_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    pub fuzzy_prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: LexiconArgs,
    /// Parallel TSV training corpus.
    #[arg(long)]
    pub train: PathBuf,
    /// TOML or JSON training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Lattice mode of the trained model.
    #[arg(long)]
    pub mode: Option<LatticeMode>,
    /// Train without the copy head.
    #[arg(long)]
    pub no_copy: bool,
    /// Output checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    #[command(flatten)]
    pub data: LexiconArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input text; standard input when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, requires_all = ["lexicon", "pinyin_table", "test"], conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub pinyin_table: Option<PathBuf>,
    /// Parallel TSV test corpus.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// `source<TAB>gold<TAB>prediction` lines to score directly.
    #[arg(long, required_unless_present = "checkpoint")]
    pub predictions: Option<PathBuf>,
    /// Exit with the data-error code when any metric has a zero denominator.
    #[arg(long)]
    pub fail_on_undefined: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Use the generated desk-scale benchmark instead of corpus files.
    #[arg(long, conflicts_with_all = ["lexicon", "pinyin_table", "train", "test"])]
    pub synthetic: bool,
    #[arg(long, required_unless_present = "synthetic")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    pub pinyin_table: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    pub train: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    pub test: Option<PathBuf>,
    /// TOML or JSON training config; the desk-scale settings when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of seeds, starting from `--seed`.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Comma-separated subset of plain, copy, ttm+copy, desm+copy.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    #[command(flatten)]
    pub output: OutputArgs,
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Sets up `env_logger` from `DESM_LOG` (default `warn`).
pub fn init_logging() {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("DESM_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, S>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::BuildLexicon(a) => build_lexicon(a, stdout),
        Command::GenLexicon(a) => gen_lexicon(a, stdout),
        Command::Match(a) => match_cmd(a, stdin, stdout),
        Command::GenData(a) => gen_data(a, stdout),
        Command::Train(a) => train(a, stdout),
        Command::Correct(a) => correct(a, stdin, stdout),
        Command::Evaluate(a) => evaluate(a, stdout),
        Command::Ablate(a) => ablate(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_DATA
        }
    }
}

fn require_files(paths: &[&Path]) -> CmdResult {
    for p in paths {
        if !p.is_file() {
            return Err(usage(format!("no such file: {}", p.display())));
        }
    }
    Ok(())
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => stdout.write_all(text.as_bytes()).context("writing output"),
    }
}

fn load_data(a: &LexiconArgs) -> Result<(Lexicon, PinyinTable), Failure> {
    require_files(&[&a.lexicon, &a.pinyin_table])?;
    let lex = Lexicon::load(&a.lexicon).map_err(anyhow::Error::from)?;
    let ptable = PinyinTable::load(&a.pinyin_table).map_err(anyhow::Error::from)?;
    Ok((lex, ptable))
}

fn load_fuzzy(path: &Option<PathBuf>) -> Result<FuzzyClassTable, Failure> {
    match path {
        Some(p) => {
            require_files(&[p])?;
            Ok(FuzzyClassTable::load(p).map_err(anyhow::Error::from)?)
        }
        None => Ok(FuzzyClassTable::default()),
    }
}

fn load_config(path: &Option<PathBuf>, default: TrainConfig) -> Result<TrainConfig, Failure> {
    let Some(p) = path else { return Ok(default) };
    require_files(&[p])?;
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    TrainConfig::parse(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn load_corrector(checkpoint: &Path, lex: Lexicon, ptable: PinyinTable) -> anyhow::Result<Corrector> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.lexicon_fingerprint != lex.fingerprint() || ckpt.lexicon_size != lex.len() {
        bail!(crate::checkpoint::CheckpointError::LexiconMismatch);
    }
    Ok(Corrector::new(ckpt.model, ckpt.vocab, lex, ptable))
}

fn read_lines(input: &Option<PathBuf>, stdin: &mut dyn BufRead) -> anyhow::Result<Vec<String>> {
    let text = match input {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let mut s = String::new();
            stdin.read_to_string(&mut s).context("reading standard input")?;
            s
        }
    };
    Ok(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
}

fn build_lexicon(a: BuildLexiconArgs, stdout: &mut dyn Write) -> CmdResult {
    require_files(&[&a.words, &a.pinyin_table])?;
    let fuzzy = load_fuzzy(&a.fuzzy_table)?;
    let ptable = PinyinTable::load(&a.pinyin_table).map_err(anyhow::Error::from)?;
    let lex = Lexicon::from_word_file(&a.words, &ptable, &fuzzy).map_err(anyhow::Error::from)?;
    lex.save(&a.out).map_err(anyhow::Error::from)?;
    writeln!(stdout, "{} words -> {}", lex.len(), a.out.display()).map_err(anyhow::Error::from)?;
    Ok(())
}

fn gen_lexicon(a: GenLexiconArgs, stdout: &mut dyn Write) -> CmdResult {
    let fuzzy = load_fuzzy(&a.fuzzy_table)?;
    let spec = PhonologySpec {
        base_syllables: a.syllables,
        chars_per_syllable: a.chars_per_syllable,
        words: a.words,
        zipf_exponent: a.zipf,
        seed: a.seed,
        ..Default::default()
    };
    let phon = synthetic_phonology(&spec, &fuzzy);
    emit(&Some(a.out_words.clone()), &phon.word_file(), stdout)?;
    emit(&Some(a.out_pinyin.clone()), &phon.pinyin.to_tsv(), stdout)?;
    writeln!(stdout, "{} words over {} characters", phon.words.len(), phon.pinyin.len())
        .map_err(anyhow::Error::from)?;
    Ok(())
}

fn match_cmd(a: MatchArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> CmdResult {
    if a.m_max == 0 {
        return Err(usage("--m-max must be positive"));
    }
    let (lex, ptable) = load_data(&a.data)?;
    let sentences = if a.sentences.is_empty() {
        read_lines(&None, stdin)?
    } else {
        a.sentences
    };
    let mut text = String::new();
    for (k, s) in sentences.iter().enumerate() {
        let chars: Vec<char> = s.chars().collect();
        let lat = build_lattice_with_mode(&lex, &ptable, &chars, a.m_max, a.mode);
        for line in lat.to_json_lines(&lex, k) {
            text.push_str(&line);
            text.push('\n');
        }
    }
    emit(&a.out, &text, stdout)?;
    Ok(())
}

fn gen_data(a: GenDataArgs, stdout: &mut dyn Write) -> CmdResult {
    if a.min_len == 0 || a.min_len > a.max_len {
        return Err(usage("need 0 < --min-len <= --max-len"));
    }
    let noise = NoiseSpec {
        error_rate: a.error_rate,
        fuzzy_confusion_prob: a.fuzzy_prob,
        seed: a.seed,
    };
    noise.validate().map_err(|e| usage(e.to_string()))?;
    let (lex, ptable) = load_data(&a.data)?;
    let corpus = generate_synthetic(&lex, &ptable, a.n, a.min_len..=a.max_len, &noise).map_err(anyhow::Error::from)?;
    let stats = corpus_stats(&corpus.pairs);
    log::info!(
        "{} sentences, {} errors, {} characters without homophones",
        stats.sentences,
        stats.errors,
        corpus.unsubstitutable
    );
    emit(&a.out, &to_parallel_tsv(&corpus.pairs), stdout)?;
    Ok(())
}

fn train(a: TrainArgs, stdout: &mut dyn Write) -> CmdResult {
    require_files(&[&a.train])?;
    let mut config = load_config(&a.config, TrainConfig::default())?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(m) = a.m_max {
        config.m_max = m;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(lr) = a.lr {
        config.lr = lr;
    }
    if let Some(m) = a.mode {
        config.lattice_mode = m;
    }
    if a.no_copy {
        config.copy = false;
    }
    let (lex, ptable) = load_data(&a.data)?;
    let pairs = load_parallel_tsv(&a.train).map_err(anyhow::Error::from)?;
    let vocab = build_vocab(&pairs, &lex);
    let corrector = Corrector::untrained(&config, vocab, lex, ptable).map_err(|e| usage(e.to_string()))?;
    let data = corrector.examples(&pairs);
    let mut trainer = Trainer::new(corrector.model, config);
    let mut log_lines = String::new();
    trainer
        .fit(&data, |e, l| {
            log::info!("epoch {e}: loss {l:.6}");
            log_lines.push_str(&format!("epoch {e} loss {l:.6}\n"));
        })
        .map_err(anyhow::Error::from)?;
    let steps = trainer.steps();
    let ckpt = Checkpoint {
        lexicon_fingerprint: corrector.lexicon.fingerprint(),
        lexicon_size: corrector.lexicon.len(),
        model: trainer.into_model(),
        vocab: corrector.vocab,
    };
    ckpt.save(&a.checkpoint).map_err(anyhow::Error::from)?;
    log_lines.push_str(&format!("{steps} steps -> {}\n", a.checkpoint.display()));
    emit(&None, &log_lines, stdout)?;
    Ok(())
}

fn correct(a: CorrectArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> CmdResult {
    require_files(&[&a.checkpoint])?;
    if let Some(p) = &a.input {
        require_files(&[p])?;
    }
    let (lex, ptable) = load_data(&a.data)?;
    let corrector = load_corrector(&a.checkpoint, lex, ptable)?;
    let mut text = String::new();
    for line in read_lines(&a.input, stdin)? {
        let r = corrector.correct(&line).map_err(anyhow::Error::from)?;
        match a.output.format {
            Format::Text => text.push_str(&r.output),
            Format::Json => text.push_str(
                &serde_json::json!({ "input": line, "output": r.output, "omega": r.omega }).to_string(),
            ),
        }
        text.push('\n');
    }
    emit(&a.output.out, &text, stdout)?;
    Ok(())
}

fn parse_predictions(text: &str) -> anyhow::Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let l = l.trim_end_matches('\r');
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 3 {
            bail!("line {}: expected `source<TAB>gold<TAB>prediction`", i + 1);
        }
        out.push((f[0].to_string(), f[1].to_string(), f[2].to_string()));
    }
    Ok(out)
}

fn evaluate(a: EvaluateArgs, stdout: &mut dyn Write) -> CmdResult {
    let triples = if let Some(p) = &a.predictions {
        require_files(&[p])?;
        parse_predictions(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
    } else {
        let (Some(ck), Some(lexicon), Some(pinyin_table), Some(test)) = (a.checkpoint, a.lexicon, a.pinyin_table, a.test)
        else {
            return Err(usage("--checkpoint needs --lexicon, --pinyin-table and --test"));
        };
        require_files(&[&ck, &test])?;
        let (lex, ptable) = load_data(&LexiconArgs { lexicon, pinyin_table })?;
        let corrector = load_corrector(&ck, lex, ptable)?;
        let pairs = load_parallel_tsv(&test).map_err(anyhow::Error::from)?;
        let mut triples = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let out = corrector.correct(&p.source_string()).map_err(anyhow::Error::from)?;
            triples.push((p.source_string(), p.target_string(), out.output));
        }
        triples
    };
    let report = score(&triples).map_err(anyhow::Error::from)?;
    let text = match a.output.format {
        Format::Text => report.to_table(),
        Format::Json => report.to_json() + "\n",
    };
    emit(&a.output.out, &text, stdout)?;
    if a.fail_on_undefined && report.any_undefined() {
        return Err(Failure::Data(anyhow::anyhow!("a metric has a zero denominator")));
    }
    Ok(())
}

fn ablate(a: AblateArgs, stdout: &mut dyn Write) -> CmdResult {
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let variants: Vec<Variant> = if a.variants.is_empty() {
        Variant::standard()
    } else {
        let all = Variant::standard();
        a.variants
            .iter()
            .map(|n| {
                all.iter()
                    .copied()
                    .find(|v| v.name() == *n)
                    .ok_or_else(|| usage(format!("unknown variant `{n}`")))
            })
            .collect::<Result<_, _>>()?
    };
    let mut config = load_config(&a.config, desk_train_config())?;
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let table = if a.synthetic {
        let bench = BenchmarkSpec::default().build()?;
        run_ablation(&bench.setup(config), &variants, &seeds)
    } else {
        let (Some(lexicon), Some(pinyin_table), Some(train), Some(test)) = (a.lexicon, a.pinyin_table, a.train, a.test)
        else {
            return Err(usage("need --synthetic or all of --lexicon, --pinyin-table, --train, --test"));
        };
        require_files(&[&train, &test])?;
        let (lex, ptable) = load_data(&LexiconArgs { lexicon, pinyin_table })?;
        let train = load_parallel_tsv(&train).map_err(anyhow::Error::from)?;
        let test = load_parallel_tsv(&test).map_err(anyhow::Error::from)?;
        let setup = AblationSetup {
            train: &train,
            test: &test,
            lexicon: &lex,
            pinyin: &ptable,
            config,
        };
        run_ablation(&setup, &variants, &seeds)
    };
    let text = match a.output.format {
        Format::Text => table.to_table(),
        Format::Json => table.to_json() + "\n",
    };
    emit(&a.output.out, &text, stdout)?;
    if table.rows.iter().any(|r| r.error.is_some()) {
        return Err(Failure::Data(anyhow::anyhow!("some variants failed")));
    }
    Ok(())
}
