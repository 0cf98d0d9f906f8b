//! Command-line entry point. Diagnostics go to stderr; machine-readable
//! artifacts go to the `--out` path (or stdout where noted).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::{StructuralOptions, TrainConfig, DEFAULT_SEED};
use crate::corpus::{build_vocab, generate_synthetic, load_corpus, Corpus, Instance, Split, SynthConfig};
use crate::encoder::{DualModel, ModelMode};
use crate::error::{Error, Result};
use crate::gradcheck::{default_cases, run_gradcheck};
use crate::index::{build_index, predict, PredictMode, PredictionRecord};
use crate::lexicon::{load_lexicon, FrameId, LemmaPos, Lexicon};
use crate::metrics::{centroid_evaluate, delta_alpha_report, evaluate, masked_evaluate};
use crate::trainer::{
    load_checkpoint, save_checkpoint, train_coarse_to_fine, train_stage1, train_stage2, Checkpoint,
    TrainContext,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "framelens",
    version,
    about = "Frame identification with dual encoders"
)]
struct Cli {
    /// Cap on worker threads used for evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic lexicon and corpus.
    Synth(SynthArgs),
    /// Load a lexicon (and corpus) and report their invariants.
    Validate(ValidateArgs),
    /// Train the coarse-to-fine curriculum, or one stage of it.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus split.
    Eval(EvalArgs),
    /// Predict frames for a corpus split or a single sentence.
    Predict(PredictArgs),
    /// Superframe-proximity analysis over inheritance pairs.
    Analyze(AnalyzeArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory for lexicon.json and corpus.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Generator settings (JSON); the seed flag overrides its seed.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StageSel {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for checkpoints and the training report.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, value_enum, default_value = "both")]
    stage: StageSel,
    /// Start from this checkpoint instead of a fresh model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Overrides the configured model mode: dual, lookup_random or lookup_definition_init.
    #[arg(long)]
    model: Option<ModelMode>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeSel {
    WithLf,
    WithoutLf,
    Both,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeSel,
    /// Also evaluate with the target span masked.
    #[arg(long)]
    masked: bool,
    /// Also evaluate against centroids of N exemplars per frame.
    #[arg(long, value_name = "N")]
    centroid: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, conflicts_with = "sentence")]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Whitespace-tokenized sentence.
    #[arg(long, requires_all = ["span", "lu"])]
    sentence: Option<String>,
    /// Inclusive token span `start:end`.
    #[arg(long)]
    span: Option<String>,
    /// Lexical unit as `lemma.pos`.
    #[arg(long)]
    lu: Option<LemmaPos>,
    #[arg(long, value_enum, default_value = "with-lf")]
    mode: ModeSel,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// JSONL output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Leave the subframe out of its all-frames average.
    #[arg(long)]
    exclude_self: bool,
    /// Average per subframe first, then across subframes.
    #[arg(long)]
    per_frame: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-pair rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Number of consecutive seeds to check.
    #[arg(long, default_value_t = 1)]
    runs: u64,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        // a second initialisation in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numeric() {
        EXIT_NUMERIC
    } else if matches!(e, Error::InvalidArgument(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Validate(a) => validate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Analyze(a) => analyze(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn synth(a: SynthArgs) -> Result<i32> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<SynthConfig>(&text).map_err(|e| Error::Config(e.to_string()))?
        }
        None => SynthConfig::default(),
    };
    cfg.seed = a.seed;
    let (lex, corpus) = generate_synthetic(&cfg)?;
    create_dir(&a.out)?;
    lex.save(&a.out.join("lexicon.json"))?;
    corpus.save(&a.out.join("corpus.jsonl"), &lex)?;
    eprintln!(
        "wrote {} frames and {} instances to {}",
        lex.len(),
        corpus.len(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn validate(a: ValidateArgs) -> Result<i32> {
    let lex = load_lexicon(&a.lexicon)?;
    let n_inheritance = lex.inheritance_pairs().count();
    let n_ambiguous = lex.lexical_units().filter(|lu| lu.evoked.len() >= 2).count();
    let mut report = json!({
        "frames": lex.len(),
        "lexical_units": lex.lexical_units().count(),
        "ambiguous_lexical_units": n_ambiguous,
        "relations": lex.relations().len(),
        "inheritance_pairs": n_inheritance,
    });
    if let Some(path) = &a.corpus {
        let corpus = load_corpus(path, &lex)?;
        let counts: serde_json::Map<String, serde_json::Value> = corpus
            .split_counts()
            .into_iter()
            .map(|(s, n)| (s.to_string(), json!(n)))
            .collect();
        let missing_lu = corpus
            .instances
            .iter()
            .filter(|i| lex.candidates_for(&i.lu).is_none())
            .count();
        report["instances"] = json!(corpus.len());
        report["splits"] = json!(counts);
        report["instances_with_unknown_lu"] = json!(missing_lu);
    }
    eprintln!("{}", serde_json::to_string_pretty(&report).expect("plain json"));
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(EXIT_OK)
}

fn train(a: TrainArgs) -> Result<i32> {
    let lex = load_lexicon(&a.lexicon)?;
    let corpus = load_corpus(&a.corpus, &lex)?;
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    }
    .with_seed(a.seed);
    if let Some(mode) = a.model {
        cfg.model.mode = mode;
    }
    cfg.validate()?;

    let (mut model, vocab) = match &a.checkpoint {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            (ck.model, ck.vocab)
        }
        None => {
            let vocab = build_vocab(&corpus, &lex)?;
            let model = DualModel::initialise(
                &vocab,
                &lex,
                cfg.model.dim,
                cfg.model.mode,
                cfg.model.shared_encoders,
                cfg.model.seed,
            )?;
            (model, vocab)
        }
    };
    create_dir(&a.out)?;
    let ctx = TrainContext::new(&vocab, &lex)?;
    let report = match a.stage {
        StageSel::Both => {
            let r = train_coarse_to_fine(&mut model, &ctx, &corpus, &cfg, Some(&a.out))?;
            log_stage("stage 1", &r.stage1);
            log_stage("stage 2", &r.stage2);
            serde_json::to_value(&r)
        }
        StageSel::One => {
            let r = train_stage1(&mut model, &ctx, &corpus, &cfg, Some(&a.out))?;
            log_stage("stage 1", &r);
            serde_json::to_value(&r)
        }
        StageSel::Two => {
            let r = train_stage2(&mut model, &ctx, &corpus, &cfg, Some(&a.out))?;
            log_stage("stage 2", &r);
            serde_json::to_value(&r)
        }
    }
    .map_err(|e| Error::Parse(e.to_string()))?;
    save_checkpoint(&model, &vocab, None, &a.out.join("model.json"))?;
    write_json(
        &a.out.join("train_report.json"),
        &json!({ "config": cfg, "report": report }),
    )?;
    Ok(EXIT_OK)
}

fn log_stage(label: &str, r: &crate::trainer::TrainReport) {
    eprintln!(
        "{label}: {} epochs, {} steps, final loss {:.4}, {:.1}s",
        r.epoch_losses.len(),
        r.steps,
        r.epoch_losses.last().copied().unwrap_or(f64::NAN),
        r.wall_clock_secs
    );
}

fn load_split(path: &Path, lex: &Lexicon, split: Split) -> Result<Vec<Instance>> {
    let corpus: Corpus = load_corpus(path, lex)?;
    let data = corpus.split(split);
    if data.is_empty() {
        return Err(Error::Empty(format!(
            "no {split} instances in {}",
            path.display()
        )));
    }
    Ok(data)
}

fn load_model(path: &Path, lex: &Lexicon) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if let Some(t) = &ck.model.params.table {
        if t.rows() != lex.len() {
            return Err(Error::Checkpoint(format!(
                "frame table has {} rows, lexicon has {} frames",
                t.rows(),
                lex.len()
            )));
        }
    }
    Ok(ck)
}

fn eval(a: EvalArgs) -> Result<i32> {
    let lex = load_lexicon(&a.lexicon)?;
    let Checkpoint { model, vocab, .. } = load_model(&a.checkpoint, &lex)?;
    let data = load_split(&a.corpus, &lex, a.split)?;
    let idx = build_index(&model, &vocab, &lex)?;
    let result = evaluate(&model, &idx, &vocab, &lex, &data)?;

    let mut pct = result.percentages();
    match a.mode {
        ModeSel::WithLf => pct.retain(|k, _| k == "acc" || k == "acc_amb"),
        ModeSel::WithoutLf => pct.retain(|k, _| k.starts_with("r@")),
        ModeSel::Both => {}
    }
    let mut report = json!({
        "checkpoint": a.checkpoint,
        "split": a.split,
        "mode": format!("{:?}", a.mode).to_lowercase(),
        "model_mode": model.mode,
        "result": result,
        "percent": pct,
    });
    if a.masked {
        let m = masked_evaluate(&model, &idx, &vocab, &lex, &data)?;
        eprintln!(
            "masked: acc {:.2} -> {:.2}",
            100.0 * m.normal.acc_with_lf,
            100.0 * m.masked.acc_with_lf
        );
        report["masked"] = json!(m);
    }
    if let Some(n) = a.centroid {
        let exemplars = load_corpus(&a.corpus, &lex)?.split(Split::Exemplar);
        let c = centroid_evaluate(&model, &vocab, &lex, &exemplars, &data, n)?;
        report["centroid"] = json!(c);
    }
    let line: Vec<String> = report["percent"]
        .as_object()
        .expect("object")
        .iter()
        .map(|(k, v)| format!("{k} {v}"))
        .collect();
    eprintln!("{} ({} instances): {}", a.split, data.len(), line.join(", "));
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(EXIT_OK)
}

fn parse_span(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("span must be start:end, got '{s}'"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn predict_cmd(a: PredictArgs) -> Result<i32> {
    let lex = load_lexicon(&a.lexicon)?;
    let Checkpoint { model, vocab, .. } = load_model(&a.checkpoint, &lex)?;
    let data: Vec<Instance> = match (&a.corpus, &a.sentence) {
        (Some(path), None) => load_split(path, &lex, a.split)?,
        (None, Some(sentence)) => {
            let tokens: Vec<String> = sentence.split_whitespace().map(String::from).collect();
            let (start, end) = parse_span(a.span.as_deref().unwrap_or_default())?;
            let inst = Instance {
                tokens,
                target_start: start,
                target_end: end,
                lu: a.lu.clone().expect("clap enforces --lu"),
                // unused by prediction
                gold: FrameId(0),
                split: Split::Test,
            };
            inst.validate(&lex)?;
            vec![inst]
        }
        _ => {
            return Err(Error::InvalidArgument(
                "predict needs either --corpus or --sentence/--span/--lu".into(),
            ))
        }
    };
    if a.top_k == 0 {
        return Err(Error::InvalidArgument("--top-k must be at least 1".into()));
    }
    let modes: &[PredictMode] = match a.mode {
        ModeSel::WithLf => &[PredictMode::WithLf],
        ModeSel::WithoutLf => &[PredictMode::WithoutLf],
        ModeSel::Both => &[PredictMode::WithLf, PredictMode::WithoutLf],
    };
    let idx = build_index(&model, &vocab, &lex)?;
    let mut out = String::new();
    for (i, inst) in data.iter().enumerate() {
        for &mode in modes {
            let p = predict(&model, &idx, &vocab, &lex, inst, mode)?;
            let rec = PredictionRecord::new(i, mode, &p, &lex, a.top_k);
            out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::Parse(e.to_string()))?);
            out.push('\n');
        }
    }
    match &a.out {
        Some(path) => std::fs::write(path, out).map_err(|e| Error::io(path, e))?,
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| Error::io(Path::new("<stdout>"), e))?,
    }
    Ok(EXIT_OK)
}

fn analyze(a: AnalyzeArgs) -> Result<i32> {
    let lex = load_lexicon(&a.lexicon)?;
    let Checkpoint { model, vocab, .. } = load_model(&a.checkpoint, &lex)?;
    let idx = build_index(&model, &vocab, &lex)?;
    let opts = StructuralOptions {
        include_self: !a.exclude_self,
        average_per_frame: a.per_frame,
    };
    let rep = delta_alpha_report(&idx, &lex, opts)?;
    eprintln!(
        "{} pairs, mean delta-alpha {:.4}, mean ratio {} over {} pairs with alpha > 0",
        rep.pairs.len(),
        rep.average_delta_alpha,
        rep.average_ratio
            .map(|r| format!("{r:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        rep.n_positive_alpha
    );
    if let Some(out) = &a.out {
        write_json(out, &rep)?;
    }
    if let Some(csv) = &a.csv {
        std::fs::write(csv, rep.to_csv()).map_err(|e| Error::io(csv, e))?;
    }
    Ok(EXIT_OK)
}

fn gradcheck(a: GradcheckArgs) -> Result<i32> {
    if a.runs == 0 {
        return Err(Error::InvalidArgument("--runs must be at least 1".into()));
    }
    let cases = default_cases();
    let mut worst: f64 = 0.0;
    let mut tol = 0.0;
    for seed in a.seed..a.seed + a.runs {
        let rep = run_gradcheck(seed, &cases)?;
        for r in &rep.results {
            eprintln!(
                "seed {seed} {:?}{} {:?} tau {}: {:.3e} ({})",
                r.case.mode,
                if r.case.shared_encoders { " shared" } else { "" },
                r.case.objective,
                r.case.tau,
                r.max_rel_error,
                r.worst_tensor
            );
        }
        worst = worst.max(rep.max_rel_error);
        tol = rep.tolerance;
    }
    println!("max relative error {worst:.3e}");
    Ok(if worst <= tol { EXIT_OK } else { EXIT_NUMERIC })
}
