//! `simquery`: build query indexes, classify, sweep k, train the baseline
//! and run experiment configs.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input data, 3 runtime
//! failure (I/O, divergence, thread pool).

mod logging;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use simquery_core::baseline::QLRM_MAGIC;
use simquery_core::baseline::{
    fit, load_model, predict_logreg, save_model, translation_pipeline_eval, TrainConfig,
};
use simquery_core::classify::{
    classify_batch, ClassifyOptions, PredictionRecord, VoteConfig, VoteWeighting,
};
use simquery_core::dataset::{
    filter_by_language, load_dataset, sample_balanced, Dataset, DatasetFormat, FilterMode,
    SamplingPlan,
};
use simquery_core::embedding::{embed_dataset, load_embedding_store, EmbeddingStore, QEMB_MAGIC};
use simquery_core::eval::{
    compare_reports, evaluate, rerun_from_manifest, run_config_file, write_outputs, MetricsReport,
    RunOptions,
};
use simquery_core::index::{
    build_index, load_index, save_index, BuildOptions, HnswParams, IndexMode, SearchParams,
    QIDX_MAGIC,
};
use simquery_core::sweep::{
    aggregate_sweeps, rows_to_csv, rows_to_svg, sweep_k, KRange, SweepTable,
};
use simquery_core::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(
    name = "simquery",
    version,
    about = "Intent classification by labeled-query similarity search"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SIMQUERY_THREADS")]
    threads: Option<usize>,
    /// Seed for sampling, HNSW levels, test embeddings and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only log errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    /// Log progress.
    #[arg(long, short, global = true, conflicts_with = "quiet")]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index labeled queries, optionally filtered and sampled.
    BuildIndex(BuildIndexArgs),
    /// Predict labels for queries by k-nearest-neighbor vote.
    Classify(ClassifyArgs),
    /// Evaluate a grid of k values for one or more providers.
    SweepK(SweepArgs),
    /// Train the logistic-regression head.
    TrainBaseline(TrainArgs),
    /// Score a trained head on a test set.
    EvalBaseline(EvalBaselineArgs),
    /// Run an experiment config, or replay a manifest.
    Run(RunArgs),
    /// Tabulate several report.json files side by side.
    Compare(CompareArgs),
    /// Write deterministic character n-gram embeddings for a dataset.
    EmbedTest(EmbedTestArgs),
    /// Summarize a QEMB, QIDX or QLRM file.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Dataset file (JSON lines or TSV).
    #[arg(long = "dataset", alias = "data")]
    data: PathBuf,
    #[arg(long, default_value = "jsonl")]
    format: DatasetFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Hnsw,
}

#[derive(Clone, Copy, ValueEnum)]
enum Vote {
    Majority,
    Similarity,
}

#[derive(Args)]
struct BuildIndexArgs {
    #[command(flatten)]
    data: DataArgs,
    /// QEMB file with a vector for every indexed record.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long = "out", short, alias = "output")]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    #[arg(long, default_value_t = 16)]
    m_max: usize,
    #[arg(long, default_value_t = 100)]
    ef_construction: usize,
    /// Keep only these languages (comma-separated).
    #[arg(
        long,
        alias = "include-langs",
        value_delimiter = ',',
        conflicts_with = "exclude_languages"
    )]
    languages: Vec<String>,
    /// Drop these languages (comma-separated).
    #[arg(long, alias = "exclude-langs", value_delimiter = ',')]
    exclude_languages: Vec<String>,
    /// Sample this many records per class.
    #[arg(long)]
    shots: Option<usize>,
    /// Sample N per class across all languages instead of N per class and
    /// language.
    #[arg(long, requires = "shots")]
    per_class: bool,
    /// Take all records of classes smaller than --shots.
    #[arg(long, requires = "shots")]
    clamp: bool,
    #[arg(long)]
    allow_unbalanced: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, short, default_value_t = 31)]
    k: usize,
    /// HNSW beam width (default max(64, 2k)).
    #[arg(long)]
    ef_search: Option<usize>,
    #[arg(long, value_enum, default_value = "majority")]
    vote: Vote,
    /// Ignore neighbors below this cosine similarity.
    #[arg(long)]
    min_similarity: Option<f64>,
}

impl SearchArgs {
    fn options(&self) -> ClassifyOptions {
        ClassifyOptions {
            search: SearchParams {
                ef_search: self.ef_search,
            },
            vote: VoteConfig {
                weighting: match self.vote {
                    Vote::Majority => VoteWeighting::Majority,
                    Vote::Similarity => VoteWeighting::Similarity,
                },
                min_similarity: self.min_similarity,
            },
        }
    }
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    index: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// QEMB file with a vector for every query id.
    #[arg(long)]
    embeddings: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    /// Predictions as JSON lines (default: stdout).
    #[arg(long = "out", short, alias = "output")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Labeled test queries.
    #[command(flatten)]
    data: DataArgs,
    /// Index per provider; pair each with an --embeddings file.
    #[arg(long, required = true)]
    index: Vec<PathBuf>,
    /// Query embeddings per provider, in --index order.
    #[arg(long, required = true)]
    embeddings: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    #[arg(long, default_value_t = 75)]
    k_max: usize,
    #[arg(long, default_value_t = 2)]
    k_step: usize,
    #[arg(long)]
    ef_search: Option<usize>,
    #[arg(long, value_enum, default_value = "majority")]
    vote: Vote,
    /// Write the (aggregate) table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write an SVG chart of the (aggregate) table.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long = "out", short, alias = "output")]
    output: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Write the per-epoch loss trace, one value per line.
    #[arg(long)]
    loss_trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalBaselineArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test queries; with --original, the translated queries.
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    embeddings: PathBuf,
    /// Untranslated test set supplying gold labels and languages.
    #[arg(long)]
    original: Option<PathBuf>,
    #[arg(long, default_value = "jsonl")]
    original_format: DatasetFormat,
}

#[derive(Args)]
struct RunArgs {
    #[arg(
        long,
        required_unless_present = "manifest",
        conflicts_with = "manifest"
    )]
    config: Option<PathBuf>,
    /// Replay a manifest.json, checking inputs and the report digest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// report.json files.
    #[arg(required = true, num_args = 2..)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedTestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long = "out", short, alias = "output")]
    output: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    file: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    logging::init(cli.quiet, cli.verbose);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            return fail(&Error::ThreadPool(e.to_string()));
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e.kind() {
        ErrorKind::Data => 2,
        ErrorKind::Runtime => 3,
    })
}

fn dispatch(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::BuildIndex(a) => build(a, seed),
        Command::Classify(a) => classify(a),
        Command::SweepK(a) => sweep(a),
        Command::TrainBaseline(a) => train(a, seed),
        Command::EvalBaseline(a) => eval_baseline(a),
        Command::Run(a) => run(a, cli),
        Command::Compare(a) => compare(a),
        Command::EmbedTest(a) => {
            let d = load(&a.data)?;
            let store = embed_dataset(&d, a.dim, seed)?;
            store.save(&a.output)?;
            println!(
                "wrote {} vectors of dim {} to {}",
                store.len(),
                a.dim,
                a.output.display()
            );
            Ok(())
        }
        Command::Inspect(a) => inspect(&a.file),
    }
}

fn load(d: &DataArgs) -> Result<Dataset> {
    load_dataset(&d.data, d.format)
}

fn build(a: &BuildIndexArgs, seed: u64) -> Result<()> {
    let mut d = load(&a.data)?;
    if !a.languages.is_empty() {
        d = filter_by_language(&d, FilterMode::Include, &a.languages)?;
    } else if !a.exclude_languages.is_empty() {
        d = filter_by_language(&d, FilterMode::Exclude, &a.exclude_languages)?;
    }
    if let Some(shots) = a.shots {
        let mut plan = SamplingPlan::new(shots, seed).clamped(a.clamp);
        if !a.per_class {
            plan = plan.with_languages(d.languages().iter().cloned().collect());
        }
        d = sample_balanced(&d, &plan)?;
    }
    let store = load_embedding_store(&a.embeddings)?;
    let opts = BuildOptions {
        mode: match a.mode {
            Mode::Exact => IndexMode::Exact,
            Mode::Hnsw => IndexMode::Hnsw,
        },
        hnsw: HnswParams {
            m_max: a.m_max,
            ef_construction: a.ef_construction,
            seed,
        },
        allow_unbalanced: a.allow_unbalanced,
    };
    let ix = build_index(&d, &store, &opts)?;
    save_index(&ix, &a.output)?;
    println!(
        "indexed {} queries ({} classes, {} languages, dim {}, {}) into {}",
        ix.len(),
        ix.label_counts().len(),
        ix.languages().len(),
        ix.dim(),
        ix.mode(),
        a.output.display()
    );
    Ok(())
}

fn query_vectors(
    d: &Dataset,
    store: &EmbeddingStore,
) -> Result<Vec<(String, simquery_core::embedding::EmbeddingVector)>> {
    d.iter()
        .map(|r| Ok((r.id.clone(), store.require(&r.id)?.clone())))
        .collect()
}

fn classify(a: &ClassifyArgs) -> Result<()> {
    let ix = load_index(&a.index)?;
    let d = load(&a.data)?;
    let store = load_embedding_store(&a.embeddings)?;
    let queries = query_vectors(&d, &store)?;
    let mut out = String::new();
    let mut preds = Vec::with_capacity(queries.len());
    for item in classify_batch(&ix, &queries, a.search.k, &a.search.options()) {
        let p = item.outcome.map_err(|e| {
            log::error!("stage=classify id={}", item.id);
            e
        })?;
        let line = serde_json::to_string(&PredictionRecord::new(&item.id, &p))?;
        let _ = writeln!(out, "{line}");
        preds.push((item.id, p.predicted_label));
    }
    match &a.output {
        Some(path) => {
            std::fs::write(path, &out).map_err(|e| Error::io(path, e))?;
            let known: BTreeSet<String> = ix.label_counts().keys().map(|s| s.to_string()).collect();
            let m = evaluate(&preds, &d, Some(&known))?;
            println!(
                "classified {} queries: accuracy {:.3}, macro F1 {:.3}",
                m.total, m.accuracy, m.macro_f1
            );
        }
        None => print!("{out}"),
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    if a.index.len() != a.embeddings.len() {
        return Err(Error::InvalidConfig(format!(
            "{} --index but {} --embeddings; pass one of each per provider",
            a.index.len(),
            a.embeddings.len()
        )));
    }
    let test = load(&a.data)?;
    let range = KRange {
        min: a.k_min,
        max: a.k_max,
        step: a.k_step,
    };
    let opts = ClassifyOptions {
        search: SearchParams {
            ef_search: a.ef_search,
        },
        vote: VoteConfig {
            weighting: match a.vote {
                Vote::Majority => VoteWeighting::Majority,
                Vote::Similarity => VoteWeighting::Similarity,
            },
            min_similarity: None,
        },
    };
    let mut tables: Vec<SweepTable> = Vec::new();
    for (ix_path, emb_path) in a.index.iter().zip(&a.embeddings) {
        let ix = load_index(ix_path)?;
        let store = load_embedding_store(emb_path)?;
        let mut t = sweep_k(&ix, &test, &store, range, &opts)?;
        t.provider = if store.provider().is_empty() {
            ix_path.display().to_string()
        } else {
            store.provider().to_string()
        };
        info!("provider={} rows={}", t.provider, t.rows.len());
        tables.push(t);
    }
    for t in &tables {
        println!("{}", t.provider);
        print!("{}", sweep_text(&t.rows));
    }
    let rows = if tables.len() > 1 {
        let agg = aggregate_sweeps(&tables)?;
        println!("mean over {} providers", tables.len());
        print!("{}", sweep_text(&agg.rows));
        println!(
            "best k: accuracy {}, macro F1 {}",
            agg.best_k_accuracy, agg.best_k_macro_f1
        );
        agg.rows
    } else {
        tables[0].rows.clone()
    };
    if let Some(path) = &a.csv {
        std::fs::write(path, rows_to_csv(&rows)?).map_err(|e| Error::io(path, e))?;
    }
    if let Some(path) = &a.svg {
        std::fs::write(path, rows_to_svg(&rows, "accuracy and macro F1 by k"))
            .map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn sweep_text(rows: &[simquery_core::sweep::SweepRow]) -> String {
    let mut s = format!(
        "{:>4}  {:>8}  {:>8}  {:>8}\n",
        "k", "accuracy", "macro F1", "ties"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>4}  {:>8.3}  {:>8.3}  {:>8.3}",
            r.k, r.accuracy, r.macro_f1, r.tie_rate
        );
    }
    s
}

fn train(a: &TrainArgs, seed: u64) -> Result<()> {
    let d = load(&a.data)?;
    let store = load_embedding_store(&a.embeddings)?;
    let examples = d
        .iter()
        .map(|r| Ok((store.require(&r.id)?, r.label.as_str())))
        .collect::<Result<Vec<_>>>()?;
    let config = TrainConfig {
        learning_rate: a.learning_rate,
        l2_lambda: a.l2,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed,
    };
    let (model, trace) = fit(&examples, &config)?;
    save_model(&model, &a.output)?;
    if let Some(path) = &a.loss_trace {
        let body: String = trace.iter().map(|l| format!("{l}\n")).collect();
        std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    println!(
        "trained {} classes on {} examples, final loss {:.4}, saved to {}",
        model.num_classes(),
        examples.len(),
        trace.last().copied().unwrap_or(f64::NAN),
        a.output.display()
    );
    Ok(())
}

fn eval_baseline(a: &EvalBaselineArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let d = load(&a.data)?;
    let store = load_embedding_store(&a.embeddings)?;
    let m = match &a.original {
        Some(orig) => {
            let original = load_dataset(orig, a.original_format)?;
            translation_pipeline_eval(&d, &original, &model, &store)?
        }
        None => {
            let preds = d
                .iter()
                .map(|r| {
                    Ok((
                        r.id.clone(),
                        predict_logreg(&model, store.require(&r.id)?)?.0,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let known: BTreeSet<String> = model.class_order().iter().cloned().collect();
            evaluate(&preds, &d, Some(&known))?
        }
    };
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn run(a: &RunArgs, cli: &Cli) -> Result<()> {
    let opts = RunOptions {
        threads: cli.threads,
    };
    let out = match (&a.config, &a.manifest) {
        (Some(cfg), _) => {
            if cli.seed.is_some() {
                log::warn!("--seed is ignored by run; set seed in the config");
            }
            run_config_file(cfg, &opts)?
        }
        (None, Some(manifest)) => {
            let (out, same) = rerun_from_manifest(manifest, &opts)?;
            if !same {
                write_outputs(&a.out_dir, &out)?;
                return Err(Error::Corrupt(format!(
                    "replayed report differs from the one recorded in {}",
                    manifest.display()
                )));
            }
            out
        }
        (None, None) => unreachable!("clap requires --config or --manifest"),
    };
    write_outputs(&a.out_dir, &out)?;
    print!("{}", out.report.to_text());
    Ok(())
}

fn compare(a: &CompareArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str::<MetricsReport>(&text)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let table = compare_reports(&reports)?;
    print!("{}", table.to_text());
    if let Some(path) = &a.csv {
        std::fs::write(path, table.to_csv()?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        f.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    }
    if &magic == QEMB_MAGIC {
        let store = load_embedding_store(path)?;
        println!("format     QEMB");
        println!("provider   {}", store.provider());
        println!("dim        {}", store.dim());
        println!("vectors    {}", store.len());
    } else if &magic == QIDX_MAGIC {
        let ix = load_index(path)?;
        println!("format     QIDX");
        println!("mode       {}", ix.mode());
        println!("dim        {}", ix.dim());
        println!("entries    {}", ix.len());
        println!("languages  {}", ix.languages().join(","));
        for (label, n) in ix.label_counts() {
            println!("  {label:<24} {n}");
        }
    } else if &magic == QLRM_MAGIC {
        let m = load_model(path)?;
        println!("format     QLRM");
        println!("dim        {}", m.dim());
        println!("classes    {}", m.num_classes());
        println!("|W|        {:.4}", m.weight_norm());
    } else {
        return Err(Error::BadMagic {
            expected: "QEMB, QIDX or QLRM".into(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    Ok(())
}
