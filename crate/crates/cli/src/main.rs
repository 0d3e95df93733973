//! `logret`: build embedding indexes, run logical and baseline retrieval,
//! generate synthetic benchmarks, calibrate term scores and evaluate runs.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use logret::algebra::{explain, AndOp, NotOp, OperatorConfig, OrOp};
use logret::bundle::{write_bundle, Bundle, Manifest};
use logret::calibration::{self, calibrated_retrieve, CalibrationStore, FALLBACK_KEY};
use logret::embedding::{BackendKind, BackendSpec, EmbeddingCache, DEFAULT_DIMENSION};
use logret::engine::{external_reformulate, RankedList, Retriever};
use logret::eval::{
    ablation_grid, evaluate_run, random_baseline, read_run, scaling_curves, scaling_table, Qrels,
};
use logret::index::{build_index_with_progress, ingest, EmbeddedIndex};
use logret::query::{parse_str, read_query_lines, QueryError};
use logret::synth::{chain_suite, enumerate_templates, generate_suite, Connective, Vocabulary};
use logret::{Embedder, QueryExpr};

#[derive(Parser)]
#[command(name = "logret", version, about = "Logical-query retrieval over dense embeddings")]
struct Cli {
    /// Print machine-readable JSON instead of text tables.
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads for all parallel work [default: available processors].
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL corpus and report its size.
    Ingest(IngestArgs),
    /// Embed a JSONL corpus and write an index file.
    Index(IndexArgs),
    /// Rank documents for one query or a query file.
    Query(QueryArgs),
    /// Generate a synthetic benchmark bundle.
    Synth(SynthArgs),
    /// Compute nDCG@10 for run files.
    Eval(EvalArgs),
    /// Evaluate all 12 operator combinations on a bundle.
    Ablate(AblateArgs),
    /// Fit a score calibration model from `score<TAB>label` lines.
    Calibrate(CalibrateArgs),
    /// Baseline vs logical nDCG@10 on AND- or OR-chains of growing length.
    Scaling(ScalingArgs),
    /// Expected nDCG@10 of uniformly random scores on a bundle.
    RandomBaseline(RandomBaselineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendChoice {
    Hash,
    Remote,
}

#[derive(Args)]
struct BackendArgs {
    /// Embedding backend.
    #[arg(long, value_enum, default_value = "hash")]
    backend: BackendChoice,
    /// Model id [default: hash-<dimension> for the hash backend].
    #[arg(long)]
    model: Option<String>,
    /// Remote embedding endpoint URL.
    #[arg(long)]
    endpoint: Option<String>,
    /// Header carrying the key from EMBED_API_KEY.
    #[arg(long, default_value = "Authorization")]
    auth_header: String,
    /// Embedding dimension [default: the index's, else 256 for hash].
    #[arg(long)]
    dimension: Option<usize>,
    /// Texts per embedding request [default: 256 hash, 64 remote].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Append-only embedding cache file.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct OperatorArgs {
    /// AND operator.
    #[arg(long = "and", default_value = "product")]
    and_op: AndOp,
    /// OR operator.
    #[arg(long = "or", default_value = "sum")]
    or_op: OrOp,
    /// NOT operator.
    #[arg(long = "not", default_value = "one-minus")]
    not_op: NotOp,
}

impl OperatorArgs {
    fn config(&self) -> OperatorConfig {
        OperatorConfig::new(self.and_op, self.or_op, self.not_op)
    }
}

#[derive(Args)]
struct IngestArgs {
    /// JSONL corpus with `_id`, `text` and optional `title`.
    #[arg(long)]
    corpus: PathBuf,
    /// Write the normalized corpus here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Index file to write.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct QueryArgs {
    /// Index file.
    #[arg(long)]
    index: PathBuf,
    /// Query text (logical syntax with --logical, free text with --baseline).
    #[arg(conflicts_with = "queries", required_unless_present = "queries")]
    query: Option<String>,
    /// File of queries, one per line, optionally `qid<TAB>query`.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Compose per-term scores through the query tree (default).
    #[arg(long, conflicts_with = "baseline")]
    logical: bool,
    /// Embed the whole query text and rank by cosine.
    #[arg(long)]
    baseline: bool,
    /// Results per query.
    #[arg(short, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    operators: OperatorArgs,
    /// Use raw cosines as term scores instead of (c + 1) / 2.
    #[arg(long)]
    no_normalize: bool,
    /// Print per-term scores and the composed formula for each result.
    #[arg(long, conflicts_with = "baseline")]
    explain: bool,
    /// Restrict each query to its documents listed in a bundle manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Calibration store applied to term scores.
    #[arg(long, conflicts_with = "baseline")]
    calibration: Option<PathBuf>,
    /// Shell command turning a question (stdin) into a logical query (stdout).
    #[arg(long, conflicts_with = "baseline")]
    reformulate: Option<String>,
    /// Run tag [default: baseline, logical:<operators> or calibrated:<operators>].
    #[arg(long)]
    tag: Option<String>,
    /// Write run lines here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Templates,
    Chains,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChainOp {
    And,
    Or,
}

impl From<ChainOp> for Connective {
    fn from(op: ChainOp) -> Self {
        match op {
            ChainOp::And => Connective::And,
            ChainOp::Or => Connective::Or,
        }
    }
}

#[derive(Args)]
struct VocabArgs {
    /// Topics in the generated vocabulary.
    #[arg(long, default_value_t = 48)]
    topics: usize,
    /// Hash dimension the vocabulary is made collision-free for.
    #[arg(long, default_value_t = DEFAULT_DIMENSION)]
    vocab_dimension: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl VocabArgs {
    fn vocabulary(&self) -> Result<Vocabulary> {
        Ok(Vocabulary::generate(self.topics, 3, self.vocab_dimension, self.seed)?)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "templates")]
    kind: SynthKind,
    /// Bundle directory to write.
    #[arg(long)]
    output: PathBuf,
    /// Queries per template (templates) or per chain length (chains).
    #[arg(long, default_value_t = 30)]
    queries: usize,
    /// Chain connective.
    #[arg(long, value_enum, default_value = "and")]
    op: ChainOp,
    #[arg(long, default_value_t = 2)]
    min_terms: usize,
    #[arg(long, default_value_t = 8)]
    max_terms: usize,
    #[command(flatten)]
    vocab: VocabArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Run files (`qid Q0 docid rank score tag`).
    #[arg(long = "run", required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    qrels: PathBuf,
    /// Bundle manifest supplying negation counts.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Bundle directory from `synth`.
    #[arg(long)]
    bundle: PathBuf,
    /// Prebuilt index over the bundle corpus [default: build in memory].
    #[arg(long)]
    index: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct CalibrateArgs {
    /// `score<TAB>label` lines.
    #[arg(long)]
    data: PathBuf,
    /// Calibration store to create or update.
    #[arg(long)]
    output: PathBuf,
    /// Term the model applies to; `*` is the fallback for all terms.
    #[arg(long, default_value = FALLBACK_KEY)]
    term: String,
    #[arg(long, default_value_t = calibration::DEFAULT_LEARNING_RATE)]
    learning_rate: f64,
    #[arg(long, default_value_t = calibration::DEFAULT_ITERATIONS)]
    iterations: usize,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, value_enum, default_value = "and")]
    op: ChainOp,
    #[arg(long, default_value_t = 2)]
    min_terms: usize,
    #[arg(long, default_value_t = 8)]
    max_terms: usize,
    /// Queries per chain length.
    #[arg(long, default_value_t = 30)]
    queries: usize,
    #[command(flatten)]
    vocab: VocabArgs,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct RandomBaselineArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

/// Bad flags or query syntax: exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn syntax_error(source: &str, err: &QueryError) -> anyhow::Error {
    let column = source
        .char_indices()
        .take_while(|&(i, _)| i < err.position())
        .count();
    usage(format!("{err}\n  {source}\n  {}^", " ".repeat(column)))
}

fn parse_query(text: &str) -> Result<QueryExpr> {
    parse_str(text).map_err(|e| syntax_error(text, &e))
}

fn build_embedder(args: &BackendArgs, index_dimension: Option<usize>) -> Result<Embedder> {
    let dimension = args.dimension.or(index_dimension);
    let mut spec = match args.backend {
        BackendChoice::Hash => {
            if args.endpoint.is_some() {
                return Err(usage("--endpoint requires --backend remote"));
            }
            BackendSpec::hash(dimension.unwrap_or(DEFAULT_DIMENSION))
        }
        BackendChoice::Remote => {
            let endpoint = args.endpoint.as_ref().ok_or_else(|| usage("--backend remote requires --endpoint"))?;
            let model = args.model.as_ref().ok_or_else(|| usage("--backend remote requires --model"))?;
            let dimension = dimension.ok_or_else(|| usage("--backend remote requires --dimension"))?;
            let mut spec = BackendSpec::remote(endpoint, model, dimension);
            spec.kind = BackendKind::Remote {
                endpoint: endpoint.clone(),
                auth_header: args.auth_header.clone(),
            };
            spec
        }
    };
    if let (BackendChoice::Hash, Some(model)) = (args.backend, &args.model) {
        spec.model_id = model.clone();
    }
    if let Some(batch) = args.batch_size {
        spec.batch_size = batch;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let cache = match &args.cache {
        Some(path) => Arc::new(
            EmbeddingCache::open(path).with_context(|| format!("opening cache {}", path.display()))?,
        ),
        None => Arc::new(EmbeddingCache::in_memory()),
    };
    Ok(Embedder::with_cache(spec, cache)?)
}

fn check_model(index: &EmbeddedIndex, embedder: &Embedder) -> Result<()> {
    let spec = embedder.spec();
    if index.model_id() != spec.model_id || index.dimension() != spec.dimension {
        bail!(
            "index was built with {} (dimension {}), backend is {} (dimension {})",
            index.model_id(),
            index.dimension(),
            spec.model_id,
            spec.dimension
        );
    }
    Ok(())
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_ingest(args: &IngestArgs, json: bool) -> Result<()> {
    let corpus = ingest(&args.corpus)?;
    if let Some(path) = &args.output {
        let mut w = BufWriter::new(File::create(path)?);
        corpus.write_jsonl(&mut w)?;
        w.flush()?;
    }
    if json {
        print_json(&serde_json::json!({ "documents": corpus.len() }))
    } else {
        println!("documents: {}", corpus.len());
        Ok(())
    }
}

fn cmd_index(args: &IndexArgs, json: bool) -> Result<()> {
    let corpus = ingest(&args.corpus)?;
    let embedder = build_embedder(&args.backend, None)?;
    let total = corpus.len();
    let index = build_index_with_progress(&corpus, &embedder, |done| {
        log::info!("embedded {done}/{total} documents");
    })?;
    index.save(&args.output)?;
    if json {
        print_json(&serde_json::json!({
            "documents": index.len(),
            "dimension": index.dimension(),
            "model_id": index.model_id(),
        }))
    } else {
        println!("documents: {}", index.len());
        println!("dimension: {}", index.dimension());
        println!("model: {}", index.model_id());
        Ok(())
    }
}

fn cmd_query(args: &QueryArgs, json: bool) -> Result<()> {
    let index = EmbeddedIndex::load(&args.index)?;
    let embedder = build_embedder(&args.backend, Some(index.dimension()))?;
    check_model(&index, &embedder)?;
    let queries: Vec<(String, String)> = match (&args.query, &args.queries) {
        (Some(q), None) => vec![("q1".to_string(), q.clone())],
        (None, Some(path)) => read_query_lines(
            &std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        ),
        _ => unreachable!("clap enforces exactly one query source"),
    };
    let manifest = args.manifest.as_ref().map(Manifest::load).transpose()?;
    let store = args.calibration.as_ref().map(CalibrationStore::load).transpose()?;
    let config = args.operators.config();

    // Parse everything up front so a syntax error aborts before any output.
    let exprs: Vec<Option<QueryExpr>> = queries
        .iter()
        .map(|(_, text)| {
            if args.baseline {
                Ok(None)
            } else if let Some(cmd) = &args.reformulate {
                Ok(Some(external_reformulate(text, cmd)?))
            } else {
                parse_query(text).map(Some)
            }
        })
        .collect::<Result<_>>()?;

    let tag = args.tag.clone().unwrap_or_else(|| {
        if args.baseline {
            "baseline".to_string()
        } else if store.is_some() {
            format!("calibrated:{}", config.label())
        } else {
            format!("logical:{}", config.label())
        }
    });

    let full_retriever = new_retriever(&index, &embedder, args.no_normalize);
    let mut lists: Vec<RankedList> = Vec::with_capacity(queries.len());
    let mut explanations: Vec<Vec<String>> = Vec::with_capacity(queries.len());
    for ((qid, text), expr) in queries.iter().zip(&exprs) {
        let subset;
        let local;
        let retriever = match &manifest {
            Some(m) => {
                let case = m
                    .case(qid)
                    .with_context(|| format!("query {qid} is not in the manifest"))?;
                subset = index.subset(&case.doc_ids)?;
                local = new_retriever(&subset, &embedder, args.no_normalize);
                &local
            }
            None => &full_retriever,
        };
        let list = match (expr, &store) {
            (None, _) => retriever.baseline_retrieve(qid, text, args.k)?,
            (Some(expr), Some(store)) => calibrated_retrieve(retriever, qid, expr, &config, store, args.k)?,
            (Some(expr), None) => retriever.logical_retrieve(qid, expr, &config, args.k)?,
        };
        let notes = match (expr, args.explain) {
            (Some(expr), true) => explain_list(retriever, expr, &config, store.as_ref(), &list)?,
            _ => Vec::new(),
        };
        lists.push(list);
        explanations.push(notes);
    }

    if json {
        return print_json(&lists);
    }
    let mut out: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for (list, notes) in lists.iter().zip(&explanations) {
        list.write_run(&tag, &mut out)?;
        for line in notes {
            writeln!(out, "# {line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn new_retriever<'a>(index: &'a EmbeddedIndex, embedder: &'a Embedder, raw: bool) -> Retriever<'a> {
    let retriever = Retriever::new(index, embedder);
    if raw {
        retriever.without_normalization()
    } else {
        retriever
    }
}

fn explain_list(
    retriever: &Retriever<'_>,
    expr: &QueryExpr,
    config: &OperatorConfig,
    store: Option<&CalibrationStore>,
    list: &RankedList,
) -> Result<Vec<String>> {
    let mut matrix = retriever.term_scores(expr)?;
    if let Some(store) = store {
        matrix = matrix.map_scores(|term, s| store.apply(term, s));
    }
    let ids = retriever.index().ids();
    let mut lines = Vec::new();
    for entry in &list.entries {
        let d = ids.iter().position(|id| *id == entry.doc_id).expect("ranked ids come from the index");
        let column = matrix.column(d);
        let scores = matrix
            .terms
            .iter()
            .map(|t| format!("{t:?}={:.4}", column(t).unwrap_or(f64::NAN)))
            .collect::<Vec<_>>()
            .join(" ");
        lines.push(format!("{} {}: {}", list.query_id, entry.doc_id, scores));
        lines.push(format!("{} {}: {}", list.query_id, entry.doc_id, explain(expr, config, &column)?));
    }
    Ok(lines)
}

fn cmd_synth(args: &SynthArgs, json: bool) -> Result<()> {
    let vocab = args.vocab.vocabulary()?;
    let seed = args.vocab.seed;
    let (cases, kind) = match args.kind {
        SynthKind::Templates => (
            generate_suite(&enumerate_templates(), &vocab, args.queries, seed)?,
            "templates".to_string(),
        ),
        SynthKind::Chains => {
            if args.min_terms > args.max_terms {
                return Err(usage("--min-terms must not exceed --max-terms"));
            }
            let op = Connective::from(args.op);
            let mut cases = Vec::new();
            for n in args.min_terms..=args.max_terms {
                cases.extend(chain_suite(op, n, args.queries, &vocab, seed)?);
            }
            (cases, format!("chains-{}", op.keyword().to_lowercase()))
        }
    };
    write_bundle(&args.output, &cases, &kind, seed, args.vocab.vocab_dimension)?;
    let documents: usize = cases.iter().map(|c| c.documents.len()).sum();
    if json {
        print_json(&serde_json::json!({ "kind": kind, "queries": cases.len(), "documents": documents }))
    } else {
        println!("kind: {kind}");
        println!("queries: {}", cases.len());
        println!("documents: {documents}");
        println!("bundle: {}", args.output.display());
        Ok(())
    }
}

fn cmd_eval(args: &EvalArgs, json: bool) -> Result<()> {
    let qrels = Qrels::read(BufReader::new(
        File::open(&args.qrels).with_context(|| format!("opening {}", args.qrels.display()))?,
    ))?;
    let manifest = args.manifest.as_ref().map(Manifest::load).transpose()?;
    let mut run = Vec::new();
    for path in &args.runs {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        run.extend(read_run(BufReader::new(file))?);
    }
    let report = evaluate_run(&run, &qrels, manifest.as_ref())?;
    if let Some(path) = &args.output {
        write_json(path, &report)?;
    }
    if json {
        print_json(&report)
    } else {
        print!("{}", report.text_table());
        Ok(())
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_ablate(args: &AblateArgs, json: bool) -> Result<()> {
    let bundle = Bundle::read(&args.bundle)?;
    let cases = bundle.cases()?;
    let (index, embedder) = match &args.index {
        Some(path) => {
            let index = EmbeddedIndex::load(path)?;
            let embedder = build_embedder(&args.backend, Some(index.dimension()))?;
            check_model(&index, &embedder)?;
            (index, embedder)
        }
        None => {
            let embedder = build_embedder(&args.backend, None)?;
            (logret::index::build_index(&bundle.corpus, &embedder)?, embedder)
        }
    };
    let report = ablation_grid(&cases, &index, &embedder)?;
    if json {
        print_json(&report)
    } else {
        print!("{}", report.ablation_table());
        Ok(())
    }
}

fn cmd_calibrate(args: &CalibrateArgs, json: bool) -> Result<()> {
    let file = File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?;
    let data = calibration::read_labeled(BufReader::new(file))?;
    let fit = calibration::fit(&data, args.learning_rate, args.iterations)?;
    if fit.degenerate {
        log::warn!("all labels are equal; stored a flat model");
    }
    let mut store = if args.output.exists() {
        CalibrationStore::load(&args.output)?
    } else {
        CalibrationStore::default()
    };
    store.insert(args.term.clone(), fit.model);
    store.save(&args.output)?;
    if json {
        print_json(&serde_json::json!({
            "term": args.term,
            "tau": fit.model.tau,
            "lambda": fit.model.lambda,
            "loss": fit.loss,
            "degenerate": fit.degenerate,
        }))
    } else {
        println!("term: {}", args.term);
        println!("tau: {:.6}", fit.model.tau);
        println!("lambda: {:.6}", fit.model.lambda);
        println!("loss: {:.6}", fit.loss);
        if fit.degenerate {
            println!("warning: single-class data");
        }
        Ok(())
    }
}

fn cmd_scaling(args: &ScalingArgs, json: bool) -> Result<()> {
    if args.min_terms > args.max_terms {
        return Err(usage("--min-terms must not exceed --max-terms"));
    }
    let vocab = args.vocab.vocabulary()?;
    let embedder = build_embedder(&args.backend, None)?;
    let points = scaling_curves(
        args.op.into(),
        args.min_terms..=args.max_terms,
        args.queries,
        &vocab,
        &embedder,
        args.vocab.seed,
    )?;
    if json {
        print_json(&points)
    } else {
        print!("{}", scaling_table(&points));
        Ok(())
    }
}

fn cmd_random_baseline(args: &RandomBaselineArgs, json: bool) -> Result<()> {
    let cases = Bundle::read(&args.bundle)?.cases()?;
    let mean = random_baseline(&cases, args.trials, args.seed);
    if json {
        print_json(&serde_json::json!({ "trials": args.trials, "queries": cases.len(), "ndcg@10": mean }))
    } else {
        println!("random nDCG@10: {mean:.4} ({} queries x {} trials)", cases.len(), args.trials);
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(workers) = cli.workers {
        if workers == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()?;
    }
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a, cli.json),
        Command::Index(a) => cmd_index(a, cli.json),
        Command::Query(a) => cmd_query(a, cli.json),
        Command::Synth(a) => cmd_synth(a, cli.json),
        Command::Eval(a) => cmd_eval(a, cli.json),
        Command::Ablate(a) => cmd_ablate(a, cli.json),
        Command::Calibrate(a) => cmd_calibrate(a, cli.json),
        Command::Scaling(a) => cmd_scaling(a, cli.json),
        Command::RandomBaseline(a) => cmd_random_baseline(a, cli.json),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if err.downcast_ref::<UsageError>().is_some() {
                eprintln!("error: {err}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {err:#}");
                ExitCode::from(1)
            }
        }
    }
}
