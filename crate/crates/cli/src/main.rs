use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kgforge::distill::{distill, DistillError, DistillOptions};
use kgforge::export::ExportError;
use kgforge::metrics::{compute_report, estimate_threshold, LabeledPairDataset, MetricsInput};
use kgforge::model::chunk_documents;
use kgforge::pipeline::{
    load_documents, resume, write_outputs, write_report, PipelineError, PipelineRun, OUTPUT_FILES,
};
use kgforge::{
    emit_cypher, emit_graph_json, parse_graph_json, run_pipeline, BackendConfig, Backends,
    EndpointPolicy, ExportFormat, ExportOptions, PipelineConfig, RelationMode, RemoteConfig,
};

const BLOCKS_FILE: &str = "semantic_blocks.json";

#[derive(Parser)]
#[command(
    name = "kgforge",
    version,
    about = "Build knowledge graphs from document collections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rewrite documents into semantic blocks.
    Distill(RunArgs),
    /// Build a graph from documents and write all run artifacts.
    Build(RunArgs),
    /// Continue a saved graph with more documents.
    Resume(ResumeArgs),
    /// Convert a saved graph to Cypher or graph JSON.
    Export(ExportArgs),
    /// Score a run against annotation files.
    Metrics(MetricsArgs),
    /// Mean and standard deviation of cosine similarity over labeled pairs.
    EstimateThreshold(EstimateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Remote,
    MockLookup,
    MockHash,
}

#[derive(Args)]
struct BackendArgs {
    /// Backend to use instead of the one in the config file.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Model fixture file for mock backends.
    #[arg(long, requires = "backend")]
    fixtures: Option<PathBuf>,
    /// Text-to-vector table for mock-lookup.
    #[arg(long, requires = "backend")]
    lookup_table: Option<PathBuf>,
    /// Embedding dimension (mock-hash, or remote override).
    #[arg(long, requires = "backend")]
    dimension: Option<usize>,
    /// Seed for mock-hash, or for the mock-lookup fallback embedder.
    #[arg(long, requires = "backend")]
    seed: Option<u64>,
    #[arg(long, requires = "backend")]
    base_url: Option<String>,
    #[arg(long, requires = "backend")]
    chat_model: Option<String>,
    #[arg(long, requires = "backend")]
    embedding_model: Option<String>,
}

impl BackendArgs {
    fn config(&self) -> Result<Option<BackendConfig>, CliError> {
        let Some(kind) = self.backend else {
            return Ok(None);
        };
        Ok(Some(match kind {
            BackendKind::Remote => {
                let mut remote = RemoteConfig::default();
                if let Some(url) = &self.base_url {
                    remote.base_url = url.clone();
                }
                if let Some(model) = &self.chat_model {
                    remote.chat_model = model.clone();
                }
                if let Some(model) = &self.embedding_model {
                    remote.embedding_model = model.clone();
                }
                if let Some(dimension) = self.dimension {
                    remote.dimension = dimension;
                }
                BackendConfig::Remote(remote)
            }
            BackendKind::MockLookup => BackendConfig::MockLookup {
                fixtures: self.fixtures.clone(),
                lookup_table: self
                    .lookup_table
                    .clone()
                    .ok_or_else(|| usage("--backend mock-lookup requires --lookup-table"))?,
                fallback_seed: self.seed,
            },
            BackendKind::MockHash => BackendConfig::MockHash {
                fixtures: self.fixtures.clone(),
                dimension: self
                    .dimension
                    .ok_or_else(|| usage("--backend mock-hash requires --dimension"))?,
                seed: self.seed.unwrap_or(0),
            },
        }))
    }
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of `*.txt` documents.
    #[arg(long)]
    docs: PathBuf,
    /// File listing document file names in processing order.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    blueprint: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    relation_mode: Option<RelationMode>,
    #[arg(long, value_parser = parse_policy)]
    endpoint_policy: Option<EndpointPolicy>,
    /// Split documents into chunks of at most this many characters.
    #[arg(long)]
    chunk_chars: Option<usize>,
    /// One semantic block per blueprint key.
    #[arg(long)]
    split_keys: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ResumeArgs {
    /// Graph JSON written by an earlier build.
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value = "graph-json", value_parser = parse_format)]
    format: ExportFormat,
    #[arg(long)]
    include_embeddings: bool,
    #[arg(long)]
    no_provenance: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Metrics input file with annotations and labels.
    #[arg(long)]
    input: PathBuf,
    /// Graph to compute resolution FDR on.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Labeled pair file for a threshold estimate.
    #[arg(long, requires = "backend")]
    pairs: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Report file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    pairs: PathBuf,
    /// Take the backend from a pipeline configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Also write the estimate as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<RelationMode, String> {
    s.parse()
}

fn parse_policy(s: &str) -> Result<EndpointPolicy, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    s.parse()
}

/// Exit code 1 for usage and configuration problems, 2 for runtime failures.
#[derive(Debug)]
enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage(message: impl std::fmt::Display) -> CliError {
    CliError::Usage(anyhow!("{message}"))
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_)
            | PipelineError::MissingFile(_)
            | PipelineError::Distill(
                DistillError::InvalidBlueprint(_) | DistillError::BlueprintFile { .. },
            ) => CliError::Usage(e.into()),
            e => CliError::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    if !path.is_file() {
        return Err(usage(format!("file not found: {}", path.display())));
    }
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(CliError::Runtime)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn pipeline_config(args: &RunArgs) -> Result<PipelineConfig, CliError> {
    let backend = args.backend.config()?;
    let mut config = match (&args.config, &args.blueprint, backend.clone()) {
        (Some(path), _, _) => PipelineConfig::from_file(path)?,
        (None, Some(blueprint), Some(backend)) => PipelineConfig::new(blueprint, backend),
        (None, _, _) => return Err(usage("give --config, or both --blueprint and --backend")),
    };
    if let Some(blueprint) = &args.blueprint {
        config.blueprint = blueprint.clone();
    }
    if let Some(backend) = backend {
        config.backend = backend;
    }
    if let Some(threshold) = args.threshold {
        config.matcher.threshold = threshold;
    }
    if let Some(mode) = args.relation_mode {
        config.relation_mode = mode;
    }
    if let Some(policy) = args.endpoint_policy {
        config.endpoint_policy = policy;
    }
    if args.chunk_chars.is_some() {
        config.chunk_chars = args.chunk_chars;
    }
    config.split_keys |= args.split_keys;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn backends(config: &BackendConfig) -> Result<Backends, CliError> {
    Backends::from_config(config).map_err(|e| CliError::Usage(e.into()))
}

fn print_run(run: &PipelineRun, dir: &Path) {
    let r = &run.report;
    println!(
        "documents: {}  chunks: {}  blocks: {}",
        r.documents, r.chunks, r.blocks
    );
    println!(
        "entities: {} local -> {} exact, {} merged, {} inserted; graph {} -> {}",
        r.entities.local,
        r.entities.exact,
        r.entities.merged,
        r.entities.inserted,
        r.entities.before,
        r.entities.after
    );
    println!(
        "relations: {} raw -> {} exact, {} merged, {} inserted, {} dropped; graph {} -> {}",
        r.relations.raw,
        r.relations.exact,
        r.relations.merged,
        r.relations.inserted,
        r.relations.dropped,
        r.relations.before,
        r.relations.after
    );
    for s in &r.skipped {
        println!("skipped {}: {}", s.id, s.reason);
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
    for t in &r.timings {
        println!("{}: {:.3}s", t.stage, t.elapsed.as_secs_f64());
    }
    println!("wrote {} files to {}", OUTPUT_FILES.len(), dir.display());
}

fn finish(
    result: Result<PipelineRun, PipelineError>,
    config: &PipelineConfig,
) -> Result<(), CliError> {
    match result {
        Ok(run) => {
            write_outputs(&run, &config.output_dir, config.include_provenance)?;
            print_run(&run, &config.output_dir);
            Ok(())
        }
        Err(PipelineError::Aborted {
            stage,
            source,
            report,
        }) => {
            write_report(&report, &config.output_dir)?;
            println!("partial report written to {}", config.output_dir.display());
            Err(CliError::Runtime(anyhow!(
                "run aborted during {stage}: {source}"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_distill(args: &RunArgs) -> Result<(), CliError> {
    let config = pipeline_config(args)?;
    let blueprint = config.load_blueprint()?;
    let backends = backends(&config.backend)?;
    let documents = load_documents(&args.docs, args.manifest.as_deref())?;
    let chunks = match config.chunk_chars {
        Some(n) => chunk_documents(&documents, n),
        None => documents,
    };
    let options = DistillOptions {
        split_keys: config.split_keys,
        max_attempts: config.max_attempts,
        concurrency: config.concurrency,
    };
    let result = distill(
        &chunks,
        &blueprint,
        &*backends.model,
        &config.prompts,
        &options,
    )
    .map_err(|e| CliError::Runtime(e.into()))?;
    let path = config.output_dir.join(BLOCKS_FILE);
    let mut text = serde_json::to_string_pretty(&result.blocks).context("serialize blocks")?;
    text.push('\n');
    write(&path, &text)?;
    println!(
        "documents: {}  blocks: {}  skipped: {}",
        result.report.processed,
        result.blocks.len(),
        result.report.skipped.len()
    );
    for s in &result.report.skipped {
        println!("skipped {}: {}", s.id, s.reason);
    }
    for w in &result.report.warnings {
        println!("warning: {w}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_build(args: &RunArgs) -> Result<(), CliError> {
    let config = pipeline_config(args)?;
    let backends = backends(&config.backend)?;
    let documents = load_documents(&args.docs, args.manifest.as_deref())?;
    finish(run_pipeline(&documents, &config, &backends, None), &config)
}

fn cmd_resume(args: &ResumeArgs) -> Result<(), CliError> {
    let config = pipeline_config(&args.run)?;
    let backends = backends(&config.backend)?;
    let documents = load_documents(&args.run.docs, args.run.manifest.as_deref())?;
    if !args.graph.is_file() {
        return Err(usage(format!("file not found: {}", args.graph.display())));
    }
    finish(resume(&args.graph, &documents, &config, &backends), &config)
}

fn cmd_export(args: &ExportArgs) -> Result<(), CliError> {
    let options = ExportOptions {
        format: args.format,
        include_embeddings: args.include_embeddings,
        include_provenance: !args.no_provenance,
    };
    options.validate().map_err(|e| CliError::Usage(e.into()))?;
    let graph = parse_graph_json(&read(&args.graph)?)
        .map_err(|e: ExportError| CliError::Runtime(e.into()))?;
    let text = match options.format {
        ExportFormat::Cypher => emit_cypher(&graph, options.include_provenance),
        ExportFormat::GraphJson => emit_graph_json(&graph, &options),
    };
    write(&args.out, &text)?;
    println!(
        "exported {} entities and {} relations to {}",
        graph.entities().len(),
        graph.relations().len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let input = MetricsInput::from_file(&args.input).map_err(|e| CliError::Usage(e.into()))?;
    let graph = match &args.graph {
        Some(path) => {
            Some(parse_graph_json(&read(path)?).map_err(|e| CliError::Runtime(e.into()))?)
        }
        None => None,
    };
    let estimate_inputs = match &args.pairs {
        Some(pairs) => {
            let dataset =
                LabeledPairDataset::from_file(pairs).map_err(|e| CliError::Usage(e.into()))?;
            let config = args.backend.config()?.expect("clap requires --backend");
            Some((dataset, backends(&config)?))
        }
        None => None,
    };
    let pairs = estimate_inputs
        .as_ref()
        .map(|(d, b)| (d, &*b.embedder as &dyn kgforge::Embedder));
    let report =
        compute_report(&input, graph.as_ref(), pairs).map_err(|e| CliError::Runtime(e.into()))?;
    let mut text = serde_json::to_string_pretty(&report).context("serialize report")?;
    text.push('\n');
    write(&args.out, &text)?;
    if let Some(s) = &report.schema_consistency {
        println!("schema consistency: {:.4} ± {:.4}", s.overall, s.std);
    }
    if let Some(h) = &report.information_consistency {
        let parts: Vec<String> = h.counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
        println!("information consistency: {}", parts.join(", "));
    }
    if let Some(p) = report.precision {
        println!("triplet precision: {p:.4}");
    }
    for (name, fdr) in [
        ("entities", &report.fdr_entities),
        ("relations", &report.fdr_relations),
    ] {
        if let Some(f) = fdr {
            println!(
                "resolution FDR ({name}): {}/{} unresolved, {} unlabeled",
                f.unresolved, f.total, f.unlabeled
            );
        }
    }
    if let Some(t) = &report.threshold_estimate {
        println!(
            "threshold estimate: mean {:.6}, std {:.6} over {} pairs",
            t.mean, t.std, t.pairs
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let config = match (args.backend.config()?, &args.config) {
        (Some(backend), _) => backend,
        (None, Some(path)) => PipelineConfig::from_file(path)?.backend,
        (None, None) => return Err(usage("give --backend or --config")),
    };
    let dataset =
        LabeledPairDataset::from_file(&args.pairs).map_err(|e| CliError::Usage(e.into()))?;
    let backends = backends(&config)?;
    let estimate = estimate_threshold(&dataset, &*backends.embedder)
        .map_err(|e| CliError::Runtime(e.into()))?;
    println!("pairs: {}", estimate.pairs);
    println!("mean: {:.6}", estimate.mean);
    println!("std: {:.6}", estimate.std);
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string_pretty(&estimate).context("serialize estimate")?;
        text.push('\n');
        write(out, &text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Distill(args) => cmd_distill(args),
        Command::Build(args) => cmd_build(args),
        Command::Resume(args) => cmd_resume(args),
        Command::Export(args) => cmd_export(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::EstimateThreshold(args) => cmd_estimate(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
