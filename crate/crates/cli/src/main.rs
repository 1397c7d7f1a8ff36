mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use slicerchat_bench::{
    default_arms, emit_report, load_arms, load_cases, load_review, placeholder_cases, review_results, run_benchmark,
    RunOptions, Summary,
};
use slicerchat_core::index::HashEmbedder;
use slicerchat_core::ingest::{load_qa_dataset, read_corpus, scan_repository, write_corpus, ChunkingMode};
use slicerchat_core::{ChunkingPolicy, GenerationParams, KnowledgeBase, RagConfig, SourceKind};
use slicerchat_server::{BackendConfig, BackendSpec, ChatService, ServiceConfig};
use tracing_subscriber::EnvFilter;

use crate::config::FileConfig;

const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Parser, Debug)]
#[command(
    name = "slicerchat",
    version,
    about = "Local retrieval-augmented chat: build indexes, serve, benchmark"
)]
struct Cli {
    /// JSON overlay with per-subcommand defaults.
    #[arg(long, global = true, env = "SLICERCHAT_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan a source tree into a JSONL corpus.
    Ingest {
        #[arg(long)]
        root: Option<PathBuf>,
        /// File suffixes to keep (default .py and .md).
        #[arg(long = "ext", num_args = 1..)]
        ext: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chunk, embed and save the python, markdown and discourse stores.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Q&A pairs, one JSON object per line.
        #[arg(long)]
        qa: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_tokens: Option<usize>,
        #[arg(long)]
        overlap: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Search one store of a saved index.
    Query {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, value_parser = parse_source)]
        source: Option<SourceKind>,
        #[arg(short = 'k')]
        k: Option<usize>,
        text: String,
    },
    /// Run the chat HTTP service until interrupted.
    Serve {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        addr: Option<String>,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        backend_addr: Option<String>,
    },
    /// Run a case × arm grid against a running service and write reports.
    Bench {
        /// Cases JSONL (default: the bundled placeholder cases).
        #[arg(long)]
        cases: Option<PathBuf>,
        /// Arms JSON (default: the bundled four-arm source ablation).
        #[arg(long)]
        arms: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        review: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-token delay requested from mock backends.
        #[arg(long)]
        token_delay_ms: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Structure,
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    MockHash,
    MockEcho,
    External,
}

fn parse_source(s: &str) -> Result<SourceKind, String> {
    match s.parse::<SourceKind>()? {
        k @ (SourceKind::PythonCode | SourceKind::MarkdownDoc | SourceKind::DiscourseQA) => Ok(k),
        k => Err(format!(
            "'{}' has no saved store (use python, markdown or discourse)",
            k.short_name()
        )),
    }
}

/// Exits with clap's usage status, before any side effect.
fn usage(message: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ArgumentConflict, message).exit()
}

fn required<T>(value: Option<T>, flag: &str) -> T {
    value.unwrap_or_else(|| {
        Cli::command()
            .error(
                ErrorKind::MissingRequiredArgument,
                format!("{flag} is required (flag or config file)"),
            )
            .exit()
    })
}

fn from_file<T: ValueEnum>(value: Option<&str>, key: &str) -> Option<T> {
    value.map(|v| T::from_str(v, true).unwrap_or_else(|_| usage(format!("config value {key} = '{v}' is not valid"))))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let file = match FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    match run(cli.command, file) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, file: FileConfig) -> anyhow::Result<()> {
    match command {
        Command::Ingest { root, ext, out } => {
            let f = file.ingest;
            let root = required(root.or(f.root), "--root");
            let out = required(out.or(f.out), "--out");
            let ext = if !ext.is_empty() {
                ext
            } else {
                f.ext.unwrap_or_else(|| vec![".py".into(), ".md".into()])
            };
            cmd_ingest(&root, &ext, &out)
        }
        Command::Index {
            corpus,
            qa,
            out,
            max_tokens,
            overlap,
            dim,
            mode,
        } => {
            let f = file.index;
            let corpus = corpus.or(f.corpus);
            let qa = qa.or(f.qa);
            if corpus.is_none() && qa.is_none() {
                usage("index needs --corpus and/or --qa");
            }
            let out = required(out.or(f.out), "--out");
            let mode = mode
                .or_else(|| from_file(f.mode.as_deref(), "index.mode"))
                .unwrap_or(ModeArg::Structure);
            let mode = match mode {
                ModeArg::Structure => ChunkingMode::StructureAware,
                ModeArg::Token => ChunkingMode::TokenOnly,
            };
            let policy = ChunkingPolicy::new(
                max_tokens.or(f.max_tokens).unwrap_or(200),
                overlap.or(f.overlap).unwrap_or(50),
                mode,
            )
            .unwrap_or_else(|e| usage(e));
            let dim = dim.or(f.dim).unwrap_or(384);
            cmd_index(corpus.as_deref(), qa.as_deref(), &out, policy, dim)
        }
        Command::Query { index, source, k, text } => {
            let f = file.query;
            let index = required(index.or(f.index), "--index");
            let source = source
                .or_else(|| f.source.map(|s| parse_source(&s).unwrap_or_else(|e| usage(e))))
                .unwrap_or_else(|| required(None, "--source"));
            cmd_query(&index, source, k.or(f.k).unwrap_or(5), &text)
        }
        Command::Serve {
            index,
            addr,
            backend,
            backend_addr,
        } => {
            let f = file.serve;
            let backend = backend
                .or_else(|| from_file(f.backend.as_deref(), "serve.backend"))
                .unwrap_or(BackendArg::MockHash);
            let backend_addr = backend_addr.or(f.backend_addr);
            if backend == BackendArg::External && backend_addr.is_none() {
                usage("--backend external requires --backend-addr");
            }
            let addr = addr.or(f.addr).unwrap_or_else(|| DEFAULT_ADDR.into());
            cmd_serve(index.or(f.index).as_deref(), &addr, backend, backend_addr, f.backends)
        }
        Command::Bench {
            cases,
            arms,
            endpoint,
            review,
            out,
            token_delay_ms,
        } => {
            let f = file.bench;
            let endpoint = endpoint
                .or(f.endpoint)
                .unwrap_or_else(|| format!("http://{DEFAULT_ADDR}"));
            let out = required(out.or(f.out), "--out");
            let params = GenerationParams {
                inter_token_delay_ms: token_delay_ms.or(f.token_delay_ms).unwrap_or(0),
                ..GenerationParams::default()
            };
            cmd_bench(
                cases.or(f.cases).as_deref(),
                arms.or(f.arms).as_deref(),
                &endpoint,
                review.or(f.review).as_deref(),
                &out,
                params,
            )
        }
    }
}

fn cmd_ingest(root: &Path, ext: &[String], out: &Path) -> anyhow::Result<()> {
    let ext: Vec<String> = ext
        .iter()
        .map(|e| if e.starts_with('.') { e.clone() } else { format!(".{e}") })
        .collect();
    let report = scan_repository(root, &ext)?;
    write_corpus(out, &report.documents).with_context(|| format!("writing {}", out.display()))?;
    let python = report
        .documents
        .iter()
        .filter(|d| d.kind == SourceKind::PythonCode)
        .count();
    println!(
        "documents: {} (python {}, markdown {})",
        report.documents.len(),
        python,
        report.documents.len() - python
    );
    println!("lines: {}", report.total_lines());
    println!(
        "skipped: {} non-utf8, {} unreadable",
        report.skipped_non_utf8, report.unreadable
    );
    Ok(())
}

fn cmd_index(
    corpus: Option<&Path>,
    qa: Option<&Path>,
    out: &Path,
    policy: ChunkingPolicy,
    dim: usize,
) -> anyhow::Result<()> {
    let embedder = HashEmbedder::new(dim).map_err(|e| anyhow::anyhow!("--dim {dim}: {e}"))?;
    let docs = match corpus {
        Some(p) => read_corpus(p)?,
        None => Vec::new(),
    };
    let pairs = match qa {
        Some(p) => load_qa_dataset(p)?,
        None => Vec::new(),
    };
    let (kb, report) = KnowledgeBase::build(&docs, &pairs, policy, Arc::new(embedder))?;
    kb.save_atomic(out)
        .with_context(|| format!("saving index to {}", out.display()))?;
    let counts = report.counts;
    println!("python: {}", counts.python);
    println!("markdown: {}", counts.markdown);
    println!("discourse: {}", counts.discourse);
    if counts.total() == 0 {
        eprintln!("warning: index is empty");
    }
    Ok(())
}

fn cmd_query(index: &Path, source: SourceKind, k: usize, text: &str) -> anyhow::Result<()> {
    let kb = KnowledgeBase::load(index).with_context(|| format!("loading index {}", index.display()))?;
    let store = kb.store(source).expect("parse_source only admits persistent kinds");
    let hits = store.search(&kb.embed(text), k)?;
    if hits.is_empty() {
        println!("no results");
        return Ok(());
    }
    for (rank, hit) in hits.iter().enumerate() {
        let first = hit.chunk.text.lines().next().unwrap_or("");
        println!(
            "{}. {:.4} {} [{}#{}] {}",
            rank + 1,
            hit.score,
            hit.chunk.doc_id,
            hit.id,
            hit.chunk.seq,
            first
        );
    }
    Ok(())
}

fn cmd_serve(
    index: Option<&Path>,
    addr: &str,
    backend: BackendArg,
    backend_addr: Option<String>,
    extra: Vec<BackendConfig>,
) -> anyhow::Result<()> {
    let kb = match index {
        Some(dir) => KnowledgeBase::load(dir).with_context(|| format!("loading index {}", dir.display()))?,
        None => {
            tracing::warn!("no --index given; serving with empty knowledge stores");
            KnowledgeBase::empty(Arc::new(HashEmbedder::default()), ChunkingPolicy::default())
        }
    };
    let mut backends = BackendConfig::defaults();
    let default_model = match backend {
        BackendArg::MockHash => "mock-hash".to_string(),
        BackendArg::MockEcho => "mock-echo".to_string(),
        BackendArg::External => {
            let address = backend_addr.expect("checked before");
            backends.push(BackendConfig::new("external", BackendSpec::External { address }));
            "external".to_string()
        }
    };
    backends.extend(extra);
    let config = ServiceConfig {
        backends,
        default_model: Some(default_model),
        default_rag: RagConfig::default(),
    };
    let service = Arc::new(ChatService::new(Arc::new(kb), config)?);

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        tokio::select! {
            served = slicerchat_server::serve(listener, service) => served.context("server stopped")?,
            _ = tokio::signal::ctrl_c() => tracing::info!("interrupted"),
        }
        Ok(())
    })
}

fn cmd_bench(
    cases: Option<&Path>,
    arms: Option<&Path>,
    endpoint: &str,
    review: Option<&Path>,
    out: &Path,
    params: GenerationParams,
) -> anyhow::Result<()> {
    let cases = match cases {
        Some(p) => load_cases(p)?,
        None => placeholder_cases(),
    };
    let arms = match arms {
        Some(p) => load_arms(p)?,
        None => default_arms(),
    };
    let reviews = review.map(load_review).transpose()?;
    if cases.is_empty() || arms.is_empty() {
        bail!("need at least one case and one arm");
    }

    let rt = tokio::runtime::Runtime::new()?;
    let mut results = rt.block_on(run_benchmark(&cases, &arms, endpoint, &RunOptions { params }))?;
    if let Some(entries) = reviews {
        review_results(&mut results, &entries)?;
    }
    let files = emit_report(&results, out)?;

    let summary = Summary::from_results(&results);
    println!(
        "{} runs ({} cases × {} arms)",
        results.len(),
        summary.cases.len(),
        summary.arms.len()
    );
    for (model, t) in &summary.seconds_by_model {
        println!("{model}: mean {:.3}s over {} runs", t.mean_seconds, t.runs);
    }
    let failed = results
        .iter()
        .filter(|r| r.note.as_deref().is_some_and(|n| n.starts_with("error")))
        .count();
    if failed > 0 {
        println!("{failed} runs failed (scored 0)");
    }
    println!("wrote {}", files.results_csv.display());
    Ok(())
}
