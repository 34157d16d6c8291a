//! Command-line front end. Exit codes: 0 success, 1 user error, 2 internal.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evrag_core::chunker::DEFAULT_TARGET_CHARS;
use evrag_core::embedding::{EmbedderConfig, EmbeddingClient, DEFAULT_DIM};
use evrag_core::evalkit::{
    categories_from_rows, category_summary, cohen_kappa, dedup_questions, likert_summary, paired_scores,
    read_ratings, render_table, GroupBy,
};
use evrag_core::mcp::{literature_tool, McpServer, ToolRegistry};
use evrag_core::orchestrate::{HttpLlm, LlmConfig, LlmProvider, Orchestrator, TemplateLlm};
use evrag_core::pubmed::{LitQuery, LiteratureSource, PubmedClient};
use evrag_core::vindex::{self, HnswParams};
use serde_json::json;

use crate::api::{self, AppState};
use crate::pipeline::{self, StepError};
use crate::store::SessionStore;

#[derive(Debug, Parser)]
#[command(name = "evrag", version, about = "Dual-source retrieval-augmented question answering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract and normalize every document in a manifest.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for normalized texts and report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Split normalized texts into paragraph-bounded chunks (JSON lines).
    Chunk {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        texts: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TARGET_CHARS)]
        target: usize,
    },
    /// Embed chunks into a vectors file.
    Embed {
        #[arg(long)]
        chunks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Build or query the vector index.
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Search the literature and print ranked articles as JSON.
    Litsearch {
        #[arg(long)]
        term: String,
        #[arg(long, default_value_t = 3)]
        max: usize,
        #[arg(long, default_value_t = 5)]
        years: u32,
        /// Rank purely by recency.
        #[arg(long)]
        no_reviews: bool,
    },
    /// Serve the literature tool over MCP on stdin/stdout.
    McpServe,
    /// Evaluation utilities.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    Build {
        #[arg(long)]
        chunks: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        m: usize,
        #[arg(long, default_value_t = 200)]
        ef_construction: usize,
    },
    Query {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        ef: Option<usize>,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum By {
    Criterion,
    Category,
    Overall,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Drop near-duplicate questions (one per line).
    Dedup {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.90)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[command(flatten)]
        embedder: EmbedderArgs,
    },
    /// Mean (SD) summaries of a ratings CSV.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = By::Criterion)]
        by: By,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Cohen's kappa between the two raters of a ratings CSV.
    Kappa {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        binarize: u8,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Debug, Clone, Args)]
pub struct EmbedderArgs {
    /// Vector dimension of the deterministic embedder.
    #[arg(long, default_value_t = DEFAULT_DIM)]
    pub dim: usize,
}

impl EmbedderArgs {
    pub fn client(&self) -> Result<EmbeddingClient, StepError> {
        let mut cfg = EmbedderConfig::from_env();
        cfg.dim = self.dim;
        EmbeddingClient::from_config(&cfg).map_err(StepError::user)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, env = "BIND_ADDR", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, env = "INDEX_PATH")]
    pub index: Option<PathBuf>,
    #[arg(long, env = "SESSIONS_DIR", default_value = "sessions")]
    pub sessions_dir: PathBuf,
    /// Answer from local documents only.
    #[arg(long)]
    pub no_literature: bool,
    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

/// Parses `argv` and runs the command, returning the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(StepError::User(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(StepError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            2
        }
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<(), StepError> {
    let s = serde_json::to_string_pretty(v).map_err(StepError::internal)?;
    writeln!(std::io::stdout(), "{s}").map_err(StepError::internal)
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, StepError> {
    path.as_deref()
        .ok_or_else(|| StepError::User(format!("missing required flag {flag}")))
}

fn execute(command: Command) -> Result<(), StepError> {
    match command {
        Command::Ingest { manifest, out } => {
            let reports = pipeline::ingest(&manifest, &out)?;
            let ocr = reports
                .iter()
                .filter(|r| r.tier_used != evrag_core::ingest::Tier::PrimaryText)
                .count();
            eprintln!("ingested {} document(s), {ocr} via fallback tiers, into {}", reports.len(), out.display());
            Ok(())
        }
        Command::Chunk {
            manifest,
            texts,
            out,
            target,
        } => {
            let chunks = pipeline::chunk(&manifest, &texts, target)?;
            pipeline::write_chunks(&out, &chunks)?;
            eprintln!("wrote {} chunk(s) to {}", chunks.len(), out.display());
            Ok(())
        }
        Command::Embed { chunks, out, embedder } => {
            let client = embedder.client()?;
            let records = pipeline::read_chunks(&chunks)?;
            let vectors = pipeline::embed(&records, &client)?;
            pipeline::write_embeddings(&out, client.dim(), &vectors)?;
            eprintln!("wrote {} vector(s) of dimension {} to {}", vectors.len(), client.dim(), out.display());
            Ok(())
        }
        Command::Index { command } => index_command(command),
        Command::Litsearch {
            term,
            max,
            years,
            no_reviews,
        } => {
            let q = LitQuery {
                term,
                max_results: max,
                years_back: years,
                prefer_reviews: !no_reviews,
            };
            q.validate().map_err(StepError::user)?;
            let articles = PubmedClient::from_env()
                .search_articles(&q)
                .map_err(StepError::internal)?;
            print_json(&json!({ "articles": articles }))
        }
        Command::McpServe => {
            let source: Arc<dyn LiteratureSource> = Arc::new(PubmedClient::from_env());
            let server = McpServer::new(ToolRegistry::new().with(literature_tool(source)));
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            evrag_core::mcp::serve(stdin.lock(), stdout.lock(), &server).map_err(StepError::internal)
        }
        Command::Eval { command } => eval_command(command),
        Command::Serve(args) => serve(args),
    }
}

fn index_command(command: IndexCommand) -> Result<(), StepError> {
    match command {
        IndexCommand::Build {
            chunks,
            vectors,
            out,
            m,
            ef_construction,
        } => {
            let mut params = HnswParams::with_m(m);
            params.ef_construction = ef_construction;
            params.validate().map_err(StepError::user)?;
            let index = pipeline::build_index_files(&chunks, &vectors, params)?;
            vindex::persist(&index, &out).map_err(StepError::internal)?;
            eprintln!("indexed {} item(s) into {}", index.len(), out.display());
            Ok(())
        }
        IndexCommand::Query {
            index,
            text,
            k,
            ef,
            embedder,
        } => {
            let path = require(&index, "--index")?;
            let index = vindex::load(path).map_err(StepError::user)?;
            let hits = pipeline::query(&index, &embedder.client()?, &text, k, ef)?;
            print_json(&json!({ "hits": hits }))
        }
    }
}

fn eval_command(command: EvalCommand) -> Result<(), StepError> {
    match command {
        EvalCommand::Dedup {
            input,
            threshold,
            format,
            embedder,
        } => {
            let raw = std::fs::read_to_string(&input).map_err(|e| StepError::User(format!("{}: {e}", input.display())))?;
            let questions: Vec<String> = raw.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
            let result = dedup_questions(&questions, &embedder.client()?, threshold).map_err(StepError::user)?;
            match format {
                Format::Json => print_json(&json!({
                    "kept": result.kept.iter().map(|&i| &questions[i]).collect::<Vec<_>>(),
                    "removed_pairs": result.removed,
                })),
                Format::Text => {
                    let mut out = String::new();
                    for &i in &result.kept {
                        out.push_str(&questions[i]);
                        out.push('\n');
                    }
                    for p in &result.removed {
                        eprintln!("removed {:>3} ~ {:>3} ({:.3}): {}", p.removed + 1, p.kept + 1, p.similarity, questions[p.removed]);
                    }
                    eprintln!("kept {} of {}", result.kept.len(), questions.len());
                    write!(std::io::stdout(), "{out}").map_err(StepError::internal)
                }
            }
        }
        EvalCommand::Summarize { input, by, format } => {
            let rows = read_ratings(&input).map_err(StepError::user)?;
            let summary = match by {
                By::Criterion => likert_summary(&rows, GroupBy::Criterion),
                By::Overall => likert_summary(&rows, GroupBy::Overall),
                By::Category => category_summary(&rows, &categories_from_rows(&rows)),
            }
            .map_err(StepError::user)?;
            match format {
                Format::Json => print_json(&json!({ "rows": summary })),
                Format::Text => write!(std::io::stdout(), "{}", render_table(&summary)).map_err(StepError::internal),
            }
        }
        EvalCommand::Kappa {
            input,
            binarize,
            format,
        } => {
            let rows = read_ratings(&input).map_err(StepError::user)?;
            let (a, b) = paired_scores(&rows).map_err(StepError::user)?;
            let kappa = cohen_kappa(&a, &b, binarize).map_err(StepError::user)?;
            match format {
                Format::Json => print_json(&json!({ "kappa": kappa, "pairs": a.len(), "binarize_at": binarize })),
                Format::Text => writeln!(std::io::stdout(), "kappa {kappa:.4} over {} pair(s), acceptable at >= {binarize}", a.len())
                    .map_err(StepError::internal),
            }
        }
    }
}

fn serve(args: ServeArgs) -> Result<(), StepError> {
    let embedder = args.embedder.client()?;
    let index = match &args.index {
        Some(path) => {
            let index = vindex::load(path).map_err(StepError::user)?;
            if index.dim() != embedder.dim() {
                return Err(StepError::User(format!(
                    "index holds {}-d vectors but the embedder produces {}-d vectors (use --dim)",
                    index.dim(),
                    embedder.dim()
                )));
            }
            Some(Arc::new(index))
        }
        None => {
            tracing::warn!("no index configured; chat requests will fail until INDEX_PATH is set");
            None
        }
    };
    let literature: Option<Arc<dyn LiteratureSource>> =
        (!args.no_literature).then(|| Arc::new(PubmedClient::from_env()) as Arc<dyn LiteratureSource>);
    let (llm, kind): (Arc<dyn LlmProvider>, &str) = match LlmConfig::from_env() {
        Some(cfg) => (Arc::new(HttpLlm::new(cfg)), "remote"),
        None => (Arc::new(TemplateLlm), "template"),
    };
    let store = SessionStore::open(&args.sessions_dir).map_err(StepError::user)?;
    let state = Arc::new(AppState::new(Orchestrator::new(index, embedder, literature, llm), store, kind));
    let runtime = tokio::runtime::Runtime::new().map_err(StepError::internal)?;
    runtime
        .block_on(api::serve(state, args.bind))
        .map_err(|e| StepError::User(format!("cannot serve on {}: {e}", args.bind)))
}
