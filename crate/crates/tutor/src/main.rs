use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use tutor::config::ApiConfig;
use tutor::store::read_jsonl;
use tutor::{corpus, llm, report, simulate, Tutor};
use tutor_core::{aggregate_metrics, FeedbackRecord};

/// Default config file looked up in the working directory.
const DEFAULT_CONFIG: &str = "tutor.toml";

#[derive(Parser)]
#[command(name = "tutor", version, about = "Scaffolded tutoring agent: service and operator tools")]
struct Cli {
    /// TOML config file (defaults to ./tutor.toml when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        /// Override the configured listen address.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Chunk and embed a curriculum directory into the data directory's index.
    Ingest { dir: PathBuf },
    /// Replay a scripted dialogue offline and write transcript, trace and final state.
    Simulate {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a feedback JSON Lines file as a ratings table.
    Eval {
        #[arg(long)]
        feedback: PathBuf,
    },
}

/// Failure with its exit code: 1 for runtime failures, 2 for usage or
/// configuration problems.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn load_config(path: Option<&Path>) -> Result<ApiConfig, Failure> {
    match path {
        Some(p) => ApiConfig::load(p).map_err(usage),
        None if Path::new(DEFAULT_CONFIG).is_file() => ApiConfig::load(Path::new(DEFAULT_CONFIG)).map_err(usage),
        None => {
            let cfg = ApiConfig::default();
            cfg.validate().map_err(usage)?;
            Ok(cfg)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Serve { listen } => {
            let mut cfg = load_config(cli.config.as_deref())?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            serve(&cfg)
        }
        Command::Ingest { dir } => {
            let cfg = load_config(cli.config.as_deref())?;
            if !dir.is_dir() {
                return Err(usage(anyhow::anyhow!("corpus directory {} does not exist", dir.display())));
            }
            let (embedder, embedder_id) = llm::embedder_from_config(&cfg).map_err(usage)?;
            let file = corpus::ingest(&dir, embedder.as_ref(), &embedder_id, &cfg.rag).map_err(runtime)?;
            let path = tutor::app::index_path(&cfg.data_dir);
            corpus::save_index(&path, &file).map_err(runtime)?;
            println!(
                "ingested {} docs, {} chunks into {}",
                file.index.doc_count(),
                file.index.len(),
                path.display()
            );
            Ok(())
        }
        Command::Simulate { script, out } => {
            let dialogue = simulate::Dialogue::load(&script).map_err(usage)?;
            let sim = simulate::run(&dialogue).map_err(runtime)?;
            simulate::write_outputs(&sim, &out).map_err(runtime)?;
            match &sim.failure {
                None => {
                    println!("{} turns written to {}", sim.responses.len(), out.display());
                    Ok(())
                }
                Some((turn, e)) => Err(runtime(anyhow::anyhow!("turn {turn} failed: {e}"))),
            }
        }
        Command::Eval { feedback } => {
            if !feedback.is_file() {
                return Err(usage(anyhow::anyhow!("feedback file {} does not exist", feedback.display())));
            }
            let records: Vec<FeedbackRecord> = read_jsonl(&feedback).map_err(runtime)?;
            print!("{}", report::render_table(&aggregate_metrics(&records)));
            Ok(())
        }
    }
}

fn serve(cfg: &ApiConfig) -> Result<(), Failure> {
    // Built before the runtime starts: the HTTP provider uses a blocking client.
    let tutor = Arc::new(Tutor::from_config(cfg).map_err(usage)?);
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .map_err(|e| usage(anyhow::anyhow!("cannot listen on {}: {e}", cfg.listen)))?;
        tracing::info!(addr = %cfg.listen, "serving");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        tutor::http::serve(tutor, listener, shutdown).await.map_err(runtime)
    })
}
