//! `cuechart serve` runs the service; `cuechart suggest` runs one round
//! from files and prints the report.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cuechart_core::catalog::{Catalog, LoadOptions};
use cuechart_core::gateway::{BackendConfig, Gateway, LiveConfig, ReplayMode, DEFAULT_API_KEY_ENV};
use cuechart_core::orchestrator::{run_offline, Engine, OfflineInputs, DEFAULT_PARALLELISM};
use cuechart_core::session::{SessionConfig, SessionStore, DEFAULT_CANDIDATES, DEFAULT_DEADLINE_MS};
use cuechart_server::AppState;

#[derive(Parser)]
#[command(name = "cuechart", version, about = "Visualization suggestions for live data presentations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP and WebSocket service.
    Serve(ServeArgs),
    /// Run a single round from files and print the round as JSON.
    Suggest(SuggestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Live,
    Replay,
    Simulated,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum, default_value = "replay")]
    backend: BackendKind,
    /// Fixture directory for the replay and simulated backends.
    #[arg(long)]
    replay_dir: Option<PathBuf>,
    /// Key fixtures on the prompt hash instead of stage and slot.
    #[arg(long)]
    replay_hashed: bool,
    /// Per-call latency added by the simulated backend.
    #[arg(long, default_value_t = 500)]
    sim_delay_ms: u64,
    /// Chat-completions endpoint for the live backend.
    #[arg(long, default_value = "https://api.openai.com/v1")]
    endpoint: String,
    #[arg(long, default_value = "gpt-4o-mini")]
    model: String,
    /// Per-request timeout for the live backend.
    #[arg(long, default_value_t = 30000)]
    request_timeout_ms: u64,
}

impl BackendArgs {
    fn config(&self) -> Result<BackendConfig, String> {
        let replay = || -> Result<BackendConfig, String> {
            let dir = self.replay_dir.clone().ok_or("--replay-dir is required for this backend")?;
            let mode = if self.replay_hashed { ReplayMode::Hashed } else { ReplayMode::Ordered };
            Ok(BackendConfig::Replay { dir, mode })
        };
        Ok(match self.backend {
            BackendKind::Replay => replay()?,
            BackendKind::Simulated => BackendConfig::Simulated {
                per_call_delay: Duration::from_millis(self.sim_delay_ms),
                inner: Box::new(replay()?),
            },
            BackendKind::Live => {
                let mut live = LiveConfig::new(&self.endpoint, &self.model);
                live.request_timeout = Duration::from_millis(self.request_timeout_ms);
                if std::env::var_os(DEFAULT_API_KEY_ENV).is_none() {
                    eprintln!("warning: {DEFAULT_API_KEY_ENV} is not set; requests go out unauthenticated");
                }
                BackendConfig::Live(live)
            }
        })
    }
}

#[derive(Args)]
struct RoundArgs {
    #[arg(long, default_value_t = DEFAULT_CANDIDATES)]
    candidates: usize,
    #[arg(long, default_value_t = DEFAULT_DEADLINE_MS)]
    deadline_ms: u64,
    /// Candidates evaluated at once; 1 runs everything serially.
    #[arg(long, default_value_t = DEFAULT_PARALLELISM)]
    parallelism: usize,
}

impl RoundArgs {
    fn session_config(&self) -> SessionConfig {
        SessionConfig {
            candidate_count: self.candidates,
            deadline_ms: self.deadline_ms,
            ..SessionConfig::default()
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    data_dir: PathBuf,
    /// Directory for per-session JSONL event logs; none means in-memory only.
    #[arg(long)]
    log_dir: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    round: RoundArgs,
}

#[derive(Args)]
struct SuggestArgs {
    #[arg(long)]
    data_dir: PathBuf,
    /// JSON array of `{speaker, text}`.
    #[arg(long)]
    transcript: PathBuf,
    /// Active chart as JSON (`{spec, datasetId, title, provenance}`).
    #[arg(long)]
    chart: Option<PathBuf>,
    /// Audience profile as JSON.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Leave out roundId, timings and cacheHits so reports diff cleanly.
    #[arg(long)]
    content_only: bool,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    round: RoundArgs,
}

fn fail(code: &str, message: impl std::fmt::Display) -> ExitCode {
    let body = serde_json::json!({"error": {"code": code, "message": message.to_string()}});
    eprintln!("{body}");
    ExitCode::FAILURE
}

async fn serve(args: ServeArgs) -> ExitCode {
    let backend = match args.backend.config() {
        Ok(b) => b,
        Err(e) => return fail("InvalidArguments", e),
    };
    if let Err(e) = args.round.session_config().validate() {
        return fail(e.code(), e);
    }
    let catalog = match Catalog::load_dir(&args.data_dir, &LoadOptions::default()) {
        Ok(c) => Arc::new(c),
        Err(e) => return fail(e.code(), e),
    };
    let gateway = match backend.build() {
        Ok(b) => Arc::new(Gateway::new(b)),
        Err(e) => return fail(e.code(), e),
    };
    if let Some(dir) = &args.log_dir {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return fail("EventLog", format!("{}: {e}", dir.display()));
        }
    }
    let sessions = Arc::new(SessionStore::new(args.log_dir.clone()));
    let engine = Engine::new(catalog, gateway, sessions).with_parallelism(args.round.parallelism);
    let state = AppState::new(engine).with_defaults(args.round.session_config());
    let addr = format!("{}:{}", args.host, args.port);
    let listener = match tokio::net::TcpListener::bind(&addr).await {
        Ok(l) => l,
        Err(e) => return fail("BindFailed", format!("{addr}: {e}")),
    };
    eprintln!("listening on http://{}", listener.local_addr().map(|a| a.to_string()).unwrap_or(addr));
    tokio::select! {
        result = cuechart_server::serve(listener, state) => match result {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail("ServeFailed", e),
        },
        _ = tokio::signal::ctrl_c() => ExitCode::SUCCESS,
    }
}

async fn suggest(args: SuggestArgs) -> ExitCode {
    let backend = match args.backend.config() {
        Ok(b) => b,
        Err(e) => return fail("InvalidArguments", e),
    };
    let inputs = OfflineInputs {
        data_dir: args.data_dir,
        transcript: args.transcript,
        chart: args.chart,
        profile: args.profile,
        config: args.round.session_config(),
        backend,
        parallelism: args.round.parallelism,
    };
    match run_offline(&inputs).await {
        Ok(round) => {
            let report = if args.content_only {
                round.content()
            } else {
                serde_json::to_value(&round).expect("rounds serialize")
            };
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.code(), e),
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve(args) => serve(args).await,
        Command::Suggest(args) => suggest(args).await,
    }
}
