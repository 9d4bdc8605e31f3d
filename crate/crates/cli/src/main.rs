use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use npcbridge_core::config::ServiceConfig;
use npcbridge_core::llm::ScriptedBackend;
use npcbridge_core::orchestrator::gateway::run_gateway;
use npcbridge_core::orchestrator::http::serve;
use npcbridge_core::replay::{self, bundled, ReplayError, ReplayScenario};
use npcbridge_core::store::{DialogueStore, FileStore, InMemoryStore};
use npcbridge_core::{NpcProfile, OrchestratorSettings, UserId};
use tokio::sync::watch;

const DEFAULT_STORE: &str = "npcbridge-dialogue.jsonl";

#[derive(Debug, Parser)]
#[command(
    name = "npcbridge",
    version,
    about = "Cross-platform NPC dialogue service"
)]
struct Cli {
    /// Service config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct StoreArgs {
    /// Dialogue log to use instead of the configured one.
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP API (and the chat gateway, if configured).
    Serve,
    /// Replay a scenario file, or a bundled scenario by name, through the
    /// full pipeline with a scripted backend.
    Replay {
        scenario: String,
        /// Script file for the mock backend. Defaults to the scenario's own.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Keep the replayed dialogue in memory only.
        #[arg(long, conflicts_with = "store")]
        in_memory: bool,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Print a user's records in transcript format.
    Inspect {
        user_id: String,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Delete one user's records, or all records.
    Reset {
        #[arg(required_unless_present = "all", conflicts_with = "all")]
        user_id: Option<String>,
        #[arg(long)]
        all: bool,
        /// Skip the confirmation prompt.
        #[arg(long)]
        yes: bool,
        #[command(flatten)]
        store: StoreArgs,
    },
}

/// A failed command and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

type CmdResult = Result<ExitCode, Failure>;

fn load_config(path: Option<&Path>) -> Result<Option<ServiceConfig>, Failure> {
    path.map(|p| ServiceConfig::load(p).map_err(Failure::usage))
        .transpose()
}

fn store_path(args: &StoreArgs, config: Option<&ServiceConfig>) -> PathBuf {
    args.store
        .clone()
        .or_else(|| config.and_then(|c| c.store_path.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_STORE))
}

fn open_store(path: &Path) -> Result<FileStore, Failure> {
    FileStore::open(path)
        .map_err(|e| Failure::usage(format!("cannot open store {}: {e}", path.display())))
}

async fn shutdown_signal(mut rx: watch::Receiver<bool>) {
    let _ = rx.wait_for(|stop| *stop).await;
}

async fn wait_for_interrupt() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = match signal(SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
                return;
            }
        };
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

async fn cmd_serve(config_path: Option<&Path>) -> CmdResult {
    let Some(config) = load_config(config_path)? else {
        return Err(Failure::usage("serve needs --config PATH"));
    };
    let orchestrator = Arc::new(config.build_orchestrator().map_err(Failure::usage)?);
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|e| Failure::usage(format!("cannot bind {}: {e}", config.listen)))?;
    let addr = listener
        .local_addr()
        .map_err(|e| Failure::usage(format!("cannot read bound address: {e}")))?;
    println!("listening on {addr}");
    let _ = std::io::stdout().flush();
    tracing::info!(%addr, npc = %orchestrator.profile().name, "serving");

    let (stop_tx, stop_rx) = watch::channel(false);
    let gateway = config.gateway.as_ref().map(|gw| {
        let (connector, backoff) = gw.connector();
        tokio::spawn(run_gateway(
            Arc::new(connector),
            Arc::clone(&orchestrator),
            backoff,
            shutdown_signal(stop_rx.clone()),
        ))
    });
    tokio::spawn(async move {
        wait_for_interrupt().await;
        tracing::info!("shutting down");
        let _ = stop_tx.send(true);
    });

    let served = serve(listener, orchestrator, shutdown_signal(stop_rx)).await;
    if let Some(gateway) = gateway {
        if let Ok(report) = gateway.await {
            tracing::info!(?report, "chat gateway stopped");
        }
    }
    served.map_err(|e| Failure {
        code: 1,
        message: format!("server error: {e}"),
    })?;
    Ok(ExitCode::SUCCESS)
}

fn load_scenario(
    name_or_path: &str,
    script: Option<&Path>,
) -> Result<(ReplayScenario, ScriptedBackend), Failure> {
    let path = Path::new(name_or_path);
    let (scenario, default_backend) = if path.exists() {
        let scenario = ReplayScenario::load(path).map_err(Failure::usage)?;
        (scenario, None)
    } else if let Some(loaded) = bundled::load(name_or_path) {
        let (scenario, backend) = loaded.map_err(Failure::usage)?;
        (scenario, Some(backend))
    } else {
        return Err(Failure::usage(format!(
            "no scenario file `{name_or_path}` and no bundled scenario of that name (bundled: {})",
            bundled::NAMES.join(", ")
        )));
    };
    let backend = match (script, &scenario.script, default_backend) {
        (Some(path), _, _) => ScriptedBackend::from_path(path).map_err(Failure::usage)?,
        (None, _, Some(bundled)) => bundled,
        (None, Some(path), None) => ScriptedBackend::from_path(path).map_err(Failure::usage)?,
        (None, None, None) => {
            return Err(Failure::usage(
                "scenario names no script; pass --script PATH",
            ));
        }
    };
    Ok((scenario, backend))
}

async fn cmd_replay(
    config_path: Option<&Path>,
    scenario: &str,
    script: Option<&Path>,
    json: bool,
    in_memory: bool,
    store_args: &StoreArgs,
) -> CmdResult {
    let config = load_config(config_path)?;
    let (scenario, backend) = load_scenario(scenario, script)?;
    let (profile, settings) = match &config {
        Some(c) => (c.load_profile().map_err(Failure::usage)?, c.settings()),
        None => (NpcProfile::default(), OrchestratorSettings::default()),
    };
    let store: Arc<dyn DialogueStore> = if in_memory {
        Arc::new(InMemoryStore::new())
    } else {
        Arc::new(open_store(&store_path(store_args, config.as_ref()))?)
    };

    let report = replay::run(
        &scenario,
        Arc::new(backend),
        Arc::clone(&store),
        profile,
        settings,
    )
    .await
    .map_err(|e| match e {
        ReplayError::Store(_) => Failure {
            code: 1,
            message: e.to_string(),
        },
        other => Failure::usage(other),
    })?;
    let _ = store.flush();

    if json {
        let text =
            serde_json::to_string_pretty(&report).map_err(|e| Failure::usage(e.to_string()))?;
        println!("{text}");
    } else {
        print!("{}", report.to_text());
    }
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        let steps: Vec<String> = report
            .failed_steps()
            .iter()
            .map(|s| s.to_string())
            .collect();
        eprintln!(
            "replay {} failed at step {}",
            report.scenario,
            steps.join(", ")
        );
        Ok(ExitCode::from(1))
    }
}

fn cmd_inspect(config_path: Option<&Path>, user: &str, store_args: &StoreArgs) -> CmdResult {
    let config = load_config(config_path)?;
    let user = UserId::new(user).map_err(Failure::usage)?;
    let store = open_store(&store_path(store_args, config.as_ref()))?;
    let transcript = store.export_transcript(&user).map_err(Failure::usage)?;
    print!("{}", transcript.to_jsonl());
    Ok(ExitCode::SUCCESS)
}

fn confirm(question: &str) -> Result<bool, Failure> {
    if !std::io::stdin().is_terminal() {
        return Err(Failure::usage(
            "refusing to delete without --yes when stdin is not a terminal",
        ));
    }
    eprint!("{question} [y/N] ");
    let _ = std::io::stderr().flush();
    let mut answer = String::new();
    std::io::stdin()
        .lock()
        .read_line(&mut answer)
        .map_err(|e| Failure::usage(e.to_string()))?;
    Ok(matches!(answer.trim(), "y" | "Y" | "yes"))
}

fn cmd_reset(
    config_path: Option<&Path>,
    user: Option<&str>,
    yes: bool,
    store_args: &StoreArgs,
) -> CmdResult {
    let config = load_config(config_path)?;
    let user = user.map(UserId::new).transpose().map_err(Failure::usage)?;
    let path = store_path(store_args, config.as_ref());
    let store = open_store(&path)?;
    let what = match &user {
        Some(u) => format!("all records of {u}"),
        None => "every record".to_string(),
    };
    if !yes && !confirm(&format!("Delete {what} from {}?", path.display()))? {
        eprintln!("nothing deleted");
        return Ok(ExitCode::SUCCESS);
    }
    let removed = store.purge(user.as_ref()).map_err(|e| Failure {
        code: 1,
        message: e.to_string(),
    })?;
    eprintln!("deleted {removed} records");
    Ok(ExitCode::SUCCESS)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let result = match &cli.command {
        Command::Serve => cmd_serve(config).await,
        Command::Replay {
            scenario,
            script,
            json,
            in_memory,
            store,
        } => {
            cmd_replay(
                config,
                scenario,
                script.as_deref(),
                *json,
                *in_memory,
                store,
            )
            .await
        }
        Command::Inspect { user_id, store } => cmd_inspect(config, user_id, store),
        Command::Reset {
            user_id,
            all: _,
            yes,
            store,
        } => cmd_reset(config, user_id.as_deref(), *yes, store),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
