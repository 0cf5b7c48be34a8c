//! `trust-ladder`: run, replay and export missions headless, serve one over
//! HTTP, or talk to a running server.
//!
//! Exit codes: 0 success, 1 verification or runtime failure, 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use futures::StreamExt;
use trust_ladder_client::api::{CommandKind, CommandMessage, CommandParams, RatingMessage, TelemetryFrame};
use trust_ladder_client::Client;
use trust_ladder_core::log::{read_jsonl, to_jsonl, Expectation};
use trust_ladder_core::metrics::{export_metrics, Format};
use trust_ladder_core::sim::Trajectory;
use trust_ladder_core::{replay, run, AgentId, Cell, Scenario, Snapshot};
use trust_ladder_gateway::{Config, Gateway, EVENT_LOG};

#[derive(Debug, Parser)]
#[command(name = "trust-ladder", version, about = "Human-robot team trust mission simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Run a mission and write events.jsonl, trajectory.json and metrics.csv.
    Run(RunArgs),
    /// Re-simulate a log and check it reproduces exactly.
    Replay(ReplayArgs),
    /// Convert a trajectory to CSV or JSON.
    Export(ExportArgs),
    /// Serve a mission over HTTP.
    Serve(ServeArgs),
    /// Send an operator command to a running server.
    Command(CommandArgs),
    /// Answer an open rating prompt.
    Rate(RateArgs),
    /// Print telemetry frames as they arrive.
    Watch(WatchArgs),
    /// Print the latest state.
    State(ServerArgs),
    /// Print the trust edges and gates.
    Trust(ServerArgs),
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "TRUST_LADDER_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    ticks: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Event log to verify.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Also compare against a saved trajectory.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// A trajectory.json written by `run` or `serve`.
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Milliseconds per tick.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    tick_ms: u64,
    /// End the mission after this many ticks.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    ticks: Option<u64>,
    /// Start paused; resume with a `resume` command.
    #[arg(long)]
    paused: bool,
    /// Exit once the mission has ended instead of waiting for Ctrl-C.
    #[arg(long, requires = "ticks")]
    exit_when_done: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct ServerArgs {
    #[arg(long, env = "TRUST_LADDER_SERVER", default_value = "http://127.0.0.1:8080")]
    server: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Move,
    Scan,
    Assist,
    Recharge,
    Idle,
    Pause,
    Resume,
    OverrideGate,
}

impl From<KindArg> for CommandKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Move => CommandKind::Move,
            KindArg::Scan => CommandKind::Scan,
            KindArg::Assist => CommandKind::Assist,
            KindArg::Recharge => CommandKind::Recharge,
            KindArg::Idle => CommandKind::Idle,
            KindArg::Pause => CommandKind::Pause,
            KindArg::Resume => CommandKind::Resume,
            KindArg::OverrideGate => CommandKind::OverrideGate,
        }
    }
}

#[derive(Debug, Args)]
struct CommandArgs {
    #[command(flatten)]
    server: ServerArgs,
    #[arg(value_enum)]
    kind: KindArg,
    #[arg(long, default_value = "coordinator")]
    issuer: AgentId,
    /// Agent to steer.
    #[arg(long)]
    agent: Option<AgentId>,
    /// Move destination as `x,y`.
    #[arg(long)]
    to: Option<Cell>,
    #[arg(long)]
    tag: Option<String>,
    #[arg(long)]
    teammate: Option<AgentId>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExpectationArg {
    SelfishGoal,
    TeamGoal,
    Unsure,
}

#[derive(Debug, Args)]
struct RateArgs {
    #[command(flatten)]
    server: ServerArgs,
    #[arg(long, default_value = "coordinator")]
    rater: AgentId,
    #[arg(long)]
    ratee: AgentId,
    #[arg(long, value_enum)]
    expectation: ExpectationArg,
}

#[derive(Debug, Args)]
struct WatchArgs {
    #[command(flatten)]
    server: ServerArgs,
    #[arg(long, default_value_t = 0)]
    since: u64,
    /// Print whole frames as JSON lines.
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Verify(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    Scenario::from_path(path).map_err(|e| Failure::Usage(anyhow::Error::new(e)))
}

fn summary(s: &Snapshot) -> String {
    let gates: Vec<String> = s.gates.iter().map(|g| format!("{}={}", g.id, g.label())).collect();
    format!("tick {} system_trust {:.4} gates [{}]", s.tick, s.system_trust, gates.join(", "))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Runtime)
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&a.scenario)?;
    let sim = run(scenario, a.seed, a.ticks).context("simulation failed")?;
    let out = &a.out.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join(EVENT_LOG), &to_jsonl(sim.log()))?;
    let traj = sim.trajectory();
    export_metrics(&traj, Format::Json, out).context("export")?;
    export_metrics(&traj, Format::Csv, out).context("export")?;
    let last = sim.latest();
    println!("seed {} ticks {} records {}", sim.seed(), last.tick, sim.log().len());
    println!("final system trust {:.4}", last.system_trust);
    for g in &last.gates {
        match g.passed_at {
            Some(t) => println!("gate {}: {} (passed at tick {t})", g.id, g.label()),
            None => println!("gate {}: {}", g.id, g.label()),
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&a.scenario)?;
    let text = std::fs::read_to_string(&a.log)
        .with_context(|| format!("reading {}", a.log.display()))
        .map_err(Failure::Usage)?;
    let log = read_jsonl(text.as_bytes()).map_err(|e| Failure::Verify(e.to_string()))?;
    let traj = replay(&log, scenario, a.seed).map_err(|e| Failure::Verify(e.to_string()))?;
    if let Some(path) = &a.trajectory {
        let saved = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Usage)?;
        if saved != traj.to_json() {
            return Err(Failure::Verify(format!("{} differs from the replayed trajectory", path.display())));
        }
    }
    let ticks = traj.snapshots.last().map_or(0, |s| s.tick);
    println!("replay ok: {} records, {ticks} ticks", log.len());
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&a.trajectory)
        .with_context(|| format!("reading {}", a.trajectory.display()))
        .map_err(Failure::Usage)?;
    let traj = Trajectory::from_json(&text)
        .with_context(|| format!("parsing {}", a.trajectory.display()))
        .map_err(Failure::Usage)?;
    let out = &a.out.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let format = match a.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let path = export_metrics(&traj, format, out).context("export")?;
    println!("wrote {}", path.display());
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    Ok(tokio::runtime::Runtime::new().context("starting runtime")?)
}

fn cmd_serve(a: ServeArgs) -> Result<(), Failure> {
    let scenario = load_scenario(&a.scenario)?;
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let config = Config {
        scenario,
        seed: a.seed,
        tick: Duration::from_millis(a.tick_ms),
        start_paused: a.paused,
        ticks: a.ticks,
        out: a.out.out,
    };
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .with_context(|| format!("binding {}:{}", a.host, a.port))?;
        let gw = Gateway::start(config, listener).await.context("starting gateway")?;
        println!("serving on {}", gw.url());
        if a.exit_when_done {
            tokio::select! {
                _ = gw.ended() => {}
                _ = tokio::signal::ctrl_c() => {}
            }
        } else {
            tokio::signal::ctrl_c().await.context("waiting for Ctrl-C")?;
        }
        gw.shutdown().await.context("shutting down")?;
        Ok::<_, Failure>(())
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    println!("{}", serde_json::to_string_pretty(value).context("encoding")?);
    Ok(())
}

fn cmd_client(cmd: Cmd) -> Result<(), Failure> {
    runtime()?.block_on(async move {
        match cmd {
            Cmd::Command(a) => {
                let mut msg = CommandMessage::new(a.kind.into(), a.issuer).params(CommandParams {
                    to: a.to,
                    tag: a.tag,
                    teammate: a.teammate,
                });
                msg.target_agent = a.agent;
                let ack = Client::new(a.server.server).command(&msg).await.context("sending command")?;
                print_json(&ack)?;
                if !ack.is_accepted() {
                    return Err(Failure::Runtime(anyhow::anyhow!(
                        "rejected: {}",
                        ack.reason.unwrap_or_default()
                    )));
                }
            }
            Cmd::Rate(a) => {
                let expectation = match a.expectation {
                    ExpectationArg::SelfishGoal => Expectation::SelfishGoal,
                    ExpectationArg::TeamGoal => Expectation::TeamGoal,
                    ExpectationArg::Unsure => Expectation::Unsure,
                };
                let msg = RatingMessage::new(a.rater, a.ratee, expectation);
                let ack = Client::new(a.server.server).rate(&msg).await.context("sending rating")?;
                print_json(&ack)?;
                if !ack.is_accepted() {
                    return Err(Failure::Runtime(anyhow::anyhow!(
                        "rejected: {}",
                        ack.reason.unwrap_or_default()
                    )));
                }
            }
            Cmd::Watch(a) => {
                let client = Client::new(a.server.server);
                let mut frames = client.stream(a.since).await.context("subscribing")?;
                while let Some(frame) = frames.next().await {
                    let frame: TelemetryFrame = frame.context("reading stream")?;
                    if a.json {
                        println!("{}", serde_json::to_string(&frame).context("encoding")?);
                    } else {
                        println!("{}", summary(&frame.snapshot));
                    }
                }
            }
            Cmd::State(a) => print_json(&Client::new(a.server).state().await.context("fetching state")?)?,
            Cmd::Trust(a) => print_json(&Client::new(a.server).trust().await.context("fetching trust")?)?,
            _ => unreachable!("local subcommands are handled in main"),
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Replay(a) => cmd_replay(a),
        Cmd::Export(a) => cmd_export(a),
        Cmd::Serve(a) => cmd_serve(a),
        other => cmd_client(other),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(why)) => {
            eprintln!("verification failed: {why}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
