//! HTTP/JSON gateway around one running mission.
//!
//! A single loop task owns the [`Simulation`]; handlers talk to it over a
//! channel and read frames from a shared history. Accepted commands are
//! appended to `commands.jsonl` before they are acknowledged.

use std::convert::Infallible;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;
use trust_ladder_core::api::{
    reason, Ack, CommandLogEntry, CommandMessage, Directive, RatingMessage, ScenarioView, StateView,
    TelemetryFrame, TrustView, VERSION,
};
use trust_ladder_core::log::to_jsonl;
use trust_ladder_core::metrics::{export_metrics, ExportError, Format};
use trust_ladder_core::scenario::ScenarioSpec;
use trust_ladder_core::sim::SimError;
use trust_ladder_core::world::AgentKind;
use trust_ladder_core::{AgentId, Scenario, Simulation, Snapshot};

pub const COMMAND_LOG: &str = "commands.jsonl";
pub const EVENT_LOG: &str = "events.jsonl";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("server: {0}")]
    Serve(std::io::Error),
    #[error("simulation loop stopped unexpectedly")]
    LoopGone,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GatewayError + '_ {
    move |source| GatewayError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub scenario: Scenario,
    pub seed: Option<u64>,
    pub tick: Duration,
    pub start_paused: bool,
    /// Stop after this many ticks; run until shutdown otherwise.
    pub ticks: Option<u64>,
    /// Receives commands.jsonl, events.jsonl, trajectory.json and metrics.csv.
    pub out: PathBuf,
}

impl Config {
    pub fn new(scenario: Scenario, out: impl Into<PathBuf>) -> Self {
        Self {
            scenario,
            seed: None,
            tick: Duration::from_millis(500),
            start_paused: false,
            ticks: None,
            out: out.into(),
        }
    }
}

struct Frame {
    snapshot: Arc<Snapshot>,
    json: Arc<str>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Progress {
    frames: usize,
    paused: bool,
    ended: bool,
}

struct Shared {
    seed: u64,
    final_tick: Option<u64>,
    spec: ScenarioSpec,
    frames: RwLock<Vec<Frame>>,
}

impl Shared {
    fn frame_json(&self, tick: usize) -> Option<Arc<str>> {
        self.frames.read().expect("frame lock").get(tick).map(|f| f.json.clone())
    }

    fn latest(&self) -> Arc<Snapshot> {
        self.frames.read().expect("frame lock").last().expect("initial frame").snapshot.clone()
    }
}

enum Request {
    Command(CommandMessage, oneshot::Sender<Ack>),
    Rating(RatingMessage, oneshot::Sender<Ack>),
    Shutdown(oneshot::Sender<Result<(), GatewayError>>),
}

#[derive(Clone)]
struct AppState {
    shared: Arc<Shared>,
    requests: mpsc::Sender<Request>,
    progress: watch::Receiver<Progress>,
}

fn encode(snapshot: &Snapshot) -> Frame {
    let frame = TelemetryFrame {
        v: VERSION,
        snapshot: snapshot.clone(),
    };
    Frame {
        snapshot: Arc::new(snapshot.clone()),
        json: serde_json::to_string(&frame).expect("frames serialize").into(),
    }
}

struct MissionLoop {
    sim: Simulation,
    paused: bool,
    ended: bool,
    final_tick: Option<u64>,
    next_seq: u64,
    out: PathBuf,
    commands: BufWriter<File>,
    events: BufWriter<File>,
    shared: Arc<Shared>,
    progress: watch::Sender<Progress>,
}

impl MissionLoop {
    fn publish(&self) {
        let frames = self.shared.frames.read().expect("frame lock").len();
        self.progress.send_replace(Progress {
            frames,
            paused: self.paused,
            ended: self.ended,
        });
    }

    fn is_coordinator(&self, id: &AgentId) -> bool {
        self.sim
            .scenario()
            .agent(id)
            .is_some_and(|a| a.kind == AgentKind::HumanCoordinator)
    }

    fn persist(&mut self, directive: Directive) -> Result<u64, GatewayError> {
        let entry = CommandLogEntry {
            seq: self.next_seq,
            tick: self.sim.tick() + 1,
            directive,
        };
        let path = self.out.join(COMMAND_LOG);
        let line = serde_json::to_string(&entry).expect("log entries serialize");
        writeln!(self.commands, "{line}").map_err(io_err(&path))?;
        self.commands.flush().map_err(io_err(&path))?;
        self.next_seq += 1;
        Ok(entry.seq)
    }

    fn accept(&mut self, directive: Directive) -> Ack {
        if self.ended {
            return Ack::rejected(reason::MISSION_ENDED);
        }
        let checked = match &directive {
            Directive::Input { input } => self.sim.check_input(input),
            Directive::Pause { issuer } | Directive::Resume { issuer } => {
                if self.sim.scenario().agent(issuer).is_none() {
                    Err(trust_ladder_core::sim::reason::UNKNOWN_ISSUER)
                } else if !self.is_coordinator(issuer) {
                    Err(trust_ladder_core::sim::reason::UNAUTHORIZED)
                } else {
                    Ok(())
                }
            }
        };
        if let Err(why) = checked {
            return Ack::rejected(why);
        }
        let seq = match self.persist(directive.clone()) {
            Ok(seq) => seq,
            Err(e) => {
                tracing::error!("command log: {e}");
                return Ack::rejected("log-unavailable");
            }
        };
        match directive {
            Directive::Input { input } => self.sim.enqueue(input),
            Directive::Pause { .. } => self.paused = true,
            Directive::Resume { .. } => self.paused = false,
        }
        self.publish();
        Ack::accepted(seq)
    }

    fn tick(&mut self) -> Result<(), GatewayError> {
        let records = self.sim.step()?;
        let path = self.out.join(EVENT_LOG);
        self.events.write_all(to_jsonl(&records).as_bytes()).map_err(io_err(&path))?;
        self.events.flush().map_err(io_err(&path))?;
        let frame = encode(self.sim.latest());
        self.shared.frames.write().expect("frame lock").push(frame);
        if self.final_tick.is_some_and(|t| self.sim.tick() >= t) {
            self.ended = true;
            self.finish()?;
            tracing::info!(tick = self.sim.tick(), "mission ended");
        }
        self.publish();
        Ok(())
    }

    fn finish(&mut self) -> Result<(), GatewayError> {
        let traj = self.sim.trajectory();
        export_metrics(&traj, Format::Json, &self.out)?;
        export_metrics(&traj, Format::Csv, &self.out)?;
        Ok(())
    }

    async fn run(mut self, mut requests: mpsc::Receiver<Request>, period: Duration) -> Result<(), GatewayError> {
        let mut ticker = tokio::time::interval(period);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        ticker.tick().await;
        loop {
            tokio::select! {
                req = requests.recv() => match req {
                    Some(Request::Command(msg, reply)) => {
                        let ack = match msg.directive() {
                            Ok(d) => self.accept(d),
                            Err(why) => Ack::rejected(why),
                        };
                        let _ = reply.send(ack);
                    }
                    Some(Request::Rating(msg, reply)) => {
                        let ack = match msg.input() {
                            Ok(input) => self.accept(Directive::Input { input }),
                            Err(why) => Ack::rejected(why),
                        };
                        let _ = reply.send(ack);
                    }
                    Some(Request::Shutdown(reply)) => {
                        let result = if self.ended { Ok(()) } else { self.finish() };
                        let _ = reply.send(result);
                        return Ok(());
                    }
                    None => return Ok(()),
                },
                _ = ticker.tick(), if !self.paused && !self.ended => {
                    if let Err(e) = self.tick() {
                        tracing::error!("tick failed: {e}");
                        self.ended = true;
                        self.publish();
                        return Err(e);
                    }
                }
            }
        }
    }
}

fn create(path: PathBuf) -> Result<BufWriter<File>, GatewayError> {
    File::create(&path).map(BufWriter::new).map_err(io_err(&path))
}

fn ack_response(ack: Ack) -> Response {
    let status = match ack.reason.as_deref() {
        None => StatusCode::OK,
        Some(reason::MALFORMED) => StatusCode::BAD_REQUEST,
        Some(reason::MISSION_ENDED) | Some(reason::SHUTTING_DOWN) => StatusCode::CONFLICT,
        Some(_) => StatusCode::UNPROCESSABLE_ENTITY,
    };
    (status, Json(ack)).into_response()
}

async fn ask(state: &AppState, make: impl FnOnce(oneshot::Sender<Ack>) -> Request) -> Ack {
    let (tx, rx) = oneshot::channel();
    if state.requests.send(make(tx)).await.is_err() {
        return Ack::rejected(reason::SHUTTING_DOWN);
    }
    rx.await.unwrap_or_else(|_| Ack::rejected(reason::SHUTTING_DOWN))
}

fn malformed(e: serde_json::Error) -> Response {
    tracing::debug!("malformed body: {e}");
    ack_response(Ack::rejected(reason::MALFORMED))
}

async fn post_command(State(state): State<AppState>, body: Bytes) -> Response {
    match serde_json::from_slice::<CommandMessage>(&body) {
        Ok(msg) => ack_response(ask(&state, |tx| Request::Command(msg, tx)).await),
        Err(e) => malformed(e),
    }
}

async fn post_rating(State(state): State<AppState>, body: Bytes) -> Response {
    match serde_json::from_slice::<RatingMessage>(&body) {
        Ok(msg) => ack_response(ask(&state, |tx| Request::Rating(msg, tx)).await),
        Err(e) => malformed(e),
    }
}

async fn get_state(State(state): State<AppState>) -> Json<StateView> {
    let p = *state.progress.borrow();
    Json(StateView {
        v: VERSION,
        seed: state.shared.seed,
        paused: p.paused,
        ended: p.ended,
        final_tick: state.shared.final_tick,
        frame: (*state.shared.latest()).clone(),
    })
}

async fn get_trust(State(state): State<AppState>) -> Json<TrustView> {
    Json(TrustView::of(&state.shared.latest()))
}

async fn get_scenario(State(state): State<AppState>) -> Json<ScenarioView> {
    Json(ScenarioView {
        v: VERSION,
        seed: state.shared.seed,
        scenario: state.shared.spec.clone(),
    })
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    #[serde(default)]
    since: u64,
}

/// Frames from `since` on, then live ones. History is the source of truth
/// and the watch channel only signals growth, so nothing is skipped or
/// repeated. A `since` past the newest frame starts at the next live one.
fn frames_from(state: AppState, since: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let mut progress = state.progress.clone();
    let available = progress.borrow_and_update().frames;
    let start = (since as usize).min(available);
    futures::stream::unfold((start, progress, state.shared), |(next, mut progress, shared)| async move {
        loop {
            if let Some(json) = shared.frame_json(next) {
                let event = Event::default().event("frame").id(next.to_string()).data(&*json);
                return Some((Ok(event), (next + 1, progress, shared)));
            }
            if progress.borrow().ended {
                return None;
            }
            progress.changed().await.ok()?;
        }
    })
}

async fn get_stream(
    State(state): State<AppState>,
    Query(q): Query<StreamQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    Sse::new(frames_from(state, q.since)).keep_alive(KeepAlive::default())
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/command", post(post_command))
        .route("/api/rating", post(post_rating))
        .route("/api/state", get(get_state))
        .route("/api/trust", get(get_trust))
        .route("/api/stream", get(get_stream))
        .route("/api/scenario", get(get_scenario))
        .with_state(state)
}

/// A running gateway. Dropping it leaves the tasks running; call
/// [`Gateway::shutdown`] to flush artifacts and stop.
pub struct Gateway {
    addr: SocketAddr,
    state: AppState,
    mission: JoinHandle<Result<(), GatewayError>>,
    server: JoinHandle<std::io::Result<()>>,
    stop: Option<oneshot::Sender<()>>,
}

impl Gateway {
    /// Starts the mission loop and serves on `listener`.
    pub async fn start(config: Config, listener: TcpListener) -> Result<Self, GatewayError> {
        std::fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
        let sim = Simulation::new(config.scenario.clone(), config.seed)?;
        let shared = Arc::new(Shared {
            seed: sim.seed(),
            final_tick: config.ticks,
            spec: config.scenario.spec().clone(),
            frames: RwLock::new(vec![encode(sim.latest())]),
        });
        let (progress_tx, progress_rx) = watch::channel(Progress {
            frames: 1,
            paused: config.start_paused,
            ended: false,
        });
        let mission = MissionLoop {
            sim,
            paused: config.start_paused,
            ended: false,
            final_tick: config.ticks,
            next_seq: 1,
            commands: create(config.out.join(COMMAND_LOG))?,
            events: create(config.out.join(EVENT_LOG))?,
            out: config.out.clone(),
            shared: shared.clone(),
            progress: progress_tx,
        };
        let (req_tx, req_rx) = mpsc::channel(64);
        let mission = tokio::spawn(mission.run(req_rx, config.tick));
        let state = AppState {
            shared,
            requests: req_tx,
            progress: progress_rx,
        };
        let addr = listener.local_addr().map_err(GatewayError::Serve)?;
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let app = router(state.clone());
        let server = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stop_rx.await;
                })
                .await
        });
        tracing::info!(%addr, "gateway listening");
        Ok(Self {
            addr,
            state,
            mission,
            server,
            stop: Some(stop_tx),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Resolves once the configured number of ticks has run.
    pub async fn ended(&self) {
        let mut p = self.state.progress.clone();
        let _ = p.wait_for(|p| p.ended).await;
    }

    /// Writes the trajectory and metrics, closes open streams and stops
    /// the server.
    pub async fn shutdown(mut self) -> Result<(), GatewayError> {
        let (tx, rx) = oneshot::channel();
        let flushed = if self.state.requests.send(Request::Shutdown(tx)).await.is_ok() {
            rx.await.map_err(|_| GatewayError::LoopGone)?
        } else {
            Ok(())
        };
        let looped = self.mission.await.map_err(|_| GatewayError::LoopGone)?;
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.server.await.map_err(|_| GatewayError::LoopGone)?.map_err(GatewayError::Serve)?;
        looped?;
        flushed
    }
}

/// Reads a command log written by the gateway.
pub fn read_command_log(path: &Path) -> Result<Vec<CommandLogEntry>, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| GatewayError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        })
        .collect()
}

