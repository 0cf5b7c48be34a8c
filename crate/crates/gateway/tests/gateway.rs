use std::path::{Path, PathBuf};
use std::time::Duration;

use futures::StreamExt;
use tempfile::TempDir;
use tokio::net::TcpListener;
use tokio::time::timeout;
use trust_ladder_client::api::{
    CommandKind, CommandMessage, CommandParams, RatingMessage, TelemetryFrame,
};
use trust_ladder_client::{Client, ClientError};
use trust_ladder_core::log::{read_jsonl, to_jsonl, ActionSource, Expectation, LogRecord};
use trust_ladder_core::sim::Trajectory;
use trust_ladder_core::world::ActionKind;
use trust_ladder_core::{run_with_inputs, Cell, Scenario};
use trust_ladder_gateway::{read_command_log, Config, Gateway, COMMAND_LOG, EVENT_LOG};

const LIMIT: Duration = Duration::from_secs(20);

fn fixture() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/basic.json");
    Scenario::from_path(&path).unwrap()
}

async fn start(ticks: u64, tick_ms: u64, paused: bool) -> (Gateway, Client, TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Config::new(fixture(), dir.path());
    config.ticks = Some(ticks);
    config.tick = Duration::from_millis(tick_ms);
    config.start_paused = paused;
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let gw = Gateway::start(config, listener).await.unwrap();
    let client = Client::new(gw.url());
    (gw, client, dir)
}

async fn collect(
    stream: impl futures::Stream<Item = Result<TelemetryFrame, ClientError>> + Unpin,
) -> Vec<TelemetryFrame> {
    timeout(LIMIT, stream.map(Result::unwrap).collect::<Vec<_>>()).await.expect("stream finished")
}

fn coordinator(kind: CommandKind) -> CommandMessage {
    CommandMessage::new(kind, "coordinator")
}

fn move_to(agent: &str, x: u32, y: u32) -> CommandMessage {
    coordinator(CommandKind::Move).target(agent).params(CommandParams {
        to: Some(Cell::new(x, y)),
        ..Default::default()
    })
}

fn events(dir: &Path) -> Vec<LogRecord> {
    let text = std::fs::read_to_string(dir.join(EVENT_LOG)).unwrap();
    read_jsonl(text.as_bytes()).unwrap()
}

#[tokio::test]
async fn ten_tick_run_streams_eleven_frames() {
    let (gw, client, _dir) = start(10, 5, false).await;
    let frames = collect(client.stream(0).await.unwrap()).await;
    let ticks: Vec<u64> = frames.iter().map(|f| f.snapshot.tick).collect();
    assert_eq!(ticks, (0..=10).collect::<Vec<_>>());
    assert!(frames.iter().all(|f| f.v == 1));
    gw.shutdown().await.unwrap();
}

#[tokio::test]
async fn fresh_mission_starts_every_edge_on_the_middle_rung() {
    let (gw, client, _dir) = start(5, 5, true).await;
    let trust = client.trust().await.unwrap();
    assert_eq!(trust.tick, 0);
    assert_eq!(trust.edges.len(), 12);
    assert!(trust.edges.iter().all(|e| e.rung == 2));
    let state = client.state().await.unwrap();
    assert!(state.paused && !state.ended);
    assert_eq!(state.seed, 7);
    assert_eq!(state.final_tick, Some(5));
    let scenario = client.scenario().await.unwrap();
    assert_eq!(&scenario.scenario, fixture().spec());
    gw.shutdown().await.unwrap();
}

#[tokio::test]
async fn concurrent_subscribers_see_identical_frames() {
    let (gw, client, _dir) = start(15, 5, true).await;
    let a = client.stream(0).await.unwrap();
    let b = client.stream(0).await.unwrap();
    client.command(&coordinator(CommandKind::Resume)).await.unwrap();
    let (a, b) = tokio::join!(collect(a), collect(b));
    assert_eq!(a.len(), 16);
    assert_eq!(a, b);
    gw.shutdown().await.unwrap();
}

#[tokio::test]
async fn reconnect_continues_exactly_once() {
    let (gw, client, _dir) = start(20, 10, false).await;
    let mut first = client.stream(0).await.unwrap();
    let mut seen = Vec::new();
    for _ in 0..5 {
        seen.push(timeout(LIMIT, first.next()).await.unwrap().unwrap().unwrap());
    }
    drop(first);
    let rest = collect(client.resume(seen.last().unwrap().snapshot.tick).await.unwrap()).await;
    seen.extend(rest);
    let ticks: Vec<u64> = seen.iter().map(|f| f.snapshot.tick).collect();
    assert_eq!(ticks, (0..=20).collect::<Vec<_>>());
    let again = collect(client.stream(4).await.unwrap()).await;
    assert_eq!(again[..], seen[4..]);
    gw.shutdown().await.unwrap();
}

#[tokio::test]
async fn since_past_the_head_waits_for_live_frames() {
    let (gw, client, _dir) = start(3, 5, true).await;
    let s = client.stream(99).await.unwrap();
    client.command(&coordinator(CommandKind::Resume)).await.unwrap();
    let ticks: Vec<u64> = collect(s).await.iter().map(|f| f.snapshot.tick).collect();
    assert_eq!(ticks, vec![1, 2, 3]);
    gw.shutdown().await.unwrap();
}

#[tokio::test]
async fn command_during_pause_applies_at_resume_tick() {
    let (gw, client, dir) = start(3, 5, true).await;
    let ack = client.command(&move_to("robot-1", 1, 2)).await.unwrap();
    assert!(ack.is_accepted());
    assert_eq!(ack.seq, Some(1));
    tokio::time::sleep(Duration::from_millis(40)).await;
    assert_eq!(client.state().await.unwrap().frame.tick, 0);
    let ack = client.command(&coordinator(CommandKind::Resume)).await.unwrap();
    assert_eq!(ack.seq, Some(2));
    timeout(LIMIT, gw.ended()).await.unwrap();
    let log = events(dir.path());
    let applied: Vec<_> = log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Event(e) if e.source == ActionSource::Command => Some(e.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(applied.len(), 1);
    assert_eq!(applied[0].time, 1);
    assert_eq!(applied[0].action, ActionKind::MoveTo);
    assert_eq!(applied[0].object.as_deref(), Some("1,2"));
    gw.shutdown().await.unwrap();
}

#[tokio::test]
async fn invalid_commands_are_rejected_with_reasons() {
    let (gw, client, dir) = start(2, 5, true).await;
    let ack = client.command(&move_to("robot-9", 1, 2)).await.unwrap();
    assert_eq!(ack.reason.as_deref(), Some("unknown-agent"));
    let ack = client
        .command(&CommandMessage::new(CommandKind::Idle, "human-1").target("robot-1"))
        .await
        .unwrap();
    assert_eq!(ack.reason.as_deref(), Some("unauthorized"));
    let ack = client.command(&CommandMessage::new(CommandKind::Pause, "robot-1")).await.unwrap();
    assert_eq!(ack.reason.as_deref(), Some("unauthorized"));
    let ack = client.command(&coordinator(CommandKind::Scan).target("robot-1")).await.unwrap();
    assert_eq!(ack.reason.as_deref(), Some("invalid-params"));
    let ack = client.command(&move_to("robot-1", 40, 2)).await.unwrap();
    assert_eq!(ack.reason.as_deref(), Some("invalid-params"));

    let (status, body) = client
        .post_raw("/api/command", r#"{"v":1,"kind":"idle","issuer":"coordinator","target_agent":"robot-1","speed":3}"#.into())
        .await
        .unwrap();
    assert_eq!(status, 400);
    assert_eq!(body, r#"{"v":1,"status":"rejected","reason":"malformed"}"#);
    let (status, body) = client.post_raw("/api/command", "{".into()).await.unwrap();
    assert_eq!((status, body.contains("malformed")), (400, true));
    let (status, _) = client
        .post_raw("/api/command", r#"{"v":2,"kind":"pause","issuer":"coordinator"}"#.into())
        .await
        .unwrap();
    assert_eq!(status, 422);

    assert!(client.command(&move_to("robot-1", 1, 2)).await.unwrap().is_accepted());
    let ack = client.command(&move_to("robot-1", 2, 1)).await.unwrap();
    assert_eq!(ack.reason.as_deref(), Some("busy"));
    // Only the one accepted command reached the log.
    assert_eq!(read_command_log(&dir.path().join(COMMAND_LOG)).unwrap().len(), 1);

    client.command(&coordinator(CommandKind::Resume)).await.unwrap();
    timeout(LIMIT, gw.ended()).await.unwrap();
    let ack = client.command(&move_to("robot-1", 1, 2)).await.unwrap();
    assert_eq!(ack.reason.as_deref(), Some("mission-ended"));
    gw.shutdown().await.unwrap();
}

#[tokio::test]
async fn ratings_override_defaults_and_the_command_log_replays_the_run() {
    let (gw, client, dir) = start(22, 40, true).await;
    let mut s = client.stream(0).await.unwrap();
    client.command(&coordinator(CommandKind::Resume)).await.unwrap();
    let answer = RatingMessage::new("coordinator", "robot-1", Expectation::SelfishGoal);
    let early = client.rate(&answer).await.unwrap();
    assert_eq!(early.reason.as_deref(), Some("no-open-prompt"));
    loop {
        let f = timeout(LIMIT, s.next()).await.unwrap().unwrap().unwrap();
        if f.snapshot.tick == 10 {
            break;
        }
    }
    client.command(&coordinator(CommandKind::Pause)).await.unwrap();
    let state = client.state().await.unwrap();
    assert!(state.frame.prompts.iter().any(|p| p.rater.as_str() == "coordinator" && p.ratee.as_str() == "robot-1"));
    let ack = client.rate(&answer).await.unwrap();
    assert!(ack.is_accepted(), "{ack:?}");
    let dup = client.rate(&answer).await.unwrap();
    assert_eq!(dup.reason.as_deref(), Some("already-rated"));
    // Mid-mission steering and an override, so the replay covers them too.
    let tick_now = state.frame.tick;
    assert!(client.command(&move_to("robot-2", 10, 9)).await.unwrap().is_accepted());
    assert!(client.command(&coordinator(CommandKind::OverrideGate)).await.unwrap().is_accepted());
    client.command(&coordinator(CommandKind::Resume)).await.unwrap();

    let next = loop {
        let f = timeout(LIMIT, s.next()).await.unwrap().unwrap().unwrap();
        if f.snapshot.tick == tick_now + 1 {
            break f;
        }
    };
    assert!(next.snapshot.ratings.iter().any(|r| r.rater.as_str() == "coordinator"
        && r.ratee.as_str() == "robot-1"
        && r.source == ActionSource::Command));
    assert!(!next.snapshot.prompts.iter().any(|p| p.ratee.as_str() == "robot-1"));
    let gate = next.snapshot.gate("enter-hazard-zone").unwrap();
    assert!(gate.overridden_at.is_some() || gate.passed_at.is_some());
    timeout(LIMIT, gw.ended()).await.unwrap();
    gw.shutdown().await.unwrap();

    let log = events(dir.path());
    let mine: Vec<_> = log
        .iter()
        .filter_map(|r| match r {
            LogRecord::Rating(x) if x.rater.as_str() == "coordinator" && x.ratee.as_str() == "robot-1" => Some(x.clone()),
            _ => None,
        })
        .collect();
    // The tick-20 prompt is still open when the mission ends.
    assert_eq!(mine.len(), 1, "{mine:?}");
    assert_eq!((mine[0].source, mine[0].expectation), (ActionSource::Command, Expectation::SelfishGoal));
    let defaults_at_20 = log
        .iter()
        .filter(|r| matches!(r, LogRecord::Rating(x) if x.tick == 20 && x.source == ActionSource::Default))
        .count();
    assert_eq!(defaults_at_20, 2);

    let entries = read_command_log(&dir.path().join(COMMAND_LOG)).unwrap();
    let inputs = trust_ladder_core::api::inputs_by_tick(&entries);
    let rerun = run_with_inputs(fixture(), None, 22, &inputs).unwrap();
    assert_eq!(to_jsonl(rerun.log()), std::fs::read_to_string(dir.path().join(EVENT_LOG)).unwrap());
    let saved = Trajectory::from_json(&std::fs::read_to_string(dir.path().join("trajectory.json")).unwrap()).unwrap();
    assert_eq!(saved.to_json(), rerun.trajectory().to_json());
    assert!(dir.path().join("metrics.csv").exists());
}
