//! Mission simulator for trust between human and robot teammates: belief
//! networks, trust estimates, a grid world, scripted policies and a
//! replayable tick loop.

pub mod api;
pub mod bbn;
pub mod ids;
pub mod log;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod sim;
pub mod teammate;
pub mod trust;
pub mod world;

pub use ids::{AgentId, Cell};
pub use scenario::Scenario;
pub use sim::{replay, run, run_with_inputs, Input, Simulation, Snapshot, Trajectory};
