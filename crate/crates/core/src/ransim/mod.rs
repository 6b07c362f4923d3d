//! Discrete-event simulation of the RRC setup procedure under attack.
//!
//! UEs run the MSG1-MSG5 exchange against a gNB with a bounded pool of RRC
//! contexts. A context is allocated on MSG3 and held until MSG5 arrives, the
//! hold timer fires, or the blocklist rejects the attempt. Telemetry is cut
//! into fixed windows and handed to an optional control loop.

pub mod config;
mod engine;
pub mod gnb;
mod pacing;
pub mod radio;
pub mod trace;

pub use config::{Arrival, Behavior, ConfigError, ScenarioConfig, UeProfile, Waypoint};
pub use engine::{run_scenario, run_scenario_full, run_with, Pacer, SimOutput};
pub use pacing::WallClock;
pub use gnb::{ContextState, GnbError, GnbModel, RrcContext};
pub use radio::{sample_fingerprint, RadioModel};
pub use trace::{EntryState, EventTrace, TraceEvent, TraceEventKind, TraceMeta, WindowSummary};
