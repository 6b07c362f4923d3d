//! Declarative scenario description, read from TOML.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::radio::RadioModel;
use crate::model::{AlgorithmParams, ParamError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("params: {0}")]
    Params(#[from] ParamError),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_ms: u64,
    #[serde(default = "default_cell")]
    pub cell_id: u32,
    #[serde(default)]
    pub gnb: GnbConfig,
    #[serde(default)]
    pub radio: RadioModel,
    #[serde(default)]
    pub timing: ProcedureTiming,
    #[serde(default)]
    pub params: AlgorithmParams,
    #[serde(default)]
    pub mitigation: MitigationConfig,
    #[serde(default)]
    pub ues: Vec<UeProfile>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn default_cell() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnbConfig {
    pub position: [f64; 2],
    /// RRC context pool size.
    pub max_ue: usize,
    /// How long a context waits for MSG5 before it is released.
    pub context_hold_ms: u64,
}

impl Default for GnbConfig {
    fn default() -> Self {
        GnbConfig { position: [0.0, 0.0], max_ue: 16, context_hold_ms: 2000 }
    }
}

/// Fixed per-hop delays of the random access and setup exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcedureTiming {
    pub msg1_to_msg2_ms: u64,
    pub msg2_to_msg3_ms: u64,
    pub msg3_to_msg4_ms: u64,
    /// UE-side guard timer started at MSG3.
    pub t300_ms: u64,
}

impl Default for ProcedureTiming {
    fn default() -> Self {
        ProcedureTiming { msg1_to_msg2_ms: 2, msg2_to_msg3_ms: 2, msg3_to_msg4_ms: 2, t300_ms: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitigationConfig {
    /// Run the detector/mitigator closed loop.
    pub enabled: bool,
    /// Delay between a window closing and its control taking effect.
    pub loop_delay_ms: u64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig { enabled: true, loop_delay_ms: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t_ms: u64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    /// Evenly spaced at `1 / rate`.
    #[default]
    Deterministic,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Behavior {
    /// Completes every procedure it starts.
    Benign {
        /// MSG1 times.
        attach_ms: Vec<u64>,
        /// Each attach is delayed by a uniform draw in `[0, attach_jitter_ms)`.
        #[serde(default)]
        attach_jitter_ms: u64,
        /// Uniform MSG4 -> MSG5 delay bounds, inclusive.
        #[serde(default = "default_msg5_delay")]
        msg5_delay_ms: [u64; 2],
    },
    /// Sends MSG3 at a fixed average rate and never answers MSG4.
    Malicious {
        msg3_rate_hz: f64,
        start_ms: u64,
        #[serde(default)]
        start_jitter_ms: u64,
        #[serde(default)]
        stop_ms: Option<u64>,
        #[serde(default)]
        arrival: Arrival,
    },
}

fn default_msg5_delay() -> [u64; 2] {
    [5, 20]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeProfile {
    pub id: u32,
    #[serde(default)]
    pub label: Option<String>,
    /// A single waypoint is a static UE.
    pub track: Vec<Waypoint>,
    #[serde(default)]
    pub tx_power_offset_db: f64,
    /// Overrides the radio model's RSSI noise for this UE.
    #[serde(default)]
    pub rssi_sigma_db: Option<f64>,
    pub behavior: Behavior,
}

impl UeProfile {
    pub fn is_malicious(&self) -> bool {
        matches!(self.behavior, Behavior::Malicious { .. })
    }

    pub fn static_at(id: u32, x: f64, y: f64, behavior: Behavior) -> Self {
        UeProfile {
            id,
            label: None,
            track: vec![Waypoint { t_ms: 0, x, y }],
            tx_power_offset_db: 0.0,
            rssi_sigma_db: None,
            behavior,
        }
    }

    /// Position at `t_ms`, linearly interpolated between waypoints and held
    /// constant outside the track.
    pub fn position_at(&self, t_ms: u64) -> (f64, f64) {
        let first = self.track[0];
        if t_ms <= first.t_ms {
            return (first.x, first.y);
        }
        for w in self.track.windows(2) {
            let (a, b) = (w[0], w[1]);
            if t_ms <= b.t_ms {
                let f = (t_ms - a.t_ms) as f64 / (b.t_ms - a.t_ms) as f64;
                return (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y));
            }
        }
        let last = self.track[self.track.len() - 1];
        (last.x, last.y)
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario configs always serialize")
    }

    pub fn has_attack(&self) -> bool {
        self.ues.iter().any(UeProfile::is_malicious)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        if self.duration_ms == 0 {
            return Err(invalid("duration_ms", "must be positive"));
        }
        self.params.validate()?;
        if self.gnb.max_ue == 0 {
            return Err(invalid("gnb.max_ue", "must be positive"));
        }
        if self.gnb.context_hold_ms == 0 {
            return Err(invalid("gnb.context_hold_ms", "must be positive"));
        }
        self.radio.validate().map_err(|m| invalid("radio", m))?;

        let mut ids = BTreeSet::new();
        for (i, ue) in self.ues.iter().enumerate() {
            let field = |f: &str| format!("ues[{i}].{f}");
            if !ids.insert(ue.id) {
                return Err(invalid(field("id"), format!("duplicate UE id {}", ue.id)));
            }
            if ue.track.is_empty() {
                return Err(invalid(field("track"), "needs at least one waypoint"));
            }
            if ue.track.windows(2).any(|w| w[1].t_ms <= w[0].t_ms) {
                return Err(invalid(field("track"), "waypoint times must be strictly increasing"));
            }
            if ue.track.iter().any(|w| !w.x.is_finite() || !w.y.is_finite()) {
                return Err(invalid(field("track"), "coordinates must be finite"));
            }
            if let Some(s) = ue.rssi_sigma_db {
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(invalid(field("rssi_sigma_db"), "must be finite and >= 0"));
                }
            }
            if !ue.tx_power_offset_db.is_finite() {
                return Err(invalid(field("tx_power_offset_db"), "must be finite"));
            }
            match &ue.behavior {
                Behavior::Benign { msg5_delay_ms, .. } => {
                    if msg5_delay_ms[0] > msg5_delay_ms[1] {
                        return Err(invalid(field("behavior.msg5_delay_ms"), "min exceeds max"));
                    }
                }
                Behavior::Malicious { msg3_rate_hz, start_ms, stop_ms, .. } => {
                    if !(msg3_rate_hz.is_finite() && *msg3_rate_hz > 0.0) {
                        return Err(invalid(field("behavior.msg3_rate_hz"), "must be positive"));
                    }
                    if matches!(stop_ms, Some(s) if s <= start_ms) {
                        return Err(invalid(field("behavior.stop_ms"), "must be after start_ms"));
                    }
                }
            }
        }
        Ok(())
    }
}
