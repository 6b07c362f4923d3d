//! Named scenario builders.
//!
//! Lab positions are calibrated against the default [`RadioModel`]: each one
//! is a static placement plus a transmit-power offset chosen so that the
//! noise-free fingerprint lands on the measured mean for that spot.

use crate::model::{default_params, AlgorithmParams, T3Mode};
use crate::ransim::{Arrival, Behavior, RadioModel, ScenarioConfig, UeProfile, Waypoint};
use crate::ransim::config::{GnbConfig, MitigationConfig, ProcedureTiming, SCHEMA_VERSION};

/// Attack rate used throughout the evaluation, MSG3 per second.
pub const ATTACK_RATE_HZ: f64 = 45.7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabPosition {
    pub label: &'static str,
    pub x: f64,
    pub y: f64,
    pub tx_power_offset_db: f64,
    /// Measured spread at this spot.
    pub rssi_sigma_db: f64,
    /// Measured means the placement is calibrated to.
    pub ta_mean: f64,
    pub rssi_mean: f64,
}

pub const MUE_P0: LabPosition = LabPosition {
    label: "MUE-P0",
    x: 10.0,
    y: 0.0,
    tx_power_offset_db: 9.0,
    rssi_sigma_db: 0.0,
    ta_mean: 32.0,
    rssi_mean: -41.0,
};

/// Second attacker, close to the gNB.
pub const MUE_P9: LabPosition = LabPosition {
    label: "MUE-P9",
    x: 2.0,
    y: 0.0,
    tx_power_offset_db: 3.02,
    rssi_sigma_db: 0.0,
    ta_mean: 30.0,
    rssi_mean: -33.0,
};

pub const VUE_POSITIONS: [LabPosition; 8] = [
    LabPosition { label: "VUE-P1", x: 2.598, y: 1.5, tx_power_offset_db: -10.16, rssi_sigma_db: 3.2, ta_mean: 31.1, rssi_mean: -49.7 },
    LabPosition { label: "VUE-P2", x: 3.25, y: 5.629, tx_power_offset_db: -10.14, rssi_sigma_db: 4.4, ta_mean: 31.0, rssi_mean: -56.4 },
    LabPosition { label: "VUE-P3", x: 0.0, y: 5.0, tx_power_offset_db: -8.62, rssi_sigma_db: 1.2, ta_mean: 31.0, rssi_mean: -52.6 },
    LabPosition { label: "VUE-P4", x: -2.0, y: 3.464, tx_power_offset_db: -11.56, rssi_sigma_db: 1.8, ta_mean: 30.9, rssi_mean: -53.6 },
    LabPosition { label: "VUE-P5", x: -6.062, y: 3.5, tx_power_offset_db: -7.9, rssi_sigma_db: 1.0, ta_mean: 30.9, rssi_mean: -54.8 },
    LabPosition { label: "VUE-P6", x: -3.289, y: -1.197, tx_power_offset_db: -5.82, rssi_sigma_db: 3.7, ta_mean: 31.0, rssi_mean: -46.7 },
    LabPosition { label: "VUE-P7", x: -2.052, y: -5.638, tx_power_offset_db: -9.44, rssi_sigma_db: 0.0, ta_mean: 31.2, rssi_mean: -55.0 },
    LabPosition { label: "VUE-P8", x: 2.25, y: -3.897, tx_power_offset_db: -4.44, rssi_sigma_db: 1.3, ta_mean: 31.1, rssi_mean: -47.5 },
];

pub fn vue_position(label: &str) -> Option<LabPosition> {
    VUE_POSITIONS.iter().copied().find(|p| p.label == label)
}

impl LabPosition {
    /// A static UE at this spot using the measured RSSI spread.
    pub fn ue(&self, id: u32, behavior: Behavior) -> UeProfile {
        UeProfile {
            id,
            label: Some(self.label.to_string()),
            track: vec![Waypoint { t_ms: 0, x: self.x, y: self.y }],
            tx_power_offset_db: self.tx_power_offset_db,
            rssi_sigma_db: Some(self.rssi_sigma_db),
            behavior,
        }
    }

    /// An attacker at this spot. Attackers use the radio model's default
    /// noise rather than the (near zero) spread measured for a static SDR.
    pub fn attacker(&self, id: u32, behavior: Behavior) -> UeProfile {
        UeProfile { rssi_sigma_db: None, ..self.ue(id, behavior) }
    }
}

pub fn storm(start_ms: u64, start_jitter_ms: u64, stop_ms: Option<u64>) -> Behavior {
    Behavior::Malicious {
        msg3_rate_hz: ATTACK_RATE_HZ,
        start_ms,
        start_jitter_ms,
        stop_ms,
        arrival: Arrival::Deterministic,
    }
}

/// Attaches every `period_ms` from `first_ms` up to `until_ms`, each jittered.
pub fn periodic_attach(first_ms: u64, period_ms: u64, until_ms: u64, jitter_ms: u64) -> Behavior {
    Behavior::Benign {
        attach_ms: (first_ms..until_ms).step_by(period_ms as usize).collect(),
        attach_jitter_ms: jitter_ms,
        msg5_delay_ms: [5, 20],
    }
}

fn base(name: &str, seed: u64, duration_ms: u64, params: AlgorithmParams) -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        seed,
        duration_ms,
        cell_id: 1,
        gnb: GnbConfig::default(),
        radio: RadioModel::default(),
        timing: ProcedureTiming::default(),
        params,
        mitigation: MitigationConfig::default(),
        ues: Vec::new(),
    }
}

pub const ATTACK_RUN_MS: u64 = 3000;
pub const ATTACK_START_MS: u64 = 200;
pub const ATTACK_JITTER_MS: u64 = 100;

/// One static attacker at MUE-P0 and a victim at `victim` reconnecting
/// every 500 ms; closed loop on.
pub fn attack_1mue_with(seed: u64, params: AlgorithmParams, victim: LabPosition) -> ScenarioConfig {
    let mut c = base("attack-1mue", seed, ATTACK_RUN_MS, params);
    c.ues.push(MUE_P0.attacker(1, storm(ATTACK_START_MS, ATTACK_JITTER_MS, None)));
    c.ues.push(victim.ue(2, periodic_attach(100, 500, ATTACK_RUN_MS, 50)));
    c
}

pub fn attack_1mue(seed: u64) -> ScenarioConfig {
    attack_1mue_with(seed, default_params(), VUE_POSITIONS[2])
}

/// Two static attackers; density threshold in dynamic mode so that two
/// clusters splitting the history can both be flagged.
pub fn attack_2mue(seed: u64) -> ScenarioConfig {
    let params = AlgorithmParams { t3_mode: T3Mode::Dynamic, ..default_params() };
    let mut c = attack_1mue_with(seed, params, VUE_POSITIONS[2]);
    c.name = "attack-2mue".into();
    c.ues.push(MUE_P9.attacker(3, storm(ATTACK_START_MS, ATTACK_JITTER_MS, None)));
    c
}

/// An attacker drifting slowly away from the gNB during a standard run:
/// about 2.3 dB of RSSI drift and one TA step, which the blocklist box
/// still covers.
pub fn attack_mobile_mue(seed: u64) -> ScenarioConfig {
    let mut c = attack_1mue(seed);
    c.name = "attack-mobile-mue".into();
    c.ues[0].label = Some("MUE-mobile".into());
    c.ues[0].track = vec![
        Waypoint { t_ms: 0, x: 10.0, y: 0.0 },
        Waypoint { t_ms: ATTACK_RUN_MS, x: 13.0, y: 0.0 },
    ];
    c
}

/// An attacker walking away from the gNB at 1.5 m/s for 10 s. Its RSSI
/// drifts about 8 dB, well past the blocklist box, so the xApp has to learn
/// new entries along the way.
pub fn attack_mobile_mue_long(seed: u64) -> ScenarioConfig {
    let duration = 10_000;
    let mut c = base("attack-mobile-mue-long", seed, duration, default_params());
    let mut mue = MUE_P0.attacker(1, storm(ATTACK_START_MS, ATTACK_JITTER_MS, None));
    mue.label = Some("MUE-mobile".into());
    mue.track = vec![
        Waypoint { t_ms: 0, x: 10.0, y: 0.0 },
        Waypoint { t_ms: duration, x: 25.0, y: 0.0 },
    ];
    c.ues.push(mue);
    c.ues.push(VUE_POSITIONS[2].ue(2, periodic_attach(100, 500, duration, 50)));
    c
}

/// Victim at one lab spot, two static attackers running.
pub fn victim_at_position(seed: u64, victim: LabPosition) -> ScenarioConfig {
    let params = AlgorithmParams { t3_mode: T3Mode::Dynamic, ..default_params() };
    let mut c = base(&format!("victim-{}", victim.label), seed, ATTACK_RUN_MS, params);
    c.ues.push(MUE_P0.attacker(1, storm(ATTACK_START_MS, ATTACK_JITTER_MS, None)));
    c.ues.push(MUE_P9.attacker(3, storm(ATTACK_START_MS, ATTACK_JITTER_MS, None)));
    // First attempt lands once mitigation is in place.
    c.ues.push(victim.ue(2, periodic_attach(1000, 500, ATTACK_RUN_MS, 100)));
    c
}

/// The victim alone, reconnecting every 500 ms.
pub fn benign_only(seed: u64) -> ScenarioConfig {
    let mut c = base("benign-only", seed, ATTACK_RUN_MS, default_params());
    c.ues.push(VUE_POSITIONS[2].ue(2, periodic_attach(100, 500, ATTACK_RUN_MS, 50)));
    c
}

pub const BURST_UES: usize = 10;
pub const BURST_WINDOW_START_MS: u64 = 500;

/// Ten benign UEs at the lab spots, each sending MSG1 at a uniformly drawn
/// time inside the same window.
pub fn benign_burst_with(seed: u64, params: AlgorithmParams) -> ScenarioConfig {
    let mut c = base("benign-burst", seed, 1500, params);
    let window = params.window_ms;
    let start = BURST_WINDOW_START_MS.div_ceil(window) * window;
    let jitter = window;
    for i in 0..BURST_UES {
        let pos = VUE_POSITIONS[i % VUE_POSITIONS.len()];
        let behavior = Behavior::Benign { attach_ms: vec![start], attach_jitter_ms: jitter, msg5_delay_ms: [5, 20] };
        c.ues.push(pos.ue(10 + i as u32, behavior));
    }
    c
}

pub fn benign_burst(seed: u64) -> ScenarioConfig {
    benign_burst_with(seed, default_params())
}

/// A single attacker with mitigation off, run long enough to exhaust a pool
/// of `max_ue` contexts.
pub fn depletion(seed: u64, max_ue: usize) -> ScenarioConfig {
    let period = 1000.0 / ATTACK_RATE_HZ;
    let duration = ATTACK_START_MS + ATTACK_JITTER_MS + (period * (max_ue as f64 + 4.0)) as u64 + 200;
    let mut c = base("depletion", seed, duration, default_params());
    c.gnb.max_ue = max_ue;
    c.mitigation.enabled = false;
    c.ues.push(MUE_P0.attacker(1, storm(ATTACK_START_MS, ATTACK_JITTER_MS, None)));
    c
}

pub const AGING_ATTACK_MS: u64 = 30_000;

/// A 30 s storm followed by enough quiet time for the entry to age out.
pub fn aging(seed: u64, delta_ms: u64) -> ScenarioConfig {
    let params = AlgorithmParams { delta_ms, tau_max_ms: 10_000, ..default_params() };
    let stop = ATTACK_START_MS + AGING_ATTACK_MS;
    let mut c = base("aging", seed, stop + params.tau_max_ms + 2000, params);
    c.ues.push(MUE_P0.attacker(1, storm(ATTACK_START_MS, 0, Some(stop))));
    c
}

pub const PRESET_NAMES: [&str; 8] = [
    "attack-1mue",
    "attack-2mue",
    "attack-mobile-mue",
    "attack-mobile-mue-long",
    "benign-only",
    "benign-burst",
    "depletion",
    "aging",
];

/// Single-run scenario presets selectable by name.
pub fn by_name(name: &str, seed: u64) -> Option<ScenarioConfig> {
    Some(match name {
        "attack-1mue" => attack_1mue(seed),
        "attack-2mue" => attack_2mue(seed),
        "attack-mobile-mue" => attack_mobile_mue(seed),
        "attack-mobile-mue-long" => attack_mobile_mue_long(seed),
        "benign-only" => benign_only(seed),
        "benign-burst" => benign_burst(seed),
        "depletion" => depletion(seed, 16),
        "aging" => aging(seed, 500),
        _ => return None,
    })
}
