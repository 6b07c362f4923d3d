//! Shared domain types: simulation time, fingerprints, window telemetry,
//! detector verdicts and the algorithm parameter set.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milliseconds since scenario start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_ms(ms: u64) -> Self {
        SimTime(ms)
    }

    pub fn as_ms(self) -> u64 {
        self.0
    }

    /// Milliseconds elapsed since `earlier`, saturating at zero.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, ms: u64) -> SimTime {
        SimTime(self.0 + ms)
    }
}

impl Sub for SimTime {
    type Output = u64;

    fn sub(self, rhs: SimTime) -> u64 {
        self.since(rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

pub const RSSI_MIN_DBM: f64 = -140.0;
pub const RSSI_MAX_DBM: f64 = 0.0;

/// Radio fingerprint of a single MSG3: timing advance and received power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    /// Timing advance in 3GPP TA samples.
    pub ta: u32,
    /// Received signal strength in dBm.
    pub rssi: f64,
}

impl Fingerprint {
    pub fn new(ta: u32, rssi: f64) -> Self {
        Fingerprint { ta, rssi }
    }

    pub fn is_plausible(&self) -> bool {
        self.rssi.is_finite() && (RSSI_MIN_DBM..=RSSI_MAX_DBM).contains(&self.rssi)
    }
}

/// Arithmetic mean of a cluster of fingerprints. TA is fractional here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub mu_ta: f64,
    pub mu_rssi: f64,
}

impl Centroid {
    pub fn new(mu_ta: f64, mu_rssi: f64) -> Self {
        Centroid { mu_ta, mu_rssi }
    }

    /// Mean of a non-empty set of fingerprints.
    pub fn mean_of<'a, I>(points: I) -> Option<Centroid>
    where
        I: IntoIterator<Item = &'a Fingerprint>,
    {
        let (mut n, mut ta, mut rssi) = (0usize, 0.0, 0.0);
        for p in points {
            n += 1;
            ta += f64::from(p.ta);
            rssi += p.rssi;
        }
        (n > 0).then(|| Centroid::new(ta / n as f64, rssi / n as f64))
    }

    /// Axis-aligned tolerance test used by the blocklist.
    pub fn within_box(&self, ta: f64, rssi: f64, params: &AlgorithmParams) -> bool {
        (ta - self.mu_ta).abs() <= params.eps_ta && (rssi - self.mu_rssi).abs() <= params.eps_rssi
    }
}

impl From<Fingerprint> for Centroid {
    fn from(f: Fingerprint) -> Self {
        Centroid::new(f64::from(f.ta), f.rssi)
    }
}

/// A fingerprint observed in a window, tagged with the MSG3 time and the
/// attempt it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedFingerprint {
    pub time: SimTime,
    pub fingerprint: Fingerprint,
    pub attempt_id: u64,
}

/// Per-window RRC telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowKpm {
    pub window_id: u64,
    pub window_start: SimTime,
    pub n3: u32,
    pub n4: u32,
    pub n5: u32,
    /// One entry per MSG3 in the window, in arrival order.
    pub fingerprints: Vec<ObservedFingerprint>,
}

impl WindowKpm {
    pub fn empty(window_id: u64, window_start: SimTime) -> Self {
        WindowKpm {
            window_id,
            window_start,
            n3: 0,
            n4: 0,
            n5: 0,
            fingerprints: Vec::new(),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.fingerprints.len() == self.n3 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    NormalLoad,
    HighLoad,
    AttackDetected,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VerdictKind::NormalLoad => "NormalLoad",
            VerdictKind::HighLoad => "HighLoad",
            VerdictKind::AttackDetected => "AttackDetected",
        };
        f.write_str(s)
    }
}

/// Which detector branch produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictReason {
    /// N3 did not exceed T1.
    BelowMsg3Threshold,
    /// Both completion ratios at or above T2.
    CompletionsHealthy,
    /// Exactly one of the two ratios fell below T2.
    MixedRatios,
    /// Both ratios low but no cluster passed the density threshold.
    NoDenseCluster,
    /// Both ratios low and at least one dense cluster found.
    DenseCluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub kind: VerdictKind,
    pub reason: VerdictReason,
    pub malicious_centroids: Vec<Centroid>,
    pub r1: f64,
    pub r2: f64,
}

/// How the cluster density threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum T3Mode {
    /// Use `t3` as given.
    #[default]
    Fixed,
    /// `max(0.3, 1 / (1 + n_clusters))`.
    Dynamic,
}

/// When a blocklist entry's counter is bumped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReinforceOn {
    /// On every malicious fingerprint set received from the detector.
    #[default]
    Detector,
    /// On every connection attempt the entry rejects.
    Attempt,
}

/// Denominator of the cluster relative density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityBase {
    /// Number of fingerprints currently held in the history.
    #[default]
    Fill,
    /// Configured history capacity, even when not yet full.
    Capacity,
}

/// Detection and mitigation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmParams {
    pub eps_rssi: f64,
    pub eps_ta: f64,
    pub min_pts: usize,
    pub t1: u32,
    pub t2: f64,
    pub t3: f64,
    pub t3_mode: T3Mode,
    pub window_ms: u64,
    pub history_size_m: usize,
    pub density_base: DensityBase,
    pub tau0_ms: u64,
    pub tau_max_ms: u64,
    pub delta_ms: u64,
    pub k_reinforce: u32,
    pub reinforce_on: ReinforceOn,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        default_params()
    }
}

pub fn default_params() -> AlgorithmParams {
    AlgorithmParams {
        eps_rssi: 4.0,
        eps_ta: 1.0,
        min_pts: 3,
        t1: 3,
        t2: 0.25,
        t3: 0.5,
        t3_mode: T3Mode::Fixed,
        window_ms: 100,
        history_size_m: 50,
        density_base: DensityBase::Fill,
        tau0_ms: 500,
        tau_max_ms: 10_000,
        delta_ms: 500,
        k_reinforce: 5,
        reinforce_on: ReinforceOn::Detector,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{field} must be strictly positive (got {value})")]
    NotPositive { field: &'static str, value: String },
    #[error("{field} must lie in (0, 1] (got {value})")]
    OutOfUnitInterval { field: &'static str, value: f64 },
    #[error("min_pts must be at least 2 (got {0})")]
    MinPtsTooSmall(usize),
    #[error("tau0_ms ({tau0}) exceeds tau_max_ms ({tau_max})")]
    TauOrder { tau0: u64, tau_max: u64 },
}

impl AlgorithmParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        fn positive_f(field: &'static str, v: f64) -> Result<(), ParamError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ParamError::NotPositive { field, value: v.to_string() })
            }
        }
        fn positive_u(field: &'static str, v: u64) -> Result<(), ParamError> {
            if v > 0 {
                Ok(())
            } else {
                Err(ParamError::NotPositive { field, value: v.to_string() })
            }
        }
        fn unit(field: &'static str, v: f64) -> Result<(), ParamError> {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(ParamError::OutOfUnitInterval { field, value: v })
            }
        }

        positive_f("eps_rssi", self.eps_rssi)?;
        positive_f("eps_ta", self.eps_ta)?;
        positive_u("min_pts", self.min_pts as u64)?;
        if self.min_pts < 2 {
            return Err(ParamError::MinPtsTooSmall(self.min_pts));
        }
        positive_u("t1", u64::from(self.t1))?;
        unit("t2", self.t2)?;
        unit("t3", self.t3)?;
        positive_u("window_ms", self.window_ms)?;
        positive_u("history_size_m", self.history_size_m as u64)?;
        positive_u("tau0_ms", self.tau0_ms)?;
        positive_u("tau_max_ms", self.tau_max_ms)?;
        positive_u("delta_ms", self.delta_ms)?;
        positive_u("k_reinforce", u64::from(self.k_reinforce))?;
        if self.tau0_ms > self.tau_max_ms {
            return Err(ParamError::TauOrder { tau0: self.tau0_ms, tau_max: self.tau_max_ms });
        }
        Ok(())
    }

    /// Density threshold in effect given the number of clusters found.
    pub fn density_threshold(&self, n_clusters: usize) -> f64 {
        match self.t3_mode {
            T3Mode::Fixed => self.t3,
            T3Mode::Dynamic => (1.0 / (1.0 + n_clusters as f64)).max(0.3),
        }
    }
}
