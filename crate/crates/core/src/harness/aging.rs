//! Timeout trajectory of the attacker's blocklist entry.

use serde::{Deserialize, Serialize};

use crate::model::SimTime;
use crate::ransim::{EventTrace, ScenarioConfig, TraceEventKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgingPoint {
    pub t_ms: u64,
    pub tau_ms: u64,
    pub match_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingCurve {
    pub delta_ms: u64,
    pub tau_max_ms: u64,
    pub entry_id: u64,
    /// One point per control that touched the entry.
    pub points: Vec<AgingPoint>,
    /// Last malicious MSG1.
    pub attack_stop_ms: Option<u64>,
    pub last_refresh_ms: u64,
    pub final_tau_ms: u64,
    pub saturated_at_ms: Option<u64>,
    pub removed_at_ms: Option<u64>,
}

impl AgingCurve {
    pub fn is_non_decreasing(&self) -> bool {
        self.points.windows(2).all(|p| p[0].tau_ms <= p[1].tau_ms)
    }
}

/// Follows the first entry inserted in the run.
pub fn aging_curve(trace: &EventTrace, cfg: &ScenarioConfig) -> Option<AgingCurve> {
    let malicious: Vec<u32> = cfg.ues.iter().filter(|u| u.is_malicious()).map(|u| u.id).collect();
    let mut entry_id = None;
    let mut points = Vec::new();
    let mut attack_stop: Option<SimTime> = None;
    let mut removed = None;
    for (t, kind) in trace.iter_kind() {
        match kind {
            TraceEventKind::Msg1 { ue, .. } if malicious.contains(ue) => attack_stop = Some(t),
            TraceEventKind::ControlApplied { inserted, reinforced, entries, .. } => {
                if entry_id.is_none() {
                    entry_id = inserted.first().copied();
                }
                let Some(id) = entry_id else { continue };
                if inserted.contains(&id) || reinforced.contains(&id) {
                    if let Some(e) = entries.iter().find(|e| e.id == id) {
                        points.push(AgingPoint { t_ms: t.as_ms(), tau_ms: e.timeout_ms, match_count: e.match_count });
                    }
                }
            }
            TraceEventKind::EntryExpired { entry } if Some(entry.id) == entry_id && removed.is_none() => {
                removed = Some(t.as_ms());
            }
            _ => {}
        }
    }
    let entry_id = entry_id?;
    let last = *points.last()?;
    let tau_max = cfg.params.tau_max_ms;
    Some(AgingCurve {
        delta_ms: cfg.params.delta_ms,
        tau_max_ms: tau_max,
        entry_id,
        saturated_at_ms: points.iter().find(|p| p.tau_ms >= tau_max).map(|p| p.t_ms),
        points,
        attack_stop_ms: attack_stop.map(SimTime::as_ms),
        last_refresh_ms: last.t_ms,
        final_tau_ms: last.tau_ms,
        removed_at_ms: removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenarios;
    use crate::ransim::run_scenario;

    #[test]
    fn largest_step_saturates_then_expires() {
        let cfg = scenarios::aging(1, 1000);
        let trace = run_scenario(&cfg).unwrap();
        let c = aging_curve(&trace, &cfg).unwrap();
        assert!(c.is_non_decreasing());
        let stop = c.attack_stop_ms.unwrap();
        assert!(c.saturated_at_ms.unwrap() < stop);
        assert_eq!(c.final_tau_ms, 10_000);
        assert_eq!(c.removed_at_ms, Some(c.last_refresh_ms + c.final_tau_ms));
        assert!(c.last_refresh_ms >= stop && c.last_refresh_ms - stop <= 200);
    }

    #[test]
    fn small_step_keeps_growing() {
        let cfg = scenarios::aging(1, 100);
        let trace = run_scenario(&cfg).unwrap();
        let c = aging_curve(&trace, &cfg).unwrap();
        assert!(c.saturated_at_ms.is_none());
        assert!(c.final_tau_ms > cfg.params.tau0_ms && c.final_tau_ms < 10_000);
        // Five detector refreshes per step: τ0 + ⌊refreshes/5⌋·Δ.
        let refreshes = c.points.len() as u64;
        assert_eq!(c.final_tau_ms, 500 + refreshes / 5 * 100);
    }

    #[test]
    fn no_attack_no_curve() {
        let cfg = scenarios::benign_only(1);
        assert!(aging_curve(&run_scenario(&cfg).unwrap(), &cfg).is_none());
    }
}
