//! Per-run classification against scenario ground truth.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::{SimTime, VerdictKind};
use crate::ransim::{EventTrace, ScenarioConfig, TraceEventKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    TP,
    FP,
    TN,
    FN,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("trace of '{0}' stops before the configured duration")]
    IncompleteTrace(String),
    #[error(transparent)]
    Config(#[from] crate::ransim::ConfigError),
    #[error("bad override: {0}")]
    Override(String),
    #[error("empty parameter grid")]
    EmptyGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub scenario: String,
    pub seed: u64,
    pub classification: Classification,
    pub attack_present: bool,
    /// First malicious MSG1.
    pub attack_start_ms: Option<u64>,
    /// First AttackDetected verdict, relative to attack start.
    pub detection_time_ms: Option<u64>,
    /// First rejection of an attacker, relative to that verdict.
    pub mitigation_time_ms: Option<u64>,
    /// First rejection of an attacker, relative to attack start.
    pub detect_mitigate_ms: Option<u64>,
    /// First failed context allocation, relative to attack start (or to the
    /// scenario start in a benign run).
    pub depletion_time_ms: Option<u64>,
    /// A benign attempt was rejected during a TP run.
    pub victim_blocked: bool,
    pub benign_rejections: u32,
    pub attack_windows: u32,
    pub high_load_windows: u32,
    /// Label of the only benign UE, when there is exactly one.
    pub victim_label: Option<String>,
    /// Whether that UE's first attempt completed.
    pub first_attempt_ok: Option<bool>,
}

pub fn classify_run(trace: &EventTrace, truth: &ScenarioConfig) -> Result<RunOutcome, HarnessError> {
    if !trace.is_complete() {
        return Err(HarnessError::IncompleteTrace(truth.name.clone()));
    }
    let malicious: BTreeSet<u32> = truth.ues.iter().filter(|u| u.is_malicious()).map(|u| u.id).collect();
    let attack_present = !malicious.is_empty();
    let benign: Vec<_> = truth.ues.iter().filter(|u| !u.is_malicious()).collect();
    let victim = match benign.as_slice() {
        [only] => Some(only.id),
        _ => None,
    };

    let mut attack_start: Option<SimTime> = None;
    let mut first_detection: Option<SimTime> = None;
    let mut first_attacker_reject: Option<SimTime> = None;
    let mut first_failure: Option<SimTime> = None;
    let mut rejected_attackers: BTreeSet<u32> = BTreeSet::new();
    let mut benign_rejections = 0u32;
    let mut attack_windows = 0u32;
    let mut high_load_windows = 0u32;
    let mut victim_first_attempt: Option<u64> = None;
    let mut completed: BTreeSet<u64> = BTreeSet::new();

    for (t, kind) in trace.iter_kind() {
        match kind {
            TraceEventKind::Msg1 { attempt, ue } => {
                if malicious.contains(ue) {
                    attack_start.get_or_insert(t);
                } else if Some(*ue) == victim {
                    victim_first_attempt.get_or_insert(*attempt);
                }
            }
            TraceEventKind::Verdict { kind, .. } => match kind {
                VerdictKind::AttackDetected => {
                    attack_windows += 1;
                    first_detection.get_or_insert(t);
                }
                VerdictKind::HighLoad => high_load_windows += 1,
                VerdictKind::NormalLoad => {}
            },
            TraceEventKind::Rejected { ue, .. } => {
                if malicious.contains(ue) {
                    rejected_attackers.insert(*ue);
                    first_attacker_reject.get_or_insert(t);
                } else {
                    benign_rejections += 1;
                }
            }
            TraceEventKind::AllocationFailed { .. } => {
                first_failure.get_or_insert(t);
            }
            TraceEventKind::Msg5 { attempt, .. } => {
                completed.insert(*attempt);
            }
            _ => {}
        }
    }

    let classification = if attack_present {
        if first_failure.is_none() && rejected_attackers == malicious {
            Classification::TP
        } else {
            Classification::FN
        }
    } else if first_detection.is_some() {
        Classification::FP
    } else {
        Classification::TN
    };

    let anchor = attack_start.unwrap_or(SimTime::ZERO);
    let detection = first_detection.filter(|&d| d >= anchor);
    Ok(RunOutcome {
        scenario: truth.name.clone(),
        seed: truth.seed,
        classification,
        attack_present,
        attack_start_ms: attack_start.map(SimTime::as_ms),
        detection_time_ms: attack_start.and(detection).map(|d| d - anchor),
        mitigation_time_ms: detection.zip(first_attacker_reject).map(|(d, r)| r - d),
        detect_mitigate_ms: attack_start.and(first_attacker_reject).map(|r| r - anchor),
        depletion_time_ms: first_failure.map(|f| f - anchor),
        victim_blocked: classification == Classification::TP && benign_rejections > 0,
        benign_rejections,
        attack_windows,
        high_load_windows,
        victim_label: victim.and_then(|id| truth.ues.iter().find(|u| u.id == id)).and_then(|u| u.label.clone()),
        first_attempt_ok: victim.map(|_| victim_first_attempt.is_some_and(|a| completed.contains(&a))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenarios;
    use crate::ransim::run_scenario;

    fn outcome(cfg: &ScenarioConfig) -> RunOutcome {
        classify_run(&run_scenario(cfg).unwrap(), cfg).unwrap()
    }

    #[test]
    fn mitigated_attack_is_tp() {
        let o = outcome(&scenarios::attack_1mue(7));
        assert_eq!(o.classification, Classification::TP);
        let (d, m, dm) = (o.detection_time_ms.unwrap(), o.mitigation_time_ms.unwrap(), o.detect_mitigate_ms.unwrap());
        assert_eq!(d + m, dm);
        assert!(dm < 300, "{dm}");
        assert!(o.depletion_time_ms.is_none());
        assert!(!o.victim_blocked);
        assert_eq!(o.victim_label.as_deref(), Some("VUE-P3"));
        assert_eq!(o.first_attempt_ok, Some(true));
    }

    #[test]
    fn unmitigated_attack_is_fn() {
        let mut cfg = scenarios::attack_1mue(7);
        cfg.mitigation.enabled = false;
        let o = outcome(&cfg);
        assert_eq!(o.classification, Classification::FN);
        let d = o.depletion_time_ms.unwrap();
        assert!((330..=380).contains(&d), "{d}");
        assert!(o.detection_time_ms.is_none());
    }

    #[test]
    fn benign_burst_is_tn() {
        let o = outcome(&scenarios::benign_burst(3));
        assert_eq!(o.classification, Classification::TN);
        assert!(!o.attack_present);
        assert_eq!(o.victim_label, None);
    }

    #[test]
    fn aggressive_thresholds_give_fp_on_burst() {
        let params = crate::model::AlgorithmParams { t1: 1, t2: 1.0, ..crate::model::default_params() };
        let o = outcome(&scenarios::benign_burst_with(4, params));
        assert_eq!(o.classification, Classification::FP);
    }

    #[test]
    fn incomplete_trace_is_an_error() {
        let cfg = scenarios::benign_only(1);
        let mut trace = run_scenario(&cfg).unwrap();
        trace.meta.complete = false;
        assert!(matches!(classify_run(&trace, &cfg), Err(HarnessError::IncompleteTrace(_))));
    }

    #[test]
    fn deterministic() {
        let cfg = scenarios::attack_2mue(4);
        let t = run_scenario(&cfg).unwrap();
        assert_eq!(classify_run(&t, &cfg).unwrap(), classify_run(&t, &cfg).unwrap());
    }
}
