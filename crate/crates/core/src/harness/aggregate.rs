//! Summary statistics over a set of runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::outcome::{Classification, RunOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct Mean {
    sum: f64,
    n: u32,
}

impl Mean {
    fn push(&mut self, v: Option<u64>) {
        if let Some(v) = v {
            self.sum += v as f64;
            self.n += 1;
        }
    }

    fn merge(&mut self, other: Mean) {
        self.sum += other.sum;
        self.n += other.n;
    }

    fn value(self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / f64::from(self.n))
    }
}

/// Running totals; merging two of these and finishing equals aggregating the
/// concatenated outcomes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Accumulator {
    tp: u32,
    fp: u32,
    tn: u32,
    fn_: u32,
    tp_blocked: u32,
    detection: Mean,
    mitigation: Mean,
    detect_mitigate: Mean,
    depletion: Mean,
    success: BTreeMap<String, (u32, u32)>,
}

impl Accumulator {
    pub fn push(&mut self, o: &RunOutcome) {
        match o.classification {
            Classification::TP => {
                self.tp += 1;
                self.tp_blocked += u32::from(o.victim_blocked);
            }
            Classification::FP => self.fp += 1,
            Classification::TN => self.tn += 1,
            Classification::FN => self.fn_ += 1,
        }
        self.detection.push(o.detection_time_ms);
        self.mitigation.push(o.mitigation_time_ms);
        self.detect_mitigate.push(o.detect_mitigate_ms);
        self.depletion.push(o.depletion_time_ms);
        if let (Some(label), Some(ok)) = (&o.victim_label, o.first_attempt_ok) {
            let e = self.success.entry(label.clone()).or_default();
            e.0 += u32::from(ok);
            e.1 += 1;
        }
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
        self.tp_blocked += other.tp_blocked;
        self.detection.merge(other.detection);
        self.mitigation.merge(other.mitigation);
        self.detect_mitigate.merge(other.detect_mitigate);
        self.depletion.merge(other.depletion);
        for (k, (ok, n)) in &other.success {
            let e = self.success.entry(k.clone()).or_default();
            e.0 += ok;
            e.1 += n;
        }
    }

    pub fn finish(&self) -> SummaryTable {
        let ratio = |num: u32, den: u32| (den > 0).then(|| f64::from(num) / f64::from(den));
        let runs = self.tp + self.fp + self.tn + self.fn_;
        let attacks = self.tp + self.fn_;
        let benign = self.tn + self.fp;
        SummaryTable {
            runs,
            tp: self.tp,
            fp: self.fp,
            tn: self.tn,
            fn_: self.fn_,
            accuracy: ratio(self.tp + self.tn, runs).unwrap_or(0.0),
            tp_rate: ratio(self.tp, attacks),
            fn_rate: ratio(self.fn_, attacks),
            fp_rate: ratio(self.fp, benign),
            tn_rate: ratio(self.tn, benign),
            cbr: ratio(self.tp_blocked, self.tp),
            mean_detection_ms: self.detection.value(),
            mean_mitigation_ms: self.mitigation.value(),
            mean_detect_mitigate_ms: self.detect_mitigate.value(),
            mean_depletion_ms: self.depletion.value(),
            success_rate: self.success.iter().map(|(k, &(ok, n))| (k.clone(), f64::from(ok) / f64::from(n))).collect(),
        }
    }
}

/// Rates are over the runs they apply to: TP/FN over attack runs, FP/TN over
/// benign runs, CBR over TP runs. A rate with no applicable runs is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub runs: u32,
    pub tp: u32,
    pub fp: u32,
    pub tn: u32,
    #[serde(rename = "fn")]
    pub fn_: u32,
    /// (TP + TN) / runs; 0 for an empty table.
    pub accuracy: f64,
    pub tp_rate: Option<f64>,
    pub fn_rate: Option<f64>,
    pub fp_rate: Option<f64>,
    pub tn_rate: Option<f64>,
    pub cbr: Option<f64>,
    pub mean_detection_ms: Option<f64>,
    pub mean_mitigation_ms: Option<f64>,
    pub mean_detect_mitigate_ms: Option<f64>,
    pub mean_depletion_ms: Option<f64>,
    /// First-attempt success per victim position.
    pub success_rate: BTreeMap<String, f64>,
}

pub fn accumulate(outcomes: &[RunOutcome]) -> Accumulator {
    let mut acc = Accumulator::default();
    for o in outcomes {
        acc.push(o);
    }
    acc
}

pub fn aggregate(outcomes: &[RunOutcome]) -> SummaryTable {
    accumulate(outcomes).finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(c: Classification, blocked: bool, dm: Option<u64>) -> RunOutcome {
        RunOutcome {
            scenario: "x".into(),
            seed: 0,
            classification: c,
            attack_present: matches!(c, Classification::TP | Classification::FN),
            attack_start_ms: None,
            detection_time_ms: dm.map(|v| v / 2),
            mitigation_time_ms: dm.map(|v| v - v / 2),
            detect_mitigate_ms: dm,
            depletion_time_ms: (c == Classification::FN).then_some(350),
            victim_blocked: blocked,
            benign_rejections: u32::from(blocked),
            attack_windows: 0,
            high_load_windows: 0,
            victim_label: None,
            first_attempt_ok: None,
        }
    }

    #[test]
    fn two_attacker_rows() {
        let mut v: Vec<RunOutcome> = (0..11).map(|_| run(Classification::TP, false, Some(100))).collect();
        v.push(run(Classification::FN, false, None));
        v.extend((0..12).map(|_| run(Classification::TN, false, None)));
        let s = aggregate(&v);
        assert_eq!((s.tp, s.fn_, s.tn, s.fp, s.runs), (11, 1, 12, 0, 24));
        assert!((s.accuracy - 23.0 / 24.0).abs() < 1e-12);
        assert!((s.tp_rate.unwrap() - 11.0 / 12.0).abs() < 1e-12);
        assert_eq!(s.tn_rate, Some(1.0));
        assert_eq!(s.mean_depletion_ms, Some(350.0));
    }

    #[test]
    fn cbr_over_tp_runs() {
        let v = vec![run(Classification::TP, false, Some(90)); 4];
        assert_eq!(aggregate(&v).cbr, Some(0.0));
        let mut w = v.clone();
        w.push(run(Classification::TP, true, Some(120)));
        w.push(run(Classification::FN, false, None));
        let s = aggregate(&w);
        assert_eq!(s.cbr, Some(0.2));
        assert_eq!(s.mean_detect_mitigate_ms, Some(96.0));
        assert_eq!(s.fp_rate, None);
    }

    #[test]
    fn success_rate_per_label() {
        let mut v = Vec::new();
        for (label, ok) in [("P1", true), ("P1", false), ("P2", true)] {
            let mut o = run(Classification::TP, false, Some(100));
            o.victim_label = Some(label.into());
            o.first_attempt_ok = Some(ok);
            v.push(o);
        }
        let s = aggregate(&v);
        assert_eq!(s.success_rate["P1"], 0.5);
        assert_eq!(s.success_rate["P2"], 1.0);
    }

    fn arb_outcome() -> impl Strategy<Value = RunOutcome> {
        (0..4usize, any::<bool>(), prop::option::of(50u64..400)).prop_map(|(c, b, dm)| {
            let c = [Classification::TP, Classification::FP, Classification::TN, Classification::FN][c];
            run(c, b && c == Classification::TP, dm)
        })
    }

    proptest! {
        #[test]
        fn merge_matches_concatenation(
            a in prop::collection::vec(arb_outcome(), 0..30),
            b in prop::collection::vec(arb_outcome(), 0..30),
        ) {
            let mut merged = accumulate(&a);
            merged.merge(&accumulate(&b));
            let all: Vec<_> = a.iter().chain(&b).cloned().collect();
            let direct = aggregate(&all);
            let m = merged.finish();
            prop_assert_eq!(m.runs, direct.runs);
            prop_assert_eq!((m.tp, m.fp, m.tn, m.fn_), (direct.tp, direct.fp, direct.tn, direct.fn_));
            prop_assert_eq!(m.cbr, direct.cbr);
            let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
                (Some(x), Some(y)) => (x - y).abs() < 1e-9,
                (None, None) => true,
                _ => false,
            };
            prop_assert!(close(m.mean_detect_mitigate_ms, direct.mean_detect_mitigate_ms));
            prop_assert!((0.0..=1.0).contains(&m.accuracy));
            prop_assert_eq!(m.tp + m.fp + m.tn + m.fn_, all.len() as u32);
        }
    }
}
