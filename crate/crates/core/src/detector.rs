//! Per-window storm detection.
//!
//! A window with more than `t1` MSG3 whose completion ratios
//! `r1 = n5 / n3` and `r2 = n5 / n4` are both below `t2` triggers clustering
//! of the fingerprint history. Every cluster whose relative density exceeds
//! the density threshold is reported as malicious. When no cluster qualifies
//! the window is reported as high load instead, since there is nothing to
//! block.

use std::collections::VecDeque;

use thiserror::Error;

use crate::clustering::{dbscan, ClusterError, ClusterResult};
use crate::model::{
    AlgorithmParams, Centroid, DensityBase, DetectionVerdict, Fingerprint, SimTime, VerdictKind,
    VerdictReason, WindowKpm,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("window {window_id}: {fingerprints} fingerprints for n3 = {n3}")]
    InvalidKpm { window_id: u64, n3: u32, fingerprints: usize },
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

/// Bounded FIFO of the most recent fingerprints.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintHistory {
    capacity: usize,
    buffer: VecDeque<(SimTime, Fingerprint)>,
}

impl FingerprintHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        FingerprintHistory {
            capacity,
            buffer: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn push(&mut self, at: SimTime, fingerprint: Fingerprint) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back((at, fingerprint));
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &(SimTime, Fingerprint)> {
        self.buffer.iter()
    }

    pub fn points(&self) -> Vec<Fingerprint> {
        self.buffer.iter().map(|(_, f)| *f).collect()
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
    }
}

/// `num / den`, with an empty denominator read as a fully completed window.
pub fn completion_ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        1.0
    } else {
        f64::from(num) / f64::from(den)
    }
}

/// Stateful detector for one cell.
#[derive(Debug, Clone)]
pub struct Detector {
    params: AlgorithmParams,
    history: FingerprintHistory,
    last_clusters: Option<ClusterResult>,
}

impl Detector {
    pub fn new(params: AlgorithmParams) -> Self {
        Detector {
            history: FingerprintHistory::new(params.history_size_m),
            params,
            last_clusters: None,
        }
    }

    pub fn params(&self) -> &AlgorithmParams {
        &self.params
    }

    pub fn history(&self) -> &FingerprintHistory {
        &self.history
    }

    /// Clustering computed for the most recent window that entered the
    /// attack branch.
    pub fn last_clusters(&self) -> Option<&ClusterResult> {
        self.last_clusters.as_ref()
    }

    pub fn ingest_window(&mut self, kpm: &WindowKpm) -> Result<DetectionVerdict, DetectorError> {
        ingest_window(kpm, &mut self.history, &self.params).map(|(verdict, clusters)| {
            if clusters.is_some() {
                self.last_clusters = clusters;
            }
            verdict
        })
    }
}

/// Append the window's fingerprints to `history` and classify the window.
///
/// Also returns the clustering when the attack branch ran.
pub fn ingest_window(
    kpm: &WindowKpm,
    history: &mut FingerprintHistory,
    params: &AlgorithmParams,
) -> Result<(DetectionVerdict, Option<ClusterResult>), DetectorError> {
    if !kpm.is_well_formed() {
        return Err(DetectorError::InvalidKpm {
            window_id: kpm.window_id,
            n3: kpm.n3,
            fingerprints: kpm.fingerprints.len(),
        });
    }
    for obs in &kpm.fingerprints {
        history.push(obs.time, obs.fingerprint);
    }

    let r1 = completion_ratio(kpm.n5, kpm.n3);
    let r2 = completion_ratio(kpm.n5, kpm.n4);
    let verdict = |kind, reason, malicious_centroids| DetectionVerdict {
        kind,
        reason,
        malicious_centroids,
        r1,
        r2,
    };

    if kpm.n3 <= params.t1 {
        return Ok((verdict(VerdictKind::NormalLoad, VerdictReason::BelowMsg3Threshold, vec![]), None));
    }
    match (r1 < params.t2, r2 < params.t2) {
        (false, false) => Ok((
            verdict(VerdictKind::HighLoad, VerdictReason::CompletionsHealthy, vec![]),
            None,
        )),
        (true, false) | (false, true) => Ok((
            verdict(VerdictKind::HighLoad, VerdictReason::MixedRatios, vec![]),
            None,
        )),
        (true, true) => {
            // n3 > t1 > 0 and every MSG3 lands in the history, so it is non-empty.
            let points = history.points();
            let denominator = match params.density_base {
                DensityBase::Fill => points.len(),
                DensityBase::Capacity => history.capacity(),
            };
            let clusters = dbscan(&points, params, denominator)?;
            let threshold = params.density_threshold(clusters.clusters.len());
            let flagged: Vec<Centroid> = clusters
                .clusters
                .iter()
                .filter(|c| c.density_pk > threshold)
                .map(|c| c.centroid)
                .collect();
            let v = if flagged.is_empty() {
                verdict(VerdictKind::HighLoad, VerdictReason::NoDenseCluster, flagged)
            } else {
                verdict(VerdictKind::AttackDetected, VerdictReason::DenseCluster, flagged)
            };
            Ok((v, Some(clusters)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_params, ObservedFingerprint, T3Mode};
    use proptest::prelude::*;

    fn kpm(n3: u32, n4: u32, n5: u32, points: &[Fingerprint]) -> WindowKpm {
        assert_eq!(points.len(), n3 as usize);
        WindowKpm {
            window_id: 1,
            window_start: SimTime(100),
            n3,
            n4,
            n5,
            fingerprints: points
                .iter()
                .enumerate()
                .map(|(i, f)| ObservedFingerprint {
                    time: SimTime(100 + i as u64),
                    fingerprint: *f,
                    attempt_id: i as u64,
                })
                .collect(),
        }
    }

    fn spread(n: usize) -> Vec<Fingerprint> {
        // One point per distinct TA: no two are neighbors.
        (0..n).map(|i| Fingerprint::new(10 + 3 * i as u32, -50.0)).collect()
    }

    fn near_identical(n: usize) -> Vec<Fingerprint> {
        (0..n)
            .map(|i| Fingerprint::new(32, -41.0 + 0.1 * (i % 5) as f64))
            .collect()
    }

    #[test]
    fn storm_window_is_detected() {
        let p = default_params();
        let mut h = FingerprintHistory::new(p.history_size_m);
        let (v, clusters) = ingest_window(&kpm(40, 40, 2, &near_identical(40)), &mut h, &p).unwrap();
        assert_eq!(v.kind, VerdictKind::AttackDetected);
        assert_eq!(v.malicious_centroids.len(), 1);
        assert!((v.r1 - 0.05).abs() < 1e-12 && (v.r2 - 0.05).abs() < 1e-12);
        let c = &clusters.unwrap().clusters[0];
        assert_eq!(c.size, 40);
        assert!((v.malicious_centroids[0].mu_rssi - (-40.8)).abs() < 1e-9);
    }

    #[test]
    fn storm_window_capacity_density() {
        let p = AlgorithmParams { density_base: DensityBase::Capacity, ..default_params() };
        let mut h = FingerprintHistory::new(p.history_size_m);
        let (v, clusters) = ingest_window(&kpm(40, 40, 2, &near_identical(40)), &mut h, &p).unwrap();
        assert_eq!(v.kind, VerdictKind::AttackDetected);
        assert!((clusters.unwrap().clusters[0].density_pk - 0.8).abs() < 1e-12);

        // Five attack points out of a capacity of fifty are not dense enough.
        let mut h = FingerprintHistory::new(p.history_size_m);
        let (v, _) = ingest_window(&kpm(5, 5, 0, &near_identical(5)), &mut h, &p).unwrap();
        assert_eq!((v.kind, v.reason), (VerdictKind::HighLoad, VerdictReason::NoDenseCluster));
    }

    #[test]
    fn high_and_normal_load() {
        let p = default_params();
        let mut h = FingerprintHistory::new(50);
        let (v, _) = ingest_window(&kpm(10, 10, 9, &spread(10)), &mut h, &p).unwrap();
        assert_eq!(v.kind, VerdictKind::HighLoad);
        assert!((v.r1 - 0.9).abs() < 1e-12);

        let (v, _) = ingest_window(&kpm(1, 1, 1, &spread(1)), &mut h, &p).unwrap();
        assert_eq!((v.kind, v.reason), (VerdictKind::NormalLoad, VerdictReason::BelowMsg3Threshold));

        let (v, _) = ingest_window(&kpm(0, 0, 0, &[]), &mut h, &p).unwrap();
        assert_eq!(v.kind, VerdictKind::NormalLoad);
        assert_eq!((v.r1, v.r2), (1.0, 1.0));
    }

    #[test]
    fn mixed_ratios_are_high_load() {
        let p = default_params();
        let mut h = FingerprintHistory::new(50);
        let pts = near_identical(20);
        let (v, _) = ingest_window(&kpm(20, 5, 4, &pts), &mut h, &p).unwrap();
        assert!((v.r1 - 0.2).abs() < 1e-12 && (v.r2 - 0.8).abs() < 1e-12);
        assert_eq!((v.kind, v.reason), (VerdictKind::HighLoad, VerdictReason::MixedRatios));

        let mut h = FingerprintHistory::new(50);
        let (v, c) = ingest_window(&kpm(20, 20, 4, &pts), &mut h, &p).unwrap();
        assert!(c.is_some(), "both ratios at 0.2 must enter the clustering branch");
        assert_eq!(v.kind, VerdictKind::AttackDetected);

        let mut h = FingerprintHistory::new(50);
        let (v, _) = ingest_window(&kpm(20, 20, 20, &pts), &mut h, &p).unwrap();
        assert_eq!(v.kind, VerdictKind::HighLoad);
    }

    #[test]
    fn zero_msg4_reads_as_completed() {
        let p = default_params();
        let mut h = FingerprintHistory::new(50);
        let (v, _) = ingest_window(&kpm(5, 0, 0, &near_identical(5)), &mut h, &p).unwrap();
        assert_eq!((v.r1, v.r2), (0.0, 1.0));
        assert_eq!(v.reason, VerdictReason::MixedRatios);
    }

    #[test]
    fn downgrades_when_no_cluster_is_dense() {
        let p = default_params();
        let mut h = FingerprintHistory::new(50);
        let (v, _) = ingest_window(&kpm(10, 10, 0, &spread(10)), &mut h, &p).unwrap();
        assert_eq!((v.kind, v.reason), (VerdictKind::HighLoad, VerdictReason::NoDenseCluster));
        assert!(v.malicious_centroids.is_empty());
    }

    #[test]
    fn two_attackers_need_dynamic_threshold() {
        let mut pts: Vec<Fingerprint> = (0..10).map(|_| Fingerprint::new(32, -41.0)).collect();
        pts.extend((0..10).map(|_| Fingerprint::new(30, -33.0)));
        let fixed = default_params();
        let mut h = FingerprintHistory::new(50);
        let (v, _) = ingest_window(&kpm(20, 20, 0, &pts), &mut h, &fixed).unwrap();
        assert_eq!(v.kind, VerdictKind::HighLoad);

        let dynamic = AlgorithmParams { t3_mode: T3Mode::Dynamic, ..fixed };
        let mut h = FingerprintHistory::new(50);
        let (v, _) = ingest_window(&kpm(20, 20, 0, &pts), &mut h, &dynamic).unwrap();
        assert_eq!(v.kind, VerdictKind::AttackDetected);
        assert_eq!(v.malicious_centroids.len(), 2);
    }

    #[test]
    fn rejects_malformed_window() {
        let p = default_params();
        let mut h = FingerprintHistory::new(50);
        let mut k = kpm(2, 2, 2, &spread(2));
        k.n3 = 3;
        assert!(matches!(
            ingest_window(&k, &mut h, &p),
            Err(DetectorError::InvalidKpm { n3: 3, fingerprints: 2, .. })
        ));
        assert!(h.is_empty());
    }

    #[test]
    fn history_is_fifo_and_bounded() {
        let mut h = FingerprintHistory::new(3);
        for i in 0..5u32 {
            h.push(SimTime(u64::from(i)), Fingerprint::new(i, -50.0));
        }
        assert_eq!(h.len(), 3);
        let tas: Vec<u32> = h.points().iter().map(|f| f.ta).collect();
        assert_eq!(tas, vec![2, 3, 4]);
    }

    #[test]
    fn history_persists_across_windows() {
        let p = default_params();
        let mut d = Detector::new(p);
        // Quiet windows still feed the history.
        for _ in 0..3 {
            let v = d.ingest_window(&kpm(3, 3, 0, &near_identical(3))).unwrap();
            assert_eq!(v.kind, VerdictKind::NormalLoad);
        }
        assert_eq!(d.history().len(), 9);
        let v = d.ingest_window(&kpm(4, 4, 0, &near_identical(4))).unwrap();
        assert_eq!(v.kind, VerdictKind::AttackDetected);
        assert_eq!(d.last_clusters().unwrap().clusters[0].size, 13);
    }

    proptest! {
        #[test]
        fn more_completions_never_return_to_attack(
            n3 in 4u32..40, n4_frac in 0.0f64..=1.0, n5a in 0u32..40, n5b in 0u32..40,
        ) {
            let p = default_params();
            let n4 = ((f64::from(n3) * n4_frac).round() as u32).max(1);
            let (lo, hi) = (n5a.min(n5b), n5a.max(n5b));
            let pts = near_identical(n3 as usize);
            let mut h1 = FingerprintHistory::new(50);
            let mut h2 = FingerprintHistory::new(50);
            let (v_lo, _) = ingest_window(&kpm(n3, n4, lo, &pts), &mut h1, &p).unwrap();
            let (v_hi, _) = ingest_window(&kpm(n3, n4, hi, &pts), &mut h2, &p).unwrap();
            prop_assert_ne!(v_lo.kind, VerdictKind::NormalLoad);
            if v_lo.kind == VerdictKind::HighLoad {
                prop_assert_eq!(v_hi.kind, VerdictKind::HighLoad);
            }
        }

        #[test]
        fn replay_is_deterministic(
            windows in prop::collection::vec((0u32..10, 0u32..10, 0u32..10, -60.0f64..-35.0), 1..30)
        ) {
            let p = default_params();
            let run = || {
                let mut d = Detector::new(p);
                windows.iter().map(|&(n3, n4, n5, rssi)| {
                    let pts: Vec<Fingerprint> = (0..n3).map(|i| Fingerprint::new(31 + i % 2, rssi)).collect();
                    let v = d.ingest_window(&kpm(n3, n4, n5, &pts)).unwrap();
                    assert!(d.history().len() <= p.history_size_m);
                    v
                }).collect::<Vec<_>>()
            };
            let a = run();
            prop_assert_eq!(&a, &run());
            for v in &a {
                prop_assert!(!v.r1.is_nan() && !v.r2.is_nan());
                prop_assert_eq!(v.kind == VerdictKind::AttackDetected, !v.malicious_centroids.is_empty());
            }
        }
    }
}
