//! Fingerprint blocklist with aging.
//!
//! Entries are created from the detector's malicious centroids. A centroid
//! that falls inside the tolerance box of an existing entry reinforces that
//! entry instead of creating a new one: the counter goes up, the last-match
//! time is refreshed and every `k_reinforce`-th hit grows the timeout by
//! `delta_ms`, capped at `tau_max_ms`. An entry is dropped once
//! `now - last_match >= timeout`.

use serde::{Deserialize, Serialize};

use crate::model::{AlgorithmParams, Centroid, Fingerprint, ReinforceOn, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    /// Insertion sequence number, unique within a blocklist.
    pub id: u64,
    pub centroid: Centroid,
    pub match_count: u32,
    pub timeout_ms: u64,
    pub last_match: SimTime,
}

impl BlockEntry {
    pub fn expires_at(&self) -> SimTime {
        self.last_match + self.timeout_ms
    }

    pub fn is_expired(&self, now: SimTime) -> bool {
        now.since(self.last_match) >= self.timeout_ms
    }

    fn reinforce(&mut self, now: SimTime, params: &AlgorithmParams) {
        self.match_count += 1;
        self.last_match = self.last_match.max(now);
        if self.match_count.is_multiple_of(params.k_reinforce) {
            self.timeout_ms = (self.timeout_ms + params.delta_ms).min(params.tau_max_ms);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScreenDecision {
    Accept,
    Reject { entry_id: u64, centroid: Centroid },
}

impl ScreenDecision {
    pub fn is_reject(&self) -> bool {
        matches!(self, ScreenDecision::Reject { .. })
    }
}

/// What an absorb call did, per input centroid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsorbReport {
    pub inserted: Vec<u64>,
    pub reinforced: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockList {
    entries: Vec<BlockEntry>,
    next_id: u64,
}

impl BlockList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Live entries in insertion order.
    pub fn entries(&self) -> &[BlockEntry] {
        &self.entries
    }

    pub fn get(&self, id: u64) -> Option<&BlockEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    fn find_box_match(&self, ta: f64, rssi: f64, params: &AlgorithmParams) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.centroid.within_box(ta, rssi, params))
    }

    /// Merge a malicious fingerprint set into the list.
    pub fn absorb_fingerprints(
        &mut self,
        f_set: &[Centroid],
        now: SimTime,
        params: &AlgorithmParams,
    ) -> AbsorbReport {
        let mut report = AbsorbReport::default();
        for mu in f_set {
            match self.find_box_match(mu.mu_ta, mu.mu_rssi, params) {
                Some(i) => {
                    let e = &mut self.entries[i];
                    e.reinforce(now, params);
                    report.reinforced.push(e.id);
                }
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.entries.push(BlockEntry {
                        id,
                        centroid: *mu,
                        match_count: 1,
                        timeout_ms: params.tau0_ms,
                        last_match: now,
                    });
                    report.inserted.push(id);
                }
            }
        }
        report
    }

    /// Remove and return every entry idle for at least its timeout.
    pub fn expire(&mut self, now: SimTime) -> Vec<BlockEntry> {
        let mut removed = Vec::new();
        self.entries.retain(|e| {
            if e.is_expired(now) {
                removed.push(*e);
                false
            } else {
                true
            }
        });
        removed
    }

    /// Decide on a connection attempt. Expired entries are dropped first.
    /// The first live entry (insertion order) whose box contains `f` wins.
    pub fn screen_attempt(
        &mut self,
        f: &Fingerprint,
        now: SimTime,
        params: &AlgorithmParams,
    ) -> ScreenDecision {
        self.expire(now);
        match self.find_box_match(f64::from(f.ta), f.rssi, params) {
            None => ScreenDecision::Accept,
            Some(i) => {
                let e = &mut self.entries[i];
                if params.reinforce_on == ReinforceOn::Attempt {
                    e.reinforce(now, params);
                }
                ScreenDecision::Reject { entry_id: e.id, centroid: e.centroid }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_params;
    use proptest::prelude::*;

    const MUE: Centroid = Centroid { mu_ta: 32.0, mu_rssi: -41.0 };

    #[test]
    fn first_insertion() {
        let p = default_params();
        let mut b = BlockList::new();
        let r = b.absorb_fingerprints(&[MUE], SimTime(100), &p);
        assert_eq!(r.inserted, vec![0]);
        let e = b.entries()[0];
        assert_eq!((e.match_count, e.timeout_ms, e.last_match), (1, p.tau0_ms, SimTime(100)));
    }

    #[test]
    fn timeout_steps_every_k_absorbs() {
        let p = default_params();
        let mut b = BlockList::new();
        for i in 0..5 {
            b.absorb_fingerprints(&[MUE], SimTime(100 * i), &p);
        }
        let e = b.entries()[0];
        assert_eq!(e.match_count, 5);
        assert_eq!(e.timeout_ms, p.tau0_ms + p.delta_ms);
        assert_eq!(e.last_match, SimTime(400));
    }

    #[test]
    fn timeout_saturates() {
        let p = default_params();
        let mut b = BlockList::new();
        for i in 0..200 {
            b.absorb_fingerprints(&[MUE], SimTime(100 * i), &p);
        }
        // 500 + (200 / 5) * 500 = 20500, capped.
        assert_eq!(b.entries()[0].timeout_ms, 10_000);
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn nearby_centroid_merges_into_older_entry() {
        let p = default_params();
        let mut b = BlockList::new();
        b.absorb_fingerprints(&[MUE], SimTime(0), &p);
        let r = b.absorb_fingerprints(&[Centroid::new(32.4, -43.5)], SimTime(100), &p);
        assert_eq!(r.reinforced, vec![0]);
        assert_eq!(b.len(), 1);
        assert_eq!(b.entries()[0].centroid, MUE);

        let r = b.absorb_fingerprints(&[Centroid::new(31.0, -52.6)], SimTime(200), &p);
        assert_eq!(r.inserted, vec![1]);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn expiry_boundary_is_inclusive() {
        let p = default_params();
        let mut b = BlockList::new();
        b.absorb_fingerprints(&[MUE], SimTime(1000), &p);
        assert!(b.expire(SimTime(1499)).is_empty());
        assert_eq!(b.len(), 1);
        assert_eq!(b.expire(SimTime(1500)).len(), 1);
        assert!(b.is_empty());
    }

    #[test]
    fn expire_removes_only_stale_entries() {
        let p = default_params();
        let mut b = BlockList::new();
        b.absorb_fingerprints(&[MUE], SimTime(0), &p);
        b.absorb_fingerprints(&[Centroid::new(28.0, -70.0)], SimTime(400), &p);
        let gone = b.expire(SimTime(600));
        assert_eq!(gone.len(), 1);
        assert_eq!(gone[0].id, 0);
        assert_eq!(b.entries()[0].id, 1);
    }

    #[test]
    fn screening() {
        let p = default_params();
        let mut b = BlockList::new();
        assert_eq!(b.screen_attempt(&Fingerprint::new(32, -41.0), SimTime(0), &p), ScreenDecision::Accept);

        b.absorb_fingerprints(&[MUE], SimTime(0), &p);
        let d = b.screen_attempt(&Fingerprint::new(32, -43.0), SimTime(10), &p);
        assert_eq!(d, ScreenDecision::Reject { entry_id: 0, centroid: MUE });
        let d = b.screen_attempt(&Fingerprint::new(31, -52.6), SimTime(10), &p);
        assert_eq!(d, ScreenDecision::Accept);

        // Rejections do not reinforce in the default mode.
        let e = b.entries()[0];
        assert_eq!((e.match_count, e.last_match), (1, SimTime(0)));

        // Screening applies expiry first.
        let d = b.screen_attempt(&Fingerprint::new(32, -41.0), SimTime(500), &p);
        assert_eq!(d, ScreenDecision::Accept);
        assert!(b.is_empty());
    }

    #[test]
    fn first_inserted_entry_wins() {
        let p = default_params();
        let mut b = BlockList::new();
        b.absorb_fingerprints(&[MUE], SimTime(0), &p);
        // Far enough from MUE on the merge test, but both boxes cover -45.
        b.absorb_fingerprints(&[Centroid::new(32.0, -49.0)], SimTime(0), &p);
        assert_eq!(b.len(), 2);
        let d = b.screen_attempt(&Fingerprint::new(32, -45.0), SimTime(1), &p);
        assert_eq!(d, ScreenDecision::Reject { entry_id: 0, centroid: MUE });
    }

    #[test]
    fn attempt_reinforcement_mode() {
        let p = AlgorithmParams { reinforce_on: ReinforceOn::Attempt, ..default_params() };
        let mut b = BlockList::new();
        b.absorb_fingerprints(&[MUE], SimTime(0), &p);
        for t in 1..=4 {
            assert!(b.screen_attempt(&Fingerprint::new(32, -41.0), SimTime(t * 100), &p).is_reject());
        }
        let e = b.entries()[0];
        assert_eq!((e.match_count, e.timeout_ms, e.last_match), (5, 1000, SimTime(400)));
    }

    proptest! {
        #[test]
        fn timeout_stays_in_bounds_and_steps(
            gaps in prop::collection::vec(1u64..400, 1..300),
            delta in 1u64..2000,
            k in 1u32..8,
        ) {
            let p = AlgorithmParams { delta_ms: delta, k_reinforce: k, ..default_params() };
            let mut b = BlockList::new();
            let mut now = SimTime(0);
            let mut prev_tau = 0;
            for (i, g) in gaps.iter().enumerate() {
                now = now + *g;
                b.absorb_fingerprints(&[MUE], now, &p);
                // refreshed more often than tau0: never expires
                prop_assert!(b.expire(now).is_empty());
                prop_assert_eq!(b.len(), 1);
                let e = b.entries()[0];
                prop_assert!(e.timeout_ms >= p.tau0_ms && e.timeout_ms <= p.tau_max_ms);
                prop_assert!(e.timeout_ms >= prev_tau);
                // the inserting absorb (c = 1) never bumps the timeout
                let n = i as u64 + 1;
                let bumps = n / u64::from(k) - u64::from(k == 1);
                let expected = (p.tau0_ms + bumps * delta).min(p.tau_max_ms);
                prop_assert_eq!(e.timeout_ms, expected);
                prev_tau = e.timeout_ms;
            }
        }

        #[test]
        fn no_two_entries_share_a_box(
            cs in prop::collection::vec((28.0f64..36.0, -60.0f64..-30.0), 1..60)
        ) {
            let p = default_params();
            let mut b = BlockList::new();
            for (i, (ta, rssi)) in cs.iter().enumerate() {
                b.absorb_fingerprints(&[Centroid::new(*ta, *rssi)], SimTime(i as u64), &p);
            }
            let es = b.entries();
            for i in 0..es.len() {
                for j in (i + 1)..es.len() {
                    prop_assert!(!es[i].centroid.within_box(es[j].centroid.mu_ta, es[j].centroid.mu_rssi, &p));
                }
            }
        }
    }
}
