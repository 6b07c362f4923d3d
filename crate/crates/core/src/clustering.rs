//! DBSCAN over (TA, RSSI) fingerprints.
//!
//! Each axis is scaled by its tolerance (`eps_ta`, `eps_rssi`) and two points
//! are neighbors when the scaled Euclidean distance is at most
//! [`CLUSTER_RADIUS`]. A point counts itself as a neighbor, so a core point
//! has at least `min_pts - 1` other points within reach.
//!
//! Points are visited in input order and each cluster is expanded to
//! completion before the next seed is considered. A border point reachable
//! from two clusters therefore goes to the one whose seed comes first.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AlgorithmParams, Centroid, Fingerprint};

/// Neighborhood radius in tolerance-normalized units.
pub const CLUSTER_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClusterError {
    #[error("cannot cluster an empty point set")]
    EmptyInput,
    #[error("history capacity {capacity} is smaller than the {points} points supplied")]
    CapacityTooSmall { capacity: usize, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Indices into the input slice, ascending.
    pub indices: Vec<usize>,
    pub size: usize,
    pub centroid: Centroid,
    /// `size / denominator` as passed to [`dbscan`].
    pub density_pk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster index per input point, `None` for noise.
    pub labels: Vec<Option<usize>>,
    pub clusters: Vec<Cluster>,
}

impl ClusterResult {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// Tolerance-normalized Euclidean distance between two fingerprints.
pub fn distance(a: &Fingerprint, b: &Fingerprint, params: &AlgorithmParams) -> f64 {
    let dta = (f64::from(a.ta) - f64::from(b.ta)) / params.eps_ta;
    let drssi = (a.rssi - b.rssi) / params.eps_rssi;
    dta.hypot(drssi)
}

pub fn are_neighbors(a: &Fingerprint, b: &Fingerprint, params: &AlgorithmParams) -> bool {
    distance(a, b, params) <= CLUSTER_RADIUS
}

/// Run DBSCAN and compute per-cluster centroid and relative density
/// `size / density_denominator`.
pub fn dbscan(
    points: &[Fingerprint],
    params: &AlgorithmParams,
    density_denominator: usize,
) -> Result<ClusterResult, ClusterError> {
    if points.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if density_denominator < points.len() {
        return Err(ClusterError::CapacityTooSmall {
            capacity: density_denominator,
            points: points.len(),
        });
    }

    let n = points.len();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| are_neighbors(&points[i], &points[j], params))
                .collect()
        })
        .collect();
    let is_core = |i: usize| neighbors[i].len() >= params.min_pts;

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut n_clusters = 0usize;

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        if !is_core(seed) {
            continue;
        }

        let cid = n_clusters;
        n_clusters += 1;
        labels[seed] = Some(cid);
        let mut queue: VecDeque<usize> = neighbors[seed].iter().copied().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cid);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            if is_core(j) {
                queue.extend(neighbors[j].iter().copied());
            }
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (i, label) in labels.iter().enumerate() {
        if let Some(c) = label {
            members[*c].push(i);
        }
    }
    let clusters = members
        .into_iter()
        .map(|indices| {
            let centroid = Centroid::mean_of(indices.iter().map(|&i| &points[i]))
                .expect("clusters are never empty");
            let size = indices.len();
            Cluster {
                size,
                centroid,
                density_pk: size as f64 / density_denominator as f64,
                indices,
            }
        })
        .collect();

    Ok(ClusterResult { labels, clusters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_params;
    use proptest::prelude::*;

    fn fp(ta: u32, rssi: f64) -> Fingerprint {
        Fingerprint::new(ta, rssi)
    }

    #[test]
    fn distance_examples() {
        let p = default_params();
        assert_eq!(distance(&fp(32, -41.0), &fp(32, -41.0), &p), 0.0);
        // (1/1)^2 + (11.6/4)^2 = 1 + 2.9^2
        let d = distance(&fp(32, -41.0), &fp(31, -52.6), &p);
        assert!((d - (1.0f64 + 2.9 * 2.9).sqrt()).abs() < 1e-9);
        assert!((d - 3.068).abs() < 1e-3);
    }

    #[test]
    fn dense_blob_with_scattered_noise() {
        let p = default_params();
        let mut pts = vec![fp(32, -41.0); 10];
        pts.extend([fp(35, -41.0), fp(32, -60.0), fp(28, -20.0)]);
        let r = dbscan(&pts, &p, 50).unwrap();
        assert_eq!(r.clusters.len(), 1);
        let c = &r.clusters[0];
        assert_eq!(c.size, 10);
        assert!((c.density_pk - 0.2).abs() < 1e-12);
        assert_eq!(c.centroid, Centroid::new(32.0, -41.0));
        assert_eq!(r.noise_count(), 3);
    }

    #[test]
    fn below_min_pts_is_all_noise() {
        let p = default_params();
        let r = dbscan(&[fp(32, -41.0), fp(32, -41.0)], &p, 50).unwrap();
        assert!(r.clusters.is_empty());
        assert_eq!(r.noise_count(), 2);
    }

    #[test]
    fn errors() {
        let p = default_params();
        assert_eq!(dbscan(&[], &p, 50), Err(ClusterError::EmptyInput));
        assert!(matches!(
            dbscan(&[fp(1, -40.0); 3], &p, 2),
            Err(ClusterError::CapacityTooSmall { .. })
        ));
    }

    #[test]
    fn bridging_core_point_merges_groups() {
        let p = default_params();
        let mut pts = vec![fp(30, -40.0); 3];
        pts.extend([fp(30, -48.0); 3]);
        pts.push(fp(30, -44.0));
        let r = dbscan(&pts, &p, 50).unwrap();
        assert_eq!(r.clusters.len(), 1);

        // Off by one TA the bridge is out of reach of both groups.
        pts[6] = fp(31, -44.0);
        let r = dbscan(&pts, &p, 50).unwrap();
        assert_eq!(r.clusters.len(), 2);
        assert_eq!(r.labels[6], None);
    }

    #[test]
    fn border_tie_break_by_seed_order() {
        let p = AlgorithmParams { min_pts: 4, ..default_params() };
        let pts = vec![
            // cluster B members first in input order
            fp(30, -52.0),
            fp(30, -52.0),
            fp(30, -52.0),
            fp(30, -48.0), // core of B, reaches the border
            // cluster A
            fp(30, -36.0),
            fp(30, -36.0),
            fp(30, -36.0),
            fp(30, -40.0), // core of A, reaches the border
            // border: neighbors are itself, -48 and -40 only
            fp(30, -44.0),
        ];
        let r = dbscan(&pts, &p, 50).unwrap();
        assert_eq!(r.clusters.len(), 2);
        assert_eq!(r.labels[8], r.labels[0]);
        assert_eq!(r.labels[8], Some(0));
    }

    fn arb_points() -> impl Strategy<Value = Vec<Fingerprint>> {
        prop::collection::vec((28u32..36, -60.0f64..-35.0), 1..40)
            .prop_map(|v| v.into_iter().map(|(ta, r)| fp(ta, r)).collect())
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in (0u32..64, -140.0f64..0.0), b in (0u32..64, -140.0f64..0.0)) {
            let p = default_params();
            let (a, b) = (fp(a.0, a.1), fp(b.0, b.1));
            prop_assert_eq!(distance(&a, &b, &p), distance(&b, &a, &p));
            prop_assert_eq!(distance(&a, &b, &p) == 0.0, a == b);
        }

        #[test]
        fn sizes_and_densities_are_consistent(pts in arb_points()) {
            let p = default_params();
            let r = dbscan(&pts, &p, 50).unwrap();
            let clustered: usize = r.clusters.iter().map(|c| c.size).sum();
            prop_assert_eq!(clustered + r.noise_count(), pts.len());
            prop_assert!(r.clusters.iter().all(|c| c.size >= p.min_pts));
            prop_assert!(r.clusters.iter().map(|c| c.density_pk).sum::<f64>() <= 1.0 + 1e-12);
        }

        #[test]
        fn clustered_points_are_core_or_reach_a_core(pts in arb_points()) {
            let p = default_params();
            let r = dbscan(&pts, &p, 50).unwrap();
            let degree = |i: usize| pts.iter().filter(|q| are_neighbors(&pts[i], q, &p)).count();
            for (i, label) in r.labels.iter().enumerate() {
                if let Some(c) = label {
                    let core_self = degree(i) >= p.min_pts;
                    let near_core = r.clusters[*c].indices.iter().any(|&j| {
                        degree(j) >= p.min_pts && are_neighbors(&pts[i], &pts[j], &p)
                    });
                    prop_assert!(core_self || near_core);
                }
            }
        }

        #[test]
        fn duplicating_a_core_point_never_shrinks_clusters(pts in arb_points(), pick in 0usize..40) {
            let p = default_params();
            let r = dbscan(&pts, &p, 100).unwrap();
            let Some(c) = r.clusters.first() else { return Ok(()); };
            let i = c.indices[pick % c.indices.len()];
            let mut more = pts.clone();
            more.push(pts[i]);
            let r2 = dbscan(&more, &p, 100).unwrap();
            // every original cluster's members stay together in one cluster of >= size
            for cl in &r.clusters {
                let core_member = cl.indices.iter().copied().find(|&j| {
                    pts.iter().filter(|q| are_neighbors(&pts[j], q, &p)).count() >= p.min_pts
                }).unwrap();
                let new_label = r2.labels[core_member].unwrap();
                prop_assert!(r2.clusters[new_label].size >= cl.size);
            }
        }
    }
}
