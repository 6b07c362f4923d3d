//! Brute-force DBSCAN reference: union-find over core points, then border
//! assignment. Shares no code with the library implementation.

use rand::Rng;
use rrcstorm::{AlgorithmParams, Fingerprint};

fn near(a: &Fingerprint, b: &Fingerprint, p: &AlgorithmParams) -> bool {
    let x = (a.ta as f64 - b.ta as f64) / p.eps_ta;
    let y = (a.rssi - b.rssi) / p.eps_rssi;
    x * x + y * y <= 1.0
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Labels numbered by order of each component's smallest core index; a
/// border point joins the adjacent component that numbers lowest.
pub fn reference_labels(points: &[Fingerprint], p: &AlgorithmParams) -> Vec<Option<usize>> {
    let n = points.len();
    let adj: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| near(&points[i], &points[j], p)).collect()).collect();
    let core: Vec<bool> = adj.iter().map(|row| row.iter().filter(|&&b| b).count() >= p.min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && adj[i][j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    // Roots are the minimum index of their component after min-linking.
    let mut order: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| find(&mut parent, i)).collect();
    order.sort_unstable();
    order.dedup();
    let number = |root: usize| order.iter().position(|&r| r == root).unwrap();

    (0..n)
        .map(|i| {
            if core[i] {
                Some(number(find(&mut parent, i)))
            } else {
                (0..n)
                    .filter(|&j| core[j] && adj[i][j])
                    .map(|j| number(find(&mut parent, j)))
                    .min()
            }
        })
        .collect()
}

/// Equal up to renaming of cluster ids; noise must match exactly.
pub fn same_partition(a: &[Option<usize>], b: &[Option<usize>]) -> bool {
    use std::collections::HashMap;
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.iter().zip(b).all(|(x, y)| match (x, y) {
        (None, None) => true,
        (Some(x), Some(y)) => *fwd.entry(*x).or_insert(*y) == *y && *back.entry(*y).or_insert(*x) == *x,
        _ => false,
    })
}

/// A random instance of at most 50 points, grouped around a few centres so
/// that clusters, borders and noise all occur. Coordinates are multiples of
/// 0.5 and tolerances powers of two, so neighbor tests are exact.
pub fn random_instance<R: Rng>(rng: &mut R) -> (Vec<Fingerprint>, AlgorithmParams) {
    let params = AlgorithmParams {
        eps_rssi: [1.0, 2.0, 4.0][rng.gen_range(0..3)],
        eps_ta: [1.0, 2.0][rng.gen_range(0..2)],
        min_pts: rng.gen_range(1..=6),
        ..rrcstorm::default_params()
    };
    let n = rng.gen_range(1..=50);
    let centres: Vec<(u32, f64)> =
        (0..rng.gen_range(1..=4)).map(|_| (rng.gen_range(20..40), -30.0 - f64::from(rng.gen_range(0..40)))).collect();
    let points = (0..n)
        .map(|_| {
            let (ta, rssi) = centres[rng.gen_range(0..centres.len())];
            Fingerprint {
                ta: (ta as i32 + rng.gen_range(-2..=2)).max(0) as u32,
                rssi: rssi + f64::from(rng.gen_range(-12..=12)) * 0.5,
            }
        })
        .collect();
    (points, params)
}
