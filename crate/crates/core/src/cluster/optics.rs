use std::collections::BTreeSet;

use super::dbscan::RadiusIndex;
use super::{ClusterResult, Point};

/// Cluster ordering with per-point reachability and core distances;
/// `f64::INFINITY` stands for "undefined".
#[derive(Debug, Clone, PartialEq)]
pub struct OpticsOrdering {
    pub order: Vec<usize>,
    /// Reachability of each point (indexed by point, not by position).
    pub reachability: Vec<f64>,
    pub core_distance: Vec<f64>,
}

impl OpticsOrdering {
    /// Reachability values in processing order.
    pub fn plot(&self) -> Vec<f64> {
        self.order.iter().map(|&i| self.reachability[i]).collect()
    }
}

/// Non-negative floats order like their bit patterns.
fn bits(v: f64) -> u64 {
    debug_assert!(v >= 0.0);
    v.to_bits()
}

/// OPTICS ordering. The core distance is the distance to the `min_pts`-th
/// closest point within `eps_max`, counting the point itself; the next point
/// processed is the seed with the smallest reachability, ties to the lower
/// index. Unvisited points start new walks in index order.
pub fn optics(points: &[Point], min_pts: usize, eps_max: f64) -> OpticsOrdering {
    let m = points.len();
    let index = RadiusIndex::new(points, eps_max);
    let mut reach = vec![f64::INFINITY; m];
    let mut core = vec![f64::INFINITY; m];
    let mut processed = vec![false; m];
    let mut order = Vec::with_capacity(m);
    let neighbors_of = |i: usize, core: &mut [f64]| {
        let nb = index.query(i);
        if min_pts >= 1 && nb.len() >= min_pts {
            let mut d: Vec<f64> = nb.iter().map(|&(_, d)| d).collect();
            d.sort_by(f64::total_cmp);
            core[i] = d[min_pts - 1];
        }
        nb
    };
    for start in 0..m {
        if processed[start] {
            continue;
        }
        let mut seeds: BTreeSet<(u64, usize)> = BTreeSet::new();
        let mut next = Some(start);
        while let Some(p) = next {
            processed[p] = true;
            order.push(p);
            let nb = neighbors_of(p, &mut core);
            if core[p].is_finite() {
                for (q, d) in nb {
                    if processed[q] {
                        continue;
                    }
                    let candidate = core[p].max(d);
                    if candidate < reach[q] {
                        if reach[q].is_finite() {
                            seeds.remove(&(bits(reach[q]), q));
                        }
                        reach[q] = candidate;
                        seeds.insert((bits(candidate), q));
                    }
                }
            }
            next = seeds.pop_first().map(|(_, q)| q);
        }
    }
    OpticsOrdering {
        order,
        reachability: reach,
        core_distance: core,
    }
}

/// DBSCAN-equivalent flat clustering at `eps ≤ eps_max`: a point whose
/// reachability exceeds `eps` opens a new cluster if its core distance is
/// within `eps` and is noise otherwise; every other point joins the current
/// cluster. Cluster ids follow the ordering.
pub fn extract_dbscan(points: &[Point], ordering: &OpticsOrdering, eps: f64) -> ClusterResult {
    let mut assignment = vec![None; points.len()];
    let mut current: Option<usize> = None;
    let mut next = 0;
    for &p in &ordering.order {
        if ordering.reachability[p] > eps {
            if ordering.core_distance[p] <= eps {
                current = Some(next);
                next += 1;
                assignment[p] = current;
            }
        } else {
            assignment[p] = current;
        }
    }
    ClusterResult::from_assignment(points, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::dbscan::tests::random_instance;
    use crate::cluster::dbscan::{core_points, dbscan};
    use crate::rng::SplitMix64;

    #[test]
    fn tight_blob_has_flat_reachability() {
        let pts: Vec<Point> = (0..25).map(|i| ((i % 5) as f64, (i / 5) as f64)).collect();
        let o = optics(&pts, 3, 10.0);
        let plot = o.plot();
        assert!(plot[0].is_infinite());
        assert!(plot[1..].iter().all(|&r| r <= 1.0 + 1e-12));
    }

    #[test]
    fn two_blobs_give_one_spike() {
        let mut pts = Vec::new();
        for i in 0..16 {
            pts.push(((i % 4) as f64, (i / 4) as f64));
            pts.push((50.0 + (i % 4) as f64, (i / 4) as f64));
        }
        let o = optics(&pts, 3, 100.0);
        let plot = o.plot();
        let spikes = plot[1..].iter().filter(|&&r| r > 10.0).count();
        assert_eq!(spikes, 1);
        let spike_at = plot[1..].iter().position(|&r| r > 10.0).unwrap() + 1;
        assert_eq!(spike_at, 16);
    }

    #[test]
    fn ordering_visits_every_point_once() {
        let mut rng = SplitMix64::new(31);
        let pts = random_instance(&mut rng);
        let mut o = optics(&pts, 3, 20.0).order;
        o.sort();
        assert_eq!(o, (0..pts.len()).collect::<Vec<_>>());
    }

    /// Same partition of the core points, up to cluster renumbering.
    fn same_core_partition(a: &[Option<usize>], b: &[Option<usize>], core: &[bool]) -> bool {
        let m = a.len();
        (0..m).all(|x| {
            (0..m).all(|y| !(core[x] && core[y]) || ((a[x] == a[y]) == (b[x] == b[y])))
        }) && (0..m).all(|x| !core[x] || (a[x].is_some() && b[x].is_some()))
    }

    #[test]
    fn extraction_matches_dbscan_core_clusters() {
        let mut rng = SplitMix64::new(32);
        for trial in 0..100 {
            let pts = random_instance(&mut rng);
            let eps = rng.uniform(2.0, 12.0);
            let min_pts = 1 + rng.below(6);
            let eps_max = eps * rng.uniform(1.0, 3.0);
            let ordering = optics(&pts, min_pts, eps_max);
            let extracted = extract_dbscan(&pts, &ordering, eps);
            let direct = dbscan(&pts, eps, min_pts);
            let core = core_points(&pts, eps, min_pts);
            assert!(same_core_partition(&extracted.assignment, &direct.assignment, &core), "trial {trial}");
        }
    }
}
