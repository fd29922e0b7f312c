use std::collections::{HashMap, VecDeque};

use super::{ClusterResult, Point};

/// Fixed-radius neighbour queries over a uniform grid with cell size equal
/// to the query radius.
pub(crate) struct RadiusIndex<'a> {
    points: &'a [Point],
    radius: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> RadiusIndex<'a> {
    pub fn new(points: &'a [Point], radius: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        if radius.is_finite() && radius > 0.0 {
            for (i, p) in points.iter().enumerate() {
                cells.entry(Self::cell_of(p, radius)).or_default().push(i);
            }
        }
        Self { points, radius, cells }
    }

    fn cell_of(p: &Point, radius: f64) -> (i64, i64) {
        ((p.0 / radius).floor() as i64, (p.1 / radius).floor() as i64)
    }

    /// Indices within `radius` of point `i` (inclusive, `i` itself
    /// included), ascending, with their distances.
    pub fn query(&self, i: usize) -> Vec<(usize, f64)> {
        let p = self.points[i];
        let r2 = self.radius * self.radius;
        let dist = |j: usize| {
            let q = self.points[j];
            let (dy, dz) = (p.0 - q.0, p.1 - q.1);
            dy * dy + dz * dz
        };
        let mut out = Vec::new();
        if self.cells.is_empty() {
            // Zero or unbounded radius: scan everything.
            for j in 0..self.points.len() {
                let d2 = dist(j);
                if d2 <= r2 {
                    out.push((j, d2.sqrt()));
                }
            }
            return out;
        }
        let (cy, cz) = Self::cell_of(&p, self.radius);
        for gy in cy - 1..=cy + 1 {
            for gz in cz - 1..=cz + 1 {
                if let Some(members) = self.cells.get(&(gy, gz)) {
                    for &j in members {
                        let d2 = dist(j);
                        if d2 <= r2 {
                            out.push((j, d2.sqrt()));
                        }
                    }
                }
            }
        }
        out.sort_unstable_by_key(|&(j, _)| j);
        out
    }
}

/// Density clustering. A point is core when at least `min_pts` points,
/// itself included, lie within `eps`. Points are visited in index order and
/// each new cluster grows breadth-first, so a border point joins the first
/// cluster that reaches it. Cluster ids follow discovery order.
pub fn dbscan(points: &[Point], eps: f64, min_pts: usize) -> ClusterResult {
    let m = points.len();
    let index = RadiusIndex::new(points, eps);
    let neighbors: Vec<Vec<usize>> = (0..m)
        .map(|i| index.query(i).into_iter().map(|(j, _)| j).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|n| n.len() >= min_pts).collect();
    let mut assignment: Vec<Option<usize>> = vec![None; m];
    let mut next = 0;
    for start in 0..m {
        if assignment[start].is_some() || !core[start] {
            continue;
        }
        let id = next;
        next += 1;
        assignment[start] = Some(id);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if assignment[q].is_none() {
                    assignment[q] = Some(id);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    ClusterResult::from_assignment(points, assignment)
}

/// Core flags under the same rule as [`dbscan`].
pub fn core_points(points: &[Point], eps: f64, min_pts: usize) -> Vec<bool> {
    let index = RadiusIndex::new(points, eps);
    (0..points.len()).map(|i| index.query(i).len() >= min_pts).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    /// Brute-force reference: union-find over core pairs within eps, border
    /// points attached to the reachable cluster with the smallest first core.
    pub fn oracle(points: &[Point], eps: f64, min_pts: usize) -> (Vec<bool>, Vec<Option<usize>>) {
        let m = points.len();
        let within = |a: usize, b: usize| {
            let (dy, dz) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
            dy * dy + dz * dz <= eps * eps
        };
        let core: Vec<bool> = (0..m).map(|i| (0..m).filter(|&j| within(i, j)).count() >= min_pts).collect();
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                x = p[x];
            }
            x
        }
        for a in 0..m {
            for b in 0..m {
                if core[a] && core[b] && within(a, b) {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        // Roots are the smallest core index of each component; number them
        // in that order.
        let mut roots: Vec<usize> = (0..m).filter(|&i| core[i]).map(|i| find(&mut parent, i)).collect();
        roots.sort();
        roots.dedup();
        let id_of = |r: usize| roots.iter().position(|&x| x == r).unwrap();
        let mut out = vec![None; m];
        for i in 0..m {
            if core[i] {
                out[i] = Some(id_of(find(&mut parent, i)));
            } else {
                out[i] = (0..m)
                    .filter(|&j| core[j] && within(i, j))
                    .map(|j| id_of(find(&mut parent, j)))
                    .min();
            }
        }
        (core, out)
    }

    pub fn random_instance(rng: &mut SplitMix64) -> Vec<Point> {
        let m = 1 + rng.below(64);
        let blobs = 1 + rng.below(4);
        let centres: Vec<Point> = (0..blobs).map(|_| (rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0))).collect();
        (0..m)
            .map(|_| {
                let c = centres[rng.below(blobs)];
                (c.0 + 8.0 * rng.gaussian(), c.1 + 8.0 * rng.gaussian())
            })
            .collect()
    }

    #[test]
    fn sparse_points_are_noise() {
        let pts: Vec<Point> = (0..10).map(|i| (i as f64 * 10.0, 0.0)).collect();
        let r = dbscan(&pts, 5.0, 2);
        assert!(r.assignment.iter().all(|a| a.is_none()));
        assert!(r.clusters.is_empty());
    }

    #[test]
    fn compact_points_form_one_cluster() {
        let pts: Vec<Point> = (0..12).map(|i| ((i % 4) as f64, (i / 4) as f64)).collect();
        let r = dbscan(&pts, 10.0, 12);
        assert_eq!(r.clusters.len(), 1);
        assert!(r.assignment.iter().all(|&a| a == Some(0)));
    }

    #[test]
    fn matches_reachability_oracle() {
        let mut rng = SplitMix64::new(21);
        for trial in 0..200 {
            let pts = random_instance(&mut rng);
            let eps = rng.uniform(2.0, 15.0);
            let min_pts = 1 + rng.below(6);
            let (core, expected) = oracle(&pts, eps, min_pts);
            assert_eq!(core_points(&pts, eps, min_pts), core, "trial {trial}");
            assert_eq!(dbscan(&pts, eps, min_pts).assignment, expected, "trial {trial}");
        }
    }

    #[test]
    fn core_partition_is_permutation_invariant() {
        let mut rng = SplitMix64::new(22);
        for _ in 0..50 {
            let pts = random_instance(&mut rng);
            let m = pts.len();
            let mut perm: Vec<usize> = (0..m).collect();
            for i in (1..m).rev() {
                perm.swap(i, rng.below(i + 1));
            }
            let shuffled: Vec<Point> = perm.iter().map(|&p| pts[p]).collect();
            let a = dbscan(&pts, 8.0, 3);
            let b = dbscan(&shuffled, 8.0, 3);
            let core = core_points(&pts, 8.0, 3);
            for x in 0..m {
                for y in 0..m {
                    if !(core[perm[x]] && core[perm[y]]) {
                        continue;
                    }
                    let same_a = a.assignment[perm[x]] == a.assignment[perm[y]];
                    let same_b = b.assignment[x] == b.assignment[y];
                    assert_eq!(same_a, same_b);
                }
            }
        }
    }

    #[test]
    fn radius_query_matches_scan() {
        let mut rng = SplitMix64::new(23);
        let pts: Vec<Point> = (0..200).map(|_| (rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0))).collect();
        let idx = RadiusIndex::new(&pts, 7.5);
        for i in 0..pts.len() {
            let got: Vec<usize> = idx.query(i).into_iter().map(|(j, _)| j).collect();
            let want: Vec<usize> = (0..pts.len())
                .filter(|&j| (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2) <= 7.5 * 7.5)
                .collect();
            assert_eq!(got, want);
        }
    }
}
