//! Bottom-up Ward clustering.
//!
//! Merge costs are the classic Ward increase in within-cluster sum of
//! squares, `|A||B| / (|A| + |B|) · ‖c_A − c_B‖²`, evaluated from cluster
//! sizes and centroids. Merging stops once the cheapest increase, divided by
//! the number of clustered points, exceeds `threshold²`; that quotient is the
//! growth of the mean squared distance of points to their cluster centre and
//! does not depend on how densely the points were sampled.

use super::{ClusterResult, Point};

/// One merge: the minimum member indices of the two clusters (smaller
/// first) and the Ward cost of the merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
}

#[derive(Clone, Copy)]
struct Node {
    n: f64,
    sy: f64,
    sz: f64,
    /// Smallest member point index; identifies the cluster.
    min_index: usize,
}

impl Node {
    fn centroid(&self) -> (f64, f64) {
        (self.sy / self.n, self.sz / self.n)
    }
}

pub(crate) fn ward_cost(na: f64, ca: (f64, f64), nb: f64, cb: (f64, f64)) -> f64 {
    let dy = ca.0 - cb.0;
    let dz = ca.1 - cb.1;
    na * nb / (na + nb) * (dy * dy + dz * dz)
}

/// `(cost, low min-index, high min-index)` ordering used for every choice.
fn key(cost: f64, a: &Node, b: &Node) -> (f64, usize, usize) {
    let (lo, hi) = if a.min_index < b.min_index {
        (a.min_index, b.min_index)
    } else {
        (b.min_index, a.min_index)
    };
    (cost, lo, hi)
}

fn less(x: (f64, usize, usize), y: (f64, usize, usize)) -> bool {
    x.0 < y.0 || (x.0 == y.0 && (x.1, x.2) < (y.1, y.2))
}

/// Merge history of the greedy Ward procedure, stopping before the first
/// merge whose normalised cost exceeds `threshold²`.
pub fn ward_merges(points: &[Point], threshold: f64) -> Vec<Merge> {
    let m = points.len();
    if m < 2 {
        return Vec::new();
    }
    let limit = threshold * threshold * m as f64;
    let mut nodes: Vec<Option<Node>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Some(Node {
                n: 1.0,
                sy: p.0,
                sz: p.1,
                min_index: i,
            })
        })
        .collect();
    // Cached best partner of each live slot.
    let mut best: Vec<Option<(usize, (f64, usize, usize))>> = vec![None; m];

    let nearest = |nodes: &[Option<Node>], i: usize| -> Option<(usize, (f64, usize, usize))> {
        let a = nodes[i]?;
        let ca = a.centroid();
        let mut out: Option<(usize, (f64, usize, usize))> = None;
        for (j, b) in nodes.iter().enumerate() {
            let Some(b) = b else { continue };
            if j == i {
                continue;
            }
            let k = key(ward_cost(a.n, ca, b.n, b.centroid()), &a, b);
            if out.map_or(true, |(_, bk)| less(k, bk)) {
                out = Some((j, k));
            }
        }
        out
    };

    for i in 0..m {
        best[i] = nearest(&nodes, i);
    }
    let mut merges = Vec::with_capacity(m - 1);
    loop {
        let mut pick: Option<(usize, usize, (f64, usize, usize))> = None;
        for (i, b) in best.iter().enumerate() {
            if let Some((j, k)) = b {
                if pick.map_or(true, |(_, _, pk)| less(*k, pk)) {
                    pick = Some((i, *j, *k));
                }
            }
        }
        let Some((i, j, k)) = pick else { break };
        if k.0 > limit {
            break;
        }
        let (keep, gone) = if i < j { (i, j) } else { (j, i) };
        let a = nodes[keep].expect("live");
        let b = nodes[gone].expect("live");
        nodes[keep] = Some(Node {
            n: a.n + b.n,
            sy: a.sy + b.sy,
            sz: a.sz + b.sz,
            min_index: a.min_index.min(b.min_index),
        });
        nodes[gone] = None;
        best[gone] = None;
        merges.push(Merge {
            a: k.1,
            b: k.2,
            cost: k.0,
        });

        let merged = nodes[keep].expect("live");
        let cm = merged.centroid();
        for s in 0..m {
            if s == keep || nodes[s].is_none() {
                continue;
            }
            match best[s] {
                Some((t, _)) if t == keep || t == gone => best[s] = nearest(&nodes, s),
                Some((_, bk)) => {
                    let other = nodes[s].expect("live");
                    let kk = key(ward_cost(other.n, other.centroid(), merged.n, cm), &other, &merged);
                    if less(kk, bk) {
                        best[s] = Some((keep, kk));
                    }
                }
                None => best[s] = nearest(&nodes, s),
            }
        }
        best[keep] = nearest(&nodes, keep);
    }
    merges
}

/// Ward clustering with the stopping rule described in the module docs.
/// Cluster ids follow the order of each cluster's smallest member index.
pub fn agglomerative_ward(points: &[Point], threshold: f64) -> ClusterResult {
    let merges = ward_merges(points, threshold);
    // Replay merges with a union-find keyed by point index.
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for mg in &merges {
        let ra = find(&mut parent, mg.a);
        let rb = find(&mut parent, mg.b);
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        parent[hi] = lo;
    }
    let roots: Vec<usize> = (0..points.len()).map(|i| find(&mut parent, i)).collect();
    ClusterResult::from_roots(points, &roots)
}
