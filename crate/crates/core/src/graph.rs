//! Exact k-nearest-neighbour graphs.
//!
//! Rows list each point's `k` nearest other points ordered by
//! `(squared distance, index)`; ties therefore always resolve to the lower
//! point index. [`knn_grid`] is a bucketed accelerator for 2-D inputs and
//! returns exactly what [`knn_bruteforce`] returns.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    n: usize,
    k: usize,
    neighbors: Vec<usize>,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// Flat `n × k` neighbour table.
    pub fn table(&self) -> &[usize] {
        &self.neighbors
    }

    pub fn from_table(n: usize, k: usize, neighbors: Vec<usize>) -> Result<Self> {
        if neighbors.len() != n * k {
            return Err(Error::shape(format!(
                "neighbour table of length {} for n={n}, k={k}",
                neighbors.len()
            )));
        }
        for (pos, &j) in neighbors.iter().enumerate() {
            if j >= n || (k > 0 && j == pos / k) {
                return Err(Error::invalid(format!("invalid neighbour {j} in row {}", pos / k)));
            }
        }
        Ok(Self { n, k, neighbors })
    }
}

fn check_args<T: Scalar>(features: &[T], n: usize, d: usize, k: usize) -> Result<()> {
    if features.len() != n * d {
        return Err(Error::shape(format!(
            "feature buffer of {} values for {n}x{d}",
            features.len()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} requires 1 <= k < n = {n}")));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite feature"));
    }
    Ok(())
}

#[inline]
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        let diff = *x - *y;
        acc = acc + diff * diff;
    }
    acc
}

#[inline]
fn by_dist_then_index<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Keeps the `k` smallest candidates in `(distance, index)` order.
fn select_k<T: Scalar>(candidates: &mut Vec<(T, usize)>, k: usize, row: &mut [usize]) {
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, by_dist_then_index);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(by_dist_then_index);
    for (slot, (_, j)) in row.iter_mut().zip(candidates.iter()) {
        *slot = *j;
    }
}

/// Exact kNN over an `n × d` row-major feature matrix, excluding self.
pub fn knn_bruteforce<T: Scalar>(features: &[T], n: usize, d: usize, k: usize) -> Result<KnnGraph> {
    check_args(features, n, d, k)?;
    let mut neighbors = vec![0usize; n * k];
    neighbors
        .par_chunks_mut(k)
        .enumerate()
        .for_each_init(Vec::new, |candidates, (i, row)| {
            candidates.clear();
            let xi = &features[i * d..(i + 1) * d];
            candidates.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (sq_dist(xi, &features[j * d..(j + 1) * d]), j)),
            );
            select_k(candidates, k, row);
        });
    Ok(KnnGraph { n, k, neighbors })
}

/// Uniform bucket grid over 2-D points.
struct Buckets {
    origin: (f64, f64),
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    members: Vec<usize>,
    /// Absolute allowance for bucket-assignment rounding.
    slack: f64,
}

impl Buckets {
    fn build(xy: &[(f64, f64)], k: usize) -> Self {
        let n = xy.len();
        let (mut lo_x, mut lo_y, mut hi_x, mut hi_y) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for &(x, y) in xy {
            lo_x = lo_x.min(x);
            lo_y = lo_y.min(y);
            hi_x = hi_x.max(x);
            hi_y = hi_y.max(y);
        }
        let w = (hi_x - lo_x).max(0.0);
        let h = (hi_y - lo_y).max(0.0);
        // Aim for about k points per bucket on evenly spread data.
        let target_buckets = (n / k.max(1)).max(1) as f64;
        let area = (w * h).max(f64::MIN_POSITIVE);
        let mut cell = (area / target_buckets).sqrt();
        let span = w.max(h);
        if !(cell.is_finite() && cell > 0.0) || span == 0.0 {
            cell = 1.0;
        }
        // Degenerate thin layouts would otherwise explode the bucket count.
        cell = cell.max(span / 4096.0);
        let nx = ((w / cell).floor() as usize + 1).min(4097);
        let ny = ((h / cell).floor() as usize + 1).min(4097);
        let mut counts = vec![0usize; nx * ny + 1];
        let slot = |x: f64, y: f64| -> usize {
            let cx = (((x - lo_x) / cell) as usize).min(nx - 1);
            let cy = (((y - lo_y) / cell) as usize).min(ny - 1);
            cy * nx + cx
        };
        for &(x, y) in xy {
            counts[slot(x, y) + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let start = counts.clone();
        let mut fill = counts;
        let mut members = vec![0usize; n];
        for (i, &(x, y)) in xy.iter().enumerate() {
            let s = slot(x, y);
            members[fill[s]] = i;
            fill[s] += 1;
        }
        let slack = 1e-9 * (cell * (nx + ny) as f64 + lo_x.abs() + lo_y.abs());
        Self {
            origin: (lo_x, lo_y),
            cell,
            nx,
            ny,
            start,
            members,
            slack,
        }
    }

    fn coords(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = (((x - self.origin.0) / self.cell) as usize).min(self.nx - 1);
        let cy = (((y - self.origin.1) / self.cell) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn bucket(&self, cx: usize, cy: usize) -> &[usize] {
        let s = cy * self.nx + cx;
        &self.members[self.start[s]..self.start[s + 1]]
    }
}

/// Exact kNN for 2-D points using uniform bucketing; identical output to
/// [`knn_bruteforce`] on the same input.
pub fn knn_grid<T: Scalar>(features: &[T], n: usize, k: usize) -> Result<KnnGraph> {
    check_args(features, n, 2, k)?;
    let xy: Vec<(f64, f64)> = features
        .chunks_exact(2)
        .map(|p| (p[0].to_f64().unwrap_or(0.0), p[1].to_f64().unwrap_or(0.0)))
        .collect();
    let grid = Buckets::build(&xy, k);
    let mut neighbors = vec![0usize; n * k];
    neighbors
        .par_chunks_mut(k)
        .enumerate()
        .for_each_init(Vec::new, |candidates, (i, row)| {
            candidates.clear();
            let xi = &features[2 * i..2 * i + 2];
            let (qx, qy) = xy[i];
            let (cx, cy) = grid.coords(qx, qy);
            let max_ring = grid.nx.max(grid.ny);
            let mut ring = 0usize;
            loop {
                let x0 = cx as isize - ring as isize;
                let x1 = cx as isize + ring as isize;
                let y0 = cy as isize - ring as isize;
                let y1 = cy as isize + ring as isize;
                for by in y0..=y1 {
                    if by < 0 || by >= grid.ny as isize {
                        continue;
                    }
                    let on_edge_row = by == y0 || by == y1;
                    let mut bx = x0;
                    while bx <= x1 {
                        if bx >= 0 && bx < grid.nx as isize {
                            for &j in grid.bucket(bx as usize, by as usize) {
                                if j != i {
                                    candidates.push((sq_dist(xi, &features[2 * j..2 * j + 2]), j));
                                }
                            }
                        }
                        // Interior rows only need the two ring columns.
                        bx = if on_edge_row || bx == x1 { bx + 1 } else { x1 };
                    }
                }
                if ring >= max_ring {
                    break;
                }
                if candidates.len() >= k {
                    // Anything outside the visited block is at least `gap` away.
                    let lo_x = grid.origin.0 + (cx as f64 - ring as f64) * grid.cell;
                    let hi_x = grid.origin.0 + (cx as f64 + ring as f64 + 1.0) * grid.cell;
                    let lo_y = grid.origin.1 + (cy as f64 - ring as f64) * grid.cell;
                    let hi_y = grid.origin.1 + (cy as f64 + ring as f64 + 1.0) * grid.cell;
                    let gap = (qx - lo_x).min(hi_x - qx).min(qy - lo_y).min(hi_y - qy)
                        - grid.slack;
                    if gap > 0.0 {
                        candidates.select_nth_unstable_by(k - 1, by_dist_then_index);
                        let kth = candidates[k - 1].0.to_f64().unwrap_or(f64::INFINITY);
                        // Strict and with relative slack so that ties and
                        // single-precision rounding near the boundary are
                        // still visited.
                        if kth < gap * gap * (1.0 - 1e-6) {
                            break;
                        }
                    }
                }
                ring += 1;
            }
            select_k(candidates, k, row);
        });
    Ok(KnnGraph { n, k, neighbors })
}
