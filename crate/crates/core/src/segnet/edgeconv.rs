//! EdgeConv: for every point `i` and neighbour `j`, the edge feature
//! `[x_i ‖ x_j − x_i]` goes through a shared linear layer and a leaky ReLU,
//! and the point's output is the channel-wise maximum over its `k` edges.
//!
//! With the weight split into the rows acting on `x_i` (`W_self`) and on
//! `x_j − x_i` (`W_diff`), the edge pre-activation factors as
//! `x_i·(W_self − W_diff) + b + x_j·W_diff`. Both terms are per-point
//! products, so the layer costs two `n × d × d_out` matrix products instead
//! of one `n·k × 2d × d_out` product. Leaky ReLU is strictly increasing,
//! so the max over edges commutes with the activation and the winning edge
//! is the one with the largest `x_j·W_diff` entry.

use super::ops::{leaky_relu, leaky_relu_backward};
use super::tensor::{matmul, matmul_nt, matmul_tn, sum_rows, Tensor};
use crate::error::{Error, Result};
use crate::graph::KnnGraph;
use crate::scalar::Scalar;

/// Values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct EdgeConvCache<T> {
    /// Pre-activation of the winning edge, `n × d_out`.
    pub pre: Tensor<T>,
    /// Winning neighbour (point index) per output entry, `n × d_out`.
    pub winner: Vec<usize>,
}

fn split_weight<T: Scalar>(w: &Tensor<T>, d: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    if w.shape().len() != 2 || w.rows() != 2 * d {
        return Err(Error::shape(format!(
            "edge weight {:?} does not accept {}-wide edge features",
            w.shape(),
            2 * d
        )));
    }
    let d_out = w.cols();
    let self_rows = &w.data()[..d * d_out];
    let diff_rows = &w.data()[d * d_out..];
    let w_center: Vec<T> = self_rows
        .iter()
        .zip(diff_rows)
        .map(|(a, b)| *a - *b)
        .collect();
    Ok((
        Tensor::matrix(d, d_out, w_center)?,
        Tensor::matrix(d, d_out, diff_rows.to_vec())?,
    ))
}

pub fn edgeconv<T: Scalar>(
    x: &Tensor<T>,
    graph: &KnnGraph,
    w: &Tensor<T>,
    b: &Tensor<T>,
    slope: T,
) -> Result<(Tensor<T>, EdgeConvCache<T>)> {
    if x.shape().len() != 2 || graph.n() != x.rows() {
        return Err(Error::shape(format!(
            "graph over {} points for features {:?}",
            graph.n(),
            x.shape()
        )));
    }
    let (n, d) = (x.rows(), x.cols());
    let (w_center, w_diff) = split_weight(w, d)?;
    let d_out = w.cols();
    if b.len() != d_out {
        return Err(Error::shape("edge bias does not match weight"));
    }
    let center = matmul(x, &w_center)?;
    let neighbor = matmul(x, &w_diff)?;
    let k = graph.k();
    let mut pre = vec![T::zero(); n * d_out];
    let mut winner = vec![0usize; n * d_out];
    for i in 0..n {
        let row = graph.row(i);
        let out = &mut pre[i * d_out..(i + 1) * d_out];
        let win = &mut winner[i * d_out..(i + 1) * d_out];
        if k == 0 {
            return Err(Error::invalid("edge convolution needs k >= 1"));
        }
        out.copy_from_slice(neighbor.row(row[0]));
        win.fill(row[0]);
        // Strict comparison keeps the lowest edge index on ties.
        for &j in &row[1..] {
            for ((best, w_idx), v) in out.iter_mut().zip(win.iter_mut()).zip(neighbor.row(j)) {
                if *v > *best {
                    *best = *v;
                    *w_idx = j;
                }
            }
        }
        for ((o, c), bias) in out.iter_mut().zip(center.row(i)).zip(b.data()) {
            *o = *o + *c + *bias;
        }
    }
    let pre = Tensor::matrix(n, d_out, pre)?;
    let y = leaky_relu(&pre, slope);
    Ok((y, EdgeConvCache { pre, winner }))
}

pub struct EdgeConvGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

/// Backward of [`edgeconv`]; graph indices are constants.
pub fn edgeconv_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    cache: &EdgeConvCache<T>,
    dy: &Tensor<T>,
    slope: T,
) -> Result<EdgeConvGrads<T>> {
    let (n, d) = (x.rows(), x.cols());
    let (w_center, w_diff) = split_weight(w, d)?;
    let d_out = w.cols();
    let d_pre = leaky_relu_backward(&cache.pre, dy, slope);
    let mut d_neighbor = Tensor::zeros(&[n, d_out]);
    {
        let dn = d_neighbor.data_mut();
        for (pos, (&j, g)) in cache.winner.iter().zip(d_pre.data()).enumerate() {
            let c = pos % d_out;
            dn[j * d_out + c] = dn[j * d_out + c] + *g;
        }
    }
    let mut dx = matmul_nt(&d_pre, &w_center)?;
    dx.add_assign(&matmul_nt(&d_neighbor, &w_diff)?);
    let dw_center = matmul_tn(x, &d_pre)?;
    let dw_neighbor = matmul_tn(x, &d_neighbor)?;
    // W_self = W_center + W_diff gets dW_center; W_diff gets
    // dW_neighbor − dW_center.
    let mut dw = Vec::with_capacity(2 * d * d_out);
    dw.extend_from_slice(dw_center.data());
    dw.extend(
        dw_neighbor
            .data()
            .iter()
            .zip(dw_center.data())
            .map(|(a, b)| *a - *b),
    );
    Ok(EdgeConvGrads {
        dx,
        dw: Tensor::matrix(2 * d, d_out, dw)?,
        db: sum_rows(&d_pre),
    })
}
