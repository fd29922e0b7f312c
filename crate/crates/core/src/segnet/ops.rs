//! Differentiable building blocks with hand-derived backward passes.

use super::tensor::{matmul, matmul_nt, matmul_tn, sum_rows, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_SLOPE: f64 = 0.2;

/// `y = x·W + b` for `x: n×d_in`, `W: d_in×d_out`, `b: d_out`.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if b.len() != w.cols() || b.shape().len() != 1 {
        return Err(Error::shape(format!(
            "bias {:?} does not match weight {:?}",
            b.shape(),
            w.shape()
        )));
    }
    let mut y = matmul(x, w)?;
    let cols = y.cols();
    for row in y.data_mut().chunks_exact_mut(cols.max(1)) {
        for (v, bias) in row.iter_mut().zip(b.data()) {
            *v = *v + *bias;
        }
    }
    Ok(y)
}

pub struct LinearGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

/// Gradients of [`linear`] given the upstream gradient `dy`.
pub fn linear_backward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, dy: &Tensor<T>) -> Result<LinearGrads<T>> {
    Ok(LinearGrads {
        dx: matmul_nt(dy, w)?,
        dw: matmul_tn(x, dy)?,
        db: sum_rows(dy),
    })
}

/// `max(x, slope·x)`.
pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < T::zero() {
            *v = *v * slope;
        }
    }
    y
}

/// Backward of [`leaky_relu`]; the subgradient at 0 is `slope`.
pub fn leaky_relu_backward<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, slope: T) -> Tensor<T> {
    let mut dx = dy.clone();
    for (g, v) in dx.data_mut().iter_mut().zip(x.data()) {
        if *v <= T::zero() {
            *g = *g * slope;
        }
    }
    dx
}

/// Per-channel maximum over points; returns the pooled vector and the
/// winning row per channel (lowest index on ties).
pub fn global_maxpool<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    if x.shape().len() != 2 || x.rows() == 0 {
        return Err(Error::invalid("global max-pool needs at least one point"));
    }
    let cols = x.cols();
    let mut best: Vec<T> = x.row(0).to_vec();
    let mut arg = vec![0usize; cols];
    for i in 1..x.rows() {
        for (c, v) in x.row(i).iter().enumerate() {
            if *v > best[c] {
                best[c] = *v;
                arg[c] = i;
            }
        }
    }
    Ok((Tensor::new(vec![cols], best)?, arg))
}

/// Routes each channel's gradient to its argmax row.
pub fn global_maxpool_backward<T: Scalar>(dy: &Tensor<T>, argmax: &[usize], rows: usize) -> Tensor<T> {
    let cols = argmax.len();
    let mut dx = Tensor::zeros(&[rows, cols]);
    let data = dx.data_mut();
    for (c, (&r, g)) in argmax.iter().zip(dy.data()).enumerate() {
        data[r * cols + c] = *g;
    }
    dx
}

/// Mean softmax cross-entropy over rows and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[u8]) -> Result<(T, Tensor<T>)> {
    let n = logits.rows();
    let classes = logits.cols();
    if labels.len() != n || n == 0 {
        return Err(Error::shape(format!(
            "{} labels for {n} rows of logits",
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::invalid(format!("label {bad} outside 0..{classes}")));
    }
    let inv_n = T::one() / T::from_usize(n).expect("count");
    let mut grad = Tensor::zeros(&[n, classes]);
    let mut total = T::zero();
    for (i, (&label, g)) in labels.iter().zip(grad.data_mut().chunks_exact_mut(classes)).enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut denom = T::zero();
        for (gv, &z) in g.iter_mut().zip(row) {
            *gv = (z - max).exp();
            denom = denom + *gv;
        }
        total = total + (denom.ln() - (row[label as usize] - max));
        for gv in g.iter_mut() {
            *gv = *gv / denom * inv_n;
        }
        g[label as usize] = g[label as usize] - inv_n;
    }
    Ok((total * inv_n, grad))
}

#[cfg(test)]
pub(crate) mod fd {
    //! Central finite-difference helpers for gradient tests.

    /// Relative error with a floor on the denominator so that gradients
    /// indistinguishable from zero compare absolutely.
    pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
    }

    /// Numerical gradient of `f` w.r.t. every entry of `x`.
    pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = probe[i];
                probe[i] = orig + h;
                let plus = f(&probe);
                probe[i] = orig - h;
                let minus = f(&probe);
                probe[i] = orig;
                (plus - minus) / (2.0 * h)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::fd::{numeric_grad, rel_err};
    use super::*;
    use crate::rng::SplitMix64;

    fn rand_tensor(rng: &mut SplitMix64, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    const H: f64 = 1e-6;
    const FLOOR: f64 = 1e-3;
    const SINGLE_OP_TOL: f64 = 1e-6;

    #[test]
    fn identity_linear() {
        let x = Tensor::matrix(2, 2, vec![1.0f64, -2.0, 3.5, 4.0]).unwrap();
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[2]);
        assert_eq!(linear(&x, &w, &b).unwrap(), x);
    }

    #[test]
    fn bias_gradient_of_sum_is_ones() {
        let mut rng = SplitMix64::new(1);
        let x = rand_tensor(&mut rng, &[4, 3]);
        let w = rand_tensor(&mut rng, &[3, 2]);
        let ones = Tensor::new(vec![4, 2], vec![1.0; 8]).unwrap();
        let g = linear_backward(&x, &w, &ones).unwrap();
        assert_eq!(g.db.data(), &[4.0, 4.0]);
        // Bias length must match the output width.
        assert!(linear(&x, &w, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn linear_matches_finite_differences() {
        let mut rng = SplitMix64::new(2);
        let x = rand_tensor(&mut rng, &[5, 4]);
        let w = rand_tensor(&mut rng, &[4, 3]);
        let b = rand_tensor(&mut rng, &[3]);
        let r = rand_tensor(&mut rng, &[5, 3]);
        let g = linear_backward(&x, &w, &r).unwrap();
        let objective = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| dot(&linear(x, w, b).unwrap(), &r);

        let nx = numeric_grad(x.data(), H, |v| {
            objective(&Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap(), &w, &b)
        });
        let nw = numeric_grad(w.data(), H, |v| {
            objective(&x, &Tensor::new(w.shape().to_vec(), v.to_vec()).unwrap(), &b)
        });
        let nb = numeric_grad(b.data(), H, |v| {
            objective(&x, &w, &Tensor::new(b.shape().to_vec(), v.to_vec()).unwrap())
        });
        for (a, n) in g
            .dx
            .data()
            .iter()
            .zip(&nx)
            .chain(g.dw.data().iter().zip(&nw))
            .chain(g.db.data().iter().zip(&nb))
        {
            assert!(rel_err(*a, *n, FLOOR) < SINGLE_OP_TOL, "{a} vs {n}");
        }
    }

    #[test]
    fn leaky_relu_values_and_gradient() {
        let x = Tensor::new(vec![4], vec![2.0f64, 0.0, -1.0, 0.5]).unwrap();
        assert_eq!(leaky_relu(&x, 0.2).data(), &[2.0, 0.0, -0.2, 0.5]);
        let dy = Tensor::new(vec![4], vec![1.0; 4]).unwrap();
        assert_eq!(leaky_relu_backward(&x, &dy, 0.2).data(), &[1.0, 0.2, 0.2, 1.0]);

        let mut rng = SplitMix64::new(3);
        let mut x = rand_tensor(&mut rng, &[6, 5]);
        for v in x.data_mut() {
            if v.abs() < 0.05 {
                *v += 0.1;
            }
        }
        let r = rand_tensor(&mut rng, &[6, 5]);
        let g = leaky_relu_backward(&x, &r, 0.2);
        let n = numeric_grad(x.data(), H, |v| {
            dot(&leaky_relu(&Tensor::new(vec![6, 5], v.to_vec()).unwrap(), 0.2), &r)
        });
        for (a, b) in g.data().iter().zip(&n) {
            assert!(rel_err(*a, *b, FLOOR) < SINGLE_OP_TOL);
        }
    }

    #[test]
    fn maxpool_examples() {
        let x = Tensor::matrix(1, 3, vec![1.0f64, -2.0, 3.0]).unwrap();
        let (y, _) = global_maxpool(&x).unwrap();
        assert_eq!(y.data(), x.data());

        let x = Tensor::matrix(3, 2, vec![0.0f64, 0.0, 9.0, 9.0, 1.0, 1.0]).unwrap();
        let (_, arg) = global_maxpool(&x).unwrap();
        let dy = Tensor::new(vec![2], vec![1.5, -2.0]).unwrap();
        let dx = global_maxpool_backward(&dy, &arg, 3);
        assert_eq!(dx.data(), &[0.0, 0.0, 1.5, -2.0, 0.0, 0.0]);

        let tied = Tensor::matrix(2, 1, vec![4.0f64, 4.0]).unwrap();
        assert_eq!(global_maxpool(&tied).unwrap().1, vec![0]);
        assert!(global_maxpool(&Tensor::<f64>::zeros(&[0, 3])).is_err());
    }

    #[test]
    fn maxpool_matches_finite_differences() {
        let mut rng = SplitMix64::new(4);
        let x = rand_tensor(&mut rng, &[5, 4]);
        let r = rand_tensor(&mut rng, &[4]);
        let (_, arg) = global_maxpool(&x).unwrap();
        let g = global_maxpool_backward(&r, &arg, 5);
        let n = numeric_grad(x.data(), H, |v| {
            let (y, _) = global_maxpool(&Tensor::new(vec![5, 4], v.to_vec()).unwrap()).unwrap();
            dot(&y, &r)
        });
        for (a, b) in g.data().iter().zip(&n) {
            assert!(rel_err(*a, *b, FLOOR) < SINGLE_OP_TOL, "{a} vs {b}");
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Tensor::<f64>::zeros(&[4, 3]);
        let (loss, _) = softmax_cross_entropy(&uniform, &[0, 1, 2, 1]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        assert!((loss - 1.0986).abs() < 1e-4);

        let peaked = Tensor::matrix(2, 3, vec![50.0f64, 0.0, 0.0, 0.0, 0.0, 50.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&peaked, &[0, 2]).unwrap();
        assert!(loss < 1e-20);

        assert!(softmax_cross_entropy(&uniform, &[0, 1, 3, 1]).is_err());
        assert!(softmax_cross_entropy(&uniform, &[0, 1]).is_err());
        // Large logits stay finite thanks to max subtraction.
        let huge = Tensor::matrix(1, 3, vec![1e4f32, -1e4, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&huge, &[1]).unwrap().0.is_finite());
    }

    #[test]
    fn cross_entropy_matches_finite_differences() {
        let mut rng = SplitMix64::new(5);
        let logits = rand_tensor(&mut rng, &[4, 3]);
        let labels = [2u8, 0, 1, 1];
        let (_, g) = softmax_cross_entropy(&logits, &labels).unwrap();
        let n = numeric_grad(logits.data(), H, |v| {
            softmax_cross_entropy(&Tensor::new(vec![4, 3], v.to_vec()).unwrap(), &labels)
                .unwrap()
                .0
        });
        for (a, b) in g.data().iter().zip(&n) {
            assert!(rel_err(*a, *b, FLOOR) < SINGLE_OP_TOL, "{a} vs {b}");
        }
    }
}
