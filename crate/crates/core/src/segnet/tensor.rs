use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a matrix (first dimension).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a matrix; 1-D tensors are a single row.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn convert<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from(*v).expect("float conversion"))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.data {
            *a = *a * s;
        }
    }
}

fn check_2d<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    if t.shape.len() != 2 {
        return Err(Error::shape(format!("{what} must be a matrix, got shape {:?}", t.shape)));
    }
    Ok((t.shape[0], t.shape[1]))
}

/// `a · b` for `a: m×k`, `b: k×n`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = check_2d(a, "lhs")?;
    let (k2, n) = check_2d(b, "rhs")?;
    if k != k2 {
        return Err(Error::shape(format!("matmul {m}x{k} · {k2}x{n}")));
    }
    let mut c = Tensor::zeros(&[m, n]);
    T::gemm(
        m, k, n, T::one(), &a.data, k as isize, 1, &b.data, n as isize, 1, T::zero(), &mut c.data,
        n as isize, 1,
    );
    Ok(c)
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, m) = check_2d(a, "lhs")?;
    let (k2, n) = check_2d(b, "rhs")?;
    if k != k2 {
        return Err(Error::shape(format!("matmul ({k}x{m})ᵀ · {k2}x{n}")));
    }
    let mut c = Tensor::zeros(&[m, n]);
    T::gemm(
        m, k, n, T::one(), &a.data, 1, m as isize, &b.data, n as isize, 1, T::zero(), &mut c.data,
        n as isize, 1,
    );
    Ok(c)
}

/// `a · bᵀ` for `a: m×k`, `b: n×k`.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = check_2d(a, "lhs")?;
    let (n, k2) = check_2d(b, "rhs")?;
    if k != k2 {
        return Err(Error::shape(format!("matmul {m}x{k} · ({n}x{k2})ᵀ")));
    }
    let mut c = Tensor::zeros(&[m, n]);
    T::gemm(
        m, k, n, T::one(), &a.data, k as isize, 1, &b.data, 1, k as isize, T::zero(), &mut c.data,
        n as isize, 1,
    );
    Ok(c)
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn concat_cols<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let rows = parts.first().map(|p| p.rows()).unwrap_or(0);
    if parts.iter().any(|p| p.shape.len() != 2 || p.rows() != rows) {
        return Err(Error::shape("concat_cols needs matrices with equal row counts"));
    }
    let cols: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(i));
        }
    }
    Tensor::matrix(rows, cols, data)
}

/// Inverse of [`concat_cols`]: splits columns into blocks of `widths`.
pub fn split_cols<T: Scalar>(t: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (rows, cols) = check_2d(t, "split input")?;
    if widths.iter().sum::<usize>() != cols {
        return Err(Error::shape(format!("cannot split {cols} columns into {widths:?}")));
    }
    let mut out: Vec<Vec<T>> = widths.iter().map(|w| Vec::with_capacity(rows * w)).collect();
    for i in 0..rows {
        let row = t.row(i);
        let mut at = 0;
        for (dst, &w) in out.iter_mut().zip(widths) {
            dst.extend_from_slice(&row[at..at + w]);
            at += w;
        }
    }
    out.into_iter()
        .zip(widths)
        .map(|(d, &w)| Tensor::matrix(rows, w, d))
        .collect()
}

/// Repeats a vector as `rows` identical rows.
pub fn broadcast_rows<T: Scalar>(v: &Tensor<T>, rows: usize) -> Tensor<T> {
    let cols = v.len();
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        data.extend_from_slice(&v.data);
    }
    Tensor {
        shape: vec![rows, cols],
        data,
    }
}

/// Column sums of a matrix, as a vector.
pub fn sum_rows<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let cols = t.cols();
    let mut out = vec![T::zero(); cols];
    for row in t.data.chunks_exact(cols.max(1)) {
        for (o, v) in out.iter_mut().zip(row) {
            *o = *o + *v;
        }
    }
    Tensor {
        shape: vec![cols],
        data: out,
    }
}
