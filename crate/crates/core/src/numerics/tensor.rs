//! Dense row-major tensors of rank ≤ 2 and the kernels shared by the
//! autodiff graph and the inference path.
//!
//! Every kernel here is deterministic and order-stable, so a value computed
//! through [`Graph`](super::Graph) and the same value computed by calling the
//! kernel directly are bit-identical.

use serde::{Deserialize, Serialize};

/// A dense matrix of `f64`. Vectors are `1 × n`, scalars `1 × 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(v: f64) -> Self {
        Self::from_vec(1, 1, vec![v])
    }

    pub fn row(values: Vec<f64>) -> Self {
        let n = values.len();
        Self::from_vec(1, n, values)
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor data length does not match {rows}x{cols}"
        );
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self::from_vec(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a `1 × 1` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.shape(), (1, 1), "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Little-endian bytes of the values, for hashing and byte comparison.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// `a · b`.
///
/// Accumulators start at `-0.0` (the exact additive identity) and terms whose
/// right-hand factor is zero are skipped, so `x · I` reproduces `x` bit for
/// bit, signed zeros included. For finite inputs the result is otherwise the
/// ordinary sum of products in `k` order.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(
        a.cols,
        b.rows,
        "matmul shape mismatch: {:?} x {:?}",
        a.shape(),
        b.shape()
    );
    let (n, m, p) = (a.rows, a.cols, b.cols);
    let mut out = vec![-0.0; n * p];
    for i in 0..n {
        let out_row = &mut out[i * p..(i + 1) * p];
        for k in 0..m {
            let av = a.data[i * m + k];
            let b_row = &b.data[k * p..(k + 1) * p];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                if bv != 0.0 {
                    *o += av * bv;
                }
            }
        }
    }
    Tensor::from_vec(n, p, out)
}

pub fn transpose(a: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(a.cols, a.rows);
    for r in 0..a.rows {
        for c in 0..a.cols {
            out.data[c * a.rows + r] = a.data[r * a.cols + c];
        }
    }
    out
}

/// Elementwise sum; `b` may also be a `1 × cols` row broadcast over `a`.
pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    if a.shape() == b.shape() {
        let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
        return Tensor::from_vec(a.rows, a.cols, data);
    }
    assert!(
        b.rows == 1 && b.cols == a.cols,
        "add shape mismatch: {:?} + {:?}",
        a.shape(),
        b.shape()
    );
    let mut data = Vec::with_capacity(a.data.len());
    for r in 0..a.rows {
        data.extend(a.row_slice(r).iter().zip(&b.data).map(|(x, y)| x + y));
    }
    Tensor::from_vec(a.rows, a.cols, data)
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    a.map(|v| v * c)
}

pub fn tanh(a: &Tensor) -> Tensor {
    a.map(f64::tanh)
}

pub fn relu(a: &Tensor) -> Tensor {
    a.map(|v| v.max(0.0))
}

/// Row-wise log-softmax.
pub fn log_softmax(a: &Tensor) -> Tensor {
    let mut out = Vec::with_capacity(a.data.len());
    for r in 0..a.rows {
        let row = a.row_slice(r);
        let lse = logsumexp(row);
        out.extend(row.iter().map(|&v| v - lse));
    }
    Tensor::from_vec(a.rows, a.cols, out)
}

/// Row-wise log-sum-exp, producing a `rows × 1` column.
pub fn logsumexp_rows(a: &Tensor) -> Tensor {
    let data = (0..a.rows).map(|r| logsumexp(a.row_slice(r))).collect();
    Tensor::from_vec(a.rows, 1, data)
}

/// Selects rows of `a` by index (an embedding lookup when `a` is a table).
pub fn gather_rows(a: &Tensor, indices: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(indices.len() * a.cols);
    for &i in indices {
        assert!(i < a.rows, "gather index {i} out of range for {} rows", a.rows);
        data.extend_from_slice(a.row_slice(i));
    }
    Tensor::from_vec(indices.len(), a.cols, data)
}

pub fn concat_rows(parts: &[&Tensor]) -> Tensor {
    let cols = parts.first().map_or(0, |t| t.cols);
    let mut data = Vec::new();
    let mut rows = 0;
    for p in parts {
        assert_eq!(p.cols, cols, "concat_rows column mismatch");
        data.extend_from_slice(&p.data);
        rows += p.rows;
    }
    Tensor::from_vec(rows, cols, data)
}

/// `log Σ exp(xs)` with max-subtraction. Returns `-∞` for empty or all-`-∞`
/// input.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}
