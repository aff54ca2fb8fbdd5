//! Dense row-major matrices and the sparse CSR form used for adjacency.
//!
//! Every tensor in this crate is two-dimensional; scalars are `1x1` and
//! vectors are `1xD` or `Nx1`. Storage is `f32` in normal builds, with the
//! whole engine generic over [`Real`] so gradient checks can run in `f64`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Scalar type the engine is generic over.
pub trait Real: num_traits::Float + num_traits::NumAssign + fmt::Debug + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Shape or domain error raised by tensor and tape operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TensorError {
    ShapeMismatch { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    NotScalar { rows: usize, cols: usize },
    TapeConsumed,
    IndexOutOfRange { index: usize, len: usize },
    EmptyInput { op: &'static str },
    InvalidArgument { op: &'static str, message: String },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {}x{} vs {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)
            }
            TensorError::NotScalar { rows, cols } => {
                write!(f, "expected scalar (1x1) tensor, got {rows}x{cols}")
            }
            TensorError::TapeConsumed => write!(f, "backward() called on an already-consumed tape"),
            TensorError::IndexOutOfRange { index, len } => {
                write!(f, "index {index} out of range (len {len})")
            }
            TensorError::EmptyInput { op } => write!(f, "{op}: empty input"),
            TensorError::InvalidArgument { op, message } => write!(f, "{op}: {message}"),
        }
    }
}

impl core::error::Error for TensorError {}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn full(rows: usize, cols: usize, value: F) -> Self {
        Tensor { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn scalar(value: F) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![value] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<F>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length must equal rows*cols");
        Tensor { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[F]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

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

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: F) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Scalar value of a 1x1 tensor.
    pub fn item(&self) -> F {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn transpose(&self) -> Tensor<F> {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Gather rows by index into a new tensor.
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor<F> {
        let mut out = Tensor::zeros(indices.len(), self.cols);
        for (i, &idx) in indices.iter().enumerate() {
            out.row_mut(i).copy_from_slice(self.row(idx));
        }
        out
    }

    /// Convert element type (used to run the same model in f64 check builds).
    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| G::from_f64(x.to_f64())).collect(),
        }
    }
}

/// `C = A * B`
pub fn matmul<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert_eq!(a.cols, b.rows, "matmul inner dimensions");
    let mut out = Tensor::zeros(a.rows, b.cols);
    let n = b.cols;
    for i in 0..a.rows {
        let a_row = a.row(i);
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == F::zero() {
                continue;
            }
            let b_row = b.row(k);
            for j in 0..n {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    out
}

/// `C = A * B^T`
pub fn matmul_nt<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimensions");
    let mut out = Tensor::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            let b_row = b.row(j);
            let mut acc = F::zero();
            for k in 0..a.cols {
                acc += a_row[k] * b_row[k];
            }
            out.data[i * b.rows + j] = acc;
        }
    }
    out
}

/// `C = A^T * B`
pub fn matmul_tn<F: Real>(a: &Tensor<F>, b: &Tensor<F>) -> Tensor<F> {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dimensions");
    let mut out = Tensor::zeros(a.cols, b.cols);
    let n = b.cols;
    for k in 0..a.rows {
        let a_row = a.row(k);
        let b_row = b.row(k);
        for (i, &aki) in a_row.iter().enumerate() {
            if aki == F::zero() {
                continue;
            }
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                out_row[j] += aki * b_row[j];
            }
        }
    }
    out
}

/// Sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<F> {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<F>,
}

impl<F: Real> CsrMatrix<F> {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, F)]) -> Self {
        let mut counts = vec![0usize; rows];
        for &(r, _, _) in triplets {
            counts[r] += 1;
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        indptr.push(0);
        for r in 0..rows {
            indptr.push(indptr[r] + counts[r]);
        }
        let nnz = indptr[rows];
        let mut indices = vec![0usize; nnz];
        let mut values = vec![F::zero(); nnz];
        let mut cursor = indptr.clone();
        for &(r, c, v) in triplets {
            let pos = cursor[r];
            indices[pos] = c;
            values[pos] = v;
            cursor[r] += 1;
        }
        // sort each row by column and merge duplicates
        let mut out_indices = Vec::with_capacity(nnz);
        let mut out_values = Vec::with_capacity(nnz);
        let mut out_indptr = Vec::with_capacity(rows + 1);
        out_indptr.push(0);
        let mut entry: Vec<(usize, F)> = Vec::new();
        for r in 0..rows {
            entry.clear();
            for k in indptr[r]..indptr[r + 1] {
                entry.push((indices[k], values[k]));
            }
            entry.sort_unstable_by_key(|e| e.0);
            let mut i = 0;
            while i < entry.len() {
                let col = entry[i].0;
                let mut v = entry[i].1;
                let mut j = i + 1;
                while j < entry.len() && entry[j].0 == col {
                    v += entry[j].1;
                    j += 1;
                }
                out_indices.push(col);
                out_values.push(v);
                i = j;
            }
            out_indptr.push(out_indices.len());
        }
        CsrMatrix { rows, cols, indptr: out_indptr, indices: out_indices, values: out_values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, F)> + '_ {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        self.indices[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    /// Dense product `self * d`.
    pub fn matmul_dense(&self, d: &Tensor<F>) -> Tensor<F> {
        assert_eq!(self.cols, d.rows(), "spmm inner dimensions");
        let n = d.cols();
        let mut out = Tensor::zeros(self.rows, n);
        for r in 0..self.rows {
            let out_row = &mut out.data_mut()[r * n..(r + 1) * n];
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let w = self.values[k];
                let d_row = d.row(c);
                for j in 0..n {
                    out_row[j] += w * d_row[j];
                }
            }
        }
        out
    }

    /// Dense product with the transpose: `self^T * d`.
    pub fn transpose_matmul_dense(&self, d: &Tensor<F>) -> Tensor<F> {
        assert_eq!(self.rows, d.rows(), "spmm_t inner dimensions");
        let n = d.cols();
        let mut out = Tensor::zeros(self.cols, n);
        for r in 0..self.rows {
            let d_row = d.row(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let w = self.values[k];
                let out_row = &mut out.data_mut()[c * n..(c + 1) * n];
                for j in 0..n {
                    out_row[j] += w * d_row[j];
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Tensor<F> {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                out.set(r, c, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matmul_shapes_and_values() {
        let a = Tensor::from_vec(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::from_vec(3, 4, vec![1.0; 12]);
        let c = matmul(&a, &b);
        assert_eq!(c.shape(), (2, 4));
        assert_eq!(c.get(0, 0), 6.0);
        assert_eq!(c.get(1, 3), 15.0);
    }

    #[test]
    fn matmul_transpose_variants_agree() {
        let a = Tensor::from_vec(2, 3, vec![1.0f64, -2.0, 3.0, 0.5, 5.0, -6.0]);
        let b = Tensor::from_vec(4, 3, vec![0.1, 2.0, -1.0, 3.0, 0.0, 1.0, 1.0, 1.0, 1.0, -2.0, 0.5, 0.25]);
        let via_nt = matmul_nt(&a, &b);
        let via_plain = matmul(&a, &b.transpose());
        assert_eq!(via_nt, via_plain);
        let via_tn = matmul_tn(&a, &a);
        let via_plain2 = matmul(&a.transpose(), &a);
        assert_eq!(via_tn, via_plain2);
    }

    #[test]
    fn csr_from_triplets_merges_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0f64), (0, 1, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.to_dense().get(0, 1), 3.0);
        assert_eq!(m.to_dense().get(1, 0), 4.0);
    }

    #[test]
    fn csr_dense_products() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 0, 2.0f64), (0, 2, 1.0), (1, 1, -1.0)]);
        let d = Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let p = m.matmul_dense(&d);
        assert_eq!(p, matmul(&m.to_dense(), &d));
        let q = m.transpose_matmul_dense(&Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]));
        assert_eq!(q, m.to_dense().transpose());
    }
}
