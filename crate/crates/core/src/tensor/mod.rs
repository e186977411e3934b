//! Minimal dense tensor kernel.
//!
//! Tensors hold contiguous `f64` data in column-major order (the first index
//! varies fastest), for ranks up to 4. Column-major vectorization is load
//! bearing: it is what makes `vec(A X B) == (Bᵀ ⊗ A) vec(X)` hold, and the
//! preconditioner diagnostics in [`crate::analysis`] rely on that identity.

mod rng;
mod svd;

pub use rng::RngStream;

use crate::error::{Error, Result};

/// Maximum supported tensor rank.
pub const MAX_RANK: usize = 4;

/// Dense column-major tensor of `f64` values, rank 0 to 4.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Tensor filled with zeros.
    pub fn zeros(dims: &[usize]) -> Tensor {
        assert!(dims.len() <= MAX_RANK, "rank {} > {}", dims.len(), MAX_RANK);
        let n = dims.iter().product();
        Tensor { dims: dims.to_vec(), data: vec![0.0; n] }
    }

    /// Tensor filled with a constant.
    pub fn filled(dims: &[usize], value: f64) -> Tensor {
        let mut t = Tensor::zeros(dims);
        t.data.fill(value);
        t
    }

    /// Builds a tensor from raw column-major data.
    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if dims.len() > MAX_RANK {
            return Err(Error::Shape(format!("rank {} exceeds {}", dims.len(), MAX_RANK)));
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "dims {:?} expect {} entries, got {}",
                dims,
                expected,
                data.len()
            )));
        }
        Ok(Tensor { dims: dims.to_vec(), data })
    }

    /// `n × n` identity matrix.
    pub fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i + n * i] = 1.0;
        }
        t
    }

    /// Square matrix with the given diagonal.
    pub fn diag(entries: &[f64]) -> Tensor {
        let n = entries.len();
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i + n * i] = entries[i];
        }
        t
    }

    /// Matrix from row-major slices; handy in tests and fixtures.
    pub fn from_rows(rows: &[&[f64]]) -> Tensor {
        let m = rows.len();
        let n = if m == 0 { 0 } else { rows[0].len() };
        let mut t = Tensor::zeros(&[m, n]);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "ragged rows");
            for (j, &v) in row.iter().enumerate() {
                t.data[i + m * j] = v;
            }
        }
        t
    }

    /// Rank-1 tensor from a slice.
    pub fn from_slice(values: &[f64]) -> Tensor {
        Tensor { dims: vec![values.len()], data: values.to_vec() }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
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

    /// Number of rows when viewed as a matrix (rank-1 counts as a column).
    pub fn rows(&self) -> usize {
        match self.rank() {
            0 => 1,
            _ => self.dims[0],
        }
    }

    /// Number of columns when viewed as a matrix.
    pub fn cols(&self) -> usize {
        match self.rank() {
            0 | 1 => 1,
            _ => self.dims[1],
        }
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (k, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.dims[k], "index {i} out of bound {}", self.dims[k]);
            off += i * stride;
            stride *= self.dims[k];
        }
        off
    }

    /// Entry at a full multi-index.
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Matrix entry accessor; also accepts rank-1 tensors with `j == 0`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        match self.rank() {
            1 => {
                debug_assert_eq!(j, 0);
                self.data[i]
            }
            2 => self.data[i + self.dims[0] * j],
            r => panic!("at() expects a matrix, got rank {r}"),
        }
    }

    pub fn set_at(&mut self, i: usize, j: usize, value: f64) {
        match self.rank() {
            1 => {
                debug_assert_eq!(j, 0);
                self.data[i] = value;
            }
            2 => {
                let m = self.dims[0];
                self.data[i + m * j] = value;
            }
            r => panic!("set_at() expects a matrix, got rank {r}"),
        }
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { dims: self.dims.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("zip {:?} vs {:?}", self.dims, other.dims)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { dims: self.dims.clone(), data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        self.map(|v| alpha * v)
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("axpy {:?} vs {:?}", self.dims, other.dims)));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Flat inner product of equally shaped tensors.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!("dot {:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    /// Frobenius norm over all entries.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Matrix transpose (rank-1 becomes a row matrix).
    pub fn transpose(&self) -> Tensor {
        let (m, n) = (self.rows(), self.cols());
        assert!(self.rank() <= 2, "transpose expects a matrix");
        let mut out = Tensor::zeros(&[n, m]);
        for j in 0..n {
            for i in 0..m {
                out.data[j + n * i] = self.at(i, j);
            }
        }
        out
    }

    /// Reshape without copying; the entry count must be preserved.
    pub fn reshape(&self, dims: &[usize]) -> Result<Tensor> {
        let expected: usize = dims.iter().product();
        if expected != self.data.len() {
            return Err(Error::Shape(format!(
                "reshape {:?} -> {:?} changes entry count",
                self.dims, dims
            )));
        }
        Tensor::from_vec(dims, self.data.clone())
    }
}

/// Matrix product `a · b` with a fixed, ascending-`k` summation order.
///
/// Accepts `[m×k]·[k×n]` and the matrix-vector case `[m×k]·[k]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0 {
        return Err(Error::Shape(format!(
            "matmul expects matrices, got ranks {} and {}",
            a.rank(),
            b.rank()
        )));
    }
    let (m, k) = (a.rows(), a.cols());
    let (kb, n) = (b.rows(), b.cols());
    if k != kb {
        return Err(Error::Shape(format!("matmul inner dims {k} vs {kb}")));
    }
    let mut out = if b.rank() == 1 { Tensor::zeros(&[m]) } else { Tensor::zeros(&[m, n]) };
    for j in 0..n {
        for i in 0..m {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.at(i, p) * b.at(p, j);
            }
            out.data[i + m * j] = acc;
        }
    }
    Ok(out)
}

/// Product of a matrix chain, multiplied left to right.
pub fn matmul_chain(factors: &[&Tensor]) -> Result<Tensor> {
    let mut iter = factors.iter();
    let first = iter.next().ok_or_else(|| Error::Input("empty matrix chain".into()))?;
    let mut acc = (*first).clone();
    for f in iter {
        acc = matmul(&acc, f)?;
    }
    Ok(acc)
}

/// Kronecker product of two matrices: block `(i,j)` equals `a[i,j] · b`.
pub fn kron(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Shape(format!(
            "kron expects rank-2 inputs, got {} and {}",
            a.rank(),
            b.rank()
        )));
    }
    let (m, n) = (a.rows(), a.cols());
    let (p, q) = (b.rows(), b.cols());
    let mut out = Tensor::zeros(&[m * p, n * q]);
    let rows = m * p;
    for j in 0..n {
        for i in 0..m {
            let aij = a.at(i, j);
            for jq in 0..q {
                for ip in 0..p {
                    out.data[(i * p + ip) + rows * (j * q + jq)] = aij * b.at(ip, jq);
                }
            }
        }
    }
    Ok(out)
}

/// Column-major vectorization of a matrix into an `mn × 1` column.
pub fn vec_mat(a: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 {
        return Err(Error::Shape(format!("vec expects rank-2 input, got {}", a.rank())));
    }
    Tensor::from_vec(&[a.len(), 1], a.data.to_vec())
}

/// Inverse of [`vec_mat`]: reinterprets a column as an `m × n` matrix.
pub fn unvec(v: &Tensor, m: usize, n: usize) -> Result<Tensor> {
    if v.len() != m * n {
        return Err(Error::Shape(format!("unvec {} entries into {m}×{n}", v.len())));
    }
    Tensor::from_vec(&[m, n], v.data.to_vec())
}

/// Singular values of a matrix, sorted descending. See [`svd::singular_values`].
pub fn svd_values(a: &Tensor) -> Result<Vec<f64>> {
    svd::singular_values(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_passthrough() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let i2 = Tensor::identity(2);
        assert_eq!(matmul(&i2, &a).unwrap(), a);
    }

    #[test]
    fn matmul_diagonals() {
        let a = Tensor::diag(&[2.0, 3.0]);
        let b = Tensor::diag(&[4.0, 5.0]);
        assert_eq!(matmul(&a, &b).unwrap(), Tensor::diag(&[8.0, 15.0]));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        assert!(matches!(matmul(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn kron_identities() {
        let k = kron(&Tensor::identity(2), &Tensor::identity(3)).unwrap();
        assert_eq!(k, Tensor::identity(6));
        let b = Tensor::from_rows(&[&[1.0, -1.0], &[0.5, 2.0]]);
        let s = kron(&Tensor::from_rows(&[&[2.0]]), &b).unwrap();
        assert_eq!(s, b.scale(2.0));
    }

    #[test]
    fn kron_rejects_non_matrix() {
        let v = Tensor::from_slice(&[1.0, 2.0]);
        assert!(matches!(kron(&v, &Tensor::identity(2)), Err(Error::Shape(_))));
    }

    #[test]
    fn vec_is_column_major() {
        let a = Tensor::from_rows(&[&[1.0, 3.0], &[2.0, 4.0]]);
        let v = vec_mat(&a).unwrap();
        assert_eq!(v.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(v.dims(), &[4, 1]);
        assert_eq!(vec_mat(&Tensor::zeros(&[3, 2])).unwrap().norm(), 0.0);
    }

    #[test]
    fn unvec_round_trip() {
        let mut rng = RngStream::new(7);
        let a = rng.gaussian(&[4, 3]);
        let back = unvec(&vec_mat(&a).unwrap(), 4, 3).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn transpose_involution() {
        let mut rng = RngStream::new(3);
        let a = rng.gaussian(&[5, 2]);
        assert_eq!(a.transpose().transpose(), a);
    }
}
