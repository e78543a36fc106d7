//! Dense complex tensors with a fixed row-major layout.
//!
//! Everything above this module (MPS, MPO, dense oracles) relies on the same
//! linearization: the last axis varies fastest. Reshapes are therefore free and
//! a reshape followed by [`DenseTensor::permute`] is the only way axes move.

use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Singular values below this fraction of the largest one are always dropped.
pub const NOISE_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} holds {expected} elements, got {actual}")]
    SizeMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("zero-sized axis in shape {0:?}")]
    ZeroAxis(Vec<usize>),
    #[error("contracted axes {a_axis} (dim {a_dim}) and {b_axis} (dim {b_dim}) differ")]
    DimMismatch {
        a_axis: usize,
        a_dim: usize,
        b_axis: usize,
        b_dim: usize,
    },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("invalid permutation {0:?}")]
    BadPermutation(Vec<usize>),
    #[error("expected a matrix, got rank {0}")]
    NotAMatrix(usize),
    #[error("non-finite entry in factorization input")]
    NonFinite,
    #[error("singular value decomposition did not converge")]
    NoConvergence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

fn check_shape(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.iter().any(|&d| d == 0) {
        return Err(TensorError::ZeroAxis(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self, TensorError> {
        let expected = check_shape(&shape)?;
        if expected != data.len() {
            return Err(TensorError::SizeMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    /// Panics on a zero-sized axis; use [`DenseTensor::new`] for fallible input.
    pub fn zeros(shape: &[usize]) -> Self {
        let n = check_shape(shape).expect("zero-sized axis");
        Self {
            shape: shape.to_vec(),
            data: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        t
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| {
            if i[0] == i[1] {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_real(shape: &[usize], data: &[f64]) -> Result<Self, TensorError> {
        Self::new(
            shape.to_vec(),
            data.iter().map(|&x| C64::new(x, 0.0)).collect(),
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: C64) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
        let expected = check_shape(shape)?;
        if expected != self.data.len() {
            return Err(TensorError::SizeMismatch {
                shape: shape.to_vec(),
                expected,
                actual: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Reorders axes so that output axis `k` is input axis `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self, TensorError> {
        let r = self.rank();
        let mut seen = vec![false; r];
        if perm.len() != r || perm.iter().any(|&p| p >= r || std::mem::replace(&mut seen[p], true)) {
            return Err(TensorError::BadPermutation(perm.to_vec()));
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let old_strides = strides(&self.shape);
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let mut out = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; r];
        let mut src = 0usize;
        for _ in 0..self.data.len() {
            out.push(self.data[src]);
            for k in (0..r).rev() {
                idx[k] += 1;
                src += src_strides[k];
                if idx[k] < new_shape[k] {
                    break;
                }
                src -= src_strides[k] * new_shape[k];
                idx[k] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data: out,
        })
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&mut self, a: C64) {
        self.data.iter_mut().for_each(|z| *z *= a);
    }

    pub fn scaled(mut self, a: C64) -> Self {
        self.scale(a);
        self
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Max-norm distance; panics if the shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn matrix_dims(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(TensorError::NotAMatrix(s.len())),
        }
    }

    /// Conjugate transpose of a matrix.
    pub fn adjoint(&self) -> Result<Self, TensorError> {
        self.matrix_dims()?;
        Ok(self.permute(&[1, 0])?.conj())
    }

    pub(crate) fn as_mat(&self, rows: usize, cols: usize) -> MatRef<'_, C64> {
        MatRef::from_row_major_slice(&self.data, rows, cols)
    }
}

/// Row-major product of an `m x k` and a `k x n` slice.
pub(crate) fn matmul_slices(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m * n];
    let lhs = MatRef::from_row_major_slice(a, m, k);
    let rhs = MatRef::from_row_major_slice(b, k, n);
    let dst = MatMut::from_row_major_slice_mut(&mut out, m, n);
    matmul(dst, Accum::Replace, lhs, rhs, C64::new(1.0, 0.0), Par::Seq);
    out
}

/// Matrix product of two rank-2 tensors.
pub fn matmul_tensors(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor, TensorError> {
    contract(a, b, &[(1, 0)])
}

/// Sums over each `(axis_of_a, axis_of_b)` pair. The result carries the free
/// axes of `a` in order, then the free axes of `b`.
pub fn contract(
    a: &DenseTensor,
    b: &DenseTensor,
    axes: &[(usize, usize)],
) -> Result<DenseTensor, TensorError> {
    for &(ia, ib) in axes {
        if ia >= a.rank() {
            return Err(TensorError::AxisOutOfRange {
                axis: ia,
                rank: a.rank(),
            });
        }
        if ib >= b.rank() {
            return Err(TensorError::AxisOutOfRange {
                axis: ib,
                rank: b.rank(),
            });
        }
        if a.shape[ia] != b.shape[ib] {
            return Err(TensorError::DimMismatch {
                a_axis: ia,
                a_dim: a.shape[ia],
                b_axis: ib,
                b_dim: b.shape[ib],
            });
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|k| !axes.iter().any(|p| p.0 == *k)).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|k| !axes.iter().any(|p| p.1 == *k)).collect();
    let perm_a: Vec<usize> = free_a.iter().copied().chain(axes.iter().map(|p| p.0)).collect();
    let perm_b: Vec<usize> = axes.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();
    let m: usize = free_a.iter().map(|&k| a.shape[k]).product();
    let n: usize = free_b.iter().map(|&k| b.shape[k]).product();
    let k: usize = axes.iter().map(|p| a.shape[p.0]).product();
    let ap = a.permute(&perm_a)?;
    let bp = b.permute(&perm_b)?;
    let data = matmul_slices(&ap.data, &bp.data, m, k, n);
    let mut shape: Vec<usize> = free_a.iter().map(|&k| a.shape[k]).collect();
    shape.extend(free_b.iter().map(|&k| b.shape[k]));
    if shape.is_empty() {
        shape.push(1);
    }
    DenseTensor::new(shape, data)
}

/// Truncated singular value decomposition `m = left * diag(s) * right`.
#[derive(Clone, Debug)]
pub struct FactorResult {
    pub left: DenseTensor,
    pub singular_values: Vec<f64>,
    pub right: DenseTensor,
    /// Dropped squared singular values over the total squared mass.
    pub discarded_weight: f64,
}

impl FactorResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// `diag(s) * right`, for absorbing the weights into the right factor.
    pub fn weighted_right(&self) -> DenseTensor {
        let (k, n) = self.right.matrix_dims().expect("matrix");
        let mut r = self.right.clone();
        for i in 0..k {
            let s = self.singular_values[i];
            r.data[i * n..(i + 1) * n].iter_mut().for_each(|z| *z *= s);
        }
        r
    }

    /// `left * diag(s)`.
    pub fn weighted_left(&self) -> DenseTensor {
        let (m, k) = self.left.matrix_dims().expect("matrix");
        let mut l = self.left.clone();
        for i in 0..m {
            for j in 0..k {
                l.data[i * k + j] *= self.singular_values[j];
            }
        }
        l
    }

    pub fn reconstruct(&self) -> DenseTensor {
        matmul_tensors(&self.weighted_left(), &self.right).expect("consistent factors")
    }
}

/// Keeps at most `chi_max` singular values, drops values whose squared weight
/// relative to the total falls below `cutoff`, and always drops values below
/// [`NOISE_FLOOR`] times the largest one.
pub fn svd_truncate(
    m: &DenseTensor,
    chi_max: usize,
    cutoff: f64,
) -> Result<FactorResult, TensorError> {
    let (rows, cols) = m.matrix_dims()?;
    if !m.is_finite() {
        return Err(TensorError::NonFinite);
    }
    let svd = m
        .as_mat(rows, cols)
        .thin_svd()
        .map_err(|_| TensorError::NoConvergence)?;
    let s: Vec<f64> = (0..rows.min(cols)).map(|i| svd.S()[i].re).collect();
    let total: f64 = s.iter().map(|x| x * x).sum();
    let smax = s.first().copied().unwrap_or(0.0);

    let mut keep = 0;
    for &x in s.iter().take(chi_max.max(1)) {
        if x <= NOISE_FLOOR * smax || (total > 0.0 && x * x / total < cutoff) {
            break;
        }
        keep += 1;
    }
    // an all-zero input still needs a rank-1 factorization to keep bonds valid
    let keep = keep.max(1);
    // summed directly: total - kept cancels when the tail is below one ulp
    let dropped: f64 = s[keep..].iter().map(|x| x * x).sum();
    let discarded_weight = if total > 0.0 {
        (dropped / total).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let u = svd.U();
    let v = svd.V();
    let left = DenseTensor::from_fn(&[rows, keep], |i| u[(i[0], i[1])]);
    let right = DenseTensor::from_fn(&[keep, cols], |i| v[(i[1], i[0])].conj());
    Ok(FactorResult {
        left,
        singular_values: s[..keep].to_vec(),
        right,
        discarded_weight,
    })
}

/// Thin QR: `m = q * r` with orthonormal columns in `q`.
pub fn qr(m: &DenseTensor) -> Result<(DenseTensor, DenseTensor), TensorError> {
    let (rows, cols) = m.matrix_dims()?;
    if !m.is_finite() {
        return Err(TensorError::NonFinite);
    }
    let f = m.as_mat(rows, cols).qr();
    let q = f.compute_thin_Q();
    let r = f.thin_R();
    let k = rows.min(cols);
    Ok((
        DenseTensor::from_fn(&[rows, k], |i| q[(i[0], i[1])]),
        DenseTensor::from_fn(&[k, cols], |i| r[(i[0], i[1])]),
    ))
}

/// Thin LQ: `m = l * q` with orthonormal rows in `q`.
pub fn lq(m: &DenseTensor) -> Result<(DenseTensor, DenseTensor), TensorError> {
    let (q, r) = qr(&m.adjoint()?)?;
    Ok((r.adjoint()?, q.adjoint()?))
}
