//! Canonicalization and truncation shared by MPS and MPO chains.
//!
//! Every site tensor carries its left bond on axis 0 and its right bond on the
//! last axis; whatever sits in between is treated as one fused physical index.

use crate::tensor::{contract, lq, qr, svd_truncate, DenseTensor, TensorError};

fn split(t: &DenseTensor) -> (usize, usize, usize) {
    let s = t.shape();
    let left = s[0];
    let right = s[s.len() - 1];
    (left, t.len() / (left * right), right)
}

fn with_bonds(t: &DenseTensor, left: usize, right: usize) -> Vec<usize> {
    let s = t.shape();
    let mut shape = Vec::with_capacity(s.len());
    shape.push(left);
    shape.extend_from_slice(&s[1..s.len() - 1]);
    shape.push(right);
    shape
}

/// Leaves sites `1..n` right-isometric, the norm on site 0.
pub fn right_canonicalize(sites: &mut [DenseTensor]) -> Result<(), TensorError> {
    for k in (1..sites.len()).rev() {
        let (l, mid, r) = split(&sites[k]);
        let shape = with_bonds(&sites[k], 0, r);
        let m = sites[k].clone().reshape(&[l, mid * r])?;
        let (lower, q) = lq(&m)?;
        let bond = q.shape()[0];
        let mut shape = shape;
        shape[0] = bond;
        sites[k] = q.reshape(&shape)?;
        let rank = sites[k - 1].rank();
        sites[k - 1] = contract(&sites[k - 1], &lower, &[(rank - 1, 0)])?;
    }
    Ok(())
}

/// Leaves sites `0..n-1` left-isometric, the norm on the last site.
pub fn left_canonicalize(sites: &mut [DenseTensor]) -> Result<(), TensorError> {
    let n = sites.len();
    for k in 0..n.saturating_sub(1) {
        let (l, mid, r) = split(&sites[k]);
        let m = sites[k].clone().reshape(&[l * mid, r])?;
        let (q, upper) = qr(&m)?;
        let bond = q.shape()[1];
        let shape = with_bonds(&sites[k], l, bond);
        sites[k] = q.reshape(&shape)?;
        sites[k + 1] = contract(&upper, &sites[k + 1], &[(1, 0)])?;
    }
    Ok(())
}

/// Left-to-right SVD sweep; expects the norm on site 0 with the rest
/// right-isometric. Returns the summed discarded weight over all bonds.
pub fn truncate_left_to_right(
    sites: &mut [DenseTensor],
    chi: usize,
    cutoff: f64,
) -> Result<f64, TensorError> {
    let mut discarded = 0.0;
    for k in 0..sites.len().saturating_sub(1) {
        let (l, mid, r) = split(&sites[k]);
        let m = sites[k].clone().reshape(&[l * mid, r])?;
        let f = svd_truncate(&m, chi, cutoff)?;
        discarded += f.discarded_weight;
        let bond = f.rank();
        let shape = with_bonds(&sites[k], l, bond);
        let carry = f.weighted_right();
        sites[k] = f.left.reshape(&shape)?;
        sites[k + 1] = contract(&carry, &sites[k + 1], &[(1, 0)])?;
    }
    Ok(discarded)
}

/// Right-to-left SVD sweep; expects the norm on the last site with the rest
/// left-isometric.
pub fn truncate_right_to_left(
    sites: &mut [DenseTensor],
    chi: usize,
    cutoff: f64,
) -> Result<f64, TensorError> {
    let mut discarded = 0.0;
    for k in (1..sites.len()).rev() {
        let (l, mid, r) = split(&sites[k]);
        let m = sites[k].clone().reshape(&[l, mid * r])?;
        let f = svd_truncate(&m, chi, cutoff)?;
        discarded += f.discarded_weight;
        let bond = f.rank();
        let shape = with_bonds(&sites[k], bond, r);
        let carry = f.weighted_left();
        sites[k] = f.right.reshape(&shape)?;
        let rank = sites[k - 1].rank();
        sites[k - 1] = contract(&sites[k - 1], &carry, &[(rank - 1, 0)])?;
    }
    Ok(discarded)
}

/// Canonicalize right-to-left, then truncate left-to-right. The norm ends on
/// the last site.
pub fn compress(sites: &mut [DenseTensor], chi: usize, cutoff: f64) -> Result<f64, TensorError> {
    right_canonicalize(sites)?;
    truncate_left_to_right(sites, chi, cutoff)
}

pub fn bond_dims(sites: &[DenseTensor]) -> Vec<usize> {
    sites
        .iter()
        .take(sites.len().saturating_sub(1))
        .map(|t| t.shape()[t.rank() - 1])
        .collect()
}

pub fn max_bond(sites: &[DenseTensor]) -> usize {
    bond_dims(sites).into_iter().max().unwrap_or(1)
}

/// Bond-local rank reduction. Each bond is re-split from its two sites alone
/// and singular values below the noise floor of that bond are dropped. No
/// weight is moved along the chain, so operators whose Frobenius norm is
/// exponential in the length keep every component that acts at order one.
/// Bond `k` joins sites `k` and `k + 1`; only bonds in `range` are touched.
pub fn reduce_bonds_locally(
    sites: &mut [DenseTensor],
    range: std::ops::Range<usize>,
    sweeps: usize,
) -> Result<(), TensorError> {
    let end = range.end.min(sites.len().saturating_sub(1));
    for s in 0..sweeps {
        let bonds: Vec<usize> = if s % 2 == 0 {
            (range.start..end).collect()
        } else {
            (range.start..end).rev().collect()
        };
        for k in bonds {
            let (la, ma, b) = split(&sites[k]);
            let (_, mb, rb) = split(&sites[k + 1]);
            let (qa, ra) = qr(&sites[k].clone().reshape(&[la * ma, b])?)?;
            let (lb, qb) = lq(&sites[k + 1].clone().reshape(&[b, mb * rb])?)?;
            let core = crate::tensor::matmul_tensors(&ra, &lb)?;
            let f = svd_truncate(&core, usize::MAX, 0.0)?;
            let rank = f.rank();
            let root: Vec<f64> = f.singular_values.iter().map(|x| x.sqrt()).collect();
            let u = DenseTensor::from_fn(&[f.left.shape()[0], rank], |ix| f.left.get(ix) * root[ix[1]]);
            let v = DenseTensor::from_fn(&[rank, f.right.shape()[1]], |ix| f.right.get(ix) * root[ix[0]]);
            let left = crate::tensor::matmul_tensors(&qa, &u)?;
            let right = crate::tensor::matmul_tensors(&v, &qb)?;
            let shape_a = with_bonds(&sites[k], la, rank);
            let shape_b = with_bonds(&sites[k + 1], rank, rb);
            sites[k] = left.reshape(&shape_a)?;
            sites[k + 1] = right.reshape(&shape_b)?;
        }
    }
    Ok(())
}
