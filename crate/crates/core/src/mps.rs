//! The vectorized row density matrix `|rho⟩` as a matrix product state.
//!
//! Site tensors have axes `(left, phys, right)` with `phys = 2 * ket + bra`,
//! so `|∘∘⟩ = 0`, `|∘•⟩ = 1`, `|•∘⟩ = 2` and `|••⟩ = 3`. The identity covector
//! `⟨1|` picks components 0 and 3 on every site.

use crate::chain;
use crate::mpo::Mpo;
use crate::tensor::{contract, matmul_slices, DenseTensor, TensorError, C64};

pub const DOUBLED_DIM: usize = 4;
pub const EMPTY: usize = 0;
pub const OCCUPIED: usize = 3;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct DoubledStateMps {
    sites: Vec<DenseTensor>,
    center: Option<usize>,
    trace_norm: f64,
}

impl DoubledStateMps {
    pub fn from_sites(sites: Vec<DenseTensor>) -> Self {
        assert!(!sites.is_empty(), "empty state");
        for s in &sites {
            assert_eq!(s.rank(), 3);
            assert_eq!(s.shape()[1], DOUBLED_DIM);
        }
        for w in sites.windows(2) {
            assert_eq!(w[0].shape()[2], w[1].shape()[0], "bond mismatch");
        }
        let mut out = Self {
            sites,
            center: None,
            trace_norm: 1.0,
        };
        out.trace_norm = out.trace().re;
        out
    }

    /// Product of classical occupations: `|••⟩` where `occupied[k]`, `|∘∘⟩` elsewhere.
    pub fn classical(occupied: &[bool]) -> Self {
        let sites = occupied
            .iter()
            .map(|&o| {
                let mut t = DenseTensor::zeros(&[1, DOUBLED_DIM, 1]);
                t.set(&[0, if o { OCCUPIED } else { EMPTY }, 0], ONE);
                t
            })
            .collect();
        let mut s = Self::from_sites(sites);
        s.center = Some(0);
        s
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[DenseTensor] {
        &self.sites
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    /// Trace recorded at the last renormalization.
    pub fn trace_norm(&self) -> f64 {
        self.trace_norm
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        chain::bond_dims(&self.sites)
    }

    pub fn max_bond(&self) -> usize {
        chain::max_bond(&self.sites)
    }

    pub fn is_finite(&self) -> bool {
        self.sites.iter().all(DenseTensor::is_finite)
    }

    /// Left-to-right contraction with one covector (length 4) per site.
    pub fn contract_covectors(&self, cov: impl Fn(usize) -> [C64; 4]) -> C64 {
        let mut env = vec![ONE];
        for (k, s) in self.sites.iter().enumerate() {
            let w = cov(k);
            let (l, _, r) = (s.shape()[0], 4, s.shape()[2]);
            let mut reduced = vec![ZERO; l * r];
            let d = s.data();
            for a in 0..l {
                for p in 0..4 {
                    if w[p] == ZERO {
                        continue;
                    }
                    let base = (a * 4 + p) * r;
                    for b in 0..r {
                        reduced[a * r + b] += w[p] * d[base + b];
                    }
                }
            }
            env = matmul_slices(&env, &reduced, 1, l, r);
        }
        env[0]
    }

    /// `⟨1|rho⟩`.
    pub fn trace(&self) -> C64 {
        self.contract_covectors(|_| identity_covector())
    }

    /// `⟨self|other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &Self) -> C64 {
        assert_eq!(self.len(), other.len());
        // env (bra bond, ket bond)
        let mut env = vec![ONE];
        let mut eb = 1;
        let mut ek = 1;
        for (a, b) in self.sites.iter().zip(&other.sites) {
            let (al, _, ar) = (a.shape()[0], 4, a.shape()[2]);
            let (bl, _, br) = (b.shape()[0], 4, b.shape()[2]);
            debug_assert_eq!((al, bl), (eb, ek));
            // t[x, p, br] = sum_y env[x, y] * b[y, p, br]
            let t = matmul_slices(&env, b.data(), eb, ek, 4 * br);
            // out[ar, br] = sum_{x,p} conj(a[x, p, ar]) * t[x, p, br]
            let ac: Vec<C64> = a.data().iter().map(|z| z.conj()).collect();
            let at = DenseTensor::new(vec![al * 4, ar], ac).unwrap().permute(&[1, 0]).unwrap();
            env = matmul_slices(at.data(), &t, ar, al * 4, br);
            eb = ar;
            ek = br;
        }
        env[0]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.inner(self).re
    }

    /// Copy keeping only the `ket = bra` components on every site.
    pub fn diagonal_projection(&self) -> Self {
        let sites = self
            .sites
            .iter()
            .map(|s| {
                let mut t = s.clone();
                let (l, r) = (s.shape()[0], s.shape()[2]);
                for a in 0..l {
                    for p in [1, 2] {
                        for b in 0..r {
                            t.set(&[a, p, b], ZERO);
                        }
                    }
                }
                t
            })
            .collect();
        Self {
            sites,
            center: None,
            trace_norm: self.trace_norm,
        }
    }

    pub fn scale(&mut self, factor: C64) {
        let k = self.center.unwrap_or(self.sites.len() - 1);
        self.sites[k].scale(factor);
    }

    /// One empty doubled site added at each end.
    pub fn expand_boundaries(&self) -> Self {
        let mut empty = DenseTensor::zeros(&[1, DOUBLED_DIM, 1]);
        empty.set(&[0, EMPTY, 0], ONE);
        let mut sites = Vec::with_capacity(self.sites.len() + 2);
        sites.push(empty.clone());
        sites.extend(self.sites.iter().cloned());
        sites.push(empty);
        Self {
            sites,
            center: self.center.map(|c| c + 1),
            trace_norm: self.trace_norm,
        }
    }

    /// Contracts the first and last site with `⟨1|` and merges them into
    /// their neighbours.
    pub fn trace_out_boundaries(self) -> Result<Self, TensorError> {
        let n = self.sites.len();
        assert!(n >= 3, "need two boundary sites and at least one row site");
        let cov = identity_covector();
        let squash = |s: &DenseTensor| -> DenseTensor {
            let (l, r) = (s.shape()[0], s.shape()[2]);
            DenseTensor::from_fn(&[l, r], |ix| {
                (0..4).map(|p| cov[p] * s.get(&[ix[0], p, ix[1]])).sum()
            })
        };
        let left = squash(&self.sites[0]);
        let right = squash(&self.sites[n - 1]);
        let mut sites: Vec<DenseTensor> = self.sites[1..n - 1].to_vec();
        sites[0] = contract(&left, &sites[0], &[(1, 0)])?;
        let last = sites.len() - 1;
        sites[last] = contract(&sites[last], &right, &[(2, 0)])?;
        Ok(Self {
            sites,
            center: None,
            trace_norm: self.trace_norm,
        })
    }

    /// Exact `mpo |self⟩`; bonds multiply.
    pub fn apply_mpo(&self, mpo: &Mpo) -> Result<Self, TensorError> {
        assert_eq!(mpo.len(), self.len(), "operator and state sizes differ");
        let mut sites = Vec::with_capacity(self.len());
        for (w, a) in mpo.sites().iter().zip(&self.sites) {
            // w (wl, o, i, wr), a (al, i, ar) -> (wl, o, wr, al, ar)
            let t = contract(w, a, &[(2, 1)])?;
            let t = t.permute(&[0, 3, 1, 2, 4])?;
            let s = t.shape().to_vec();
            sites.push(t.reshape(&[s[0] * s[1], s[2], s[3] * s[4]])?);
        }
        Ok(Self {
            sites,
            center: None,
            trace_norm: self.trace_norm,
        })
    }

    pub(crate) fn sites_mut(&mut self) -> &mut Vec<DenseTensor> {
        &mut self.sites
    }

    pub(crate) fn set_center(&mut self, c: Option<usize>) {
        self.center = c;
    }

    pub(crate) fn set_trace_norm(&mut self, t: f64) {
        self.trace_norm = t;
    }

    /// Full `|rho⟩` as a vector of `4^L` entries, site 0 most significant.
    pub fn to_vector(&self) -> DenseTensor {
        let mut acc = self.sites[0].clone();
        for s in &self.sites[1..] {
            let r = acc.rank();
            acc = contract(&acc, s, &[(r - 1, 0)]).unwrap();
        }
        let n = acc.len();
        acc.reshape(&[n]).unwrap()
    }

    /// `rho` as a `2^L x 2^L` matrix.
    pub fn to_dense_matrix(&self) -> DenseTensor {
        let n = self.len();
        let v = self.to_vector().reshape(&vec![2; 2 * n]).unwrap();
        let mut perm: Vec<usize> = (0..n).map(|k| 2 * k).collect();
        perm.extend((0..n).map(|k| 2 * k + 1));
        let dim = 1usize << n;
        v.permute(&perm).unwrap().reshape(&[dim, dim]).unwrap()
    }

    /// Inverse of [`DoubledStateMps::to_dense_matrix`], as a single-bond chain
    /// split exactly by SVD.
    pub fn from_dense_matrix(rho: &DenseTensor) -> Result<Self, TensorError> {
        let (dim, _) = rho.matrix_dims()?;
        let n = dim.trailing_zeros() as usize;
        assert_eq!(1usize << n, dim, "dimension must be a power of two");
        let t = rho.clone().reshape(&vec![2; 2 * n])?;
        let perm: Vec<usize> = (0..n).flat_map(|k| [k, n + k]).collect();
        let v = t.permute(&perm)?;
        let mut sites = Vec::with_capacity(n);
        let mut rest = v;
        let mut left = 1;
        for _ in 0..n - 1 {
            let remaining = rest.len() / (left * 4);
            let f = crate::tensor::svd_truncate(&rest.reshape(&[left * 4, remaining])?, usize::MAX, 0.0)?;
            let bond = f.rank();
            sites.push(f.left.clone().reshape(&[left, 4, bond])?);
            rest = f.weighted_right();
            left = bond;
        }
        sites.push(rest.reshape(&[left, 4, 1])?);
        Ok(Self::from_sites(sites))
    }
}

pub fn identity_covector() -> [C64; 4] {
    [ONE, ZERO, ZERO, ONE]
}

pub fn occupation_covector() -> [C64; 4] {
    [ZERO, ZERO, ZERO, ONE]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_state_trace_and_purity() {
        let s = DoubledStateMps::classical(&[false, true, false]);
        assert_eq!(s.trace(), ONE);
        assert_eq!(s.norm_sqr(), 1.0);
        let rho = s.to_dense_matrix();
        assert_eq!(rho.get(&[2, 2]), ONE);
        assert_eq!(rho.norm_sqr(), 1.0);
    }

    #[test]
    fn dense_round_trip() {
        let rho = DenseTensor::from_fn(&[8, 8], |ix| {
            C64::new((ix[0] + 2 * ix[1]) as f64 * 0.1, ix[0] as f64 - ix[1] as f64)
        });
        let s = DoubledStateMps::from_dense_matrix(&rho).unwrap();
        assert!(s.to_dense_matrix().max_abs_diff(&rho) < 1e-12);
        let tr: C64 = (0..8).map(|i| rho.get(&[i, i])).sum();
        assert!((s.trace() - tr).norm() < 1e-12);
        assert!((s.norm_sqr() - rho.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn boundaries_expand_and_trace() {
        let s = DoubledStateMps::classical(&[true, false]);
        let e = s.expand_boundaries();
        assert_eq!(e.len(), 4);
        let back = e.trace_out_boundaries().unwrap();
        assert!(back.to_vector().max_abs_diff(&s.to_vector()) < 1e-15);
    }
}
