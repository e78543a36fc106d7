//! Matrix product operators: the global update of one row and the
//! doubled-space step map built from it.
//!
//! A site of the global update pairs the control-row site and the target-row
//! site at the same column, with physical index `2 * control + target`. The
//! chain carries one extra boundary column on each side, so a row of `L`
//! sites is described by `L + 2` MPO sites. The boundary columns are never
//! targeted and their controls are held empty.
//!
//! In the doubled space a site index is `2 * ket + bra`.

use crate::chain;
use crate::gate::GateTensor;
use crate::tensor::{contract, svd_truncate, DenseTensor, TensorError, C64};
use serde::{Deserialize, Serialize};

/// Site tensors with axes `(left, out, in, right)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mpo {
    sites: Vec<DenseTensor>,
}

impl Mpo {
    pub fn new(sites: Vec<DenseTensor>) -> Self {
        assert!(!sites.is_empty(), "empty MPO");
        for w in sites.windows(2) {
            assert_eq!(w[0].shape()[3], w[1].shape()[0], "bond mismatch");
        }
        assert_eq!(sites[0].shape()[0], 1);
        assert_eq!(sites[sites.len() - 1].shape()[3], 1);
        Self { sites }
    }

    pub fn identity(n: usize, d: usize) -> Self {
        let id = DenseTensor::identity(d).reshape(&[1, d, d, 1]).unwrap();
        Self {
            sites: vec![id; n],
        }
    }

    pub fn sites(&self) -> &[DenseTensor] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, k: usize) -> &DenseTensor {
        &self.sites[k]
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        chain::bond_dims(&self.sites)
    }

    pub fn max_bond(&self) -> usize {
        chain::max_bond(&self.sites)
    }

    /// Splits a dense operator on `n` sites of dimension `d` into an MPO.
    /// Row/column indices treat site 0 as most significant.
    pub fn from_dense(op: &DenseTensor, n: usize, d: usize, cutoff: f64) -> Result<Self, TensorError> {
        let dim = d.pow(n as u32);
        assert_eq!(op.shape(), &[dim, dim]);
        let t = op.clone().reshape(&vec![d; 2 * n])?;
        // interleave to (o0, i0, o1, i1, ...)
        let perm: Vec<usize> = (0..n).flat_map(|k| [k, n + k]).collect();
        let mut rest = t.permute(&perm)?;
        let mut sites = Vec::with_capacity(n);
        let mut left = 1;
        for _ in 0..n - 1 {
            let remaining = rest.len() / (left * d * d);
            let m = rest.reshape(&[left * d * d, remaining])?;
            let f = svd_truncate(&m, usize::MAX, cutoff)?;
            let bond = f.rank();
            sites.push(f.left.clone().reshape(&[left, d, d, bond])?);
            rest = f.weighted_right();
            left = bond;
        }
        sites.push(rest.reshape(&[left, d, d, 1])?);
        Ok(Self { sites })
    }

    /// Dense matrix, site 0 most significant.
    pub fn to_dense(&self) -> DenseTensor {
        let n = self.sites.len();
        let mut acc = self.sites[0].clone();
        for k in 1..n {
            let r = acc.rank();
            acc = contract(&acc, &self.sites[k], &[(r - 1, 0)]).unwrap();
        }
        // acc axes: (1, o0, i0, o1, i1, ..., 1); the unit bonds vanish in the reshape
        let d_out: Vec<usize> = self.sites.iter().map(|s| s.shape()[1]).collect();
        let d_in: Vec<usize> = self.sites.iter().map(|s| s.shape()[2]).collect();
        let mut perm: Vec<usize> = (0..n).map(|k| 2 * k).collect();
        perm.extend((0..n).map(|k| 2 * k + 1));
        let mut shape: Vec<usize> = Vec::new();
        for k in 0..n {
            shape.push(d_out[k]);
            shape.push(d_in[k]);
        }
        let t = acc.reshape(&shape).unwrap().permute(&perm).unwrap();
        let rows: usize = d_out.iter().product();
        let cols: usize = d_in.iter().product();
        t.reshape(&[rows, cols]).unwrap()
    }

    /// `self <- local * self` where `local` covers sites `start..start + local.len()`.
    pub fn left_multiply_window(&mut self, start: usize, local: &Mpo) -> Result<(), TensorError> {
        for (j, w) in local.sites.iter().enumerate() {
            let m = &self.sites[start + j];
            // w: (a, o, x, b), m: (c, x, i, e) -> (a, o, b, c, i, e)
            let t = contract(w, m, &[(2, 1)])?;
            let t = t.permute(&[0, 3, 1, 4, 2, 5])?;
            let s = t.shape().to_vec();
            self.sites[start + j] = t.reshape(&[s[0] * s[1], s[2], s[3], s[4] * s[5]])?;
        }
        Ok(())
    }

    /// Exact rank reduction with no bond cap, bond by bond.
    pub fn reduce_bonds(&mut self) -> Result<(), TensorError> {
        chain::reduce_bonds_locally(&mut self.sites, 0..usize::MAX, 2)
    }

    /// [`Mpo::reduce_bonds`] restricted to bonds `range`.
    pub fn reduce_bonds_in(&mut self, range: std::ops::Range<usize>) -> Result<(), TensorError> {
        chain::reduce_bonds_locally(&mut self.sites, range, 2)
    }
}

/// The gate on three paired sites `(k-1, k, k+1)`, identity on the
/// neighbouring target-row sites, as a three-site MPO.
pub fn gate_window_mpo(gate: &GateTensor) -> Mpo {
    let g = gate.matrix();
    let mut op = DenseTensor::zeros(&[64, 64]);
    let pair = |c: usize, t: usize| 2 * c + t;
    for out in 0..16 {
        for inp in 0..16 {
            let v = g.get(&[out, inp]);
            if v == C64::new(0.0, 0.0) {
                continue;
            }
            let (l, c, r, t) = (out >> 3 & 1, out >> 2 & 1, out >> 1 & 1, out & 1);
            let (l2, c2, r2, t2) = (inp >> 3 & 1, inp >> 2 & 1, inp >> 1 & 1, inp & 1);
            for tm in 0..2 {
                for tp in 0..2 {
                    let row = (pair(l, tm) * 4 + pair(c, t)) * 4 + pair(r, tp);
                    let col = (pair(l2, tm) * 4 + pair(c2, t2)) * 4 + pair(r2, tp);
                    op.set(&[row, col], v);
                }
            }
        }
    }
    Mpo::from_dense(&op, 3, 4, 0.0).expect("64x64 operator")
}

/// Targets `1..=L` in padded coordinates: even row positions first, then odd.
pub fn partitioned_order(l: usize) -> Vec<usize> {
    interior_partitioned(1, l)
}

/// Partitioned order over padded targets `first..=last`.
pub fn interior_partitioned(first: usize, last: usize) -> Vec<usize> {
    if first > last {
        return Vec::new();
    }
    let even = (first..=last).filter(|k| (k - 1) % 2 == 0);
    let odd = (first..=last).filter(|k| (k - 1) % 2 == 1);
    even.chain(odd).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalMpo {
    mpo: Mpo,
    row_len: usize,
    order: Vec<usize>,
}

impl GlobalMpo {
    pub fn mpo(&self) -> &Mpo {
        &self.mpo
    }

    pub fn row_len(&self) -> usize {
        self.row_len
    }

    /// Padded target indices, in application order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Global update over a row of `l` sites using the partitioned order.
pub fn build_global_mpo(gate: &GateTensor, l: usize) -> GlobalMpo {
    build_global_mpo_ordered(gate, l, &partitioned_order(l))
}

/// Global update `G_{order[n-1]} ... G_{order[0]}`, compressed after each gate.
pub fn build_global_mpo_ordered(gate: &GateTensor, l: usize, order: &[usize]) -> GlobalMpo {
    assert!(l >= 1, "row needs at least one site");
    let window = gate_window_mpo(gate);
    let mut mpo = Mpo::identity(l + 2, 4);
    for &k in order {
        assert!((1..=l).contains(&k), "target {k} outside row");
        mpo.left_multiply_window(k - 1, &window)
            .expect("window fits the chain");
        mpo.reduce_bonds_in(k.saturating_sub(2)..k + 2).expect("finite gate");
    }
    mpo.reduce_bonds().expect("finite gate");
    GlobalMpo {
        mpo,
        row_len: l,
        order: order.to_vec(),
    }
}

/// Which row of the two-row update is traced out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TracedRow {
    /// The previous row; the new row becomes the state.
    Control,
    /// The freshly written row; used together with a row swap when the
    /// update acts on the control row only.
    Target,
}

/// Doubled-space step operator over `L + 2` sites, axes `(left, out, in, right)`
/// with physical dimension 4 on both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaMpo {
    mpo: Mpo,
    row_len: usize,
    traced: TracedRow,
}

impl LambdaMpo {
    pub fn mpo(&self) -> &Mpo {
        &self.mpo
    }

    pub fn row_len(&self) -> usize {
        self.row_len
    }

    pub fn traced(&self) -> TracedRow {
        self.traced
    }

    pub fn max_bond(&self) -> usize {
        self.mpo.max_bond()
    }

    /// The map on the `L` row sites with the boundary inputs fixed to `|∘∘⟩`
    /// and the boundary outputs traced.
    pub fn boundary_reduced(&self) -> Mpo {
        let n = self.mpo.len();
        let ends = |w: &DenseTensor| -> DenseTensor {
            // (a, o, i, b) -> (a, b) with i = |∘∘⟩ and o contracted with ⟨1|
            let s = w.shape();
            DenseTensor::from_fn(&[s[0], s[3]], |ix| {
                w.get(&[ix[0], 0, 0, ix[1]]) + w.get(&[ix[0], 3, 0, ix[1]])
            })
        };
        let left = ends(&self.mpo.sites[0]);
        let right = ends(&self.mpo.sites[n - 1]);
        let mut sites: Vec<DenseTensor> = self.mpo.sites[1..n - 1].to_vec();
        sites[0] = contract(&left, &sites[0], &[(1, 0)]).unwrap();
        let last = sites.len() - 1;
        sites[last] = contract(&sites[last], &right, &[(3, 0)]).unwrap();
        Mpo::new(sites)
    }
}

/// Doubled-space step for the update `global`, tracing the control row.
pub fn build_lambda_mpo(global: &GlobalMpo) -> LambdaMpo {
    build_lambda_mpo_traced(global, TracedRow::Control)
}

pub fn build_lambda_mpo_traced(global: &GlobalMpo, traced: TracedRow) -> LambdaMpo {
    let mut sites = Vec::with_capacity(global.mpo.len());
    for w in global.mpo.sites() {
        let s = w.shape();
        let (a, b) = (s[0], s[3]);
        // (a, c, t, c', t', b), then fix t' = ∘
        let w6 = w.clone().reshape(&[a, 2, 2, 2, 2, b]).unwrap();
        let w5 = DenseTensor::from_fn(&[a, 2, 2, 2, b], |ix| {
            w6.get(&[ix[0], ix[1], ix[2], ix[3], 0, ix[4]])
        });
        let bra = w5.conj();
        let t = match traced {
            // sum over c: (a, t, c', b, a2, t2, c2', b2)
            TracedRow::Control => contract(&w5, &bra, &[(1, 1)]).unwrap(),
            // sum over t: (a, c, c', b, a2, c2, c2', b2)
            TracedRow::Target => contract(&w5, &bra, &[(2, 2)]).unwrap(),
        };
        let t = t.permute(&[0, 4, 1, 5, 2, 6, 3, 7]).unwrap();
        sites.push(t.reshape(&[a * a, 4, 4, b * b]).unwrap());
    }
    let mut mpo = Mpo::new(sites);
    mpo.reduce_bonds().expect("finite step operator");
    LambdaMpo {
        mpo,
        row_len: global.row_len,
        traced,
    }
}
