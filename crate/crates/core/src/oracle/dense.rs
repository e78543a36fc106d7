//! Exact two-row evolution with dense state vectors, for small rows.
//!
//! The control row is padded with one permanently empty column on each side.
//! Amplitude index of a two-row basis state: control bits (padded site 0 most
//! significant) above target bits (site 0 most significant).

use crate::gate::GateTensor;
use crate::mpo::TracedRow;
use crate::registry::LocalUpdate;
use crate::rules::{Neighbourhood, RuleTable};
use crate::tensor::{DenseTensor, C64};
use rayon::prelude::*;
use thiserror::Error;

pub const MAX_DENSE_SITES: usize = 8;
/// The master equation keeps a full `2^L` probability vector.
pub const MAX_MASTER_SITES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("dense oracle supports at most {max} sites, got {got}")]
    TooLarge { got: usize, max: usize },
    #[error("need at least one site")]
    Empty,
    #[error("initial row has {got} sites, expected {want}")]
    InitialLength { got: usize, want: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseRowState {
    pub t: usize,
    pub rho: DenseTensor,
    pub sites: usize,
}

impl DenseRowState {
    pub fn trace(&self) -> C64 {
        let d = 1usize << self.sites;
        (0..d).map(|i| self.rho.get(&[i, i])).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let d = 1usize << self.sites;
        (0..d).map(|i| self.rho.get(&[i, i]).re).collect()
    }

    pub fn purity(&self) -> f64 {
        self.rho.norm_sqr()
    }

    pub fn classical_purity(&self) -> f64 {
        self.diagonal().iter().map(|p| p * p).sum()
    }

    /// Occupation of each site, site 0 first.
    pub fn densities(&self) -> Vec<f64> {
        config_densities(&self.diagonal(), self.sites)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.rho.max_abs_diff(&self.rho.adjoint().unwrap())
    }
}

pub(crate) fn config_densities(p: &[f64], l: usize) -> Vec<f64> {
    (0..l)
        .map(|k| {
            let bit = l - 1 - k;
            p.iter()
                .enumerate()
                .filter(|(m, _)| (m >> bit) & 1 == 1)
                .map(|(_, x)| x)
                .sum()
        })
        .collect()
}

struct Layout {
    l: usize,
}

impl Layout {
    fn ctrl_shift(&self, padded: usize) -> usize {
        self.l + (self.l + 1 - padded)
    }
    fn tgt_shift(&self, site: usize) -> usize {
        self.l - 1 - site
    }
    fn dim(&self) -> usize {
        1usize << (2 * self.l + 2)
    }
}

/// Applies the 16x16 gate for padded target `j` in place.
fn apply_gate(v: &mut [C64], m: &DenseTensor, lay: &Layout, j: usize) {
    let shifts = [
        lay.ctrl_shift(j - 1),
        lay.ctrl_shift(j),
        lay.ctrl_shift(j + 1),
        lay.tgt_shift(j - 1),
    ];
    let mask: usize = shifts.iter().map(|s| 1usize << s).sum();
    let md = m.data();
    let mut local = [C64::new(0.0, 0.0); 16];
    for base in 0..v.len() {
        if base & mask != 0 {
            continue;
        }
        let idx = |a: usize| -> usize {
            let mut i = base;
            for (q, s) in shifts.iter().enumerate() {
                if (a >> (3 - q)) & 1 == 1 {
                    i |= 1 << s;
                }
            }
            i
        };
        for (a, slot) in local.iter_mut().enumerate() {
            *slot = v[idx(a)];
        }
        for r in 0..16 {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..16 {
                acc += md[r * 16 + c] * local[c];
            }
            v[idx(r)] = acc;
        }
    }
}

fn apply_all(v: &mut [C64], m: &DenseTensor, lay: &Layout, order: &[usize]) {
    for &j in order {
        apply_gate(v, m, lay, j);
    }
}

/// One exact step `rho -> Tr_traced[G (rho ⊗ |Ω⟩⟨Ω|) G†]`.
fn dense_step(rho: &DenseTensor, gate: &GateTensor, order: &[usize], traced: TracedRow, l: usize) -> DenseTensor {
    let lay = Layout { l };
    let m = gate.matrix();
    let d = 1usize << l;
    let embed = |row: usize| -> usize { row << 1 };
    // sum over control basis columns c of |X_c⟩⟨Y_c|, X_c = G(rho|c⟩⊗Ω), Y_c = G(|c⟩⊗Ω)
    let parts: Vec<DenseTensor> = (0..d)
        .into_par_iter()
        .map(|c| {
            let mut x = vec![C64::new(0.0, 0.0); lay.dim()];
            for r in 0..d {
                x[embed(r) << l] = rho.get(&[r, c]);
            }
            let mut y = vec![C64::new(0.0, 0.0); lay.dim()];
            y[embed(c) << l] = C64::new(1.0, 0.0);
            apply_all(&mut x, &m, &lay, order);
            apply_all(&mut y, &m, &lay, order);
            let mut out = DenseTensor::zeros(&[d, d]);
            let nctrl = 1usize << (l + 2);
            match traced {
                TracedRow::Control => {
                    for k in 0..nctrl {
                        for t in 0..d {
                            let xv = x[(k << l) | t];
                            if xv == C64::new(0.0, 0.0) {
                                continue;
                            }
                            for t2 in 0..d {
                                let o = out.get(&[t, t2]) + xv * y[(k << l) | t2].conj();
                                out.set(&[t, t2], o);
                            }
                        }
                    }
                }
                TracedRow::Target => {
                    for t in 0..d {
                        for r in 0..d {
                            let xv = x[(embed(r) << l) | t];
                            if xv == C64::new(0.0, 0.0) {
                                continue;
                            }
                            for r2 in 0..d {
                                let o = out.get(&[r, r2]) + xv * y[(embed(r2) << l) | t].conj();
                                out.set(&[r, r2], o);
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut acc = DenseTensor::zeros(&[d, d]);
    for p in parts {
        for (a, b) in acc.data_mut().iter_mut().zip(p.data()) {
            *a += b;
        }
    }
    acc
}

fn basis_projector(occ: &[bool]) -> DenseTensor {
    let l = occ.len();
    let idx = occ.iter().fold(0usize, |a, &o| (a << 1) | o as usize);
    let d = 1usize << l;
    let mut rho = DenseTensor::zeros(&[d, d]);
    rho.set(&[idx, idx], C64::new(1.0, 0.0));
    rho
}

/// Exact reduced evolution from a classical row; returns rows `t = 1..=steps`.
/// No renormalization is applied.
pub fn dense_reduced_evolve_from(update: &LocalUpdate, initial: &[bool], steps: usize) -> Result<Vec<DenseRowState>, OracleError> {
    let l = initial.len();
    if l == 0 {
        return Err(OracleError::Empty);
    }
    if l > MAX_DENSE_SITES {
        return Err(OracleError::TooLarge { got: l, max: MAX_DENSE_SITES });
    }
    let gate = update.gate();
    let order = update.targets(l);
    let traced = update.traced_row();
    let mut rho = basis_projector(initial);
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        if t > 1 {
            rho = dense_step(&rho, &gate, &order, traced, l);
        }
        out.push(DenseRowState { t, rho: rho.clone(), sites: l });
    }
    Ok(out)
}

/// [`dense_reduced_evolve_from`] with the seed on site `⌊L/2⌋`.
pub fn dense_reduced_evolve(update: &LocalUpdate, l: usize, steps: usize) -> Result<Vec<DenseRowState>, OracleError> {
    let occ: Vec<bool> = (0..l).map(|k| k == l / 2).collect();
    dense_reduced_evolve_from(update, &occ, steps)
}

/// Probability of each row configuration, iterated through the classical
/// probabilistic automaton. Index convention as for the dense oracle.
pub fn master_equation(rule: &RuleTable, initial: &[bool], steps: usize) -> Result<Vec<Vec<f64>>, OracleError> {
    let l = initial.len();
    if l == 0 {
        return Err(OracleError::Empty);
    }
    if l > MAX_MASTER_SITES {
        return Err(OracleError::TooLarge { got: l, max: MAX_MASTER_SITES });
    }
    let d = 1usize << l;
    let mut p = vec![0.0; d];
    p[initial.iter().fold(0usize, |a, &o| (a << 1) | o as usize)] = 1.0;
    let bit = |m: usize, k: isize| -> bool { k >= 0 && (k as usize) < l && (m >> (l - 1 - k as usize)) & 1 == 1 };
    let mut out = vec![p.clone()];
    for _ in 1..steps {
        let next = (0..d)
            .into_par_iter()
            .fold(
                || vec![0.0; d],
                |mut acc, m| {
                    if p[m] == 0.0 {
                        return acc;
                    }
                    let probs: Vec<f64> = (0..l as isize)
                        .map(|k| rule.probability(Neighbourhood::from_bits(bit(m, k - 1), bit(m, k), bit(m, k + 1))))
                        .collect();
                    // product distribution over the next row
                    let mut dist = vec![p[m]];
                    for q in &probs {
                        let mut grown = Vec::with_capacity(dist.len() * 2);
                        for w in &dist {
                            grown.push(w * (1.0 - q));
                            grown.push(w * q);
                        }
                        dist = grown;
                    }
                    for (a, w) in acc.iter_mut().zip(dist) {
                        *a += w;
                    }
                    acc
                },
            )
            .reduce(|| vec![0.0; d], |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            });
        p = next;
        out.push(p.clone());
    }
    Ok(out)
}

pub fn master_densities(p: &[f64], l: usize) -> Vec<f64> {
    config_densities(p, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{build_update, RuleParams};

    fn eca(n: i64) -> LocalUpdate {
        build_update("eca", &RuleParams { n: Some(n), ..Default::default() }).unwrap()
    }

    #[test]
    fn eca150_is_classical_xor() {
        let rows = dense_reduced_evolve(&eca(150), 7, 3).unwrap();
        let expect = [
            [0, 0, 0, 1, 0, 0, 0],
            [0, 0, 1, 1, 1, 0, 0],
            [0, 1, 0, 1, 0, 1, 0],
        ];
        for (r, e) in rows.iter().zip(expect) {
            assert!((r.purity() - 1.0).abs() < 1e-12);
            let d = r.densities();
            for (a, b) in d.iter().zip(e) {
                assert!((a - b as f64).abs() < 1e-12, "t={} {d:?}", r.t);
            }
        }
    }

    #[test]
    fn zero_rule_empties_everything() {
        let rows = dense_reduced_evolve(&eca(0), 5, 3).unwrap();
        assert_eq!(rows[2].rho.get(&[0, 0]), C64::new(1.0, 0.0));
        assert!((rows[2].purity() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn refuses_large_rows() {
        assert!(matches!(dense_reduced_evolve(&eca(150), 9, 2), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn diagonal_matches_master_equation() {
        let u = build_update("dkca", &RuleParams { p1: Some(0.645), p2: Some(0.874), ..Default::default() }).unwrap();
        let rows = dense_reduced_evolve(&u, 5, 5).unwrap();
        let init: Vec<bool> = (0..5).map(|k| k == 2).collect();
        let me = master_equation(u.rule().unwrap(), &init, 5).unwrap();
        for (r, p) in rows.iter().zip(&me) {
            assert!((r.trace().re - 1.0).abs() < 1e-12);
            assert!(r.hermiticity_defect() < 1e-12);
            for (a, b) in r.diagonal().iter().zip(p) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
