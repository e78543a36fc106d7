//! Purities, Renyi-2 entropies, coherence and densities of a row state.

use crate::mps::{identity_covector, occupation_covector, DoubledStateMps};
use crate::tensor::{matmul_slices, C64};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed on quantities that are nonnegative in exact arithmetic.
pub const NEGATIVE_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("purity {0} is not positive")]
    NonPositivePurity(f64),
    #[error("coherence {0} is negative beyond numerical slack")]
    NegativeCoherence(f64),
    #[error("site {site} outside row of {len}")]
    SiteOutOfRange { site: usize, len: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub t: usize,
    pub gamma: f64,
    pub gamma_cl: f64,
    pub c2: f64,
    pub s2: f64,
    pub s2_cl: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub densities: Vec<f64>,
}

impl ObservableRecord {
    /// Builds a record from the two purities; `c2` is their difference.
    pub fn from_purities(t: usize, gamma: f64, gamma_cl: f64, densities: Vec<f64>) -> Result<Self, ObservableError> {
        if gamma <= 0.0 || !gamma.is_finite() {
            return Err(ObservableError::NonPositivePurity(gamma));
        }
        if gamma_cl <= 0.0 || !gamma_cl.is_finite() {
            return Err(ObservableError::NonPositivePurity(gamma_cl));
        }
        let mut c2 = gamma - gamma_cl;
        if c2 < 0.0 {
            if c2 < -NEGATIVE_SLACK {
                return Err(ObservableError::NegativeCoherence(c2));
            }
            log::warn!("t = {t}: clamping coherence {c2:e} to 0");
            c2 = 0.0;
        }
        Ok(Self {
            t,
            gamma,
            gamma_cl,
            c2,
            // `+ 0.0` turns -0 into 0
            s2: -gamma.ln() + 0.0,
            s2_cl: -gamma_cl.ln() + 0.0,
            densities,
        })
    }

    /// `S2 - S2_cl + ln(1 + C2 / gamma_cl)`, zero in exact arithmetic.
    pub fn entropy_gap_residual(&self) -> f64 {
        self.s2 - self.s2_cl + (1.0 + self.c2 / self.gamma_cl).ln()
    }
}

/// `⟨rho|rho⟩ = Tr rho^2`.
pub fn purity(s: &DoubledStateMps) -> f64 {
    s.norm_sqr()
}

/// `sum_m P(m)^2`, the purity of the diagonal part.
pub fn classical_purity(s: &DoubledStateMps) -> f64 {
    s.diagonal_projection().norm_sqr()
}

pub fn coherence_l2(s: &DoubledStateMps) -> f64 {
    purity(s) - classical_purity(s)
}

pub fn renyi2(s: &DoubledStateMps) -> Result<f64, ObservableError> {
    let g = purity(s);
    if g <= 0.0 {
        return Err(ObservableError::NonPositivePurity(g));
    }
    Ok(-g.ln())
}

pub fn renyi2_cl(s: &DoubledStateMps) -> Result<f64, ObservableError> {
    let g = classical_purity(s);
    if g <= 0.0 {
        return Err(ObservableError::NonPositivePurity(g));
    }
    Ok(-g.ln())
}

fn clamp_density(x: f64) -> f64 {
    if (-NEGATIVE_SLACK..0.0).contains(&x) {
        0.0
    } else {
        x
    }
}

/// `⟨1| n_k |rho⟩`.
pub fn site_density(s: &DoubledStateMps, k: usize) -> Result<f64, ObservableError> {
    if k >= s.len() {
        return Err(ObservableError::SiteOutOfRange { site: k, len: s.len() });
    }
    let v = s.contract_covectors(|j| if j == k { occupation_covector() } else { identity_covector() });
    Ok(clamp_density(v.re))
}

fn reduce(site: &crate::tensor::DenseTensor, w: [C64; 4]) -> Vec<C64> {
    let (l, r) = (site.shape()[0], site.shape()[2]);
    let d = site.data();
    let mut out = vec![C64::new(0.0, 0.0); l * r];
    for a in 0..l {
        for p in 0..4 {
            if w[p] == C64::new(0.0, 0.0) {
                continue;
            }
            for b in 0..r {
                out[a * r + b] += w[p] * d[(a * 4 + p) * r + b];
            }
        }
    }
    out
}

/// All site densities from one pair of trace environments.
pub fn densities(s: &DoubledStateMps) -> Vec<f64> {
    let n = s.len();
    let sites = s.sites();
    let traced: Vec<Vec<C64>> = sites.iter().map(|t| reduce(t, identity_covector())).collect();
    let occ: Vec<Vec<C64>> = sites.iter().map(|t| reduce(t, occupation_covector())).collect();
    let dims: Vec<(usize, usize)> = sites.iter().map(|t| (t.shape()[0], t.shape()[2])).collect();

    let mut left = vec![vec![C64::new(1.0, 0.0)]];
    for k in 0..n - 1 {
        let (l, r) = dims[k];
        left.push(matmul_slices(&left[k], &traced[k], 1, l, r));
    }
    let mut right = vec![vec![C64::new(1.0, 0.0)]; n];
    for k in (0..n - 1).rev() {
        let (l, r) = dims[k + 1];
        right[k] = matmul_slices(&traced[k + 1], &right[k + 1], l, r, 1);
    }
    (0..n)
        .map(|k| {
            let (l, r) = dims[k];
            let v = matmul_slices(&left[k], &occ[k], 1, l, r);
            let x: C64 = v.iter().zip(&right[k]).map(|(a, b)| a * b).sum();
            clamp_density(x.re)
        })
        .collect()
}

pub fn record(s: &DoubledStateMps, t: usize, with_densities: bool) -> Result<ObservableRecord, ObservableError> {
    let dens = if with_densities { densities(s) } else { Vec::new() };
    ObservableRecord::from_purities(t, purity(s), classical_purity(s), dens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;

    fn seed() -> DoubledStateMps {
        DoubledStateMps::classical(&[false, false, true, false, false])
    }

    #[test]
    fn seed_observables() {
        let s = seed();
        let r = record(&s, 1, true).unwrap();
        assert_eq!(r.gamma, 1.0);
        assert_eq!(r.gamma_cl, 1.0);
        assert_eq!(r.c2, 0.0);
        assert_eq!(r.s2, 0.0);
        assert_eq!(r.densities, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(site_density(&s, 2).unwrap(), 1.0);
        assert_eq!(site_density(&s, 0).unwrap(), 0.0);
        assert!(site_density(&s, 5).is_err());
    }

    #[test]
    fn maximally_mixed_site() {
        let rho = DenseTensor::from_real(&[2, 2], &[0.5, 0.0, 0.0, 0.5]).unwrap();
        let s = DoubledStateMps::from_dense_matrix(&rho).unwrap();
        assert!((purity(&s) - 0.5).abs() < 1e-15);
        assert!((classical_purity(&s) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn coherent_single_site() {
        // |+⟩⟨+|: purity 1, classical purity 1/2
        let rho = DenseTensor::from_real(&[2, 2], &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let s = DoubledStateMps::from_dense_matrix(&rho).unwrap();
        let r = record(&s, 1, true).unwrap();
        assert!((r.gamma - 1.0).abs() < 1e-14);
        assert!((r.gamma_cl - 0.5).abs() < 1e-14);
        assert!((r.c2 - 0.5).abs() < 1e-14);
        assert!(r.entropy_gap_residual().abs() < 1e-14);
        assert!((r.densities[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn negative_coherence_policy() {
        let r = ObservableRecord::from_purities(3, 0.5, 0.5 + 1e-12, vec![]).unwrap();
        assert_eq!(r.c2, 0.0);
        assert!(matches!(
            ObservableRecord::from_purities(3, 0.5, 0.6, vec![]),
            Err(ObservableError::NegativeCoherence(_))
        ));
        assert!(ObservableRecord::from_purities(3, 0.0, 0.5, vec![]).is_err());
    }
}
