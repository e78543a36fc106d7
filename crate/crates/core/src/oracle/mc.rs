//! Classical probabilistic-automaton sampling with a collision estimator of
//! the classical purity.
//!
//! Pair `i` draws both of its trajectories from ChaCha8 seeded with the run
//! seed on stream `i`, so results do not depend on thread count.

use crate::rules::{Neighbourhood, RuleTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest row for which the histogram estimator is used automatically.
pub const HISTOGRAM_MAX_SITES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    pub rng_seed: u64,
}

impl McEstimate {
    /// `|value - mean| <= k * std_error`; exact equality when the error is 0.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        if self.std_error == 0.0 {
            (value - self.mean).abs() <= 1e-12
        } else {
            (value - self.mean).abs() <= k * self.std_error
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PurityEstimator {
    /// Fraction of pairs whose rows coincide.
    Collision,
    /// Unbiased `sum n(n-1) / (M(M-1))` over all trajectories.
    Histogram,
    /// Histogram up to [`HISTOGRAM_MAX_SITES`], collision beyond.
    Auto,
}

impl PurityEstimator {
    fn resolve(self, l: usize) -> Self {
        match self {
            PurityEstimator::Auto if l <= HISTOGRAM_MAX_SITES => PurityEstimator::Histogram,
            PurityEstimator::Auto => PurityEstimator::Collision,
            e => e,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McStep {
    pub t: usize,
    pub densities: Vec<McEstimate>,
    pub gamma_cl: McEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub estimator: PurityEstimator,
    pub pairs: u64,
    pub rng_seed: u64,
    pub steps: Vec<McStep>,
}

struct Pair {
    rng: ChaCha8Rng,
    rows: [Vec<u8>; 2],
}

fn advance(row: &mut Vec<u8>, scratch: &mut Vec<u8>, rule: &RuleTable, rng: &mut ChaCha8Rng) {
    let l = row.len();
    scratch.clear();
    for k in 0..l {
        let left = k > 0 && row[k - 1] == 1;
        let right = k + 1 < l && row[k + 1] == 1;
        let p = rule.probability(Neighbourhood::from_bits(left, row[k] == 1, right));
        let u: f64 = rng.random();
        scratch.push((u < p) as u8);
    }
    std::mem::swap(row, scratch);
}

fn key(row: &[u8]) -> usize {
    row.iter().fold(0usize, |a, &b| (a << 1) | b as usize)
}

fn estimate(
    pairs: &[Pair],
    t: usize,
    estimator: PurityEstimator,
    seed: u64,
) -> McStep {
    let l = pairs[0].rows[0].len();
    let n = pairs.len() as u64;
    let m = 2 * n;
    let (occ, coincide) = pairs
        .par_iter()
        .fold(
            || (vec![0u64; l], 0u64),
            |(mut occ, mut same), p| {
                for r in &p.rows {
                    for (o, &b) in occ.iter_mut().zip(r) {
                        *o += b as u64;
                    }
                }
                same += (p.rows[0] == p.rows[1]) as u64;
                (occ, same)
            },
        )
        .reduce(
            || (vec![0u64; l], 0u64),
            |(mut a, x), (b, y)| {
                for (u, v) in a.iter_mut().zip(b) {
                    *u += v;
                }
                (a, x + y)
            },
        );
    let densities = occ
        .iter()
        .map(|&c| {
            let p = c as f64 / m as f64;
            McEstimate {
                mean: p,
                std_error: (p * (1.0 - p) / m as f64).sqrt(),
                samples: m,
                rng_seed: seed,
            }
        })
        .collect();
    let gamma_cl = match estimator {
        PurityEstimator::Histogram if m >= 2 => {
            let mut counts = vec![0u64; 1usize << l];
            for p in pairs {
                for r in &p.rows {
                    counts[key(r)] += 1;
                }
            }
            let mf = m as f64;
            let u: f64 = counts.iter().map(|&c| (c * c.saturating_sub(1)) as f64).sum::<f64>() / (mf * (mf - 1.0));
            let (s2, s3) = counts.iter().fold((0.0, 0.0), |(a, b), &c| {
                let q = c as f64 / mf;
                (a + q * q, b + q * q * q)
            });
            McEstimate {
                mean: u,
                std_error: (4.0 * (s3 - s2 * s2).max(0.0) / mf).sqrt(),
                samples: m,
                rng_seed: seed,
            }
        }
        _ => {
            let q = coincide as f64 / n as f64;
            McEstimate {
                mean: q,
                std_error: (q * (1.0 - q) / n as f64).sqrt(),
                samples: n,
                rng_seed: seed,
            }
        }
    };
    McStep { t, densities, gamma_cl }
}

/// Samples `2 * pairs` trajectories from `initial` for rows `t = 1..=steps`.
pub fn pca_monte_carlo(
    rule: &RuleTable,
    initial: &[bool],
    steps: usize,
    pairs: u64,
    rng_seed: u64,
    estimator: PurityEstimator,
) -> McResult {
    assert!(pairs >= 1, "need at least one pair");
    assert!(!initial.is_empty(), "empty row");
    let estimator = estimator.resolve(initial.len());
    let row: Vec<u8> = initial.iter().map(|&b| b as u8).collect();
    let mut state: Vec<Pair> = (0..pairs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(i);
            Pair {
                rng,
                rows: [row.clone(), row.clone()],
            }
        })
        .collect();
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        if t > 1 {
            state.par_iter_mut().for_each_init(Vec::new, |scratch, p| {
                let Pair { rng, rows } = p;
                for r in rows.iter_mut() {
                    advance(r, scratch, rule, rng);
                }
            });
        }
        out.push(estimate(&state, t, estimator, rng_seed));
    }
    McResult {
        estimator,
        pairs,
        rng_seed,
        steps: out,
    }
}

/// [`pca_monte_carlo`] from a single seed on site `⌊L/2⌋`.
pub fn pca_monte_carlo_seeded(rule: &RuleTable, l: usize, steps: usize, pairs: u64, rng_seed: u64) -> McResult {
    let occ: Vec<bool> = (0..l).map(|k| k == l / 2).collect();
    pca_monte_carlo(rule, &occ, steps, pairs, rng_seed, PurityEstimator::Auto)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{dkca_table, eca_table};

    #[test]
    fn zero_rule_is_exact() {
        let r = pca_monte_carlo_seeded(&eca_table(0).unwrap(), 9, 4, 50, 1);
        for s in &r.steps {
            assert_eq!(s.gamma_cl.mean, 1.0);
            assert_eq!(s.gamma_cl.std_error, 0.0);
        }
        assert!(r.steps[3].densities.iter().all(|d| d.mean == 0.0));
    }

    #[test]
    fn deterministic_rule_collides_always() {
        for est in [PurityEstimator::Collision, PurityEstimator::Histogram] {
            let occ: Vec<bool> = (0..11).map(|k| k == 5).collect();
            let r = pca_monte_carlo(&eca_table(150).unwrap(), &occ, 5, 20, 3, est);
            assert!(r.steps.iter().all(|s| s.gamma_cl.mean == 1.0 && s.gamma_cl.std_error == 0.0));
            assert_eq!(r.steps[1].densities[4].mean, 1.0);
        }
    }

    #[test]
    fn reproducible_for_a_seed() {
        let rule = dkca_table(0.645, 0.874).unwrap();
        let a = pca_monte_carlo_seeded(&rule, 9, 5, 300, 42);
        let b = pca_monte_carlo_seeded(&rule, 9, 5, 300, 42);
        assert_eq!(a, b);
        let c = pca_monte_carlo_seeded(&rule, 9, 5, 300, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let rule = dkca_table(0.6, 0.874).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| pca_monte_carlo_seeded(&rule, 9, 4, 500, 7))
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn agreement_with_zero_error_is_exact() {
        let e = McEstimate { mean: 1.0, std_error: 0.0, samples: 1, rng_seed: 0 };
        assert!(e.agrees_with(1.0, 3.0));
        assert!(!e.agrees_with(0.99, 3.0));
    }
}
