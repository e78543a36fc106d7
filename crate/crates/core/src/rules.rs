//! Local update rules: one occupation probability per three-site neighbourhood.
//!
//! A neighbourhood is encoded as the 3-bit number `left << 2 | center << 1 | right`,
//! so `•••` is 7 and `∘∘∘` is 0. Tables written "in column order" list the
//! probabilities from 7 down to 0.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("elementary rule number {0} outside 0..=255")]
    RuleNumber(i64),
    #[error("probability {name} = {value} outside [0, 1]")]
    Probability { name: String, value: f64 },
    #[error("rule {0} must leave the empty neighbourhood empty")]
    NotAbsorbing(String),
    #[error("expected 8 probabilities, got {0}")]
    TableLength(usize),
    #[error("missing parameter `{0}`")]
    MissingParameter(&'static str),
    #[error("unknown rule family `{0}`")]
    UnknownFamily(String),
}

/// Occupations of the (left, center, right) control sites of one target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Neighbourhood(u8);

impl Neighbourhood {
    pub const ALL: [Neighbourhood; 8] = [
        Neighbourhood(0),
        Neighbourhood(1),
        Neighbourhood(2),
        Neighbourhood(3),
        Neighbourhood(4),
        Neighbourhood(5),
        Neighbourhood(6),
        Neighbourhood(7),
    ];

    pub fn new(index: u8) -> Self {
        assert!(index < 8, "neighbourhood index {index} out of range");
        Self(index)
    }

    pub fn from_bits(left: bool, center: bool, right: bool) -> Self {
        Self((left as u8) << 2 | (center as u8) << 1 | right as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn left(self) -> bool {
        self.0 & 4 != 0
    }

    pub fn center(self) -> bool {
        self.0 & 2 != 0
    }

    pub fn right(self) -> bool {
        self.0 & 1 != 0
    }

    pub fn occupied(self) -> u32 {
        self.0.count_ones()
    }

    /// Left and right swapped.
    pub fn mirrored(self) -> Self {
        Self::from_bits(self.right(), self.center(), self.left())
    }
}

impl fmt::Display for Neighbourhood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in [self.left(), self.center(), self.right()] {
            f.write_str(if bit { "•" } else { "∘" })?;
        }
        Ok(())
    }
}

fn check_probability(name: &str, value: f64) -> Result<f64, RuleError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(RuleError::Probability {
            name: name.to_string(),
            value,
        });
    }
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleTable {
    name: String,
    p: [f64; 8],
}

impl RuleTable {
    /// `p[n]` is the occupation probability for neighbourhood index `n`.
    pub fn new(name: impl Into<String>, p: [f64; 8]) -> Result<Self, RuleError> {
        let name = name.into();
        for (n, &v) in p.iter().enumerate() {
            check_probability(&format!("p({})", Neighbourhood::new(n as u8)), v)?;
        }
        let family = name.split(['(', ' ']).next().unwrap_or("").to_ascii_lowercase();
        if (family == "dkca" || family == "bbr") && p[0] != 0.0 {
            return Err(RuleError::NotAbsorbing(name));
        }
        Ok(Self { name, p })
    }

    /// Probabilities listed `[p(•••), p(••∘), ..., p(∘∘∘)]`.
    pub fn from_column_order(name: impl Into<String>, column: &[f64]) -> Result<Self, RuleError> {
        if column.len() != 8 {
            return Err(RuleError::TableLength(column.len()));
        }
        let mut p = [0.0; 8];
        for (k, &v) in column.iter().enumerate() {
            p[7 - k] = v;
        }
        Self::new(name, p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn probability(&self, n: Neighbourhood) -> f64 {
        self.p[n.index()]
    }

    pub fn probabilities(&self) -> &[f64; 8] {
        &self.p
    }

    pub fn column_order(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for k in 0..8 {
            out[k] = self.p[7 - k];
        }
        out
    }

    pub fn is_deterministic(&self) -> bool {
        self.p.iter().all(|&x| x == 0.0 || x == 1.0)
    }

    pub fn is_reflection_symmetric(&self) -> bool {
        Neighbourhood::ALL
            .iter()
            .all(|&n| self.probability(n) == self.probability(n.mirrored()))
    }

    /// Wolfram code of a deterministic table.
    pub fn wolfram_number(&self) -> Option<u8> {
        if !self.is_deterministic() {
            return None;
        }
        Some(
            self.p
                .iter()
                .enumerate()
                .fold(0u8, |acc, (n, &x)| acc | ((x as u8) << n)),
        )
    }
}

pub fn eca_table(n: i64) -> Result<RuleTable, RuleError> {
    if !(0..=255).contains(&n) {
        return Err(RuleError::RuleNumber(n));
    }
    let mut p = [0.0; 8];
    for (k, v) in p.iter_mut().enumerate() {
        *v = ((n >> k) & 1) as f64;
    }
    RuleTable::new(format!("eca({n})"), p)
}

/// Domany-Kinzel rule embedded in the three-site neighbourhood: the center
/// control is ignored and only the outer pair counts.
pub fn dkca_table(p1: f64, p2: f64) -> Result<RuleTable, RuleError> {
    check_probability("p1", p1)?;
    check_probability("p2", p2)?;
    let mut p = [0.0; 8];
    for n in Neighbourhood::ALL {
        p[n.index()] = match n.left() as u8 + n.right() as u8 {
            0 => 0.0,
            1 => p1,
            _ => p2,
        };
    }
    RuleTable::new(format!("dkca({p1},{p2})"), p)
}

/// Totalistic Bagnoli-Boccara-Rechtman rule.
pub fn bbr_table(p1: f64, p2: f64) -> Result<RuleTable, RuleError> {
    check_probability("p1", p1)?;
    check_probability("p2", p2)?;
    let mut p = [0.0; 8];
    for n in Neighbourhood::ALL {
        p[n.index()] = match n.occupied() {
            0 => 0.0,
            1 => p1,
            2 => p2,
            _ => 1.0,
        };
    }
    RuleTable::new(format!("bbr({p1},{p2})"), p)
}

/// Rotation angles `alpha(n)` with `sin^2(alpha) = p(n)`, principal branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleTable {
    alpha: [f64; 8],
}

impl AngleTable {
    pub fn angle(&self, n: Neighbourhood) -> f64 {
        self.alpha[n.index()]
    }

    pub fn angles(&self) -> &[f64; 8] {
        &self.alpha
    }

    pub fn uniform(alpha: f64) -> Self {
        Self { alpha: [alpha; 8] }
    }

    pub fn from_angles(alpha: [f64; 8]) -> Self {
        Self { alpha }
    }
}

pub fn to_angles(rule: &RuleTable) -> AngleTable {
    let mut alpha = [0.0; 8];
    for (a, &p) in alpha.iter_mut().zip(rule.probabilities()) {
        *a = p.sqrt().asin().clamp(0.0, FRAC_PI_2);
    }
    AngleTable { alpha }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eca_150_matches_column_order() {
        let r = eca_table(150).unwrap();
        assert_eq!(r.column_order(), [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn eca_null_and_copy() {
        assert!(eca_table(0).unwrap().probabilities().iter().all(|&p| p == 0.0));
        let copy = eca_table(204).unwrap();
        for n in Neighbourhood::ALL {
            assert_eq!(copy.probability(n), n.center() as u8 as f64);
        }
        assert_eq!(eca_table(256), Err(RuleError::RuleNumber(256)));
        assert_eq!(eca_table(-1), Err(RuleError::RuleNumber(-1)));
    }

    #[test]
    fn dkca_critical_table() {
        let r = dkca_table(0.645, 0.874).unwrap();
        assert_eq!(
            r.column_order(),
            [0.874, 0.645, 0.874, 0.645, 0.645, 0.0, 0.645, 0.0]
        );
        assert!(dkca_table(0.0, 0.0).unwrap().probabilities().iter().all(|&p| p == 0.0));
        assert!(dkca_table(1.2, 0.5).is_err());
    }

    #[test]
    fn bond_percolation_line() {
        let p1: f64 = 0.645;
        assert!((p1 * (2.0 - p1) - 0.873975).abs() < 1e-12);
    }

    #[test]
    fn bbr_table_values() {
        let r = bbr_table(0.61, 0.2).unwrap();
        assert_eq!(r.column_order(), [1.0, 0.2, 0.2, 0.61, 0.2, 0.61, 0.61, 0.0]);
        let zero = bbr_table(0.0, 0.0).unwrap();
        assert_eq!(zero.column_order(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(bbr_table(0.5, -0.1).is_err());
    }

    #[test]
    fn absorbing_check_on_named_families() {
        let mut p = [0.0; 8];
        p[0] = 0.3;
        assert!(matches!(RuleTable::new("dkca(custom)", p), Err(RuleError::NotAbsorbing(_))));
        assert!(RuleTable::new("custom", p).is_ok());
    }

    #[test]
    fn angle_special_values() {
        let mut p = [0.0; 8];
        p[1] = 1.0;
        p[2] = 0.5;
        let a = to_angles(&RuleTable::new("custom", p).unwrap());
        assert_eq!(a.angles()[0], 0.0);
        assert!((a.angles()[1] - FRAC_PI_2).abs() < 1e-15);
        assert!((a.angles()[2] - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn neighbourhood_display_and_mirror() {
        assert_eq!(Neighbourhood::new(6).to_string(), "••∘");
        assert_eq!(Neighbourhood::new(6).mirrored(), Neighbourhood::new(3));
        assert!(dkca_table(0.3, 0.9).unwrap().is_reflection_symmetric());
        assert!(!eca_table(30).unwrap().is_reflection_symmetric());
    }

    proptest! {
        #[test]
        fn angles_round_trip(p in proptest::array::uniform8(0.0f64..=1.0)) {
            let r = RuleTable::new("custom", p).unwrap();
            let a = to_angles(&r);
            for n in Neighbourhood::ALL {
                let s = a.angle(n).sin();
                prop_assert!((s * s - r.probability(n)).abs() <= 1e-14);
                prop_assert!((0.0..=FRAC_PI_2).contains(&a.angle(n)));
            }
        }

        #[test]
        fn wolfram_round_trip(n in 0i64..=255) {
            prop_assert_eq!(eca_table(n).unwrap().wolfram_number(), Some(n as u8));
        }

        #[test]
        fn dkca_ignores_center(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
            let r = dkca_table(p1, p2).unwrap();
            let p = r.probabilities();
            prop_assert_eq!(p[7], p[5]);
            prop_assert_eq!(p[6], p[4]);
            prop_assert_eq!(p[3], p[1]);
        }

        #[test]
        fn bbr_is_totalistic(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
            let r = bbr_table(p1, p2).unwrap();
            let p = r.probabilities();
            prop_assert_eq!(p[6], p[5]);
            prop_assert_eq!(p[5], p[3]);
            prop_assert_eq!(p[4], p[2]);
            prop_assert_eq!(p[2], p[1]);
        }
    }
}
