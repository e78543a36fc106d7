//! Power-law fits, effective exponents and the error ledger over `(t, y)` series.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("value {y} at t = {t} is not positive")]
    NonPositive { t: f64, y: f64 },
    #[error("window [{0}, {1}] holds fewer than 3 points")]
    TooFewPoints(f64, f64),
    #[error("window [{lo}, {hi}] outside data range [{min}, {max}]")]
    WindowOutOfRange { lo: f64, hi: f64, min: f64, max: f64 },
    #[error("t = {0} not recorded")]
    MissingStep(f64),
    #[error("no variant supplied for {0:?}")]
    MissingVariant(ErrorSource),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_min: f64,
    pub t_max: f64,
}

impl Window {
    pub fn new(t_min: f64, t_max: f64) -> Self {
        Self { t_min, t_max }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t <= self.t_max
    }

    /// `[t_min, t_min + (t_max - t_min) / 2]`.
    pub fn first_half(&self) -> Self {
        Self::new(self.t_min, self.t_min + 0.5 * (self.t_max - self.t_min))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// `q` in `y ~ t^-q`.
    pub exponent: f64,
    pub std_error: f64,
    pub window: Window,
    pub points: usize,
}

fn check_range(points: &[(f64, f64)], w: Window) -> Result<(), AnalysisError> {
    let min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if points.is_empty() || w.t_min < min || w.t_max > max || w.t_min > w.t_max {
        return Err(AnalysisError::WindowOutOfRange {
            lo: w.t_min,
            hi: w.t_max,
            min,
            max,
        });
    }
    Ok(())
}

/// Unweighted least squares of `ln y` against `ln t` over the window.
pub fn fit_power_law(points: &[(f64, f64)], window: Window) -> Result<PowerLawFit, AnalysisError> {
    check_range(points, window)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, y) in points.iter().filter(|p| window.contains(p.0)) {
        if !(y > 0.0) {
            return Err(AnalysisError::NonPositive { t, y });
        }
        xs.push(t.ln());
        ys.push(y.ln());
    }
    let n = xs.len();
    if n < 3 {
        return Err(AnalysisError::TooFewPoints(window.t_min, window.t_max));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    Ok(PowerLawFit {
        exponent: -slope,
        std_error: (rss / (nf - 2.0) / sxx).sqrt(),
        window,
        points: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveExponent {
    pub t: f64,
    /// Recorded step used in place of `t / 2`.
    pub half_t: f64,
    pub value: f64,
}

/// `ln[y(t')/y(t)] / ln(t/t')` with `t'` the recorded step nearest `t/2`;
/// for even `t` with `t/2` recorded this is the base-2 ratio estimator.
pub fn effective_exponent(points: &[(f64, f64)], t: f64) -> Result<EffectiveExponent, AnalysisError> {
    let &(_, yt) = points
        .iter()
        .find(|p| p.0 == t)
        .ok_or(AnalysisError::MissingStep(t))?;
    let target = (t / 2.0).floor();
    let &(th, yh) = points
        .iter()
        .filter(|p| p.0 < t)
        .min_by(|a, b| (a.0 - target).abs().total_cmp(&(b.0 - target).abs()))
        .ok_or(AnalysisError::MissingStep(target))?;
    if th != target {
        log::info!("effective exponent at t = {t}: using recorded t = {th} for t/2");
    }
    for (tt, y) in [(t, yt), (th, yh)] {
        if !(y > 0.0) {
            return Err(AnalysisError::NonPositive { t: tt, y });
        }
    }
    Ok(EffectiveExponent {
        t,
        half_t: th,
        value: (yh / yt).ln() / (t / th).ln(),
    })
}

/// Mean and standard deviation of the effective exponent over recorded
/// steps in the window.
pub fn average_effective_exponent(points: &[(f64, f64)], window: Window) -> Result<(f64, f64), AnalysisError> {
    check_range(points, window)?;
    let vals = points
        .iter()
        .filter(|p| window.contains(p.0))
        .map(|p| effective_exponent(points, p.0).map(|e| e.value))
        .collect::<Result<Vec<_>, _>>()?;
    if vals.is_empty() {
        return Err(AnalysisError::TooFewPoints(window.t_min, window.t_max));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, var.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LogLogLeastSquares,
    EffectiveExponentAverage,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "loglog" | "log-log-least-squares" => Some(Method::LogLogLeastSquares),
            "effective" | "effective-exponent-average" => Some(Method::EffectiveExponentAverage),
            _ => None,
        }
    }

    /// Exponent and its statistical spread.
    pub fn estimate(self, points: &[(f64, f64)], window: Window) -> Result<(f64, f64), AnalysisError> {
        match self {
            Method::LogLogLeastSquares => fit_power_law(points, window).map(|f| (f.exponent, f.std_error)),
            Method::EffectiveExponentAverage => average_effective_exponent(points, window),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorSource {
    FiniteL,
    FiniteChi,
    FiniteTime,
    CriticalPointLower,
    CriticalPointUpper,
}

impl ErrorSource {
    pub const ALL: [ErrorSource; 5] = [
        ErrorSource::FiniteL,
        ErrorSource::FiniteChi,
        ErrorSource::FiniteTime,
        ErrorSource::CriticalPointLower,
        ErrorSource::CriticalPointUpper,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub exponent: f64,
    pub fit_std_error: f64,
    pub fit_window: Window,
    pub method: Method,
    pub error_ledger: BTreeMap<ErrorSource, f64>,
    pub reported_error: f64,
}

impl ExponentEstimate {
    pub fn new(exponent: f64, fit_std_error: f64, fit_window: Window, method: Method) -> Self {
        Self {
            exponent,
            fit_std_error,
            fit_window,
            method,
            error_ledger: BTreeMap::new(),
            reported_error: 0.0,
        }
    }

    /// Records an absolute delta and refreshes the max rule.
    pub fn add_delta(&mut self, source: ErrorSource, delta: f64) {
        self.error_ledger.insert(source, delta.abs());
        self.reported_error = self.error_ledger.values().copied().fold(0.0, f64::max);
    }
}

/// A curve fitted over its own window, used for critical-point bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCurve {
    pub points: Vec<(f64, f64)>,
    pub window: Window,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LedgerInputs {
    /// Same run at half the row length.
    pub half_l: Option<Vec<(f64, f64)>>,
    /// Same run at half the bond cap.
    pub half_chi: Option<Vec<(f64, f64)>>,
    /// Active-phase curve; bounds the exponent from below.
    pub lower: Option<BoundCurve>,
    /// Inactive-phase curve; bounds the exponent from above.
    pub upper: Option<BoundCurve>,
    /// Mirror a single critical-point bound onto the missing side.
    pub symmetric: bool,
}

/// Fits the primary series and fills the ledger for each requested source.
pub fn error_ledger(
    primary: &[(f64, f64)],
    method: Method,
    window: Window,
    inputs: &LedgerInputs,
    sources: &[ErrorSource],
) -> Result<ExponentEstimate, AnalysisError> {
    let (q, se) = method.estimate(primary, window)?;
    let mut est = ExponentEstimate::new(q, se, window, method);
    let mut bounds: BTreeMap<ErrorSource, f64> = BTreeMap::new();
    for &src in sources {
        let variant = match src {
            ErrorSource::FiniteL => {
                let s = inputs.half_l.as_ref().ok_or(AnalysisError::MissingVariant(src))?;
                method.estimate(s, window)?.0
            }
            ErrorSource::FiniteChi => {
                let s = inputs.half_chi.as_ref().ok_or(AnalysisError::MissingVariant(src))?;
                method.estimate(s, window)?.0
            }
            ErrorSource::FiniteTime => method.estimate(primary, window.first_half())?.0,
            ErrorSource::CriticalPointLower | ErrorSource::CriticalPointUpper => {
                let curve = if src == ErrorSource::CriticalPointLower { &inputs.lower } else { &inputs.upper };
                match curve {
                    Some(c) => {
                        let v = method.estimate(&c.points, c.window)?.0;
                        bounds.insert(src, (v - q).abs());
                        v
                    }
                    None if inputs.symmetric => continue,
                    None => return Err(AnalysisError::MissingVariant(src)),
                }
            }
        };
        est.add_delta(src, variant - q);
    }
    if inputs.symmetric {
        let lo = ErrorSource::CriticalPointLower;
        let hi = ErrorSource::CriticalPointUpper;
        let wanted = |s| sources.contains(&s);
        match (bounds.get(&lo).copied(), bounds.get(&hi).copied()) {
            (Some(d), None) if wanted(hi) => est.add_delta(hi, d),
            (None, Some(d)) if wanted(lo) => est.add_delta(lo, d),
            (None, None) if wanted(lo) || wanted(hi) => {
                return Err(AnalysisError::MissingVariant(if wanted(lo) { lo } else { hi }))
            }
            _ => {}
        }
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn power(q: f64, c: f64, ts: impl Iterator<Item = usize>) -> Vec<(f64, f64)> {
        ts.map(|t| (t as f64, c * (t as f64).powf(-q))).collect()
    }

    #[test]
    fn exact_power_law() {
        let pts = power(0.5, 1.0, 1..=200);
        let f = fit_power_law(&pts, Window::new(10.0, 100.0)).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-12);
        assert_eq!(f.points, 91);
    }

    #[test]
    fn modulated_power_law() {
        let pts: Vec<(f64, f64)> = (1..=200)
            .map(|t| {
                let t = t as f64;
                (t, 3.0 * t.powf(-0.213) * (1.0 + 0.01 * t.sin()))
            })
            .collect();
        let f = fit_power_law(&pts, Window::new(50.0, 200.0)).unwrap();
        assert!((f.exponent - 0.213).abs() < 0.01);
    }

    #[test]
    fn fit_errors() {
        let mut pts = power(1.0, 1.0, 1..=10);
        assert!(matches!(fit_power_law(&pts, Window::new(5.0, 20.0)), Err(AnalysisError::WindowOutOfRange { .. })));
        assert!(matches!(fit_power_law(&pts, Window::new(5.0, 6.0)), Err(AnalysisError::TooFewPoints(..))));
        pts[5].1 = 0.0;
        assert!(matches!(fit_power_law(&pts, Window::new(2.0, 9.0)), Err(AnalysisError::NonPositive { .. })));
    }

    #[test]
    fn effective_exponent_cases() {
        let pts = power(3.0, 2.0, 1..=64);
        for t in (2..=64).step_by(2) {
            assert_eq!(effective_exponent(&pts, t as f64).unwrap().value, 3.0);
        }
        let e = effective_exponent(&pts, 9.0).unwrap();
        assert_eq!(e.half_t, 4.0);
        assert!((e.value - 3.0).abs() < 1e-12);

        // e^-t: ln(e^{t/2}) / ln 2
        let ex: Vec<(f64, f64)> = (1..=40).map(|t| (t as f64, (-(t as f64)).exp())).collect();
        for t in [10.0, 20.0, 40.0] {
            let v = effective_exponent(&ex, t).unwrap().value;
            assert!((v - t / (2.0 * std::f64::consts::LN_2)).abs() < 1e-9);
        }
    }

    #[test]
    fn nearest_half_step_when_sparse() {
        let pts = vec![(10.0, 1.0), (24.0, 0.5), (50.0, 0.25)];
        let e = effective_exponent(&pts, 50.0).unwrap();
        assert_eq!(e.half_t, 24.0);
    }

    #[test]
    fn identical_variants_give_zero() {
        let pts = power(0.3, 1.0, 1..=100);
        let inputs = LedgerInputs {
            half_l: Some(pts.clone()),
            half_chi: Some(pts.clone()),
            ..Default::default()
        };
        let est = error_ledger(
            &pts,
            Method::LogLogLeastSquares,
            Window::new(20.0, 100.0),
            &inputs,
            &[ErrorSource::FiniteL, ErrorSource::FiniteChi, ErrorSource::FiniteTime],
        )
        .unwrap();
        assert!(est.error_ledger.values().all(|d| *d < 1e-12));
        assert!(est.reported_error < 1e-12);
    }

    #[test]
    fn missing_variant_is_an_error() {
        let pts = power(0.3, 1.0, 1..=100);
        let r = error_ledger(&pts, Method::LogLogLeastSquares, Window::new(20.0, 100.0), &LedgerInputs::default(), &[ErrorSource::FiniteChi]);
        assert_eq!(r, Err(AnalysisError::MissingVariant(ErrorSource::FiniteChi)));
    }

    #[test]
    fn grid_bounds_from_phase_curves() {
        let primary = power(0.26716, 1.0, 1..=200);
        let inputs = LedgerInputs {
            upper: Some(BoundCurve { points: power(0.32250, 1.0, 1..=60), window: Window::new(10.0, 40.0) }),
            lower: Some(BoundCurve { points: power(0.20171, 1.0, 1..=60), window: Window::new(10.0, 40.0) }),
            ..Default::default()
        };
        let est = error_ledger(
            &primary,
            Method::LogLogLeastSquares,
            Window::new(50.0, 200.0),
            &inputs,
            &[ErrorSource::CriticalPointLower, ErrorSource::CriticalPointUpper],
        )
        .unwrap();
        let up = est.error_ledger[&ErrorSource::CriticalPointUpper];
        let lo = est.error_ledger[&ErrorSource::CriticalPointLower];
        assert!((up - 5.53e-2).abs() < 5e-5, "{up}");
        assert!((lo - 6.54e-2).abs() < 5e-5, "{lo}");
        assert_eq!(est.reported_error, lo);
    }

    #[test]
    fn symmetric_bound_mirrors_one_side() {
        let primary = power(2.74, 1.0, 1..=200);
        let inputs = LedgerInputs {
            lower: Some(BoundCurve { points: power(2.47, 1.0, 1..=200), window: Window::new(150.0, 200.0) }),
            symmetric: true,
            ..Default::default()
        };
        let est = error_ledger(
            &primary,
            Method::EffectiveExponentAverage,
            Window::new(150.0, 200.0),
            &inputs,
            &[ErrorSource::CriticalPointLower, ErrorSource::CriticalPointUpper],
        )
        .unwrap();
        let lo = est.error_ledger[&ErrorSource::CriticalPointLower];
        assert!((lo - 0.27).abs() < 1e-9);
        assert_eq!(est.error_ledger[&ErrorSource::CriticalPointUpper], lo);
    }

    proptest! {
        #[test]
        fn scale_invariant(q in 0.05f64..3.0, c in 1e-3f64..1e3) {
            let a = fit_power_law(&power(q, 1.0, 1..=100), Window::new(5.0, 100.0)).unwrap();
            let b = fit_power_law(&power(q, c, 1..=100), Window::new(5.0, 100.0)).unwrap();
            prop_assert!((a.exponent - b.exponent).abs() < 1e-12);
        }

        #[test]
        fn effective_matches_fit(q in 0.05f64..3.0) {
            let pts = power(q, 1.0, 1..=100);
            let fit = fit_power_law(&pts, Window::new(10.0, 100.0)).unwrap().exponent;
            let eff = effective_exponent(&pts, 80.0).unwrap().value;
            prop_assert!((fit - eff).abs() < 1e-10);
        }

        #[test]
        fn max_rule_is_monotone(deltas in proptest::collection::vec(0.0f64..1.0, 1..5)) {
            let mut est = ExponentEstimate::new(0.2, 0.0, Window::new(1.0, 2.0), Method::LogLogLeastSquares);
            let mut prev = 0.0;
            for (d, src) in deltas.iter().zip(ErrorSource::ALL) {
                est.add_delta(src, *d);
                prop_assert!(est.reported_error >= prev);
                prev = est.reported_error;
            }
        }
    }
}
