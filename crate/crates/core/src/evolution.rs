//! One step of the row map and the time loop around it.

use crate::chain;
use crate::mpo::LambdaMpo;
use crate::mps::DoubledStateMps;
use crate::observables::{record, ObservableError};
use crate::registry::{compressors, LocalUpdate, Named};
use crate::series::{ObservableSeries, RunParams, StepStats};
use crate::tensor::{contract, lq, qr, DenseTensor, TensorError, C64};
use thiserror::Error;

pub const DEFAULT_CUTOFF: f64 = 1e-12;
/// Steps whose pre-normalization trace falls below this are rejected.
pub const MIN_TRACE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("seed needs an odd site count, got {0}")]
    EvenSeed(usize),
    #[error("site {site} outside a row of {len}")]
    SeedOutOfRange { site: usize, len: usize },
    #[error("initial row is empty")]
    EmptyRow,
    #[error("bond cap must be at least 1")]
    ZeroChi,
    #[error("cutoff {0} outside [0, 1)")]
    BadCutoff(f64),
    #[error("step operator built for {op} sites, state has {state}")]
    DimensionMismatch { op: usize, state: usize },
    #[error("non-finite entries after applying the step operator")]
    NonFinite,
    #[error("trace {0:e} after compression is below threshold")]
    DegenerateTrace(f64),
    #[error("unknown compressor `{0}`")]
    UnknownCompressor(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("step {t}: {source}")]
    AtStep {
        t: usize,
        #[source]
        source: Box<EvolutionError>,
    },
}

impl EvolutionError {
    fn at(self, t: usize) -> Self {
        match self {
            e @ EvolutionError::AtStep { .. } => e,
            e => EvolutionError::AtStep { t, source: Box::new(e) },
        }
    }

    /// Step index attached by [`evolve`], if any.
    pub fn step(&self) -> Option<usize> {
        match self {
            EvolutionError::AtStep { t, .. } => Some(*t),
            _ => None,
        }
    }
}

/// All sites empty except the central one, for odd `l`.
pub fn init_seed(l: usize) -> Result<DoubledStateMps, EvolutionError> {
    if l % 2 == 0 {
        return Err(EvolutionError::EvenSeed(l));
    }
    init_seed_at(l, l / 2)
}

pub fn init_seed_at(l: usize, site: usize) -> Result<DoubledStateMps, EvolutionError> {
    if site >= l {
        return Err(EvolutionError::SeedOutOfRange { site, len: l });
    }
    let occ: Vec<bool> = (0..l).map(|k| k == site).collect();
    Ok(DoubledStateMps::classical(&occ))
}

/// Classical product state from a `0`/`1` (or `∘`/`•`) string.
pub fn init_from_string(row: &str) -> Result<DoubledStateMps, EvolutionError> {
    let occ: Vec<bool> = row
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| matches!(c, '1' | '•'))
        .collect();
    if occ.is_empty() {
        return Err(EvolutionError::EmptyRow);
    }
    Ok(DoubledStateMps::classical(&occ))
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    /// Odd length only; the seed sits on the central site.
    Seed,
    SeedAt(usize),
    Row(Vec<bool>),
}

impl InitialState {
    pub fn build(&self, l: usize) -> Result<DoubledStateMps, EvolutionError> {
        match self {
            InitialState::Seed => init_seed(l),
            InitialState::SeedAt(k) => init_seed_at(l, *k),
            InitialState::Row(occ) => {
                if occ.len() != l {
                    return Err(EvolutionError::DimensionMismatch { op: l, state: occ.len() });
                }
                Ok(DoubledStateMps::classical(occ))
            }
        }
    }
}

/// Reduces an exactly applied state to bond dimension at most `chi`.
pub trait Compressor: Named + Send + Sync {
    /// Returns the compressed state and the summed discarded weight.
    fn compress(&self, exact: DoubledStateMps, chi: usize, cutoff: f64) -> Result<(DoubledStateMps, f64), TensorError>;
}

/// Right-canonicalize, then one left-to-right truncating SVD sweep.
#[derive(Clone, Copy, Debug, Default)]
pub struct SvdSweepCompressor;

impl Named for SvdSweepCompressor {
    fn name(&self) -> &'static str {
        "svd"
    }
}

impl Compressor for SvdSweepCompressor {
    fn compress(&self, mut exact: DoubledStateMps, chi: usize, cutoff: f64) -> Result<(DoubledStateMps, f64), TensorError> {
        let discarded = chain::compress(exact.sites_mut(), chi, cutoff)?;
        let last = exact.len() - 1;
        exact.set_center(Some(last));
        Ok((exact, discarded))
    }
}

/// SVD sweep followed by single-site variational sweeps that maximize the
/// overlap with the exact state at fixed bond dimensions.
#[derive(Clone, Copy, Debug)]
pub struct SvdFitCompressor {
    /// Each sweep is one pass; they alternate right-to-left and left-to-right.
    pub sweeps: usize,
}

impl Named for SvdFitCompressor {
    fn name(&self) -> &'static str {
        "svd+fit"
    }
}

// env (phi bond, psi bond) left of `phi`/`psi`, extended by one site
fn left_env(env: &DenseTensor, phi: &DenseTensor, psi: &DenseTensor) -> Result<DenseTensor, TensorError> {
    let t = contract(env, psi, &[(1, 0)])?;
    contract(&phi.conj(), &t, &[(0, 0), (1, 1)])
}

fn right_env(env: &DenseTensor, phi: &DenseTensor, psi: &DenseTensor) -> Result<DenseTensor, TensorError> {
    let t = contract(psi, env, &[(2, 1)])?;
    contract(&phi.conj(), &t, &[(1, 1), (2, 2)])
}

fn local_fit(l: &DenseTensor, psi: &DenseTensor, r: &DenseTensor) -> Result<DenseTensor, TensorError> {
    let t = contract(l, psi, &[(1, 0)])?;
    contract(&t, r, &[(2, 1)])
}

fn unit_env() -> DenseTensor {
    DenseTensor::new(vec![1, 1], vec![C64::new(1.0, 0.0)]).unwrap()
}

impl SvdFitCompressor {
    fn sweep_right_to_left(phi: &mut [DenseTensor], psi: &[DenseTensor]) -> Result<(), TensorError> {
        let n = phi.len();
        // sites 0..n-1 of phi are left-isometric here
        let mut lefts = vec![unit_env()];
        for k in 0..n - 1 {
            lefts.push(left_env(&lefts[k], &phi[k], &psi[k])?);
        }
        let mut r = unit_env();
        for k in (1..n).rev() {
            let site = local_fit(&lefts[k], &psi[k], &r)?;
            let (a, b) = (site.shape()[0], site.shape()[2]);
            let (_, q) = lq(&site.reshape(&[a, 4 * b])?)?;
            let bond = q.shape()[0];
            phi[k] = q.reshape(&[bond, 4, b])?;
            r = right_env(&r, &phi[k], &psi[k])?;
        }
        phi[0] = local_fit(&lefts[0], &psi[0], &r)?;
        Ok(())
    }

    fn sweep_left_to_right(phi: &mut [DenseTensor], psi: &[DenseTensor]) -> Result<(), TensorError> {
        let n = phi.len();
        let mut rights = vec![unit_env(); n];
        for k in (0..n - 1).rev() {
            rights[k] = right_env(&rights[k + 1], &phi[k + 1], &psi[k + 1])?;
        }
        let mut l = unit_env();
        for k in 0..n - 1 {
            let site = local_fit(&l, &psi[k], &rights[k])?;
            let (a, b) = (site.shape()[0], site.shape()[2]);
            let (q, _) = qr(&site.reshape(&[a * 4, b])?)?;
            let bond = q.shape()[1];
            phi[k] = q.reshape(&[a, 4, bond])?;
            l = left_env(&l, &phi[k], &psi[k])?;
        }
        phi[n - 1] = local_fit(&l, &psi[n - 1], &rights[n - 1])?;
        Ok(())
    }
}

impl Compressor for SvdFitCompressor {
    fn compress(&self, exact: DoubledStateMps, chi: usize, cutoff: f64) -> Result<(DoubledStateMps, f64), TensorError> {
        let (mut approx, discarded) = SvdSweepCompressor.compress(exact.clone(), chi, cutoff)?;
        if approx.len() < 2 || discarded == 0.0 {
            return Ok((approx, discarded));
        }
        let psi = exact.sites();
        let mut phi = approx.sites().to_vec();
        for s in 0..self.sweeps {
            if s % 2 == 0 {
                Self::sweep_right_to_left(&mut phi, psi)?;
            } else {
                Self::sweep_left_to_right(&mut phi, psi)?;
            }
        }
        if self.sweeps % 2 == 1 {
            // leave the norm on the last site like the plain sweep does
            chain::left_canonicalize(&mut phi)?;
        }
        *approx.sites_mut() = phi;
        let last = approx.len() - 1;
        approx.set_center(Some(last));
        Ok((approx, discarded))
    }
}

/// Expand, apply, trace the boundaries, compress, renormalize by the trace.
pub fn step(
    state: &DoubledStateMps,
    lam: &LambdaMpo,
    chi: usize,
    cutoff: f64,
    compressor: &dyn Compressor,
) -> Result<(DoubledStateMps, StepStats), EvolutionError> {
    if chi == 0 {
        return Err(EvolutionError::ZeroChi);
    }
    if !(0.0..1.0).contains(&cutoff) {
        return Err(EvolutionError::BadCutoff(cutoff));
    }
    if lam.row_len() != state.len() {
        return Err(EvolutionError::DimensionMismatch {
            op: lam.row_len(),
            state: state.len(),
        });
    }
    let applied = state.expand_boundaries().apply_mpo(lam.mpo())?;
    let traced = applied.trace_out_boundaries()?;
    if !traced.is_finite() {
        return Err(EvolutionError::NonFinite);
    }
    let (mut next, discarded) = compressor.compress(traced, chi, cutoff)?;
    if !next.is_finite() {
        return Err(EvolutionError::NonFinite);
    }
    let tr = next.trace();
    if !(tr.norm() >= MIN_TRACE) {
        return Err(EvolutionError::DegenerateTrace(tr.norm()));
    }
    next.scale(C64::new(1.0, 0.0) / tr);
    next.set_trace_norm(next.trace().re);
    let stats = StepStats {
        t: 0,
        max_bond: next.max_bond(),
        discarded_weight: discarded,
        trace_before_normalization: tr.re,
    };
    Ok((next, stats))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub sites: usize,
    /// Number of recorded rows including the initial one.
    pub steps: usize,
    pub chi: usize,
    pub cutoff: f64,
    pub densities: bool,
    pub initial: InitialState,
}

impl EvolutionConfig {
    pub fn new(sites: usize, steps: usize, chi: usize) -> Self {
        Self {
            sites,
            steps,
            chi,
            cutoff: DEFAULT_CUTOFF,
            densities: false,
            initial: InitialState::Seed,
        }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_densities(mut self, on: bool) -> Self {
        self.densities = on;
        self
    }

    pub fn with_initial(mut self, initial: InitialState) -> Self {
        self.initial = initial;
        self
    }
}

/// Lazily produced rows; the first item is the initial row at `t = 1`.
pub struct Evolution<'a> {
    lam: LambdaMpo,
    state: DoubledStateMps,
    config: EvolutionConfig,
    compressor: &'a dyn Compressor,
    t: usize,
    discarded: f64,
    warned: bool,
    failed: bool,
}

impl<'a> Evolution<'a> {
    pub fn new(update: &LocalUpdate, config: EvolutionConfig, compressor: &'a dyn Compressor) -> Result<Self, EvolutionError> {
        if config.chi == 0 {
            return Err(EvolutionError::ZeroChi);
        }
        if !(0.0..1.0).contains(&config.cutoff) {
            return Err(EvolutionError::BadCutoff(config.cutoff));
        }
        let state = config.initial.build(config.sites)?;
        Ok(Self {
            lam: update.lambda(config.sites),
            state,
            config,
            compressor,
            t: 0,
            discarded: 0.0,
            warned: false,
            failed: false,
        })
    }

    pub fn state(&self) -> &DoubledStateMps {
        &self.state
    }

    fn advance(&mut self) -> Result<(crate::observables::ObservableRecord, StepStats), EvolutionError> {
        let stats = if self.t == 0 {
            StepStats {
                t: 1,
                max_bond: self.state.max_bond(),
                discarded_weight: 0.0,
                trace_before_normalization: self.state.trace().re,
            }
        } else {
            let (next, mut s) = step(&self.state, &self.lam, self.config.chi, self.config.cutoff, self.compressor)?;
            self.state = next;
            self.discarded += s.discarded_weight;
            s.t = self.t + 1;
            s.discarded_weight = self.discarded;
            s
        };
        self.t += 1;
        if !self.warned && 2 * self.t > self.config.sites.saturating_sub(1) {
            log::warn!(
                "t = {} exceeds (L-1)/2 for L = {}; the light cone reaches the edges",
                self.t,
                self.config.sites
            );
            self.warned = true;
        }
        let rec = record(&self.state, self.t, self.config.densities)?;
        Ok((rec, stats))
    }
}

impl Iterator for Evolution<'_> {
    type Item = Result<(crate::observables::ObservableRecord, StepStats), EvolutionError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.t >= self.config.steps {
            return None;
        }
        let t = self.t + 1;
        let out = self.advance().map_err(|e| e.at(t));
        self.failed = out.is_err();
        Some(out)
    }
}

/// Runs the whole evolution and collects the series. On failure the error
/// carries the step index.
pub fn evolve(
    update: &LocalUpdate,
    config: &EvolutionConfig,
    compressor: &dyn Compressor,
) -> Result<ObservableSeries, EvolutionError> {
    let mut series = ObservableSeries::new(
        update.name(),
        RunParams {
            sites: config.sites,
            steps: config.steps,
            chi: config.chi,
            cutoff: config.cutoff,
            compressor: compressor.name().to_string(),
            rng_seed: None,
        },
    );
    for item in Evolution::new(update, config.clone(), compressor)? {
        let (rec, stats) = item?;
        series.push(rec, stats);
    }
    Ok(series)
}

/// [`evolve`] with the compressor looked up by name.
pub fn evolve_named(update: &LocalUpdate, config: &EvolutionConfig, compressor: &str) -> Result<ObservableSeries, EvolutionError> {
    let c = compressors()
        .get(compressor)
        .ok_or_else(|| EvolutionError::UnknownCompressor(compressor.to_string()))?;
    evolve(update, config, c.as_ref())
}
