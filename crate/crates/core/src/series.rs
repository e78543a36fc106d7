//! Per-step records of one run.

use crate::observables::ObservableRecord;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub t: usize,
    pub max_bond: usize,
    /// Summed over bonds and over all steps so far.
    pub discarded_weight: f64,
    pub trace_before_normalization: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub sites: usize,
    pub steps: usize,
    pub chi: usize,
    pub cutoff: f64,
    pub compressor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub rule: String,
    pub params: RunParams,
    pub records: Vec<ObservableRecord>,
    pub stats: Vec<StepStats>,
}

impl ObservableSeries {
    pub fn new(rule: impl Into<String>, params: RunParams) -> Self {
        Self {
            rule: rule.into(),
            params,
            records: Vec::new(),
            stats: Vec::new(),
        }
    }

    /// Appends one step; `t` must increase.
    pub fn push(&mut self, record: ObservableRecord, stats: StepStats) {
        if let Some(last) = self.records.last() {
            assert!(record.t > last.t, "records must be ordered in t");
        }
        self.records.push(record);
        self.stats.push(stats);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&ObservableRecord> {
        self.records
            .binary_search_by_key(&t, |r| r.t)
            .ok()
            .map(|i| &self.records[i])
    }

    /// `(t, value)` pairs for one scalar observable.
    pub fn column(&self, obs: Observable) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t as f64, obs.of(r))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Gamma,
    GammaCl,
    C2,
    S2,
    S2Cl,
}

impl Observable {
    pub fn of(self, r: &ObservableRecord) -> f64 {
        match self {
            Observable::Gamma => r.gamma,
            Observable::GammaCl => r.gamma_cl,
            Observable::C2 => r.c2,
            Observable::S2 => r.s2,
            Observable::S2Cl => r.s2_cl,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gamma" => Observable::Gamma,
            "gamma_cl" => Observable::GammaCl,
            "c2" => Observable::C2,
            "s2" => Observable::S2,
            "s2_cl" => Observable::S2Cl,
            _ => return None,
        })
    }

    pub fn column_name(self) -> &'static str {
        match self {
            Observable::Gamma => "gamma",
            Observable::GammaCl => "gamma_cl",
            Observable::C2 => "c2",
            Observable::S2 => "s2",
            Observable::S2Cl => "s2_cl",
        }
    }
}
