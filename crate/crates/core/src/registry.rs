//! Name-keyed registries for the interchangeable pieces of a run: the local
//! update family and the compression strategy.
//!
//! ```
//! use qca_core::registry::{updates, RuleParams};
//! let dkca = updates().get("dkca").unwrap();
//! let update = dkca.build(&RuleParams { p1: Some(0.645), p2: Some(0.874), ..Default::default() }).unwrap();
//! assert_eq!(update.name(), "dkca(0.645,0.874)");
//! ```

use crate::gate::{build_gate, build_unitary_limit_gate, GateTensor};
use crate::mpo::{
    build_global_mpo_ordered, build_lambda_mpo_traced, interior_partitioned, partitioned_order,
    LambdaMpo, TracedRow,
};
use crate::rules::{bbr_table, dkca_table, eca_table, to_angles, RuleError, RuleTable};
use crate::evolution::{Compressor, SvdFitCompressor, SvdSweepCompressor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

pub trait Named {
    fn name(&self) -> &'static str;
}

pub struct Registry<T: ?Sized + Named> {
    entries: BTreeMap<&'static str, Arc<T>>,
}

impl<T: ?Sized + Named> Default for Registry<T> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: ?Sized + Named> Registry<T> {
    /// Replaces any entry with the same name.
    pub fn register(&mut self, entry: Arc<T>) {
        self.entries.insert(entry.name(), entry);
    }

    pub fn get(&self, name: &str) -> Option<Arc<T>> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }
}

/// Parameters of a rule block; which fields are required depends on the family.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<f64>,
    /// Custom table in column order `[p(•••), ..., p(∘∘∘)]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl RuleParams {
    fn need<T: Copy>(v: Option<T>, name: &'static str) -> Result<T, RuleError> {
        v.ok_or(RuleError::MissingParameter(name))
    }
}

/// A concrete local update, ready to be turned into a step operator.
#[derive(Clone, Debug, PartialEq)]
pub enum LocalUpdate {
    /// Controlled rotation defined by a rule table.
    Rule(RuleTable),
    /// `exp(-i dt (h12 + h23))` on the control row with a row swap.
    UnitaryLimit { dt: f64 },
}

impl LocalUpdate {
    pub fn name(&self) -> String {
        match self {
            LocalUpdate::Rule(r) => r.name().to_string(),
            LocalUpdate::UnitaryLimit { dt } => format!("unitary(dt={dt})"),
        }
    }

    pub fn rule(&self) -> Option<&RuleTable> {
        match self {
            LocalUpdate::Rule(r) => Some(r),
            LocalUpdate::UnitaryLimit { .. } => None,
        }
    }

    pub fn gate(&self) -> GateTensor {
        match self {
            LocalUpdate::Rule(r) => build_gate(&to_angles(r)),
            LocalUpdate::UnitaryLimit { dt } => build_unitary_limit_gate(*dt),
        }
    }

    /// Padded target indices in application order for a row of `l` sites.
    /// The unitary limit skips targets whose neighbourhood touches a boundary
    /// column, so no amplitude leaks out of the row.
    pub fn targets(&self, l: usize) -> Vec<usize> {
        match self {
            LocalUpdate::Rule(_) => partitioned_order(l),
            LocalUpdate::UnitaryLimit { .. } => interior_partitioned(2, l.saturating_sub(1)),
        }
    }

    pub fn traced_row(&self) -> TracedRow {
        match self {
            LocalUpdate::Rule(_) => TracedRow::Control,
            LocalUpdate::UnitaryLimit { .. } => TracedRow::Target,
        }
    }

    pub fn lambda(&self, l: usize) -> LambdaMpo {
        let global = build_global_mpo_ordered(&self.gate(), l, &self.targets(l));
        build_lambda_mpo_traced(&global, self.traced_row())
    }
}

pub trait UpdateFamily: Named + Send + Sync {
    fn build(&self, params: &RuleParams) -> Result<LocalUpdate, RuleError>;
}

struct Eca;
struct Dkca;
struct Bbr;
struct Custom;
struct Unitary;

impl Named for Eca {
    fn name(&self) -> &'static str {
        "eca"
    }
}
impl UpdateFamily for Eca {
    fn build(&self, p: &RuleParams) -> Result<LocalUpdate, RuleError> {
        Ok(LocalUpdate::Rule(eca_table(RuleParams::need(p.n, "n")?)?))
    }
}

impl Named for Dkca {
    fn name(&self) -> &'static str {
        "dkca"
    }
}
impl UpdateFamily for Dkca {
    fn build(&self, p: &RuleParams) -> Result<LocalUpdate, RuleError> {
        Ok(LocalUpdate::Rule(dkca_table(
            RuleParams::need(p.p1, "p1")?,
            RuleParams::need(p.p2, "p2")?,
        )?))
    }
}

impl Named for Bbr {
    fn name(&self) -> &'static str {
        "bbr"
    }
}
impl UpdateFamily for Bbr {
    fn build(&self, p: &RuleParams) -> Result<LocalUpdate, RuleError> {
        Ok(LocalUpdate::Rule(bbr_table(
            RuleParams::need(p.p1, "p1")?,
            RuleParams::need(p.p2, "p2")?,
        )?))
    }
}

impl Named for Custom {
    fn name(&self) -> &'static str {
        "custom"
    }
}
impl UpdateFamily for Custom {
    fn build(&self, p: &RuleParams) -> Result<LocalUpdate, RuleError> {
        let table = p.p.as_ref().ok_or(RuleError::MissingParameter("p"))?;
        Ok(LocalUpdate::Rule(RuleTable::from_column_order("custom", table)?))
    }
}

impl Named for Unitary {
    fn name(&self) -> &'static str {
        "unitary"
    }
}
impl UpdateFamily for Unitary {
    fn build(&self, p: &RuleParams) -> Result<LocalUpdate, RuleError> {
        let dt = RuleParams::need(p.dt, "dt")?;
        if !dt.is_finite() {
            return Err(RuleError::Probability {
                name: "dt".into(),
                value: dt,
            });
        }
        Ok(LocalUpdate::UnitaryLimit { dt })
    }
}

/// Built-in update families: `eca`, `dkca`, `bbr`, `custom`, `unitary`.
pub fn updates() -> &'static Registry<dyn UpdateFamily> {
    static REG: OnceLock<Registry<dyn UpdateFamily>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn UpdateFamily> = Registry::default();
        r.register(Arc::new(Eca));
        r.register(Arc::new(Dkca));
        r.register(Arc::new(Bbr));
        r.register(Arc::new(Custom));
        r.register(Arc::new(Unitary));
        r
    })
}

/// Built-in compressors: `svd` and `svd+fit`.
pub fn compressors() -> &'static Registry<dyn Compressor> {
    static REG: OnceLock<Registry<dyn Compressor>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn Compressor> = Registry::default();
        r.register(Arc::new(SvdSweepCompressor));
        r.register(Arc::new(SvdFitCompressor { sweeps: 2 }));
        r
    })
}

/// Looks up a family and builds the update in one go.
pub fn build_update(family: &str, params: &RuleParams) -> Result<LocalUpdate, RuleError> {
    updates()
        .get(family)
        .ok_or_else(|| RuleError::UnknownFamily(family.to_string()))?
        .build(params)
}
