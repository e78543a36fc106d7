//! Doubled-space matrix-product simulation of (1+1)D quantum cellular
//! automata with a two-row reduced density matrix, plus oracles and
//! exponent analysis.

pub mod analysis;
pub mod chain;
pub mod evolution;
pub mod gate;
pub mod mpo;
pub mod mps;
pub mod observables;
pub mod oracle;
pub mod registry;
pub mod rules;
pub mod series;
pub mod tensor;

pub use evolution::{evolve, evolve_named, init_seed, step, Compressor, EvolutionConfig, EvolutionError, InitialState};
pub use mps::DoubledStateMps;
pub use observables::ObservableRecord;
pub use registry::{build_update, LocalUpdate, RuleParams};
pub use rules::RuleTable;
pub use series::{Observable, ObservableSeries, StepStats};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
