//! Runtime verification of component-based systems under multi-threaded
//! (partial-state) semantics.
//!
//! A system is a set of atomic components glued by multiparty
//! interactions. Splitting every transition into a visible half and an
//! internal completion yields the partial-state system, where components
//! compute concurrently. The crate reconstructs, online, the global trace a
//! partial-state run witnesses, synthesizes a reconstruction component that
//! does so inside the model, and checks the equivalence claims by weak
//! bisimulation on bounded state spaces.

pub mod assets;
pub mod bisim;
pub mod cli;
pub mod expr;
pub mod gen;
pub mod model;
pub mod monitor;
pub mod semantics;
pub mod syntax;
pub mod trace_io;
pub mod transform;
pub mod witness;

pub use model::{CompositeSystem, SystemState};
pub use monitor::{Monitor, MonitorSpec, Verdict};
pub use semantics::{run_global, run_partial_concurrent, EngineConfig, Label, RunOutcome, Trace};
pub use transform::{RgtState, RgtVariant};
pub use witness::{witness, RgtStream, WitnessItem};
