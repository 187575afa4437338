//! Test support for the execution engine.
//!
//! Everything in here re-derives behaviour from first principles instead of
//! reusing engine internals, so tests compare two independent routes:
//!
//! * [`oracle`] — a brute-force discrete-event simulator (linear scans, no
//!   event queue, readiness recomputed from scratch each step).
//! * [`interp`] — an exhaustive pattern interpreter that enumerates every
//!   reachable completion order and extracts the precedence constraints.
//! * [`replay`] — event-log checkers for capacity, conservation, barrier
//!   and overlap properties.
//! * [`gen`] — random workload instances shared by engine and oracle.

pub mod compare;
pub mod gen;
pub mod interp;
pub mod oracle;
pub mod replay;

pub use compare::{compare_with_oracle, engine_task_events, run_engine};
pub use gen::{build_pattern_spec, random_workload, table_registry};
pub use oracle::{simulate, OracleEvent, OraclePattern, OracleResult, OracleWorkload};
