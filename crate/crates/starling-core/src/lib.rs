//! Deterministic execution engine for ensembles of tasks.
//!
//! The crate models an ensemble application as an execution *pattern* (a
//! state machine emitting waves of ready tasks), binds each stage of the
//! pattern to a named *kernel* (an abstraction of the executable tool), and
//! runs the resulting task stream on a *pilot*: a fixed pool of slots onto
//! which tasks are scheduled at application level. Two backends share the
//! scheduling logic; this crate carries the virtual-clock discrete-event
//! backend, while process execution, the CLI, and file formats live in the
//! companion `starling` crate.
//!
//! The crate is `no_std` (with `alloc`): everything in here is pure state
//! manipulation, so runs are reproducible bit-for-bit given the same
//! workload and seed.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod event;
pub mod kernel;
pub mod metrics;
pub mod pattern;
pub mod runtime;
pub mod sched;
pub mod sim;
pub mod task;

pub use event::{EventKind, EventLog, EventRecord, RunStamps};
pub use kernel::{ExecutablePlan, KernelError, KernelPlugin, KernelRegistry};
pub use pattern::{
    EEParams, EoPParams, PairingPolicy, PatternError, PatternSpec, PatternState, PatternVariant,
    SALParams, StageBinding,
};
pub use runtime::{Pilot, PilotState, RunConfig, RunError, RunFailure, RunOutcome, SimTuning};
pub use sched::Scheduler;
pub use sim::run_simulated;
pub use task::{
    Backend, ResourceRequest, Seconds, TaskDescription, TaskError, TaskKey, TaskRecord, TaskState,
};
