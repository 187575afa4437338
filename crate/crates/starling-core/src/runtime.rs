//! Pilot resource placeholders and shared runtime plumbing.
//!
//! A pilot is a container job holding a fixed number of slots. Tasks are
//! scheduled onto those slots at application level, which decouples the
//! total work of an ensemble from the resources held at any instant: a
//! 2560-task workload runs to completion on a 20-slot pilot, just in more
//! waves.

use alloc::collections::BTreeMap;
use alloc::string::String;

use crate::event::{EventLog, RunStamps};
use crate::kernel::KernelError;
use crate::pattern::PatternError;
use crate::task::{ResourceRequest, Seconds, TaskError, TaskRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotState {
    Queued,
    Active,
    Done,
    Cancelled,
}

/// A resource placeholder: `total_slots` schedulable cores.
#[derive(Debug, Clone, PartialEq)]
pub struct Pilot {
    pub pilot_id: u32,
    pub total_slots: u32,
    pub state: PilotState,
    /// When the pilot left the (possibly virtual) batch queue.
    pub activation_time: Option<Seconds>,
}

impl Pilot {
    /// Submits a resource request: the pilot starts Queued and is activated
    /// by its backend (immediately for LocalProcess, after `queue_wait` for
    /// Simulated).
    pub fn allocate(request: &ResourceRequest) -> Result<Pilot, TaskError> {
        request.validate()?;
        Ok(Pilot {
            pilot_id: 0,
            total_slots: request.total_slots,
            state: PilotState::Queued,
            activation_time: None,
        })
    }

    pub fn activate(&mut self, at: Seconds) {
        self.state = PilotState::Active;
        self.activation_time = Some(at);
    }

    /// Cancels the pilot. Idempotent: cancelling twice is a no-op.
    pub fn cancel(&mut self) {
        if self.state != PilotState::Cancelled {
            self.state = PilotState::Cancelled;
        }
    }
}

/// Run-level policy knobs shared by both backends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Re-submissions allowed per task before the run aborts. Every member
    /// of an ensemble must complete, so exhausting retries fails the run.
    pub retry_limit: u32,
    /// Seed for per-task PRNG derivation (`{seed}` argument templates).
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { retry_limit: 1, seed: 0 }
    }
}

/// Virtual-time overhead injection for the simulated backend. All default
/// to zero; the decomposition then reports pure execution time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTuning {
    /// Toolkit initialization span.
    pub init_latency: Seconds,
    /// Resource-request submission span.
    pub allocate_latency: Seconds,
    /// Per-task creation/submission cost, charged serially for the whole
    /// workload at pilot activation (this is the pattern overhead).
    pub dispatch_latency: Seconds,
    /// Teardown span after the pattern finishes.
    pub cancel_latency: Seconds,
}

/// Everything a run produces: the event log, the phase stamps, the final
/// task records and the pilot.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: EventLog,
    pub stamps: RunStamps,
    pub tasks: BTreeMap<String, TaskRecord>,
    pub pilot: Pilot,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("task {task_id} needs {needed} slots but the pilot has {available}")]
    InsufficientSlots { task_id: String, needed: u32, available: u32 },
    #[error("walltime limit of {limit}s exceeded")]
    WalltimeExceeded { limit: Seconds },
    #[error("task {task_id} failed permanently after {attempts} attempts")]
    TaskFailedPermanently { task_id: String, attempts: u32 },
    #[error("run cancelled")]
    Cancelled,
    #[error("engine stalled: {pending} tasks pending but nothing runnable")]
    Stalled { pending: usize },
    #[error("backend failure: {0}")]
    Backend(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// A failed run still carries its partial outcome so callers can persist
/// the log for post-mortem analysis.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: RunError,
    pub partial: RunOutcome,
}

impl core::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.error)
    }
}
