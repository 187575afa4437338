//! Task domain types: descriptions, lifecycle records, and resource requests.
//!
//! Timestamps everywhere are floating-point seconds from run start, so the
//! virtual-clock and wall-clock backends share one representation.

use alloc::string::String;
use alloc::vec::Vec;

/// Seconds from run start (virtual or wall-clock).
pub type Seconds = f64;

/// Which executor a plan targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    /// Real child processes on the local machine, wall-clock time.
    LocalProcess,
    /// Discrete-event engine with a virtual clock.
    Simulated,
}

/// Position of a task within a pattern instance.
///
/// `(iteration, stage, member)` uniquely identifies a task within one unit
/// pattern; `unit` disambiguates tasks of sequentially composed patterns.
/// The derived ordering is the deterministic tie-break used everywhere:
/// tasks that become ready at the same instant are emitted in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TaskKey {
    pub unit: u32,
    pub iteration: u32,
    pub stage: u32,
    pub member: u32,
}

impl TaskKey {
    pub fn new(iteration: u32, stage: u32, member: u32) -> Self {
        TaskKey { unit: 0, iteration, stage, member }
    }

    pub fn in_unit(unit: u32, iteration: u32, stage: u32, member: u32) -> Self {
        TaskKey { unit, iteration, stage, member }
    }
}

/// A single unit of execution and its resource demand.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDescription {
    /// Unique within a run. Encodes role and position, e.g. `simulation.i0.m42`.
    pub task_id: String,
    /// Kernel name, resolved through the registry at dispatch time.
    pub kernel: String,
    /// Ordered named arguments handed to the kernel resolver.
    pub args: Vec<(String, String)>,
    /// Cores occupied while running; multi-slot tasks model MPI executions.
    pub slots_required: u32,
    pub key: TaskKey,
    /// Logical input file names, resolved against the producing stage's
    /// working directory by the process backend.
    pub inputs: Vec<String>,
    /// Logical output file names, created in the task's own working directory.
    pub outputs: Vec<String>,
}

impl TaskDescription {
    /// Checks the field invariants that do not need registry or workload
    /// context (kernel existence is checked at resolve time, id uniqueness
    /// at workload assembly).
    pub fn validate(&self) -> Result<&Self, TaskError> {
        if self.slots_required == 0 {
            return Err(TaskError::ZeroSlots { task_id: self.task_id.clone() });
        }
        Ok(self)
    }
}

/// Task lifecycle states.
///
/// Legal transitions: Pending → Scheduled → Running → (Done | Failed),
/// plus Failed → Scheduled for a retry. Everything else is rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskState {
    Pending,
    Scheduled,
    Running,
    Done,
    Failed,
}

impl TaskState {
    pub fn can_transition(self, to: TaskState) -> bool {
        use TaskState::*;
        matches!(
            (self, to),
            (Pending, Scheduled) | (Scheduled, Running) | (Running, Done) | (Running, Failed)
                | (Failed, Scheduled)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Done)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskState::Pending => "pending",
            TaskState::Scheduled => "scheduled",
            TaskState::Running => "running",
            TaskState::Done => "done",
            TaskState::Failed => "failed",
        }
    }
}

impl core::fmt::Display for TaskState {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A task plus its lifecycle history. Mutation is confined to the executing
/// event loop; the type itself is a plain value.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub description: TaskDescription,
    pub state: TaskState,
    pub submit_time: Option<Seconds>,
    pub start_time: Option<Seconds>,
    pub end_time: Option<Seconds>,
    /// Slot ids occupied while Running; emptied on completion.
    pub assigned_slots: Vec<u32>,
    pub exit_status: Option<i32>,
    /// Number of times the task entered Running.
    pub attempts: u32,
}

impl TaskRecord {
    pub fn new(description: TaskDescription) -> Self {
        TaskRecord {
            description,
            state: TaskState::Pending,
            submit_time: None,
            start_time: None,
            end_time: None,
            assigned_slots: Vec::new(),
            exit_status: None,
            attempts: 0,
        }
    }

    /// Moves the record to `new_state` at time `at`, stamping the matching
    /// timestamp field. Rejects anything outside the legal transition graph.
    pub fn transition(&mut self, new_state: TaskState, at: Seconds) -> Result<(), TaskError> {
        if !self.state.can_transition(new_state) {
            return Err(TaskError::IllegalTransition {
                task_id: self.description.task_id.clone(),
                from: self.state,
                to: new_state,
            });
        }
        match new_state {
            TaskState::Scheduled => self.submit_time = Some(at),
            TaskState::Running => {
                self.start_time = Some(at);
                self.attempts += 1;
            }
            TaskState::Done | TaskState::Failed => self.end_time = Some(at),
            TaskState::Pending => {}
        }
        self.state = new_state;
        Ok(())
    }
}

/// A request for a resource placeholder.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceRequest {
    /// Slots (cores) held by the pilot. Must cover the widest task.
    pub total_slots: u32,
    /// Run abort threshold in seconds.
    pub walltime_limit: Seconds,
    pub backend: Backend,
    /// Virtual batch-queue wait before the pilot activates (Simulated only).
    pub queue_wait: Seconds,
}

impl ResourceRequest {
    pub fn validate(&self) -> Result<&Self, TaskError> {
        if self.total_slots == 0 {
            return Err(TaskError::NoSlotsRequested);
        }
        if self.walltime_limit.is_nan() || self.walltime_limit <= 0.0 {
            return Err(TaskError::NonPositiveWalltime);
        }
        if self.queue_wait < 0.0 {
            return Err(TaskError::NegativeQueueWait);
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaskError {
    #[error("task {task_id}: slots_required must be >= 1")]
    ZeroSlots { task_id: String },
    #[error("task {task_id}: illegal transition {from} -> {to}")]
    IllegalTransition { task_id: String, from: TaskState, to: TaskState },
    #[error("duplicate task id {0}")]
    DuplicateTaskId(String),
    #[error("resource request asks for zero slots")]
    NoSlotsRequested,
    #[error("walltime_limit must be positive")]
    NonPositiveWalltime,
    #[error("queue_wait must be non-negative")]
    NegativeQueueWait,
}
