//! Event log: the source of truth every metric is computed from.
//!
//! Both backends append the same record shape, so replay checks and the TTC
//! decomposition do not care whether time was virtual or wall-clock.

use alloc::string::String;
use alloc::vec::Vec;

use crate::task::{Seconds, TaskDescription, TaskState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    PilotActive,
    TaskScheduled,
    TaskStarted,
    TaskEnded,
    PatternFinished,
    PilotCancelled,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PilotActive => "PilotActive",
            EventKind::TaskScheduled => "TaskScheduled",
            EventKind::TaskStarted => "TaskStarted",
            EventKind::TaskEnded => "TaskEnded",
            EventKind::PatternFinished => "PatternFinished",
            EventKind::PilotCancelled => "PilotCancelled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "PilotActive" => EventKind::PilotActive,
            "TaskScheduled" => EventKind::TaskScheduled,
            "TaskStarted" => EventKind::TaskStarted,
            "TaskEnded" => EventKind::TaskEnded,
            "PatternFinished" => EventKind::PatternFinished,
            "PilotCancelled" => EventKind::PilotCancelled,
            _ => return None,
        })
    }
}

impl core::fmt::Display for EventKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One log record. Task events carry the task id, kernel and slot demand;
/// `PilotActive` reuses `slots` for the pilot's total slot count; `status`
/// is set on `TaskEnded` only.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub t: Seconds,
    pub kind: EventKind,
    pub task_id: Option<String>,
    pub kernel: Option<String>,
    pub slots: u32,
    pub status: Option<TaskState>,
}

impl EventRecord {
    pub fn pilot_active(t: Seconds, total_slots: u32) -> Self {
        EventRecord {
            t,
            kind: EventKind::PilotActive,
            task_id: None,
            kernel: None,
            slots: total_slots,
            status: None,
        }
    }

    pub fn marker(t: Seconds, kind: EventKind) -> Self {
        EventRecord { t, kind, task_id: None, kernel: None, slots: 0, status: None }
    }

    pub fn task(t: Seconds, kind: EventKind, desc: &TaskDescription) -> Self {
        EventRecord {
            t,
            kind,
            task_id: Some(desc.task_id.clone()),
            kernel: Some(desc.kernel.clone()),
            slots: desc.slots_required,
            status: None,
        }
    }

    pub fn task_ended(t: Seconds, desc: &TaskDescription, status: TaskState) -> Self {
        EventRecord { status: Some(status), ..EventRecord::task(t, EventKind::TaskEnded, desc) }
    }
}

/// Append-only, timestamp-ordered record list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    records: Vec<EventRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        EventLog::default()
    }

    /// Appends a record. Timestamps must be non-decreasing; both backends
    /// emit in time order by construction.
    pub fn push(&mut self, record: EventRecord) {
        debug_assert!(
            self.records.last().is_none_or(|last| last.t <= record.t),
            "event log timestamps must be non-decreasing"
        );
        self.records.push(record);
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, EventRecord> {
        self.records.iter()
    }

    pub fn first_of(&self, kind: EventKind) -> Option<&EventRecord> {
        self.records.iter().find(|r| r.kind == kind)
    }

    pub fn last_of(&self, kind: EventKind) -> Option<&EventRecord> {
        self.records.iter().rev().find(|r| r.kind == kind)
    }

    pub fn from_records(records: Vec<EventRecord>) -> Self {
        EventLog { records }
    }
}

impl<'a> IntoIterator for &'a EventLog {
    type Item = &'a EventRecord;
    type IntoIter = core::slice::Iter<'a, EventRecord>;
    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Engine timestamps bracketing the phases that are not task execution.
/// Together with the log they yield the full TTC decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStamps {
    /// Engine start; time zero for every other stamp.
    pub run_start: Seconds,
    /// Toolkit initialization complete.
    pub init_done: Seconds,
    /// Resource request submitted (queue wait follows, if any).
    pub allocate_done: Seconds,
    /// All task descriptions created and submitted; the creation span runs
    /// from pilot activation to here and is the pattern overhead.
    pub tasks_created: Seconds,
    /// Teardown begin (pattern finished, cancel issued).
    pub cancel_start: Seconds,
    /// Teardown complete; end of run.
    pub run_end: Seconds,
}
