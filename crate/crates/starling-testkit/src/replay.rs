//! Event-log replay checkers.
//!
//! Each checker walks a log independently of how it was produced, so every
//! test (and the acceptance suite) can assert the structural invariants on
//! whatever the engine emitted.

use std::collections::BTreeMap;

use starling_core::event::{EventKind, EventLog};
use starling_core::pattern::parse_task_id;
use starling_core::task::TaskState;

/// Timestamps never decrease.
pub fn check_monotonic(log: &EventLog) -> Result<(), String> {
    let mut prev = f64::NEG_INFINITY;
    for rec in log {
        if rec.t < prev {
            return Err(format!("timestamp {} after {} ({:?})", rec.t, prev, rec.kind));
        }
        prev = rec.t;
    }
    Ok(())
}

/// At every instant, the slots of running tasks never exceed the pilot's.
pub fn check_capacity(log: &EventLog) -> Result<(), String> {
    let total = log
        .first_of(EventKind::PilotActive)
        .ok_or("no PilotActive record")?
        .slots;
    let mut in_use: u32 = 0;
    for rec in log {
        match rec.kind {
            EventKind::TaskStarted => {
                in_use += rec.slots;
                if in_use > total {
                    return Err(format!(
                        "capacity exceeded at t={}: {in_use} slots in use, pilot has {total}",
                        rec.t
                    ));
                }
            }
            EventKind::TaskEnded => {
                in_use = in_use.checked_sub(rec.slots).ok_or_else(|| {
                    format!("TaskEnded without matching start at t={}", rec.t)
                })?;
            }
            _ => {}
        }
    }
    Ok(())
}

/// In a successful run every planned task appears exactly once as a
/// Started → Ended(Done) pair (retried attempts allowed before the final
/// Done, never after).
pub fn check_conservation(log: &EventLog, planned: usize) -> Result<(), String> {
    #[derive(Default)]
    struct Counts {
        started: u32,
        ended_done: u32,
        ended_failed: u32,
    }
    let mut by_task: BTreeMap<String, Counts> = BTreeMap::new();
    for rec in log {
        let Some(id) = rec.task_id.as_deref() else { continue };
        let counts = by_task.entry(id.to_string()).or_default();
        match rec.kind {
            EventKind::TaskStarted => counts.started += 1,
            EventKind::TaskEnded => match rec.status {
                Some(TaskState::Done) => counts.ended_done += 1,
                _ => counts.ended_failed += 1,
            },
            _ => {}
        }
    }
    if by_task.len() != planned {
        return Err(format!("{} distinct tasks in log, {planned} planned", by_task.len()));
    }
    for (id, c) in &by_task {
        if c.ended_done != 1 {
            return Err(format!("task {id}: {} Done endings (want exactly 1)", c.ended_done));
        }
        if c.started != c.ended_done + c.ended_failed {
            return Err(format!(
                "task {id}: {} starts vs {} endings",
                c.started,
                c.ended_done + c.ended_failed
            ));
        }
    }
    Ok(())
}

/// SAL barrier: for every iteration, no analysis task starts before the
/// last simulation of the same iteration has ended.
pub fn check_sal_barrier(log: &EventLog) -> Result<(), String> {
    let mut sim_end: BTreeMap<u32, f64> = BTreeMap::new();
    let mut analysis_start: BTreeMap<u32, f64> = BTreeMap::new();
    for rec in log {
        let Some(id) = rec.task_id.as_deref() else { continue };
        let Some((role, iter, _)) = parse_task_id(id) else { continue };
        match (role, rec.kind) {
            ("simulation", EventKind::TaskEnded) => {
                let e = sim_end.entry(iter).or_insert(f64::NEG_INFINITY);
                *e = e.max(rec.t);
            }
            ("analysis", EventKind::TaskStarted) => {
                let s = analysis_start.entry(iter).or_insert(f64::INFINITY);
                *s = s.min(rec.t);
            }
            _ => {}
        }
    }
    for (iter, start) in &analysis_start {
        let end = sim_end.get(iter).copied().unwrap_or(f64::NEG_INFINITY);
        if *start < end {
            return Err(format!(
                "iteration {iter}: analysis starts at {start} before last simulation end {end}"
            ));
        }
    }
    Ok(())
}

/// True iff some exchange task starts while another member's simulation of
/// the same iteration is still running — the constructive witness that the
/// exchange stage has no global barrier.
pub fn ee_overlap_exists(log: &EventLog) -> bool {
    let mut exchange_starts: Vec<(u32, f64)> = Vec::new();
    let mut sim_ends: Vec<(u32, f64)> = Vec::new();
    for rec in log {
        let Some(id) = rec.task_id.as_deref() else { continue };
        let Some((role, iter, _)) = parse_task_id(id) else { continue };
        match (role, rec.kind) {
            ("exchange", EventKind::TaskStarted) => exchange_starts.push((iter, rec.t)),
            ("simulation", EventKind::TaskEnded) => sim_ends.push((iter, rec.t)),
            _ => {}
        }
    }
    exchange_starts.iter().any(|(xi, xt)| {
        sim_ends.iter().any(|(si, st)| si == xi && xt < st)
    })
}

/// Convenience: monotonic + capacity, the two checks every log must pass.
pub fn check_structural(log: &EventLog) -> Result<(), String> {
    check_monotonic(log)?;
    check_capacity(log)
}
