//! Engine-vs-oracle comparison for randomized workloads.

use starling_core::event::EventKind;
use starling_core::pattern::PatternState;
use starling_core::runtime::{RunConfig, RunOutcome, SimTuning};
use starling_core::sim::run_simulated;
use starling_core::task::{Backend, ResourceRequest};

use crate::gen::{build_pattern_spec, table_registry};
use crate::oracle::{simulate, OracleEvent, OracleWorkload};

/// Runs the engine on the workload with zero injected overheads.
pub fn run_engine(w: &OracleWorkload) -> RunOutcome {
    let registry = table_registry(w);
    let spec = build_pattern_spec(w);
    let mut pattern = PatternState::instantiate(&spec, &registry, 0).expect("generated spec valid");
    let request = ResourceRequest {
        total_slots: w.total_slots,
        walltime_limit: 1e12,
        backend: Backend::Simulated,
        queue_wait: 0.0,
    };
    run_simulated(&mut pattern, &request, &registry, RunConfig::default(), SimTuning::default())
        .expect("generated workload runs to completion")
}

/// Task events of an engine log, in the oracle's event shape.
pub fn engine_task_events(outcome: &RunOutcome) -> Vec<OracleEvent> {
    outcome
        .log
        .iter()
        .filter(|rec| {
            matches!(
                rec.kind,
                EventKind::TaskScheduled | EventKind::TaskStarted | EventKind::TaskEnded
            )
        })
        .map(|rec| OracleEvent {
            t: rec.t,
            kind: rec.kind.as_str(),
            task_id: rec.task_id.clone().expect("task events carry an id"),
            slots: rec.slots,
        })
        .collect()
}

/// Runs both routes and demands exact agreement: same makespan, same event
/// sequence (kind, task, timestamp, slots). Returns the makespan.
pub fn compare_with_oracle(w: &OracleWorkload) -> Result<f64, String> {
    let outcome = run_engine(w);
    let engine_events = engine_task_events(&outcome);
    let oracle = simulate(w);
    if engine_events.len() != oracle.events.len() {
        return Err(format!(
            "event counts differ: engine {} vs oracle {}\nengine: {engine_events:#?}\noracle: {:#?}",
            engine_events.len(),
            oracle.events.len(),
            oracle.events
        ));
    }
    for (i, (e, o)) in engine_events.iter().zip(oracle.events.iter()).enumerate() {
        if e != o {
            return Err(format!("event {i} differs:\n  engine: {e:?}\n  oracle: {o:?}"));
        }
    }
    let engine_makespan = outcome
        .log
        .last_of(EventKind::TaskEnded)
        .map(|r| r.t)
        .unwrap_or(0.0);
    if engine_makespan != oracle.makespan {
        return Err(format!(
            "makespan differs: engine {engine_makespan} vs oracle {}",
            oracle.makespan
        ));
    }
    Ok(oracle.makespan)
}
