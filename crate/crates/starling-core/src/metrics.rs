//! Time-to-completion decomposition and scaling series.
//!
//! TTC splits into four non-overlapping components:
//!
//! * **core overhead** — toolkit init plus resource-request launch and
//!   cancel spans; independent of the task count.
//! * **pattern overhead** — the task creation/submission span; grows with
//!   the task count.
//! * **execution time** — first task start to last task end.
//! * **runtime overhead** — the remainder (queue wait and scheduler idle
//!   gaps outside the execution window).
//!
//! On the simulated backend the components sum to TTC exactly; on the
//! process backend the remainder definition keeps the identity within
//! measurement noise.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::event::{EventKind, EventLog, RunStamps};
use crate::pattern::parse_task_id;
use crate::task::{Seconds, TaskState};

/// Start/end window of one stage role, across all its tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSpan {
    pub start: Seconds,
    pub end: Seconds,
    pub duration: Seconds,
    pub n_tasks: usize,
}

/// Timestamps of one task, extracted from the log.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTiming {
    pub task_id: String,
    pub kernel: String,
    pub slots: u32,
    pub submit: Seconds,
    pub start: Seconds,
    pub end: Seconds,
    pub status: TaskState,
}

/// The full decomposition of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub ttc: Seconds,
    pub core_overhead: Seconds,
    pub pattern_overhead: Seconds,
    pub runtime_overhead: Seconds,
    pub execution_time: Seconds,
    pub per_stage: BTreeMap<String, StageSpan>,
    pub per_task: Vec<TaskTiming>,
    pub total_slots: u32,
    pub n_tasks: usize,
    /// Widest single task, i.e. slots per task in MPI-style workloads.
    pub max_task_slots: u32,
    pub kernels: BTreeSet<String>,
}

impl RunReport {
    /// Task count of the widest stage: the ensemble dimension that scaling
    /// modes are checked against (glue stages such as a single exchange or
    /// analysis task would otherwise skew the ratio).
    pub fn scaled_tasks(&self) -> usize {
        self.per_stage.values().map(|s| s.n_tasks).max().unwrap_or(0)
    }

    /// Flat component map used by scaling series and report writers.
    pub fn components(&self) -> BTreeMap<String, Seconds> {
        let mut m = BTreeMap::new();
        m.insert("ttc".to_string(), self.ttc);
        m.insert("core_overhead".to_string(), self.core_overhead);
        m.insert("pattern_overhead".to_string(), self.pattern_overhead);
        m.insert("runtime_overhead".to_string(), self.runtime_overhead);
        m.insert("execution_time".to_string(), self.execution_time);
        for (role, span) in &self.per_stage {
            m.insert(alloc::format!("stage:{role}"), span.duration);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// Fixed total work, varying slots.
    Strong,
    /// Fixed work per slot.
    Weak,
    /// Fixed concurrent tasks, varying slots per task.
    Mpi,
}

impl ScalingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScalingMode::Strong => "strong",
            ScalingMode::Weak => "weak",
            ScalingMode::Mpi => "mpi",
        }
    }
}

/// One row of a scaling series.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    pub slots: u32,
    pub n_tasks: usize,
    pub scaled_tasks: usize,
    pub slots_per_task: u32,
    pub components: BTreeMap<String, Seconds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSeries {
    pub mode: ScalingMode,
    pub points: Vec<ScalingPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("incomplete event log: {0}")]
    IncompleteLog(String),
    #[error("runs do not form a {0} series: {1}")]
    MixedModes(&'static str, String),
}

fn incomplete(what: &str) -> MetricsError {
    MetricsError::IncompleteLog(what.to_string())
}

/// Decomposes a finished run's log into a [`RunReport`].
pub fn decompose(log: &EventLog, stamps: &RunStamps) -> Result<RunReport, MetricsError> {
    let pilot_active = log
        .first_of(EventKind::PilotActive)
        .ok_or_else(|| incomplete("missing PilotActive"))?;
    log.first_of(EventKind::PatternFinished)
        .ok_or_else(|| incomplete("missing PatternFinished (run did not finish)"))?;
    log.first_of(EventKind::PilotCancelled)
        .ok_or_else(|| incomplete("missing PilotCancelled"))?;
    let first_start = log
        .first_of(EventKind::TaskStarted)
        .ok_or_else(|| incomplete("no TaskStarted events"))?
        .t;
    let last_end = log
        .last_of(EventKind::TaskEnded)
        .ok_or_else(|| incomplete("no TaskEnded events"))?
        .t;

    let ttc = stamps.run_end - stamps.run_start;
    let core_overhead = (stamps.init_done - stamps.run_start)
        + (stamps.allocate_done - stamps.init_done)
        + (stamps.run_end - stamps.cancel_start);
    let pattern_overhead = stamps.tasks_created - pilot_active.t;
    let execution_time = last_end - first_start;
    let runtime_overhead = ttc - core_overhead - pattern_overhead - execution_time;

    let mut per_task: BTreeMap<String, TaskTiming> = BTreeMap::new();
    let mut kernels = BTreeSet::new();
    for rec in log {
        let Some(task_id) = rec.task_id.as_deref() else { continue };
        let kernel = rec.kernel.clone().unwrap_or_default();
        kernels.insert(kernel.clone());
        let entry = per_task.entry(task_id.to_string()).or_insert_with(|| TaskTiming {
            task_id: task_id.to_string(),
            kernel,
            slots: rec.slots,
            submit: rec.t,
            start: 0.0,
            end: 0.0,
            status: TaskState::Pending,
        });
        match rec.kind {
            EventKind::TaskStarted => entry.start = rec.t,
            EventKind::TaskEnded => {
                entry.end = rec.t;
                entry.status = rec.status.unwrap_or(TaskState::Done);
            }
            _ => {}
        }
    }

    let mut per_stage: BTreeMap<String, StageSpan> = BTreeMap::new();
    for timing in per_task.values() {
        let role = parse_task_id(&timing.task_id)
            .map(|(role, _, _)| role.to_string())
            .unwrap_or_else(|| "unknown".to_string());
        let span = per_stage.entry(role).or_insert(StageSpan {
            start: timing.start,
            end: timing.end,
            duration: 0.0,
            n_tasks: 0,
        });
        span.start = span.start.min(timing.start);
        span.end = span.end.max(timing.end);
        span.n_tasks += 1;
    }
    for span in per_stage.values_mut() {
        span.duration = span.end - span.start;
    }

    let n_tasks = per_task.len();
    let max_task_slots = per_task.values().map(|t| t.slots).max().unwrap_or(0);
    Ok(RunReport {
        ttc,
        core_overhead,
        pattern_overhead,
        runtime_overhead,
        execution_time,
        per_stage,
        per_task: per_task.into_values().collect(),
        total_slots: pilot_active.slots,
        n_tasks,
        max_task_slots,
        kernels,
    })
}

fn require_same_kernels(reports: &[&RunReport], mode: &'static str) -> Result<(), MetricsError> {
    if let Some(first) = reports.first() {
        for r in &reports[1..] {
            if r.kernels != first.kernels {
                return Err(MetricsError::MixedModes(
                    mode,
                    "kernel sets differ across runs".to_string(),
                ));
            }
        }
    }
    Ok(())
}

fn point_of(report: &RunReport) -> ScalingPoint {
    ScalingPoint {
        slots: report.total_slots,
        n_tasks: report.n_tasks,
        scaled_tasks: report.scaled_tasks(),
        slots_per_task: report.max_task_slots,
        components: report.components(),
    }
}

/// Builds a strong- or weak-scaling series from per-run reports.
pub fn scaling_report(reports: &[RunReport], mode: ScalingMode) -> Result<ScalingSeries, MetricsError> {
    let mode_name = match mode {
        ScalingMode::Strong => "strong",
        ScalingMode::Weak => "weak",
        ScalingMode::Mpi => "mpi",
    };
    if reports.is_empty() {
        return Err(MetricsError::MixedModes(mode_name, "no runs given".to_string()));
    }
    let refs: Vec<&RunReport> = reports.iter().collect();
    require_same_kernels(&refs, mode_name)?;
    let first = &reports[0];
    match mode {
        ScalingMode::Strong => {
            for r in reports {
                if r.scaled_tasks() != first.scaled_tasks() {
                    return Err(MetricsError::MixedModes(
                        "strong",
                        alloc::format!(
                            "task count varies across runs ({} vs {})",
                            r.scaled_tasks(),
                            first.scaled_tasks()
                        ),
                    ));
                }
            }
        }
        ScalingMode::Weak => {
            for r in reports {
                let lhs = r.scaled_tasks() as u64 * first.total_slots as u64;
                let rhs = first.scaled_tasks() as u64 * r.total_slots as u64;
                if lhs != rhs {
                    return Err(MetricsError::MixedModes(
                        "weak",
                        alloc::format!(
                            "tasks/slots ratio varies across runs ({}/{} vs {}/{})",
                            r.scaled_tasks(),
                            r.total_slots,
                            first.scaled_tasks(),
                            first.total_slots
                        ),
                    ));
                }
            }
        }
        ScalingMode::Mpi => {
            return mpi_report(reports);
        }
    }
    let mut points: Vec<ScalingPoint> = reports.iter().map(point_of).collect();
    points.sort_by_key(|p| p.slots);
    Ok(ScalingSeries { mode, points })
}

/// Series over slots-per-task for MPI-style multi-slot workloads: runs must
/// share kernels and concurrent-task counts and differ only in the slot
/// demand per task.
pub fn mpi_report(reports: &[RunReport]) -> Result<ScalingSeries, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::MixedModes("mpi", "no runs given".to_string()));
    }
    let refs: Vec<&RunReport> = reports.iter().collect();
    require_same_kernels(&refs, "mpi")?;
    let first = &reports[0];
    for r in reports {
        if r.scaled_tasks() != first.scaled_tasks() {
            return Err(MetricsError::MixedModes(
                "mpi",
                alloc::format!(
                    "concurrent task count varies across runs ({} vs {})",
                    r.scaled_tasks(),
                    first.scaled_tasks()
                ),
            ));
        }
    }
    let mut points: Vec<ScalingPoint> = reports.iter().map(point_of).collect();
    points.sort_by_key(|p| p.slots_per_task);
    Ok(ScalingSeries { mode: ScalingMode::Mpi, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelRegistry;
    use crate::pattern::{EoPParams, PatternSpec, PatternState, PatternVariant, StageBinding};
    use crate::runtime::{RunConfig, SimTuning};
    use crate::sim::run_simulated;
    use crate::task::{Backend, ResourceRequest};
    use std::collections::BTreeMap as StdBTreeMap;

    fn eop_spec(n: u32, stages: &[(&str, f64)]) -> PatternSpec {
        let mut stage_kernels = StdBTreeMap::new();
        for (s, (kernel, duration)) in stages.iter().enumerate() {
            stage_kernels.insert(
                format!("stage{s}"),
                StageBinding {
                    kernel: kernel.to_string(),
                    args: vec![("duration".to_string(), duration.to_string())],
                    slots_required: 1,
                },
            );
        }
        PatternSpec {
            variant: PatternVariant::EnsembleOfPipelines(EoPParams {
                n_pipelines: n,
                n_stages: stages.len() as u32,
            }),
            stage_kernels,
        }
    }

    fn run(
        spec: &PatternSpec,
        slots: u32,
        tuning: SimTuning,
    ) -> (crate::event::EventLog, crate::event::RunStamps) {
        let reg = KernelRegistry::with_builtins();
        let mut pattern = PatternState::instantiate(spec, &reg, 0).unwrap();
        let request = ResourceRequest {
            total_slots: slots,
            walltime_limit: 1e9,
            backend: Backend::Simulated,
            queue_wait: 0.0,
        };
        let outcome =
            run_simulated(&mut pattern, &request, &reg, RunConfig::default(), tuning).unwrap();
        (outcome.log, outcome.stamps)
    }

    #[test]
    fn zero_overhead_run_is_pure_execution() {
        // 4 unit tasks on 2 slots: two waves, makespan 2.0.
        let (log, stamps) = run(&eop_spec(4, &[("synthetic-sim", 1.0)]), 2, SimTuning::default());
        let report = decompose(&log, &stamps).unwrap();
        assert_eq!(report.ttc, 2.0);
        assert_eq!(report.execution_time, 2.0);
        assert_eq!(report.core_overhead, 0.0);
        assert_eq!(report.pattern_overhead, 0.0);
        assert_eq!(report.runtime_overhead, 0.0);
        assert_eq!(report.n_tasks, 4);
        assert_eq!(report.total_slots, 2);
    }

    #[test]
    fn components_sum_to_ttc_exactly() {
        let tuning = SimTuning {
            init_latency: 0.25,
            allocate_latency: 0.5,
            dispatch_latency: 0.0078125,
            cancel_latency: 0.125,
        };
        let (log, stamps) = run(&eop_spec(8, &[("synthetic-sim", 1.0), ("synthetic-sim", 0.5)]), 8, tuning);
        let report = decompose(&log, &stamps).unwrap();
        assert_eq!(
            report.core_overhead + report.pattern_overhead + report.runtime_overhead
                + report.execution_time,
            report.ttc
        );
        assert_eq!(report.core_overhead, 0.25 + 0.5 + 0.125);
        assert_eq!(report.pattern_overhead, 16.0 * 0.0078125);
    }

    #[test]
    fn pattern_overhead_grows_with_task_count_core_constant() {
        let tuning = SimTuning { dispatch_latency: 0.01, init_latency: 0.5, ..Default::default() };
        let (log_a, stamps_a) = run(&eop_spec(4, &[("synthetic-sim", 1.0)]), 4, tuning);
        let (log_b, stamps_b) = run(&eop_spec(16, &[("synthetic-sim", 1.0)]), 16, tuning);
        let a = decompose(&log_a, &stamps_a).unwrap();
        let b = decompose(&log_b, &stamps_b).unwrap();
        assert!(b.pattern_overhead > a.pattern_overhead);
        assert_eq!(a.core_overhead, b.core_overhead);
    }

    #[test]
    fn kernel_swap_leaves_overheads_bitwise_equal() {
        let tuning = SimTuning {
            init_latency: 0.125,
            allocate_latency: 0.25,
            dispatch_latency: 0.03125,
            cancel_latency: 0.0625,
        };
        let (log_a, stamps_a) = run(&eop_spec(6, &[("synthetic-sim", 2.0)]), 3, tuning);
        let (log_b, stamps_b) = run(&eop_spec(6, &[("sleep", 7.5)]), 3, tuning);
        let a = decompose(&log_a, &stamps_a).unwrap();
        let b = decompose(&log_b, &stamps_b).unwrap();
        assert_eq!(a.core_overhead.to_bits(), b.core_overhead.to_bits());
        assert_eq!(a.pattern_overhead.to_bits(), b.pattern_overhead.to_bits());
        assert_eq!(a.runtime_overhead.to_bits(), b.runtime_overhead.to_bits());
        assert_ne!(a.execution_time, b.execution_time);
    }

    #[test]
    fn queue_wait_lands_in_runtime_overhead() {
        let reg = KernelRegistry::with_builtins();
        let spec = eop_spec(2, &[("synthetic-sim", 1.0)]);
        let mut pattern = PatternState::instantiate(&spec, &reg, 0).unwrap();
        let request = ResourceRequest {
            total_slots: 2,
            walltime_limit: 1e9,
            backend: Backend::Simulated,
            queue_wait: 3.5,
        };
        let outcome = run_simulated(
            &mut pattern,
            &request,
            &reg,
            RunConfig::default(),
            SimTuning::default(),
        )
        .unwrap();
        let report = decompose(&outcome.log, &outcome.stamps).unwrap();
        assert_eq!(report.runtime_overhead, 3.5);
        assert_eq!(report.ttc, 4.5);
    }

    #[test]
    fn incomplete_log_rejected() {
        let log = EventLog::new();
        let err = decompose(&log, &RunStamps::default()).unwrap_err();
        assert!(matches!(err, MetricsError::IncompleteLog(_)));
    }

    #[test]
    fn mixed_kernel_sets_rejected() {
        let (log_a, stamps_a) = run(&eop_spec(2, &[("synthetic-sim", 1.0)]), 2, SimTuning::default());
        let (log_b, stamps_b) = run(&eop_spec(2, &[("sleep", 1.0)]), 2, SimTuning::default());
        let a = decompose(&log_a, &stamps_a).unwrap();
        let b = decompose(&log_b, &stamps_b).unwrap();
        assert!(mpi_report(&[a, b]).is_err());
    }

    #[test]
    fn single_point_mpi_series_is_valid() {
        let (log, stamps) = run(&eop_spec(2, &[("synthetic-sim", 1.0)]), 2, SimTuning::default());
        let report = decompose(&log, &stamps).unwrap();
        let series = mpi_report(&[report]).unwrap();
        assert_eq!(series.points.len(), 1);
        assert_eq!(series.points[0].slots_per_task, 1);
    }
}
