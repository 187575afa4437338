//! On-disk formats: event logs, run reports, and scaling series.
//!
//! ## Event log (`events.log`)
//!
//! Line-oriented. Header lines carry the engine stamps:
//!
//! ```text
//! #starling-eventlog v1
//! #stamp run_start 0
//! #stamp init_done 0
//! ...
//! ```
//!
//! followed by one tab-separated record per event:
//!
//! ```text
//! timestamp<TAB>kind<TAB>task_id<TAB>kernel<TAB>slots<TAB>status
//! ```
//!
//! `task_id`, `kernel` and `status` are `-` when not applicable;
//! `PilotActive` reuses `slots` for the pilot's total slot count.
//! Timestamps use Rust's shortest round-trip float formatting, so parsing a
//! log back yields bit-identical values and reruns of the same seed produce
//! byte-identical files.
//!
//! ## Run report (`report.tsv`, `tasks.tsv`)
//!
//! `report.tsv` is a `metric<TAB>value` stream with fixed metric names
//! (`ttc`, `core_overhead`, `pattern_overhead`, `runtime_overhead`,
//! `execution_time`, `total_slots`, `n_tasks`, `max_task_slots`, plus
//! `stage:<role>` durations). `tasks.tsv` has one row per task:
//! `task_id kernel slots submit start end status`.
//!
//! ## Scaling series (`series.tsv`)
//!
//! One row per run: `slots n_tasks scaled_tasks slots_per_task` followed by
//! the component columns named in the header.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use starling_core::event::{EventKind, EventLog, EventRecord, RunStamps};
use starling_core::metrics::{RunReport, ScalingSeries};
use starling_core::task::TaskState;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> ReportError {
    ReportError::Io { path: path.display().to_string(), source }
}

const EVENTLOG_MAGIC: &str = "#starling-eventlog v1";
const STAMP_FIELDS: [&str; 6] =
    ["run_start", "init_done", "allocate_done", "tasks_created", "cancel_start", "run_end"];

fn opt(s: &Option<String>) -> &str {
    s.as_deref().unwrap_or("-")
}

/// Renders a log plus stamps in the documented line format.
pub fn render_event_log(log: &EventLog, stamps: &RunStamps) -> String {
    let mut out = String::new();
    out.push_str(EVENTLOG_MAGIC);
    out.push('\n');
    let values = [
        stamps.run_start,
        stamps.init_done,
        stamps.allocate_done,
        stamps.tasks_created,
        stamps.cancel_start,
        stamps.run_end,
    ];
    for (name, value) in STAMP_FIELDS.iter().zip(values) {
        let _ = writeln!(out, "#stamp {name} {value}");
    }
    for rec in log {
        let status = match rec.status {
            Some(TaskState::Done) => "done",
            Some(TaskState::Failed) => "failed",
            Some(other) => other.as_str(),
            None => "-",
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            rec.t,
            rec.kind,
            opt(&rec.task_id),
            opt(&rec.kernel),
            rec.slots,
            status
        );
    }
    out
}

pub fn write_event_log(path: &Path, log: &EventLog, stamps: &RunStamps) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    fs::write(path, render_event_log(log, stamps)).map_err(|e| io_err(path, e))
}

/// Parses a log file back into records and stamps.
pub fn read_event_log(path: &Path) -> Result<(EventLog, RunStamps), ReportError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_event_log(&text, &path.display().to_string())
}

pub fn parse_event_log(text: &str, origin: &str) -> Result<(EventLog, RunStamps), ReportError> {
    let malformed = |line: usize, message: String| ReportError::Malformed {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, line)) if line == EVENTLOG_MAGIC => {}
        _ => return Err(malformed(1, format!("missing `{EVENTLOG_MAGIC}` header"))),
    }
    let mut stamps = RunStamps::default();
    let mut records = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#stamp ") {
            let (name, value) = rest
                .split_once(' ')
                .ok_or_else(|| malformed(lineno, "bad stamp line".into()))?;
            let value: f64 = value
                .parse()
                .map_err(|_| malformed(lineno, format!("bad stamp value `{value}`")))?;
            match name {
                "run_start" => stamps.run_start = value,
                "init_done" => stamps.init_done = value,
                "allocate_done" => stamps.allocate_done = value,
                "tasks_created" => stamps.tasks_created = value,
                "cancel_start" => stamps.cancel_start = value,
                "run_end" => stamps.run_end = value,
                other => return Err(malformed(lineno, format!("unknown stamp `{other}`"))),
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(malformed(lineno, format!("expected 6 fields, got {}", fields.len())));
        }
        let t: f64 = fields[0]
            .parse()
            .map_err(|_| malformed(lineno, format!("bad timestamp `{}`", fields[0])))?;
        let kind = EventKind::parse(fields[1])
            .ok_or_else(|| malformed(lineno, format!("unknown event kind `{}`", fields[1])))?;
        let slots: u32 = fields[4]
            .parse()
            .map_err(|_| malformed(lineno, format!("bad slot count `{}`", fields[4])))?;
        let status = match fields[5] {
            "-" => None,
            "done" => Some(TaskState::Done),
            "failed" => Some(TaskState::Failed),
            other => return Err(malformed(lineno, format!("unknown status `{other}`"))),
        };
        let none_if_dash = |s: &str| if s == "-" { None } else { Some(s.to_string()) };
        records.push(EventRecord {
            t,
            kind,
            task_id: none_if_dash(fields[2]),
            kernel: none_if_dash(fields[3]),
            slots,
            status,
        });
    }
    Ok((EventLog::from_records(records), stamps))
}

/// Fixed-name `metric<TAB>value` stream.
pub fn render_report_tsv(report: &RunReport) -> String {
    let mut out = String::from("metric\tvalue\n");
    for (name, value) in report.components() {
        let _ = writeln!(out, "{name}\t{value}");
    }
    let _ = writeln!(out, "total_slots\t{}", report.total_slots);
    let _ = writeln!(out, "n_tasks\t{}", report.n_tasks);
    let _ = writeln!(out, "max_task_slots\t{}", report.max_task_slots);
    out
}

/// One row per task with its lifecycle timestamps.
pub fn render_tasks_tsv(report: &RunReport) -> String {
    let mut out = String::from("task_id\tkernel\tslots\tsubmit\tstart\tend\tstatus\n");
    for t in &report.per_task {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            t.task_id, t.kernel, t.slots, t.submit, t.start, t.end, t.status
        );
    }
    out
}

/// Human-readable decomposition table.
pub fn render_report_text(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "time to completion  {:>14.6} s", report.ttc);
    let _ = writeln!(out, "  core overhead     {:>14.6} s", report.core_overhead);
    let _ = writeln!(out, "  pattern overhead  {:>14.6} s", report.pattern_overhead);
    let _ = writeln!(out, "  runtime overhead  {:>14.6} s", report.runtime_overhead);
    let _ = writeln!(out, "  execution time    {:>14.6} s", report.execution_time);
    let _ = writeln!(
        out,
        "tasks: {}   slots: {}   widest task: {} slot(s)",
        report.n_tasks, report.total_slots, report.max_task_slots
    );
    if !report.per_stage.is_empty() {
        let _ = writeln!(out, "per-stage windows:");
        for (role, span) in &report.per_stage {
            let _ = writeln!(
                out,
                "  {:<14} [{:>12.6}, {:>12.6})  {:>12.6} s  {:>6} task(s)",
                role, span.start, span.end, span.duration, span.n_tasks
            );
        }
    }
    out
}

/// Series table: fixed leading columns, then component columns named in the
/// header (union of all points, `-` where a point lacks one).
pub fn render_series_tsv(series: &ScalingSeries) -> String {
    let mut component_names: Vec<String> = Vec::new();
    for point in &series.points {
        for name in point.components.keys() {
            if !component_names.contains(name) {
                component_names.push(name.clone());
            }
        }
    }
    component_names.sort();
    let mut out = String::from("slots\tn_tasks\tscaled_tasks\tslots_per_task");
    for name in &component_names {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for point in &series.points {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}",
            point.slots, point.n_tasks, point.scaled_tasks, point.slots_per_task
        );
        for name in &component_names {
            match point.components.get(name) {
                Some(v) => {
                    let _ = write!(out, "\t{v}");
                }
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_string(path: &Path, content: &str) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    fs::write(path, content).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use starling_core::event::EventRecord;

    fn sample() -> (EventLog, RunStamps) {
        let mut log = EventLog::new();
        log.push(EventRecord::pilot_active(0.0, 4));
        log.push(EventRecord {
            t: 0.5,
            kind: EventKind::TaskScheduled,
            task_id: Some("stage0.i0.m0".into()),
            kernel: Some("sleep".into()),
            slots: 1,
            status: None,
        });
        log.push(EventRecord {
            t: 1.0078125,
            kind: EventKind::TaskEnded,
            task_id: Some("stage0.i0.m0".into()),
            kernel: Some("sleep".into()),
            slots: 1,
            status: Some(TaskState::Done),
        });
        log.push(EventRecord::marker(1.0078125, EventKind::PatternFinished));
        log.push(EventRecord::marker(1.0078125, EventKind::PilotCancelled));
        let stamps = RunStamps {
            run_start: 0.0,
            init_done: 0.0,
            allocate_done: 0.0,
            tasks_created: 0.5,
            cancel_start: 1.0078125,
            run_end: 1.0078125,
        };
        (log, stamps)
    }

    #[test]
    fn event_log_round_trips_bit_exactly() {
        let (log, stamps) = sample();
        let text = render_event_log(&log, &stamps);
        let (parsed_log, parsed_stamps) = parse_event_log(&text, "<test>").unwrap();
        assert_eq!(parsed_log, log);
        assert_eq!(parsed_stamps, stamps);
        // Re-render: byte identical.
        assert_eq!(render_event_log(&parsed_log, &parsed_stamps), text);
    }

    #[test]
    fn malformed_lines_are_located() {
        let (log, stamps) = sample();
        let mut text = render_event_log(&log, &stamps);
        text.push_str("not a record\n");
        let err = parse_event_log(&text, "<test>").unwrap_err();
        assert!(matches!(err, ReportError::Malformed { .. }), "{err}");
    }

    #[test]
    fn missing_magic_rejected() {
        assert!(parse_event_log("1.0\tPilotActive\t-\t-\t4\t-\n", "<test>").is_err());
    }
}
