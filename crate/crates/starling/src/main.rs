//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on run failure (task failed permanently,
//! walltime exceeded), 2 on usage or spec parse errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use starling::report::{
    read_event_log, render_report_text, render_report_tsv, render_series_tsv, render_tasks_tsv,
    write_event_log, write_string,
};
use starling::specfile::WorkloadSpec;
use starling::suites::{build_suite, SuiteMode};
use starling::{run_workload, ExecOptions, RunPaths};
use starling_core::metrics::{decompose, mpi_report, scaling_report, RunReport, ScalingMode};

#[derive(Parser)]
#[command(name = "starling", version, about = "Ensemble-workflow execution engine")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a workload spec file and write its event log and report.
    Run {
        /// Path to the workload spec (TOML).
        spec: PathBuf,
        /// Override the backend: `simulated` or `local-process`.
        #[arg(long)]
        backend: Option<String>,
        /// Override the pilot's slot count.
        #[arg(long)]
        slots: Option<u32>,
        /// Override the run seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the spec's output_dir, else
        /// `starling-out/<spec-stem>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in experiment suite and write its scaling series.
    Experiment {
        /// One of: pattern-validation, ee-strong, ee-weak, sal-strong,
        /// sal-weak, mpi.
        name: String,
        /// Uniformly divide sweep sizes for a faster run.
        #[arg(long, default_value_t = 1)]
        scale_factor: u32,
        /// Output directory (default: `starling-out/experiments/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the decomposition report from an event log.
    Report {
        /// Path to an `events.log` file.
        eventlog: PathBuf,
    },
    /// Internal kernel runner; invoked by the process backend.
    #[command(hide = true)]
    Kernel {
        name: String,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

const EXIT_RUN_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    match Cli::parse().command {
        Cmd::Run { spec, backend, slots, seed, out } => cmd_run(&spec, backend, slots, seed, out),
        Cmd::Experiment { name, scale_factor, out } => cmd_experiment(&name, scale_factor, out),
        Cmd::Report { eventlog } => cmd_report(&eventlog),
        Cmd::Kernel { name, args } => match starling::runner::run(&name, &args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("kernel {name}: {e:#}");
                ExitCode::from(EXIT_RUN_FAILURE)
            }
        },
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn cmd_run(
    spec_path: &Path,
    backend: Option<String>,
    slots: Option<u32>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> ExitCode {
    let mut spec = match WorkloadSpec::load(spec_path) {
        Ok(spec) => spec,
        Err(e) => return usage_error(e),
    };
    if let Some(backend) = backend {
        spec.resource.backend = backend;
    }
    if let Some(slots) = slots {
        spec.resource.total_slots = slots;
    }
    if let Some(seed) = seed {
        spec.run.seed = seed;
    }
    // Re-validate after overrides.
    if let Err(e) = spec.resource_request() {
        return usage_error(e);
    }
    let out_dir = out
        .or_else(|| spec.run.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| {
            let stem = spec_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            PathBuf::from("starling-out").join(stem)
        });
    let paths = RunPaths::new(&out_dir);
    let opts = ExecOptions { runner: None, run_root: Some(out_dir.clone()), cancel: None };

    let result = match run_workload(&spec, &opts) {
        Ok(result) => result,
        Err(e) => return usage_error(e),
    };
    match result {
        Ok(outcome) => {
            if let Err(e) = write_event_log(&paths.events, &outcome.log, &outcome.stamps) {
                return usage_error(e);
            }
            let report = match decompose(&outcome.log, &outcome.stamps) {
                Ok(report) => report,
                Err(e) => return usage_error(e),
            };
            let rendered = render_report_text(&report);
            let ok = write_string(&paths.report_tsv, &render_report_tsv(&report))
                .and_then(|_| write_string(&paths.tasks_tsv, &render_tasks_tsv(&report)))
                .and_then(|_| write_string(&paths.report_txt, &rendered));
            if let Err(e) = ok {
                return usage_error(e);
            }
            print!("{rendered}");
            println!("artifacts: {}", out_dir.display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            // Keep the partial log for post-mortem analysis.
            let _ = write_event_log(&paths.events, &failure.partial.log, &failure.partial.stamps);
            eprintln!("run failed: {}", failure.error);
            eprintln!("partial event log: {}", paths.events.display());
            ExitCode::from(EXIT_RUN_FAILURE)
        }
    }
}

fn cmd_experiment(name: &str, scale_factor: u32, out: Option<PathBuf>) -> ExitCode {
    let suite = match build_suite(name, scale_factor) {
        Ok(suite) => suite,
        Err(e) => return usage_error(e),
    };
    let out_dir =
        out.unwrap_or_else(|| PathBuf::from("starling-out").join("experiments").join(name));
    let mut reports: Vec<(String, RunReport)> = Vec::new();
    for point in &suite.points {
        let result = match run_workload(&point.spec, &ExecOptions::default()) {
            Ok(result) => result,
            Err(e) => return usage_error(e),
        };
        match result {
            Ok(outcome) => {
                let report = match decompose(&outcome.log, &outcome.stamps) {
                    Ok(report) => report,
                    Err(e) => return usage_error(e),
                };
                println!(
                    "{name} {label}: ttc {ttc}s execution {exec}s",
                    label = point.label,
                    ttc = report.ttc,
                    exec = report.execution_time
                );
                reports.push((point.label.clone(), report));
            }
            Err(failure) => {
                eprintln!("{name} {}: run failed: {}", point.label, failure.error);
                return ExitCode::from(EXIT_RUN_FAILURE);
            }
        }
    }
    let rendered = match suite.mode {
        SuiteMode::Scaling(mode) => {
            let plain: Vec<RunReport> = reports.iter().map(|(_, r)| r.clone()).collect();
            let series = match mode {
                ScalingMode::Mpi => mpi_report(&plain),
                other => scaling_report(&plain, other),
            };
            match series {
                Ok(series) => render_series_tsv(&series),
                Err(e) => return usage_error(e),
            }
        }
        SuiteMode::PatternValidation => {
            let mut out = String::from(
                "point\tn_tasks\tslots\texecution_time\tcore_overhead\tpattern_overhead\truntime_overhead\tttc\n",
            );
            for (label, r) in &reports {
                out.push_str(&format!(
                    "{label}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    r.n_tasks,
                    r.total_slots,
                    r.execution_time,
                    r.core_overhead,
                    r.pattern_overhead,
                    r.runtime_overhead,
                    r.ttc
                ));
            }
            out
        }
    };
    let series_path = out_dir.join("series.tsv");
    if let Err(e) = write_string(&series_path, &rendered) {
        return usage_error(e);
    }
    println!("series: {}", series_path.display());
    ExitCode::SUCCESS
}

fn cmd_report(eventlog: &Path) -> ExitCode {
    let (log, stamps) = match read_event_log(eventlog) {
        Ok(parsed) => parsed,
        Err(e) => return usage_error(e),
    };
    match decompose(&log, &stamps) {
        Ok(report) => {
            print!("{}", render_report_text(&report));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cannot decompose: {e}");
            ExitCode::from(EXIT_RUN_FAILURE)
        }
    }
}
