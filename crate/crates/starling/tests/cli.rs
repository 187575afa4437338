//! End-to-end tests of the CLI, the spec files, and the process backend.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use starling::local::{run_local, CancelToken, LocalConfig};
use starling::report::read_event_log;
use starling::specfile::WorkloadSpec;
use starling::{run_workload, ExecOptions};
use starling_core::kernel::{
    ArgKind, ArgSpec, CommandArg, ExecutablePlan, KernelPlugin, KernelRegistry, ProgramRef,
};
use starling_core::metrics::decompose;
use starling_core::pattern::{EoPParams, PatternSpec, PatternState, PatternVariant, StageBinding};
use starling_core::runtime::{RunConfig, RunError, SimTuning};
use starling_core::sim::run_simulated;
use starling_core::task::{Backend, ResourceRequest, TaskState};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_starling")
}

fn workloads() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../workloads")
}

#[test]
fn shipped_workloads_parse_and_round_trip() {
    let dir = workloads();
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("spec") {
            continue;
        }
        seen += 1;
        let spec = WorkloadSpec::load(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
        let reparsed = WorkloadSpec::parse_str(&spec.to_toml()).unwrap();
        assert_eq!(spec, reparsed, "{path:?} must round-trip");
    }
    assert!(seen >= 3, "expected the shipped example specs, found {seen}");
}

#[test]
fn ccount_outputs_match_mkfile_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut spec = WorkloadSpec::load(&workloads().join("ccount.spec")).unwrap();
    spec.pattern.pipelines = Some(4); // desk-size variant; full 24 runs in acceptance
    spec.resource.total_slots = 4;
    let opts = ExecOptions {
        runner: Some(PathBuf::from(bin())),
        run_root: Some(tmp.path().to_path_buf()),
        cancel: None,
    };
    let outcome = run_workload(&spec, &opts).unwrap().unwrap();
    assert!(outcome.tasks.values().all(|t| t.state == TaskState::Done));
    for member in 0..4 {
        let made = tmp.path().join(format!("run/0/0/{member}/data.out"));
        let counted = tmp.path().join(format!("run/0/1/{member}/stdout"));
        assert_eq!(fs::metadata(&made).unwrap().len(), 1000);
        let stdout = fs::read_to_string(&counted).unwrap();
        assert_eq!(stdout.trim(), "1000");
    }
    let report = decompose(&outcome.log, &outcome.stamps).unwrap();
    let sum = report.core_overhead
        + report.pattern_overhead
        + report.runtime_overhead
        + report.execution_time;
    assert!((sum - report.ttc).abs() <= 0.02 * report.ttc.max(f64::EPSILON));
}

#[test]
fn mkfile_reruns_are_byte_identical_under_a_seed() {
    let read_all = |root: &Path| -> Vec<Vec<u8>> {
        (0..2).map(|m| fs::read(root.join(format!("run/0/0/{m}/data.out"))).unwrap()).collect()
    };
    let mut spec = WorkloadSpec::load(&workloads().join("ccount.spec")).unwrap();
    spec.pattern.pipelines = Some(2);
    spec.resource.total_slots = 2;
    let mut contents = Vec::new();
    for _ in 0..2 {
        let tmp = tempfile::tempdir().unwrap();
        let opts = ExecOptions {
            runner: Some(PathBuf::from(bin())),
            run_root: Some(tmp.path().to_path_buf()),
            cancel: None,
        };
        run_workload(&spec, &opts).unwrap().unwrap();
        contents.push(read_all(tmp.path()));
    }
    assert_eq!(contents[0], contents[1], "same seed, same bytes");
    assert_ne!(contents[0][0], contents[0][1], "different members, different content");
}

/// Custom kernel with per-member durations, resolvable on both backends, so
/// completion order is strictly staggered.
fn stagger_registry() -> KernelRegistry {
    let mut reg = KernelRegistry::with_builtins();
    reg.register(KernelPlugin::new(
        "stagger",
        vec![
            ArgSpec::required("member", ArgKind::Value, "member index"),
            ArgSpec::required("base", ArgKind::Value, "duration of member 0"),
            ArgSpec::required("step", ArgKind::Value, "per-member increment"),
        ],
        |args, backend| {
            let member = args.u64_or("stagger", "member", 0)? as f64;
            let duration = args.f64("stagger", "base")? + member * args.f64("stagger", "step")?;
            match backend {
                Backend::Simulated => Ok(ExecutablePlan::simulated(duration)),
                Backend::LocalProcess => Ok(ExecutablePlan::Command {
                    program: ProgramRef::KernelRunner,
                    args: vec![
                        CommandArg::Lit("sleep".into()),
                        CommandArg::Lit("--duration".into()),
                        CommandArg::Lit(duration.to_string()),
                    ],
                }),
            }
        },
    ))
    .unwrap();
    reg
}

fn stagger_spec() -> PatternSpec {
    let binding = StageBinding {
        kernel: "stagger".into(),
        args: vec![
            ("member".into(), "{member}".into()),
            ("base".into(), "0.1".into()),
            ("step".into(), "0.25".into()),
        ],
        slots_required: 1,
    };
    PatternSpec {
        variant: PatternVariant::EnsembleOfPipelines(EoPParams { n_pipelines: 2, n_stages: 2 }),
        stage_kernels: [("stage0".to_string(), binding.clone()), ("stage1".to_string(), binding)]
            .into_iter()
            .collect(),
    }
}

/// Same workload on both backends: wall-clock timestamps differ, but event
/// order and slot assignments match the virtual run exactly.
#[test]
fn backends_agree_on_event_ordering() {
    let registry = stagger_registry();
    let spec = stagger_spec();
    let sequence = |log: &starling_core::event::EventLog| -> Vec<(String, String, u32)> {
        log.iter()
            .map(|r| {
                (
                    r.kind.to_string(),
                    r.task_id.clone().unwrap_or_else(|| "-".into()),
                    r.slots,
                )
            })
            .collect()
    };

    let mut sim_pattern = PatternState::instantiate(&spec, &registry, 0).unwrap();
    let sim_request = ResourceRequest {
        total_slots: 2,
        walltime_limit: 1e9,
        backend: Backend::Simulated,
        queue_wait: 0.0,
    };
    let sim = run_simulated(
        &mut sim_pattern,
        &sim_request,
        &registry,
        RunConfig::default(),
        SimTuning::default(),
    )
    .unwrap();

    let tmp = tempfile::tempdir().unwrap();
    let mut local_pattern = PatternState::instantiate(&spec, &registry, 0).unwrap();
    let local_request = ResourceRequest { backend: Backend::LocalProcess, ..sim_request };
    let local_cfg = LocalConfig::new(PathBuf::from(bin()), tmp.path().to_path_buf());
    let local = run_local(
        &mut local_pattern,
        &local_request,
        &registry,
        RunConfig::default(),
        &local_cfg,
        &CancelToken::new(),
    )
    .unwrap();

    assert_eq!(sequence(&sim.log), sequence(&local.log));
}

#[test]
fn cancel_kills_running_children() {
    let registry = KernelRegistry::with_builtins();
    let binding = StageBinding {
        kernel: "sleep".into(),
        args: vec![("duration".into(), "30".into())],
        slots_required: 1,
    };
    let spec = PatternSpec {
        variant: PatternVariant::EnsembleOfPipelines(EoPParams { n_pipelines: 2, n_stages: 1 }),
        stage_kernels: [("stage0".to_string(), binding)].into_iter().collect(),
    };
    let mut pattern = PatternState::instantiate(&spec, &registry, 0).unwrap();
    let request = ResourceRequest {
        total_slots: 2,
        walltime_limit: 1e9,
        backend: Backend::LocalProcess,
        queue_wait: 0.0,
    };
    let tmp = tempfile::tempdir().unwrap();
    let local_cfg = LocalConfig::new(PathBuf::from(bin()), tmp.path().to_path_buf());
    let cancel = CancelToken::new();
    let canceller = cancel.clone();
    let t0 = std::time::Instant::now();
    std::thread::spawn(move || {
        std::thread::sleep(std::time::Duration::from_millis(300));
        canceller.cancel();
    });
    let failure = run_local(
        &mut pattern,
        &request,
        &registry,
        RunConfig::default(),
        &local_cfg,
        &cancel,
    )
    .unwrap_err();
    assert!(matches!(failure.error, RunError::Cancelled));
    assert!(t0.elapsed() < std::time::Duration::from_secs(10), "children must be reaped promptly");
    assert!(failure.partial.tasks.values().all(|t| t.state == TaskState::Failed));
    assert_eq!(
        failure.partial.pilot.state,
        starling_core::runtime::PilotState::Cancelled
    );
}

#[test]
fn flaky_task_retries_through_real_processes() {
    let mut registry = KernelRegistry::with_builtins();
    registry
        .register(KernelPlugin::new(
            "flaky",
            vec![ArgSpec::required("fails", ArgKind::Value, "attempts that fail")],
            |args, _| {
                Ok(ExecutablePlan::Command {
                    program: ProgramRef::KernelRunner,
                    args: vec![
                        CommandArg::Lit("flaky".into()),
                        CommandArg::Lit("--fails".into()),
                        CommandArg::Lit(args.get("fails").unwrap().into()),
                    ],
                })
            },
        ))
        .unwrap();
    let spec = PatternSpec {
        variant: PatternVariant::EnsembleOfPipelines(EoPParams { n_pipelines: 1, n_stages: 1 }),
        stage_kernels: [(
            "stage0".to_string(),
            StageBinding {
                kernel: "flaky".into(),
                args: vec![("fails".into(), "1".into())],
                slots_required: 1,
            },
        )]
        .into_iter()
        .collect(),
    };
    let request = ResourceRequest {
        total_slots: 1,
        walltime_limit: 30.0,
        backend: Backend::LocalProcess,
        queue_wait: 0.0,
    };
    let tmp = tempfile::tempdir().unwrap();
    let local_cfg = LocalConfig::new(PathBuf::from(bin()), tmp.path().to_path_buf());
    let mut pattern = PatternState::instantiate(&spec, &registry, 0).unwrap();
    let outcome = run_local(
        &mut pattern,
        &request,
        &registry,
        RunConfig { retry_limit: 1, seed: 0 },
        &local_cfg,
        &CancelToken::new(),
    )
    .unwrap();
    let rec = outcome.tasks.values().next().unwrap();
    assert_eq!(rec.state, TaskState::Done);
    assert_eq!(rec.attempts, 2);

    // With retries exhausted the run fails.
    let tmp = tempfile::tempdir().unwrap();
    let local_cfg = LocalConfig::new(PathBuf::from(bin()), tmp.path().to_path_buf());
    let mut pattern = PatternState::instantiate(&spec, &registry, 0).unwrap();
    let failure = run_local(
        &mut pattern,
        &request,
        &registry,
        RunConfig { retry_limit: 0, seed: 0 },
        &local_cfg,
        &CancelToken::new(),
    )
    .unwrap_err();
    assert!(matches!(failure.error, RunError::TaskFailedPermanently { .. }));
}

#[test]
fn run_subcommand_writes_artifacts_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let status = Command::new(bin())
        .args(["run"])
        .arg(workloads().join("sal-demo.spec"))
        .arg("--out")
        .arg(&out)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "stderr: {}", String::from_utf8_lossy(&status.stderr));
    for file in ["events.log", "report.tsv", "tasks.tsv", "report.txt"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let (log, stamps) = read_event_log(&out.join("events.log")).unwrap();
    let report = decompose(&log, &stamps).unwrap();
    // 3 iterations of 64 sims on 16 slots plus serial analyses:
    // 3 * (4 * 6.0 + 1.0) = 75 virtual seconds.
    assert_eq!(report.ttc, 75.0);
    assert_eq!(report.n_tasks, 195);
}

#[test]
fn report_subcommand_reprints_decomposition() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    Command::new(bin())
        .args(["run"])
        .arg(workloads().join("sal-demo.spec"))
        .arg("--out")
        .arg(&out)
        .current_dir(tmp.path())
        .status()
        .unwrap();
    let output = Command::new(bin())
        .arg("report")
        .arg(out.join("events.log"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("time to completion"), "{text}");
    assert!(text.contains("simulation"), "{text}");
}

#[test]
fn identical_seeds_give_byte_identical_event_logs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = Command::new(bin())
            .args(["run"])
            .arg(workloads().join("ee-demo.spec"))
            .args(["--seed", "7", "--out"])
            .arg(&out)
            .current_dir(tmp.path())
            .status()
            .unwrap();
        assert!(status.success());
        logs.push(fs::read(out.join("events.log")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn walltime_exceeded_exits_one_and_keeps_partial_log() {
    let tmp = tempfile::tempdir().unwrap();
    let spec_path = tmp.path().join("tight.spec");
    let spec = fs::read_to_string(workloads().join("sal-demo.spec"))
        .unwrap()
        .replace("walltime_limit = 3600.0", "")
        .replace("backend = \"simulated\"", "backend = \"simulated\"\nwalltime_limit = 0.001");
    fs::write(&spec_path, spec).unwrap();
    let out = tmp.path().join("out");
    let output = Command::new(bin())
        .args(["run"])
        .arg(&spec_path)
        .arg("--out")
        .arg(&out)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("events.log").exists());
}

#[test]
fn bad_spec_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let spec_path = tmp.path().join("bad.spec");
    fs::write(&spec_path, "[pattern]\nvariant = \"foo\"\n").unwrap();
    let output = Command::new(bin()).args(["run"]).arg(&spec_path).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    let output = Command::new(bin()).args(["experiment", "not-a-suite"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn scaled_down_experiments_keep_their_laws() {
    let tmp = tempfile::tempdir().unwrap();

    // ee-strong at 1/20 scale: 128 members over slots 1..128.
    let out = tmp.path().join("ee");
    let status = Command::new(bin())
        .args(["experiment", "ee-strong", "--scale-factor", "20", "--out"])
        .arg(&out)
        .current_dir(tmp.path())
        .status()
        .unwrap();
    assert!(status.success());
    let series = fs::read_to_string(out.join("series.tsv")).unwrap();
    let mut lines = series.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let sim_col = header.iter().position(|c| *c == "stage:simulation").unwrap();
    let slots_col = header.iter().position(|c| *c == "slots").unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 8);
    for pair in rows.windows(2) {
        let (s0, t0): (f64, f64) =
            (pair[0][slots_col].parse().unwrap(), pair[0][sim_col].parse().unwrap());
        let (s1, t1): (f64, f64) =
            (pair[1][slots_col].parse().unwrap(), pair[1][sim_col].parse().unwrap());
        assert_eq!(s1, 2.0 * s0);
        assert_eq!(t1, t0 / 2.0, "simulation time halves at each doubling");
    }

    // pattern-validation at 1/12 scale exercises the per-pattern table.
    let out = tmp.path().join("pv");
    let status = Command::new(bin())
        .args(["experiment", "pattern-validation", "--scale-factor", "12", "--out"])
        .arg(&out)
        .current_dir(tmp.path())
        .status()
        .unwrap();
    assert!(status.success());
    let table = fs::read_to_string(out.join("series.tsv")).unwrap();
    assert!(table.starts_with("point\t"));
    assert_eq!(table.lines().count(), 1 + 12, "{table}");
}

#[test]
fn mpi_experiment_writes_exact_series() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("exp");
    let status = Command::new(bin())
        .args(["experiment", "mpi", "--out"])
        .arg(&out)
        .current_dir(tmp.path())
        .status()
        .unwrap();
    assert!(status.success());
    let series = fs::read_to_string(out.join("series.tsv")).unwrap();
    let mut lines = series.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let sim_col = header.iter().position(|c| *c == "stage:simulation").unwrap();
    let spt_col = header.iter().position(|c| *c == "slots_per_task").unwrap();
    let mut got = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        got.push((fields[spt_col].to_string(), fields[sim_col].to_string()));
    }
    assert_eq!(
        got,
        [
            ("1".to_string(), "6".to_string()),
            ("16".to_string(), "0.375".to_string()),
            ("32".to_string(), "0.1875".to_string()),
            ("64".to_string(), "0.09375".to_string()),
        ]
    );
}
