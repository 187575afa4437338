//! Ensemble-workflow execution: workload spec files, the process backend,
//! experiment suites, and on-disk report formats. The deterministic engine
//! itself lives in `starling-core`.

pub mod local;
pub mod report;
pub mod runner;
pub mod specfile;
pub mod suites;

use std::path::{Path, PathBuf};

use starling_core::kernel::KernelRegistry;
use starling_core::pattern::PatternState;
use starling_core::runtime::{RunFailure, RunOutcome};
use starling_core::sim::run_simulated;
use starling_core::task::Backend;

use local::{CancelToken, LocalConfig};
use specfile::{SpecError, WorkloadSpec};

/// Where a local-process run puts task working directories, and which
/// binary acts as the kernel runner.
#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    /// Kernel-runner binary; defaults to the current executable.
    pub runner: Option<PathBuf>,
    /// Root for `run/<iteration>/<stage>/<member>` task directories
    /// (local-process backend only); defaults to the working directory.
    pub run_root: Option<PathBuf>,
    pub cancel: Option<CancelToken>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("{0}")]
    Runner(String),
}

/// Instantiates and runs a workload on the backend its resource block
/// names. On failure the partial outcome rides along in the `RunFailure`.
pub fn run_workload(
    spec: &WorkloadSpec,
    opts: &ExecOptions,
) -> Result<Result<RunOutcome, Box<RunFailure>>, ExecError> {
    let registry = KernelRegistry::with_builtins();
    let pattern_spec = spec.pattern_spec()?;
    let request = spec.resource_request()?;
    let cfg = spec.run_config();
    let mut pattern = PatternState::instantiate(&pattern_spec, &registry, cfg.seed)
        .map_err(|e| SpecError::Invalid(e.to_string()))?;
    match request.backend {
        Backend::Simulated => {
            Ok(run_simulated(&mut pattern, &request, &registry, cfg, spec.sim_tuning()))
        }
        Backend::LocalProcess => {
            let runner = match &opts.runner {
                Some(path) => path.clone(),
                None => std::env::current_exe()
                    .map_err(|e| ExecError::Runner(format!("cannot locate kernel runner: {e}")))?,
            };
            let run_root = opts.run_root.clone().unwrap_or_else(|| PathBuf::from("."));
            let local = LocalConfig::new(runner, run_root);
            let cancel = opts.cancel.clone().unwrap_or_default();
            Ok(local::run_local(&mut pattern, &request, &registry, cfg, &local, &cancel))
        }
    }
}

/// Output paths of one run within `out_dir`.
pub struct RunPaths {
    pub events: PathBuf,
    pub report_tsv: PathBuf,
    pub tasks_tsv: PathBuf,
    pub report_txt: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &Path) -> Self {
        RunPaths {
            events: out_dir.join("events.log"),
            report_tsv: out_dir.join("report.tsv"),
            tasks_tsv: out_dir.join("tasks.tsv"),
            report_txt: out_dir.join("report.txt"),
        }
    }
}
