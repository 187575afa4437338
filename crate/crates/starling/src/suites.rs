//! Built-in experiment suites.
//!
//! Each suite is a sweep of workload specs over slot counts and/or task
//! counts on the simulated backend. Durations and per-member costs are
//! powers of two so the scaling laws hold bit-exactly, not just to within
//! float noise. `scale_factor` divides the sweep sizes uniformly for quick
//! runs; it must divide the base sizes.

use std::collections::BTreeMap;

use starling_core::metrics::ScalingMode;

use crate::specfile::{PatternSection, ResourceSection, RunSection, StageSection, WorkloadSpec};

pub const SUITE_NAMES: [&str; 6] =
    ["pattern-validation", "ee-strong", "ee-weak", "sal-strong", "sal-weak", "mpi"];

/// Virtual duration of one simulation task on one slot.
const SIM_DURATION: f64 = 6.0;
/// Serial exchange cost per participating member (2^-6).
const EXCHANGE_COST: f64 = 0.015625;
/// Serial analysis cost per consumed input (2^-6).
const ANALYSIS_COST: f64 = 0.015625;
/// Per-task creation latency injected in the validation suite (2^-10).
const VALIDATION_DISPATCH_LATENCY: f64 = 0.0009765625;
/// Init/allocate/cancel spans injected in the validation suite (2^-5).
const VALIDATION_CORE_LATENCY: f64 = 0.03125;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteMode {
    Scaling(ScalingMode),
    PatternValidation,
}

#[derive(Debug, Clone)]
pub struct SuitePoint {
    /// Row label, e.g. `slots=40` or `eop/n=24`.
    pub label: String,
    pub spec: WorkloadSpec,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub name: &'static str,
    pub mode: SuiteMode,
    pub points: Vec<SuitePoint>,
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("unknown suite `{0}` (available: pattern-validation, ee-strong, ee-weak, sal-strong, sal-weak, mpi)")]
    UnknownSuite(String),
    #[error("scale factor {factor} does not divide the suite's base size {base}")]
    BadScaleFactor { factor: u32, base: u32 },
}

fn scaled(base: u32, factor: u32) -> Result<u32, SuiteError> {
    if factor == 0 || !base.is_multiple_of(factor) {
        return Err(SuiteError::BadScaleFactor { factor, base });
    }
    Ok(base / factor)
}

fn resource(total_slots: u32) -> ResourceSection {
    ResourceSection {
        total_slots,
        backend: "simulated".into(),
        queue_wait: 0.0,
        walltime_limit: 100_000.0,
        dispatch_latency: 0.0,
        init_latency: 0.0,
        allocate_latency: 0.0,
        cancel_latency: 0.0,
    }
}

fn stage(kernel: &str, slots: u32, args: &[(&str, String)]) -> StageSection {
    StageSection {
        kernel: kernel.into(),
        slots,
        args: args.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    }
}

fn pattern(variant: &str) -> PatternSection {
    PatternSection {
        variant: variant.into(),
        pipelines: None,
        stages: None,
        members: None,
        iterations: None,
        pairing: None,
        simulations: None,
        analyses: None,
    }
}

/// Ensemble exchange with a whole-ensemble serial exchange step: the
/// exchange cost scales with the member count, the simulations with the
/// slot count.
fn ee_spec(members: u32, slots: u32) -> WorkloadSpec {
    let mut stages = BTreeMap::new();
    stages.insert(
        "simulation".into(),
        stage("synthetic-sim", 1, &[("duration", SIM_DURATION.to_string())]),
    );
    stages.insert(
        "exchange".into(),
        stage(
            "synthetic-exchange",
            1,
            &[
                ("n_members", "{participants}".to_string()),
                ("cost_per_member", EXCHANGE_COST.to_string()),
            ],
        ),
    );
    WorkloadSpec {
        pattern: PatternSection {
            members: Some(members),
            iterations: Some(1),
            pairing: Some("whole-ensemble".into()),
            ..pattern("ensemble-exchange")
        },
        stages,
        resource: resource(slots),
        run: RunSection::default(),
    }
}

fn sal_spec(simulations: u32, slots: u32, slots_per_task: u32) -> WorkloadSpec {
    let mut stages = BTreeMap::new();
    stages.insert(
        "simulation".into(),
        stage(
            "synthetic-sim",
            slots_per_task,
            &[("duration", SIM_DURATION.to_string()), ("slots", "{slots}".to_string())],
        ),
    );
    stages.insert(
        "analysis".into(),
        stage(
            "synthetic-analysis",
            1,
            &[
                ("n_inputs", "{n_inputs}".to_string()),
                ("cost_per_input", ANALYSIS_COST.to_string()),
            ],
        ),
    );
    WorkloadSpec {
        pattern: PatternSection {
            simulations: Some(simulations),
            analyses: Some(1),
            iterations: Some(1),
            ..pattern("simulation-analysis-loop")
        },
        stages,
        resource: resource(slots),
        run: RunSection::default(),
    }
}

/// The same two-stage file workload (`mkfile` then `ccount`) expressed
/// natively in each pattern; the extra glue stage is zero-cost.
pub fn validation_trio(n: u32) -> [(String, WorkloadSpec); 3] {
    let latencies = |r: &mut ResourceSection| {
        r.dispatch_latency = VALIDATION_DISPATCH_LATENCY;
        r.init_latency = VALIDATION_CORE_LATENCY;
        r.allocate_latency = VALIDATION_CORE_LATENCY;
        r.cancel_latency = VALIDATION_CORE_LATENCY;
    };
    let mkfile = stage(
        "mkfile",
        1,
        &[("size", "1000".to_string()), ("seed", "{seed}".to_string())],
    );
    let ccount = stage(
        "ccount",
        1,
        &[("file", "data.out".to_string()), ("sim_duration", "0.5".to_string())],
    );

    let mut eop_stages = BTreeMap::new();
    eop_stages.insert("stage0".into(), mkfile.clone());
    eop_stages.insert("stage1".into(), ccount.clone());
    let mut eop = WorkloadSpec {
        pattern: PatternSection {
            pipelines: Some(n),
            stages: Some(2),
            ..pattern("ensemble-of-pipelines")
        },
        stages: eop_stages,
        resource: resource(n),
        run: RunSection::default(),
    };
    latencies(&mut eop.resource);

    let mut ee_stages = BTreeMap::new();
    ee_stages.insert("simulation0".into(), mkfile.clone());
    ee_stages.insert("simulation1".into(), ccount.clone());
    ee_stages.insert(
        "exchange".into(),
        stage(
            "synthetic-exchange",
            1,
            &[
                ("n_members", "{participants}".to_string()),
                ("cost_per_member", "0.0".to_string()),
            ],
        ),
    );
    let mut ee = WorkloadSpec {
        pattern: PatternSection {
            members: Some(n),
            iterations: Some(2),
            pairing: Some("neighbor-by-index".into()),
            ..pattern("ensemble-exchange")
        },
        stages: ee_stages,
        resource: resource(n),
        run: RunSection::default(),
    };
    latencies(&mut ee.resource);

    let mut sal_stages = BTreeMap::new();
    sal_stages.insert("simulation0".into(), mkfile);
    sal_stages.insert("simulation1".into(), ccount);
    sal_stages.insert(
        "analysis".into(),
        stage(
            "synthetic-analysis",
            1,
            &[
                ("n_inputs", "{n_inputs}".to_string()),
                ("cost_per_input", "0.0".to_string()),
            ],
        ),
    );
    let mut sal = WorkloadSpec {
        pattern: PatternSection {
            simulations: Some(n),
            analyses: Some(1),
            iterations: Some(2),
            ..pattern("simulation-analysis-loop")
        },
        stages: sal_stages,
        resource: resource(n),
        run: RunSection::default(),
    };
    latencies(&mut sal.resource);

    [("eop".to_string(), eop), ("ee".to_string(), ee), ("sal".to_string(), sal)]
}

/// Builds a named suite, shrunk by `scale_factor`.
pub fn build_suite(name: &str, scale_factor: u32) -> Result<Suite, SuiteError> {
    match name {
        "ee-strong" => {
            let members = scaled(2560, scale_factor)?;
            let base = scaled(20, scale_factor)?;
            let points = (0..8)
                .map(|k| {
                    let slots = base << k;
                    SuitePoint { label: format!("slots={slots}"), spec: ee_spec(members, slots) }
                })
                .collect();
            Ok(Suite { name: "ee-strong", mode: SuiteMode::Scaling(ScalingMode::Strong), points })
        }
        "ee-weak" => {
            let base = scaled(20, scale_factor)?;
            let points = (0..8)
                .map(|k| {
                    let n = base << k;
                    SuitePoint { label: format!("members={n}"), spec: ee_spec(n, n) }
                })
                .collect();
            Ok(Suite { name: "ee-weak", mode: SuiteMode::Scaling(ScalingMode::Weak), points })
        }
        "sal-strong" => {
            let sims = scaled(1024, scale_factor)?;
            let base = scaled(64, scale_factor)?;
            let points = (0..5)
                .map(|k| {
                    let slots = base << k;
                    SuitePoint { label: format!("slots={slots}"), spec: sal_spec(sims, slots, 1) }
                })
                .collect();
            Ok(Suite { name: "sal-strong", mode: SuiteMode::Scaling(ScalingMode::Strong), points })
        }
        "sal-weak" => {
            let base = scaled(64, scale_factor)?;
            let points = (0..7)
                .map(|k| {
                    let n = base << k;
                    SuitePoint { label: format!("simulations={n}"), spec: sal_spec(n, n, 1) }
                })
                .collect();
            Ok(Suite { name: "sal-weak", mode: SuiteMode::Scaling(ScalingMode::Weak), points })
        }
        "mpi" => {
            // 64 concurrent multi-slot simulations; the sweep is over slots
            // per task, so the scale factor has nothing to shrink.
            let points = [1u32, 16, 32, 64]
                .iter()
                .map(|&spt| SuitePoint {
                    label: format!("slots_per_task={spt}"),
                    spec: sal_spec(64, 64 * spt, spt),
                })
                .collect();
            Ok(Suite { name: "mpi", mode: SuiteMode::Scaling(ScalingMode::Mpi), points })
        }
        "pattern-validation" => {
            let mut points = Vec::new();
            for base in [24u32, 48, 96, 192] {
                let n = scaled(base, scale_factor)?;
                for (pattern_name, spec) in validation_trio(n) {
                    points.push(SuitePoint { label: format!("{pattern_name}/n={n}"), spec });
                }
            }
            Ok(Suite { name: "pattern-validation", mode: SuiteMode::PatternValidation, points })
        }
        other => Err(SuiteError::UnknownSuite(other.to_string())),
    }
}
