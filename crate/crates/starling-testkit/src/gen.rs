//! Random workload instances, runnable by both the engine and the oracle.
//!
//! Per-task durations come from a shared table: the engine reads it through
//! a registered `table` kernel (exercising the custom-kernel path), the
//! oracle reads it directly.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::Rng;

use starling_core::kernel::{ArgKind, ArgSpec, ExecutablePlan, KernelPlugin, KernelRegistry};
use starling_core::pattern::{
    EEParams, EoPParams, PairingPolicy, PatternSpec, PatternVariant, SALParams, StageBinding,
};

use crate::oracle::{Key, OraclePattern, OracleWorkload};

const DURATION_CHOICES: &[f64] = &[0.5, 1.0, 1.0, 1.5, 2.0, 2.5, 1.0];

fn fill_durations(
    rng: &mut StdRng,
    durations: &mut BTreeMap<Key, f64>,
    iterations: u32,
    stage0_members: u32,
    stage1_members: u32,
) {
    for k in 0..iterations {
        for m in 0..stage0_members {
            durations.insert((k, 0, m), DURATION_CHOICES[rng.gen_range(0..DURATION_CHOICES.len())]);
        }
        for m in 0..stage1_members {
            durations.insert((k, 1, m), DURATION_CHOICES[rng.gen_range(0..DURATION_CHOICES.len())]);
        }
    }
}

/// A random small instance: ≤ 20 tasks, ≤ 8 slots, random durations and
/// slot demands, any of the three patterns.
pub fn random_workload(rng: &mut StdRng) -> OracleWorkload {
    let mut durations = BTreeMap::new();
    let mut stage_slots = BTreeMap::new();
    let pattern = match rng.gen_range(0..3) {
        0 => {
            let pipelines = rng.gen_range(1..=4);
            let stages = rng.gen_range(1..=3);
            for s in 0..stages {
                stage_slots.insert(s, rng.gen_range(1..=3));
                for p in 0..pipelines {
                    durations
                        .insert((0, s, p), DURATION_CHOICES[rng.gen_range(0..DURATION_CHOICES.len())]);
                }
            }
            OraclePattern::Eop { pipelines, stages }
        }
        1 => {
            let simulations = rng.gen_range(1..=4);
            let analyses = rng.gen_range(1..=2);
            let iterations = rng.gen_range(1..=2);
            stage_slots.insert(0, rng.gen_range(1..=3));
            stage_slots.insert(1, rng.gen_range(1..=3));
            fill_durations(rng, &mut durations, iterations, simulations, analyses);
            OraclePattern::Sal { simulations, analyses, iterations }
        }
        _ => {
            let members = rng.gen_range(2..=6);
            let iterations = rng.gen_range(1..=2);
            let policy = match rng.gen_range(0..3) {
                0 => PairingPolicy::NeighborByIndex,
                1 => PairingPolicy::ReadinessPairs,
                _ => PairingPolicy::WholeEnsemble,
            };
            stage_slots.insert(0, rng.gen_range(1..=3));
            stage_slots.insert(1, rng.gen_range(1..=2));
            // Exchange durations are keyed by the pair's lower member; fill
            // every possible key.
            fill_durations(rng, &mut durations, iterations, members, members);
            OraclePattern::Ee { members, iterations, policy }
        }
    };
    let max_stage = stage_slots.values().copied().max().unwrap_or(1);
    let total_slots = rng.gen_range(max_stage..=8);
    OracleWorkload { pattern, durations, stage_slots, total_slots }
}

/// Registry whose `table` kernel resolves per-task durations from the
/// workload's duration table.
pub fn table_registry(w: &OracleWorkload) -> KernelRegistry {
    let table: Arc<BTreeMap<Key, f64>> = Arc::new(w.durations.clone());
    let mut reg = KernelRegistry::with_builtins();
    reg.register(KernelPlugin::new(
        "table",
        vec![
            ArgSpec::required("iteration", ArgKind::Value, "task iteration"),
            ArgSpec::required("stage", ArgKind::Value, "task stage"),
            ArgSpec::required("member", ArgKind::Value, "task member"),
        ],
        move |args, _backend| {
            let key = (
                args.u64_or("table", "iteration", 0)? as u32,
                args.u64_or("table", "stage", 0)? as u32,
                args.u64_or("table", "member", 0)? as u32,
            );
            let duration = *table.get(&key).expect("duration table covers every task");
            Ok(ExecutablePlan::simulated(duration))
        },
    ))
    .expect("fresh registry");
    reg
}

fn table_binding(slots: u32) -> StageBinding {
    StageBinding {
        kernel: "table".into(),
        args: vec![
            ("iteration".into(), "{iteration}".into()),
            ("stage".into(), "{stage}".into()),
            ("member".into(), "{member}".into()),
        ],
        slots_required: slots,
    }
}

/// Engine-side pattern spec equivalent to the oracle workload.
pub fn build_pattern_spec(w: &OracleWorkload) -> PatternSpec {
    let mut stage_kernels = BTreeMap::new();
    match w.pattern {
        OraclePattern::Eop { pipelines, stages } => {
            for s in 0..stages {
                stage_kernels.insert(format!("stage{s}"), table_binding(w.slots(s)));
            }
            PatternSpec {
                variant: PatternVariant::EnsembleOfPipelines(EoPParams {
                    n_pipelines: pipelines,
                    n_stages: stages,
                }),
                stage_kernels,
            }
        }
        OraclePattern::Sal { simulations, analyses, iterations } => {
            stage_kernels.insert("simulation".into(), table_binding(w.slots(0)));
            stage_kernels.insert("analysis".into(), table_binding(w.slots(1)));
            PatternSpec {
                variant: PatternVariant::SimulationAnalysisLoop(SALParams {
                    n_simulations: simulations,
                    n_analyses: analyses,
                    n_iterations: iterations,
                }),
                stage_kernels,
            }
        }
        OraclePattern::Ee { members, iterations, policy } => {
            stage_kernels.insert("simulation".into(), table_binding(w.slots(0)));
            stage_kernels.insert("exchange".into(), table_binding(w.slots(1)));
            PatternSpec {
                variant: PatternVariant::EnsembleExchange(EEParams {
                    n_members: members,
                    n_iterations: iterations,
                    pairing: policy,
                }),
                stage_kernels,
            }
        }
    }
}
