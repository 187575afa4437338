//! Property tests for pattern synchronization rules and task lifecycle.

use std::collections::BTreeMap;

use proptest::prelude::*;

use starling_core::event::EventKind;
use starling_core::kernel::KernelRegistry;
use starling_core::pattern::{
    pair_for_exchange, EEParams, PairingPolicy, PatternSpec, PatternState, PatternVariant,
    StageBinding,
};
use starling_core::task::{TaskDescription, TaskKey, TaskRecord, TaskState};
use starling_testkit::oracle::{OraclePattern, OracleWorkload};
use starling_testkit::replay;
use starling_testkit::run_engine;

fn all_states() -> [TaskState; 5] {
    [TaskState::Pending, TaskState::Scheduled, TaskState::Running, TaskState::Done, TaskState::Failed]
}

fn dummy_desc() -> TaskDescription {
    TaskDescription {
        task_id: "stage0.i0.m0".into(),
        kernel: "sleep".into(),
        args: vec![("duration".into(), "1".into())],
        slots_required: 1,
        key: TaskKey::new(0, 0, 0),
        inputs: vec![],
        outputs: vec![],
    }
}

proptest! {
    /// Random transition fuzzing: a transition is accepted iff it is an
    /// edge of the legal lifecycle graph, and the visited states always
    /// form a path in that graph.
    #[test]
    fn transitions_follow_the_lifecycle_graph(steps in proptest::collection::vec(0usize..5, 1..40)) {
        let mut rec = TaskRecord::new(dummy_desc());
        let mut t = 0.0;
        for step in steps {
            let target = all_states()[step];
            let legal = rec.state.can_transition(target);
            let before = rec.state;
            let result = rec.transition(target, t);
            prop_assert_eq!(result.is_ok(), legal);
            if legal {
                prop_assert_eq!(rec.state, target);
            } else {
                prop_assert_eq!(rec.state, before);
            }
            t += 1.0;
        }
    }

    /// Readiness-ordered pairing consumes the completion stream two at a
    /// time; neighbor pairing is order-insensitive; pairs are disjoint.
    #[test]
    fn exchange_pairs_are_disjoint(order in proptest::sample::subsequence((0u32..12).collect::<Vec<_>>(), 0..12).prop_shuffle()) {
        for policy in [PairingPolicy::NeighborByIndex, PairingPolicy::ReadinessPairs] {
            let pairs = pair_for_exchange(&order, policy);
            let mut seen = std::collections::BTreeSet::new();
            for (a, b) in &pairs {
                prop_assert!(seen.insert(*a), "member {} paired twice", a);
                prop_assert!(seen.insert(*b), "member {} paired twice", b);
            }
            if policy == PairingPolicy::ReadinessPairs {
                let expect: Vec<(u32, u32)> =
                    order.chunks_exact(2).map(|c| (c[0], c[1])).collect();
                prop_assert_eq!(pairs, expect);
            }
        }
    }
}

fn eop_workload(pipelines: u32, stages: u32, durations: &[f64], total_slots: u32) -> OracleWorkload {
    let mut table = BTreeMap::new();
    let mut stage_slots = BTreeMap::new();
    let mut i = 0;
    for s in 0..stages {
        stage_slots.insert(s, 1);
        for p in 0..pipelines {
            table.insert((0, s, p), durations[i % durations.len()]);
            i += 1;
        }
    }
    OracleWorkload {
        pattern: OraclePattern::Eop { pipelines, stages },
        durations: table,
        stage_slots,
        total_slots,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Delaying every task of one pipeline never changes when other
    /// pipelines' tasks run (with enough slots that no pool contention
    /// couples them).
    #[test]
    fn eop_pipelines_are_independent(
        pipelines in 2u32..5,
        stages in 1u32..4,
        seed_durations in proptest::collection::vec(0.25f64..4.0, 4),
        delayed in 0u32..5,
        factor in 2u32..6,
    ) {
        let delayed = delayed % pipelines;
        let base = eop_workload(pipelines, stages, &seed_durations, pipelines);
        let mut slowed = base.clone();
        for ((_, _, p), d) in slowed.durations.iter_mut() {
            if *p == delayed {
                *d *= factor as f64;
            }
        }
        let base_out = run_engine(&base);
        let slow_out = run_engine(&slowed);
        let starts = |outcome: &starling_core::runtime::RunOutcome| -> BTreeMap<String, f64> {
            outcome
                .log
                .iter()
                .filter(|r| r.kind == EventKind::TaskStarted)
                .map(|r| (r.task_id.clone().unwrap(), r.t))
                .collect()
        };
        let base_starts = starts(&base_out);
        let slow_starts = starts(&slow_out);
        for (id, t) in &base_starts {
            let member: u32 = id.rsplit(".m").next().unwrap().parse().unwrap();
            if member != delayed {
                prop_assert_eq!(slow_starts[id], *t, "task {} moved when pipeline {} was delayed", id, delayed);
            }
        }
    }

    /// For any fair executor the pattern finishes with every planned task
    /// completed exactly once, and the log passes the structural checks.
    #[test]
    fn patterns_run_to_completion(seed in any::<u64>()) {
        use rand::SeedableRng;
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let w = starling_testkit::random_workload(&mut rng);
        let outcome = run_engine(&w);
        prop_assert_eq!(outcome.tasks.len(), w.planned_total());
        for rec in outcome.tasks.values() {
            prop_assert_eq!(rec.state, TaskState::Done);
        }
        replay::check_structural(&outcome.log).map_err(TestCaseError::fail)?;
        replay::check_conservation(&outcome.log, w.planned_total()).map_err(TestCaseError::fail)?;
    }

    /// SAL barrier over random instances: no analysis of iteration k starts
    /// before the last simulation of iteration k ends.
    #[test]
    fn sal_barrier_holds(
        sims in 1u32..5,
        analyses in 1u32..3,
        iters in 1u32..3,
        slots in 1u32..6,
        durations in proptest::collection::vec(0.25f64..4.0, 6),
    ) {
        let mut table = BTreeMap::new();
        let mut i = 0;
        for k in 0..iters {
            for s in 0..sims {
                table.insert((k, 0, s), durations[i % durations.len()]);
                i += 1;
            }
            for a in 0..analyses {
                table.insert((k, 1, a), durations[i % durations.len()]);
                i += 1;
            }
        }
        let w = OracleWorkload {
            pattern: OraclePattern::Sal { simulations: sims, analyses, iterations: iters },
            durations: table,
            stage_slots: [(0, 1), (1, 1)].into_iter().collect(),
            total_slots: slots,
        };
        let outcome = run_engine(&w);
        replay::check_sal_barrier(&outcome.log).map_err(TestCaseError::fail)?;
    }
}

/// Constructive witness that EE has no global barrier: with staggered
/// durations, the first pair's exchange starts while slower members are
/// still simulating.
#[test]
fn ee_exchange_overlaps_slow_simulations() {
    let mut table = BTreeMap::new();
    for m in 0..4u32 {
        table.insert((0, 0, m), if m < 2 { 1.0 } else { 10.0 });
        table.insert((0, 1, m), 1.0);
    }
    let w = OracleWorkload {
        pattern: OraclePattern::Ee {
            members: 4,
            iterations: 1,
            policy: PairingPolicy::NeighborByIndex,
        },
        durations: table,
        stage_slots: [(0, 1), (1, 1)].into_iter().collect(),
        total_slots: 5,
    };
    let outcome = run_engine(&w);
    assert!(
        replay::ee_overlap_exists(&outcome.log),
        "expected an exchange to start while a simulation was still running"
    );
}

/// Incremental pairing inside the pattern state machine agrees with the
/// batch `pair_for_exchange` over the same completion order.
#[test]
fn incremental_pairing_matches_batch_pairing() {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand::rngs::StdRng::seed_from_u64(21);
    let reg = KernelRegistry::with_builtins();
    for policy in [PairingPolicy::NeighborByIndex, PairingPolicy::ReadinessPairs] {
        for members in [2u32, 4, 5, 8] {
            for _ in 0..20 {
                let mut stage_kernels = BTreeMap::new();
                stage_kernels.insert(
                    "simulation".to_string(),
                    StageBinding {
                        kernel: "synthetic-sim".into(),
                        args: vec![("duration".into(), "1.0".into())],
                        slots_required: 1,
                    },
                );
                stage_kernels.insert(
                    "exchange".to_string(),
                    StageBinding {
                        kernel: "synthetic-exchange".into(),
                        args: vec![
                            ("n_members".into(), "{participants}".into()),
                            ("cost_per_member".into(), "0.5".into()),
                        ],
                        slots_required: 1,
                    },
                );
                let spec = PatternSpec {
                    variant: PatternVariant::EnsembleExchange(EEParams {
                        n_members: members,
                        n_iterations: 1,
                        pairing: policy,
                    }),
                    stage_kernels,
                };
                let mut state = PatternState::instantiate(&spec, &reg, 0).unwrap();
                let sims = state.ready_wave();
                let mut order: Vec<usize> = (0..sims.len()).collect();
                order.shuffle(&mut rng);
                let mut emitted_exchanges = Vec::new();
                let mut completion_order = Vec::new();
                for idx in order {
                    let mut rec = TaskRecord::new(sims[idx].clone());
                    rec.transition(TaskState::Scheduled, 0.0).unwrap();
                    rec.transition(TaskState::Running, 0.0).unwrap();
                    rec.transition(TaskState::Done, 1.0).unwrap();
                    completion_order.push(sims[idx].key.member);
                    state.record_completion(&rec).unwrap();
                    emitted_exchanges.extend(state.ready_wave());
                }
                let expected = pair_for_exchange(&completion_order, policy);
                let got: Vec<u32> = emitted_exchanges.iter().map(|d| d.key.member).collect();
                // Exchange keys use the pair's lower member; neighbor pairs
                // emit in completion order of the later partner.
                let mut want: Vec<u32> = expected.iter().map(|(a, b)| *a.min(b)).collect();
                if policy == PairingPolicy::NeighborByIndex {
                    want.sort_by_key(|lo| {
                        completion_order
                            .iter()
                            .rposition(|m| *m == *lo || *m == *lo + 1)
                            .unwrap()
                    });
                }
                assert_eq!(got, want, "policy {policy:?}, members {members}, order {completion_order:?}");
            }
        }
    }
}

/// Composition equivalences: sequentially composed patterns impose the same
/// precedence constraints as the equivalent single pattern.
#[test]
fn composition_matches_flat_patterns() {
    use starling_testkit::interp::{canonical_constraints, explore};

    let reg = KernelRegistry::with_builtins();
    let sim = |slots: u32| StageBinding {
        kernel: "synthetic-sim".into(),
        args: vec![("duration".into(), "1.0".into())],
        slots_required: slots,
    };

    // [EoP(1,1), EoP(1,1)] vs EoP(1,2): a two-link chain either way.
    let single_stage = PatternSpec {
        variant: PatternVariant::EnsembleOfPipelines(starling_core::pattern::EoPParams {
            n_pipelines: 1,
            n_stages: 1,
        }),
        stage_kernels: [("stage0".to_string(), sim(1))].into_iter().collect(),
    };
    let two_stage = PatternSpec {
        variant: PatternVariant::EnsembleOfPipelines(starling_core::pattern::EoPParams {
            n_pipelines: 1,
            n_stages: 2,
        }),
        stage_kernels: [("stage0".to_string(), sim(1)), ("stage1".to_string(), sim(1))]
            .into_iter()
            .collect(),
    };
    let composed =
        PatternState::compose(&[single_stage.clone(), single_stage.clone()], &reg, 0).unwrap();
    let flat = PatternState::instantiate(&two_stage, &reg, 0).unwrap();
    // Canonical coordinates: sequence position, then member.
    let canon_composed = |id: &str| -> (u32, u32, u32) {
        let unit: u32 = id[1..2].parse().unwrap();
        let (_, _, member) = starling_core::pattern::parse_task_id(id).unwrap();
        (unit, 0, member)
    };
    let canon_flat = |id: &str| -> (u32, u32, u32) {
        let (role, _, member) = starling_core::pattern::parse_task_id(id).unwrap();
        let stage: u32 = role.strip_prefix("stage").unwrap().parse().unwrap();
        (stage, 0, member)
    };
    assert_eq!(
        canonical_constraints(&explore(composed).constraints, canon_composed),
        canonical_constraints(&explore(flat).constraints, canon_flat),
    );

    // [SAL(N,M,1), SAL(N,M,1)] vs SAL(N,M,2): iteration barrier == unit barrier.
    let analysis = StageBinding {
        kernel: "synthetic-analysis".into(),
        args: vec![
            ("n_inputs".into(), "{n_inputs}".into()),
            ("cost_per_input".into(), "0.5".into()),
        ],
        slots_required: 1,
    };
    let sal = |iters: u32| PatternSpec {
        variant: PatternVariant::SimulationAnalysisLoop(starling_core::pattern::SALParams {
            n_simulations: 2,
            n_analyses: 1,
            n_iterations: iters,
        }),
        stage_kernels: [
            ("simulation".to_string(), sim(1)),
            ("analysis".to_string(), analysis.clone()),
        ]
        .into_iter()
        .collect(),
    };
    let composed = PatternState::compose(&[sal(1), sal(1)], &reg, 0).unwrap();
    let flat = PatternState::instantiate(&sal(2), &reg, 0).unwrap();
    let canon_composed = |id: &str| -> (u32, u32, u32) {
        let unit: u32 = id[1..2].parse().unwrap();
        let (role, _, member) = starling_core::pattern::parse_task_id(id).unwrap();
        let stage = if role.ends_with("analysis") { 1 } else { 0 };
        (unit, stage, member)
    };
    let canon_flat = |id: &str| -> (u32, u32, u32) {
        let (role, iter, member) = starling_core::pattern::parse_task_id(id).unwrap();
        let stage = if role == "analysis" { 1 } else { 0 };
        (iter, stage, member)
    };
    assert_eq!(
        canonical_constraints(&explore(composed).constraints, canon_composed),
        canonical_constraints(&explore(flat).constraints, canon_flat),
    );
}

/// The interpreter confirms the documented EE schedule: exchange(0,1) is
/// reachable while members 2 and 3 have not completed.
#[test]
fn ee_pair_exchange_reachable_before_ensemble_completes() {
    use starling_testkit::interp::explore;

    let reg = KernelRegistry::with_builtins();
    let spec = PatternSpec {
        variant: PatternVariant::EnsembleExchange(EEParams {
            n_members: 4,
            n_iterations: 1,
            pairing: PairingPolicy::NeighborByIndex,
        }),
        stage_kernels: [
            (
                "simulation".to_string(),
                StageBinding {
                    kernel: "synthetic-sim".into(),
                    args: vec![("duration".into(), "1.0".into())],
                    slots_required: 1,
                },
            ),
            (
                "exchange".to_string(),
                StageBinding {
                    kernel: "synthetic-exchange".into(),
                    args: vec![
                        ("n_members".into(), "{participants}".into()),
                        ("cost_per_member".into(), "0.5".into()),
                    ],
                    slots_required: 1,
                },
            ),
        ]
        .into_iter()
        .collect(),
    };
    let explored = explore(PatternState::instantiate(&spec, &reg, 0).unwrap());
    let witnessed = explored.states.iter().any(|(completed, emitted)| {
        emitted.contains("exchange.i0.m0")
            && !completed.contains("simulation.i0.m2")
            && !completed.contains("simulation.i0.m3")
    });
    assert!(witnessed, "exchange(0,1) must be emittable before members 2 and 3 complete");
}
