//! Exhaustive pattern interpreter.
//!
//! Explores every reachable completion order of a (small) pattern instance
//! and extracts its precedence constraints: `(a, b)` is a constraint iff in
//! every reachable state where `b` has been emitted, `a` was already
//! completed. Used to compare pattern compositions structurally and to
//! verify no-barrier claims constructively.
//!
//! Only valid for patterns whose emission depends on the completion *set*
//! (readiness-ordered pairing depends on the stream and is excluded).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use starling_core::pattern::PatternState;
use starling_core::task::{TaskRecord, TaskState};

type IdSet = BTreeSet<String>;

#[derive(Clone)]
struct Node {
    state: PatternState,
    completed: IdSet,
    pending: BTreeMap<String, starling_core::task::TaskDescription>,
}

fn drain_wave(node: &mut Node) {
    for desc in node.state.ready_wave() {
        node.pending.insert(desc.task_id.clone(), desc);
    }
}

fn complete(node: &mut Node, id: &str) {
    let desc = node.pending.remove(id).expect("completing a pending task");
    let mut rec = TaskRecord::new(desc);
    rec.transition(TaskState::Scheduled, 0.0).unwrap();
    rec.transition(TaskState::Running, 0.0).unwrap();
    rec.transition(TaskState::Done, 0.0).unwrap();
    node.state.record_completion(&rec).unwrap();
    node.completed.insert(id.to_string());
    drain_wave(node);
}

/// All reachable states and the resulting precedence constraints.
pub struct Exploration {
    /// `(a, b)`: a completes before b is emitted, in every schedule.
    pub constraints: BTreeSet<(String, String)>,
    /// Emitted-task sets witnessed, keyed by the completed set.
    pub states: Vec<(IdSet, IdSet)>,
}

/// Breadth-first exploration over completion subsets.
pub fn explore(initial: PatternState) -> Exploration {
    let mut root = Node { state: initial, completed: IdSet::new(), pending: BTreeMap::new() };
    drain_wave(&mut root);

    let mut candidates: BTreeMap<String, IdSet> = BTreeMap::new();
    let mut states = Vec::new();
    let mut visited: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut frontier = VecDeque::new();
    frontier.push_back(root);

    while let Some(node) = frontier.pop_front() {
        let state_key: Vec<String> = node.completed.iter().cloned().collect();
        if !visited.insert(state_key) {
            continue;
        }
        let emitted: IdSet =
            node.completed.iter().cloned().chain(node.pending.keys().cloned()).collect();
        for b in &emitted {
            match candidates.get_mut(b) {
                Some(set) => {
                    set.retain(|a| node.completed.contains(a) || a == b);
                }
                None => {
                    let mut set = node.completed.clone();
                    set.insert(b.clone());
                    candidates.insert(b.clone(), set);
                }
            }
        }
        states.push((node.completed.clone(), emitted));
        for id in node.pending.keys().cloned().collect::<Vec<_>>() {
            let mut child = node.clone();
            complete(&mut child, &id);
            frontier.push_back(child);
        }
    }

    let mut constraints = BTreeSet::new();
    for (b, set) in candidates {
        for a in set {
            if a != b {
                constraints.insert((a, b.clone()));
            }
        }
    }
    Exploration { constraints, states }
}

/// Canonical task coordinates, independent of the id scheme.
pub type Coord = (u32, u32, u32);

/// Remaps constraint ids through `canon` and returns the canonical relation,
/// for comparing structurally equivalent patterns with different id schemes.
pub fn canonical_constraints<F>(
    constraints: &BTreeSet<(String, String)>,
    canon: F,
) -> BTreeSet<(Coord, Coord)>
where
    F: Fn(&str) -> Coord,
{
    constraints.iter().map(|(a, b)| (canon(a), canon(b))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    use starling_core::kernel::KernelRegistry;
    use starling_core::pattern::{
        EoPParams, PatternSpec, PatternVariant, SALParams, StageBinding,
    };

    fn sim_binding() -> StageBinding {
        StageBinding {
            kernel: "synthetic-sim".into(),
            args: vec![("duration".into(), "1.0".into())],
            slots_required: 1,
        }
    }

    fn eop(n: u32, m: u32) -> PatternSpec {
        let mut stage_kernels = BTreeMap::new();
        for s in 0..m {
            stage_kernels.insert(format!("stage{s}"), sim_binding());
        }
        PatternSpec {
            variant: PatternVariant::EnsembleOfPipelines(EoPParams {
                n_pipelines: n,
                n_stages: m,
            }),
            stage_kernels,
        }
    }

    fn sal(n: u32, m: u32, k: u32) -> PatternSpec {
        let mut stage_kernels = BTreeMap::new();
        stage_kernels.insert("simulation".into(), sim_binding());
        stage_kernels.insert("analysis".into(), sim_binding());
        PatternSpec {
            variant: PatternVariant::SimulationAnalysisLoop(SALParams {
                n_simulations: n,
                n_analyses: m,
                n_iterations: k,
            }),
            stage_kernels,
        }
    }

    #[test]
    fn eop_constraints_are_per_pipeline_chains() {
        let reg = KernelRegistry::with_builtins();
        let state = PatternState::instantiate(&eop(2, 2), &reg, 0).unwrap();
        let explored = explore(state);
        let expect: BTreeSet<(String, String)> = [
            ("stage0.i0.m0", "stage1.i0.m0"),
            ("stage0.i0.m1", "stage1.i0.m1"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        assert_eq!(explored.constraints, expect);
    }

    #[test]
    fn sal_constraints_are_stage_wide_barriers() {
        let reg = KernelRegistry::with_builtins();
        let state = PatternState::instantiate(&sal(2, 1, 1), &reg, 0).unwrap();
        let explored = explore(state);
        let expect: BTreeSet<(String, String)> = [
            ("simulation.i0.m0", "analysis.i0.m0"),
            ("simulation.i0.m1", "analysis.i0.m0"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        assert_eq!(explored.constraints, expect);
    }
}
