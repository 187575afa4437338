//! Brute-force discrete-event oracle.
//!
//! Simulates a pattern workload on a slot pool with the same specified
//! semantics as the engine (FIFO first-fit, deterministic tie-breaks) but a
//! deliberately naive implementation: readiness is recomputed from scratch
//! after every completion, the "next event" is found by scanning the
//! running set, and exchange pairings are re-derived from the completion
//! order each step. Any divergence from the engine is a real bug in one of
//! the two.

use std::collections::{BTreeMap, BTreeSet};

use starling_core::pattern::PairingPolicy;

/// `(iteration, stage, member)` — task coordinates within the pattern.
pub type Key = (u32, u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OraclePattern {
    Eop { pipelines: u32, stages: u32 },
    Sal { simulations: u32, analyses: u32, iterations: u32 },
    Ee { members: u32, iterations: u32, policy: PairingPolicy },
}

/// A fully specified workload: pattern shape, per-task durations, per-stage
/// slot demands, and the pool size.
#[derive(Debug, Clone)]
pub struct OracleWorkload {
    pub pattern: OraclePattern,
    /// Duration per task key. For exchange stages the member coordinate is
    /// the lower member of the pair (0 for whole-ensemble exchanges).
    pub durations: BTreeMap<Key, f64>,
    /// slots_required per stage index.
    pub stage_slots: BTreeMap<u32, u32>,
    pub total_slots: u32,
}

impl OracleWorkload {
    pub fn duration(&self, key: Key) -> f64 {
        *self.durations.get(&key).expect("duration table covers every task")
    }

    pub fn slots(&self, stage: u32) -> u32 {
        *self.stage_slots.get(&stage).expect("slot table covers every stage")
    }

    /// Total number of tasks the workload will run.
    pub fn planned_total(&self) -> usize {
        match self.pattern {
            OraclePattern::Eop { pipelines, stages } => pipelines as usize * stages as usize,
            OraclePattern::Sal { simulations, analyses, iterations } => {
                iterations as usize * (simulations as usize + analyses as usize)
            }
            OraclePattern::Ee { members, iterations, policy } => {
                let per_iter = match policy {
                    PairingPolicy::WholeEnsemble => 1,
                    _ => members as usize / 2,
                };
                iterations as usize * (members as usize + per_iter)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEvent {
    pub t: f64,
    pub kind: &'static str,
    pub task_id: String,
    pub slots: u32,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub events: Vec<OracleEvent>,
    pub makespan: f64,
}

fn role_of(pattern: OraclePattern, stage: u32) -> String {
    match pattern {
        OraclePattern::Eop { .. } => format!("stage{stage}"),
        OraclePattern::Sal { .. } => {
            if stage == 0 { "simulation".into() } else { "analysis".into() }
        }
        OraclePattern::Ee { .. } => {
            if stage == 0 { "simulation".into() } else { "exchange".into() }
        }
    }
}

fn task_id(pattern: OraclePattern, key: Key) -> String {
    format!("{}.i{}.m{}", role_of(pattern, key.1), key.0, key.2)
}

/// Exchange instances derivable from the sims completed so far, with their
/// participants. Pairings are recomputed from the completion order stream.
fn exchanges_so_far(
    pattern: OraclePattern,
    done_order: &[Key],
    done: &BTreeSet<Key>,
) -> Vec<(Key, Vec<u32>)> {
    let OraclePattern::Ee { members, iterations, policy } = pattern else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for iter in 0..iterations {
        let sims_done_in_order: Vec<u32> = done_order
            .iter()
            .filter(|(k, s, _)| *k == iter && *s == 0)
            .map(|(_, _, m)| *m)
            .collect();
        match policy {
            PairingPolicy::WholeEnsemble => {
                if sims_done_in_order.len() == members as usize {
                    out.push(((iter, 1, 0), (0..members).collect()));
                }
            }
            PairingPolicy::NeighborByIndex => {
                let set: BTreeSet<u32> = sims_done_in_order.iter().copied().collect();
                for m in set.iter() {
                    if m % 2 == 0 && set.contains(&(m + 1)) {
                        out.push(((iter, 1, *m), vec![*m, m + 1]));
                    }
                }
            }
            PairingPolicy::ReadinessPairs => {
                for pair in sims_done_in_order.chunks_exact(2) {
                    out.push(((iter, 1, pair[0].min(pair[1])), vec![pair[0], pair[1]]));
                }
            }
        }
    }
    let _ = done;
    out
}

/// Is member `m` allowed to start its iteration-`iter` simulation?
fn ee_sim_ready(
    members: u32,
    policy: PairingPolicy,
    iter: u32,
    m: u32,
    done_order: &[Key],
    done: &BTreeSet<Key>,
) -> bool {
    if iter == 0 {
        return true;
    }
    let prev = iter - 1;
    // Satisfied if a completed exchange of the previous iteration contains m.
    for (key, participants) in
        exchanges_so_far(OraclePattern::Ee { members, iterations: iter + 1, policy }, done_order, done)
    {
        if key.0 == prev && participants.contains(&m) && done.contains(&key) {
            return true;
        }
    }
    // Or if m was released without an exchange partner.
    let sims_done_prev: Vec<u32> = done_order
        .iter()
        .filter(|(k, s, _)| *k == prev && *s == 0)
        .map(|(_, _, m)| *m)
        .collect();
    match policy {
        PairingPolicy::WholeEnsemble => false,
        PairingPolicy::NeighborByIndex => {
            // Only the last member of an odd ensemble has no neighbor.
            m == members - 1 && members % 2 == 1 && sims_done_prev.contains(&m)
        }
        PairingPolicy::ReadinessPairs => {
            sims_done_prev.len() == members as usize
                && members % 2 == 1
                && sims_done_prev.last() == Some(&m)
        }
    }
}

/// Every task key that is ready (all predecessors done), including those
/// already emitted or done; the caller filters. This is the reference
/// readiness rule that safety replays check engine emissions against.
pub fn ready_tasks(w: &OracleWorkload, done_order: &[Key], done: &BTreeSet<Key>) -> Vec<Key> {
    let mut ready = Vec::new();
    match w.pattern {
        OraclePattern::Eop { pipelines, stages } => {
            for p in 0..pipelines {
                for s in 0..stages {
                    if s == 0 || done.contains(&(0, s - 1, p)) {
                        ready.push((0, s, p));
                    }
                }
            }
        }
        OraclePattern::Sal { simulations, analyses, iterations } => {
            for k in 0..iterations {
                let sims_all_done = (0..simulations).all(|i| done.contains(&(k, 0, i)));
                let prev_analyses_done =
                    k == 0 || (0..analyses).all(|j| done.contains(&(k - 1, 1, j)));
                if prev_analyses_done {
                    for i in 0..simulations {
                        ready.push((k, 0, i));
                    }
                }
                if sims_all_done {
                    for j in 0..analyses {
                        ready.push((k, 1, j));
                    }
                }
            }
        }
        OraclePattern::Ee { members, iterations, policy } => {
            for k in 0..iterations {
                for m in 0..members {
                    if ee_sim_ready(members, policy, k, m, done_order, done) {
                        ready.push((k, 0, m));
                    }
                }
            }
            for (key, _) in exchanges_so_far(w.pattern, done_order, done) {
                ready.push(key);
            }
        }
    }
    ready.sort();
    ready
}

/// Runs the workload. Emission, dispatch and completion processing follow
/// the specified tie-breaks: ready tasks enter the queue in key order, the
/// queue dispatches FIFO with first-fit skip onto the free-slot count, and
/// exactly one completion (earliest end time, then key order) is processed
/// per step.
pub fn simulate(w: &OracleWorkload) -> OracleResult {
    let planned = w.planned_total();
    let mut events = Vec::new();
    let mut done: BTreeSet<Key> = BTreeSet::new();
    let mut done_order: Vec<Key> = Vec::new();
    let mut emitted: BTreeSet<Key> = BTreeSet::new();
    let mut queue: Vec<Key> = Vec::new();
    let mut running: Vec<(Key, f64)> = Vec::new();
    let mut free = w.total_slots;
    let mut t = 0.0;
    let mut makespan = 0.0;

    loop {
        // 1. Fold newly ready tasks into the queue, in key order.
        for key in ready_tasks(w, &done_order, &done) {
            if emitted.insert(key) {
                events.push(OracleEvent {
                    t,
                    kind: "TaskScheduled",
                    task_id: task_id(w.pattern, key),
                    slots: w.slots(key.1),
                });
                queue.push(key);
            }
        }
        // 2. Dispatch FIFO with first-fit skip.
        let mut kept = Vec::new();
        for key in queue.drain(..) {
            let need = w.slots(key.1);
            if need <= free {
                free -= need;
                events.push(OracleEvent {
                    t,
                    kind: "TaskStarted",
                    task_id: task_id(w.pattern, key),
                    slots: need,
                });
                running.push((key, t + w.duration(key)));
            } else {
                kept.push(key);
            }
        }
        queue = kept;
        // 3. Finished?
        if done.len() == planned {
            break;
        }
        assert!(
            !running.is_empty(),
            "oracle deadlock: {} of {planned} tasks done, queue {queue:?}",
            done.len()
        );
        // 4. Process exactly one completion: earliest end, then key order.
        let mut best = 0;
        for i in 1..running.len() {
            let (bk, bt) = running[best];
            let (ik, it) = running[i];
            if it < bt || (it == bt && ik < bk) {
                best = i;
            }
        }
        let (key, end) = running.remove(best);
        t = end;
        makespan = end;
        free += w.slots(key.1);
        done.insert(key);
        done_order.push(key);
        events.push(OracleEvent {
            t,
            kind: "TaskEnded",
            task_id: task_id(w.pattern, key),
            slots: w.slots(key.1),
        });
    }
    OracleResult { events, makespan }
}
