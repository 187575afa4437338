//! Application-level scheduler: a FIFO ready queue over a pool of
//! indistinguishable slots, with first-fit skip so a wide task waiting at
//! the head does not block narrower tasks behind it.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;

use crate::kernel::ExecutablePlan;
use crate::task::TaskDescription;

/// A task queued for dispatch, with its already-resolved plan.
#[derive(Debug, Clone)]
struct Entry {
    desc: TaskDescription,
    plan: ExecutablePlan,
}

/// A dispatch decision: the task, its plan, and the slot ids it occupies.
#[derive(Debug, Clone)]
pub struct Dispatch {
    pub desc: TaskDescription,
    pub plan: ExecutablePlan,
    pub slots: Vec<u32>,
}

/// FIFO first-fit scheduler over `total_slots` slots.
#[derive(Debug, Clone)]
pub struct Scheduler {
    queue: VecDeque<Entry>,
    free: BTreeSet<u32>,
    total_slots: u32,
}

impl Scheduler {
    pub fn new(total_slots: u32) -> Self {
        Scheduler { queue: VecDeque::new(), free: (0..total_slots).collect(), total_slots }
    }

    pub fn total_slots(&self) -> u32 {
        self.total_slots
    }

    pub fn free_slots(&self) -> u32 {
        self.free.len() as u32
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn enqueue(&mut self, desc: TaskDescription, plan: ExecutablePlan) {
        self.queue.push_back(Entry { desc, plan });
    }

    /// Dispatches the maximal FIFO-first-fit set: walks the queue in order,
    /// dispatching every task that fits the remaining free slots and
    /// skipping (not removing) those that do not. Lowest free slot ids are
    /// assigned first, which keeps assignments deterministic.
    pub fn schedule_step(&mut self) -> Vec<Dispatch> {
        let mut dispatched = Vec::new();
        let mut keep = VecDeque::with_capacity(self.queue.len());
        while let Some(entry) = self.queue.pop_front() {
            if self.free.is_empty() {
                keep.push_back(entry);
                keep.append(&mut self.queue);
                break;
            }
            let need = entry.desc.slots_required as usize;
            if need <= self.free.len() {
                let slots: Vec<u32> = self.free.iter().copied().take(need).collect();
                for s in &slots {
                    self.free.remove(s);
                }
                dispatched.push(Dispatch { desc: entry.desc, plan: entry.plan, slots });
            } else {
                keep.push_back(entry);
            }
        }
        self.queue = keep;
        dispatched
    }

    /// Returns a completed task's slots to the pool.
    pub fn release(&mut self, slots: &[u32]) {
        for s in slots {
            debug_assert!(*s < self.total_slots, "released slot id out of range");
            let fresh = self.free.insert(*s);
            debug_assert!(fresh, "slot released twice");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskKey;

    fn desc(id: &str, slots: u32) -> TaskDescription {
        TaskDescription {
            task_id: id.into(),
            kernel: "sleep".into(),
            args: vec![],
            slots_required: slots,
            key: TaskKey::new(0, 0, 0),
            inputs: vec![],
            outputs: vec![],
        }
    }

    fn plan() -> ExecutablePlan {
        ExecutablePlan::simulated(1.0)
    }

    #[test]
    fn dispatches_both_when_they_fit() {
        let mut sched = Scheduler::new(2);
        sched.enqueue(desc("a", 1), plan());
        sched.enqueue(desc("b", 1), plan());
        let out = sched.schedule_step();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].slots, [0]);
        assert_eq!(out[1].slots, [1]);
        assert_eq!(sched.free_slots(), 0);
    }

    #[test]
    fn first_fit_skips_wide_head() {
        let mut sched = Scheduler::new(2);
        sched.enqueue(desc("wide", 4), plan());
        sched.enqueue(desc("narrow", 1), plan());
        let out = sched.schedule_step();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].desc.task_id, "narrow");
        // The wide task stays at the head for the next round.
        assert_eq!(sched.queue_len(), 1);
        assert_eq!(sched.free_slots(), 1);
    }

    #[test]
    fn empty_queue_dispatches_nothing() {
        let mut sched = Scheduler::new(2);
        assert!(sched.schedule_step().is_empty());
        assert_eq!(sched.free_slots(), 2);
    }

    #[test]
    fn release_makes_slots_reusable() {
        let mut sched = Scheduler::new(1);
        sched.enqueue(desc("a", 1), plan());
        sched.enqueue(desc("b", 1), plan());
        let first = sched.schedule_step();
        assert_eq!(first.len(), 1);
        assert!(sched.schedule_step().is_empty());
        sched.release(&first[0].slots);
        let second = sched.schedule_step();
        assert_eq!(second.len(), 1);
        assert_eq!(second[0].desc.task_id, "b");
        assert_eq!(second[0].slots, [0]);
    }

    #[test]
    fn capacity_is_never_exceeded() {
        let mut sched = Scheduler::new(3);
        for i in 0..5 {
            sched.enqueue(desc(&format!("t{i}"), 2), plan());
        }
        let out = sched.schedule_step();
        let used: u32 = out.iter().map(|d| d.slots.len() as u32).sum();
        assert!(used <= 3);
        assert_eq!(out.len(), 1);
    }
}
