//! Virtual-clock discrete-event backend.
//!
//! A classic priority-queue event loop: pilot activation and task
//! completions are the only event kinds; everything else (wave emission,
//! scheduling, dispatch) happens synchronously when an event fires. Ties
//! are broken by `(timestamp, event kind, task key)`, so two runs of the
//! same workload produce byte-identical logs.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use crate::event::{EventKind, EventLog, EventRecord, RunStamps};
use crate::kernel::{ExecutablePlan, KernelRegistry};
use crate::pattern::PatternState;
use crate::runtime::{Pilot, RunConfig, RunError, RunFailure, RunOutcome, SimTuning};
use crate::sched::Scheduler;
use crate::task::{
    Backend, ResourceRequest, Seconds, TaskDescription, TaskKey, TaskRecord, TaskState,
};

#[derive(Debug, Clone, PartialEq)]
enum SimEventKind {
    PilotActivated,
    TaskCompleted { task_id: String, success: bool },
}

#[derive(Debug, Clone)]
struct SimEvent {
    t: Seconds,
    rank: u8,
    key: TaskKey,
    kind: SimEventKind,
}

impl SimEvent {
    fn pilot(t: Seconds) -> Self {
        SimEvent { t, rank: 0, key: TaskKey::default(), kind: SimEventKind::PilotActivated }
    }

    fn completion(t: Seconds, key: TaskKey, task_id: String, success: bool) -> Self {
        SimEvent { t, rank: 1, key, kind: SimEventKind::TaskCompleted { task_id, success } }
    }
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for SimEvent {}
impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.rank.cmp(&other.rank))
            .then(self.key.cmp(&other.key))
    }
}

struct SimEngine<'a> {
    pattern: &'a mut PatternState,
    registry: &'a KernelRegistry,
    request: &'a ResourceRequest,
    cfg: RunConfig,
    tuning: SimTuning,
    now: Seconds,
    heap: BinaryHeap<Reverse<SimEvent>>,
    sched: Scheduler,
    tasks: BTreeMap<String, TaskRecord>,
    plans: BTreeMap<String, ExecutablePlan>,
    log: EventLog,
    stamps: RunStamps,
    pilot: Pilot,
}

/// Runs `pattern` to completion on the virtual clock.
///
/// Drives the loop ready-wave → schedule → execute → record-completion
/// until the pattern finishes, then cancels the pilot. On failure
/// (exhausted retries, walltime) the partial outcome is preserved inside
/// the returned [`RunFailure`].
pub fn run_simulated(
    pattern: &mut PatternState,
    request: &ResourceRequest,
    registry: &KernelRegistry,
    cfg: RunConfig,
    tuning: SimTuning,
) -> Result<RunOutcome, alloc::boxed::Box<RunFailure>> {
    let pilot = match Pilot::allocate(request) {
        Ok(p) => p,
        Err(e) => {
            return Err(alloc::boxed::Box::new(RunFailure {
                error: RunError::Task(e),
                partial: RunOutcome {
                    log: EventLog::new(),
                    stamps: RunStamps::default(),
                    tasks: BTreeMap::new(),
                    pilot: Pilot {
                        pilot_id: 0,
                        total_slots: request.total_slots,
                        state: crate::runtime::PilotState::Queued,
                        activation_time: None,
                    },
                },
            }))
        }
    };
    let mut engine = SimEngine {
        pattern,
        registry,
        request,
        cfg,
        tuning,
        now: 0.0,
        heap: BinaryHeap::new(),
        sched: Scheduler::new(request.total_slots),
        tasks: BTreeMap::new(),
        plans: BTreeMap::new(),
        log: EventLog::new(),
        stamps: RunStamps::default(),
        pilot,
    };
    match engine.drive() {
        Ok(()) => Ok(engine.into_outcome()),
        Err(error) => Err(alloc::boxed::Box::new(engine.into_failure(error))),
    }
}

impl<'a> SimEngine<'a> {
    fn drive(&mut self) -> Result<(), RunError> {
        self.stamps.run_start = 0.0;
        self.now += self.tuning.init_latency;
        self.stamps.init_done = self.now;

        // Bind-time check: the widest stage must fit the pilot.
        if let Some((role, needed)) = self.pattern.widest_binding() {
            if needed > self.request.total_slots {
                return Err(RunError::InsufficientSlots {
                    task_id: role,
                    needed,
                    available: self.request.total_slots,
                });
            }
        }

        self.now += self.tuning.allocate_latency;
        self.stamps.allocate_done = self.now;
        self.heap.push(Reverse(SimEvent::pilot(self.now + self.request.queue_wait)));

        while let Some(Reverse(event)) = self.heap.pop() {
            if event.t > self.request.walltime_limit {
                self.now = self.request.walltime_limit;
                return Err(RunError::WalltimeExceeded { limit: self.request.walltime_limit });
            }
            self.now = event.t;
            match event.kind {
                SimEventKind::PilotActivated => self.on_pilot_active()?,
                SimEventKind::TaskCompleted { task_id, success } => {
                    self.on_task_completed(&task_id, success)?
                }
            }
            if self.pattern.finished() {
                self.finish();
                return Ok(());
            }
        }
        if self.pattern.finished() {
            self.finish();
            Ok(())
        } else {
            Err(RunError::Stalled {
                pending: self.pattern.planned_total() - self.pattern.completed_count(),
            })
        }
    }

    fn on_pilot_active(&mut self) -> Result<(), RunError> {
        self.pilot.activate(self.now);
        self.log.push(EventRecord::pilot_active(self.now, self.request.total_slots));
        // Task creation is charged once, serially, for the whole workload:
        // per-task dispatch latency scales the span with the task count and
        // keeps it outside the execution window.
        self.now += self.pattern.planned_total() as Seconds * self.tuning.dispatch_latency;
        self.stamps.tasks_created = self.now;
        self.emit_wave()?;
        self.dispatch()
    }

    fn on_task_completed(&mut self, task_id: &str, success: bool) -> Result<(), RunError> {
        let record = self.tasks.get_mut(task_id).expect("completion for unknown task");
        let slots = core::mem::take(&mut record.assigned_slots);
        self.sched.release(&slots);
        if success {
            record.exit_status = Some(0);
            record.transition(TaskState::Done, self.now)?;
            self.log.push(EventRecord::task_ended(self.now, &record.description, TaskState::Done));
            let record = self.tasks.get(task_id).expect("present").clone();
            self.pattern.record_completion(&record)?;
            self.emit_wave()?;
        } else {
            record.exit_status = Some(1);
            record.transition(TaskState::Failed, self.now)?;
            self.log.push(EventRecord::task_ended(
                self.now,
                &record.description,
                TaskState::Failed,
            ));
            if record.attempts > self.cfg.retry_limit {
                return Err(RunError::TaskFailedPermanently {
                    task_id: task_id.into(),
                    attempts: record.attempts,
                });
            }
            // Retry: back to the queue with its original plan.
            record.transition(TaskState::Scheduled, self.now)?;
            self.log.push(EventRecord::task(self.now, EventKind::TaskScheduled, &record.description));
            let desc = record.description.clone();
            let plan = self.plans.get(task_id).expect("plan cached at first enqueue").clone();
            self.sched.enqueue(desc, plan);
        }
        self.dispatch()
    }

    fn emit_wave(&mut self) -> Result<(), RunError> {
        for desc in self.pattern.ready_wave() {
            self.enqueue_task(desc)?;
        }
        Ok(())
    }

    fn enqueue_task(&mut self, desc: TaskDescription) -> Result<(), RunError> {
        desc.validate()?;
        if desc.slots_required > self.request.total_slots {
            return Err(RunError::InsufficientSlots {
                task_id: desc.task_id.clone(),
                needed: desc.slots_required,
                available: self.request.total_slots,
            });
        }
        if self.tasks.contains_key(&desc.task_id) {
            return Err(RunError::Task(crate::task::TaskError::DuplicateTaskId(
                desc.task_id.clone(),
            )));
        }
        let plan = self.registry.resolve(&desc.kernel, &desc.args, Backend::Simulated)?;
        let mut record = TaskRecord::new(desc.clone());
        record.transition(TaskState::Scheduled, self.now)?;
        self.log.push(EventRecord::task(self.now, EventKind::TaskScheduled, &desc));
        self.plans.insert(desc.task_id.clone(), plan.clone());
        self.tasks.insert(desc.task_id.clone(), record);
        self.sched.enqueue(desc, plan);
        Ok(())
    }

    fn dispatch(&mut self) -> Result<(), RunError> {
        for d in self.sched.schedule_step() {
            let record = self.tasks.get_mut(&d.desc.task_id).expect("queued task has a record");
            record.transition(TaskState::Running, self.now)?;
            debug_assert_eq!(d.slots.len() as u32, d.desc.slots_required);
            record.assigned_slots = d.slots;
            self.log.push(EventRecord::task(self.now, EventKind::TaskStarted, &d.desc));
            let (duration, failures) = match d.plan {
                ExecutablePlan::Simulated { duration, failures_before_success } => {
                    (duration, failures_before_success)
                }
                ExecutablePlan::Command { .. } => {
                    // Command plans cannot run on the virtual clock.
                    return Err(RunError::Kernel(crate::kernel::KernelError::BadArgs {
                        kernel: d.desc.kernel.clone(),
                        reason: "kernel resolved to a process command under the simulated backend"
                            .into(),
                    }));
                }
            };
            let success = record.attempts > failures;
            self.heap.push(Reverse(SimEvent::completion(
                self.now + duration,
                d.desc.key,
                d.desc.task_id,
                success,
            )));
        }
        Ok(())
    }

    fn finish(&mut self) {
        self.log.push(EventRecord::marker(self.now, EventKind::PatternFinished));
        self.stamps.cancel_start = self.now;
        self.now += self.tuning.cancel_latency;
        self.pilot.cancel();
        self.log.push(EventRecord::marker(self.now, EventKind::PilotCancelled));
        self.stamps.run_end = self.now;
    }

    fn into_outcome(self) -> RunOutcome {
        RunOutcome { log: self.log, stamps: self.stamps, tasks: self.tasks, pilot: self.pilot }
    }

    /// Aborts: running tasks are marked Failed, the pilot is cancelled, and
    /// the partial log is preserved.
    fn into_failure(mut self, error: RunError) -> RunFailure {
        let at = self.now;
        let mut failed: Vec<String> = Vec::new();
        for (id, record) in self.tasks.iter_mut() {
            if record.state == TaskState::Running {
                record.assigned_slots.clear();
                let _ = record.transition(TaskState::Failed, at);
                failed.push(id.clone());
            }
        }
        for id in failed {
            let desc = self.tasks[&id].description.clone();
            self.log.push(EventRecord::task_ended(at, &desc, TaskState::Failed));
        }
        self.pilot.cancel();
        self.log.push(EventRecord::marker(at, EventKind::PilotCancelled));
        self.stamps.cancel_start = at;
        self.stamps.run_end = at;
        RunFailure { error, partial: self.into_outcome() }
    }
}
