//! Process backend: runs resolved kernel commands as real child processes
//! in per-task working directories, with the same slot accounting and
//! scheduling policy as the virtual-clock backend.
//!
//! Working directories are laid out `<run_root>/run/<iteration>/<stage>/<member>/`;
//! a logical input file resolves to the same member's previous-stage
//! directory, which is how a `ccount` stage finds its `mkfile` stage's
//! output. Each task's stdout/stderr are captured to files in its directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use starling_core::event::{EventKind, EventLog, EventRecord, RunStamps};
use starling_core::kernel::{CommandArg, ExecutablePlan, KernelRegistry, ProgramRef};
use starling_core::pattern::PatternState;
use starling_core::runtime::{Pilot, RunConfig, RunError, RunFailure, RunOutcome};
use starling_core::sched::Scheduler;
use starling_core::task::{
    Backend, ResourceRequest, TaskDescription, TaskError, TaskKey, TaskRecord, TaskState,
};

/// Cooperative cancellation for an in-flight run.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        CancelToken::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Process-backend configuration.
#[derive(Debug, Clone)]
pub struct LocalConfig {
    /// Executable invoked as `<runner> kernel <name> ...` for built-in
    /// kernels; normally the CLI binary itself.
    pub runner: PathBuf,
    /// Root under which per-task working directories are created.
    pub run_root: PathBuf,
    /// Child-poll granularity.
    pub poll_interval: Duration,
}

impl LocalConfig {
    pub fn new(runner: PathBuf, run_root: PathBuf) -> Self {
        LocalConfig { runner, run_root, poll_interval: Duration::from_millis(5) }
    }
}

type Completion = (String, Option<i32>);

struct LocalEngine<'a> {
    pattern: &'a mut PatternState,
    registry: &'a KernelRegistry,
    request: &'a ResourceRequest,
    cfg: RunConfig,
    local: &'a LocalConfig,
    cancel: &'a CancelToken,
    t0: Instant,
    sched: Scheduler,
    tasks: BTreeMap<String, TaskRecord>,
    plans: BTreeMap<String, ExecutablePlan>,
    kill_flags: BTreeMap<String, Arc<AtomicBool>>,
    running: usize,
    tx: Sender<Completion>,
    rx: Receiver<Completion>,
    log: EventLog,
    stamps: RunStamps,
    pilot: Pilot,
}

/// Runs `pattern` on real processes. Identical decision logic to the
/// simulated backend; only the clock and the execution substrate differ.
pub fn run_local(
    pattern: &mut PatternState,
    request: &ResourceRequest,
    registry: &KernelRegistry,
    cfg: RunConfig,
    local: &LocalConfig,
    cancel: &CancelToken,
) -> Result<RunOutcome, Box<RunFailure>> {
    let pilot = match Pilot::allocate(request) {
        Ok(p) => p,
        Err(e) => {
            return Err(Box::new(RunFailure {
                error: RunError::Task(e),
                partial: RunOutcome {
                    log: EventLog::new(),
                    stamps: RunStamps::default(),
                    tasks: BTreeMap::new(),
                    pilot: Pilot {
                        pilot_id: 0,
                        total_slots: request.total_slots,
                        state: starling_core::runtime::PilotState::Queued,
                        activation_time: None,
                    },
                },
            }))
        }
    };
    let (tx, rx) = std::sync::mpsc::channel();
    let mut engine = LocalEngine {
        pattern,
        registry,
        request,
        cfg,
        local,
        cancel,
        t0: Instant::now(),
        sched: Scheduler::new(request.total_slots),
        tasks: BTreeMap::new(),
        plans: BTreeMap::new(),
        kill_flags: BTreeMap::new(),
        running: 0,
        tx,
        rx,
        log: EventLog::new(),
        stamps: RunStamps::default(),
        pilot,
    };
    match engine.drive() {
        Ok(()) => Ok(engine.into_outcome()),
        Err(error) => Err(Box::new(engine.into_failure(error))),
    }
}

impl<'a> LocalEngine<'a> {
    fn now(&self) -> f64 {
        self.t0.elapsed().as_secs_f64()
    }

    fn task_dir(&self, key: TaskKey) -> PathBuf {
        let mut dir = self.local.run_root.join("run");
        if key.unit > 0 {
            dir = dir.join(format!("u{}", key.unit));
        }
        dir.join(key.iteration.to_string())
            .join(key.stage.to_string())
            .join(key.member.to_string())
    }

    /// Logical input: the same member's previous-stage directory (own
    /// directory for stage 0).
    fn input_dir(&self, key: TaskKey) -> PathBuf {
        if key.stage == 0 {
            self.task_dir(key)
        } else {
            self.task_dir(TaskKey { stage: key.stage - 1, ..key })
        }
    }

    fn drive(&mut self) -> Result<(), RunError> {
        self.stamps.run_start = 0.0;
        self.stamps.init_done = self.now();
        if let Some((role, needed)) = self.pattern.widest_binding() {
            if needed > self.request.total_slots {
                return Err(RunError::InsufficientSlots {
                    task_id: role,
                    needed,
                    available: self.request.total_slots,
                });
            }
        }
        self.stamps.allocate_done = self.now();
        // No batch queue locally: the pilot activates immediately.
        let t = self.now();
        self.pilot.activate(t);
        self.log.push(EventRecord::pilot_active(t, self.request.total_slots));
        self.emit_wave()?;
        self.stamps.tasks_created = self.now();
        self.dispatch()?;

        loop {
            if self.pattern.finished() {
                self.finish();
                return Ok(());
            }
            if self.now() > self.request.walltime_limit {
                return Err(RunError::WalltimeExceeded { limit: self.request.walltime_limit });
            }
            if self.cancel.is_cancelled() {
                return Err(RunError::Cancelled);
            }
            if self.running == 0 && self.sched.queue_len() == 0 {
                return Err(RunError::Stalled {
                    pending: self.pattern.planned_total() - self.pattern.completed_count(),
                });
            }
            match self.rx.recv_timeout(self.local.poll_interval) {
                Ok((task_id, code)) => self.on_completion(&task_id, code)?,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(RunError::Backend("completion channel closed".into()))
                }
            }
        }
    }

    fn on_completion(&mut self, task_id: &str, code: Option<i32>) -> Result<(), RunError> {
        self.running -= 1;
        self.kill_flags.remove(task_id);
        let now = self.now();
        let record = self.tasks.get_mut(task_id).expect("completion for unknown task");
        let slots = std::mem::take(&mut record.assigned_slots);
        self.sched.release(&slots);
        record.exit_status = code;
        if code == Some(0) {
            record.transition(TaskState::Done, now)?;
            self.log.push(EventRecord::task_ended(now, &record.description, TaskState::Done));
            let record = self.tasks.get(task_id).expect("present").clone();
            self.pattern.record_completion(&record)?;
            self.emit_wave()?;
        } else {
            record.transition(TaskState::Failed, now)?;
            self.log.push(EventRecord::task_ended(now, &record.description, TaskState::Failed));
            if record.attempts > self.cfg.retry_limit {
                return Err(RunError::TaskFailedPermanently {
                    task_id: task_id.into(),
                    attempts: record.attempts,
                });
            }
            record.transition(TaskState::Scheduled, now)?;
            self.log.push(EventRecord::task(now, EventKind::TaskScheduled, &record.description));
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
            return Err(RunError::Task(TaskError::DuplicateTaskId(desc.task_id.clone())));
        }
        let plan = self.registry.resolve(&desc.kernel, &desc.args, Backend::LocalProcess)?;
        let now = self.now();
        let mut record = TaskRecord::new(desc.clone());
        record.transition(TaskState::Scheduled, now)?;
        self.log.push(EventRecord::task(now, EventKind::TaskScheduled, &desc));
        self.plans.insert(desc.task_id.clone(), plan.clone());
        self.tasks.insert(desc.task_id.clone(), record);
        self.sched.enqueue(desc, plan);
        Ok(())
    }

    fn dispatch(&mut self) -> Result<(), RunError> {
        for d in self.sched.schedule_step() {
            self.spawn_task(&d.desc, &d.plan, d.slots)?;
        }
        Ok(())
    }

    fn spawn_task(
        &mut self,
        desc: &TaskDescription,
        plan: &ExecutablePlan,
        slots: Vec<u32>,
    ) -> Result<(), RunError> {
        let io = |e: std::io::Error, what: &str| RunError::Backend(format!("{what}: {e}"));
        let dir = self.task_dir(desc.key);
        fs::create_dir_all(&dir).map_err(|e| io(e, "create task dir"))?;
        let mut command = self.build_command(desc, plan, &dir)?;
        let stdout = fs::File::create(dir.join("stdout")).map_err(|e| io(e, "create stdout"))?;
        let stderr = fs::File::create(dir.join("stderr")).map_err(|e| io(e, "create stderr"))?;
        command.current_dir(&dir).stdin(Stdio::null()).stdout(stdout).stderr(stderr);
        let mut child = command.spawn().map_err(|e| io(e, "spawn task"))?;

        let now = self.now();
        let record = self.tasks.get_mut(&desc.task_id).expect("queued task has a record");
        record.transition(TaskState::Running, now)?;
        record.assigned_slots = slots;
        self.log.push(EventRecord::task(now, EventKind::TaskStarted, desc));

        let kill = Arc::new(AtomicBool::new(false));
        self.kill_flags.insert(desc.task_id.clone(), kill.clone());
        self.running += 1;
        let tx = self.tx.clone();
        let task_id = desc.task_id.clone();
        let poll = self.local.poll_interval;
        std::thread::spawn(move || loop {
            match child.try_wait() {
                Ok(Some(status)) => {
                    let _ = tx.send((task_id, status.code()));
                    return;
                }
                Ok(None) => {
                    if kill.load(Ordering::SeqCst) {
                        let _ = child.kill();
                        let _ = child.wait();
                        let _ = tx.send((task_id, None));
                        return;
                    }
                    std::thread::sleep(poll);
                }
                Err(_) => {
                    let _ = tx.send((task_id, None));
                    return;
                }
            }
        });
        Ok(())
    }

    fn build_command(
        &self,
        desc: &TaskDescription,
        plan: &ExecutablePlan,
        dir: &Path,
    ) -> Result<Command, RunError> {
        let ExecutablePlan::Command { program, args } = plan else {
            return Err(RunError::Backend(format!(
                "kernel `{}` resolved to a duration model under the process backend",
                desc.kernel
            )));
        };
        let mut command = match program {
            ProgramRef::KernelRunner => {
                let mut c = Command::new(&self.local.runner);
                c.arg("kernel");
                c
            }
            ProgramRef::Program(path) => Command::new(path),
        };
        for arg in args {
            match arg {
                CommandArg::Lit(s) => {
                    command.arg(s);
                }
                CommandArg::OutputPath(name) => {
                    command.arg(dir.join(name));
                }
                CommandArg::InputPath(name) => {
                    command.arg(self.input_dir(desc.key).join(name));
                }
            }
        }
        Ok(command)
    }

    fn finish(&mut self) {
        let t = self.now();
        self.log.push(EventRecord::marker(t, EventKind::PatternFinished));
        self.stamps.cancel_start = t;
        self.pilot.cancel();
        let t = self.now();
        self.log.push(EventRecord::marker(t, EventKind::PilotCancelled));
        self.stamps.run_end = t;
    }

    fn into_outcome(self) -> RunOutcome {
        RunOutcome { log: self.log, stamps: self.stamps, tasks: self.tasks, pilot: self.pilot }
    }

    /// Aborts the run: children are killed and reaped, their tasks marked
    /// Failed, the pilot cancelled, and the partial log preserved.
    fn into_failure(mut self, error: RunError) -> RunFailure {
        for flag in self.kill_flags.values() {
            flag.store(true, Ordering::SeqCst);
        }
        let deadline = Instant::now() + Duration::from_secs(5);
        while self.running > 0 && Instant::now() < deadline {
            match self.rx.recv_timeout(self.local.poll_interval) {
                Ok((task_id, _)) => {
                    self.running -= 1;
                    let now = self.now();
                    if let Some(record) = self.tasks.get_mut(&task_id) {
                        record.assigned_slots.clear();
                        let _ = record.transition(TaskState::Failed, now);
                        let desc = record.description.clone();
                        self.log.push(EventRecord::task_ended(now, &desc, TaskState::Failed));
                    }
                }
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
        self.pilot.cancel();
        let t = self.now();
        self.log.push(EventRecord::marker(t, EventKind::PilotCancelled));
        self.stamps.cancel_start = self.stamps.cancel_start.max(t);
        self.stamps.run_end = t;
        RunFailure { error, partial: self.into_outcome() }
    }
}
