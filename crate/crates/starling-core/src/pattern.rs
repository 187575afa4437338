//! The three unit execution patterns, as state machines.
//!
//! A pattern instance tracks which tasks have completed and emits waves of
//! ready task descriptions under pattern-specific synchronization rules:
//!
//! * **Ensemble of pipelines** — N independent pipelines of M ordered
//!   stages; a task depends only on its own pipeline's previous stage.
//! * **Ensemble exchange** — members alternate simulation and exchange
//!   phases. Exchanges are pairwise (or one whole-ensemble step) and there
//!   is no global barrier: a pair proceeds as soon as both partners are
//!   done, regardless of the rest of the ensemble.
//! * **Simulation analysis loop** — iterative two-stage pattern with global
//!   barriers: all simulations of an iteration complete before any analysis
//!   starts, and all analyses complete before the next iteration begins.
//!
//! Unit patterns compose sequentially: the next pattern's first wave becomes
//! ready only once the previous pattern has finished.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::kernel::{ArgKind, KernelPlugin, KernelRegistry};
use crate::task::{TaskDescription, TaskKey, TaskRecord, TaskState};

/// How ensemble-exchange members are grouped for the exchange stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingPolicy {
    /// Pair (2i, 2i+1) once both have finished their simulation.
    NeighborByIndex,
    /// Greedily pair members in simulation completion order.
    ReadinessPairs,
    /// One serial exchange task over the whole ensemble per iteration.
    WholeEnsemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EoPParams {
    pub n_pipelines: u32,
    pub n_stages: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EEParams {
    pub n_members: u32,
    pub n_iterations: u32,
    pub pairing: PairingPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SALParams {
    pub n_simulations: u32,
    pub n_analyses: u32,
    pub n_iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternVariant {
    EnsembleOfPipelines(EoPParams),
    EnsembleExchange(EEParams),
    SimulationAnalysisLoop(SALParams),
}

impl PatternVariant {
    pub fn name(&self) -> &'static str {
        match self {
            PatternVariant::EnsembleOfPipelines(_) => "ensemble-of-pipelines",
            PatternVariant::EnsembleExchange(_) => "ensemble-exchange",
            PatternVariant::SimulationAnalysisLoop(_) => "simulation-analysis-loop",
        }
    }
}

/// Kernel bound to one stage role of a pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct StageBinding {
    pub kernel: String,
    /// Argument templates; values may contain `{member}`, `{stage}`,
    /// `{iteration}`, `{participants}`, `{n_inputs}`, `{slots}`, `{seed}`.
    pub args: Vec<(String, String)>,
    pub slots_required: u32,
}

/// A parametrized pattern plus its stage-role → kernel bindings.
///
/// Role keys are `stage0..stage{M-1}` for ensemble-of-pipelines,
/// `simulation`/`exchange` for ensemble exchange and
/// `simulation`/`analysis` for the simulation analysis loop. EE and SAL
/// roles accept per-iteration overrides (`simulation1` beats `simulation`
/// for iteration 1), which is how a two-stage workload is expressed
/// natively in every pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    pub variant: PatternVariant,
    pub stage_kernels: BTreeMap<String, StageBinding>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("invalid pattern spec: {0}")]
    InvalidSpec(String),
    #[error("task {0} does not belong to this pattern")]
    UnknownTask(String),
    #[error("task {0} is not in the Done state")]
    TaskNotDone(String),
}

fn invalid(msg: impl Into<String>) -> PatternError {
    PatternError::InvalidSpec(msg.into())
}

/// Pairs `ready` members for an exchange under `policy`. The slice must be
/// in simulation completion order (only the membership matters for
/// `NeighborByIndex`). Returned pairs are disjoint; unpaired members wait.
pub fn pair_for_exchange(ready: &[u32], policy: PairingPolicy) -> Vec<(u32, u32)> {
    match policy {
        PairingPolicy::NeighborByIndex => {
            let set: BTreeSet<u32> = ready.iter().copied().collect();
            set.iter()
                .filter(|m| *m % 2 == 0 && set.contains(&(*m + 1)))
                .map(|m| (*m, m + 1))
                .collect()
        }
        PairingPolicy::ReadinessPairs => {
            ready.chunks_exact(2).map(|pair| (pair[0], pair[1])).collect()
        }
        PairingPolicy::WholeEnsemble => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ExchangeGroup {
    Pair(u32, u32),
    All,
}

impl ExchangeGroup {
    fn participants(&self, n_members: u32) -> u32 {
        match self {
            ExchangeGroup::Pair(..) => 2,
            ExchangeGroup::All => n_members,
        }
    }
}

/// Flag names whose values are logical input/output file names, per the
/// kernel's argument schema.
fn classify_flags(plugin: &KernelPlugin, args: &[(String, String)]) -> (Vec<String>, Vec<String>) {
    let mut input_flags = Vec::new();
    let mut output_flags = Vec::new();
    for (flag, _) in args {
        if let Some(spec) = plugin.arg_schema().iter().find(|s| s.flag == flag) {
            match spec.kind {
                ArgKind::InputFile => input_flags.push(flag.clone()),
                ArgKind::OutputFile => output_flags.push(flag.clone()),
                ArgKind::Value => {}
            }
        }
    }
    (input_flags, output_flags)
}

/// A stage binding with its logical file flags pre-classified, so task
/// materialization needs no registry access.
#[derive(Debug, Clone)]
struct ResolvedBinding {
    kernel: String,
    args: Vec<(String, String)>,
    slots_required: u32,
    input_flags: Vec<String>,
    output_flags: Vec<String>,
}

#[derive(Debug, Clone)]
struct UnitState {
    variant: PatternVariant,
    bindings: BTreeMap<String, ResolvedBinding>,
    unit_index: u32,
    id_prefix: String,
    seed: u64,
    planned_total: usize,
    ready: BTreeSet<TaskKey>,
    emitted: BTreeSet<TaskKey>,
    completed: BTreeSet<TaskKey>,
    // Per-iteration barrier counters (SAL) and EE pairing bookkeeping.
    sims_done: BTreeMap<u32, u32>,
    analyses_done: BTreeMap<u32, u32>,
    ee_waiting: BTreeMap<u32, Vec<u32>>,
    ee_exchanges: BTreeMap<TaskKey, ExchangeGroup>,
    ee_released: BTreeMap<u32, BTreeSet<u32>>,
}

const STAGE_SIM: u32 = 0;
const STAGE_EXCHANGE: u32 = 1;
const STAGE_ANALYSIS: u32 = 1;

impl UnitState {
    fn new(
        spec: &PatternSpec,
        registry: &KernelRegistry,
        unit_index: u32,
        id_prefix: String,
        seed: u64,
    ) -> Result<Self, PatternError> {
        let planned_total = validate_spec(spec, registry)?;
        let mut bindings = BTreeMap::new();
        for (role, binding) in &spec.stage_kernels {
            let plugin = registry
                .get(&binding.kernel)
                .ok_or_else(|| invalid(format!("unknown kernel `{}`", binding.kernel)))?;
            let (input_flags, output_flags) = classify_flags(plugin, &binding.args);
            bindings.insert(
                role.clone(),
                ResolvedBinding {
                    kernel: binding.kernel.clone(),
                    args: binding.args.clone(),
                    slots_required: binding.slots_required,
                    input_flags,
                    output_flags,
                },
            );
        }
        Ok(UnitState {
            variant: spec.variant,
            bindings,
            unit_index,
            id_prefix,
            seed,
            planned_total,
            ready: BTreeSet::new(),
            emitted: BTreeSet::new(),
            completed: BTreeSet::new(),
            sims_done: BTreeMap::new(),
            analyses_done: BTreeMap::new(),
            ee_waiting: BTreeMap::new(),
            ee_exchanges: BTreeMap::new(),
            ee_released: BTreeMap::new(),
        })
    }

    fn finished(&self) -> bool {
        self.completed.len() == self.planned_total
    }

    fn key(&self, iteration: u32, stage: u32, member: u32) -> TaskKey {
        TaskKey::in_unit(self.unit_index, iteration, stage, member)
    }

    fn enable(&mut self, key: TaskKey) {
        if !self.emitted.contains(&key) {
            self.ready.insert(key);
        }
    }

    /// First wave of the unit: every stage-0 / iteration-0 task.
    fn seed_initial_wave(&mut self) {
        match self.variant {
            PatternVariant::EnsembleOfPipelines(p) => {
                for pipe in 0..p.n_pipelines {
                    self.enable(self.key(0, 0, pipe));
                }
            }
            PatternVariant::EnsembleExchange(p) => {
                for m in 0..p.n_members {
                    self.enable(self.key(0, STAGE_SIM, m));
                }
            }
            PatternVariant::SimulationAnalysisLoop(p) => {
                for i in 0..p.n_simulations {
                    self.enable(self.key(0, STAGE_SIM, i));
                }
            }
        }
    }

    /// Reacts to a newly completed task, enabling its successors.
    fn on_completed(&mut self, key: TaskKey) {
        match self.variant {
            PatternVariant::EnsembleOfPipelines(p) => {
                if key.stage + 1 < p.n_stages {
                    self.enable(self.key(0, key.stage + 1, key.member));
                }
            }
            PatternVariant::SimulationAnalysisLoop(p) => {
                let iter = key.iteration;
                if key.stage == STAGE_SIM {
                    let done = self.sims_done.entry(iter).or_insert(0);
                    *done += 1;
                    if *done == p.n_simulations {
                        for j in 0..p.n_analyses {
                            self.enable(self.key(iter, STAGE_ANALYSIS, j));
                        }
                    }
                } else {
                    let done = self.analyses_done.entry(iter).or_insert(0);
                    *done += 1;
                    if *done == p.n_analyses && iter + 1 < p.n_iterations {
                        for i in 0..p.n_simulations {
                            self.enable(self.key(iter + 1, STAGE_SIM, i));
                        }
                    }
                }
            }
            PatternVariant::EnsembleExchange(p) => self.on_completed_ee(key, p),
        }
    }

    fn on_completed_ee(&mut self, key: TaskKey, p: EEParams) {
        let iter = key.iteration;
        if key.stage == STAGE_SIM {
            let member = key.member;
            let done = {
                let done = self.sims_done.entry(iter).or_insert(0);
                *done += 1;
                *done
            };
            match p.pairing {
                PairingPolicy::WholeEnsemble => {
                    if done == p.n_members {
                        let xkey = self.key(iter, STAGE_EXCHANGE, 0);
                        self.ee_exchanges.insert(xkey, ExchangeGroup::All);
                        self.enable(xkey);
                    }
                }
                PairingPolicy::NeighborByIndex => {
                    let partner = member ^ 1;
                    if partner >= p.n_members {
                        // Odd ensemble: the last member has no neighbor and
                        // proceeds without exchanging.
                        self.release_without_exchange(iter, member, p);
                    } else if self.completed.contains(&self.key(iter, STAGE_SIM, partner)) {
                        let (lo, hi) = (member.min(partner), member.max(partner));
                        let xkey = self.key(iter, STAGE_EXCHANGE, lo);
                        self.ee_exchanges.insert(xkey, ExchangeGroup::Pair(lo, hi));
                        self.enable(xkey);
                    }
                }
                PairingPolicy::ReadinessPairs => {
                    let waiting = self.ee_waiting.entry(iter).or_default();
                    waiting.push(member);
                    if waiting.len() == 2 {
                        let (a, b) = (waiting[0], waiting[1]);
                        waiting.clear();
                        let xkey = self.key(iter, STAGE_EXCHANGE, a.min(b));
                        self.ee_exchanges.insert(xkey, ExchangeGroup::Pair(a, b));
                        self.enable(xkey);
                    } else if done == p.n_members {
                        let leftover = self.ee_waiting.entry(iter).or_default().pop();
                        if let Some(m) = leftover {
                            self.release_without_exchange(iter, m, p);
                        }
                    }
                }
            }
        } else {
            // Exchange done: every participant may move to its next iteration.
            let group = self.ee_exchanges.get(&key).cloned();
            if iter + 1 < p.n_iterations {
                match group {
                    Some(ExchangeGroup::Pair(a, b)) => {
                        self.enable(self.key(iter + 1, STAGE_SIM, a));
                        self.enable(self.key(iter + 1, STAGE_SIM, b));
                    }
                    Some(ExchangeGroup::All) => {
                        for m in 0..p.n_members {
                            self.enable(self.key(iter + 1, STAGE_SIM, m));
                        }
                    }
                    None => {}
                }
            }
        }
    }

    fn release_without_exchange(&mut self, iter: u32, member: u32, p: EEParams) {
        self.ee_released.entry(iter).or_default().insert(member);
        if iter + 1 < p.n_iterations {
            self.enable(self.key(iter + 1, STAGE_SIM, member));
        }
    }

    /// `(role base, whether per-iteration overrides apply)` for a stage.
    fn role_of(&self, stage: u32) -> (String, bool) {
        match self.variant {
            PatternVariant::EnsembleOfPipelines(_) => (format!("stage{stage}"), false),
            PatternVariant::EnsembleExchange(_) => {
                if stage == STAGE_SIM {
                    ("simulation".to_string(), true)
                } else {
                    ("exchange".to_string(), true)
                }
            }
            PatternVariant::SimulationAnalysisLoop(_) => {
                if stage == STAGE_SIM {
                    ("simulation".to_string(), true)
                } else {
                    ("analysis".to_string(), true)
                }
            }
        }
    }

    fn binding_for(&self, role: &str, iteration: u32, overridable: bool) -> &ResolvedBinding {
        if overridable {
            if let Some(b) = self.bindings.get(&format!("{role}{iteration}")) {
                return b;
            }
        }
        self.bindings.get(role).expect("binding presence validated at instantiation")
    }

    fn materialize(&self, key: TaskKey) -> TaskDescription {
        let (role, overridable) = self.role_of(key.stage);
        let binding = self.binding_for(&role, key.iteration, overridable);
        let participants = match self.variant {
            PatternVariant::EnsembleExchange(p) if key.stage == STAGE_EXCHANGE => self
                .ee_exchanges
                .get(&key)
                .map(|g| g.participants(p.n_members))
                .unwrap_or(0),
            _ => 0,
        };
        let n_inputs = match self.variant {
            PatternVariant::SimulationAnalysisLoop(p) if key.stage == STAGE_ANALYSIS => {
                p.n_simulations
            }
            _ => 0,
        };
        let ctx = ExpandCtx {
            key,
            participants,
            n_inputs,
            slots: binding.slots_required,
            seed: mix_seed(self.seed, key),
        };
        let args: Vec<(String, String)> = binding
            .args
            .iter()
            .map(|(flag, value)| (flag.clone(), ctx.expand(value)))
            .collect();
        let value_of = |flag: &str| {
            args.iter().find(|(f, _)| f == flag).map(|(_, v)| v.clone())
        };
        let inputs = binding.input_flags.iter().filter_map(|f| value_of(f)).collect();
        let outputs = binding.output_flags.iter().filter_map(|f| value_of(f)).collect();
        TaskDescription {
            task_id: format!("{}{}.i{}.m{}", self.id_prefix, role, key.iteration, key.member),
            kernel: binding.kernel.clone(),
            args,
            slots_required: binding.slots_required,
            key,
            inputs,
            outputs,
        }
    }

    fn max_slots_required(&self) -> u32 {
        self.bindings.values().map(|b| b.slots_required).max().unwrap_or(0)
    }
}

struct ExpandCtx {
    key: TaskKey,
    participants: u32,
    n_inputs: u32,
    slots: u32,
    seed: u64,
}

impl ExpandCtx {
    fn expand(&self, template: &str) -> String {
        if !template.contains('{') {
            return template.to_string();
        }
        template
            .replace("{member}", &self.key.member.to_string())
            .replace("{stage}", &self.key.stage.to_string())
            .replace("{iteration}", &self.key.iteration.to_string())
            .replace("{participants}", &self.participants.to_string())
            .replace("{n_inputs}", &self.n_inputs.to_string())
            .replace("{slots}", &self.slots.to_string())
            .replace("{seed}", &self.seed.to_string())
    }
}

/// Derives a per-task seed from the run seed, so `mkfile` content is unique
/// per task yet byte-identical across reruns. splitmix64 finalizer.
fn mix_seed(seed: u64, key: TaskKey) -> u64 {
    let packed = ((key.unit as u64) << 48)
        | ((key.iteration as u64) << 32)
        | ((key.stage as u64) << 28)
        | key.member as u64;
    let mut z = seed.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(packed);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Planned task count, or an `InvalidSpec` explaining what is wrong.
fn validate_spec(spec: &PatternSpec, registry: &KernelRegistry) -> Result<usize, PatternError> {
    for (role, binding) in &spec.stage_kernels {
        let plugin = registry
            .get(&binding.kernel)
            .ok_or_else(|| invalid(format!("role `{role}`: unknown kernel `{}`", binding.kernel)))?;
        if binding.slots_required == 0 {
            return Err(invalid(format!("role `{role}`: slots_required must be >= 1")));
        }
        plugin
            .validate_args(&binding.args)
            .map_err(|e| invalid(format!("role `{role}`: {e}")))?;
    }
    let require_role = |role: &str, iter: Option<u32>| -> Result<(), PatternError> {
        let found = match iter {
            Some(k) => {
                spec.stage_kernels.contains_key(&format!("{role}{k}"))
                    || spec.stage_kernels.contains_key(role)
            }
            None => spec.stage_kernels.contains_key(role),
        };
        if found {
            Ok(())
        } else {
            Err(invalid(format!("missing stage binding for role `{role}`")))
        }
    };
    match spec.variant {
        PatternVariant::EnsembleOfPipelines(p) => {
            if p.n_pipelines == 0 || p.n_stages == 0 {
                return Err(invalid("ensemble-of-pipelines requires pipelines >= 1 and stages >= 1"));
            }
            for s in 0..p.n_stages {
                require_role(&format!("stage{s}"), None)?;
            }
            Ok(p.n_pipelines as usize * p.n_stages as usize)
        }
        PatternVariant::EnsembleExchange(p) => {
            if p.n_members < 2 {
                return Err(invalid("ensemble-exchange requires members >= 2"));
            }
            if p.n_iterations == 0 {
                return Err(invalid("ensemble-exchange requires iterations >= 1"));
            }
            for k in 0..p.n_iterations {
                require_role("simulation", Some(k))?;
                require_role("exchange", Some(k))?;
            }
            let exchanges_per_iter = match p.pairing {
                PairingPolicy::WholeEnsemble => 1,
                _ => p.n_members as usize / 2,
            };
            Ok(p.n_iterations as usize * (p.n_members as usize + exchanges_per_iter))
        }
        PatternVariant::SimulationAnalysisLoop(p) => {
            if p.n_simulations == 0 || p.n_analyses == 0 || p.n_iterations == 0 {
                return Err(invalid(
                    "simulation-analysis-loop requires simulations, analyses and iterations >= 1",
                ));
            }
            for k in 0..p.n_iterations {
                require_role("simulation", Some(k))?;
                require_role("analysis", Some(k))?;
            }
            Ok(p.n_iterations as usize * (p.n_simulations as usize + p.n_analyses as usize))
        }
    }
}

/// A live pattern (or sequential composition of patterns) being executed.
#[derive(Debug, Clone)]
pub struct PatternState {
    units: Vec<UnitState>,
    active: usize,
}

impl PatternState {
    /// Instantiates a single pattern. `seed` feeds the `{seed}` template
    /// placeholder for per-task PRNG seeding.
    pub fn instantiate(
        spec: &PatternSpec,
        registry: &KernelRegistry,
        seed: u64,
    ) -> Result<Self, PatternError> {
        let mut unit = UnitState::new(spec, registry, 0, String::new(), seed)?;
        unit.seed_initial_wave();
        Ok(PatternState { units: alloc::vec![unit], active: 0 })
    }

    /// Sequentially composes patterns: pattern i+1's first wave becomes
    /// ready only after pattern i has finished.
    pub fn compose(
        specs: &[PatternSpec],
        registry: &KernelRegistry,
        seed: u64,
    ) -> Result<Self, PatternError> {
        if specs.is_empty() {
            return Err(invalid("composition of zero patterns"));
        }
        let mut units = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            units.push(UnitState::new(spec, registry, i as u32, format!("u{i}."), seed)?);
        }
        units[0].seed_initial_wave();
        Ok(PatternState { units, active: 0 })
    }

    /// Total number of tasks this pattern will run.
    pub fn planned_total(&self) -> usize {
        self.units.iter().map(|u| u.planned_total).sum()
    }

    pub fn completed_count(&self) -> usize {
        self.units.iter().map(|u| u.completed.len()).sum()
    }

    pub fn finished(&self) -> bool {
        self.units.iter().all(UnitState::finished)
    }

    /// Widest slot demand across all stage bindings, for bind-time checks.
    pub fn max_slots_required(&self) -> u32 {
        self.units.iter().map(UnitState::max_slots_required).max().unwrap_or(0)
    }

    /// `(role, slots_required)` of the widest stage binding.
    pub fn widest_binding(&self) -> Option<(String, u32)> {
        self.units
            .iter()
            .flat_map(|u| u.bindings.iter())
            .map(|(role, b)| (role.clone(), b.slots_required))
            .max_by_key(|(_, slots)| *slots)
    }

    /// Drains and returns the tasks that have become ready and were not yet
    /// emitted, in deterministic `(iteration, stage, member)` order. Returns
    /// an empty list while predecessors are still in flight.
    pub fn ready_wave(&mut self) -> Vec<TaskDescription> {
        let unit = &mut self.units[self.active];
        let keys: Vec<TaskKey> = unit.ready.iter().copied().collect();
        unit.ready.clear();
        let mut wave = Vec::with_capacity(keys.len());
        for key in keys {
            unit.emitted.insert(key);
            wave.push(unit.materialize(key));
        }
        wave
    }

    /// Records a completed task, updating barrier counters, pairings, and
    /// the finished flag. Idempotent for already-recorded completions.
    pub fn record_completion(&mut self, record: &TaskRecord) -> Result<(), PatternError> {
        let key = record.description.key;
        let unit_idx = key.unit as usize;
        let known = unit_idx < self.units.len() && self.units[unit_idx].emitted.contains(&key);
        if !known {
            return Err(PatternError::UnknownTask(record.description.task_id.clone()));
        }
        if record.state != TaskState::Done {
            return Err(PatternError::TaskNotDone(record.description.task_id.clone()));
        }
        let unit = &mut self.units[unit_idx];
        if !unit.completed.insert(key) {
            return Ok(()); // duplicate completion: no-op
        }
        unit.on_completed(key);
        // Advance sequential composition when the active unit finishes.
        while self.active + 1 < self.units.len() && self.units[self.active].finished() {
            self.active += 1;
            self.units[self.active].seed_initial_wave();
        }
        Ok(())
    }
}

/// Splits a task id into `(role, iteration, member)`, the inverse of the
/// materializer's naming. Composite unit prefixes (`u1.`) are kept in the
/// role. Returns `None` for ids not produced by a pattern.
pub fn parse_task_id(id: &str) -> Option<(&str, u32, u32)> {
    let (head, m_part) = id.rsplit_once(".m")?;
    let (role, i_part) = head.rsplit_once(".i")?;
    Some((role, i_part.parse().ok()?, m_part.parse().ok()?))
}
