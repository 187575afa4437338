//! Kernel plugins: named abstractions of executable tools.
//!
//! A kernel hides tool-specific peculiarities behind a name plus an argument
//! schema. Resolution turns `(kernel, args, backend)` into an
//! [`ExecutablePlan`]: a concrete command line for the process backend, or a
//! duration model for the simulated backend. Resolution is deterministic, so
//! swapping kernels changes what tasks *do* but never how the pattern
//! schedules them.

use alloc::borrow::ToOwned;
use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::task::{Backend, Seconds};

/// How an argument value is interpreted when building a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    /// Plain value, passed through.
    Value,
    /// Logical input file name; the process backend resolves it against the
    /// producing stage's working directory.
    InputFile,
    /// Logical output file name, created in the task's working directory.
    OutputFile,
}

/// One entry of a kernel's argument schema.
#[derive(Debug, Clone)]
pub struct ArgSpec {
    pub flag: &'static str,
    pub required: bool,
    pub kind: ArgKind,
    pub description: &'static str,
}

impl ArgSpec {
    pub const fn required(flag: &'static str, kind: ArgKind, description: &'static str) -> Self {
        ArgSpec { flag, required: true, kind, description }
    }

    pub const fn optional(flag: &'static str, kind: ArgKind, description: &'static str) -> Self {
        ArgSpec { flag, required: false, kind, description }
    }
}

/// Program half of a process plan.
#[derive(Debug, Clone, PartialEq)]
pub enum ProgramRef {
    /// The built-in kernel runner (the `kernel` subcommand of the CLI
    /// binary); the process backend substitutes the configured runner path.
    KernelRunner,
    /// An explicit program path or name.
    Program(String),
}

/// One argv element of a process plan. Path arguments stay logical here and
/// are resolved to absolute paths by the process backend.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandArg {
    Lit(String),
    InputPath(String),
    OutputPath(String),
}

/// What a resolved task executes.
#[derive(Debug, Clone, PartialEq)]
pub enum ExecutablePlan {
    /// LocalProcess: spawn `program` with `args` in the task's working directory.
    Command { program: ProgramRef, args: Vec<CommandArg> },
    /// Simulated: complete after `duration` virtual seconds. The first
    /// `failures_before_success` attempts end in failure (each still taking
    /// `duration`), which is how task-failure handling is exercised without
    /// real processes.
    Simulated { duration: Seconds, failures_before_success: u32 },
}

impl ExecutablePlan {
    pub fn simulated(duration: Seconds) -> Self {
        ExecutablePlan::Simulated { duration, failures_before_success: 0 }
    }
}

/// Validated arguments handed to a kernel resolver.
#[derive(Debug, Clone)]
pub struct ResolvedArgs {
    map: BTreeMap<String, String>,
}

impl ResolvedArgs {
    pub fn get(&self, flag: &str) -> Option<&str> {
        self.map.get(flag).map(String::as_str)
    }

    pub fn str_or<'a>(&'a self, flag: &str, default: &'a str) -> &'a str {
        self.get(flag).unwrap_or(default)
    }

    pub fn f64(&self, kernel: &str, flag: &str) -> Result<Seconds, KernelError> {
        let raw = self.get(flag).ok_or_else(|| KernelError::BadArgs {
            kernel: kernel.to_owned(),
            reason: alloc::format!("missing required flag `{flag}`"),
        })?;
        raw.parse::<f64>().map_err(|_| KernelError::BadArgs {
            kernel: kernel.to_owned(),
            reason: alloc::format!("flag `{flag}`: `{raw}` is not a number"),
        })
    }

    pub fn f64_or(&self, kernel: &str, flag: &str, default: Seconds) -> Result<Seconds, KernelError> {
        match self.get(flag) {
            Some(_) => self.f64(kernel, flag),
            None => Ok(default),
        }
    }

    pub fn u64_or(&self, kernel: &str, flag: &str, default: u64) -> Result<u64, KernelError> {
        match self.get(flag) {
            None => Ok(default),
            Some(raw) => raw.parse::<u64>().map_err(|_| KernelError::BadArgs {
                kernel: kernel.to_owned(),
                reason: alloc::format!("flag `{flag}`: `{raw}` is not an integer"),
            }),
        }
    }
}

type ResolveFn = dyn Fn(&ResolvedArgs, Backend) -> Result<ExecutablePlan, KernelError> + Send + Sync;

/// A named kernel: argument schema plus resolver.
pub struct KernelPlugin {
    name: String,
    arg_schema: Vec<ArgSpec>,
    resolve: Box<ResolveFn>,
}

impl KernelPlugin {
    pub fn new<F>(name: &str, arg_schema: Vec<ArgSpec>, resolve: F) -> Self
    where
        F: Fn(&ResolvedArgs, Backend) -> Result<ExecutablePlan, KernelError> + Send + Sync + 'static,
    {
        KernelPlugin { name: name.to_owned(), arg_schema, resolve: Box::new(resolve) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arg_schema(&self) -> &[ArgSpec] {
        &self.arg_schema
    }

    /// Classifies logical file arguments: `(inputs, outputs)` for the given
    /// argument list, used at workload assembly to wire stage data flow.
    pub fn io_names(&self, args: &[(String, String)]) -> (Vec<String>, Vec<String>) {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for (flag, value) in args {
            if let Some(spec) = self.arg_schema.iter().find(|s| s.flag == flag) {
                match spec.kind {
                    ArgKind::InputFile => inputs.push(value.clone()),
                    ArgKind::OutputFile => outputs.push(value.clone()),
                    ArgKind::Value => {}
                }
            }
        }
        (inputs, outputs)
    }

    /// Schema check only (flag presence, no duplicates, required flags);
    /// values stay unparsed so argument templates validate too.
    pub fn validate_args(&self, args: &[(String, String)]) -> Result<(), KernelError> {
        self.check_args(args).map(|_| ())
    }

    fn check_args(&self, args: &[(String, String)]) -> Result<ResolvedArgs, KernelError> {
        let mut map = BTreeMap::new();
        for (flag, value) in args {
            if !self.arg_schema.iter().any(|s| s.flag == flag) {
                return Err(KernelError::BadArgs {
                    kernel: self.name.clone(),
                    reason: alloc::format!("unknown flag `{flag}`"),
                });
            }
            if map.insert(flag.clone(), value.clone()).is_some() {
                return Err(KernelError::BadArgs {
                    kernel: self.name.clone(),
                    reason: alloc::format!("flag `{flag}` given twice"),
                });
            }
        }
        for spec in &self.arg_schema {
            if spec.required && !map.contains_key(spec.flag) {
                return Err(KernelError::BadArgs {
                    kernel: self.name.clone(),
                    reason: alloc::format!("missing required flag `{}`", spec.flag),
                });
            }
        }
        Ok(ResolvedArgs { map })
    }
}

impl core::fmt::Debug for KernelPlugin {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("KernelPlugin").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Registry of kernels, built once before execution and read-only afterwards.
#[derive(Debug, Default)]
pub struct KernelRegistry {
    plugins: BTreeMap<String, KernelPlugin>,
}

impl KernelRegistry {
    pub fn empty() -> Self {
        KernelRegistry::default()
    }

    /// Registry with every built-in kernel registered.
    pub fn with_builtins() -> Self {
        let mut reg = KernelRegistry::empty();
        for plugin in builtins() {
            reg.register(plugin).expect("built-in kernel names are unique");
        }
        reg
    }

    pub fn register(&mut self, plugin: KernelPlugin) -> Result<(), KernelError> {
        if self.plugins.contains_key(plugin.name()) {
            return Err(KernelError::DuplicateKernelName(plugin.name().to_owned()));
        }
        self.plugins.insert(plugin.name().to_owned(), plugin);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&KernelPlugin> {
        self.plugins.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.plugins.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.plugins.keys().map(String::as_str)
    }

    /// Validates `args` against the kernel's schema and produces the plan
    /// for `backend`. Deterministic for fixed inputs.
    pub fn resolve(
        &self,
        name: &str,
        args: &[(String, String)],
        backend: Backend,
    ) -> Result<ExecutablePlan, KernelError> {
        let plugin = self
            .plugins
            .get(name)
            .ok_or_else(|| KernelError::UnknownKernel(name.to_owned()))?;
        let resolved = plugin.check_args(args)?;
        (plugin.resolve)(&resolved, backend)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("kernel `{0}` already registered")]
    DuplicateKernelName(String),
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("kernel `{kernel}`: {reason}")]
    BadArgs { kernel: String, reason: String },
    #[error("kernel `{kernel}`: negative duration {duration}")]
    NegativeDuration { kernel: String, duration: f64 },
}

fn runner_cmd(parts: &[CommandArg]) -> ExecutablePlan {
    ExecutablePlan::Command { program: ProgramRef::KernelRunner, args: parts.to_vec() }
}

fn lit(s: impl Into<String>) -> CommandArg {
    CommandArg::Lit(s.into())
}

fn check_duration(kernel: &str, duration: Seconds) -> Result<Seconds, KernelError> {
    if duration < 0.0 || !duration.is_finite() {
        return Err(KernelError::NegativeDuration { kernel: kernel.to_owned(), duration });
    }
    Ok(duration)
}

/// The built-in kernel set.
///
/// * `mkfile(size, seed, out)` — writes `size` pseudo-random characters; the
///   seeded PRNG makes reruns byte-identical.
/// * `ccount(file)` — prints the character count of `file` to stdout.
/// * `sleep(duration)` — wall-clock no-op of `duration` seconds.
/// * `synthetic-sim(duration, slots)` — simulated compute task; modeled
///   duration is `duration / slots`, so spreading one task over more cores
///   shortens it proportionally.
/// * `synthetic-exchange(n_members, cost_per_member)` — serial exchange step,
///   cost linear in the number of participating members.
/// * `synthetic-analysis(n_inputs, cost_per_input)` — serial analysis step,
///   cost linear in the number of inputs consumed.
pub fn builtins() -> Vec<KernelPlugin> {
    let mut v = Vec::new();

    v.push(KernelPlugin::new(
        "mkfile",
        alloc::vec![
            ArgSpec::required("size", ArgKind::Value, "number of characters to write"),
            ArgSpec::optional("seed", ArgKind::Value, "PRNG seed for the file content"),
            ArgSpec::optional("out", ArgKind::OutputFile, "output file name (default data.out)"),
            ArgSpec::optional("sim_duration", ArgKind::Value, "virtual duration when simulated"),
        ],
        |args, backend| {
            let size = args.u64_or("mkfile", "size", 0)?;
            match backend {
                Backend::LocalProcess => Ok(runner_cmd(&[
                    lit("mkfile"),
                    lit("--size"),
                    lit(alloc::format!("{size}")),
                    lit("--seed"),
                    lit(args.str_or("seed", "0")),
                    lit("--out"),
                    CommandArg::OutputPath(args.str_or("out", "data.out").into()),
                ])),
                Backend::Simulated => {
                    let d = check_duration("mkfile", args.f64_or("mkfile", "sim_duration", 1.0)?)?;
                    Ok(ExecutablePlan::simulated(d))
                }
            }
        },
    ));

    v.push(KernelPlugin::new(
        "ccount",
        alloc::vec![
            ArgSpec::required("file", ArgKind::InputFile, "file whose characters are counted"),
            ArgSpec::optional("sim_duration", ArgKind::Value, "virtual duration when simulated"),
        ],
        |args, backend| {
            let file = args.get("file").expect("required flag checked");
            match backend {
                Backend::LocalProcess => Ok(runner_cmd(&[
                    lit("ccount"),
                    lit("--file"),
                    CommandArg::InputPath(file.into()),
                ])),
                Backend::Simulated => {
                    let d = check_duration("ccount", args.f64_or("ccount", "sim_duration", 0.5)?)?;
                    Ok(ExecutablePlan::simulated(d))
                }
            }
        },
    ));

    v.push(KernelPlugin::new(
        "sleep",
        alloc::vec![ArgSpec::required("duration", ArgKind::Value, "seconds to sleep")],
        |args, backend| {
            let d = check_duration("sleep", args.f64("sleep", "duration")?)?;
            match backend {
                Backend::LocalProcess => Ok(runner_cmd(&[
                    lit("sleep"),
                    lit("--duration"),
                    lit(alloc::format!("{d}")),
                ])),
                Backend::Simulated => Ok(ExecutablePlan::simulated(d)),
            }
        },
    ));

    v.push(KernelPlugin::new(
        "synthetic-sim",
        alloc::vec![
            ArgSpec::required("duration", ArgKind::Value, "base duration on one slot"),
            ArgSpec::optional("slots", ArgKind::Value, "slots the task occupies (default 1)"),
        ],
        |args, backend| {
            let base = check_duration("synthetic-sim", args.f64("synthetic-sim", "duration")?)?;
            let slots = args.u64_or("synthetic-sim", "slots", 1)?.max(1);
            let d = base / slots as f64;
            match backend {
                Backend::LocalProcess => Ok(runner_cmd(&[
                    lit("sleep"),
                    lit("--duration"),
                    lit(alloc::format!("{d}")),
                ])),
                Backend::Simulated => Ok(ExecutablePlan::simulated(d)),
            }
        },
    ));

    v.push(KernelPlugin::new(
        "synthetic-exchange",
        alloc::vec![
            ArgSpec::required("n_members", ArgKind::Value, "members taking part in the exchange"),
            ArgSpec::required("cost_per_member", ArgKind::Value, "serial cost per member"),
        ],
        |args, backend| {
            let n = args.u64_or("synthetic-exchange", "n_members", 0)?;
            let c = args.f64("synthetic-exchange", "cost_per_member")?;
            let d = check_duration("synthetic-exchange", n as f64 * c)?;
            match backend {
                Backend::LocalProcess => Ok(runner_cmd(&[
                    lit("sleep"),
                    lit("--duration"),
                    lit(alloc::format!("{d}")),
                ])),
                Backend::Simulated => Ok(ExecutablePlan::simulated(d)),
            }
        },
    ));

    v.push(KernelPlugin::new(
        "synthetic-analysis",
        alloc::vec![
            ArgSpec::required("n_inputs", ArgKind::Value, "inputs consumed by the analysis"),
            ArgSpec::required("cost_per_input", ArgKind::Value, "serial cost per input"),
        ],
        |args, backend| {
            let n = args.u64_or("synthetic-analysis", "n_inputs", 0)?;
            let c = args.f64("synthetic-analysis", "cost_per_input")?;
            let d = check_duration("synthetic-analysis", n as f64 * c)?;
            match backend {
                Backend::LocalProcess => Ok(runner_cmd(&[
                    lit("sleep"),
                    lit("--duration"),
                    lit(alloc::format!("{d}")),
                ])),
                Backend::Simulated => Ok(ExecutablePlan::simulated(d)),
            }
        },
    ));

    v
}
