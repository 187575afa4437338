//! Declarative workload spec files.
//!
//! A spec is a sectioned key-value (TOML) file with four blocks:
//!
//! ```toml
//! [pattern]                      # variant + its parameters
//! variant = "ensemble-of-pipelines"
//! pipelines = 24
//! stages = 2
//!
//! [stages.stage0]                # kernel binding per stage role
//! kernel = "mkfile"
//! slots = 1
//! args = { size = "1000", seed = "{seed}" }
//!
//! [stages.stage1]
//! kernel = "ccount"
//! args = { file = "data.out" }
//!
//! [resource]
//! total_slots = 24
//! backend = "local-process"      # or "simulated"
//! walltime_limit = 60.0
//!
//! [run]
//! seed = 42
//! retry_limit = 1
//! ```
//!
//! Stage-role keys are `stage0..stageN` (ensemble-of-pipelines),
//! `simulation`/`exchange` (ensemble-exchange) and `simulation`/`analysis`
//! (simulation-analysis-loop), with optional per-iteration overrides such
//! as `simulation1`. Unknown keys anywhere are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use starling_core::pattern::{
    EEParams, EoPParams, PairingPolicy, PatternSpec, PatternVariant, SALParams, StageBinding,
};
use starling_core::runtime::{RunConfig, SimTuning};
use starling_core::task::{Backend, ResourceRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub pattern: PatternSection,
    pub stages: BTreeMap<String, StageSection>,
    pub resource: ResourceSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSection {
    pub variant: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pipelines: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stages: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub members: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairing: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulations: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analyses: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub kernel: String,
    #[serde(default = "default_slots")]
    pub slots: u32,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
}

fn default_slots() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSection {
    pub total_slots: u32,
    pub backend: String,
    #[serde(default)]
    pub queue_wait: f64,
    #[serde(default = "default_walltime")]
    pub walltime_limit: f64,
    #[serde(default)]
    pub dispatch_latency: f64,
    #[serde(default)]
    pub init_latency: f64,
    #[serde(default)]
    pub allocate_latency: f64,
    #[serde(default)]
    pub cancel_latency: f64,
}

fn default_walltime() -> f64 {
    3600.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn default_retry_limit() -> u32 {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 0, retry_limit: 1, output_dir: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid spec: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> SpecError {
    SpecError::Invalid(msg.into())
}

fn reject_unused(field: &str, value: Option<u32>, variant: &str) -> Result<(), SpecError> {
    if value.is_some() {
        return Err(invalid(format!("`{field}` is not a parameter of {variant}")));
    }
    Ok(())
}

impl WorkloadSpec {
    /// Parses and validates a spec file. Errors carry file/line context
    /// from the deserializer plus semantic validation messages.
    pub fn load(path: &Path) -> Result<WorkloadSpec, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let spec: WorkloadSpec = toml::from_str(&text).map_err(|e| SpecError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse_str(text: &str) -> Result<WorkloadSpec, SpecError> {
        let spec: WorkloadSpec = toml::from_str(text).map_err(|e| SpecError::Parse {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    fn validate(&self) -> Result<(), SpecError> {
        self.pattern_spec()?;
        self.resource_request()?;
        Ok(())
    }

    /// The engine-level pattern spec this file describes.
    pub fn pattern_spec(&self) -> Result<PatternSpec, SpecError> {
        let p = &self.pattern;
        let variant = match p.variant.as_str() {
            "ensemble-of-pipelines" => {
                reject_unused("members", p.members, "ensemble-of-pipelines")?;
                reject_unused("iterations", p.iterations, "ensemble-of-pipelines")?;
                reject_unused("simulations", p.simulations, "ensemble-of-pipelines")?;
                reject_unused("analyses", p.analyses, "ensemble-of-pipelines")?;
                if p.pairing.is_some() {
                    return Err(invalid("`pairing` is not a parameter of ensemble-of-pipelines"));
                }
                PatternVariant::EnsembleOfPipelines(EoPParams {
                    n_pipelines: p
                        .pipelines
                        .ok_or_else(|| invalid("ensemble-of-pipelines requires `pipelines`"))?,
                    n_stages: p
                        .stages
                        .ok_or_else(|| invalid("ensemble-of-pipelines requires `stages`"))?,
                })
            }
            "ensemble-exchange" => {
                reject_unused("pipelines", p.pipelines, "ensemble-exchange")?;
                reject_unused("stages", p.stages, "ensemble-exchange")?;
                reject_unused("simulations", p.simulations, "ensemble-exchange")?;
                reject_unused("analyses", p.analyses, "ensemble-exchange")?;
                let pairing = match p.pairing.as_deref().unwrap_or("whole-ensemble") {
                    "neighbor-by-index" => PairingPolicy::NeighborByIndex,
                    "readiness-pairs" => PairingPolicy::ReadinessPairs,
                    "whole-ensemble" => PairingPolicy::WholeEnsemble,
                    other => return Err(invalid(format!("unknown pairing policy `{other}`"))),
                };
                PatternVariant::EnsembleExchange(EEParams {
                    n_members: p
                        .members
                        .ok_or_else(|| invalid("ensemble-exchange requires `members`"))?,
                    n_iterations: p.iterations.unwrap_or(1),
                    pairing,
                })
            }
            "simulation-analysis-loop" => {
                reject_unused("pipelines", p.pipelines, "simulation-analysis-loop")?;
                reject_unused("stages", p.stages, "simulation-analysis-loop")?;
                reject_unused("members", p.members, "simulation-analysis-loop")?;
                if p.pairing.is_some() {
                    return Err(invalid("`pairing` is not a parameter of simulation-analysis-loop"));
                }
                PatternVariant::SimulationAnalysisLoop(SALParams {
                    n_simulations: p
                        .simulations
                        .ok_or_else(|| invalid("simulation-analysis-loop requires `simulations`"))?,
                    n_analyses: p.analyses.unwrap_or(1),
                    n_iterations: p.iterations.unwrap_or(1),
                })
            }
            other => {
                return Err(SpecError::Parse {
                    path: "<pattern.variant>".into(),
                    message: format!("unknown pattern variant `{other}`"),
                })
            }
        };
        if self.stages.is_empty() {
            return Err(invalid("at least one [stages.<role>] block is required"));
        }
        let stage_kernels = self
            .stages
            .iter()
            .map(|(role, s)| {
                (
                    role.clone(),
                    StageBinding {
                        kernel: s.kernel.clone(),
                        args: s.args.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
                        slots_required: s.slots,
                    },
                )
            })
            .collect();
        Ok(PatternSpec { variant, stage_kernels })
    }

    pub fn backend(&self) -> Result<Backend, SpecError> {
        match self.resource.backend.as_str() {
            "simulated" => Ok(Backend::Simulated),
            "local-process" => Ok(Backend::LocalProcess),
            other => Err(invalid(format!("unknown backend `{other}`"))),
        }
    }

    pub fn resource_request(&self) -> Result<ResourceRequest, SpecError> {
        let backend = self.backend()?;
        let r = &self.resource;
        if backend == Backend::LocalProcess && r.queue_wait > 0.0 {
            return Err(invalid("queue_wait only applies to the simulated backend"));
        }
        let request = ResourceRequest {
            total_slots: r.total_slots,
            walltime_limit: r.walltime_limit,
            backend,
            queue_wait: r.queue_wait,
        };
        request.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(request)
    }

    pub fn sim_tuning(&self) -> SimTuning {
        SimTuning {
            init_latency: self.resource.init_latency,
            allocate_latency: self.resource.allocate_latency,
            dispatch_latency: self.resource.dispatch_latency,
            cancel_latency: self.resource.cancel_latency,
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig { retry_limit: self.run.retry_limit, seed: self.run.seed }
    }
}
