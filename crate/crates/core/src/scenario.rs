//! Declarative description of one simulated storage target and its jobs.

use serde::{Deserialize, Serialize};

use crate::allocation::{OstBudget, ReclaimBound};
use crate::ledger::DEFAULT_EVICTION_INTERVALS;
use crate::tbf::DEFAULT_BUCKET_DEPTH;
use crate::workload::JobSpec;
use crate::{ScenarioError, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    /// Adaptive allocation every controller interval.
    Adaptbf,
    /// Fixed priority-proportional rules over the whole job list.
    Static,
    /// No rules: every RPC goes through the fallback queue.
    Nobw,
}

impl std::str::FromStr for ControlMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptbf" => Ok(Self::Adaptbf),
            "static" => Ok(Self::Static),
            "nobw" => Ok(Self::Nobw),
            other => Err(format!(
                "unknown mode `{other}` (expected adaptbf, static or nobw)"
            )),
        }
    }
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adaptbf => "adaptbf",
            Self::Static => "static",
            Self::Nobw => "nobw",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OstConfig {
    /// Tokens per second the target can sustain.
    pub max_token_rate: u64,
    pub thread_count: usize,
    pub per_rpc_service_time_ms: f64,
    #[serde(default = "default_depth")]
    pub bucket_depth: u32,
}

fn default_depth() -> u32 {
    DEFAULT_BUCKET_DEPTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub mode: ControlMode,
    pub interval_ms: u64,
    #[serde(default = "default_eviction")]
    pub eviction_k: u32,
    #[serde(default)]
    pub reclaim_bound_mode: ReclaimBound,
}

fn default_eviction() -> u32 {
    DEFAULT_EVICTION_INTERVALS
}

fn default_metrics_interval() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metrics_interval")]
    pub metrics_interval_ms: u64,
    /// When present, the scenario is a sweep over these controller intervals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_sweep_ms: Option<Vec<u64>>,
    pub ost: OstConfig,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub jobs: Vec<JobSpec>,
    #[serde(default, skip_serializing_if = "OutputConfig::is_default")]
    pub output: OutputConfig,
}

/// Where the command line front end writes results.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub json: bool,
}

impl OutputConfig {
    fn is_default(&self) -> bool {
        *self == Self::default()
    }
}

impl Scenario {
    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    pub fn interval(&self) -> SimTime {
        SimTime::from_millis(self.controller.interval_ms)
    }

    pub fn service_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.ost.per_rpc_service_time_ms / 1000.0)
    }

    pub fn budget(&self) -> Result<OstBudget, ScenarioError> {
        OstBudget::new(self.ost.max_token_rate, self.controller.interval_ms)
            .map_err(|e| ScenarioError::invalid("controller.interval_ms", e.to_string()))
    }

    /// The same scenario under a different controller mode.
    pub fn with_mode(&self, mode: ControlMode) -> Self {
        let mut s = self.clone();
        s.controller.mode = mode;
        s
    }

    pub fn with_interval_ms(&self, interval_ms: u64) -> Self {
        let mut s = self.clone();
        s.controller.interval_ms = interval_ms;
        s
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(ScenarioError::invalid("duration_s", "must be positive"));
        }
        if self.metrics_interval_ms == 0 {
            return Err(ScenarioError::invalid(
                "metrics_interval_ms",
                "must be at least 1",
            ));
        }
        if self.ost.max_token_rate == 0 {
            return Err(ScenarioError::invalid(
                "ost.max_token_rate",
                "must be positive",
            ));
        }
        if self.ost.thread_count == 0 {
            return Err(ScenarioError::invalid(
                "ost.thread_count",
                "must be positive",
            ));
        }
        if !(self.ost.per_rpc_service_time_ms.is_finite() && self.service_time() > SimTime::ZERO) {
            return Err(ScenarioError::invalid(
                "ost.per_rpc_service_time_ms",
                "must be at least one microsecond",
            ));
        }
        if self.ost.bucket_depth == 0 {
            return Err(ScenarioError::invalid(
                "ost.bucket_depth",
                "must be positive",
            ));
        }
        if self.controller.interval_ms == 0 {
            return Err(ScenarioError::invalid(
                "controller.interval_ms",
                "must be at least 1",
            ));
        }
        if self.controller.eviction_k == 0 {
            return Err(ScenarioError::invalid(
                "controller.eviction_k",
                "must be at least 1",
            ));
        }
        self.budget()?;
        if let Some(sweep) = &self.interval_sweep_ms {
            if sweep.is_empty() {
                return Err(ScenarioError::invalid(
                    "interval_sweep_ms",
                    "must not be empty",
                ));
            }
            for (i, &ms) in sweep.iter().enumerate() {
                OstBudget::new(self.ost.max_token_rate, ms).map_err(|e| {
                    ScenarioError::invalid(format!("interval_sweep_ms[{i}]"), e.to_string())
                })?;
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, job) in self.jobs.iter().enumerate() {
            job.validate(&format!("jobs[{i}]"))?;
            if !seen.insert(&job.job_id) {
                return Err(ScenarioError::invalid(
                    format!("jobs[{i}].job_id"),
                    format!("duplicate job id `{}`", job.job_id),
                ));
            }
            if job.start_s >= self.duration_s {
                return Err(ScenarioError::invalid(
                    format!("jobs[{i}].start_s"),
                    "job starts after the scenario ends",
                ));
            }
        }
        Ok(())
    }
}
