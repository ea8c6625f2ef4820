use thiserror::Error;

use crate::JobId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocationError {
    #[error("no active jobs to allocate to")]
    EmptyActiveSet,
    #[error("job {0} appears more than once in the active set")]
    DuplicateJob(JobId),
    #[error("job {0} has zero nodes")]
    ZeroNodes(JobId),
    #[error("job {job} carries remainder {value} outside [0, 1)")]
    RemainderOutOfRange { job: JobId, value: String },
    #[error("apportionment constraint must be non-negative, got {0}")]
    NegativeConstraint(i64),
    #[error("raw share for job {0} is negative")]
    NegativeShare(JobId),
    #[error("budget of {rate} tokens/s over {interval_ms} ms yields no whole token")]
    EmptyBudget { rate: u64, interval_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("plan references unknown job {0}")]
    UnknownJob(JobId),
    #[error("protocol violation: {op} called while {state}")]
    Protocol {
        op: &'static str,
        state: &'static str,
    },
    #[error("interval mismatch: expected {expected}, got {got}")]
    IntervalMismatch { expected: u64, got: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("cannot compare runs: {0}")]
    Mismatch(String),
}
