use std::collections::BTreeMap;

use serde::Serialize;

use crate::{JobId, SimTime};

/// One job's slice of a metrics frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JobFrame {
    /// RPCs dispatched during the frame.
    pub served: u64,
    /// RPCs that arrived during the frame.
    pub demand: u64,
    /// Tokens per controller interval in force at the end of the frame;
    /// `None` when the job has no rule.
    pub granted: Option<u64>,
    /// Ledger record; `None` outside adaptive mode or for untracked jobs.
    pub record: Option<i64>,
    /// RPCs waiting at the end of the frame, rule and fallback queue together.
    pub queue_depth: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricsFrame {
    pub time: SimTime,
    pub jobs: BTreeMap<JobId, JobFrame>,
    pub fallback_depth: u64,
    pub aggregate_served: u64,
}

impl MetricsFrame {
    pub fn time_ms(&self) -> u64 {
        self.time.as_millis()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobSummary {
    pub job_id: JobId,
    pub nodes: u64,
    pub priority: f64,
    pub arrivals: u64,
    pub served: u64,
    pub queued_at_end: u64,
    pub start: SimTime,
    /// Finish time of the last RPC once a finite volume has been fully served.
    pub completion: Option<SimTime>,
    pub throughput_rpc_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub duration: SimTime,
    pub jobs: BTreeMap<JobId, JobSummary>,
    pub total_arrivals: u64,
    pub total_served: u64,
    pub aggregate_throughput_rpc_s: f64,
}

impl RunSummary {
    pub fn throughputs(&self) -> ThroughputTable {
        ThroughputTable {
            per_job: self
                .jobs
                .iter()
                .map(|(id, j)| (id.clone(), j.throughput_rpc_s))
                .collect(),
            aggregate: self.aggregate_throughput_rpc_s,
        }
    }
}

/// Mean throughput per job plus the aggregate, the unit of comparison
/// between runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputTable {
    pub per_job: BTreeMap<JobId, f64>,
    pub aggregate: f64,
}
