use std::collections::BTreeMap;

use serde::Serialize;

use super::metrics::ThroughputTable;
use crate::{JobId, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Delta {
    pub candidate: f64,
    pub baseline: f64,
    pub absolute: f64,
    /// `absolute / baseline`; `None` when the baseline is zero.
    pub relative: Option<f64>,
}

impl Delta {
    pub fn new(candidate: f64, baseline: f64) -> Self {
        let absolute = candidate - baseline;
        Self {
            candidate,
            baseline,
            absolute,
            relative: (baseline != 0.0).then(|| absolute / baseline),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub jobs: BTreeMap<JobId, Delta>,
    pub aggregate: Delta,
}

/// Per-job throughput gain (positive) or loss of `candidate` against `baseline`.
pub fn compare(
    candidate: &ThroughputTable,
    baseline: &ThroughputTable,
) -> Result<Comparison, SimError> {
    let missing: Vec<&str> = baseline
        .per_job
        .keys()
        .filter(|j| !candidate.per_job.contains_key(*j))
        .chain(
            candidate
                .per_job
                .keys()
                .filter(|j| !baseline.per_job.contains_key(*j)),
        )
        .map(JobId::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(SimError::Mismatch(format!(
            "job sets differ ({})",
            missing.join(", ")
        )));
    }
    let jobs = candidate
        .per_job
        .iter()
        .map(|(id, &c)| (id.clone(), Delta::new(c, baseline.per_job[id])))
        .collect();
    Ok(Comparison {
        jobs,
        aggregate: Delta::new(candidate.aggregate, baseline.aggregate),
    })
}
