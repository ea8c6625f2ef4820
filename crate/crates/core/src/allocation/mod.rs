//! Three-phase token allocation for one storage target.
//!
//! Each controller interval the active jobs receive a priority share of the
//! target's token budget. Tokens a job did not need are pooled and handed to
//! jobs by distribution factor, and every job's record tracks how many
//! tokens it lent (positive) or borrowed (negative). Lenders whose demand
//! comes back then reclaim part of the borrowers' grants. All intermediate
//! arithmetic is exact; grants are whole tokens whose fractional parts are
//! carried per job to the next apportionment.

mod phases;
mod remainder;

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

pub use phases::{
    compute_priorities, compute_surplus, distribution_factor, eligible_sets, future_utilization,
    initial_allocation, reclaim, reclaim_coefficient, recompensate, redistribute,
    utilization_score, FutureUtilization, LenderStats, Reclaim, ReclaimBound, Recompensation,
    Redistribution, Surplus,
};
pub use remainder::{apply_remainders, Apportionment};

use crate::{AllocationError, JobId, Rational};

/// One active job as seen by the allocator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobInput {
    pub job_id: JobId,
    /// Compute nodes held by the job; drives its priority.
    pub nodes: u64,
    /// RPCs that arrived during the interval that just closed.
    pub demand: u64,
    /// Tokens granted for that interval; `None` for a job never granted.
    pub prev_alloc: Option<u64>,
    /// Tokens lent (positive) or borrowed (negative) so far.
    pub record: i64,
    /// Fractional token carried from the last apportionment, in `[0, 1)`.
    pub remainder: Rational,
}

impl JobInput {
    pub fn new(job_id: impl Into<JobId>, nodes: u64, demand: u64) -> Self {
        Self {
            job_id: job_id.into(),
            nodes,
            demand,
            prev_alloc: None,
            record: 0,
            remainder: Rational::from_integer(0.into()),
        }
    }

    pub fn with_prev_alloc(mut self, prev: u64) -> Self {
        self.prev_alloc = Some(prev);
        self
    }

    pub fn with_record(mut self, record: i64) -> Self {
        self.record = record;
        self
    }

    pub fn with_remainder(mut self, remainder: Rational) -> Self {
        self.remainder = remainder;
        self
    }
}

/// Token budget of a storage target for one controller interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OstBudget {
    max_token_rate: u64,
    interval_ms: u64,
}

impl OstBudget {
    pub fn new(max_token_rate: u64, interval_ms: u64) -> Result<Self, AllocationError> {
        let budget = Self {
            max_token_rate,
            interval_ms,
        };
        if budget.tokens_per_interval() == 0 {
            return Err(AllocationError::EmptyBudget {
                rate: max_token_rate,
                interval_ms,
            });
        }
        Ok(budget)
    }

    pub fn max_token_rate(&self) -> u64 {
        self.max_token_rate
    }

    pub fn interval_ms(&self) -> u64 {
        self.interval_ms
    }

    /// Whole tokens available per interval: `floor(rate * interval)`.
    pub fn tokens_per_interval(&self) -> u64 {
        self.max_token_rate * self.interval_ms / 1000
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AllocatorConfig {
    pub reclaim_bound: ReclaimBound,
}

/// Every intermediate of one allocation round.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhaseAllocation {
    pub priorities: BTreeMap<JobId, Rational>,
    pub initial: BTreeMap<JobId, u64>,
    pub redistributed: BTreeMap<JobId, u64>,
    pub recompensated: BTreeMap<JobId, u64>,
    pub utilization: BTreeMap<JobId, Rational>,
    pub future_utilization: BTreeMap<JobId, FutureUtilization>,
    pub surplus: BTreeMap<JobId, u64>,
    pub total_surplus: u64,
    pub distribution_factors: BTreeMap<JobId, Rational>,
    pub records_redistributed: BTreeMap<JobId, i64>,
    pub lenders: BTreeSet<JobId>,
    pub borrowers: BTreeSet<JobId>,
    pub reclaim_coefficient: Rational,
    pub reclaim: BTreeMap<JobId, u64>,
    pub total_reclaim: u64,
    pub records_recompensated: BTreeMap<JobId, i64>,
    pub remainders: BTreeMap<JobId, Rational>,
    /// Surplus existed but no active job had any utilization (D6 case).
    pub surplus_unredistributed: bool,
    /// Reclaimed tokens were split by priority because every lender had a
    /// zero distribution factor.
    pub recompensation_by_priority: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerUpdate {
    pub record: i64,
    pub remainder: Rational,
}

/// Result of one controller step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocationPlan {
    pub interval_index: u64,
    /// Final whole-token grant per job for the next interval.
    pub grants: BTreeMap<JobId, u64>,
    pub ledger_updates: BTreeMap<JobId, LedgerUpdate>,
    pub phases: PhaseAllocation,
}

impl AllocationPlan {
    pub fn total_granted(&self) -> u64 {
        self.grants.values().sum()
    }
}

/// Runs one allocation round with the default configuration.
pub fn allocate_step(
    budget: &OstBudget,
    jobs: &[JobInput],
) -> Result<AllocationPlan, AllocationError> {
    allocate_step_with(&AllocatorConfig::default(), 0, budget, jobs)
}

pub fn allocate_step_with(
    config: &AllocatorConfig,
    interval_index: u64,
    budget: &OstBudget,
    jobs: &[JobInput],
) -> Result<AllocationPlan, AllocationError> {
    let priorities = compute_priorities(jobs)?;
    for job in jobs {
        if job.remainder.is_negative() || job.remainder >= Rational::one() {
            return Err(AllocationError::RemainderOutOfRange {
                job: job.job_id.clone(),
                value: job.remainder.to_string(),
            });
        }
    }
    let by_id: BTreeMap<&JobId, &JobInput> = jobs.iter().map(|j| (&j.job_id, j)).collect();
    let demand: BTreeMap<JobId, u64> = jobs.iter().map(|j| (j.job_id.clone(), j.demand)).collect();
    let records: BTreeMap<JobId, i64> = jobs.iter().map(|j| (j.job_id.clone(), j.record)).collect();
    let carried: BTreeMap<JobId, Rational> = jobs
        .iter()
        .map(|j| (j.job_id.clone(), j.remainder.clone()))
        .collect();

    // Priority allocation.
    let raw = initial_allocation(budget, &priorities);
    let initial = apply_remainders(&raw, &carried, budget.tokens_per_interval() as i64)?;

    // Surplus redistribution.
    let utilization: BTreeMap<JobId, Rational> = jobs
        .iter()
        .map(|j| (j.job_id.clone(), utilization_score(j.demand, j.prev_alloc)))
        .collect();
    let surplus = compute_surplus(&initial.grants, &demand);
    let factors: BTreeMap<JobId, Rational> = utilization
        .iter()
        .map(|(job, u)| (job.clone(), distribution_factor(u, &priorities[job])))
        .collect();
    let rd = redistribute(
        &initial.grants,
        &surplus,
        &factors,
        &records,
        &initial.remainders,
    )?;

    // Re-compensation.
    let (lenders, borrowers) = eligible_sets(&records, &rd.records);
    let future: BTreeMap<JobId, FutureUtilization> = lenders
        .iter()
        .map(|job| {
            (
                job.clone(),
                future_utilization(by_id[job].demand, rd.alloc[job]),
            )
        })
        .collect();
    let mut phases = PhaseAllocation {
        priorities,
        initial: initial.grants,
        utilization,
        surplus: surplus.per_job.clone(),
        total_surplus: surplus.total,
        surplus_unredistributed: rd.unredistributed,
        records_redistributed: rd.records.clone(),
        future_utilization: future,
        ..Default::default()
    };

    let (alloc, records_rc, remainders) = if lenders.is_empty() || borrowers.is_empty() {
        (rd.alloc.clone(), rd.records.clone(), rd.remainders)
    } else {
        let stats: Vec<LenderStats> = lenders
            .iter()
            .map(|job| LenderStats {
                priority: phases.priorities[job].clone(),
                utilization: phases.utilization[job].clone(),
                future: phases.future_utilization[job].clone(),
            })
            .collect();
        let coefficient = reclaim_coefficient(&stats);
        let taken = reclaim(
            &borrowers,
            &records,
            &rd.records,
            &rd.alloc,
            &coefficient,
            config.reclaim_bound,
        );
        let rc = recompensate(
            &lenders,
            &factors,
            &phases.priorities,
            &taken.alloc,
            &taken.records,
            &rd.remainders,
            taken.total,
        )?;
        phases.reclaim_coefficient = coefficient;
        phases.reclaim = taken.per_job;
        phases.total_reclaim = taken.total;
        phases.recompensation_by_priority = rc.priority_fallback;
        (rc.alloc, rc.records, rc.remainders)
    };

    let remainders: BTreeMap<JobId, Rational> = remainders
        .into_iter()
        .map(|(j, r)| (j, r.reduced()))
        .collect();

    phases.redistributed = rd.alloc;
    phases.distribution_factors = factors;
    phases.lenders = lenders;
    phases.borrowers = borrowers;
    phases.recompensated = alloc.clone();
    phases.records_recompensated = records_rc.clone();
    phases.remainders = remainders.clone();

    let ledger_updates = records_rc
        .iter()
        .map(|(job, &record)| {
            (
                job.clone(),
                LedgerUpdate {
                    record,
                    remainder: remainders[job].clone(),
                },
            )
        })
        .collect();
    Ok(AllocationPlan {
        interval_index,
        grants: alloc,
        ledger_updates,
        phases,
    })
}

/// Stateful wrapper that numbers successive steps.
#[derive(Debug, Clone, Default)]
pub struct Allocator {
    config: AllocatorConfig,
    next_index: u64,
}

impl Allocator {
    pub fn new(config: AllocatorConfig) -> Self {
        Self {
            config,
            next_index: 0,
        }
    }

    pub fn config(&self) -> &AllocatorConfig {
        &self.config
    }

    pub fn step(
        &mut self,
        budget: &OstBudget,
        jobs: &[JobInput],
    ) -> Result<AllocationPlan, AllocationError> {
        let plan = allocate_step_with(&self.config, self.next_index, budget, jobs)?;
        self.next_index += 1;
        Ok(plan)
    }
}
