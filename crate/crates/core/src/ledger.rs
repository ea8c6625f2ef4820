//! Per-job bookkeeping that outlives a single controller interval.
//!
//! Each interval follows a fixed protocol: RPC arrivals are counted with
//! [`JobLedger::observe_rpc`], the controller closes the interval with
//! [`JobLedger::snapshot_active`], applies the allocation result with
//! [`JobLedger::commit`] and finally resets the counters with
//! [`JobLedger::clear_stats`]. Calls out of that order are rejected.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::allocation::{AllocationPlan, JobInput};
use crate::{JobId, LedgerError, Rational, SimTime};

pub const DEFAULT_EVICTION_INTERVALS: u32 = 50;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobLedgerEntry {
    pub job_id: JobId,
    pub nodes: u64,
    pub record: i64,
    pub remainder: Rational,
    pub last_alloc: Option<u64>,
    /// Consecutive closed intervals without a single arrival.
    pub idle_intervals: u32,
    pub created_at: u64,
}

/// Demand and service counters of one interval.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntervalStats {
    pub interval_index: u64,
    pub demand: BTreeMap<JobId, u64>,
    /// Diagnostics only; never fed to the allocator.
    pub served: BTreeMap<JobId, u64>,
}

/// A ledger entry dropped after too many idle intervals. Whatever record it
/// held leaves the ledger with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Eviction {
    pub job_id: JobId,
    pub interval_index: u64,
    pub record: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Collecting,
    Snapshotted { empty: bool },
    Committed,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Collecting => "collecting",
            Phase::Snapshotted { .. } => "snapshotted",
            Phase::Committed => "committed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct JobLedger {
    entries: BTreeMap<JobId, JobLedgerEntry>,
    stats: IntervalStats,
    phase: Phase,
    last_cleared: Option<u64>,
    eviction_intervals: u32,
    evictions: Vec<Eviction>,
    last_observed: SimTime,
}

impl Default for JobLedger {
    fn default() -> Self {
        Self::new(DEFAULT_EVICTION_INTERVALS)
    }
}

impl JobLedger {
    pub fn new(eviction_intervals: u32) -> Self {
        Self {
            entries: BTreeMap::new(),
            stats: IntervalStats::default(),
            phase: Phase::Collecting,
            last_cleared: None,
            eviction_intervals: eviction_intervals.max(1),
            evictions: Vec::new(),
            last_observed: SimTime::ZERO,
        }
    }

    pub fn interval_index(&self) -> u64 {
        self.stats.interval_index
    }

    pub fn entry(&self, job: &str) -> Option<&JobLedgerEntry> {
        self.entries.get(job)
    }

    pub fn entries(&self) -> impl Iterator<Item = &JobLedgerEntry> {
        self.entries.values()
    }

    pub fn record(&self, job: &str) -> i64 {
        self.entries.get(job).map_or(0, |e| e.record)
    }

    pub fn total_record(&self) -> i64 {
        self.entries.values().map(|e| e.record).sum()
    }

    pub fn demand(&self, job: &str) -> u64 {
        self.stats.demand.get(job).copied().unwrap_or(0)
    }

    pub fn evictions(&self) -> &[Eviction] {
        &self.evictions
    }

    /// Counts one RPC arrival for `job` in the open interval.
    pub fn observe_rpc(&mut self, job: &JobId, nodes: u64, now: SimTime) {
        debug_assert!(
            now >= self.last_observed,
            "observations must be time-ordered"
        );
        self.last_observed = now;
        let interval = self.stats.interval_index;
        self.entries
            .entry(job.clone())
            .or_insert_with(|| JobLedgerEntry {
                job_id: job.clone(),
                nodes,
                record: 0,
                remainder: Rational::zero(),
                last_alloc: None,
                idle_intervals: 0,
                created_at: interval,
            });
        *self.stats.demand.entry(job.clone()).or_insert(0) += 1;
    }

    pub fn observe_served(&mut self, job: &JobId) {
        *self.stats.served.entry(job.clone()).or_insert(0) += 1;
    }

    /// Closes the interval and returns the allocator input for every job
    /// with demand. Idle jobs age and are evicted once they have been idle
    /// for the configured number of intervals.
    pub fn snapshot_active(&mut self, interval_index: u64) -> Result<Vec<JobInput>, LedgerError> {
        if self.phase != Phase::Collecting {
            return Err(LedgerError::Protocol {
                op: "snapshot_active",
                state: self.phase.name(),
            });
        }
        self.check_interval(interval_index)?;
        let mut active = Vec::new();
        let mut evict = Vec::new();
        for (job, entry) in self.entries.iter_mut() {
            let demand = self.stats.demand.get(job).copied().unwrap_or(0);
            if demand > 0 {
                active.push(JobInput {
                    job_id: job.clone(),
                    nodes: entry.nodes,
                    demand,
                    prev_alloc: entry.last_alloc,
                    record: entry.record,
                    remainder: entry.remainder.clone(),
                });
            } else {
                // Idle jobs get no grant for the coming interval.
                if entry.last_alloc.is_some() {
                    entry.last_alloc = Some(0);
                }
                entry.idle_intervals += 1;
                if entry.idle_intervals >= self.eviction_intervals {
                    evict.push(job.clone());
                }
            }
        }
        for job in evict {
            let entry = self.entries.remove(&job).expect("present");
            self.evictions.push(Eviction {
                job_id: job,
                interval_index,
                record: entry.record,
            });
        }
        self.phase = Phase::Snapshotted {
            empty: active.is_empty(),
        };
        Ok(active)
    }

    /// Applies an allocation result. Either every update is applied or none.
    pub fn commit(&mut self, plan: &AllocationPlan) -> Result<(), LedgerError> {
        if !matches!(self.phase, Phase::Snapshotted { .. }) {
            return Err(LedgerError::Protocol {
                op: "commit",
                state: self.phase.name(),
            });
        }
        if let Some(unknown) = plan
            .ledger_updates
            .keys()
            .chain(plan.grants.keys())
            .find(|job| !self.entries.contains_key(*job))
        {
            return Err(LedgerError::UnknownJob(unknown.clone()));
        }
        for (job, &grant) in &plan.grants {
            let entry = self.entries.get_mut(job).expect("checked above");
            if let Some(update) = plan.ledger_updates.get(job) {
                entry.record = update.record;
                entry.remainder = update.remainder.clone();
            }
            entry.last_alloc = Some(grant);
            entry.idle_intervals = 0;
        }
        self.phase = Phase::Committed;
        Ok(())
    }

    /// Resets the counters and opens the next interval, returning the closed
    /// interval's stats. Repeating the call for an interval that was already
    /// cleared is a no-op.
    pub fn clear_stats(
        &mut self,
        interval_index: u64,
    ) -> Result<Option<IntervalStats>, LedgerError> {
        if self.last_cleared == Some(interval_index) && self.phase == Phase::Collecting {
            return Ok(None);
        }
        match self.phase {
            Phase::Committed | Phase::Snapshotted { empty: true } => {}
            other => {
                return Err(LedgerError::Protocol {
                    op: "clear_stats",
                    state: other.name(),
                })
            }
        }
        self.check_interval(interval_index)?;
        let next = IntervalStats {
            interval_index: interval_index + 1,
            ..Default::default()
        };
        let closed = std::mem::replace(&mut self.stats, next);
        self.last_cleared = Some(interval_index);
        self.phase = Phase::Collecting;
        Ok(Some(closed))
    }

    fn check_interval(&self, interval_index: u64) -> Result<(), LedgerError> {
        if interval_index != self.stats.interval_index {
            return Err(LedgerError::IntervalMismatch {
                expected: self.stats.interval_index,
                got: interval_index,
            });
        }
        Ok(())
    }
}
