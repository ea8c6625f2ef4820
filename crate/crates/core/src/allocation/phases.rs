//! The individual steps of one allocation round, each usable on its own.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use super::remainder::{apportion, exact_sum, proportional_shares};
use super::{JobInput, OstBudget};
use crate::{AllocationError, JobId, Rational};

fn int(v: impl Into<BigInt>) -> Rational {
    Rational::from_integer(v.into())
}

/// Node-count share of every job in the active set. Sums to exactly one.
pub fn compute_priorities(jobs: &[JobInput]) -> Result<BTreeMap<JobId, Rational>, AllocationError> {
    if jobs.is_empty() {
        return Err(AllocationError::EmptyActiveSet);
    }
    let mut total: u64 = 0;
    for job in jobs {
        if job.nodes == 0 {
            return Err(AllocationError::ZeroNodes(job.job_id.clone()));
        }
        total += job.nodes;
    }
    let mut out = BTreeMap::new();
    for job in jobs {
        let p = Rational::new(job.nodes.into(), total.into());
        if out.insert(job.job_id.clone(), p).is_some() {
            return Err(AllocationError::DuplicateJob(job.job_id.clone()));
        }
    }
    Ok(out)
}

/// Splits the interval's whole-token budget by priority.
pub fn initial_allocation(
    budget: &OstBudget,
    priorities: &BTreeMap<JobId, Rational>,
) -> BTreeMap<JobId, Rational> {
    let tokens = int(budget.tokens_per_interval());
    priorities
        .iter()
        .map(|(job, p)| (job.clone(), &tokens * p))
        .collect()
}

/// Demand over last interval's grant. A job without a previous grant (or a
/// zero one) scores a neutral 1 if it has any demand at all.
pub fn utilization_score(demand: u64, prev_alloc: Option<u64>) -> Rational {
    match prev_alloc {
        Some(prev) if prev > 0 => Rational::new(demand.into(), prev.into()),
        _ if demand > 0 => Rational::one(),
        _ => Rational::zero(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Surplus {
    pub per_job: BTreeMap<JobId, u64>,
    pub total: u64,
}

pub fn compute_surplus(alloc: &BTreeMap<JobId, u64>, demand: &BTreeMap<JobId, u64>) -> Surplus {
    let per_job: BTreeMap<JobId, u64> = alloc
        .iter()
        .map(|(job, &a)| (job.clone(), a.saturating_sub(demand[job])))
        .collect();
    let total = per_job.values().sum();
    Surplus { per_job, total }
}

/// Jobs in deficit (`u > 1`) get their utilization plus a priority bonus;
/// everyone else is weighted by utilization times priority.
pub fn distribution_factor(u: &Rational, p: &Rational) -> Rational {
    if u > &Rational::one() {
        u + u * p
    } else {
        u * p
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Redistribution {
    pub alloc: BTreeMap<JobId, u64>,
    pub records: BTreeMap<JobId, i64>,
    pub remainders: BTreeMap<JobId, Rational>,
    /// Surplus existed but every distribution factor was zero, so it was
    /// handed back to nobody. Budget and record sums drift on such steps.
    pub unredistributed: bool,
}

/// Pools every job's surplus and shares it out by distribution factor. The
/// donor's record is credited with what it gave and debited with what it
/// got back.
pub fn redistribute(
    alloc: &BTreeMap<JobId, u64>,
    surplus: &Surplus,
    factors: &BTreeMap<JobId, Rational>,
    records: &BTreeMap<JobId, i64>,
    remainders: &BTreeMap<JobId, Rational>,
) -> Result<Redistribution, AllocationError> {
    let Some(shares) = proportional_shares(factors, surplus.total) else {
        let alloc = alloc
            .iter()
            .map(|(job, &a)| (job.clone(), a - surplus.per_job[job]))
            .collect();
        let records = records
            .iter()
            .map(|(job, &r)| (job.clone(), r + surplus.per_job[job] as i64))
            .collect();
        return Ok(Redistribution {
            alloc,
            records,
            remainders: remainders.clone(),
            unredistributed: true,
        });
    };
    let apportioned = apportion(&shares, remainders, surplus.total as i64)?;
    let mut out_alloc = BTreeMap::new();
    let mut out_records = BTreeMap::new();
    for (job, &a) in alloc {
        let given = surplus.per_job[job];
        let received = apportioned.grants[job];
        out_alloc.insert(job.clone(), a - given + received);
        out_records.insert(job.clone(), records[job] + given as i64 - received as i64);
    }
    let mut out_remainders = remainders.clone();
    out_remainders.extend(apportioned.remainders);
    Ok(Redistribution {
        alloc: out_alloc,
        records: out_records,
        remainders: out_remainders,
        unredistributed: false,
    })
}

/// Lenders and borrowers whose record sign held through redistribution.
pub fn eligible_sets(
    before: &BTreeMap<JobId, i64>,
    after: &BTreeMap<JobId, i64>,
) -> (BTreeSet<JobId>, BTreeSet<JobId>) {
    let mut plus = BTreeSet::new();
    let mut minus = BTreeSet::new();
    for (job, &r) in before {
        let Some(&r_rd) = after.get(job) else {
            continue;
        };
        if r > 0 && r_rd > 0 {
            plus.insert(job.clone());
        } else if r < 0 && r_rd < 0 {
            minus.insert(job.clone());
        }
    }
    (plus, minus)
}

/// Expected utilization of the post-redistribution grant, assuming demand
/// repeats next interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FutureUtilization {
    Finite(Rational),
    /// The job holds no tokens at all, so any demand saturates it.
    Unbounded,
}

impl FutureUtilization {
    /// `max(0, 1 - ū)`.
    pub fn headroom(&self) -> Rational {
        match self {
            FutureUtilization::Finite(u) if u < &Rational::one() => Rational::one() - u,
            _ => Rational::zero(),
        }
    }
}

pub fn future_utilization(demand: u64, alloc_rd: u64) -> FutureUtilization {
    if alloc_rd == 0 {
        FutureUtilization::Unbounded
    } else {
        FutureUtilization::Finite(Rational::new(demand.into(), alloc_rd.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LenderStats {
    pub priority: Rational,
    pub utilization: Rational,
    pub future: FutureUtilization,
}

/// Aggregate fraction of each borrower's grant that lenders may claim back.
pub fn reclaim_coefficient(lenders: &[LenderStats]) -> Rational {
    let two = int(2);
    let terms: Vec<Rational> = lenders
        .iter()
        .map(|l| {
            let current = if l.utilization > Rational::one() {
                l.utilization.clone()
            } else {
                Rational::one()
            };
            &l.priority * (current + l.future.headroom()) / &two
        })
        .collect();
    exact_sum(terms.iter())
}

/// Which record bounds how much a borrower can be asked to return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReclaimBound {
    /// The record as it stood before redistribution.
    #[default]
    Pre,
    /// The record after redistribution.
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reclaim {
    pub per_job: BTreeMap<JobId, u64>,
    pub total: u64,
    pub alloc: BTreeMap<JobId, u64>,
    pub records: BTreeMap<JobId, i64>,
}

/// Takes `floor(C * α_RD)` tokens from every borrower, bounded by what it
/// owes and by what it holds.
pub fn reclaim(
    borrowers: &BTreeSet<JobId>,
    records_before: &BTreeMap<JobId, i64>,
    records_rd: &BTreeMap<JobId, i64>,
    alloc_rd: &BTreeMap<JobId, u64>,
    coefficient: &Rational,
    bound: ReclaimBound,
) -> Reclaim {
    let mut per_job = BTreeMap::new();
    let mut alloc = alloc_rd.clone();
    let mut records = records_rd.clone();
    for job in borrowers {
        let owed = match bound {
            ReclaimBound::Pre => records_before[job],
            ReclaimBound::Post => records_rd[job],
        }
        .unsigned_abs();
        let held = alloc_rd[job];
        let claim = (coefficient * int(held))
            .floor()
            .to_integer()
            .to_u64()
            .unwrap_or(0);
        let take = owed.min(claim).min(held);
        *alloc.get_mut(job).unwrap() -= take;
        *records.get_mut(job).unwrap() += take as i64;
        per_job.insert(job.clone(), take);
    }
    let total = per_job.values().sum();
    Reclaim {
        per_job,
        total,
        alloc,
        records,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recompensation {
    pub alloc: BTreeMap<JobId, u64>,
    pub records: BTreeMap<JobId, i64>,
    pub remainders: BTreeMap<JobId, Rational>,
    /// Lenders all had zero distribution factor; priorities were used.
    pub priority_fallback: bool,
}

/// Hands `total` reclaimed tokens to the lenders by distribution factor,
/// debiting their records by what they receive.
#[allow(clippy::too_many_arguments)]
pub fn recompensate(
    lenders: &BTreeSet<JobId>,
    factors: &BTreeMap<JobId, Rational>,
    priorities: &BTreeMap<JobId, Rational>,
    alloc: &BTreeMap<JobId, u64>,
    records: &BTreeMap<JobId, i64>,
    remainders: &BTreeMap<JobId, Rational>,
    total: u64,
) -> Result<Recompensation, AllocationError> {
    let mut out = Recompensation {
        alloc: alloc.clone(),
        records: records.clone(),
        remainders: remainders.clone(),
        priority_fallback: false,
    };
    if total == 0 || lenders.is_empty() {
        return Ok(out);
    }
    let pick = |m: &BTreeMap<JobId, Rational>| -> BTreeMap<JobId, Rational> {
        lenders.iter().map(|j| (j.clone(), m[j].clone())).collect()
    };
    let shares = match proportional_shares(&pick(factors), total) {
        Some(s) => s,
        None => {
            out.priority_fallback = true;
            proportional_shares(&pick(priorities), total).expect("priorities are positive")
        }
    };
    let apportioned = apportion(&shares, remainders, total as i64)?;
    for (job, got) in apportioned.grants {
        *out.alloc.get_mut(&job).unwrap() += got;
        *out.records.get_mut(&job).unwrap() -= got as i64;
    }
    out.remainders.extend(apportioned.remainders);
    Ok(out)
}
