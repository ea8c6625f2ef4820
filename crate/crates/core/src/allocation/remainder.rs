//! Remainder-carrying integer apportionment.
//!
//! Every phase of the allocator produces rational shares that must become
//! whole tokens while the phase total stays exact. Each job floors its raw
//! share plus the fraction it carried from the previous apportionment, keeps
//! the new fraction, and the largest-remainder-first rule fixes up any
//! leftover or excess one token at a time.
//!
//! Shares are kept over one common denominator so that each job costs a
//! single reduction per phase.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::{AllocationError, JobId, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Apportionment {
    pub grants: BTreeMap<JobId, u64>,
    pub remainders: BTreeMap<JobId, Rational>,
}

/// Per-job shares `numerators[job] / denominator` with a positive denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Shares {
    numerators: BTreeMap<JobId, BigInt>,
    denominator: BigInt,
}

impl Shares {
    pub(crate) fn from_rationals(values: &BTreeMap<JobId, Rational>) -> Self {
        let denominator = common_denominator(values.values());
        let numerators = values
            .iter()
            .map(|(job, v)| (job.clone(), v.numer() * (&denominator / v.denom())))
            .collect();
        Self {
            numerators,
            denominator,
        }
    }

    #[cfg(test)]
    pub(crate) fn get(&self, job: &str) -> Rational {
        Rational::new(self.numerators[job].clone(), self.denominator.clone())
    }
}

/// Least common multiple of the denominators, cheap when each one is small.
fn common_denominator<'a>(values: impl Iterator<Item = &'a Rational>) -> BigInt {
    let mut lcm = BigInt::one();
    for v in values {
        let d = v.denom();
        if d.is_one() {
            continue;
        }
        let g = d.gcd(&(&lcm % d));
        lcm = lcm / g * d;
    }
    lcm
}

/// Exact sum of many rationals with a single final reduction.
pub(crate) fn exact_sum<'a>(values: impl Iterator<Item = &'a Rational> + Clone) -> Rational {
    let lcm = common_denominator(values.clone());
    let numer: BigInt = values.map(|v| v.numer() * (&lcm / v.denom())).sum();
    Rational::new(numer, lcm)
}

/// Apportions `raw` rational shares to integers that sum to `total`.
///
/// Jobs missing from `carried` start with a zero remainder. When the floored
/// grants fall short, the jobs with the largest remainder (ties: ascending
/// id) receive one more token each and their remainder is cleared. When the
/// floors overshoot, the jobs with the largest remainder among those holding
/// at least one token give one back and keep their fractional remainder.
/// Either way every remainder stays in `[0, 1)`.
pub fn apply_remainders(
    raw: &BTreeMap<JobId, Rational>,
    carried: &BTreeMap<JobId, Rational>,
    total: i64,
) -> Result<Apportionment, AllocationError> {
    let mut out = apportion(&Shares::from_rationals(raw), carried, total)?;
    for r in out.remainders.values_mut() {
        *r = r.reduced();
    }
    Ok(out)
}

/// Like `apply_remainders`, but remainders are left unreduced; callers
/// reduce once when the step is done.
pub(crate) fn apportion(
    shares: &Shares,
    carried: &BTreeMap<JobId, Rational>,
    total: i64,
) -> Result<Apportionment, AllocationError> {
    if total < 0 {
        return Err(AllocationError::NegativeConstraint(total));
    }
    let d = &shares.denominator;
    let mut grants = BTreeMap::new();
    let mut remainders = BTreeMap::new();
    let mut sum: i64 = 0;
    for (job, a) in &shares.numerators {
        if a.is_negative() {
            return Err(AllocationError::NegativeShare(job.clone()));
        }
        // a/d + p/q = (a q + p d) / (d q)
        let (value, denom) = match carried.get(job) {
            Some(rho) if !rho.is_zero() => (a * rho.denom() + rho.numer() * d, d * rho.denom()),
            _ => (a.clone(), d.clone()),
        };
        let (floor, rest) = value.div_mod_floor(&denom);
        let grant = floor.to_i64().expect("token grant exceeds i64 range");
        remainders.insert(job.clone(), Rational::new_raw(rest, denom));
        grants.insert(job.clone(), grant);
        sum += grant;
    }

    let mut diff = total - sum;
    while diff > 0 {
        // Deficit: hand out one token per job, largest remainder first.
        let order = ranked(&remainders, |_| true, &grants, diff as usize);
        if order.is_empty() {
            break;
        }
        for job in order {
            *grants.get_mut(&job).unwrap() += 1;
            remainders.insert(job, Rational::zero());
            diff -= 1;
        }
    }
    while diff < 0 {
        let order = ranked(&remainders, |g| g >= 1, &grants, (-diff) as usize);
        assert!(
            !order.is_empty(),
            "excess with no job holding a token; shares must sum to the constraint"
        );
        for job in order {
            *grants.get_mut(&job).unwrap() -= 1;
            diff += 1;
        }
    }

    debug_assert!(remainders
        .values()
        .all(|r| !r.is_negative() && r < &Rational::one()));
    let grants = grants
        .into_iter()
        .map(|(job, g)| (job, u64::try_from(g).expect("grant went negative")))
        .collect();
    Ok(Apportionment { grants, remainders })
}

/// The first `take` eligible jobs by descending remainder, then ascending id.
fn ranked(
    remainders: &BTreeMap<JobId, Rational>,
    eligible: impl Fn(i64) -> bool,
    grants: &BTreeMap<JobId, i64>,
    take: usize,
) -> Vec<JobId> {
    let mut order: Vec<(&JobId, &Rational)> = remainders
        .iter()
        .filter(|(job, _)| eligible(grants[*job]))
        .collect();
    let by_rank =
        |a: &(&JobId, &Rational), b: &(&JobId, &Rational)| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0));
    if take < order.len() {
        order.select_nth_unstable_by(take, by_rank);
        order.truncate(take);
    }
    order.sort_by(by_rank);
    order.into_iter().map(|(job, _)| job.clone()).collect()
}

/// Shares `total` tokens in proportion to `weights`.
/// Returns `None` when every weight is zero and `total` is positive.
pub(crate) fn proportional_shares(
    weights: &BTreeMap<JobId, Rational>,
    total: u64,
) -> Option<Shares> {
    let Shares {
        numerators,
        denominator: _,
    } = Shares::from_rationals(weights);
    let sum: BigInt = numerators.values().sum();
    if sum.is_zero() {
        if total == 0 {
            return Some(Shares {
                numerators: numerators
                    .into_keys()
                    .map(|j| (j, BigInt::zero()))
                    .collect(),
                denominator: BigInt::one(),
            });
        }
        return None;
    }
    let total = BigInt::from(total);
    Some(Shares {
        numerators: numerators
            .into_iter()
            .map(|(j, a)| (j, a * &total))
            .collect(),
        denominator: sum,
    })
}
