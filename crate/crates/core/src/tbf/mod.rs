//! Simulated token-bucket-filter RPC scheduler for one storage target.
//!
//! RPCs are classified by job at arrival. A job with a rule gets its own
//! FIFO guarded by a token bucket; everything else lands in the fallback
//! FIFO, which is not rate limited. Idle I/O threads take whichever comes
//! first: the eligible rule queue with the earliest deadline (the instant
//! its bucket holds a whole token) or the fallback head, keyed by its
//! arrival time. Rule queues win ties and never dispatch without a token.

mod bucket;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

pub use bucket::{TokenBucket, TokenRate};

use crate::{JobId, Rational, SimTime};

pub const DEFAULT_BUCKET_DEPTH: u32 = 3;

/// One RPC; always worth exactly one token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rpc {
    pub job_id: JobId,
    pub arrival: SimTime,
    /// Per-job arrival sequence number.
    pub seq: u64,
}

/// Relative importance of a rule, used to break deadline ties.
pub type RulePriority = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub rate: TokenRate,
    pub priority: RulePriority,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleTable {
    rules: BTreeMap<JobId, Rule>,
    generation: u64,
}

impl RuleTable {
    pub fn get(&self, job: &str) -> Option<&Rule> {
        self.rules.get(job)
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&JobId, &Rule)> {
        self.rules.iter()
    }
}

#[derive(Debug, Clone)]
pub struct TbfQueue {
    pub job_id: JobId,
    fifo: VecDeque<Rpc>,
    bucket: TokenBucket,
    priority: RulePriority,
    deadline: Option<SimTime>,
}

impl TbfQueue {
    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn bucket(&self) -> &TokenBucket {
        &self.bucket
    }

    pub fn deadline(&self) -> Option<SimTime> {
        self.deadline
    }
}

/// Fixed pool of I/O threads, each serving one RPC at a time.
#[derive(Debug, Clone)]
pub struct ServerPool {
    busy_until: Vec<SimTime>,
    service_time: SimTime,
}

impl ServerPool {
    pub fn new(thread_count: usize, service_time: SimTime) -> Self {
        assert!(thread_count >= 1, "need at least one I/O thread");
        assert!(
            service_time > SimTime::ZERO,
            "service time must be positive"
        );
        Self {
            busy_until: vec![SimTime::ZERO; thread_count],
            service_time,
        }
    }

    pub fn thread_count(&self) -> usize {
        self.busy_until.len()
    }

    pub fn service_time(&self) -> SimTime {
        self.service_time
    }

    /// RPCs per second the pool can sustain.
    pub fn capacity_rpc_s(&self) -> f64 {
        self.thread_count() as f64 / self.service_time.as_secs_f64()
    }

    fn idle_thread(&self, now: SimTime) -> Option<usize> {
        self.busy_until.iter().position(|&t| t <= now)
    }

    fn next_release(&self, now: SimTime) -> Option<SimTime> {
        self.busy_until.iter().copied().filter(|&t| t > now).min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueueKind {
    Rule,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatch {
    pub rpc: Rpc,
    pub start: SimTime,
    pub finish: SimTime,
    pub queue: QueueKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerConfig {
    pub thread_count: usize,
    pub service_time: SimTime,
    pub bucket_depth: u32,
}

type ReadyKey = (SimTime, Reverse<RulePriority>, JobId);

#[derive(Debug, Clone)]
pub struct TbfScheduler {
    rules: RuleTable,
    queues: BTreeMap<JobId, TbfQueue>,
    fallback: VecDeque<Rpc>,
    /// Non-empty rule queues with a known deadline, earliest first.
    ready: BTreeSet<ReadyKey>,
    pool: ServerPool,
    bucket_depth: u32,
    pending: BTreeMap<JobId, u64>,
    enqueued: u64,
    dispatched: u64,
}

impl TbfScheduler {
    pub fn new(config: SchedulerConfig) -> Self {
        assert!(config.bucket_depth >= 1, "bucket depth must be positive");
        Self {
            rules: RuleTable::default(),
            queues: BTreeMap::new(),
            fallback: VecDeque::new(),
            ready: BTreeSet::new(),
            pool: ServerPool::new(config.thread_count, config.service_time),
            bucket_depth: config.bucket_depth,
            pending: BTreeMap::new(),
            enqueued: 0,
            dispatched: 0,
        }
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    pub fn pool(&self) -> &ServerPool {
        &self.pool
    }

    pub fn queue(&self, job: &str) -> Option<&TbfQueue> {
        self.queues.get(job)
    }

    pub fn fallback_len(&self) -> usize {
        self.fallback.len()
    }

    /// RPCs of `job` waiting anywhere (its rule queue or the fallback).
    pub fn pending(&self, job: &str) -> u64 {
        self.pending.get(job).copied().unwrap_or(0)
    }

    pub fn total_pending(&self) -> u64 {
        self.enqueued - self.dispatched
    }

    pub fn enqueued(&self) -> u64 {
        self.enqueued
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Classifies an arriving RPC: its job's rule queue if a rule exists,
    /// the fallback queue otherwise.
    pub fn enqueue(&mut self, rpc: Rpc, now: SimTime) {
        debug_assert_eq!(rpc.arrival, now);
        self.enqueued += 1;
        *self.pending.entry(rpc.job_id.clone()).or_insert(0) += 1;
        match self.queues.get_mut(&rpc.job_id) {
            Some(queue) => {
                let was_empty = queue.fifo.is_empty();
                queue.fifo.push_back(rpc);
                if was_empty {
                    let job = queue.job_id.clone();
                    self.reschedule(&job);
                }
            }
            None => self.fallback.push_back(rpc),
        }
    }

    /// Hands RPCs to idle threads until no thread is idle or nothing can be
    /// dispatched at `now`.
    pub fn dispatch(&mut self, now: SimTime) -> Vec<Dispatch> {
        let mut out = Vec::new();
        while let Some(thread) = self.pool.idle_thread(now) {
            let rule = self
                .ready
                .first()
                .filter(|(deadline, _, _)| *deadline <= now)
                .map(|(deadline, _, job)| (*deadline, job.clone()));
            let fallback_head = self.fallback.front().map(|rpc| rpc.arrival);
            let (rpc, queue) = match rule {
                Some((deadline, job)) if fallback_head.is_none_or(|a| deadline <= a) => {
                    (self.take_from_rule_queue(&job, now), QueueKind::Rule)
                }
                _ => match self.fallback.pop_front() {
                    Some(rpc) => (rpc, QueueKind::Fallback),
                    None => break,
                },
            };
            let finish = now + self.pool.service_time;
            self.pool.busy_until[thread] = finish;
            self.dispatched += 1;
            let left = self.pending.get_mut(&rpc.job_id).expect("pending count");
            *left -= 1;
            out.push(Dispatch {
                rpc,
                start: now,
                finish,
                queue,
            });
        }
        out
    }

    /// Next instant after `now` at which `dispatch` could make progress.
    pub fn next_wakeup(&self, now: SimTime) -> Option<SimTime> {
        let deadline = self.ready.iter().map(|(d, _, _)| *d).find(|&d| d > now);
        match (self.pool.next_release(now), deadline) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Creates or updates the rule for `job`. An existing bucket keeps its
    /// balance across the rate change.
    pub fn set_rule(&mut self, job: &JobId, rate: TokenRate, priority: RulePriority, now: SimTime) {
        self.install_rule(job, rate, priority, now);
        self.rules.generation += 1;
    }

    /// Removes the rule for `job`; its queued RPCs move to the fallback
    /// queue in arrival order.
    pub fn stop_rule(&mut self, job: &str, now: SimTime) {
        if self.remove_rule(job, now) {
            self.rules.generation += 1;
        }
    }

    /// Installs one allocation round: every granted job runs at
    /// `grant / interval` tokens per second, rules of jobs without a grant
    /// are stopped.
    pub fn apply_rules(
        &mut self,
        grants: &BTreeMap<JobId, u64>,
        priorities: &BTreeMap<JobId, Rational>,
        interval: SimTime,
        now: SimTime,
    ) {
        let stale: Vec<JobId> = self
            .rules
            .rules
            .keys()
            .filter(|job| !grants.contains_key(*job))
            .cloned()
            .collect();
        for job in stale {
            self.remove_rule(job.as_str(), now);
        }
        for (job, &grant) in grants {
            let rate = rate_for_grant(grant, interval);
            let priority = priorities
                .get(job)
                .map(rule_priority)
                .unwrap_or_else(RulePriority::zero);
            self.install_rule(job, rate, priority, now);
        }
        self.rules.generation += 1;
    }

    fn install_rule(&mut self, job: &JobId, rate: TokenRate, priority: RulePriority, now: SimTime) {
        assert!(rate >= TokenRate::zero(), "negative token rate");
        self.rules
            .rules
            .insert(job.clone(), Rule { rate, priority });
        match self.queues.get_mut(job) {
            Some(queue) => {
                if let Some(old) = queue.deadline.take() {
                    self.ready
                        .remove(&(old, Reverse(queue.priority), job.clone()));
                }
                queue.bucket.set_rate(rate, now);
                queue.priority = priority;
            }
            None => {
                self.queues.insert(
                    job.clone(),
                    TbfQueue {
                        job_id: job.clone(),
                        fifo: VecDeque::new(),
                        bucket: TokenBucket::new(rate, self.bucket_depth, now),
                        priority,
                        deadline: None,
                    },
                );
            }
        }
        self.reschedule(job);
    }

    fn remove_rule(&mut self, job: &str, _now: SimTime) -> bool {
        if self.rules.rules.remove(job).is_none() {
            return false;
        }
        let queue = self.queues.remove(job).expect("rule without queue");
        if let Some(deadline) = queue.deadline {
            self.ready
                .remove(&(deadline, Reverse(queue.priority), queue.job_id.clone()));
        }
        if !queue.fifo.is_empty() {
            let mut merged: Vec<Rpc> = self.fallback.drain(..).chain(queue.fifo).collect();
            merged
                .sort_by(|a, b| (a.arrival, &a.job_id, a.seq).cmp(&(b.arrival, &b.job_id, b.seq)));
            self.fallback = merged.into();
        }
        true
    }

    fn take_from_rule_queue(&mut self, job: &JobId, now: SimTime) -> Rpc {
        let queue = self.queues.get_mut(job).expect("ready queue exists");
        let took = queue.bucket.try_take(now);
        debug_assert!(took, "queue past its deadline must hold a token");
        let rpc = queue.fifo.pop_front().expect("ready queue is non-empty");
        self.reschedule(job);
        rpc
    }

    /// Recomputes a queue's deadline and its place in the ready set.
    fn reschedule(&mut self, job: &JobId) {
        let queue = self.queues.get_mut(job).expect("queue exists");
        if let Some(old) = queue.deadline.take() {
            self.ready
                .remove(&(old, Reverse(queue.priority), job.clone()));
        }
        if queue.fifo.is_empty() {
            return;
        }
        queue.deadline = queue.bucket.ready_at();
        if let Some(deadline) = queue.deadline {
            self.ready
                .insert((deadline, Reverse(queue.priority), job.clone()));
        }
    }
}

/// `grant` tokens per `interval`, as tokens per second.
pub fn rate_for_grant(grant: u64, interval: SimTime) -> TokenRate {
    Ratio::new(grant as i128 * 1_000_000, interval.as_micros() as i128)
}

fn rule_priority(p: &Rational) -> RulePriority {
    let numer = p.numer().to_i64().expect("priority numerator fits i64");
    let denom = p.denom().to_i64().expect("priority denominator fits i64");
    Ratio::new(numer, denom)
}
