//! Virtual-time simulation of one storage target under a controller mode.
//!
//! At equal timestamps events are handled as arrivals, service
//! completions, controller tick, dispatch, metrics frame.

mod bench;
mod compare;
mod metrics;

use std::collections::BTreeMap;

use num_rational::Ratio;

pub use bench::{bench_alloc, bench_inputs, BenchStats};
pub use compare::{compare, Comparison, Delta};
pub use metrics::{JobFrame, JobSummary, MetricsFrame, RunSummary, ThroughputTable};

use crate::allocation::{AllocationPlan, Allocator, AllocatorConfig, JobInput, OstBudget};
use crate::ledger::{Eviction, JobLedger};
use crate::scenario::{ControlMode, Scenario};
use crate::tbf::{Dispatch, Rpc, SchedulerConfig, TbfScheduler, TokenRate};
use crate::workload::generate_arrivals;
use crate::{JobId, SimError, SimTime};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep every dispatch in `RunResult::trace`.
    pub trace: bool,
}

/// One controller step: what the allocator saw and what it decided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepLog {
    pub time: SimTime,
    pub budget: OstBudget,
    pub inputs: Vec<JobInput>,
    pub plan: AllocationPlan,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub name: String,
    pub mode: ControlMode,
    pub interval_ms: u64,
    pub frames: Vec<MetricsFrame>,
    pub summary: RunSummary,
    /// Adaptive mode only.
    pub steps: Vec<StepLog>,
    pub evictions: Vec<Eviction>,
    pub trace: Vec<Dispatch>,
    pub rule_generation: u64,
}

pub fn run(scenario: &Scenario) -> Result<RunResult, SimError> {
    run_with(scenario, RunOptions::default())
}

/// Runs independent scenarios (one per storage target) on up to `workers`
/// threads. Results keep the input order.
pub fn run_parallel(scenarios: &[Scenario], workers: usize) -> Vec<Result<RunResult, SimError>> {
    let workers = workers.clamp(1, scenarios.len().max(1));
    let chunk = scenarios.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(run).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("simulation worker panicked"))
            .collect()
    })
}

#[derive(Default)]
struct JobTotals {
    arrivals: u64,
    served: u64,
    last_finish: Option<SimTime>,
    frame_served: u64,
    frame_demand: u64,
}

struct Engine<'a> {
    scenario: &'a Scenario,
    sched: TbfScheduler,
    ledger: JobLedger,
    allocator: Allocator,
    budget: OstBudget,
    interval: SimTime,
    nodes: BTreeMap<JobId, u64>,
    grants: BTreeMap<JobId, u64>,
    totals: BTreeMap<JobId, JobTotals>,
    frames: Vec<MetricsFrame>,
    steps: Vec<StepLog>,
    trace: Option<Vec<Dispatch>>,
}

pub fn run_with(scenario: &Scenario, options: RunOptions) -> Result<RunResult, SimError> {
    scenario.validate()?;
    let end = scenario.duration();
    let mut arrivals: Vec<(usize, Rpc)> = Vec::new();
    for (idx, job) in scenario.jobs.iter().enumerate() {
        arrivals.extend(
            generate_arrivals(job, end, scenario.seed)?
                .into_iter()
                .map(|r| (idx, r)),
        );
    }
    arrivals.sort_by(|(ia, a), (ib, b)| (a.arrival, ia, a.seq).cmp(&(b.arrival, ib, b.seq)));

    let mut engine = Engine::new(scenario, options)?;
    if scenario.controller.mode == ControlMode::Static {
        engine.install_static_rules();
    }

    let tick = engine.interval;
    let frame_every = SimTime::from_millis(scenario.metrics_interval_ms);
    let mut next_tick = tick;
    let mut next_frame = frame_every;
    let mut cursor = 0;
    let mut now = SimTime::ZERO;
    loop {
        while let Some((_, rpc)) = arrivals.get(cursor).filter(|(_, r)| r.arrival == now) {
            engine.arrive(rpc.clone(), now);
            cursor += 1;
        }
        if now == next_tick {
            engine.controller_tick(now)?;
            next_tick = next_tick + tick;
        }
        engine.dispatch(now);
        if now == next_frame {
            engine.emit_frame(now);
            next_frame = next_frame + frame_every;
        }

        let mut next = next_tick.min(next_frame);
        if let Some((_, rpc)) = arrivals.get(cursor) {
            next = next.min(rpc.arrival);
        }
        if let Some(wake) = engine.sched.next_wakeup(now) {
            next = next.min(wake);
        }
        if next > end {
            break;
        }
        now = next;
    }
    Ok(engine.finish(end))
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, options: RunOptions) -> Result<Self, SimError> {
        let sched = TbfScheduler::new(SchedulerConfig {
            thread_count: scenario.ost.thread_count,
            service_time: scenario.service_time(),
            bucket_depth: scenario.ost.bucket_depth,
        });
        Ok(Self {
            scenario,
            sched,
            ledger: JobLedger::new(scenario.controller.eviction_k),
            allocator: Allocator::new(AllocatorConfig {
                reclaim_bound: scenario.controller.reclaim_bound_mode,
            }),
            budget: scenario.budget()?,
            interval: scenario.interval(),
            nodes: scenario
                .jobs
                .iter()
                .map(|j| (j.job_id.clone(), j.nodes))
                .collect(),
            grants: BTreeMap::new(),
            totals: scenario
                .jobs
                .iter()
                .map(|j| (j.job_id.clone(), JobTotals::default()))
                .collect(),
            frames: Vec::new(),
            steps: Vec::new(),
            trace: options.trace.then(Vec::new),
        })
    }

    fn mode(&self) -> ControlMode {
        self.scenario.controller.mode
    }

    fn install_static_rules(&mut self) {
        let total_nodes: u64 = self.nodes.values().sum();
        let rate = self.budget.max_token_rate();
        let per_interval = self.budget.tokens_per_interval();
        for (job, &n) in &self.nodes {
            let share = TokenRate::new(rate as i128 * n as i128, total_nodes as i128);
            self.sched.set_rule(
                job,
                share,
                Ratio::new(n as i64, total_nodes as i64),
                SimTime::ZERO,
            );
            self.grants
                .insert(job.clone(), per_interval * n / total_nodes);
        }
    }

    fn arrive(&mut self, rpc: Rpc, now: SimTime) {
        let totals = self
            .totals
            .get_mut(&rpc.job_id)
            .expect("arrival of a scenario job");
        totals.arrivals += 1;
        totals.frame_demand += 1;
        if self.mode() == ControlMode::Adaptbf {
            self.ledger
                .observe_rpc(&rpc.job_id, self.nodes[&rpc.job_id], now);
        }
        self.sched.enqueue(rpc, now);
    }

    fn controller_tick(&mut self, now: SimTime) -> Result<(), SimError> {
        if self.mode() != ControlMode::Adaptbf {
            return Ok(());
        }
        let idx = self.ledger.interval_index();
        let inputs = self.ledger.snapshot_active(idx)?;
        if !inputs.is_empty() {
            let plan = self.allocator.step(&self.budget, &inputs)?;
            self.sched
                .apply_rules(&plan.grants, &plan.phases.priorities, self.interval, now);
            self.ledger.commit(&plan)?;
            self.grants = plan.grants.clone();
            self.steps.push(StepLog {
                time: now,
                budget: self.budget,
                inputs,
                plan,
            });
        }
        self.ledger.clear_stats(idx)?;
        Ok(())
    }

    fn dispatch(&mut self, now: SimTime) {
        for d in self.sched.dispatch(now) {
            let totals = self
                .totals
                .get_mut(&d.rpc.job_id)
                .expect("dispatch of a scenario job");
            totals.served += 1;
            totals.frame_served += 1;
            totals.last_finish = Some(d.finish);
            if self.mode() == ControlMode::Adaptbf {
                self.ledger.observe_served(&d.rpc.job_id);
            }
            if let Some(trace) = &mut self.trace {
                trace.push(d);
            }
        }
    }

    fn emit_frame(&mut self, now: SimTime) {
        let adaptive = self.mode() == ControlMode::Adaptbf;
        let mut jobs = BTreeMap::new();
        let mut aggregate = 0;
        for (job, totals) in &mut self.totals {
            aggregate += totals.frame_served;
            let has_rule = self.sched.rules().get(job.as_str()).is_some();
            jobs.insert(
                job.clone(),
                JobFrame {
                    served: std::mem::take(&mut totals.frame_served),
                    demand: std::mem::take(&mut totals.frame_demand),
                    granted: has_rule.then(|| self.grants.get(job).copied().unwrap_or(0)),
                    record: adaptive
                        .then(|| self.ledger.entry(job.as_str()).map(|e| e.record))
                        .flatten(),
                    queue_depth: self.sched.pending(job.as_str()),
                },
            );
        }
        self.frames.push(MetricsFrame {
            time: now,
            jobs,
            fallback_depth: self.sched.fallback_len() as u64,
            aggregate_served: aggregate,
        });
    }

    fn finish(self, end: SimTime) -> RunResult {
        let total_nodes: u64 = self.nodes.values().sum();
        let mut jobs = BTreeMap::new();
        for spec in &self.scenario.jobs {
            let t = &self.totals[&spec.job_id];
            let start = SimTime::from_secs_f64(spec.start_s);
            let queued = self.sched.pending(spec.job_id.as_str());
            let completion = match spec.total_volume_tokens {
                Some(v) if t.served == v => t.last_finish,
                _ => None,
            };
            let stop = completion.map_or(end, |c| c.min(end));
            let span = stop.saturating_sub(start).as_secs_f64();
            jobs.insert(
                spec.job_id.clone(),
                JobSummary {
                    job_id: spec.job_id.clone(),
                    nodes: spec.nodes,
                    priority: spec.nodes as f64 / total_nodes as f64,
                    arrivals: t.arrivals,
                    served: t.served,
                    queued_at_end: queued,
                    start,
                    completion,
                    throughput_rpc_s: if span > 0.0 {
                        t.served as f64 / span
                    } else {
                        0.0
                    },
                },
            );
        }
        let total_served: u64 = jobs.values().map(|j| j.served).sum();
        let summary = RunSummary {
            duration: end,
            total_arrivals: jobs.values().map(|j| j.arrivals).sum(),
            total_served,
            aggregate_throughput_rpc_s: total_served as f64 / end.as_secs_f64(),
            jobs,
        };
        RunResult {
            name: self.scenario.name.clone(),
            mode: self.mode(),
            interval_ms: self.scenario.controller.interval_ms,
            frames: self.frames,
            summary,
            steps: self.steps,
            evictions: self.ledger.evictions().to_vec(),
            trace: self.trace.unwrap_or_default(),
            rule_generation: self.sched.rules().generation(),
        }
    }
}
