//! Seedable synthetic I/O patterns and the builtin evaluation scenarios.
//!
//! Jobs are open-loop RPC sources made of one or more processes: continuous
//! streams at a fixed rate, or periodic bursts issued back to back. A job
//! with a volume stops issuing once that many RPCs have been generated.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::ReclaimBound;
use crate::ledger::DEFAULT_EVICTION_INTERVALS;
use crate::scenario::{ControlMode, ControllerConfig, OstConfig, OutputConfig, Scenario};
use crate::tbf::{Rpc, DEFAULT_BUCKET_DEPTH};
use crate::{JobId, ScenarioError, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessPattern {
    Continuous {
        rate_rpc_s: f64,
        #[serde(default)]
        start_delay_s: f64,
        /// Shift every arrival by up to ±10% of the spacing.
        #[serde(default)]
        jitter: bool,
    },
    PeriodicBurst {
        burst_rpcs: u64,
        interval_s: f64,
        #[serde(default)]
        phase_s: f64,
    },
}

impl ProcessPattern {
    pub fn continuous(rate_rpc_s: f64, start_delay_s: f64) -> Self {
        Self::Continuous {
            rate_rpc_s,
            start_delay_s,
            jitter: false,
        }
    }

    pub fn burst(burst_rpcs: u64, interval_s: f64, phase_s: f64) -> Self {
        Self::PeriodicBurst {
            burst_rpcs,
            interval_s,
            phase_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub job_id: JobId,
    pub nodes: u64,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_volume_tokens: Option<u64>,
    pub processes: Vec<ProcessPattern>,
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn non_negative(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

impl JobSpec {
    pub fn new(job_id: impl Into<JobId>, nodes: u64, processes: Vec<ProcessPattern>) -> Self {
        Self {
            job_id: job_id.into(),
            nodes,
            start_s: 0.0,
            total_volume_tokens: None,
            processes,
        }
    }

    pub fn with_volume(mut self, tokens: u64) -> Self {
        self.total_volume_tokens = Some(tokens);
        self
    }

    pub fn validate(&self, path: &str) -> Result<(), ScenarioError> {
        let bad = |field: &str, reason: &str| {
            Err(ScenarioError::invalid(format!("{path}.{field}"), reason))
        };
        if self.job_id.as_str().is_empty() {
            return bad("job_id", "must not be empty");
        }
        if self.nodes == 0 {
            return bad("nodes", "must be positive");
        }
        if !non_negative(self.start_s) {
            return bad("start_s", "must be non-negative");
        }
        if self.total_volume_tokens == Some(0) {
            return bad("total_volume_tokens", "must be positive when present");
        }
        if self.processes.is_empty() {
            return bad("processes", "need at least one process");
        }
        for (i, p) in self.processes.iter().enumerate() {
            let field = |name: &str| format!("processes[{i}].{name}");
            match p {
                ProcessPattern::Continuous {
                    rate_rpc_s,
                    start_delay_s,
                    ..
                } => {
                    if !positive(*rate_rpc_s) {
                        return bad(&field("rate_rpc_s"), "must be positive");
                    }
                    if !non_negative(*start_delay_s) {
                        return bad(&field("start_delay_s"), "must be non-negative");
                    }
                }
                ProcessPattern::PeriodicBurst {
                    burst_rpcs,
                    interval_s,
                    phase_s,
                } => {
                    if *burst_rpcs == 0 {
                        return bad(&field("burst_rpcs"), "must be positive");
                    }
                    if !positive(*interval_s) {
                        return bad(&field("interval_s"), "must be positive");
                    }
                    if !non_negative(*phase_s) {
                        return bad(&field("phase_s"), "must be non-negative");
                    }
                }
            }
        }
        Ok(())
    }
}

fn stream_seed(seed: u64, job: &JobId, process: usize) -> u64 {
    // FNV-1a over the job id, mixed with the scenario seed and process index.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in job.as_str().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (process as u64).rotate_left(32)
}

/// All arrivals of `spec` strictly before `horizon`, time-ordered with
/// per-job sequence numbers assigned in that order.
pub fn generate_arrivals(
    spec: &JobSpec,
    horizon: SimTime,
    seed: u64,
) -> Result<Vec<Rpc>, ScenarioError> {
    spec.validate(&format!("jobs[{}]", spec.job_id))?;
    let start = SimTime::from_secs_f64(spec.start_s);
    let cap = spec.total_volume_tokens.unwrap_or(u64::MAX);
    // (time, process index, order within process)
    let mut times: Vec<(SimTime, usize, u64)> = Vec::new();
    for (idx, process) in spec.processes.iter().enumerate() {
        let mut emitted: u64 = 0;
        match *process {
            ProcessPattern::Continuous {
                rate_rpc_s,
                start_delay_s,
                jitter,
            } => {
                let base = start + SimTime::from_secs_f64(start_delay_s);
                let spacing_us = 1e6 / rate_rpc_s;
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &spec.job_id, idx));
                let mut k: u64 = 0;
                while emitted < cap {
                    let mut offset = (k as f64 * spacing_us).floor();
                    if jitter {
                        offset += rng.gen_range(-0.1..=0.1) * spacing_us;
                    }
                    let t = base + SimTime::from_micros(offset.max(0.0) as u64);
                    if t >= horizon {
                        break;
                    }
                    times.push((t, idx, k));
                    emitted += 1;
                    k += 1;
                }
            }
            ProcessPattern::PeriodicBurst {
                burst_rpcs,
                interval_s,
                phase_s,
            } => {
                let mut k: u64 = 0;
                'bursts: loop {
                    let at = start + SimTime::from_secs_f64(phase_s + k as f64 * interval_s);
                    if at >= horizon {
                        break;
                    }
                    for i in 0..burst_rpcs {
                        if emitted >= cap {
                            break 'bursts;
                        }
                        times.push((at, idx, k * burst_rpcs + i));
                        emitted += 1;
                    }
                    k += 1;
                }
            }
        }
    }
    times.sort();
    times.truncate(cap.min(times.len() as u64) as usize);
    Ok(times
        .into_iter()
        .enumerate()
        .map(|(seq, (arrival, _, _))| Rpc {
            job_id: spec.job_id.clone(),
            arrival,
            seq: seq as u64,
        })
        .collect())
}

/// Controller intervals swept by the frequency scenario.
pub const FREQUENCY_SWEEP_MS: [u64; 5] = [100, 200, 400, 800, 1600];

/// Time compression applied to the re-compensation workload's delays.
pub const RECOMPENSATION_TIME_SCALE: f64 = 0.25;

fn desk_ost() -> OstConfig {
    // 4 threads x 4 ms = 1000 RPC/s, matched to the token budget.
    OstConfig {
        max_token_rate: 1000,
        thread_count: 4,
        per_rpc_service_time_ms: 4.0,
        bucket_depth: DEFAULT_BUCKET_DEPTH,
    }
}

fn adaptive_controller() -> ControllerConfig {
    ControllerConfig {
        mode: ControlMode::Adaptbf,
        interval_ms: 100,
        eviction_k: DEFAULT_EVICTION_INTERVALS,
        reclaim_bound_mode: ReclaimBound::Pre,
    }
}

fn scenario(name: &str, duration_s: f64, jobs: Vec<JobSpec>) -> Scenario {
    Scenario {
        name: name.to_owned(),
        duration_s,
        seed: 42,
        metrics_interval_ms: 100,
        interval_sweep_ms: None,
        ost: desk_ost(),
        controller: adaptive_controller(),
        jobs,
        output: OutputConfig::default(),
    }
}

/// Four identical continuous jobs holding 10/10/30/50% of the nodes.
fn priority_allocation() -> Scenario {
    let jobs = [("job1", 10), ("job2", 10), ("job3", 30), ("job4", 50)]
        .into_iter()
        .map(|(id, nodes)| {
            JobSpec::new(id, nodes, vec![ProcessPattern::continuous(600.0, 0.0)])
                .with_volume(36_000)
        })
        .collect();
    scenario("sc1", 75.0, jobs)
}

/// Three high-priority bursty jobs against one low-priority continuous job.
fn redistribution() -> Scenario {
    let jobs = vec![
        JobSpec::new("job1", 30, vec![ProcessPattern::burst(60, 3.0, 0.55)]),
        JobSpec::new("job2", 30, vec![ProcessPattern::burst(90, 4.0, 1.35)]),
        JobSpec::new("job3", 30, vec![ProcessPattern::burst(45, 4.5, 2.15)]),
        JobSpec::new("job4", 10, vec![ProcessPattern::continuous(1200.0, 0.0)]),
    ];
    scenario("sc2", 60.0, jobs)
}

/// Equal priorities; three jobs lend while bursting and later turn
/// continuous after staggered delays, one job is continuous throughout.
fn recompensation() -> Scenario {
    let scale = RECOMPENSATION_TIME_SCALE;
    let bursty = |id: &str, burst: u64, every: f64, phase: f64, delay_s: f64| {
        JobSpec::new(
            id,
            25,
            vec![
                ProcessPattern::burst(burst, every, phase),
                ProcessPattern::continuous(400.0, delay_s * scale),
            ],
        )
    };
    let jobs = vec![
        bursty("job1", 30, 0.7, 0.15, 20.0),
        bursty("job2", 20, 0.9, 0.35, 50.0),
        bursty("job3", 10, 1.1, 0.55, 80.0),
        JobSpec::new("job4", 25, vec![ProcessPattern::continuous(1200.0, 0.0)]),
    ];
    scenario("sc3", 140.0 * scale, jobs)
}

fn frequency_sweep() -> Scenario {
    let mut s = recompensation();
    s.name = "sc4-freq".to_owned();
    s.interval_sweep_ms = Some(FREQUENCY_SWEEP_MS.to_vec());
    s
}

/// The desk-scale evaluation scenarios by name.
pub fn builtin_scenarios() -> BTreeMap<&'static str, Scenario> {
    BTreeMap::from([
        ("sc1", priority_allocation()),
        ("sc2", redistribution()),
        ("sc3", recompensation()),
        ("sc4-freq", frequency_sweep()),
    ])
}
