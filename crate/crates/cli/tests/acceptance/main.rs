//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod oracle;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use adaptbf_core::allocation::{
    allocate_step_with, AllocatorConfig, JobInput, OstBudget, ReclaimBound,
};
use adaptbf_core::scenario::{ControlMode, Scenario};
use adaptbf_core::sim::{bench_alloc, compare, run, run_with, RunOptions, RunResult};
use adaptbf_core::tbf::{Rpc, SchedulerConfig, TbfScheduler, TokenRate};
use adaptbf_core::workload::{builtin_scenarios, ProcessPattern};
use adaptbf_core::{JobId, Rational, SimTime};
use num_rational::Ratio;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use oracle::{reference_step, RefJob, Q};

type Outcome = Result<String, String>;

fn builtin(name: &str) -> Scenario {
    builtin_scenarios()[name].clone()
}

fn to_q(r: &Rational) -> Q {
    Ratio::new(r.numer().to_i128().unwrap(), r.denom().to_i128().unwrap())
}

// 1. Randomized equivalence with the reference allocator.
fn oracle_equivalence() -> Outcome {
    const INSTANCES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ac1e);
    let started = Instant::now();
    let mut mismatches = Vec::new();
    for case in 0..INSTANCES {
        let n = rng.gen_range(1..=6);
        let budget_tokens: u64 = rng.gen_range(1..=50);
        let budget = OstBudget::new(budget_tokens, 1000).unwrap();
        let mut inputs = Vec::new();
        let mut refs = Vec::new();
        for i in 0..n {
            let nodes = rng.gen_range(1..=20u64);
            let demand = rng.gen_range(1..=60u64);
            let prev = match rng.gen_range(0..10) {
                0 => None,
                1 => Some(0),
                _ => Some(rng.gen_range(1..=50u64)),
            };
            let record = rng.gen_range(-20..=20i64);
            let den = rng.gen_range(1..=12i64);
            let num = rng.gen_range(0..den);
            let mut job = JobInput::new(format!("j{i}"), nodes, demand)
                .with_record(record)
                .with_remainder(Rational::new(num.into(), den.into()));
            if let Some(p) = prev {
                job = job.with_prev_alloc(p);
            }
            inputs.push(job);
            refs.push(RefJob {
                nodes: nodes.into(),
                demand: demand.into(),
                prev: prev.map(i128::from),
                record: record.into(),
                rem: Q::new(num.into(), den.into()),
            });
        }
        let post = case % 2 == 1;
        let config = AllocatorConfig {
            reclaim_bound: if post {
                ReclaimBound::Post
            } else {
                ReclaimBound::Pre
            },
        };
        let plan = allocate_step_with(&config, case as u64, &budget, &inputs)
            .map_err(|e| e.to_string())?;
        let expected = reference_step(budget_tokens.into(), &refs, post);
        let got_grants: Vec<i128> = inputs
            .iter()
            .map(|j| plan.grants[&j.job_id].into())
            .collect();
        let got_records: Vec<i128> = inputs
            .iter()
            .map(|j| plan.ledger_updates[&j.job_id].record.into())
            .collect();
        let got_rems: Vec<Q> = inputs
            .iter()
            .map(|j| to_q(&plan.ledger_updates[&j.job_id].remainder))
            .collect();
        if got_grants != expected.grants
            || got_records != expected.records
            || got_rems != expected.rems
        {
            mismatches.push(case);
        }
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "{INSTANCES} instances, {} mismatches, {:.2}s",
        mismatches.len(),
        elapsed.as_secs_f64()
    );
    if mismatches.is_empty() && elapsed < Duration::from_secs(10) {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; first mismatching cases {:?}",
            &mismatches[..mismatches.len().min(5)]
        ))
    }
}

// 2. Conservation on every controller step of the full builtin runs.
fn conservation() -> Outcome {
    let mut steps = 0;
    let mut violations = Vec::new();
    for name in ["sc1", "sc2", "sc3"] {
        let scenario = builtin(name);
        let bound = scenario.controller.reclaim_bound_mode;
        let result = run(&scenario).map_err(|e| e.to_string())?;
        for step in &result.steps {
            steps += 1;
            let at = format!("{name}@{}ms", step.time.as_millis());
            let plan = &step.plan;
            if !step.inputs.is_empty() && plan.total_granted() != step.budget.tokens_per_interval()
            {
                violations.push(format!("{at}: grants {} != budget", plan.total_granted()));
            }
            let delta: i64 = step
                .inputs
                .iter()
                .map(|j| plan.ledger_updates[&j.job_id].record - j.record)
                .sum();
            if delta != 0 {
                violations.push(format!("{at}: record deltas sum to {delta}"));
            }
            let one = Rational::from_integer(1.into());
            let zero = Rational::from_integer(0.into());
            for (job, update) in &plan.ledger_updates {
                if update.remainder < zero || update.remainder >= one {
                    violations.push(format!("{at}: remainder of {job} is {}", update.remainder));
                }
            }
            for (job, &taken) in &plan.phases.reclaim {
                let owed = match bound {
                    ReclaimBound::Pre => {
                        step.inputs
                            .iter()
                            .find(|j| &j.job_id == job)
                            .unwrap()
                            .record
                    }
                    ReclaimBound::Post => plan.phases.records_redistributed[job],
                };
                if taken > owed.unsigned_abs() {
                    violations.push(format!("{at}: reclaimed {taken} from {job} owing {owed}"));
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(format!("{steps} steps over sc1-sc3, 0 violations"))
    } else {
        Err(format!(
            "{} violations, e.g. {}",
            violations.len(),
            violations[0]
        ))
    }
}

/// Served-RPC share per job over frames in (from, to] where every job had demand.
fn served_shares(result: &RunResult, from: SimTime, to: SimTime) -> BTreeMap<JobId, f64> {
    let mut served: BTreeMap<JobId, u64> = BTreeMap::new();
    for f in &result.frames {
        if f.time <= from || f.time > to || f.jobs.values().any(|j| j.demand == 0) {
            continue;
        }
        for (job, jf) in &f.jobs {
            *served.entry(job.clone()).or_default() += jf.served;
        }
    }
    let total: u64 = served.values().sum();
    served
        .into_iter()
        .map(|(j, s)| (j, s as f64 / total.max(1) as f64))
        .collect()
}

fn shares_within(shares: &BTreeMap<JobId, f64>, targets: &[f64], tol: f64) -> (bool, String) {
    let ok = shares.len() == targets.len()
        && shares
            .values()
            .zip(targets)
            .all(|(s, t)| (s - t).abs() <= tol);
    let text = shares
        .values()
        .map(|s| format!("{:.3}", s))
        .collect::<Vec<_>>()
        .join("/");
    (ok, text)
}

// 3. Served shares follow priorities under contention; FCFS shares equally.
fn priority_proportionality() -> Outcome {
    let scenario = builtin("sc1");
    let (from, to) = (SimTime::from_millis(5_000), SimTime::from_millis(60_000));
    let adaptive = run(&scenario).map_err(|e| e.to_string())?;
    let fcfs = run(&scenario.with_mode(ControlMode::Nobw)).map_err(|e| e.to_string())?;
    let (ok_a, a) = shares_within(
        &served_shares(&adaptive, from, to),
        &[0.1, 0.1, 0.3, 0.5],
        0.05,
    );
    let (ok_n, n) = shares_within(&served_shares(&fcfs, from, to), &[0.25; 4], 0.05);
    let detail = format!("adaptive {a}, fcfs {n}");
    if ok_a && ok_n {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 4. Bursty high-priority jobs against a continuous low-priority job.
fn burst_responsiveness() -> Outcome {
    let scenario = builtin("sc2");
    let interval = scenario.interval();
    let budget = scenario.budget().unwrap().tokens_per_interval() as f64;
    let result = run_with(&scenario, RunOptions { trace: true }).map_err(|e| e.to_string())?;
    let bursty: Vec<JobId> = scenario
        .jobs
        .iter()
        .filter(|j| {
            j.processes
                .iter()
                .all(|p| matches!(p, ProcessPattern::PeriodicBurst { .. }))
        })
        .map(|j| j.job_id.clone())
        .collect();
    let steady = scenario
        .jobs
        .iter()
        .find(|j| !bursty.contains(&j.job_id))
        .unwrap()
        .job_id
        .clone();
    let mut failures = Vec::new();

    // (a) silent stretches: the continuous job fills the server within 3 intervals.
    let frame_capacity = scenario.ost.thread_count as f64 * scenario.metrics_interval_ms as f64
        / scenario.ost.per_rpc_service_time_ms;
    let silent: Vec<bool> = result
        .frames
        .iter()
        .map(|f| {
            bursty
                .iter()
                .all(|j| f.jobs[j].demand == 0 && f.jobs[j].queue_depth == 0)
        })
        .collect();
    let mut stretches = 0;
    let mut worst_reach = 0;
    let mut i = 0;
    while i < silent.len() {
        if !silent[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < silent.len() && silent[i] {
            i += 1;
        }
        if i - start < 4 {
            continue;
        }
        stretches += 1;
        let served = |k: usize| result.frames[start + k].jobs[&steady].served as f64;
        match (0..4).find(|&k| served(k) >= 0.85 * frame_capacity) {
            Some(k) => worst_reach = worst_reach.max(k),
            None => failures.push(format!(
                "no ramp-up in silent stretch at {}ms",
                result.frames[start].time_ms()
            )),
        }
        let rest: Vec<f64> = (4..i - start).map(served).collect();
        if !rest.is_empty()
            && rest.iter().sum::<f64>() / (rest.len() as f64) < 0.85 * frame_capacity
        {
            failures.push(format!(
                "rate not sustained in silent stretch at {}ms",
                result.frames[start].time_ms()
            ));
        }
    }
    if stretches == 0 {
        failures.push("no silent stretch to check".to_owned());
    }

    // (b) every burst drains within ceil(B / (0.3 budget)) + 2 intervals.
    let mut bursts: BTreeMap<(JobId, SimTime), (u64, SimTime)> = BTreeMap::new();
    for d in &result.trace {
        if bursty.contains(&d.rpc.job_id) {
            let e = bursts
                .entry((d.rpc.job_id.clone(), d.rpc.arrival))
                .or_insert((0, d.finish));
            e.0 += 1;
            e.1 = e.1.max(d.finish);
        }
    }
    let mut checked = 0;
    let mut worst_slack = f64::INFINITY;
    for ((job, arrival), (size, done)) in &bursts {
        let allowed_intervals = (*size as f64 / (0.3 * budget)).ceil() as u64 + 2;
        let deadline = *arrival + SimTime::from_micros(allowed_intervals * interval.as_micros());
        if deadline > scenario.duration() {
            continue;
        }
        checked += 1;
        worst_slack =
            worst_slack.min((deadline.as_micros() as f64 - done.as_micros() as f64) / 1000.0);
        if *done > deadline {
            failures.push(format!(
                "{job} burst at {}ms finished at {}ms",
                arrival.as_millis(),
                done.as_millis()
            ));
        }
    }
    let generated: u64 = result
        .summary
        .jobs
        .iter()
        .filter(|(j, _)| bursty.contains(j))
        .map(|(_, s)| s.arrivals)
        .sum();
    let dispatched: u64 = bursts.values().map(|b| b.0).sum();
    if dispatched != generated {
        failures.push(format!(
            "{} burst RPCs never dispatched",
            generated - dispatched
        ));
    }

    // (c) gains over FCFS for the bursty jobs, none for the continuous one.
    let fcfs = run(&scenario.with_mode(ControlMode::Nobw)).map_err(|e| e.to_string())?;
    let cmp = compare(&result.summary.throughputs(), &fcfs.summary.throughputs())
        .map_err(|e| e.to_string())?;
    for job in &bursty {
        if cmp.jobs[job].absolute <= 0.0 {
            failures.push(format!("{job} did not gain over FCFS"));
        }
    }
    if cmp.jobs[&steady].absolute > 0.0 {
        failures.push(format!("{steady} gained over FCFS"));
    }
    let signs = cmp
        .jobs
        .iter()
        .map(|(j, d)| format!("{j}:{:+.1}%", d.relative.unwrap_or(0.0) * 100.0))
        .collect::<Vec<_>>()
        .join(" ");
    let detail = format!(
        "(a) {stretches} silent stretches, full rate by interval {}; (b) {checked} bursts, min slack {worst_slack:.0}ms; (c) {signs}",
        worst_reach + 1
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

// 5. The most-delayed lender is paid back after it turns continuous.
fn recompensation_dynamics() -> Outcome {
    let scenario = builtin("sc3");
    let result = run(&scenario).map_err(|e| e.to_string())?;
    let (job, turn) = scenario
        .jobs
        .iter()
        .filter_map(|j| {
            j.processes.iter().find_map(|p| match p {
                ProcessPattern::Continuous { start_delay_s, .. } if *start_delay_s > 0.0 => Some((
                    j.job_id.clone(),
                    SimTime::from_secs_f64(j.start_s + start_delay_s),
                )),
                _ => None,
            })
        })
        .max_by_key(|(_, t)| *t)
        .ok_or("no delayed job")?;
    let record_at = |f: &adaptbf_core::sim::MetricsFrame| f.jobs[&job].record.unwrap_or(0) as f64;
    let lent = result
        .frames
        .iter()
        .take_while(|f| f.time < turn)
        .last()
        .map(record_at)
        .unwrap_or(0.0);
    let after: Vec<f64> = result
        .frames
        .iter()
        .filter(|f| f.time >= turn && f.time <= turn + SimTime::from_millis(10_000))
        .map(record_at)
        .collect();
    let ma: Vec<f64> = after
        .windows(5)
        .map(|w| w.iter().sum::<f64>() / 5.0)
        .collect();
    let settled = ma.iter().position(|m| m.abs() <= 5.0);
    let monotone = match settled {
        Some(k) => ma[..=k].windows(2).all(|w| w[1] <= w[0]),
        None => false,
    };
    let detail = format!(
        "{job}: record {lent:.0} before turning continuous at {}ms; moving average reaches +-5 after {}",
        turn.as_millis(),
        settled.map_or("never".to_owned(), |k| format!("{}ms", (k + 4) as u64 * scenario.metrics_interval_ms))
    );
    if lent > 0.0 && monotone {
        Ok(detail)
    } else {
        Err(format!(
            "{detail}; non-increasing until settled: {monotone}"
        ))
    }
}

// 6. Aggregate service falls as the controller interval grows.
fn frequency_trend() -> Outcome {
    let scenario = builtin("sc4-freq");
    let sweep = scenario.interval_sweep_ms.clone().ok_or("no sweep")?;
    let mut served = Vec::new();
    for &ms in &sweep {
        let mut s = scenario.with_interval_ms(ms);
        s.interval_sweep_ms = None;
        served.push(run(&s).map_err(|e| e.to_string())?.summary.total_served);
    }
    let ok = served.windows(2).all(|w| w[1] as f64 <= w[0] as f64 * 1.01);
    let detail = sweep
        .iter()
        .zip(&served)
        .map(|(ms, s)| format!("{ms}ms:{s}"))
        .collect::<Vec<_>>()
        .join(" ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 7. Allocation overhead and its scaling.
fn overhead() -> Outcome {
    let small = bench_alloc(100, 200, 7).map_err(|e| e.to_string())?;
    let large = bench_alloc(1000, 50, 7).map_err(|e| e.to_string())?;
    let per_job = |s: &adaptbf_core::sim::BenchStats| s.mean_step.as_secs_f64() / s.n_jobs as f64;
    let ratio = per_job(&large) / per_job(&small);
    let detail = format!(
        "1000 jobs: mean {:.2}ms (p95 {:.2}ms), per-job {:.2}us vs {:.2}us at 100 jobs (x{ratio:.2})",
        large.mean_step.as_secs_f64() * 1e3,
        large.p95_step.as_secs_f64() * 1e3,
        per_job(&large) * 1e6,
        per_job(&small) * 1e6,
    );
    if large.mean_step < Duration::from_millis(30) && (1.0 / 3.0..=3.0).contains(&ratio) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 8. A saturated rule queue is served at its rate, in arrival order.
fn scheduler_fidelity() -> Outcome {
    let mut sched = TbfScheduler::new(SchedulerConfig {
        thread_count: 4,
        service_time: SimTime::from_millis(1),
        bucket_depth: 3,
    });
    let job = JobId::from("q");
    sched.set_rule(
        &job,
        TokenRate::from_integer(50),
        Ratio::from_integer(1),
        SimTime::ZERO,
    );
    let horizon = SimTime::from_millis(30_000);
    for seq in 0..2_000 {
        sched.enqueue(
            Rpc {
                job_id: job.clone(),
                arrival: SimTime::ZERO,
                seq,
            },
            SimTime::ZERO,
        );
    }
    let mut starts = Vec::new();
    let mut seqs = Vec::new();
    let mut now = SimTime::ZERO;
    loop {
        for d in sched.dispatch(now) {
            starts.push(d.start.as_micros());
            seqs.push(d.rpc.seq);
        }
        match sched.next_wakeup(now) {
            Some(t) if t <= horizon => now = t,
            _ => break,
        }
    }
    let mut failures = Vec::new();
    let mut extremes = Vec::new();
    for w_s in [1u64, 5, 10] {
        let w = w_s * 1_000_000;
        let expected = 50 * w_s;
        let (mut lo, mut hi) = (u64::MAX, 0);
        // Every window start on a 1 ms grid across the saturated horizon.
        for a in (0..=horizon.as_micros() - w).step_by(1_000) {
            let n = (starts.partition_point(|&t| t < a + w) - starts.partition_point(|&t| t < a))
                as u64;
            lo = lo.min(n);
            hi = hi.max(n);
        }
        if lo + 3 < expected || hi > expected + 3 {
            failures.push(format!(
                "W={w_s}s served {lo}..{hi}, expected {expected}+-3"
            ));
        }
        extremes.push(format!("W={w_s}s:{lo}..{hi}"));
    }
    let fcfs = seqs.windows(2).all(|p| p[0] < p[1]);
    if !fcfs {
        failures.push("dispatch order broke seq monotonicity".to_owned());
    }
    let detail = format!(
        "{} dispatches, {}, FCFS {fcfs}",
        seqs.len(),
        extremes.join(" ")
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; {}", failures.join("; ")))
    }
}

fn timelines(root: &Path) -> BTreeMap<String, Vec<u8>> {
    walk(root)
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n == "timeline.csv"))
        .map(|p| {
            (
                p.strip_prefix(root).unwrap().display().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

// 9. Same seed, same bytes, through the command line tool.
fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_adaptbf");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = Vec::new();
    for name in ["sc1", "sc2", "sc3", "sc4-freq"] {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let dir = tmp.path().join(format!("{name}-{attempt}"));
            let status = Command::new(exe)
                .args(["builtin", name, "--out-dir"])
                .arg(&dir)
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!(
                    "{name}: {}",
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
            outputs.push(timelines(&dir));
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            return Err(format!("{name}: timeline.csv differs between runs"));
        }
        for (file, bytes) in &outputs[0] {
            let digest = Sha256::digest(bytes);
            compared.push(format!("{name}/{file}={:.8}", format!("{digest:x}")));
        }
    }
    Ok(format!(
        "{} identical timelines ({})",
        compared.len(),
        compared.join(" ")
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("conservation", conservation),
        ("priority proportionality", priority_proportionality),
        ("burst responsiveness", burst_responsiveness),
        ("re-compensation dynamics", recompensation_dynamics),
        ("frequency trend", frequency_trend),
        ("allocation overhead", overhead),
        ("scheduler fidelity", scheduler_fidelity),
        ("determinism", determinism),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = check();
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({secs:.1}s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({secs:.1}s) {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
