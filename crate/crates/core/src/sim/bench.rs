use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::allocation::{allocate_step, JobInput, OstBudget};
use crate::{AllocationError, Rational};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchStats {
    pub n_jobs: usize,
    pub trials: usize,
    pub mean_step: Duration,
    pub p95_step: Duration,
    pub max_step: Duration,
    pub mean_per_job: Duration,
}

/// A reproducible random active set of `n_jobs` jobs sharing a budget of
/// 100 tokens per job per interval.
pub fn bench_inputs(n_jobs: usize, rng: &mut ChaCha8Rng) -> (OstBudget, Vec<JobInput>) {
    let budget =
        OstBudget::new(1000 * n_jobs.max(1) as u64, 100).expect("budget holds whole tokens");
    let mut jobs: Vec<JobInput> = (0..n_jobs)
        .map(|i| {
            let mut job = JobInput::new(
                format!("job{i:05}"),
                rng.gen_range(1..=64),
                rng.gen_range(1..=250),
            )
            .with_record(rng.gen_range(-50..=50))
            .with_remainder(Rational::new(rng.gen_range(0..16).into(), 16.into()));
            if rng.gen_bool(0.9) {
                job = job.with_prev_alloc(rng.gen_range(1..=200));
            }
            job
        })
        .collect();
    // Records are a zero-sum ledger.
    let drift: i64 = jobs.iter().map(|j| j.record).sum();
    if let Some(last) = jobs.last_mut() {
        last.record -= drift;
    }
    (budget, jobs)
}

/// Wall-clock cost of `allocate_step` over `trials` random active sets.
pub fn bench_alloc(n_jobs: usize, trials: usize, seed: u64) -> Result<BenchStats, AllocationError> {
    if n_jobs == 0 {
        return Err(AllocationError::EmptyActiveSet);
    }
    let trials = trials.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (budget, jobs) = bench_inputs(n_jobs, &mut rng);
        let started = Instant::now();
        let plan = allocate_step(&budget, &jobs)?;
        samples.push(started.elapsed());
        std::hint::black_box(plan);
    }
    samples.sort();
    let total: Duration = samples.iter().sum();
    let mean_step = total / trials as u32;
    let p95_idx = ((trials as f64 * 0.95).ceil() as usize).clamp(1, trials) - 1;
    Ok(BenchStats {
        n_jobs,
        trials,
        mean_step,
        p95_step: samples[p95_idx],
        max_step: samples[trials - 1],
        mean_per_job: mean_step / n_jobs as u32,
    })
}
