use std::path::{Path, PathBuf};

use adaptbf_core::scenario::{ControlMode, Scenario};
use adaptbf_core::sim::{
    bench_alloc, run_parallel, BenchStats, Comparison, RunResult, ThroughputTable,
};
use adaptbf_core::workload::builtin_scenarios;

use crate::error::{CliError, ErrorCode, Result};
use crate::report;
use crate::scenario_file;

#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub mode: Option<ControlMode>,
    pub interval_ms: Option<u64>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub baseline: Option<PathBuf>,
    pub json: bool,
    pub parallel_osts: usize,
}

const DEFAULT_OUT_DIR: &str = "adaptbf-out";

pub fn cmd_run(path: &Path, args: &RunArgs) -> Result<String> {
    let scenario = scenario_file::load(path)?;
    execute(scenario, args, None)
}

pub fn cmd_builtin(name: &str, args: &RunArgs) -> Result<String> {
    let all = builtin_scenarios();
    let Some(scenario) = all.get(name) else {
        let names: Vec<&str> = all.keys().copied().collect();
        return Err(CliError::new(
            ErrorCode::UnknownScenario,
            format!(
                "unknown builtin scenario `{name}` (valid: {})",
                names.join(", ")
            ),
        ));
    };
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| Path::new(DEFAULT_OUT_DIR).join(name));
    report::ensure_dir(&out_dir)?;
    let file = out_dir.join(format!("{name}.scenario"));
    report::write_file(&file, scenario_file::to_toml(scenario).as_bytes())?;
    // Re-read what was written, so the run is exactly what the file says.
    let scenario = scenario_file::load(&file)?;
    let args = RunArgs {
        out_dir: Some(out_dir),
        ..args.clone()
    };
    execute(scenario, &args, Some(ControlMode::Nobw))
}

pub fn cmd_bench(
    jobs: usize,
    trials: usize,
    seed: u64,
    assert_budget_us: Option<u64>,
) -> Result<String> {
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    if trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    let stats = bench_alloc(jobs, trials, seed)
        .map_err(|e| CliError::new(ErrorCode::Simulation, e.to_string()))?;
    let table = bench_table(&stats);
    if let Some(budget) = assert_budget_us {
        let mean = stats.mean_step.as_micros();
        if mean > u128::from(budget) {
            return Err(CliError::new(
                ErrorCode::Budget,
                format!("mean step {mean} us exceeds the {budget} us budget"),
            ));
        }
        return Ok(format!("{table}mean step within the {budget} us budget\n"));
    }
    Ok(table)
}

fn bench_table(s: &BenchStats) -> String {
    let us = |d: std::time::Duration| d.as_secs_f64() * 1e6;
    format!(
        "{:>8} {:>8} {:>14} {:>14} {:>14} {:>14}\n{:>8} {:>8} {:>14.1} {:>14.1} {:>14.1} {:>14.3}\n",
        "jobs",
        "trials",
        "mean_step_us",
        "p95_step_us",
        "max_step_us",
        "per_job_us",
        s.n_jobs,
        s.trials,
        us(s.mean_step),
        us(s.p95_step),
        us(s.max_step),
        us(s.mean_step) / s.n_jobs as f64,
    )
}

fn apply_overrides(mut scenario: Scenario, args: &RunArgs) -> Result<Scenario> {
    if let Some(mode) = args.mode {
        scenario.controller.mode = mode;
    }
    if let Some(ms) = args.interval_ms {
        scenario.controller.interval_ms = ms;
        scenario.interval_sweep_ms = None;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    scenario
        .validate()
        .map_err(|e| CliError::new(ErrorCode::Invalid, e.to_string()))?;
    Ok(scenario)
}

fn execute(
    scenario: Scenario,
    args: &RunArgs,
    auto_baseline: Option<ControlMode>,
) -> Result<String> {
    if args.parallel_osts == 0 {
        return Err(CliError::usage("--parallel-osts must be at least 1"));
    }
    let scenario = apply_overrides(scenario, args)?;
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| scenario.output.dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let json = args.json || scenario.output.json;
    let baseline = args
        .baseline
        .as_deref()
        .map(report::read_baseline)
        .transpose()?;
    report::ensure_dir(&out_dir)?;

    if let Some(sweep) = scenario.interval_sweep_ms.clone() {
        return run_sweep(&scenario, &sweep, &out_dir, json, args.parallel_osts);
    }

    let osts = args.parallel_osts;
    let instances: Vec<Scenario> = (0..osts)
        .map(|i| {
            let mut s = scenario.clone();
            s.seed = scenario.seed.wrapping_add(i as u64);
            s
        })
        .collect();
    let results = collect(run_parallel(&instances, osts))?;

    // The automatic baseline is the same instance set under another mode.
    let auto = match (auto_baseline, &baseline) {
        (Some(mode), None) if mode != scenario.controller.mode => {
            let base: Vec<Scenario> = instances.iter().map(|s| s.with_mode(mode)).collect();
            Some(collect(run_parallel(&base, osts))?)
        }
        _ => None,
    };

    let mut text = String::new();
    for (i, run) in results.iter().enumerate() {
        let dir = if osts == 1 {
            out_dir.clone()
        } else {
            out_dir.join(format!("ost{i}"))
        };
        report::ensure_dir(&dir)?;
        let base_table: Option<ThroughputTable> = match (&baseline, &auto) {
            (Some(b), _) => Some(b.clone()),
            (None, Some(runs)) => {
                let base_dir = dir.join(runs[i].mode.to_string());
                write_run(&runs[i], &base_dir, None, json)?;
                Some(runs[i].summary.throughputs())
            }
            (None, None) => None,
        };
        let comparison = base_table
            .map(|b| report::compare_with(run, &b))
            .transpose()?;
        write_run(run, &dir, comparison.as_ref(), json)?;
        if osts > 1 {
            text.push_str(&format!("ost{i}: "));
        }
        text.push_str(&report::render_table(run, comparison.as_ref()));
    }
    text.push_str(&format!("results written to {}\n", out_dir.display()));
    Ok(text)
}

fn run_sweep(
    scenario: &Scenario,
    sweep: &[u64],
    out_dir: &Path,
    json: bool,
    workers: usize,
) -> Result<String> {
    let points: Vec<Scenario> = sweep
        .iter()
        .map(|&ms| {
            let mut s = scenario.with_interval_ms(ms);
            s.interval_sweep_ms = None;
            s
        })
        .collect();
    let runs = collect(run_parallel(&points, workers))?;
    let mut text = String::from("interval_ms  aggregate_served  RPC/s\n");
    for run in &runs {
        let dir = out_dir.join(format!("interval_{}ms", run.interval_ms));
        write_run(run, &dir, None, json)?;
        text.push_str(&format!(
            "{:>11}  {:>16}  {:>8.1}\n",
            run.interval_ms, run.summary.total_served, run.summary.aggregate_throughput_rpc_s
        ));
    }
    report::write_file(
        &out_dir.join("frequency.csv"),
        &report::frequency_csv(&runs),
    )?;
    text.push_str(&format!("results written to {}\n", out_dir.display()));
    Ok(text)
}

fn write_run(
    run: &RunResult,
    dir: &Path,
    comparison: Option<&Comparison>,
    json: bool,
) -> Result<()> {
    report::ensure_dir(dir)?;
    report::write_file(&dir.join("timeline.csv"), &report::timeline_csv(run))?;
    report::write_file(
        &dir.join("summary.csv"),
        &report::summary_csv(run, comparison),
    )?;
    if json {
        report::write_file(
            &dir.join("summary.json"),
            &report::summary_json(run, comparison),
        )?;
    }
    Ok(())
}

fn collect(
    results: Vec<std::result::Result<RunResult, adaptbf_core::SimError>>,
) -> Result<Vec<RunResult>> {
    results
        .into_iter()
        .map(|r| r.map_err(CliError::from))
        .collect()
}
