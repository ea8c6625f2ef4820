//! CSV and JSON renderings of simulation results.
//!
//! `timeline.csv`: one row per metrics frame and job, with columns
//! `time_ms,job_id,served_rpcs,granted_tokens,record,demand,queue_depth`.
//! Empty cells mean "no rule" (granted) or "not tracked" (record).
//!
//! `summary.csv`: one row per job plus a final `*` row for the aggregate.

use std::collections::BTreeMap;
use std::path::Path;

use adaptbf_core::sim::{compare, Comparison, RunResult, ThroughputTable};
use adaptbf_core::JobId;
use serde::Serialize;

use crate::error::{CliError, ErrorCode, Result};

pub const AGGREGATE_ROW: &str = "*";

pub const TIMELINE_HEADER: [&str; 7] = [
    "time_ms",
    "job_id",
    "served_rpcs",
    "granted_tokens",
    "record",
    "demand",
    "queue_depth",
];

pub const SUMMARY_HEADER: [&str; 11] = [
    "job_id",
    "nodes",
    "priority",
    "arrivals",
    "served",
    "queued_at_end",
    "completion_ms",
    "throughput_rpc_s",
    "baseline_rpc_s",
    "delta_rpc_s",
    "delta_pct",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn timeline_csv(run: &RunResult) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TIMELINE_HEADER).expect("in-memory write");
    for frame in &run.frames {
        let time = frame.time_ms().to_string();
        for (job, f) in &frame.jobs {
            w.write_record([
                time.clone(),
                job.to_string(),
                f.served.to_string(),
                opt(f.granted),
                opt(f.record),
                f.demand.to_string(),
                f.queue_depth.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

pub fn summary_csv(run: &RunResult, comparison: Option<&Comparison>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    let delta_cells = |d: Option<&adaptbf_core::sim::Delta>| -> [String; 3] {
        match d {
            Some(d) => [
                format!("{:.4}", d.baseline),
                format!("{:.4}", d.absolute),
                d.relative
                    .map(|r| format!("{:.2}", r * 100.0))
                    .unwrap_or_default(),
            ],
            None => Default::default(),
        }
    };
    for (id, j) in &run.summary.jobs {
        let [base, delta, pct] = delta_cells(comparison.map(|c| &c.jobs[id]));
        w.write_record([
            id.to_string(),
            j.nodes.to_string(),
            format!("{:.4}", j.priority),
            j.arrivals.to_string(),
            j.served.to_string(),
            j.queued_at_end.to_string(),
            opt(j.completion.map(|c| c.as_millis())),
            format!("{:.4}", j.throughput_rpc_s),
            base,
            delta,
            pct,
        ])
        .expect("in-memory write");
    }
    let s = &run.summary;
    let [base, delta, pct] = delta_cells(comparison.map(|c| &c.aggregate));
    let nodes: u64 = s.jobs.values().map(|j| j.nodes).sum();
    w.write_record([
        AGGREGATE_ROW.to_owned(),
        nodes.to_string(),
        if s.jobs.is_empty() {
            String::new()
        } else {
            "1.0000".to_owned()
        },
        s.total_arrivals.to_string(),
        s.total_served.to_string(),
        s.jobs
            .values()
            .map(|j| j.queued_at_end)
            .sum::<u64>()
            .to_string(),
        String::new(),
        format!("{:.4}", s.aggregate_throughput_rpc_s),
        base,
        delta,
        pct,
    ])
    .expect("in-memory write");
    w.into_inner().expect("in-memory flush")
}

/// Reads the throughput column of a previously written `summary.csv`.
pub fn read_baseline(path: &Path) -> Result<ThroughputTable> {
    let bad =
        |msg: String| CliError::new(ErrorCode::Baseline, format!("{}: {msg}", path.display()));
    let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(data.as_slice());
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (id_col, tp_col) = (col("job_id")?, col("throughput_rpc_s")?);
    let mut per_job = BTreeMap::new();
    let mut aggregate = None;
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let id = row.get(id_col).unwrap_or_default();
        let value: f64 = row
            .get(tp_col)
            .unwrap_or_default()
            .parse()
            .map_err(|_| bad(format!("row {}: throughput is not a number", i + 2)))?;
        if id == AGGREGATE_ROW {
            aggregate = Some(value);
        } else {
            per_job.insert(JobId::from(id), value);
        }
    }
    let aggregate = aggregate.unwrap_or_else(|| per_job.values().sum());
    Ok(ThroughputTable { per_job, aggregate })
}

pub fn compare_with(run: &RunResult, baseline: &ThroughputTable) -> Result<Comparison> {
    Ok(compare(&run.summary.throughputs(), baseline)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct JsonSummary<'a> {
    pub scenario: &'a str,
    pub mode: String,
    pub interval_ms: u64,
    pub summary: &'a adaptbf_core::sim::RunSummary,
    pub allocation_steps: usize,
    pub evictions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<&'a Comparison>,
}

pub fn summary_json(run: &RunResult, comparison: Option<&Comparison>) -> Vec<u8> {
    let doc = JsonSummary {
        scenario: &run.name,
        mode: run.mode.to_string(),
        interval_ms: run.interval_ms,
        summary: &run.summary,
        allocation_steps: run.steps.len(),
        evictions: run.evictions.len(),
        comparison,
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("summary serializes");
    out.push(b'\n');
    out
}

/// `interval_ms,aggregate_served,aggregate_throughput_rpc_s` per sweep point.
pub fn frequency_csv(runs: &[RunResult]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "interval_ms",
        "aggregate_served",
        "aggregate_throughput_rpc_s",
    ])
    .expect("in-memory write");
    for run in runs {
        w.write_record([
            run.interval_ms.to_string(),
            run.summary.total_served.to_string(),
            format!("{:.4}", run.summary.aggregate_throughput_rpc_s),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// Human-readable per-job table for the terminal.
pub fn render_table(run: &RunResult, comparison: Option<&Comparison>) -> String {
    let mut out = format!(
        "{} [{} / {} ms]: {} served of {} arrivals, {:.1} RPC/s\n",
        if run.name.is_empty() {
            "scenario"
        } else {
            &run.name
        },
        run.mode,
        run.interval_ms,
        run.summary.total_served,
        run.summary.total_arrivals,
        run.summary.aggregate_throughput_rpc_s,
    );
    out.push_str(&format!(
        "{:<12} {:>6} {:>10} {:>10} {:>12} {:>10}\n",
        "job", "prio", "served", "queued", "RPC/s", "vs base"
    ));
    for (id, j) in &run.summary.jobs {
        let delta = comparison
            .and_then(|c| c.jobs[id].relative)
            .map(|r| format!("{:+.1}%", r * 100.0))
            .unwrap_or_else(|| "-".to_owned());
        out.push_str(&format!(
            "{:<12} {:>6.3} {:>10} {:>10} {:>12.1} {:>10}\n",
            id.as_str(),
            j.priority,
            j.served,
            j.queued_at_end,
            j.throughput_rpc_s,
            delta
        ));
    }
    out
}
