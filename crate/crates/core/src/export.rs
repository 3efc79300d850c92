//! CSV and JSON output.
//!
//! Column orders:
//!
//! | file | columns |
//! |------|---------|
//! | rates | `user, channel, power_W, rate_bps_hz` |
//! | user summary | `user, total_rate_bps_hz, min_rate_bps_hz, feasible` |
//! | trace | `iteration, aggregate_power_W, max_power_delta_W` |
//! | finals | `method, grid_step_W, user, channel, power_W, rate_bps_hz` |
//! | sweep | `method, scheme, sweep_value, snapshot, aggregate_power_W, iterations, feasible` |
//! | comparison | `snapshot, noma_aggregate_power_W, ofdma_aggregate_power_W` |
//!
//! `grid_step_W` is empty for methods that do not search a grid, and
//! `sweep_value` is empty when nothing is swept.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::{SchemeComparison, SweepCell, SweepResult, SweepVariable};
use crate::interference::{PowerMatrix, RateReport};
use crate::jprc::RunResult;
use crate::model::{Allocation, Scenario, Scheme};

#[derive(Serialize)]
struct RateRow {
    user: usize,
    channel: usize,
    #[serde(rename = "power_W")]
    power: f64,
    rate_bps_hz: f64,
}

#[derive(Serialize)]
struct UserRow {
    user: usize,
    total_rate_bps_hz: f64,
    min_rate_bps_hz: f64,
    feasible: bool,
}

/// One row per assigned `(user, channel)`.
pub fn write_rates_csv<W: Write>(writer: W, allocation: &Allocation, powers: &PowerMatrix, report: &RateReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for user in 0..allocation.num_users() {
        for &channel in allocation.channels(user) {
            w.serialize(RateRow {
                user,
                channel,
                power: powers.get(user, channel),
                rate_bps_hz: report.per_channel_rate[user][channel],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_user_summary_csv<W: Write>(writer: W, scenario: &Scenario, report: &RateReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for user in 0..report.total_rate.len() {
        w.serialize(UserRow {
            user,
            total_rate_bps_hz: report.total_rate[user],
            min_rate_bps_hz: scenario.min_rate(user),
            feasible: report.per_user_feasible[user],
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    #[serde(rename = "aggregate_power_W")]
    aggregate_power: f64,
    #[serde(rename = "max_power_delta_W")]
    max_delta: f64,
}

/// Iterations count from 1.
pub fn write_trace_csv<W: Write>(writer: W, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (n, (&aggregate_power, &max_delta)) in result.power_trace.iter().zip(&result.delta_trace).enumerate() {
        w.serialize(TraceRow { iteration: n + 1, aggregate_power, max_delta })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FinalRow<'a> {
    method: &'a str,
    #[serde(rename = "grid_step_W")]
    grid_step: Option<f64>,
    user: usize,
    channel: usize,
    #[serde(rename = "power_W")]
    power: f64,
    rate_bps_hz: f64,
}

pub fn write_finals_csv<W: Write>(
    writer: W,
    method: &str,
    grid_step: Option<f64>,
    allocation: &Allocation,
    result: &RunResult,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for user in 0..allocation.num_users() {
        for &channel in allocation.channels(user) {
            w.serialize(FinalRow {
                method,
                grid_step,
                user,
                channel,
                power: result.final_powers.get(user, channel),
                rate_bps_hz: result.rate_report.per_channel_rate[user][channel],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// JSON summary of one run of any method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub scheme: Scheme,
    #[serde(rename = "grid_step_W")]
    pub grid_step: Option<f64>,
    pub seed: u64,
    pub scenario_fingerprint: u64,
    pub iterations_used: usize,
    pub converged: bool,
    #[serde(rename = "aggregate_power_W")]
    pub aggregate_power: f64,
    pub feasible_fraction: f64,
    pub user_rate_bps_hz: Vec<f64>,
    pub user_feasible: Vec<bool>,
}

impl RunSummary {
    pub fn new(method: &str, scheme: Scheme, grid_step: Option<f64>, scenario: &Scenario, result: &RunResult) -> Self {
        let users = result.per_user_feasible.len().max(1);
        Self {
            method: method.to_string(),
            scheme,
            grid_step,
            seed: scenario.seed(),
            scenario_fingerprint: scenario.fingerprint(),
            iterations_used: result.iterations_used,
            converged: result.converged,
            aggregate_power: result.aggregate_power(),
            feasible_fraction: result.per_user_feasible.iter().filter(|&&f| f).count() as f64 / users as f64,
            user_rate_bps_hz: result.rate_report.total_rate.clone(),
            user_feasible: result.per_user_feasible.clone(),
        }
    }
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(mut writer: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct SweepCsvRow {
    method: &'static str,
    scheme: &'static str,
    sweep_value: Option<f64>,
    snapshot: usize,
    #[serde(rename = "aggregate_power_W")]
    aggregate_power: f64,
    iterations: usize,
    feasible: bool,
}

pub fn write_sweep_csv<W: Write>(writer: W, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in &result.rows {
        w.serialize(SweepCsvRow {
            method: r.method.as_str(),
            scheme: r.scheme.as_str(),
            sweep_value: r.sweep_value,
            snapshot: r.snapshot,
            aggregate_power: r.aggregate_power_w,
            iterations: r.iterations,
            feasible: r.feasible,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PairRow {
    snapshot: usize,
    #[serde(rename = "noma_aggregate_power_W")]
    noma: f64,
    #[serde(rename = "ofdma_aggregate_power_W")]
    ofdma: f64,
}

pub fn write_comparison_csv<W: Write>(writer: W, comparison: &SchemeComparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for &(snapshot, noma, ofdma) in &comparison.pairs {
        w.serialize(PairRow { snapshot, noma, ofdma })?;
    }
    w.flush()?;
    Ok(())
}

/// Per-cell statistics written next to a sweep CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub figure: Option<u32>,
    pub sweep_variable: SweepVariable,
    pub num_snapshots: usize,
    pub base_seed: u64,
    pub exclude_infeasible: bool,
    pub cells: Vec<SweepCell>,
}

/// `fig<N>_<timestamp>.csv`, or `sweep_<timestamp>.csv` without a figure number.
pub fn sweep_file_name(figure: Option<u32>, timestamp: &str, extension: &str) -> String {
    match figure {
        Some(n) => format!("fig{n}_{timestamp}.{extension}"),
        None => format!("sweep_{timestamp}.{extension}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_sweep, ExperimentConfig};
    use crate::jprc::{run, JprcParams};
    use crate::model::{allocate_subchannels, generate_scenario, ScenarioConfig};

    fn small() -> (Scenario, Allocation, RunResult) {
        let cfg = ScenarioConfig { num_subchannels: 4, ..Default::default() };
        let s = generate_scenario(&cfg, 5).unwrap();
        let a = allocate_subchannels(&s, Scheme::Ofdma).unwrap();
        let r = run(&s, &a, &JprcParams::default()).unwrap();
        (s, a, r)
    }

    fn text(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn csv_headers_and_row_counts() {
        let (s, a, r) = small();
        let rates = text(|b| write_rates_csv(b, &a, &r.final_powers, &r.rate_report));
        assert!(rates.starts_with("user,channel,power_W,rate_bps_hz\n"));
        assert_eq!(rates.lines().count(), 1 + a.num_assigned());

        let users = text(|b| write_user_summary_csv(b, &s, &r.rate_report));
        assert!(users.starts_with("user,total_rate_bps_hz,min_rate_bps_hz,feasible\n"));
        assert_eq!(users.lines().count(), 1 + s.num_users());

        let trace = text(|b| write_trace_csv(b, &r));
        assert!(trace.starts_with("iteration,aggregate_power_W,max_power_delta_W\n1,"));
        assert_eq!(trace.lines().count(), 1 + r.iterations_used);

        let finals = text(|b| write_finals_csv(b, "exhaustive", Some(1e-9), &a, &r));
        assert!(finals.starts_with("method,grid_step_W,user,channel,power_W,rate_bps_hz\nexhaustive,1e-9,0,"));
        let finals = text(|b| write_finals_csv(b, "jprc", None, &a, &r));
        assert!(finals.lines().nth(1).unwrap().starts_with("jprc,,0,"));
    }

    #[test]
    fn floats_round_trip_through_csv() {
        let (_, a, r) = small();
        let finals = text(|b| write_finals_csv(b, "jprc", None, &a, &r));
        let mut rd = csv::Reader::from_reader(finals.as_bytes());
        for rec in rd.records() {
            let rec = rec.unwrap();
            let (i, k): (usize, usize) = (rec[2].parse().unwrap(), rec[3].parse().unwrap());
            assert_eq!(rec[4].parse::<f64>().unwrap(), r.final_powers.get(i, k));
        }
    }

    #[test]
    fn sweep_csv() {
        let cfg = ExperimentConfig {
            num_snapshots: 2,
            ..ExperimentConfig::new(ScenarioConfig { num_subchannels: 4, ..Default::default() })
        };
        let res = run_sweep(&cfg).unwrap();
        let out = text(|b| write_sweep_csv(b, &res));
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), "method,scheme,sweep_value,snapshot,aggregate_power_W,iterations,feasible");
        assert!(lines.next().unwrap().starts_with("jprc,NOMA,,0,"));
        assert_eq!(out.lines().count(), 5);
    }

    #[test]
    fn run_summary_json() {
        let (s, _, r) = small();
        let sum = RunSummary::new("jprc", Scheme::Ofdma, None, &s, &r);
        let json = text(|b| write_json(b, &sum));
        assert!(json.contains("\"aggregate_power_W\""));
        let back: RunSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sum);
    }

    #[test]
    fn file_names() {
        assert_eq!(sweep_file_name(Some(2), "20240101T000000", "csv"), "fig2_20240101T000000.csv");
        assert_eq!(sweep_file_name(None, "t", "json"), "sweep_t.json");
    }
}
