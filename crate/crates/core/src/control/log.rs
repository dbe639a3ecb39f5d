//! Per-step simulation records, their CSV form, and run comparison metrics.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::fmt_sig6;

/// One simulation step. `cov` keeps the full filter covariance for
/// in-process consumers; the CSV carries only its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// Carrier position `(x, y, depth)` at time t.
    pub carrier: [f64; 3],
    /// Displacement applied at this step (zeros on the final record).
    pub action: [f64; 3],
    /// True per-target horizontal positions.
    pub targets_xy: Vec<[f64; 2]>,
    /// Filter mean (true state echoed back on known-target runs).
    pub est_mean: [f64; 4],
    pub cov_trace: f64,
    pub cov: Option<[f64; 16]>,
    pub bearing: f64,
    pub frequency: f64,
    /// Quantization cell used by the controller; -1 when no grid is active.
    pub nearest_index: i64,
    pub stage_cost: f64,
    /// Loss of target 1's emission at the carrier.
    pub c_w: f64,
    /// Loss of the carrier's emission at target 1 (NaN without an emitter).
    pub c_s: f64,
}

/// Full run record.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioLog {
    pub period1_end: usize,
    pub records: Vec<StepRecord>,
    /// Steps at which a fresh quantization/solve cycle started.
    pub subinterval_starts: Vec<usize>,
    /// Step at which the filter diverged and the run aborted, if any.
    pub diverged: Option<usize>,
}

impl ScenarioLog {
    /// Total cost accrued by the trajectory: stage costs of the states
    /// reached at t = 1..N (the initial state is nobody's decision).
    pub fn total_stage_cost(&self) -> f64 {
        self.records.iter().skip(1).map(|r| r.stage_cost).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let n_targets = self.records.first().map_or(1, |r| r.targets_xy.len());
        let mut header: Vec<String> = vec![
            "t".into(),
            "s_x".into(),
            "s_y".into(),
            "s_z".into(),
            "a_x".into(),
            "a_y".into(),
            "a_z".into(),
        ];
        for k in 1..=n_targets {
            header.push(format!("tgt{k}_x"));
            header.push(format!("tgt{k}_y"));
        }
        header.extend(
            [
                "wbar_x",
                "wbar_vx",
                "wbar_y",
                "wbar_vy",
                "cov_trace",
                "bearing",
                "frequency",
                "nearest_index",
                "stage_cost",
                "c_w",
                "c_s",
            ]
            .map(String::from),
        );
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let mut cells: Vec<String> = vec![r.t.to_string()];
            cells.extend(r.carrier.iter().map(|&v| fmt_sig6(v)));
            cells.extend(r.action.iter().map(|&v| fmt_sig6(v)));
            for xy in &r.targets_xy {
                cells.push(fmt_sig6(xy[0]));
                cells.push(fmt_sig6(xy[1]));
            }
            cells.extend(r.est_mean.iter().map(|&v| fmt_sig6(v)));
            cells.push(fmt_sig6(r.cov_trace));
            cells.push(fmt_sig6(r.bearing));
            cells.push(fmt_sig6(r.frequency));
            cells.push(r.nearest_index.to_string());
            cells.push(fmt_sig6(r.stage_cost));
            cells.push(fmt_sig6(r.c_w));
            cells.push(fmt_sig6(r.c_s));
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Parse a log CSV back into records. The period split is not encoded in
    /// the CSV, so the caller provides it (0 treats the whole run as one
    /// optimization period).
    pub fn read_csv<R: Read>(input: R, period1_end: usize) -> Result<ScenarioLog> {
        let mut lines = BufReader::new(input).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty log CSV".into()))?
            .map_err(Error::Io)?;
        let cols: Vec<&str> = header.split(',').collect();
        let n_targets = cols.iter().filter(|c| c.ends_with("_x") && c.starts_with("tgt")).count();
        let expected = 7 + 2 * n_targets + 11;
        if n_targets == 0 || cols.len() != expected {
            return Err(Error::Config(format!(
                "unrecognized log CSV header ({} columns)",
                cols.len()
            )));
        }
        let mut records = Vec::new();
        for line in lines {
            let line = line.map_err(Error::Io)?;
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != expected {
                return Err(Error::Config(format!(
                    "log CSV row has {} cells, expected {expected}",
                    cells.len()
                )));
            }
            let f = |i: usize| -> Result<f64> {
                cells[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad float in log CSV: {e}")))
            };
            let mut targets_xy = Vec::with_capacity(n_targets);
            for k in 0..n_targets {
                targets_xy.push([f(7 + 2 * k)?, f(8 + 2 * k)?]);
            }
            let base = 7 + 2 * n_targets;
            records.push(StepRecord {
                t: cells[0]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad step index: {e}")))?,
                carrier: [f(1)?, f(2)?, f(3)?],
                action: [f(4)?, f(5)?, f(6)?],
                targets_xy,
                est_mean: [f(base)?, f(base + 1)?, f(base + 2)?, f(base + 3)?],
                cov_trace: f(base + 4)?,
                bearing: f(base + 5)?,
                frequency: f(base + 6)?,
                nearest_index: cells[base + 7]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad cell index: {e}")))?,
                stage_cost: f(base + 8)?,
                c_w: f(base + 9)?,
                c_s: f(base + 10)?,
                cov: None,
            });
        }
        Ok(ScenarioLog {
            period1_end,
            records,
            subinterval_starts: Vec::new(),
            diverged: None,
        })
    }
}

/// Mean of the listed values, NaN-free inputs assumed; empty slices give NaN.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    sum / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodStats {
    pub steps: usize,
    pub mean_stage_cost: f64,
    pub mean_c_w: f64,
    pub mean_c_s: f64,
}

/// Aggregates of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub total_stage_cost: f64,
    pub mean_stage_cost: f64,
    pub mean_c_w: f64,
    pub mean_c_s: f64,
    /// RMS horizontal distance between the estimate and target 1's truth.
    pub filter_position_rmse: f64,
    pub period1: PeriodStats,
    pub period2: PeriodStats,
}

impl RunStats {
    pub fn from_log(log: &ScenarioLog) -> RunStats {
        let accrued: Vec<&StepRecord> = log.records.iter().skip(1).collect();
        let period = |pred: &dyn Fn(&&&StepRecord) -> bool| {
            let sel: Vec<&&StepRecord> = accrued.iter().filter(pred).collect();
            PeriodStats {
                steps: sel.len(),
                mean_stage_cost: mean(sel.iter().map(|r| r.stage_cost)),
                mean_c_w: mean(sel.iter().map(|r| r.c_w)),
                mean_c_s: mean(sel.iter().map(|r| r.c_s)),
            }
        };
        let split = log.period1_end;
        let sq_err = |r: &StepRecord| {
            let dx = r.est_mean[0] - r.targets_xy[0][0];
            let dy = r.est_mean[2] - r.targets_xy[0][1];
            dx * dx + dy * dy
        };
        RunStats {
            total_stage_cost: log.total_stage_cost(),
            mean_stage_cost: mean(accrued.iter().map(|r| r.stage_cost)),
            mean_c_w: mean(accrued.iter().map(|r| r.c_w)),
            mean_c_s: mean(accrued.iter().map(|r| r.c_s)),
            filter_position_rmse: mean(log.records.iter().map(sq_err)).sqrt(),
            period1: period(&|r| r.t < split),
            period2: period(&|r| r.t >= split),
        }
    }
}

/// Side-by-side comparison of two runs over the same horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub a: RunStats,
    pub b: RunStats,
    /// b minus a, period-2 means.
    pub delta_period2_stage_cost: f64,
    pub delta_period2_c_w: f64,
    pub delta_period2_c_s: f64,
    pub delta_filter_rmse: f64,
    /// b / a total accrued cost.
    pub total_cost_ratio: f64,
}

pub fn compare_runs(a: &ScenarioLog, b: &ScenarioLog) -> Result<CompareSummary> {
    if a.records.len() != b.records.len() {
        return Err(Error::Config(format!(
            "cannot compare runs of different lengths ({} vs {})",
            a.records.len(),
            b.records.len()
        )));
    }
    let sa = RunStats::from_log(a);
    let sb = RunStats::from_log(b);
    Ok(CompareSummary {
        delta_period2_stage_cost: sb.period2.mean_stage_cost - sa.period2.mean_stage_cost,
        delta_period2_c_w: sb.period2.mean_c_w - sa.period2.mean_c_w,
        delta_period2_c_s: sb.period2.mean_c_s - sa.period2.mean_c_s,
        delta_filter_rmse: sb.filter_position_rmse - sa.filter_position_rmse,
        total_cost_ratio: sb.total_stage_cost / sa.total_stage_cost,
        a: sa,
        b: sb,
    })
}
