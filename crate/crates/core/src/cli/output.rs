//! Result files: metrics CSV, event and violation JSON lines, run summaries
//! and sweep aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Serialize;

use crate::diagnostics::MetricsRecord;
use crate::engine::{RunResult, TruncationKind};
use crate::linalg::distance;
use crate::problems::Problem;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_header(l: usize) -> String {
    let mut h = String::from("k,algo,disagreement,root_distance,sigma_max,sigma_min,trunc_events_cum,lyapunov,consensus_error");
    for d in 0..l {
        let _ = write!(h, ",avg_x_{d}");
    }
    h
}

pub fn csv_row(m: &MetricsRecord) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{},{},{}",
        m.k,
        m.algo.as_str(),
        fmt_f64(m.disagreement),
        m.root_distance.value().map(fmt_f64).unwrap_or_default(),
        m.sigma_max,
        m.sigma_min,
        m.trunc_events_cum,
        m.lyapunov.map(fmt_f64).unwrap_or_default(),
        m.consensus_error.map(fmt_f64).unwrap_or_default(),
    );
    for v in &m.avg_estimate {
        row.push(',');
        row.push_str(&fmt_f64(*v));
    }
    row
}

/// Writes the metrics of one or more runs. Rows are ordered by step, then by
/// the order of `runs`; an overflowed run ends with a `# overflow` marker.
pub fn write_metrics_csv(out: &mut impl Write, l: usize, runs: &[&RunResult]) -> io::Result<()> {
    writeln!(out, "{}", csv_header(l))?;
    let mut rows: Vec<(u64, usize, &MetricsRecord)> =
        runs.iter().enumerate().flat_map(|(r, run)| run.metrics.iter().map(move |m| (m.k, r, m))).collect();
    rows.sort_by_key(|&(k, r, _)| (k, r));
    for (_, _, m) in rows {
        writeln!(out, "{}", csv_row(m))?;
    }
    for run in runs {
        if let Some(k) = run.overflow {
            writeln!(out, "# overflow algo={} k={k}", run.algo.as_str())?;
        }
    }
    Ok(())
}

pub fn write_jsonl<T: Serialize>(out: &mut impl Write, items: impl IntoIterator<Item = T>) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, &item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    /// `pass`, `fail` or `skipped`.
    pub status: &'static str,
    pub violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckOutcome {
    pub fn skipped(note: impl Into<String>) -> Self {
        Self { status: "skipped", violations: 0, value: None, note: note.into() }
    }

    pub fn from_count(violations: usize) -> Self {
        Self { status: if violations == 0 { "pass" } else { "fail" }, violations, value: None, note: String::new() }
    }

    pub fn failed(&self) -> bool {
        self.status == "fail"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub algo: &'static str,
    pub seed: u64,
    pub agents: usize,
    pub dim: usize,
    pub horizon: u64,
    pub steps_completed: u64,
    pub final_root_distance: Option<f64>,
    pub root_distance_kind: &'static str,
    pub final_disagreement: f64,
    pub final_consensus_error: Option<f64>,
    /// `max_i ‖x_{i,K} − target‖` when the problem has a target.
    pub max_agent_target_distance: Option<f64>,
    pub sigma_final: u64,
    pub cessation_step: Option<u64>,
    pub still_truncating: bool,
    pub own_overflows: usize,
    pub peer_lags: usize,
    pub overflow_step: Option<u64>,
    pub wall_time_s: f64,
    pub checks: BTreeMap<String, CheckOutcome>,
}

impl RunSummary {
    pub fn new(name: &str, seed: u64, dim: usize, result: &RunResult, problem: &dyn Problem, wall_time_s: f64) -> Self {
        let last = result.metrics.last();
        let max_agent_target_distance = problem.target().map(|t| {
            let avg = crate::linalg::stacked_mean(&result.final_state.stacked(), dim);
            let target = t.aligned(&avg);
            result.final_state.agents.iter().map(|a| distance(&a.x, &target)).fold(0.0, f64::max)
        });
        let cessation = crate::diagnostics::detect_truncation_cessation(&crate::diagnostics::TruncationTrace::from_events(
            result.n,
            result.final_state.k,
            &result.events,
        ));
        Self {
            name: name.to_string(),
            algo: result.algo.as_str(),
            seed,
            agents: result.n,
            dim,
            horizon: result.horizon,
            steps_completed: result.final_state.k,
            final_root_distance: last.and_then(|m| m.root_distance.value()),
            root_distance_kind: last.map_or("unknown", |m| m.root_distance.kind()),
            final_disagreement: last.map_or(f64::NAN, |m| m.disagreement),
            final_consensus_error: last.and_then(|m| m.consensus_error),
            max_agent_target_distance,
            sigma_final: result.final_state.sigma_max(),
            cessation_step: cessation.last_event,
            still_truncating: cessation.still_truncating,
            own_overflows: result.own_overflows(),
            peer_lags: result.events.iter().filter(|e| e.kind == TruncationKind::PeerLag).count(),
            overflow_step: result.overflow,
            wall_time_s,
            checks: BTreeMap::new(),
        }
    }
}

/// Min, quartiles and max.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation quantiles of the finite values; `None` if there are none.
pub fn quantiles(values: impl IntoIterator<Item = f64>) -> Option<Quantiles> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(Quantiles { min: v[0], q25: at(0.25), median: at(0.5), q75: at(0.75), max: v[v.len() - 1] })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepAggregate {
    pub runs: usize,
    pub overflowed: usize,
    pub still_truncating: usize,
    pub final_root_distance: Option<Quantiles>,
    pub final_disagreement: Option<Quantiles>,
    pub final_consensus_error: Option<Quantiles>,
    pub max_agent_target_distance: Option<Quantiles>,
    pub sigma_final: Option<Quantiles>,
}

pub fn aggregate(summaries: &[RunSummary]) -> SweepAggregate {
    SweepAggregate {
        runs: summaries.len(),
        overflowed: summaries.iter().filter(|s| s.overflow_step.is_some()).count(),
        still_truncating: summaries.iter().filter(|s| s.still_truncating).count(),
        final_root_distance: quantiles(summaries.iter().filter_map(|s| s.final_root_distance)),
        final_disagreement: quantiles(summaries.iter().map(|s| s.final_disagreement)),
        final_consensus_error: quantiles(summaries.iter().filter_map(|s| s.final_consensus_error)),
        max_agent_target_distance: quantiles(summaries.iter().filter_map(|s| s.max_agent_target_distance)),
        sigma_final: quantiles(summaries.iter().map(|s| s.sigma_final as f64)),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One row per seed, sorted by seed.
pub fn write_sweep_csv(out: &mut impl Write, summaries: &[RunSummary]) -> io::Result<()> {
    writeln!(
        out,
        "seed,algo,steps_completed,final_root_distance,final_disagreement,final_consensus_error,max_agent_target_distance,sigma_final,cessation_step,still_truncating,overflow_step"
    )?;
    let mut sorted: Vec<&RunSummary> = summaries.iter().collect();
    sorted.sort_by_key(|s| (s.seed, s.algo));
    for s in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.seed,
            s.algo,
            s.steps_completed,
            opt(s.final_root_distance),
            fmt_f64(s.final_disagreement),
            opt(s.final_consensus_error),
            opt(s.max_agent_target_distance),
            s.sigma_final,
            s.cessation_step.map(|k| k.to_string()).unwrap_or_default(),
            s.still_truncating,
            s.overflow_step.map(|k| k.to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn header_columns() {
        assert_eq!(
            csv_header(2),
            "k,algo,disagreement,root_distance,sigma_max,sigma_min,trunc_events_cum,lyapunov,consensus_error,avg_x_0,avg_x_1"
        );
    }

    #[test]
    fn quantile_examples() {
        let q = quantiles([3.0, 1.0, 2.0, 4.0, 5.0]).unwrap();
        assert_eq!((q.min, q.q25, q.median, q.q75, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        let q = quantiles([1.0, 2.0]).unwrap();
        assert_eq!(q.median, 1.5);
        assert!(quantiles([f64::NAN]).is_none());
    }
}
