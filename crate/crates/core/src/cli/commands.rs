//! The `run`, `validate`, `compare` and `sweep` subcommands.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use super::output::{aggregate, write_jsonl, write_metrics_csv, write_sweep_csv, CheckOutcome, RunSummary};
use super::scenario::{parse_scenario, AlgorithmKind, Built, Check, Scenario};
use crate::baseline::{compare, run_baseline};
use crate::diagnostics::{
    build_auxiliary_sequences, check_lemma41, check_lemma42, detect_truncation_cessation, noise_partial_sum_diag,
    TruncationTrace,
};
use crate::engine::{run, NetworkState, RunOptions, RunResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_OVERFLOW: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommandOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub full_trace: bool,
    pub strict_checks: bool,
}

/// Results of one scenario execution.
pub struct Execution {
    pub results: Vec<RunResult>,
    pub summaries: Vec<RunSummary>,
    pub violations: Vec<serde_json::Value>,
}

impl Execution {
    pub fn overflowed(&self) -> bool {
        self.results.iter().any(|r| r.overflow.is_some())
    }

    pub fn checks_failed(&self) -> bool {
        self.summaries.iter().any(|s| s.checks.values().any(CheckOutcome::failed))
    }

    fn exit_code(&self, strict: bool) -> i32 {
        if strict && self.checks_failed() {
            EXIT_VIOLATIONS
        } else if self.overflowed() {
            EXIT_OVERFLOW
        } else {
            EXIT_OK
        }
    }
}

fn load(path: &Path, opts: &CommandOptions, log: &mut dyn Write) -> io::Result<Option<Scenario>> {
    match parse_scenario(path) {
        Ok(mut s) => {
            if let Some(seed) = opts.seed {
                s.seed = seed;
            }
            s.full_trace |= opts.full_trace;
            Ok(Some(s))
        }
        Err(errors) => {
            report_errors(&errors, log)?;
            Ok(None)
        }
    }
}

fn report_errors(errors: &[String], log: &mut dyn Write) -> io::Result<()> {
    writeln!(log, "invalid scenario:")?;
    for e in errors {
        writeln!(log, "  - {e}")?;
    }
    Ok(())
}

fn run_checks(scenario: &Scenario, built: &Built, result: &RunResult, summary: &mut RunSummary, violations: &mut Vec<serde_json::Value>) {
    let steps = result.final_state.k;
    let trace = TruncationTrace::from_events(result.n, steps, &result.events);
    for check in &scenario.checks {
        let outcome = match check {
            Check::Lemma41 => match &result.trace {
                None => CheckOutcome::skipped("needs --full-trace"),
                Some(traj) => match build_auxiliary_sequences(traj, &trace, built.problem.as_ref(), &built.config.x_star)
                    .and_then(|aux| {
                        check_lemma41(&aux, &built.schedule, &built.config.gamma, &built.config.bounds, built.problem.as_ref(), &built.config.x_star)
                    }) {
                    Ok(v) => {
                        violations.extend(v.iter().map(|x| json!({ "check": "lemma41", "seed": scenario.seed, "violation": x })));
                        CheckOutcome::from_count(v.len())
                    }
                    Err(e) => CheckOutcome::skipped(e.to_string()),
                },
            },
            Check::Lemma42 => {
                let g = built.schedule.persistent_edges(scenario.horizon);
                match check_lemma42(&trace, &g, built.schedule.b_window()) {
                    Ok(v) => {
                        violations.extend(v.iter().map(|x| json!({ "check": "lemma42", "seed": scenario.seed, "violation": x })));
                        CheckOutcome::from_count(v.len())
                    }
                    Err(e) => CheckOutcome::skipped(e.to_string()),
                }
            }
            Check::NoisePartialSums => match &result.trace {
                None => CheckOutcome::skipped("needs --full-trace"),
                Some(traj) => match noise_partial_sum_diag(traj, built.problem.as_ref(), &built.config.gamma, scenario.noise_k_bound) {
                    Ok(d) => CheckOutcome { status: "pass", violations: 0, value: Some(d.max_tail()), note: "tail fluctuation".into() },
                    Err(e) => CheckOutcome::skipped(e.to_string()),
                },
            },
            Check::Cessation => {
                let c = detect_truncation_cessation(&trace);
                let failed = c.still_truncating || !c.agreed;
                if failed {
                    violations.push(json!({ "check": "cessation", "seed": scenario.seed, "violation": c }));
                }
                CheckOutcome {
                    status: if failed { "fail" } else { "pass" },
                    violations: usize::from(failed),
                    value: c.last_event.map(|k| k as f64),
                    note: "last counter change".into(),
                }
            }
        };
        summary.checks.insert(format!("{check:?}").to_lowercase(), outcome);
    }
}

/// Builds and runs a parsed scenario.
pub fn execute(scenario: &Scenario) -> Result<Execution, Vec<String>> {
    let built = scenario.build()?;
    let options = RunOptions { record_every: scenario.record_every, full_trace: scenario.full_trace };
    let problem = built.problem.as_ref();
    let start = Instant::now();
    let results = match scenario.algorithm {
        AlgorithmKind::Dsaawet => vec![run(problem, &built.schedule, &built.config, NetworkState::from_points(built.init.clone()), &options)],
        AlgorithmKind::Baseline => vec![run_baseline(problem, &built.schedule, &built.config, &built.init, &options)],
        AlgorithmKind::Compare => match compare(problem, &built.schedule, &built.config, &built.init, &options) {
            Ok((a, b)) => vec![Ok(a), Ok(b)],
            Err(e) => vec![Err(e)],
        },
    };
    let wall = start.elapsed().as_secs_f64();
    let results: Vec<RunResult> = results.into_iter().collect::<Result<_, _>>().map_err(|e| vec![e.to_string()])?;
    let mut violations = Vec::new();
    let summaries = results
        .iter()
        .map(|r| {
            let mut s = RunSummary::new(&scenario.name, scenario.seed, scenario.dim, r, problem, wall);
            if r.algo == crate::engine::Algo::Dsaawet {
                run_checks(scenario, &built, r, &mut s, &mut violations);
            }
            s
        })
        .collect();
    Ok(Execution { results, summaries, violations })
}

fn create(dir: &Path, name: &str) -> io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_execution(dir: &Path, scenario: &Scenario, exec: &Execution) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let runs: Vec<&RunResult> = exec.results.iter().collect();
    let mut f = create(dir, "metrics.csv")?;
    write_metrics_csv(&mut f, scenario.dim, &runs)?;
    f.flush()?;
    let mut f = create(dir, "events.jsonl")?;
    for r in &exec.results {
        write_jsonl(&mut f, r.events.iter().map(|e| json!({ "algo": r.algo, "event": e })))?;
    }
    f.flush()?;
    let mut f = create(dir, "violations.jsonl")?;
    write_jsonl(&mut f, &exec.violations)?;
    f.flush()?;
    let summary = if exec.summaries.len() == 1 {
        serde_json::to_value(&exec.summaries[0])?
    } else {
        serde_json::to_value(&exec.summaries)?
    };
    let mut f = create(dir, "summary.json")?;
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    f.flush()
}

fn print_summary(exec: &Execution, log: &mut dyn Write) -> io::Result<()> {
    for s in &exec.summaries {
        write!(log, "{}: {} steps", s.algo, s.steps_completed)?;
        if let Some(d) = s.final_root_distance {
            write!(log, ", root distance {d:.3e} ({})", s.root_distance_kind)?;
        }
        write!(log, ", disagreement {:.3e}, sigma {}", s.final_disagreement, s.sigma_final)?;
        if let Some(k) = s.overflow_step {
            write!(log, ", overflow at k={k}")?;
        }
        writeln!(log)?;
        for (name, c) in &s.checks {
            writeln!(log, "  check {name}: {} ({} violations)", c.status, c.violations)?;
        }
    }
    Ok(())
}

fn run_like(path: &Path, opts: &CommandOptions, algorithm: Option<AlgorithmKind>, log: &mut dyn Write) -> io::Result<i32> {
    let Some(mut scenario) = load(path, opts, log)? else {
        return Ok(EXIT_INVALID);
    };
    if let Some(a) = algorithm {
        scenario.algorithm = a;
    }
    let exec = match execute(&scenario) {
        Ok(e) => e,
        Err(errors) => {
            report_errors(&errors, log)?;
            return Ok(EXIT_INVALID);
        }
    };
    write_execution(&opts.out, &scenario, &exec)?;
    print_summary(&exec, log)?;
    writeln!(log, "wrote {}", opts.out.display())?;
    Ok(exec.exit_code(opts.strict_checks))
}

/// Runs the scenario with the algorithm it names.
pub fn cmd_run(path: &Path, opts: &CommandOptions, log: &mut dyn Write) -> io::Result<i32> {
    run_like(path, opts, None, log)
}

/// Runs both algorithms on shared noise streams.
pub fn cmd_compare(path: &Path, opts: &CommandOptions, log: &mut dyn Write) -> io::Result<i32> {
    run_like(path, opts, Some(AlgorithmKind::Compare), log)
}

/// Checks the scenario and its topology without running it.
pub fn cmd_validate(path: &Path, opts: &CommandOptions, log: &mut dyn Write) -> io::Result<i32> {
    let Some(scenario) = load(path, opts, log)? else {
        return Ok(EXIT_INVALID);
    };
    let permissive = Scenario { allow_unverified_topology: true, ..scenario.clone() };
    let built = match permissive.build() {
        Ok(b) => b,
        Err(errors) => {
            report_errors(&errors, log)?;
            return Ok(EXIT_INVALID);
        }
    };
    let a4 = &built.a4;
    writeln!(log, "scenario {}: {} agents, l = {}, horizon {}", scenario.name, scenario.agents, scenario.dim, scenario.horizon)?;
    writeln!(log, "  ‖x*‖ = {:.6}, M_0 = {}", crate::linalg::norm(&built.config.x_star), built.config.bounds.at(0))?;
    writeln!(
        log,
        "  topology: eta = {}, B = {}, period = {}{}",
        built.schedule.eta(),
        built.schedule.b_window(),
        built.schedule.period().map_or("none".to_string(), |p| p.to_string()),
        if a4.empirical { format!(" (empirical up to k = {})", a4.horizon) } else { String::new() }
    )?;
    writeln!(log, "  doubly stochastic:   {}", a4.doubly_stochastic)?;
    writeln!(log, "  eta bound:           {}", a4.eta_bound)?;
    writeln!(log, "  strongly connected:  {}", a4.strongly_connected)?;
    writeln!(log, "  bounded recurrence:  {}", a4.bounded_recurrence)?;
    for issue in &a4.issues {
        writeln!(log, "  - {issue}")?;
    }
    if a4.passed() {
        writeln!(log, "valid")?;
        Ok(EXIT_OK)
    } else {
        writeln!(log, "invalid")?;
        Ok(EXIT_INVALID)
    }
}

/// Parses `a..b` (exclusive), `a..=b`, or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let bad = |e: std::num::ParseIntError| format!("bad seed list {text:?}: {e}");
    if let Some((a, b)) = text.split_once("..=") {
        return Ok((a.trim().parse().map_err(bad)?..=b.trim().parse().map_err(bad)?).collect());
    }
    if let Some((a, b)) = text.split_once("..") {
        return Ok((a.trim().parse().map_err(bad)?..b.trim().parse().map_err(bad)?).collect());
    }
    text.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse().map_err(bad)).collect()
}

/// Runs the scenario once per seed and writes one summary row per seed.
pub fn cmd_sweep(path: &Path, seeds: &[u64], opts: &CommandOptions, log: &mut dyn Write) -> io::Result<i32> {
    let Some(scenario) = load(path, opts, log)? else {
        return Ok(EXIT_INVALID);
    };
    if seeds.is_empty() {
        report_errors(&["empty seed list".to_string()], log)?;
        return Ok(EXIT_INVALID);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = opts.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(io::Error::other)?;
    let outcomes: Vec<(u64, Result<Execution, Vec<String>>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let s = Scenario { seed, ..scenario.clone() };
                (seed, execute(&s))
            })
            .collect()
    });
    let mut outcomes = outcomes;
    outcomes.sort_by_key(|(seed, _)| *seed);
    let mut summaries = Vec::new();
    let mut violations = Vec::new();
    let (mut overflow, mut failed) = (false, false);
    for (seed, o) in outcomes {
        match o {
            Ok(exec) => {
                overflow |= exec.overflowed();
                failed |= exec.checks_failed();
                violations.extend(exec.violations);
                summaries.extend(exec.summaries);
            }
            Err(errors) => {
                report_errors(&errors.iter().map(|e| format!("seed {seed}: {e}")).collect::<Vec<_>>(), log)?;
                return Ok(EXIT_INVALID);
            }
        }
    }
    fs::create_dir_all(&opts.out)?;
    let mut f = create(&opts.out, "sweep.csv")?;
    write_sweep_csv(&mut f, &summaries)?;
    f.flush()?;
    let mut f = create(&opts.out, "summaries.jsonl")?;
    write_jsonl(&mut f, &summaries)?;
    f.flush()?;
    let mut f = create(&opts.out, "violations.jsonl")?;
    write_jsonl(&mut f, &violations)?;
    f.flush()?;
    let agg = aggregate(&summaries);
    let mut f = create(&opts.out, "aggregate.json")?;
    serde_json::to_writer_pretty(&mut f, &agg)?;
    f.write_all(b"\n")?;
    f.flush()?;
    writeln!(log, "{} runs, {} overflowed, {} still truncating", agg.runs, agg.overflowed, agg.still_truncating)?;
    if let Some(q) = agg.max_agent_target_distance {
        writeln!(log, "max agent distance to target: median {:.3e}, max {:.3e}", q.median, q.max)?;
    } else if let Some(q) = agg.final_root_distance {
        writeln!(log, "final root distance: median {:.3e}, max {:.3e}", q.median, q.max)?;
    }
    writeln!(log, "wrote {}", opts.out.display())?;
    Ok(if opts.strict_checks && failed {
        EXIT_VIOLATIONS
    } else if overflow {
        EXIT_OVERFLOW
    } else {
        EXIT_OK
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("5, 1,9").unwrap(), vec![5, 1, 9]);
        assert!(parse_seeds("a..3").is_err());
    }
}
