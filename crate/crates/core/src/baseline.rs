//! Consensus + innovation without truncations:
//! `x_{i,k+1} = Σ_j ω_ij(k) x_{j,k} + γ_k O_{i,k+1}`.

use crate::diagnostics::metrics_from_stacked;
use crate::engine::{mix_into, observe_all, overflowed, run, Algo, AlgorithmConfig, EngineError, NetworkState, RunOptions, RunResult, Trajectory};
use crate::problems::Problem;
use crate::rng::{AgentRng, Substreams};
use crate::topology::{AdjacencyMatrix, TopologySchedule};

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineState {
    pub agents: Vec<Vec<f64>>,
    pub k: u64,
    /// First step at which a state was non-finite or above the overflow threshold.
    pub overflowed: Option<u64>,
}

impl BaselineState {
    pub fn new(agents: Vec<Vec<f64>>) -> Self {
        Self { agents, k: 0, overflowed: None }
    }

    pub fn stacked(&self) -> Vec<f64> {
        self.agents.iter().flatten().copied().collect()
    }
}

/// One step; returns the stacked observations. Once overflowed the state is frozen.
pub fn baseline_step(
    state: &mut BaselineState,
    w: &AdjacencyMatrix,
    problem: &dyn Problem,
    gamma: f64,
    rngs: &mut [AgentRng],
) -> Result<Vec<f64>, EngineError> {
    let n = state.agents.len();
    let l = problem.dim();
    if state.overflowed.is_some() {
        return Ok(Vec::new());
    }
    if w.n() != n {
        return Err(EngineError::SizeMismatch { what: "weight matrix size", expected: n, got: w.n() });
    }
    if rngs.len() != n {
        return Err(EngineError::SizeMismatch { what: "random streams", expected: n, got: rngs.len() });
    }
    let k = state.k;
    let points: Vec<&[f64]> = state.agents.iter().map(Vec::as_slice).collect();
    let obs = observe_all(&points, k, problem, rngs)?;
    let next: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut out = vec![0.0; l];
            mix_into(w.row(i), |j| state.agents[j].as_slice(), gamma, &obs[i * l..(i + 1) * l], &mut out);
            out
        })
        .collect();
    state.agents = next;
    state.k = k + 1;
    if overflowed(state.agents.iter().map(Vec::as_slice)) {
        state.overflowed = Some(state.k);
    }
    Ok(obs)
}

/// Runs the untruncated recursion with the same noise streams as
/// [`crate::engine::run`]; `config.bounds` and `config.x_star` are ignored.
pub fn run_baseline(
    problem: &dyn Problem,
    schedule: &TopologySchedule,
    config: &AlgorithmConfig,
    init: &[Vec<f64>],
    options: &RunOptions,
) -> Result<RunResult, EngineError> {
    let n = init.len();
    let l = problem.dim();
    if schedule.n() != n {
        return Err(EngineError::SizeMismatch { what: "topology size", expected: n, got: schedule.n() });
    }
    if problem.n_agents() != n {
        return Err(EngineError::SizeMismatch { what: "problem agents", expected: n, got: problem.n_agents() });
    }
    if let Some(x) = init.iter().find(|x| x.len() != l) {
        return Err(EngineError::SizeMismatch { what: "state dimension", expected: l, got: x.len() });
    }
    let p = config.gamma.problems("gamma");
    if !p.is_empty() {
        return Err(EngineError::Config(p));
    }
    let every = options.record_every.max(1);
    let mut rngs = Substreams::new(config.seed).agents(n);
    let mut state = BaselineState::new(init.to_vec());
    let record = |s: &BaselineState| metrics_from_stacked(Algo::Baseline, s.k, &s.stacked(), l, (0, 0), 0, problem);
    let mut metrics = vec![record(&state)];
    let mut trace = options.full_trace.then(|| Trajectory {
        n,
        l,
        xs: vec![state.stacked()],
        sigmas: vec![vec![0; n]],
        observations: Vec::new(),
    });
    while state.k < config.horizon {
        let w = schedule.at(state.k);
        let g = config.gamma.at(state.k);
        let obs = baseline_step(&mut state, &w, problem, g, &mut rngs)?;
        if let Some(t) = trace.as_mut() {
            t.xs.push(state.stacked());
            t.sigmas.push(vec![0; n]);
            t.observations.push(obs);
        }
        if state.overflowed.is_some() || state.k % every == 0 || state.k == config.horizon {
            metrics.push(record(&state));
        }
        if state.overflowed.is_some() {
            break;
        }
    }
    let final_state = NetworkState::from_points(state.agents.clone());
    Ok(RunResult {
        algo: Algo::Baseline,
        metrics,
        events: Vec::new(),
        final_state: NetworkState { k: state.k, ..final_state },
        overflow: state.overflowed,
        trace,
        n,
        horizon: config.horizon,
    })
}

/// Both algorithms from the same initial points and noise streams.
pub fn compare(
    problem: &dyn Problem,
    schedule: &TopologySchedule,
    config: &AlgorithmConfig,
    init: &[Vec<f64>],
    options: &RunOptions,
) -> Result<(RunResult, RunResult), EngineError> {
    let truncated = run(problem, schedule, config, NetworkState::from_points(init.to_vec()), options)?;
    let plain = run_baseline(problem, schedule, config, init, options)?;
    Ok((truncated, plain))
}
