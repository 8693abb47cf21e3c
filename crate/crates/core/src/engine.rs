//! The synchronous truncated update.
//!
//! At step `k` every agent `i`
//!
//! 1. takes `σ̂_{i,k} = max_{j ∈ N_i(k)} σ_{j,k}`;
//! 2. if it lags (`σ_{i,k} < σ̂_{i,k}`) resets to `x*`, otherwise forms
//!    `x′ = Σ_j ω_ij(k) (x_{j,k} if σ_{j,k} = σ̂_{i,k} else x*) + γ_k O_{i,k+1}`;
//! 3. keeps `(x′, σ̂)` if `‖x′‖ ≤ M_{σ̂}` and moves to `(x*, σ̂ + 1)` otherwise.
//!
//! All reads come from the pre-step snapshot, so the order in which agents
//! are processed does not matter.

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::{metrics_for, MetricsRecord};
use crate::linalg::norm;
use crate::problems::{Problem, ProblemError};
use crate::rng::{AgentRng, Substreams};
use crate::schedule::{BoundSchedule, PowerSchedule};
use crate::topology::{AdjacencyMatrix, TopologySchedule};

/// States whose norm exceeds this (or that are not finite) count as overflow.
pub const OVERFLOW_THRESHOLD: f64 = 1e300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("step {k}, agent {agent}: {source}")]
    Observation {
        k: u64,
        agent: usize,
        #[source]
        source: ProblemError,
    },
    #[error("{what}: expected {expected}, got {got}")]
    SizeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Dsaawet,
    Baseline,
}

impl Algo {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algo::Dsaawet => "dsaawet",
            Algo::Baseline => "baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub sigma: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub agents: Vec<AgentState>,
    pub k: u64,
}

impl NetworkState {
    /// Every agent at `x` with `σ = 0`, at step 0.
    pub fn uniform(n: usize, x: &[f64]) -> Self {
        Self::from_points(std::iter::repeat_n(x.to_vec(), n).collect())
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Self {
        Self { agents: points.into_iter().map(|x| AgentState { x, sigma: 0 }).collect(), k: 0 }
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    /// `σ_k = max_i σ_{i,k}`.
    pub fn sigma_max(&self) -> u64 {
        self.agents.iter().map(|a| a.sigma).max().unwrap_or(0)
    }

    pub fn sigma_min(&self) -> u64 {
        self.agents.iter().map(|a| a.sigma).min().unwrap_or(0)
    }

    pub fn sigmas(&self) -> Vec<u64> {
        self.agents.iter().map(|a| a.sigma).collect()
    }

    /// `X_k` as one stacked `N·l` vector.
    pub fn stacked(&self) -> Vec<f64> {
        self.agents.iter().flat_map(|a| a.x.iter().copied()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmConfig {
    pub x_star: Vec<f64>,
    pub gamma: PowerSchedule,
    pub bounds: BoundSchedule,
    pub horizon: u64,
    pub seed: u64,
}

impl AlgorithmConfig {
    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    /// Every violated requirement, empty when the configuration is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.gamma.problems("gamma");
        out.extend(self.bounds.problems());
        if self.x_star.is_empty() {
            out.push("x_star must have at least one coordinate".into());
        } else if self.x_star.iter().any(|v| !v.is_finite()) {
            out.push("x_star must be finite".into());
        } else {
            let m0 = self.bounds.at(0);
            let xs = norm(&self.x_star);
            if m0 < xs {
                out.push(format!("M_0 = {m0} is below ‖x*‖ = {xs}"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(EngineError::Config(p))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationKind {
    OwnOverflow,
    PeerLag,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationEvent {
    /// `k + 1`: the step at which the new state takes effect.
    pub step: u64,
    pub agent: usize,
    pub kind: TruncationKind,
    pub sigma_before: u64,
    pub sigma_hat: u64,
    pub sigma_after: u64,
}

/// What one step produced besides the new state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepRecord {
    /// `O_{i,k+1}` stacked over agents.
    pub observations: Vec<f64>,
    pub events: Vec<TruncationEvent>,
}

/// `σ̂_{i,k}`.
pub fn max_consensus_sigma(state: &NetworkState, w: &AdjacencyMatrix, i: usize) -> u64 {
    let own = state.agents[i].sigma;
    w.row(i).iter().map(|&(j, _)| state.agents[j].sigma).fold(own, u64::max)
}

/// `out = Σ_j ω_ij v_j + γ o`, with the sum started from the first term.
#[inline]
pub(crate) fn mix_into<'a>(row: &[(usize, f64)], value: impl Fn(usize) -> &'a [f64], gamma: f64, obs: &[f64], out: &mut [f64]) {
    let mut terms = row.iter();
    match terms.next() {
        Some(&(j, w)) => {
            for (o, v) in out.iter_mut().zip(value(j)) {
                *o = w * v;
            }
        }
        None => out.iter_mut().for_each(|o| *o = 0.0),
    }
    for &(j, w) in terms {
        for (o, v) in out.iter_mut().zip(value(j)) {
            *o += w * v;
        }
    }
    for (o, v) in out.iter_mut().zip(obs) {
        *o += gamma * v;
    }
}

/// `x′_{i,k+1}` given `σ̂_{i,k}` (computed from the same pre-step state).
pub fn candidate_update(
    state: &NetworkState,
    w: &AdjacencyMatrix,
    i: usize,
    sigma_hat: u64,
    obs: &[f64],
    gamma: f64,
    x_star: &[f64],
) -> Result<Vec<f64>, EngineError> {
    let l = x_star.len();
    if obs.len() != l {
        return Err(EngineError::SizeMismatch { what: "observation length", expected: l, got: obs.len() });
    }
    if state.agents[i].sigma < sigma_hat {
        return Ok(x_star.to_vec());
    }
    let mut out = vec![0.0; l];
    let value = |j: usize| -> &[f64] {
        let a = &state.agents[j];
        if a.sigma == sigma_hat {
            &a.x
        } else {
            x_star
        }
    };
    mix_into(w.row(i), value, gamma, obs, &mut out);
    Ok(out)
}

/// Applies the truncation test; returns the new `(x, σ)` and whether it fired.
pub fn truncate(x_prime: Vec<f64>, sigma_hat: u64, bounds: &BoundSchedule, x_star: &[f64]) -> (Vec<f64>, u64, bool) {
    if norm(&x_prime) > bounds.at(sigma_hat) {
        (x_star.to_vec(), sigma_hat + 1, true)
    } else {
        (x_prime, sigma_hat, false)
    }
}

fn check_sizes(state: &NetworkState, w: &AdjacencyMatrix, rngs: &[AgentRng], l: usize) -> Result<(), EngineError> {
    let n = state.n();
    if w.n() != n {
        return Err(EngineError::SizeMismatch { what: "weight matrix size", expected: n, got: w.n() });
    }
    if rngs.len() != n {
        return Err(EngineError::SizeMismatch { what: "random streams", expected: n, got: rngs.len() });
    }
    if let Some(a) = state.agents.iter().find(|a| a.x.len() != l) {
        return Err(EngineError::SizeMismatch { what: "state dimension", expected: l, got: a.x.len() });
    }
    Ok(())
}

/// Draws `O_{i,k+1}` for every agent at its current state.
pub(crate) fn observe_all(
    points: &[&[f64]],
    k: u64,
    problem: &dyn Problem,
    rngs: &mut [AgentRng],
) -> Result<Vec<f64>, EngineError> {
    let l = problem.dim();
    let mut obs = vec![0.0; points.len() * l];
    for (i, (x, rng)) in points.iter().zip(rngs.iter_mut()).enumerate() {
        problem
            .observe_into(i, x, k, rng, &mut obs[i * l..(i + 1) * l])
            .map_err(|source| EngineError::Observation { k, agent: i, source })?;
    }
    Ok(obs)
}

/// One synchronous step.
pub fn step(
    state: &mut NetworkState,
    w: &AdjacencyMatrix,
    problem: &dyn Problem,
    config: &AlgorithmConfig,
    rngs: &mut [AgentRng],
) -> Result<StepRecord, EngineError> {
    let order: Vec<usize> = (0..state.n()).collect();
    step_with_order(state, w, problem, config, rngs, &order)
}

/// As [`step`], computing the agents' new states in the given order.
pub fn step_with_order(
    state: &mut NetworkState,
    w: &AdjacencyMatrix,
    problem: &dyn Problem,
    config: &AlgorithmConfig,
    rngs: &mut [AgentRng],
    order: &[usize],
) -> Result<StepRecord, EngineError> {
    let l = config.dim();
    check_sizes(state, w, rngs, l)?;
    let k = state.k;
    let points: Vec<&[f64]> = state.agents.iter().map(|a| a.x.as_slice()).collect();
    let observations = observe_all(&points, k, problem, rngs)?;
    let gamma = config.gamma.at(k);

    let mut next: Vec<Option<AgentState>> = vec![None; state.n()];
    let mut events = Vec::new();
    for &i in order {
        let sigma = state.agents[i].sigma;
        let sigma_hat = max_consensus_sigma(state, w, i);
        let obs = &observations[i * l..(i + 1) * l];
        let x_prime = candidate_update(state, w, i, sigma_hat, obs, gamma, &config.x_star)?;
        if sigma < sigma_hat {
            events.push(TruncationEvent {
                step: k + 1,
                agent: i,
                kind: TruncationKind::PeerLag,
                sigma_before: sigma,
                sigma_hat,
                sigma_after: sigma_hat,
            });
        }
        let (x, sigma_next, fired) = truncate(x_prime, sigma_hat, &config.bounds, &config.x_star);
        if fired {
            events.push(TruncationEvent {
                step: k + 1,
                agent: i,
                kind: TruncationKind::OwnOverflow,
                sigma_before: sigma,
                sigma_hat,
                sigma_after: sigma_next,
            });
        }
        next[i] = Some(AgentState { x, sigma: sigma_next });
    }
    for (slot, new) in state.agents.iter_mut().zip(next) {
        *slot = new.expect("order must cover every agent exactly once");
    }
    state.k = k + 1;
    events.sort_by_key(|e| e.agent);
    Ok(StepRecord { observations, events })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    /// Metrics are recorded at every multiple of this and at the horizon.
    pub record_every: u64,
    /// Keep every state and observation (needed for the recursion checks).
    pub full_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { record_every: 1, full_trace: false }
    }
}

/// Every state and observation of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub l: usize,
    /// `X_k` stacked, for `k = 0..=K`.
    pub xs: Vec<Vec<f64>>,
    /// `σ_{i,k}` for `k = 0..=K`; all zero for the baseline.
    pub sigmas: Vec<Vec<u64>>,
    /// `O_{i,k+1}` stacked, for `k = 0..K`.
    pub observations: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Number of completed steps.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn x(&self, k: usize, i: usize) -> &[f64] {
        &self.xs[k][i * self.l..(i + 1) * self.l]
    }

    pub fn observation(&self, k: usize, i: usize) -> &[f64] {
        &self.observations[k][i * self.l..(i + 1) * self.l]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub algo: Algo,
    pub metrics: Vec<MetricsRecord>,
    pub events: Vec<TruncationEvent>,
    pub final_state: NetworkState,
    /// Step at which the state first overflowed; the run stops there.
    pub overflow: Option<u64>,
    pub trace: Option<Trajectory>,
    /// Number of agents and the horizon actually requested.
    pub n: usize,
    pub horizon: u64,
}

impl RunResult {
    pub fn own_overflows(&self) -> usize {
        self.events.iter().filter(|e| e.kind == TruncationKind::OwnOverflow).count()
    }

    pub fn last_metrics(&self) -> Option<&MetricsRecord> {
        self.metrics.last()
    }
}

pub(crate) fn overflowed<'a>(mut points: impl Iterator<Item = &'a [f64]>) -> bool {
    points.any(|x| {
        let n = norm(x);
        !n.is_finite() || n > OVERFLOW_THRESHOLD
    })
}

/// Runs `config.horizon` steps from `init`, drawing noise from the per-agent
/// streams of `config.seed`.
pub fn run(
    problem: &dyn Problem,
    schedule: &TopologySchedule,
    config: &AlgorithmConfig,
    init: NetworkState,
    options: &RunOptions,
) -> Result<RunResult, EngineError> {
    run_with(problem, schedule, config, init, options, |_, _| {})
}

/// As [`run`], calling `on_step` after every step with the new state.
pub fn run_with(
    problem: &dyn Problem,
    schedule: &TopologySchedule,
    config: &AlgorithmConfig,
    init: NetworkState,
    options: &RunOptions,
    mut on_step: impl FnMut(&NetworkState, &StepRecord),
) -> Result<RunResult, EngineError> {
    config.validate()?;
    let n = init.n();
    let l = config.dim();
    if problem.dim() != l {
        return Err(EngineError::SizeMismatch { what: "problem dimension", expected: l, got: problem.dim() });
    }
    if problem.n_agents() != n {
        return Err(EngineError::SizeMismatch { what: "problem agents", expected: n, got: problem.n_agents() });
    }
    if schedule.n() != n {
        return Err(EngineError::SizeMismatch { what: "topology size", expected: n, got: schedule.n() });
    }
    let every = options.record_every.max(1);
    let mut rngs = Substreams::new(config.seed).agents(n);
    let mut state = init;
    let mut trunc_cum = 0u64;
    let mut events = Vec::new();
    let mut metrics = vec![metrics_for(Algo::Dsaawet, &state, trunc_cum, problem)];
    let mut trace = options.full_trace.then(|| Trajectory {
        n,
        l,
        xs: vec![state.stacked()],
        sigmas: vec![state.sigmas()],
        observations: Vec::new(),
    });
    let mut overflow = None;

    while state.k < config.horizon {
        let w = schedule.at(state.k);
        let record = step(&mut state, &w, problem, config, &mut rngs)?;
        trunc_cum += record.events.iter().filter(|e| e.kind == TruncationKind::OwnOverflow).count() as u64;
        if let Some(t) = trace.as_mut() {
            t.xs.push(state.stacked());
            t.sigmas.push(state.sigmas());
            t.observations.push(record.observations.clone());
        }
        on_step(&state, &record);
        events.extend(record.events);
        if overflowed(state.agents.iter().map(|a| a.x.as_slice())) {
            overflow = Some(state.k);
            break;
        }
        if state.k % every == 0 || state.k == config.horizon {
            metrics.push(metrics_for(Algo::Dsaawet, &state, trunc_cum, problem));
        }
    }
    Ok(RunResult {
        algo: Algo::Dsaawet,
        metrics,
        events,
        final_state: state,
        overflow,
        trace,
        n,
        horizon: config.horizon,
    })
}
