use std::collections::BTreeMap;

use serde::Serialize;

use super::DiagnosticsError;
use crate::engine::TruncationEvent;
use crate::topology::EdgeSet;

/// Piecewise-constant truncation counters of a run and the first-passage
/// times derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationTrace {
    n: usize,
    horizon: u64,
    /// Per agent: `(k, σ)` at every step where `σ_{i,k}` changed, starting at `k = 0`.
    changes: Vec<Vec<(u64, u64)>>,
    pub events: Vec<Vec<TruncationEvent>>,
    /// `τ_{i,m}`, for every value `m` agent `i` actually took.
    pub tau_agent: BTreeMap<(usize, u64), u64>,
    /// `τ_m`.
    pub tau: BTreeMap<u64, u64>,
}

impl TruncationTrace {
    /// From the events of a run that started with every `σ_{i,0} = 0`.
    pub fn from_events(n: usize, horizon: u64, events: &[TruncationEvent]) -> Self {
        let mut changes = vec![vec![(0, 0)]; n];
        let mut per_agent = vec![Vec::new(); n];
        let mut sorted: Vec<&TruncationEvent> = events.iter().collect();
        sorted.sort_by_key(|e| (e.step, e.agent));
        for e in sorted {
            let c = &mut changes[e.agent];
            if c.last().is_some_and(|&(k, _)| k == e.step) {
                c.last_mut().unwrap().1 = e.sigma_after;
            } else if c.last().is_some_and(|&(_, s)| s != e.sigma_after) {
                c.push((e.step, e.sigma_after));
            }
            per_agent[e.agent].push(e.clone());
        }
        Self::assemble(n, horizon, changes, per_agent)
    }

    /// From recorded counters, `sigmas[k][i] = σ_{i,k}` for `k = 0..=K`.
    pub fn from_sigmas(sigmas: &[Vec<u64>]) -> Self {
        let n = sigmas.first().map_or(0, Vec::len);
        let horizon = sigmas.len().saturating_sub(1) as u64;
        let mut changes: Vec<Vec<(u64, u64)>> = (0..n).map(|i| vec![(0, sigmas[0][i])]).collect();
        for (k, row) in sigmas.iter().enumerate().skip(1) {
            for (i, &s) in row.iter().enumerate() {
                if changes[i].last().unwrap().1 != s {
                    changes[i].push((k as u64, s));
                }
            }
        }
        Self::assemble(n, horizon, changes, vec![Vec::new(); n])
    }

    fn assemble(n: usize, horizon: u64, changes: Vec<Vec<(u64, u64)>>, events: Vec<Vec<TruncationEvent>>) -> Self {
        let mut tau_agent = BTreeMap::new();
        let mut tau: BTreeMap<u64, u64> = BTreeMap::new();
        for (i, c) in changes.iter().enumerate() {
            for &(k, s) in c {
                tau_agent.entry((i, s)).or_insert(k);
                let t = tau.entry(s).or_insert(k);
                *t = (*t).min(k);
            }
        }
        Self { n, horizon, changes, events, tau_agent, tau }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Steps at which `σ_{i,·}` changed, with the new value.
    pub fn changes(&self, i: usize) -> &[(u64, u64)] {
        &self.changes[i]
    }

    /// `σ_{i,k}`.
    pub fn sigma_at(&self, i: usize, k: u64) -> u64 {
        let c = &self.changes[i];
        let idx = c.partition_point(|&(t, _)| t <= k);
        c[idx.saturating_sub(1)].1
    }

    /// `σ_k = max_i σ_{i,k}`.
    pub fn sigma_max_at(&self, k: u64) -> u64 {
        (0..self.n).map(|i| self.sigma_at(i, k)).max().unwrap_or(0)
    }

    /// `τ_{i,m}`; `None` if agent `i` never had `σ = m`.
    pub fn tau_agent(&self, i: usize, m: u64) -> Option<u64> {
        self.tau_agent.get(&(i, m)).copied()
    }

    /// `τ_m`; `None` if no agent reached `m` within the horizon.
    pub fn tau(&self, m: u64) -> Option<u64> {
        self.tau.get(&m).copied()
    }

    /// `τ̃_{i,m} = τ_{i,m} ∧ τ_{m+1}`, with `None` standing for `+∞`.
    pub fn tau_tilde(&self, i: usize, m: u64) -> Option<u64> {
        match (self.tau_agent(i, m), self.tau(m + 1)) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Largest `σ` reached by any agent.
    pub fn final_sigma(&self) -> u64 {
        self.tau.keys().next_back().copied().unwrap_or(0)
    }

    /// Last step at which any counter changed.
    pub fn last_change(&self) -> Option<u64> {
        self.changes.iter().flat_map(|c| c.iter().skip(1).map(|&(k, _)| k)).max()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lemma42Violation {
    /// `σ_{j,k+B·d_{ij}} < σ_{i,k}`.
    Gap { i: usize, j: usize, k: u64, d: usize, sigma_i: u64, sigma_j: u64 },
    /// `τ̃_{j,m} > τ_m + B·D`.
    Spread { j: usize, m: u64, tau_m: u64, tau_tilde: Option<u64>, bound: u64 },
}

/// Checks `σ_{j,k+B·d_{ij}} ≥ σ_{i,k}` for every pair and step, and
/// `τ̃_{j,m} ≤ τ_m + B·D` for every observed `m ≥ 1`. Steps beyond the
/// recorded horizon are not checked.
///
/// Counters are non-decreasing, so the first inequality is checked at the
/// steps where `σ_{i,·}` changes.
pub fn check_lemma42(trace: &TruncationTrace, g_inf: &EdgeSet, b: u64) -> Result<Vec<Lemma42Violation>, DiagnosticsError> {
    if g_inf.n() != trace.n() {
        return Err(DiagnosticsError::Inconsistent(format!("graph has {} nodes, trace {}", g_inf.n(), trace.n())));
    }
    if !g_inf.is_strongly_connected() {
        return Err(DiagnosticsError::NotStronglyConnected);
    }
    let d = g_inf.shortest_paths();
    let diameter = d.iter().flatten().map(|v| v.expect("strongly connected")).max().unwrap_or(0) as u64;
    let horizon = trace.horizon();
    let mut out = Vec::new();
    for i in 0..trace.n() {
        for &(k, sigma_i) in trace.changes(i) {
            if sigma_i == 0 {
                continue;
            }
            for (j, dij) in d[i].iter().enumerate() {
                let dij = dij.expect("strongly connected");
                let t = k + b * dij as u64;
                if t > horizon {
                    continue;
                }
                let sigma_j = trace.sigma_at(j, t);
                if sigma_j < sigma_i {
                    out.push(Lemma42Violation::Gap { i, j, k, d: dij, sigma_i, sigma_j });
                }
            }
        }
    }
    for (&m, &tau_m) in trace.tau.range(1..) {
        let bound = tau_m + b * diameter;
        if bound > horizon {
            continue;
        }
        for j in 0..trace.n() {
            let tt = trace.tau_tilde(j, m);
            if tt.is_none_or(|t| t > bound) {
                out.push(Lemma42Violation::Spread { j, m, tau_m, tau_tilde: tt, bound });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Cessation {
    /// `σ_K` at the end of the recorded horizon.
    pub final_sigma: u64,
    /// Last step at which any counter changed.
    pub last_event: Option<u64>,
    /// A change happened within the final tenth of the horizon.
    pub still_truncating: bool,
    /// All agents end with the same counter.
    pub agreed: bool,
}

pub fn detect_truncation_cessation(trace: &TruncationTrace) -> Cessation {
    let last_event = trace.last_change();
    let horizon = trace.horizon();
    let cutoff = horizon - horizon / 10;
    let finals: Vec<u64> = (0..trace.n()).map(|i| trace.sigma_at(i, horizon)).collect();
    Cessation {
        final_sigma: finals.iter().copied().max().unwrap_or(0),
        last_event,
        still_truncating: last_event.is_some_and(|k| k > cutoff),
        agreed: finals.windows(2).all(|w| w[0] == w[1]),
    }
}
