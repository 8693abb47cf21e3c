//! Run-time analysis quantities and post-hoc checks of the truncation
//! mechanism on recorded trajectories.

mod auxiliary;
mod noise;
mod trace;

pub use auxiliary::{build_auxiliary_sequences, check_lemma41, AuxCase, AuxiliarySequences, Lemma41Violation};
pub use noise::{noise_partial_sum_diag, NoisePartialSums};
pub use trace::{check_lemma42, detect_truncation_cessation, Cessation, Lemma42Violation, TruncationTrace};

use thiserror::Error;

use crate::engine::{Algo, NetworkState};
use crate::linalg::{distance, norm};
use crate::problems::{Problem, RootDistance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("stacked length {len} is not a multiple of l = {l}")]
    BadLength { len: usize, l: usize },
    #[error("trajectory does not contain {0}")]
    MissingRecords(&'static str),
    #[error("problem has no exact local functions")]
    NoTrueLocal,
    #[error("communication graph is not strongly connected")]
    NotStronglyConnected,
    #[error("{0}")]
    Inconsistent(String),
}

/// One row of the metrics stream.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub k: u64,
    pub algo: Algo,
    /// `‖X_{⊥,k}‖`.
    pub disagreement: f64,
    /// `x̄_k`.
    pub avg_estimate: Vec<f64>,
    pub root_distance: RootDistance,
    pub sigma_max: u64,
    pub sigma_min: u64,
    pub trunc_events_cum: u64,
    pub lyapunov: Option<f64>,
    /// `e(k) = (1/N) Σ ‖x_{i,k} − target‖`, target sign-aligned with `x̄_k`.
    pub consensus_error: Option<f64>,
    /// `max_i ‖x_{i,k}‖`.
    pub max_norm: f64,
}

/// `‖(I_N − 𝟙𝟙ᵀ/N) ⊗ I_l · X‖`.
pub fn disagreement_norm(stacked: &[f64], l: usize) -> Result<f64, DiagnosticsError> {
    if l == 0 || stacked.len() % l != 0 {
        return Err(DiagnosticsError::BadLength { len: stacked.len(), l });
    }
    if stacked.is_empty() {
        return Ok(0.0);
    }
    let mean = crate::linalg::stacked_mean(stacked, l);
    let sq: f64 = stacked.chunks_exact(l).map(|x| x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum();
    Ok(sq.sqrt())
}

/// Metrics for `N` points `x_{i,k}` given as one stacked vector.
pub fn metrics_from_stacked(
    algo: Algo,
    k: u64,
    stacked: &[f64],
    l: usize,
    sigma: (u64, u64),
    trunc_events_cum: u64,
    problem: &dyn Problem,
) -> MetricsRecord {
    let avg = crate::linalg::stacked_mean(stacked, l);
    let disagreement = disagreement_norm(stacked, l).unwrap_or(f64::NAN);
    let consensus_error = problem.target().map(|t| {
        let target = t.aligned(&avg);
        let n = stacked.len() / l;
        stacked.chunks_exact(l).map(|x| distance(x, &target)).sum::<f64>() / n as f64
    });
    MetricsRecord {
        k,
        algo,
        disagreement,
        root_distance: problem.root_distance(&avg),
        lyapunov: problem.lyapunov(&avg),
        avg_estimate: avg,
        sigma_max: sigma.0,
        sigma_min: sigma.1,
        trunc_events_cum,
        consensus_error,
        max_norm: stacked.chunks_exact(l).map(norm).fold(0.0, f64::max),
    }
}

pub fn metrics_for(algo: Algo, state: &NetworkState, trunc_events_cum: u64, problem: &dyn Problem) -> MetricsRecord {
    let l = state.agents.first().map_or(problem.dim(), |a| a.x.len());
    metrics_from_stacked(
        algo,
        state.k,
        &state.stacked(),
        l,
        (state.sigma_max(), state.sigma_min()),
        trunc_events_cum,
        problem,
    )
}

/// `|a − b| ≤ rel·max(|a|, |b|) + abs`, componentwise.
pub(crate) fn close_enough(a: &[f64], b: &[f64], rel: f64, abs: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= rel * x.abs().max(y.abs()) + abs)
}

#[cfg(test)]
mod tests;
