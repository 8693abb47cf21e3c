//! Local functions and their noisy observations.
//!
//! Agent `i` can only query `O_{i,k+1} = f_i(x) + ε_{i,k+1}`. The exact
//! `f_i` and the distance to the root set are exposed for diagnostics only;
//! the update rule never sees them.

mod kw;
mod linear;
mod pca;

pub use kw::{example2_costs, Cost, CostTerm, KwProblem};
pub use linear::LinearProblem;
pub use pca::{pca_sample_observation, Heterogeneity, PcaProblem, LYAPUNOV_FLOOR};

use rand::RngCore;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("state has dimension {got}, problem expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("agent {agent} out of range for {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Distance from a point to the root set `J`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RootDistance {
    /// `d(x, J)` computed from a known root set.
    Exact(f64),
    /// A stand-in (e.g. gradient norm) when `J` is not known in closed form.
    Proxy(f64),
    Unknown,
}

impl RootDistance {
    pub fn value(&self) -> Option<f64> {
        match *self {
            RootDistance::Exact(v) | RootDistance::Proxy(v) => Some(v),
            RootDistance::Unknown => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RootDistance::Exact(_) => "exact",
            RootDistance::Proxy(_) => "proxy",
            RootDistance::Unknown => "unknown",
        }
    }
}

/// Reference point for the per-agent consensus error.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusTarget {
    pub point: Vec<f64>,
    /// The problem is symmetric under `x ↦ −x` (PCA), so distances are taken
    /// to whichever of `±point` the network average is closer to.
    pub sign_symmetric: bool,
}

impl ConsensusTarget {
    /// `point` or `−point`, whichever is nearer to `reference`.
    pub fn aligned(&self, reference: &[f64]) -> Vec<f64> {
        if self.sign_symmetric && crate::linalg::dot(reference, &self.point) < 0.0 {
            self.point.iter().map(|v| -v).collect()
        } else {
            self.point.clone()
        }
    }
}

pub trait Problem: Send + Sync {
    /// State dimension `l`.
    fn dim(&self) -> usize;

    fn n_agents(&self) -> usize;

    /// Writes `O_{i,k+1}` for agent `agent` at state `x` into `out`. The
    /// number of random draws never depends on `x`.
    fn observe_into(
        &self,
        agent: usize,
        x: &[f64],
        k: u64,
        rng: &mut dyn RngCore,
        out: &mut [f64],
    ) -> Result<(), ProblemError>;

    fn observe(&self, agent: usize, x: &[f64], k: u64, rng: &mut dyn RngCore) -> Result<Vec<f64>, ProblemError> {
        let mut out = vec![0.0; self.dim()];
        self.observe_into(agent, x, k, rng, &mut out)?;
        Ok(out)
    }

    /// Exact `f_i(x)` when available.
    fn true_local(&self, agent: usize, x: &[f64]) -> Option<Vec<f64>>;

    fn root_distance(&self, x: &[f64]) -> RootDistance;

    /// Problem-specific Lyapunov function, if one is monitored.
    fn lyapunov(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    fn target(&self) -> Option<ConsensusTarget> {
        None
    }

    /// Averaged exact function `(1/N) Σ f_i(x)`.
    fn mean_field(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = self.n_agents();
        let mut acc = vec![0.0; self.dim()];
        for i in 0..n {
            for (a, v) in acc.iter_mut().zip(self.true_local(i, x)?) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Some(acc)
    }
}

pub(crate) fn check_call(p: &dyn Problem, agent: usize, x: &[f64], out_len: usize) -> Result<(), ProblemError> {
    if agent >= p.n_agents() {
        return Err(ProblemError::AgentOutOfRange { agent, n: p.n_agents() });
    }
    if x.len() != p.dim() {
        return Err(ProblemError::DimensionMismatch { expected: p.dim(), got: x.len() });
    }
    if out_len != p.dim() {
        return Err(ProblemError::DimensionMismatch { expected: p.dim(), got: out_len });
    }
    Ok(())
}

/// Standard normal draw.
#[inline]
pub(crate) fn gaussian(rng: &mut dyn RngCore) -> f64 {
    use rand_distr::Distribution;
    rand_distr::StandardNormal.sample(rng)
}
