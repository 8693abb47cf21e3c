use super::DiagnosticsError;
use crate::engine::Trajectory;
use crate::linalg::norm;
use crate::problems::Problem;
use crate::schedule::PowerSchedule;

/// Partial sums `P_{i,k} = Σ_{m<k} γ_m ε_{i,m+1} I[‖x_{i,m}‖ ≤ K]`.
///
/// Summability of the weighted noise is a sufficient stand-in for the
/// subsequence condition on the noise, which cannot be checked on a finite run.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePartialSums {
    /// `‖P_{i,k}‖` per agent, `k = 0..=K`.
    pub norms: Vec<Vec<f64>>,
    /// Per agent: `max ‖P_{i,k} − P_{i,K}‖` over the last quarter of the run.
    pub tail_fluctuation: Vec<f64>,
}

impl NoisePartialSums {
    pub fn max_tail(&self) -> f64 {
        self.tail_fluctuation.iter().copied().fold(0.0, f64::max)
    }
}

pub fn noise_partial_sum_diag(
    traj: &Trajectory,
    problem: &dyn Problem,
    gamma: &PowerSchedule,
    k_bound: f64,
) -> Result<NoisePartialSums, DiagnosticsError> {
    let (n, l) = (traj.n, traj.l);
    if traj.xs.len() != traj.observations.len() + 1 {
        return Err(DiagnosticsError::MissingRecords("one observation per step"));
    }
    let big_k = traj.len();
    let tail_start = big_k - big_k / 4;
    let mut norms = Vec::with_capacity(n);
    let mut tail_fluctuation = Vec::with_capacity(n);
    for i in 0..n {
        let mut p = vec![0.0; l];
        let mut sums = Vec::with_capacity(big_k + 1);
        sums.push(p.clone());
        for k in 0..big_k {
            let x = traj.x(k, i);
            if norm(x) <= k_bound {
                let f = problem.true_local(i, x).ok_or(DiagnosticsError::NoTrueLocal)?;
                let g = gamma.at(k as u64);
                for ((acc, o), fv) in p.iter_mut().zip(traj.observation(k, i)).zip(&f) {
                    *acc += g * (o - fv);
                }
            }
            sums.push(p.clone());
        }
        let end = &sums[big_k];
        let tail = sums[tail_start..]
            .iter()
            .map(|s| s.iter().zip(end).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        norms.push(sums.iter().map(|s| norm(s)).collect());
        tail_fluctuation.push(tail);
    }
    Ok(NoisePartialSums { norms, tail_fluctuation })
}
