use serde::Serialize;

use super::{close_enough, DiagnosticsError, TruncationTrace};
use crate::engine::{mix_into, Trajectory};
use crate::linalg::norm;
use crate::problems::Problem;
use crate::schedule::{BoundSchedule, PowerSchedule};
use crate::topology::TopologySchedule;

/// Relative tolerance of the recursion check.
pub const REL_TOL: f64 = 1e-9;
/// Absolute tolerance of the recursion check.
pub const ABS_TOL: f64 = 1e-12;

/// Which definition assigned `(x̃_{i,k}, ε̃_{i,k+1})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxCase {
    /// `τ_m ≤ k < τ̃_{i,m}`: `x̃ = x*`, `ε̃ = −f_i(x*)`.
    Reset,
    /// `τ̃_{i,m} ≤ k < τ_{m+1}`: `x̃ = x`, `ε̃ = ε`.
    Actual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliarySequences {
    pub n: usize,
    pub l: usize,
    /// `X̃_k` stacked, `k = 0..=K`.
    pub xs: Vec<Vec<f64>>,
    /// `ε̃_{k+1}` stacked, `k = 0..K`.
    pub eps: Vec<Vec<f64>>,
    /// `cases[k][i]`, `k = 0..=K`.
    pub cases: Vec<Vec<AuxCase>>,
    /// `σ_k = max_i σ_{i,k}`, `k = 0..=K`.
    pub sigma: Vec<u64>,
}

impl AuxiliarySequences {
    pub fn x(&self, k: usize, i: usize) -> &[f64] {
        &self.xs[k][i * self.l..(i + 1) * self.l]
    }

    pub fn eps(&self, k: usize, i: usize) -> &[f64] {
        &self.eps[k][i * self.l..(i + 1) * self.l]
    }
}

/// `x̃_{i,k}` and `ε̃_{i,k+1}` from a full trajectory, with
/// `ε_{i,k+1} = O_{i,k+1} − f_i(x_{i,k})`.
pub fn build_auxiliary_sequences(
    traj: &Trajectory,
    trace: &TruncationTrace,
    problem: &dyn Problem,
    x_star: &[f64],
) -> Result<AuxiliarySequences, DiagnosticsError> {
    let (n, l) = (traj.n, traj.l);
    if traj.xs.len() != traj.observations.len() + 1 {
        return Err(DiagnosticsError::MissingRecords("one observation per step"));
    }
    if trace.n() != n || trace.horizon() as usize != traj.len() {
        return Err(DiagnosticsError::Inconsistent("trace and trajectory cover different runs".into()));
    }
    if x_star.len() != l {
        return Err(DiagnosticsError::Inconsistent(format!("x* has {} coordinates, expected {l}", x_star.len())));
    }
    let f_star: Vec<Vec<f64>> =
        (0..n).map(|i| problem.true_local(i, x_star).ok_or(DiagnosticsError::NoTrueLocal)).collect::<Result<_, _>>()?;

    let big_k = traj.len();
    let mut out = AuxiliarySequences {
        n,
        l,
        xs: Vec::with_capacity(big_k + 1),
        eps: Vec::with_capacity(big_k),
        cases: Vec::with_capacity(big_k + 1),
        sigma: Vec::with_capacity(big_k + 1),
    };
    for k in 0..=big_k {
        let m = trace.sigma_max_at(k as u64);
        let mut xs = vec![0.0; n * l];
        let mut eps = vec![0.0; n * l];
        let mut cases = Vec::with_capacity(n);
        for i in 0..n {
            let reset = trace.tau_tilde(i, m).is_none_or(|t| (k as u64) < t);
            let span = i * l..(i + 1) * l;
            if reset {
                cases.push(AuxCase::Reset);
                xs[span.clone()].copy_from_slice(x_star);
                for (e, f) in eps[span].iter_mut().zip(&f_star[i]) {
                    *e = -f;
                }
            } else {
                cases.push(AuxCase::Actual);
                let x = traj.x(k, i);
                xs[span.clone()].copy_from_slice(x);
                if k < big_k {
                    let f = problem.true_local(i, x).ok_or(DiagnosticsError::NoTrueLocal)?;
                    for ((e, o), fv) in eps[span].iter_mut().zip(traj.observation(k, i)).zip(&f) {
                        *e = o - fv;
                    }
                }
            }
        }
        out.xs.push(xs);
        if k < big_k {
            out.eps.push(eps);
        }
        out.cases.push(cases);
        out.sigma.push(m);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lemma41Violation {
    /// `x̃_{i,k}` differs from the recursion's prediction.
    State { k: u64, agent: usize, max_abs_error: f64 },
    /// `σ_k` differs from the recursion's prediction.
    Sigma { k: u64, expected: u64, got: u64 },
}

/// Recomputes `x̂_{i,k+1} = Σ_j ω_ij(k) x̃_{j,k} + γ_k (f_i(x̃_{i,k}) + ε̃_{i,k+1})`
/// and the global rule: if some `‖x̂_{j,k+1}‖ > M_{σ_k}` every `x̃_{·,k+1}` is
/// `x*` and `σ_{k+1} = σ_k + 1`, otherwise `x̃_{k+1} = x̂_{k+1}` and `σ` stays.
pub fn check_lemma41(
    aux: &AuxiliarySequences,
    schedule: &TopologySchedule,
    gamma: &PowerSchedule,
    bounds: &BoundSchedule,
    problem: &dyn Problem,
    x_star: &[f64],
) -> Result<Vec<Lemma41Violation>, DiagnosticsError> {
    let (n, l) = (aux.n, aux.l);
    let mut out = Vec::new();
    let mut hat = vec![0.0; n * l];
    let mut drive = vec![0.0; l];
    for k in 0..aux.eps.len() {
        let w = schedule.at(k as u64);
        let g = gamma.at(k as u64);
        for i in 0..n {
            let fx = problem.true_local(i, aux.x(k, i)).ok_or(DiagnosticsError::NoTrueLocal)?;
            for ((d, f), e) in drive.iter_mut().zip(&fx).zip(aux.eps(k, i)) {
                *d = f + e;
            }
            mix_into(w.row(i), |j| aux.x(k, j), g, &drive, &mut hat[i * l..(i + 1) * l]);
        }
        let bound = bounds.at(aux.sigma[k]);
        let over = hat.chunks_exact(l).any(|x| norm(x) > bound);
        let expected_sigma = aux.sigma[k] + u64::from(over);
        if aux.sigma[k + 1] != expected_sigma {
            out.push(Lemma41Violation::Sigma { k: k as u64 + 1, expected: expected_sigma, got: aux.sigma[k + 1] });
        }
        for i in 0..n {
            let expected = if over { x_star } else { &hat[i * l..(i + 1) * l] };
            let got = aux.x(k + 1, i);
            if !close_enough(expected, got, REL_TOL, ABS_TOL) {
                let max_abs_error = expected.iter().zip(got).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                out.push(Lemma41Violation::State { k: k as u64 + 1, agent: i, max_abs_error });
            }
        }
    }
    Ok(out)
}
