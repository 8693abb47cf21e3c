//! Distributed principal component analysis.
//!
//! Agent `i` sees rows `u ~ N(0, A_i)` and estimates the top eigenvector of
//! `A = (1/N) Σ A_i` as a nonzero root of `f(x) = Ax − (xᵀAx)x`. The
//! observation replaces `A_i` with the one-sample estimate `uuᵀ`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{check_call, gaussian, ConsensusTarget, Problem, ProblemError, RootDistance};
use crate::linalg::{dot, mat_vec, norm, quad_form};

/// `xᵀAx` at or below this leaves the Lyapunov function undefined.
pub const LYAPUNOV_FLOOR: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// How the network covariance is split across agents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Heterogeneity {
    /// `A_i = A` for every agent.
    Homogeneous,
    /// `A_i = A^{1/2} (I + E_i) A^{1/2}` with symmetric `E_i` summing to zero
    /// over agents and `‖E_i‖₂ ≤ spread < 1`, so each `A_i` stays PSD.
    Heterogeneous { spread: f64 },
}

#[derive(Clone, Debug)]
struct LocalCovariance {
    cov: Vec<f64>,
    /// `L` with `L Lᵀ = A_i`, row-major.
    factor: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PcaProblem {
    d: usize,
    n: usize,
    cov: Vec<f64>,
    eigenvalues: Vec<f64>,
    top: Vec<f64>,
    /// One shared entry when homogeneous, otherwise one per agent.
    locals: Vec<LocalCovariance>,
}

fn to_dmatrix(d: usize, a: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, a)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Eigenvalues in descending order with matching unit eigenvectors.
fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut idx: Vec<usize> = (0..a.nrows()).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

/// Symmetric square root-like factor `Q diag(√λ⁺)`.
fn psd_factor(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(a);
    let mut f = vectors;
    for (c, v) in values.iter().enumerate() {
        f.column_mut(c).scale_mut(v.max(0.0).sqrt());
    }
    f
}

fn check_psd(d: usize, a: &[f64], what: &str) -> Result<(), ProblemError> {
    if a.len() != d * d {
        return Err(ProblemError::Invalid(format!("{what}: expected {} entries, got {}", d * d, a.len())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::Invalid(format!("{what}: non-finite entry")));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (a[i * d + j] - a[j * d + i]).abs() > SYMMETRY_TOL * scale {
                return Err(ProblemError::Invalid(format!("{what}: not symmetric at ({i},{j})")));
            }
        }
    }
    let (values, _) = sorted_eigen(&to_dmatrix(d, a));
    if values[d - 1] < -SYMMETRY_TOL * scale {
        return Err(ProblemError::Invalid(format!("{what}: not positive semidefinite (λ_min = {})", values[d - 1])));
    }
    Ok(())
}

/// `A_{i,k} x − (xᵀ A_{i,k} x) x` with `A_{i,k} = uuᵀ` for a single row `u`.
pub fn pca_sample_observation(u: &[f64], x: &[f64], out: &mut [f64]) {
    let ux = dot(u, x);
    let q = ux * ux;
    for ((o, ui), xi) in out.iter_mut().zip(u).zip(x) {
        *o = ux * ui - q * xi;
    }
}

impl PcaProblem {
    /// Builds the problem from the network covariance `a` (row-major `d × d`).
    /// Requires a simple top eigenvalue.
    pub fn new(d: usize, n: usize, a: Vec<f64>, mixing: Heterogeneity, rng: &mut dyn RngCore) -> Result<Self, ProblemError> {
        if d == 0 || n == 0 {
            return Err(ProblemError::Invalid("PCA needs d ≥ 1 and at least one agent".into()));
        }
        check_psd(d, &a, "covariance")?;
        let am = to_dmatrix(d, &a);
        let locals = match mixing {
            Heterogeneity::Homogeneous => vec![LocalCovariance { cov: a.clone(), factor: row_major(&psd_factor(&am)) }],
            Heterogeneity::Heterogeneous { spread } => {
                if !(0.0..1.0).contains(&spread) {
                    return Err(ProblemError::Invalid(format!("heterogeneity spread must lie in [0, 1), got {spread}")));
                }
                heterogeneous_split(d, n, &am, spread, rng)
            }
        };
        Self::assemble(d, n, a, locals)
    }

    /// Uses the given per-agent covariances as they are; `A` is their mean.
    pub fn from_locals(d: usize, locals: Vec<Vec<f64>>) -> Result<Self, ProblemError> {
        let n = locals.len();
        if d == 0 || n == 0 {
            return Err(ProblemError::Invalid("PCA needs d ≥ 1 and at least one agent".into()));
        }
        let mut a = vec![0.0; d * d];
        for (i, ai) in locals.iter().enumerate() {
            check_psd(d, ai, &format!("covariance of agent {i}"))?;
            for (s, v) in a.iter_mut().zip(ai) {
                *s += v / n as f64;
            }
        }
        let locals = locals
            .into_iter()
            .map(|cov| LocalCovariance { factor: row_major(&psd_factor(&to_dmatrix(d, &cov))), cov })
            .collect();
        Self::assemble(d, n, a, locals)
    }

    fn assemble(d: usize, n: usize, a: Vec<f64>, locals: Vec<LocalCovariance>) -> Result<Self, ProblemError> {
        let (eigenvalues, vectors) = sorted_eigen(&to_dmatrix(d, &a));
        if d > 1 && eigenvalues[0] - eigenvalues[1] <= 1e-9 * eigenvalues[0].abs().max(1.0) {
            return Err(ProblemError::Invalid(format!(
                "largest eigenvalue must have unit multiplicity (λ₁ = {}, λ₂ = {})",
                eigenvalues[0], eigenvalues[1]
            )));
        }
        let mut top: Vec<f64> = vectors.column(0).iter().copied().collect();
        // fix the sign so that the first nonzero entry is positive
        if top.iter().find(|v| v.abs() > 1e-12).is_some_and(|v| *v < 0.0) {
            top.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(Self { d, n, cov: a, eigenvalues, top, locals })
    }

    /// Random covariance `GᵀG / (2d)` with `G` a `2d × d` standard Gaussian
    /// matrix, resampled until `λ₁ / λ₂ ≥ min_gap_ratio`.
    pub fn random_covariance(d: usize, min_gap_ratio: f64, rng: &mut dyn RngCore) -> Vec<f64> {
        loop {
            let g = DMatrix::from_fn(2 * d, d, |_, _| gaussian(rng));
            let a = g.transpose() * &g / (2 * d) as f64;
            let a = (&a + a.transpose()) * 0.5;
            let (values, _) = sorted_eigen(&a);
            if d == 1 || values[0] >= min_gap_ratio * values[1] {
                return row_major(&a);
            }
        }
    }

    /// Seeded stand-in for the nine-dimensional Gaussian data of the
    /// thousand-sensor experiment: eigen-gap ratio at least 1.2.
    pub fn example1(n: usize, d: usize, mixing: Heterogeneity, rng: &mut dyn RngCore) -> Result<Self, ProblemError> {
        let a = Self::random_covariance(d, 1.2, rng);
        Self::new(d, n, a, mixing, rng)
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    pub fn local_covariance(&self, agent: usize) -> &[f64] {
        &self.local(agent).cov
    }

    /// Descending eigenvalues of `A`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Unit eigenvector `u⁽⁰⁾` of the largest eigenvalue.
    pub fn top_eigenvector(&self) -> &[f64] {
        &self.top
    }

    fn local(&self, agent: usize) -> &LocalCovariance {
        if self.locals.len() == 1 {
            &self.locals[0]
        } else {
            &self.locals[agent]
        }
    }

    /// Draws one row `u ~ N(0, A_i)`.
    pub fn sample_row(&self, agent: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let z: Vec<f64> = (0..self.d).map(|_| gaussian(rng)).collect();
        let mut u = vec![0.0; self.d];
        mat_vec(&self.local(agent).factor, &z, &mut u);
        u
    }

    /// `Ax − (xᵀAx)x` for an arbitrary symmetric `A`.
    fn oja_field(a: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        mat_vec(a, x, &mut out);
        let q = quad_form(a, x);
        for (o, xi) in out.iter_mut().zip(x) {
            *o -= q * xi;
        }
        out
    }

    /// `v(x) = e^{‖x‖²} / (xᵀAx)`; `None` where `xᵀAx` is not positive.
    pub fn lyapunov_value(&self, x: &[f64]) -> Option<f64> {
        let q = quad_form(&self.cov, x);
        (q > LYAPUNOV_FLOOR).then(|| dot(x, x).exp() / q)
    }

    /// Closed-form gradient `v_x(x) = (2v(x)/xᵀAx)((xᵀAx)x − Ax)`.
    pub fn lyapunov_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let v = self.lyapunov_value(x)?;
        let q = quad_form(&self.cov, x);
        let field = Self::oja_field(&self.cov, x);
        Some(field.iter().map(|f| -2.0 * v / q * f).collect())
    }
}

fn heterogeneous_split(d: usize, n: usize, a: &DMatrix<f64>, spread: f64, rng: &mut dyn RngCore) -> Vec<LocalCovariance> {
    let raw: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let g = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
            (&g + g.transpose()) * 0.5
        })
        .collect();
    let mean = raw.iter().fold(DMatrix::zeros(d, d), |acc, r| acc + r) / n as f64;
    let centered: Vec<DMatrix<f64>> = raw.into_iter().map(|r| r - &mean).collect();
    let largest = centered.iter().map(crate::linalg::spectral_norm).fold(0.0, f64::max);
    let scale = if largest > 0.0 { spread / largest } else { 0.0 };
    let root = {
        let (values, vectors) = sorted_eigen(a);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(d, values.iter().map(|v| v.max(0.0).sqrt())));
        &vectors * diag * vectors.transpose()
    };
    centered
        .into_iter()
        .map(|e| {
            let inner = DMatrix::identity(d, d) + e * scale;
            let ai = &root * inner * &root;
            let ai = (&ai + ai.transpose()) * 0.5;
            LocalCovariance { factor: row_major(&psd_factor(&ai)), cov: row_major(&ai) }
        })
        .collect()
}

impl Problem for PcaProblem {
    fn dim(&self) -> usize {
        self.d
    }

    fn n_agents(&self) -> usize {
        self.n
    }

    fn observe_into(&self, agent: usize, x: &[f64], _k: u64, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<(), ProblemError> {
        check_call(self, agent, x, out.len())?;
        let u = self.sample_row(agent, rng);
        pca_sample_observation(&u, x, out);
        Ok(())
    }

    fn true_local(&self, agent: usize, x: &[f64]) -> Option<Vec<f64>> {
        (agent < self.n).then(|| Self::oja_field(&self.local(agent).cov, x))
    }

    fn mean_field(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(Self::oja_field(&self.cov, x))
    }

    fn root_distance(&self, x: &[f64]) -> RootDistance {
        let plus = x.iter().zip(&self.top).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let minus = x.iter().zip(&self.top).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
        RootDistance::Exact(norm(x).min(plus).min(minus))
    }

    fn lyapunov(&self, x: &[f64]) -> Option<f64> {
        self.lyapunov_value(x)
    }

    fn target(&self) -> Option<ConsensusTarget> {
        Some(ConsensusTarget { point: self.top.clone(), sign_symmetric: true })
    }
}
