use nalgebra::DMatrix;
use rand::RngCore;

use super::{check_call, gaussian, ConsensusTarget, Problem, ProblemError, RootDistance};
use crate::linalg::{distance, mat_vec};

/// `f_i(x) = −H_i (x − x⁰)` with additive Gaussian noise; the root set is
/// the single point `x⁰` whenever `Σ H_i` is nonsingular.
#[derive(Clone, Debug)]
pub struct LinearProblem {
    l: usize,
    gains: Vec<Vec<f64>>,
    root: Vec<f64>,
    noise_std: f64,
}

impl LinearProblem {
    pub fn new(gains: Vec<Vec<f64>>, root: Vec<f64>, noise_std: f64) -> Result<Self, ProblemError> {
        let l = root.len();
        if gains.is_empty() || l == 0 {
            return Err(ProblemError::Invalid("linear problem needs at least one agent and dimension ≥ 1".into()));
        }
        if let Some(g) = gains.iter().find(|g| g.len() != l * l) {
            return Err(ProblemError::Invalid(format!("gain matrix has {} entries, expected {}", g.len(), l * l)));
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(ProblemError::Invalid(format!("noise_std must be non-negative, got {noise_std}")));
        }
        Ok(Self { l, gains, root, noise_std })
    }

    /// Random symmetric positive definite gains `H_i = GᵀG/l + 0.1·I` and a
    /// root drawn uniformly from `[−1, 1]^l`.
    pub fn synthetic(n: usize, l: usize, noise_std: f64, rng: &mut dyn RngCore) -> Result<Self, ProblemError> {
        use rand::Rng;
        let gains = (0..n)
            .map(|_| {
                let g = DMatrix::from_fn(l, l, |_, _| gaussian(rng));
                let h = g.transpose() * &g / l as f64 + DMatrix::identity(l, l) * 0.1;
                h.transpose().as_slice().to_vec()
            })
            .collect();
        let root = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self::new(gains, root, noise_std)
    }

    pub fn root(&self) -> &[f64] {
        &self.root
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }
}

impl Problem for LinearProblem {
    fn dim(&self) -> usize {
        self.l
    }

    fn n_agents(&self) -> usize {
        self.gains.len()
    }

    fn observe_into(&self, agent: usize, x: &[f64], _k: u64, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<(), ProblemError> {
        check_call(self, agent, x, out.len())?;
        let shifted: Vec<f64> = x.iter().zip(&self.root).map(|(a, b)| a - b).collect();
        mat_vec(&self.gains[agent], &shifted, out);
        for o in out.iter_mut() {
            *o = -*o + self.noise_std * gaussian(rng);
        }
        Ok(())
    }

    fn true_local(&self, agent: usize, x: &[f64]) -> Option<Vec<f64>> {
        let shifted: Vec<f64> = x.iter().zip(&self.root).map(|(a, b)| a - b).collect();
        let mut out = vec![0.0; self.l];
        mat_vec(self.gains.get(agent)?, &shifted, &mut out);
        out.iter_mut().for_each(|o| *o = -*o);
        Some(out)
    }

    fn root_distance(&self, x: &[f64]) -> RootDistance {
        RootDistance::Exact(distance(x, &self.root))
    }

    fn target(&self) -> Option<ConsensusTarget> {
        Some(ConsensusTarget { point: self.root.clone(), sign_symmetric: false })
    }
}
