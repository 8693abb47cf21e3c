//! Gradient-free minimisation of a sum of local costs via a two-point
//! Kiefer-Wolfowitz estimate with random directions.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{check_call, gaussian, ConsensusTarget, Problem, ProblemError, RootDistance};
use crate::linalg::{distance, norm};
use crate::schedule::PowerSchedule;

/// One additive term of a separable cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostTerm {
    /// `coef · (x[coord] − center)^power`
    Power { coord: usize, center: f64, power: i32, coef: f64 },
    /// `coef · sin(freq · x[coord] + phase)`
    Sine {
        coord: usize,
        coef: f64,
        #[serde(default = "one")]
        freq: f64,
        #[serde(default)]
        phase: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl CostTerm {
    fn coord(&self) -> usize {
        match *self {
            CostTerm::Power { coord, .. } | CostTerm::Sine { coord, .. } => coord,
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match *self {
            CostTerm::Power { coord, center, power, coef } => coef * (x[coord] - center).powi(power),
            CostTerm::Sine { coord, coef, freq, phase } => coef * (freq * x[coord] + phase).sin(),
        }
    }

    fn add_gradient(&self, x: &[f64], g: &mut [f64]) {
        match *self {
            CostTerm::Power { coord, center, power, coef } => {
                if power != 0 {
                    g[coord] += coef * power as f64 * (x[coord] - center).powi(power - 1);
                }
            }
            CostTerm::Sine { coord, coef, freq, phase } => g[coord] += coef * freq * (freq * x[coord] + phase).cos(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cost {
    pub terms: Vec<CostTerm>,
}

impl Cost {
    pub fn new(terms: Vec<CostTerm>) -> Self {
        Self { terms }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for t in &self.terms {
            t.add_gradient(x, &mut g);
        }
        g
    }
}

/// `L₁ = x² + y² + 10 sin x`, `L₂ = (x − 4)² + (y − 1)² − 10 sin x`,
/// `L₃ = 0.01 (x − 2)⁴ + (y − 2)²`. The sum is minimised at `(2, 1)`.
pub fn example2_costs() -> Vec<Cost> {
    use CostTerm::*;
    let sq = |coord, center| Power { coord, center, power: 2, coef: 1.0 };
    let sine = |coef| Sine { coord: 0, coef, freq: 1.0, phase: 0.0 };
    vec![
        Cost::new(vec![sq(0, 0.0), sq(1, 0.0), sine(10.0)]),
        Cost::new(vec![sq(0, 4.0), sq(1, 1.0), sine(-10.0)]),
        Cost::new(vec![Power { coord: 0, center: 2.0, power: 4, coef: 0.01 }, sq(1, 2.0)]),
    ]
}

/// Agent `i` minimises its share of `Σ c_i`; `f_i = −∇c_i`.
#[derive(Clone, Debug)]
pub struct KwProblem {
    l: usize,
    costs: Vec<Cost>,
    alpha: PowerSchedule,
    noise_std: f64,
    minimum: Option<Vec<f64>>,
}

impl KwProblem {
    pub fn new(
        l: usize,
        costs: Vec<Cost>,
        alpha: PowerSchedule,
        noise_std: f64,
        minimum: Option<Vec<f64>>,
    ) -> Result<Self, ProblemError> {
        if l == 0 || costs.is_empty() {
            return Err(ProblemError::Invalid("KW problem needs dimension ≥ 1 and at least one cost".into()));
        }
        for (i, c) in costs.iter().enumerate() {
            if let Some(t) = c.terms.iter().find(|t| t.coord() >= l) {
                return Err(ProblemError::Invalid(format!("cost {i}: coordinate {} out of range for l = {l}", t.coord())));
            }
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(ProblemError::Invalid(format!("noise_std must be non-negative, got {noise_std}")));
        }
        let bad = alpha.problems("alpha");
        if !bad.is_empty() {
            return Err(ProblemError::Invalid(bad.join("; ")));
        }
        if let Some(m) = &minimum {
            if m.len() != l {
                return Err(ProblemError::DimensionMismatch { expected: l, got: m.len() });
            }
        }
        Ok(Self { l, costs, alpha, noise_std, minimum })
    }

    /// Three agents, `α_k = 1/(k+1)^{0.2}`, unit observation noise.
    pub fn example2() -> Self {
        Self::new(2, example2_costs(), PowerSchedule::new(1.0, 1.0, 0.2), 1.0, Some(vec![2.0, 1.0])).unwrap()
    }

    pub fn costs(&self) -> &[Cost] {
        &self.costs
    }

    pub fn alpha(&self) -> &PowerSchedule {
        &self.alpha
    }

    pub fn minimum(&self) -> Option<&[f64]> {
        self.minimum.as_deref()
    }

    /// `∇ Σ_i c_i(x)`.
    pub fn total_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.l];
        for c in &self.costs {
            for (a, v) in g.iter_mut().zip(c.gradient(x)) {
                *a += v;
            }
        }
        g
    }

    /// Like `observe_into`, also returning the direction `Δ`.
    pub fn observe_with_direction(
        &self,
        agent: usize,
        x: &[f64],
        k: u64,
        rng: &mut dyn RngCore,
        out: &mut [f64],
    ) -> Result<Vec<f64>, ProblemError> {
        check_call(self, agent, x, out.len())?;
        let delta: Vec<f64> = (0..self.l).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let xi_plus = self.noise_std * gaussian(rng);
        let xi_minus = self.noise_std * gaussian(rng);
        let a = self.alpha.at(k);
        let shifted = |s: f64| -> Vec<f64> { x.iter().zip(&delta).map(|(xi, d)| xi + s * a * d).collect() };
        let cost = &self.costs[agent];
        let y_plus = cost.value(&shifted(1.0)) + xi_plus;
        let y_minus = cost.value(&shifted(-1.0)) + xi_minus;
        let scale = -(y_plus - y_minus) / (2.0 * a);
        for (o, d) in out.iter_mut().zip(&delta) {
            *o = scale * d;
        }
        Ok(delta)
    }
}

impl Problem for KwProblem {
    fn dim(&self) -> usize {
        self.l
    }

    fn n_agents(&self) -> usize {
        self.costs.len()
    }

    fn observe_into(&self, agent: usize, x: &[f64], k: u64, rng: &mut dyn RngCore, out: &mut [f64]) -> Result<(), ProblemError> {
        self.observe_with_direction(agent, x, k, rng, out).map(|_| ())
    }

    fn true_local(&self, agent: usize, x: &[f64]) -> Option<Vec<f64>> {
        self.costs.get(agent).map(|c| c.gradient(x).into_iter().map(|g| -g).collect())
    }

    fn root_distance(&self, x: &[f64]) -> RootDistance {
        match &self.minimum {
            Some(m) => RootDistance::Exact(distance(x, m)),
            None => {
                let n = self.costs.len() as f64;
                RootDistance::Proxy(norm(&self.total_gradient(x)) / n)
            }
        }
    }

    fn target(&self) -> Option<ConsensusTarget> {
        self.minimum.as_ref().map(|m| ConsensusTarget { point: m.clone(), sign_symmetric: false })
    }
}
