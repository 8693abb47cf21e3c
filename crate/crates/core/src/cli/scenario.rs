//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected everywhere, and
//! semantic problems are collected into one list instead of stopping at the
//! first.

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::AlgorithmConfig;
use crate::problems::{example2_costs, Cost, Heterogeneity, KwProblem, LinearProblem, PcaProblem, Problem};
use crate::rng::{tags, Substreams};
use crate::schedule::{BoundSchedule, PowerSchedule};
use crate::topology::{self, verify_a4, A4Report, TopologySchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Dsaawet,
    Baseline,
    Compare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Lemma41,
    Lemma42,
    NoisePartialSums,
    Cessation,
}

/// A point given by name or by coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    Named(NamedPoint),
    Vector(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedPoint {
    /// `𝟙/√N`.
    OnesOverSqrtN,
    /// `𝟙/√l`.
    OnesOverSqrtL,
    Zero,
    /// The configured `x*` (initial values only).
    XStar,
}

impl PointSpec {
    fn resolve(&self, n: usize, l: usize, x_star: Option<&[f64]>) -> Result<Vec<f64>, String> {
        match self {
            PointSpec::Vector(v) if v.len() == l => Ok(v.clone()),
            PointSpec::Vector(v) => Err(format!("point has {} coordinates, expected {l}", v.len())),
            PointSpec::Named(NamedPoint::OnesOverSqrtN) => Ok(vec![1.0 / (n as f64).sqrt(); l]),
            PointSpec::Named(NamedPoint::OnesOverSqrtL) => Ok(vec![1.0 / (l as f64).sqrt(); l]),
            PointSpec::Named(NamedPoint::Zero) => Ok(vec![0.0; l]),
            PointSpec::Named(NamedPoint::XStar) => x_star.map(<[f64]>::to_vec).ok_or_else(|| "x_star cannot refer to itself".to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    PcaExample1 {
        #[serde(default)]
        heterogeneity: Option<Heterogeneity>,
        #[serde(default = "default_gap")]
        min_gap_ratio: f64,
        #[serde(default)]
        structural_seed: u64,
    },
    PcaCustom {
        covariance: Vec<Vec<f64>>,
        #[serde(default)]
        heterogeneity: Option<Heterogeneity>,
        #[serde(default)]
        structural_seed: u64,
    },
    KwExample2 {
        #[serde(default = "one")]
        noise_std: f64,
    },
    KwCustom {
        costs: Vec<Cost>,
        alpha: PowerSchedule,
        #[serde(default = "one")]
        noise_std: f64,
        #[serde(default)]
        minimum: Option<Vec<f64>>,
    },
    SyntheticLinear {
        #[serde(default = "one")]
        noise_std: f64,
        #[serde(default)]
        structural_seed: u64,
    },
}

fn default_gap() -> f64 {
    1.2
}

fn one() -> f64 {
    1.0
}

fn default_k_bound() -> f64 {
    10.0
}

fn default_record_every() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Example1Blocks {
        #[serde(default)]
        structural_seed: u64,
    },
    StaticMetropolis {
        #[serde(default)]
        structural_seed: u64,
    },
    Ring,
    Complete,
    Explicit {
        /// One matrix per phase, each a list of rows.
        matrices: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default)]
        b_window: Option<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Constant { value: PointSpec },
    /// Independent uniform draws per coordinate, per agent.
    UniformBox { low: Vec<f64>, high: Vec<f64> },
    PerAgent { points: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_algorithm")]
    pub algorithm: AlgorithmKind,
    pub agents: usize,
    pub dim: usize,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub full_trace: bool,
    #[serde(default)]
    pub checks: Vec<Check>,
    /// `K` of the noise partial-sum indicator.
    #[serde(default = "default_k_bound")]
    pub noise_k_bound: f64,
    /// Run even if the topology fails the connectivity checks.
    #[serde(default)]
    pub allow_unverified_topology: bool,
    pub x_star: PointSpec,
    pub gamma: PowerSchedule,
    pub bounds: BoundSchedule,
    pub problem: ProblemSpec,
    pub topology: TopologySpec,
    pub init: InitSpec,
}

fn default_algorithm() -> AlgorithmKind {
    AlgorithmKind::Dsaawet
}

/// Everything needed to execute a scenario.
#[derive(Clone)]
pub struct Built {
    pub problem: Arc<dyn Problem>,
    pub schedule: TopologySchedule,
    pub config: AlgorithmConfig,
    pub init: Vec<Vec<f64>>,
    pub a4: A4Report,
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario, Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario, Vec<String>> {
    let s: Scenario = toml::from_str(text).map_err(|e| vec![e.to_string().trim_end().to_string()])?;
    let errors = s.problems();
    if errors.is_empty() {
        Ok(s)
    } else {
        Err(errors)
    }
}

impl Scenario {
    /// All semantic problems that can be found without building anything.
    pub fn problems(&self) -> Vec<String> {
        let (n, l) = (self.agents, self.dim);
        let mut out = Vec::new();
        if n == 0 {
            out.push("agents must be at least 1".into());
        }
        if l == 0 {
            out.push("dim must be at least 1".into());
        }
        if self.record_every == 0 {
            out.push("record_every must be at least 1".into());
        }
        if !(self.noise_k_bound > 0.0) {
            out.push("noise_k_bound must be positive".into());
        }
        out.extend(self.gamma.problems("gamma"));
        out.extend(self.bounds.problems());
        if n == 0 || l == 0 {
            return out;
        }
        match self.x_star.resolve(n, l, None) {
            Ok(x) => {
                if x.iter().any(|v| !v.is_finite()) {
                    out.push("x_star must be finite".into());
                }
                let norm = crate::linalg::norm(&x);
                if self.bounds.at(0) < norm {
                    out.push(format!("M_0 = {} is below ‖x*‖ = {norm}", self.bounds.at(0)));
                }
            }
            Err(e) => out.push(format!("x_star: {e}")),
        }
        match &self.problem {
            ProblemSpec::PcaExample1 { heterogeneity, min_gap_ratio, .. } => {
                if !(*min_gap_ratio >= 1.0) {
                    out.push(format!("problem.min_gap_ratio must be at least 1, got {min_gap_ratio}"));
                }
                out.extend(heterogeneity_problems(heterogeneity));
            }
            ProblemSpec::PcaCustom { covariance, heterogeneity, .. } => {
                if covariance.len() != l || covariance.iter().any(|r| r.len() != l) {
                    out.push(format!("problem.covariance must be {l}×{l}"));
                }
                out.extend(heterogeneity_problems(heterogeneity));
            }
            ProblemSpec::KwExample2 { noise_std } => {
                if n != 3 || l != 2 {
                    out.push(format!("kw_example2 has 3 agents in 2 dimensions, scenario declares {n} and {l}"));
                }
                if !(*noise_std >= 0.0) {
                    out.push("problem.noise_std must be non-negative".into());
                }
            }
            ProblemSpec::KwCustom { costs, alpha, noise_std, minimum } => {
                if costs.len() != n {
                    out.push(format!("problem.costs has {} entries, expected one per agent ({n})", costs.len()));
                }
                out.extend(alpha.problems("problem.alpha"));
                if !(*noise_std >= 0.0) {
                    out.push("problem.noise_std must be non-negative".into());
                }
                if minimum.as_ref().is_some_and(|m| m.len() != l) {
                    out.push(format!("problem.minimum must have {l} coordinates"));
                }
            }
            ProblemSpec::SyntheticLinear { noise_std, .. } => {
                if !(*noise_std >= 0.0) {
                    out.push("problem.noise_std must be non-negative".into());
                }
            }
        }
        if let TopologySpec::Explicit { matrices, .. } = &self.topology {
            if matrices.is_empty() {
                out.push("topology.matrices must not be empty".into());
            }
            for (t, m) in matrices.iter().enumerate() {
                if m.len() != n || m.iter().any(|r| r.len() != n) {
                    out.push(format!("topology.matrices[{t}] must be {n}×{n}"));
                }
            }
        }
        if let TopologySpec::Example1Blocks { .. } = &self.topology {
            if n % 2 != 0 {
                out.push(format!("example1_blocks needs an even number of agents, got {n}"));
            }
        }
        match &self.init {
            InitSpec::Constant { value } => {
                if let PointSpec::Vector(v) = value {
                    if v.len() != l {
                        out.push(format!("init.value must have {l} coordinates"));
                    }
                }
            }
            InitSpec::UniformBox { low, high } => {
                if low.len() != l || high.len() != l {
                    out.push(format!("init.low and init.high must have {l} coordinates"));
                } else if low.iter().zip(high).any(|(a, b)| !(a < b)) {
                    out.push("init.low must be strictly below init.high".into());
                }
            }
            InitSpec::PerAgent { points } => {
                if points.len() != n || points.iter().any(|p| p.len() != l) {
                    out.push(format!("init.points must list {n} points of dimension {l}"));
                }
            }
        }
        out
    }

    /// Builds problem, topology, configuration and initial points, reporting
    /// every failure.
    pub fn build(&self) -> Result<Built, Vec<String>> {
        let mut errors = self.problems();
        if !errors.is_empty() {
            return Err(errors);
        }
        let (n, l) = (self.agents, self.dim);
        let x_star = self.x_star.resolve(n, l, None).expect("validated");

        let problem = self.build_problem().map_err(|e| vec![format!("problem: {e}")]);
        let schedule = self.build_topology().map_err(|e| vec![format!("topology: {e}")]);
        if let Err(e) = &problem {
            errors.extend(e.iter().cloned());
        }
        if let Err(e) = &schedule {
            errors.extend(e.iter().cloned());
        }
        let init = self.build_init(&x_star);
        if let Err(e) = &init {
            errors.push(format!("init: {e}"));
        }
        let (Ok(problem), Ok(schedule), Ok(init)) = (problem, schedule, init) else {
            return Err(errors);
        };
        let a4 = verify_a4(&schedule, self.horizon);
        if !a4.passed() && !self.allow_unverified_topology {
            errors.extend(a4.issues.iter().map(|i| format!("topology: {i}")));
            return Err(errors);
        }
        let config = AlgorithmConfig { x_star, gamma: self.gamma, bounds: self.bounds, horizon: self.horizon, seed: self.seed };
        Ok(Built { problem, schedule, config, init, a4 })
    }

    fn build_problem(&self) -> Result<Arc<dyn Problem>, String> {
        let (n, l) = (self.agents, self.dim);
        let structural = |seed: u64| Substreams::new(seed).structural(tags::PROBLEM);
        let p: Arc<dyn Problem> = match &self.problem {
            ProblemSpec::PcaExample1 { heterogeneity, min_gap_ratio, structural_seed } => {
                let mut r = structural(*structural_seed);
                let a = PcaProblem::random_covariance(l, *min_gap_ratio, &mut r);
                let h = heterogeneity.unwrap_or(Heterogeneity::Homogeneous);
                Arc::new(PcaProblem::new(l, n, a, h, &mut r).map_err(|e| e.to_string())?)
            }
            ProblemSpec::PcaCustom { covariance, heterogeneity, structural_seed } => {
                let mut r = structural(*structural_seed);
                let a = covariance.iter().flatten().copied().collect();
                let h = heterogeneity.unwrap_or(Heterogeneity::Homogeneous);
                Arc::new(PcaProblem::new(l, n, a, h, &mut r).map_err(|e| e.to_string())?)
            }
            ProblemSpec::KwExample2 { noise_std } => Arc::new(
                KwProblem::new(2, example2_costs(), PowerSchedule::new(1.0, 1.0, 0.2), *noise_std, Some(vec![2.0, 1.0]))
                    .map_err(|e| e.to_string())?,
            ),
            ProblemSpec::KwCustom { costs, alpha, noise_std, minimum } => {
                Arc::new(KwProblem::new(l, costs.clone(), *alpha, *noise_std, minimum.clone()).map_err(|e| e.to_string())?)
            }
            ProblemSpec::SyntheticLinear { noise_std, structural_seed } => {
                Arc::new(LinearProblem::synthetic(n, l, *noise_std, &mut structural(*structural_seed)).map_err(|e| e.to_string())?)
            }
        };
        Ok(p)
    }

    fn build_topology(&self) -> Result<TopologySchedule, String> {
        let n = self.agents;
        let structural = |seed: u64| Substreams::new(seed).structural(tags::TOPOLOGY);
        let s = match &self.topology {
            TopologySpec::Example1Blocks { structural_seed } => topology::example1_blocks(n, &mut structural(*structural_seed)),
            TopologySpec::StaticMetropolis { structural_seed } => topology::static_metropolis(n, &mut structural(*structural_seed)),
            TopologySpec::Ring => topology::directed_ring(n),
            TopologySpec::Complete => topology::complete(n),
            TopologySpec::Explicit { matrices, eta, b_window } => {
                let flat: Vec<Vec<f64>> = matrices.iter().map(|m| m.iter().flatten().copied().collect()).collect();
                topology::explicit(n, &flat, *eta, *b_window)
            }
        };
        s.map_err(|e| e.to_string())
    }

    fn build_init(&self, x_star: &[f64]) -> Result<Vec<Vec<f64>>, String> {
        let (n, l) = (self.agents, self.dim);
        match &self.init {
            InitSpec::Constant { value } => Ok(vec![value.resolve(n, l, Some(x_star))?; n]),
            InitSpec::UniformBox { low, high } => {
                let mut r = Substreams::new(self.seed).init();
                Ok((0..n).map(|_| low.iter().zip(high).map(|(a, b)| r.random_range(*a..*b)).collect()).collect())
            }
            InitSpec::PerAgent { points } => Ok(points.clone()),
        }
    }
}

fn heterogeneity_problems(h: &Option<Heterogeneity>) -> Vec<String> {
    match h {
        Some(Heterogeneity::Heterogeneous { spread }) if !(0.0..1.0).contains(spread) => {
            vec![format!("problem.heterogeneity.spread must lie in [0, 1), got {spread}")]
        }
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        name = "tiny"
        agents = 4
        dim = 2
        horizon = 10
        x_star = [0.5, 0.0]
        gamma = { a = 1.0 }
        bounds = { kind = "geometric", m0 = 1.0, ratio = 2.0 }
        problem = { kind = "synthetic_linear" }
        topology = { kind = "complete" }
        init = { kind = "constant", value = "x_star" }
    "#;

    #[test]
    fn minimal_scenario_builds() {
        let s = parse_scenario_str(MINIMAL).unwrap();
        assert_eq!(s.algorithm, AlgorithmKind::Dsaawet);
        assert_eq!(s.record_every, 1);
        let b = s.build().unwrap();
        assert_eq!(b.init, vec![vec![0.5, 0.0]; 4]);
        assert_eq!(b.config.gamma, PowerSchedule::harmonic(1.0));
        assert!(b.a4.passed());
    }

    #[test]
    fn empty_file_is_an_error_list() {
        let e = parse_scenario_str("").unwrap_err();
        assert!(!e.is_empty());
        assert!(e[0].contains("missing field"), "{e:?}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\ncolour = 3\n");
        assert!(parse_scenario_str(&text).unwrap_err()[0].contains("colour"));
        let text = MINIMAL.replace("{ a = 1.0 }", "{ a = 1.0, q = 2 }");
        assert!(parse_scenario_str(&text).is_err());
    }

    #[test]
    fn all_semantic_errors_are_reported() {
        let text = MINIMAL
            .replace("{ a = 1.0 }", "{ a = 0.0 }")
            .replace("ratio = 2.0", "ratio = 1.0")
            .replace("x_star = [0.5, 0.0]", "x_star = [5.0, 0.0]")
            .replace(r#"value = "x_star""#, "value = [1.0]");
        let e = parse_scenario_str(&text).unwrap_err();
        assert_eq!(e.len(), 4, "{e:?}");
        assert!(e.iter().any(|m| m.contains("gamma")));
        assert!(e.iter().any(|m| m.contains("ratio")));
        assert!(e.iter().any(|m| m.contains("M_0")));
        assert!(e.iter().any(|m| m.contains("init.value")));
    }

    #[test]
    fn disconnected_topology_fails_unless_overridden() {
        let text = MINIMAL.replace(
            r#"topology = { kind = "complete" }"#,
            "topology = { kind = \"explicit\", matrices = [[[1.0,0,0,0],[0,1.0,0,0],[0,0,1.0,0],[0,0,0,1.0]]] }",
        );
        let s = parse_scenario_str(&text).unwrap();
        let e = s.build().err().unwrap();
        assert!(e.iter().any(|m| m.contains("not strongly connected")), "{e:?}");
        let s = Scenario { allow_unverified_topology: true, ..s };
        assert!(s.build().is_ok());
    }

    #[test]
    fn uniform_box_is_seeded() {
        let text = MINIMAL.replace(
            r#"init = { kind = "constant", value = "x_star" }"#,
            r#"init = { kind = "uniform_box", low = [-2.0, -2.0], high = [6.0, 4.0] }"#,
        );
        let s = parse_scenario_str(&text).unwrap();
        let a = s.build().unwrap().init;
        assert_eq!(a, s.build().unwrap().init);
        for p in &a {
            assert!((-2.0..6.0).contains(&p[0]) && (-2.0..4.0).contains(&p[1]));
        }
        let other = Scenario { seed: 1, ..s }.build().unwrap().init;
        assert_ne!(a, other);
    }

    #[test]
    fn named_points() {
        assert_eq!(PointSpec::Named(NamedPoint::OnesOverSqrtN).resolve(4, 3, None).unwrap(), vec![0.5; 3]);
        assert_eq!(PointSpec::Named(NamedPoint::OnesOverSqrtL).resolve(4, 4, None).unwrap(), vec![0.5; 4]);
        assert!(PointSpec::Named(NamedPoint::XStar).resolve(4, 4, None).is_err());
        assert!(PointSpec::Vector(vec![1.0]).resolve(1, 2, None).is_err());
    }
}
