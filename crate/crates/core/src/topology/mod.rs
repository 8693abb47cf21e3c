//! Switching communication graphs.
//!
//! `W(k)` is stored row-wise: `w[i][j] = ω_ij(k)` is the weight agent `i`
//! puts on agent `j`'s value at step `k`, and `j` is a neighbour of `i`
//! exactly when that weight is positive. Every agent is treated as its own
//! neighbour.

mod builders;
mod graph;

pub use builders::{
    complete, directed_ring, example1_blocks, explicit, half_swap_block, metropolis_weights, random_connected_graph,
    static_metropolis,
};
pub use graph::EdgeSet;

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::spectral_norm;

/// Default tolerance for row/column sums.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// `d_m` values at or below this are treated as exact averaging.
pub const DECAY_NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("matrix has {got} entries, expected {n}×{n}")]
    BadLength { got: usize, n: usize },
    #[error("matrix entry ({i},{j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("matrix has no positive entry")]
    AllZero,
    #[error("agent index {index} out of range for {n} agents")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("transition product Φ({k},{s}) undefined: need k ≥ s − 1")]
    EmptyRange { k: u64, s: u64 },
    #[error("schedule matrices disagree on agent count ({0} vs {1})")]
    MixedSizes(usize, usize),
    #[error("declared η = {0} outside (0, 1]")]
    BadEta(f64),
    #[error("window B must be at least 1")]
    BadWindow,
    #[error("{0}")]
    Construction(String),
}

/// Weighted adjacency matrix `W(k)` with a cached sparse view of each row.
#[derive(Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    w: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl fmt::Debug for AdjacencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdjacencyMatrix").field("n", &self.n).field("rows", &self.rows).finish()
    }
}

impl AdjacencyMatrix {
    pub fn from_row_major(n: usize, w: Vec<f64>) -> Result<Self, TopologyError> {
        if w.len() != n * n {
            return Err(TopologyError::BadLength { got: w.len(), n });
        }
        if let Some(pos) = w.iter().position(|v| !v.is_finite()) {
            return Err(TopologyError::NonFinite { i: pos / n, j: pos % n });
        }
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|j| {
                        let v = w[i * n + j];
                        (v > 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n, w, rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TopologyError> {
        let n = rows.len();
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(TopologyError::NotSquare { row, len: r.len(), n });
            }
        }
        Self::from_row_major(n, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        Self::from_row_major(n, w).expect("identity is well formed")
    }

    /// `(1/n) 𝟙𝟙ᵀ`.
    pub fn uniform(n: usize) -> Self {
        Self::from_row_major(n, vec![1.0 / n as f64; n * n]).expect("uniform is well formed")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    /// Positive entries of row `i` as `(j, ω_ij)`.
    #[inline]
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.w
    }

    /// `N_i = { j : ω_ij > 0 } ∪ { i }`, sorted.
    pub fn neighbors(&self, i: usize) -> Result<Vec<usize>, TopologyError> {
        if i >= self.n {
            return Err(TopologyError::IndexOutOfRange { index: i, n: self.n });
        }
        let mut out: Vec<usize> = self.rows[i].iter().map(|&(j, _)| j).collect();
        if let Err(pos) = out.binary_search(&i) {
            out.insert(pos, i);
        }
        Ok(out)
    }

    /// Smallest strictly positive entry.
    pub fn min_positive_entry(&self) -> Result<f64, TopologyError> {
        self.w
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .reduce(f64::min)
            .ok_or(TopologyError::AllZero)
    }

    /// Positive-entry edges `(j, i)` plus all self-loops.
    pub fn edge_set(&self) -> EdgeSet {
        let mut e = EdgeSet::new(self.n);
        for i in 0..self.n {
            e.insert(i, i);
            for &(j, _) in &self.rows[i] {
                e.insert(j, i);
            }
        }
        e
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.w)
    }
}

/// Row and column sum deviations of one matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticityReport {
    pub row_deviation: Vec<f64>,
    pub col_deviation: Vec<f64>,
    pub min_entry: f64,
    pub tolerance: f64,
}

impl StochasticityReport {
    pub fn max_deviation(&self) -> f64 {
        self.row_deviation.iter().chain(&self.col_deviation).copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_deviation() <= self.tolerance && self.min_entry >= -self.tolerance
    }
}

pub fn validate_doubly_stochastic(w: &AdjacencyMatrix, tol: f64) -> Result<StochasticityReport, TopologyError> {
    if !(tol > 0.0) {
        return Err(TopologyError::BadTolerance(tol));
    }
    let n = w.n();
    let mut row_deviation = vec![0.0; n];
    let mut col_sum = vec![0.0; n];
    let mut min_entry = f64::INFINITY;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            let v = w.weight(i, j);
            s += v;
            col_sum[j] += v;
            min_entry = min_entry.min(v);
        }
        row_deviation[i] = (s - 1.0).abs();
    }
    let col_deviation = col_sum.into_iter().map(|s| (s - 1.0).abs()).collect();
    Ok(StochasticityReport { row_deviation, col_deviation, min_entry, tolerance: tol })
}

#[derive(Clone)]
enum Generator {
    Periodic(Arc<[AdjacencyMatrix]>),
    Function(Arc<dyn Fn(u64) -> AdjacencyMatrix + Send + Sync>),
}

/// Deterministic sequence `k ↦ W(k)` with the declared connectivity
/// constants `η` and `B`. Immutable and cheap to clone.
#[derive(Clone)]
pub struct TopologySchedule {
    n: usize,
    generator: Generator,
    eta: f64,
    b_window: u64,
}

impl fmt::Debug for TopologySchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TopologySchedule")
            .field("n", &self.n)
            .field("period", &self.period())
            .field("eta", &self.eta)
            .field("b_window", &self.b_window)
            .finish()
    }
}

impl TopologySchedule {
    /// Cycle through `matrices`; `W(k) = matrices[k mod len]`. When `eta` is
    /// `None` the smallest positive entry across the period is declared.
    pub fn periodic(matrices: Vec<AdjacencyMatrix>, eta: Option<f64>, b_window: u64) -> Result<Self, TopologyError> {
        let first = matrices
            .first()
            .ok_or_else(|| TopologyError::Construction("periodic schedule needs at least one matrix".into()))?;
        let n = first.n();
        if let Some(m) = matrices.iter().find(|m| m.n() != n) {
            return Err(TopologyError::MixedSizes(n, m.n()));
        }
        let eta = match eta {
            Some(e) => e,
            None => matrices
                .iter()
                .map(AdjacencyMatrix::min_positive_entry)
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min),
        };
        Self::checked(n, Generator::Periodic(matrices.into()), eta, b_window)
    }

    pub fn constant(w: AdjacencyMatrix, b_window: u64) -> Result<Self, TopologyError> {
        Self::periodic(vec![w], None, b_window)
    }

    /// Aperiodic schedule from a generator function. Checks over such a
    /// schedule are necessarily limited to a finite horizon.
    pub fn from_fn<F>(n: usize, eta: f64, b_window: u64, f: F) -> Result<Self, TopologyError>
    where
        F: Fn(u64) -> AdjacencyMatrix + Send + Sync + 'static,
    {
        Self::checked(n, Generator::Function(Arc::new(f)), eta, b_window)
    }

    fn checked(n: usize, generator: Generator, eta: f64, b_window: u64) -> Result<Self, TopologyError> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(TopologyError::BadEta(eta));
        }
        if b_window == 0 {
            return Err(TopologyError::BadWindow);
        }
        Ok(Self { n, generator, eta, b_window })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn b_window(&self) -> u64 {
        self.b_window
    }

    pub fn period(&self) -> Option<u64> {
        match &self.generator {
            Generator::Periodic(m) => Some(m.len() as u64),
            Generator::Function(_) => None,
        }
    }

    #[inline]
    pub fn at(&self, k: u64) -> Cow<'_, AdjacencyMatrix> {
        match &self.generator {
            Generator::Periodic(m) => Cow::Borrowed(&m[(k % m.len() as u64) as usize]),
            Generator::Function(f) => {
                let w = f(k);
                assert_eq!(w.n(), self.n, "schedule generator changed agent count at step {k}");
                Cow::Owned(w)
            }
        }
    }

    /// Union of the edge sets of `W(k_start), …, W(k_end)`.
    pub fn union_edge_set(&self, k_start: u64, k_end: u64) -> EdgeSet {
        let mut e = EdgeSet::new(self.n);
        for k in k_start..=k_end {
            e.union_with(&self.at(k).edge_set());
        }
        e
    }

    /// Edges occurring infinitely often. Exact for periodic schedules (union
    /// over one period); for aperiodic ones the union over `[0, horizon]`.
    pub fn persistent_edges(&self, horizon: u64) -> EdgeSet {
        match self.period() {
            Some(p) => self.union_edge_set(0, p - 1),
            None => self.union_edge_set(0, horizon),
        }
    }

    /// `Φ(k, s) = W(k) W(k−1) ⋯ W(s)`, with `Φ(s−1, s) = I`.
    pub fn transition_product(&self, k: u64, s: u64) -> Result<DMatrix<f64>, TopologyError> {
        if k + 1 < s {
            return Err(TopologyError::EmptyRange { k, s });
        }
        let mut phi = DMatrix::identity(self.n, self.n);
        for t in s..=k {
            phi = self.at(t).to_dmatrix() * phi;
        }
        Ok(phi)
    }
}

/// Outcome of checking the connectivity conditions on a schedule.
#[derive(Clone, Debug)]
pub struct A4Report {
    /// Every `W(k)` is doubly stochastic within tolerance.
    pub doubly_stochastic: bool,
    /// `ω_ij(k) ≥ η` for every neighbour `j` of `i` (including `i` itself).
    pub eta_bound: bool,
    /// The graph of persistent edges is strongly connected.
    pub strongly_connected: bool,
    /// Every persistent edge occurs in every window of `B` consecutive steps.
    pub bounded_recurrence: bool,
    /// Set for aperiodic schedules: conclusions only hold up to `horizon`.
    pub empirical: bool,
    pub horizon: u64,
    pub persistent_edges: EdgeSet,
    pub issues: Vec<String>,
}

impl A4Report {
    pub fn passed(&self) -> bool {
        self.doubly_stochastic && self.eta_bound && self.strongly_connected && self.bounded_recurrence
    }
}

pub fn verify_a4(schedule: &TopologySchedule, horizon: u64) -> A4Report {
    verify_a4_with_tolerance(schedule, horizon, DEFAULT_TOLERANCE)
}

pub fn verify_a4_with_tolerance(schedule: &TopologySchedule, horizon: u64, tol: f64) -> A4Report {
    let (last, empirical) = match schedule.period() {
        Some(p) => (p - 1, false),
        None => (horizon, true),
    };
    let mut issues = Vec::new();
    let mut doubly_stochastic = true;
    let mut eta_bound = true;
    let eta = schedule.eta();
    for k in 0..=last {
        let w = schedule.at(k);
        match validate_doubly_stochastic(&w, tol) {
            Ok(r) if r.passed() => {}
            Ok(r) => {
                doubly_stochastic = false;
                issues.push(format!(
                    "W({k}) not doubly stochastic: max |sum−1| = {:.3e}, min entry = {:.3e}",
                    r.max_deviation(),
                    r.min_entry
                ));
            }
            Err(e) => {
                doubly_stochastic = false;
                issues.push(format!("W({k}): {e}"));
            }
        }
        for i in 0..w.n() {
            if w.weight(i, i) < eta - tol {
                eta_bound = false;
                issues.push(format!("W({k}) self weight ω_{i}{i} = {} below η = {eta}", w.weight(i, i)));
            }
            for &(j, v) in w.row(i) {
                if v < eta - tol {
                    eta_bound = false;
                    issues.push(format!("W({k}) weight ω_{i}{j} = {v} below η = {eta}"));
                }
            }
        }
    }

    let persistent = schedule.persistent_edges(horizon);
    let strongly_connected = persistent.is_strongly_connected();
    if !strongly_connected {
        issues.push("persistent graph is not strongly connected".to_string());
    }

    let b = schedule.b_window();
    let mut bounded_recurrence = true;
    let starts: Box<dyn Iterator<Item = u64>> = match schedule.period() {
        Some(p) => Box::new(0..p),
        None if horizon + 1 >= b => Box::new(0..=(horizon + 1 - b)),
        None => Box::new(std::iter::empty()),
    };
    for k in starts {
        let window = schedule.union_edge_set(k, k + b - 1);
        let missing = window.missing_from(&persistent);
        if !missing.is_empty() {
            bounded_recurrence = false;
            issues.push(format!("window [{k}, {}] misses persistent edges {:?}", k + b - 1, &missing[..missing.len().min(5)]));
        }
    }

    A4Report {
        doubly_stochastic,
        eta_bound,
        strongly_connected,
        bounded_recurrence,
        empirical,
        horizon,
        persistent_edges: persistent,
        issues,
    }
}

/// Geometric envelope `d_m ≈ c ρ^m` fitted to the product-matrix distances
/// `d_m = ‖Φ(s+m−1, s) − (1/N)𝟙𝟙ᵀ‖₂`.
#[derive(Clone, Debug)]
pub struct DecayFit {
    /// `d_1, …, d_max_len`.
    pub distances: Vec<f64>,
    pub c: f64,
    /// `None` when every `d_m` is at the noise floor (exact averaging).
    pub rho: Option<f64>,
    /// `(m, d_m − c ρ^m)` for every entry used in the fit.
    pub residuals: Vec<(usize, f64)>,
}

impl DecayFit {
    pub fn zero_decay(&self) -> bool {
        self.rho.is_none()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.1.abs()).fold(0.0, f64::max)
    }
}

pub fn estimate_decay(schedule: &TopologySchedule, s: u64, max_len: usize) -> Result<DecayFit, TopologyError> {
    if max_len < 3 {
        return Err(TopologyError::Construction(format!("max_len must be at least 3, got {max_len}")));
    }
    let n = schedule.n();
    let avg = DMatrix::from_element(n, n, 1.0 / n as f64);
    let mut phi = DMatrix::<f64>::identity(n, n);
    let mut distances = Vec::with_capacity(max_len);
    for m in 1..=max_len {
        phi = schedule.at(s + m as u64 - 1).to_dmatrix() * phi;
        distances.push(spectral_norm(&(&phi - &avg)));
    }

    let points: Vec<(f64, f64)> = distances
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > DECAY_NOISE_FLOOR)
        .map(|(i, &d)| ((i + 1) as f64, d.ln()))
        .collect();
    if points.is_empty() {
        return Ok(DecayFit { distances, c: 0.0, rho: None, residuals: Vec::new() });
    }
    let (log_c, log_rho) = if points.len() == 1 {
        // a single usable point gives no slope information
        (points[0].1, 0.0)
    } else {
        let len = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / len;
        let my = points.iter().map(|p| p.1).sum::<f64>() / len;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let slope = sxy / sxx;
        (my - slope * mx, slope)
    };
    let c = log_c.exp();
    let rho = log_rho.exp();
    let residuals = points
        .iter()
        .map(|&(m, _)| (m as usize, distances[m as usize - 1] - c * rho.powf(m)))
        .collect();
    Ok(DecayFit { distances, c, rho: Some(rho), residuals })
}
