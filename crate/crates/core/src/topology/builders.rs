//! Built-in schedule constructors.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use super::{AdjacencyMatrix, TopologyError, TopologySchedule};

/// Undirected connected graph on `n` nodes: a uniformly shuffled random
/// recursive tree plus roughly `extra_per_node · n / 2` random chords.
pub fn random_connected_graph(n: usize, extra_per_node: f64, rng: &mut dyn RngCore) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); n];
    if n < 2 {
        return adj;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for t in 1..n {
        let parent = order[rng.random_range(0..t)];
        adj[order[t]].insert(parent);
        adj[parent].insert(order[t]);
    }
    let chords = (extra_per_node * n as f64 / 2.0).round() as usize;
    for _ in 0..chords {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    adj
}

/// Symmetric Metropolis–Hastings weights `ω_ij = 1 / (1 + max(deg_i, deg_j))`
/// on the edges, remaining mass on the diagonal. Doubly stochastic for any
/// undirected graph.
pub fn metropolis_weights(adj: &[BTreeSet<usize>]) -> AdjacencyMatrix {
    let n = adj.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        let mut off = 0.0;
        for &j in &adj[i] {
            let v = 1.0 / (1.0 + adj[i].len().max(adj[j].len()) as f64);
            w[i * n + j] = v;
            off += v;
        }
        w[i * n + i] = 1.0 - off;
    }
    AdjacencyMatrix::from_row_major(n, w).expect("metropolis weights are finite")
}

fn block_diag(a: &AdjacencyMatrix, b: &AdjacencyMatrix) -> AdjacencyMatrix {
    let (na, nb) = (a.n(), b.n());
    let n = na + nb;
    let mut w = vec![0.0; n * n];
    for i in 0..na {
        w[i * n..i * n + na].copy_from_slice(&a.as_row_major()[i * na..(i + 1) * na]);
    }
    for i in 0..nb {
        let r = na + i;
        w[r * n + na..(r + 1) * n].copy_from_slice(&b.as_row_major()[i * nb..(i + 1) * nb]);
    }
    AdjacencyMatrix::from_row_major(n, w).expect("block diagonal is well formed")
}

/// `[[½I, ½I], [½I, ½I]]`: agent `i` in the first half averages with agent
/// `i + n/2` in the second half.
pub fn half_swap_block(n: usize) -> AdjacencyMatrix {
    let h = n / 2;
    let mut w = vec![0.0; n * n];
    for i in 0..h {
        w[i * n + i] = 0.5;
        w[i * n + i + h] = 0.5;
        w[(i + h) * n + i] = 0.5;
        w[(i + h) * n + i + h] = 0.5;
    }
    AdjacencyMatrix::from_row_major(n, w).expect("block matrix is well formed")
}

/// Three-phase block schedule: `W(3k)` pairs the two halves, `W(3k+1) =
/// diag(W₁, I)`, `W(3k+2) = diag(I, W₂)`, where `W₁` and `W₂` are Metropolis
/// weights of seeded random connected graphs on each half. `B = 3`.
pub fn example1_blocks(n: usize, rng: &mut dyn RngCore) -> Result<TopologySchedule, TopologyError> {
    if n < 2 || n % 2 != 0 {
        return Err(TopologyError::Construction(format!("three-phase block schedule needs an even agent count ≥ 2, got {n}")));
    }
    let h = n / 2;
    let w1 = metropolis_weights(&random_connected_graph(h, 2.0, rng));
    let w2 = metropolis_weights(&random_connected_graph(h, 2.0, rng));
    let eye = AdjacencyMatrix::identity(h);
    TopologySchedule::periodic(vec![half_swap_block(n), block_diag(&w1, &eye), block_diag(&eye, &w2)], None, 3)
}

/// Time-invariant Metropolis weights of a seeded random connected graph.
pub fn static_metropolis(n: usize, rng: &mut dyn RngCore) -> Result<TopologySchedule, TopologyError> {
    if n == 0 {
        return Err(TopologyError::Construction("need at least one agent".into()));
    }
    TopologySchedule::constant(metropolis_weights(&random_connected_graph(n, 2.0, rng)), 1)
}

/// Agent `i` keeps half its own value and takes half from agent `i − 1 mod n`.
pub fn directed_ring(n: usize) -> Result<TopologySchedule, TopologyError> {
    if n == 0 {
        return Err(TopologyError::Construction("need at least one agent".into()));
    }
    if n == 1 {
        return TopologySchedule::constant(AdjacencyMatrix::identity(1), 1);
    }
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        w[i * n + i] = 0.5;
        w[i * n + (i + n - 1) % n] = 0.5;
    }
    TopologySchedule::constant(AdjacencyMatrix::from_row_major(n, w)?, 1)
}

pub fn complete(n: usize) -> Result<TopologySchedule, TopologyError> {
    if n == 0 {
        return Err(TopologyError::Construction("need at least one agent".into()));
    }
    TopologySchedule::constant(AdjacencyMatrix::uniform(n), 1)
}

/// Periodic schedule from row-major matrices.
pub fn explicit(n: usize, matrices: &[Vec<f64>], eta: Option<f64>, b_window: Option<u64>) -> Result<TopologySchedule, TopologyError> {
    let mats = matrices
        .iter()
        .map(|m| AdjacencyMatrix::from_row_major(n, m.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let period = mats.len() as u64;
    TopologySchedule::periodic(mats, eta, b_window.unwrap_or(period.max(1)))
}
