//! Distributed stochastic approximation with expanding truncations.
//!
//! A network of agents cooperatively seeks a root of the average of local
//! functions `f(x) = (1/N) Σ f_i(x)`. Each agent mixes its neighbours'
//! estimates through a doubly stochastic weight matrix, adds a step of its own
//! noisy observation, and resets to a fixed point `x*` (while enlarging its
//! truncation bound) whenever the candidate estimate leaves the current bound.
//! Truncation counters are kept in agreement by max-consensus.
//!
//! The crate is organised as:
//!
//! - [`topology`]: switching weight matrices, connectivity checks, product-matrix decay.
//! - [`engine`]: the synchronous truncated update and full-run driver.
//! - [`problems`]: distributed PCA, randomized Kiefer–Wolfowitz optimisation and
//!   synthetic linear problems.
//! - [`baseline`]: the same consensus + innovation update without truncations.
//! - [`diagnostics`]: disagreement, auxiliary sequences and run-time checks of the
//!   structural properties of the truncation mechanism.
//! - [`cli`]: scenario files, orchestration and result files used by the `dsaawet`
//!   binary.

pub mod baseline;
pub mod cli;
pub mod diagnostics;
pub mod engine;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod schedule;
pub mod topology;

pub use engine::{AgentState, AlgorithmConfig, NetworkState, RunOptions, RunResult};
pub use problems::{Problem, RootDistance};
pub use schedule::{BoundSchedule, PowerSchedule};
pub use topology::{AdjacencyMatrix, EdgeSet, TopologySchedule};
