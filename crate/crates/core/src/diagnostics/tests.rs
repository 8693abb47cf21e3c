use super::*;
use crate::engine::{run, AlgorithmConfig, RunOptions, RunResult, TruncationKind};
use crate::problems::{Heterogeneity, LinearProblem, PcaProblem};
use crate::schedule::{BoundSchedule, PowerSchedule};
use crate::topology::{directed_ring, example1_blocks, static_metropolis, AdjacencyMatrix, TopologySchedule};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn full() -> RunOptions {
    RunOptions { record_every: 1, full_trace: true }
}

/// Explicit `D_⊥ = (I − 𝟙𝟙ᵀ/N) ⊗ I_l` applied to `x`.
fn d_perp_oracle(x: &[f64], l: usize) -> f64 {
    let n = x.len() / l;
    let mut y = vec![0.0; x.len()];
    for a in 0..n * l {
        for b in 0..n * l {
            let (i, p) = (a / l, a % l);
            let (j, q) = (b / l, b % l);
            if p == q {
                let e = if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64;
                y[a] += e * x[b];
            }
        }
    }
    crate::linalg::norm(&y)
}

#[test]
fn disagreement_examples() {
    assert_eq!(disagreement_norm(&[2.0, 1.0, 2.0, 1.0, 2.0, 1.0], 2).unwrap(), 0.0);
    let d = disagreement_norm(&[1.0, -1.0], 1).unwrap();
    assert!((d - 2f64.sqrt()).abs() < 1e-15);
    assert!((d - d_perp_oracle(&[1.0, -1.0], 1)).abs() < 1e-15);
    let x = [0.3, -1.0, 2.0, 4.0, 0.5, 0.5, -2.0, 1.0, 0.0];
    assert!((disagreement_norm(&x, 3).unwrap() - d_perp_oracle(&x, 3)).abs() < 1e-13);
    assert!(matches!(disagreement_norm(&x, 2), Err(DiagnosticsError::BadLength { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn disagreement_ignores_consensus_shifts(
        n in 1usize..7,
        l in 1usize..4,
        xs in prop::collection::vec(-5.0f64..5.0, 24),
        v in prop::collection::vec(-5.0f64..5.0, 4),
        c in -3.0f64..3.0,
    ) {
        let x: Vec<f64> = (0..n * l).map(|t| xs[t % xs.len()] + t as f64 * 0.1).collect();
        let shifted: Vec<f64> = x.iter().enumerate().map(|(t, a)| a + c * v[t % l]).collect();
        let a = disagreement_norm(&x, l).unwrap();
        let b = disagreement_norm(&shifted, l).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
        prop_assert!(a >= 0.0);
        prop_assert!((a - d_perp_oracle(&x, l)).abs() <= 1e-10 * (1.0 + a));
    }
}

struct Fixture {
    problem: PcaProblem,
    schedule: TopologySchedule,
    config: AlgorithmConfig,
    result: RunResult,
}

/// Small PCA run pushed into several truncations by a large initial step.
fn truncating_run(seed: u64, static_topology: bool, horizon: u64) -> Fixture {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = 6;
    let problem = PcaProblem::example1(n, 3, Heterogeneity::Heterogeneous { spread: 0.5 }, &mut r).unwrap();
    let schedule = if static_topology {
        static_metropolis(n, &mut r).unwrap()
    } else {
        example1_blocks(n, &mut r).unwrap()
    };
    let config = AlgorithmConfig {
        x_star: vec![0.5; 3],
        gamma: PowerSchedule::harmonic(6.0),
        bounds: BoundSchedule::powers_of_two(),
        horizon,
        seed,
    };
    let result = run(&problem, &schedule, &config, crate::engine::NetworkState::uniform(n, &config.x_star), &full()).unwrap();
    Fixture { problem, schedule, config, result }
}

fn lemma41(f: &Fixture, trace: &TruncationTrace) -> Vec<Lemma41Violation> {
    let traj = f.result.trace.as_ref().unwrap();
    let aux = build_auxiliary_sequences(traj, trace, &f.problem, &f.config.x_star).unwrap();
    check_lemma41(&aux, &f.schedule, &f.config.gamma, &f.config.bounds, &f.problem, &f.config.x_star).unwrap()
}

#[test]
fn traces_from_events_and_sigmas_agree() {
    for seed in 0..3 {
        let f = truncating_run(seed, false, 300);
        let a = TruncationTrace::from_events(6, 300, &f.result.events);
        let b = TruncationTrace::from_sigmas(&f.result.trace.as_ref().unwrap().sigmas);
        assert_eq!(a.tau, b.tau);
        assert_eq!(a.tau_agent, b.tau_agent);
        for i in 0..6 {
            assert_eq!(a.changes(i), b.changes(i));
        }
        assert!(a.final_sigma() > 0);
    }
}

#[test]
fn tau_definitions() {
    let f = truncating_run(1, false, 300);
    let t = TruncationTrace::from_events(6, 300, &f.result.events);
    let ms: Vec<u64> = t.tau.keys().copied().collect();
    // σ_k grows by at most one per step, so every level up to the final one is hit
    assert_eq!(ms, (0..=t.final_sigma()).collect::<Vec<_>>());
    for w in ms.windows(2) {
        assert!(t.tau(w[0]).unwrap() <= t.tau(w[1]).unwrap());
    }
    for &m in &ms {
        let min = (0..6).filter_map(|i| t.tau_agent(i, m)).min().unwrap();
        assert_eq!(t.tau(m), Some(min));
        for i in 0..6 {
            let expected = match (t.tau_agent(i, m), t.tau(m + 1)) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (Some(a), None) => Some(a),
                (None, b) => b,
            };
            assert_eq!(t.tau_tilde(i, m), expected);
        }
    }
}

#[test]
fn auxiliary_sequences_without_truncation_coincide() {
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let p = PcaProblem::example1(4, 3, Heterogeneity::Homogeneous, &mut r).unwrap();
    let s = static_metropolis(4, &mut r).unwrap();
    let c = AlgorithmConfig {
        x_star: vec![0.5; 3],
        gamma: PowerSchedule::harmonic(0.3),
        bounds: BoundSchedule::Geometric { m0: 4.0, ratio: 2.0 },
        horizon: 200,
        seed: 3,
    };
    let res = run(&p, &s, &c, crate::engine::NetworkState::uniform(4, &c.x_star), &full()).unwrap();
    assert!(res.events.is_empty());
    let traj = res.trace.as_ref().unwrap();
    let trace = TruncationTrace::from_events(4, 200, &res.events);
    let aux = build_auxiliary_sequences(traj, &trace, &p, &c.x_star).unwrap();
    assert_eq!(aux.xs, traj.xs);
    for k in 0..200 {
        for i in 0..4 {
            let f = p.true_local(i, traj.x(k, i)).unwrap();
            let eps: Vec<f64> = traj.observation(k, i).iter().zip(&f).map(|(o, f)| o - f).collect();
            assert_eq!(aux.eps(k, i), eps.as_slice());
        }
    }
    assert!(check_lemma41(&aux, &s, &c.gamma, &c.bounds, &p, &c.x_star).unwrap().is_empty());
}

#[test]
fn auxiliary_cases_follow_the_counters() {
    let f = truncating_run(2, true, 300);
    let traj = f.result.trace.as_ref().unwrap();
    let trace = TruncationTrace::from_events(6, 300, &f.result.events);
    let aux = build_auxiliary_sequences(traj, &trace, &f.problem, &f.config.x_star).unwrap();
    let again = build_auxiliary_sequences(traj, &trace, &f.problem, &f.config.x_star).unwrap();
    assert_eq!(aux, again);
    let mut jumps = 0;
    for k in 0..=300 {
        let sigma_k = aux.sigma[k];
        assert_eq!(aux.cases[k].len(), 6);
        for i in 0..6 {
            let s = traj.sigmas[k][i];
            match aux.cases[k][i] {
                AuxCase::Reset => assert_eq!(aux.x(k, i), f.config.x_star.as_slice()),
                AuxCase::Actual => assert_eq!(aux.x(k, i), traj.x(k, i)),
            }
            if s < sigma_k {
                assert_eq!(aux.cases[k][i], AuxCase::Reset);
            } else {
                assert_eq!(aux.cases[k][i], AuxCase::Actual);
            }
        }
        if k > 0 && aux.sigma[k] == aux.sigma[k - 1] + 1 {
            jumps += 1;
            for i in 0..6 {
                assert_eq!(aux.x(k, i), f.config.x_star.as_slice());
            }
        }
    }
    assert!(jumps >= 2);
}

#[test]
fn lemma41_holds_on_static_topologies() {
    for seed in 0..5 {
        let f = truncating_run(seed, true, 400);
        assert!(f.result.own_overflows() >= 2, "seed {seed}");
        let trace = TruncationTrace::from_events(6, 400, &f.result.events);
        let v = lemma41(&f, &trace);
        assert!(v.is_empty(), "seed {seed}: {v:?}");
    }
}

#[test]
fn corrupted_counter_is_caught() {
    let f = truncating_run(0, true, 400);
    let mut sigmas = f.result.trace.as_ref().unwrap().sigmas.clone();
    let k = 150;
    sigmas[k][2] += 1;
    let trace = TruncationTrace::from_sigmas(&sigmas);
    assert!(!lemma41(&f, &trace).is_empty());
}

#[test]
fn lemma42_holds_on_verified_schedules() {
    for seed in 0..5 {
        for static_topology in [true, false] {
            let f = truncating_run(seed, static_topology, 400);
            let trace = TruncationTrace::from_events(6, 400, &f.result.events);
            let g = f.schedule.persistent_edges(400);
            let v = check_lemma42(&trace, &g, f.schedule.b_window()).unwrap();
            assert!(v.is_empty(), "seed {seed}: {v:?}");
        }
    }
}

#[test]
fn lemma42_flags_a_slow_neighbour() {
    let s = directed_ring(3).unwrap();
    let g = s.persistent_edges(0);
    // agent 0 jumps to 1 at k = 5, agent 1 never follows
    let sigmas: Vec<Vec<u64>> = (0..20).map(|k| vec![u64::from(k >= 5), 0, 0]).collect();
    let v = check_lemma42(&TruncationTrace::from_sigmas(&sigmas), &g, 1).unwrap();
    assert!(v.iter().any(|e| matches!(e, Lemma42Violation::Gap { i: 0, j: 1, k: 5, .. })));
    assert!(v.iter().any(|e| matches!(e, Lemma42Violation::Spread { m: 1, .. })));
    // zero truncations: nothing to check
    let flat = vec![vec![0u64; 3]; 20];
    assert!(check_lemma42(&TruncationTrace::from_sigmas(&flat), &g, 1).unwrap().is_empty());
    let disconnected = TopologySchedule::constant(AdjacencyMatrix::identity(3), 1).unwrap().persistent_edges(0);
    assert_eq!(
        check_lemma42(&TruncationTrace::from_sigmas(&flat), &disconnected, 1),
        Err(DiagnosticsError::NotStronglyConnected)
    );
}

#[test]
fn cessation_examples() {
    let none = TruncationTrace::from_sigmas(&vec![vec![0u64; 2]; 11]);
    let c = detect_truncation_cessation(&none);
    assert_eq!((c.final_sigma, c.last_event, c.still_truncating, c.agreed), (0, None, false, true));

    let sigmas: Vec<Vec<u64>> = (0..=10_000u64).map(|k| vec![u64::from(k >= 3) + u64::from(k >= 17); 2]).collect();
    let c = detect_truncation_cessation(&TruncationTrace::from_sigmas(&sigmas));
    assert_eq!((c.final_sigma, c.last_event, c.still_truncating), (2, Some(17), false));

    let late: Vec<Vec<u64>> = (0..=100u64).map(|k| vec![u64::from(k >= 95), 0]).collect();
    let c = detect_truncation_cessation(&TruncationTrace::from_sigmas(&late));
    assert!(c.still_truncating);
    assert!(!c.agreed);
}

#[test]
fn counters_agree_after_cessation() {
    for seed in 0..4 {
        let f = truncating_run(seed, false, 2000);
        let trace = TruncationTrace::from_events(6, 2000, &f.result.events);
        let c = detect_truncation_cessation(&trace);
        assert!(!c.still_truncating);
        let last = c.last_event.unwrap();
        let sigmas = &f.result.trace.as_ref().unwrap().sigmas;
        for row in &sigmas[last as usize..] {
            assert!(row.iter().all(|&s| s == c.final_sigma));
        }
        // after the last change the average moves by exactly the mean innovation
        let traj = f.result.trace.as_ref().unwrap();
        for k in last as usize..2000 {
            let before = crate::linalg::stacked_mean(&traj.xs[k], 3);
            let after = crate::linalg::stacked_mean(&traj.xs[k + 1], 3);
            let mo = crate::linalg::stacked_mean(&traj.observations[k], 3);
            let g = f.config.gamma.at(k as u64);
            for d in 0..3 {
                assert!((after[d] - before[d] - g * mo[d]).abs() < 1e-10);
            }
        }
    }
}

fn noisy_scalar_run(gamma: PowerSchedule, noise: f64, horizon: u64) -> (LinearProblem, RunResult) {
    let p = LinearProblem::new(vec![vec![1.0]; 3], vec![0.5], noise).unwrap();
    let s = directed_ring(3).unwrap();
    let c = AlgorithmConfig {
        x_star: vec![0.0],
        gamma,
        bounds: BoundSchedule::Geometric { m0: 10.0, ratio: 2.0 },
        horizon,
        seed: 5,
    };
    let res = run(&p, &s, &c, crate::engine::NetworkState::uniform(3, &[0.0]), &full()).unwrap();
    (p, res)
}

#[test]
fn noise_partial_sums() {
    let (p, res) = noisy_scalar_run(PowerSchedule::harmonic(1.0), 0.0, 500);
    let d = noise_partial_sum_diag(res.trace.as_ref().unwrap(), &p, &PowerSchedule::harmonic(1.0), 10.0).unwrap();
    assert!(d.norms.iter().flatten().all(|v| *v == 0.0));

    let (p, res) = noisy_scalar_run(PowerSchedule::harmonic(1.0), 1.0, 8000);
    let summable = noise_partial_sum_diag(res.trace.as_ref().unwrap(), &p, &PowerSchedule::harmonic(1.0), 10.0).unwrap();
    assert!(summable.max_tail() < 0.05, "{}", summable.max_tail());

    let constant = PowerSchedule::constant(1.0);
    let (p, res) = noisy_scalar_run(constant, 1.0, 8000);
    let rough = noise_partial_sum_diag(res.trace.as_ref().unwrap(), &p, &constant, 10.0).unwrap();
    assert!(rough.max_tail() > 1.0, "{}", rough.max_tail());

    let no_trace = RunResult { trace: None, ..res };
    assert!(no_trace.trace.is_none());
}

#[test]
fn metrics_fields() {
    let f = truncating_run(3, false, 200);
    for m in &f.result.metrics {
        assert!(m.disagreement >= 0.0);
        assert!(m.sigma_max >= m.sigma_min);
        assert!(m.consensus_error.is_some());
        assert_eq!(m.root_distance.kind(), "exact");
    }
    for w in f.result.metrics.windows(2) {
        assert!(w[1].trunc_events_cum >= w[0].trunc_events_cum);
    }
    let total = f.result.events.iter().filter(|e| e.kind == TruncationKind::OwnOverflow).count() as u64;
    assert_eq!(f.result.metrics.last().unwrap().trunc_events_cum, total);
}

/// On switching graphs the recursion can fail at `k + 1` when a lagging agent
/// `i` gains, at step `k`, a neighbour `j` that was already at the top level
/// one step earlier (so `x_{j,k}` need not be `x*`) but was not linked to `i`
/// at `k − 1`. Every mismatch must be of that form.
#[test]
fn switching_mismatches_come_from_new_links_only() {
    let mut total = 0;
    for seed in 0..10 {
        let f = truncating_run(seed, false, 1000);
        let traj = f.result.trace.as_ref().unwrap();
        let trace = TruncationTrace::from_events(6, 1000, &f.result.events);
        for v in lemma41(&f, &trace) {
            let Lemma41Violation::State { k, agent: i, .. } = v else {
                panic!("unexpected counter mismatch {v:?}");
            };
            let k = k as usize - 1;
            let m = trace.sigma_max_at(k as u64);
            assert!(traj.sigmas[k][i] < m);
            let now = f.schedule.at(k as u64);
            let before = f.schedule.at(k as u64 - 1);
            let culprit = now.neighbors(i).unwrap().into_iter().any(|j| {
                traj.sigmas[k][j] == m
                    && traj.sigmas[k - 1][j] == m
                    && traj.x(k, j) != f.config.x_star.as_slice()
                    && !before.neighbors(i).unwrap().contains(&j)
            });
            assert!(culprit, "seed {seed}, step {k}, agent {i}");
            total += 1;
        }
    }
    assert!(total > 0);
}
