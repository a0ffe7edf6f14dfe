mod common;

use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use shotlab::bounds::{
    fewer_shots_threshold, majority_vote_error_exact, simulate_majority_vote_error, single_shot_threshold,
    vanilla_error_bound, vanilla_shots, yomo_error_bound, yomo_shots,
};
use shotlab::heads::{default_observables, ClassPartition};
use shotlab::inference::{
    estimate_expectations, exact_expectations, predict_yomo_shots, Allocation, BasisDistributions, ShotBudget, ShotPlan,
};
use shotlab::rng::{seeded, stream};
use shotlab::sim::{Axis, StateVector};

use common::{random_state, uniform_vec};

const P_GRID: [f64; 5] = [0.55, 0.6, 0.75, 0.9, 0.99];
const N_GRID: [u64; 6] = [1, 3, 5, 11, 51, 101];

#[test]
fn exact_majority_error_sits_below_hoeffding() {
    for p in P_GRID {
        for n in N_GRID {
            let exact = majority_vote_error_exact(p, n).unwrap();
            let bound = yomo_error_bound(p, n).unwrap();
            assert!(exact < bound, "p={p} n={n}: {exact} !< {bound}");
        }
    }
}

#[test]
fn exact_majority_error_matches_direct_sum() {
    // Independent oracle: plain products for small n.
    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }
    for p in P_GRID {
        for n in [1u64, 2, 3, 4, 7, 10, 21] {
            let direct: f64 = (0..=n / 2)
                .map(|k| choose(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
                .sum();
            let got = majority_vote_error_exact(p, n).unwrap();
            assert!((got - direct).abs() <= 1e-12 * direct.max(1e-300), "p={p} n={n}");
        }
    }
}

#[test]
fn monte_carlo_majority_error_within_three_sigma() {
    let trials = 100_000u64;
    for (i, p) in P_GRID.into_iter().enumerate() {
        for (j, n) in N_GRID.into_iter().enumerate() {
            let exact = majority_vote_error_exact(p, n).unwrap();
            let sim = simulate_majority_vote_error(p, n, trials, &mut stream(9, &[i as u64, j as u64])).unwrap();
            let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
            assert!(
                (sim - exact).abs() <= 3.0 * sigma + 1e-12,
                "p={p} n={n}: {sim} vs {exact}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn threshold_implications(
        margin in 0.01f64..4.0,
        lipschitz in 0.25f64..4.0,
        k in 2usize..20,
        delta in 1e-4f64..0.5,
        p in 0.5001f64..0.9999,
    ) {
        if p >= fewer_shots_threshold(margin, lipschitz, k, delta).unwrap() {
            prop_assert!(yomo_shots(p, delta).unwrap() <= vanilla_shots(margin, lipschitz, k, delta).unwrap());
        }
        if p >= single_shot_threshold(margin, lipschitz, k).unwrap() {
            prop_assert!(1.0 - p <= vanilla_error_bound(margin, lipschitz, k, 1).unwrap());
        }
    }
}

/// One qubit, two classes: class 0 holds mass `p`.
fn two_class(p: f64) -> (Vec<f64>, ClassPartition) {
    (vec![p, 1.0 - p], ClassPartition::new(1, 2).unwrap())
}

#[test]
fn finite_shot_yomo_error_follows_the_binomial() {
    let repeats = 10_000u64;
    for (pi, p) in [0.55, 0.7, 0.9].into_iter().enumerate() {
        let (probs, part) = two_class(p);
        for n in [1u64, 3, 5] {
            let mut rng = stream(21, &[pi as u64, n]);
            let errors = (0..repeats)
                .filter(|_| {
                    predict_yomo_shots(&probs, &part, ShotBudget::Finite(n), &mut rng)
                        .unwrap()
                        .class
                        != 0
                })
                .count();
            let emp = errors as f64 / repeats as f64;
            let exact = majority_vote_error_exact(p, n).unwrap();
            let sigma = (exact * (1.0 - exact) / repeats as f64).sqrt();
            assert!((emp - exact).abs() <= 3.0 * sigma, "p={p} n={n}: {emp} vs {exact}");
        }
    }
}

#[test]
fn single_shot_vote_follows_the_summed_mass() {
    let mut rng = seeded(4);
    for k in [2usize, 3, 5, 8] {
        let part = ClassPartition::new(3, k).unwrap();
        let raw = uniform_vec(&mut rng, 8, 0.0, 1.0);
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
        // Enumerate bitstrings: a point mass at b always votes for b's class.
        let mut by_enumeration = vec![0.0; k];
        for (b, &pb) in probs.iter().enumerate() {
            let mut point = vec![0.0; 8];
            point[b] = 1.0;
            let class = predict_yomo_shots(&point, &part, ShotBudget::Finite(1), &mut rng)
                .unwrap()
                .class;
            by_enumeration[class] += pb;
        }
        let sums = part.aggregate_sum(&probs).unwrap();
        for (a, b) in by_enumeration.iter().zip(&sums) {
            assert!((a - b).abs() < 1e-12, "k={k}");
        }
    }
}

/// Tail frequency `P(|μ̂ − μ| > ε)` per observable when every observable
/// gets `n` shots.
fn tail_frequencies(state: &StateVector, n: u64, eps: f64, repeats: u64, seed: u64) -> Vec<f64> {
    let obs = default_observables(4, 10).unwrap();
    let dist = BasisDistributions::of_state(state).unwrap();
    let mu = exact_expectations(&dist, &obs).unwrap();
    let plan = ShotPlan::new(&obs, ShotBudget::Finite(2 * n), Allocation::RoundRobin).unwrap();
    assert!(plan.groups.iter().all(|g| g.shots == n));
    let mut hits = vec![0u64; obs.len()];
    for r in 0..repeats {
        let est = estimate_expectations(&dist, &obs, &plan, &mut stream(seed, &[r])).unwrap();
        for (h, (e, m)) in hits.iter_mut().zip(est.iter().zip(&mu)) {
            if (e - m).abs() > eps {
                *h += 1;
            }
        }
    }
    hits.iter().map(|&h| h as f64 / repeats as f64).collect()
}

fn balanced_state() -> StateVector {
    let mut s = StateVector::zero(4).unwrap();
    for q in 0..4 {
        s.apply_rotation(Axis::Y, q, FRAC_PI_2).unwrap();
    }
    s
}

#[test]
fn expectation_estimates_respect_the_range_two_envelope() {
    let mut rng = seeded(8);
    let states = [balanced_state(), random_state(&mut rng, 4), random_state(&mut rng, 4)];
    for (si, s) in states.iter().enumerate() {
        for eps in [0.1, 0.2] {
            for n in [50u64, 200] {
                let envelope = 2.0 * (-(n as f64) * eps * eps / 2.0).exp();
                let freq = tail_frequencies(s, n, eps, 2000, si as u64);
                for (o, f) in freq.iter().enumerate() {
                    assert!(*f <= envelope, "state {si} obs {o} eps={eps} n={n}: {f} > {envelope}");
                }
            }
        }
    }
}

/// The tighter `2exp(−2Nε²)` form assumes outcomes in a unit-width range;
/// ±1 outcomes break it near μ = 0. Kept as a record of that gap.
#[test]
fn unit_range_constant_is_exceeded_for_pm_one_outcomes() {
    let freq = tail_frequencies(&balanced_state(), 200, 0.1, 2000, 99);
    let literal = 2.0 * (-2.0 * 200.0 * 0.01f64).exp();
    assert!(freq.iter().any(|&f| f > literal), "{freq:?} vs {literal}");
}

#[test]
fn estimator_error_shrinks_as_one_over_root_n() {
    let s = random_state(&mut seeded(12), 4);
    let obs = default_observables(4, 10).unwrap();
    let dist = BasisDistributions::of_state(&s).unwrap();
    let mu = exact_expectations(&dist, &obs).unwrap();
    let rmse = |total: u64| -> Vec<f64> {
        let plan = ShotPlan::new(&obs, ShotBudget::Finite(total), Allocation::RoundRobin).unwrap();
        let mut sq = vec![0.0; obs.len()];
        for r in 0..200u64 {
            let est = estimate_expectations(&dist, &obs, &plan, &mut stream(total, &[r])).unwrap();
            for (acc, (e, m)) in sq.iter_mut().zip(est.iter().zip(&mu)) {
                *acc += (e - m).powi(2);
            }
        }
        sq.iter().map(|v| (v / 200.0).sqrt()).collect()
    };
    let (lo, hi) = (rmse(100), rmse(10_000));
    for (o, (a, b)) in lo.iter().zip(&hi).enumerate() {
        let ratio = a / b;
        assert!((5.0..=20.0).contains(&ratio), "obs {o}: ratio {ratio}");
    }
}
