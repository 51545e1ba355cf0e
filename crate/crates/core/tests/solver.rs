mod common;

use std::cmp::Ordering;

use common::{instance, relative_gap, tiny_instance};
use fairrsa::solver::{
    brute_force_oracle, brute_force_oracle_with, enumerate_feasible, ranks_served_first,
    read_allocation_csv, validate_allocation, OracleLimits, ProofStatus, SolverConfig,
};
use fairrsa::welfare::welfare;
use fairrsa::{solve_alpha_fair, Allocation, Alpha, RsaInstance, SolverMode};

const ALPHAS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 8.0];

fn solve(inst: &RsaInstance, alpha: f64, config: &SolverConfig) -> Allocation {
    solve_alpha_fair(inst, Alpha::new(alpha).unwrap(), config).unwrap()
}

/// Ordering of two allocations under the served-first rule when it applies.
fn rank(a: &Allocation, b: &Allocation, alpha: f64) -> Ordering {
    let served = if ranks_served_first(Alpha::new(alpha).unwrap()) {
        a.served.cmp(&b.served)
    } else {
        Ordering::Equal
    };
    served.then(if relative_gap(a.objective, b.objective) <= 1e-9 {
        Ordering::Equal
    } else {
        a.objective.total_cmp(&b.objective)
    })
}

#[test]
fn small_hand_instance_matches_enumeration() {
    // n = 3 on k = 4 links, M = 8, m = 4.
    let inst = instance(
        &[vec![1, 1, 0, 0], vec![0, 1, 1, 0], vec![0, 0, 1, 1]],
        &[8, 6, 5],
        8,
        4,
    );
    for alpha in [0.0, 0.5, 1.0, 2.0] {
        let exact = solve(&inst, alpha, &SolverConfig::exact());
        let oracle = brute_force_oracle(&inst, Alpha::new(alpha).unwrap()).unwrap();
        assert!(relative_gap(exact.objective, oracle.objective) <= 1e-9, "alpha {alpha}");
        assert_eq!(exact.status, ProofStatus::ExactOptimal);
        assert!(validate_allocation(&exact.sizes, &exact.starts, &inst, false).is_empty());
    }
}

#[test]
fn utilitarian_fills_a_shared_link() {
    let inst = instance(&[vec![1], vec![1]], &[10, 10], 10, 5);
    let a = solve(&inst, 0.0, &SolverConfig::exact());
    assert_eq!(a.sizes.iter().sum::<u32>(), 10);
    assert_eq!(a, solve(&inst, 0.0, &SolverConfig::exact()));
}

#[test]
fn heuristic_is_feasible_and_never_beats_exact() {
    for seed in 0..150 {
        let inst = tiny_instance(1000 + seed);
        for alpha in ALPHAS {
            let exact = solve(&inst, alpha, &SolverConfig::exact());
            let heuristic = solve(&inst, alpha, &SolverConfig::default());
            assert!(validate_allocation(&heuristic.sizes, &heuristic.starts, &inst, false).is_empty());
            assert_ne!(rank(&heuristic, &exact, alpha), Ordering::Greater, "seed {seed} alpha {alpha}");
        }
    }
}

#[test]
fn strict_boundary_matches_strict_enumeration() {
    let strict = SolverConfig {
        strict_first_slot: true,
        ..SolverConfig::exact()
    };
    for seed in 0..60 {
        let inst = tiny_instance(5000 + seed);
        for alpha in ALPHAS {
            let exact = solve(&inst, alpha, &strict);
            let oracle = brute_force_oracle_with(
                &inst,
                Alpha::new(alpha).unwrap(),
                &OracleLimits::default(),
                true,
            )
            .unwrap();
            assert!(relative_gap(exact.objective, oracle.objective) <= 1e-9);
            assert_eq!(exact.served, oracle.served);
            assert!(validate_allocation(&exact.sizes, &exact.starts, &inst, true).is_empty());
        }
    }
}

#[test]
fn scaling_the_objective_keeps_the_argmax() {
    for seed in 0..40 {
        let inst = tiny_instance(7000 + seed);
        let mut candidates: Vec<Vec<u32>> = Vec::new();
        enumerate_feasible(&inst, false, &OracleLimits::default(), |sizes, _| {
            if sizes.iter().all(|&s| s > 0) {
                candidates.push(sizes.to_vec());
            }
        })
        .unwrap();
        if candidates.is_empty() {
            continue;
        }
        for alpha in ALPHAS {
            let a = Alpha::new(alpha).unwrap();
            let value = |sizes: &Vec<u32>| {
                let norms: Vec<f64> = (0..sizes.len())
                    .map(|i| f64::from(sizes[i]) / f64::from(inst.u.peak(i)))
                    .collect();
                welfare(&norms, a).unwrap()
            };
            let best = |scale: f64| {
                (0..candidates.len())
                    .max_by(|&x, &y| {
                        (scale * value(&candidates[x])).total_cmp(&(scale * value(&candidates[y])))
                    })
                    .unwrap()
            };
            assert_eq!(best(1.0), best(3.7));
            assert_eq!(best(1.0), best(0.01));
        }
    }
}

#[test]
fn medium_instance_exact_dominates_heuristic() {
    // Eight connections on a six-link ring, M = 20, m = 10.
    let rows: Vec<Vec<u8>> = (0..8)
        .map(|i| (0..6).map(|l| u8::from((l + 6 - i % 6) % 6 < 1 + i % 3)).collect())
        .collect();
    let inst = instance(&rows, &[20, 14, 9, 18, 6, 20, 12, 16], 20, 10);
    for alpha in [0.0, 1.0, 3.0] {
        let exact = solve(&inst, alpha, &SolverConfig::exact());
        let heuristic = solve(&inst, alpha, &SolverConfig::default());
        assert!(validate_allocation(&exact.sizes, &exact.starts, &inst, false).is_empty());
        assert!(validate_allocation(&heuristic.sizes, &heuristic.starts, &inst, false).is_empty());
        assert_ne!(rank(&heuristic, &exact, alpha), Ordering::Greater);
        assert_eq!(exact.mode, SolverMode::Exact);
    }
}

#[test]
fn allocation_dump_round_trips_through_the_validator() {
    let inst = tiny_instance(42);
    let alloc = solve(&inst, 1.0, &SolverConfig::exact());
    let mut buf = Vec::new();
    alloc.write_csv(&mut buf).unwrap();
    let records = read_allocation_csv(buf.as_slice()).unwrap();
    let sizes: Vec<u32> = records.iter().map(|r| r.size).collect();
    let starts: Vec<Option<u32>> = records.iter().map(|r| r.start).collect();
    assert_eq!(sizes, alloc.sizes);
    assert_eq!(starts, alloc.starts);
    assert!(validate_allocation(&sizes, &starts, &inst, false).is_empty());
}
