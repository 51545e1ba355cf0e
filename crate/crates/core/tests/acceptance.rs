//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{max_min_by_enumeration, relative_gap, tiny_instance};
use fairrsa::harness::{run_sweep, write_outputs, ExperimentConfig, PreparedInstance, SweepResult};
use fairrsa::metrics::{coefficient_of_variation, provisioning};
use fairrsa::solver::{brute_force_oracle, validate_allocation, SolverConfig};
use fairrsa::welfare::welfare;
use fairrsa::{solve_alpha_fair, Allocation, Alpha, RsaInstance, SolverMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

const TINY_INSTANCES: u64 = 120;
const TINY_ALPHAS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 8.0];
const FULL_SCALE_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// One solved tiny instance at one alpha.
struct TinyCase {
    seed: u64,
    alpha: f64,
    instance: RsaInstance,
    exact: Allocation,
    oracle: Allocation,
    two_stage: Allocation,
}

fn solve_tiny_corpus() -> (Vec<TinyCase>, Duration) {
    let started = Instant::now();
    let exact = SolverConfig::exact();
    let heuristic = SolverConfig::default();
    let mut cases = Vec::new();
    for seed in 0..TINY_INSTANCES {
        let inst = tiny_instance(seed);
        for a in TINY_ALPHAS {
            let alpha = Alpha::new(a).unwrap();
            cases.push(TinyCase {
                seed,
                alpha: a,
                exact: solve_alpha_fair(&inst, alpha, &exact).unwrap(),
                oracle: brute_force_oracle(&inst, alpha).unwrap(),
                two_stage: solve_alpha_fair(&inst, alpha, &heuristic).unwrap(),
                instance: inst.clone(),
            });
        }
    }
    (cases, started.elapsed())
}

fn oracle_equivalence(cases: &[TinyCase], elapsed: Duration) -> Verdict {
    let mut mismatches = Vec::new();
    let mut infeasible = 0;
    for c in cases {
        if relative_gap(c.exact.objective, c.oracle.objective) > 1e-9
            || c.exact.served != c.oracle.served
        {
            mismatches.push(format!("seed {} alpha {}", c.seed, c.alpha));
        }
        for a in [&c.exact, &c.oracle] {
            if !validate_allocation(&a.sizes, &a.starts, &c.instance, false).is_empty() {
                infeasible += 1;
            }
        }
    }
    let fast = elapsed < Duration::from_secs(60);
    Verdict::new(
        mismatches.is_empty() && infeasible == 0 && fast,
        format!(
            "{} solves, {} objective mismatches {:?}, {} infeasible, {:.1}s",
            cases.len(),
            mismatches.len(),
            mismatches.iter().take(3).collect::<Vec<_>>(),
            infeasible,
            elapsed.as_secs_f64()
        ),
    )
}

fn max_min_limit(cases: &[TinyCase]) -> Verdict {
    let mut checked = 0;
    let mut misses = Vec::new();
    for c in cases.iter().filter(|c| c.alpha == 8.0) {
        let truth = max_min_by_enumeration(&c.instance);
        let got = c.exact.min_served_normalized(&c.instance.u);
        checked += 1;
        if got != truth {
            misses.push(format!("seed {}: {got:?} vs {truth:?}", c.seed));
        }
    }
    Verdict::new(
        misses.is_empty(),
        format!("{checked} instances, {} misses {:?}", misses.len(), misses.iter().take(3).collect::<Vec<_>>()),
    )
}

fn pareto_violations(inst: &RsaInstance, alloc: &Allocation) -> usize {
    (0..inst.num_connections())
        .filter(|&i| inst.p.is_non_contending(i) && alloc.sizes[i] != inst.u.max_size(i))
        .count()
}

fn pareto_property(cases: &[TinyCase], sweeps: &[FullRun]) -> Verdict {
    let mut solves = 0;
    let mut violations = 0;
    for c in cases {
        for a in [&c.exact, &c.oracle, &c.two_stage] {
            solves += 1;
            violations += pareto_violations(&c.instance, a);
        }
    }
    let mut pinned = 0;
    for run in sweeps {
        let inst = &run.prepared.instance;
        pinned += (0..inst.num_connections())
            .filter(|&i| inst.p.is_non_contending(i))
            .count();
        for p in &run.result.points {
            solves += 1;
            violations += pareto_violations(inst, &p.allocation);
        }
    }
    Verdict::new(
        violations == 0,
        format!("{solves} solves, {violations} violations, {pinned} non-contending connections at full scale"),
    )
}

fn metric_correctness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let horizon = rng.random_range(1..=200);
        let mu = rng.random_range(0.0..5.0);
        let sigma: f64 = rng.random_range(0.05..1.0);
        let dist = LogNormal::new(mu, sigma).unwrap();
        let samples: Vec<f64> = (0..horizon).map(|_| (dist.sample(&mut rng) / 2.0).min(100.0)).collect();
        let size = f64::from(rng.random_range(0..=100u32));
        let (plus, minus) = provisioning(size, &samples);
        let mean = samples.iter().sum::<f64>() / horizon as f64;
        let scale = size.max(mean).max(1.0);
        worst = worst.max(((plus - minus) - (size - mean)).abs() / scale);
    }
    let cv = coefficient_of_variation(&[2.0, 4.0]).unwrap();
    let cv_ok = (cv - (2.0f64 / 9.0).sqrt()).abs() <= 1e-12
        && (cv - 0.471_404_520_791_031_7).abs() <= 1e-12
        && coefficient_of_variation(&[3.0; 6]).unwrap() == 0.0;
    Verdict::new(
        worst <= 1e-12 && cv_ok,
        format!("worst identity error {worst:.2e} over 10000 pairs, CV([2,4]) = {cv:.15}"),
    )
}

struct FullRun {
    seed: u64,
    config: ExperimentConfig,
    prepared: PreparedInstance,
    result: SweepResult,
    elapsed: Duration,
}

fn full_runs() -> Vec<FullRun> {
    FULL_SCALE_SEEDS
        .iter()
        .map(|&seed| {
            let config = ExperimentConfig {
                seed,
                ..ExperimentConfig::default()
            };
            let started = Instant::now();
            let (prepared, result) = run_sweep(&config).unwrap();
            FullRun {
                seed,
                config,
                prepared,
                result,
                elapsed: started.elapsed(),
            }
        })
        .collect()
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn trend_reproduction(runs: &[FullRun]) -> Verdict {
    let mut blocking_ok = true;
    let mut icop = Vec::new();
    let mut icup = Vec::new();
    let mut util_at_two = Vec::new();
    let mut plateau = Vec::new();
    let mut timed_out = false;
    for run in runs {
        let pts = &run.result.points;
        let b0 = run.result.point(0.0).unwrap().report.blocking_percent;
        let max_ok = pts.iter().all(|p| p.report.blocking_percent <= b0);
        let zero_ok = pts
            .iter()
            .any(|p| p.alpha <= 1.0 && p.report.blocking_percent == 0.0);
        blocking_ok &= max_ok && zero_ok;
        let two = &run.result.point(2.0).unwrap().report;
        icop.push(two.icop.unwrap_or(f64::NAN));
        icup.push(two.icup.unwrap_or(f64::NAN));
        util_at_two.push(two.utilization_fs_link as f64);
        plateau.push(median(
            pts.iter()
                .filter(|p| p.alpha >= 0.3 - 1e-9)
                .map(|p| p.report.utilization_fs_link as f64)
                .collect(),
        ));
        timed_out |= run.result.any_timed_out();
        println!(
            "    seed {}: blocking(0) = {b0}%, max over grid ok = {max_ok}, zero for some alpha <= 1 = {zero_ok}, \
             ICOP(2) = {:.3}, ICUP(2) = {:.3}, utilization(2) = {}, {:.1}s",
            run.seed,
            two.icop.unwrap_or(f64::NAN),
            two.icup.unwrap_or(f64::NAN),
            two.utilization_fs_link,
            run.elapsed.as_secs_f64()
        );
    }
    let (icop_m, icup_m) = (median(icop), median(icup));
    let improvements_ok = (0.05..=0.5).contains(&icop_m) && (0.4..=0.95).contains(&icup_m);
    let (u2, up) = (median(util_at_two), median(plateau));
    let drift = (u2 - up).abs() / up;
    let utilization_ok = drift <= 0.15;
    Verdict::new(
        blocking_ok && improvements_ok && utilization_ok && !timed_out,
        format!(
            "(a) blocking {}; (b) median ICOP(2) = {icop_m:.3} in [0.05, 0.5], median ICUP(2) = {icup_m:.3} in [0.4, 0.95]: {}; \
             (c) utilization(2) = {u2} vs plateau {up}, drift {:.1}%: {}; time budget {}",
            if blocking_ok { "ok" } else { "FAILED" },
            if improvements_ok { "ok" } else { "FAILED" },
            100.0 * drift,
            if utilization_ok { "ok" } else { "FAILED" },
            if timed_out { "EXCEEDED" } else { "ok" },
        ),
    )
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(dir).unwrap().display().to_string();
                out.push((name, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(run: &FullRun) -> Verdict {
    let mut config = run.config.clone();
    config.dump_fluctuations = true;
    config.charts = true;
    let first = tempfile::tempdir().unwrap();
    write_outputs(&config, &run.prepared, &run.result, first.path()).unwrap();
    let (prepared, result) = run_sweep(&config).unwrap();
    let second = tempfile::tempdir().unwrap();
    write_outputs(&config, &prepared, &result, second.path()).unwrap();

    let (a, b) = (read_tree(first.path()), read_tree(second.path()));
    let differing: Vec<&String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| &x.0)
        .collect();
    let same = a.len() == b.len() && differing.is_empty();
    Verdict::new(
        same,
        format!("{} files compared across two seed-{} sweeps, {} differ", a.len(), run.seed, differing.len()),
    )
}

fn welfare_suite() -> Verdict {
    let w = |v: &[f64], a: f64| welfare(v, Alpha::new(a).unwrap()).unwrap();
    let examples = [
        (w(&[1.0, 1.0], 0.0), 2.0),
        (w(&[1.0, 1.0], 1.0), 0.0),
        (w(&[0.5], 2.0), -2.0),
        (w(&[0.25, 0.75], 0.5), 2.0 * (0.5 + 0.75f64.sqrt())),
    ];
    let examples_ok = examples.iter().all(|(got, want)| (got - want).abs() <= 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for trial in 0..1000 {
        let n = rng.random_range(1..=6);
        let alpha = if trial % 10 == 0 { 1.0 } else { rng.random_range(0.0..8.0) };
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..=1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..=1.0)).collect();
        let lambda = rng.random_range(0.01..0.99);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        let lhs = w(&mix, alpha);
        let rhs = lambda * w(&x, alpha) + (1.0 - lambda) * w(&y, alpha);
        if lhs < rhs - 1e-9 * rhs.abs().max(1.0) {
            violations += 1;
        }
    }
    Verdict::new(
        examples_ok && violations == 0,
        format!(
            "worked examples {}, {violations} concavity violations in 1000 random pairs",
            if examples_ok { "match" } else { "MISMATCH" }
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, name: &'static str, v: Verdict| {
        println!(
            "criterion {id} [{}] {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, name, v));
    };

    let (cases, elapsed) = solve_tiny_corpus();
    report(1, "oracle equivalence", oracle_equivalence(&cases, elapsed));
    report(2, "max-min limit at alpha = 8", max_min_limit(&cases));

    println!("    running full-scale sweeps for seeds {FULL_SCALE_SEEDS:?}");
    let runs = full_runs();
    report(3, "Pareto property", pareto_property(&cases, &runs));
    report(4, "metric correctness", metric_correctness());
    report(5, "trend reproduction at full scale", trend_reproduction(&runs));
    report(6, "determinism", determinism(&runs[0]));
    report(7, "welfare function suite", welfare_suite());

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    let modes = [SolverMode::Exact, SolverMode::BruteForce, SolverMode::TwoStage];
    println!(
        "acceptance: {} of {} criteria passed (modes exercised: {})",
        results.len() - failed.len(),
        results.len(),
        modes.map(|m| m.to_string()).join(", ")
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
