#![allow(dead_code)]

use fairrsa::solver::{enumerate_feasible, OracleLimits};
use fairrsa::topology::LinkUtilizationMatrix;
use fairrsa::welfare::{build_utility_matrix, normalize_utilities, DEFAULT_EPSILON};
use fairrsa::RsaInstance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random instance within the exhaustive-enumeration limits:
/// n <= 5, m <= 4, M <= 10, k <= 6.
pub fn tiny_instance(seed: u64) -> RsaInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=5);
    let k = rng.random_range(1..=6);
    let choices = rng.random_range(1..=4u32);
    let granule = rng.random_range(1..=10 / choices);
    let slots = choices * granule;
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|_| loop {
            let row: Vec<u8> = (0..k).map(|_| u8::from(rng.random_bool(0.5))).collect();
            if row.contains(&1) {
                break row;
            }
        })
        .collect();
    let peaks: Vec<u32> = (0..n).map(|_| rng.random_range(1..=slots)).collect();
    instance(&rows, &peaks, slots, choices as usize)
}

pub fn instance(rows: &[Vec<u8>], peaks: &[u32], slots: u32, choices: usize) -> RsaInstance {
    let p = LinkUtilizationMatrix::from_rows(rows).unwrap();
    let u = build_utility_matrix(peaks, slots, choices).unwrap();
    let u_hat = normalize_utilities(&u, DEFAULT_EPSILON).unwrap();
    RsaInstance::new(p, u, u_hat).unwrap()
}

/// Among feasible allocations serving the most connections, the largest
/// achievable minimum normalized utility over served connections.
pub fn max_min_by_enumeration(inst: &RsaInstance) -> Option<f64> {
    let mut best: Option<(usize, f64)> = None;
    enumerate_feasible(inst, false, &OracleLimits::default(), |sizes, _| {
        let served = sizes.iter().filter(|&&s| s > 0).count();
        if served == 0 {
            return;
        }
        let min = (0..sizes.len())
            .filter(|&i| sizes[i] > 0)
            .map(|i| f64::from(sizes[i]) / f64::from(inst.u.peak(i)))
            .fold(f64::INFINITY, f64::min);
        let better = match best {
            None => true,
            Some((s, m)) => served > s || (served == s && min > m),
        };
        if better {
            best = Some((served, min));
        }
    })
    .unwrap();
    best.map(|(_, m)| m)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
