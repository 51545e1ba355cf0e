//! Exhaustive enumeration over sizes and start slots, for verification.

use super::{
    validate_allocation, Allocation, ProofStatus, RsaInstance, Score,
    SolverError, SolverMode,
};
use crate::welfare::{welfare, Alpha};

/// Size guard for exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_connections: usize,
    pub max_choices: usize,
    pub max_slots: u32,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_connections: 5,
            max_choices: 4,
            max_slots: 10,
        }
    }
}

fn check_limits(instance: &RsaInstance, limits: &OracleLimits) -> Result<(), SolverError> {
    let (n, m, slots) = (
        instance.num_connections(),
        instance.u.num_choices(),
        instance.slots(),
    );
    if n > limits.max_connections || m > limits.max_choices || slots > limits.max_slots {
        return Err(SolverError::TooLarge(format!(
            "n = {n}, m = {m}, M = {slots} exceeds n <= {}, m <= {}, M <= {}",
            limits.max_connections, limits.max_choices, limits.max_slots
        )));
    }
    Ok(())
}

/// Calls `visit(sizes, starts)` once for every size vector that admits a
/// feasible placement, with the lexicographically first such placement.
pub fn enumerate_feasible<F>(
    instance: &RsaInstance,
    strict_first_slot: bool,
    limits: &OracleLimits,
    mut visit: F,
) -> Result<(), SolverError>
where
    F: FnMut(&[u32], &[Option<u32>]),
{
    check_limits(instance, limits)?;
    let n = instance.num_connections();
    let slots = instance.slots();
    let k = instance.p.num_links();
    let first = if strict_first_slot { 2 } else { 1 };
    let menus: Vec<Vec<u32>> = (0..n)
        .map(|i| std::iter::once(0).chain(instance.u.sizes(i)).collect())
        .collect();

    let mut pick = vec![0usize; n];
    loop {
        let sizes: Vec<u32> = pick.iter().zip(&menus).map(|(&j, row)| row[j]).collect();
        let within_capacity = (0..k).all(|l| {
            (0..n)
                .filter(|&i| instance.p.get(i, l) == 1)
                .map(|i| sizes[i])
                .sum::<u32>()
                <= slots
        });
        if within_capacity {
            if let Some(starts) = first_placement(instance, &sizes, first) {
                debug_assert!(
                    validate_allocation(&sizes, &starts, instance, strict_first_slot).is_empty()
                );
                visit(&sizes, &starts);
            }
        }
        // Odometer increment over menu choices.
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(());
            }
            pick[pos] += 1;
            if pick[pos] < menus[pos].len() {
                break;
            }
            pick[pos] = 0;
            pos += 1;
        }
    }
}

/// Tries start vectors in lexicographic order (by connection id) and returns
/// the first one that passes the feasibility validator.
fn first_placement(instance: &RsaInstance, sizes: &[u32], first: u32) -> Option<Vec<Option<u32>>> {
    let n = sizes.len();
    let slots = instance.slots();
    let k = instance.p.num_links();
    let mut used = vec![vec![false; slots as usize + 2]; k];
    let mut starts = vec![None; n];

    fn fits(used: &[Vec<bool>], links: &[usize], start: u32, size: u32) -> bool {
        links
            .iter()
            .all(|&l| (start..start + size).all(|s| !used[l][s as usize]))
    }

    fn mark(used: &mut [Vec<bool>], links: &[usize], start: u32, size: u32, on: bool) {
        for &l in links {
            for s in start..start + size {
                used[l][s as usize] = on;
            }
        }
    }

    fn go(
        i: usize,
        sizes: &[u32],
        links: &[Vec<usize>],
        used: &mut [Vec<bool>],
        starts: &mut [Option<u32>],
        first: u32,
        slots: u32,
    ) -> bool {
        if i == sizes.len() {
            return true;
        }
        if sizes[i] == 0 {
            starts[i] = None;
            return go(i + 1, sizes, links, used, starts, first, slots);
        }
        let size = sizes[i];
        let mut start = first;
        while start + size <= slots + 1 {
            if fits(used, &links[i], start, size) {
                mark(used, &links[i], start, size, true);
                starts[i] = Some(start);
                if go(i + 1, sizes, links, used, starts, first, slots) {
                    return true;
                }
                mark(used, &links[i], start, size, false);
            }
            start += 1;
        }
        starts[i] = None;
        false
    }

    let links: Vec<Vec<usize>> = (0..n).map(|i| instance.p.links_of(i)).collect();
    go(0, sizes, &links, &mut used, &mut starts, first, slots).then_some(starts)
}

/// Globally optimal allocation by exhaustive enumeration (default limits,
/// relaxed slot-1 boundary).
pub fn brute_force_oracle(instance: &RsaInstance, alpha: Alpha) -> Result<Allocation, SolverError> {
    brute_force_oracle_with(instance, alpha, &OracleLimits::default(), false)
}

pub fn brute_force_oracle_with(
    instance: &RsaInstance,
    alpha: Alpha,
    limits: &OracleLimits,
    strict_first_slot: bool,
) -> Result<Allocation, SolverError> {
    let served_first = super::ranks_served_first(alpha);
    let n = instance.num_connections();
    let mut best: Option<(Score, Vec<Option<u32>>)> = None;
    let mut visited = 0u64;
    enumerate_feasible(instance, strict_first_slot, limits, |sizes, starts| {
        visited += 1;
        let served: Vec<f64> = (0..n)
            .filter(|&i| sizes[i] > 0)
            .map(|i| {
                let j = instance.u.row(i).iter().position(|&u| u == sizes[i]).unwrap();
                instance.u_hat.get(i, j)
            })
            .collect();
        let w = welfare(&served, alpha).expect("menu utilities are positive");
        let mut sorted_norms: Vec<f64> = (0..n)
            .map(|i| f64::from(sizes[i]) / f64::from(instance.u.peak(i)))
            .collect();
        sorted_norms.sort_by(f64::total_cmp);
        let score = Score {
            served: served.len(),
            welfare: w,
            sorted_norms,
            sizes: sizes.to_vec(),
        };
        let better = best
            .as_ref()
            .is_none_or(|(b, _)| score.compare(b, served_first).is_gt());
        if better {
            best = Some((score, starts.to_vec()));
        }
    })?;
    let (score, starts) = best.expect("the all-blocked allocation is always feasible");
    Ok(Allocation {
        served: score.served,
        objective: score.welfare,
        sizes: score.sizes,
        starts,
        alpha: alpha.value(),
        mode: SolverMode::BruteForce,
        status: ProofStatus::ExactOptimal,
        timed_out: false,
        nodes: visited,
    })
}
