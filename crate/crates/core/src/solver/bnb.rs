//! Branch-and-bound over menu choices.
//!
//! Connections that share no link are pinned to their largest menu entry up
//! front. The remaining ones are branched on in order of decreasing
//! contention. Upper bounds come from two relaxations evaluated on the
//! residual link capacities, taking the smaller:
//! - each connection independently takes its best entry that still fits;
//! - a Lagrangian relaxation of the link capacities with multipliers fitted
//!   by subgradient descent at the root.

use std::cmp::Ordering;

use super::spectrum::{first_fit_routes, search_placement, PlacementSearch};
use super::{welfare_equal, Budget, Outcome, Problem, Score, SolverConfig};

const SUBGRADIENT_ITERATIONS: usize = 300;
const PLACEMENT_BUDGET: u64 = 200_000;

/// A forbidden combination of `(connection, size)` assignments.
pub(crate) type NoGood = Vec<(usize, u32)>;

struct Incumbent {
    score: Score,
    starts: Vec<Option<u32>>,
}

struct SizeSearch<'a, 'b> {
    p: &'a Problem,
    order: Vec<usize>,
    cuts: &'a [NoGood],
    // Cuts to check when the connection at this depth is assigned.
    cuts_at_depth: Vec<Vec<usize>>,
    lambda: Vec<f64>,
    route_price: Vec<f64>,
    with_placement: bool,
    explore_ties: bool,
    config: &'a SolverConfig,
    residual: Vec<i64>,
    sizes: Vec<u32>,
    incumbent: Option<Incumbent>,
    search_nodes: u64,
    placement_gave_up: bool,
    aborted: bool,
    budget: &'b mut Budget,
}

impl<'a, 'b> SizeSearch<'a, 'b> {
    fn new(
        p: &'a Problem,
        cuts: &'a [NoGood],
        config: &'a SolverConfig,
        with_placement: bool,
        explore_ties: bool,
        budget: &'b mut Budget,
    ) -> Self {
        let pinned = p.pinned_sizes();
        let mut residual = vec![i64::from(p.usable_slots()); p.k];
        let mut sizes = vec![0; p.n];
        for (i, pin) in pinned.iter().enumerate() {
            if let Some(s) = *pin {
                sizes[i] = s;
                for &l in &p.routes[i] {
                    residual[l] -= i64::from(s);
                }
            }
        }
        let contention: Vec<usize> = (0..p.n)
            .map(|i| {
                p.routes[i]
                    .iter()
                    .map(|&l| (0..p.n).filter(|&j| j != i && p.routes[j].contains(&l)).count())
                    .sum()
            })
            .collect();
        let mut order: Vec<usize> = (0..p.n).filter(|&i| pinned[i].is_none()).collect();
        order.sort_by(|&a, &b| {
            contention[b]
                .cmp(&contention[a])
                .then(p.routes[b].len().cmp(&p.routes[a].len()))
                .then(a.cmp(&b))
        });
        let mut position = vec![usize::MAX; p.n];
        for (d, &i) in order.iter().enumerate() {
            position[i] = d;
        }
        let mut cuts_at_depth = vec![Vec::new(); order.len()];
        for (c, cut) in cuts.iter().enumerate() {
            let last = cut
                .iter()
                .map(|&(i, _)| position[i])
                .filter(|&d| d != usize::MAX)
                .max();
            if let Some(d) = last {
                cuts_at_depth[d].push(c);
            }
        }
        Self {
            p,
            order,
            cuts,
            cuts_at_depth,
            lambda: vec![0.0; p.k],
            route_price: vec![0.0; p.n],
            with_placement,
            explore_ties,
            config,
            residual,
            sizes,
            incumbent: None,
            search_nodes: 0,
            placement_gave_up: false,
            aborted: false,
            budget,
        }
    }

    fn route_capacity(&self, i: usize) -> i64 {
        self.p.routes[i]
            .iter()
            .map(|&l| self.residual[l])
            .min()
            .unwrap_or(i64::MAX)
    }

    fn apply(&mut self, i: usize, size: u32, sign: i64) {
        for &l in &self.p.routes[i] {
            self.residual[l] -= sign * i64::from(size);
        }
    }

    fn set_lambda(&mut self, lambda: Vec<f64>) {
        self.route_price = (0..self.p.n)
            .map(|i| self.p.routes[i].iter().map(|&l| lambda[l]).sum())
            .collect();
        self.lambda = lambda;
    }

    fn violates_cut(&self, depth: usize) -> bool {
        self.cuts_at_depth[depth].iter().any(|&c| {
            self.cuts[c]
                .iter()
                .all(|&(i, size)| self.sizes[i] == size)
        })
    }

    fn placement(&mut self, sizes: &[u32]) -> Option<Vec<Option<u32>>> {
        let p = self.p;
        if let Ok(starts) = first_fit_routes(
            sizes,
            &p.routes,
            p.k,
            p.slots,
            p.first_slot,
            self.config.spectrum_order,
        ) {
            return Some(starts);
        }
        match search_placement(sizes, &p.routes, p.k, p.slots, p.first_slot, PLACEMENT_BUDGET) {
            PlacementSearch::Found(starts) => Some(starts),
            PlacementSearch::Infeasible => None,
            PlacementSearch::GaveUp => {
                self.placement_gave_up = true;
                None
            }
        }
    }

    fn cut_free(&self, sizes: &[u32]) -> bool {
        !self
            .cuts
            .iter()
            .any(|cut| cut.iter().all(|&(i, s)| sizes[i] == s))
    }

    /// Offers a complete size vector as a new incumbent.
    fn offer(&mut self, sizes: &[u32], starts: Option<Vec<Option<u32>>>) {
        let score = self.p.score(sizes);
        let better = self
            .incumbent
            .as_ref()
            .is_none_or(|inc| score.compare(&inc.score, self.p.served_first) == Ordering::Greater);
        if !better {
            return;
        }
        let starts = match starts {
            Some(s) => s,
            None if self.with_placement => match self.placement(sizes) {
                Some(s) => s,
                None => return,
            },
            None => Vec::new(),
        };
        self.incumbent = Some(Incumbent { score, starts });
    }

    /// Whether no completion of this node can beat (or, when exploring ties,
    /// match) the incumbent.
    fn should_prune(&self, depth: usize, welfare: f64, served: usize) -> bool {
        let Some(inc) = &self.incumbent else {
            return false;
        };
        let p = self.p;
        let mut servable = 0usize;
        let mut simple = 0.0;
        let mut relaxed = 0.0;
        for &i in &self.order[depth..] {
            let cap = self.route_capacity(i);
            let fitting = p.choices[i].partition_point(|c| i64::from(c.size) <= cap);
            if fitting == 0 {
                continue;
            }
            servable += 1;
            let opts = &p.choices[i][..fitting];
            let best = opts[fitting - 1].value;
            let price = self.route_price[i];
            let reduced = opts
                .iter()
                .map(|c| c.value - f64::from(c.size) * price)
                .fold(f64::NEG_INFINITY, f64::max);
            if p.served_first {
                simple += best;
                relaxed += reduced;
            } else {
                simple += best.max(0.0);
                relaxed += reduced.max(0.0);
            }
        }
        if p.served_first {
            match (served + servable).cmp(&inc.score.served) {
                Ordering::Less => return true,
                Ordering::Greater => return false,
                Ordering::Equal => {}
            }
        }
        relaxed += self
            .lambda
            .iter()
            .zip(&self.residual)
            .map(|(&lam, &r)| lam * r as f64)
            .sum::<f64>();
        let bound = welfare + simple.min(relaxed);
        let tied = welfare_equal(bound, inc.score.welfare);
        if self.explore_ties {
            bound < inc.score.welfare && !tied
        } else {
            bound < inc.score.welfare || tied
        }
    }

    fn dfs(&mut self, depth: usize, welfare: f64, served: usize) {
        self.search_nodes += 1;
        if !self.budget.tick(self.search_nodes) {
            self.aborted = true;
            return;
        }
        if depth == self.order.len() {
            let sizes = self.sizes.clone();
            self.offer(&sizes, None);
            return;
        }
        if self.should_prune(depth, welfare, served) {
            return;
        }
        let p = self.p;
        let i = self.order[depth];
        let cap = self.route_capacity(i);
        let price = self.route_price[i];
        let fitting = p.choices[i].partition_point(|c| i64::from(c.size) <= cap);
        // (reduced value, size, value); size 0 is blocking.
        let mut branches: Vec<(f64, u32, f64)> = p.choices[i][..fitting]
            .iter()
            .map(|c| (c.value - f64::from(c.size) * price, c.size, c.value))
            .collect();
        let block_rank = if p.served_first { f64::NEG_INFINITY } else { 0.0 };
        branches.push((block_rank, 0, 0.0));
        branches.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));

        for (_, size, value) in branches {
            self.sizes[i] = size;
            if self.violates_cut(depth) {
                continue;
            }
            self.apply(i, size, 1);
            self.dfs(depth + 1, welfare + value, served + usize::from(size > 0));
            self.apply(i, size, -1);
            if self.aborted {
                break;
            }
        }
        self.sizes[i] = 0;
    }

    fn run(&mut self) {
        let served = self
            .sizes
            .iter()
            .filter(|&&s| s > 0)
            .count();
        let welfare = self
            .sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| self.p.value_of(i, s))
            .sum();
        self.dfs(0, welfare, served);
    }
}

/// Greedy fill: serve as many connections as possible at their smallest entry
/// when ranking by served count, then repeatedly take the one-step increase
/// with the best welfare gain per slot-link consumed.
fn greedy_sizes(p: &Problem, search: &SizeSearch) -> Vec<u32> {
    let mut sizes = search.sizes.clone();
    let mut residual = search.residual.clone();
    let mut level: Vec<Option<usize>> = vec![None; p.n];
    let cap = |residual: &[i64], i: usize| {
        p.routes[i].iter().map(|&l| residual[l]).min().unwrap_or(i64::MAX)
    };
    let take = |residual: &mut Vec<i64>, sizes: &mut Vec<u32>, i: usize, to: u32| {
        for &l in &p.routes[i] {
            residual[l] -= i64::from(to) - i64::from(sizes[i]);
        }
        sizes[i] = to;
    };
    if p.served_first {
        let mut by_cost = search.order.clone();
        by_cost.sort_by_key(|&i| (p.routes[i].len(), p.choices[i].first().map(|c| c.size), i));
        for i in by_cost {
            if let Some(first) = p.choices[i].first() {
                if i64::from(first.size) <= cap(&residual, i) {
                    take(&mut residual, &mut sizes, i, first.size);
                    level[i] = Some(0);
                }
            }
        }
    }
    loop {
        let mut best: Option<(f64, usize)> = None;
        for &i in &search.order {
            if p.served_first && level[i].is_none() {
                continue;
            }
            let next = level[i].map_or(0, |l| l + 1);
            let Some(choice) = p.choices[i].get(next) else {
                continue;
            };
            let extra = i64::from(choice.size) - i64::from(sizes[i]);
            if extra > cap(&residual, i) {
                continue;
            }
            let current = level[i].map_or(0.0, |l| p.choices[i][l].value);
            let ratio = (choice.value - current) / (extra as f64 * p.routes[i].len() as f64);
            if best.is_none_or(|(r, _)| ratio > r) {
                best = Some((ratio, i));
            }
        }
        let Some((_, i)) = best else {
            break;
        };
        let next = level[i].map_or(0, |l| l + 1);
        take(&mut residual, &mut sizes, i, p.choices[i][next].size);
        level[i] = Some(next);
    }
    sizes
}

/// Subgradient descent on the Lagrangian dual of the link capacities.
fn fit_multipliers(search: &SizeSearch, target: f64) -> Vec<f64> {
    let p = search.p;
    let residual: Vec<f64> = search.residual.iter().map(|&r| r as f64).collect();
    let free: Vec<(usize, usize)> = search
        .order
        .iter()
        .map(|&i| {
            let cap = search.route_capacity(i);
            (i, p.choices[i].partition_point(|c| i64::from(c.size) <= cap))
        })
        .filter(|&(_, fitting)| fitting > 0 || !p.served_first)
        .collect();

    let evaluate = |lambda: &[f64]| -> (f64, Vec<f64>) {
        let mut value: f64 = lambda.iter().zip(&residual).map(|(l, r)| l * r).sum();
        let mut load = vec![0.0; p.k];
        for &(i, fitting) in &free {
            let price: f64 = p.routes[i].iter().map(|&l| lambda[l]).sum();
            let mut best = if p.served_first {
                (f64::NEG_INFINITY, 0u32)
            } else {
                (0.0, 0u32)
            };
            for c in &p.choices[i][..fitting] {
                let r = c.value - f64::from(c.size) * price;
                if r > best.0 {
                    best = (r, c.size);
                }
            }
            value += best.0;
            for &l in &p.routes[i] {
                load[l] += f64::from(best.1);
            }
        }
        let grad = residual.iter().zip(&load).map(|(r, u)| r - u).collect();
        (value, grad)
    };

    let mut lambda = vec![0.0; p.k];
    let (mut best_value, mut grad) = evaluate(&lambda);
    let mut best_lambda = lambda.clone();
    let mut theta = 1.0;
    let mut stale = 0;
    for _ in 0..SUBGRADIENT_ITERATIONS {
        let norm2: f64 = grad
            .iter()
            .zip(&lambda)
            .map(|(&g, &l)| if l <= 0.0 && g > 0.0 { 0.0 } else { g * g })
            .sum();
        if norm2 <= 0.0 {
            break;
        }
        let gap = (best_value - target).max(1e-6 * best_value.abs().max(1.0));
        let step = theta * gap / norm2;
        for (l, g) in lambda.iter_mut().zip(&grad) {
            *l = (*l - step * g).max(0.0);
        }
        let (value, g) = evaluate(&lambda);
        grad = g;
        if value < best_value - 1e-12 * best_value.abs().max(1.0) {
            best_value = value;
            best_lambda.clone_from(&lambda);
            stale = 0;
        } else {
            stale += 1;
            if stale >= 10 {
                theta *= 0.5;
                stale = 0;
                if theta < 1e-4 {
                    break;
                }
            }
        }
        if welfare_equal(best_value, target) {
            break;
        }
    }
    best_lambda
}

/// Shrinks sizes until first-fit places everything: the largest member of
/// each conflict certificate loses one menu step.
fn degrade_until_placed(p: &Problem, config: &SolverConfig, mut sizes: Vec<u32>) -> Outcome {
    loop {
        match first_fit_routes(
            &sizes,
            &p.routes,
            p.k,
            p.slots,
            p.first_slot,
            config.spectrum_order,
        ) {
            Ok(starts) => {
                return Outcome {
                    sizes,
                    starts,
                    proven: false,
                }
            }
            Err(cert) => {
                let &victim = cert
                    .connections
                    .iter()
                    .max_by(|&&a, &&b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
                    .expect("certificates are non-empty");
                sizes[victim] = p.choices[victim]
                    .iter()
                    .rev()
                    .map(|c| c.size)
                    .find(|&s| s < sizes[victim])
                    .unwrap_or(0);
            }
        }
    }
}

fn search_sizes(
    p: &Problem,
    config: &SolverConfig,
    cuts: &[NoGood],
    with_placement: bool,
    hint: Option<&Outcome>,
    budget: &mut Budget,
) -> (Option<Outcome>, bool) {
    let mut search = SizeSearch::new(p, cuts, config, with_placement, with_placement, budget);
    let greedy = greedy_sizes(p, &search);
    let placed = degrade_until_placed(p, config, greedy.clone());
    let mut seeds = Vec::new();
    if !with_placement {
        seeds.push((greedy, None));
    }
    seeds.push((placed.sizes, Some(placed.starts)));
    if let Some(h) = hint {
        seeds.push((h.sizes.clone(), Some(h.starts.clone())));
    }
    for (sizes, starts) in seeds {
        if search.cut_free(&sizes) {
            let starts = if with_placement { starts } else { None };
            search.offer(&sizes, starts);
        }
    }
    if let Some(target) = search.incumbent.as_ref().map(|inc| inc.score.welfare) {
        if target.is_finite() {
            let lambda = fit_multipliers(&search, target);
            search.set_lambda(lambda);
        }
    }
    search.run();
    let proven = !search.aborted && !search.placement_gave_up;
    let outcome = search.incumbent.map(|inc| Outcome {
        sizes: inc.score.sizes,
        starts: inc.starts,
        proven,
    });
    (outcome, proven)
}

/// Joint search with placement checked at every improving leaf.
pub(crate) fn solve_exact(p: &Problem, config: &SolverConfig, budget: &mut Budget) -> Outcome {
    let (outcome, _) = search_sizes(p, config, &[], true, None, budget);
    outcome.expect("exact search always keeps a placed incumbent")
}

/// Capacity-only search, then first-fit; conflicts become no-good cuts, and
/// once the cut limit is reached sizes are degraded until they place. The
/// best placed allocation seen along the way is kept.
pub(crate) fn solve_two_stage(p: &Problem, config: &SolverConfig, budget: &mut Budget) -> Outcome {
    let mut cuts: Vec<NoGood> = Vec::new();
    let mut best: Option<Outcome> = None;
    let keep = |best: &mut Option<Outcome>, o: Outcome| {
        let better = best.as_ref().is_none_or(|b| {
            p.score(&o.sizes)
                .compare(&p.score(&b.sizes), p.served_first)
                .is_gt()
        });
        if better {
            *best = Some(o);
        }
    };
    loop {
        let (outcome, proven) = search_sizes(p, config, &cuts, false, best.as_ref(), budget);
        // Every size vector may have been cut off; all-blocked always places.
        let sizes = outcome.map_or_else(|| vec![0; p.n], |o| o.sizes);
        match first_fit_routes(
            &sizes,
            &p.routes,
            p.k,
            p.slots,
            p.first_slot,
            config.spectrum_order,
        ) {
            Ok(starts) => {
                keep(
                    &mut best,
                    Outcome {
                        sizes,
                        starts,
                        proven: proven && cuts.is_empty(),
                    },
                );
                break;
            }
            Err(cert) => {
                if cuts.len() >= config.cut_limit || budget.out_of_time() {
                    keep(&mut best, degrade_until_placed(p, config, sizes));
                    break;
                }
                keep(&mut best, degrade_until_placed(p, config, sizes.clone()));
                cuts.push(cert.connections.iter().map(|&i| (i, sizes[i])).collect());
            }
        }
    }
    best.expect("at least one placed allocation was kept")
}
