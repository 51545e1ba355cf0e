//! Contiguous spectrum placement for a fixed vector of sizes.

use crate::topology::LinkUtilizationMatrix;

/// Order in which first-fit places connections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpectrumOrder {
    /// Longest route (hops) first, then larger size, then smaller id.
    #[default]
    LongestRouteFirst,
    /// Ascending connection id.
    ById,
}

/// Connections whose sizes cannot be placed together by first-fit. Removing
/// any single member makes first-fit succeed on the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictCertificate {
    pub connections: Vec<usize>,
}

/// Per-link slot occupancy, one bit per slot.
#[derive(Debug, Clone)]
pub(crate) struct SlotGrid {
    words: usize,
    bits: Vec<u64>,
}

impl SlotGrid {
    pub fn new(links: usize, slots: u32) -> Self {
        let words = (slots as usize).div_ceil(64).max(1);
        Self {
            words,
            bits: vec![0; links * words],
        }
    }

    fn link(&self, l: usize) -> &[u64] {
        &self.bits[l * self.words..(l + 1) * self.words]
    }

    fn is_set(word: &[u64], slot: usize) -> bool {
        word[slot / 64] >> (slot % 64) & 1 == 1
    }

    /// Whether 1-based slots `start..start+len` are free on every link of `route`.
    pub fn is_free(&self, route: &[usize], start: u32, len: u32) -> bool {
        route.iter().all(|&l| {
            let word = self.link(l);
            (start - 1..start - 1 + len).all(|s| !Self::is_set(word, s as usize))
        })
    }

    pub fn set(&mut self, route: &[usize], start: u32, len: u32, on: bool) {
        for &l in route {
            let base = l * self.words;
            for s in start - 1..start - 1 + len {
                let (w, b) = (s as usize / 64, s % 64);
                if on {
                    self.bits[base + w] |= 1 << b;
                } else {
                    self.bits[base + w] &= !(1 << b);
                }
            }
        }
    }

    /// Lowest start in `first..=slots-len+1` whose block is free on `route`.
    pub fn first_fit(&self, route: &[usize], len: u32, first: u32, slots: u32) -> Option<u32> {
        if len + first > slots + 1 {
            return None;
        }
        let mut start = first;
        while start + len <= slots + 1 {
            // Jump past the highest occupied slot inside the candidate window.
            let blocker = (start..start + len)
                .rev()
                .find(|&s| route.iter().any(|&l| Self::is_set(self.link(l), s as usize - 1)));
            match blocker {
                None => return Some(start),
                Some(s) => start = s + 1,
            }
        }
        None
    }
}

pub(crate) fn placement_order(
    sizes: &[u32],
    routes: &[Vec<usize>],
    order: SpectrumOrder,
) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i] > 0).collect();
    if order == SpectrumOrder::LongestRouteFirst {
        ids.sort_by(|&a, &b| {
            routes[b]
                .len()
                .cmp(&routes[a].len())
                .then(sizes[b].cmp(&sizes[a]))
                .then(a.cmp(&b))
        });
    }
    ids
}

/// First-fit over `subset` (already in placement order). Returns the
/// position in `subset` of the first connection that did not fit.
fn first_fit_subset(
    sizes: &[u32],
    routes: &[Vec<usize>],
    subset: &[usize],
    k: usize,
    slots: u32,
    first_slot: u32,
) -> Result<Vec<Option<u32>>, usize> {
    let mut grid = SlotGrid::new(k, slots);
    let mut starts = vec![None; sizes.len()];
    for (pos, &i) in subset.iter().enumerate() {
        match grid.first_fit(&routes[i], sizes[i], first_slot, slots) {
            Some(s) => {
                grid.set(&routes[i], s, sizes[i], true);
                starts[i] = Some(s);
            }
            None => return Err(pos),
        }
    }
    Ok(starts)
}

pub(crate) fn first_fit_routes(
    sizes: &[u32],
    routes: &[Vec<usize>],
    k: usize,
    slots: u32,
    first_slot: u32,
    order: SpectrumOrder,
) -> Result<Vec<Option<u32>>, ConflictCertificate> {
    let ordered = placement_order(sizes, routes, order);
    let failed_at = match first_fit_subset(sizes, routes, &ordered, k, slots, first_slot) {
        Ok(starts) => return Ok(starts),
        Err(pos) => pos,
    };
    // Shrink the failing prefix to a set where every member is needed.
    let mut members: Vec<usize> = ordered[..=failed_at].to_vec();
    let mut idx = 0;
    while idx < members.len() {
        let mut trial = members.clone();
        trial.remove(idx);
        if first_fit_subset(sizes, routes, &trial, k, slots, first_slot).is_err() {
            members = trial;
        } else {
            idx += 1;
        }
    }
    members.sort_unstable();
    Err(ConflictCertificate {
        connections: members,
    })
}

/// First-fit placement of `sizes` on the routes of `p`.
///
/// Served connections are placed in `order`; each takes the lowest start
/// whose block is free on all of its links. Slot 1 is skipped when
/// `strict_first_slot` is set.
pub fn assign_spectrum(
    sizes: &[u32],
    p: &LinkUtilizationMatrix,
    slots: u32,
    order: SpectrumOrder,
    strict_first_slot: bool,
) -> Result<Vec<Option<u32>>, ConflictCertificate> {
    let routes: Vec<Vec<usize>> = (0..p.num_connections()).map(|i| p.links_of(i)).collect();
    let first = if strict_first_slot { 2 } else { 1 };
    first_fit_routes(sizes, &routes, p.num_links(), slots, first, order)
}

pub(crate) enum PlacementSearch {
    Found(Vec<Option<u32>>),
    Infeasible,
    GaveUp,
}

/// Exhaustive backtracking over start slots. Gives up after `budget` nodes.
pub(crate) fn search_placement(
    sizes: &[u32],
    routes: &[Vec<usize>],
    k: usize,
    slots: u32,
    first_slot: u32,
    budget: u64,
) -> PlacementSearch {
    struct Search<'a> {
        sizes: &'a [u32],
        routes: &'a [Vec<usize>],
        order: Vec<usize>,
        slots: u32,
        first_slot: u32,
        grid: SlotGrid,
        starts: Vec<Option<u32>>,
        nodes: u64,
        budget: u64,
    }

    impl Search<'_> {
        fn go(&mut self, depth: usize) -> Option<bool> {
            self.nodes += 1;
            if self.nodes > self.budget {
                return None;
            }
            let Some(&i) = self.order.get(depth) else {
                return Some(true);
            };
            let (len, route) = (self.sizes[i], &self.routes[i]);
            for s in self.first_slot..=(self.slots + 1).saturating_sub(len) {
                if !self.grid.is_free(route, s, len) {
                    continue;
                }
                self.grid.set(route, s, len, true);
                self.starts[i] = Some(s);
                match self.go(depth + 1) {
                    Some(true) => return Some(true),
                    None => return None,
                    Some(false) => {}
                }
                self.grid.set(route, s, len, false);
                self.starts[i] = None;
            }
            Some(false)
        }
    }

    let mut search = Search {
        sizes,
        routes,
        order: placement_order(sizes, routes, SpectrumOrder::LongestRouteFirst),
        slots,
        first_slot,
        grid: SlotGrid::new(k, slots),
        starts: vec![None; sizes.len()],
        nodes: 0,
        budget,
    };
    match search.go(0) {
        Some(true) => PlacementSearch::Found(search.starts),
        Some(false) => PlacementSearch::Infeasible,
        None => PlacementSearch::GaveUp,
    }
}
