//! Alpha-fair routing and spectrum allocation.
//!
//! A connection either receives one entry of its utility-menu row as a
//! contiguous block of slots (the same block on every link of its fixed
//! route) or is blocked. The objective is the welfare of the normalized
//! utilities of the served connections; blocked connections contribute 0.
//!
//! For `alpha >= 1` every served term is non-positive, so the plain objective
//! would prefer blocking everyone. In that regime allocations are ranked
//! lexicographically by the number of served connections first and welfare
//! second.
//!
//! Three modes are available:
//! - [`SolverMode::Exact`]: branch-and-bound over menu choices, placements
//!   checked (first-fit, then exhaustive search) at the leaves.
//! - [`SolverMode::TwoStage`]: branch-and-bound under link capacity only,
//!   then first-fit placement, with no-good cuts and size degradation when
//!   placement fails.
//! - [`SolverMode::BruteForce`]: exhaustive enumeration, for tiny instances.

use std::cmp::Ordering;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::topology::LinkUtilizationMatrix;
use crate::welfare::{Alpha, NormalizedUtilityMatrix, UtilityMatrix};

mod bnb;
mod oracle;
mod spectrum;
mod validate;

pub use oracle::{brute_force_oracle, brute_force_oracle_with, enumerate_feasible, OracleLimits};
pub use spectrum::{assign_spectrum, ConflictCertificate, SpectrumOrder};
pub use validate::{validate_allocation, Violation};

/// Relative tolerance for welfare comparisons.
pub const WELFARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("normalized utility {0} is not strictly positive")]
    NonPositiveUtility(f64),
    #[error("malformed allocation dump: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverMode {
    Exact,
    TwoStage,
    BruteForce,
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverMode::Exact => "exact",
            SolverMode::TwoStage => "heuristic",
            SolverMode::BruteForce => "brute-force",
        })
    }
}

impl FromStr for SolverMode {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(SolverMode::Exact),
            "heuristic" | "two-stage" => Ok(SolverMode::TwoStage),
            "brute-force" | "oracle" => Ok(SolverMode::BruteForce),
            other => Err(SolverError::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProofStatus {
    ExactOptimal,
    Heuristic,
}

impl fmt::Display for ProofStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProofStatus::ExactOptimal => "exact-optimal",
            ProofStatus::Heuristic => "heuristic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Wall-clock guard; exceeding it returns the incumbent flagged as timed out.
    pub time_budget: Duration,
    /// Deterministic search budget, counted in branch-and-bound nodes per search.
    pub node_limit: u64,
    pub spectrum_order: SpectrumOrder,
    /// Literal boundary rule that keeps slot 1 unused on every link.
    pub strict_first_slot: bool,
    /// No-good cuts added before the two-stage mode starts degrading sizes.
    pub cut_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::TwoStage,
            time_budget: Duration::from_secs(600),
            node_limit: 200_000,
            spectrum_order: SpectrumOrder::LongestRouteFirst,
            strict_first_slot: false,
            cut_limit: 8,
        }
    }
}

impl SolverConfig {
    pub fn exact() -> Self {
        Self {
            mode: SolverMode::Exact,
            node_limit: 50_000_000,
            ..Self::default()
        }
    }

    pub fn with_mode(mut self, mode: SolverMode) -> Self {
        self.mode = mode;
        self
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.time_budget.is_zero() {
            return Err(SolverError::InvalidConfig("time budget must be positive".into()));
        }
        if self.node_limit == 0 {
            return Err(SolverError::InvalidConfig("node limit must be positive".into()));
        }
        Ok(())
    }
}

/// The three matrices a solve needs, checked for consistent dimensions.
#[derive(Debug, Clone)]
pub struct RsaInstance {
    pub p: LinkUtilizationMatrix,
    pub u: UtilityMatrix,
    pub u_hat: NormalizedUtilityMatrix,
}

impl RsaInstance {
    pub fn new(
        p: LinkUtilizationMatrix,
        u: UtilityMatrix,
        u_hat: NormalizedUtilityMatrix,
    ) -> Result<Self, SolverError> {
        let n = p.num_connections();
        if u.num_connections() != n || u_hat.num_connections() != n {
            return Err(SolverError::DimensionMismatch(format!(
                "P has {n} rows, U has {}, U-hat has {}",
                u.num_connections(),
                u_hat.num_connections()
            )));
        }
        if u.num_choices() != u_hat.num_choices() {
            return Err(SolverError::DimensionMismatch(format!(
                "U has {} columns, U-hat has {}",
                u.num_choices(),
                u_hat.num_choices()
            )));
        }
        for i in 0..n {
            if let Some(&bad) = u_hat.row(i).iter().find(|&&v| !(v > 0.0)) {
                return Err(SolverError::NonPositiveUtility(bad));
            }
        }
        Ok(Self { p, u, u_hat })
    }

    pub fn num_connections(&self) -> usize {
        self.p.num_connections()
    }

    pub fn slots(&self) -> u32 {
        self.u.slots()
    }
}

/// Result of a solve: one size and (unless blocked) one start slot per connection.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub sizes: Vec<u32>,
    /// 1-based first slot of each served connection.
    pub starts: Vec<Option<u32>>,
    pub alpha: f64,
    pub objective: f64,
    pub served: usize,
    pub mode: SolverMode,
    pub status: ProofStatus,
    pub timed_out: bool,
    pub nodes: u64,
}

impl Allocation {
    pub fn num_connections(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_blocked(&self, connection: usize) -> bool {
        self.sizes[connection] == 0
    }

    /// Normalized utility of each connection; blocked connections get 0.
    pub fn normalized(&self, u: &UtilityMatrix) -> Vec<f64> {
        self.sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| f64::from(s) / f64::from(u.peak(i)))
            .collect()
    }

    /// Smallest normalized utility over served connections, if any is served.
    pub fn min_served_normalized(&self, u: &UtilityMatrix) -> Option<f64> {
        self.normalized(u)
            .into_iter()
            .filter(|&v| v > 0.0)
            .min_by(f64::total_cmp)
    }

    /// Dump with header `connection_id,size_fs,start_slot,blocked`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "connection_id,size_fs,start_slot,blocked")?;
        for (i, (size, start)) in self.sizes.iter().zip(&self.starts).enumerate() {
            let start = start.map(|s| s.to_string()).unwrap_or_default();
            writeln!(out, "{i},{size},{start},{}", u8::from(*size == 0))?;
        }
        Ok(())
    }
}

/// One row of an allocation dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementRecord {
    pub size: u32,
    pub start: Option<u32>,
}

/// Reads an allocation dump back into `(size, start)` rows indexed by connection id.
pub fn read_allocation_csv<R: BufRead>(input: R) -> Result<Vec<PlacementRecord>, SolverError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| SolverError::Parse("empty file".into()))??;
    if header.trim() != "connection_id,size_fs,start_slot,blocked" {
        return Err(SolverError::Parse(format!("unexpected header `{header}`")));
    }
    let mut rows: Vec<(usize, PlacementRecord)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| SolverError::Parse(format!("line {}: {what}", lineno + 2));
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let id: usize = fields[0].parse().map_err(|_| bad("connection_id"))?;
        let size: u32 = fields[1].parse().map_err(|_| bad("size_fs"))?;
        let start = match fields[2] {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| bad("start_slot"))?),
        };
        let blocked = match fields[3] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("blocked must be 0 or 1")),
        };
        if blocked != (size == 0) || blocked != start.is_none() {
            return Err(bad("blocked flag disagrees with size/start"));
        }
        rows.push((id, PlacementRecord { size, start }));
    }
    rows.sort_by_key(|r| r.0);
    for (expect, (id, _)) in rows.iter().enumerate() {
        if *id != expect {
            return Err(SolverError::Parse(format!(
                "connection ids must be 0..{} without gaps",
                rows.len()
            )));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

/// Whether allocations at this alpha are ranked by served count before welfare.
pub fn ranks_served_first(alpha: Alpha) -> bool {
    alpha.is_log() || alpha.value() > 1.0
}

pub(crate) fn welfare_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= WELFARE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Welfare comparison at [`WELFARE_TOLERANCE`].
pub(crate) fn cmp_welfare(a: f64, b: f64) -> Ordering {
    if welfare_equal(a, b) {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Choice {
    pub size: u32,
    pub value: f64,
}

/// Solver-internal view of an instance at one alpha.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub n: usize,
    pub k: usize,
    pub slots: u32,
    /// First usable slot (1, or 2 under the strict boundary rule).
    pub first_slot: u32,
    pub routes: Vec<Vec<usize>>,
    /// Selectable menu entries per connection, ascending by size.
    pub choices: Vec<Vec<Choice>>,
    pub peaks: Vec<u32>,
    pub alpha: Alpha,
    pub served_first: bool,
    pub non_contending: Vec<bool>,
}

impl Problem {
    pub fn new(instance: &RsaInstance, alpha: Alpha, strict_first_slot: bool) -> Self {
        let n = instance.num_connections();
        let slots = instance.slots();
        let first_slot = if strict_first_slot { 2 } else { 1 };
        let usable = slots + 1 - first_slot;
        let routes = (0..n).map(|i| instance.p.links_of(i)).collect();
        let choices = (0..n)
            .map(|i| {
                instance
                    .u
                    .row(i)
                    .iter()
                    .zip(instance.u_hat.row(i))
                    .filter(|(&s, _)| s > 0 && s <= usable)
                    .map(|(&size, &norm)| Choice {
                        size,
                        value: alpha.term(norm),
                    })
                    .collect()
            })
            .collect();
        Self {
            n,
            k: instance.p.num_links(),
            slots,
            first_slot,
            routes,
            choices,
            peaks: instance.u.peaks().to_vec(),
            alpha,
            served_first: ranks_served_first(alpha),
            non_contending: (0..n).map(|i| instance.p.is_non_contending(i)).collect(),
        }
    }

    pub fn usable_slots(&self) -> u32 {
        self.slots + 1 - self.first_slot
    }

    pub fn value_of(&self, connection: usize, size: u32) -> f64 {
        if size == 0 {
            return 0.0;
        }
        self.choices[connection]
            .iter()
            .find(|c| c.size == size)
            .map(|c| c.value)
            .expect("size is a menu entry")
    }

    pub fn score(&self, sizes: &[u32]) -> Score {
        let welfare = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| self.value_of(i, s))
            .sum();
        let mut sorted_norms: Vec<f64> = sizes
            .iter()
            .zip(&self.peaks)
            .map(|(&s, &p)| f64::from(s) / f64::from(p))
            .collect();
        sorted_norms.sort_by(f64::total_cmp);
        Score {
            served: sizes.iter().filter(|&&s| s > 0).count(),
            welfare,
            sorted_norms,
            sizes: sizes.to_vec(),
        }
    }

    /// Largest selectable size of each connection that shares no link.
    pub fn pinned_sizes(&self) -> Vec<Option<u32>> {
        (0..self.n)
            .map(|i| {
                self.non_contending[i]
                    .then(|| self.choices[i].last().map_or(0, |c| c.size))
            })
            .collect()
    }
}

/// Ranking key of a complete size vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Score {
    pub served: usize,
    pub welfare: f64,
    pub sorted_norms: Vec<f64>,
    pub sizes: Vec<u32>,
}

impl Score {
    /// Ordering by (served count when ranked first), welfare at tolerance,
    /// larger ascending-sorted normalized utilities, then larger sizes for
    /// smaller connection ids.
    pub fn compare(&self, other: &Self, served_first: bool) -> Ordering {
        let served = if served_first {
            self.served.cmp(&other.served)
        } else {
            Ordering::Equal
        };
        served
            .then_with(|| cmp_welfare(self.welfare, other.welfare))
            .then_with(|| {
                self.sorted_norms
                    .iter()
                    .zip(&other.sorted_norms)
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| self.sizes.cmp(&other.sizes))
    }
}

pub(crate) struct Budget {
    deadline: Instant,
    node_limit: u64,
    pub nodes: u64,
    pub timed_out: bool,
}

impl Budget {
    pub fn new(config: &SolverConfig, start: Instant) -> Self {
        Self {
            deadline: start + config.time_budget,
            node_limit: config.node_limit,
            nodes: 0,
            timed_out: false,
        }
    }

    /// Counts one node of a search that has visited `search_nodes` so far;
    /// false once that search's node limit or the shared deadline is spent.
    pub fn tick(&mut self, search_nodes: u64) -> bool {
        self.nodes += 1;
        if self.nodes.is_multiple_of(4096) && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        !self.timed_out && search_nodes <= self.node_limit
    }

    pub fn out_of_time(&mut self) -> bool {
        if Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        self.timed_out
    }
}

/// Solves the alpha-fair allocation problem on `instance`.
pub fn solve_alpha_fair(
    instance: &RsaInstance,
    alpha: Alpha,
    config: &SolverConfig,
) -> Result<Allocation, SolverError> {
    config.validate()?;
    let start = Instant::now();
    let problem = Problem::new(instance, alpha, config.strict_first_slot);
    let mut budget = Budget::new(config, start);
    let outcome = match config.mode {
        SolverMode::Exact => bnb::solve_exact(&problem, config, &mut budget),
        SolverMode::TwoStage => bnb::solve_two_stage(&problem, config, &mut budget),
        SolverMode::BruteForce => {
            return brute_force_oracle_with(
                instance,
                alpha,
                &OracleLimits::default(),
                config.strict_first_slot,
            );
        }
    };
    Ok(outcome.into_allocation(&problem, config.mode, budget.nodes, budget.timed_out))
}

/// A complete, placed solution produced by one of the search routines.
pub(crate) struct Outcome {
    pub sizes: Vec<u32>,
    pub starts: Vec<Option<u32>>,
    pub proven: bool,
}

impl Outcome {
    pub fn into_allocation(
        self,
        problem: &Problem,
        mode: SolverMode,
        nodes: u64,
        timed_out: bool,
    ) -> Allocation {
        let score = problem.score(&self.sizes);
        Allocation {
            served: score.served,
            objective: score.welfare,
            sizes: self.sizes,
            starts: self.starts,
            alpha: problem.alpha.value(),
            mode,
            status: if self.proven && !timed_out {
                ProofStatus::ExactOptimal
            } else {
                ProofStatus::Heuristic
            },
            timed_out,
            nodes,
        }
    }
}
