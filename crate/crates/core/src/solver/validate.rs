//! Feasibility checks written directly against the slot-indicator form of
//! the constraints. Kept independent of the placement code in `spectrum`.

use std::fmt;

use super::RsaInstance;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Allocated slots on a link exceed its capacity.
    Capacity { link: usize, used: u64, slots: u32 },
    /// Size is neither 0 nor an entry of the connection's menu row.
    NotOnMenu { connection: usize, size: u32 },
    /// Served without a start, or blocked with one.
    StartMismatch { connection: usize },
    /// Block runs past the last slot or starts before the first usable one.
    OutOfRange { connection: usize },
    /// Indicator count differs from the chosen size.
    SlotCount { connection: usize, expected: u32, found: u32 },
    /// Two connections use the same slot on a link.
    Overlap { link: usize, slot: u32 },
    /// Occupied slots form more than one run.
    NonContiguous { connection: usize, runs: u32 },
    /// Slot 1 used while the strict boundary rule is in force.
    FirstSlotUsed { connection: usize },
    /// Dimensions of the allocation do not match the instance.
    Shape { expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Capacity { link, used, slots } => {
                write!(f, "link {link}: {used} slots allocated, capacity {slots}")
            }
            Violation::NotOnMenu { connection, size } => {
                write!(f, "connection {connection}: size {size} is not a menu entry")
            }
            Violation::StartMismatch { connection } => {
                write!(f, "connection {connection}: start slot disagrees with size")
            }
            Violation::OutOfRange { connection } => {
                write!(f, "connection {connection}: block lies outside the usable slots")
            }
            Violation::SlotCount {
                connection,
                expected,
                found,
            } => write!(f, "connection {connection}: {found} slots used, expected {expected}"),
            Violation::Overlap { link, slot } => {
                write!(f, "link {link}: slot {slot} used more than once")
            }
            Violation::NonContiguous { connection, runs } => {
                write!(f, "connection {connection}: {runs} separate runs of slots")
            }
            Violation::FirstSlotUsed { connection } => {
                write!(f, "connection {connection}: uses slot 1 under the strict rule")
            }
            Violation::Shape { expected, found } => {
                write!(f, "allocation covers {found} connections, instance has {expected}")
            }
        }
    }
}

/// Lists every constraint the allocation breaks; empty means feasible.
pub fn validate_allocation(
    sizes: &[u32],
    starts: &[Option<u32>],
    instance: &RsaInstance,
    strict_first_slot: bool,
) -> Vec<Violation> {
    let n = instance.num_connections();
    let slots = instance.slots();
    let k = instance.p.num_links();
    let mut out = Vec::new();
    if sizes.len() != n || starts.len() != n {
        out.push(Violation::Shape {
            expected: n,
            found: sizes.len().min(starts.len()),
        });
        return out;
    }

    // y[i][s] for s in 0..=slots; index 0 is a virtual slot that is never used.
    let mut y = vec![vec![false; slots as usize + 1]; n];
    for i in 0..n {
        if !instance.u.is_valid_size(i, sizes[i]) {
            out.push(Violation::NotOnMenu {
                connection: i,
                size: sizes[i],
            });
        }
        match (sizes[i], starts[i]) {
            (0, None) => {}
            (0, Some(_)) | (_, None) => out.push(Violation::StartMismatch { connection: i }),
            (size, Some(start)) => {
                let end = u64::from(start) + u64::from(size) - 1;
                if start == 0 || end > u64::from(slots) {
                    out.push(Violation::OutOfRange { connection: i });
                }
                for s in start..start.saturating_add(size) {
                    if (1..=slots).contains(&s) {
                        y[i][s as usize] = true;
                    }
                }
            }
        }
    }

    for l in 0..k {
        let used: u64 = (0..n)
            .filter(|&i| instance.p.get(i, l) == 1)
            .map(|i| u64::from(sizes[i]))
            .sum();
        if used > u64::from(slots) {
            out.push(Violation::Capacity { link: l, used, slots });
        }
    }

    for (i, row) in y.iter().enumerate() {
        let count = row.iter().filter(|&&b| b).count() as u32;
        if count != sizes[i] {
            out.push(Violation::SlotCount {
                connection: i,
                expected: sizes[i],
                found: count,
            });
        }
        // z[i][s] = 1 where a run begins: y[s] - y[s-1] > 0.
        let runs = (1..=slots as usize).filter(|&s| row[s] && !row[s - 1]).count() as u32;
        if runs > 1 {
            out.push(Violation::NonContiguous { connection: i, runs });
        }
        if strict_first_slot && row.get(1).copied().unwrap_or(false) {
            out.push(Violation::FirstSlotUsed { connection: i });
        }
    }

    for l in 0..k {
        for s in 1..=slots as usize {
            let users = (0..n).filter(|&i| instance.p.get(i, l) == 1 && y[i][s]).count();
            if users > 1 {
                out.push(Violation::Overlap {
                    link: l,
                    slot: s as u32,
                });
            }
        }
    }
    out
}
