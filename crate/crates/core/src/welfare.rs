//! Discrete spectrum-allocation menus and the constant-elasticity welfare function.

use std::io::{self, Write};

use thiserror::Error;

/// Default normalized utility assigned to zero entries of the menu.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Distance from 1 within which alpha takes the logarithmic branch.
pub const LOG_BRANCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum WelfareError {
    #[error("bad granularity: {0}")]
    BadGranularity(String),
    #[error("peak demand {peak} of connection {connection} is outside [1, {slots}]")]
    BadPeak { connection: usize, peak: u32, slots: u32 },
    #[error("epsilon {epsilon} must lie in (0, {bound})")]
    EpsilonTooLarge { epsilon: f64, bound: f64 },
    #[error("utility {0} is not strictly positive")]
    NonPositiveUtility(f64),
    #[error("alpha must be a finite value >= 0, got {0}")]
    InvalidAlpha(f64),
}

/// Inequality-aversion parameter.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(value: f64) -> Result<Self, WelfareError> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(WelfareError::InvalidAlpha(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_log(self) -> bool {
        (self.0 - 1.0).abs() < LOG_BRANCH_TOLERANCE
    }

    /// Welfare contribution of a single positive utility.
    pub fn term(self, u: f64) -> f64 {
        if self.is_log() {
            u.ln()
        } else {
            let e = 1.0 - self.0;
            u.powf(e) / e
        }
    }
}

/// `W_alpha` over a list of strictly positive utilities. The empty list is 0.
pub fn welfare(values: &[f64], alpha: Alpha) -> Result<f64, WelfareError> {
    values.iter().try_fold(0.0, |acc, &u| {
        if u > 0.0 {
            Ok(acc + alpha.term(u))
        } else {
            Err(WelfareError::NonPositiveUtility(u))
        }
    })
}

/// Menu of candidate allocations: entry `(i, j)` is `(j+1)·g` slots when that
/// does not exceed connection `i`'s peak demand, and 0 otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    slots: u32,
    choices: usize,
    granule: u32,
    peaks: Vec<u32>,
    entries: Vec<u32>,
}

impl UtilityMatrix {
    pub fn num_connections(&self) -> usize {
        self.peaks.len()
    }

    pub fn num_choices(&self) -> usize {
        self.choices
    }

    pub fn granule(&self) -> u32 {
        self.granule
    }

    pub fn slots(&self) -> u32 {
        self.slots
    }

    pub fn peaks(&self) -> &[u32] {
        &self.peaks
    }

    pub fn peak(&self, connection: usize) -> u32 {
        self.peaks[connection]
    }

    pub fn row(&self, connection: usize) -> &[u32] {
        &self.entries[connection * self.choices..(connection + 1) * self.choices]
    }

    /// Nonzero sizes available to `connection`, ascending.
    pub fn sizes(&self, connection: usize) -> impl Iterator<Item = u32> + '_ {
        self.row(connection).iter().copied().filter(|&s| s > 0)
    }

    /// Largest menu size for `connection`, or 0 when its peak is below one granule.
    pub fn max_size(&self, connection: usize) -> u32 {
        self.sizes(connection).max().unwrap_or(0)
    }

    pub fn is_valid_size(&self, connection: usize, size: u32) -> bool {
        size == 0 || self.row(connection).contains(&size)
    }
}

pub fn build_utility_matrix(
    peaks: &[u32],
    slots: u32,
    choices: usize,
) -> Result<UtilityMatrix, WelfareError> {
    if choices == 0 {
        return Err(WelfareError::BadGranularity("m must be >= 1".into()));
    }
    let m = u32::try_from(choices)
        .map_err(|_| WelfareError::BadGranularity(format!("m = {choices} is too large")))?;
    if m > slots {
        return Err(WelfareError::BadGranularity(format!(
            "m = {m} exceeds the {slots} slots per link"
        )));
    }
    if !slots.is_multiple_of(m) {
        return Err(WelfareError::BadGranularity(format!(
            "{slots} slots are not divisible into {m} equal steps"
        )));
    }
    let granule = slots / m;
    let mut entries = Vec::with_capacity(peaks.len() * choices);
    for (i, &peak) in peaks.iter().enumerate() {
        if peak == 0 || peak > slots {
            return Err(WelfareError::BadPeak {
                connection: i,
                peak,
                slots,
            });
        }
        entries.extend((1..=m).map(|j| {
            let size = j * granule;
            if size <= peak {
                size
            } else {
                0
            }
        }));
    }
    Ok(UtilityMatrix {
        slots,
        choices,
        granule,
        peaks: peaks.to_vec(),
        entries,
    })
}

/// Menu entries divided by the connection's peak; zeros become `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedUtilityMatrix {
    choices: usize,
    epsilon: f64,
    entries: Vec<f64>,
}

impl NormalizedUtilityMatrix {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn num_connections(&self) -> usize {
        self.entries.len() / self.choices.max(1)
    }

    pub fn num_choices(&self) -> usize {
        self.choices
    }

    pub fn row(&self, connection: usize) -> &[f64] {
        &self.entries[connection * self.choices..(connection + 1) * self.choices]
    }

    pub fn get(&self, connection: usize, choice: usize) -> f64 {
        self.entries[connection * self.choices + choice]
    }
}

pub fn normalize_utilities(
    utilities: &UtilityMatrix,
    epsilon: f64,
) -> Result<NormalizedUtilityMatrix, WelfareError> {
    let max_peak = utilities.peaks.iter().copied().max().unwrap_or(utilities.slots);
    let bound = f64::from(utilities.granule) / f64::from(max_peak.max(1));
    if !(epsilon > 0.0 && epsilon < bound) {
        return Err(WelfareError::EpsilonTooLarge { epsilon, bound });
    }
    let entries = utilities
        .entries
        .chunks(utilities.choices)
        .zip(&utilities.peaks)
        .flat_map(|(row, &peak)| {
            row.iter().map(move |&u| {
                if u > 0 {
                    f64::from(u) / f64::from(peak)
                } else {
                    epsilon
                }
            })
        })
        .collect();
    Ok(NormalizedUtilityMatrix {
        choices: utilities.choices,
        epsilon,
        entries,
    })
}

/// Debug dump with header `i,j,u_ij,u_hat_ij` (`j` counts from 1).
pub fn write_matrices_csv<W: Write>(
    utilities: &UtilityMatrix,
    normalized: &NormalizedUtilityMatrix,
    mut out: W,
) -> io::Result<()> {
    writeln!(out, "i,j,u_ij,u_hat_ij")?;
    for i in 0..utilities.num_connections() {
        for (j, (u, h)) in utilities.row(i).iter().zip(normalized.row(i)).enumerate() {
            writeln!(out, "{i},{},{u},{h}", j + 1)?;
        }
    }
    Ok(())
}
