//! Evaluation of an allocation against sampled demand fluctuations.

use std::fmt::Write as _;

use thiserror::Error;

use crate::solver::Allocation;
use crate::topology::LinkUtilizationMatrix;
use crate::traffic::FluctuationSet;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: expected {expected} connections, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("baseline value is zero; improvement is undefined")]
    ZeroBaseline,
    #[error("mean is zero; coefficient of variation is undefined")]
    ZeroMean,
    #[error("at least two values are needed, got {0}")]
    TooFewValues(usize),
}

/// Expected over- and under-provisioning per connection, in slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ProvisioningProfile {
    pub u_plus: Vec<f64>,
    pub u_minus: Vec<f64>,
}

impl ProvisioningProfile {
    pub fn cop(&self) -> f64 {
        self.u_plus.iter().sum()
    }

    pub fn cup(&self) -> f64 {
        self.u_minus.iter().sum()
    }
}

/// Expected excess `(1/T)·Σ_{f<u}(u−f)` and shortfall `(1/T)·Σ_{f>u}(f−u)`
/// of one allocated size against its demand samples.
pub fn provisioning(size: f64, samples: &[f64]) -> (f64, f64) {
    let (mut plus, mut minus) = (0.0, 0.0);
    for &f in samples {
        if size > f {
            plus += size - f;
        } else if size < f {
            minus += f - size;
        }
    }
    let t = samples.len() as f64;
    (plus / t, minus / t)
}

pub fn excess_and_unserved(
    allocation: &Allocation,
    fluct: &FluctuationSet,
) -> Result<ProvisioningProfile, MetricsError> {
    profile_for_sizes(&allocation.sizes, fluct)
}

pub fn profile_for_sizes(
    sizes: &[u32],
    fluct: &FluctuationSet,
) -> Result<ProvisioningProfile, MetricsError> {
    if sizes.len() != fluct.num_connections() {
        return Err(MetricsError::DimensionMismatch {
            expected: fluct.num_connections(),
            found: sizes.len(),
        });
    }
    let (u_plus, u_minus) = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| provisioning(f64::from(s), fluct.column(i)))
        .unzip();
    Ok(ProvisioningProfile { u_plus, u_minus })
}

/// Relative improvement `(baseline − value) / baseline`.
pub fn improvement(value: f64, baseline: f64) -> Result<f64, MetricsError> {
    if baseline == 0.0 {
        Err(MetricsError::ZeroBaseline)
    } else {
        Ok((baseline - value) / baseline)
    }
}

/// `(ICOP, ICUP)` of a report against the utilitarian baseline report.
pub fn improvement_measures(
    report: &MetricsReport,
    baseline: &MetricsReport,
) -> (Result<f64, MetricsError>, Result<f64, MetricsError>) {
    (
        improvement(report.cop, baseline.cop),
        improvement(report.cup, baseline.cup),
    )
}

/// Sample coefficient of variation, `sqrt(Σ(v−v̄)²/v̄² / (n−1))`.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::TooFewValues(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Err(MetricsError::ZeroMean);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Ok((ss / (mean * mean) / (n - 1) as f64).sqrt())
}

/// Blocking percentage and slot-link utilization `Σ_i u_i·hops_i`.
pub fn blocking_and_utilization(
    allocation: &Allocation,
    p: &LinkUtilizationMatrix,
) -> Result<(f64, u64), MetricsError> {
    let n = p.num_connections();
    if allocation.sizes.len() != n {
        return Err(MetricsError::DimensionMismatch {
            expected: n,
            found: allocation.sizes.len(),
        });
    }
    if n == 0 {
        return Ok((0.0, 0));
    }
    let blocked = allocation.sizes.iter().filter(|&&s| s == 0).count();
    let utilization = allocation
        .sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| u64::from(s) * p.hops(i) as u64)
        .sum();
    Ok((100.0 * blocked as f64 / n as f64, utilization))
}

/// All evaluation measures of one allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub alpha: f64,
    pub blocking_percent: f64,
    /// Slots summed over every link of each route.
    pub utilization_fs_link: u64,
    /// Slots summed once per connection.
    pub utilization_fs: u64,
    pub cop: f64,
    pub cup: f64,
    pub icop: Option<f64>,
    pub icup: Option<f64>,
    pub cv_utilities: Option<f64>,
    pub cv_unserved: Option<f64>,
}

pub const REPORT_CSV_HEADER: &str = "alpha,blocking_pct,utilization_fs_link,cop,cup,icop,icup,cv_u,cv_uminus";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    /// Row matching [`REPORT_CSV_HEADER`]; undefined values are empty fields.
    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        write!(
            row,
            "{},{},{},{},{},{},{},{},{}",
            self.alpha,
            self.blocking_percent,
            self.utilization_fs_link,
            self.cop,
            self.cup,
            opt(self.icop),
            opt(self.icup),
            opt(self.cv_utilities),
            opt(self.cv_unserved)
        )
        .expect("writing to a String");
        row
    }

    /// Fills ICOP/ICUP against the utilitarian baseline.
    pub fn with_baseline(mut self, baseline: &MetricsReport) -> Self {
        let (icop, icup) = improvement_measures(&self, baseline);
        self.icop = icop.ok();
        self.icup = icup.ok();
        self
    }
}

/// Evaluates an allocation. ICOP/ICUP stay empty until a baseline is applied.
pub fn evaluate(
    allocation: &Allocation,
    fluct: &FluctuationSet,
    p: &LinkUtilizationMatrix,
) -> Result<MetricsReport, MetricsError> {
    let profile = excess_and_unserved(allocation, fluct)?;
    let (blocking_percent, utilization_fs_link) = blocking_and_utilization(allocation, p)?;
    let sizes: Vec<f64> = allocation.sizes.iter().map(|&s| f64::from(s)).collect();
    Ok(MetricsReport {
        alpha: allocation.alpha,
        blocking_percent,
        utilization_fs_link,
        utilization_fs: allocation.sizes.iter().map(|&s| u64::from(s)).sum(),
        cop: profile.cop(),
        cup: profile.cup(),
        icop: None,
        icup: None,
        cv_utilities: coefficient_of_variation(&sizes).ok(),
        cv_unserved: coefficient_of_variation(&profile.u_minus).ok(),
    })
}
