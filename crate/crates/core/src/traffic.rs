//! Tidal traffic models: per-connection truncated, scaled log-normal demand.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("invalid traffic model: {0}")]
    InvalidModel(String),
    #[error("no samples to derive a peak from")]
    EmptySamples,
    #[error("the fluctuation horizon must be at least one interval")]
    EmptyHorizon,
}

/// Log-normal demand model in frequency slots. A raw draw `X ~ LogNormal(mu, sigma2)`
/// (`sigma2` is the variance of the underlying normal) becomes the fluctuation
/// `min(X / scale_divisor, cap)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficModel {
    pub mu: f64,
    pub sigma2: f64,
    pub scale_divisor: f64,
    pub cap: f64,
}

impl TrafficModel {
    /// Model with the default halving and no cap; call [`with_cap`](Self::with_cap)
    /// to bound draws by the link capacity.
    pub fn new(mu: f64, sigma2: f64) -> Self {
        Self {
            mu,
            sigma2,
            scale_divisor: 2.0,
            cap: f64::INFINITY,
        }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    pub fn with_scale_divisor(mut self, divisor: f64) -> Self {
        self.scale_divisor = divisor;
        self
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if !self.mu.is_finite() {
            return Err(TrafficError::InvalidModel(format!("mu = {}", self.mu)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(TrafficError::InvalidModel(format!(
                "sigma2 must be > 0, got {}",
                self.sigma2
            )));
        }
        if !(self.scale_divisor.is_finite() && self.scale_divisor > 0.0) {
            return Err(TrafficError::InvalidModel(format!(
                "scale_divisor must be > 0, got {}",
                self.scale_divisor
            )));
        }
        if !(self.cap > 0.0) {
            return Err(TrafficError::InvalidModel(format!(
                "cap must be > 0, got {}",
                self.cap
            )));
        }
        Ok(())
    }

    fn distribution(&self) -> Result<LogNormal<f64>, TrafficError> {
        self.validate()?;
        LogNormal::new(self.mu, self.sigma2.sqrt())
            .map_err(|e| TrafficError::InvalidModel(e.to_string()))
    }

    fn fluctuation(&self, raw: f64) -> f64 {
        (raw / self.scale_divisor).min(self.cap).max(f64::MIN_POSITIVE)
    }
}

/// `T` sampled demands for each of `n` connections.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationSet {
    seed: u64,
    horizon: usize,
    // columns[i][t]
    columns: Vec<Vec<f64>>,
}

impl FluctuationSet {
    /// Builds a set from explicit per-connection columns of equal length.
    pub fn from_columns(columns: Vec<Vec<f64>>, seed: u64) -> Result<Self, TrafficError> {
        let horizon = columns.first().map_or(0, Vec::len);
        if horizon == 0 {
            return Err(TrafficError::EmptyHorizon);
        }
        if columns.iter().any(|c| c.len() != horizon) {
            return Err(TrafficError::InvalidModel("ragged fluctuation columns".into()));
        }
        Ok(Self {
            seed,
            horizon,
            columns,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_connections(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, connection: usize) -> &[f64] {
        &self.columns[connection]
    }

    pub fn get(&self, t: usize, connection: usize) -> f64 {
        self.columns[connection][t]
    }

    /// Mean demand of one connection over the horizon.
    pub fn mean(&self, connection: usize) -> f64 {
        let col = &self.columns[connection];
        col.iter().sum::<f64>() / col.len() as f64
    }

    /// Audit dump with header `t,connection_id,f`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,connection_id,f")?;
        for t in 0..self.horizon {
            for (i, col) in self.columns.iter().enumerate() {
                writeln!(out, "{t},{i},{}", col[t])?;
            }
        }
        Ok(())
    }
}

/// Independent random stream for one connection, so its draws do not depend
/// on how many other connections exist.
pub fn connection_rng(seed: u64, connection: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(connection as u64);
    rng
}

pub fn sample_fluctuations(
    models: &[TrafficModel],
    horizon: usize,
    seed: u64,
) -> Result<FluctuationSet, TrafficError> {
    if horizon == 0 {
        return Err(TrafficError::EmptyHorizon);
    }
    let columns = models
        .iter()
        .enumerate()
        .map(|(i, model)| {
            let dist = model.distribution()?;
            let mut rng = connection_rng(seed, i);
            Ok((0..horizon)
                .map(|_| model.fluctuation(dist.sample(&mut rng)))
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>, TrafficError>>()?;
    Ok(FluctuationSet {
        seed,
        horizon,
        columns,
    })
}

/// Peak-rate demand in whole slots: the ceiling of the largest sample,
/// clamped to `[1, slots]`.
pub fn peak_demand(samples: &[f64], slots: u32) -> Result<u32, TrafficError> {
    let max = samples
        .iter()
        .copied()
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
        .ok_or(TrafficError::EmptySamples)?;
    let peak = max.ceil().clamp(1.0, f64::from(slots));
    Ok(peak as u32)
}

/// Peaks for every connection of a fluctuation set.
pub fn peak_demands(fluct: &FluctuationSet, slots: u32) -> Result<Vec<u32>, TrafficError> {
    (0..fluct.num_connections())
        .map(|i| peak_demand(fluct.column(i), slots))
        .collect()
}

/// Draws `(mu, sigma2)` for a generated connection: `mu ~ unif(2.5, 4.5)`,
/// `sigma2 ~ unif(0, 1)` excluding zero.
pub fn random_model_parameters<R: Rng>(rng: &mut R) -> (f64, f64) {
    let mu = rng.random_range(2.5..4.5);
    let mut sigma2 = 0.0;
    while sigma2 <= 0.0 {
        sigma2 = rng.random_range(0.0..1.0);
    }
    (mu, sigma2)
}
