//! End-to-end experiments: instance generation, alpha sweeps and output files.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{evaluate, MetricsError, MetricsReport, REPORT_CSV_HEADER};
use crate::solver::{solve_alpha_fair, Allocation, RsaInstance, SolverConfig, SolverError};
use crate::topology::{
    build_link_utilization, check_connections, connections_to_json, load_connections, route_all,
    ConnectionRequest, LinkUtilizationMatrix, Route, Topology, TopologyError,
};
use crate::traffic::{
    peak_demands, random_model_parameters, sample_fluctuations, FluctuationSet, TrafficError,
    TrafficModel,
};
use crate::welfare::{
    build_utility_matrix, normalize_utilities, Alpha, UtilityMatrix, WelfareError,
    DEFAULT_EPSILON,
};

mod plot;

pub use plot::{line_chart_svg, Series};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Welfare(#[from] WelfareError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Evenly spaced alpha values `start, start+step, ..., <= stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 5.0,
            step: 0.1,
        }
    }
}

impl AlphaGrid {
    pub fn single(alpha: f64) -> Self {
        Self {
            start: alpha,
            stop: alpha,
            step: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let finite = self.start.is_finite() && self.stop.is_finite() && self.step.is_finite();
        if !finite || self.step <= 0.0 || self.start < 0.0 || self.stop < self.start {
            return Err(HarnessError::Config(format!(
                "alpha grid {}:{}:{} must satisfy 0 <= start <= stop and step > 0",
                self.start, self.stop, self.step
            )));
        }
        Ok(())
    }

    /// Grid points, rounded to 9 decimals so that `0.1 * 3` prints as `0.3`.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

impl FromStr for AlphaGrid {
    type Err = HarnessError;

    /// Parses `start:stop:step`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || HarnessError::Config(format!("alpha grid '{s}' is not start:stop:step"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| bad());
        let grid = Self {
            start: num(parts[0])?,
            stop: num(parts[1])?,
            step: num(parts[2])?,
        };
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    Dt14,
    File(PathBuf),
}

impl FromStr for TopologySource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("dt14") {
            Self::Dt14
        } else {
            Self::File(PathBuf::from(s))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub topology: TopologySource,
    /// Fixed connection set; when absent, connections are generated.
    pub connections_file: Option<PathBuf>,
    pub connections: usize,
    /// Number of menu entries per connection.
    pub choices: usize,
    /// Slots per link.
    pub slots: u32,
    /// Number of fluctuation samples per connection.
    pub horizon: usize,
    pub alpha_grid: AlphaGrid,
    pub seed: u64,
    pub solver: SolverConfig,
    pub epsilon: f64,
    pub dump_fluctuations: bool,
    pub charts: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: TopologySource::Dt14,
            connections_file: None,
            connections: 20,
            choices: 50,
            slots: 100,
            horizon: 1000,
            alpha_grid: AlphaGrid::default(),
            seed: 1,
            solver: SolverConfig::default(),
            epsilon: DEFAULT_EPSILON,
            dump_fluctuations: false,
            charts: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.alpha_grid.validate()?;
        if self.connections == 0 && self.connections_file.is_none() {
            return Err(HarnessError::Config("at least one connection is needed".into()));
        }
        if self.horizon == 0 {
            return Err(HarnessError::Config("horizon must be positive".into()));
        }
        if self.choices == 0 || self.slots == 0 || !(self.slots as usize).is_multiple_of(self.choices) {
            return Err(HarnessError::Config(format!(
                "slots ({}) must be a positive multiple of choices ({})",
                self.slots, self.choices
            )));
        }
        Ok(())
    }

    fn load_topology(&self) -> Result<Topology, HarnessError> {
        let topo = match &self.topology {
            TopologySource::Dt14 => Topology::dt14(self.slots),
            TopologySource::File(path) => Topology::load(path)?,
        };
        if topo.slots_per_link() != self.slots {
            return Err(HarnessError::Config(format!(
                "topology has {} slots per link, configuration says {}",
                topo.slots_per_link(),
                self.slots
            )));
        }
        Ok(topo)
    }
}

/// A network with its connection requests.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub connections: Vec<ConnectionRequest>,
}

/// Draws `n` connections between distinct unordered node pairs, with
/// traffic parameters from [`random_model_parameters`].
pub fn generate_instance(config: &ExperimentConfig) -> Result<Scenario, HarnessError> {
    config.validate()?;
    let topology = config.load_topology()?;
    let nodes = topology.nodes();
    let pairs: Vec<(usize, usize)> = (0..nodes.len())
        .flat_map(|a| (a + 1..nodes.len()).map(move |b| (a, b)))
        .collect();
    if config.connections > pairs.len() {
        return Err(HarnessError::Config(format!(
            "{} connections requested but the topology has only {} node pairs",
            config.connections,
            pairs.len()
        )));
    }
    // Stream 0 of the traffic generator belongs to connection 0; use a
    // stream no connection can reach.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let picked = index::sample(&mut rng, pairs.len(), config.connections);
    let cap = f64::from(config.slots);
    let connections = picked
        .into_iter()
        .enumerate()
        .map(|(id, p)| {
            let (a, b) = pairs[p];
            let (mu, sigma2) = random_model_parameters(&mut rng);
            ConnectionRequest {
                id,
                source: nodes[a].clone(),
                destination: nodes[b].clone(),
                traffic: TrafficModel::new(mu, sigma2).with_cap(cap),
            }
        })
        .collect();
    let connections = check_connections(connections, &topology)?;
    Ok(Scenario {
        topology,
        connections,
    })
}

/// Generated scenario, or the configured connections file on the configured topology.
pub fn load_scenario(config: &ExperimentConfig) -> Result<Scenario, HarnessError> {
    match &config.connections_file {
        None => generate_instance(config),
        Some(path) => {
            config.validate()?;
            let topology = config.load_topology()?;
            let connections = load_connections(path, &topology)?;
            Ok(Scenario {
                topology,
                connections,
            })
        }
    }
}

/// Everything derived from a scenario that the sweep shares across alphas.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub scenario: Scenario,
    pub routes: Vec<Route>,
    pub fluctuations: FluctuationSet,
    pub instance: RsaInstance,
}

impl PreparedInstance {
    pub fn p(&self) -> &LinkUtilizationMatrix {
        &self.instance.p
    }

    pub fn u(&self) -> &UtilityMatrix {
        &self.instance.u
    }
}

/// Routes the connections, samples fluctuations and builds the matrices.
pub fn prepare(config: &ExperimentConfig, scenario: Scenario) -> Result<PreparedInstance, HarnessError> {
    let n = scenario.connections.len();
    let routes = route_all(&scenario.topology, &scenario.connections)?;
    let p = build_link_utilization(&routes, &scenario.topology, n)?;
    let models: Vec<TrafficModel> = scenario.connections.iter().map(|c| c.traffic).collect();
    let fluctuations = sample_fluctuations(&models, config.horizon, config.seed)?;
    let peaks = peak_demands(&fluctuations, config.slots)?;
    let u = build_utility_matrix(&peaks, config.slots, config.choices)?;
    let u_hat = normalize_utilities(&u, config.epsilon)?;
    let instance = RsaInstance::new(p, u, u_hat)?;
    Ok(PreparedInstance {
        scenario,
        routes,
        fluctuations,
        instance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub allocation: Allocation,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Ordered by alpha; the utilitarian baseline is always the first entry.
    pub points: Vec<SweepPoint>,
    /// SHA-256 over the instance inputs, seed and solver settings.
    pub fingerprint: String,
}

impl SweepResult {
    pub fn any_timed_out(&self) -> bool {
        self.points.iter().any(|p| p.allocation.timed_out)
    }

    pub fn point(&self, alpha: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| (p.alpha - alpha).abs() < 1e-9)
    }
}

fn fingerprint(config: &ExperimentConfig, scenario: &Scenario, alphas: &[f64]) -> String {
    let mut h = Sha256::new();
    let topo = serde_json::to_string(&scenario.topology.to_file_data()).expect("topology serializes");
    h.update(topo.as_bytes());
    h.update(connections_to_json(&scenario.connections).as_bytes());
    let s = &config.solver;
    h.update(
        format!(
            "m={};M={};T={};seed={};eps={};alphas={alphas:?};mode={};nodes={};order={:?};strict={};cuts={}",
            config.choices,
            config.slots,
            config.horizon,
            config.seed,
            config.epsilon,
            s.mode,
            s.node_limit,
            s.spectrum_order,
            s.strict_first_slot,
            s.cut_limit
        )
        .as_bytes(),
    );
    h.finalize().iter().fold(String::new(), |mut out, b| {
        let _ = write!(out, "{b:02x}");
        out
    })
}

/// Sweep points with the baseline prepended when the grid lacks it.
pub fn sweep_alphas(grid: &AlphaGrid) -> Vec<f64> {
    let mut alphas = grid.points();
    if alphas.first().is_none_or(|&a| a != 0.0) {
        alphas.insert(0, 0.0);
    }
    alphas
}

/// Solves every alpha of the grid on one prepared instance, in parallel.
pub fn sweep_instance(
    config: &ExperimentConfig,
    prepared: &PreparedInstance,
) -> Result<SweepResult, HarnessError> {
    let alphas = sweep_alphas(&config.alpha_grid);
    let solved = alphas
        .par_iter()
        .map(|&a| -> Result<(Allocation, MetricsReport), HarnessError> {
            let alpha = Alpha::new(a)?;
            let allocation = solve_alpha_fair(&prepared.instance, alpha, &config.solver)?;
            let report = evaluate(&allocation, &prepared.fluctuations, prepared.p())?;
            Ok((allocation, report))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let baseline = solved[0].1.clone();
    let points = alphas
        .iter()
        .zip(solved)
        .map(|(&alpha, (allocation, report))| SweepPoint {
            alpha,
            allocation,
            report: report.with_baseline(&baseline),
        })
        .collect();
    Ok(SweepResult {
        points,
        fingerprint: fingerprint(config, &prepared.scenario, &alphas),
    })
}

pub fn run_sweep(config: &ExperimentConfig) -> Result<(PreparedInstance, SweepResult), HarnessError> {
    config.validate()?;
    let prepared = prepare(config, load_scenario(config)?)?;
    let result = sweep_instance(config, &prepared)?;
    Ok((prepared, result))
}

/// Header of `sweep.csv`: the metrics row followed by run details.
pub const SWEEP_CSV_HEADER: &str = "utilization_fs,served,objective,status,timed_out";

pub fn write_sweep_csv<W: Write>(result: &SweepResult, mut out: W) -> io::Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER},{SWEEP_CSV_HEADER}")?;
    for p in &result.points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.report.csv_row(),
            p.report.utilization_fs,
            p.allocation.served,
            p.allocation.objective,
            p.allocation.status,
            u8::from(p.allocation.timed_out)
        )?;
    }
    Ok(())
}

/// Metric names and values of one report, in long-format order.
fn metric_values(r: &MetricsReport) -> [(&'static str, Option<f64>); 9] {
    [
        ("blocking_pct", Some(r.blocking_percent)),
        ("utilization_fs_link", Some(r.utilization_fs_link as f64)),
        ("utilization_fs", Some(r.utilization_fs as f64)),
        ("cop", Some(r.cop)),
        ("cup", Some(r.cup)),
        ("icop", r.icop),
        ("icup", r.icup),
        ("cv_u", r.cv_utilities),
        ("cv_uminus", r.cv_unserved),
    ]
}

/// Plot-ready `seed,alpha,metric,value` rows; undefined values are skipped.
pub fn write_long_csv<W: Write>(seed: u64, result: &SweepResult, mut out: W) -> io::Result<()> {
    writeln!(out, "seed,alpha,metric,value")?;
    for p in &result.points {
        for (name, value) in metric_values(&p.report) {
            if let Some(v) = value {
                writeln!(out, "{seed},{},{name},{v}", p.alpha)?;
            }
        }
    }
    Ok(())
}

fn create(path: &Path) -> io::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// File name of the allocation dump for one alpha, e.g. `alpha_0.30.csv`.
pub fn allocation_file_name(alpha: f64) -> String {
    format!("alpha_{alpha:.2}.csv")
}

/// Writes the sweep table, per-alpha allocations, instance files and
/// optional fluctuations and charts under `dir`.
pub fn write_outputs(
    config: &ExperimentConfig,
    prepared: &PreparedInstance,
    result: &SweepResult,
    dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir.join("allocations"))?;
    let mut out = create(&dir.join("sweep.csv"))?;
    write_sweep_csv(result, &mut out)?;
    out.flush()?;

    let mut out = create(&dir.join("sweep_long.csv"))?;
    write_long_csv(config.seed, result, &mut out)?;
    out.flush()?;

    for p in &result.points {
        let mut out = create(&dir.join("allocations").join(allocation_file_name(p.alpha)))?;
        p.allocation.write_csv(&mut out)?;
        out.flush()?;
    }

    fs::write(dir.join("topology.json"), prepared.scenario.topology.to_json() + "\n")?;
    fs::write(
        dir.join("connections.json"),
        connections_to_json(&prepared.scenario.connections) + "\n",
    )?;
    fs::write(dir.join("fingerprint.txt"), format!("{}\n", result.fingerprint))?;

    if config.dump_fluctuations {
        let mut out = create(&dir.join("fluctuations.csv"))?;
        prepared.fluctuations.write_csv(&mut out)?;
        out.flush()?;
    }
    if config.charts {
        write_charts(result, dir)?;
    }
    Ok(())
}

fn write_charts(result: &SweepResult, dir: &Path) -> io::Result<()> {
    let series = |name: &'static str, f: fn(&MetricsReport) -> Option<f64>| Series {
        name: name.to_string(),
        points: result
            .points
            .iter()
            .filter_map(|p| f(&p.report).map(|v| (p.alpha, v)))
            .collect(),
    };
    let charts = [
        (
            "blocking.svg",
            "Connection blocking (%)",
            vec![series("blocking", |r| Some(r.blocking_percent))],
        ),
        (
            "utilization.svg",
            "Resource utilization (FS x links)",
            vec![series("utilization", |r| Some(r.utilization_fs_link as f64))],
        ),
        (
            "provisioning.svg",
            "Expected excess and unserved traffic (FS)",
            vec![series("COP", |r| Some(r.cop)), series("CUP", |r| Some(r.cup))],
        ),
        (
            "improvement.svg",
            "Improvement over the utilitarian allocation",
            vec![series("ICOP", |r| r.icop), series("ICUP", |r| r.icup)],
        ),
        (
            "dispersion.svg",
            "Coefficient of variation",
            vec![
                series("utilities", |r| r.cv_utilities),
                series("unserved", |r| r.cv_unserved),
            ],
        ),
    ];
    for (file, title, data) in charts {
        fs::write(dir.join(file), line_chart_svg(title, "alpha", &data))?;
    }
    Ok(())
}
