//! `fairrsa`: solve, sweep, validate and generate alpha-fair RSA instances.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use fairrsa::harness::{
    generate_instance, load_scenario, prepare, run_sweep, write_outputs, AlphaGrid,
    ExperimentConfig, HarnessError, TopologySource,
};
use fairrsa::metrics::REPORT_CSV_HEADER;
use fairrsa::solver::{read_allocation_csv, validate_allocation, SolverConfig, SolverMode};
use fairrsa::topology::connections_to_json;
use fairrsa::welfare::DEFAULT_EPSILON;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(name = "fairrsa", version, about = "Alpha-fair routing and spectrum allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single alpha (plus the utilitarian baseline).
    Solve {
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Solve every alpha of a grid and write the sweep tables.
    Sweep {
        /// Grid as start:stop:step.
        #[arg(long, default_value = "0:5:0.1")]
        alpha_grid: AlphaGrid,
        /// Number of consecutive seeds to run, starting at --seed.
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        /// Also render SVG charts.
        #[arg(long)]
        charts: bool,
        /// Also dump the sampled fluctuations.
        #[arg(long)]
        dump_fluctuations: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check an allocation dump against the instance constraints.
    Validate {
        /// Allocation CSV (connection_id,size_fs,start_slot,blocked).
        #[arg(long)]
        allocation: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write generated topology and connection files.
    Gen {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Topology file, or `dt14` for the bundled network.
    #[arg(long, default_value = "dt14")]
    topology: TopologySource,
    /// Connections file; generated from the seed when absent.
    #[arg(long)]
    connections: Option<PathBuf>,
    /// Number of generated connections.
    #[arg(long, default_value_t = 20)]
    num_connections: usize,
    /// Menu entries per connection.
    #[arg(long, default_value_t = 50)]
    choices: usize,
    /// Slots per link.
    #[arg(long, default_value_t = 100)]
    slots: u32,
    /// Fluctuation samples per connection.
    #[arg(long, default_value_t = 1000)]
    horizon: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// exact or heuristic.
    #[arg(long, default_value = "heuristic")]
    mode: SolverMode,
    #[arg(long, default_value_t = 600)]
    time_budget_secs: u64,
    /// Branch-and-bound nodes per search; defaults depend on the mode.
    #[arg(long)]
    node_limit: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// Keep slot 1 unused on every link.
    #[arg(long)]
    strict_first_slot: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self, alpha_grid: AlphaGrid) -> ExperimentConfig {
        let mut solver = match self.mode {
            SolverMode::Exact => SolverConfig::exact(),
            mode => SolverConfig::default().with_mode(mode),
        };
        solver.time_budget = Duration::from_secs(self.time_budget_secs);
        solver.strict_first_slot = self.strict_first_slot;
        if let Some(limit) = self.node_limit {
            solver.node_limit = limit;
        }
        ExperimentConfig {
            topology: self.topology.clone(),
            connections_file: self.connections.clone(),
            connections: self.num_connections,
            choices: self.choices,
            slots: self.slots,
            horizon: self.horizon,
            alpha_grid,
            seed: self.seed,
            solver,
            epsilon: self.epsilon,
            dump_fluctuations: false,
            charts: false,
        }
    }
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(e: impl ToString) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn other(e: impl ToString) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: e.to_string(),
        }
    }
}

/// Problems with inputs are configuration errors; anything else is a failure.
fn classify(e: HarnessError) -> Failure {
    match e {
        HarnessError::Io(_) | HarnessError::Metrics(_) => Failure::other(e),
        _ => Failure::config(e),
    }
}

fn solve(alpha: f64, common: &Common) -> Result<bool, Failure> {
    let config = common.config(AlphaGrid::single(alpha));
    let (prepared, result) = run_sweep(&config).map_err(classify)?;
    let point = result
        .point(alpha)
        .expect("the requested alpha is part of the sweep");
    let mut stdout = io::stdout().lock();
    match &common.out {
        Some(dir) => {
            write_outputs(&config, &prepared, &result, dir).map_err(classify)?;
            let path = dir.join("allocation.csv");
            let file = fs::File::create(&path).map_err(Failure::other)?;
            point.allocation.write_csv(file).map_err(Failure::other)?;
        }
        None => point.allocation.write_csv(&mut stdout).map_err(Failure::other)?,
    }
    let a = &point.allocation;
    eprintln!(
        "alpha {alpha}: served {}/{}, objective {}, {} ({} nodes)",
        a.served,
        a.num_connections(),
        a.objective,
        a.status,
        a.nodes
    );
    eprintln!("{REPORT_CSV_HEADER}");
    eprintln!("{}", point.report.csv_row());
    Ok(result.any_timed_out())
}

fn sweep(
    grid: AlphaGrid,
    replicates: u64,
    charts: bool,
    dump_fluctuations: bool,
    common: &Common,
) -> Result<bool, Failure> {
    if replicates == 0 {
        return Err(Failure::config("--replicates must be at least 1"));
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut timed_out = false;
    for seed in common.seed..common.seed + replicates {
        let mut config = common.config(grid);
        config.seed = seed;
        config.charts = charts;
        config.dump_fluctuations = dump_fluctuations;
        let (prepared, result) = run_sweep(&config).map_err(classify)?;
        let dir = if replicates > 1 {
            out.join(format!("seed_{seed}"))
        } else {
            out.clone()
        };
        write_outputs(&config, &prepared, &result, &dir).map_err(classify)?;
        let late: Vec<f64> = result
            .points
            .iter()
            .filter(|p| p.allocation.timed_out)
            .map(|p| p.alpha)
            .collect();
        if !late.is_empty() {
            eprintln!("seed {seed}: time budget exceeded at alpha {late:?}");
        }
        timed_out |= !late.is_empty();
        eprintln!(
            "seed {seed}: {} alphas written to {} (fingerprint {})",
            result.points.len(),
            dir.display(),
            &result.fingerprint[..12]
        );
    }
    Ok(timed_out)
}

fn validate(allocation: &Path, common: &Common) -> Result<bool, Failure> {
    let config = common.config(AlphaGrid::single(0.0));
    let prepared = load_scenario(&config)
        .and_then(|s| prepare(&config, s))
        .map_err(classify)?;
    let file = fs::File::open(allocation).map_err(Failure::config)?;
    let records = read_allocation_csv(BufReader::new(file)).map_err(Failure::config)?;
    let sizes: Vec<u32> = records.iter().map(|r| r.size).collect();
    let starts: Vec<Option<u32>> = records.iter().map(|r| r.start).collect();
    let violations = validate_allocation(&sizes, &starts, &prepared.instance, common.strict_first_slot);
    if violations.is_empty() {
        println!("feasible: {} connections, {} served", sizes.len(), sizes.iter().filter(|&&s| s > 0).count());
        return Ok(false);
    }
    let mut stdout = io::stdout().lock();
    for v in &violations {
        let _ = writeln!(stdout, "{v}");
    }
    Err(Failure::other(format!("{} constraint violations", violations.len())))
}

fn generate(common: &Common) -> Result<bool, Failure> {
    let config = common.config(AlphaGrid::single(0.0));
    let scenario = generate_instance(&config).map_err(classify)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).map_err(Failure::other)?;
    fs::write(out.join("topology.json"), scenario.topology.to_json() + "\n")
        .map_err(Failure::other)?;
    fs::write(
        out.join("connections.json"),
        connections_to_json(&scenario.connections) + "\n",
    )
    .map_err(Failure::other)?;
    eprintln!(
        "wrote {} connections on {} nodes to {}",
        scenario.connections.len(),
        scenario.topology.nodes().len(),
        out.display()
    );
    Ok(false)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve { alpha, common } => solve(*alpha, common),
        Command::Sweep {
            alpha_grid,
            replicates,
            charts,
            dump_fluctuations,
            common,
        } => sweep(*alpha_grid, *replicates, *charts, *dump_fluctuations, common),
        Command::Validate { allocation, common } => validate(allocation, common),
        Command::Gen { common } => generate(common),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(EXIT_TIMEOUT),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
