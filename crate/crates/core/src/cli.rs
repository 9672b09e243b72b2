//! Command-line front end.
//!
//! Every command writes the full effective configuration (flags, defaults
//! and seeds) into its outputs so a result file can be rerun as is.
//! Configuration and I/O problems are errors; a solver that stops before
//! converging is reported in the output, not as a failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{three_anchor_study, write_certificates_csv, write_table_csv, ThreeAnchorConfig};
use crate::gossip::{AsyncOptions, InnerOptions};
use crate::harness::{
    desk_network, equal_load_compare, export_compare, export_montecarlo, run_async_with_budget,
    run_montecarlo, Algorithm, ExperimentConfig, ScenarioSource, DESK_COMM_RADIUS, DESK_GEOMETRY_SEED,
    METERS_PER_UNIT,
};
use crate::huber::LossFamily;
use crate::netmodel::{
    apply_noise, build_incidence, corner_anchors, generate_geometric_network, lipschitz_constant,
    GeometricNetworkConfig, NoiseModel, Points, Scenario, DEFAULT_MAX_ATTEMPTS,
};
use crate::run::{read_trace_csv, write_trace_csv, Init, TraceRow};
use crate::sync::SyncOptions;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "huberloc", version, about = "Robust range-based sensor network localization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random geometric network and write it as a scenario file.
    Generate(GenerateArgs),
    /// Localize the sensors of a scenario file.
    Solve(SolveArgs),
    /// Optimality-gap certificates on the three-anchor line experiment.
    Bounds(BoundsArgs),
    /// Seeded Monte Carlo trials of one solver and one loss.
    Montecarlo(MonteCarloArgs),
    /// Synchronous and asynchronous solvers at equal communication load.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
    Outlier,
    Bias,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NoiseArgs {
    /// Range noise model
    #[arg(long, value_enum, default_value_t = NoiseKind::None)]
    pub noise: NoiseKind,
    /// Standard deviation of regular range noise
    #[arg(long, default_value_t = 0.04)]
    pub sigma: f64,
    /// Faulty sensors (comma separated)
    #[arg(long, value_delimiter = ',', default_value = "7")]
    pub faulty: Vec<usize>,
    /// Standard deviation of noise on faulty sensors' ranges
    #[arg(long, default_value_t = 4.0)]
    pub sigma_outlier: f64,
    /// Faulty sensors report this fraction of the true distance
    #[arg(long, default_value_t = 0.1)]
    pub bias_factor: f64,
}

impl NoiseArgs {
    pub fn model(&self) -> Option<NoiseModel> {
        let sigma = self.sigma;
        let faulty_nodes = self.faulty.clone();
        match self.noise {
            NoiseKind::None => None,
            NoiseKind::Gaussian => Some(NoiseModel::Gaussian { sigma }),
            NoiseKind::Outlier => Some(NoiseModel::Outlier {
                sigma,
                faulty_nodes,
                sigma_outlier: self.sigma_outlier,
            }),
            NoiseKind::Bias => Some(NoiseModel::Bias {
                sigma,
                faulty_nodes,
                bias_factor: self.bias_factor,
            }),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    pub nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Side of the square (cube) deployment area
    #[arg(long, default_value_t = 1.0)]
    pub side: f64,
    /// `corners`, or anchor coordinates as `x,y;x,y;...`
    #[arg(long, default_value = "corners")]
    pub anchors: String,
    /// Communication radius
    #[arg(long, default_value_t = DESK_COMM_RADIUS)]
    pub radius: f64,
    /// Huber radius stored with each range; defaults to 2.5 sigma with
    /// noise and 0.1 without
    #[arg(long)]
    pub huber_radius: Option<f64>,
    #[arg(long, default_value_t = DESK_GEOMETRY_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_ATTEMPTS)]
    pub max_attempts: usize,
    #[command(flatten)]
    pub noise: NoiseArgs,
    /// Seed of the range noise
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmArg {
    Sync,
    Async,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Sync => Algorithm::Sync,
            AlgorithmArg::Async => Algorithm::Async,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossArg {
    Huber,
    Quadratic,
    Absolute,
}

impl From<LossArg> for LossFamily {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Huber => LossFamily::Huber,
            LossArg::Quadratic => LossFamily::Quadratic,
            LossArg::Absolute => LossFamily::Absolute,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Synchronous rounds (default 5000), or asynchronous activations
    /// (default 100000)
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Iteration cap of each asynchronous local solve
    #[arg(long, default_value_t = 200)]
    pub inner_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub inner_tol: f64,
}

impl SolverArgs {
    fn sync(&self) -> SyncOptions {
        let d = SyncOptions::default();
        SyncOptions {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol,
            ..d
        }
    }

    fn gossip(&self) -> AsyncOptions {
        let d = AsyncOptions::default();
        AsyncOptions {
            max_steps: self.max_iters.unwrap_or(d.max_steps),
            tol: self.tol,
            inner: InnerOptions {
                tol: self.inner_tol,
                max_iters: self.inner_iters,
            },
            ..d
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Sync)]
    pub algorithm: AlgorithmArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Seed of the random start and of the activation order
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override every Huber radius in the scenario
    #[arg(long)]
    pub radius_huber: Option<f64>,
    /// Run the asynchronous solver until it has used as many scalar
    /// deliveries as the run recorded in this trace
    #[arg(long)]
    pub match_load: Option<PathBuf>,
    /// Estimated positions (CSV)
    #[arg(long, default_value = "estimates.csv")]
    pub estimates: PathBuf,
    /// Per-iteration trace (CSV)
    #[arg(long, default_value = "trace.csv")]
    pub trace: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSelection {
    All,
    Huber,
    Quadratic,
    Absolute,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[arg(long, value_enum, default_value_t = LossSelection::All)]
    pub loss: LossSelection,
    #[arg(long, default_value_t = 500)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.04)]
    pub sigma: f64,
    #[arg(long, default_value_t = 4.0)]
    pub sigma_outlier: f64,
    #[arg(long, default_value_t = 0.1)]
    pub huber_radius: f64,
    /// Grid spacing of the brute-force minimization
    #[arg(long, default_value_t = 1e-4)]
    pub resolution: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "bounds")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    /// Scenario file; without it the built-in desk-scale network is used
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long)]
    pub huber_radius: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Master seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Sensors left out of the error metric (comma separated)
    #[arg(long, value_delimiter = ',', default_value = "7")]
    pub exclude: Vec<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = METERS_PER_UNIT)]
    pub meters_per_unit: f64,
}

impl ExperimentArgs {
    fn config(&self, surrogate: LossFamily, algorithm: Algorithm) -> Result<ExperimentConfig> {
        let noise = self.noise.model().ok_or_else(|| {
            Error::InvalidArgument("experiments need a noise model (--noise)".into())
        })?;
        let scenario = match &self.scenario {
            Some(path) => ScenarioSource::File { path: path.clone() },
            None => ScenarioSource::Generated(desk_network()),
        };
        Ok(ExperimentConfig {
            scenario,
            noise,
            surrogate,
            huber_radius: self.huber_radius,
            algorithm,
            trials: self.trials,
            seed: self.seed,
            exclude: self.exclude.clone(),
            sync: self.solver.sync(),
            gossip: self.solver.gossip(),
            jobs: self.jobs,
            meters_per_unit: self.meters_per_unit,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MonteCarloArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, value_enum, default_value_t = LossArg::Huber)]
    pub loss: LossArg,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Sync)]
    pub algorithm: AlgorithmArg,
    #[arg(long, default_value = "montecarlo")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, default_value = "compare")]
    pub out_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Bounds(a) => cmd_bounds(&a),
        Command::Montecarlo(a) => cmd_montecarlo(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

fn echo<T: Serialize>(args: &T) -> String {
    serde_json::to_string(args).expect("flags serialize")
}

fn parse_anchors(text: &str, dim: usize, side: f64) -> Result<Vec<Vec<f64>>> {
    if text == "corners" {
        return Ok(corner_anchors(dim, side).rows());
    }
    text.split(';')
        .map(|point| {
            let coords = point
                .split(',')
                .map(|c| {
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("bad anchor coordinate `{c}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if coords.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "anchor `{point}` has {} coordinates, expected {dim}",
                    coords.len()
                )));
            }
            Ok(coords)
        })
        .collect()
}

fn network_summary(scenario: &Scenario) -> Result<String> {
    let inc = build_incidence(scenario);
    Ok(format!(
        "nodes {}  edges {}  anchor links {}  average degree {:.2}  max degree {}  L_F {}",
        scenario.node_count(),
        scenario.edges().len(),
        scenario.links().len(),
        scenario.average_degree(),
        inc.max_degree(),
        lipschitz_constant(&inc)?
    ))
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    if !(a.radius > 0.0) {
        return Err(Error::InvalidArgument("--radius must be positive".into()));
    }
    let model = a.noise.model();
    let huber_radius = a
        .huber_radius
        .unwrap_or_else(|| crate::netmodel::default_huber_radius(model.as_ref().map(|m| m.regular_sigma())));
    let cfg = GeometricNetworkConfig {
        nodes: a.nodes,
        dim: a.dim,
        area_side: a.side,
        comm_radius: a.radius,
        anchors: parse_anchors(&a.anchors, a.dim, a.side)?,
        huber_radius,
        seed: a.seed,
        max_attempts: a.max_attempts,
    };
    let mut scenario = generate_geometric_network(&cfg)?;
    if let Some(m) = &model {
        scenario = apply_noise(&scenario, m, a.noise_seed)?;
    }
    let mut doc = scenario.to_document();
    doc.generated_by = Some(serde_json::json!({ "flags": a, "network": cfg, "noise": model }));
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    fs::write(&a.out, text).map_err(|e| Error::io(&a.out, e))?;
    println!("{}", network_summary(&scenario)?);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn write_estimates(path: &Path, x: &Points, header: &[String]) -> Result<()> {
    let mut buf = Vec::new();
    for line in header {
        writeln!(buf, "# {line}").map_err(|e| Error::io(path, e))?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut head = vec!["node".to_string()];
        head.extend((0..x.dim()).map(|c| format!("x{c}")));
        w.write_record(&head)?;
        for (i, p) in x.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn write_trace(path: &Path, trace: &[TraceRow], header: &[String]) -> Result<()> {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, trace, header)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn cmd_solve(a: &SolveArgs) -> Result<()> {
    let mut scenario = Scenario::load(&a.scenario)?;
    if let Some(r) = a.radius_huber {
        scenario = scenario.with_huber_radius(r)?;
    }
    let init = Init::Random { seed: a.seed };
    let mut header = vec![format!("config {}", echo(a))];
    match a.algorithm {
        AlgorithmArg::Sync => header.push(format!("sync options {}", echo(&a.solver.sync()))),
        AlgorithmArg::Async => header.push(format!("async options {}", echo(&a.solver.gossip()))),
    }

    let (positions, trace, converged) = match (&a.match_load, a.algorithm) {
        (Some(_), AlgorithmArg::Sync) => {
            return Err(Error::InvalidArgument(
                "--match-load applies to the asynchronous solver".into(),
            ))
        }
        (Some(path), AlgorithmArg::Async) => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let reference = read_trace_csv(file)?;
            let budget = reference.last().map_or(0, |r| r.messages_cumulative);
            header.push(format!("message budget {budget}"));
            let out = run_async_with_budget(&scenario, &init, a.seed, budget, &a.solver.gossip())?;
            (out.positions, out.trace, out.converged)
        }
        (None, alg) => match Algorithm::from(alg) {
            Algorithm::Sync => {
                let out = crate::sync::run_sync(&scenario, &init, &a.solver.sync())?;
                (out.positions, out.trace, out.converged)
            }
            Algorithm::Async => {
                let mut seq = crate::gossip::ActivationSequence::uniform(scenario.node_count(), a.seed)?;
                let out = crate::gossip::run_async(&scenario, &init, &mut seq, &a.solver.gossip())?;
                (out.positions, out.trace, out.converged)
            }
        },
    };
    header.push(format!("converged {converged}"));
    write_estimates(&a.estimates, &positions, &header)?;
    write_trace(&a.trace, &trace, &header)?;
    let last = trace.last().expect("trace has the starting row");
    println!(
        "{}: {} iterations, final cost {:e}, {} scalar messages, converged {}",
        Algorithm::from(a.algorithm).name(),
        last.iter,
        last.cost,
        last.messages_cumulative,
        converged
    );
    Ok(())
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_bounds(a: &BoundsArgs) -> Result<()> {
    let losses: Vec<LossFamily> = match a.loss {
        LossSelection::All => LossFamily::ALL.to_vec(),
        LossSelection::Huber => vec![LossFamily::Huber],
        LossSelection::Quadratic => vec![LossFamily::Quadratic],
        LossSelection::Absolute => vec![LossFamily::Absolute],
    };
    let cfg = ThreeAnchorConfig {
        trials: a.trials,
        seed: a.seed,
        sigma: a.sigma,
        sigma_outlier: a.sigma_outlier,
        huber_radius: a.huber_radius,
        resolution: a.resolution,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker threads: {e}")))?;
    let table = pool.install(|| three_anchor_study(&cfg, &losses))?;
    prepare_dir(&a.out_dir)?;
    let certs = a.out_dir.join("certificates.csv");
    let mut buf = Vec::new();
    write_certificates_csv(&mut buf, &table.certificates)?;
    fs::write(&certs, buf).map_err(|e| Error::io(&certs, e))?;
    let tpath = a.out_dir.join("table.csv");
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &table.rows)?;
    fs::write(&tpath, buf).map_err(|e| Error::io(&tpath, e))?;
    write_json(
        &a.out_dir.join("config.json"),
        &serde_json::json!({ "flags": a, "experiment": cfg }),
    )?;
    println!("{:<10} {:>14} {:>14} {:>12}", "loss", "tight bound", "a priori", "tight < ap.");
    for r in &table.rows {
        println!(
            "{:<10} {:>14.4} {:>14.4} {:>11.1}%",
            r.loss.name(),
            r.mean_tight_bound,
            r.mean_apriori_bound,
            100.0 * r.tight_below_apriori
        );
    }
    Ok(())
}

pub fn cmd_montecarlo(a: &MonteCarloArgs) -> Result<()> {
    let config = a.experiment.config(a.loss.into(), a.algorithm.into())?;
    let report = run_montecarlo(&config)?;
    export_montecarlo(&a.out_dir, &report)?;
    write_json(&a.out_dir.join("flags.json"), a)?;
    println!(
        "{} trials, mean error {:.3} m (std {:.3}), {} converged; wrote {}",
        report.summary.trials,
        report.summary.mean_error,
        report.summary.std_error,
        report.summary.converged_trials,
        a.out_dir.display()
    );
    Ok(())
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let config = a.experiment.config(LossFamily::Huber, Algorithm::Sync)?;
    let report = equal_load_compare(&config)?;
    export_compare(&a.out_dir, &report)?;
    write_json(&a.out_dir.join("flags.json"), a)?;
    println!(
        "{} trials at equal load: sync mean error {:.3} m, async mean error {:.3} m; wrote {}",
        report.summary.trials,
        report.summary.sync_mean_error,
        report.summary.async_mean_error,
        a.out_dir.display()
    );
    Ok(())
}
