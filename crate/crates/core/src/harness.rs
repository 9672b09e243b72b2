//! Monte Carlo experiments: seeded trials, positioning error, empirical CDFs,
//! the equal-communication comparison of the two solvers, and file export.
//!
//! The geometry is drawn (or loaded) once per experiment; every trial
//! redraws the range noise and the random initialization. Trial `m` takes
//! its seeds from [`trial_seed`] on streams `3m` (noise), `3m + 1`
//! (initial positions) and `3m + 2` (activation order), so two experiments
//! with the same master seed see the same noise and start points whatever
//! the solver, surrogate or thread count.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::gossip::{ActivationSequence, AsyncOptions, AsyncOutcome, AsyncSolver};
use crate::huber::LossFamily;
use crate::netmodel::{
    apply_noise, default_huber_radius, generate_geometric_network, GeometricNetworkConfig, NoiseModel, Points,
    Scenario,
};
use crate::run::{trial_seed, Init};
use crate::sync::{SyncOptions, SyncSolver};
use crate::{Error, Result};

/// Huber radius standing in for the quadratic loss: no realistic residual
/// leaves the ball, so `h_R(t) = t^2` throughout.
pub const QUADRATIC_RADIUS: f64 = 1e6;
/// Huber radius standing in for the absolute loss: almost every residual is
/// outside the ball, where `h_R(t) = 2R|t| - R^2` has the minimizers of `|t|`.
pub const ABSOLUTE_RADIUS: f64 = 1e-3;

/// Communication radius of the desk-scale network.
pub const DESK_COMM_RADIUS: f64 = 0.5;
/// Generator seed of the desk-scale network: ten sensors, average degree
/// 4.4, and a noiseless relaxation whose minimizer is the true layout.
pub const DESK_GEOMETRY_SEED: u64 = 91;

/// Meters per scenario length unit when the unit square is 1 km wide.
pub const METERS_PER_UNIT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sync,
    Async,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sync => "sync",
            Algorithm::Async => "async",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sync" => Ok(Algorithm::Sync),
            "async" => Ok(Algorithm::Async),
            other => Err(format!("unknown algorithm `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    File { path: PathBuf },
    Generated(GeometricNetworkConfig),
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::File { path } => Scenario::load(path),
            ScenarioSource::Generated(cfg) => generate_geometric_network(cfg),
        }
    }
}

pub fn desk_network() -> GeometricNetworkConfig {
    GeometricNetworkConfig::unit_square(10, DESK_COMM_RADIUS, DESK_GEOMETRY_SEED)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub noise: NoiseModel,
    /// Loss the solver minimizes; quadratic and absolute are reached through
    /// [`QUADRATIC_RADIUS`] and [`ABSOLUTE_RADIUS`].
    pub surrogate: LossFamily,
    /// Huber radius; `None` means 2.5 times the regular noise deviation.
    pub huber_radius: Option<f64>,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub seed: u64,
    /// Nodes left out of the error metric.
    pub exclude: Vec<usize>,
    pub sync: SyncOptions,
    #[serde(rename = "async")]
    pub gossip: AsyncOptions,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
    pub meters_per_unit: f64,
}

impl ExperimentConfig {
    /// The desk-scale network with sensor 7 excluded from the metric, 100
    /// trials of the synchronous Huber solver.
    pub fn desk_scale(noise: NoiseModel, seed: u64) -> Self {
        ExperimentConfig {
            scenario: ScenarioSource::Generated(desk_network()),
            noise,
            surrogate: LossFamily::Huber,
            huber_radius: None,
            algorithm: Algorithm::Sync,
            trials: 100,
            seed,
            exclude: vec![7],
            sync: SyncOptions::default(),
            gossip: AsyncOptions::default(),
            jobs: 1,
            meters_per_unit: METERS_PER_UNIT,
        }
    }

    /// The radius actually handed to the solver.
    pub fn solver_radius(&self) -> f64 {
        match self.surrogate {
            LossFamily::Quadratic => QUADRATIC_RADIUS,
            LossFamily::Absolute => ABSOLUTE_RADIUS,
            LossFamily::Huber => self
                .huber_radius
                .unwrap_or_else(|| default_huber_radius(Some(self.noise.regular_sigma()))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("at least one trial is needed".into()));
        }
        if !(self.meters_per_unit > 0.0) {
            return Err(Error::InvalidArgument("meters per unit must be positive".into()));
        }
        if let Some(r) = self.huber_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument("Huber radius must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `|x_hat - x*| / |V|` over the retained nodes, `|V|` being their count.
pub fn error_per_sensor(estimates: &Points, truth: &Points, excluded: &[usize]) -> Result<f64> {
    if estimates.dim() != truth.dim() || estimates.len() != truth.len() {
        return Err(Error::InvalidArgument("estimate and truth shapes differ".into()));
    }
    let mut sq = 0.0;
    let mut kept = 0usize;
    for (i, (e, t)) in estimates.iter().zip(truth.iter()).enumerate() {
        if excluded.contains(&i) {
            continue;
        }
        kept += 1;
        sq += e.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    if kept == 0 {
        return Err(Error::InvalidArgument("every node is excluded".into()));
    }
    Ok(sq.sqrt() / kept as f64)
}

/// Right-continuous empirical CDF: one `(value, fraction <= value)` pair per
/// distinct value, ascending.
pub fn empirical_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("empirical CDF of no values".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("empirical CDF of NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, &v) in sorted.iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub algorithm: Algorithm,
    /// Positioning error per sensor, in meters.
    pub error: f64,
    pub iterations: usize,
    pub messages: u64,
    pub converged: bool,
    #[serde(skip)]
    pub estimates: Points,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialSeeds {
    pub noise: u64,
    pub init: u64,
    pub activation: u64,
}

pub fn trial_seeds(master: u64, trial: usize) -> TrialSeeds {
    TrialSeeds {
        noise: trial_seed(master, 3 * trial),
        init: trial_seed(master, 3 * trial + 1),
        activation: trial_seed(master, 3 * trial + 2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean_error: f64,
    pub std_error: f64,
    pub trials: usize,
    pub converged_trials: usize,
    pub config: ExperimentConfig,
    pub seeds: Vec<TrialSeeds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub trials: Vec<TrialResult>,
    pub cdf: Vec<(f64, f64)>,
    pub summary: Summary,
}

/// Runs one solver on one noisy scenario.
pub fn solve_once(
    scenario: &Scenario,
    algorithm: Algorithm,
    init: &Init,
    activation_seed: u64,
    sync: &SyncOptions,
    gossip: &AsyncOptions,
) -> Result<(Points, usize, u64, bool)> {
    match algorithm {
        Algorithm::Sync => {
            let out = SyncSolver::new(scenario)?.run(init, sync)?;
            Ok((out.positions, out.state.t, out.state.messages, out.converged))
        }
        Algorithm::Async => {
            let mut seq = ActivationSequence::uniform(scenario.node_count(), activation_seed)?;
            let out = AsyncSolver::new(scenario)?.run(init, &mut seq, gossip)?;
            Ok((out.positions, out.state.t, out.state.messages, out.converged))
        }
    }
}

fn with_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker threads: {e}")))?;
    Ok(pool.install(work))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Noisy scenario and initialization of trial `m`.
pub fn trial_instance(config: &ExperimentConfig, base: &Scenario, trial: usize) -> Result<(Scenario, Init)> {
    let seeds = trial_seeds(config.seed, trial);
    let noisy = apply_noise(base, &config.noise, seeds.noise)?.with_huber_radius(config.solver_radius())?;
    Ok((noisy, Init::Random { seed: seeds.init }))
}

pub fn run_montecarlo(config: &ExperimentConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let base = config.scenario.load()?;
    let trials: Vec<TrialResult> = with_pool(config.jobs, || {
        (0..config.trials)
            .into_par_iter()
            .map(|m| -> Result<TrialResult> {
                let (noisy, init) = trial_instance(config, &base, m)?;
                let seeds = trial_seeds(config.seed, m);
                let (x, iterations, messages, converged) =
                    solve_once(&noisy, config.algorithm, &init, seeds.activation, &config.sync, &config.gossip)?;
                Ok(TrialResult {
                    trial: m,
                    algorithm: config.algorithm,
                    error: config.meters_per_unit * error_per_sensor(&x, base.truth(), &config.exclude)?,
                    iterations,
                    messages,
                    converged,
                    estimates: x,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let errors: Vec<f64> = trials.iter().map(|t| t.error).collect();
    let (mean_error, std_error) = mean_std(&errors);
    Ok(MonteCarloReport {
        cdf: empirical_cdf(&errors)?,
        summary: Summary {
            mean_error,
            std_error,
            trials: trials.len(),
            converged_trials: trials.iter().filter(|t| t.converged).count(),
            config: config.clone(),
            seeds: (0..config.trials).map(|m| trial_seeds(config.seed, m)).collect(),
        },
        trials,
    })
}

/// One trial of the equal-load comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadPair {
    pub trial: usize,
    /// Scalar deliveries spent by the synchronous run.
    pub budget: u64,
    pub sync: TrialResult,
    #[serde(rename = "async")]
    pub gossip: TrialResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSummary {
    pub sync_mean_error: f64,
    pub async_mean_error: f64,
    pub trials: usize,
    pub config: ExperimentConfig,
    pub seeds: Vec<TrialSeeds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub pairs: Vec<LoadPair>,
    pub sync_cdf: Vec<(f64, f64)>,
    pub async_cdf: Vec<(f64, f64)>,
    pub summary: CompareSummary,
}

/// Asynchronous run that spends at most `budget` scalar deliveries and
/// stops only when the next broadcast would exceed it.
pub fn run_async_with_budget(
    scenario: &Scenario,
    init: &Init,
    activation_seed: u64,
    budget: u64,
    inner: &AsyncOptions,
) -> Result<AsyncOutcome> {
    let opts = AsyncOptions {
        max_steps: usize::MAX,
        tol: f64::MIN_POSITIVE,
        stop_when_stalled: false,
        inner: inner.inner,
        message_budget: Some(budget),
    };
    let mut seq = ActivationSequence::uniform(scenario.node_count(), activation_seed)?;
    AsyncSolver::new(scenario)?.run(init, &mut seq, &opts)
}

/// Runs the synchronous solver per trial, then the asynchronous one from the
/// same start until it has used the same number of scalar deliveries.
pub fn equal_load_compare(config: &ExperimentConfig) -> Result<CompareReport> {
    config.validate()?;
    let base = config.scenario.load()?;
    let scale = config.meters_per_unit;
    let pairs: Vec<LoadPair> = with_pool(config.jobs, || {
        (0..config.trials)
            .into_par_iter()
            .map(|m| -> Result<LoadPair> {
                let (noisy, init) = trial_instance(config, &base, m)?;
                let seeds = trial_seeds(config.seed, m);
                let s = SyncSolver::new(&noisy)?.run(&init, &config.sync)?;
                let budget = s.state.messages;
                let a = run_async_with_budget(&noisy, &init, seeds.activation, budget, &config.gossip)?;
                let truth = base.truth();
                Ok(LoadPair {
                    trial: m,
                    budget,
                    sync: TrialResult {
                        trial: m,
                        algorithm: Algorithm::Sync,
                        error: scale * error_per_sensor(&s.positions, truth, &config.exclude)?,
                        iterations: s.state.t,
                        messages: budget,
                        converged: s.converged,
                        estimates: s.positions,
                    },
                    gossip: TrialResult {
                        trial: m,
                        algorithm: Algorithm::Async,
                        error: scale * error_per_sensor(&a.positions, truth, &config.exclude)?,
                        iterations: a.state.t,
                        messages: a.state.messages,
                        converged: a.converged,
                        estimates: a.positions,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let se: Vec<f64> = pairs.iter().map(|p| p.sync.error).collect();
    let ae: Vec<f64> = pairs.iter().map(|p| p.gossip.error).collect();
    Ok(CompareReport {
        sync_cdf: empirical_cdf(&se)?,
        async_cdf: empirical_cdf(&ae)?,
        summary: CompareSummary {
            sync_mean_error: mean_std(&se).0,
            async_mean_error: mean_std(&ae).0,
            trials: pairs.len(),
            config: config.clone(),
            seeds: (0..config.trials).map(|m| trial_seeds(config.seed, m)).collect(),
        },
        pairs,
    })
}

/// `trial,error,iters,messages,converged`
pub fn write_trials_csv<W: Write>(out: W, trials: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "error", "iters", "messages", "converged"])?;
    for t in trials {
        w.write_record([
            t.trial.to_string(),
            t.error.to_string(),
            t.iterations.to_string(),
            t.messages.to_string(),
            t.converged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trials>", e))?;
    Ok(())
}

/// `value,fraction`
pub fn write_cdf_csv<W: Write>(out: W, cdf: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "fraction"])?;
    for (v, f) in cdf {
        w.write_record([v.to_string(), f.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<cdf>", e))?;
    Ok(())
}

fn write_file(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `trials.csv`, `cdf.csv` and `summary.json` into `dir`.
pub fn export_montecarlo(dir: &Path, report: &MonteCarloReport) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("trials.csv"), |b| write_trials_csv(b, &report.trials))?;
    write_file(&dir.join("cdf.csv"), |b| write_cdf_csv(b, &report.cdf))?;
    write_file(&dir.join("summary.json"), |b| {
        serde_json::to_writer_pretty(&mut *b, &report.summary)?;
        b.push(b'\n');
        Ok(())
    })
}

/// Writes `trials.csv` (one row per trial and algorithm, with the shared
/// budget), `cdf_sync.csv`, `cdf_async.csv` and `summary.json` into `dir`.
pub fn export_compare(dir: &Path, report: &CompareReport) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("trials.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["trial", "algorithm", "budget", "error", "iters", "messages", "converged"])?;
        for p in &report.pairs {
            for t in [&p.sync, &p.gossip] {
                w.write_record([
                    p.trial.to_string(),
                    t.algorithm.name().to_string(),
                    p.budget.to_string(),
                    t.error.to_string(),
                    t.iterations.to_string(),
                    t.messages.to_string(),
                    t.converged.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<trials>", e))?;
        Ok(())
    })?;
    write_file(&dir.join("cdf_sync.csv"), |b| write_cdf_csv(b, &report.sync_cdf))?;
    write_file(&dir.join("cdf_async.csv"), |b| write_cdf_csv(b, &report.async_cdf))?;
    write_file(&dir.join("summary.json"), |b| {
        serde_json::to_writer_pretty(&mut *b, &report.summary)?;
        b.push(b'\n');
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_per_sensor_cases() {
        let truth = Points::new(2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 0.0]).unwrap();
        assert_eq!(error_per_sensor(&truth, &truth, &[]).unwrap(), 0.0);
        let mut est = truth.clone();
        est.point_mut(1)[0] += 0.3;
        assert!((error_per_sensor(&est, &truth, &[]).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(error_per_sensor(&est, &truth, &[1]).unwrap(), 0.0);
        assert!(error_per_sensor(&est, &truth, &[0, 1, 2]).is_err());
        assert!(error_per_sensor(&Points::zeros(2, 2), &truth, &[]).is_err());
    }

    #[test]
    fn cdf_cases() {
        assert_eq!(empirical_cdf(&[1.0]).unwrap(), vec![(1.0, 1.0)]);
        assert_eq!(empirical_cdf(&[2.0, 1.0]).unwrap(), vec![(1.0, 0.5), (2.0, 1.0)]);
        assert_eq!(empirical_cdf(&[3.0, 3.0, 1.0, 3.0]).unwrap(), vec![(1.0, 0.25), (3.0, 1.0)]);
        assert!(empirical_cdf(&[]).is_err());
        assert!(empirical_cdf(&[f64::NAN]).is_err());
    }

    #[test]
    fn trial_seed_streams_do_not_collide() {
        let a = trial_seeds(5, 0);
        let b = trial_seeds(5, 1);
        let all = [a.noise, a.init, a.activation, b.noise, b.init, b.activation];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn surrogate_radii() {
        let mut c = ExperimentConfig::desk_scale(NoiseModel::Gaussian { sigma: 0.04 }, 1);
        assert!((c.solver_radius() - 0.1).abs() < 1e-15);
        c.huber_radius = Some(0.3);
        assert_eq!(c.solver_radius(), 0.3);
        c.surrogate = LossFamily::Quadratic;
        assert_eq!(c.solver_radius(), QUADRATIC_RADIUS);
        c.surrogate = LossFamily::Absolute;
        assert_eq!(c.solver_radius(), ABSOLUTE_RADIUS);
    }

    #[test]
    fn noiseless_single_trial_is_exact() {
        let mut c = ExperimentConfig::desk_scale(NoiseModel::Gaussian { sigma: 0.0 }, 3);
        c.exclude.clear();
        c.trials = 1;
        c.huber_radius = Some(0.1);
        c.sync.max_iters = 20_000;
        c.sync.tol = 1e-12;
        let r = run_montecarlo(&c).unwrap();
        assert!(r.summary.mean_error < 0.1, "{} m", r.summary.mean_error);
    }

    #[test]
    fn jobs_do_not_change_results() {
        let mut c = ExperimentConfig::desk_scale(
            NoiseModel::Outlier { sigma: 0.04, faulty_nodes: vec![7], sigma_outlier: 4.0 },
            9,
        );
        c.trials = 6;
        c.sync.max_iters = 300;
        let a = run_montecarlo(&c).unwrap();
        c.jobs = 3;
        let b = run_montecarlo(&c).unwrap();
        assert_eq!(a.trials, b.trials);
        assert_eq!(a.cdf, b.cdf);
        assert_eq!(a.summary.mean_error, b.summary.mean_error);
    }

    #[test]
    fn zero_budget_leaves_async_at_the_start() {
        let c = ExperimentConfig::desk_scale(NoiseModel::Gaussian { sigma: 0.04 }, 2);
        let base = c.scenario.load().unwrap();
        let (noisy, init) = trial_instance(&c, &base, 0).unwrap();
        let out = run_async_with_budget(&noisy, &init, 1, 0, &c.gossip).unwrap();
        assert_eq!(out.positions, init.positions(&noisy).unwrap());
        assert_eq!((out.state.t, out.state.messages), (0, 0));
    }
}
