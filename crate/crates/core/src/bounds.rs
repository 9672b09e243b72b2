//! Optimality-gap certificates and the one-dimensional brute-force oracle.
//!
//! Let `x*` minimize the convex underestimator `f`. Since `f <= g`,
//! `f(x*) <= g* <= g(x*)`, and the two costs differ only on measurements
//! whose discrepancy is negative at `x*`. Summing the loss over exactly those
//! terms gives a bound on `g* - f*` computable after the fact; summing it at
//! every measured range gives a bound known before solving.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::huber::{convex_cost_f, discrepancies, nonconvex_cost_g, LossFamily};
use crate::netmodel::{AnchorLink, Points, Scenario};
use crate::run::trial_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapCertificate {
    pub loss: LossFamily,
    pub f_star: f64,
    pub g_at_xstar: f64,
    pub tight_bound: f64,
    pub apriori_bound: f64,
    /// Edges contracted at `x*`.
    pub violating_edges: Vec<usize>,
    /// Anchor links contracted at `x*`.
    pub violating_links: Vec<usize>,
}

/// Certificate at `x_star`, assumed to minimize `f` for the same loss.
pub fn tight_gap_bound(x_star: &Points, scenario: &Scenario, loss: LossFamily) -> GapCertificate {
    let m = scenario.edges().len();
    let mut tight = 0.0;
    let mut violating_edges = Vec::new();
    let mut violating_links = Vec::new();
    for (k, (t, r)) in discrepancies(x_star, scenario).enumerate() {
        if t < 0.0 {
            tight += 0.5 * loss.eval(t, r);
            if k < m {
                violating_edges.push(k);
            } else {
                violating_links.push(k - m);
            }
        }
    }
    GapCertificate {
        loss,
        f_star: convex_cost_f(x_star, scenario, loss),
        g_at_xstar: nonconvex_cost_g(x_star, scenario, loss),
        tight_bound: tight,
        apriori_bound: apriori_gap_bound(scenario, loss),
        violating_edges,
        violating_links,
    }
}

/// Half the loss of every measured range: what the gap could be if every
/// estimate collapsed to a point.
pub fn apriori_gap_bound(scenario: &Scenario, loss: LossFamily) -> f64 {
    let edges = scenario.edges().iter().map(|e| (e.range, e.radius));
    let links = scenario.links().iter().map(|l| (l.range, l.radius));
    edges.chain(links).map(|(d, r)| 0.5 * loss.eval(d, r)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridMinimum {
    /// Midpoint of the grid points where `f` is minimal (`f` is convex, so
    /// they form a contiguous run).
    pub f_argmin: f64,
    pub f_min: f64,
    pub g_argmin: f64,
    pub g_min: f64,
}

/// `[min anchor - 2 max range, max anchor + 2 max range]`.
pub fn default_grid_interval(scenario: &Scenario) -> (f64, f64) {
    let (lo, hi, reach) = anchor_extent(scenario);
    (lo - 2.0 * reach, hi + 2.0 * reach)
}

fn anchor_extent(scenario: &Scenario) -> (f64, f64, f64) {
    let a = scenario.anchors().as_slice();
    let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let reach = scenario.links().iter().map(|l| l.range).fold(0.0, f64::max);
    (lo, hi, reach)
}

/// Exhaustive search of `f` and `g` for a single sensor on the line.
///
/// `interval` defaults to [`default_grid_interval`]; a custom interval must
/// cover every anchor widened by the largest anchor range.
pub fn grid_minimize_1d(
    scenario: &Scenario,
    loss: LossFamily,
    resolution: f64,
    interval: Option<(f64, f64)>,
) -> Result<GridMinimum> {
    if scenario.dim() != 1 || scenario.node_count() != 1 {
        return Err(Error::InvalidArgument(
            "grid search needs a single sensor on the line".into(),
        ));
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidArgument("grid resolution must be positive".into()));
    }
    let (lo, hi) = match interval {
        Some((lo, hi)) => {
            let (alo, ahi, reach) = anchor_extent(scenario);
            if !(lo <= alo - reach && hi >= ahi + reach) {
                return Err(Error::InvalidArgument(format!(
                    "grid [{lo}, {hi}] does not cover the anchors widened by their ranges [{}, {}]",
                    alo - reach,
                    ahi + reach
                )));
            }
            (lo, hi)
        }
        None => default_grid_interval(scenario),
    };
    let steps = ((hi - lo) / resolution).ceil() as usize;
    let terms: Vec<(f64, f64, f64)> = scenario
        .links()
        .iter()
        .map(|l| (scenario.anchor(l.anchor)[0], l.range, l.radius))
        .collect();

    let mut f_min = f64::INFINITY;
    let (mut f_first, mut f_last) = (0, 0);
    let mut g_min = f64::INFINITY;
    let mut g_at = 0;
    for k in 0..=steps {
        let x = lo + k as f64 * resolution;
        let (mut f, mut g) = (0.0, 0.0);
        for &(a, r, radius) in &terms {
            let t = (x - a).abs() - r;
            let l = 0.5 * loss.eval(t, radius);
            g += l;
            if t > 0.0 {
                f += l;
            }
        }
        if f < f_min {
            f_min = f;
            f_first = k;
            f_last = k;
        } else if f == f_min {
            f_last = k;
        }
        if g < g_min {
            g_min = g;
            g_at = k;
        }
    }
    let mid = (f_first + f_last) / 2;
    Ok(GridMinimum {
        f_argmin: lo + mid as f64 * resolution,
        f_min,
        g_argmin: lo + g_at as f64 * resolution,
        g_min,
    })
}

/// Single sensor at 3 on the line with anchors at 0, 2 and 6; the link to
/// the middle anchor carries an extra outlier perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThreeAnchorConfig {
    pub trials: usize,
    pub seed: u64,
    pub sigma: f64,
    pub sigma_outlier: f64,
    pub huber_radius: f64,
    pub resolution: f64,
}

impl Default for ThreeAnchorConfig {
    fn default() -> Self {
        ThreeAnchorConfig {
            trials: 500,
            seed: 1,
            sigma: 0.04,
            sigma_outlier: 4.0,
            huber_radius: 0.1,
            resolution: 1e-4,
        }
    }
}

pub const THREE_ANCHOR_SENSOR: f64 = 3.0;
pub const THREE_ANCHOR_POSITIONS: [f64; 3] = [0.0, 2.0, 6.0];

/// One noisy draw of the three-anchor layout.
pub fn three_anchor_scenario(cfg: &ThreeAnchorConfig, seed: u64) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let links = THREE_ANCHOR_POSITIONS
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let regular: f64 = rng.sample(StandardNormal);
            let outlier: f64 = rng.sample(StandardNormal);
            let mut nu = cfg.sigma * regular;
            if k == 1 {
                nu += cfg.sigma_outlier * outlier;
            }
            AnchorLink {
                node: 0,
                anchor: k,
                range: ((THREE_ANCHOR_SENSOR - a).abs() + nu).abs().max(f64::MIN_POSITIVE),
                radius: cfg.huber_radius,
            }
        })
        .collect();
    Scenario::new(
        Points::new(1, vec![THREE_ANCHOR_SENSOR])?,
        Points::new(1, THREE_ANCHOR_POSITIONS.to_vec())?,
        vec![],
        links,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreeAnchorRow {
    pub loss: LossFamily,
    pub mean_tight_bound: f64,
    pub mean_apriori_bound: f64,
    /// Fraction of trials with the tight bound strictly below the a priori one.
    pub tight_below_apriori: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThreeAnchorStudy {
    pub config: ThreeAnchorConfig,
    /// `(trial, certificate)` in trial order, losses in [`LossFamily::ALL`] order.
    pub certificates: Vec<(usize, GapCertificate)>,
    pub rows: Vec<ThreeAnchorRow>,
}

/// Runs the three-anchor experiment: per trial and loss, grid-minimizes `f`
/// and certifies the gap at the minimizer. Trial `m` uses
/// `trial_seed(cfg.seed, m)`, so the result does not depend on the thread
/// count.
pub fn three_anchor_study(cfg: &ThreeAnchorConfig, losses: &[LossFamily]) -> Result<ThreeAnchorStudy> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is needed".into()));
    }
    let per_trial: Vec<Vec<(usize, GapCertificate)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|m| -> Result<Vec<(usize, GapCertificate)>> {
            let s = three_anchor_scenario(cfg, trial_seed(cfg.seed, m))?;
            losses
                .iter()
                .map(|&loss| {
                    let min = grid_minimize_1d(&s, loss, cfg.resolution, None)?;
                    let x = Points::new(1, vec![min.f_argmin])?;
                    Ok((m, tight_gap_bound(&x, &s, loss)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let certificates: Vec<_> = per_trial.into_iter().flatten().collect();
    let rows = losses
        .iter()
        .map(|&loss| {
            let certs: Vec<&GapCertificate> = certificates
                .iter()
                .map(|(_, c)| c)
                .filter(|c| c.loss == loss)
                .collect();
            let n = certs.len() as f64;
            ThreeAnchorRow {
                loss,
                mean_tight_bound: certs.iter().map(|c| c.tight_bound).sum::<f64>() / n,
                mean_apriori_bound: certs.iter().map(|c| c.apriori_bound).sum::<f64>() / n,
                tight_below_apriori: certs.iter().filter(|c| c.tight_bound < c.apriori_bound).count()
                    as f64
                    / n,
            }
        })
        .collect();
    Ok(ThreeAnchorStudy {
        config: *cfg,
        certificates,
        rows,
    })
}

/// `trial,loss,f_star,g_at_xstar,tight_bound,apriori_bound`
pub fn write_certificates_csv<W: Write>(out: W, certificates: &[(usize, GapCertificate)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trial", "loss", "f_star", "g_at_xstar", "tight_bound", "apriori_bound"])?;
    for (m, c) in certificates {
        w.write_record([
            m.to_string(),
            c.loss.name().to_string(),
            c.f_star.to_string(),
            c.g_at_xstar.to_string(),
            c.tight_bound.to_string(),
            c.apriori_bound.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<certificates>", e))?;
    Ok(())
}

/// `loss,mean_tight_bound,mean_apriori_bound,tight_below_apriori`
pub fn write_table_csv<W: Write>(out: W, rows: &[ThreeAnchorRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["loss", "mean_tight_bound", "mean_apriori_bound", "tight_below_apriori"])?;
    for r in rows {
        w.write_record([
            r.loss.name().to_string(),
            r.mean_tight_bound.to_string(),
            r.mean_apriori_bound.to_string(),
            r.tight_below_apriori.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<table>", e))?;
    Ok(())
}
