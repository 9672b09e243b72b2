//! Pieces shared by the synchronous and asynchronous solvers: initial
//! positions, per-iteration trace rows and the trace CSV format.

use std::io::{Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::netmodel::{Points, Scenario};
use crate::{Error, Result};

/// Starting positions for a solver run.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Positions(Points),
    /// Uniform in the bounding box of the anchors.
    Random { seed: u64 },
}

impl Init {
    pub fn positions(&self, scenario: &Scenario) -> Result<Points> {
        match self {
            Init::Positions(p) => {
                if p.dim() != scenario.dim() || p.len() != scenario.node_count() {
                    return Err(Error::InvalidArgument(format!(
                        "initial positions have shape {}x{}, scenario needs {}x{}",
                        p.len(),
                        p.dim(),
                        scenario.node_count(),
                        scenario.dim()
                    )));
                }
                Ok(p.clone())
            }
            Init::Random { seed } => Ok(random_in_anchor_box(scenario, *seed)),
        }
    }
}

fn random_in_anchor_box(scenario: &Scenario, seed: u64) -> Points {
    let p = scenario.dim();
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for a in scenario.anchors().iter() {
        for c in 0..p {
            lo[c] = lo[c].min(a[c]);
            hi[c] = hi[c].max(a[c]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = (0..scenario.node_count() * p)
        .map(|k| {
            let c = k % p;
            lo[c] + rng.gen::<f64>() * (hi[c] - lo[c])
        })
        .collect();
    Points::new(p, coords).expect("whole points")
}

/// Seed of trial `trial` in a batch driven by `master`: the first output of
/// ChaCha8 seeded with `master` on stream `trial`. Trials are independent of
/// each other and of the order in which they run.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

/// One row of a solver trace. `activated` is set by the asynchronous solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub residual: f64,
    pub messages_cumulative: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub activated_node: Option<usize>,
}

/// True when the cost moved by at most `tol` (relative) over the last
/// `window` recorded iterations.
pub(crate) fn window_stalled(trace: &[TraceRow], window: usize, tol: f64) -> bool {
    if window == 0 || trace.len() <= window {
        return false;
    }
    let now = trace[trace.len() - 1].cost;
    let before = trace[trace.len() - 1 - window].cost;
    (before - now).abs() <= tol * before.abs()
}

/// Writes a trace as CSV. `header` lines are emitted first as `# ` comments
/// so the file carries its own configuration.
pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceRow], header: &[String]) -> Result<()> {
    let with_node = trace.iter().any(|r| r.activated_node.is_some());
    let mut out = out;
    for line in header {
        writeln!(out, "# {line}").map_err(|e| Error::io("<trace>", e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    if with_node {
        w.write_record(["iter", "cost", "residual", "messages_cumulative", "activated_node"])?;
    } else {
        w.write_record(["iter", "cost", "residual", "messages_cumulative"])?;
    }
    for r in trace {
        let mut rec = vec![
            r.iter.to_string(),
            r.cost.to_string(),
            r.residual.to_string(),
            r.messages_cumulative.to_string(),
        ];
        if with_node {
            rec.push(r.activated_node.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}
