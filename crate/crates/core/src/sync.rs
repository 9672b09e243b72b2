//! Synchronous distributed accelerated projected gradient (syncHuber).
//!
//! Every round each node extrapolates its position, broadcasts the
//! extrapolated point once, and then updates its position, its own copies of
//! the incident edge variables and its anchor variables from purely local
//! data. Node `i` keeps `y_ij` for each neighbor `j`; because ball projection
//! is odd the two copies of an edge stay exact negatives of each other.

use serde::Serialize;

use crate::huber::{project_ball_in_place, stacked_cost, projected_gradient_residual, StackedVariables};
use crate::netmodel::{build_incidence, lipschitz_constant, Incidence, NodeSlice, Points, Scenario};
use crate::run::{window_stalled, Init, TraceRow};
use crate::vecops;
use crate::{Error, Result};

/// Stopping rule for [`SyncSolver::run`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyncOptions {
    pub max_iters: usize,
    /// Stop when the gradient-mapping residual drops below `tol`, or when the
    /// cost changes by at most `tol` (relative) over `window` iterations.
    pub tol: f64,
    pub window: usize,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions {
            max_iters: 5000,
            tol: 1e-9,
            window: 10,
        }
    }
}

/// Per-node iterate memory of the synchronous method.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncState {
    pub t: usize,
    /// Scalars delivered so far; one broadcast of `p` scalars to `k`
    /// neighbors counts `k * p`.
    pub messages: u64,
    dim: usize,
    x: Vec<f64>,
    x_prev: Vec<f64>,
    /// Node-held edge copies, node-major in neighbor-list order.
    y: Vec<f64>,
    y_prev: Vec<f64>,
    w: Vec<f64>,
    w_prev: Vec<f64>,
}

impl SyncState {
    pub fn positions(&self) -> Points {
        Points::new(self.dim, self.x.clone()).expect("whole points")
    }

    pub fn previous_positions(&self) -> Points {
        Points::new(self.dim, self.x_prev.clone()).expect("whole points")
    }

    /// Node `node`'s copy of the variable of its `slot`-th incident edge,
    /// oriented as `x_node - x_neighbor - y`.
    pub fn edge_copy(&self, solver: &SyncSolver<'_>, node: usize, slot: usize) -> &[f64] {
        let s = solver.slot_offset[node] + slot;
        &self.y[s * self.dim..(s + 1) * self.dim]
    }

    pub fn anchor_var(&self, link: usize) -> &[f64] {
        &self.w[link * self.dim..(link + 1) * self.dim]
    }
}

/// Precomputed structure for running the synchronous method on one scenario.
#[derive(Debug, Clone)]
pub struct SyncSolver<'a> {
    scenario: &'a Scenario,
    incidence: Incidence,
    slices: Vec<NodeSlice>,
    slot_offset: Vec<usize>,
    lipschitz: f64,
    messages_per_round: u64,
}

#[derive(Debug, Clone)]
pub struct SyncOutcome {
    pub positions: Points,
    pub state: SyncState,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl<'a> SyncSolver<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self> {
        let incidence = build_incidence(scenario);
        let lipschitz = lipschitz_constant(&incidence)?;
        let slices = NodeSlice::all(scenario, &incidence);
        let mut slot_offset = Vec::with_capacity(slices.len());
        let mut acc = 0;
        for s in &slices {
            slot_offset.push(acc);
            acc += s.edges.len();
        }
        let p = scenario.dim() as u64;
        let messages_per_round = slices.iter().map(|s| s.edges.len() as u64 * p).sum();
        Ok(SyncSolver {
            scenario,
            incidence,
            slices,
            slot_offset,
            lipschitz,
            messages_per_round,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn incidence(&self) -> &Incidence {
        &self.incidence
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Scalar deliveries in one lockstep round.
    pub fn messages_per_round(&self) -> u64 {
        self.messages_per_round
    }

    /// `x^0 = x^-1`, auxiliaries at the projections of the initial residuals.
    pub fn init(&self, init: &Init) -> Result<SyncState> {
        let x0 = init.positions(self.scenario)?;
        let p = self.scenario.dim();
        let x = x0.into_vec();
        let slots = self.slot_offset.last().copied().unwrap_or(0)
            + self.slices.last().map_or(0, |s| s.edges.len());
        let mut y = vec![0.0; slots * p];
        let mut w = vec![0.0; self.scenario.links().len() * p];
        for s in &self.slices {
            let xi = &x[s.node * p..(s.node + 1) * p];
            for (k, e) in s.edges.iter().enumerate() {
                let slot = self.slot_offset[s.node] + k;
                let xj = &x[e.neighbor * p..(e.neighbor + 1) * p];
                let yk = &mut y[slot * p..(slot + 1) * p];
                for c in 0..p {
                    yk[c] = xi[c] - xj[c];
                }
                project_ball_in_place(yk, e.range);
            }
            for l in &s.links {
                let wk = &mut w[l.link * p..(l.link + 1) * p];
                for c in 0..p {
                    wk[c] = xi[c] - l.anchor[c];
                }
                project_ball_in_place(wk, l.range);
            }
        }
        Ok(SyncState {
            t: 0,
            messages: 0,
            dim: p,
            x_prev: x.clone(),
            x,
            y_prev: y.clone(),
            y,
            w_prev: w.clone(),
            w,
        })
    }

    /// One lockstep round.
    pub fn step(&self, state: &mut SyncState) {
        let p = state.dim;
        state.t += 1;
        let t = state.t as f64;
        let coef = (t - 2.0) / (t + 1.0);

        // every node extrapolates and broadcasts
        let mut broadcast = vec![0.0; state.x.len()];
        for (bx, (x, xp)) in broadcast
            .chunks_exact_mut(p)
            .zip(state.x.chunks_exact(p).zip(state.x_prev.chunks_exact(p)))
        {
            vecops::extrapolate_into(x, xp, coef, bx);
        }

        let mut x_next = vec![0.0; state.x.len()];
        let mut y_next = vec![0.0; state.y.len()];
        let mut w_next = vec![0.0; state.w.len()];
        let mut received: Vec<&[f64]> = Vec::new();
        for s in &self.slices {
            received.clear();
            received.extend(
                s.edges
                    .iter()
                    .map(|e| &broadcast[e.neighbor * p..(e.neighbor + 1) * p]),
            );
            let off = self.slot_offset[s.node];
            let ys = off * p..(off + s.edges.len()) * p;
            let ws = s.links.first().map_or(0..0, |l| l.link * p..(l.link + s.links.len()) * p);
            node_update(
                s,
                self.lipschitz,
                coef,
                NodeMemory {
                    xi: &broadcast[s.node * p..(s.node + 1) * p],
                    received: &received,
                    y: &state.y[ys.clone()],
                    y_prev: &state.y_prev[ys.clone()],
                    w: &state.w[ws.clone()],
                    w_prev: &state.w_prev[ws.clone()],
                },
                &mut x_next[s.node * p..(s.node + 1) * p],
                &mut y_next[ys],
                &mut w_next[ws],
            );
        }
        state.x_prev = std::mem::replace(&mut state.x, x_next);
        state.y_prev = std::mem::replace(&mut state.y, y_next);
        state.w_prev = std::mem::replace(&mut state.w, w_next);
        state.messages += self.messages_per_round;
    }

    /// Global stacked variables at the current iterate; each edge variable
    /// is read from its lower endpoint's copy.
    pub fn stacked(&self, state: &SyncState) -> StackedVariables {
        let p = state.dim;
        let mut z = StackedVariables::zeros(self.scenario);
        z.x.copy_from_slice(&state.x);
        z.w.copy_from_slice(&state.w);
        for s in &self.slices {
            for (k, e) in s.edges.iter().enumerate() {
                if e.sign > 0 {
                    let slot = self.slot_offset[s.node] + k;
                    z.y[e.edge * p..(e.edge + 1) * p]
                        .copy_from_slice(&state.y[slot * p..(slot + 1) * p]);
                }
            }
        }
        z
    }

    /// Largest `|y_ij + y_ji|` over all edges.
    pub fn antisymmetry_error(&self, state: &SyncState) -> f64 {
        let mut worst = 0.0f64;
        for s in &self.slices {
            for (k, e) in s.edges.iter().enumerate() {
                if e.sign < 0 {
                    continue;
                }
                let mirror = self.incidence.mirror_slot(s.node, k);
                let a = state.edge_copy(self, s.node, k);
                let b = state.edge_copy(self, e.neighbor, mirror);
                for c in 0..a.len() {
                    worst = worst.max((a[c] + b[c]).abs());
                }
            }
        }
        worst
    }

    pub fn trace_row(&self, state: &SyncState) -> TraceRow {
        let z = self.stacked(state);
        TraceRow {
            iter: state.t,
            cost: stacked_cost(&z, self.scenario),
            residual: projected_gradient_residual(&z, self.scenario, self.lipschitz),
            messages_cumulative: state.messages,
            activated_node: None,
        }
    }

    /// Runs `iters` rounds without any stopping test, recording every round.
    pub fn iterate(&self, state: &mut SyncState, iters: usize) -> Vec<TraceRow> {
        let mut trace = Vec::with_capacity(iters + 1);
        trace.push(self.trace_row(state));
        for _ in 0..iters {
            self.step(state);
            trace.push(self.trace_row(state));
        }
        trace
    }

    pub fn run(&self, init: &Init, opts: &SyncOptions) -> Result<SyncOutcome> {
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        let mut state = self.init(init)?;
        let mut trace = vec![self.trace_row(&state)];
        let mut converged = trace[0].residual < opts.tol;
        while !converged && state.t < opts.max_iters {
            self.step(&mut state);
            let row = self.trace_row(&state);
            trace.push(row);
            converged = row.residual < opts.tol || window_stalled(&trace, opts.window, opts.tol);
        }
        Ok(SyncOutcome {
            positions: state.positions(),
            state,
            trace,
            converged,
        })
    }
}

/// Local memory a node reads during one round.
struct NodeMemory<'m> {
    xi: &'m [f64],
    received: &'m [&'m [f64]],
    y: &'m [f64],
    y_prev: &'m [f64],
    w: &'m [f64],
    w_prev: &'m [f64],
}

/// One node's share of a round. Reads only its own memory, the neighbors'
/// broadcast points and its anchors.
fn node_update(
    slice: &NodeSlice,
    lipschitz: f64,
    coef: f64,
    mem: NodeMemory<'_>,
    x_out: &mut [f64],
    y_out: &mut [f64],
    w_out: &mut [f64],
) {
    let p = mem.xi.len();
    let step = 1.0 / lipschitz;
    let mut grad = vec![0.0; p];
    let mut ext = vec![0.0; p];
    let mut r = vec![0.0; p];

    for (k, e) in slice.edges.iter().enumerate() {
        let blk = k * p..(k + 1) * p;
        vecops::extrapolate_into(&mem.y[blk.clone()], &mem.y_prev[blk.clone()], coef, &mut ext);
        vecops::sub3_into(mem.xi, mem.received[k], &ext, &mut r);
        project_ball_in_place(&mut r, e.radius);
        let out = &mut y_out[blk];
        for c in 0..p {
            out[c] = ext[c] + step * r[c];
            grad[c] += r[c];
        }
        project_ball_in_place(out, e.range);
    }
    for (k, l) in slice.links.iter().enumerate() {
        let blk = k * p..(k + 1) * p;
        vecops::extrapolate_into(&mem.w[blk.clone()], &mem.w_prev[blk.clone()], coef, &mut ext);
        vecops::sub3_into(mem.xi, &l.anchor, &ext, &mut r);
        project_ball_in_place(&mut r, l.radius);
        let out = &mut w_out[blk];
        for c in 0..p {
            out[c] = ext[c] + step * r[c];
            grad[c] += r[c];
        }
        project_ball_in_place(out, l.range);
    }
    for c in 0..p {
        x_out[c] = mem.xi[c] - step * grad[c];
    }
}

/// Convenience wrapper: builds a solver and runs it.
pub fn run_sync(scenario: &Scenario, init: &Init, opts: &SyncOptions) -> Result<SyncOutcome> {
    SyncSolver::new(scenario)?.run(init, opts)
}
