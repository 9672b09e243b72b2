//! Asynchronous randomized block minimization (asyncHuber).
//!
//! At each tick one node, drawn independently with probability `P_i`, fully
//! minimizes the stacked cost over its own block (its position, the
//! variables of its incident edges and of its anchor links) with every other
//! position fixed at the last value it heard, then broadcasts its new
//! position. Only the activation order matters, so the Poisson clocks are
//! replaced by i.i.d. categorical draws.
//!
//! The block cost of node `i` collects every term of `F` that touches the
//! block:
//!
//! ```text
//! F_i = sum_{j in N_i} 1/2 psi_{R_ij}(x_i - x_j - y_ij) + sum_{k in A_i} 1/2 psi_{R_ik}(x_i - a_k - w_ik)
//! ```
//!
//! Each edge term is the node's own quarter-weighted term plus the mirrored
//! quarter-weighted term its neighbor holds with `y_ji = -y_ij`.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::huber::{project_ball_in_place, psi, stacked_cost, projected_gradient_residual, StackedVariables};
use crate::netmodel::{build_incidence, lipschitz_constant, Incidence, NodeSlice, Points, Scenario};
use crate::run::{Init, TraceRow};
use crate::vecops;
use crate::{Error, Result};

/// Seeded i.i.d. sequence of activated nodes.
#[derive(Debug, Clone)]
pub struct ActivationSequence {
    probabilities: Vec<f64>,
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl ActivationSequence {
    pub fn uniform(nodes: usize, seed: u64) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidArgument("no nodes to activate".into()));
        }
        ActivationSequence::with_probabilities(vec![1.0 / nodes as f64; nodes], seed)
    }

    /// Requires every `P_i > 0` and `sum P_i = 1` (to 1e-9).
    pub fn with_probabilities(probabilities: Vec<f64>, seed: u64) -> Result<Self> {
        if probabilities.is_empty() || probabilities.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument(
                "activation probabilities must be positive".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "activation probabilities sum to {total}, not 1"
            )));
        }
        let dist = WeightedIndex::new(&probabilities)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(ActivationSequence {
            probabilities,
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

impl Iterator for ActivationSequence {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        Some(self.dist.sample(&mut self.rng))
    }
}

/// Accuracy of each node's local minimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            tol: 1e-10,
            max_iters: 200,
        }
    }
}

/// A node's block: position, edge variables in neighbor-list order (oriented
/// from the node), anchor variables in link order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBlock {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub block: NodeBlock,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Block cost of node `slice.node` with neighbor positions held fixed.
pub fn block_cost(block: &NodeBlock, neighbors: &[&[f64]], slice: &NodeSlice) -> f64 {
    let p = block.x.len();
    let mut r = vec![0.0; p];
    let mut total = 0.0;
    for (k, e) in slice.edges.iter().enumerate() {
        vecops::sub3_into(&block.x, neighbors[k], &block.y[k * p..(k + 1) * p], &mut r);
        total += 0.5 * psi(&r, e.radius);
    }
    for (k, l) in slice.links.iter().enumerate() {
        vecops::sub3_into(&block.x, &l.anchor, &block.w[k * p..(k + 1) * p], &mut r);
        total += 0.5 * psi(&r, l.radius);
    }
    total
}

fn block_gradient(block: &NodeBlock, neighbors: &[&[f64]], slice: &NodeSlice, out: &mut NodeBlock) {
    let p = block.x.len();
    out.x.iter_mut().for_each(|v| *v = 0.0);
    let mut r = vec![0.0; p];
    for (k, e) in slice.edges.iter().enumerate() {
        vecops::sub3_into(&block.x, neighbors[k], &block.y[k * p..(k + 1) * p], &mut r);
        project_ball_in_place(&mut r, e.radius);
        for c in 0..p {
            out.x[c] += r[c];
            out.y[k * p + c] = -r[c];
        }
    }
    for (k, l) in slice.links.iter().enumerate() {
        vecops::sub3_into(&block.x, &l.anchor, &block.w[k * p..(k + 1) * p], &mut r);
        project_ball_in_place(&mut r, l.radius);
        for c in 0..p {
            out.x[c] += r[c];
            out.w[k * p + c] = -r[c];
        }
    }
}

/// Projected gradient step `P(block - grad / L)` written into `out`.
fn block_step(block: &NodeBlock, grad: &NodeBlock, slice: &NodeSlice, lipschitz: f64, out: &mut NodeBlock) {
    let p = block.x.len();
    for c in 0..p {
        out.x[c] = block.x[c] - grad.x[c] / lipschitz;
    }
    for (k, e) in slice.edges.iter().enumerate() {
        let b = k * p..(k + 1) * p;
        for c in b.clone() {
            out.y[c] = block.y[c] - grad.y[c] / lipschitz;
        }
        project_ball_in_place(&mut out.y[b], e.range);
    }
    for (k, l) in slice.links.iter().enumerate() {
        let b = k * p..(k + 1) * p;
        for c in b.clone() {
            out.w[c] = block.w[c] - grad.w[c] / lipschitz;
        }
        project_ball_in_place(&mut out.w[b], l.range);
    }
}

fn block_distance(a: &NodeBlock, b: &NodeBlock) -> f64 {
    (vecops::dist_sq_flat(&a.x, &b.x) + vecops::dist_sq_flat(&a.y, &b.y) + vecops::dist_sq_flat(&a.w, &b.w))
        .sqrt()
}

/// Minimizes the block cost of one node against fixed neighbor positions
/// with the accelerated projected gradient scheme, step `1 / lipschitz`.
///
/// Returns the best iterate seen, with the auxiliaries finally replaced by
/// their exact minimizers for the returned position. The returned cost is
/// never above the cost of `start`.
pub fn node_subproblem(
    start: &NodeBlock,
    neighbors: &[&[f64]],
    slice: &NodeSlice,
    lipschitz: f64,
    opts: &InnerOptions,
) -> SubproblemSolution {
    let mut cur = start.clone();
    let mut prev = start.clone();
    let mut ext = start.clone();
    let mut grad = start.clone();
    let mut next = start.clone();
    let mut best = start.clone();
    let mut best_cost = block_cost(start, neighbors, slice);
    let mut converged = false;
    let mut iterations = 0;

    for t in 1..=opts.max_iters {
        // residual of the current iterate doubles as the stopping test
        block_gradient(&cur, neighbors, slice, &mut grad);
        block_step(&cur, &grad, slice, lipschitz, &mut next);
        if lipschitz * block_distance(&cur, &next) < opts.tol {
            converged = true;
            break;
        }
        iterations = t;
        let coef = (t as f64 - 2.0) / (t as f64 + 1.0);
        extrapolate_block(&cur, &prev, coef, &mut ext);
        block_gradient(&ext, neighbors, slice, &mut grad);
        block_step(&ext, &grad, slice, lipschitz, &mut next);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
        let c = block_cost(&cur, neighbors, slice);
        if c < best_cost {
            best_cost = c;
            best.clone_from(&cur);
        }
    }

    finalize_auxiliaries(&mut best, neighbors, slice);
    let cost = block_cost(&best, neighbors, slice);
    SubproblemSolution {
        block: best,
        cost,
        iterations,
        converged,
    }
}

fn extrapolate_block(cur: &NodeBlock, prev: &NodeBlock, coef: f64, out: &mut NodeBlock) {
    vecops::extrapolate_into(&cur.x, &prev.x, coef, &mut out.x);
    vecops::extrapolate_into(&cur.y, &prev.y, coef, &mut out.y);
    vecops::extrapolate_into(&cur.w, &prev.w, coef, &mut out.w);
}

/// `y_ij = P_{d_ij}(x_i - x_j)`, `w_ik = P_{r_ik}(x_i - a_k)`: the exact
/// minimizers for a fixed position, so this never raises the block cost.
fn finalize_auxiliaries(block: &mut NodeBlock, neighbors: &[&[f64]], slice: &NodeSlice) {
    let p = block.x.len();
    for (k, e) in slice.edges.iter().enumerate() {
        let y = &mut block.y[k * p..(k + 1) * p];
        for c in 0..p {
            y[c] = block.x[c] - neighbors[k][c];
        }
        project_ball_in_place(y, e.range);
    }
    for (k, l) in slice.links.iter().enumerate() {
        let w = &mut block.w[k * p..(k + 1) * p];
        for c in 0..p {
            w[c] = block.x[c] - l.anchor[c];
        }
        project_ball_in_place(w, l.range);
    }
}

/// Global state of the gossip run. Edge variables are stored once per edge
/// in the orientation of the lower endpoint; whichever endpoint is active
/// owns them for that tick.
#[derive(Debug, Clone, PartialEq)]
pub struct AsyncState {
    pub t: usize,
    pub messages: u64,
    pub z: StackedVariables,
    /// Last position each node heard from each neighbor, node-major in
    /// neighbor-list order.
    cache: Vec<f64>,
}

impl AsyncState {
    pub fn positions(&self) -> Points {
        self.z.positions()
    }

    /// What `node` believes about its `slot`-th neighbor's position.
    pub fn cached_neighbor(&self, solver: &AsyncSolver<'_>, node: usize, slot: usize) -> &[f64] {
        let p = self.z.dim;
        let s = solver.slot_offset[node] + slot;
        &self.cache[s * p..(s + 1) * p]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsyncOptions {
    pub max_steps: usize,
    /// Stop when the gradient-mapping residual drops below `tol`, or when the
    /// cost improved by at most `tol` (relative) over the shortest recent
    /// stretch in which every node was activated.
    pub tol: f64,
    /// With `false` only the residual, the step cap and the budget stop the
    /// run.
    pub stop_when_stalled: bool,
    pub inner: InnerOptions,
    /// Stop before a broadcast would exceed this many scalar deliveries.
    pub message_budget: Option<u64>,
}

impl Default for AsyncOptions {
    fn default() -> Self {
        AsyncOptions {
            max_steps: 100_000,
            tol: 1e-12,
            stop_when_stalled: true,
            inner: InnerOptions::default(),
            message_budget: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AsyncOutcome {
    pub positions: Points,
    pub state: AsyncState,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// Activations whose local solve hit its iteration cap.
    pub inner_failures: usize,
}

#[derive(Debug, Clone)]
pub struct AsyncSolver<'a> {
    scenario: &'a Scenario,
    incidence: Incidence,
    slices: Vec<NodeSlice>,
    slot_offset: Vec<usize>,
    /// For each (node, slot): index of the node in the neighbor's cache.
    mirror: Vec<usize>,
    lipschitz: f64,
}

impl<'a> AsyncSolver<'a> {
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
        let mut mirror = Vec::with_capacity(acc);
        for s in &slices {
            for k in 0..s.edges.len() {
                let m = incidence.mirror_slot(s.node, k);
                mirror.push(slot_offset[s.edges[k].neighbor] + m);
            }
        }
        Ok(AsyncSolver {
            scenario,
            incidence,
            slices,
            slot_offset,
            mirror,
            lipschitz,
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

    pub fn init(&self, init: &Init) -> Result<AsyncState> {
        let x0 = init.positions(self.scenario)?;
        let p = self.scenario.dim();
        let z = StackedVariables::from_positions(&x0, self.scenario);
        let mut cache = Vec::with_capacity(self.mirror.len() * p);
        for s in &self.slices {
            for e in &s.edges {
                cache.extend_from_slice(x0.point(e.neighbor));
            }
        }
        Ok(AsyncState {
            t: 0,
            messages: 0,
            z,
            cache,
        })
    }

    fn block_of(&self, state: &AsyncState, node: usize) -> NodeBlock {
        let p = state.z.dim;
        let s = &self.slices[node];
        let mut y = Vec::with_capacity(s.edges.len() * p);
        for e in &s.edges {
            let sign = f64::from(e.sign);
            y.extend(state.z.y_block(e.edge).iter().map(|v| sign * v));
        }
        let mut w = Vec::with_capacity(s.links.len() * p);
        for l in &s.links {
            w.extend_from_slice(state.z.w_block(l.link));
        }
        NodeBlock {
            x: state.z.x_block(node).to_vec(),
            y,
            w,
        }
    }

    /// Activates `node`: local solve against cached neighbor positions, then
    /// broadcast of the new position. Returns whether the local solve met
    /// its tolerance.
    pub fn step(&self, state: &mut AsyncState, node: usize, inner: &InnerOptions) -> bool {
        let p = state.z.dim;
        let slice = &self.slices[node];
        let off = self.slot_offset[node];
        let start = self.block_of(state, node);
        let neighbors: Vec<&[f64]> = (0..slice.edges.len())
            .map(|k| &state.cache[(off + k) * p..(off + k + 1) * p])
            .collect();
        let sol = node_subproblem(&start, &neighbors, slice, self.lipschitz, inner);

        let b = &sol.block;
        state.z.x[node * p..(node + 1) * p].copy_from_slice(&b.x);
        for (k, e) in slice.edges.iter().enumerate() {
            let sign = f64::from(e.sign);
            for c in 0..p {
                state.z.y[e.edge * p + c] = sign * b.y[k * p + c];
            }
        }
        for (k, l) in slice.links.iter().enumerate() {
            state.z.w[l.link * p..(l.link + 1) * p].copy_from_slice(&b.w[k * p..(k + 1) * p]);
        }
        // broadcast
        for k in 0..slice.edges.len() {
            let dst = self.mirror[off + k];
            state.cache[dst * p..(dst + 1) * p].copy_from_slice(&b.x);
        }
        state.messages += (slice.edges.len() * p) as u64;
        state.t += 1;
        sol.converged
    }

    /// Scalar deliveries caused by one activation of `node`.
    pub fn broadcast_size(&self, node: usize) -> u64 {
        (self.slices[node].edges.len() * self.scenario.dim()) as u64
    }

    pub fn trace_row(&self, state: &AsyncState, activated: Option<usize>) -> TraceRow {
        TraceRow {
            iter: state.t,
            cost: stacked_cost(&state.z, self.scenario),
            residual: projected_gradient_residual(&state.z, self.scenario, self.lipschitz),
            messages_cumulative: state.messages,
            activated_node: activated,
        }
    }

    pub fn run(
        &self,
        init: &Init,
        activation: &mut ActivationSequence,
        opts: &AsyncOptions,
    ) -> Result<AsyncOutcome> {
        if !(opts.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if activation.probabilities().len() != self.scenario.node_count() {
            return Err(Error::InvalidArgument(
                "activation sequence does not match the node count".into(),
            ));
        }
        let mut state = self.init(init)?;
        let mut trace = vec![self.trace_row(&state, None)];
        let mut converged = trace[0].residual < opts.tol;
        let mut inner_failures = 0;
        // trace row just before each node's latest activation
        let mut last_seen: Vec<Option<usize>> = vec![None; self.scenario.node_count()];
        while !converged && state.t < opts.max_steps {
            let node = activation.next().expect("infinite sequence");
            if let Some(budget) = opts.message_budget {
                if state.messages + self.broadcast_size(node) > budget {
                    break;
                }
            }
            if !self.step(&mut state, node, &opts.inner) {
                inner_failures += 1;
            }
            last_seen[node] = Some(trace.len() - 1);
            let row = self.trace_row(&state, Some(node));
            trace.push(row);
            converged = row.residual < opts.tol
                || (opts.stop_when_stalled && sweep_stalled(&trace, &last_seen, opts.tol));
        }
        Ok(AsyncOutcome {
            positions: state.positions(),
            state,
            trace,
            converged,
            inner_failures,
        })
    }
}

fn sweep_stalled(trace: &[TraceRow], last_seen: &[Option<usize>], tol: f64) -> bool {
    // None sorts first: a node never activated keeps the test off
    let Some(start) = last_seen.iter().copied().min().flatten() else {
        return false;
    };
    let before = trace[start].cost;
    let now = trace[trace.len() - 1].cost;
    before - now <= tol * before.abs()
}

/// Convenience wrapper: builds a solver and runs it.
pub fn run_async(
    scenario: &Scenario,
    init: &Init,
    activation: &mut ActivationSequence,
    opts: &AsyncOptions,
) -> Result<AsyncOutcome> {
    AsyncSolver::new(scenario)?.run(init, activation, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{
        apply_noise, generate_geometric_network, AnchorLink, GeometricNetworkConfig, NoiseModel,
    };

    fn outlier10(seed: u64) -> Scenario {
        let s = generate_geometric_network(&GeometricNetworkConfig::unit_square(10, 0.45, seed)).unwrap();
        let m = NoiseModel::Outlier { sigma: 0.04, faulty_nodes: vec![7], sigma_outlier: 4.0 };
        apply_noise(&s, &m, seed + 1).unwrap()
    }

    #[test]
    fn activation_sequence_validation_and_determinism() {
        assert!(ActivationSequence::with_probabilities(vec![0.5, 0.5, 0.0], 1).is_err());
        assert!(ActivationSequence::with_probabilities(vec![0.5, 0.6], 1).is_err());
        let a: Vec<_> = ActivationSequence::uniform(5, 3).unwrap().take(50).collect();
        let b: Vec<_> = ActivationSequence::uniform(5, 3).unwrap().take(50).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v < 5));
    }

    #[test]
    fn lone_node_single_anchor_stops_on_its_side() {
        let slice = NodeSlice {
            node: 0,
            edges: vec![],
            links: vec![crate::netmodel::LocalLink { link: 0, anchor: vec![1.0], range: 2.0, radius: 1e3 }],
        };
        let start = NodeBlock { x: vec![4.5], y: vec![], w: vec![2.0] };
        let opts = InnerOptions { tol: 1e-12, max_iters: 20_000 };
        let sol = node_subproblem(&start, &[], &slice, 3.0, &opts);
        assert!(sol.block.x[0] > 2.5 && sol.block.x[0] <= 3.0 + 1e-6, "{:?}", sol.block);
        assert!(sol.cost < 1e-12);
        let start = NodeBlock { x: vec![-4.0], y: vec![], w: vec![-2.0] };
        let sol = node_subproblem(&start, &[], &slice, 3.0, &opts);
        assert!(sol.block.x[0] < -0.5 && sol.block.x[0] >= -1.0 - 1e-6, "{:?}", sol.block);
    }

    #[test]
    fn inside_balls_matches_least_squares() {
        // radii and ranges huge: the block cost is a plain quadratic whose x
        // minimizer is the mean of neighbor/anchor points shifted by y, w;
        // with y, w free inside large balls the minimum value is 0.
        let slice = NodeSlice {
            node: 0,
            edges: vec![crate::netmodel::LocalEdge { neighbor: 1, edge: 0, sign: 1, range: 1e-3, radius: 1e6 }],
            links: vec![
                crate::netmodel::LocalLink { link: 0, anchor: vec![0.0, 0.0], range: 1e-3, radius: 1e6 },
                crate::netmodel::LocalLink { link: 1, anchor: vec![2.0, 0.0], range: 1e-3, radius: 1e6 },
            ],
        };
        let nb = [1.0, 3.0];
        let start = NodeBlock { x: vec![5.0, 5.0], y: vec![0.0; 2], w: vec![0.0; 4] };
        let opts = InnerOptions { tol: 1e-12, max_iters: 50_000 };
        let sol = node_subproblem(&start, &[&nb], &slice, 6.0, &opts);
        // ranges are tiny so the solution is close to the least-squares point
        // of {neighbor, anchors}: the centroid (1, 1); exact optimum lies
        // within the ball slack of it.
        assert!((sol.block.x[0] - 1.0).abs() < 2e-3 && (sol.block.x[1] - 1.0).abs() < 2e-3);
        // dense oracle: gradient in x vanishes at the returned point
        let mut g = [0.0; 2];
        let pts: [[f64; 2]; 3] = [[1.0, 3.0], [0.0, 0.0], [2.0, 0.0]];
        for (k, q) in pts.iter().enumerate() {
            let aux = if k == 0 { &sol.block.y[0..2] } else { &sol.block.w[(k - 1) * 2..k * 2] };
            for c in 0..2 {
                g[c] += sol.block.x[c] - q[c] - aux[c];
            }
        }
        assert!(g[0].abs() < 1e-6 && g[1].abs() < 1e-6, "{g:?}");
    }

    #[test]
    fn tighter_inner_tolerance_never_costs_more() {
        let s = outlier10(3);
        let solver = AsyncSolver::new(&s).unwrap();
        let st = solver.init(&Init::Random { seed: 2 }).unwrap();
        let node = 4;
        let start = solver.block_of(&st, node);
        let p = 2;
        let off = solver.slot_offset[node];
        let nbs: Vec<&[f64]> = (0..solver.slices[node].edges.len())
            .map(|k| &st.cache[(off + k) * p..(off + k + 1) * p])
            .collect();
        let mut last = block_cost(&start, &nbs, &solver.slices[node]);
        for iters in [1, 5, 20, 100, 1000] {
            let sol = node_subproblem(
                &start,
                &nbs,
                &solver.slices[node],
                solver.lipschitz(),
                &InnerOptions { tol: 1e-14, max_iters: iters },
            );
            assert!(sol.cost <= last + 1e-15);
            last = sol.cost;
        }
    }

    #[test]
    fn repeated_activation_is_idempotent() {
        let s = outlier10(4);
        let solver = AsyncSolver::new(&s).unwrap();
        let mut st = solver.init(&Init::Random { seed: 8 }).unwrap();
        let inner = InnerOptions { tol: 1e-12, max_iters: 20_000 };
        solver.step(&mut st, 3, &inner);
        let after_one = st.z.clone();
        solver.step(&mut st, 3, &inner);
        assert!(after_one.distance(&st.z) < 1e-6);
        let f1 = stacked_cost(&after_one, &s);
        let f2 = stacked_cost(&st.z, &s);
        assert!(f2 <= f1 + 1e-12);
    }

    #[test]
    fn single_writer_and_monotone_descent() {
        let s = outlier10(5);
        let solver = AsyncSolver::new(&s).unwrap();
        let mut st = solver.init(&Init::Random { seed: 1 }).unwrap();
        let seq = ActivationSequence::uniform(10, 77).unwrap();
        let inner = InnerOptions::default();
        let mut cost = stacked_cost(&st.z, &s);
        for node in seq.take(300) {
            let before = st.z.clone();
            solver.step(&mut st, node, &inner);
            let now = stacked_cost(&st.z, &s);
            assert!(now <= cost + 1e-9, "cost rose {cost} -> {now}");
            cost = now;
            let p = 2;
            for v in 0..10 {
                if v != node {
                    assert_eq!(before.x_block(v), st.z.x_block(v));
                }
            }
            for (k, e) in s.edges().iter().enumerate() {
                if e.i != node && e.j != node {
                    assert_eq!(&before.y[k * p..(k + 1) * p], &st.z.y[k * p..(k + 1) * p]);
                }
            }
            for (k, l) in s.links().iter().enumerate() {
                if l.node != node {
                    assert_eq!(before.w_block(k), st.z.w_block(k));
                }
            }
            // caches mirror the real positions: broadcasts are reliable
            for v in 0..10 {
                for (slot, inc) in solver.incidence().neighbors(v).iter().enumerate() {
                    assert_eq!(st.cached_neighbor(&solver, v, slot), st.z.x_block(inc.neighbor));
                }
            }
            assert!(st.z.infeasibility(&s) <= 1e-15);
        }
    }

    #[test]
    fn messages_count_neighbors_times_dim() {
        let s = outlier10(6);
        let solver = AsyncSolver::new(&s).unwrap();
        let mut st = solver.init(&Init::Random { seed: 1 }).unwrap();
        solver.step(&mut st, 2, &InnerOptions::default());
        assert_eq!(st.messages, 2 * solver.incidence().degree(2) as u64);
    }

    #[test]
    fn zero_budget_returns_initialization() {
        let s = outlier10(7);
        let init = Init::Random { seed: 4 };
        let mut seq = ActivationSequence::uniform(10, 1).unwrap();
        let opts = AsyncOptions { message_budget: Some(0), ..AsyncOptions::default() };
        let out = run_async(&s, &init, &mut seq, &opts).unwrap();
        assert_eq!(out.positions, init.positions(&s).unwrap());
        assert_eq!(out.state.messages, 0);
    }

    #[test]
    fn reproducible_trace() {
        let s = outlier10(8);
        let init = Init::Random { seed: 4 };
        let opts = AsyncOptions { max_steps: 200, ..AsyncOptions::default() };
        let a = run_async(&s, &init, &mut ActivationSequence::uniform(10, 5).unwrap(), &opts).unwrap();
        let b = run_async(&s, &init, &mut ActivationSequence::uniform(10, 5).unwrap(), &opts).unwrap();
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn lone_sensor_scenario() {
        let truth = Points::new(1, vec![3.0]).unwrap();
        let anchors = Points::new(1, vec![0.0, 2.0, 6.0]).unwrap();
        let links = (0..3)
            .map(|k| AnchorLink { node: 0, anchor: k, range: [3.0, 1.0, 3.0][k], radius: 0.1 })
            .collect();
        let s = Scenario::new(truth, anchors, vec![], links).unwrap();
        let out = run_async(
            &s,
            &Init::Positions(Points::new(1, vec![0.5]).unwrap()),
            &mut ActivationSequence::uniform(1, 0).unwrap(),
            &AsyncOptions::default(),
        )
        .unwrap();
        assert!((out.positions.point(0)[0] - 3.0).abs() < 1e-6);
    }
}
