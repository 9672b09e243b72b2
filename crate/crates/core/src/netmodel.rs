//! Network scenarios: sensors, anchors, range measurements and the graph
//! structure derived from them.
//!
//! Nodes are indexed from 0. An edge `(i, j)` is always stored with `i < j`;
//! the incidence table puts `+1` at the lower endpoint and `-1` at the higher
//! one. Anchor links are kept sorted by node, then anchor, so each node owns a
//! contiguous run of them.

use std::collections::HashSet;
use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::vecops;
use crate::{Error, Result};

/// Retry cap for rejection sampling of connected networks.
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// Huber radius used when nothing better is known about the regular noise.
pub const FALLBACK_HUBER_RADIUS: f64 = 0.1;

/// Default Huber radius: `2.5 * sigma` when the regular noise level is known.
pub fn default_huber_radius(sigma_regular: Option<f64>) -> f64 {
    match sigma_regular {
        Some(s) if s > 0.0 => 2.5 * s,
        _ => FALLBACK_HUBER_RADIUS,
    }
}

/// A set of points in `dim`-dimensional space, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Points {
    dim: usize,
    coords: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not split into {dim}-vectors",
                coords.len()
            )));
        }
        Ok(Points { dim, coords })
    }

    pub fn zeros(dim: usize, count: usize) -> Self {
        Points {
            dim,
            coords: vec![0.0; dim * count],
        }
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "point {k} has {} coordinates, expected {dim}",
                    row.len()
                )));
            }
            coords.extend_from_slice(row);
        }
        Points::new(dim, coords)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }
}

/// Sensor-to-sensor range measurement; `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub range: f64,
    pub radius: f64,
}

/// Sensor-to-anchor range measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorLink {
    pub node: usize,
    pub anchor: usize,
    pub range: f64,
    pub radius: f64,
}

/// A localization problem instance: true sensor positions, anchors,
/// measurement graph, ranges and Huber radii.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    truth: Points,
    anchors: Points,
    edges: Vec<Edge>,
    links: Vec<AnchorLink>,
}

impl Scenario {
    /// Builds and validates a scenario. Edges given as `(j, i)` with `j > i`
    /// are flipped; anchor links are sorted by (node, anchor).
    pub fn new(
        truth: Points,
        anchors: Points,
        mut edges: Vec<Edge>,
        mut links: Vec<AnchorLink>,
    ) -> Result<Self> {
        for e in &mut edges {
            if e.i > e.j {
                std::mem::swap(&mut e.i, &mut e.j);
            }
        }
        links.sort_by_key(|l| (l.node, l.anchor));
        let scenario = Scenario {
            truth,
            anchors,
            edges,
            links,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        let n = self.truth.len();
        if n == 0 {
            return bad("no sensors".into());
        }
        if self.anchors.dim() != self.truth.dim() {
            return bad("anchor and sensor dimensions differ".into());
        }
        if self.truth.as_slice().iter().any(|c| !c.is_finite())
            || self.anchors.as_slice().iter().any(|c| !c.is_finite())
        {
            return bad("non-finite coordinate".into());
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let mut seen = HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.i == e.j {
                return bad(format!("self-loop at node {}", e.i));
            }
            if e.j >= n {
                return bad(format!("edge ({}, {}) references a missing node", e.i, e.j));
            }
            if !seen.insert((e.i, e.j)) {
                return bad(format!("edge ({}, {}) appears twice", e.i, e.j));
            }
            if !positive(e.range) || !positive(e.radius) {
                return bad(format!(
                    "edge ({}, {}) needs positive finite range and radius",
                    e.i, e.j
                ));
            }
        }
        let mut seen = HashSet::with_capacity(self.links.len());
        for l in &self.links {
            if l.node >= n || l.anchor >= self.anchors.len() {
                return bad(format!("anchor link ({}, {}) out of range", l.node, l.anchor));
            }
            if !seen.insert((l.node, l.anchor)) {
                return bad(format!("anchor link ({}, {}) appears twice", l.node, l.anchor));
            }
            if !positive(l.range) || !positive(l.radius) {
                return bad(format!(
                    "anchor link ({}, {}) needs positive finite range and radius",
                    l.node, l.anchor
                ));
            }
        }
        if self.links.is_empty() {
            return Err(Error::NoAnchors);
        }
        if !is_connected(n, &self.edges) {
            return bad("measurement graph is not connected".into());
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.truth.dim()
    }

    pub fn node_count(&self) -> usize {
        self.truth.len()
    }

    pub fn truth(&self) -> &Points {
        &self.truth
    }

    pub fn anchors(&self) -> &Points {
        &self.anchors
    }

    pub fn anchor(&self, k: usize) -> &[f64] {
        self.anchors.point(k)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn links(&self) -> &[AnchorLink] {
        &self.links
    }

    /// Same scenario with every Huber radius set to `radius`.
    pub fn with_huber_radius(&self, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Huber radius must be positive and finite, got {radius}"
            )));
        }
        let mut out = self.clone();
        out.edges.iter_mut().for_each(|e| e.radius = radius);
        out.links.iter_mut().for_each(|l| l.radius = radius);
        Ok(out)
    }

    /// Noiseless copy: every range replaced by the true distance.
    pub fn noiseless(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.edges {
            e.range = vecops::dist(self.truth.point(e.i), self.truth.point(e.j));
        }
        for l in &mut out.links {
            l.range = vecops::dist(self.truth.point(l.node), self.anchors.point(l.anchor));
        }
        out
    }

    pub fn average_degree(&self) -> f64 {
        2.0 * self.edges.len() as f64 / self.node_count() as f64
    }

    pub fn to_document(&self) -> ScenarioDocument {
        ScenarioDocument {
            dimension: self.dim(),
            sensors: self.truth.rows(),
            anchors: self.anchors.rows(),
            edges: self.edges.clone(),
            anchor_links: self.links.clone(),
            generated_by: None,
        }
    }

    pub fn from_document(doc: ScenarioDocument) -> Result<Self> {
        let truth = Points::from_rows(doc.dimension, &doc.sensors)?;
        let anchors = Points::from_rows(doc.dimension, &doc.anchors)?;
        Scenario::new(truth, anchors, doc.edges, doc.anchor_links)
    }

    pub fn to_json(&self) -> String {
        // Serializing plain numbers and vectors cannot fail.
        serde_json::to_string_pretty(&self.to_document()).expect("scenario serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Scenario::from_document(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}

/// On-disk scenario schema (JSON).
///
/// ```text
/// {
///   "dimension": 2,
///   "sensors": [[x, y], ...],          // true positions, one per node
///   "anchors": [[x, y], ...],
///   "edges": [{"i": 0, "j": 3, "range": 0.41, "radius": 0.1}, ...],
///   "anchor_links": [{"node": 0, "anchor": 1, "range": 0.2, "radius": 0.1}, ...],
///   "generated_by": {...}              // optional, settings that produced the file
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub dimension: usize,
    pub sensors: Vec<Vec<f64>>,
    pub anchors: Vec<Vec<f64>>,
    pub edges: Vec<Edge>,
    pub anchor_links: Vec<AnchorLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_by: Option<serde_json::Value>,
}

fn is_connected(n: usize, edges: &[Edge]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for e in edges {
        adj[e.i].push(e.j);
        adj[e.j].push(e.i);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                stack.push(u);
            }
        }
    }
    count == n
}

/// Corners of the `[0, side]^dim` hypercube, in binary counting order.
pub fn corner_anchors(dim: usize, side: f64) -> Points {
    let count = 1usize << dim;
    let mut coords = Vec::with_capacity(count * dim);
    for mask in 0..count {
        for axis in 0..dim {
            coords.push(if mask >> axis & 1 == 1 { side } else { 0.0 });
        }
    }
    Points { dim, coords }
}

/// Parameters for [`generate_geometric_network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricNetworkConfig {
    pub nodes: usize,
    pub dim: usize,
    pub area_side: f64,
    pub comm_radius: f64,
    pub anchors: Vec<Vec<f64>>,
    pub huber_radius: f64,
    pub seed: u64,
    pub max_attempts: usize,
}

impl GeometricNetworkConfig {
    /// Unit square with corner anchors, as in the desk-scale experiments.
    pub fn unit_square(nodes: usize, comm_radius: f64, seed: u64) -> Self {
        GeometricNetworkConfig {
            nodes,
            dim: 2,
            area_side: 1.0,
            comm_radius,
            anchors: corner_anchors(2, 1.0).rows(),
            huber_radius: FALLBACK_HUBER_RADIUS,
            seed,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

/// Samples sensors uniformly in the square (cube) and connects every pair
/// within `comm_radius`. Resamples until the graph is connected and at least
/// one sensor hears an anchor. Ranges are the exact distances; use
/// [`apply_noise`] to perturb them.
pub fn generate_geometric_network(cfg: &GeometricNetworkConfig) -> Result<Scenario> {
    if cfg.nodes == 0 {
        return Err(Error::InvalidArgument("need at least one sensor".into()));
    }
    if !(cfg.comm_radius.is_finite() && cfg.comm_radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "communication radius must be positive, got {}",
            cfg.comm_radius
        )));
    }
    if !(cfg.area_side.is_finite() && cfg.area_side > 0.0) {
        return Err(Error::InvalidArgument("area side must be positive".into()));
    }
    let anchors = Points::from_rows(cfg.dim, &cfg.anchors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    for _ in 0..cfg.max_attempts {
        let coords: Vec<f64> = (0..cfg.nodes * cfg.dim)
            .map(|_| rng.gen::<f64>() * cfg.area_side)
            .collect();
        let truth = Points::new(cfg.dim, coords)?;

        let mut edges = Vec::new();
        for i in 0..cfg.nodes {
            for j in i + 1..cfg.nodes {
                let d = vecops::dist(truth.point(i), truth.point(j));
                if d <= cfg.comm_radius && d > 0.0 {
                    edges.push(Edge {
                        i,
                        j,
                        range: d,
                        radius: cfg.huber_radius,
                    });
                }
            }
        }
        let mut links = Vec::new();
        for node in 0..cfg.nodes {
            for anchor in 0..anchors.len() {
                let r = vecops::dist(truth.point(node), anchors.point(anchor));
                if r <= cfg.comm_radius && r > 0.0 {
                    links.push(AnchorLink {
                        node,
                        anchor,
                        range: r,
                        radius: cfg.huber_radius,
                    });
                }
            }
        }
        if links.is_empty() || !is_connected(cfg.nodes, &edges) {
            continue;
        }
        return Scenario::new(truth, anchors.clone(), edges, links);
    }
    Err(Error::Generation {
        attempts: cfg.max_attempts,
    })
}

/// Range noise models. All standard deviations are in scenario length units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian {
        sigma: f64,
    },
    /// Measurements touching a faulty node use `sigma_outlier` instead.
    Outlier {
        sigma: f64,
        faulty_nodes: Vec<usize>,
        sigma_outlier: f64,
    },
    /// Measurements touching a faulty node are exactly
    /// `bias_factor * true distance`.
    Bias {
        sigma: f64,
        faulty_nodes: Vec<usize>,
        bias_factor: f64,
    },
}

impl NoiseModel {
    pub fn regular_sigma(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma }
            | NoiseModel::Outlier { sigma, .. }
            | NoiseModel::Bias { sigma, .. } => sigma,
        }
    }

    pub fn faulty_nodes(&self) -> &[usize] {
        match self {
            NoiseModel::Gaussian { .. } => &[],
            NoiseModel::Outlier { faulty_nodes, .. } | NoiseModel::Bias { faulty_nodes, .. } => {
                faulty_nodes
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let sigma_ok = |s: f64| s.is_finite() && s >= 0.0;
        let ok = match *self {
            NoiseModel::Gaussian { sigma } => sigma_ok(sigma),
            NoiseModel::Outlier {
                sigma,
                sigma_outlier,
                ..
            } => sigma_ok(sigma) && sigma_ok(sigma_outlier),
            NoiseModel::Bias {
                sigma, bias_factor, ..
            } => sigma_ok(sigma) && bias_factor.is_finite() && bias_factor > 0.0,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "noise parameters out of range: {self:?}"
            )));
        }
        if let Some(&bad) = self.faulty_nodes().iter().find(|&&v| v >= n) {
            return Err(Error::InvalidArgument(format!(
                "faulty node {bad} is not in the network"
            )));
        }
        Ok(())
    }
}

/// Redraws all ranges from the true geometry: `|true distance + nu|`.
///
/// One standard normal is drawn per measurement, edges first and anchor links
/// after, regardless of the model. Two models applied with the same seed
/// therefore share their noise realization.
pub fn apply_noise(scenario: &Scenario, model: &NoiseModel, seed: u64) -> Result<Scenario> {
    let n = scenario.node_count();
    model.validate(n)?;
    let mut faulty = vec![false; n];
    for &v in model.faulty_nodes() {
        faulty[v] = true;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perturb = |true_dist: f64, touches_faulty: bool| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let measured = match *model {
            NoiseModel::Gaussian { sigma } => true_dist + sigma * z,
            NoiseModel::Outlier {
                sigma,
                sigma_outlier,
                ..
            } => true_dist + if touches_faulty { sigma_outlier } else { sigma } * z,
            NoiseModel::Bias {
                sigma, bias_factor, ..
            } => {
                if touches_faulty {
                    bias_factor * true_dist
                } else {
                    true_dist + sigma * z
                }
            }
        };
        // ranges must stay strictly positive
        measured.abs().max(f64::MIN_POSITIVE)
    };

    let truth = scenario.truth();
    let mut out = scenario.clone();
    for e in &mut out.edges {
        let d = vecops::dist(truth.point(e.i), truth.point(e.j));
        e.range = perturb(d, faulty[e.i] || faulty[e.j]);
    }
    for l in &mut out.links {
        let r = vecops::dist(truth.point(l.node), scenario.anchor(l.anchor));
        l.range = perturb(r, faulty[l.node]);
    }
    Ok(out)
}

/// One endpoint's view of an incident edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incident {
    pub neighbor: usize,
    pub edge: usize,
    /// Incidence entry `C[edge, node]`: `+1` at the lower endpoint.
    pub sign: i8,
}

/// Sparse arc-node incidence table plus the degree statistics that enter
/// the Lipschitz constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    node_count: usize,
    endpoints: Vec<(usize, usize)>,
    neighbors: Vec<Vec<Incident>>,
    link_ranges: Vec<Range<usize>>,
    max_degree: usize,
    max_anchor_count: usize,
}

pub fn build_incidence(scenario: &Scenario) -> Incidence {
    let n = scenario.node_count();
    let mut neighbors = vec![Vec::new(); n];
    let mut endpoints = Vec::with_capacity(scenario.edges().len());
    for (k, e) in scenario.edges().iter().enumerate() {
        endpoints.push((e.i, e.j));
        neighbors[e.i].push(Incident {
            neighbor: e.j,
            edge: k,
            sign: 1,
        });
        neighbors[e.j].push(Incident {
            neighbor: e.i,
            edge: k,
            sign: -1,
        });
    }
    let mut link_ranges = vec![0..0; n];
    let links = scenario.links();
    let mut start = 0;
    while start < links.len() {
        let node = links[start].node;
        let end = start + links[start..].iter().take_while(|l| l.node == node).count();
        link_ranges[node] = start..end;
        start = end;
    }
    let max_degree = neighbors.iter().map(Vec::len).max().unwrap_or(0);
    let max_anchor_count = link_ranges.iter().map(|r| r.len()).max().unwrap_or(0);
    Incidence {
        node_count: n,
        endpoints,
        neighbors,
        link_ranges,
        max_degree,
        max_anchor_count,
    }
}

impl Incidence {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.endpoints.len()
    }

    /// `C[edge, node]`.
    pub fn entry(&self, edge: usize, node: usize) -> i8 {
        let (i, j) = self.endpoints[edge];
        if node == i {
            1
        } else if node == j {
            -1
        } else {
            0
        }
    }

    /// Dense row `edge` of the incidence table.
    pub fn row(&self, edge: usize) -> Vec<i8> {
        (0..self.node_count).map(|v| self.entry(edge, v)).collect()
    }

    pub fn neighbors(&self, node: usize) -> &[Incident] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    /// Indices into [`Scenario::links`] owned by `node`.
    pub fn links_of(&self, node: usize) -> Range<usize> {
        self.link_ranges[node].clone()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn max_anchor_count(&self) -> usize {
        self.max_anchor_count
    }

    /// Position of `node` in `neighbor`'s neighbor list.
    pub fn mirror_slot(&self, node: usize, slot: usize) -> usize {
        let inc = self.neighbors[node][slot];
        self.neighbors[inc.neighbor]
            .iter()
            .position(|o| o.edge == inc.edge)
            .expect("edge is listed at both endpoints")
    }
}

/// Incident edge as seen from one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEdge {
    pub neighbor: usize,
    pub edge: usize,
    pub sign: i8,
    pub range: f64,
    pub radius: f64,
}

/// Anchor link as seen from its node.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLink {
    pub link: usize,
    pub anchor: Vec<f64>,
    pub range: f64,
    pub radius: f64,
}

/// Everything a node knows without communicating: its measurements, their
/// radii and the anchors it hears.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSlice {
    pub node: usize,
    pub edges: Vec<LocalEdge>,
    pub links: Vec<LocalLink>,
}

impl NodeSlice {
    pub fn new(scenario: &Scenario, inc: &Incidence, node: usize) -> Self {
        let edges = inc
            .neighbors(node)
            .iter()
            .map(|n| {
                let e = scenario.edges()[n.edge];
                LocalEdge {
                    neighbor: n.neighbor,
                    edge: n.edge,
                    sign: n.sign,
                    range: e.range,
                    radius: e.radius,
                }
            })
            .collect();
        let links = inc
            .links_of(node)
            .map(|k| {
                let l = scenario.links()[k];
                LocalLink {
                    link: k,
                    anchor: scenario.anchor(l.anchor).to_vec(),
                    range: l.range,
                    radius: l.radius,
                }
            })
            .collect();
        NodeSlice { node, edges, links }
    }

    pub fn all(scenario: &Scenario, inc: &Incidence) -> Vec<NodeSlice> {
        (0..scenario.node_count())
            .map(|v| NodeSlice::new(scenario, inc, v))
            .collect()
    }
}

/// `L_F = 2 + 2 * max degree + max anchors per node`: a Lipschitz constant of
/// the stacked cost gradient, bounding the Laplacian spectrum by twice the
/// maximum degree.
pub fn lipschitz_constant(inc: &Incidence) -> Result<f64> {
    if inc.max_anchor_count() == 0 {
        return Err(Error::NoAnchors);
    }
    Ok((2 + 2 * inc.max_degree() + inc.max_anchor_count()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> Scenario {
        let truth = Points::new(1, vec![0.0, 1.0, 2.0]).unwrap();
        let anchors = Points::new(1, vec![-1.0, 1.5, 3.0]).unwrap();
        let edges = vec![
            Edge { i: 0, j: 1, range: 1.0, radius: 0.1 },
            Edge { i: 1, j: 2, range: 1.0, radius: 0.1 },
        ];
        let links = (0..3)
            .map(|k| AnchorLink {
                node: k,
                anchor: k,
                range: 1.0,
                radius: 0.1,
            })
            .collect();
        Scenario::new(truth, anchors, edges, links).unwrap()
    }

    #[test]
    fn path_incidence_rows_and_degree() {
        let inc = build_incidence(&path3());
        assert_eq!(inc.row(0), vec![1, -1, 0]);
        assert_eq!(inc.row(1), vec![0, 1, -1]);
        assert_eq!(inc.max_degree(), 2);
        assert_eq!(lipschitz_constant(&inc).unwrap(), 7.0);
    }

    #[test]
    fn star_degree_and_lipschitz() {
        let truth = Points::new(2, vec![0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]).unwrap();
        let anchors = Points::new(2, vec![0.5, 0.5, -0.5, 0.5]).unwrap();
        let edges = (1..5)
            .map(|j| Edge { i: 0, j, range: 1.0, radius: 0.1 })
            .collect();
        let links = vec![
            AnchorLink { node: 0, anchor: 0, range: 0.7, radius: 0.1 },
            AnchorLink { node: 0, anchor: 1, range: 0.7, radius: 0.1 },
        ];
        let inc = build_incidence(&Scenario::new(truth, anchors, edges, links).unwrap());
        assert_eq!(inc.max_degree(), 4);
        assert_eq!(inc.max_anchor_count(), 2);
        assert_eq!(lipschitz_constant(&inc).unwrap(), 12.0);
    }

    #[test]
    fn column_abs_sums_are_degrees() {
        let s = generate_geometric_network(&GeometricNetworkConfig::unit_square(12, 0.45, 3)).unwrap();
        let inc = build_incidence(&s);
        for v in 0..s.node_count() {
            let col: usize = (0..inc.edge_count()).map(|e| inc.entry(e, v).unsigned_abs() as usize).sum();
            assert_eq!(col, inc.degree(v));
        }
        for e in 0..inc.edge_count() {
            let row = inc.row(e);
            assert_eq!(row.iter().filter(|&&c| c == 1).count(), 1);
            assert_eq!(row.iter().filter(|&&c| c == -1).count(), 1);
        }
    }

    #[test]
    fn lipschitz_requires_an_anchor_link() {
        // Assumption violated on purpose: build the incidence by hand.
        let inc = Incidence {
            node_count: 2,
            endpoints: vec![(0, 1)],
            neighbors: vec![
                vec![Incident { neighbor: 1, edge: 0, sign: 1 }],
                vec![Incident { neighbor: 0, edge: 0, sign: -1 }],
            ],
            link_ranges: vec![0..0, 0..0],
            max_degree: 1,
            max_anchor_count: 0,
        };
        assert!(matches!(lipschitz_constant(&inc), Err(Error::NoAnchors)));
    }

    #[test]
    fn scenario_without_anchor_links_is_rejected() {
        let truth = Points::new(1, vec![0.0, 1.0]).unwrap();
        let anchors = Points::new(1, vec![5.0]).unwrap();
        let edges = vec![Edge { i: 0, j: 1, range: 1.0, radius: 0.1 }];
        assert!(matches!(
            Scenario::new(truth, anchors, edges, vec![]),
            Err(Error::NoAnchors)
        ));
    }

    #[test]
    fn invalid_graphs_are_rejected() {
        let truth = Points::new(1, vec![0.0, 1.0, 2.0]).unwrap();
        let anchors = Points::new(1, vec![5.0]).unwrap();
        let link = vec![AnchorLink { node: 0, anchor: 0, range: 5.0, radius: 0.1 }];
        let e = |i, j| Edge { i, j, range: 1.0, radius: 0.1 };
        // disconnected
        assert!(Scenario::new(truth.clone(), anchors.clone(), vec![e(0, 1)], link.clone()).is_err());
        // duplicate (also after flipping)
        assert!(Scenario::new(truth.clone(), anchors.clone(), vec![e(0, 1), e(1, 0), e(1, 2)], link.clone()).is_err());
        // self-loop
        assert!(Scenario::new(truth.clone(), anchors.clone(), vec![e(0, 1), e(1, 2), e(2, 2)], link.clone()).is_err());
        // nonpositive range
        let mut zero = e(1, 2);
        zero.range = 0.0;
        assert!(Scenario::new(truth.clone(), anchors.clone(), vec![e(0, 1), zero], link.clone()).is_err());
        // flipped pair is normalized
        let s = Scenario::new(truth, anchors, vec![e(1, 0), e(2, 1)], link).unwrap();
        assert_eq!((s.edges()[1].i, s.edges()[1].j), (1, 2));
    }

    #[test]
    fn single_sensor_single_anchor() {
        let cfg = GeometricNetworkConfig {
            nodes: 1,
            dim: 2,
            area_side: 1.0,
            comm_radius: 2.0,
            anchors: vec![vec![0.5, 0.5]],
            huber_radius: 0.1,
            seed: 7,
            max_attempts: 10,
        };
        let s = generate_geometric_network(&cfg).unwrap();
        assert_eq!(s.edges().len(), 0);
        assert_eq!(s.links().len(), 1);
    }

    #[test]
    fn generation_is_deterministic_and_can_fail() {
        let cfg = GeometricNetworkConfig::unit_square(10, 0.45, 42);
        assert_eq!(
            generate_geometric_network(&cfg).unwrap(),
            generate_geometric_network(&cfg).unwrap()
        );
        let mut tiny = GeometricNetworkConfig::unit_square(10, 0.01, 1);
        tiny.max_attempts = 5;
        let err = generate_geometric_network(&tiny).unwrap_err();
        assert!(err.to_string().contains("cannot produce connected scenario"));
        tiny.comm_radius = 0.0;
        assert!(generate_geometric_network(&tiny).is_err());
    }

    #[test]
    fn corners() {
        assert_eq!(
            corner_anchors(2, 1.0).rows(),
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]
        );
        assert_eq!(corner_anchors(3, 2.0).len(), 8);
    }

    #[test]
    fn zero_sigma_gives_true_distances() {
        let s = generate_geometric_network(&GeometricNetworkConfig::unit_square(10, 0.45, 5)).unwrap();
        let noisy = apply_noise(&s, &NoiseModel::Gaussian { sigma: 0.0 }, 9).unwrap();
        assert_eq!(noisy, s.noiseless());
    }

    #[test]
    fn outlier_noise_only_touches_faulty_edges() {
        let s = generate_geometric_network(&GeometricNetworkConfig::unit_square(10, 0.5, 11)).unwrap();
        let model = NoiseModel::Outlier {
            sigma: 0.0,
            faulty_nodes: vec![7],
            sigma_outlier: 4.0,
        };
        let noisy = apply_noise(&s, &model, 3).unwrap();
        for (e, clean) in noisy.edges().iter().zip(s.edges()) {
            if e.i == 7 || e.j == 7 {
                assert_ne!(e.range, clean.range);
            } else {
                assert_eq!(e.range, clean.range);
            }
        }
        for (l, clean) in noisy.links().iter().zip(s.links()) {
            assert_eq!(l.node == 7, l.range != clean.range);
        }
    }

    #[test]
    fn bias_scales_faulty_measurements_exactly() {
        let s = generate_geometric_network(&GeometricNetworkConfig::unit_square(10, 0.5, 11)).unwrap();
        let model = NoiseModel::Bias {
            sigma: 0.04,
            faulty_nodes: vec![7],
            bias_factor: 0.1,
        };
        let noisy = apply_noise(&s, &model, 3).unwrap();
        let truth = s.truth();
        for e in noisy.edges().iter().filter(|e| e.i == 7 || e.j == 7) {
            let d = vecops::dist(truth.point(e.i), truth.point(e.j));
            assert_eq!(e.range, 0.1 * d);
        }
    }

    #[test]
    fn noise_is_seed_deterministic_and_validated() {
        let s = generate_geometric_network(&GeometricNetworkConfig::unit_square(10, 0.45, 5)).unwrap();
        let m = NoiseModel::Gaussian { sigma: 0.04 };
        assert_eq!(apply_noise(&s, &m, 1).unwrap(), apply_noise(&s, &m, 1).unwrap());
        assert_ne!(apply_noise(&s, &m, 1).unwrap(), apply_noise(&s, &m, 2).unwrap());
        let bad = NoiseModel::Outlier {
            sigma: 0.04,
            faulty_nodes: vec![10],
            sigma_outlier: 4.0,
        };
        assert!(apply_noise(&s, &bad, 1).is_err());
        assert!(apply_noise(&s, &NoiseModel::Gaussian { sigma: -1.0 }, 1).is_err());
    }

    #[test]
    fn document_round_trip_is_lossless() {
        let s = generate_geometric_network(&GeometricNetworkConfig::unit_square(10, 0.45, 8)).unwrap();
        let s = apply_noise(&s, &NoiseModel::Gaussian { sigma: 0.04 }, 2).unwrap();
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json(), s.to_json());
    }
}
