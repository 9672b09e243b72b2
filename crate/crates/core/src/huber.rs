//! Loss functions, ball projections and the stacked convex cost.
//!
//! The convex surrogate of the robust localization cost is minimized over
//! stacked variables `z = (x, y, w)`:
//!
//! ```text
//! F(z) = sum_{i~j} 1/2 psi_{R_ij}(x_i - x_j - y_ij) + sum_{i, k in A_i} 1/2 psi_{R_ik}(x_i - a_k - w_ik)
//! psi_R(u) = |u|^2 - dist^2(u, B_R) = h_R(|u|)
//! ```
//!
//! subject to `|y_ij| <= d_ij` and `|w_ik| <= r_ik`. The gradient of
//! `psi_R` is `2 P_R(u)`, so every gradient block is a ball projection of a
//! residual. Incidence matrices are never formed; all sums are neighbor loops.

use serde::{Deserialize, Serialize};

use crate::netmodel::{Points, Scenario};
use crate::vecops;

/// Huber loss: `t^2` inside `[-R, R]`, `2R|t| - R^2` outside.
#[inline]
pub fn huber_loss(t: f64, radius: f64) -> f64 {
    let a = t.abs();
    if a <= radius {
        a * a
    } else {
        2.0 * radius * a - radius * radius
    }
}

/// Orthogonal projection onto the closed ball of radius `radius`, in place.
#[inline]
pub fn project_ball_in_place(u: &mut [f64], radius: f64) {
    let n = vecops::norm(u);
    if n > radius {
        let scale = radius / n;
        u.iter_mut().for_each(|c| *c *= scale);
    }
}

pub fn ball_projection(u: &[f64], radius: f64) -> Vec<f64> {
    let mut out = u.to_vec();
    project_ball_in_place(&mut out, radius);
    out
}

/// Squared distance from `u` to the ball of radius `radius`.
#[inline]
pub fn sq_dist_ball(u: &[f64], radius: f64) -> f64 {
    let gap = (vecops::norm(u) - radius).max(0.0);
    gap * gap
}

/// `psi_R(u) = |u|^2 - dist^2(u, B_R)`, which equals `huber_loss(|u|, R)`.
#[inline]
pub fn psi(u: &[f64], radius: f64) -> f64 {
    vecops::norm_sq(u) - sq_dist_ball(u, radius)
}

/// `max(0, t)`
#[inline]
pub fn hinge(t: f64) -> f64 {
    t.max(0.0)
}

/// Discrepancy kernel applied to each range residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Quadratic,
    Absolute,
    /// Huber with the per-measurement radius stored in the scenario.
    Huber,
}

impl LossFamily {
    pub const ALL: [LossFamily; 3] = [LossFamily::Quadratic, LossFamily::Absolute, LossFamily::Huber];

    #[inline]
    pub fn eval(self, t: f64, radius: f64) -> f64 {
        match self {
            LossFamily::Quadratic => t * t,
            LossFamily::Absolute => t.abs(),
            LossFamily::Huber => huber_loss(t, radius),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossFamily::Quadratic => "quadratic",
            LossFamily::Absolute => "absolute",
            LossFamily::Huber => "huber",
        }
    }
}

impl std::str::FromStr for LossFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "quadratic" => Ok(LossFamily::Quadratic),
            "absolute" => Ok(LossFamily::Absolute),
            "huber" => Ok(LossFamily::Huber),
            other => Err(format!("unknown loss family `{other}`")),
        }
    }
}

/// Signed range discrepancies `|x_i - x_j| - d_ij` (edges first, then anchor
/// links) paired with their Huber radius.
pub fn discrepancies<'a>(x: &'a Points, scenario: &'a Scenario) -> impl Iterator<Item = (f64, f64)> + 'a {
    let edges = scenario.edges().iter().map(move |e| {
        (vecops::dist(x.point(e.i), x.point(e.j)) - e.range, e.radius)
    });
    let links = scenario.links().iter().map(move |l| {
        (vecops::dist(x.point(l.node), scenario.anchor(l.anchor)) - l.range, l.radius)
    });
    edges.chain(links)
}

/// Nonconvex robust cost `g(x) = sum 1/2 loss(|x_i - x_j| - d_ij) + anchor terms`.
pub fn nonconvex_cost_g(x: &Points, scenario: &Scenario, loss: LossFamily) -> f64 {
    discrepancies(x, scenario)
        .map(|(t, r)| 0.5 * loss.eval(t, r))
        .sum()
}

/// Convex underestimator `f(x)`: as `g` with every discrepancy clipped at 0.
pub fn convex_cost_f(x: &Points, scenario: &Scenario, loss: LossFamily) -> f64 {
    discrepancies(x, scenario)
        .map(|(t, r)| 0.5 * loss.eval(hinge(t), r))
        .sum()
}

/// Minimizer of `h(|x_i - x_j - y|)` over `|y| <= d`: the projection of
/// `x_i - x_j` onto the ball of radius `d`.
pub fn variational_inner_min(xi: &[f64], xj: &[f64], d: f64) -> Vec<f64> {
    let diff: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| a - b).collect();
    ball_projection(&diff, d)
}

/// Stacked variables `z = (x, y, w)`. `x` is ordered by node, `y` by edge
/// index (oriented as `x_i - x_j - y` with `i < j`), `w` by anchor link
/// (node, then anchor).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedVariables {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl StackedVariables {
    pub fn zeros(scenario: &Scenario) -> Self {
        let p = scenario.dim();
        StackedVariables {
            dim: p,
            x: vec![0.0; p * scenario.node_count()],
            y: vec![0.0; p * scenario.edges().len()],
            w: vec![0.0; p * scenario.links().len()],
        }
    }

    /// Positions `x` with the auxiliaries at their exact partial minimizers.
    pub fn from_positions(x: &Points, scenario: &Scenario) -> Self {
        let mut z = StackedVariables::zeros(scenario);
        z.x.copy_from_slice(x.as_slice());
        z.optimize_auxiliaries(scenario);
        z
    }

    /// Replaces `y` and `w` by their minimizers for the current `x`.
    pub fn optimize_auxiliaries(&mut self, scenario: &Scenario) {
        let p = self.dim;
        for (k, e) in scenario.edges().iter().enumerate() {
            let yk = &mut self.y[k * p..(k + 1) * p];
            for c in 0..p {
                yk[c] = self.x[e.i * p + c] - self.x[e.j * p + c];
            }
            project_ball_in_place(yk, e.range);
        }
        for (k, l) in scenario.links().iter().enumerate() {
            let a = scenario.anchor(l.anchor);
            let wk = &mut self.w[k * p..(k + 1) * p];
            for c in 0..p {
                wk[c] = self.x[l.node * p + c] - a[c];
            }
            project_ball_in_place(wk, l.range);
        }
    }

    pub fn positions(&self) -> Points {
        Points::new(self.dim, self.x.clone()).expect("x holds whole points")
    }

    pub fn x_block(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y_block(&self, e: usize) -> &[f64] {
        &self.y[e * self.dim..(e + 1) * self.dim]
    }

    pub fn w_block(&self, k: usize) -> &[f64] {
        &self.w[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.x.iter().chain(&self.y).chain(&self.w)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.x.iter_mut().chain(self.y.iter_mut()).chain(self.w.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.y.len() + self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &StackedVariables) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest constraint violation `max(|y_ij| - d_ij, |w_ik| - r_ik, 0)`.
    pub fn infeasibility(&self, scenario: &Scenario) -> f64 {
        let ey = scenario
            .edges()
            .iter()
            .enumerate()
            .map(|(k, e)| vecops::norm(self.y_block(k)) - e.range);
        let ew = scenario
            .links()
            .iter()
            .enumerate()
            .map(|(k, l)| vecops::norm(self.w_block(k)) - l.range);
        ey.chain(ew).fold(0.0, f64::max)
    }

    /// Projects onto the constraint set `Z` (x is unconstrained).
    pub fn project_feasible(&mut self, scenario: &Scenario) {
        let p = self.dim;
        for (k, e) in scenario.edges().iter().enumerate() {
            project_ball_in_place(&mut self.y[k * p..(k + 1) * p], e.range);
        }
        for (k, l) in scenario.links().iter().enumerate() {
            project_ball_in_place(&mut self.w[k * p..(k + 1) * p], l.range);
        }
    }
}

/// Stacked convex cost `F(z)`; defined for feasible and infeasible `z`.
pub fn stacked_cost(z: &StackedVariables, scenario: &Scenario) -> f64 {
    let p = z.dim;
    let mut u = vec![0.0; p];
    let mut total = 0.0;
    for (k, e) in scenario.edges().iter().enumerate() {
        vecops::sub3_into(z.x_block(e.i), z.x_block(e.j), z.y_block(k), &mut u);
        total += 0.5 * psi(&u, e.radius);
    }
    for (k, l) in scenario.links().iter().enumerate() {
        vecops::sub3_into(z.x_block(l.node), scenario.anchor(l.anchor), z.w_block(k), &mut u);
        total += 0.5 * psi(&u, l.radius);
    }
    total
}

/// Gradient of [`stacked_cost`], shaped like `z`.
pub fn stacked_gradient(z: &StackedVariables, scenario: &Scenario) -> StackedVariables {
    let p = z.dim;
    let mut g = StackedVariables {
        dim: p,
        x: vec![0.0; z.x.len()],
        y: vec![0.0; z.y.len()],
        w: vec![0.0; z.w.len()],
    };
    let mut u = vec![0.0; p];
    for (k, e) in scenario.edges().iter().enumerate() {
        vecops::sub3_into(z.x_block(e.i), z.x_block(e.j), z.y_block(k), &mut u);
        project_ball_in_place(&mut u, e.radius);
        for c in 0..p {
            g.x[e.i * p + c] += u[c];
            g.x[e.j * p + c] -= u[c];
            g.y[k * p + c] = -u[c];
        }
    }
    for (k, l) in scenario.links().iter().enumerate() {
        vecops::sub3_into(z.x_block(l.node), scenario.anchor(l.anchor), z.w_block(k), &mut u);
        project_ball_in_place(&mut u, l.radius);
        for c in 0..p {
            g.x[l.node * p + c] += u[c];
            g.w[k * p + c] = -u[c];
        }
    }
    g
}

/// Norm of the gradient mapping `L * (z - P_Z(z - grad F(z) / L))`; zero
/// exactly at minimizers of `F` over `Z`.
pub fn projected_gradient_residual(z: &StackedVariables, scenario: &Scenario, lipschitz: f64) -> f64 {
    let g = stacked_gradient(z, scenario);
    let mut next = z.clone();
    for (v, gv) in next.iter_mut().zip(g.iter()) {
        *v -= gv / lipschitz;
    }
    next.project_feasible(scenario);
    lipschitz * z.distance(&next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{AnchorLink, Edge};

    #[test]
    fn huber_branches() {
        assert_eq!(huber_loss(0.5, 1.0), 0.25);
        assert_eq!(huber_loss(2.0, 1.0), 3.0);
        assert_eq!(huber_loss(-2.0, 1.0), 3.0);
        let r = 0.7;
        let quad = r * r;
        let lin = 2.0 * r * r - r * r;
        assert_eq!(huber_loss(-r, r), quad);
        assert!((quad - lin).abs() < 1e-15);
    }

    #[test]
    fn projection_cases() {
        let p = ball_projection(&[3.0, 4.0], 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(ball_projection(&[0.1, 0.0], 1.0), vec![0.1, 0.0]);
        assert_eq!(ball_projection(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
        let u = [0.3, -2.0, 5.0];
        let minus: Vec<f64> = u.iter().map(|v| -v).collect();
        let a = ball_projection(&u, 1.5);
        let b = ball_projection(&minus, 1.5);
        assert!(a.iter().zip(&b).all(|(x, y)| *x == -*y));
    }

    #[test]
    fn sq_dist_and_psi() {
        assert_eq!(sq_dist_ball(&[0.5, 0.0], 1.0), 0.0);
        assert_eq!(sq_dist_ball(&[2.0, 0.0], 1.0), 1.0);
        assert_eq!(psi(&[0.3, 0.4], 1.0), 0.25);
        assert_eq!(psi(&[2.0, 0.0], 1.0), 3.0);
        assert_eq!(psi(&[2.0, 0.0], 1.0), huber_loss(2.0, 1.0));
    }

    #[test]
    fn sq_dist_gradient_matches_central_differences() {
        let h = 1e-6;
        for u in [[2.0, -1.0], [0.3, 0.2], [-3.0, 4.0]] {
            let r = 1.2;
            // gradient of 1/2 dist^2 is u - P(u), so dist^2 has 2(u - P(u))
            let proj = ball_projection(&u, r);
            for c in 0..2 {
                let mut up = u;
                let mut dn = u;
                up[c] += h;
                dn[c] -= h;
                let fd = (sq_dist_ball(&up, r) - sq_dist_ball(&dn, r)) / (2.0 * h);
                let exact = 2.0 * (u[c] - proj[c]);
                assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{fd} vs {exact}");
            }
        }
    }

    #[test]
    fn inner_min_cases() {
        assert_eq!(variational_inner_min(&[0.5, 0.0], &[0.0, 0.0], 1.0), vec![0.5, 0.0]);
        let y = variational_inner_min(&[2.0, 0.0], &[0.0, 0.0], 1.0);
        assert_eq!(y, vec![1.0, 0.0]);
        // h(|u - y*|) equals the hinge form h(s(|u| - d))
        assert_eq!(huber_loss(1.0, 0.5), huber_loss(hinge(2.0 - 1.0), 0.5));
    }

    fn single_edge_1d() -> Scenario {
        let truth = Points::new(1, vec![0.0, 1.0]).unwrap();
        let anchors = Points::new(1, vec![-5.0]).unwrap();
        let edges = vec![Edge { i: 0, j: 1, range: 1.0, radius: 0.5 }];
        let links = vec![AnchorLink { node: 0, anchor: 0, range: 5.0, radius: 0.5 }];
        Scenario::new(truth, anchors, edges, links).unwrap()
    }

    #[test]
    fn g_on_single_edge() {
        let s = single_edge_1d();
        let x = Points::new(1, vec![0.0, 2.0]).unwrap();
        // edge: 1/2 h_0.5(1) = 1/2 (2 * 0.5 * 1 - 0.25); anchor term is exact
        assert!((nonconvex_cost_g(&x, &s, LossFamily::Huber) - 0.375).abs() < 1e-15);
        assert_eq!(nonconvex_cost_g(s.truth(), &s, LossFamily::Quadratic), 0.0);
    }

    #[test]
    fn f_clips_contracted_configurations() {
        let s = single_edge_1d();
        let x = Points::new(1, vec![0.0, 0.2]).unwrap();
        // anchor term 1/2 h(|0 + 5| - 5) = 0, edge contracted
        assert_eq!(convex_cost_f(&x, &s, LossFamily::Quadratic), 0.0);
        assert!(nonconvex_cost_g(&x, &s, LossFamily::Quadratic) > 0.0);
        let stretched = Points::new(1, vec![0.0, 2.5]).unwrap();
        for loss in LossFamily::ALL {
            let f = convex_cost_f(&stretched, &s, loss);
            let g = nonconvex_cost_g(&stretched, &s, loss);
            assert!((f - g).abs() < 1e-12, "{loss:?}: {f} vs {g}");
        }
    }

    #[test]
    fn gradient_is_quadratic_inside_balls() {
        let s = single_edge_1d().with_huber_radius(100.0).unwrap();
        let z = StackedVariables {
            dim: 1,
            x: vec![0.3, 1.1],
            y: vec![0.2],
            w: vec![-0.4],
        };
        let g = stacked_gradient(&z, &s);
        let r_edge = 0.3 - 1.1 - 0.2;
        let r_link = 0.3 + 5.0 + 0.4;
        assert_eq!(g.x, vec![r_edge + r_link, -r_edge]);
        assert_eq!(g.y, vec![-r_edge]);
        assert_eq!(g.w, vec![-r_link]);
    }

    #[test]
    fn stacked_cost_zero_at_noiseless_truth() {
        let s = single_edge_1d();
        let z = StackedVariables::from_positions(s.truth(), &s);
        assert_eq!(stacked_cost(&z, &s), 0.0);
        assert_eq!(projected_gradient_residual(&z, &s, 4.0), 0.0);
    }

    #[test]
    fn loss_family_parses() {
        for l in LossFamily::ALL {
            assert_eq!(l.name().parse::<LossFamily>().unwrap(), l);
        }
        assert!("l3".parse::<LossFamily>().is_err());
    }
}
