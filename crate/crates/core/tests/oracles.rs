use huberloc::bounds::{grid_minimize_1d, three_anchor_scenario, ThreeAnchorConfig};
use huberloc::gossip::{run_async, ActivationSequence, AsyncOptions};
use huberloc::harness::desk_network;
use huberloc::huber::{convex_cost_f, LossFamily};
use huberloc::netmodel::{apply_noise, generate_geometric_network, NoiseModel, Points, Scenario};
use huberloc::run::Init;
use huberloc::sync::{run_sync, SyncOptions};

fn reference() -> SyncOptions {
    SyncOptions { max_iters: 100_000, tol: 1e-12, ..SyncOptions::default() }
}

/// Derivative of `1/2 h_R(max(0, t))` with respect to `t`.
fn clipped_half_huber_slope(t: f64, r: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t <= r {
        t
    } else {
        r
    }
}

/// Plain gradient descent on the convex cost written out term by term.
fn descend(s: &Scenario, start: Points, iters: usize, step: f64) -> Points {
    let p = s.dim();
    let mut x = start;
    for _ in 0..iters {
        let mut g = vec![0.0; x.as_slice().len()];
        let pull = |i: usize, other: &[f64], range: f64, radius: f64, x: &Points, g: &mut [f64]| {
            let u: Vec<f64> = x.point(i).iter().zip(other).map(|(a, b)| a - b).collect();
            let n = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 0.0 {
                let c = clipped_half_huber_slope(n - range, radius) / n;
                for k in 0..p {
                    g[i * p + k] += c * u[k];
                }
            }
        };
        for e in s.edges() {
            let (xi, xj) = (x.point(e.i).to_vec(), x.point(e.j).to_vec());
            pull(e.i, &xj, e.range, e.radius, &x, &mut g);
            pull(e.j, &xi, e.range, e.radius, &x, &mut g);
        }
        for l in s.links() {
            pull(l.node, s.anchor(l.anchor), l.range, l.radius, &x, &mut g);
        }
        let next: Vec<f64> = x.as_slice().iter().zip(&g).map(|(a, b)| a - step * b).collect();
        x = Points::new(p, next).unwrap();
    }
    x
}

#[test]
fn sync_matches_the_grid_minimum_on_the_line() {
    let cfg = ThreeAnchorConfig::default();
    for seed in 0..20 {
        let s = three_anchor_scenario(&cfg, seed).unwrap();
        let grid = grid_minimize_1d(&s, LossFamily::Huber, 1e-5, None).unwrap();
        let out = run_sync(&s, &Init::Random { seed }, &reference()).unwrap();
        let f = convex_cost_f(&out.positions, &s, LossFamily::Huber);
        assert!(f <= grid.f_min + 1e-9, "seed {seed}: {f} above grid {}", grid.f_min);
        assert!(grid.f_min - f <= 1e-6, "seed {seed}: grid {} far below {f}", grid.f_min);
    }
}

#[test]
fn async_matches_the_grid_minimum_on_the_line() {
    let cfg = ThreeAnchorConfig::default();
    for seed in 0..20 {
        let s = three_anchor_scenario(&cfg, seed).unwrap();
        let grid = grid_minimize_1d(&s, LossFamily::Huber, 1e-5, None).unwrap();
        let mut seq = ActivationSequence::uniform(1, seed).unwrap();
        let out = run_async(&s, &Init::Random { seed }, &mut seq, &AsyncOptions::default()).unwrap();
        let f = convex_cost_f(&out.positions, &s, LossFamily::Huber);
        assert!((f - grid.f_min).abs() <= 1e-6, "seed {seed}: {f} vs grid {}", grid.f_min);
    }
}

#[test]
fn sync_matches_plain_gradient_descent_on_the_desk_network() {
    let base = generate_geometric_network(&desk_network()).unwrap();
    let model = NoiseModel::Bias { sigma: 0.04, faulty_nodes: vec![7], bias_factor: 0.1 };
    for seed in 0..5 {
        let s = apply_noise(&base, &model, seed).unwrap();
        let init = Init::Random { seed };
        let out = run_sync(&s, &init, &reference()).unwrap();
        let slow = descend(&s, init.positions(&s).unwrap(), 100_000, 0.05);
        let fast = convex_cost_f(&out.positions, &s, LossFamily::Huber);
        let plain = convex_cost_f(&slow, &s, LossFamily::Huber);
        assert!(fast <= plain + 1e-9, "seed {seed}: {fast} vs {plain}");
        assert!(plain - fast <= 1e-6 * plain.max(1.0), "seed {seed}: {fast} vs {plain}");
    }
}
