use huberloc::harness::empirical_cdf;
use huberloc::huber::{
    ball_projection, convex_cost_f, huber_loss, nonconvex_cost_g, psi, stacked_cost, stacked_gradient, LossFamily,
    StackedVariables,
};
use huberloc::netmodel::{
    apply_noise, build_incidence, generate_geometric_network, lipschitz_constant, GeometricNetworkConfig, NoiseModel,
    Points, Scenario,
};
use huberloc::run::Init;
use huberloc::sync::SyncSolver;
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn vector(max_dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, 1..=max_dim)
}

fn noisy_network(seed: u64, nodes: usize) -> Scenario {
    let cfg = GeometricNetworkConfig::unit_square(nodes, 0.6, seed);
    let s = generate_geometric_network(&cfg).unwrap();
    let m = NoiseModel::Outlier { sigma: 0.04, faulty_nodes: vec![0], sigma_outlier: 1.0 };
    apply_noise(&s, &m, seed ^ 0x5eed).unwrap()
}

fn random_stacked(s: &Scenario, values: &[f64]) -> StackedVariables {
    let mut z = StackedVariables::zeros(s);
    for (v, r) in z.iter_mut().zip(values.iter().cycle()) {
        *v = *r;
    }
    z
}

proptest! {
    #[test]
    fn psi_equals_huber_of_norm(u in vector(4), r in 1e-3..5.0f64) {
        let lhs = psi(&u, r);
        let rhs = huber_loss(norm(&u), r);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0f64).max(norm(&u).powi(2)));
    }

    #[test]
    fn projection_is_odd_and_nonexpansive(u in vector(3), shift in vector(3), r in 1e-3..5.0f64) {
        let p = u.len().min(shift.len());
        let (u, v) = (&u[..p], &shift[..p]);
        let pu = ball_projection(u, r);
        let pv = ball_projection(v, r);
        let diff: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a - b).collect();
        let orig: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&diff) <= norm(&orig) + 1e-12);
        prop_assert!(norm(&pu) <= r * (1.0 + 1e-15));
        let neg: Vec<f64> = u.iter().map(|a| -a).collect();
        let pn = ball_projection(&neg, r);
        for (a, b) in pn.iter().zip(&pu) {
            prop_assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn convex_cost_underestimates(seed in 0u64..500, coords in prop::collection::vec(-0.5..1.5f64, 16)) {
        let s = noisy_network(seed, 8);
        let x = Points::new(2, coords).unwrap();
        for loss in LossFamily::ALL {
            let f = convex_cost_f(&x, &s, loss);
            let g = nonconvex_cost_g(&x, &s, loss);
            prop_assert!(f <= g + 1e-12 * g.max(1.0));
            prop_assert!(f >= 0.0);
        }
    }

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..500, values in prop::collection::vec(-1.0..1.0f64, 8..40)) {
        let s = noisy_network(seed, 6);
        let mut z = random_stacked(&s, &values);
        z.project_feasible(&s);
        let g = stacked_gradient(&z, &s);
        let h = 1e-6;
        let mut err = 0.0;
        let mut scale = 0.0;
        for k in 0..z.len() {
            let mut plus = z.clone();
            let mut minus = z.clone();
            *plus.iter_mut().nth(k).unwrap() += h;
            *minus.iter_mut().nth(k).unwrap() -= h;
            let fd = (stacked_cost(&plus, &s) - stacked_cost(&minus, &s)) / (2.0 * h);
            let an = *g.iter().nth(k).unwrap();
            err += (fd - an).powi(2);
            scale += an * an;
        }
        prop_assert!(err.sqrt() <= 1e-5 * scale.sqrt().max(1.0), "{} vs {}", err.sqrt(), scale.sqrt());
    }

    #[test]
    fn gradient_is_lipschitz(seed in 0u64..500, a in prop::collection::vec(-3.0..3.0f64, 40), b in prop::collection::vec(-3.0..3.0f64, 40)) {
        let s = noisy_network(seed, 8);
        let l = lipschitz_constant(&build_incidence(&s)).unwrap();
        let u = random_stacked(&s, &a);
        let v = random_stacked(&s, &b);
        let gu = stacked_gradient(&u, &s);
        let gv = stacked_gradient(&v, &s);
        prop_assert!(gu.distance(&gv) <= l * u.distance(&v) * (1.0 + 1e-12));
    }

    #[test]
    fn sync_iterates_stay_feasible(seed in 0u64..200, init_seed in 0u64..100, rounds in 1usize..200) {
        let s = noisy_network(seed, 8);
        let solver = SyncSolver::new(&s).unwrap();
        let mut st = solver.init(&Init::Random { seed: init_seed }).unwrap();
        solver.iterate(&mut st, rounds);
        prop_assert!(solver.stacked(&st).infeasibility(&s) <= 1e-12);
        prop_assert!(solver.antisymmetry_error(&st) == 0.0);
    }

    #[test]
    fn empirical_cdf_is_a_distribution(values in prop::collection::vec(-1e3..1e3f64, 1..200)) {
        let cdf = empirical_cdf(&values).unwrap();
        prop_assert_eq!(cdf.last().unwrap().1, 1.0);
        for w in cdf.windows(2) {
            prop_assert!(w[0].0 < w[1].0);
            prop_assert!(w[0].1 < w[1].1);
        }
        let below = values.iter().filter(|&&v| v <= cdf[0].0).count();
        prop_assert!((cdf[0].1 - below as f64 / values.len() as f64).abs() < 1e-15);
    }
}
