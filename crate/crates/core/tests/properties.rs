mod common;

use common::checks::{damping_violations, equivariance_sweep, random_instance, transparency_failures};
use common::random_connected_graph;
use lbgnn::adaptation::raw_update;
use lbgnn::analysis::{check_gain_conditions, theorem_envelope, AnalysisParams};
use lbgnn::controller::GainMatrix;
use lbgnn::gnn::NodeJacobians;
use lbgnn::graph::Permutation;
use lbgnn::sim::rk4_step;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn benchmark_params(k1: f64) -> AnalysisParams {
    AnalysisParams {
        gain_bound: 0.1,
        drift_bound: 0.065,
        position_bound: 150f64.sqrt(),
        velocity_bound: 0.46,
        reconstruction_bound: 1.0,
        theta_bar: 10.0,
        nodes: 4,
        k1,
        k2: 12.0,
        k3: 0.001,
        eps1: 0.1,
        lambda4: 0.01,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_annihilates_ones(seed in any::<u64>(), nodes in 1usize..9) {
        let (g, _) = random_connected_graph(&mut rng(seed), nodes, 0.3);
        let l = g.laplacian();
        let ones = DVector::from_element(nodes, 1.0);
        prop_assert!((&l * ones).amax() < 1e-12);
        prop_assert_eq!(&l, &l.transpose());
        let eig = l.symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() > -1e-9);
    }

    #[test]
    fn k_hop_is_monotone(seed in any::<u64>(), nodes in 1usize..9, k in 0usize..5) {
        let (g, _) = random_connected_graph(&mut rng(seed), nodes, 0.2);
        for i in 0..nodes {
            let small = g.k_hop(i, k);
            let large = g.k_hop(i, k + 1);
            prop_assert!(small.iter().all(|j| large.contains(j)));
            prop_assert!(!small.contains(&i));
            let aug = g.augmented_k_hop(i, k);
            prop_assert!(aug.contains(&i));
            prop_assert_eq!(aug.len(), small.len() + 1);
        }
        // Connected: everything within n - 1 hops.
        prop_assert_eq!(g.k_hop(0, nodes).len(), nodes - 1);
    }

    #[test]
    fn permutation_relabels_neighborhoods(seed in any::<u64>(), nodes in 1usize..9, k in 0usize..4) {
        let mut r = rng(seed);
        let (g, _) = random_connected_graph(&mut r, nodes, 0.3);
        let mut mapping: Vec<usize> = (0..nodes).collect();
        mapping.shuffle(&mut r);
        let p = Permutation::new(mapping).unwrap();
        let h = g.permute(&p).unwrap();
        for i in 0..nodes {
            let mut expected: Vec<usize> = g.k_hop(i, k).iter().map(|&j| p.apply(j)).collect();
            expected.sort_unstable();
            prop_assert_eq!(h.k_hop(p.apply(i), k), expected);
            prop_assert_eq!(h.degree(p.apply(i)), g.degree(i));
        }
        prop_assert_eq!(p.inverse().inverse(), p);
    }

    #[test]
    fn forward_pass_is_equivariant(seed in any::<u64>()) {
        prop_assert_eq!(equivariance_sweep(seed, 3), 3);
    }

    #[test]
    fn directional_derivative_matches(seed in any::<u64>(), depth in 1usize..4) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, depth);
        let n = inst.graph.node_count();
        let pass = inst.gnn.forward(&inst.graph, &inst.weights, &inst.inputs).unwrap();
        let i = seed as usize % n;
        let jac = inst.gnn.jacobians(&inst.graph, &inst.weights, &pass, i).unwrap();
        let dirs: Vec<DVector<f64>> = (0..n).map(|_| common::random_vector(&mut r, inst.gnn.param_count(), 1.0)).collect();
        let h = 1e-5;
        let shifted = |s: f64| {
            let w: Vec<_> = inst.weights.iter().zip(&dirs).map(|(w, d)| w + d * s).collect();
            inst.gnn.forward(&inst.graph, &w, &inst.inputs).unwrap().outputs()[i].clone()
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let mut analytic = DVector::zeros(inst.gnn.output_dim());
        for (j, block) in jac.iter() {
            analytic += block * &dirs[j];
        }
        prop_assert!((&analytic - &fd).norm() <= 1e-6 * analytic.norm().max(1.0), "{} vs {}", analytic, fd);
    }

    #[test]
    fn interior_projection_is_identity(seed in any::<u64>()) {
        prop_assert_eq!(transparency_failures(seed, 50), 0);
    }

    #[test]
    fn projection_damps(seed in any::<u64>()) {
        prop_assert_eq!(damping_violations(seed, 50).0, 0);
    }

    #[test]
    fn leakage_contracts_disagreement(seed in any::<u64>(), nodes in 2usize..7, k3 in 0.01f64..2.0, gamma in 0.1f64..5.0) {
        let mut r = rng(seed);
        let (g, _) = random_connected_graph(&mut r, nodes, 0.3);
        let p = 5;
        let mut thetas: Vec<DVector<f64>> = (0..nodes).map(|_| common::random_vector(&mut r, p, 3.0)).collect();
        let disagreement = |th: &[DVector<f64>]| -> f64 {
            g.edges().iter().map(|&(a, b)| (&th[a] - &th[b]).norm_squared()).sum()
        };
        // Euler with a step inside the stability limit of Γ k3 (L + I).
        let dt = 0.5 / (gamma * k3 * (nodes as f64 + 1.0) * 2.0);
        let eta = DVector::zeros(1);
        let mut last = disagreement(&thetas);
        for _ in 0..20 {
            let next: Vec<_> = (0..nodes)
                .map(|i| {
                    let jac = NodeJacobians::from_blocks(i, vec![Some(DMatrix::zeros(1, p)); nodes]);
                    let d = raw_update(&g, 1, i, &eta, &jac, &thetas, &GainMatrix::Scalar(gamma), k3).unwrap();
                    &thetas[i] + d * dt
                })
                .collect();
            thetas = next;
            let now = disagreement(&thetas);
            prop_assert!(now <= last * (1.0 + 1e-12) + 1e-15);
            last = now;
        }
    }

    #[test]
    fn gain_margin_is_continuous(k1 in 0.1f64..400.0, delta in -1e-3f64..1e-3) {
        let a = check_gain_conditions(&benchmark_params(k1));
        let b = check_gain_conditions(&benchmark_params(k1 + delta));
        let ma = a.condition("k1").unwrap().margin();
        let mb = b.condition("k1").unwrap().margin();
        prop_assert!(((mb - ma) - delta).abs() < 1e-9);
        prop_assert_eq!(a.condition("k1").unwrap().passed(), k1 > 172.25);
    }

    #[test]
    fn envelope_is_monotone(
        l1 in 0.01f64..0.5,
        l2 in 0.5f64..5.0,
        l4 in 0.001f64..0.5,
        ups in 0.0f64..10.0,
        z0 in 0.0f64..50.0,
        t in 0.0f64..200.0,
        dt in 0.0f64..50.0,
    ) {
        let now = theorem_envelope(l1, l2, l4, ups, z0, t);
        let later = theorem_envelope(l1, l2, l4, ups, z0, t + dt);
        let floor = (l2 * ups / (l1 * l4)).sqrt();
        if z0 * z0 >= ups / l4 {
            prop_assert!(later <= now * (1.0 + 1e-12));
            prop_assert!(later >= floor * (1.0 - 1e-12));
        } else {
            prop_assert!(later >= now * (1.0 - 1e-12));
            prop_assert!(later <= floor * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rk4_matches_taylor_polynomial(lambda in -5.0f64..5.0, h in 0.0f64..0.5, y0 in -3.0f64..3.0) {
        let y = rk4_step(|_, y| Ok(y * lambda), 0.0, &DVector::from_element(1, y0), h).unwrap();
        let z = lambda * h;
        let expected = y0 * (1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0);
        prop_assert!((y[0] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }
}
