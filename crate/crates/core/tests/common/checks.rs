//! Randomized check runners used by both the integration tests and the
//! acceptance binary.

#![allow(dead_code)]

use lbgnn::adaptation::{raw_update, Projection};
use lbgnn::analysis::{theorem_envelope, upsilon, AnalysisParams};
use lbgnn::controller::{control_input, GainMatrix, Gains};
use lbgnn::dynamics::{lumped_uncertainty, PaperDynamics};
use lbgnn::gnn::{Activation, GnnConfig, NodeJacobians};
use lbgnn::graph::{Graph, Permutation};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Central differences through the public forward pass only.
pub fn central_difference(
    gnn: &GnnConfig,
    graph: &Graph,
    weights: &[DVector<f64>],
    inputs: &[DVector<f64>],
    i: usize,
    j: usize,
    step: f64,
) -> DMatrix<f64> {
    let mut w = weights.to_vec();
    let mut out = DMatrix::zeros(gnn.output_dim(), gnn.param_count());
    for q in 0..gnn.param_count() {
        let base = w[j][q];
        w[j][q] = base + step;
        let plus = gnn.forward(graph, &w, inputs).unwrap().outputs()[i].clone();
        w[j][q] = base - step;
        let minus = gnn.forward(graph, &w, inputs).unwrap().outputs()[i].clone();
        w[j][q] = base;
        for r in 0..gnn.output_dim() {
            out[(r, q)] = (plus[r] - minus[r]) / (2.0 * step);
        }
    }
    out
}

pub struct Instance {
    pub graph: Graph,
    pub gnn: GnnConfig,
    pub weights: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
}

const HIDDEN: [Activation; 4] = [Activation::Tanh, Activation::Swish, Activation::Sigmoid, Activation::Identity];
const OUTPUT: [Activation; 3] = [Activation::Identity, Activation::Tanh, Activation::Sigmoid];

pub fn random_instance<R: Rng>(rng: &mut R, depth: usize) -> Instance {
    let nodes = rng.gen_range(1..=6);
    let (graph, _) = random_connected_graph(rng, nodes, 0.3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=5)).collect();
    let mut gnn = GnnConfig::new(rng.gen_range(1..=4), hidden, rng.gen_range(1..=3))
        .unwrap()
        .with_output_activation(*OUTPUT.choose(rng).unwrap());
    for layer in 0..depth {
        gnn = gnn.with_layer_activation(layer, *HIDDEN.choose(rng).unwrap()).unwrap();
    }
    finish_instance(rng, graph, gnn)
}

/// Four nodes, complete graph, 15 inputs, two hidden layers of 8, 3 outputs.
pub fn benchmark_instance<R: Rng>(rng: &mut R) -> Instance {
    let gnn = GnnConfig::new(15, vec![8, 8], 3)
        .unwrap()
        .with_hidden_activation(Activation::Swish)
        .with_output_activation(Activation::Tanh);
    finish_instance(rng, Graph::complete(4).unwrap(), gnn)
}

fn finish_instance<R: Rng>(rng: &mut R, graph: Graph, gnn: GnnConfig) -> Instance {
    let n = graph.node_count();
    let weights = (0..n).map(|_| gnn.uniform_weights(rng, -0.5, 0.5)).collect();
    let inputs = (0..n).map(|_| random_vector(rng, gnn.input_dim(), 1.0)).collect();
    Instance {
        graph,
        gnn,
        weights,
        inputs,
    }
}

#[derive(Debug, Default)]
pub struct JacobianSweep {
    pub instances: usize,
    pub blocks: usize,
    pub depths: [usize; 3],
    pub benchmark_instances: usize,
    pub max_relative_error: f64,
}

/// `random` instances cycling through depths 1..=3, plus `benchmark`
/// instances of the benchmark shape. Every block within reach of a random
/// node is compared.
pub fn jacobian_sweep(seed: u64, random: usize, benchmark: usize, step: f64) -> JacobianSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sweep = JacobianSweep::default();
    for k in 0..random + benchmark {
        let inst = if k < random {
            let depth = 1 + k % 3;
            sweep.depths[depth - 1] += 1;
            random_instance(&mut rng, depth)
        } else {
            sweep.benchmark_instances += 1;
            benchmark_instance(&mut rng)
        };
        let i = rng.gen_range(0..inst.graph.node_count());
        let pass = inst.gnn.forward(&inst.graph, &inst.weights, &inst.inputs).unwrap();
        let jac = inst.gnn.jacobians(&inst.graph, &inst.weights, &pass, i).unwrap();
        for (j, block) in jac.iter() {
            let fd = central_difference(&inst.gnn, &inst.graph, &inst.weights, &inst.inputs, i, j, step);
            let err = (block - &fd).norm() / block.norm().max(fd.norm()).max(1e-8);
            sweep.max_relative_error = sweep.max_relative_error.max(err);
            sweep.blocks += 1;
        }
        sweep.instances += 1;
    }
    sweep
}

/// Number of `(graph, permutation)` draws for which the permuted forward
/// pass reproduced the permuted outputs bit for bit.
pub fn equivariance_sweep(seed: u64, draws: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    for k in 0..draws {
        let mut inst = random_instance(&mut rng, 1 + k % 3);
        if inst.graph.node_count() < 2 {
            let (graph, _) = random_connected_graph(&mut rng, 5, 0.4);
            inst = finish_instance(&mut rng, graph, inst.gnn);
        }
        let n = inst.graph.node_count();
        let mut mapping: Vec<usize> = (0..n).collect();
        mapping.shuffle(&mut rng);
        let perm = Permutation::new(mapping).unwrap();
        let out = inst.gnn.forward(&inst.graph, &inst.weights, &inst.inputs).unwrap();
        let g2 = inst.graph.permute(&perm).unwrap();
        let out2 = inst
            .gnn
            .forward(
                &g2,
                &perm.permute_items(&inst.weights).unwrap(),
                &perm.permute_items(&inst.inputs).unwrap(),
            )
            .unwrap();
        let same = (0..n).all(|i| {
            let a = &out.outputs()[i];
            let b = &out2.outputs()[perm.apply(i)];
            a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
        });
        passed += usize::from(same);
    }
    passed
}

fn random_direction<R: Rng>(rng: &mut R, p: usize) -> DVector<f64> {
    loop {
        let v = random_vector(rng, p, 1.0);
        if v.norm() > 1e-3 {
            return v.normalize();
        }
    }
}

fn random_gamma<R: Rng>(rng: &mut R, p: usize) -> (GainMatrix, DVector<f64>) {
    if rng.gen_bool(0.5) {
        let s = rng.gen_range(0.1..50.0);
        (GainMatrix::Scalar(s), DVector::from_element(p, 1.0 / s))
    } else {
        let d = DVector::from_fn(p, |_, _| rng.gen_range(0.1..50.0));
        let inv = d.map(|x| 1.0 / x);
        (GainMatrix::Full(DMatrix::from_diagonal(&d)), inv)
    }
}

/// Interior draws whose projection differs from the candidate.
pub fn transparency_failures(seed: u64, samples: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = Projection::new(10.0, 0.1);
    let mut failures = 0;
    for _ in 0..samples {
        let p = rng.gen_range(1..=40);
        let theta = random_direction(&mut rng, p) * rng.gen_range(0.0..0.999 * proj.radius);
        let scale = 10f64.powf(rng.gen_range(-3.0..4.0));
        let nu = random_vector(&mut rng, p, scale);
        let (gamma, _) = random_gamma(&mut rng, p);
        if proj.project(&theta, &nu, &gamma).unwrap() != nu {
            failures += 1;
        }
    }
    failures
}

/// `(violations, active draws, smallest normalized value)` of
/// `(theta* - theta)ᵀ Γ⁻¹ (proj(nu) - nu) >= 0` over random triples with
/// `theta*` in the ball and `theta` in the inflated ball.
pub fn damping_violations(seed: u64, samples: usize) -> (usize, usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let proj = Projection::new(10.0, 0.1);
    let mut violations = 0;
    let mut active = 0;
    let mut smallest = f64::INFINITY;
    for k in 0..samples {
        let p = if k % 10 == 0 { 227 } else { rng.gen_range(1..=40) };
        // Most draws land in the boundary layer where the operator acts.
        let radius = if rng.gen_bool(0.8) {
            rng.gen_range(proj.radius..=proj.limit())
        } else {
            rng.gen_range(0.0..proj.radius)
        };
        let theta = random_direction(&mut rng, p) * radius;
        let star = random_direction(&mut rng, p) * rng.gen_range(0.0..=proj.radius);
        let scale = 10f64.powf(rng.gen_range(-3.0..4.0));
        let nu = random_vector(&mut rng, p, scale);
        let (gamma, inv) = random_gamma(&mut rng, p);
        let out = proj.project(&theta, &nu, &gamma).unwrap();
        let delta = &out - &nu;
        if delta.norm() > 0.0 {
            active += 1;
        }
        let value: f64 = (0..p).map(|q| (star[q] - theta[q]) * inv[q] * delta[q]).sum();
        let scale = (&star - &theta).norm() * inv.amax() * delta.norm();
        let normalized = if scale > 0.0 { value / scale } else { 0.0 };
        smallest = smallest.min(normalized);
        if normalized < -1e-12 {
            violations += 1;
        }
    }
    (violations, active, smallest)
}

#[derive(Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub cases: usize,
    pub max_relative_error: f64,
}

fn gains(k1: f64, k2: f64, k3: f64, gamma: f64) -> Gains {
    Gains {
        k1,
        k2,
        k3,
        gamma: GainMatrix::Scalar(gamma),
        theta_bar: 10.0,
        projection_layer: 0.1,
        eps1: 0.1,
        lambda4: 0.01,
    }
}

/// Library formulas against the straight-line oracle on `cases` random
/// states each.
pub fn formula_fixtures(seed: u64, cases: usize) -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 5];
    let dynamics = PaperDynamics::new();
    for _ in 0..cases {
        let nodes = rng.gen_range(1..=6);
        let (graph, edges) = random_connected_graph(&mut rng, nodes, 0.4);
        let adj = adjacency(nodes, &edges);
        let i = rng.gen_range(0..nodes);
        let k1 = rng.gen_range(0.5..10.0);
        let k2 = rng.gen_range(0.5..50.0);
        let k3 = rng.gen_range(1e-4..1.0);
        let gamma = rng.gen_range(0.1..10.0);

        // Lumped uncertainty.
        let x0 = random_vector(&mut rng, 3, 10.0);
        let ys: Vec<_> = (0..nodes).map(|_| random_vector(&mut rng, 3, 10.0)).collect();
        let e = random_vector(&mut rng, 3, 2.0);
        let etas: Vec<_> = (0..nodes).map(|_| random_vector(&mut rng, 3, 2.0)).collect();
        let lib = lumped_uncertainty(&dynamics, &graph, k1, i, &x0, &ys, &e, &etas);
        let ys_v: Vec<_> = ys.iter().map(to_vec).collect();
        let etas_v: Vec<_> = etas.iter().map(to_vec).collect();
        let oracle = true_f_oracle(&adj, k1, i, &to_vec(&x0), &ys_v, &to_vec(&e), &etas_v);
        worst[0] = worst[0].max(relative(&to_vec(&lib), &oracle));

        // Controller and update law with arbitrary Jacobian blocks.
        let depth = rng.gen_range(1..=3);
        let (d_out, p) = (rng.gen_range(1..=4), rng.gen_range(1..=30));
        let mut reach = within_hops(&adj, i, depth - 1);
        reach.push(i);
        let blocks: Vec<Option<DMatrix<f64>>> = (0..nodes)
            .map(|j| reach.contains(&j).then(|| DMatrix::from_fn(d_out, p, |_, _| rng.gen_range(-2.0..2.0))))
            .collect();
        let jac = NodeJacobians::from_blocks(i, blocks.clone());
        let rows: Vec<Option<Matrix>> = blocks.iter().map(|b| b.as_ref().map(to_rows)).collect();
        let thetas: Vec<_> = (0..nodes).map(|_| random_vector(&mut rng, p, 3.0)).collect();
        let thetas_v: Vec<_> = thetas.iter().map(to_vec).collect();
        let eta = random_vector(&mut rng, d_out, 2.0);
        let phi = random_vector(&mut rng, d_out, 1.0);
        let xd_dot = random_vector(&mut rng, d_out, 0.5);
        let g = gains(k1, k2, k3, gamma);
        let u = control_input(&graph, depth, i, &eta, &phi, &jac, &thetas, &xd_dot, &g).unwrap();
        let u_oracle = control_oracle(
            &adj,
            depth,
            i,
            k1,
            k2,
            &to_vec(&eta),
            &to_vec(&phi),
            &rows,
            &thetas_v,
            &to_vec(&xd_dot),
        );
        worst[1] = worst[1].max(relative(&to_vec(&u), &u_oracle));
        let upd = raw_update(&graph, depth, i, &eta, &jac, &thetas, &GainMatrix::Scalar(gamma), k3).unwrap();
        let upd_oracle = raw_update_oracle(&adj, depth, i, &to_vec(&eta), &rows, &thetas_v, gamma, k3);
        worst[2] = worst[2].max(relative(&to_vec(&upd), &upd_oracle));

        // Analysis constants.
        let params = AnalysisParams {
            gain_bound: rng.gen_range(0.01..1.0),
            drift_bound: rng.gen_range(0.0..1.0),
            position_bound: rng.gen_range(1.0..20.0),
            velocity_bound: rng.gen_range(0.0..2.0),
            reconstruction_bound: rng.gen_range(0.0..3.0),
            theta_bar: rng.gen_range(1.0..20.0),
            nodes: rng.gen_range(1..=10),
            k1,
            k2,
            k3,
            eps1: rng.gen_range(0.01..1.0),
            lambda4: rng.gen_range(0.001..0.1),
        };
        let ups = upsilon(&params);
        let ups_oracle = upsilon_oracle(
            params.reconstruction_bound,
            params.k2,
            params.velocity_bound,
            params.gain_bound,
            params.nodes as f64,
            params.drift_bound,
            params.eps1,
            params.k3,
            params.theta_bar,
        );
        worst[3] = worst[3].max(scalar_relative(ups, ups_oracle));
        let (l1, l2) = (rng.gen_range(0.01..0.5), rng.gen_range(0.5..5.0));
        let z0 = rng.gen_range(0.0..50.0);
        let elapsed = rng.gen_range(0.0..500.0);
        let env = theorem_envelope(l1, l2, params.lambda4, ups, z0, elapsed);
        let env_oracle = envelope_oracle(l1, l2, params.lambda4, ups, z0, elapsed);
        worst[4] = worst[4].max(scalar_relative(env, env_oracle));
    }
    ["true_F", "control_input", "raw_update", "upsilon", "theorem_envelope"]
        .iter()
        .zip(worst)
        .map(|(&name, max_relative_error)| Fixture {
            name,
            cases,
            max_relative_error,
        })
        .collect()
}
