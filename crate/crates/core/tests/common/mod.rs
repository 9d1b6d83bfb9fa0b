//! Straight-line reference arithmetic shared by the integration tests.
//!
//! Everything here works on plain `Vec<f64>` with explicit loops and reads
//! nothing from the library except the random helpers at the bottom. Keep it
//! that way: these functions are the yardstick the library is measured
//! against.

#![allow(dead_code)]

pub mod checks;

use lbgnn::graph::Graph;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub type Vector = Vec<f64>;
/// Row-major `rows x cols`.
pub type Matrix = Vec<Vec<f64>>;

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn relative(a: &[f64], b: &[f64]) -> f64 {
    let mut diff = 0.0;
    for k in 0..a.len() {
        diff += (a[k] - b[k]) * (a[k] - b[k]);
    }
    diff.sqrt() / norm(b).max(1e-300)
}

pub fn scalar_relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Adjacency as booleans, `adj[i][j]`.
pub fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    adj
}

/// Nodes at hop distance `1..=k` from `i` (excludes `i`), by repeated
/// frontier expansion.
pub fn within_hops(adj: &[Vec<bool>], i: usize, k: usize) -> Vec<usize> {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    dist[i] = 0;
    for level in 0..k {
        for a in 0..n {
            if dist[a] == level {
                for b in 0..n {
                    if adj[a][b] && dist[b] == usize::MAX {
                        dist[b] = level + 1;
                    }
                }
            }
        }
    }
    (0..n).filter(|&j| j != i && dist[j] != usize::MAX).collect()
}

pub fn g_oracle(x0: &[f64], y: &[f64]) -> f64 {
    let mut d2 = 0.0;
    for k in 0..x0.len() {
        d2 += (x0[k] - y[k]) * (x0[k] - y[k]);
    }
    0.1 * (-d2 / 1.0e6).exp()
}

pub fn h_oracle(x0: &[f64]) -> Vector {
    vec![-0.057 * x0[0].cos(), 0.03 * x0[1].sin(), -0.008 * x0[2].cos()]
}

pub fn f_oracle(adj: &[Vec<bool>], i: usize, ys: &[Vector]) -> Vector {
    let n = ys[i].len();
    let mut out = vec![0.0; n];
    for j in 0..ys.len() {
        if j == i || !adj[i][j] {
            continue;
        }
        let mut d2 = 0.0;
        for k in 0..n {
            d2 += (ys[i][k] - ys[j][k]) * (ys[i][k] - ys[j][k]);
        }
        let cubed = (d2.sqrt()).powi(3).max(1e-6);
        for k in 0..n {
            out[k] += 50.0 * (ys[i][k] - ys[j][k]) / cubed;
        }
    }
    out
}

/// `F(R_i) = k1 h - f_i + sum_{j in N_i ∪ {i}} k1 g_j (eta_j + (1 - k1) e)`.
pub fn true_f_oracle(
    adj: &[Vec<bool>],
    k1: f64,
    i: usize,
    x0: &[f64],
    ys: &[Vector],
    e: &[f64],
    etas: &[Vector],
) -> Vector {
    let n = x0.len();
    let h = h_oracle(x0);
    let f = f_oracle(adj, i, ys);
    let mut out = vec![0.0; n];
    for k in 0..n {
        out[k] = k1 * h[k] - f[k];
    }
    for j in 0..ys.len() {
        if j != i && !adj[i][j] {
            continue;
        }
        let g = g_oracle(x0, &ys[j]);
        for k in 0..n {
            out[k] += k1 * g * (etas[j][k] + (1.0 - k1) * e[k]);
        }
    }
    out
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vector {
    let mut out = vec![0.0; m.len()];
    for r in 0..m.len() {
        for c in 0..v.len() {
            out[r] += m[r][c] * v[c];
        }
    }
    out
}

fn mat_t_vec(m: &Matrix, v: &[f64]) -> Vector {
    let cols = m[0].len();
    let mut out = vec![0.0; cols];
    for r in 0..m.len() {
        for c in 0..cols {
            out[c] += m[r][c] * v[r];
        }
    }
    out
}

/// `u_i = k2 eta + phi + sum_{j within depth-1 hops, j != i} J_j (theta_i - theta_j) + (1 - k1) xd'`.
#[allow(clippy::too_many_arguments)]
pub fn control_oracle(
    adj: &[Vec<bool>],
    depth: usize,
    i: usize,
    k1: f64,
    k2: f64,
    eta: &[f64],
    phi: &[f64],
    jac: &[Option<Matrix>],
    thetas: &[Vector],
    xd_dot: &[f64],
) -> Vector {
    let n = eta.len();
    let mut u = vec![0.0; n];
    for k in 0..n {
        u[k] = k2 * eta[k] + phi[k] + (1.0 - k1) * xd_dot[k];
    }
    for j in within_hops(adj, i, depth - 1) {
        let mut diff = vec![0.0; thetas[i].len()];
        for q in 0..diff.len() {
            diff[q] = thetas[i][q] - thetas[j][q];
        }
        let term = mat_vec(jac[j].as_ref().unwrap(), &diff);
        for k in 0..n {
            u[k] += term[k];
        }
    }
    u
}

/// `gamma [ sum_{j in {i} ∪ hops} J_jᵀ eta - k3 (sum_{j in N_i} (theta_i - theta_j) + theta_i) ]`.
#[allow(clippy::too_many_arguments)]
pub fn raw_update_oracle(
    adj: &[Vec<bool>],
    depth: usize,
    i: usize,
    eta: &[f64],
    jac: &[Option<Matrix>],
    thetas: &[Vector],
    gamma: f64,
    k3: f64,
) -> Vector {
    let p = thetas[i].len();
    let mut members = within_hops(adj, i, depth - 1);
    members.push(i);
    let mut out = vec![0.0; p];
    for j in members {
        let term = mat_t_vec(jac[j].as_ref().unwrap(), eta);
        for q in 0..p {
            out[q] += term[q];
        }
    }
    for q in 0..p {
        let mut leak = thetas[i][q];
        for j in 0..thetas.len() {
            if j != i && adj[i][j] {
                leak += thetas[i][q] - thetas[j][q];
            }
        }
        out[q] = gamma * (out[q] - k3 * leak);
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn upsilon_oracle(
    eps_bar: f64,
    k2: f64,
    xd_dot_bar: f64,
    g_bar: f64,
    nodes: f64,
    h_bar: f64,
    eps1: f64,
    k3: f64,
    theta_bar: f64,
) -> f64 {
    let a = eps_bar * eps_bar / k2;
    let b = xd_dot_bar * xd_dot_bar / (2.0 * g_bar * nodes);
    let c = h_bar * h_bar / (2.0 * eps1);
    let d = (2.0 * nodes + 1.0) * (2.0 * nodes + 1.0) * k3 * theta_bar * theta_bar * nodes / 2.0;
    a + b + c + d
}

pub fn envelope_oracle(l1: f64, l2: f64, l4: f64, ups: f64, z0: f64, dt: f64) -> f64 {
    let inner = z0 * z0 * (-(l4 / l2) * dt).exp() + (ups / l4) * (1.0 - (-(l4 / l2) * dt).exp());
    (l2 / l1 * inner).sqrt()
}

// Conversions and random helpers.

pub fn to_vec(v: &DVector<f64>) -> Vector {
    v.iter().copied().collect()
}

pub fn to_rows(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

pub fn random_vector<R: Rng>(rng: &mut R, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-scale..scale))
}

/// Connected graph: a random spanning tree plus each remaining pair with
/// probability `extra`.
pub fn random_connected_graph<R: Rng>(rng: &mut R, nodes: usize, extra: f64) -> (Graph, Vec<(usize, usize)>) {
    let mut edges = Vec::new();
    for v in 1..nodes {
        edges.push((rng.gen_range(0..v), v));
    }
    for a in 0..nodes {
        for b in a + 1..nodes {
            if !edges.contains(&(a, b)) && rng.gen_bool(extra) {
                edges.push((a, b));
            }
        }
    }
    (Graph::new(nodes, &edges).unwrap(), edges)
}
