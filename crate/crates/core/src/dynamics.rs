//! Ground-truth plant: target drift and interaction, influencer interaction,
//! and the lumped uncertainty each influencer's GNN is trying to learn.
//!
//! The controller never calls into this module. Only the simulator (to
//! integrate the plant) and the metrics (to score the GNN) do.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Influencer states restricted to the augmented neighborhood of one node,
/// i.e. the masked stack `Q_i`.
#[derive(Debug, Clone, Copy)]
pub struct Neighborhood<'a> {
    owner: usize,
    graph: &'a Graph,
    states: &'a [DVector<f64>],
}

impl<'a> Neighborhood<'a> {
    pub fn new(graph: &'a Graph, owner: usize, states: &'a [DVector<f64>]) -> Self {
        Self { owner, graph, states }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn own_state(&self) -> &'a DVector<f64> {
        &self.states[self.owner]
    }

    /// `(j, y_j)` for the one-hop neighbors, ascending.
    pub fn neighbors(&self) -> impl Iterator<Item = (usize, &'a DVector<f64>)> + 'a {
        let states = self.states;
        self.graph.neighbors(self.owner).iter().map(move |&j| (j, &states[j]))
    }

    /// `y_m` if `m` is in the augmented neighborhood.
    pub fn get(&self, m: usize) -> Option<&'a DVector<f64>> {
        (m == self.owner || self.graph.contains_edge(self.owner, m)).then(|| &self.states[m])
    }

    /// `Q_i`: all `N` blocks, zero outside the augmented neighborhood.
    pub fn masked_stack(&self) -> DVector<f64> {
        let n = self.states.first().map_or(0, DVector::len);
        let mut out = DVector::zeros(n * self.states.len());
        for m in 0..self.states.len() {
            if let Some(y) = self.get(m) {
                out.rows_mut(m * n, n).copy_from(y);
            }
        }
        out
    }
}

/// Unknown plant functions. Implementations must be pure apart from
/// diagnostic counters.
pub trait Dynamics: Send + Sync + fmt::Debug {
    /// `g(x0, y)`, scalar gain in 1/s.
    fn interaction_gain(&self, x0: &DVector<f64>, y: &DVector<f64>) -> f64;

    /// `h(x0)` in m/s.
    fn drift(&self, x0: &DVector<f64>) -> DVector<f64>;

    /// `f(Q_i)` in m/s.
    fn influencer_interaction(&self, q: &Neighborhood<'_>) -> DVector<f64>;

    /// `ḡ` with `|g| <= ḡ`.
    fn gain_bound(&self) -> f64;

    /// `h̄` with `|h| <= h̄`.
    fn drift_bound(&self) -> f64;

    /// Number of times a singularity guard replaced an exact value.
    fn guard_hits(&self) -> u64 {
        0
    }
}

/// The three-dimensional benchmark plant: Gaussian-weighted repulsion of the
/// target, inverse-square repulsion among influencers, bounded periodic drift.
#[derive(Debug)]
pub struct PaperDynamics {
    pub gain_bound: f64,
    pub drift_bound: f64,
    /// Floor on `|y_i - y_j|^3` in m^3.
    pub min_cubed_distance: f64,
    guard_hits: AtomicU64,
}

impl PaperDynamics {
    pub const GAIN: f64 = 0.1;
    pub const GAIN_LENGTH_SQ: f64 = 1.0e6;
    pub const REPULSION: f64 = 50.0;
    pub const DRIFT: [f64; 3] = [0.057, 0.03, 0.008];

    pub fn new() -> Self {
        Self {
            gain_bound: Self::GAIN,
            // sqrt(0.057^2 + 0.03^2 + 0.008^2) = 0.0649..., rounded up.
            drift_bound: 0.065,
            min_cubed_distance: 1e-6,
            guard_hits: AtomicU64::new(0),
        }
    }

    pub fn with_bounds(mut self, gain_bound: f64, drift_bound: f64) -> Self {
        self.gain_bound = gain_bound;
        self.drift_bound = drift_bound;
        self
    }
}

impl Default for PaperDynamics {
    fn default() -> Self {
        Self::new()
    }
}

impl Dynamics for PaperDynamics {
    fn interaction_gain(&self, x0: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let d = x0 - y;
        Self::GAIN * (-d.dot(&d) / Self::GAIN_LENGTH_SQ).exp()
    }

    fn drift(&self, x0: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x0.len(), 3, "the published drift is three-dimensional");
        DVector::from_vec(vec![
            -Self::DRIFT[0] * x0[0].cos(),
            Self::DRIFT[1] * x0[1].sin(),
            -Self::DRIFT[2] * x0[2].cos(),
        ])
    }

    fn influencer_interaction(&self, q: &Neighborhood<'_>) -> DVector<f64> {
        let yi = q.own_state();
        let mut out = DVector::zeros(yi.len());
        for (_, yj) in q.neighbors() {
            let d = yi - yj;
            let cubed = d.norm().powi(3);
            let denom = if cubed < self.min_cubed_distance {
                self.guard_hits.fetch_add(1, Ordering::Relaxed);
                self.min_cubed_distance
            } else {
                cubed
            };
            out += d * (Self::REPULSION / denom);
        }
        out
    }

    fn gain_bound(&self) -> f64 {
        self.gain_bound
    }

    fn drift_bound(&self) -> f64 {
        self.drift_bound
    }

    fn guard_hits(&self) -> u64 {
        self.guard_hits.load(Ordering::Relaxed)
    }
}

/// `g = h = f = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDynamics;

impl Dynamics for NoDynamics {
    fn interaction_gain(&self, _x0: &DVector<f64>, _y: &DVector<f64>) -> f64 {
        0.0
    }

    fn drift(&self, x0: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x0.len())
    }

    fn influencer_interaction(&self, q: &Neighborhood<'_>) -> DVector<f64> {
        DVector::zeros(q.own_state().len())
    }

    fn gain_bound(&self) -> f64 {
        0.0
    }

    fn drift_bound(&self) -> f64 {
        0.0
    }
}

/// `x0' = h(x0) + sum_i g(x0, y_i) (x0 - y_i)`.
pub fn target_derivative(dynamics: &dyn Dynamics, x0: &DVector<f64>, ys: &[DVector<f64>]) -> DVector<f64> {
    let mut out = dynamics.drift(x0);
    debug_assert!(out.norm() <= dynamics.drift_bound() * (1.0 + 1e-9) + 1e-12);
    for y in ys {
        let g = dynamics.interaction_gain(x0, y);
        debug_assert!(g.abs() <= dynamics.gain_bound() * (1.0 + 1e-9) + 1e-12);
        out += (x0 - y) * g;
    }
    out
}

/// `y_i' = f(Q_i) + u_i`.
pub fn influencer_derivative(
    dynamics: &dyn Dynamics,
    graph: &Graph,
    i: usize,
    ys: &[DVector<f64>],
    control: &DVector<f64>,
) -> DVector<f64> {
    dynamics.influencer_interaction(&Neighborhood::new(graph, i, ys)) + control
}

/// GNN input `R_i = [x0; Q_i]` of length `n (N + 1)`.
pub fn node_input(graph: &Graph, i: usize, x0: &DVector<f64>, ys: &[DVector<f64>]) -> DVector<f64> {
    let q = Neighborhood::new(graph, i, ys).masked_stack();
    let mut out = DVector::zeros(x0.len() + q.len());
    out.rows_mut(0, x0.len()).copy_from(x0);
    out.rows_mut(x0.len(), q.len()).copy_from(&q);
    out
}

/// Lumped unknown dynamics at node `i`:
///
/// `F(R_i) = k1 h(x0) - f(Q_i) + sum_{j in N̄_i} k1 g(x0, y_j) (eta_j + (1 - k1) e)`.
#[allow(clippy::too_many_arguments)]
pub fn lumped_uncertainty(
    dynamics: &dyn Dynamics,
    graph: &Graph,
    k1: f64,
    i: usize,
    x0: &DVector<f64>,
    ys: &[DVector<f64>],
    tracking_error: &DVector<f64>,
    backstepping_errors: &[DVector<f64>],
) -> DVector<f64> {
    let mut out = dynamics.drift(x0) * k1 - dynamics.influencer_interaction(&Neighborhood::new(graph, i, ys));
    let lagged = tracking_error * (1.0 - k1);
    for j in graph.augmented_neighbors(i) {
        let g = dynamics.interaction_gain(x0, &ys[j]);
        out += (&backstepping_errors[j] + &lagged) * (k1 * g);
    }
    out
}

/// `H(R)`: [`lumped_uncertainty`] stacked over all nodes.
pub fn lumped_uncertainty_stack(
    dynamics: &dyn Dynamics,
    graph: &Graph,
    k1: f64,
    x0: &DVector<f64>,
    ys: &[DVector<f64>],
    tracking_error: &DVector<f64>,
    backstepping_errors: &[DVector<f64>],
) -> DVector<f64> {
    let n = x0.len();
    let mut out = DVector::zeros(n * ys.len());
    for i in 0..ys.len() {
        let f = lumped_uncertainty(dynamics, graph, k1, i, x0, ys, tracking_error, backstepping_errors);
        out.rows_mut(i * n, n).copy_from(&f);
    }
    out
}

type Factory = Arc<dyn Fn() -> Arc<dyn Dynamics> + Send + Sync>;

/// Named plant models selectable from scenario files.
#[derive(Clone)]
pub struct DynamicsRegistry {
    factories: BTreeMap<String, Factory>,
}

impl fmt::Debug for DynamicsRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.factories.keys()).finish()
    }
}

impl Default for DynamicsRegistry {
    fn default() -> Self {
        let mut reg = Self {
            factories: BTreeMap::new(),
        };
        reg.register("paper", || Arc::new(PaperDynamics::new()));
        reg.register("none", || Arc::new(NoDynamics));
        reg
    }
}

impl DynamicsRegistry {
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn() -> Arc<dyn Dynamics> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_owned(), Arc::new(factory));
    }

    pub fn create(&self, name: &str) -> Result<Arc<dyn Dynamics>> {
        self.factories
            .get(name)
            .map(|f| f())
            .ok_or_else(|| Error::UnknownModel {
                kind: "dynamics",
                name: name.to_owned(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }
}
