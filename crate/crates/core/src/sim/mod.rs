//! Closed-loop simulation of the target, the influencers and the weight
//! estimates.
//!
//! The ensemble state is one flat vector `[x0; y_1; ...; y_N; theta_1; ...; theta_N]`
//! integrated with fixed-step RK4. Node updates inside one derivative
//! evaluation are sequential, so runs are bitwise reproducible.

pub mod integrator;
pub mod log;
pub mod scenario;

use std::sync::Arc;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adaptation::{update_law, Projection};
use crate::analysis::AnalysisParams;
use crate::controller::{
    backstepping_error, control_input, desired_influencer_position, tracking_error, DesiredTrajectory, Gains,
};
use crate::dynamics::{
    influencer_derivative, lumped_uncertainty, lumped_uncertainty_stack, node_input, target_derivative, Dynamics,
    DynamicsRegistry,
};
use crate::error::{Error, Result};
use crate::gnn::GnnConfig;
use crate::graph::Graph;

pub use integrator::rk4_step;
pub use log::{Metrics, NodeSample, Sample, TrajectoryLog};
pub use scenario::{paper_scenario, ScenarioConfig};

/// Position norm beyond which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Ensemble state at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub t: f64,
    pub data: DVector<f64>,
}

/// Index arithmetic for the flat state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub state_dim: usize,
    pub node_count: usize,
    pub param_count: usize,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        self.state_dim * (self.node_count + 1) + self.param_count * self.node_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pack(&self, x0: &DVector<f64>, ys: &[DVector<f64>], thetas: &[DVector<f64>]) -> Result<DVector<f64>> {
        let (n, p) = (self.state_dim, self.param_count);
        let check = |context, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context,
                    expected,
                    actual,
                })
            }
        };
        check("target state", n, x0.len())?;
        check("influencer count", self.node_count, ys.len())?;
        check("weight estimate count", self.node_count, thetas.len())?;
        let mut data = DVector::zeros(self.len());
        data.rows_mut(0, n).copy_from(x0);
        for (i, y) in ys.iter().enumerate() {
            check("influencer state", n, y.len())?;
            data.rows_mut(self.influencer_offset(i), n).copy_from(y);
        }
        for (i, th) in thetas.iter().enumerate() {
            check("weight estimate", p, th.len())?;
            data.rows_mut(self.weight_offset(i), p).copy_from(th);
        }
        Ok(data)
    }

    pub fn influencer_offset(&self, i: usize) -> usize {
        self.state_dim * (1 + i)
    }

    pub fn weight_offset(&self, i: usize) -> usize {
        self.state_dim * (1 + self.node_count) + self.param_count * i
    }

    pub fn target(&self, data: &DVector<f64>) -> DVector<f64> {
        data.rows(0, self.state_dim).into_owned()
    }

    pub fn influencers(&self, data: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.node_count)
            .map(|i| data.rows(self.influencer_offset(i), self.state_dim).into_owned())
            .collect()
    }

    pub fn weights(&self, data: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.node_count)
            .map(|i| data.rows(self.weight_offset(i), self.param_count).into_owned())
            .collect()
    }
}

/// Every signal produced by one derivative evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub desired: DVector<f64>,
    pub desired_velocity: DVector<f64>,
    pub tracking_error: DVector<f64>,
    /// `y_d`, shared by every influencer.
    pub desired_influencer: DVector<f64>,
    pub backstepping_errors: Vec<DVector<f64>>,
    /// GNN outputs `phi_hat_i`.
    pub estimates: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    pub derivative: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub dt: f64,
    pub horizon: f64,
    pub decimation: usize,
    pub settle_time: f64,
}

impl RunSettings {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            dt: cfg.integrator.dt,
            horizon: cfg.integrator.horizon,
            decimation: cfg.logging.decimation,
            settle_time: cfg.logging.settle_time,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub log: TrajectoryLog,
    pub metrics: Metrics,
    pub final_state: EnsembleState,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    graph: Graph,
    gnn: GnnConfig,
    gains: Gains,
    projection: Projection,
    dynamics: Arc<dyn Dynamics>,
    trajectory: Arc<dyn DesiredTrajectory>,
    layout: StateLayout,
}

impl Simulator {
    pub fn new(
        graph: Graph,
        gnn: GnnConfig,
        gains: Gains,
        dynamics: Arc<dyn Dynamics>,
        trajectory: Arc<dyn DesiredTrajectory>,
    ) -> Result<Self> {
        let n = gnn.output_dim();
        if gnn.input_dim() != n * (graph.node_count() + 1) {
            return Err(Error::Dimension {
                context: "GNN input width n (N + 1)",
                expected: n * (graph.node_count() + 1),
                actual: gnn.input_dim(),
            });
        }
        gains.validate(gnn.param_count())?;
        let layout = StateLayout {
            state_dim: n,
            node_count: graph.node_count(),
            param_count: gnn.param_count(),
        };
        Ok(Self {
            projection: Projection::from_gains(&gains),
            graph,
            gnn,
            gains,
            dynamics,
            trajectory,
            layout,
        })
    }

    pub fn from_config(cfg: &ScenarioConfig, registry: &DynamicsRegistry) -> Result<Self> {
        cfg.validate()?;
        Self::new(
            cfg.build_graph()?,
            cfg.build_gnn()?,
            cfg.build_gains(),
            cfg.build_dynamics(registry)?,
            cfg.build_trajectory()?,
        )
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn gnn(&self) -> &GnnConfig {
        &self.gnn
    }

    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn trajectory(&self) -> &dyn DesiredTrajectory {
        self.trajectory.as_ref()
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    /// Inputs to the gain analysis for this plant and reference.
    pub fn analysis_params(&self, reconstruction_bound: f64) -> AnalysisParams {
        AnalysisParams {
            gain_bound: self.dynamics.gain_bound(),
            drift_bound: self.dynamics.drift_bound(),
            position_bound: self.trajectory.position_bound(),
            velocity_bound: self.trajectory.velocity_bound(),
            reconstruction_bound,
            theta_bar: self.gains.theta_bar,
            nodes: self.graph.node_count(),
            k1: self.gains.k1,
            k2: self.gains.k2,
            k3: self.gains.k3,
            eps1: self.gains.eps1,
            lambda4: self.gains.lambda4,
        }
    }

    /// Initial weights: each node's vector drawn uniformly from
    /// `[low, high)` with one ChaCha8 stream seeded by `seed`, node 1 first.
    pub fn initial_weights(&self, seed: u64, low: f64, high: f64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.layout.node_count)
            .map(|_| self.gnn.uniform_weights(&mut rng, low, high))
            .collect()
    }

    pub fn initial_state(&self, x0: &DVector<f64>, ys: &[DVector<f64>], thetas: &[DVector<f64>]) -> Result<EnsembleState> {
        for th in thetas {
            if th.norm() > self.gains.theta_bar {
                return Err(Error::OutsideSearchSpace {
                    norm: th.norm(),
                    limit: self.gains.theta_bar,
                });
            }
        }
        Ok(EnsembleState {
            t: 0.0,
            data: self.layout.pack(x0, ys, thetas)?,
        })
    }

    /// Initial state described by a scenario file.
    pub fn scenario_state(&self, cfg: &ScenarioConfig) -> Result<EnsembleState> {
        let x0 = DVector::from_vec(cfg.initial.target.clone());
        let ys: Vec<_> = cfg.initial.influencers.iter().map(|y| DVector::from_vec(y.clone())).collect();
        let thetas = self.initial_weights(cfg.weights.seed, cfg.weights.low, cfg.weights.high);
        self.initial_state(&x0, &ys, &thetas)
    }

    /// Evaluates the closed loop at `(t, data)`.
    pub fn evaluate(&self, t: f64, data: &DVector<f64>) -> Result<Evaluation> {
        let layout = self.layout;
        if data.len() != layout.len() {
            return Err(Error::Dimension {
                context: "ensemble state",
                expected: layout.len(),
                actual: data.len(),
            });
        }
        let n = layout.state_dim;
        let nodes = layout.node_count;
        let p = layout.param_count;
        let x0 = layout.target(data);
        let ys = layout.influencers(data);
        let thetas = layout.weights(data);

        let desired = self.trajectory.position(t);
        let desired_velocity = self.trajectory.velocity(t);
        let e = tracking_error(&x0, &desired);
        let yd = desired_influencer_position(&e, &desired, self.gains.k1);
        let etas: Vec<_> = ys.iter().map(|y| backstepping_error(&yd, y)).collect();

        let inputs: Vec<_> = (0..nodes).map(|i| node_input(&self.graph, i, &x0, &ys)).collect();
        let pass = self.gnn.forward(&self.graph, &thetas, &inputs)?;
        let depth = self.gnn.depth();

        let mut derivative = DVector::zeros(layout.len());
        derivative
            .rows_mut(0, n)
            .copy_from(&target_derivative(self.dynamics.as_ref(), &x0, &ys));
        let mut controls = Vec::with_capacity(nodes);
        for i in 0..nodes {
            let jac = self.gnn.jacobians(&self.graph, &thetas, &pass, i)?;
            let phi = &pass.outputs()[i];
            let u = control_input(&self.graph, depth, i, &etas[i], phi, &jac, &thetas, &desired_velocity, &self.gains)?;
            let theta_dot = update_law(&self.graph, depth, i, &etas[i], &jac, &thetas, &self.gains)?;
            let y_dot = influencer_derivative(self.dynamics.as_ref(), &self.graph, i, &ys, &u);
            derivative.rows_mut(layout.influencer_offset(i), n).copy_from(&y_dot);
            derivative.rows_mut(layout.weight_offset(i), p).copy_from(&theta_dot);
            controls.push(u);
        }
        if !derivative.iter().all(|v| v.is_finite()) {
            return Err(self.divergence(t, data));
        }
        Ok(Evaluation {
            desired,
            desired_velocity,
            tracking_error: e,
            desired_influencer: yd,
            backstepping_errors: etas,
            estimates: pass.into_outputs(),
            controls,
            derivative,
        })
    }

    pub fn derivative(&self, t: f64, data: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.evaluate(t, data)?.derivative)
    }

    /// `phi_hat_i - F(R_i)` for every node.
    pub fn approximation_errors(&self, data: &DVector<f64>, eval: &Evaluation) -> Vec<DVector<f64>> {
        let x0 = self.layout.target(data);
        let ys = self.layout.influencers(data);
        (0..self.layout.node_count)
            .map(|i| {
                let truth = lumped_uncertainty(
                    self.dynamics.as_ref(),
                    &self.graph,
                    self.gains.k1,
                    i,
                    &x0,
                    &ys,
                    &eval.tracking_error,
                    &eval.backstepping_errors,
                );
                &eval.estimates[i] - truth
            })
            .collect()
    }

    /// `Phi(R, theta) - H(R)` as one stacked vector.
    pub fn approximation_error_stack(&self, data: &DVector<f64>, eval: &Evaluation) -> DVector<f64> {
        let x0 = self.layout.target(data);
        let ys = self.layout.influencers(data);
        let truth = lumped_uncertainty_stack(
            self.dynamics.as_ref(),
            &self.graph,
            self.gains.k1,
            &x0,
            &ys,
            &eval.tracking_error,
            &eval.backstepping_errors,
        );
        let n = self.layout.state_dim;
        let mut phi = DVector::zeros(n * self.layout.node_count);
        for (i, est) in eval.estimates.iter().enumerate() {
            phi.rows_mut(i * n, n).copy_from(est);
        }
        phi - truth
    }

    /// One RK4 step followed by the radial weight clamp. Returns the number
    /// of nodes whose estimate was clamped.
    pub fn step(&self, state: &mut EnsembleState, dt: f64) -> Result<usize> {
        let next = rk4_step(|t, y| self.derivative(t, y), state.t, &state.data, dt)?;
        state.data = next;
        state.t += dt;
        let mut clamped = 0;
        for i in 0..self.layout.node_count {
            let off = self.layout.weight_offset(i);
            let mut theta = state.data.rows(off, self.layout.param_count).into_owned();
            if self.projection.clamp(&mut theta) {
                state.data.rows_mut(off, self.layout.param_count).copy_from(&theta);
                clamped += 1;
            }
        }
        self.check_bounded(state)?;
        Ok(clamped)
    }

    fn check_bounded(&self, state: &EnsembleState) -> Result<()> {
        let x0 = self.layout.target(&state.data);
        let ys = self.layout.influencers(&state.data);
        let finite = state.data.iter().all(|v| v.is_finite());
        if !finite || x0.norm() > DIVERGENCE_LIMIT || ys.iter().any(|y| y.norm() > DIVERGENCE_LIMIT) {
            return Err(self.divergence(state.t, &state.data));
        }
        Ok(())
    }

    fn divergence(&self, time: f64, data: &DVector<f64>) -> Error {
        let max_norm = |v: Vec<DVector<f64>>| v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        Error::Divergence {
            time,
            target_norm: self.layout.target(data).norm(),
            influencer_norm: max_norm(self.layout.influencers(data)),
            weight_norm: max_norm(self.layout.weights(data)),
        }
    }

    fn sample(&self, state: &EnsembleState) -> Result<Sample> {
        let eval = self.evaluate(state.t, &state.data)?;
        let tilde = self.approximation_errors(&state.data, &eval);
        let ys = self.layout.influencers(&state.data);
        let thetas = self.layout.weights(&state.data);
        let nodes = (0..self.layout.node_count)
            .map(|i| NodeSample {
                position: ys[i].clone(),
                control_norm: eval.controls[i].norm(),
                eta_norm: eval.backstepping_errors[i].norm(),
                theta_norm: thetas[i].norm(),
                approximation_error_norm: tilde[i].norm(),
            })
            .collect();
        Ok(Sample {
            t: state.t,
            target: self.layout.target(&state.data),
            desired: eval.desired,
            error_norm: eval.tracking_error.norm(),
            nodes,
        })
    }

    /// Integrates from `initial` over `settings.horizon`. A zero horizon
    /// produces an empty log and undefined averages.
    pub fn run(&self, initial: EnsembleState, settings: &RunSettings) -> Result<RunOutput> {
        let steps = settings.steps();
        let decimation = settings.decimation.max(1);
        let guard_start = self.dynamics.guard_hits();
        let mut log = TrajectoryLog::new(self.layout.state_dim, self.layout.node_count);
        let mut state = initial;
        let t0 = state.t;
        let mut clamp_events = 0u64;
        let mut max_theta = self.max_theta_norm(&state);
        let mut max_late_error: Option<f64> = None;
        let mut track_error = |state: &EnsembleState| {
            if state.t >= settings.settle_time - 1e-9 {
                let e = (self.layout.target(&state.data) - self.trajectory.position(state.t)).norm();
                max_late_error = Some(max_late_error.map_or(e, |m: f64| m.max(e)));
            }
        };

        if steps > 0 {
            track_error(&state);
            log.samples.push(self.sample(&state)?);
        }
        for s in 1..=steps {
            clamp_events += self.step(&mut state, settings.dt)? as u64;
            // Avoid drift from repeated addition.
            state.t = t0 + s as f64 * settings.dt;
            max_theta = max_theta.max(self.max_theta_norm(&state));
            track_error(&state);
            if s % decimation == 0 {
                log.samples.push(self.sample(&state)?);
            }
        }

        let mut metrics = Metrics::from_log(&log);
        metrics.final_time = state.t;
        metrics.settle_time = settings.settle_time;
        metrics.max_error_after_settle = max_late_error;
        metrics.max_theta_norm = max_theta;
        metrics.clamp_events = clamp_events;
        metrics.guard_hits = self.dynamics.guard_hits() - guard_start;
        Ok(RunOutput {
            log,
            metrics,
            final_state: state,
        })
    }

    fn max_theta_norm(&self, state: &EnsembleState) -> f64 {
        self.layout
            .weights(&state.data)
            .iter()
            .map(|th| th.norm())
            .fold(0.0, f64::max)
    }
}

/// Builds and runs a scenario with the default model registry.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    run_with_registry(cfg, &DynamicsRegistry::default())
}

pub fn run_with_registry(cfg: &ScenarioConfig, registry: &DynamicsRegistry) -> Result<RunOutput> {
    let sim = Simulator::from_config(cfg, registry)?;
    let initial = sim.scenario_state(cfg)?;
    sim.run(initial, &RunSettings::from_config(cfg))
}
