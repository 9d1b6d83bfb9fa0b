//! Scenario files.
//!
//! A scenario is a TOML document with a flat, versioned schema. Node labels
//! in `graph.edges` are 1-based. See `configs/paper.toml` for the benchmark
//! scenario written out in full.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controller::{ConstantTrajectory, DesiredTrajectory, GainMatrix, Gains, PaperTrajectory};
use crate::dynamics::{Dynamics, DynamicsRegistry, Neighborhood};
use crate::error::{Error, Result};
use crate::gnn::{Activation, GnnConfig};
use crate::graph::Graph;

pub const SCHEMA_VERSION: u32 = 1;

/// The only supported weight-initialization generator: ChaCha with 8
/// rounds, seeded through `SeedableRng::seed_from_u64`.
pub const WEIGHT_GENERATOR: &str = "chacha8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub graph: GraphSpec,
    pub gnn: GnnSpec,
    pub gains: GainsSpec,
    pub dynamics: DynamicsSpec,
    pub trajectory: TrajectorySpec,
    pub initial: InitialSpec,
    pub weights: WeightInitSpec,
    pub integrator: IntegratorSpec,
    #[serde(default)]
    pub logging: LoggingSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub nodes: usize,
    /// Connect every pair; `edges` must then be empty.
    #[serde(default)]
    pub complete: bool,
    /// 1-based node pairs.
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnnSpec {
    /// Widths of the message-passing layers; the depth is its length.
    pub hidden: Vec<usize>,
    #[serde(default = "default_hidden_activation")]
    pub hidden_activation: Activation,
    #[serde(default = "default_output_activation")]
    pub output_activation: Activation,
}

fn default_hidden_activation() -> Activation {
    Activation::Swish
}

fn default_output_activation() -> Activation {
    Activation::Tanh
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsSpec {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// `Γ = gamma · I`.
    pub gamma: f64,
    pub theta_bar: f64,
    #[serde(default = "default_projection_layer")]
    pub projection_layer: f64,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default = "default_lambda4")]
    pub lambda4: f64,
}

fn default_projection_layer() -> f64 {
    0.1
}

fn default_eps1() -> f64 {
    0.1
}

fn default_lambda4() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    /// Registered model name, `paper` or `none` out of the box.
    pub model: String,
    pub gain_bound: Option<f64>,
    pub drift_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    /// `paper` or `constant`.
    pub model: String,
    /// Set point for `constant`.
    pub point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub target: Vec<f64>,
    pub influencers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightInitSpec {
    #[serde(default = "default_generator")]
    pub generator: String,
    pub seed: u64,
    pub low: f64,
    pub high: f64,
}

fn default_generator() -> String {
    WEIGHT_GENERATOR.to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    /// Step size in seconds.
    pub dt: f64,
    /// Final time in seconds.
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggingSpec {
    /// Log every `decimation`-th step.
    pub decimation: usize,
    /// Start of the window over which the peak tracking error is reported.
    pub settle_time: f64,
}

impl Default for LoggingSpec {
    fn default() -> Self {
        Self {
            decimation: 20,
            settle_time: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Assumed bound `ε̄` on the GNN reconstruction error.
    pub reconstruction_bound: f64,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            reconstruction_bound: 1.0,
        }
    }
}

/// The four-influencer, three-dimensional benchmark.
pub fn paper_scenario() -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        graph: GraphSpec {
            nodes: 4,
            complete: true,
            edges: Vec::new(),
        },
        gnn: GnnSpec {
            hidden: vec![8, 8],
            hidden_activation: Activation::Swish,
            output_activation: Activation::Tanh,
        },
        gains: GainsSpec {
            k1: 3.5,
            k2: 12.0,
            k3: 0.001,
            gamma: 2.0,
            theta_bar: 10.0,
            projection_layer: 0.1,
            eps1: 0.1,
            lambda4: 0.01,
        },
        dynamics: DynamicsSpec {
            model: "paper".into(),
            gain_bound: None,
            drift_bound: None,
        },
        trajectory: TrajectorySpec {
            model: "paper".into(),
            point: None,
        },
        initial: InitialSpec {
            target: vec![6.0, -4.0, 2.0],
            influencers: vec![
                vec![-6.0, -1.0, 8.0],
                vec![6.0, 4.0, -2.0],
                vec![4.0, -6.0, 1.0],
                vec![-4.0, 6.0, -2.0],
            ],
        },
        weights: WeightInitSpec {
            generator: WEIGHT_GENERATOR.into(),
            seed: 0,
            low: 0.0,
            high: 0.3,
        },
        integrator: IntegratorSpec {
            dt: 0.005,
            horizon: 360.0,
        },
        logging: LoggingSpec::default(),
        analysis: AnalysisSpec::default(),
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario `{}`: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical serialization, so overrides change it.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Position dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.initial.target.len()
    }

    pub fn build_graph(&self) -> Result<Graph> {
        if self.graph.complete {
            if !self.graph.edges.is_empty() {
                return Err(Error::Config("`graph.complete` and `graph.edges` are mutually exclusive".into()));
            }
            return Graph::complete(self.graph.nodes);
        }
        let edges: Vec<_> = self.graph.edges.iter().map(|&[a, b]| (a, b)).collect();
        Graph::from_one_based_edges(self.graph.nodes, &edges)
    }

    pub fn build_gnn(&self) -> Result<GnnConfig> {
        let n = self.state_dim();
        Ok(GnnConfig::new(n * (self.graph.nodes + 1), self.gnn.hidden.clone(), n)?
            .with_hidden_activation(self.gnn.hidden_activation)
            .with_output_activation(self.gnn.output_activation))
    }

    pub fn build_gains(&self) -> Gains {
        let g = &self.gains;
        Gains {
            k1: g.k1,
            k2: g.k2,
            k3: g.k3,
            gamma: GainMatrix::Scalar(g.gamma),
            theta_bar: g.theta_bar,
            projection_layer: g.projection_layer,
            eps1: g.eps1,
            lambda4: g.lambda4,
        }
    }

    pub fn build_dynamics(&self, registry: &DynamicsRegistry) -> Result<Arc<dyn Dynamics>> {
        let inner = registry.create(&self.dynamics.model)?;
        if self.dynamics.gain_bound.is_none() && self.dynamics.drift_bound.is_none() {
            return Ok(inner);
        }
        Ok(Arc::new(BoundsOverride {
            gain_bound: self.dynamics.gain_bound.unwrap_or_else(|| inner.gain_bound()),
            drift_bound: self.dynamics.drift_bound.unwrap_or_else(|| inner.drift_bound()),
            inner,
        }))
    }

    pub fn build_trajectory(&self) -> Result<Arc<dyn DesiredTrajectory>> {
        match self.trajectory.model.as_str() {
            "paper" => {
                if self.state_dim() != 3 {
                    return Err(Error::Config("the `paper` trajectory is three-dimensional".into()));
                }
                Ok(Arc::new(PaperTrajectory))
            }
            "constant" => {
                let point = self
                    .trajectory
                    .point
                    .clone()
                    .unwrap_or_else(|| vec![0.0; self.state_dim()]);
                if point.len() != self.state_dim() {
                    return Err(Error::Config("`trajectory.point` has the wrong dimension".into()));
                }
                Ok(Arc::new(ConstantTrajectory(DVector::from_vec(point))))
            }
            other => Err(Error::UnknownModel {
                kind: "trajectory",
                name: other.to_owned(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let graph = self.build_graph()?;
        if !graph.is_connected() {
            return Err(Error::Config("communication graph must be connected".into()));
        }
        let n = self.state_dim();
        if n == 0 {
            return Err(Error::Config("`initial.target` must not be empty".into()));
        }
        if self.initial.influencers.len() != self.graph.nodes {
            return Err(Error::Config(format!(
                "{} influencer positions given for {} nodes",
                self.initial.influencers.len(),
                self.graph.nodes
            )));
        }
        if self.initial.influencers.iter().any(|y| y.len() != n) {
            return Err(Error::Config("influencer positions must match the target dimension".into()));
        }
        let gnn = self.build_gnn()?;
        self.build_gains().validate(gnn.param_count())?;
        if self.weights.generator != WEIGHT_GENERATOR {
            return Err(Error::Config(format!(
                "unsupported weight generator `{}` (only `{WEIGHT_GENERATOR}`)",
                self.weights.generator
            )));
        }
        if !(self.weights.low <= self.weights.high) {
            return Err(Error::Config("`weights.low` must not exceed `weights.high`".into()));
        }
        let dt = self.integrator.dt;
        let horizon = self.integrator.horizon;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("integrator.dt must be positive, got {dt}")));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) || (horizon > 0.0 && horizon <= dt) {
            return Err(Error::Config(format!(
                "integrator.horizon must be 0 or exceed dt, got {horizon}"
            )));
        }
        if self.logging.decimation == 0 {
            return Err(Error::Config("logging.decimation must be at least 1".into()));
        }
        self.build_trajectory()?;
        Ok(())
    }
}

/// Replaces the declared bounds of another model.
#[derive(Debug)]
struct BoundsOverride {
    inner: Arc<dyn Dynamics>,
    gain_bound: f64,
    drift_bound: f64,
}

impl Dynamics for BoundsOverride {
    fn interaction_gain(&self, x0: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.inner.interaction_gain(x0, y)
    }

    fn drift(&self, x0: &DVector<f64>) -> DVector<f64> {
        self.inner.drift(x0)
    }

    fn influencer_interaction(&self, q: &Neighborhood<'_>) -> DVector<f64> {
        self.inner.influencer_interaction(q)
    }

    fn gain_bound(&self) -> f64 {
        self.gain_bound
    }

    fn drift_bound(&self) -> f64 {
        self.drift_bound
    }

    fn guard_hits(&self) -> u64 {
        self.inner.guard_hits()
    }
}
