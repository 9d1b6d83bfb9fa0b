//! Error signals, the virtual command for the influencers and the
//! backstepping control law.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gnn::{add_jacobian_product, NodeJacobians};
use crate::graph::Graph;

/// Adaptation gain `Γ`, shared by every node.
#[derive(Debug, Clone, PartialEq)]
pub enum GainMatrix {
    /// `γ I`.
    Scalar(f64),
    /// Full symmetric positive-definite matrix.
    Full(DMatrix<f64>),
}

impl GainMatrix {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            GainMatrix::Scalar(g) => v * *g,
            GainMatrix::Full(m) => m * v,
        }
    }

    /// `vᵀ Γ v`.
    pub fn quadratic(&self, v: &DVector<f64>) -> f64 {
        match self {
            GainMatrix::Scalar(g) => g * v.dot(v),
            GainMatrix::Full(m) => v.dot(&(m * v)),
        }
    }

    /// Dense `Γ` of size `p`.
    pub fn to_matrix(&self, p: usize) -> DMatrix<f64> {
        match self {
            GainMatrix::Scalar(g) => DMatrix::identity(p, p) * *g,
            GainMatrix::Full(m) => m.clone(),
        }
    }

    /// Solves `Γ x = v`.
    pub fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            GainMatrix::Scalar(g) => Ok(v / *g),
            GainMatrix::Full(m) => m
                .clone()
                .cholesky()
                .map(|c| c.solve(v))
                .ok_or_else(|| Error::NotPositiveDefinite("adaptation gain".into())),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            GainMatrix::Scalar(g) if *g > 0.0 && g.is_finite() => Ok(()),
            GainMatrix::Scalar(g) => Err(Error::NotPositiveDefinite(format!("scalar gain {g}"))),
            GainMatrix::Full(m) => {
                if m.nrows() != p || m.ncols() != p {
                    return Err(Error::Dimension {
                        context: "adaptation gain size",
                        expected: p,
                        actual: m.nrows(),
                    });
                }
                if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(Error::NotPositiveDefinite("adaptation gain is not symmetric".into()));
                }
                m.clone()
                    .cholesky()
                    .map(|_| ())
                    .ok_or_else(|| Error::NotPositiveDefinite("adaptation gain".into()))
            }
        }
    }
}

/// Controller and adaptation gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Gains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub gamma: GainMatrix,
    /// Radius of the weight search space.
    pub theta_bar: f64,
    /// Relative width of the projection boundary layer.
    pub projection_layer: f64,
    /// Young's-inequality slack used by the gain analysis.
    pub eps1: f64,
    /// Desired convergence rate used by the gain analysis.
    pub lambda4: f64,
}

impl Gains {
    pub fn validate(&self, p: usize) -> Result<()> {
        for (name, value) in [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("theta_bar", self.theta_bar),
            ("projection_layer", self.projection_layer),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("gain {name} must be positive, got {value}")));
            }
        }
        self.gamma.validate(p)
    }
}

/// A `C¹` reference with known bounds on position and velocity.
pub trait DesiredTrajectory: Send + Sync + fmt::Debug {
    fn position(&self, t: f64) -> DVector<f64>;
    fn velocity(&self, t: f64) -> DVector<f64>;
    /// `x̄_d`.
    fn position_bound(&self) -> f64;
    /// `ẋ̄_d`.
    fn velocity_bound(&self) -> f64;
}

/// Slow three-axis Lissajous-like curve used by the benchmark scenario.
#[derive(Debug, Clone, Copy, Default)]
pub struct PaperTrajectory;

impl DesiredTrajectory for PaperTrajectory {
    fn position(&self, t: f64) -> DVector<f64> {
        DVector::from_vec(vec![
            10.0 * (0.01 * t).sin(),
            10.0 * (0.025 * t).sin() * (0.025 * t).cos(),
            5.0 * (0.075 * t).sin(),
        ])
    }

    fn velocity(&self, t: f64) -> DVector<f64> {
        // 10 sin(a) cos(a) = 5 sin(2a)
        DVector::from_vec(vec![
            0.1 * (0.01 * t).cos(),
            0.25 * (0.05 * t).cos(),
            0.375 * (0.075 * t).cos(),
        ])
    }

    fn position_bound(&self) -> f64 {
        (10.0f64 * 10.0 + 5.0 * 5.0 + 5.0 * 5.0).sqrt()
    }

    fn velocity_bound(&self) -> f64 {
        (0.1f64 * 0.1 + 0.25 * 0.25 + 0.375 * 0.375).sqrt()
    }
}

/// Fixed set point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantTrajectory(pub DVector<f64>);

impl DesiredTrajectory for ConstantTrajectory {
    fn position(&self, _t: f64) -> DVector<f64> {
        self.0.clone()
    }

    fn velocity(&self, _t: f64) -> DVector<f64> {
        DVector::zeros(self.0.len())
    }

    fn position_bound(&self) -> f64 {
        self.0.norm()
    }

    fn velocity_bound(&self) -> f64 {
        0.0
    }
}

/// `e = x0 - x_d`.
pub fn tracking_error(x0: &DVector<f64>, xd: &DVector<f64>) -> DVector<f64> {
    x0 - xd
}

/// `y_d = k1 e + x_d`; the same for every influencer.
pub fn desired_influencer_position(e: &DVector<f64>, xd: &DVector<f64>, k1: f64) -> DVector<f64> {
    e * k1 + xd
}

/// `eta_i = y_d,i - y_i`.
pub fn backstepping_error(yd: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    yd - y
}

/// Backstepping control at node `i`:
///
/// `u_i = k2 eta_i + phi_i + sum_{j in N_i^{k-1}} (d phi_i / d theta_j)(theta_i - theta_j) + (1 - k1) xd'`
///
/// `depth` is the number of message-passing layers; every node within
/// `depth - 1` hops must have a Jacobian block in `jacobians`.
#[allow(clippy::too_many_arguments)]
pub fn control_input(
    graph: &Graph,
    depth: usize,
    i: usize,
    eta: &DVector<f64>,
    phi: &DVector<f64>,
    jacobians: &NodeJacobians,
    thetas: &[DVector<f64>],
    xd_dot: &DVector<f64>,
    gains: &Gains,
) -> Result<DVector<f64>> {
    if eta.len() != phi.len() || eta.len() != xd_dot.len() {
        return Err(Error::Dimension {
            context: "control input vectors",
            expected: eta.len(),
            actual: phi.len().max(xd_dot.len()),
        });
    }
    let theta_i = thetas.get(i).ok_or(Error::Missing {
        what: "weight estimate",
        node: i,
    })?;
    let mut u = eta * gains.k2 + phi + xd_dot * (1.0 - gains.k1);
    for j in graph.k_hop(i, depth.saturating_sub(1)) {
        let jac = jacobians.get(j).ok_or(Error::Missing {
            what: "Jacobian block",
            node: j,
        })?;
        let theta_j = thetas.get(j).ok_or(Error::Missing {
            what: "weight estimate",
            node: j,
        })?;
        if jac.nrows() != u.len() || jac.ncols() != theta_i.len() || theta_j.len() != theta_i.len() {
            return Err(Error::Dimension {
                context: "Jacobian block shape",
                expected: theta_i.len(),
                actual: jac.ncols().min(theta_j.len()),
            });
        }
        add_jacobian_product(&mut u, jac, &(theta_i - theta_j), 1.0);
    }
    Ok(u)
}
