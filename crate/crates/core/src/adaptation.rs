//! Distributed weight update law with a smooth projection onto a ball.
//!
//! The search space is the origin-centered ball of radius `θ̄`. The projection
//! is the usual boundary-layer construction with the convex barrier
//!
//! ```text
//! P(θ) = (|θ|² - θ̄²) / (ε θ̄²)
//! ```
//!
//! which is `<= 0` inside the ball and reaches `1` on the inflated sphere of
//! radius `θ̄ sqrt(1 + ε)`. Outward components are removed progressively
//! across the layer, so that sphere is forward invariant for the continuous
//! flow and, for any `θ*` in the ball,
//! `(θ* - θ)ᵀ Γ⁻¹ (proj(ν) - ν) >= 0`.

use nalgebra::DVector;

use crate::controller::{GainMatrix, Gains};
use crate::error::{Error, Result};
use crate::gnn::{add_jacobian_transpose_product, NodeJacobians};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// `θ̄`.
    pub radius: f64,
    /// `ε`, relative width of the boundary layer.
    pub boundary_layer: f64,
}

impl Projection {
    pub fn new(radius: f64, boundary_layer: f64) -> Self {
        Self { radius, boundary_layer }
    }

    pub fn from_gains(gains: &Gains) -> Self {
        Self::new(gains.theta_bar, gains.projection_layer)
    }

    /// `θ̄ sqrt(1 + ε)`, the radius that accepted estimates never exceed.
    pub fn limit(&self) -> f64 {
        self.radius * (1.0 + self.boundary_layer).sqrt()
    }

    pub fn barrier(&self, theta: &DVector<f64>) -> f64 {
        let r2 = self.radius * self.radius;
        (theta.norm_squared() - r2) / (self.boundary_layer * r2)
    }

    fn barrier_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        theta * (2.0 / (self.boundary_layer * self.radius * self.radius))
    }

    /// Projected derivative. Interior points and inward-pointing candidates
    /// pass through unchanged. Beyond the boundary layer, which explicit
    /// integrator stages can reach, the whole outward component is removed.
    pub fn project(&self, theta: &DVector<f64>, nu: &DVector<f64>, gamma: &GainMatrix) -> Result<DVector<f64>> {
        if theta.len() != nu.len() {
            return Err(Error::Dimension {
                context: "projection candidate",
                expected: theta.len(),
                actual: nu.len(),
            });
        }
        let barrier = self.barrier(theta);
        if !barrier.is_finite() {
            return Err(Error::OutsideSearchSpace {
                norm: theta.norm(),
                limit: self.limit(),
            });
        }
        if barrier <= 0.0 {
            return Ok(nu.clone());
        }
        let grad = self.barrier_gradient(theta);
        let outward = grad.dot(nu);
        if outward <= 0.0 {
            return Ok(nu.clone());
        }
        let gamma_grad = gamma.apply(&grad);
        let scale = barrier.min(1.0) * outward / gamma.quadratic(&grad);
        Ok(nu - gamma_grad * scale)
    }

    /// Pulls `theta` radially back onto the inflated sphere. Returns whether
    /// anything changed.
    pub fn clamp(&self, theta: &mut DVector<f64>) -> bool {
        let norm = theta.norm();
        let limit = self.limit();
        if norm > limit {
            *theta *= limit / norm;
            // Rounding can leave the norm an ulp above the limit.
            while theta.norm() > limit {
                *theta *= 1.0 - f64::EPSILON;
            }
            true
        } else {
            false
        }
    }
}

/// Unprojected update at node `i`:
///
/// `ℵ_i = Γ [ (sum_{j in N̄_i^{k-1}} (d phi_i/d theta_j)ᵀ) eta_i - k3 (sum_{j in N_i} (theta_i - theta_j) + theta_i) ]`
#[allow(clippy::too_many_arguments)]
pub fn raw_update(
    graph: &Graph,
    depth: usize,
    i: usize,
    eta: &DVector<f64>,
    jacobians: &NodeJacobians,
    thetas: &[DVector<f64>],
    gamma: &GainMatrix,
    k3: f64,
) -> Result<DVector<f64>> {
    let theta_i = thetas.get(i).ok_or(Error::Missing {
        what: "weight estimate",
        node: i,
    })?;
    let p = theta_i.len();
    let mut drive = DVector::zeros(p);
    for j in graph.augmented_k_hop(i, depth.saturating_sub(1)) {
        let jac = jacobians.get(j).ok_or(Error::Missing {
            what: "Jacobian block",
            node: j,
        })?;
        if jac.ncols() != p || jac.nrows() != eta.len() {
            return Err(Error::Dimension {
                context: "Jacobian block shape",
                expected: p,
                actual: jac.ncols(),
            });
        }
        add_jacobian_transpose_product(&mut drive, jac, eta);
    }
    let mut leakage = theta_i.clone();
    for &j in graph.neighbors(i) {
        let theta_j = thetas.get(j).ok_or(Error::Missing {
            what: "weight estimate",
            node: j,
        })?;
        if theta_j.len() != p {
            return Err(Error::Dimension {
                context: "neighbor weight length",
                expected: p,
                actual: theta_j.len(),
            });
        }
        leakage.axpy(1.0, theta_i, 1.0);
        leakage.axpy(-1.0, theta_j, 1.0);
    }
    drive.axpy(-k3, &leakage, 1.0);
    Ok(gamma.apply(&drive))
}

/// `proj(ℵ_i)`, the weight-estimate derivative at node `i`.
pub fn update_law(
    graph: &Graph,
    depth: usize,
    i: usize,
    eta: &DVector<f64>,
    jacobians: &NodeJacobians,
    thetas: &[DVector<f64>],
    gains: &Gains,
) -> Result<DVector<f64>> {
    let raw = raw_update(graph, depth, i, eta, jacobians, thetas, &gains.gamma, gains.k3)?;
    Projection::from_gains(gains).project(&thetas[i], &raw, &gains.gamma)
}
