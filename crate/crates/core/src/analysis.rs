//! Constants of the Lyapunov analysis, evaluated as diagnostics.
//!
//! Nothing here feeds back into the controller. The functions report whether
//! a gain set satisfies the sufficient conditions and, if so, how large the
//! ultimate bound and the transient envelope are. The radii of the
//! stabilizing-region sets depend on an unknown strictly increasing bound
//! function and are deliberately not computed.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Inputs to the gain analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisParams {
    /// `ḡ`.
    pub gain_bound: f64,
    /// `h̄`.
    pub drift_bound: f64,
    /// `x̄_d`.
    pub position_bound: f64,
    /// `ẋ̄_d`.
    pub velocity_bound: f64,
    /// `ε̄`, assumed bound on the GNN reconstruction error.
    pub reconstruction_bound: f64,
    /// `θ̄`.
    pub theta_bar: f64,
    /// `N`.
    pub nodes: usize,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub eps1: f64,
    pub lambda4: f64,
}

/// `(λ1, λ2)` with `λ1 |z|² <= V(z) <= λ2 |z|²`.
pub fn rayleigh_bounds(gamma: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !gamma.is_square() {
        return Err(Error::NotPositiveDefinite("adaptation gain is not square".into()));
    }
    if (gamma - gamma.transpose()).amax() > 1e-12 * gamma.amax().max(1.0) {
        return Err(Error::NotPositiveDefinite("adaptation gain is not symmetric".into()));
    }
    let eig = gamma.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("smallest eigenvalue {min}")));
    }
    // Eigenvalues of Γ⁻¹ are the reciprocals.
    let inv_min = 1.0 / max;
    let inv_max = 1.0 / min;
    Ok((0.5 * inv_min.min(1.0), 0.5 * inv_max.max(1.0)))
}

/// One sufficient gain inequality `value > threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCondition {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
}

impl GainCondition {
    pub fn margin(&self) -> f64 {
        self.value - self.threshold
    }

    pub fn passed(&self) -> bool {
        self.value > self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub conditions: Vec<GainCondition>,
    pub lambda3: f64,
}

impl GainReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(GainCondition::passed)
    }

    pub fn condition(&self, name: &str) -> Option<&GainCondition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for GainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>16} {:>16} {:>16}  verdict", "condition", "value", "required >", "margin")?;
        for c in &self.conditions {
            writeln!(
                f,
                "{:<10} {:>16.6} {:>16.6} {:>16.6}  {}",
                c.name,
                c.value,
                c.threshold,
                c.margin(),
                if c.passed() { "PASS" } else { "FAILED" }
            )?;
        }
        writeln!(
            f,
            "lambda3 = {:.6} ({})",
            self.lambda3,
            if self.lambda3 > 0.0 { "positive" } else { "NOT positive" }
        )?;
        write!(
            f,
            "overall: {}",
            if self.all_passed() { "all sufficient gain conditions PASS" } else { "sufficient gain conditions FAILED" }
        )
    }
}

/// `λ3 = min{ (k1/2) ḡN - ḡN - N³/2 - N/2 - ε1/2,
///            k2/4 - k1ḡ - k1²ḡ²/2 - ḡ²/2 - k1⁴ḡ²/2,
///            k3/2 }`.
pub fn lambda3(p: &AnalysisParams) -> f64 {
    let g = p.gain_bound;
    let n = p.nodes as f64;
    let e_term = 0.5 * p.k1 * g * n - g * n - 0.5 * n.powi(3) - 0.5 * n - 0.5 * p.eps1;
    let eta_term = 0.25 * p.k2 - p.k1 * g - 0.5 * p.k1.powi(2) * g * g - 0.5 * g * g - 0.5 * p.k1.powi(4) * g * g;
    e_term.min(eta_term).min(0.5 * p.k3)
}

/// Evaluates the sufficient conditions in the order they are meant to be
/// chosen: `ε1`, then `k1`, `k2`, `k3`.
pub fn check_gain_conditions(p: &AnalysisParams) -> GainReport {
    let g = p.gain_bound;
    let n = p.nodes as f64;
    let k1_required = 2.0 + (n.powi(3) + n + p.eps1) / (g * n);
    let k2_required = 4.0 * p.k1 * g + 2.0 * g * g * (p.k1.powi(4) + p.k1.powi(2) + 1.0);
    GainReport {
        conditions: vec![
            GainCondition {
                name: "eps1",
                value: p.eps1,
                threshold: 0.0,
            },
            GainCondition {
                name: "k1",
                value: p.k1,
                threshold: k1_required,
            },
            GainCondition {
                name: "k2",
                value: p.k2,
                threshold: k2_required,
            },
            GainCondition {
                name: "k3",
                value: p.k3,
                threshold: 0.0,
            },
        ],
        lambda3: lambda3(p),
    }
}

/// `υ = ε̄²/k2 + ẋ̄_d²/(2ḡN) + h̄²/(2ε1) + (2N+1)² k3 θ̄² N / 2`.
pub fn upsilon(p: &AnalysisParams) -> f64 {
    let n = p.nodes as f64;
    p.reconstruction_bound.powi(2) / p.k2
        + p.velocity_bound.powi(2) / (2.0 * p.gain_bound * n)
        + p.drift_bound.powi(2) / (2.0 * p.eps1)
        + 0.5 * (2.0 * n + 1.0).powi(2) * p.k3 * p.theta_bar.powi(2) * n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UltimateBound {
    pub upsilon: f64,
    /// `sqrt(λ2 υ / (λ1 λ4))`.
    pub radius: f64,
    /// `false` when `λ4 >= λ3`, in which case the theorem says nothing.
    pub meaningful: bool,
}

pub fn ultimate_bound(p: &AnalysisParams, lambda1: f64, lambda2: f64, lambda3: f64) -> UltimateBound {
    let ups = upsilon(p);
    UltimateBound {
        upsilon: ups,
        radius: (lambda2 * ups / (lambda1 * p.lambda4)).sqrt(),
        meaningful: p.lambda4 < lambda3,
    }
}

/// Bound on `|z(t)|` after `elapsed` seconds starting from `|z(t0)| = z0`.
pub fn theorem_envelope(lambda1: f64, lambda2: f64, lambda4: f64, upsilon: f64, z0: f64, elapsed: f64) -> f64 {
    let floor = upsilon / lambda4;
    let decay = (-(lambda4 / lambda2) * elapsed).exp();
    ((lambda2 / lambda1) * (floor + decay * (z0 * z0 - floor))).sqrt()
}
