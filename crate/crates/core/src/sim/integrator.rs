//! Classical fixed-step fourth-order Runge-Kutta.

use nalgebra::DVector;

use crate::error::Result;

/// Advances `y' = f(t, y)` by one step of size `dt`.
pub fn rk4_step<F>(mut f: F, t: f64, y: &DVector<f64>, dt: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let half = 0.5 * dt;
    let k1 = f(t, y)?;
    let k2 = f(t + half, &(y + &k1 * half))?;
    let k3 = f(t + half, &(y + &k2 * half))?;
    let k4 = f(t + dt, &(y + &k3 * dt))?;
    Ok(y + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}
