//! Particle updates and momentum schedules.
//!
//! Plain descent moves every particle against the aggregated direction:
//! `x <- x - eta * dir`. The accelerated scheme discretizes the damped
//! second-order particle system with increments of `sqrt(eta)`:
//!
//! ```text
//! x_{n+1} = x_n + sqrt(eta) v_n
//! v_{n+1} = alpha_n v_n - sqrt(eta) dir(x_n)
//! ```
//!
//! The position update uses the velocity from before the step, and the
//! direction is always the one evaluated at `x_n`.

use serde::{Deserialize, Serialize};

use crate::ensemble::{Matrix, ParticleEnsemble};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MomentumSchedule {
    /// `alpha_n = (n - 1) / (n + 2)`, the discrete counterpart of `3/t` damping.
    Convex,
    /// `alpha = (1 - sqrt(beta eta)) / (1 + sqrt(beta eta))`, constant in `n`.
    StronglyConvex { beta: f64 },
}

impl MomentumSchedule {
    pub fn strongly_convex(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        Ok(MomentumSchedule::StronglyConvex { beta })
    }
}

/// Momentum coefficient `alpha_n` for iteration `n` (0-based). The convex
/// schedule is defined as 0 at `n = 0`, where the formula would go negative.
pub fn momentum_coefficient(schedule: MomentumSchedule, n: usize, eta: f64) -> Result<f64> {
    match schedule {
        MomentumSchedule::Convex => {
            if n == 0 {
                return Ok(0.0);
            }
            Ok((n as f64 - 1.0) / (n as f64 + 2.0))
        }
        MomentumSchedule::StronglyConvex { beta } => {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::invalid(format!("beta must be positive, got {beta}")));
            }
            if !(eta.is_finite() && eta > 0.0) {
                return Err(Error::invalid(format!("step size must be positive, got {eta}")));
            }
            let s = (beta * eta).sqrt();
            if s >= 1.0 {
                return Err(Error::invalid(format!(
                    "beta * eta = {} >= 1 gives a non-positive momentum coefficient",
                    beta * eta
                )));
            }
            Ok(((1.0 - s) / (1.0 + s)).clamp(0.0, 1.0 - f64::EPSILON))
        }
    }
}

fn check_step(ens: &ParticleEnsemble, direction: &Matrix, eta: f64) -> Result<()> {
    if direction.shape() != ens.positions().shape() {
        return Err(Error::invalid(format!(
            "direction shape {:?} does not match ensemble {:?}",
            direction.shape(),
            ens.positions().shape()
        )));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {eta}")));
    }
    Ok(())
}

/// `x' = x - eta * direction`; velocities carried over unchanged.
pub fn mwgrad_step(ens: &ParticleEnsemble, direction: &Matrix, eta: f64) -> Result<ParticleEnsemble> {
    check_step(ens, direction, eta)?;
    let mut positions = ens.positions().clone();
    for i in 0..positions.rows() {
        for (x, g) in positions.row_mut(i).iter_mut().zip(direction.row(i)) {
            *x -= eta * g;
        }
    }
    Ok(ParticleEnsemble::from_parts_unchecked(
        positions,
        ens.velocities().clone(),
        ens.iteration() + 1,
    ))
}

/// `x' = x + sqrt(eta) v`, `v' = alpha v - sqrt(eta) direction`.
pub fn amwgrad_step(ens: &ParticleEnsemble, direction: &Matrix, eta: f64, alpha: f64) -> Result<ParticleEnsemble> {
    check_step(ens, direction, eta)?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!(
            "momentum coefficient must lie in [0, 1), got {alpha}"
        )));
    }
    let root_eta = eta.sqrt();
    let mut positions = ens.positions().clone();
    let mut velocities = ens.velocities().clone();
    for i in 0..positions.rows() {
        let x = positions.row_mut(i);
        for (xc, vc) in x.iter_mut().zip(ens.velocities().row(i)) {
            *xc += root_eta * vc;
        }
        for (vc, g) in velocities.row_mut(i).iter_mut().zip(direction.row(i)) {
            *vc = alpha * *vc - root_eta * g;
        }
    }
    Ok(ParticleEnsemble::from_parts_unchecked(
        positions,
        velocities,
        ens.iteration() + 1,
    ))
}
