//! Invariant-measure phase cell and the rotating-frame phase flow.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, WalkerParams};

/// Phase shift `(theta_bar, omega_bar)` in `[0, 2π/N_o) x [0, 2π/N_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub theta_bar: f64,
    pub omega_bar: f64,
}

impl PhaseState {
    /// Reduces both coordinates into the cell of `params`.
    pub fn new(theta_bar: f64, omega_bar: f64, params: &WalkerParams) -> Self {
        Self {
            theta_bar: wrap_angle(theta_bar, params.theta_cell()),
            omega_bar: wrap_angle(omega_bar, params.omega_cell()),
        }
    }

    pub fn in_cell(&self, params: &WalkerParams) -> bool {
        (0.0..params.theta_cell()).contains(&self.theta_bar)
            && (0.0..params.omega_cell()).contains(&self.omega_bar)
    }
}

/// Angular rates of the two phase translations (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub v_theta: f64,
    pub v_omega: f64,
}

/// Sidereal day, seconds.
pub const SIDEREAL_DAY_S: f64 = 86_164.0;
/// Circular orbit period at 550 km altitude, seconds.
pub const ORBIT_PERIOD_550_S: f64 = 5_736.0;

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            v_theta: TAU / SIDEREAL_DAY_S,
            v_omega: TAU / ORBIT_PERIOD_550_S,
        }
    }
}

impl FlowParams {
    pub fn new(v_theta: f64, v_omega: f64) -> Result<Self> {
        if !(v_theta >= 0.0 && v_omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "flow rates must be non-negative with v_omega > 0, got ({v_theta}, {v_omega})"
            )));
        }
        Ok(Self { v_theta, v_omega })
    }

    /// Speed ratio `v_theta / v_omega`.
    pub fn speed_ratio(&self) -> f64 {
        self.v_theta / self.v_omega
    }
}

/// Draw from the product-uniform invariant measure on the cell.
pub fn sample_phase<R: Rng + ?Sized>(rng: &mut R, params: &WalkerParams) -> PhaseState {
    let theta_bar = rng.random_range(0.0..params.theta_cell());
    let omega_bar = rng.random_range(0.0..params.omega_cell());
    PhaseState {
        theta_bar,
        omega_bar,
    }
}

/// `theta_bar - v_theta t` and `omega_bar + v_omega t`, each reduced modulo its cell.
pub fn advance_phase(
    state: &PhaseState,
    t: f64,
    flow: &FlowParams,
    params: &WalkerParams,
) -> PhaseState {
    // reduce the displacement first so long horizons do not lose precision
    let dtheta = wrap_angle(flow.v_theta * t, params.theta_cell());
    let domega = wrap_angle(flow.v_omega * t, params.omega_cell());
    PhaseState::new(state.theta_bar - dtheta, state.omega_bar + domega, params)
}

/// States at times `k * dt`, `k = 0..n_steps`.
pub fn time_average_trajectory(
    initial: &PhaseState,
    flow: &FlowParams,
    params: &WalkerParams,
    n_steps: usize,
    dt: f64,
) -> Result<Vec<PhaseState>> {
    if n_steps == 0 || !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "trajectory needs n_steps >= 1 and dt > 0, got {n_steps}, {dt}"
        )));
    }
    let dtheta = wrap_angle(flow.v_theta * dt, params.theta_cell());
    let domega = wrap_angle(flow.v_omega * dt, params.omega_cell());
    let mut out = Vec::with_capacity(n_steps);
    let mut s = *initial;
    for _ in 0..n_steps {
        out.push(s);
        s = PhaseState::new(s.theta_bar - dtheta, s.omega_bar + domega, params);
    }
    Ok(out)
}
