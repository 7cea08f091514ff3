//! Annulus-block constants, their lattice verification, and the closed-form
//! converse bounds on coverage, ergodic rate and mean SINR.

use std::f64::consts::{LN_2, TAU};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelParams, FadingModel};
use crate::error::{Error, Result};
use crate::geometry::{
    check_nondegenerate, distance, horizon_distance, is_visible, visible_satellites, walker_position,
    UserPosition, WalkerParams,
};
use crate::phase::PhaseState;

pub const DEFAULT_GRID_RESOLUTION: usize = 1024;

/// Hex SHA-256 of the shell and user geometry. Certificates and sweeps carry
/// it so that artifacts from different geometries are never combined.
pub fn geometry_hash(params: &WalkerParams, user: &UserPosition) -> String {
    let canon = format!(
        "r={:.17e};e={:.17e};phi={:.17e};lat={:.17e}",
        params.orbit_radius_km, params.earth_radius_km, params.inclination_rad, user.latitude_rad
    );
    hex::encode(Sha256::digest(canon.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRect {
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub omega_lo: f64,
    pub omega_hi: f64,
}

impl PhaseRect {
    pub fn theta_width(&self) -> f64 {
        self.theta_hi - self.theta_lo
    }

    pub fn omega_width(&self) -> f64 {
        self.omega_hi - self.omega_lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConstants {
    pub d0_km: f64,
    pub d1_km: f64,
    pub d2_km: f64,
    pub d_max_km: f64,
    pub epsilon0_km: f64,
    pub beta: f64,
    pub n0: usize,
    pub rect_b: PhaseRect,
    /// Rectangle size in grid cells, `(theta, omega)`.
    pub rect_cells: (usize, usize),
    pub center: (f64, f64),
    pub grid_resolution: usize,
    pub geometry_hash: String,
}

impl BlockConstants {
    /// `p g_r d2^-α`: the least unit-fading power of an annulus interferer.
    pub fn interference_unit(&self, channel: &ChannelParams) -> f64 {
        channel.tx_power * channel.gain_rx * self.d2_km.powf(-channel.pathloss_exp)
    }

    /// `(d2 / (r - e))^α`.
    pub fn a_geom(&self, params: &WalkerParams, channel: &ChannelParams) -> f64 {
        (self.d2_km / params.min_distance_km()).powf(channel.pathloss_exp)
    }

    /// `m = ⌊βN⌋ - 1`, possibly negative.
    pub fn m(&self, n_total: usize) -> i64 {
        (self.beta * n_total as f64).floor() as i64 - 1
    }

    pub fn qualifies(&self, n_o: usize, n_s: usize) -> bool {
        n_o.min(n_s) >= self.n0
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.d1_km
            && self.d1_km < self.d2_km
            && self.d2_km < self.d_max_km
            && self.d2_km <= self.d_max_km - self.epsilon0_km
            && self.beta > 0.0
            && self.beta <= 0.25
            && self.n0 >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Certificate(format!("inconsistent block constants: {self:?}")))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    #[cfg(test)]
    pub(crate) fn for_tests(d1_km: f64, d2_km: f64) -> Self {
        Self {
            d0_km: 0.5 * (d1_km + d2_km),
            d1_km,
            d2_km,
            d_max_km: 2703.81,
            epsilon0_km: 0.5 * (d2_km - d1_km),
            beta: 1e-3,
            n0: 10,
            rect_b: PhaseRect {
                theta_lo: 0.0,
                theta_hi: 0.1,
                omega_lo: 0.0,
                omega_hi: 0.1,
            },
            rect_cells: (1, 1),
            center: (0.0, 0.0),
            grid_resolution: 64,
            geometry_hash: String::new(),
        }
    }
}

/// Smallest `n >= 1` with `⌊n c / R⌋ >= n c / (2R)` for a side of `c` cells.
fn floor_halving_n(cells: usize, resolution: usize) -> usize {
    (1..)
        .find(|&n| 2 * ((n * cells) / resolution) * resolution >= n * cells)
        .expect("condition holds once n c >= R")
}

/// Score of a maximal rectangle after the one-cell shrink on every side:
/// shorter side first, then area.
fn shrunk_score(rows: usize, cols: usize) -> Option<(usize, usize)> {
    if rows < 3 || cols < 3 {
        return None;
    }
    let (a, b) = (rows - 2, cols - 2);
    Some((a.min(b), a * b))
}

/// Best shrunk rectangle of `true` cells in a row-major `res x res` mask,
/// returned as inclusive cell ranges `(theta_lo, theta_hi, omega_lo, omega_hi)`.
///
/// Every maximal all-true rectangle appears as some column's bar in the
/// histogram of its bottom row, so scanning those bars covers them all.
fn best_rectangle(mask: &[bool], res: usize) -> Option<(usize, usize, usize, usize)> {
    let mut heights = vec![0usize; res];
    let mut left = vec![0usize; res];
    let mut right = vec![0usize; res];
    let mut stack: Vec<usize> = Vec::with_capacity(res);
    let mut best: Option<((usize, usize), (usize, usize, usize, usize))> = None;

    for i in 0..res {
        let row = &mask[i * res..(i + 1) * res];
        for j in 0..res {
            heights[j] = if row[j] { heights[j] + 1 } else { 0 };
        }
        stack.clear();
        for j in 0..res {
            while let Some(&t) = stack.last() {
                if heights[t] >= heights[j] {
                    stack.pop();
                } else {
                    break;
                }
            }
            left[j] = stack.last().map_or(0, |&t| t + 1);
            stack.push(j);
        }
        stack.clear();
        for j in (0..res).rev() {
            while let Some(&t) = stack.last() {
                if heights[t] >= heights[j] {
                    stack.pop();
                } else {
                    break;
                }
            }
            right[j] = stack.last().map_or(res - 1, |&t| t - 1);
            stack.push(j);
        }
        for j in 0..res {
            let h = heights[j];
            if h == 0 {
                continue;
            }
            let cols = right[j] - left[j] + 1;
            if let Some(score) = shrunk_score(h, cols) {
                if best.map_or(true, |(s, _)| score > s) {
                    best = Some((score, (i + 2 - h, i - 1, left[j] + 1, right[j] - 1)));
                }
            }
        }
    }
    best.map(|(_, r)| r)
}

/// Grid estimate of admissible block constants.
///
/// The annulus is centred on the visible grid distance with the most
/// headroom `min(d0/2, (d_max - d0)/2)`, with half-width half that headroom.
/// The rectangle is the all-annulus rectangle of grid cells with the longest
/// shorter side (then the largest area) after shrinking one cell per side.
/// The result is checked with [`verify_block`] at `(2 n0, 2 n0)` on a 9x9
/// lattice before it is returned.
pub fn estimate_block_constants(
    params: &WalkerParams,
    user: &UserPosition,
    grid_resolution: usize,
) -> Result<BlockConstants> {
    if grid_resolution < 64 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be >= 64, got {grid_resolution}"
        )));
    }
    params.validate()?;
    check_nondegenerate(params, user, grid_resolution)?;
    let res = grid_resolution;
    let cell = TAU / res as f64;
    let d_max = horizon_distance(params);

    let mut dist = vec![f64::NAN; res * res];
    let mut best: Option<(f64, usize)> = None;
    for i in 0..res {
        let theta = (i as f64 + 0.5) * cell;
        for j in 0..res {
            let omega = (j as f64 + 0.5) * cell;
            let x = walker_position(params, theta, omega);
            if !is_visible(&x, user, params) {
                continue;
            }
            let d = distance(&x, user);
            dist[i * res + j] = d;
            let head = (0.5 * d).min(0.5 * (d_max - d));
            if best.map_or(true, |(h, _)| head > h) {
                best = Some((head, i * res + j));
            }
        }
    }
    let (headroom, center_idx) = best.ok_or_else(|| Error::DegenerateLatitude {
        latitude_deg: user.latitude_rad.to_degrees(),
        grid: res,
    })?;
    let d0 = dist[center_idx];
    let eps0 = 0.5 * headroom;
    let (d1, d2) = (d0 - eps0, d0 + eps0);

    // NaN marks invisible cells and fails both comparisons
    let mask: Vec<bool> = dist.iter().map(|&d| d > d1 && d < d2).collect();
    let (a0, a1, c0, c1) = best_rectangle(&mask, res).ok_or_else(|| {
        Error::Certificate("annulus rectangle degenerates after the one-cell shrink".into())
    })?;
    let rect_cells = (a1 - a0 + 1, c1 - c0 + 1);
    if rect_cells == (1, 1) {
        return Err(Error::Certificate("annulus rectangle is a single grid cell".into()));
    }
    let rect_b = PhaseRect {
        theta_lo: a0 as f64 * cell,
        theta_hi: (a1 + 1) as f64 * cell,
        omega_lo: c0 as f64 * cell,
        omega_hi: (c1 + 1) as f64 * cell,
    };
    let beta = 0.25 * (rect_cells.0 * rect_cells.1) as f64 / (res * res) as f64;
    let n0 = floor_halving_n(rect_cells.0, res).max(floor_halving_n(rect_cells.1, res));

    let constants = BlockConstants {
        d0_km: d0,
        d1_km: d1,
        d2_km: d2,
        d_max_km: d_max,
        epsilon0_km: eps0,
        beta,
        n0,
        rect_b,
        rect_cells,
        center: (
            ((center_idx / res) as f64 + 0.5) * cell,
            ((center_idx % res) as f64 + 0.5) * cell,
        ),
        grid_resolution: res,
        geometry_hash: geometry_hash(params, user),
    };
    constants.validate()?;

    let check = verify_block(
        &constants,
        &params.with_size(2 * n0, 2 * n0),
        user,
        9,
    );
    match check.status {
        VerifyStatus::Passed => Ok(constants),
        _ => Err(Error::Certificate(format!(
            "self-check at ({0}, {0}) failed: {1}",
            2 * n0,
            check.describe()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyStatus {
    Passed,
    Falsified,
    PreconditionUnmet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub status: VerifyStatus,
    pub n_orbits: usize,
    pub n_sats_per_orbit: usize,
    /// `⌊βN⌋`.
    pub required: usize,
    pub states_checked: usize,
    pub min_count: usize,
    /// `min_count - required`; negative on falsification.
    pub slack: i64,
    /// First failing phase state and its count.
    pub falsification: Option<(PhaseState, usize)>,
}

impl VerifyReport {
    pub fn describe(&self) -> String {
        match self.status {
            VerifyStatus::Passed => format!(
                "({}, {}): min count {} >= {} over {} states, slack {}",
                self.n_orbits, self.n_sats_per_orbit, self.min_count, self.required,
                self.states_checked, self.slack
            ),
            VerifyStatus::PreconditionUnmet => format!(
                "({}, {}): precondition unmet (min side below n0)",
                self.n_orbits, self.n_sats_per_orbit
            ),
            VerifyStatus::Falsified => {
                let (s, c) = self.falsification.expect("falsified report has a witness");
                format!(
                    "({}, {}): count {} < {} at theta_bar={:.9e}, omega_bar={:.9e}",
                    self.n_orbits, self.n_sats_per_orbit, c, self.required, s.theta_bar, s.omega_bar
                )
            }
        }
    }
}

/// Visible satellites with distance in `[d1, d2]` at one phase state.
pub fn annulus_count(
    constants: &BlockConstants,
    params: &WalkerParams,
    user: &UserPosition,
    phase: &PhaseState,
) -> usize {
    visible_satellites(params, user, phase.theta_bar, phase.omega_bar)
        .iter()
        .filter(|s| {
            let d = distance(&s.position, user);
            constants.d1_km <= d && d <= constants.d2_km
        })
        .count()
}

/// Phase states `(k/(g-1), l/(g-1))` of the cell for `k, l = 0..g-1`, plus
/// the centre. `g = 1` gives the origin and the centre.
pub fn phase_lattice(params: &WalkerParams, g: usize) -> Vec<PhaseState> {
    let (tc, wc) = (params.theta_cell(), params.omega_cell());
    let frac = |k: usize| if g <= 1 { 0.0 } else { k as f64 / (g - 1) as f64 };
    let mut out = Vec::with_capacity(g * g + 1);
    for k in 0..g.max(1) {
        for l in 0..g.max(1) {
            // the far corner equals the near one modulo the cell; keep it
            // unreduced so the lattice really touches both edges
            out.push(PhaseState {
                theta_bar: frac(k) * tc,
                omega_bar: frac(l) * wc,
            });
        }
    }
    out.push(PhaseState {
        theta_bar: 0.5 * tc,
        omega_bar: 0.5 * wc,
    });
    out
}

/// Checks `count >= ⌊βN⌋` at every state of [`phase_lattice`].
pub fn verify_block(
    constants: &BlockConstants,
    params: &WalkerParams,
    user: &UserPosition,
    phase_grid: usize,
) -> VerifyReport {
    let n_total = params.n_total();
    let required = (constants.beta * n_total as f64).floor() as usize;
    let mut report = VerifyReport {
        status: VerifyStatus::PreconditionUnmet,
        n_orbits: params.n_orbits,
        n_sats_per_orbit: params.n_sats_per_orbit,
        required,
        states_checked: 0,
        min_count: 0,
        slack: 0,
        falsification: None,
    };
    if !constants.qualifies(params.n_orbits, params.n_sats_per_orbit) {
        return report;
    }
    let mut min_count = usize::MAX;
    for state in phase_lattice(params, phase_grid) {
        let c = annulus_count(constants, params, user, &state);
        report.states_checked += 1;
        if c < required && report.falsification.is_none() {
            report.falsification = Some((state, c));
        }
        min_count = min_count.min(c);
    }
    report.min_count = min_count;
    report.slack = min_count as i64 - required as i64;
    report.status = if report.falsification.is_some() {
        VerifyStatus::Falsified
    } else {
        VerifyStatus::Passed
    };
    report
}

/// Points of the lattice `shift + 2πk/n` (mod 2π, `k = 0..n`) in the arc `[0, delta]`.
pub fn lattice_arc_count(n: usize, shift: f64, delta: f64) -> usize {
    if n == 0 || delta < 0.0 {
        return 0;
    }
    let spacing = TAU / n as f64;
    let s = crate::geometry::wrap_angle(shift, spacing);
    if s > delta {
        return 0;
    }
    (((delta - s) / spacing).floor() as usize + 1).min(n)
}

fn require_m(constants: &BlockConstants, n_o: usize, n_s: usize) -> Result<f64> {
    if !constants.qualifies(n_o, n_s) {
        return Err(Error::PreconditionUnmet(format!(
            "min(N_o, N_s) = {} is below n0 = {}",
            n_o.min(n_s),
            constants.n0
        )));
    }
    let m = constants.m(n_o * n_s);
    if m < 1 {
        return Err(Error::PreconditionUnmet(format!(
            "m = floor(beta N) - 1 = {m} < 1 at N = {} (beta = {:.6e})",
            n_o * n_s,
            constants.beta
        )));
    }
    Ok(m as f64)
}

fn require_tau(tau_linear: f64) -> Result<()> {
    if tau_linear > 0.0 && tau_linear.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("threshold must be > 0, got {tau_linear}")))
    }
}

/// `min(1, 4 Var(H)/m + (2 g_t/τ) A/m)`.
pub fn bound_pcov(
    constants: &BlockConstants,
    params: &WalkerParams,
    channel: &ChannelParams,
    fading: &FadingModel,
    tau_linear: f64,
) -> Result<f64> {
    require_tau(tau_linear)?;
    let m = require_m(constants, params.n_orbits, params.n_sats_per_orbit)?;
    let a = constants.a_geom(params, channel);
    Ok((4.0 * fading.variance() / m + 2.0 * channel.gain_tx_boost / tau_linear * a / m).min(1.0))
}

/// Mean SNR of a unit-fading main-lobe link at the minimum distance.
pub fn snr_at_min_distance(params: &WalkerParams, channel: &ChannelParams) -> f64 {
    channel.max_mean_signal(params.min_distance_km()) / channel.noise_power
}

/// `(1/ln 2)(2 g_t A/m + (4 Var(H)/m) SNR0)` in bits/s/Hz, unclamped.
pub fn bound_cerg(
    constants: &BlockConstants,
    params: &WalkerParams,
    channel: &ChannelParams,
    fading: &FadingModel,
) -> Result<f64> {
    let m = require_m(constants, params.n_orbits, params.n_sats_per_orbit)?;
    let a = constants.a_geom(params, channel);
    let snr0 = snr_at_min_distance(params, channel);
    Ok((2.0 * channel.gain_tx_boost * a / m + 4.0 * fading.variance() / m * snr0) / LN_2)
}

/// `min(1, 4 E[H²]/(qm) + (2 g_t/τ) A/(qm))`.
pub fn bound_pcov_thinned(
    constants: &BlockConstants,
    params: &WalkerParams,
    channel: &ChannelParams,
    fading: &FadingModel,
    tau_linear: f64,
    q: f64,
) -> Result<f64> {
    require_tau(tau_linear)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!("q must be in (0,1], got {q}")));
    }
    let m = require_m(constants, params.n_orbits, params.n_sats_per_orbit)?;
    let a = constants.a_geom(params, channel);
    let qm = q * m;
    Ok((4.0 * fading.second_moment() / qm + 2.0 * channel.gain_tx_boost / tau_linear * a / qm).min(1.0))
}

/// `8 E[H²]/β + (4 g_t/(βτ)) A`.
pub fn k_thin(
    constants: &BlockConstants,
    params: &WalkerParams,
    channel: &ChannelParams,
    fading: &FadingModel,
    tau_linear: f64,
) -> f64 {
    let a = constants.a_geom(params, channel);
    let b = constants.beta;
    8.0 * fading.second_moment() / b + 4.0 * channel.gain_tx_boost / (b * tau_linear) * a
}

/// Activity-weighted size `qN` at which the thinned coverage bound reaches `eps`.
pub fn dimensioning_qn(k_thin: f64, eps: f64) -> f64 {
    k_thin / eps
}

/// `4 + 64 Var(H)`.
pub fn c_h(fading: &FadingModel) -> f64 {
    4.0 + 64.0 * fading.variance()
}

/// `(2 g_t/β) A C_H`: mean SINR is at most `K_SINR / N` for large `N`.
pub fn k_sinr(
    constants: &BlockConstants,
    params: &WalkerParams,
    channel: &ChannelParams,
    fading: &FadingModel,
) -> f64 {
    2.0 * channel.gain_tx_boost / constants.beta * constants.a_geom(params, channel) * c_h(fading)
}

/// Rate constant for the normalized check `qN C_erg / K_erg`:
/// `(2/(β ln 2)) (2 g_t A + 4 E[H²] SNR0)`. With `m + 1 >= βN/2` the
/// thinned ergodic bound becomes `K_erg / (qN)`.
pub fn k_erg(
    constants: &BlockConstants,
    params: &WalkerParams,
    channel: &ChannelParams,
    fading: &FadingModel,
) -> f64 {
    let a = constants.a_geom(params, channel);
    let snr0 = snr_at_min_distance(params, channel);
    2.0 / (constants.beta * LN_2)
        * (2.0 * channel.gain_tx_boost * a + 4.0 * fading.second_moment() * snr0)
}

/// Size threshold `max{4/β, 8/(βκ)}` above which the mean-SINR decay bound applies.
pub fn mean_sinr_threshold(constants: &BlockConstants, fading: &FadingModel) -> f64 {
    let (_, kappa) = fading.small_ball();
    (4.0 / constants.beta).max(8.0 / (constants.beta * kappa))
}

/// Bounds at one constellation size. Bound fields are `None` when the
/// size is below `n0` or `m < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n_orbits: usize,
    pub n_sats_per_orbit: usize,
    pub n_total: usize,
    pub m: i64,
    pub a_geom: f64,
    pub pcov_bound: Option<f64>,
    pub cerg_bound_bits: Option<f64>,
    /// Thinned bound at `q`, when a `q < 1` was requested.
    pub q: f64,
    pub pcov_thinned_bound: Option<f64>,
    pub k_thin: f64,
    pub k_sinr: f64,
    pub k_erg: f64,
    pub c_h: f64,
    pub sinr_bound: Option<f64>,
    pub status: String,
}

pub fn bound_report(
    constants: &BlockConstants,
    params: &WalkerParams,
    channel: &ChannelParams,
    fading: &FadingModel,
    tau_linear: f64,
    q: f64,
) -> BoundReport {
    let n_total = params.n_total();
    let pcov = bound_pcov(constants, params, channel, fading, tau_linear);
    let status = match &pcov {
        Ok(_) => "ok".to_string(),
        Err(Error::PreconditionUnmet(_)) if !constants.qualifies(params.n_orbits, params.n_sats_per_orbit) => {
            "precondition unmet".to_string()
        }
        Err(Error::PreconditionUnmet(_)) => "vacuous (m < 1)".to_string(),
        Err(e) => e.to_string(),
    };
    let ksinr = k_sinr(constants, params, channel, fading);
    BoundReport {
        n_orbits: params.n_orbits,
        n_sats_per_orbit: params.n_sats_per_orbit,
        n_total,
        m: constants.m(n_total),
        a_geom: constants.a_geom(params, channel),
        pcov_bound: pcov.ok(),
        cerg_bound_bits: bound_cerg(constants, params, channel, fading).ok(),
        q,
        pcov_thinned_bound: bound_pcov_thinned(constants, params, channel, fading, tau_linear, q).ok(),
        k_thin: k_thin(constants, params, channel, fading, tau_linear),
        k_sinr: ksinr,
        k_erg: k_erg(constants, params, channel, fading),
        c_h: c_h(fading),
        sinr_bound: constants
            .qualifies(params.n_orbits, params.n_sats_per_orbit)
            .then(|| ksinr / n_total as f64),
        status,
    }
}
