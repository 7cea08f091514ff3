//! Walker-delta constellation geometry in the Earth-fixed rotating frame.
//!
//! Satellite phases live on the torus `[0, 2π)²`: `theta` is the orbit-plane
//! longitude and `omega` the in-plane phase. The Walker map sends a phase pair
//! to a point on the sphere of radius `r`, and a ground user at latitude `l_u`
//! (longitude 0) sees a satellite when `X·u / (|X||u|) >= e/r`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Reduce an angle to `[0, period)` with a floored modulo.
pub fn wrap_angle(x: f64, period: f64) -> f64 {
    let y = x.rem_euclid(period);
    // rem_euclid can round up to `period` for tiny negative inputs
    if y >= period {
        0.0
    } else {
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerParams {
    pub n_orbits: usize,
    pub n_sats_per_orbit: usize,
    pub orbit_radius_km: f64,
    pub earth_radius_km: f64,
    pub inclination_rad: f64,
}

impl WalkerParams {
    pub fn new(
        n_orbits: usize,
        n_sats_per_orbit: usize,
        orbit_radius_km: f64,
        earth_radius_km: f64,
        inclination_rad: f64,
    ) -> Result<Self> {
        let p = Self {
            n_orbits,
            n_sats_per_orbit,
            orbit_radius_km,
            earth_radius_km,
            inclination_rad,
        };
        p.validate()?;
        Ok(p)
    }

    /// Shell at `altitude_km` above the standard Earth radius.
    pub fn from_altitude(
        n_orbits: usize,
        n_sats_per_orbit: usize,
        altitude_km: f64,
        inclination_rad: f64,
    ) -> Result<Self> {
        Self::new(
            n_orbits,
            n_sats_per_orbit,
            EARTH_RADIUS_KM + altitude_km,
            EARTH_RADIUS_KM,
            inclination_rad,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_orbits == 0 || self.n_sats_per_orbit == 0 {
            return Err(Error::InvalidParameter(
                "n_orbits and n_sats_per_orbit must be at least 1".into(),
            ));
        }
        if !(self.earth_radius_km > 0.0) || !(self.orbit_radius_km > self.earth_radius_km) {
            return Err(Error::InvalidParameter(format!(
                "need orbit_radius_km > earth_radius_km > 0, got r={} e={}",
                self.orbit_radius_km, self.earth_radius_km
            )));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.inclination_rad) {
            return Err(Error::InvalidParameter(format!(
                "inclination {} rad outside [0, pi]",
                self.inclination_rad
            )));
        }
        Ok(())
    }

    /// Same shell, different lattice size.
    pub fn with_size(&self, n_orbits: usize, n_sats_per_orbit: usize) -> Self {
        Self {
            n_orbits,
            n_sats_per_orbit,
            ..*self
        }
    }

    pub fn n_total(&self) -> usize {
        self.n_orbits * self.n_sats_per_orbit
    }

    /// Minimum possible user-satellite distance, `r - e`.
    pub fn min_distance_km(&self) -> f64 {
        self.orbit_radius_km - self.earth_radius_km
    }

    pub fn theta_cell(&self) -> f64 {
        TAU / self.n_orbits as f64
    }

    pub fn omega_cell(&self) -> f64 {
        TAU / self.n_sats_per_orbit as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position3 {
    pub x_km: f64,
    pub y_km: f64,
    pub z_km: f64,
}

impl Position3 {
    pub fn new(x_km: f64, y_km: f64, z_km: f64) -> Self {
        Self { x_km, y_km, z_km }
    }

    pub fn dot(&self, o: &Position3) -> f64 {
        self.x_km * o.x_km + self.y_km * o.y_km + self.z_km * o.z_km
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserPosition {
    pub latitude_rad: f64,
    pub cartesian_km: Position3,
}

impl UserPosition {
    pub fn new(latitude_rad: f64, earth_radius_km: f64) -> Result<Self> {
        if !(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2).contains(&latitude_rad) {
            return Err(Error::InvalidParameter(format!(
                "latitude {latitude_rad} rad outside [-pi/2, pi/2]"
            )));
        }
        let e = earth_radius_km;
        Ok(Self {
            latitude_rad,
            cartesian_km: Position3::new(e * latitude_rad.cos(), 0.0, e * latitude_rad.sin()),
        })
    }

    pub fn for_params(latitude_rad: f64, params: &WalkerParams) -> Result<Self> {
        Self::new(latitude_rad, params.earth_radius_km)
    }
}

/// The Walker map at time 0: phase pair `(theta, omega)` to a point on the
/// radius-`r` sphere.
pub fn walker_position(params: &WalkerParams, theta: f64, omega: f64) -> Position3 {
    let theta = wrap_angle(theta, TAU);
    let omega = wrap_angle(omega, TAU);
    let r = params.orbit_radius_km;
    let (sin_w, cos_w) = omega.sin_cos();
    let (sin_phi, cos_phi) = params.inclination_rad.sin_cos();
    let radial = (cos_w * cos_w + sin_w * sin_w * cos_phi * cos_phi).sqrt();
    let hat_theta = (sin_w * cos_phi).atan2(cos_w);
    let (sin_l, cos_l) = (hat_theta + theta).sin_cos();
    Position3::new(r * radial * cos_l, r * radial * sin_l, r * sin_w * sin_phi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteSlot {
    pub orbit: usize,
    pub slot: usize,
    pub position: Position3,
}

impl SatelliteSlot {
    /// Row-major flat index `orbit * n_s + slot`.
    pub fn flat_index(&self, n_sats_per_orbit: usize) -> usize {
        self.orbit * n_sats_per_orbit + self.slot
    }
}

pub fn orbit_theta(params: &WalkerParams, theta_bar: f64, orbit: usize) -> f64 {
    wrap_angle(orbit as f64 * params.theta_cell() + theta_bar, TAU)
}

pub fn slot_omega(params: &WalkerParams, omega_bar: f64, slot: usize) -> f64 {
    wrap_angle(slot as f64 * params.omega_cell() + omega_bar, TAU)
}

/// All `N_o * N_s` satellite positions for the phase shift `(theta_bar, omega_bar)`,
/// in row-major `(orbit, slot)` order.
pub fn snapshot(params: &WalkerParams, theta_bar: f64, omega_bar: f64) -> Vec<SatelliteSlot> {
    let mut out = Vec::with_capacity(params.n_total());
    for orbit in 0..params.n_orbits {
        let theta = orbit_theta(params, theta_bar, orbit);
        for slot in 0..params.n_sats_per_orbit {
            let omega = slot_omega(params, omega_bar, slot);
            out.push(SatelliteSlot {
                orbit,
                slot,
                position: walker_position(params, theta, omega),
            });
        }
    }
    out
}

pub fn cos_central_angle(sat: &Position3, user: &UserPosition) -> f64 {
    sat.dot(&user.cartesian_km) / (sat.norm() * user.cartesian_km.norm())
}

/// Horizon test `cos γ >= e/r`; the boundary counts as visible.
pub fn is_visible(sat: &Position3, user: &UserPosition, params: &WalkerParams) -> bool {
    cos_central_angle(sat, user) >= params.earth_radius_km / params.orbit_radius_km
}

pub fn distance(sat: &Position3, user: &UserPosition) -> f64 {
    let u = &user.cartesian_km;
    let dx = sat.x_km - u.x_km;
    let dy = sat.y_km - u.y_km;
    let dz = sat.z_km - u.z_km;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

pub fn horizon_distance(params: &WalkerParams) -> f64 {
    let r = params.orbit_radius_km;
    let e = params.earth_radius_km;
    (r * r - e * e).sqrt()
}

/// Visible satellites of the snapshot, in row-major order.
///
/// Each orbit plane is a great circle `X(ω) = r (cos ω a + sin ω b)`, so
/// `X·û / r = R cos(ω - ψ)` and the visible arc is `|ω - ψ| <= acos(e / (r R))`.
/// Only slots inside that arc (padded by a small margin) are evaluated, and
/// the exact [`is_visible`] test decides membership, so the result equals
/// filtering the full [`snapshot`].
pub fn visible_satellites(
    params: &WalkerParams,
    user: &UserPosition,
    theta_bar: f64,
    omega_bar: f64,
) -> Vec<SatelliteSlot> {
    const ARC_MARGIN: f64 = 1e-7;
    let n_s = params.n_sats_per_orbit;
    let cell_w = params.omega_cell();
    let ratio = params.earth_radius_km / params.orbit_radius_km;
    let (sin_phi, cos_phi) = params.inclination_rad.sin_cos();
    let u = user.cartesian_km;
    let un = u.norm();
    let (ux, uy, uz) = (u.x_km / un, u.y_km / un, u.z_km / un);

    let mut out = Vec::new();
    for orbit in 0..params.n_orbits {
        let theta = orbit_theta(params, theta_bar, orbit);
        let (sin_t, cos_t) = theta.sin_cos();
        let a_u = cos_t * ux + sin_t * uy;
        let b_u = -cos_phi * sin_t * ux + cos_phi * cos_t * uy + sin_phi * uz;
        let amp = a_u.hypot(b_u);
        if amp + 1e-9 < ratio {
            continue;
        }
        let psi = b_u.atan2(a_u);
        let half = (ratio / amp).min(1.0).acos() + ARC_MARGIN;

        let lo = ((psi - half - omega_bar) / cell_w).ceil() as i64;
        let hi = ((psi + half - omega_bar) / cell_w).floor() as i64;
        if hi < lo {
            continue;
        }
        let span = ((hi - lo + 1) as usize).min(n_s);
        let mut slots: Vec<usize> = (0..span)
            .map(|k| (lo + k as i64).rem_euclid(n_s as i64) as usize)
            .collect();
        slots.sort_unstable();
        for slot in slots {
            let omega = slot_omega(params, omega_bar, slot);
            let position = walker_position(params, theta, omega);
            if is_visible(&position, user, params) {
                out.push(SatelliteSlot {
                    orbit,
                    slot,
                    position,
                });
            }
        }
    }
    out
}

/// Abort early when the visible cap is unreachable by the Walker map: scans a
/// `grid x grid` phase grid for at least one visible position.
pub fn check_nondegenerate(params: &WalkerParams, user: &UserPosition, grid: usize) -> Result<()> {
    let step = TAU / grid as f64;
    for i in 0..grid {
        let theta = (i as f64 + 0.5) * step;
        for j in 0..grid {
            let omega = (j as f64 + 0.5) * step;
            if is_visible(&walker_position(params, theta, omega), user, params) {
                return Ok(());
            }
        }
    }
    Err(Error::DegenerateLatitude {
        latitude_deg: user.latitude_rad.to_degrees(),
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn table1(n_o: usize, n_s: usize) -> WalkerParams {
        WalkerParams::new(n_o, n_s, 6921.0, 6371.0, 53f64.to_radians()).unwrap()
    }

    fn equator() -> UserPosition {
        UserPosition::new(0.0, 6371.0).unwrap()
    }

    #[test]
    fn walker_position_closed_form_examples() {
        let p = table1(1, 1);
        let x = walker_position(&p, 0.0, 0.0);
        assert!((x.x_km - 6921.0).abs() < 1e-9 && x.y_km.abs() < 1e-9 && x.z_km.abs() < 1e-9);

        let polar = WalkerParams { inclination_rad: FRAC_PI_2, ..p };
        let x = walker_position(&polar, 0.0, FRAC_PI_2);
        assert!(x.x_km.abs() < 1e-9 && x.y_km.abs() < 1e-9);
        assert!((x.z_km - 6921.0).abs() < 1e-9);

        // radial factor cos 53°, longitude π/2, z = r sin 53°
        let x = walker_position(&p, 0.0, FRAC_PI_2);
        let c = 53f64.to_radians().cos();
        let s = 53f64.to_radians().sin();
        assert!(x.x_km.abs() < 1e-9);
        assert!((x.y_km - 6921.0 * c).abs() < 1e-9);
        assert!((x.z_km - 6921.0 * s).abs() < 1e-9);
        assert!((x.y_km - 4165.1).abs() < 0.5 && (x.z_km - 5527.4).abs() < 0.5);
        assert!((x.norm() - 6921.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(WalkerParams::new(0, 4, 7000.0, 6371.0, 0.5).is_err());
        assert!(WalkerParams::new(4, 4, 6000.0, 6371.0, 0.5).is_err());
        assert!(WalkerParams::new(4, 4, 7000.0, 6371.0, 4.0).is_err());
        assert!(UserPosition::new(2.0, 6371.0).is_err());
    }

    #[test]
    fn snapshot_layout() {
        let p = table1(1, 1);
        let s = snapshot(&p, 0.0, 0.0);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].position, walker_position(&p, 0.0, 0.0));

        let p = table1(2, 2);
        let s = snapshot(&p, 0.0, 0.0);
        let expect = [(0.0, 0.0), (0.0, PI), (PI, 0.0), (PI, PI)];
        for (sat, (t, w)) in s.iter().zip(expect) {
            assert_eq!(sat.position, walker_position(&p, t, w));
        }

        let p = table1(10, 20);
        let s = snapshot(&p, 0.123, 0.045);
        assert_eq!(s.len(), 200);
        for sat in &s {
            assert!((sat.position.norm() / 6921.0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn visibility_examples() {
        let p = table1(1, 1);
        let u = UserPosition::new(0.0, 6371.0).unwrap();
        assert!(is_visible(&Position3::new(6921.0, 0.0, 0.0), &u, &p));
        assert!(!is_visible(&Position3::new(-6921.0, 0.0, 0.0), &u, &p));

        // rim case with exact arithmetic: r = 5, e = 3, cos γ = 9/15 = e/r
        let unit = WalkerParams::new(1, 1, 5.0, 3.0, 0.5).unwrap();
        let u1 = UserPosition::new(0.0, 3.0).unwrap();
        let rim = Position3::new(3.0, 4.0, 0.0);
        assert_eq!(cos_central_angle(&rim, &u1), 3.0 / 5.0);
        assert!(is_visible(&rim, &u1, &unit));
    }

    #[test]
    fn distance_examples() {
        let p = table1(1, 1);
        let u = equator();
        assert!((distance(&Position3::new(6921.0, 0.0, 0.0), &u) - 550.0).abs() < 1e-9);
        assert!((distance(&Position3::new(-6921.0, 0.0, 0.0), &u) - (6921.0 + 6371.0)).abs() < 1e-9);
        let c = 6371.0 / 6921.0;
        let rim = Position3::new(6921.0 * c, 6921.0 * (1.0f64 - c * c).sqrt(), 0.0);
        assert!((distance(&rim, &u) - 2703.81).abs() < 0.01);
        assert!((horizon_distance(&p) - 2703.8124).abs() < 1e-3);
    }

    #[test]
    fn horizon_distance_identities() {
        let e = 6371.0;
        let p = WalkerParams::new(1, 1, e * 2f64.sqrt(), e, 0.3).unwrap();
        assert!((horizon_distance(&p) - e).abs() < 1e-9);
        let p = WalkerParams::new(1, 1, 2.0, 1.0, 0.3).unwrap();
        assert!((horizon_distance(&p) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn snapshot_shift_by_one_cell_permutes() {
        let p = table1(7, 5);
        let a = snapshot(&p, 0.05, 0.11);
        let b = snapshot(&p, 0.05 + p.theta_cell(), 0.11);
        for sat in &a {
            let hit = b.iter().any(|o| {
                let d = Position3::new(
                    o.position.x_km - sat.position.x_km,
                    o.position.y_km - sat.position.y_km,
                    o.position.z_km - sat.position.z_km,
                );
                d.norm() < 1e-6
            });
            assert!(hit, "satellite {:?} lost by the cell shift", sat);
        }
    }

    #[test]
    fn degenerate_latitude_detected() {
        let p = table1(1, 1);
        let pole = UserPosition::new(89f64.to_radians(), 6371.0).unwrap();
        assert!(matches!(
            check_nondegenerate(&p, &pole, 128),
            Err(Error::DegenerateLatitude { .. })
        ));
        assert!(check_nondegenerate(&p, &equator(), 128).is_ok());
    }

    proptest! {
        #[test]
        fn norm_preserved(theta in -10.0f64..10.0, omega in -10.0f64..10.0, inc in 0.0f64..PI) {
            let p = WalkerParams::new(1, 1, 6921.0, 6371.0, inc).unwrap();
            let x = walker_position(&p, theta, omega);
            prop_assert!((x.norm() / 6921.0 - 1.0).abs() < 1e-9);
        }

        #[test]
        fn visibility_matches_distance(theta in 0.0f64..TAU, omega in 0.0f64..TAU, lat in -1.5f64..1.5) {
            let p = table1(1, 1);
            let u = UserPosition::new(lat, 6371.0).unwrap();
            let x = walker_position(&p, theta, omega);
            let d = distance(&x, &u);
            prop_assert!(d >= 550.0 - 1e-9);
            let dmax = horizon_distance(&p);
            if (d - dmax).abs() > 1e-6 {
                prop_assert_eq!(is_visible(&x, &u, &p), d <= dmax);
            }
        }

        #[test]
        fn fast_visible_set_equals_brute_force(
            n_o in 1usize..40, n_s in 1usize..40,
            tb in 0.0f64..1.0, wb in 0.0f64..1.0,
            lat in -1.2f64..1.2, inc in 0.0f64..PI,
        ) {
            let p = WalkerParams::new(n_o, n_s, 6921.0, 6371.0, inc).unwrap();
            let u = UserPosition::new(lat, 6371.0).unwrap();
            let tb = tb * p.theta_cell();
            let wb = wb * p.omega_cell();
            let brute: Vec<_> = snapshot(&p, tb, wb)
                .into_iter()
                .filter(|s| is_visible(&s.position, &u, &p))
                .collect();
            let fast = visible_satellites(&p, &u, tb, wb);
            prop_assert_eq!(brute, fast);
        }
    }
}
