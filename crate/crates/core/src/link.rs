//! One Monte Carlo drop: phase sample, nearest-visible association, signal,
//! thinned interference and SINR.

use serde::{Deserialize, Serialize};

use crate::bounds::BlockConstants;
use crate::channel::{draw_activity, draw_fading, rx_power, ActivityPolicy, ChannelParams, FadingModel};
use crate::geometry::{distance, is_visible, visible_satellites, SatelliteSlot, UserPosition, WalkerParams};
use crate::phase::{sample_phase, PhaseState};
use crate::rng::{DropStreams, Purpose};

/// Everything a drop needs besides its random streams and activity policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub walker: WalkerParams,
    pub user: UserPosition,
    pub channel: ChannelParams,
    pub fading: FadingModel,
}

impl LinkModel {
    pub fn with_size(&self, n_orbits: usize, n_sats_per_orbit: usize) -> Self {
        Self {
            walker: self.walker.with_size(n_orbits, n_sats_per_orbit),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropResult {
    /// `None` when no satellite is visible (outage).
    pub serving_distance_km: Option<f64>,
    pub signal: f64,
    pub interference: f64,
    pub sinr: f64,
    pub n_visible: usize,
    pub n_active_interferers: usize,
}

impl DropResult {
    fn outage() -> Self {
        Self {
            serving_distance_km: None,
            signal: 0.0,
            interference: 0.0,
            sinr: 0.0,
            n_visible: 0,
            n_active_interferers: 0,
        }
    }
}

pub fn sinr(signal: f64, interference: f64, noise_power: f64) -> f64 {
    signal / (interference + noise_power)
}

/// Index (into `sats`) and distance of the nearest visible satellite. Ties go
/// to the earliest entry, i.e. the lowest `(orbit, slot)` for row-major input.
pub fn nearest_visible(
    sats: &[SatelliteSlot],
    user: &UserPosition,
    params: &WalkerParams,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in sats.iter().enumerate() {
        if !is_visible(&s.position, user, params) {
            continue;
        }
        let d = distance(&s.position, user);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best
}

/// Per-link record of a drop, for diagnostics and property tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSample {
    pub orbit: usize,
    pub slot: usize,
    pub distance_km: f64,
    pub fading: f64,
    pub active: bool,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropDetail {
    pub phase: PhaseState,
    pub result: DropResult,
    /// Visible links in row-major order.
    pub links: Vec<LinkSample>,
    /// Position of the serving link in `links`.
    pub serving: Option<usize>,
}

/// Evaluates the drop at a given phase state.
///
/// Fading for the satellite with flat index `k` comes from the stream
/// `(Fading, k)` and its activity from `(Activity, k)`, so the outcome for a
/// satellite does not depend on which other satellites are visible.
pub fn evaluate_at_phase(
    model: &LinkModel,
    policy: &ActivityPolicy,
    phase: PhaseState,
    streams: &DropStreams,
) -> DropDetail {
    let walker = &model.walker;
    let n_total = walker.n_total();
    let visible = visible_satellites(walker, &model.user, phase.theta_bar, phase.omega_bar);
    let Some((serving, _)) = nearest_visible(&visible, &model.user, walker) else {
        return DropDetail {
            phase,
            result: DropResult::outage(),
            links: Vec::new(),
            serving: None,
        };
    };

    let mut links = Vec::with_capacity(visible.len());
    let mut signal = 0.0;
    let mut interference = 0.0;
    let mut n_active = 0;
    for (k, sat) in visible.iter().enumerate() {
        let flat = sat.flat_index(walker.n_sats_per_orbit) as u64;
        let d = distance(&sat.position, &model.user);
        let h = draw_fading(&model.fading, &mut streams.stream(Purpose::Fading, flat));
        let power = rx_power(d, h, &model.channel);
        let active = if k == serving {
            signal = power;
            true
        } else {
            // full reuse needs no draw; q = 1 thinning still agrees with it
            let a = matches!(policy, ActivityPolicy::FullReuse)
                || draw_activity(policy, n_total, &mut streams.stream(Purpose::Activity, flat));
            if a {
                interference += power;
                n_active += 1;
            }
            a
        };
        links.push(LinkSample {
            orbit: sat.orbit,
            slot: sat.slot,
            distance_km: d,
            fading: h,
            active,
            power,
        });
    }

    DropDetail {
        phase,
        result: DropResult {
            serving_distance_km: Some(links[serving].distance_km),
            signal,
            interference,
            sinr: sinr(signal, interference, model.channel.noise_power),
            n_visible: visible.len(),
            n_active_interferers: n_active,
        },
        links,
        serving: Some(serving),
    }
}

/// Samples the phase from the drop's `Phase` stream and evaluates the drop.
pub fn evaluate_drop(model: &LinkModel, policy: &ActivityPolicy, streams: &DropStreams) -> DropResult {
    evaluate_detailed(model, policy, streams).result
}

pub fn evaluate_detailed(model: &LinkModel, policy: &ActivityPolicy, streams: &DropStreams) -> DropDetail {
    let phase = sample_phase(&mut streams.stream(Purpose::Phase, 0), &model.walker);
    evaluate_at_phase(model, policy, phase, streams)
}

/// Visible non-serving satellites with distance in `[d1, d2]`, and the
/// unit-fading interference floor `count * p g_r d2^-α` they guarantee.
pub fn interference_lower_witness(
    sats: &[SatelliteSlot],
    user: &UserPosition,
    params: &WalkerParams,
    channel: &ChannelParams,
    block: &BlockConstants,
) -> (usize, f64) {
    let serving = nearest_visible(sats, user, params).map(|(k, _)| k);
    let count = sats
        .iter()
        .enumerate()
        .filter(|(k, s)| {
            Some(*k) != serving && is_visible(&s.position, user, params) && {
                let d = distance(&s.position, user);
                block.d1_km <= d && d <= block.d2_km
            }
        })
        .count();
    (count, count as f64 * block.interference_unit(channel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::calibrate_noise;
    use crate::geometry::{snapshot, Position3};
    use crate::rng::point_key;

    fn model(n_o: usize, n_s: usize, fading: FadingModel) -> LinkModel {
        let walker = WalkerParams::new(n_o, n_s, 6921.0, 6371.0, 53f64.to_radians()).unwrap();
        let noise = calibrate_noise(1.0, 2.5, 1.0, 10.0, 550.0, 12.0, true).unwrap();
        LinkModel {
            walker,
            user: UserPosition::new(0.0, 6371.0).unwrap(),
            channel: ChannelParams::new(1.0, 2.5, 1.0, 10.0, 1000.0, noise).unwrap(),
            fading,
        }
    }

    fn slot(orbit: usize, slot: usize, p: Position3) -> SatelliteSlot {
        SatelliteSlot {
            orbit,
            slot,
            position: p,
        }
    }

    #[test]
    fn nearest_visible_examples() {
        let m = model(1, 1, FadingModel::UnitDeterministic);
        let overhead = snapshot(&m.walker, 0.0, 0.0);
        let (k, d) = nearest_visible(&overhead, &m.user, &m.walker).unwrap();
        assert_eq!(k, 0);
        assert!((d - 550.0).abs() < 1e-9);

        let hidden = snapshot(&m.walker, std::f64::consts::PI, 0.0);
        assert!(nearest_visible(&hidden, &m.user, &m.walker).is_none());

        // two visible satellites at 700 and 900 km, placed along the local vertical plane
        let at = |d: f64| {
            let (r, e) = (6921.0f64, 6371.0f64);
            let c = (r * r + e * e - d * d) / (2.0 * r * e);
            Position3::new(r * c, r * (1.0 - c * c).sqrt(), 0.0)
        };
        let sats = vec![slot(0, 0, at(900.0)), slot(0, 1, at(700.0))];
        let (k, d) = nearest_visible(&sats, &m.user, &m.walker).unwrap();
        assert_eq!(k, 1);
        assert!((d - 700.0).abs() < 1e-6);

        let tie = vec![slot(0, 3, at(800.0)), slot(1, 0, at(800.0))];
        assert_eq!(nearest_visible(&tie, &m.user, &m.walker).unwrap().0, 0);
    }

    #[test]
    fn single_overhead_satellite_reproduces_calibration() {
        let m = model(1, 1, FadingModel::UnitDeterministic);
        let streams = DropStreams::new(1, point_key(1, 1), 0);
        let phase = PhaseState::new(0.0, 0.0, &m.walker);
        let d = evaluate_at_phase(&m, &ActivityPolicy::FullReuse, phase, &streams);
        assert_eq!(d.result.interference, 0.0);
        assert!((d.result.sinr - 10f64.powf(1.2)).abs() < 1e-9);
        assert!((d.result.sinr - 15.85).abs() < 0.01);

        let phase = PhaseState::new(std::f64::consts::PI, 0.0, &m.walker);
        let d = evaluate_at_phase(&m, &ActivityPolicy::FullReuse, phase, &streams);
        assert_eq!(d.result.sinr, 0.0);
        assert_eq!(d.result.serving_distance_km, None);
        assert_eq!(d.result.n_visible, 0);
    }

    #[test]
    fn stored_sinr_is_recomputable() {
        let m = model(20, 20, FadingModel::RayleighExp1);
        for drop in 0..200 {
            let s = DropStreams::new(9, point_key(20, 20), drop);
            let r = evaluate_drop(&m, &ActivityPolicy::FixedThinning { q: 0.3 }, &s);
            assert_eq!(r.sinr, sinr(r.signal, r.interference, m.channel.noise_power));
            if let Some(d) = r.serving_distance_km {
                assert!(d >= 550.0 - 1e-9 && d <= 2703.82);
            }
        }
    }

    #[test]
    fn detail_is_consistent_with_brute_force_snapshot() {
        let m = model(14, 14, FadingModel::RayleighExp1);
        let policy = ActivityPolicy::FixedThinning { q: 0.5 };
        for drop in 0..50 {
            let s = DropStreams::new(3, point_key(14, 14), drop);
            let det = evaluate_detailed(&m, &policy, &s);
            let all = snapshot(&m.walker, det.phase.theta_bar, det.phase.omega_bar);
            let vis: Vec<_> = all
                .iter()
                .filter(|x| is_visible(&x.position, &m.user, &m.walker))
                .collect();
            assert_eq!(vis.len(), det.result.n_visible);
            let by_brute = nearest_visible(&all, &m.user, &m.walker).map(|(_, d)| d);
            assert_eq!(by_brute, det.result.serving_distance_km);
            let i: f64 = det
                .links
                .iter()
                .enumerate()
                .filter(|(k, l)| Some(*k) != det.serving && l.active)
                .map(|(_, l)| l.power)
                .sum();
            assert!((i - det.result.interference).abs() <= 1e-12 * i.max(1e-30));
        }
    }

    #[test]
    fn q_one_equals_full_reuse() {
        let m = model(20, 20, FadingModel::RayleighExp1);
        for drop in 0..100 {
            let s = DropStreams::new(77, point_key(20, 20), drop);
            let a = evaluate_drop(&m, &ActivityPolicy::FullReuse, &s);
            let b = evaluate_drop(&m, &ActivityPolicy::FixedThinning { q: 1.0 }, &s);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn extra_interferer_lowers_sinr() {
        for (s, i, n, extra) in [(1.0, 0.5, 0.1, 1e-6), (1e-7, 3e-6, 8.9e-8, 1e-12)] {
            assert!(sinr(s, i + extra, n) < sinr(s, i, n));
        }
    }

    #[test]
    fn thinning_is_monotone_pathwise() {
        // shared uniforms: the active set at q1 is contained in the active set at q2 > q1
        let m = model(28, 28, FadingModel::RayleighExp1);
        for drop in 0..100 {
            let s = DropStreams::new(5, point_key(28, 28), drop);
            let lo = evaluate_drop(&m, &ActivityPolicy::FixedThinning { q: 0.03 }, &s);
            let hi = evaluate_drop(&m, &ActivityPolicy::FixedThinning { q: 0.1 }, &s);
            assert!(lo.interference <= hi.interference);
            assert!(lo.sinr >= hi.sinr);
        }
    }

    #[test]
    fn witness_floor_bounds_interference() {
        let block = BlockConstants::for_tests(1200.0, 1700.0);
        let m = model(50, 50, FadingModel::UnitDeterministic);
        let mut saw_positive = false;
        for drop in 0..100 {
            let s = DropStreams::new(8, point_key(50, 50), drop);
            let det = evaluate_detailed(&m, &ActivityPolicy::FullReuse, &s);
            let all = snapshot(&m.walker, det.phase.theta_bar, det.phase.omega_bar);
            let (count, floor) =
                interference_lower_witness(&all, &m.user, &m.walker, &m.channel, &block);
            assert!((floor - count as f64 * 1700f64.powf(-2.5)).abs() < 1e-20);
            assert!(det.result.interference >= floor);
            saw_positive |= count > 0;
        }
        assert!(saw_positive);

        let none = snapshot(&m.walker.with_size(1, 1), std::f64::consts::PI, 0.0);
        assert_eq!(
            interference_lower_witness(&none, &m.user, &m.walker, &m.channel, &block),
            (0, 0.0)
        );
    }
}
