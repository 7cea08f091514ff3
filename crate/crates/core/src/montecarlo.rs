//! Densification sweeps: i.i.d. drops per constellation and policy, the four
//! estimators with confidence intervals, adaptive refinement, CSV output.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::DEFAULT_GRID_RESOLUTION;
use crate::channel::{db_to_linear, ActivityPolicy};
use crate::error::{Error, Result};
use crate::geometry::check_nondegenerate;
use crate::link::{evaluate_drop, DropResult, LinkModel};
use crate::rng::{point_key, DropStreams};
use crate::stats::{wilson_interval, Interval, MeanAccumulator, Z95};

/// Square-ish ladder from about 10^2 to 10^4 satellites.
pub const DEFAULT_LADDER: [(usize, usize); 8] = [
    (10, 10),
    (14, 14),
    (20, 20),
    (28, 28),
    (40, 40),
    (57, 57),
    (80, 80),
    (100, 100),
];

pub const THREADS_ENV: &str = "WALKER_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub constellations: Vec<(usize, usize)>,
    pub policies: Vec<ActivityPolicy>,
    pub tau_db: f64,
    pub base_drops: u64,
    pub max_drops: u64,
    /// Coverage below which a point continues to `max_drops`.
    pub refine_threshold: f64,
    pub master_seed: u64,
    /// Worker threads; `None` defers to `WALKER_THREADS`, then to rayon.
    pub threads: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            constellations: DEFAULT_LADDER.to_vec(),
            policies: default_policies(600.0),
            tau_db: 0.0,
            base_drops: 6000,
            max_drops: 30_000,
            refine_threshold: 0.05,
            master_seed: 1,
            threads: None,
        }
    }
}

pub fn default_policies(scaling_c: f64) -> Vec<ActivityPolicy> {
    vec![
        ActivityPolicy::FullReuse,
        ActivityPolicy::FixedThinning { q: 0.1 },
        ActivityPolicy::FixedThinning { q: 0.03 },
        ActivityPolicy::ScalingLaw { c: scaling_c },
    ]
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.constellations.is_empty() {
            return Err(Error::InvalidParameter("constellation list is empty".into()));
        }
        if self.constellations.iter().any(|&(a, b)| a == 0 || b == 0) {
            return Err(Error::InvalidParameter("constellation sizes must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidParameter("policy list is empty".into()));
        }
        if self.base_drops == 0 || self.base_drops > self.max_drops {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= base_drops <= max_drops, got {} and {}",
                self.base_drops, self.max_drops
            )));
        }
        if !self.tau_db.is_finite() {
            return Err(Error::InvalidParameter("threshold must be finite".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn tau_linear(&self) -> f64 {
        db_to_linear(self.tau_db)
    }
}

/// Thread count from an explicit value or `WALKER_THREADS`.
pub fn resolve_threads(explicit: Option<usize>) -> Option<usize> {
    explicit.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&n: &usize| n >= 1)
    })
}

/// Runs `f` on a pool of the resolved size (the global pool when unset).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match resolve_threads(threads) {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Drops `range` of one constellation, in index order.
pub fn run_drops(
    model: &LinkModel,
    policy: &ActivityPolicy,
    master_seed: u64,
    range: Range<u64>,
) -> Vec<DropResult> {
    let key = point_key(model.walker.n_orbits, model.walker.n_sats_per_orbit);
    range
        .into_par_iter()
        .map(|drop| evaluate_drop(model, policy, &DropStreams::new(master_seed, key, drop)))
        .collect()
}

/// Sequential tally of drop results; feeding drops in index order makes the
/// estimates independent of how the drops were scheduled.
#[derive(Debug, Clone, Default)]
pub struct Tally {
    pub drops: u64,
    pub covered: u64,
    pub no_visible: u64,
    pub rate: MeanAccumulator,
    pub sinr: MeanAccumulator,
    pub interference: MeanAccumulator,
    pub serving_distance: MeanAccumulator,
}

impl Tally {
    pub fn push(&mut self, r: &DropResult, tau_linear: f64) {
        self.drops += 1;
        if r.sinr > tau_linear {
            self.covered += 1;
        }
        match r.serving_distance_km {
            Some(d) => self.serving_distance.push(d),
            None => self.no_visible += 1,
        }
        self.rate.push((1.0 + r.sinr).log2());
        self.sinr.push(r.sinr);
        self.interference.push(r.interference);
    }

    pub fn p_cov(&self) -> f64 {
        self.covered as f64 / self.drops as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPointResult {
    pub n_orbits: usize,
    pub n_sats_per_orbit: usize,
    pub n_total: usize,
    pub policy: ActivityPolicy,
    pub policy_id: String,
    pub effective_q: f64,
    pub successes: u64,
    pub p_cov: f64,
    pub p_cov_ci: Interval,
    pub c_erg_bits: f64,
    pub c_erg_ci: Interval,
    pub mean_sinr: f64,
    pub mean_sinr_ci: Interval,
    pub mean_interference_over_p: f64,
    /// Over drops with a visible satellite; NaN if there were none.
    pub mean_serving_distance_km: f64,
    pub drops_used: u64,
    pub outage_no_visible_fraction: f64,
    /// `K/(qN)` overlay value, set by [`run_sweep`].
    pub guide: Option<f64>,
}

fn summarize(
    model: &LinkModel,
    policy: &ActivityPolicy,
    tally: &Tally,
) -> Result<SweepPointResult> {
    let n_total = model.walker.n_total();
    let mean_d = if tally.serving_distance.count() > 0 {
        tally.serving_distance.mean()
    } else {
        f64::NAN
    };
    Ok(SweepPointResult {
        n_orbits: model.walker.n_orbits,
        n_sats_per_orbit: model.walker.n_sats_per_orbit,
        n_total,
        policy: *policy,
        policy_id: policy.id(),
        effective_q: policy.effective_q(n_total),
        successes: tally.covered,
        p_cov: tally.p_cov(),
        p_cov_ci: wilson_interval(tally.covered, tally.drops, Z95)?,
        c_erg_bits: tally.rate.mean(),
        c_erg_ci: tally.rate.normal_ci(Z95),
        mean_sinr: tally.sinr.mean(),
        mean_sinr_ci: tally.sinr.normal_ci(Z95),
        mean_interference_over_p: tally.interference.mean() / model.channel.tx_power,
        mean_serving_distance_km: mean_d,
        drops_used: tally.drops,
        outage_no_visible_fraction: tally.no_visible as f64 / tally.drops as f64,
        guide: None,
    })
}

/// `base_drops` drops, then up to `max_drops` if coverage is below the refine threshold.
pub fn run_point(
    model: &LinkModel,
    config: &SweepConfig,
    n_orbits: usize,
    n_sats_per_orbit: usize,
    policy: &ActivityPolicy,
) -> Result<SweepPointResult> {
    config.validate()?;
    let model = model.with_size(n_orbits, n_sats_per_orbit);
    model.walker.validate()?;
    check_nondegenerate(&model.walker, &model.user, DEFAULT_GRID_RESOLUTION)?;
    let tau = config.tau_linear();
    with_threads(config.threads, || {
        let mut tally = Tally::default();
        for r in run_drops(&model, policy, config.master_seed, 0..config.base_drops) {
            tally.push(&r, tau);
        }
        if tally.p_cov() < config.refine_threshold && config.max_drops > config.base_drops {
            let more = run_drops(&model, policy, config.master_seed, config.base_drops..config.max_drops);
            for r in more {
                tally.push(&r, tau);
            }
        }
        summarize(&model, policy, &tally)
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub n_orbits: usize,
    pub n_sats_per_orbit: usize,
    pub policy_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub points: Vec<SweepPointResult>,
    pub failures: Vec<PointFailure>,
}

/// Constellations x policies, constellation-major. Failed points are listed
/// in `failures` and do not abort the sweep.
pub fn run_sweep(model: &LinkModel, config: &SweepConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for &(n_o, n_s) in &config.constellations {
        for policy in &config.policies {
            match run_point(model, config, n_o, n_s, policy) {
                Ok(p) => points.push(p),
                Err(e) => failures.push(PointFailure {
                    n_orbits: n_o,
                    n_sats_per_orbit: n_s,
                    policy_id: policy.id(),
                    message: e.to_string(),
                }),
            }
        }
    }
    attach_guides(&mut points);
    Ok(SweepOutcome { points, failures })
}

/// Guide `K/(qN)` with `K` matching coverage at the first point of each policy.
pub fn attach_guides(points: &mut [SweepPointResult]) {
    let mut anchors: Vec<(String, f64)> = Vec::new();
    for p in points.iter_mut() {
        let qn = p.effective_q * p.n_total as f64;
        let k = match anchors.iter().find(|(id, _)| *id == p.policy_id) {
            Some((_, k)) => *k,
            None => {
                let k = p.p_cov * qn;
                anchors.push((p.policy_id.clone(), k));
                k
            }
        };
        p.guide = Some(k / qn);
    }
}

pub const CSV_HEADER: [&str; 16] = [
    "n_o",
    "n_s",
    "n_total",
    "policy",
    "q",
    "p_cov",
    "p_cov_lo",
    "p_cov_hi",
    "c_erg",
    "c_erg_lo",
    "c_erg_hi",
    "mean_I_over_p",
    "mean_D0_km",
    "drops",
    "outage_frac",
    "guide",
];

/// Nine significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_sweep_csv<W: Write>(out: W, points: &[SweepPointResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in points {
        w.write_record([
            p.n_orbits.to_string(),
            p.n_sats_per_orbit.to_string(),
            p.n_total.to_string(),
            p.policy_id.clone(),
            fmt_num(p.effective_q),
            fmt_num(p.p_cov),
            fmt_num(p.p_cov_ci.lo),
            fmt_num(p.p_cov_ci.hi),
            fmt_num(p.c_erg_bits),
            fmt_num(p.c_erg_ci.lo),
            fmt_num(p.c_erg_ci.hi),
            fmt_num(p.mean_interference_over_p),
            fmt_num(p.mean_serving_distance_km),
            p.drops_used.to_string(),
            fmt_num(p.outage_no_visible_fraction),
            fmt_num(p.guide.unwrap_or(f64::NAN)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed sweep CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_o: usize,
    pub n_s: usize,
    pub n_total: usize,
    pub policy: String,
    pub q: f64,
    pub p_cov: f64,
    pub p_cov_lo: f64,
    pub p_cov_hi: f64,
    pub c_erg: f64,
    pub c_erg_lo: f64,
    pub c_erg_hi: f64,
    #[serde(rename = "mean_I_over_p")]
    pub mean_i_over_p: f64,
    #[serde(rename = "mean_D0_km")]
    pub mean_d0_km: f64,
    pub drops: u64,
    pub outage_frac: f64,
    pub guide: f64,
}

pub fn read_sweep_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidParameter(format!(
            "sweep CSV header mismatch: {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{calibrate_noise, ChannelParams, FadingModel};
    use crate::geometry::{is_visible, walker_position, UserPosition, WalkerParams};

    fn model(fading: FadingModel) -> LinkModel {
        let walker = WalkerParams::new(1, 1, 6921.0, 6371.0, 53f64.to_radians()).unwrap();
        let noise = calibrate_noise(1.0, 2.5, 1.0, 10.0, 550.0, 12.0, true).unwrap();
        LinkModel {
            walker,
            user: UserPosition::new(0.0, 6371.0).unwrap(),
            channel: ChannelParams::new(1.0, 2.5, 1.0, 10.0, 1000.0, noise).unwrap(),
            fading,
        }
    }

    fn config(drops: u64) -> SweepConfig {
        SweepConfig {
            constellations: vec![(1, 1)],
            policies: vec![ActivityPolicy::FullReuse],
            base_drops: drops,
            max_drops: drops,
            master_seed: 17,
            threads: Some(1),
            ..SweepConfig::default()
        }
    }

    #[test]
    fn single_satellite_coverage_matches_phase_grid() {
        // oracle: fraction of a fine phase grid where the lone satellite is
        // visible and its unit-fading SNR exceeds 1
        let m = model(FadingModel::UnitDeterministic);
        let grid = 1000;
        let step = std::f64::consts::TAU / grid as f64;
        let mut hit = 0usize;
        for i in 0..grid {
            for j in 0..grid {
                let x = walker_position(&m.walker, (i as f64 + 0.5) * step, (j as f64 + 0.5) * step);
                if is_visible(&x, &m.user, &m.walker) {
                    let d = crate::geometry::distance(&x, &m.user);
                    if crate::channel::rx_power(d, 1.0, &m.channel) / m.channel.noise_power > 1.0 {
                        hit += 1;
                    }
                }
            }
        }
        let exact = hit as f64 / (grid * grid) as f64;
        let r = run_point(&m, &config(20_000), 1, 1, &ActivityPolicy::FullReuse).unwrap();
        let se = (exact * (1.0 - exact) / 20_000.0).sqrt();
        assert!((r.p_cov - exact).abs() < 4.0 * se, "{} vs {exact}", r.p_cov);
        assert!(r.p_cov_ci.contains(r.p_cov));
        assert!((r.p_cov + r.outage_no_visible_fraction) <= 1.0);
    }

    #[test]
    fn repeated_runs_and_policy_equivalence() {
        let m = model(FadingModel::RayleighExp1);
        let c = config(800);
        let a = run_point(&m, &c, 12, 15, &ActivityPolicy::FullReuse).unwrap();
        let b = run_point(&m, &c, 12, 15, &ActivityPolicy::FullReuse).unwrap();
        assert_eq!(a, b);
        let q1 = run_point(&m, &c, 12, 15, &ActivityPolicy::FixedThinning { q: 1.0 }).unwrap();
        assert_eq!(a.p_cov, q1.p_cov);
        assert_eq!(a.c_erg_bits, q1.c_erg_bits);
        assert_eq!(a.mean_interference_over_p, q1.mean_interference_over_p);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let m = model(FadingModel::RayleighExp1);
        let one = run_point(&m, &config(500), 20, 20, &ActivityPolicy::FixedThinning { q: 0.1 }).unwrap();
        let four = run_point(
            &m,
            &SweepConfig {
                threads: Some(4),
                ..config(500)
            },
            20,
            20,
            &ActivityPolicy::FixedThinning { q: 0.1 },
        )
        .unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn refinement_extends_low_coverage_points() {
        let m = model(FadingModel::RayleighExp1);
        let c = SweepConfig {
            base_drops: 200,
            max_drops: 600,
            refine_threshold: 1.1,
            ..config(200)
        };
        assert_eq!(run_point(&m, &c, 10, 10, &ActivityPolicy::FullReuse).unwrap().drops_used, 600);
        let c = SweepConfig {
            refine_threshold: 0.0,
            ..c
        };
        assert_eq!(run_point(&m, &c, 10, 10, &ActivityPolicy::FullReuse).unwrap().drops_used, 200);
    }

    #[test]
    fn sweep_cardinality_and_guides() {
        let m = model(FadingModel::RayleighExp1);
        let c = SweepConfig {
            constellations: vec![(10, 10), (20, 10)],
            policies: vec![ActivityPolicy::FullReuse, ActivityPolicy::FixedThinning { q: 0.5 }],
            ..config(300)
        };
        let out = run_sweep(&m, &c).unwrap();
        assert_eq!(out.points.len(), 4);
        assert!(out.failures.is_empty());
        // same policy at doubled N: guide halves
        for policy in ["full", "q=0.5"] {
            let g: Vec<f64> = out
                .points
                .iter()
                .filter(|p| p.policy_id == policy)
                .map(|p| p.guide.unwrap())
                .collect();
            assert!((g[1] - 0.5 * g[0]).abs() <= 1e-15 * g[0].abs().max(1.0));
            let first = out.points.iter().find(|p| p.policy_id == policy).unwrap();
            assert!((first.guide.unwrap() - first.p_cov).abs() < 1e-15);
        }
        for p in &out.points {
            assert!((0.0..=1.0).contains(&p.p_cov) && p.c_erg_bits >= 0.0);
            assert!(p.mean_interference_over_p >= 0.0);
        }
    }

    #[test]
    fn sweep_records_failures_without_aborting() {
        let polar = LinkModel {
            user: UserPosition::new(89f64.to_radians(), 6371.0).unwrap(),
            ..model(FadingModel::RayleighExp1)
        };
        let out = run_sweep(&polar, &config(10)).unwrap();
        assert!(out.points.is_empty());
        assert_eq!(out.failures.len(), 1);
        assert!(out.failures[0].message.contains("degenerate latitude"));
    }

    #[test]
    fn thinning_order_in_coverage() {
        let m = model(FadingModel::RayleighExp1);
        let c = config(6000);
        let lo = run_point(&m, &c, 28, 28, &ActivityPolicy::FixedThinning { q: 0.03 }).unwrap();
        let hi = run_point(&m, &c, 28, 28, &ActivityPolicy::FixedThinning { q: 0.1 }).unwrap();
        let se = ((lo.p_cov * (1.0 - lo.p_cov) + hi.p_cov * (1.0 - hi.p_cov)) / 6000.0).sqrt();
        assert!(lo.p_cov >= hi.p_cov - 3.0 * se);
    }

    #[test]
    fn csv_round_trip() {
        let m = model(FadingModel::RayleighExp1);
        let out = run_sweep(&m, &SweepConfig {
            constellations: vec![(10, 10)],
            ..config(100)
        })
        .unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &out.points).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "n_o,n_s,n_total,policy,q,p_cov,p_cov_lo,p_cov_hi,c_erg,c_erg_lo,c_erg_hi,mean_I_over_p,mean_D0_km,drops,outage_frac,guide\n"
        ));
        let rows = read_sweep_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].policy, "full");
        assert_eq!(fmt_num(rows[0].p_cov), fmt_num(out.points[0].p_cov));
        assert!(read_sweep_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SweepConfig::default().validate().is_ok());
        let bad = SweepConfig {
            base_drops: 10,
            max_drops: 5,
            ..SweepConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SweepConfig {
            constellations: vec![],
            ..SweepConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
