//! Post-hoc checks of a sweep against the certificate: normalized scaling
//! ratios, growth and decay slopes, and bound dominance.

use serde::{Deserialize, Serialize};

use crate::bounds::{bound_cerg, bound_pcov, bound_pcov_thinned, k_erg, k_thin, BlockConstants};
use crate::error::{Error, Result};
use crate::link::LinkModel;
use crate::montecarlo::{SweepPointResult, SweepRow};
use crate::stats::loglog_slope;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckThresholds {
    pub interference_slope: (f64, f64),
    pub pcov_slope_max: f64,
    pub pcov_slope_points: usize,
    pub scaling_factor: f64,
    pub scaling_anchor_n: usize,
}

impl Default for CheckThresholds {
    fn default() -> Self {
        Self {
            interference_slope: (0.85, 1.15),
            pcov_slope_max: -0.7,
            pcov_slope_points: 4,
            scaling_factor: 2.0,
            scaling_anchor_n: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub offending: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn item(&self, name: &str) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

impl From<&SweepPointResult> for SweepRow {
    fn from(p: &SweepPointResult) -> Self {
        SweepRow {
            n_o: p.n_orbits,
            n_s: p.n_sats_per_orbit,
            n_total: p.n_total,
            policy: p.policy_id.clone(),
            q: p.effective_q,
            p_cov: p.p_cov,
            p_cov_lo: p.p_cov_ci.lo,
            p_cov_hi: p.p_cov_ci.hi,
            c_erg: p.c_erg_bits,
            c_erg_lo: p.c_erg_ci.lo,
            c_erg_hi: p.c_erg_ci.hi,
            mean_i_over_p: p.mean_interference_over_p,
            mean_d0_km: p.mean_serving_distance_km,
            drops: p.drops_used,
            outage_frac: p.outage_no_visible_fraction,
            guide: p.guide.unwrap_or(f64::NAN),
        }
    }
}

fn label(r: &SweepRow) -> String {
    format!("({}, {}) {}", r.n_o, r.n_s, r.policy)
}

fn policy_rows<'a>(rows: &'a [SweepRow], pred: impl Fn(&str) -> bool) -> Vec<&'a SweepRow> {
    let mut v: Vec<&SweepRow> = rows.iter().filter(|r| pred(&r.policy)).collect();
    v.sort_by_key(|r| r.n_total);
    v
}

/// Coverage with zero successes replaced by `(k + 1/2)/(n + 1)` so that
/// log-scale fits stay finite.
pub fn smoothed_pcov(p_cov: f64, drops: u64) -> f64 {
    let k = (p_cov * drops as f64).round();
    (k + 0.5) / (drops as f64 + 1.0)
}

/// Slope of `ln E[I]` against `ln N` over all full-reuse rows.
pub fn interference_slope(rows: &[SweepRow]) -> Result<f64> {
    let full = policy_rows(rows, |p| p == "full");
    let xs: Vec<f64> = full.iter().map(|r| r.n_total as f64).collect();
    let ys: Vec<f64> = full.iter().map(|r| r.mean_i_over_p).collect();
    loglog_slope(&xs, &ys)
}

/// Slope of smoothed full-reuse coverage over the `last` largest sizes.
pub fn pcov_tail_slope(rows: &[SweepRow], last: usize) -> Result<f64> {
    let full = policy_rows(rows, |p| p == "full");
    let tail = &full[full.len().saturating_sub(last)..];
    let xs: Vec<f64> = tail.iter().map(|r| r.n_total as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|r| smoothed_pcov(r.p_cov, r.drops)).collect();
    loglog_slope(&xs, &ys)
}

/// Value of `f` at `n` on a curve sorted by `N`: an exact row when present,
/// otherwise log-log interpolation between the bracketing rows.
pub fn value_at(curve: &[&SweepRow], n: usize, f: impl Fn(&SweepRow) -> f64) -> Option<f64> {
    if let Some(r) = curve.iter().find(|r| r.n_total == n) {
        return Some(f(r));
    }
    let hi = curve.iter().position(|r| r.n_total > n)?;
    if hi == 0 {
        return None;
    }
    let (a, b) = (curve[hi - 1], curve[hi]);
    let (ya, yb) = (f(a), f(b));
    if !(ya > 0.0 && yb > 0.0) {
        return None;
    }
    let t = ((n as f64).ln() - (a.n_total as f64).ln())
        / ((b.n_total as f64).ln() - (a.n_total as f64).ln());
    Some((ya.ln() + t * (yb.ln() - ya.ln())).exp())
}

/// `E[I]` at the largest `N` over `E[I]` at the anchor, for the scaling-law policy.
pub fn scaling_interference_ratio(rows: &[SweepRow], anchor_n: usize) -> Result<(f64, usize)> {
    let curve = policy_rows(rows, |p| p.starts_with("scaling"));
    let last = curve
        .last()
        .ok_or_else(|| Error::InvalidParameter("no scaling-law rows in the sweep".into()))?;
    let at_anchor = value_at(&curve, anchor_n, |r| r.mean_i_over_p).ok_or_else(|| {
        Error::InvalidParameter(format!("scaling-law curve does not cover N = {anchor_n}"))
    })?;
    Ok((last.mean_i_over_p / at_anchor, last.n_total))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DominanceTally {
    pub compared: usize,
    pub vacuous: usize,
    pub violations: usize,
}

/// Upper CI ends against the closed-form bounds at every row with
/// `min(N_o, N_s) >= n0`. Rows where the bound needs `m >= 1` and `m < 1`
/// are counted as vacuous.
pub fn dominance(
    rows: &[SweepRow],
    constants: &BlockConstants,
    model: &LinkModel,
    tau_linear: f64,
) -> (DominanceTally, Vec<String>) {
    let mut tally = DominanceTally::default();
    let mut offending = Vec::new();
    let mut compare = |what: &str, r: &SweepRow, mc: f64, bound: Result<f64>| match bound {
        Ok(b) => {
            tally.compared += 1;
            if mc > b {
                tally.violations += 1;
                offending.push(format!("{} {what}: {mc:.8e} > {b:.8e}", label(r)));
            }
        }
        Err(Error::PreconditionUnmet(_)) => tally.vacuous += 1,
        Err(e) => {
            tally.violations += 1;
            offending.push(format!("{} {what}: {e}", label(r)));
        }
    };
    for r in rows.iter().filter(|r| constants.qualifies(r.n_o, r.n_s)) {
        let w = model.walker.with_size(r.n_o, r.n_s);
        let (ch, fad) = (&model.channel, &model.fading);
        if r.q >= 1.0 {
            compare("p_cov", r, r.p_cov_hi, bound_pcov(constants, &w, ch, fad, tau_linear));
            compare("c_erg", r, r.c_erg_hi, bound_cerg(constants, &w, ch, fad));
        } else {
            compare(
                "p_cov thinned",
                r,
                r.p_cov_hi,
                bound_pcov_thinned(constants, &w, ch, fad, tau_linear, r.q),
            );
        }
    }
    (tally, offending)
}

/// The scaling-check report on a sweep.
pub fn run_checks(
    rows: &[SweepRow],
    constants: &BlockConstants,
    model: &LinkModel,
    tau_linear: f64,
    th: &CheckThresholds,
) -> CheckReport {
    let mut items = Vec::new();
    let walker = &model.walker;
    let kt = k_thin(constants, walker, &model.channel, &model.fading, tau_linear);
    let ke = k_erg(constants, walker, &model.channel, &model.fading);

    let mut ratio_item = |name: &str, k: f64, f: &dyn Fn(&SweepRow) -> f64| {
        let mut worst: f64 = 0.0;
        let mut offending = Vec::new();
        for r in rows {
            let ratio = r.q * r.n_total as f64 * f(r) / k;
            worst = worst.max(ratio);
            if !(ratio <= 1.0) {
                offending.push(format!("{}: {ratio:.8e}", label(r)));
            }
        }
        items.push(CheckItem {
            name: name.into(),
            passed: offending.is_empty() && !rows.is_empty(),
            detail: format!("max ratio {worst:.8e} over {} rows (K = {k:.8e})", rows.len()),
            offending,
        });
    };
    ratio_item("pcov_ratio", kt, &|r| r.p_cov);
    ratio_item("cerg_ratio", ke, &|r| r.c_erg);

    let (lo, hi) = th.interference_slope;
    items.push(match interference_slope(rows) {
        Ok(s) => CheckItem {
            name: "interference_slope".into(),
            passed: lo <= s && s <= hi,
            detail: format!("slope {s:.6} (want [{lo}, {hi}])"),
            offending: vec![],
        },
        Err(e) => failed("interference_slope", e),
    });

    items.push(match pcov_tail_slope(rows, th.pcov_slope_points) {
        Ok(s) => CheckItem {
            name: "pcov_slope".into(),
            passed: s <= th.pcov_slope_max,
            detail: format!(
                "slope {s:.6} over last {} sizes (want <= {})",
                th.pcov_slope_points, th.pcov_slope_max
            ),
            offending: vec![],
        },
        Err(e) => failed("pcov_slope", e),
    });

    items.push(match scaling_interference_ratio(rows, th.scaling_anchor_n) {
        Ok((ratio, n_last)) => CheckItem {
            name: "scaling_flattening".into(),
            passed: ratio <= th.scaling_factor && ratio >= 1.0 / th.scaling_factor,
            detail: format!(
                "E[I](N={n_last}) / E[I](N={}) = {ratio:.6} (want within factor {})",
                th.scaling_anchor_n, th.scaling_factor
            ),
            offending: vec![],
        },
        Err(e) => failed("scaling_flattening", e),
    });

    let (tally, offending) = dominance(rows, constants, model, tau_linear);
    items.push(CheckItem {
        name: "bound_dominance".into(),
        passed: tally.violations == 0,
        detail: format!(
            "{} comparisons, {} vacuous (m < 1), {} violations",
            tally.compared, tally.vacuous, tally.violations
        ),
        offending,
    });

    CheckReport { items }
}

fn failed(name: &str, e: Error) -> CheckItem {
    CheckItem {
        name: name.into(),
        passed: false,
        detail: e.to_string(),
        offending: vec![],
    }
}
