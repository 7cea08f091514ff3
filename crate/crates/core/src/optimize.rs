//! Finite search for the constellation shape maximizing mean SINR.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{k_sinr, mean_sinr_threshold, BlockConstants};
use crate::channel::ActivityPolicy;
use crate::error::{Error, Result};
use crate::link::{evaluate_drop, LinkModel};
use crate::montecarlo::{run_drops, with_threads};
use crate::rng::{point_key, DropStreams};
use crate::stats::{loglog_slope, Interval, MeanAccumulator, Z95};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub master_seed: u64,
    /// Drops for `J_ref` at `(n0, n0)`.
    pub ref_drops: u64,
    /// Drops per pair in the screening pass.
    pub screen_drops: u64,
    /// Total drops for refined pairs.
    pub refine_drops: u64,
    /// Pairs refined per round.
    pub top_k: usize,
    pub n_max_cap: usize,
    pub threads: Option<usize>,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            master_seed: 1,
            ref_drops: 2000,
            screen_drops: 32,
            refine_drops: 2000,
            top_k: 16,
            n_max_cap: 40_000,
            threads: None,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.ref_drops == 0 || self.screen_drops == 0 || self.refine_drops < self.screen_drops {
            return Err(Error::InvalidParameter(
                "optimizer needs ref_drops, screen_drops >= 1 and refine_drops >= screen_drops".into(),
            ));
        }
        if self.top_k == 0 || self.n_max_cap == 0 {
            return Err(Error::InvalidParameter("top_k and n_max_cap must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRow {
    pub n_orbits: usize,
    pub n_sats_per_orbit: usize,
    pub n_total: usize,
    pub mean_sinr: f64,
    pub ci: Interval,
    pub drops: u64,
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub n_orbits_star: usize,
    pub n_sats_per_orbit_star: usize,
    pub j_star: f64,
    pub j_star_ci: Interval,
    pub j_ref: f64,
    pub k_sinr: f64,
    /// `max{4/β, 8/(βκ)}`, rounded up.
    pub m_threshold: usize,
    /// `max{M, ⌈K_SINR / J_ref⌉}` before the cap.
    pub n_max_uncapped: f64,
    pub n_max_used: usize,
    pub cap_binding: bool,
    pub small_ball: (f64, f64),
    pub table: Vec<OptimizeRow>,
}

/// All `(N_o, N_s)` with `min >= n0` and `N_o N_s <= n_max`, row-major.
pub fn admissible_pairs(n0: usize, n_max: usize) -> Vec<(usize, usize)> {
    let n0 = n0.max(1);
    let mut out = Vec::new();
    for a in n0..=n_max / n0 {
        for b in n0..=n_max / a {
            out.push((a, b));
        }
    }
    out
}

fn extend(model: &LinkModel, seed: u64, acc: &mut MeanAccumulator, upto: u64) {
    let key = point_key(model.walker.n_orbits, model.walker.n_sats_per_orbit);
    for drop in acc.count()..upto {
        let r = evaluate_drop(model, &ActivityPolicy::FullReuse, &DropStreams::new(seed, key, drop));
        acc.push(r.sinr);
    }
}

/// Full-reuse mean-SINR search over the admissible pairs up to the size
/// threshold. Every pair is screened with `screen_drops`; the current
/// `top_k` are extended to `refine_drops`, repeating until the leader has
/// been refined.
pub fn optimize_mean_sinr(
    model: &LinkModel,
    constants: &BlockConstants,
    opts: &OptimizeOptions,
) -> Result<OptimizeResult> {
    opts.validate()?;
    let n0 = constants.n0;
    let base = model.with_size(n0, n0);
    with_threads(opts.threads, || {
        let mut ref_acc = MeanAccumulator::default();
        for r in run_drops(&base, &ActivityPolicy::FullReuse, opts.master_seed, 0..opts.ref_drops) {
            ref_acc.push(r.sinr);
        }
        let j_ref = ref_acc.mean();
        let ks = k_sinr(constants, &model.walker, &model.channel, &model.fading);
        let m_threshold = mean_sinr_threshold(constants, &model.fading).ceil() as usize;
        let n_max_uncapped = (m_threshold as f64).max((ks / j_ref).ceil());
        let cap_binding = n_max_uncapped > opts.n_max_cap as f64;
        let n_max_used = if cap_binding {
            opts.n_max_cap
        } else {
            n_max_uncapped as usize
        };

        let pairs = admissible_pairs(n0, n_max_used);
        if pairs.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no admissible pair with min side >= {n0} and N <= {n_max_used}"
            )));
        }
        let mut accs: Vec<MeanAccumulator> = pairs
            .par_iter()
            .map(|&(a, b)| {
                let mut acc = MeanAccumulator::default();
                extend(&model.with_size(a, b), opts.master_seed, &mut acc, opts.screen_drops);
                acc
            })
            .collect();

        let leader = |accs: &[MeanAccumulator]| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..accs.len()).collect();
            // stable sort keeps the row-major order among ties
            idx.sort_by(|&i, &j| accs[j].mean().total_cmp(&accs[i].mean()));
            idx
        };
        loop {
            let order = leader(&accs);
            let todo: Vec<usize> = order
                .iter()
                .take(opts.top_k)
                .copied()
                .filter(|&i| accs[i].count() < opts.refine_drops)
                .collect();
            if accs[order[0]].count() >= opts.refine_drops || todo.is_empty() {
                break;
            }
            let refined: Vec<(usize, MeanAccumulator)> = todo
                .par_iter()
                .map(|&i| {
                    let (a, b) = pairs[i];
                    let mut acc = accs[i];
                    extend(&model.with_size(a, b), opts.master_seed, &mut acc, opts.refine_drops);
                    (i, acc)
                })
                .collect();
            for (i, acc) in refined {
                accs[i] = acc;
            }
        }

        let table: Vec<OptimizeRow> = pairs
            .iter()
            .zip(&accs)
            .map(|(&(a, b), acc)| OptimizeRow {
                n_orbits: a,
                n_sats_per_orbit: b,
                n_total: a * b,
                mean_sinr: acc.mean(),
                ci: acc.normal_ci(Z95),
                drops: acc.count(),
                refined: acc.count() >= opts.refine_drops,
            })
            .collect();
        let star = leader(&accs)[0];
        Ok(OptimizeResult {
            n_orbits_star: table[star].n_orbits,
            n_sats_per_orbit_star: table[star].n_sats_per_orbit,
            j_star: table[star].mean_sinr,
            j_star_ci: table[star].ci,
            j_ref,
            k_sinr: ks,
            m_threshold,
            n_max_uncapped,
            n_max_used,
            cap_binding,
            small_ball: model.fading.small_ball(),
            table,
        })
    })?
}

/// Log-log slope of mean SINR against `N` over table rows with `N >= min_n`.
pub fn tail_slope(table: &[OptimizeRow], min_n: usize) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = table
        .iter()
        .filter(|r| r.n_total >= min_n && r.mean_sinr > 0.0)
        .map(|r| (r.n_total as f64, r.mean_sinr))
        .unzip();
    loglog_slope(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{calibrate_noise, ChannelParams, FadingModel};
    use crate::geometry::{UserPosition, WalkerParams};

    #[test]
    fn pair_enumeration_by_hand() {
        assert_eq!(admissible_pairs(3, 12), vec![(3, 3), (3, 4), (4, 3)]);
        assert_eq!(admissible_pairs(4, 15), vec![]);
        let n = admissible_pairs(52, 40_000).len();
        let direct = (52..=40_000usize)
            .flat_map(|a| (52..=40_000 / 52).map(move |b| (a, b)))
            .filter(|&(a, b)| a * b <= 40_000)
            .count();
        assert_eq!(n, direct);
    }

    #[test]
    fn small_search_returns_its_argmax() {
        let noise = calibrate_noise(1.0, 2.5, 1.0, 10.0, 550.0, 12.0, true).unwrap();
        let model = LinkModel {
            walker: WalkerParams::new(1, 1, 6921.0, 6371.0, 53f64.to_radians()).unwrap(),
            user: UserPosition::new(0.0, 6371.0).unwrap(),
            channel: ChannelParams::new(1.0, 2.5, 1.0, 10.0, 1000.0, noise).unwrap(),
            fading: FadingModel::RayleighExp1,
        };
        let c = BlockConstants {
            n0: 12,
            ..BlockConstants::for_tests(1000.0, 1600.0)
        };
        let opts = OptimizeOptions {
            ref_drops: 50,
            screen_drops: 8,
            refine_drops: 64,
            top_k: 3,
            n_max_cap: 400,
            threads: Some(1),
            ..OptimizeOptions::default()
        };
        let r = optimize_mean_sinr(&model, &c, &opts).unwrap();
        assert!(r.cap_binding);
        assert_eq!(r.table.len(), admissible_pairs(12, 400).len());
        assert!(r.table.iter().all(|row| row.mean_sinr <= r.j_star));
        let star = r
            .table
            .iter()
            .find(|row| (row.n_orbits, row.n_sats_per_orbit) == (r.n_orbits_star, r.n_sats_per_orbit_star))
            .unwrap();
        assert!(star.refined);
        assert_eq!(optimize_mean_sinr(&model, &c, &opts).unwrap(), r);
    }
}
