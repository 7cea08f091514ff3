//! Link model: two-level antenna gain, power-law path loss, unit-mean fading,
//! noise calibration and per-resource-block activity.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub tx_power: f64,
    pub pathloss_exp: f64,
    pub gain_rx: f64,
    pub gain_tx_boost: f64,
    pub gain_cutoff_km: f64,
    pub noise_power: f64,
}

impl ChannelParams {
    pub fn new(
        tx_power: f64,
        pathloss_exp: f64,
        gain_rx: f64,
        gain_tx_boost: f64,
        gain_cutoff_km: f64,
        noise_power: f64,
    ) -> Result<Self> {
        let c = Self {
            tx_power,
            pathloss_exp,
            gain_rx,
            gain_tx_boost,
            gain_cutoff_km,
            noise_power,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tx_power > 0.0
            && self.pathloss_exp > 0.0
            && self.gain_rx > 0.0
            && self.gain_tx_boost >= 1.0
            && self.gain_cutoff_km > 0.0
            && self.noise_power > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "channel needs p>0, alpha>0, g_r>0, g_t>=1, d_g>0, noise>0: {self:?}"
            )))
        }
    }

    /// Upper bound on the useful signal mean, `p g_t g_r (r-e)^-α`.
    pub fn max_mean_signal(&self, min_distance_km: f64) -> f64 {
        self.tx_power * self.gain_tx_boost * self.gain_rx * min_distance_km.powf(-self.pathloss_exp)
    }
}

/// `G(d)`: boosted main-lobe gain up to and including the cutoff.
pub fn gain(d_km: f64, params: &ChannelParams) -> f64 {
    if d_km <= params.gain_cutoff_km {
        params.gain_tx_boost * params.gain_rx
    } else {
        params.gain_rx
    }
}

/// Received power `p G(d) h d^-α`.
pub fn rx_power(d_km: f64, h: f64, params: &ChannelParams) -> f64 {
    params.tx_power * gain(d_km, params) * h * d_km.powf(-params.pathloss_exp)
}

/// Noise level at which a unit-fading link at `d_min` reaches `snr_db`.
/// With `include_boost` the link uses the main-lobe gain `g_t g_r`.
pub fn calibrate_noise(
    tx_power: f64,
    pathloss_exp: f64,
    gain_rx: f64,
    gain_tx_boost: f64,
    d_min_km: f64,
    snr_db: f64,
    include_boost: bool,
) -> Result<f64> {
    if !(d_min_km > 0.0) {
        return Err(Error::InvalidParameter(format!("d_min must be > 0, got {d_min_km}")));
    }
    let g = if include_boost {
        gain_tx_boost * gain_rx
    } else {
        gain_rx
    };
    Ok(tx_power * g * d_min_km.powf(-pathloss_exp) * 10f64.powf(-snr_db / 10.0))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Unit-mean fading power laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FadingModel {
    UnitDeterministic,
    RayleighExp1,
    /// Nakagami-m amplitude, so the power is Gamma(m, 1/m).
    NakagamiM { m: f64 },
}

impl FadingModel {
    pub fn nakagami(m: f64) -> Result<Self> {
        if !(m >= 0.5) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!("Nakagami m must be >= 0.5, got {m}")));
        }
        Ok(FadingModel::NakagamiM { m })
    }

    pub fn mean(&self) -> f64 {
        1.0
    }

    pub fn second_moment(&self) -> f64 {
        self.variance() + 1.0
    }

    pub fn variance(&self) -> f64 {
        match *self {
            FadingModel::UnitDeterministic => 0.0,
            FadingModel::RayleighExp1 => 1.0,
            FadingModel::NakagamiM { m } => 1.0 / m,
        }
    }

    /// Constants `(c_sb, κ)` with `P(H <= x) <= c_sb x^κ` on `(0, 1]`.
    ///
    /// Exp(1): `1 - e^-x <= x`. Gamma(m, 1/m): the density is at most
    /// `m^m x^(m-1) / Γ(m)`. A point mass at 1 has `P(H <= x) = 0` below 1.
    pub fn small_ball(&self) -> (f64, f64) {
        match *self {
            FadingModel::UnitDeterministic => (1.0, 1.0),
            FadingModel::RayleighExp1 => (1.0, 1.0),
            FadingModel::NakagamiM { m } => (m.powf(m) / gamma(m + 1.0), m),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            FadingModel::UnitDeterministic => "unit".into(),
            FadingModel::RayleighExp1 => "rayleigh".into(),
            FadingModel::NakagamiM { m } => format!("nakagami:{m}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unit" | "none" => Ok(FadingModel::UnitDeterministic),
            "rayleigh" | "exp1" => Ok(FadingModel::RayleighExp1),
            other => match other.strip_prefix("nakagami:") {
                Some(m) => Self::nakagami(m.parse().map_err(|_| {
                    Error::InvalidParameter(format!("bad Nakagami parameter in {other:?}"))
                })?),
                None => Err(Error::InvalidParameter(format!("unknown fading model {other:?}"))),
            },
        }
    }
}

pub fn draw_fading<R: Rng + ?Sized>(model: &FadingModel, rng: &mut R) -> f64 {
    match *model {
        FadingModel::UnitDeterministic => 1.0,
        FadingModel::RayleighExp1 => Exp1.sample(rng),
        FadingModel::NakagamiM { m } => Gamma::new(m, 1.0 / m)
            .expect("validated Nakagami parameter")
            .sample(rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivityPolicy {
    FullReuse,
    FixedThinning { q: f64 },
    ScalingLaw { c: f64 },
}

impl ActivityPolicy {
    pub fn fixed(q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidParameter(format!("activity q must be in (0,1], got {q}")));
        }
        Ok(ActivityPolicy::FixedThinning { q })
    }

    pub fn scaling(c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("scaling constant must be > 0, got {c}")));
        }
        Ok(ActivityPolicy::ScalingLaw { c })
    }

    pub fn effective_q(&self, n_total: usize) -> f64 {
        match *self {
            ActivityPolicy::FullReuse => 1.0,
            ActivityPolicy::FixedThinning { q } => q,
            ActivityPolicy::ScalingLaw { c } => (c / n_total as f64).min(1.0),
        }
    }

    /// Stable identifier used in CSV output.
    pub fn id(&self) -> String {
        match *self {
            ActivityPolicy::FullReuse => "full".into(),
            ActivityPolicy::FixedThinning { q } => format!("q={q}"),
            ActivityPolicy::ScalingLaw { c } => format!("scaling:c={c}"),
        }
    }

    /// Parses `full`, `q=<value>`, a bare number, or `scaling[:c=<value>]`.
    pub fn parse(s: &str, default_c: f64) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            return Ok(ActivityPolicy::FullReuse);
        }
        if s == "scaling" {
            return Self::scaling(default_c);
        }
        if let Some(c) = s.strip_prefix("scaling:c=").or_else(|| s.strip_prefix("scaling:")) {
            let c = c
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad scaling constant in {s:?}")))?;
            return Self::scaling(c);
        }
        let q = s.strip_prefix("q=").unwrap_or(s);
        let q: f64 = q
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("unknown activity policy {s:?}")))?;
        Self::fixed(q)
    }
}

/// Bernoulli(`effective_q(n_total)`) activity draw. One uniform is consumed
/// for every policy, full reuse included.
pub fn draw_activity<R: Rng + ?Sized>(policy: &ActivityPolicy, n_total: usize, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    match policy {
        ActivityPolicy::FullReuse => true,
        _ => u < policy.effective_q(n_total),
    }
}
