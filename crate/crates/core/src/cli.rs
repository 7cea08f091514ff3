//! Command-line front end: run configuration, subcommands, artifact I/O.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bounds::{
    bound_cerg, bound_pcov, bound_pcov_thinned, bound_report, estimate_block_constants, geometry_hash,
    verify_block, BlockConstants, VerifyStatus,
};
use crate::channel::{calibrate_noise, db_to_linear, ActivityPolicy, ChannelParams, FadingModel};
use crate::check::{run_checks, CheckThresholds};
use crate::error::Error;
use crate::geometry::{UserPosition, WalkerParams, EARTH_RADIUS_KM};
use crate::link::LinkModel;
use crate::montecarlo::{
    fmt_num, read_sweep_csv, resolve_threads, run_sweep, write_sweep_csv, PointFailure, SweepConfig,
    SweepRow, DEFAULT_LADDER,
};
use crate::optimize::{optimize_mean_sinr, tail_slope, OptimizeOptions};

pub const VERSION: &str = env!("WALKER_GIT_DESCRIBE");

pub const SWEEP_CSV: &str = "sweep.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const CERTIFICATE_JSON: &str = "certificate.json";
pub const BOUNDS_CSV: &str = "bounds.csv";
pub const SWEEP_WITH_BOUNDS_CSV: &str = "sweep_with_bounds.csv";
pub const CHECK_JSON: &str = "check.json";
pub const OPTIMIZE_CSV: &str = "optimize.csv";
pub const OPTIMIZE_JSON: &str = "optimize.json";

/// Every knob of a run. Defaults are the baseline parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub drops: u64,
    pub max_drops: u64,
    pub refine_threshold: f64,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub latitude_deg: f64,
    pub alpha: f64,
    pub gt: f64,
    pub gr: f64,
    pub dg_km: f64,
    pub snr_dmin_db: f64,
    pub tau_db: f64,
    pub tx_power: f64,
    pub fading: String,
    pub policies: Vec<String>,
    pub scaling_c: f64,
    pub ladder: Vec<(usize, usize)>,
    pub grid_res: usize,
    pub noise_includes_boost: bool,
    pub out_dir: PathBuf,
    pub certificate: Option<PathBuf>,
    pub threads: Option<usize>,
    pub opt_ref_drops: u64,
    pub opt_screen_drops: u64,
    pub opt_refine_drops: u64,
    pub opt_top_k: usize,
    pub opt_n_max_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            drops: 6000,
            max_drops: 30_000,
            refine_threshold: 0.05,
            altitude_km: 550.0,
            inclination_deg: 53.0,
            latitude_deg: 0.0,
            alpha: 2.5,
            gt: 10.0,
            gr: 1.0,
            dg_km: 1000.0,
            snr_dmin_db: 12.0,
            tau_db: 0.0,
            tx_power: 1.0,
            fading: "rayleigh".into(),
            policies: vec!["full".into(), "q=0.1".into(), "q=0.03".into(), "scaling".into()],
            scaling_c: 600.0,
            ladder: DEFAULT_LADDER.to_vec(),
            grid_res: 1024,
            noise_includes_boost: true,
            out_dir: PathBuf::from("out"),
            certificate: None,
            threads: None,
            opt_ref_drops: 2000,
            opt_screen_drops: 32,
            opt_refine_drops: 2000,
            opt_top_k: 16,
            opt_n_max_cap: 40_000,
        }
    }
}

impl RunConfig {
    pub fn model(&self) -> crate::error::Result<LinkModel> {
        let walker = WalkerParams::from_altitude(1, 1, self.altitude_km, self.inclination_deg.to_radians())?;
        let user = UserPosition::new(self.latitude_deg.to_radians(), EARTH_RADIUS_KM)?;
        let noise = calibrate_noise(
            self.tx_power,
            self.alpha,
            self.gr,
            self.gt,
            walker.min_distance_km(),
            self.snr_dmin_db,
            self.noise_includes_boost,
        )?;
        let channel = ChannelParams::new(self.tx_power, self.alpha, self.gr, self.gt, self.dg_km, noise)?;
        Ok(LinkModel {
            walker,
            user,
            channel,
            fading: FadingModel::parse(&self.fading)?,
        })
    }

    pub fn activity_policies(&self) -> crate::error::Result<Vec<ActivityPolicy>> {
        self.policies
            .iter()
            .map(|s| ActivityPolicy::parse(s, self.scaling_c))
            .collect()
    }

    pub fn sweep_config(&self) -> crate::error::Result<SweepConfig> {
        let c = SweepConfig {
            constellations: self.ladder.clone(),
            policies: self.activity_policies()?,
            tau_db: self.tau_db,
            base_drops: self.drops,
            max_drops: self.max_drops.max(self.drops),
            refine_threshold: self.refine_threshold,
            master_seed: self.seed,
            threads: self.threads,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn optimize_options(&self) -> OptimizeOptions {
        OptimizeOptions {
            master_seed: self.seed,
            ref_drops: self.opt_ref_drops,
            screen_drops: self.opt_screen_drops,
            refine_drops: self.opt_refine_drops,
            top_k: self.opt_top_k,
            n_max_cap: self.opt_n_max_cap,
            threads: self.threads,
        }
    }

    pub fn tau_linear(&self) -> f64 {
        db_to_linear(self.tau_db)
    }

    pub fn geometry_hash(&self) -> crate::error::Result<String> {
        let m = self.model()?;
        Ok(geometry_hash(&m.walker, &m.user))
    }
}

#[derive(Debug, Parser)]
#[command(name = "walker", version = VERSION, about = "Walker LEO densification simulator and bound checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo sweep over the constellation ladder and activity policies
    Sweep(CommonArgs),
    /// Block certificate and closed-form bound table
    Bounds(CommonArgs),
    /// Check a finished sweep against the certificate
    Check(CommonArgs),
    /// Finite search for the mean-SINR maximizing shape
    Optimize(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat TOML file of run settings; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub drops: Option<u64>,
    #[arg(long)]
    pub max_drops: Option<u64>,
    #[arg(long)]
    pub altitude_km: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub inclination_deg: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub latitude_deg: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gt: Option<f64>,
    #[arg(long)]
    pub gr: Option<f64>,
    #[arg(long)]
    pub dg_km: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub snr_dmin_db: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau_db: Option<f64>,
    /// Comma-separated: full, q=<q>, scaling[:c=<c>]
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<String>>,
    #[arg(long)]
    pub scaling_c: Option<f64>,
    #[arg(long)]
    pub grid_res: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Calibrate noise with the main-lobe gain g_t g_r (default true)
    #[arg(long)]
    pub noise_includes_boost: Option<bool>,
    /// unit | rayleigh | nakagami:<m>
    #[arg(long)]
    pub fading: Option<String>,
    #[arg(long)]
    pub certificate: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

impl CommonArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text).map_err(|e| {
                    anyhow!(Error::InvalidParameter(format!("config {}: {e}", path.display())))
                })?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        set!(
            seed, drops, max_drops, altitude_km, inclination_deg, latitude_deg, alpha, gt, gr, dg_km,
            snr_dmin_db, tau_db, policies, scaling_c, grid_res, out_dir, noise_includes_boost, fading
        );
        if self.certificate.is_some() {
            c.certificate = self.certificate.clone();
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub geometry_hash: String,
    pub config: RunConfig,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
    pub threads: Option<usize>,
    #[serde(default)]
    pub failures: Vec<PointFailure>,
}

impl Manifest {
    fn new(command: &str, config: &RunConfig, started: SystemTime, clock: Instant) -> anyhow::Result<Self> {
        Ok(Self {
            version: VERSION.into(),
            command: command.into(),
            seed: config.seed,
            geometry_hash: config.geometry_hash()?,
            config: config.clone(),
            started_unix_s: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_clock_s: clock.elapsed().as_secs_f64(),
            threads: resolve_threads(config.threads),
            failures: Vec::new(),
        })
    }
}

/// Exit status: 1 configuration, 2 certificate or check failure, 3 I/O.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidParameter(_) | Error::DegenerateLatitude { .. } => 1,
                Error::Certificate(_) | Error::PreconditionUnmet(_) => 2,
                Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, contents).map_err(|e| anyhow!(Error::Io(e)).context(format!("writing {}", path.display())))
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).map_err(|e| anyhow!(Error::Io(e)).context(format!("reading {}", path.display())))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).map_err(|e| anyhow!(Error::Io(e)).context(format!("creating {}", dir.display())))
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v).map_err(Error::from)?)
}

/// Runs a parsed command. `Ok(0)` on success, `Ok(2)` on a failed check.
pub fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Sweep(a) => cmd_sweep(&a.resolve()?),
        Command::Bounds(a) => cmd_bounds(&a.resolve()?),
        Command::Check(a) => cmd_check(&a.resolve()?),
        Command::Optimize(a) => cmd_optimize(&a.resolve()?),
    }
}

pub fn cmd_sweep(config: &RunConfig) -> anyhow::Result<u8> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let model = config.model()?;
    let sweep = config.sweep_config()?;
    crate::geometry::check_nondegenerate(&model.walker, &model.user, config.grid_res)?;
    ensure_dir(&config.out_dir)?;

    let outcome = run_sweep(&model, &sweep)?;
    for f in &outcome.failures {
        eprintln!("point ({}, {}) {} failed: {}", f.n_orbits, f.n_sats_per_orbit, f.policy_id, f.message);
    }
    let mut csv = Vec::new();
    write_sweep_csv(&mut csv, &outcome.points)?;
    write_file(&config.out_dir.join(SWEEP_CSV), csv)?;

    let mut manifest = Manifest::new("sweep", config, started, clock)?;
    manifest.failures = outcome.failures;
    write_file(&config.out_dir.join(MANIFEST_JSON), to_json(&manifest)?)?;
    println!(
        "wrote {} rows to {}",
        outcome.points.len(),
        config.out_dir.join(SWEEP_CSV).display()
    );
    Ok(0)
}

/// The certificate at `config.certificate` when given (geometry hash must
/// match), otherwise a fresh estimate.
pub fn load_or_estimate_certificate(config: &RunConfig) -> anyhow::Result<BlockConstants> {
    let model = config.model()?;
    match &config.certificate {
        Some(path) => {
            let c = BlockConstants::from_json(&read_file(path)?)?;
            let want = geometry_hash(&model.walker, &model.user);
            if c.geometry_hash != want {
                bail!(Error::InvalidParameter(format!(
                    "certificate {} was made for a different geometry",
                    path.display()
                )));
            }
            Ok(c)
        }
        None => Ok(estimate_block_constants(&model.walker, &model.user, config.grid_res)?),
    }
}

fn opt_num(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_else(|| "NA".into())
}

pub fn cmd_bounds(config: &RunConfig) -> anyhow::Result<u8> {
    let model = config.model()?;
    let policies = config.activity_policies()?;
    let tau = config.tau_linear();
    ensure_dir(&config.out_dir)?;
    let constants = load_or_estimate_certificate(config)?;
    println!(
        "certificate: d1 = {:.6} km, d2 = {:.6} km, beta = {:.6e}, n0 = {}",
        constants.d1_km, constants.d2_km, constants.beta, constants.n0
    );

    let fixed_qs: Vec<f64> = policies
        .iter()
        .filter_map(|p| match p {
            ActivityPolicy::FixedThinning { q } if *q < 1.0 => Some(*q),
            _ => None,
        })
        .collect();
    let mut header: Vec<String> = [
        "n_o", "n_s", "n_total", "status", "m", "a_geom", "bound_pcov", "bound_cerg",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(fixed_qs.iter().map(|q| format!("bound_pcov_thinned_q={q}")));
    header.extend(
        ["k_thin", "k_sinr", "k_erg", "c_h", "bound_sinr", "verify", "min_count", "slack"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(Error::from)?;

    let mut falsified = Vec::new();
    for &(n_o, n_s) in &config.ladder {
        let walker = model.walker.with_size(n_o, n_s);
        let rep = bound_report(&constants, &walker, &model.channel, &model.fading, tau, 1.0);
        let ver = verify_block(&constants, &walker, &model.user, 33);
        if ver.status == VerifyStatus::Falsified {
            falsified.push(ver.describe());
        }
        let mut rec = vec![
            n_o.to_string(),
            n_s.to_string(),
            rep.n_total.to_string(),
            rep.status.clone(),
            rep.m.to_string(),
            fmt_num(rep.a_geom),
            opt_num(rep.pcov_bound),
            opt_num(rep.cerg_bound_bits),
        ];
        for &q in &fixed_qs {
            rec.push(opt_num(
                bound_pcov_thinned(&constants, &walker, &model.channel, &model.fading, tau, q).ok(),
            ));
        }
        let verified = ver.status != VerifyStatus::PreconditionUnmet;
        rec.extend([
            fmt_num(rep.k_thin),
            fmt_num(rep.k_sinr),
            fmt_num(rep.k_erg),
            fmt_num(rep.c_h),
            opt_num(rep.sinr_bound),
            match ver.status {
                VerifyStatus::Passed => "passed".into(),
                VerifyStatus::Falsified => "falsified".into(),
                VerifyStatus::PreconditionUnmet => "precondition unmet".into(),
            },
            if verified { ver.min_count.to_string() } else { "NA".into() },
            if verified { ver.slack.to_string() } else { "NA".into() },
        ]);
        w.write_record(&rec).map_err(Error::from)?;
    }
    let table = w.into_inner().map_err(|e| anyhow!("flushing bound table: {e}"))?;
    write_file(&config.out_dir.join(CERTIFICATE_JSON), constants.to_json()?)?;
    write_file(&config.out_dir.join(BOUNDS_CSV), table)?;

    let sweep_path = config.out_dir.join(SWEEP_CSV);
    if sweep_path.exists() {
        let rows = read_sweep_csv(read_file(&sweep_path)?.as_bytes())?;
        let joined = sweep_with_bounds(&rows, &constants, &model, tau)?;
        write_file(&config.out_dir.join(SWEEP_WITH_BOUNDS_CSV), joined)?;
    }

    if !falsified.is_empty() {
        for f in &falsified {
            eprintln!("block certificate falsified: {f}");
        }
        bail!(Error::Certificate(format!("{} ladder point(s) falsified", falsified.len())));
    }
    println!("wrote {}", config.out_dir.join(BOUNDS_CSV).display());
    Ok(0)
}

/// Sweep rows with the matching `bound_*` columns appended.
pub fn sweep_with_bounds(
    rows: &[SweepRow],
    constants: &BlockConstants,
    model: &LinkModel,
    tau: f64,
) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = crate::montecarlo::CSV_HEADER.to_vec();
    header.extend(["bound_pcov", "bound_cerg", "bound_pcov_thinned", "bound_sinr"]);
    w.write_record(&header).map_err(Error::from)?;
    for r in rows {
        let walker = model.walker.with_size(r.n_o, r.n_s);
        let (ch, fad) = (&model.channel, &model.fading);
        let full = r.q >= 1.0;
        let rep = bound_report(constants, &walker, ch, fad, tau, r.q);
        let mut rec = vec![
            r.n_o.to_string(),
            r.n_s.to_string(),
            r.n_total.to_string(),
            r.policy.clone(),
            fmt_num(r.q),
            fmt_num(r.p_cov),
            fmt_num(r.p_cov_lo),
            fmt_num(r.p_cov_hi),
            fmt_num(r.c_erg),
            fmt_num(r.c_erg_lo),
            fmt_num(r.c_erg_hi),
            fmt_num(r.mean_i_over_p),
            fmt_num(r.mean_d0_km),
            r.drops.to_string(),
            fmt_num(r.outage_frac),
            fmt_num(r.guide),
        ];
        rec.push(opt_num(full.then(|| bound_pcov(constants, &walker, ch, fad, tau).ok()).flatten()));
        rec.push(opt_num(full.then(|| bound_cerg(constants, &walker, ch, fad).ok()).flatten()));
        rec.push(opt_num((!full).then_some(rep.pcov_thinned_bound).flatten()));
        rec.push(opt_num(rep.sinr_bound));
        w.write_record(&rec).map_err(Error::from)?;
    }
    w.into_inner().map_err(|e| anyhow!("flushing joined table: {e}"))
}

pub fn cmd_check(config: &RunConfig) -> anyhow::Result<u8> {
    let dir = &config.out_dir;
    let manifest: Manifest =
        serde_json::from_str(&read_file(&dir.join(MANIFEST_JSON))?).map_err(Error::from)?;
    let cert_path = config.certificate.clone().unwrap_or_else(|| dir.join(CERTIFICATE_JSON));
    let constants = BlockConstants::from_json(&read_file(&cert_path)?)?;
    if constants.geometry_hash != manifest.geometry_hash {
        bail!(Error::InvalidParameter(format!(
            "sweep geometry {} and certificate geometry {} differ",
            manifest.geometry_hash, constants.geometry_hash
        )));
    }
    let rows = read_sweep_csv(read_file(&dir.join(SWEEP_CSV))?.as_bytes())?;
    let run = &manifest.config;
    let report = run_checks(
        &rows,
        &constants,
        &run.model()?,
        run.tau_linear(),
        &CheckThresholds::default(),
    );
    for item in &report.items {
        println!("[{}] {}: {}", if item.passed { "PASS" } else { "FAIL" }, item.name, item.detail);
        for o in &item.offending {
            println!("    {o}");
        }
    }
    write_file(&dir.join(CHECK_JSON), to_json(&report)?)?;
    Ok(if report.passed() { 0 } else { 2 })
}

pub fn cmd_optimize(config: &RunConfig) -> anyhow::Result<u8> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let model = config.model()?;
    ensure_dir(&config.out_dir)?;
    let constants = load_or_estimate_certificate(config)?;
    let result = optimize_mean_sinr(&model, &constants, &config.optimize_options())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n_o", "n_s", "n_total", "mean_sinr", "ci_lo", "ci_hi", "drops", "refined", "argmax"])
        .map_err(Error::from)?;
    for r in &result.table {
        let star = (r.n_orbits, r.n_sats_per_orbit) == (result.n_orbits_star, result.n_sats_per_orbit_star);
        w.write_record([
            r.n_orbits.to_string(),
            r.n_sats_per_orbit.to_string(),
            r.n_total.to_string(),
            fmt_num(r.mean_sinr),
            fmt_num(r.ci.lo),
            fmt_num(r.ci.hi),
            r.drops.to_string(),
            r.refined.to_string(),
            star.to_string(),
        ])
        .map_err(Error::from)?;
    }
    let table = w.into_inner().map_err(|e| anyhow!("flushing optimizer table: {e}"))?;
    write_file(&config.out_dir.join(OPTIMIZE_CSV), table)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        manifest: Manifest,
        n_orbits_star: usize,
        n_sats_per_orbit_star: usize,
        j_star: f64,
        j_star_ci: crate::stats::Interval,
        j_ref: f64,
        k_sinr: f64,
        m_threshold: usize,
        n_max_uncapped: f64,
        n_max_used: usize,
        cap_binding: bool,
        small_ball: (f64, f64),
        tail_slope: Option<f64>,
        certificate: &'a BlockConstants,
    }
    let slope = tail_slope(&result.table, result.n_max_used / 4).ok();
    let summary = Summary {
        manifest: Manifest::new("optimize", config, started, clock)?,
        n_orbits_star: result.n_orbits_star,
        n_sats_per_orbit_star: result.n_sats_per_orbit_star,
        j_star: result.j_star,
        j_star_ci: result.j_star_ci,
        j_ref: result.j_ref,
        k_sinr: result.k_sinr,
        m_threshold: result.m_threshold,
        n_max_uncapped: result.n_max_uncapped,
        n_max_used: result.n_max_used,
        cap_binding: result.cap_binding,
        small_ball: result.small_ball,
        tail_slope: slope,
        certificate: &constants,
    };
    write_file(&config.out_dir.join(OPTIMIZE_JSON), to_json(&summary)?)?;
    println!(
        "argmax ({}, {}): E[SINR] = {:.6e} [{:.6e}, {:.6e}] over {} pairs",
        result.n_orbits_star,
        result.n_sats_per_orbit_star,
        result.j_star,
        result.j_star_ci.lo,
        result.j_star_ci.hi,
        result.table.len()
    );
    if result.cap_binding {
        println!(
            "search cap binding: N_max = {:.6e} exceeds the cap {}; pairs above the cap were not searched",
            result.n_max_uncapped, result.n_max_used
        );
    }
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_baseline_parameters() {
        let c = RunConfig::default();
        assert_eq!(c.altitude_km, 550.0);
        assert_eq!(c.inclination_deg, 53.0);
        assert_eq!(c.latitude_deg, 0.0);
        assert_eq!(c.alpha, 2.5);
        assert_eq!(c.gr, 1.0);
        assert_eq!(c.gt, 10.0);
        assert_eq!(c.dg_km, 1000.0);
        assert_eq!(c.tau_db, 0.0);
        assert_eq!(c.snr_dmin_db, 12.0);
        let m = c.model().unwrap();
        assert_eq!(m.walker.orbit_radius_km, 6921.0);
        assert_eq!(m.walker.earth_radius_km, 6371.0);
        let expect = 10.0 * 550f64.powf(-2.5) * 10f64.powf(-1.2);
        assert!((m.channel.noise_power / expect - 1.0).abs() < 1e-12);
        assert_eq!(c.activity_policies().unwrap().len(), 4);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 9\ndrops = 100\nmax_drops = 200\npolicies = [\"full\"]\n").unwrap();
        let args = CommonArgs {
            config: Some(path.clone()),
            drops: Some(50),
            ..CommonArgs::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!((c.seed, c.drops, c.max_drops), (9, 50, 200));
        assert_eq!(c.policies, vec!["full".to_string()]);

        fs::write(&path, "sede = 9\n").unwrap();
        let err = args.resolve().unwrap_err();
        assert_eq!(exit_code(&err), 1);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&anyhow!(Error::InvalidParameter("x".into()))), 1);
        assert_eq!(exit_code(&anyhow!(Error::Certificate("x".into()))), 2);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "x");
        assert_eq!(exit_code(&anyhow!(Error::Io(io)).context("reading")), 3);
    }

    #[test]
    fn cli_parses_policies_and_negative_latitude() {
        let cli = Cli::try_parse_from([
            "walker", "sweep", "--policies", "full,q=0.1", "--latitude-deg", "-30", "--seed", "5",
        ])
        .unwrap();
        let Command::Sweep(a) = cli.command else { panic!() };
        let c = a.resolve().unwrap();
        assert_eq!(c.policies, vec!["full".to_string(), "q=0.1".to_string()]);
        assert_eq!(c.latitude_deg, -30.0);
        assert_eq!(c.seed, 5);
    }
}
