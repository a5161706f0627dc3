//! Grid sweeps over squeezing, beam wander, excess noise and post-selection
//! threshold, with CSV output.
//!
//! A sweep is described by a TOML [`SweepConfig`]. Lengths are in units of
//! the beam-wander reference `beta`; key rates are in bits per pulse (per
//! post-selected pulse when a threshold is set).
//!
//! Rows are ordered `chi`, then `sigma`, then `r`, then `zeta_th`, each in
//! the order given in the configuration. Row evaluation is parallel but the
//! output order and values never depend on scheduling.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combined::{CombinedChannel, Estimator, Scheme, SelectedMoments};
use crate::error::{Error, Result};
use crate::fading::{BeamWanderChannel, Link};
use crate::gaussian::Squeezing;
use crate::keyrate::{key_rate, Protocol};

/// First line of every CSV written by this module.
pub const SCHEMA: &str = "#schema=satqkd-sweep/1";

pub const COLUMNS: [&str; 22] = [
    "scenario",
    "protocol",
    "r",
    "sigma_as",
    "sigma_sb",
    "chi",
    "zeta_th",
    "lambda_as",
    "L_as",
    "eta0_as",
    "lambda_sb",
    "L_sb",
    "eta0_sb",
    "loss_db_as",
    "loss_db_sb",
    "i_ab",
    "holevo",
    "key",
    "key_clamped",
    "p_s",
    "ps_times_k",
    "status",
];

/// Keys with `|K|` below this are reported as exactly zero.
pub const ZERO_KEY: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Pure loss `tau` on mode B, no fading.
    FixedChannel,
    /// Mode B reflected: uplink then downlink.
    DirectReflection,
    /// Pair generated on the satellite, one downlink per mode.
    OnBoard,
}

impl Scenario {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::FixedChannel => "fixed-channel",
            Scenario::DirectReflection => "direct-reflection",
            Scenario::OnBoard => "on-board",
        }
    }

    fn scheme(&self) -> Scheme {
        match self {
            Scenario::OnBoard => Scheme::OnBoard,
            _ => Scheme::Reflection,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-channel" | "fixed" => Ok(Scenario::FixedChannel),
            "direct-reflection" | "direct" | "reflection" => Ok(Scenario::DirectReflection),
            "on-board" | "onboard" => Ok(Scenario::OnBoard),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Either an explicit list or `{ start, stop, points }` (endpoints included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Linspace {
        start: f64,
        stop: f64,
        points: usize,
    },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Grid::Values(ref v) => v.clone(),
            Grid::Linspace {
                start,
                stop,
                points,
            } => linspace(start, stop, points),
        }
    }
}

impl Default for Grid {
    fn default() -> Self {
        Grid::Values(Vec::new())
    }
}

impl From<Vec<f64>> for Grid {
    fn from(v: Vec<f64>) -> Self {
        Grid::Values(v)
    }
}

/// Post-selection thresholds: explicit values, or `points` evenly spaced
/// values from 0 to `max_fraction · ζ_max` of each channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdGrid {
    Values(Vec<f64>),
    Span { points: usize, max_fraction: f64 },
}

impl ThresholdGrid {
    fn resolve(&self, zeta_max: f64) -> Vec<f64> {
        match *self {
            ThresholdGrid::Values(ref v) => v.clone(),
            ThresholdGrid::Span {
                points,
                max_fraction,
            } => linspace(0.0, max_fraction * zeta_max, points),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostSelectionGrid {
    pub zeta_th: ThresholdGrid,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: u64,
    #[serde(default)]
    pub seed: u64,
    /// Success probability at which [`compare_onboard`] picks its threshold.
    #[serde(default)]
    pub target_p_s: Option<f64>,
}

/// Reference direct-reflection links for [`compare_onboard`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectReference {
    pub sigma_as: f64,
    pub sigma_sb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub protocol: Protocol,
    /// Squeezing parameters.
    pub r: Grid,
    /// Uplink (or link-to-A) beam wander, units of beta.
    #[serde(default)]
    pub sigma: Grid,
    /// Downlink beam wander paired element-wise with `sigma`. Defaults to
    /// `k1 k2 sigma`.
    #[serde(default)]
    pub sigma_sb: Option<Grid>,
    /// Transmittances for the fixed-channel scenario.
    #[serde(default)]
    pub tau: Grid,
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_k2")]
    pub k2: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "one")]
    pub w: f64,
    /// Excess noise at Bob, shot-noise units.
    pub chi: Grid,
    #[serde(default)]
    pub post_selection: Option<PostSelectionGrid>,
    #[serde(default)]
    pub direct_reference: Option<DirectReference>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_estimator() -> Estimator {
    Estimator::Quadrature
}

fn default_mc_samples() -> u64 {
    10_000_000
}

fn default_k1() -> f64 {
    0.4
}

fn default_k2() -> f64 {
    0.64
}

fn one() -> f64 {
    1.0
}

pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n)
            .map(|i| {
                if i == n - 1 {
                    stop
                } else {
                    start + (stop - start) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let nonneg = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return bad(format!("grid '{name}' is empty"));
            }
            if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                return bad(format!("grid '{name}' has invalid value {x}"));
            }
            Ok(())
        };
        nonneg("r", &self.r.values())?;
        nonneg("chi", &self.chi.values())?;
        if !(self.beta > 0.0) || !(self.w > 0.0) {
            return bad(format!(
                "beta and w must be positive, got {} and {}",
                self.beta, self.w
            ));
        }
        match self.scenario {
            Scenario::FixedChannel => {
                let tau = self.tau.values();
                nonneg("tau", &tau)?;
                if tau.iter().any(|&t| t > 1.0) {
                    return bad("tau must lie in [0, 1]".into());
                }
                if !self.sigma.values().is_empty() || self.sigma_sb.is_some() {
                    return bad("fixed-channel scenario takes 'tau', not 'sigma'".into());
                }
            }
            _ => {
                let sigma = self.sigma.values();
                nonneg("sigma", &sigma)?;
                if !self.tau.values().is_empty() {
                    return bad("'tau' only applies to the fixed-channel scenario".into());
                }
                if let Some(sb) = &self.sigma_sb {
                    let sb = sb.values();
                    nonneg("sigma_sb", &sb)?;
                    if sb.len() != sigma.len() {
                        return bad(format!(
                            "'sigma_sb' pairs with 'sigma' and needs {} values, got {}",
                            sigma.len(),
                            sb.len()
                        ));
                    }
                } else if !(0.0..=1.0).contains(&self.k1) || !(self.k2 >= 0.0) {
                    return bad(format!(
                        "need 0 <= k1 <= 1 and k2 >= 0, got {} and {}",
                        self.k1, self.k2
                    ));
                }
            }
        }
        if let Some(ps) = &self.post_selection {
            match &ps.zeta_th {
                ThresholdGrid::Values(v) => nonneg("zeta_th", v)?,
                ThresholdGrid::Span {
                    points,
                    max_fraction,
                } => {
                    if *points == 0 || !(0.0..1.0).contains(max_fraction) {
                        return bad(
                            "zeta_th span needs points > 0 and 0 <= max_fraction < 1".into()
                        );
                    }
                }
            }
            if ps.estimator == Estimator::MonteCarlo && ps.mc_samples == 0 {
                return bad("mc_samples must be positive".into());
            }
            if let Some(t) = ps.target_p_s {
                if !(t > 0.0 && t < 1.0) {
                    return bad(format!("target_p_s must lie in (0, 1), got {t}"));
                }
            }
        }
        Ok(())
    }

    /// Overrides the Monte Carlo seed, if a post-selection block is present.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(ps) = &mut self.post_selection {
            ps.seed = seed;
        }
        self
    }

    /// One entry per point on the channel axis.
    fn channels(&self) -> Result<Vec<ChannelPoint>> {
        match self.scenario {
            Scenario::FixedChannel => self
                .tau
                .values()
                .into_iter()
                .map(|tau| {
                    Ok(ChannelPoint {
                        sigma: None,
                        channel: CombinedChannel::new(Link::fixed(tau)?, Link::Fixed(1.0)),
                    })
                })
                .collect(),
            _ => {
                let sigma = self.sigma.values();
                let sigma_sb = match &self.sigma_sb {
                    Some(g) => g.values(),
                    None => sigma.iter().map(|s| self.k1 * self.k2 * s).collect(),
                };
                sigma
                    .into_iter()
                    .zip(sigma_sb)
                    .map(|(a, b)| {
                        Ok(ChannelPoint {
                            sigma: Some((a, b)),
                            channel: self.wander_pair(a, b)?,
                        })
                    })
                    .collect()
            }
        }
    }

    fn wander_pair(&self, sigma_as: f64, sigma_sb: f64) -> Result<CombinedChannel> {
        Ok(CombinedChannel::new(
            Link::Wander(BeamWanderChannel::new(
                self.beta,
                self.w,
                sigma_as * self.beta,
            )?),
            Link::Wander(BeamWanderChannel::new(
                self.beta,
                self.w,
                sigma_sb * self.beta,
            )?),
        ))
    }
}

#[derive(Debug, Clone, Copy)]
struct ChannelPoint {
    /// `(σ_AS, σ_SB)` in units of beta; `None` for fixed channels.
    sigma: Option<(f64, f64)>,
    channel: CombinedChannel,
}

/// One output row. Fields that do not apply, or could not be computed, are
/// `None` and written as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scenario: Scenario,
    pub protocol: Protocol,
    pub r: f64,
    pub sigma_as: Option<f64>,
    pub sigma_sb: Option<f64>,
    pub chi: f64,
    pub zeta_th: Option<f64>,
    pub lambda_as: Option<f64>,
    #[serde(rename = "L_as")]
    pub l_as: Option<f64>,
    pub eta0_as: Option<f64>,
    pub lambda_sb: Option<f64>,
    #[serde(rename = "L_sb")]
    pub l_sb: Option<f64>,
    pub eta0_sb: Option<f64>,
    pub loss_db_as: Option<f64>,
    pub loss_db_sb: Option<f64>,
    pub i_ab: Option<f64>,
    pub holevo: Option<f64>,
    pub key: Option<f64>,
    pub key_clamped: Option<f64>,
    pub p_s: Option<f64>,
    pub ps_times_k: Option<f64>,
    /// `ok`, or the error tag of the failure at this point.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        writeln!(buf, "{SCHEMA}")?;
        {
            let mut w = csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(&mut buf);
            w.write_record(COLUMNS)?;
            for row in &self.rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Ok(buf)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// Link description columns: `(λ, L, η₀, mean loss dB)`.
fn link_columns(link: &Link) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
    let loss = link.mean_loss_db().ok();
    match link {
        Link::Fixed(tau) => (None, None, Some(*tau), loss),
        Link::Wander(ch) => (Some(ch.lambda()), Some(ch.l_scale()), Some(ch.eta0()), loss),
    }
}

fn zero_snap(k: f64) -> f64 {
    if k.abs() < ZERO_KEY {
        0.0
    } else {
        k
    }
}

fn moments_for(
    channel: &CombinedChannel,
    zeta_th: Option<f64>,
    ps: Option<&PostSelectionGrid>,
) -> Result<SelectedMoments> {
    let (Some(z), Some(ps)) = (zeta_th, ps) else {
        return channel.factorized_moments();
    };
    let zmax = channel.zeta_max();
    if !(z >= 0.0) || z >= zmax {
        return Err(Error::Domain(format!(
            "threshold must lie in [0, {zmax}), got {z}"
        )));
    }
    match ps.estimator {
        Estimator::Quadrature => {
            let m = channel.selected_moments(z)?;
            if m.p_s < crate::combined::QUADRATURE_PS_FLOOR {
                return Err(Error::ThresholdTooAggressive { p_s: m.p_s });
            }
            Ok(m)
        }
        Estimator::MonteCarlo => Ok(channel
            .selected_moments_mc(z, ps.mc_samples, ps.seed)?
            .moments),
    }
}

/// Evaluates every grid point. Post-selection is applied when the config has
/// a `post_selection` block; otherwise rows use the ensemble average.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let channels = cfg.channels()?;
    let ps = cfg.post_selection.as_ref();

    // the expensive part depends only on the channel and threshold
    let jobs: Vec<(usize, Option<f64>)> = channels
        .iter()
        .enumerate()
        .flat_map(|(i, cp)| match ps {
            None => vec![(i, None)],
            Some(ps) => ps
                .zeta_th
                .resolve(cp.channel.zeta_max())
                .into_iter()
                .map(|z| (i, Some(z)))
                .collect(),
        })
        .collect();
    let moments: Vec<Result<SelectedMoments>> = jobs
        .par_iter()
        .map(|&(i, z)| moments_for(&channels[i].channel, z, ps))
        .collect();

    let r_grid = cfg.r.values();
    let mut specs = Vec::new();
    for chi in cfg.chi.values() {
        let mut job = 0;
        for (i, _) in channels.iter().enumerate() {
            let start = job;
            while job < jobs.len() && jobs[job].0 == i {
                job += 1;
            }
            for &r in &r_grid {
                for j in start..job {
                    specs.push((chi, r, j));
                }
            }
        }
    }

    let rows = specs
        .par_iter()
        .map(|&(chi, r, j)| {
            let (i, zeta_th) = jobs[j];
            let mut row = base_row(cfg, &channels[i], r, chi, zeta_th);
            let outcome = moments[j]
                .as_ref()
                .map_err(clone_error)
                .and_then(|m| fill_row(&mut row, cfg, m));
            if let Err(e) = outcome {
                row.status = e.kind().into();
            }
            row
        })
        .collect();
    Ok(SweepResult { rows })
}

fn base_row(
    cfg: &SweepConfig,
    cp: &ChannelPoint,
    r: f64,
    chi: f64,
    zeta_th: Option<f64>,
) -> SweepRow {
    let (lambda_as, l_as, eta0_as, loss_db_as) = link_columns(&cp.channel.first);
    let (lambda_sb, l_sb, eta0_sb, loss_db_sb) = match cfg.scenario {
        Scenario::FixedChannel => (None, None, None, None),
        _ => link_columns(&cp.channel.second),
    };
    SweepRow {
        scenario: cfg.scenario,
        protocol: cfg.protocol,
        r,
        sigma_as: cp.sigma.map(|s| s.0),
        sigma_sb: cp.sigma.map(|s| s.1),
        chi,
        zeta_th,
        lambda_as,
        l_as,
        eta0_as,
        lambda_sb,
        l_sb,
        eta0_sb,
        loss_db_as,
        loss_db_sb,
        i_ab: None,
        holevo: None,
        key: None,
        key_clamped: None,
        p_s: None,
        ps_times_k: None,
        status: "ok".into(),
    }
}

fn fill_row(row: &mut SweepRow, cfg: &SweepConfig, m: &SelectedMoments) -> Result<()> {
    let cm = m.covariance(cfg.scenario.scheme(), Squeezing::new(row.r)?, row.chi)?;
    let k = key_rate(&cm, cfg.protocol)?;
    let key = zero_snap(k.key_rate);
    row.i_ab = Some(k.mutual_info);
    row.holevo = Some(k.holevo);
    row.key = Some(key);
    row.key_clamped = Some(key.max(0.0));
    row.p_s = Some(m.p_s);
    row.ps_times_k = Some(m.p_s * key.max(0.0));
    Ok(())
}

/// Evaluates the first point of every grid, returning the error instead of
/// recording it in the row.
pub fn evaluate_point(cfg: &SweepConfig) -> Result<SweepRow> {
    cfg.validate()?;
    let cp = cfg.channels()?[0];
    let ps = cfg.post_selection.as_ref();
    let zeta_th = ps.map(|p| p.zeta_th.resolve(cp.channel.zeta_max())[0]);
    let m = moments_for(&cp.channel, zeta_th, ps)?;
    let mut row = base_row(cfg, &cp, cfg.r.values()[0], cfg.chi.values()[0], zeta_th);
    fill_row(&mut row, cfg, &m)?;
    Ok(row)
}

/// Like [`run_sweep`] but requires a post-selection block.
pub fn run_postselect_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.post_selection.is_none() {
        return Err(Error::Config(
            "post-selection sweep needs a [post_selection] block".into(),
        ));
    }
    if cfg.scenario == Scenario::FixedChannel {
        return Err(Error::Config(
            "post-selection needs a fading scenario".into(),
        ));
    }
    run_sweep(cfg)
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(m.clone()),
        Error::Unphysical(m) => Error::Unphysical(m.clone()),
        Error::ThresholdTooAggressive { p_s } => Error::ThresholdTooAggressive { p_s: *p_s },
        Error::Quadrature { relative_error } => Error::Quadrature {
            relative_error: *relative_error,
        },
        other => Error::Config(other.to_string()),
    }
}

/// One scheme evaluated at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchemePoint {
    pub zeta_th: f64,
    pub p_s: f64,
    pub key: f64,
    pub ps_times_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnboardComparison {
    pub target_p_s: f64,
    pub onboard: SchemePoint,
    /// Direct reflection at the same threshold.
    pub direct_same_threshold: SchemePoint,
    /// Direct reflection at the threshold where its key equals the on-board
    /// key, if one exists above the quadrature floor.
    pub direct_matched_key: Option<SchemePoint>,
    /// `(P_s K)_onboard / (P_s K)_direct` at the same threshold.
    pub ratio_same_threshold: Option<f64>,
    /// `(P_s K)_onboard / (P_s K)_direct` at matched key.
    pub ratio_matched_key: Option<f64>,
}

impl OnboardComparison {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        writeln!(buf, "#schema=satqkd-onboard/1")?;
        writeln!(buf, "#target_p_s={}", self.target_p_s)?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record([
                "scheme",
                "basis",
                "zeta_th",
                "p_s",
                "key",
                "ps_times_k",
                "ratio",
            ])?;
            let mut put = |scheme: &str, basis: &str, p: &SchemePoint, ratio: Option<f64>| {
                w.write_record([
                    scheme.to_string(),
                    basis.to_string(),
                    p.zeta_th.to_string(),
                    p.p_s.to_string(),
                    p.key.to_string(),
                    p.ps_times_k.to_string(),
                    ratio.map(|x| x.to_string()).unwrap_or_default(),
                ])
            };
            put("on-board", "target-p_s", &self.onboard, None)?;
            put(
                "direct-reflection",
                "same-threshold",
                &self.direct_same_threshold,
                self.ratio_same_threshold,
            )?;
            if let Some(p) = &self.direct_matched_key {
                put(
                    "direct-reflection",
                    "matched-key",
                    p,
                    self.ratio_matched_key,
                )?;
            }
            w.flush()?;
        }
        Ok(buf)
    }
}

fn scheme_point(
    channel: &CombinedChannel,
    scheme: Scheme,
    s: Squeezing,
    chi: f64,
    protocol: Protocol,
    zeta_th: f64,
) -> Result<SchemePoint> {
    let m = channel.selected_moments(zeta_th)?;
    let key = zero_snap(key_rate(&m.covariance(scheme, s, chi)?, protocol)?.key_rate);
    Ok(SchemePoint {
        zeta_th,
        p_s: m.p_s,
        key,
        ps_times_k: m.p_s * key.max(0.0),
    })
}

/// Bisects `[lo, hi]` for the boundary of a predicate that is false at `lo`
/// and true at `hi`.
fn bisect(mut lo: f64, mut hi: f64, mut pred: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-12 * hi {
            break;
        }
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// On-board versus direct reflection.
///
/// The on-board threshold is set where `P_s` equals the target. The
/// reference direct-reflection channel is evaluated at that threshold, and
/// again at the threshold where its key first reaches the on-board key.
/// Uses the first `r`, `chi`, `sigma`, `sigma_sb` of the config.
pub fn compare_onboard(cfg: &SweepConfig) -> Result<OnboardComparison> {
    cfg.validate()?;
    if cfg.scenario != Scenario::OnBoard {
        return Err(Error::Config(
            "comparison needs the on-board scenario".into(),
        ));
    }
    let ps = cfg
        .post_selection
        .as_ref()
        .ok_or_else(|| Error::Config("comparison needs a [post_selection] block".into()))?;
    let target = ps
        .target_p_s
        .ok_or_else(|| Error::Config("comparison needs post_selection.target_p_s".into()))?;
    let reference = cfg
        .direct_reference
        .ok_or_else(|| Error::Config("comparison needs a [direct_reference] block".into()))?;

    let s = Squeezing::new(cfg.r.values()[0])?;
    let chi = cfg.chi.values()[0];
    let onboard = cfg.channels()?[0].channel;
    let direct = cfg.wander_pair(reference.sigma_as, reference.sigma_sb)?;

    let zmax = onboard.zeta_max();
    let zeta = bisect(0.0, zmax, |z| Ok(onboard.selected_moments(z)?.p_s < target))?;
    let on = scheme_point(&onboard, Scheme::OnBoard, s, chi, cfg.protocol, zeta)?;

    let same = if zeta < direct.zeta_max() {
        scheme_point(&direct, Scheme::Reflection, s, chi, cfg.protocol, zeta)?
    } else {
        SchemePoint {
            zeta_th: zeta,
            p_s: 0.0,
            key: 0.0,
            ps_times_k: 0.0,
        }
    };

    let dmax = direct.zeta_max();
    let floor = crate::combined::QUADRATURE_PS_FLOOR;
    let top = bisect(0.0, dmax, |z| Ok(direct.selected_moments(z)?.p_s < floor))?;
    let key_at = |z: f64| scheme_point(&direct, Scheme::Reflection, s, chi, cfg.protocol, z);
    let matched = if on.key > 0.0 && key_at(top)?.key >= on.key {
        let z = bisect(0.0, top, |z| Ok(key_at(z)?.key >= on.key))?;
        Some(key_at(z)?)
    } else {
        None
    };

    let ratio = |d: &SchemePoint| (d.ps_times_k > 0.0).then(|| on.ps_times_k / d.ps_times_k);
    Ok(OnboardComparison {
        target_p_s: target,
        onboard: on,
        ratio_same_threshold: ratio(&same),
        direct_same_threshold: same,
        ratio_matched_key: matched.as_ref().and_then(ratio),
        direct_matched_key: matched,
    })
}

/// Frozen configurations shipped with the library.
pub const FIGURES: [&str; 6] = ["fig1", "fig2", "fig3", "fig4", "fig5", "onboard"];

pub fn frozen_config(name: &str) -> Result<SweepConfig> {
    let text = match name {
        "fig1" => include_str!("../configs/fig1.toml"),
        "fig2" => include_str!("../configs/fig2.toml"),
        "fig3" => include_str!("../configs/fig3.toml"),
        "fig4" => include_str!("../configs/fig4.toml"),
        "fig5" => include_str!("../configs/fig5.toml"),
        "onboard" => include_str!("../configs/onboard.toml"),
        other => return Err(Error::Config(format!("unknown figure '{other}'"))),
    };
    SweepConfig::from_toml(text)
}

/// Runs a frozen configuration and writes its CSV files into `out_dir`.
/// Returns the paths written.
pub fn reproduce(name: &str, out_dir: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let mut cfg = frozen_config(name)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("{name}.csv"));
    run_sweep(&cfg)?.write_csv(&path)?;
    let mut written = vec![path];
    if name == "onboard" {
        let path = out_dir.join("onboard_compare.csv");
        std::fs::write(&path, compare_onboard(&cfg)?.to_csv()?)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(protocol: &str) -> SweepConfig {
        SweepConfig::from_toml(&format!(
            r#"
            scenario = "fixed-channel"
            protocol = "{protocol}"
            r = [0.5, 1.0]
            tau = [1.0, 0.6]
            chi = [0.0]
            "#
        ))
        .unwrap()
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.0, 1.2, 25);
        assert_eq!(v.len(), 25);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[24], 1.2);
        assert!((v[12] - 0.6).abs() < 1e-15);
        assert_eq!(linspace(3.0, 4.0, 1), vec![3.0]);
    }

    #[test]
    fn grid_forms_parse() {
        let cfg = SweepConfig::from_toml(
            r#"
            scenario = "direct-reflection"
            protocol = "rr-hom"
            r = { start = 0.0, stop = 2.0, points = 5 }
            sigma = [0.3]
            chi = [0.0, 0.15]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.r.values(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!((cfg.k1, cfg.k2, cfg.beta, cfg.w), (0.4, 0.64, 1.0, 1.0));
    }

    #[test]
    fn rejects_bad_configs() {
        let base = "protocol = \"rr-hom\"\nr = [1.0]\nchi = [0.0]\n";
        for extra in [
            "scenario = \"direct-reflection\"\nsigma = []",
            "scenario = \"direct-reflection\"\nsigma = [0.3]\nsigma_sb = [0.1, 0.2]",
            "scenario = \"fixed-channel\"\ntau = [1.5]",
            "scenario = \"fixed-channel\"\ntau = [0.5]\nsigma = [0.3]",
            "scenario = \"direct-reflection\"\nsigma = [-0.3]",
            "scenario = \"direct-reflection\"\nsigma = [0.3]\nbogus = 1",
            "scenario = \"nowhere\"\nsigma = [0.3]",
        ] {
            let text = format!("{base}{extra}");
            assert!(SweepConfig::from_toml(&text).is_err(), "{text}");
        }
        let dr_het =
            format!("{base}scenario = \"fixed-channel\"\ntau = [0.5]").replace("rr-hom", "dr-het");
        assert!(SweepConfig::from_toml(&dr_het).is_err());
    }

    #[test]
    fn row_count_and_order() {
        let cfg = SweepConfig::from_toml(
            r#"
            scenario = "direct-reflection"
            protocol = "rr-hom"
            r = [0.5, 1.0, 1.5]
            sigma = [0.1, 0.5]
            chi = [0.0, 0.1]
            "#,
        )
        .unwrap();
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 12);
        let keys: Vec<(f64, f64, f64)> = res
            .rows
            .iter()
            .map(|r| (r.chi, r.sigma_as.unwrap(), r.r))
            .collect();
        assert_eq!(keys[0], (0.0, 0.1, 0.5));
        assert_eq!(keys[1], (0.0, 0.1, 1.0));
        assert_eq!(keys[3], (0.0, 0.5, 0.5));
        assert_eq!(keys[6], (0.1, 0.1, 0.5));
        for row in &res.rows {
            assert!(row.is_ok());
            assert!((row.sigma_sb.unwrap() - 0.256 * row.sigma_as.unwrap()).abs() < 1e-15);
            assert_eq!(row.p_s, Some(1.0));
            assert!(row.key_clamped.unwrap() >= 0.0);
        }
    }

    #[test]
    fn fixed_channel_matches_direct_key_rate() {
        let res = run_sweep(&fixed("rr-hom")).unwrap();
        for row in &res.rows {
            let tau = row.eta0_as.unwrap();
            let cm =
                crate::gaussian::TwoModeCM::lossy(Squeezing::new(row.r).unwrap(), tau, row.chi)
                    .unwrap();
            let k = key_rate(&cm, Protocol::RR_HOMODYNE).unwrap().key_rate;
            assert!((row.key.unwrap() - k).abs() < 1e-12);
            assert!(row.sigma_as.is_none() && row.lambda_as.is_none());
        }
        let lossless = &res.rows[0];
        let v = Squeezing::new(0.5).unwrap().variance();
        assert!((lossless.key.unwrap() - v.log2()).abs() < 1e-9);
        assert_eq!(lossless.loss_db_as, Some(0.0));
    }

    #[test]
    fn zero_threshold_row_equals_ensemble_row() {
        let text = r#"
            scenario = "direct-reflection"
            protocol = "rr-hom"
            r = [1.0]
            sigma = [0.7]
            chi = [0.05]
            "#;
        let plain = run_sweep(&SweepConfig::from_toml(text).unwrap()).unwrap();
        let ps = format!("{text}\n[post_selection]\nzeta_th = [0.0]\n");
        let sel = run_postselect_sweep(&SweepConfig::from_toml(&ps).unwrap()).unwrap();
        let (a, b) = (&plain.rows[0], &sel.rows[0]);
        assert!((a.key.unwrap() - b.key.unwrap()).abs() < 1e-9);
        assert!((b.p_s.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(b.zeta_th, Some(0.0));
        assert_eq!(a.zeta_th, None);
    }

    #[test]
    fn point_errors_stay_in_row() {
        let cfg = SweepConfig::from_toml(
            r#"
            scenario = "direct-reflection"
            protocol = "rr-hom"
            r = [1.0]
            sigma = [0.7]
            chi = [0.0]
            [post_selection]
            zeta_th = [0.1, 0.99]
            "#,
        )
        .unwrap();
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert!(res.rows[0].is_ok());
        assert_eq!(res.rows[1].status, "domain");
        assert!(res.rows[1].key.is_none());
    }

    #[test]
    fn csv_layout() {
        let bytes = run_sweep(&fixed("rr-het")).unwrap().to_csv().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SCHEMA));
        assert_eq!(lines.next().unwrap(), COLUMNS.join(","));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), COLUMNS.len());
        assert_eq!(first[0], "fixed-channel");
        assert_eq!(first[1], "rr-het");
        assert_eq!(first[3], "");
        assert_eq!(*first.last().unwrap(), "ok");
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn frozen_configs_load() {
        for name in FIGURES {
            let cfg = frozen_config(name).unwrap();
            assert!(cfg.validate().is_ok(), "{name}");
        }
        assert!(frozen_config("fig9").is_err());
        let fig1 = frozen_config("fig1").unwrap();
        assert_eq!(fig1.r.values().len(), 21);
        assert_eq!(fig1.sigma.values().len(), 25);
        assert_eq!(fig1.chi.values(), vec![0.0, 0.15]);
    }

    #[test]
    fn onboard_lossless_equals_tmsv_key() {
        let ch = CombinedChannel::new(Link::Fixed(1.0), Link::Fixed(1.0));
        let s = Squeezing::new(0.8).unwrap();
        let on = scheme_point(&ch, Scheme::OnBoard, s, 0.0, Protocol::RR_HOMODYNE, 0.0).unwrap();
        assert!((on.key - s.variance().log2()).abs() < 1e-9);
    }
}
