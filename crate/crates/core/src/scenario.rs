//! Scenario configuration: physical layout, channel model, and solver knobs.
//!
//! A scenario is read from a TOML file. Every key has a default taken from
//! the reference simulation setup (2 GHz carrier, half-wavelength spacing,
//! 8 BS antennas, 1 W, -110 dB noise, 15x15 surface, 2 receive antennas).
//! The geometry and the coefficient-pair table are NOT published values;
//! the shipped defaults are placeholders.

use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::covariance_opt::CovarianceOptions;
use crate::driver::{AoOptions, RhoStage};
use crate::error::{Error, Result};
use crate::ios_opt::{CoefficientPair, SurfaceMode};
use crate::power_opt::RhoOptions;

pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// A point in meters.
pub type Point = [f64; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

/// Placement of the base station, the surface, and the two user regions.
///
/// The surface lies in the plane `x = ios[0]` with its normal along `x`.
/// Users with `x < ios[0]` (the BS side) are on the reflection side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: Point,
    pub ios: Point,
    pub reflection_disk: Disk,
    pub transmission_disk: Disk,
    /// Users (0-based, canonical order) whose direct BS link is blocked.
    #[serde(default)]
    pub blocked_users: Vec<usize>,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            bs: [0.0, 0.0, 10.0],
            ios: [50.0, 0.0, 5.0],
            reflection_disk: Disk {
                center: [44.0, 12.0, 1.5],
                radius: 4.0,
            },
            transmission_disk: Disk {
                center: [56.0, 12.0, 1.5],
                radius: 4.0,
            },
            blocked_users: Vec::new(),
        }
    }
}

/// Per-link value for the three link types.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerLink {
    pub bs_ios: f64,
    pub ios_user: f64,
    pub direct: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FadingModel {
    IidRayleigh,
    Rician,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub fading: FadingModel,
    /// Linear Rician K-factors; `inf` gives a pure line-of-sight link.
    pub rician_k: PerLink,
    pub pathloss_enabled: bool,
    pub pathloss_exponents: PerLink,
    /// Linear gain at 1 m. Defaults to free-space `(λ / 4π)²`.
    pub reference_gain: f64,
}

/// Fully resolved, validated scenario. All quantities are linear SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub nt: usize,
    pub nr: usize,
    pub kr: usize,
    pub kt: usize,
    pub ios_rows: usize,
    pub ios_cols: usize,
    pub power_budget: f64,
    pub noise_power: f64,
    pub wavelength: f64,
    pub spacing_tx: f64,
    pub spacing_rx: f64,
    pub spacing_ios: f64,
    pub geometry: Geometry,
    pub channel_model: ChannelModel,
    pub pair_set: Option<Vec<CoefficientPair>>,
    pub solver: AoOptions,
    pub runs: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.kr + self.kt
    }

    pub fn n_ios(&self) -> usize {
        self.ios_rows * self.ios_cols
    }

    /// Re-checks every invariant. Called by the config loader; useful after
    /// editing a scenario in code.
    pub fn validate(&self) -> Result<()> {
        if self.nt < 1 {
            return Err(Error::key("system.nt", "must be at least 1"));
        }
        if self.nr < 1 {
            return Err(Error::key("system.nr", "must be at least 1"));
        }
        if self.num_users() < 1 {
            return Err(Error::key(
                "system.users_reflection",
                "users_reflection + users_transmission must be at least 1",
            ));
        }
        positive("system.power_budget_w", self.power_budget)?;
        positive("system.noise_power_db", self.noise_power)?;
        positive("system.carrier_frequency_hz", self.wavelength)?;
        positive("system.spacing_tx_m", self.spacing_tx)?;
        positive("system.spacing_rx_m", self.spacing_rx)?;
        positive("surface.spacing_m", self.spacing_ios)?;
        let g = &self.geometry;
        for (key, d) in [
            ("geometry.reflection_disk.radius", &g.reflection_disk),
            ("geometry.transmission_disk.radius", &g.transmission_disk),
        ] {
            if !(d.radius >= 0.0 && d.radius.is_finite()) {
                return Err(Error::key(key, "must be a finite non-negative radius"));
            }
        }
        if let Some(&u) = g.blocked_users.iter().find(|&&u| u >= self.num_users()) {
            return Err(Error::key(
                "geometry.blocked_users",
                format!("user index {u} out of range (K = {})", self.num_users()),
            ));
        }
        let cm = &self.channel_model;
        for (name, v) in [
            ("bs_ios", cm.rician_k.bs_ios),
            ("ios_user", cm.rician_k.ios_user),
            ("direct", cm.rician_k.direct),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::key(format!("channel.rician_k.{name}"), "must be >= 0"));
            }
        }
        for (name, v) in [
            ("bs_ios", cm.pathloss_exponents.bs_ios),
            ("ios_user", cm.pathloss_exponents.ios_user),
            ("direct", cm.pathloss_exponents.direct),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::key(format!("channel.exponents.{name}"), "must be finite and >= 0"));
            }
        }
        positive("channel.reference_loss_db", cm.reference_gain)?;
        if let Some(pairs) = &self.pair_set {
            if pairs.is_empty() {
                return Err(Error::key("surface.pairs", "pair table is empty"));
            }
        }
        let s = &self.solver;
        let r = &s.rho;
        if !(r.rho_min > 0.0 && r.rho_min < r.rho_max && r.rho_max < 1.0) {
            return Err(Error::key(
                "solver.rho_min",
                format!(
                    "rho bounds must satisfy 0 < rho_min < rho_max < 1 (got rho_min = {}, rho_max = {})",
                    r.rho_min, r.rho_max
                ),
            ));
        }
        if !(s.rho_init >= r.rho_min && s.rho_init <= r.rho_max) {
            return Err(Error::key("solver.rho_init", "must lie in [rho_min, rho_max]"));
        }
        if s.max_outer_iters < 1 {
            return Err(Error::key("solver.max_outer_iters", "must be at least 1"));
        }
        positive("solver.rel_tol", s.rel_tol)?;
        positive("solver.covariance.tol", s.covariance.tol)?;
        if s.covariance.max_sweeps < 1 {
            return Err(Error::key("solver.covariance.max_sweeps", "must be at least 1"));
        }
        positive("solver.covariance.power_rel_tol", s.covariance.power_rel_tol)?;
        positive("solver.power.step0", r.step0)?;
        if !(r.shrink > 0.0 && r.shrink < 1.0) {
            return Err(Error::key("solver.power.shrink", "must lie in (0, 1)"));
        }
        if !(r.armijo > 0.0 && r.armijo < 1.0) {
            return Err(Error::key("solver.power.armijo", "must lie in (0, 1)"));
        }
        positive("solver.power.tol", r.tol)?;
        if s.mode == SurfaceMode::Discrete && self.pair_set.is_none() && self.n_ios() > 0 {
            return Err(Error::key(
                "surface.pairs",
                "discrete mode requires a coefficient-pair table (set `surface.pairs` or `surface.pairs_file`)",
            ));
        }
        if self.runs < 1 {
            return Err(Error::key("experiment.runs", "must be at least 1"));
        }
        Ok(())
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::key(key, format!("must be a finite positive number (got {v})")))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.geometry;
        writeln!(f, "nt = {}", self.nt)?;
        writeln!(f, "nr = {}", self.nr)?;
        writeln!(f, "users: K = {} (reflection {}, transmission {})", self.num_users(), self.kr, self.kt)?;
        writeln!(f, "surface: {}x{} = {} elements (N = {})", self.ios_rows, self.ios_cols, self.n_ios(), self.n_ios())?;
        writeln!(f, "power budget = {} W", self.power_budget)?;
        writeln!(
            f,
            "noise power = {:.3e} W ({:.1} dB)",
            self.noise_power,
            10.0 * self.noise_power.log10()
        )?;
        writeln!(
            f,
            "wavelength = {} m (carrier {:.3e} Hz)",
            self.wavelength,
            SPEED_OF_LIGHT / self.wavelength
        )?;
        writeln!(
            f,
            "spacing tx / rx / surface = {} / {} / {} m",
            self.spacing_tx, self.spacing_rx, self.spacing_ios
        )?;
        writeln!(f, "bs = {:?}, surface = {:?}", g.bs, g.ios)?;
        writeln!(
            f,
            "reflection disk = {:?} r {}, transmission disk = {:?} r {}",
            g.reflection_disk.center, g.reflection_disk.radius, g.transmission_disk.center, g.transmission_disk.radius
        )?;
        writeln!(f, "blocked users = {:?}", g.blocked_users)?;
        let cm = &self.channel_model;
        writeln!(f, "fading = {:?}, rician K = {:?}", cm.fading, cm.rician_k)?;
        writeln!(
            f,
            "pathloss = {}, exponents = {:?}, reference gain = {:.3e}",
            cm.pathloss_enabled, cm.pathloss_exponents, cm.reference_gain
        )?;
        match &self.pair_set {
            Some(p) => {
                writeln!(f, "coefficient pairs (Q = {}):", p.len())?;
                for q in p {
                    writeln!(
                        f,
                        "  |r| = {:.4} arg r = {:.2} deg, |t| = {:.4} arg t = {:.2} deg",
                        q.reflection.norm(),
                        q.reflection.arg().to_degrees(),
                        q.transmission.norm(),
                        q.transmission.arg().to_degrees()
                    )?;
                }
            }
            None => writeln!(f, "coefficient pairs: none")?,
        }
        let s = &self.solver;
        writeln!(f, "mode = {:?}, rho stage = {:?}", s.mode, s.rho_stage)?;
        writeln!(
            f,
            "rho in [{:e}, {:e}], rho_init = {}",
            s.rho.rho_min, s.rho.rho_max, s.rho_init
        )?;
        writeln!(f, "max outer iterations = {}, rel_tol = {:e}", s.max_outer_iters, s.rel_tol)?;
        writeln!(f, "runs = {}, seed = {}", self.runs, self.seed)
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    system: SystemSection,
    surface: SurfaceSection,
    geometry: Option<GeometrySection>,
    channel: ChannelSection,
    solver: SolverSection,
    experiment: ExperimentSection,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SystemSection {
    nt: usize,
    nr: usize,
    users_reflection: usize,
    users_transmission: usize,
    power_budget_w: f64,
    noise_power_db: f64,
    carrier_frequency_hz: f64,
    spacing_tx_m: Option<f64>,
    spacing_rx_m: Option<f64>,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            nt: 8,
            nr: 2,
            users_reflection: 2,
            users_transmission: 2,
            power_budget_w: 1.0,
            noise_power_db: -110.0,
            carrier_frequency_hz: 2.0e9,
            spacing_tx_m: None,
            spacing_rx_m: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SurfaceSection {
    rows: usize,
    cols: usize,
    spacing_m: Option<f64>,
    /// Rows of `[|r|, arg r (deg), |t|, arg t (deg)]`.
    pairs: Option<Vec<[f64; 4]>>,
    pairs_file: Option<String>,
}

impl Default for SurfaceSection {
    fn default() -> Self {
        SurfaceSection {
            rows: 15,
            cols: 15,
            spacing_m: None,
            pairs: None,
            pairs_file: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometrySection {
    #[serde(default = "default_bs")]
    bs: Point,
    #[serde(default = "default_ios")]
    ios: Point,
    #[serde(default = "default_reflection_disk")]
    reflection_disk: Disk,
    #[serde(default = "default_transmission_disk")]
    transmission_disk: Disk,
    #[serde(default)]
    blocked_users: Vec<usize>,
}

fn default_bs() -> Point {
    Geometry::default().bs
}
fn default_ios() -> Point {
    Geometry::default().ios
}
fn default_reflection_disk() -> Disk {
    Geometry::default().reflection_disk
}
fn default_transmission_disk() -> Disk {
    Geometry::default().transmission_disk
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ChannelSection {
    model: FadingModel,
    pathloss: bool,
    reference_loss_db: Option<f64>,
    exponents: PerLink,
    rician_k: PerLink,
}

impl Default for ChannelSection {
    fn default() -> Self {
        ChannelSection {
            model: FadingModel::IidRayleigh,
            pathloss: true,
            reference_loss_db: None,
            exponents: PerLink {
                bs_ios: 2.0,
                ios_user: 2.0,
                direct: 3.5,
            },
            rician_k: PerLink {
                bs_ios: 10.0,
                ios_user: 10.0,
                direct: 0.0,
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SolverSection {
    mode: SurfaceMode,
    rho_min: f64,
    rho_max: f64,
    rho_init: f64,
    max_outer_iters: usize,
    rel_tol: f64,
    rho_stage: RhoStage,
    record_trace: bool,
    covariance: CovarianceOptions,
    power: PowerSection,
}

impl Default for SolverSection {
    fn default() -> Self {
        let ao = AoOptions::default();
        SolverSection {
            mode: ao.mode,
            rho_min: ao.rho.rho_min,
            rho_max: ao.rho.rho_max,
            rho_init: ao.rho_init,
            max_outer_iters: ao.max_outer_iters,
            rel_tol: ao.rel_tol,
            rho_stage: ao.rho_stage,
            record_trace: ao.record_trace,
            covariance: ao.covariance,
            power: PowerSection::default(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PowerSection {
    step0: f64,
    shrink: f64,
    armijo: f64,
    tol: f64,
    max_iters: usize,
}

impl Default for PowerSection {
    fn default() -> Self {
        let r = RhoOptions::default();
        PowerSection {
            step0: r.step0,
            shrink: r.shrink,
            armijo: r.armijo,
            tol: r.tol,
            max_iters: r.max_iters,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentSection {
    runs: usize,
    seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { runs: 100, seed: 1 }
    }
}

/// Error from loading a config file, anchored to a line when possible.
#[derive(Debug)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: ")?,
            None => write!(f, "config: ")?,
        }
        if let Some(k) = &self.key {
            write!(f, "`{k}`: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Parses config text, applies `key=value` overrides, and validates.
///
/// `base_dir` resolves a relative `surface.pairs_file`.
pub fn load_scenario_str(
    source: &str,
    overrides: &[String],
    base_dir: Option<&Path>,
) -> std::result::Result<Scenario, ConfigError> {
    if source.trim().is_empty() {
        return Err(ConfigError {
            key: None,
            line: Some(1),
            message: "config file is empty".into(),
        });
    }
    let mut table: toml::Table = source.parse().map_err(|e: toml::de::Error| ConfigError {
        key: None,
        line: e.span().map(|s| line_of_offset(source, s.start)),
        message: e.message().to_string(),
    })?;
    for ov in overrides {
        apply_override(&mut table, ov)?;
    }
    let file = ConfigFile::deserialize(toml::Value::Table(table)).map_err(|e| {
        let key = unknown_field_name(e.message());
        ConfigError {
            line: key.as_deref().and_then(|k| locate_leaf(source, k)),
            key,
            message: e.message().to_string(),
        }
    })?;
    let scenario = file.into_scenario(base_dir).map_err(|e| keyed(source, e))?;
    scenario.validate().map_err(|e| keyed(source, e))?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path, overrides: &[String]) -> std::result::Result<Scenario, ConfigError> {
    let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: None,
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    load_scenario_str(&source, overrides, path.parent())
}

fn keyed(source: &str, e: Error) -> ConfigError {
    match e {
        Error::InvalidKey { key, message } => ConfigError {
            line: locate_key(source, &key),
            key: Some(key),
            message,
        },
        other => ConfigError {
            key: None,
            line: None,
            message: other.to_string(),
        },
    }
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

fn unknown_field_name(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let end = start + message[start..].find('`')?;
    Some(message[start..end].to_string())
}

/// Finds the line defining a dotted key like `solver.rho_min`, tracking
/// `[section]` headers. Falls back to the section header when the leaf is
/// absent (a defaulted value).
pub fn locate_key(source: &str, dotted: &str) -> Option<usize> {
    let (section, leaf) = match dotted.rsplit_once('.') {
        Some((s, l)) => (s, l),
        None => ("", dotted),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') && line.ends_with(']') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            let k = k.trim();
            let full = if current.is_empty() {
                k.to_string()
            } else {
                format!("{current}.{k}")
            };
            if full == dotted || (current == section && k == leaf) {
                return Some(i + 1);
            }
        }
    }
    header_line
}

fn locate_leaf(source: &str, leaf: &str) -> Option<usize> {
    source.lines().position(|raw| {
        raw.split('#')
            .next()
            .and_then(|l| l.split_once('='))
            .map(|(k, _)| k.trim() == leaf)
            .unwrap_or(false)
    })
    .map(|i| i + 1)
}

fn apply_override(table: &mut toml::Table, ov: &str) -> std::result::Result<(), ConfigError> {
    let bad = |message: String| ConfigError {
        key: None,
        line: None,
        message,
    };
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| bad(format!("override `{ov}` is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let (leaf, path) = parts.split_last().ok_or_else(|| bad("empty override key".into()))?;
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError {
            key: Some(key.to_string()),
            line: None,
            message: format!("`{p}` is not a table"),
        })?;
    }
    cur.insert(leaf.to_string(), value);
    Ok(())
}

/// Parses a pair table: `Q` rows of `|r| arg_r_deg |t| arg_t_deg`, separated
/// by whitespace or commas. Blank lines and `#` comments are ignored.
pub fn parse_pair_table(text: &str) -> Result<Vec<CoefficientPair>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::key("surface.pairs_file", format!("line {}: {e}", i + 1)))?;
        let row: [f64; 4] = vals.try_into().map_err(|v: Vec<f64>| {
            Error::key(
                "surface.pairs_file",
                format!("line {}: expected 4 values, found {}", i + 1, v.len()),
            )
        })?;
        out.push(pair_from_row(&row, "surface.pairs_file")?);
    }
    Ok(out)
}

fn pair_from_row(row: &[f64; 4], key: &str) -> Result<CoefficientPair> {
    if row.iter().any(|v| !v.is_finite()) || row[0] < 0.0 || row[2] < 0.0 {
        return Err(Error::key(
            key,
            format!("invalid pair row {row:?} (magnitudes must be finite and >= 0)"),
        ));
    }
    Ok(CoefficientPair {
        reflection: Complex64::from_polar(row[0], row[1].to_radians()),
        transmission: Complex64::from_polar(row[2], row[3].to_radians()),
    })
}

impl ConfigFile {
    fn into_scenario(self, base_dir: Option<&Path>) -> Result<Scenario> {
        let sys = self.system;
        positive("system.carrier_frequency_hz", sys.carrier_frequency_hz)?;
        if !sys.noise_power_db.is_finite() {
            return Err(Error::key("system.noise_power_db", "must be finite"));
        }
        let wavelength = SPEED_OF_LIGHT / sys.carrier_frequency_hz;
        let half = wavelength / 2.0;

        let pair_set = match (&self.surface.pairs, &self.surface.pairs_file) {
            (Some(_), Some(_)) => {
                return Err(Error::key(
                    "surface.pairs_file",
                    "set either `surface.pairs` or `surface.pairs_file`, not both",
                ))
            }
            (Some(rows), None) => Some(
                rows.iter()
                    .map(|r| pair_from_row(r, "surface.pairs"))
                    .collect::<Result<Vec<_>>>()?,
            ),
            (None, Some(file)) => {
                let p = Path::new(file);
                let p = match base_dir {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                let text = std::fs::read_to_string(&p).map_err(|e| {
                    Error::key("surface.pairs_file", format!("cannot read {}: {e}", p.display()))
                })?;
                Some(parse_pair_table(&text)?)
            }
            (None, None) => None,
        };

        let ch = self.channel;
        let reference_gain = match ch.reference_loss_db {
            Some(db) => 10f64.powf(-db / 10.0),
            None => (wavelength / (4.0 * std::f64::consts::PI)).powi(2),
        };
        let geometry = match self.geometry {
            Some(g) => Geometry {
                bs: g.bs,
                ios: g.ios,
                reflection_disk: g.reflection_disk,
                transmission_disk: g.transmission_disk,
                blocked_users: g.blocked_users,
            },
            None => Geometry::default(),
        };
        let sv = self.solver;
        let solver = AoOptions {
            max_outer_iters: sv.max_outer_iters,
            rel_tol: sv.rel_tol,
            mode: sv.mode,
            rho_stage: sv.rho_stage,
            rho_init: sv.rho_init,
            covariance: sv.covariance,
            rho: RhoOptions {
                rho_min: sv.rho_min,
                rho_max: sv.rho_max,
                step0: sv.power.step0,
                shrink: sv.power.shrink,
                armijo: sv.power.armijo,
                tol: sv.power.tol,
                max_iters: sv.power.max_iters,
            },
            record_trace: sv.record_trace,
        };
        Ok(Scenario {
            nt: sys.nt,
            nr: sys.nr,
            kr: sys.users_reflection,
            kt: sys.users_transmission,
            ios_rows: self.surface.rows,
            ios_cols: self.surface.cols,
            power_budget: sys.power_budget_w,
            noise_power: 10f64.powf(sys.noise_power_db / 10.0),
            wavelength,
            spacing_tx: sys.spacing_tx_m.unwrap_or(half),
            spacing_rx: sys.spacing_rx_m.unwrap_or(half),
            spacing_ios: self.surface.spacing_m.unwrap_or(half),
            geometry,
            channel_model: ChannelModel {
                fading: ch.model,
                rician_k: ch.rician_k,
                pathloss_enabled: ch.pathloss,
                pathloss_exponents: ch.exponents,
                reference_gain,
            },
            pair_set,
            solver,
            runs: self.experiment.runs,
            seed: self.experiment.seed,
        })
    }
}
