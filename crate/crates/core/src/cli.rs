//! Experiment front end: loads a scenario, runs the Monte-Carlo batch, and
//! writes CSV traces, final-state dumps, and a run manifest.
//!
//! Output layout under `--out DIR`:
//!
//! ```text
//! manifest.json
//! mean.csv                      iteration-aligned averages
//! runs/seed_<s>.csv             per-run convergence trace
//! runs/seed_<s>_final.json      final surface state, covariances, rates
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::driver::{monte_carlo_seeds, AoReport, MonteCarloSummary};
use crate::error::Error;
use crate::ios_opt::SurfaceMode;
use crate::linalg::CMat;
use crate::scenario::{load_scenario, ConfigError, Scenario};

pub const WORKERS_ENV: &str = "IOSBC_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    }
}

/// One row of a convergence CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub mac_sum_rate_bits: f64,
    pub rate_reflection_side: f64,
    pub rate_transmission_side: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub iteration: usize,
    pub mac_sum_rate_bits: f64,
    pub rate_reflection_side: f64,
    pub rate_transmission_side: f64,
    pub rho: f64,
    pub stderr_mac_sum_rate_bits: f64,
}

pub fn trace_rows(report: &AoReport) -> Vec<TraceRow> {
    report
        .objective_trace
        .iter()
        .zip(&report.side_rate_trace)
        .zip(&report.rho_trace)
        .enumerate()
        .map(|(i, ((obj, sides), rho))| TraceRow {
            iteration: i + 1,
            mac_sum_rate_bits: *obj,
            rate_reflection_side: sides.0,
            rate_transmission_side: sides.1,
            rho: *rho,
        })
        .collect()
}

pub fn mean_rows(summary: &MonteCarloSummary) -> Vec<MeanRow> {
    (0..summary.mean_objective.len())
        .map(|i| MeanRow {
            iteration: i + 1,
            mac_sum_rate_bits: summary.mean_objective[i],
            rate_reflection_side: summary.mean_rate_reflection[i],
            rate_transmission_side: summary.mean_rate_transmission[i],
            rho: summary.mean_rho[i],
            stderr_mac_sum_rate_bits: summary.stderr_objective[i],
        })
        .collect()
}

/// Serializes rows as UTF-8 CSV with a header row and LF line endings.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    r.deserialize()
        .collect::<Result<Vec<TraceRow>, _>>()
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

/// `[re, im]` rows of a complex matrix.
fn matrix_json(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

#[derive(Serialize)]
struct FinalDump<'a> {
    seed: u64,
    mode: SurfaceMode,
    rho: f64,
    beta_reflection: Vec<[f64; 2]>,
    beta_transmission: Vec<[f64; 2]>,
    mac_covariances: Vec<Vec<Vec<[f64; 2]>>>,
    bc_covariances: Vec<Vec<Vec<[f64; 2]>>>,
    ordering: &'a [usize],
    user_rates: &'a [f64],
    rate_reflection_side: f64,
    rate_transmission_side: f64,
    mac_sum_rate_bits: f64,
    bc_sum_rate_bits: f64,
    initial_objective: f64,
    iterations_used: usize,
    converged: bool,
    covariance_kept: usize,
    wall_time_secs: f64,
}

fn final_dump(seed: u64, r: &AoReport) -> FinalDump<'_> {
    let cvec = |v: &[num_complex::Complex64]| v.iter().map(|z| [z.re, z.im]).collect();
    FinalDump {
        seed,
        mode: r.final_state.mode,
        rho: r.final_state.rho,
        beta_reflection: cvec(&r.final_state.beta_r),
        beta_transmission: cvec(&r.final_state.beta_t),
        mac_covariances: r.mac_covariances.s.iter().map(matrix_json).collect(),
        bc_covariances: r.bc_covariances.s.iter().map(matrix_json).collect(),
        ordering: &r.ordering.pi,
        user_rates: &r.user_rates,
        rate_reflection_side: r.rate_reflection_side,
        rate_transmission_side: r.rate_transmission_side,
        mac_sum_rate_bits: r.final_objective,
        bc_sum_rate_bits: r.bc_sum_rate,
        initial_objective: r.initial_objective,
        iterations_used: r.iterations_used,
        converged: r.converged,
        covariance_kept: r.covariance_kept,
        wall_time_secs: r.wall_time_secs,
    }
}

/// Everything needed to repeat an experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    /// SHA-256 of the resolved scenario's canonical JSON.
    pub scenario_hash: String,
    pub scenario: Scenario,
    pub config_path: String,
    pub overrides: Vec<String>,
    pub seeds: Vec<u64>,
    /// BC encoding order used for the final conversion.
    pub ordering: String,
    pub artifacts: Vec<String>,
}

pub fn scenario_hash(s: &Scenario) -> String {
    let json = serde_json::to_vec(s).expect("scenario serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Parses `a..b` (exclusive), `a..=b`, or a single seed.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("invalid seed range `{spec}` (expected a..b, a..=b, or a single integer)");
    let parse = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    if let Some((a, b)) = spec.split_once("..=") {
        let (a, b) = (parse(a)?, parse(b)?);
        if b < a {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (parse(a)?, parse(b)?);
        if b <= a {
            return Err(bad());
        }
        Ok((a..b).collect())
    } else {
        Ok(vec![parse(spec)?])
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seeds: Option<String>,
    pub mode: Option<SurfaceMode>,
    pub runs: Option<usize>,
    pub overrides: Vec<String>,
    pub workers: Option<usize>,
}

pub struct RunOutput {
    pub manifest: RunManifest,
    pub summary: MonteCarloSummary,
    pub reports: Vec<(u64, AoReport)>,
}

pub fn resolve_scenario(config: &Path, overrides: &[String], mode: Option<SurfaceMode>) -> Result<Scenario, CliError> {
    let mut all = overrides.to_vec();
    if let Some(m) = mode {
        let name = match m {
            SurfaceMode::Continuous => "continuous",
            SurfaceMode::Discrete => "discrete",
        };
        all.push(format!("solver.mode=\"{name}\""));
    }
    Ok(load_scenario(config, &all)?)
}

/// `run` subcommand.
pub fn cmd_run(args: &RunArgs) -> Result<RunOutput, CliError> {
    let scenario = resolve_scenario(&args.config, &args.overrides, args.mode)?;
    let seeds = match (&args.seeds, args.runs) {
        (Some(s), _) => parse_seeds(s).map_err(|m| CliError {
            code: EXIT_CONFIG,
            message: m,
        })?,
        (None, Some(n)) if n >= 1 => (0..n as u64).map(|i| scenario.seed.wrapping_add(i)).collect(),
        (None, Some(_)) => {
            return Err(CliError {
                code: EXIT_CONFIG,
                message: "--runs must be at least 1".into(),
            })
        }
        (None, None) => (0..scenario.runs as u64).map(|i| scenario.seed.wrapping_add(i)).collect(),
    };
    let workers = args.workers.or_else(|| {
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    });
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool = pool.num_threads(w.max(1));
    }
    let pool = pool.build().map_err(runtime)?;
    let report = pool
        .install(|| monte_carlo_seeds(&scenario, &seeds, &scenario.solver))
        .map_err(runtime)?;

    let runs_dir = args.out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(runtime)?;
    let mut artifacts = Vec::new();
    for (seed, r) in &report.runs {
        let name = format!("runs/seed_{seed}.csv");
        write_atomic(&args.out.join(&name), &csv_bytes(&trace_rows(r)).map_err(runtime)?).map_err(runtime)?;
        artifacts.push(name);
        let name = format!("runs/seed_{seed}_final.json");
        let json = serde_json::to_vec_pretty(&final_dump(*seed, r)).map_err(runtime)?;
        write_atomic(&args.out.join(&name), &json).map_err(runtime)?;
        artifacts.push(name);
    }
    write_atomic(
        &args.out.join("mean.csv"),
        &csv_bytes(&mean_rows(&report.summary)).map_err(runtime)?,
    )
    .map_err(runtime)?;
    artifacts.push("mean.csv".into());
    artifacts.push("manifest.json".into());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        scenario_hash: scenario_hash(&scenario),
        scenario,
        config_path: args.config.display().to_string(),
        overrides: args.overrides.clone(),
        seeds,
        ordering: "identity".into(),
        artifacts,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(runtime)?;
    write_atomic(&args.out.join("manifest.json"), &json).map_err(runtime)?;
    Ok(RunOutput {
        manifest,
        summary: report.summary,
        reports: report.runs,
    })
}

/// `validate` subcommand: returns the resolved scenario for printing.
pub fn cmd_validate(config: &Path, overrides: &[String]) -> Result<Scenario, CliError> {
    resolve_scenario(config, overrides, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("3..6").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seeds("3..=4").unwrap(), vec![3, 4]);
        assert_eq!(parse_seeds("9").unwrap(), vec![9]);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("x..2").is_err());
    }

    #[test]
    fn csv_has_header_and_lf() {
        let rows = vec![TraceRow {
            iteration: 1,
            mac_sum_rate_bits: 1.5,
            rate_reflection_side: 1.0,
            rate_transmission_side: 0.5,
            rho: 0.25,
        }];
        let text = String::from_utf8(csv_bytes(&rows).unwrap()).unwrap();
        assert_eq!(
            text,
            "iteration,mac_sum_rate_bits,rate_reflection_side,rate_transmission_side,rho\n1,1.5,1.0,0.5,0.25\n"
        );
    }
}
