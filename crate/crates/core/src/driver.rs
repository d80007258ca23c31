//! Alternating optimization over covariances, surface coefficients, and the
//! power split, plus Monte-Carlo averaging over channel realizations.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{effective_channels, generate_channels, ChannelSet, EffectiveChannels, Scenario, Side};
use crate::covariance_opt::{optimize_covariances, CovarianceOptions};
use crate::error::{Error, Result};
use crate::ios_opt::{sweep_elements, IosState, SurfaceMode};
use crate::linalg::{c, identity};
use crate::power_opt::{optimize_rho_on, projected_gradient_step, RhoDecomposition, RhoOptions};
use crate::rates::{bc_user_rates, mac_sum_rate_unchecked, mac_to_bc, CovarianceSet, UserOrdering};

/// How much work the power-split stage does per outer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoStage {
    /// One projected-gradient step with backtracking.
    SingleStep,
    /// Projected gradient run to convergence.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AoOptions {
    pub max_outer_iters: usize,
    /// Stop when the relative objective change over one outer iteration
    /// drops below this.
    pub rel_tol: f64,
    pub mode: SurfaceMode,
    pub rho_stage: RhoStage,
    pub rho_init: f64,
    pub covariance: CovarianceOptions,
    pub rho: RhoOptions,
    pub record_trace: bool,
}

impl Default for AoOptions {
    fn default() -> Self {
        AoOptions {
            max_outer_iters: 100,
            rel_tol: 1e-5,
            mode: SurfaceMode::Continuous,
            rho_stage: RhoStage::SingleStep,
            rho_init: 0.5,
            covariance: CovarianceOptions::default(),
            rho: RhoOptions::default(),
            record_trace: true,
        }
    }
}

impl AoOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters < 1 {
            return Err(Error::key("solver.max_outer_iters", "must be at least 1"));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::key("solver.rel_tol", "must be positive"));
        }
        let r = &self.rho;
        if !(r.rho_min > 0.0 && r.rho_min < r.rho_max && r.rho_max < 1.0) {
            return Err(Error::key("solver.rho_min", "rho bounds must satisfy 0 < rho_min < rho_max < 1"));
        }
        Ok(())
    }
}

/// Objective values recorded at the end of each stage of one outer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageValues {
    pub after_covariance: f64,
    pub after_surface: f64,
    pub after_rho: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AoReport {
    /// MAC sum rate at the end of each outer iteration.
    pub objective_trace: Vec<f64>,
    pub stage_trace: Vec<StageValues>,
    /// BC sum rates of reflection-side and transmission-side users at the
    /// end of each outer iteration.
    pub side_rate_trace: Vec<(f64, f64)>,
    pub rho_trace: Vec<f64>,
    /// Objective at the initial point, before any update.
    pub initial_objective: f64,
    #[serde(skip)]
    pub final_state: IosState,
    #[serde(skip)]
    pub mac_covariances: CovarianceSet,
    #[serde(skip)]
    pub bc_covariances: CovarianceSet,
    pub ordering: UserOrdering,
    pub user_rates: Vec<f64>,
    pub rate_reflection_side: f64,
    pub rate_transmission_side: f64,
    pub final_objective: f64,
    pub bc_sum_rate: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Outer iterations where the fresh covariance solution was not better
    /// than the incumbent and the incumbent was kept.
    pub covariance_kept: usize,
    pub wall_time_secs: f64,
}

/// Starting surface state: unit coefficients (continuous) or the first
/// table entry everywhere (discrete).
pub fn initial_state(n: usize, opts: &AoOptions, pairs: Option<&[crate::ios_opt::CoefficientPair]>) -> Result<IosState> {
    match opts.mode {
        SurfaceMode::Continuous => {
            let mut st = IosState::continuous(n, opts.rho_init);
            if let Some(p) = pairs {
                st.pair_set = p.to_vec();
            }
            Ok(st)
        }
        SurfaceMode::Discrete => match pairs {
            Some(p) => IosState::discrete(n, opts.rho_init, p.to_vec()),
            None if n == 0 => Ok(IosState::continuous(0, opts.rho_init)),
            None => Err(Error::key("surface.pairs", "discrete mode requires a coefficient-pair table")),
        },
    }
}

fn side_sums(channels: &ChannelSet, rates: &[f64]) -> (f64, f64) {
    let r = channels.users_on(Side::Reflection).map(|k| rates[k]).sum();
    let t = channels.users_on(Side::Transmission).map(|k| rates[k]).sum();
    (r, t)
}

fn bc_audit(h: &EffectiveChannels, covs: &CovarianceSet, order: &UserOrdering) -> Result<(CovarianceSet, Vec<f64>)> {
    let bc = mac_to_bc(h, covs, order)?;
    let rates = bc_user_rates(h, &bc, order)?;
    Ok((bc, rates))
}

fn stage<T>(iteration: usize, stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        iteration,
        stage,
        source: Box::new(e),
    })
}

/// Runs the alternating optimization on one realization.
///
/// Each outer iteration: (1) optimal dual-MAC covariances for the current
/// surface, (2) one pass over all elements, (3) a power-split update.
pub fn run_ao(
    channels: &ChannelSet,
    power_budget: f64,
    opts: &AoOptions,
    init: Option<IosState>,
    pairs: Option<&[crate::ios_opt::CoefficientPair]>,
) -> Result<AoReport> {
    opts.validate()?;
    let start = Instant::now();
    let k = channels.num_users();
    let nr = channels.nr();
    let n = channels.n_ios();
    let mut state = match init {
        Some(s) => s,
        None => initial_state(n, opts, pairs)?,
    };
    let order = UserOrdering::identity(k);

    let iso = identity(nr) * c(power_budget / (k * nr) as f64, 0.0);
    let mut covs = CovarianceSet::mac_dual(vec![iso; k]);
    let initial_objective = mac_sum_rate_unchecked(&effective_channels(channels, &state)?.h, &covs.s)?;

    let mut objective_trace = Vec::new();
    let mut stage_trace = Vec::new();
    let mut side_rate_trace = Vec::new();
    let mut rho_trace = Vec::new();
    let mut previous = initial_objective;
    let mut converged = false;
    let mut covariance_kept = 0;

    for it in 1..=opts.max_outer_iters {
        // (1) covariances
        let h = stage(it, "covariance", effective_channels(channels, &state))?;
        let incumbent = stage(it, "covariance", mac_sum_rate_unchecked(&h.h, &covs.s))?;
        let sol = stage(it, "covariance", optimize_covariances(&h.h, power_budget, &opts.covariance))?;
        let after_covariance = if sol.objective >= incumbent {
            covs = sol.covariances;
            sol.objective
        } else {
            covariance_kept += 1;
            incumbent
        };

        // (2) surface coefficients
        let after_surface = if n > 0 {
            state = stage(it, "surface", sweep_elements(channels, &covs, &state, opts.mode))?;
            let h = stage(it, "surface", effective_channels(channels, &state))?;
            stage(it, "surface", mac_sum_rate_unchecked(&h.h, &covs.s))?
        } else {
            after_covariance
        };

        // (3) power split
        let after_rho = if n > 0 {
            let problem = stage(it, "power-split", RhoDecomposition::new(channels, &covs, &state))?;
            let (rho, value) = match opts.rho_stage {
                RhoStage::SingleStep => stage(
                    it,
                    "power-split",
                    projected_gradient_step(&problem, state.rho, after_surface, &opts.rho),
                )?,
                RhoStage::Full => {
                    let out = stage(it, "power-split", optimize_rho_on(&problem, state.rho, &opts.rho))?;
                    (out.rho, out.value)
                }
            };
            state.rho = rho;
            // re-evaluate on reassembled channels so every trace entry uses the same route
            let h = stage(it, "power-split", effective_channels(channels, &state))?;
            let v = stage(it, "power-split", mac_sum_rate_unchecked(&h.h, &covs.s))?;
            log::trace!("rho step value {value:.12} reassembled {v:.12}");
            v
        } else {
            after_surface
        };

        let h = stage(it, "audit", effective_channels(channels, &state))?;
        let (_, rates) = stage(it, "audit", bc_audit(&h, &covs, &order))?;
        side_rate_trace.push(side_sums(channels, &rates));
        objective_trace.push(after_rho);
        stage_trace.push(StageValues {
            after_covariance,
            after_surface,
            after_rho,
        });
        rho_trace.push(state.rho);
        log::debug!("iteration {it}: objective {after_rho:.9} rho {:.6}", state.rho);

        let rel = (after_rho - previous).abs() / after_rho.abs().max(1e-300);
        previous = after_rho;
        if rel < opts.rel_tol {
            converged = true;
            break;
        }
    }

    let h = effective_channels(channels, &state)?;
    let (bc, user_rates) = bc_audit(&h, &covs, &order)?;
    let (rr, rt) = side_sums(channels, &user_rates);
    let final_objective = *objective_trace.last().expect("at least one iteration");
    let bc_sum_rate: f64 = user_rates.iter().sum();
    if (bc_sum_rate - final_objective).abs() > 1e-8 * final_objective.abs().max(1.0) {
        return Err(Error::Numerical(format!(
            "duality audit failed: BC sum rate {bc_sum_rate} vs MAC objective {final_objective}"
        )));
    }
    let iterations_used = objective_trace.len();
    Ok(AoReport {
        objective_trace,
        stage_trace,
        side_rate_trace,
        rho_trace,
        initial_objective,
        final_state: state,
        mac_covariances: covs,
        bc_covariances: bc,
        ordering: order,
        user_rates,
        rate_reflection_side: rr,
        rate_transmission_side: rt,
        final_objective,
        bc_sum_rate,
        iterations_used,
        converged,
        covariance_kept,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Draws the realization for `seed` and runs [`run_ao`] on it.
pub fn run_seed(scenario: &Scenario, seed: u64, opts: &AoOptions) -> Result<AoReport> {
    let channels = generate_channels(scenario, seed);
    run_ao(&channels, scenario.power_budget, opts, None, scenario.pair_set.as_deref())
}

/// Iteration-aligned mean and standard error across runs. Runs that stopped
/// early are padded with their final value.
#[derive(Clone, Debug, Serialize)]
pub struct MonteCarloSummary {
    pub seeds: Vec<u64>,
    pub mean_objective: Vec<f64>,
    pub stderr_objective: Vec<f64>,
    pub mean_rate_reflection: Vec<f64>,
    pub mean_rate_transmission: Vec<f64>,
    pub mean_rho: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MonteCarloReport {
    pub runs: Vec<(u64, AoReport)>,
    pub summary: MonteCarloSummary,
}

fn padded(v: &[f64], len: usize) -> impl Iterator<Item = f64> + '_ {
    let last = v.last().copied().unwrap_or(0.0);
    v.iter().copied().chain(std::iter::repeat(last)).take(len)
}

fn column_stats(cols: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = cols.len() as f64;
    let mut mean = vec![0.0; len];
    let mut sq = vec![0.0; len];
    for col in cols {
        for (i, v) in padded(col, len).enumerate() {
            mean[i] += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for col in cols {
        for (i, v) in padded(col, len).enumerate() {
            sq[i] += (v - mean[i]).powi(2);
        }
    }
    let stderr = sq
        .iter()
        .map(|s| if n > 1.0 { (s / (n - 1.0)).sqrt() / n.sqrt() } else { 0.0 })
        .collect();
    (mean, stderr)
}

/// Aggregates in ascending seed order, so the result does not depend on the
/// order of `runs`.
pub fn summarize(runs: &[(u64, AoReport)]) -> MonteCarloSummary {
    let mut sorted: Vec<&(u64, AoReport)> = runs.iter().collect();
    sorted.sort_by_key(|(s, _)| *s);
    let runs: Vec<(u64, AoReport)> = sorted.into_iter().cloned().collect();
    let runs = runs.as_slice();
    let len = runs.iter().map(|(_, r)| r.iterations_used).max().unwrap_or(0);
    let objective: Vec<Vec<f64>> = runs.iter().map(|(_, r)| r.objective_trace.clone()).collect();
    let refl: Vec<Vec<f64>> = runs
        .iter()
        .map(|(_, r)| r.side_rate_trace.iter().map(|s| s.0).collect())
        .collect();
    let trans: Vec<Vec<f64>> = runs
        .iter()
        .map(|(_, r)| r.side_rate_trace.iter().map(|s| s.1).collect())
        .collect();
    let rho: Vec<Vec<f64>> = runs.iter().map(|(_, r)| r.rho_trace.clone()).collect();
    let (mean_objective, stderr_objective) = column_stats(&objective, len);
    MonteCarloSummary {
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        mean_objective,
        stderr_objective,
        mean_rate_reflection: column_stats(&refl, len).0,
        mean_rate_transmission: column_stats(&trans, len).0,
        mean_rho: column_stats(&rho, len).0,
    }
}

/// Runs every seed (in parallel on the current rayon pool) and averages the
/// traces. `runs` keeps the input seed order.
pub fn monte_carlo_seeds(scenario: &Scenario, seeds: &[u64], opts: &AoOptions) -> Result<MonteCarloReport> {
    if seeds.is_empty() {
        return Err(Error::key("experiment.runs", "need at least one run"));
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            run_seed(scenario, seed, opts)
                .map(|r| (seed, r))
                .map_err(|e| Error::Run {
                    seed,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&runs);
    Ok(MonteCarloReport { runs, summary })
}

/// `num_runs` realizations with seeds `scenario.seed, scenario.seed + 1, ...`.
pub fn monte_carlo(scenario: &Scenario, num_runs: usize, opts: &AoOptions) -> Result<MonteCarloReport> {
    let seeds: Vec<u64> = (0..num_runs as u64).map(|i| scenario.seed.wrapping_add(i)).collect();
    monte_carlo_seeds(scenario, &seeds, opts)
}
