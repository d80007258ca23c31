//! Dual-MAC covariance optimization under a sum-power constraint.
//!
//! For a fixed multiplier `μ` the partial Lagrangian
//! `ln |I + Σ_k H_kᴴ S̄_k H_k| − μ Σ_k tr S̄_k` is maximized by cyclic block
//! coordinate maximization: each block update is a closed-form water-filling
//! against the other users' contribution. `μ` is then bisected until the
//! allocated power meets the budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, herm_eig, hermitian_part, identity, log2_det_pd, max_eigenvalue, pd_cholesky, CMat};
use crate::rates::{mac_gram, CovarianceSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceOptions {
    /// Relative Lagrangian change (and relative covariance change) that ends
    /// the block-coordinate sweeps at fixed `μ`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// `|Σ tr S̄_k − P| / P` at which the `μ` bisection stops.
    pub power_rel_tol: f64,
    pub max_bisections: usize,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        CovarianceOptions {
            tol: 1e-8,
            max_sweeps: 500,
            power_rel_tol: 1e-6,
            max_bisections: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaterfillSolution {
    pub covariance: CMat,
    pub allocated_power: f64,
    pub active_modes: usize,
    /// Eigenvalues `σ_i` of `H_k H̄_k⁻¹ H_kᴴ`, in the column order of the
    /// eigenvectors used to build `covariance`.
    pub mode_gains: Vec<f64>,
    /// Power placed on each mode.
    pub mode_powers: Vec<f64>,
}

/// Maximizes `ln |I + H̄^{-1/2} Hᴴ S̄ H H̄^{-1/2}| − μ tr S̄` over PSD `S̄`.
///
/// `hbar` must be Hermitian positive definite; its inverse is applied
/// through a Cholesky solve.
pub fn waterfill_user(h_k: &CMat, hbar_k: &CMat, mu: f64) -> Result<WaterfillSolution> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("water level multiplier must be positive, got {mu}")));
    }
    let chol = pd_cholesky(hbar_k).ok_or_else(|| Error::Numerical("interference-plus-noise matrix is not positive definite".into()))?;
    let solved = chol.solve(&h_k.adjoint());
    let m = hermitian_part(&(h_k * solved));
    let (sigma, v) = herm_eig(&m);
    let powers: Vec<f64> = sigma
        .iter()
        .map(|&s| if s > 0.0 { (1.0 / mu - 1.0 / s).max(0.0) } else { 0.0 })
        .collect();
    let mut scaled = v.clone();
    for (j, p) in powers.iter().enumerate() {
        let mut col = scaled.column_mut(j);
        col *= c(*p, 0.0);
    }
    let covariance = hermitian_part(&(scaled * v.adjoint()));
    Ok(WaterfillSolution {
        allocated_power: powers.iter().sum(),
        active_modes: powers.iter().filter(|&&p| p > 0.0).count(),
        covariance,
        mode_gains: sigma,
        mode_powers: powers,
    })
}

/// `I + Σ_{j≠k} H_jᴴ S̄_j H_j`.
pub fn interference_plus_noise(h: &[CMat], s: &[CMat], k: usize) -> CMat {
    let nt = h[k].ncols();
    let mut x = identity(nt);
    for (j, (hj, sj)) in h.iter().zip(s).enumerate() {
        if j != k {
            x += hj.adjoint() * sj * hj;
        }
    }
    hermitian_part(&x)
}

/// Natural-log Lagrangian at multiplier `mu` (the `+μP` constant omitted).
pub fn lagrangian(h: &[CMat], s: &[CMat], mu: f64) -> Result<f64> {
    let power: f64 = s.iter().map(|m| m.trace().re).sum();
    Ok(log2_det_pd(&mac_gram(h, s))? * std::f64::consts::LN_2 - mu * power)
}

#[derive(Clone, Debug)]
pub struct BcmOutcome {
    pub covariances: Vec<CMat>,
    pub lagrangian: f64,
    pub sweeps: usize,
    /// Lagrangian after every single block update (only when requested).
    pub update_trace: Vec<f64>,
}

/// Cyclic block-coordinate maximization of the Lagrangian at fixed `mu`.
pub fn bcm_at_mu(h: &[CMat], mu: f64, init: Vec<CMat>, opts: &CovarianceOptions, record: bool) -> Result<BcmOutcome> {
    let mut s = init;
    let mut value = lagrangian(h, &s, mu)?;
    let mut update_trace = Vec::new();
    if record {
        update_trace.push(value);
    }
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..h.len() {
            let hbar = interference_plus_noise(h, &s, k);
            let wf = waterfill_user(&h[k], &hbar, mu)?;
            max_change = max_change.max((&wf.covariance - &s[k]).norm());
            scale = scale.max(wf.covariance.norm());
            s[k] = wf.covariance;
            if record {
                update_trace.push(lagrangian(h, &s, mu)?);
            }
        }
        let next = lagrangian(h, &s, mu)?;
        let rel = (next - value).abs() / value.abs().max(1.0);
        value = next;
        if rel < opts.tol && max_change <= opts.tol * scale.max(1e-300) {
            break;
        }
    }
    Ok(BcmOutcome {
        covariances: s,
        lagrangian: value,
        sweeps,
        update_trace,
    })
}

#[derive(Clone, Debug)]
pub struct CovarianceSolution {
    pub covariances: CovarianceSet,
    pub mu: f64,
    /// MAC sum rate in bits/s/Hz.
    pub objective: f64,
    pub bisections: usize,
    pub sweeps: usize,
}

fn total_power(s: &[CMat]) -> f64 {
    s.iter().map(|m| m.trace().re).sum()
}

/// Maximizes the MAC sum rate over `{S̄_k}` with `Σ tr S̄_k ≤ power_budget`.
///
/// The returned allocation satisfies
/// `Σ tr S̄_k ∈ [P (1 − power_rel_tol), P]`.
pub fn optimize_covariances(h: &[CMat], power_budget: f64, opts: &CovarianceOptions) -> Result<CovarianceSolution> {
    if power_budget.is_nan() || power_budget <= 0.0 {
        return Err(Error::Domain(format!("power budget must be positive, got {power_budget}")));
    }
    if opts.max_sweeps < 1 || opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::Config("covariance optimizer needs max_sweeps >= 1 and tol > 0".into()));
    }
    let k = h.len();
    let nr = h.first().map_or(0, |m| m.nrows());
    let zeros = vec![CMat::zeros(nr, nr); k];

    // Above the largest single-user eigenvalue no mode is active.
    let mu_top = h
        .iter()
        .map(|hk| max_eigenvalue(&(hk * hk.adjoint())))
        .fold(0.0, f64::max);
    if mu_top.is_nan() || mu_top <= 0.0 {
        // No usable channel: any feasible allocation is optimal.
        let iso = identity(nr) * c(power_budget / (k * nr) as f64, 0.0);
        let s = vec![iso; k];
        return Ok(CovarianceSolution {
            objective: 0.0,
            covariances: CovarianceSet::mac_dual(s),
            mu: f64::INFINITY,
            bisections: 0,
            sweeps: 0,
        });
    }
    let mut hi = mu_top;
    let mut lo = mu_top * 1e-3;
    let mut sweeps = 0;
    let mut lo_sol = bcm_at_mu(h, lo, zeros.clone(), opts, false)?;
    sweeps += lo_sol.sweeps;
    let mut expansions = 0;
    while total_power(&lo_sol.covariances) < power_budget {
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Config(format!(
                "could not bracket the water level: power {:.3e} at mu = {:.3e} is still below the budget {power_budget}",
                total_power(&lo_sol.covariances),
                lo
            )));
        }
        hi = lo;
        lo *= 1e-2;
        lo_sol = bcm_at_mu(h, lo, lo_sol.covariances, opts, false)?;
        sweeps += lo_sol.sweeps;
    }

    // Invariant: power(lo) >= P >= power(hi). Keep the best feasible point.
    let mut best: Option<(f64, Vec<CMat>)> = None;
    let mut warm = lo_sol.covariances;
    let mut bisections = 0;
    let target_lo = power_budget * (1.0 - opts.power_rel_tol);
    while bisections < opts.max_bisections {
        bisections += 1;
        let mid = (lo * hi).sqrt();
        let sol = bcm_at_mu(h, mid, warm.clone(), opts, false)?;
        sweeps += sol.sweeps;
        let p = total_power(&sol.covariances);
        if p > power_budget {
            lo = mid;
            warm = sol.covariances;
        } else {
            hi = mid;
            let done = p >= target_lo;
            best = Some((mid, sol.covariances.clone()));
            warm = sol.covariances;
            if done {
                break;
            }
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    let (mu, mut s) = best.ok_or_else(|| {
        Error::Config(format!(
            "water-level bisection found no feasible point within {} steps",
            opts.max_bisections
        ))
    })?;
    let p = total_power(&s);
    if p < target_lo && p > 0.0 {
        // Bisection ran out of steps: rescale onto the budget.
        let f = power_budget / p;
        for m in &mut s {
            *m *= c(f, 0.0);
        }
        log::debug!("water-level bisection stopped early; rescaled power {p:.6e} -> {power_budget:.6e}");
    }
    let objective = log2_det_pd(&mac_gram(h, &s))?.max(0.0);
    Ok(CovarianceSolution {
        covariances: CovarianceSet::mac_dual(s),
        mu,
        objective,
        bisections,
        sweeps,
    })
}
