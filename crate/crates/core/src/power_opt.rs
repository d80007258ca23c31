//! Optimization of the reflected/refracted power split `ρ`.
//!
//! With covariances and coefficients fixed, write `C_k = G_k diag(β) U` for
//! the coefficients on user `k`'s side. Then
//!
//! ```text
//! X̄(ρ) = I + Σ_k D_kᴴ S̄_k D_k
//!          + √ρ (X₁ + X₁ᴴ) + √(1−ρ) (X₂ + X₂ᴴ) + ρ Y₁ + (1−ρ) Y₂
//! ```
//!
//! with `X₁ = Σ_{k∈R} C_kᴴ S̄_k D_k`, `Y₁ = Σ_{k∈R} C_kᴴ S̄_k C_k` and
//! `X₂`, `Y₂` the same sums over transmission-side users. The objective is
//! `f(ρ) = log2 |X̄(ρ)|` and
//! `f'(ρ) = tr(X̄⁻¹ dX̄/dρ) / ln 2` with
//! `dX̄/dρ = (X₁+X₁ᴴ)/(2√ρ) − (X₂+X₂ᴴ)/(2√(1−ρ)) + Y₁ − Y₂`.

use serde::{Deserialize, Serialize};

use crate::channel::{cascade, check_surface_dims, effective_channels, ChannelSet, Side};
use crate::error::{Error, Result};
use crate::ios_opt::IosState;
use crate::linalg::{c, hermitian_part, identity, log2_det_pd, pd_cholesky, CMat};
use crate::rates::{mac_sum_rate_unchecked, CovarianceSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoOptions {
    pub rho_min: f64,
    pub rho_max: f64,
    /// Initial step size of every backtracking search.
    pub step0: f64,
    /// Step shrink factor.
    pub shrink: f64,
    /// Armijo sufficient-increase constant.
    pub armijo: f64,
    /// Stop when the accepted projected step is shorter than this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for RhoOptions {
    fn default() -> Self {
        RhoOptions {
            rho_min: 1e-6,
            rho_max: 1.0 - 1e-6,
            step0: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
            tol: 1e-8,
            max_iters: 200,
        }
    }
}

/// Clamps `rho` onto `[rho_min, rho_max]`.
pub fn project_rho(rho: f64, opts: &RhoOptions) -> f64 {
    if rho < opts.rho_min {
        opts.rho_min
    } else if rho > opts.rho_max {
        opts.rho_max
    } else {
        rho
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhoDerivatives {
    pub value: f64,
    pub grad: f64,
    /// Central difference of the analytic gradient. Diagnostic only.
    pub second: f64,
}

/// The four matrices of the `ρ` expansion plus the `ρ`-independent part.
#[derive(Clone, Debug)]
pub struct RhoDecomposition {
    /// `I + Σ_k D_kᴴ S̄_k D_k`.
    pub base: CMat,
    pub x1: CMat,
    pub x2: CMat,
    pub y1: CMat,
    pub y2: CMat,
}

impl RhoDecomposition {
    pub fn new(channels: &ChannelSet, covs: &CovarianceSet, ios: &IosState) -> Result<Self> {
        check_surface_dims(channels, ios)?;
        if covs.s.len() != channels.num_users() {
            return Err(Error::Config(format!(
                "{} covariances for {} users",
                covs.s.len(),
                channels.num_users()
            )));
        }
        let nt = channels.nt();
        let mut base = identity(nt);
        let zero = CMat::zeros(nt, nt);
        let (mut x1, mut x2, mut y1, mut y2) = (zero.clone(), zero.clone(), zero.clone(), zero);
        for k in 0..channels.num_users() {
            let d = &channels.direct[k];
            let s = &covs.s[k];
            base += d.adjoint() * s * d;
            if channels.n_ios() == 0 {
                continue;
            }
            let (beta, x, y) = match channels.side[k] {
                Side::Reflection => (&ios.beta_r, &mut x1, &mut y1),
                Side::Transmission => (&ios.beta_t, &mut x2, &mut y2),
            };
            let ck = cascade(channels, beta, k);
            let cs = ck.adjoint() * s;
            *x += &cs * d;
            *y += &cs * &ck;
        }
        Ok(RhoDecomposition {
            base: hermitian_part(&base),
            x1,
            x2,
            y1: hermitian_part(&y1),
            y2: hermitian_part(&y2),
        })
    }

    pub fn gram(&self, rho: f64) -> CMat {
        let a = rho.sqrt();
        let b = (1.0 - rho).sqrt();
        let x = &self.base
            + (&self.x1 + self.x1.adjoint()) * c(a, 0.0)
            + (&self.x2 + self.x2.adjoint()) * c(b, 0.0)
            + &self.y1 * c(rho, 0.0)
            + &self.y2 * c(1.0 - rho, 0.0);
        hermitian_part(&x)
    }

    pub fn gram_derivative(&self, rho: f64) -> CMat {
        let a = 0.5 / rho.sqrt();
        let b = -0.5 / (1.0 - rho).sqrt();
        let d = (&self.x1 + self.x1.adjoint()) * c(a, 0.0)
            + (&self.x2 + self.x2.adjoint()) * c(b, 0.0)
            + &self.y1
            - &self.y2;
        hermitian_part(&d)
    }

    pub fn value(&self, rho: f64) -> Result<f64> {
        Ok(log2_det_pd(&self.gram(rho))?.max(0.0))
    }

    fn check_domain(rho: f64) -> Result<()> {
        if rho > 0.0 && rho < 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "the power-split derivative is singular at rho = {rho}; need 0 < rho < 1"
            )))
        }
    }

    /// `f'(ρ)` in bits per unit `ρ`.
    pub fn grad(&self, rho: f64) -> Result<f64> {
        Self::check_domain(rho)?;
        let x = self.gram(rho);
        let chol = pd_cholesky(&x).ok_or_else(|| Error::Numerical("gram matrix is not positive definite".into()))?;
        let solved = chol.solve(&self.gram_derivative(rho));
        Ok(solved.trace().re / std::f64::consts::LN_2)
    }

    pub fn derivatives(&self, rho: f64) -> Result<RhoDerivatives> {
        Self::check_domain(rho)?;
        let h = 1e-6 * rho.min(1.0 - rho).min(1e-2);
        Ok(RhoDerivatives {
            value: self.value(rho)?,
            grad: self.grad(rho)?,
            second: (self.grad(rho + h)? - self.grad(rho - h)?) / (2.0 * h),
        })
    }
}

/// MAC sum rate with the effective channels reassembled at `rho`.
pub fn objective_of_rho(channels: &ChannelSet, covs: &CovarianceSet, ios: &IosState, rho: f64) -> Result<f64> {
    let mut st = ios.clone();
    st.rho = rho;
    let h = effective_channels(channels, &st)?;
    mac_sum_rate_unchecked(&h.h, &covs.s)
}

pub fn grad_rho(channels: &ChannelSet, covs: &CovarianceSet, ios: &IosState, rho: f64) -> Result<RhoDerivatives> {
    RhoDecomposition::new(channels, covs, ios)?.derivatives(rho)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoOutcome {
    pub rho: f64,
    pub value: f64,
    pub iterations: usize,
    /// Objective after each accepted step (first entry is the start).
    pub accepted_values: Vec<f64>,
}

/// One projected-gradient step with Armijo backtracking. Returns the start
/// point unchanged when no step gives sufficient increase.
pub fn projected_gradient_step(problem: &RhoDecomposition, rho: f64, value: f64, opts: &RhoOptions) -> Result<(f64, f64)> {
    let g = problem.grad(rho)?;
    if g == 0.0 {
        return Ok((rho, value));
    }
    let mut step = opts.step0;
    while step > 1e-18 {
        let cand = project_rho(rho + step * g, opts);
        let moved = cand - rho;
        if moved == 0.0 {
            return Ok((rho, value));
        }
        let v = problem.value(cand)?;
        if v >= value + opts.armijo * g * moved {
            return Ok((cand, v));
        }
        step *= opts.shrink;
    }
    Ok((rho, value))
}

/// Projected gradient ascent on `ρ` from `rho_init`.
pub fn optimize_rho_on(problem: &RhoDecomposition, rho_init: f64, opts: &RhoOptions) -> Result<RhoOutcome> {
    if !(rho_init >= opts.rho_min && rho_init <= opts.rho_max) {
        return Err(Error::Domain(format!(
            "initial rho {rho_init} outside [{}, {}]",
            opts.rho_min, opts.rho_max
        )));
    }
    let mut rho = rho_init;
    let mut value = problem.value(rho)?;
    let mut accepted_values = vec![value];
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let (next, v) = projected_gradient_step(problem, rho, value, opts)?;
        let moved = (next - rho).abs();
        if moved > 0.0 {
            accepted_values.push(v);
        }
        rho = next;
        value = v;
        if moved < opts.tol {
            break;
        }
    }
    Ok(RhoOutcome {
        rho,
        value,
        iterations,
        accepted_values,
    })
}

pub fn optimize_rho(
    channels: &ChannelSet,
    covs: &CovarianceSet,
    ios: &IosState,
    rho_init: f64,
    opts: &RhoOptions,
) -> Result<RhoOutcome> {
    let problem = RhoDecomposition::new(channels, covs, ios)?;
    optimize_rho_on(&problem, rho_init, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let o = RhoOptions::default();
        assert_eq!(project_rho(1.2, &o), o.rho_max);
        assert_eq!(project_rho(0.5, &o), 0.5);
        assert_eq!(project_rho(-0.1, &o), o.rho_min);
    }

    fn scalar_reflection_only(m: f64) -> (ChannelSet, CovarianceSet, IosState) {
        // D = 0, cascade g u = sqrt(m), S̄ = 1 -> f(ρ) = log2(1 + ρ m)
        let one = |v: f64| CMat::from_element(1, 1, c(v, 0.0));
        let ch = ChannelSet::from_parts(vec![one(0.0)], one(m.sqrt()), vec![one(1.0)], 1).unwrap();
        (ch, CovarianceSet::mac_dual(vec![one(1.0)]), IosState::continuous(1, 0.5))
    }

    #[test]
    fn scalar_gradient_matches_closed_form() {
        let m = 3.0;
        let (ch, covs, ios) = scalar_reflection_only(m);
        for rho in [0.1, 0.37, 0.8] {
            let d = grad_rho(&ch, &covs, &ios, rho).unwrap();
            let want = m / (1.0 + rho * m) / std::f64::consts::LN_2;
            assert!((d.grad - want).abs() < 1e-12, "{} vs {}", d.grad, want);
            assert!((d.value - (1.0 + rho * m).log2()).abs() < 1e-12);
            assert!(d.second < 0.0);
        }
    }

    #[test]
    fn monotone_objective_goes_to_upper_bound() {
        let (ch, covs, ios) = scalar_reflection_only(5.0);
        let o = RhoOptions::default();
        let out = optimize_rho(&ch, &covs, &ios, 0.5, &o).unwrap();
        assert_eq!(out.rho, o.rho_max);
        assert!(out.accepted_values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn gradient_rejects_endpoints() {
        let (ch, covs, ios) = scalar_reflection_only(1.0);
        assert!(matches!(grad_rho(&ch, &covs, &ios, 0.0), Err(Error::Domain(_))));
        assert!(matches!(grad_rho(&ch, &covs, &ios, 1.0), Err(Error::Domain(_))));
    }
}
