//! Per-element optimization of the coupled reflection/transmission
//! coefficients, and projection onto the realizable pair table.
//!
//! With all other variables fixed, the objective as a function of one
//! unit-modulus coefficient `β` of element `n` on side `l` is
//! `log2 |A + β B + β* Bᴴ|`. `B` is always `c · u_n` for some column `c`, so
//! `A⁻¹B` has a single non-zero eigenvalue `σ = u_n A⁻¹ c`; the maximizer is
//! `β = exp(−j arg σ)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{check_surface_dims, effective_channels, ChannelSet, Side};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_part, identity, log2_det_pd, pd_cholesky, CMat};
use crate::rates::{mac_sum_rate_unchecked, CovarianceKind, CovarianceSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceMode {
    Continuous,
    Discrete,
}

impl std::str::FromStr for SurfaceMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "continuous" => Ok(SurfaceMode::Continuous),
            "discrete" => Ok(SurfaceMode::Discrete),
            other => Err(format!("unknown mode `{other}` (expected continuous or discrete)")),
        }
    }
}

/// One realizable (reflection, transmission) state of an element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPair {
    pub reflection: Complex64,
    pub transmission: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IosState {
    pub beta_r: Vec<Complex64>,
    pub beta_t: Vec<Complex64>,
    pub rho: f64,
    pub pair_set: Vec<CoefficientPair>,
    pub mode: SurfaceMode,
}

impl IosState {
    /// All coefficients equal to 1 (zero phase).
    pub fn continuous(n: usize, rho: f64) -> Self {
        IosState {
            beta_r: vec![c(1.0, 0.0); n],
            beta_t: vec![c(1.0, 0.0); n],
            rho,
            pair_set: Vec::new(),
            mode: SurfaceMode::Continuous,
        }
    }

    /// Every element in the first state of `pairs`.
    pub fn discrete(n: usize, rho: f64, pairs: Vec<CoefficientPair>) -> Result<Self> {
        let first = *pairs
            .first()
            .ok_or_else(|| Error::Config("discrete surface needs a non-empty pair table".into()))?;
        Ok(IosState {
            beta_r: vec![first.reflection; n],
            beta_t: vec![first.transmission; n],
            rho,
            pair_set: pairs,
            mode: SurfaceMode::Discrete,
        })
    }

    pub fn n(&self) -> usize {
        self.beta_r.len()
    }

    pub fn coefficient(&self, side: Side, n: usize) -> Complex64 {
        match side {
            Side::Reflection => self.beta_r[n],
            Side::Transmission => self.beta_t[n],
        }
    }

    fn set_coefficient(&mut self, side: Side, n: usize, v: Complex64) {
        match side {
            Side::Reflection => self.beta_r[n] = v,
            Side::Transmission => self.beta_t[n] = v,
        }
    }

    pub fn amplitude(&self, side: Side) -> f64 {
        match side {
            Side::Reflection => self.rho.sqrt(),
            Side::Transmission => (1.0 - self.rho).sqrt(),
        }
    }

    /// True when every stored pair is exactly a member of the pair table.
    pub fn pairs_are_members(&self) -> bool {
        self.beta_r.iter().zip(&self.beta_t).all(|(r, t)| {
            self.pair_set
                .iter()
                .any(|p| p.reflection == *r && p.transmission == *t)
        })
    }
}

/// `A` and `B` for one element and side.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOneContext {
    pub a_mat: CMat,
    pub b_mat: CMat,
    pub side: Side,
}

impl RankOneContext {
    /// `log2 |A + β B + β* Bᴴ|`.
    pub fn objective(&self, beta: Complex64) -> Result<f64> {
        let m = &self.a_mat + &self.b_mat * beta + self.b_mat.adjoint() * beta.conj();
        log2_det_pd(&m)
    }
}

fn check_covs(channels: &ChannelSet, covs: &CovarianceSet) -> Result<()> {
    if covs.kind != CovarianceKind::MacDual {
        return Err(Error::Contract("surface optimization needs dual-MAC covariances".into()));
    }
    if covs.s.len() != channels.num_users() {
        return Err(Error::Config(format!(
            "{} covariances for {} users",
            covs.s.len(),
            channels.num_users()
        )));
    }
    let nr = channels.nr();
    if let Some((k, m)) = covs.s.iter().enumerate().find(|(_, m)| m.shape() != (nr, nr)) {
        return Err(Error::Config(format!("covariance {k} is {:?}, expected {nr}x{nr}", m.shape())));
    }
    Ok(())
}

/// Builds the context from already-assembled effective channels `h`.
fn context_from_effective(
    channels: &ChannelSet,
    covs: &[CMat],
    h: &[CMat],
    state: &IosState,
    element: usize,
    side: Side,
) -> RankOneContext {
    let nt = channels.nt();
    let amp = state.amplitude(side);
    let cur = state.coefficient(side, element);
    let u = channels.u_row(element);
    let mut a = identity(nt);
    let mut col = CMat::zeros(nt, 1);
    let mut self_gain = c(0.0, 0.0);
    for k in 0..channels.num_users() {
        let sk = &covs[k];
        if channels.side[k] != side {
            a += h[k].adjoint() * sk * &h[k];
            continue;
        }
        let g = channels.g_col(k, element);
        let own = &g * (cur * amp) * &u;
        let e = &h[k] - own;
        let sg = sk * &g;
        a += e.adjoint() * sk * &e;
        self_gain += (g.adjoint() * &sg)[(0, 0)];
        col += e.adjoint() * &sg;
    }
    // unit-modulus self term: amp² |β|² uᴴ (gᴴ S̄ g) u
    a += u.adjoint() * &u * (self_gain * amp * amp);
    let b = col * c(amp, 0.0) * &u;
    RankOneContext {
        a_mat: hermitian_part(&a),
        b_mat: b,
        side,
    }
}

/// `A_n^l` and `B_n^l` such that, with everything else fixed,
/// `log2 |A + β B + β* Bᴴ|` equals the MAC sum rate for every unit-modulus
/// value `β` of element `element` on `side`.
pub fn build_rank_one_context(
    channels: &ChannelSet,
    covs: &CovarianceSet,
    state: &IosState,
    element: usize,
    side: Side,
) -> Result<RankOneContext> {
    check_surface_dims(channels, state)?;
    check_covs(channels, covs)?;
    if element >= channels.n_ios() {
        return Err(Error::Config(format!(
            "element {element} out of range (N = {})",
            channels.n_ios()
        )));
    }
    let h = effective_channels(channels, state)?;
    Ok(context_from_effective(channels, &covs.s, &h.h, state, element, side))
}

/// The non-zero eigenvalue `σ` of `A⁻¹B`, or `None` when `B` vanishes
/// (relative threshold `1e-12 ‖A⁻¹B‖`).
pub fn dominant_eigenvalue(ctx: &RankOneContext) -> Result<Option<Complex64>> {
    if ctx.b_mat.iter().all(|z| *z == c(0.0, 0.0)) {
        return Ok(None);
    }
    let chol = pd_cholesky(&ctx.a_mat).ok_or_else(|| Error::Numerical("context matrix A is not positive definite".into()))?;
    let ainv_b = chol.solve(&ctx.b_mat);
    // rank one: the trace is the only non-zero eigenvalue
    let sigma = ainv_b.trace();
    if sigma.norm() <= 1e-12 * ainv_b.norm() || sigma.norm() == 0.0 {
        return Ok(None);
    }
    Ok(Some(sigma))
}

/// `exp(−j arg σ)`; returns `current` unchanged when `B = 0`.
pub fn optimal_continuous_phase(ctx: &RankOneContext, current: Complex64) -> Result<Complex64> {
    Ok(match dominant_eigenvalue(ctx)? {
        Some(sigma) => Complex64::from_polar(1.0, -sigma.arg()),
        None => current,
    })
}

/// Nearest table entry to the stacked continuous solution
/// `(β_r, β_t)` in Euclidean distance. Ties go to the later entry, so with
/// two states an equidistant solution maps to the second.
pub fn project_pair(continuous: (Complex64, Complex64), pair_set: &[CoefficientPair]) -> Result<CoefficientPair> {
    let mut best: Option<(f64, CoefficientPair)> = None;
    for p in pair_set {
        let d = (continuous.0 - p.reflection).norm_sqr() + (continuous.1 - p.transmission).norm_sqr();
        match best {
            Some((bd, _)) if d > bd => {}
            _ => best = Some((d, *p)),
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Config("coefficient pair table is empty".into()))
}

/// Applies a coefficient change on `side` of `element` to the maintained
/// effective channels.
fn apply_change(channels: &ChannelSet, h: &mut [CMat], side: Side, element: usize, delta: Complex64) {
    if delta == c(0.0, 0.0) {
        return;
    }
    let u = channels.u_row(element);
    for k in channels.users_on(side).collect::<Vec<_>>() {
        let g = channels.g_col(k, element);
        h[k] += &g * delta * &u;
    }
}

/// One pass over the elements `n = 0..N` in order. Each side gets its
/// closed-form coefficient; in discrete mode the pair is projected onto the
/// table before moving to the next element.
pub fn sweep_elements(
    channels: &ChannelSet,
    covs: &CovarianceSet,
    state: &IosState,
    mode: SurfaceMode,
) -> Result<IosState> {
    sweep_elements_traced(channels, covs, state, mode, None)
}

/// [`sweep_elements`], optionally recording the MAC sum rate after every
/// single-side coefficient update (continuous) or pair update (discrete).
pub fn sweep_elements_traced(
    channels: &ChannelSet,
    covs: &CovarianceSet,
    state: &IosState,
    mode: SurfaceMode,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<IosState> {
    check_surface_dims(channels, state)?;
    check_covs(channels, covs)?;
    let mut next = state.clone();
    next.mode = mode;
    if mode == SurfaceMode::Discrete && next.pair_set.is_empty() && channels.n_ios() > 0 {
        return Err(Error::Config("discrete sweep needs a non-empty pair table".into()));
    }
    let mut h = effective_channels(channels, &next)?.h;
    if let Some(t) = trace.as_deref_mut() {
        t.push(mac_sum_rate_unchecked(&h, &covs.s)?);
    }
    let sides: Vec<Side> = [Side::Reflection, Side::Transmission]
        .into_iter()
        .filter(|s| channels.users_on(*s).next().is_some())
        .collect();
    for n in 0..channels.n_ios() {
        let before = (next.beta_r[n], next.beta_t[n]);
        for &side in &sides {
            let ctx = context_from_effective(channels, &covs.s, &h, &next, n, side);
            let cur = next.coefficient(side, n);
            let opt = optimal_continuous_phase(&ctx, cur)?;
            apply_change(channels, &mut h, side, n, (opt - cur) * next.amplitude(side));
            next.set_coefficient(side, n, opt);
            if mode == SurfaceMode::Continuous {
                if let Some(t) = trace.as_deref_mut() {
                    t.push(mac_sum_rate_unchecked(&h, &covs.s)?);
                }
            }
        }
        if mode == SurfaceMode::Discrete {
            let p = project_pair((next.beta_r[n], next.beta_t[n]), &next.pair_set)?;
            let (cur_r, cur_t) = (next.beta_r[n], next.beta_t[n]);
            apply_change(channels, &mut h, Side::Reflection, n, (p.reflection - cur_r) * next.amplitude(Side::Reflection));
            apply_change(channels, &mut h, Side::Transmission, n, (p.transmission - cur_t) * next.amplitude(Side::Transmission));
            next.beta_r[n] = p.reflection;
            next.beta_t[n] = p.transmission;
            if let Some(t) = trace.as_deref_mut() {
                t.push(mac_sum_rate_unchecked(&h, &covs.s)?);
            }
        }
        log::trace!("element {n}: {:?} -> {:?}", before, (next.beta_r[n], next.beta_t[n]));
    }
    Ok(next)
}
