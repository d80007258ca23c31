//! Achievable rates of the broadcast channel and its dual multiple-access
//! channel, and the conversion of dual-MAC covariances into BC covariances.
//!
//! Channels are assumed noise-normalized (unit noise power), so
//! `R = log2 |I + ...|` throughout.

use nalgebra::SVD;
use serde::{Deserialize, Serialize};

use crate::channel::EffectiveChannels;
use crate::error::{Error, Result};
use crate::linalg::{check_psd, hermitian_part, identity, log2_det_pd, pd_inv_sqrt, psd_sqrt, CMat};

/// PSD tolerance applied to covariance inputs.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    /// Dual-MAC covariances `S̄_k` (nr x nr).
    MacDual,
    /// Broadcast transmit covariances `S_k` (nt x nt).
    Broadcast,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSet {
    pub s: Vec<CMat>,
    pub kind: CovarianceKind,
}

impl CovarianceSet {
    pub fn mac_dual(s: Vec<CMat>) -> Self {
        CovarianceSet {
            s,
            kind: CovarianceKind::MacDual,
        }
    }

    pub fn broadcast(s: Vec<CMat>) -> Self {
        CovarianceSet {
            s,
            kind: CovarianceKind::Broadcast,
        }
    }

    pub fn zeros(kind: CovarianceKind, k: usize, dim: usize) -> Self {
        CovarianceSet {
            s: vec![CMat::zeros(dim, dim); k],
            kind,
        }
    }

    pub fn total_power(&self) -> f64 {
        self.s.iter().map(|m| m.trace().re).sum()
    }

    pub fn check_psd(&self) -> Result<()> {
        for (k, m) in self.s.iter().enumerate() {
            check_psd(m, PSD_TOL, &format!("covariance {k}"))?;
        }
        Ok(())
    }
}

/// A permutation of user indices (0-based). Position 0 is `π(1)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserOrdering {
    pub pi: Vec<usize>,
}

impl UserOrdering {
    pub fn identity(k: usize) -> Self {
        UserOrdering { pi: (0..k).collect() }
    }

    pub fn new(pi: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; pi.len()];
        for &p in &pi {
            if p >= pi.len() || seen[p] {
                return Err(Error::Contract(format!("{pi:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(UserOrdering { pi })
    }
}

fn check_dims(h: &EffectiveChannels, s: &CovarianceSet, kind: CovarianceKind) -> Result<()> {
    if s.kind != kind {
        return Err(Error::Contract(format!("expected {kind:?} covariances, got {:?}", s.kind)));
    }
    if h.h.len() != s.s.len() {
        return Err(Error::Contract(format!(
            "{} channels but {} covariances",
            h.h.len(),
            s.s.len()
        )));
    }
    for (k, (hk, sk)) in h.h.iter().zip(&s.s).enumerate() {
        let want = match kind {
            CovarianceKind::MacDual => hk.nrows(),
            CovarianceKind::Broadcast => hk.ncols(),
        };
        if sk.shape() != (want, want) {
            return Err(Error::Contract(format!(
                "covariance {k} is {:?}, expected {want}x{want}",
                sk.shape()
            )));
        }
    }
    Ok(())
}

/// `I + Σ_k H_kᴴ S̄_k H_k` (nt x nt).
pub fn mac_gram(h: &[CMat], s: &[CMat]) -> CMat {
    let nt = h.first().map_or(0, |m| m.ncols());
    let mut x = identity(nt);
    for (hk, sk) in h.iter().zip(s) {
        x += hk.adjoint() * sk * hk;
    }
    hermitian_part(&x)
}

/// MAC sum rate without input checks. Used inside the optimizers.
pub fn mac_sum_rate_unchecked(h: &[CMat], s: &[CMat]) -> Result<f64> {
    Ok(log2_det_pd(&mac_gram(h, s))?.max(0.0))
}

/// `log2 |I + Σ_k H_kᴴ S̄_k H_k|`.
pub fn mac_sum_rate(h: &EffectiveChannels, s: &CovarianceSet) -> Result<f64> {
    check_dims(h, s, CovarianceKind::MacDual)?;
    s.check_psd()?;
    mac_sum_rate_unchecked(&h.h, &s.s)
}

fn log2_det_i_plus(hk: &CMat, cov: &CMat) -> Result<f64> {
    let nr = hk.nrows();
    log2_det_pd(&(identity(nr) + hk * cov * hk.adjoint()))
}

/// Per-user DPC rates for encoding order `order`: user `π(k)` sees
/// interference only from `π(j)`, `j > k`. Returned in user-index order.
pub fn bc_user_rates(h: &EffectiveChannels, s: &CovarianceSet, order: &UserOrdering) -> Result<Vec<f64>> {
    check_dims(h, s, CovarianceKind::Broadcast)?;
    s.check_psd()?;
    let k = h.h.len();
    if order.pi.len() != k {
        return Err(Error::Contract(format!("ordering has {} users, expected {k}", order.pi.len())));
    }
    let nt = h.nt();
    // tail[k] = Σ_{j >= k} S_{π(j)}
    let mut tail = vec![CMat::zeros(nt, nt); k + 1];
    for pos in (0..k).rev() {
        tail[pos] = &tail[pos + 1] + &s.s[order.pi[pos]];
    }
    let mut rates = vec![0.0; k];
    for pos in 0..k {
        let u = order.pi[pos];
        let num = log2_det_i_plus(&h.h[u], &tail[pos])?;
        let den = log2_det_i_plus(&h.h[u], &tail[pos + 1])?;
        rates[u] = (num - den).max(0.0);
    }
    Ok(rates)
}

/// Converts dual-MAC covariances into BC covariances achieving the same
/// sum rate under `order` with the same total power.
///
/// Users are processed from the last encoded to the first: for user `π(k)`,
/// `A = I + H (Σ_{j>k} S_{π(j)}) Hᴴ` collects the BC covariances already
/// produced and `B = I + Σ_{j<k} H_{π(j)}ᴴ S̄_{π(j)} H_{π(j)}` the dual-MAC
/// users not yet converted.
pub fn mac_to_bc(h: &EffectiveChannels, s: &CovarianceSet, order: &UserOrdering) -> Result<CovarianceSet> {
    check_dims(h, s, CovarianceKind::MacDual)?;
    s.check_psd()?;
    let k = h.h.len();
    if order.pi.len() != k {
        return Err(Error::Contract(format!("ordering has {} users, expected {k}", order.pi.len())));
    }
    let nt = h.nt();
    let mut out = vec![CMat::zeros(nt, nt); k];
    // Σ_{j<k} H^H S̄ H, shrunk as users are converted
    let mut prefix = vec![CMat::zeros(nt, nt); k + 1];
    for pos in 0..k {
        let u = order.pi[pos];
        prefix[pos + 1] = &prefix[pos] + h.h[u].adjoint() * &s.s[u] * &h.h[u];
    }
    let mut converted = CMat::zeros(nt, nt);
    for pos in (0..k).rev() {
        let u = order.pi[pos];
        let hk = &h.h[u];
        let sbar = &s.s[u];
        if sbar.norm() == 0.0 {
            continue;
        }
        let nr = hk.nrows();
        let a = hermitian_part(&(identity(nr) + hk * &converted * hk.adjoint()));
        let b = hermitian_part(&(identity(nt) + &prefix[pos]));
        let a_half = psd_sqrt(&a);
        let a_inv_half = pd_inv_sqrt(&a);
        let b_inv_half = pd_inv_sqrt(&b);
        let m = &b_inv_half * hk.adjoint() * &a_inv_half;
        let svd = SVD::try_new(m.clone(), true, true, 1e-15, 10_000).ok_or_else(|| {
            let sv = m.singular_values();
            let (mx, mn) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
            Error::Numerical(format!(
                "SVD did not converge for user {u} (condition estimate {:.3e})",
                mx / mn
            ))
        })?;
        let f = svd.u.expect("requested U");
        let g = svd.v_t.expect("requested V^H").adjoint();
        let left = &b_inv_half * &f * g.adjoint() * &a_half;
        let sk = hermitian_part(&(&left * sbar * left.adjoint()));
        converted += &sk;
        out[u] = sk;
    }
    Ok(CovarianceSet::broadcast(out))
}
