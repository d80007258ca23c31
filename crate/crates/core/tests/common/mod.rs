#![allow(dead_code)]

use ios_bc::channel::ChannelSet;
use ios_bc::ios_opt::{CoefficientPair, IosState};
use ios_bc::linalg::{c, CMat};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cgauss(rng) * scale)
}

/// Random PSD matrix with trace close to `n * scale`.
pub fn rand_psd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CMat {
    let a = rand_mat(rng, n, n, 1.0);
    let m = &a * a.adjoint() * c(scale / n as f64, 0.0);
    (&m + m.adjoint()) * c(0.5, 0.0)
}

pub fn unit(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.random::<f64>() * 2.0 * std::f64::consts::PI)
}

/// Random realization: direct `nr x nt`, `U` is `n x nt`, `G_k` is `nr x n`.
pub fn random_channels(
    rng: &mut ChaCha8Rng,
    nt: usize,
    nr: usize,
    kr: usize,
    kt: usize,
    n: usize,
    direct_scale: f64,
) -> ChannelSet {
    let k = kr + kt;
    let direct = (0..k).map(|_| rand_mat(rng, nr, nt, direct_scale)).collect();
    let u = rand_mat(rng, n, nt, 1.0);
    let g = (0..k).map(|_| rand_mat(rng, nr, n, 1.0)).collect();
    ChannelSet::from_parts(direct, u, g, kr).unwrap()
}

pub fn random_state(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> IosState {
    let mut st = IosState::continuous(n, rho);
    for b in st.beta_r.iter_mut().chain(st.beta_t.iter_mut()) {
        *b = unit(rng);
    }
    st
}

pub fn random_covs(rng: &mut ChaCha8Rng, k: usize, nr: usize, scale: f64) -> Vec<CMat> {
    (0..k).map(|_| rand_psd(rng, nr, scale)).collect()
}

/// `D + a G diag(beta) U` with an explicit diagonal matrix.
pub fn dense_effective(ch: &ChannelSet, st: &IosState, k: usize) -> CMat {
    use ios_bc::Side;
    let (beta, a) = match ch.side[k] {
        Side::Reflection => (&st.beta_r, st.rho.sqrt()),
        Side::Transmission => (&st.beta_t, (1.0 - st.rho).sqrt()),
    };
    let n = beta.len();
    let diag = CMat::from_fn(n, n, |i, j| if i == j { beta[i] } else { c(0.0, 0.0) });
    &ch.direct[k] + &ch.ios_to_user[k] * diag * &ch.bs_to_ios * c(a, 0.0)
}

/// `log2 det(m)` of a Hermitian PD matrix via its eigenvalues, independent
/// of the Cholesky route used by the library.
pub fn log2_det_eig(m: &CMat) -> f64 {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    h.symmetric_eigenvalues().iter().map(|l| l.log2()).sum()
}

/// MAC sum rate `log2 |I + Σ H_kᴴ S_k H_k|` computed from eigenvalues.
pub fn mac_rate_oracle(h: &[CMat], s: &[CMat]) -> f64 {
    let nt = h[0].ncols();
    let mut x = CMat::identity(nt, nt);
    for (hk, sk) in h.iter().zip(s) {
        x += hk.adjoint() * sk * hk;
    }
    log2_det_eig(&x)
}

pub fn pair(r_mag: f64, r_deg: f64, t_mag: f64, t_deg: f64) -> CoefficientPair {
    CoefficientPair {
        reflection: Complex64::from_polar(r_mag, r_deg.to_radians()),
        transmission: Complex64::from_polar(t_mag, t_deg.to_radians()),
    }
}

pub fn placeholder_pairs() -> Vec<CoefficientPair> {
    vec![pair(0.8, 0.0, 0.6, 90.0), pair(0.8, 180.0, 0.6, -90.0)]
}

/// Maximum of a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_max(mut lo: f64, mut hi: f64, iters: usize, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

pub fn scenario(text: &str) -> ios_bc::Scenario {
    ios_bc::scenario::load_scenario_str(text, &[], None).unwrap()
}

/// Small scenario for fast end-to-end runs.
pub fn small_scenario(extra: &str) -> ios_bc::Scenario {
    scenario(&format!(
        "[system]\nnt = 4\nnr = 2\nusers_reflection = 2\nusers_transmission = 2\n\
         [surface]\nrows = 4\ncols = 4\npairs = [[0.8, 0.0, 0.6, 90.0], [0.8, 180.0, 0.6, -90.0]]\n{extra}"
    ))
}

/// Central difference `(f(ρ+h) − f(ρ−h)) / 2h` of `f = log2 |X̄(ρ)|`, with
/// the difference formed as `log2 |I + L⁻¹ Δ L⁻ᴴ|` (`X̄(ρ−h) = L Lᴴ`) so
/// that cancellation does not swamp small slopes.
pub fn rho_central_difference(p: &ios_bc::power_opt::RhoDecomposition, rho: f64, h: f64) -> f64 {
    let (a, b) = (rho + h, rho - h);
    let dsq = |x: f64, y: f64| (x - y) / (x.sqrt() + y.sqrt());
    let x1 = &p.x1 + p.x1.adjoint();
    let x2 = &p.x2 + p.x2.adjoint();
    let delta = x1 * c(dsq(a, b), 0.0)
        + x2 * c(dsq(1.0 - a, 1.0 - b), 0.0)
        + (&p.y1 - &p.y2) * c(a - b, 0.0);
    let low = p.gram(b);
    let l = low.cholesky().unwrap().l();
    let linv = l.clone().try_inverse().unwrap();
    let m = &linv * delta * linv.adjoint();
    let m = (&m + m.adjoint()) * c(0.5, 0.0);
    let sum: f64 = m.symmetric_eigenvalues().iter().map(|e| e.ln_1p()).sum();
    sum / std::f64::consts::LN_2 / (2.0 * h)
}

/// Exhaustive joint optimum for single-antenna users: every assignment of
/// table entries to elements, `ρ` on a grid refined by golden section, and
/// the exact scalar power split for each `(pattern, ρ)`.
///
/// Only valid for `nr = 1` and two users (the covariances are the scalars
/// `p` and `P − p`; using the full budget is optimal).
pub fn joint_oracle(ch: &ChannelSet, pairs: &[CoefficientPair], power: f64, rho_min: f64, rho_max: f64) -> f64 {
    use ios_bc::channel::effective_channels;
    assert_eq!(ch.nr(), 1);
    assert_eq!(ch.num_users(), 2);
    let n = ch.n_ios();
    let q = pairs.len();
    let patterns = q.pow(n as u32);
    let split = |h: &[CMat]| {
        let rate = |p1: f64| {
            let s = [CMat::from_element(1, 1, c(p1, 0.0)), CMat::from_element(1, 1, c(power - p1, 0.0))];
            mac_rate_oracle(h, &s)
        };
        // log-det of an affine matrix function: concave in p1
        golden_max(0.0, power, 90, rate).1.max(rate(0.0)).max(rate(power))
    };
    let mut best = f64::NEG_INFINITY;
    for pat in 0..patterns {
        let mut st = IosState::discrete(n, 0.5, pairs.to_vec()).unwrap();
        let mut code = pat;
        for e in 0..n {
            let p = pairs[code % q];
            code /= q;
            st.beta_r[e] = p.reflection;
            st.beta_t[e] = p.transmission;
        }
        let value = |rho: f64| {
            let mut s = st.clone();
            s.rho = rho;
            split(&effective_channels(ch, &s).unwrap().h)
        };
        let grid = 400;
        let mut top = (rho_min, f64::NEG_INFINITY);
        for i in 0..=grid {
            let rho = rho_min + (rho_max - rho_min) * i as f64 / grid as f64;
            let v = value(rho);
            if v > top.1 {
                top = (rho, v);
            }
        }
        let w = (rho_max - rho_min) / grid as f64;
        let (_, refined) = golden_max((top.0 - w).max(rho_min), (top.0 + w).min(rho_max), 80, value);
        best = best.max(top.1).max(refined);
    }
    best
}

/// Exact two-user scalar-covariance optimum: full power, split searched on
/// a grid at resolution `1e-3 P` and refined by golden section.
pub fn two_user_oracle(h: &[CMat], p: f64) -> f64 {
    let rate = |p1: f64| {
        let s = [CMat::from_element(1, 1, c(p1, 0.0)), CMat::from_element(1, 1, c(p - p1, 0.0))];
        mac_rate_oracle(h, &s)
    };
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=1000 {
        let p1 = p * i as f64 / 1000.0;
        let v = rate(p1);
        if v > best.1 {
            best = (p1, v);
        }
    }
    let lo = (best.0 - p / 1000.0).max(0.0);
    let hi = (best.0 + p / 1000.0).min(p);
    let (_, v) = golden_max(lo, hi, 80, rate);
    v.max(best.1)
}

/// Per-mode KKT conditions of every user against its final interference.
pub fn kkt_violation(h: &[CMat], s: &[CMat], mu: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..h.len() {
        let hbar = ios_bc::covariance_opt::interference_plus_noise(h, s, k);
        let m = &h[k] * hbar.clone().cholesky().unwrap().solve(&h[k].adjoint());
        let (sigma, v) = ios_bc::linalg::herm_eig(&m);
        for (i, &si) in sigma.iter().enumerate() {
            let vi = v.column(i);
            let p = (vi.adjoint() * &s[k] * vi)[(0, 0)].re;
            if si > mu {
                worst = worst.max((1.0 / mu - 1.0 / si - p).abs());
            } else {
                worst = worst.max(p.abs());
                worst = worst.max((si - mu).max(0.0));
            }
        }
    }
    worst
}

