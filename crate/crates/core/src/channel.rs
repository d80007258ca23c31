//! Random channel realizations and effective-channel assembly.
//!
//! A realization holds the direct links `D_k` (nr x nt), the BS-to-surface
//! link `U` (n_ios x nt), and the surface-to-user links `G_k` (nr x n_ios).
//! Users `0..kr` sit on the reflection side and `kr..K` on the transmission
//! side. `D_k` and `G_k` are divided by `sqrt(N0)` when the realization is
//! finalized so every rate expression can assume unit noise power.

use nalgebra::RowDVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ios_opt::IosState;
use crate::linalg::{c, CMat, CVec};
use crate::scenario::{Disk, FadingModel, Point};

pub use crate::scenario::Scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Reflection,
    Transmission,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub direct: Vec<CMat>,
    pub bs_to_ios: CMat,
    pub ios_to_user: Vec<CMat>,
    pub side: Vec<Side>,
    pub user_positions: Vec<Point>,
}

impl ChannelSet {
    /// Builds a realization from explicit matrices, checking dimensions.
    /// Users are tagged reflection for the first `kr`, transmission after.
    pub fn from_parts(direct: Vec<CMat>, bs_to_ios: CMat, ios_to_user: Vec<CMat>, kr: usize) -> Result<Self> {
        let k = direct.len();
        if k == 0 {
            return Err(Error::Config("channel set needs at least one user".into()));
        }
        if ios_to_user.len() != k {
            return Err(Error::Config(format!(
                "{} direct channels but {} surface-to-user channels",
                k,
                ios_to_user.len()
            )));
        }
        if kr > k {
            return Err(Error::Config(format!("kr = {kr} exceeds K = {k}")));
        }
        let (nr, nt) = direct[0].shape();
        let n = bs_to_ios.nrows();
        if bs_to_ios.ncols() != nt {
            return Err(Error::Config(format!(
                "U is {}x{}, expected {}x{}",
                n,
                bs_to_ios.ncols(),
                n,
                nt
            )));
        }
        for (i, (d, g)) in direct.iter().zip(&ios_to_user).enumerate() {
            if d.shape() != (nr, nt) {
                return Err(Error::Config(format!("D_{i} is {:?}, expected {:?}", d.shape(), (nr, nt))));
            }
            if g.shape() != (nr, n) {
                return Err(Error::Config(format!("G_{i} is {:?}, expected {:?}", g.shape(), (nr, n))));
            }
        }
        let side = (0..k)
            .map(|i| if i < kr { Side::Reflection } else { Side::Transmission })
            .collect();
        Ok(ChannelSet {
            direct,
            bs_to_ios,
            ios_to_user,
            side,
            user_positions: vec![[0.0; 3]; k],
        })
    }

    pub fn num_users(&self) -> usize {
        self.direct.len()
    }

    pub fn nt(&self) -> usize {
        self.bs_to_ios.ncols()
    }

    pub fn nr(&self) -> usize {
        self.direct[0].nrows()
    }

    pub fn n_ios(&self) -> usize {
        self.bs_to_ios.nrows()
    }

    pub fn kr(&self) -> usize {
        self.side.iter().filter(|s| **s == Side::Reflection).count()
    }

    /// Users on one side, in canonical order.
    pub fn users_on(&self, side: Side) -> impl Iterator<Item = usize> + '_ {
        self.side
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s == side)
            .map(|(i, _)| i)
    }

    /// Row `n` of `U`.
    pub fn u_row(&self, n: usize) -> RowDVector<Complex64> {
        self.bs_to_ios.row(n).into_owned()
    }

    /// Column `n` of `G_k`.
    pub fn g_col(&self, user: usize, n: usize) -> CVec {
        self.ios_to_user[user].column(n).into_owned()
    }
}

/// Per-user effective channels `H_k` (nr x nt).
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannels {
    pub h: Vec<CMat>,
}

impl EffectiveChannels {
    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    pub fn nt(&self) -> usize {
        self.h.first().map_or(0, |h| h.ncols())
    }
}

/// Unit-modulus ULA response: element `m` has phase
/// `2π (spacing / wavelength) m sin(angle)`.
pub fn steering_vector(num_elements: usize, spacing: f64, wavelength: f64, angle: f64) -> CVec {
    let step = 2.0 * std::f64::consts::PI * spacing / wavelength * angle.sin();
    CVec::from_fn(num_elements, |m, _| Complex64::from_polar(1.0, step * m as f64))
}

/// `G_k diag(beta) U` without the power-split amplitude.
pub fn cascade(channels: &ChannelSet, beta: &[Complex64], user: usize) -> CMat {
    let mut g = channels.ios_to_user[user].clone();
    for (n, b) in beta.iter().enumerate() {
        let mut col = g.column_mut(n);
        col *= *b;
    }
    g * &channels.bs_to_ios
}

/// Coefficients and amplitude (`sqrt(rho)` or `sqrt(1 - rho)`) that apply to
/// a given user.
pub fn side_coefficients(ios: &IosState, side: Side) -> (&[Complex64], f64) {
    match side {
        Side::Reflection => (&ios.beta_r, ios.rho.sqrt()),
        Side::Transmission => (&ios.beta_t, (1.0 - ios.rho).sqrt()),
    }
}

/// `H_k = D_k + a Σ_n β_n g_{n,k} u_n` with `a = sqrt(rho)` on the
/// reflection side and `sqrt(1 - rho)` on the transmission side.
pub fn assemble_effective_channel(channels: &ChannelSet, ios: &IosState, user: usize) -> Result<CMat> {
    if user >= channels.num_users() {
        return Err(Error::Config(format!(
            "user index {user} out of range (K = {})",
            channels.num_users()
        )));
    }
    check_surface_dims(channels, ios)?;
    let (beta, amp) = side_coefficients(ios, channels.side[user]);
    let direct = &channels.direct[user];
    if channels.n_ios() == 0 {
        return Ok(direct.clone());
    }
    Ok(direct + cascade(channels, beta, user) * c(amp, 0.0))
}

pub fn check_surface_dims(channels: &ChannelSet, ios: &IosState) -> Result<()> {
    let n = channels.n_ios();
    if ios.beta_r.len() != n || ios.beta_t.len() != n {
        return Err(Error::Config(format!(
            "surface state has {}/{} coefficients but the channel has {} elements",
            ios.beta_r.len(),
            ios.beta_t.len(),
            n
        )));
    }
    Ok(())
}

pub fn effective_channels(channels: &ChannelSet, ios: &IosState) -> Result<EffectiveChannels> {
    let h = (0..channels.num_users())
        .map(|k| assemble_effective_channel(channels, ios, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(EffectiveChannels { h })
}

// ---------------------------------------------------------------------------
// Random generation

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    // column-major fill keeps the draw order independent of nalgebra internals
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = complex_gaussian(rng);
        }
    }
    m
}

fn sample_in_disk(rng: &mut ChaCha8Rng, disk: &Disk) -> Point {
    let r = disk.radius * rng.random::<f64>().sqrt();
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    [
        disk.center[0] + r * phi.cos(),
        disk.center[1] + r * phi.sin(),
        disk.center[2],
    ]
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: &Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Array layouts. The BS and user ULAs run along `y`; the surface is a
/// rows x cols grid in the `y`-`z` plane.
enum Array {
    Ula { n: usize, spacing: f64 },
    Grid { rows: usize, cols: usize, spacing: f64 },
}

impl Array {
    /// Response toward unit direction `dir` (pointing away from the array).
    fn response(&self, dir: &Point, wavelength: f64) -> CVec {
        match *self {
            Array::Ula { n, spacing } => steering_vector(n, spacing, wavelength, dir[1].clamp(-1.0, 1.0).asin()),
            Array::Grid { rows, cols, spacing } => {
                let along_y = steering_vector(cols, spacing, wavelength, dir[1].clamp(-1.0, 1.0).asin());
                let along_z = steering_vector(rows, spacing, wavelength, dir[2].clamp(-1.0, 1.0).asin());
                // element index n = row * cols + col
                CVec::from_fn(rows * cols, |n, _| along_z[n / cols] * along_y[n % cols])
            }
        }
    }
}

struct Link<'a> {
    from: &'a Point,
    to: &'a Point,
    tx: &'a Array,
    rx: &'a Array,
    k_factor: f64,
    exponent: f64,
}

fn draw_link(rng: &mut ChaCha8Rng, scenario: &Scenario, link: Link<'_>, rows: usize, cols: usize) -> CMat {
    let cm = &scenario.channel_model;
    let nlos = gaussian_matrix(rng, rows, cols);
    let d = sub(link.to, link.from);
    let dist = norm(&d).max(1.0);
    let gain = if cm.pathloss_enabled {
        cm.reference_gain * dist.powf(-link.exponent)
    } else {
        1.0
    };
    let amp = gain.sqrt();
    let (w_los, w_nlos) = match cm.fading {
        FadingModel::IidRayleigh => (0.0, 1.0),
        FadingModel::Rician if link.k_factor.is_infinite() => (1.0, 0.0),
        FadingModel::Rician => {
            let k = link.k_factor;
            ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
        }
    };
    if w_los == 0.0 {
        return nlos * c(amp * w_nlos, 0.0);
    }
    let dist_raw = norm(&d);
    let dir = if dist_raw > 0.0 {
        [d[0] / dist_raw, d[1] / dist_raw, d[2] / dist_raw]
    } else {
        [1.0, 0.0, 0.0]
    };
    let back = [-dir[0], -dir[1], -dir[2]];
    let a_tx = link.tx.response(&dir, scenario.wavelength);
    let a_rx = link.rx.response(&back, scenario.wavelength);
    let los = &a_rx * a_tx.adjoint();
    if w_nlos == 0.0 {
        los * c(amp, 0.0)
    } else {
        (los * c(w_los, 0.0) + nlos * c(w_nlos, 0.0)) * c(amp, 0.0)
    }
}

/// Draws one realization. Deterministic in `(scenario, seed)`.
///
/// Draw order: user positions, `U`, then `D_k` and `G_k` per user.
pub fn generate_channels(scenario: &Scenario, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geo = &scenario.geometry;
    let k = scenario.num_users();
    let n = scenario.n_ios();
    let user_positions: Vec<Point> = (0..k)
        .map(|i| {
            let disk = if i < scenario.kr {
                &geo.reflection_disk
            } else {
                &geo.transmission_disk
            };
            sample_in_disk(&mut rng, disk)
        })
        .collect();
    let bs_arr = Array::Ula {
        n: scenario.nt,
        spacing: scenario.spacing_tx,
    };
    let ue_arr = Array::Ula {
        n: scenario.nr,
        spacing: scenario.spacing_rx,
    };
    let ios_arr = Array::Grid {
        rows: scenario.ios_rows,
        cols: scenario.ios_cols,
        spacing: scenario.spacing_ios,
    };
    let cm = &scenario.channel_model;
    let bs_to_ios = draw_link(
        &mut rng,
        scenario,
        Link {
            from: &geo.bs,
            to: &geo.ios,
            tx: &bs_arr,
            rx: &ios_arr,
            k_factor: cm.rician_k.bs_ios,
            exponent: cm.pathloss_exponents.bs_ios,
        },
        n,
        scenario.nt,
    );
    let noise_scale = c(1.0 / scenario.noise_power.sqrt(), 0.0);
    let mut direct = Vec::with_capacity(k);
    let mut ios_to_user = Vec::with_capacity(k);
    for (i, pos) in user_positions.iter().enumerate() {
        let d = draw_link(
            &mut rng,
            scenario,
            Link {
                from: &geo.bs,
                to: pos,
                tx: &bs_arr,
                rx: &ue_arr,
                k_factor: cm.rician_k.direct,
                exponent: cm.pathloss_exponents.direct,
            },
            scenario.nr,
            scenario.nt,
        );
        let g = draw_link(
            &mut rng,
            scenario,
            Link {
                from: &geo.ios,
                to: pos,
                tx: &ios_arr,
                rx: &ue_arr,
                k_factor: cm.rician_k.ios_user,
                exponent: cm.pathloss_exponents.ios_user,
            },
            scenario.nr,
            n,
        );
        let d = if geo.blocked_users.contains(&i) {
            CMat::zeros(scenario.nr, scenario.nt)
        } else {
            d
        };
        direct.push(d * noise_scale);
        ios_to_user.push(g * noise_scale);
    }
    let side = (0..k)
        .map(|i| {
            if i < scenario.kr {
                Side::Reflection
            } else {
                Side::Transmission
            }
        })
        .collect();
    ChannelSet {
        direct,
        bs_to_ios,
        ios_to_user,
        side,
        user_positions,
    }
}

/// Line-of-sight component of `U` (unit path gain), used as the Rician limit.
pub fn bs_to_ios_los(scenario: &Scenario) -> CMat {
    let geo = &scenario.geometry;
    let d = sub(&geo.ios, &geo.bs);
    let dist = norm(&d);
    let dir = [d[0] / dist, d[1] / dist, d[2] / dist];
    let back = [-dir[0], -dir[1], -dir[2]];
    let a_tx = Array::Ula {
        n: scenario.nt,
        spacing: scenario.spacing_tx,
    }
    .response(&dir, scenario.wavelength);
    let a_rx = Array::Grid {
        rows: scenario.ios_rows,
        cols: scenario.ios_cols,
        spacing: scenario.spacing_ios,
    }
    .response(&back, scenario.wavelength);
    &a_rx * a_tx.adjoint()
}
