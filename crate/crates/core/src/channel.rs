//! Wiretap geometry and channel generation: log-distance path loss, Rician
//! RIS links with ULA steering, Rayleigh direct links, and the per-group
//! partition of the RIS channels.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, complex_gaussian, fro_norm_sq, CMat, C64};

/// Planar position in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Path-loss exponents of the five links.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub ai: f64,
    pub ib: f64,
    pub ie: f64,
    pub ab: f64,
    pub ae: f64,
}

/// Physical and array parameters of one scenario. Powers are linear watts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub nt: usize,
    pub nb: usize,
    pub ne: usize,
    pub ns: usize,
    pub m: usize,
    pub g: usize,
    pub power_w: f64,
    pub sigma_b2: f64,
    pub sigma_e2: f64,
    pub alice: Position,
    pub ris: Position,
    pub bob: Position,
    pub eve: Position,
    pub zeta: Exponents,
    /// Path loss at the reference distance (linear).
    pub c0: f64,
    /// Reference distance (m).
    pub d0: f64,
    pub kappa: f64,
}

pub fn dbw_to_watt(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            nt: 24,
            nb: 4,
            ne: 2,
            ns: 2,
            m: 80,
            g: 4,
            power_w: dbw_to_watt(0.0),
            sigma_b2: dbm_to_watt(-40.0),
            sigma_e2: dbm_to_watt(-40.0),
            alice: Position::new(0.0, 0.0),
            ris: Position::new(50.0, 2.0),
            bob: Position::new(55.0, 0.0),
            eve: Position::new(45.0, 0.0),
            zeta: Exponents {
                ai: 2.2,
                ib: 2.5,
                ie: 2.5,
                ab: 3.5,
                ae: 3.5,
            },
            c0: dbw_to_watt(-30.0),
            d0: 1.0,
            kappa: 5.0,
        }
    }
}

impl SystemConfig {
    /// RIS block size `M̃ = M / G`.
    pub fn block(&self) -> usize {
        self.m / self.g.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nt", self.nt),
            ("nb", self.nb),
            ("ne", self.ne),
            ("ns", self.ns),
            ("g", self.g),
        ] {
            if v == 0 {
                return Err(Error::config(format!("system.{name}"), "must be positive"));
            }
        }
        if self.ns > self.nt.min(self.nb) {
            return Err(Error::config(
                "system.ns",
                format!(
                    "{} streams exceed min(nt, nb) = {}",
                    self.ns,
                    self.nt.min(self.nb)
                ),
            ));
        }
        if self.m % self.g != 0 {
            return Err(Error::config(
                "system.g",
                format!("{} groups do not divide {} elements", self.g, self.m),
            ));
        }
        for (name, v) in [
            ("power", self.power_w),
            ("sigma_b2", self.sigma_b2),
            ("sigma_e2", self.sigma_e2),
            ("c0", self.c0),
            ("kappa", self.kappa),
        ] {
            if !(v >= 0.0) || v.is_nan() {
                return Err(Error::config(format!("system.{name}"), "must be ≥ 0"));
            }
        }
        if !(self.d0 > 0.0) {
            return Err(Error::config("system.d0", "must be positive"));
        }
        if !(self.sigma_b2 > 0.0 && self.sigma_e2 > 0.0) {
            return Err(Error::config(
                "system.sigma",
                "noise powers must be positive",
            ));
        }
        Ok(())
    }
}

/// The five channel matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// Alice → Bob, `N_b × N_t`.
    pub h_ab: CMat,
    /// Alice → Eve, `N_e × N_t`.
    pub h_ae: CMat,
    /// Alice → RIS, `M × N_t`.
    pub h_ai: CMat,
    /// RIS → Bob, `N_b × M`.
    pub h_ib: CMat,
    /// RIS → Eve, `N_e × M`.
    pub h_ie: CMat,
}

impl ChannelSet {
    pub fn m(&self) -> usize {
        self.h_ai.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (nb, nt) = self.h_ab.shape();
        let ne = self.h_ae.nrows();
        let m = self.h_ai.nrows();
        let ok = self.h_ae.ncols() == nt
            && self.h_ai.ncols() == nt
            && self.h_ib.shape() == (nb, m)
            && self.h_ie.shape() == (ne, m);
        if !ok {
            return Err(Error::Shape("inconsistent channel dimensions".into()));
        }
        if ![&self.h_ab, &self.h_ae, &self.h_ai, &self.h_ib, &self.h_ie]
            .iter()
            .all(|h| all_finite(h))
        {
            return Err(Error::Numeric("non-finite channel entry".into()));
        }
        Ok(())
    }

    /// Same direct links, RIS links zeroed.
    pub fn without_ris(&self) -> ChannelSet {
        ChannelSet {
            h_ab: self.h_ab.clone(),
            h_ae: self.h_ae.clone(),
            h_ai: CMat::zeros(self.h_ai.nrows(), self.h_ai.ncols()),
            h_ib: CMat::zeros(self.h_ib.nrows(), self.h_ib.ncols()),
            h_ie: CMat::zeros(self.h_ie.nrows(), self.h_ie.ncols()),
        }
    }
}

/// Column blocks of `H_ie`/`H_ib` and row blocks of `H_ai`, one per RIS group,
/// together with the direct links.
#[derive(Clone, Debug)]
pub struct GroupBlocks {
    pub h_ie: Vec<CMat>,
    pub h_ib: Vec<CMat>,
    pub h_ai: Vec<CMat>,
    pub h_ae: CMat,
    pub h_ab: CMat,
}

impl GroupBlocks {
    pub fn groups(&self) -> usize {
        self.h_ai.len()
    }
}

/// Per-entry channel estimation error variances (i.i.d. CSCG model).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CeeConfig {
    pub delta: f64,
    pub sigma_ai2: f64,
    pub sigma_ib2: f64,
    pub sigma_ie2: f64,
    pub sigma_ab2: f64,
    pub sigma_ae2: f64,
}

/// `C0 (d / D0)^(−ζ)`.
pub fn path_loss(d: f64, zeta: f64, c0: f64, d0: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("path loss needs d > 0, got {d}")));
    }
    Ok(c0 * (d / d0).powf(-zeta))
}

/// ULA response `[1, e^{iπ sin ψ}, …, e^{iπ(n−1) sin ψ}]ᵀ`.
pub fn steering_vector(n: usize, psi: f64) -> CMat {
    let s = psi.sin();
    CMat::from_fn(n, 1, |k, _| C64::from_polar(1.0, PI * k as f64 * s))
}

/// Departure and arrival angles for a link from `tx` to `rx`.
pub fn link_angles(tx: &Position, rx: &Position) -> (f64, f64) {
    let psi_t = ((rx.y - tx.y) / (rx.x - tx.x)).atan();
    (psi_t, PI - psi_t)
}

/// Rician small-scale fading `√(κ/(1+κ)) a_r a_tᴴ + √(1/(1+κ)) H_NLOS`.
fn rician<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    tx: &Position,
    rx: &Position,
    kappa: f64,
    rng: &mut R,
) -> CMat {
    let (psi_t, psi_r) = link_angles(tx, rx);
    let los = steering_vector(rows, psi_r) * steering_vector(cols, psi_t).adjoint();
    let nlos = complex_gaussian(rows, cols, rng);
    let (w_los, w_nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };
    los * C64::new(w_los, 0.0) + nlos * C64::new(w_nlos, 0.0)
}

/// Amplitude gain `√L(d)` of a link.
pub fn link_gain(cfg: &SystemConfig, tx: &Position, rx: &Position, zeta: f64) -> Result<f64> {
    let d = tx.distance(rx);
    if d == 0.0 {
        return Err(Error::Domain(format!(
            "coincident transceiver positions at ({}, {})",
            tx.x, tx.y
        )));
    }
    Ok(path_loss(d, zeta, cfg.c0, cfg.d0)?.sqrt())
}

/// Draws one channel realization. Draw order is fixed (`H_ai`, `H_ib`, `H_ie`,
/// `H_ab`, `H_ae`), so a seeded generator gives a bit-identical result.
pub fn draw_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelSet> {
    let z = &cfg.zeta;
    let g_ai = link_gain(cfg, &cfg.alice, &cfg.ris, z.ai)?;
    let g_ib = link_gain(cfg, &cfg.ris, &cfg.bob, z.ib)?;
    let g_ie = link_gain(cfg, &cfg.ris, &cfg.eve, z.ie)?;
    let g_ab = link_gain(cfg, &cfg.alice, &cfg.bob, z.ab)?;
    let g_ae = link_gain(cfg, &cfg.alice, &cfg.eve, z.ae)?;

    let h_ai = rician(cfg.m, cfg.nt, &cfg.alice, &cfg.ris, cfg.kappa, rng) * C64::new(g_ai, 0.0);
    let h_ib = rician(cfg.nb, cfg.m, &cfg.ris, &cfg.bob, cfg.kappa, rng) * C64::new(g_ib, 0.0);
    let h_ie = rician(cfg.ne, cfg.m, &cfg.ris, &cfg.eve, cfg.kappa, rng) * C64::new(g_ie, 0.0);
    let h_ab = complex_gaussian(cfg.nb, cfg.nt, rng) * C64::new(g_ab, 0.0);
    let h_ae = complex_gaussian(cfg.ne, cfg.nt, rng) * C64::new(g_ae, 0.0);
    Ok(ChannelSet {
        h_ab,
        h_ae,
        h_ai,
        h_ib,
        h_ie,
    })
}

/// Splits the RIS links into `groups` contiguous blocks.
pub fn group_blocks(cs: &ChannelSet, groups: usize) -> Result<GroupBlocks> {
    let m = cs.m();
    let valid = if m == 0 {
        groups == 0
    } else {
        groups > 0 && m % groups == 0
    };
    if !valid {
        return Err(Error::config(
            "system.g",
            format!("{groups} groups do not divide {m} elements"),
        ));
    }
    let k = if groups == 0 { 0 } else { m / groups };
    let (ne, nb, nt) = (cs.h_ie.nrows(), cs.h_ib.nrows(), cs.h_ai.ncols());
    Ok(GroupBlocks {
        h_ie: (0..groups)
            .map(|g| cs.h_ie.view((0, g * k), (ne, k)).into_owned())
            .collect(),
        h_ib: (0..groups)
            .map(|g| cs.h_ib.view((0, g * k), (nb, k)).into_owned())
            .collect(),
        h_ai: (0..groups)
            .map(|g| cs.h_ai.view((g * k, 0), (k, nt)).into_owned())
            .collect(),
        h_ae: cs.h_ae.clone(),
        h_ab: cs.h_ab.clone(),
    })
}

fn mean_sq(h: &CMat) -> f64 {
    if h.is_empty() {
        0.0
    } else {
        fro_norm_sq(h) / h.len() as f64
    }
}

/// Error variance per channel family: `δ ×` mean squared entry magnitude of the
/// nominal channel.
pub fn cee_variances(cs: &ChannelSet, delta: f64) -> Result<CeeConfig> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Domain(format!(
            "uncertainty level must be ≥ 0, got {delta}"
        )));
    }
    Ok(CeeConfig {
        delta,
        sigma_ai2: delta * mean_sq(&cs.h_ai),
        sigma_ib2: delta * mean_sq(&cs.h_ib),
        sigma_ie2: delta * mean_sq(&cs.h_ie),
        sigma_ab2: delta * mean_sq(&cs.h_ab),
        sigma_ae2: delta * mean_sq(&cs.h_ae),
    })
}
