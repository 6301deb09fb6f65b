//! Secrecy objective: effective channels, rates, the augmented Lagrangian and
//! its gradients, for both perfect and imperfect CSI.

use crate::channel::{CeeConfig, ChannelSet, GroupBlocks, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{
    all_finite, block_diag, ensure_shape, fro_norm_sq, hpd_det_inv, hpd_logdet, identity, matmul,
    re_inner, CMat, C64,
};
use crate::manifold::{project_unchecked, ProductPoint, TangentVector};

/// Penalty parameter, dual variables and the inner tolerance of one outer pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AlState {
    pub rho: f64,
    pub phi: Vec<CMat>,
    pub epsilon: f64,
    pub eta: f64,
}

impl AlState {
    pub fn new(rho: f64, phi: Vec<CMat>, epsilon: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Domain(format!("rho must be positive, got {rho}")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::Domain(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self {
            rho,
            phi,
            epsilon,
            eta: f64::INFINITY,
        })
    }

    /// Zero duals shaped like the Θ blocks of `p`.
    pub fn zero_dual(p: &ProductPoint, rho: f64, epsilon: f64) -> Result<Self> {
        let phi = p
            .theta
            .iter()
            .map(|t| CMat::zeros(t.nrows(), t.ncols()))
            .collect();
        Self::new(rho, phi, epsilon)
    }
}

/// Noise-normalized effective channels `√(P/σ_r²)(Σ_g H_ir^g Θ_g H_ai^g + H_ar)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannels {
    pub ht_e: CMat,
    pub ht_b: CMat,
}

fn check_theta(blocks: &GroupBlocks, theta: &[CMat]) -> Result<()> {
    if theta.len() != blocks.groups() {
        return Err(Error::Shape(format!(
            "expected {} RIS blocks, got {}",
            blocks.groups(),
            theta.len()
        )));
    }
    for (g, t) in theta.iter().enumerate() {
        let k = blocks.h_ai[g].nrows();
        ensure_shape(&format!("theta[{g}]"), t, (k, k))?;
    }
    Ok(())
}

/// `Σ_g H_ir^g Θ_g H_ai^g + H_ar` for both receivers, without noise scaling.
pub fn cascaded_channels(blocks: &GroupBlocks, theta: &[CMat]) -> Result<(CMat, CMat)> {
    check_theta(blocks, theta)?;
    let mut h_e = blocks.h_ae.clone();
    let mut h_b = blocks.h_ab.clone();
    for (g, t) in theta.iter().enumerate() {
        let ta = matmul(t, &blocks.h_ai[g]);
        h_e.gemm(ONE, &blocks.h_ie[g], &ta, ONE);
        h_b.gemm(ONE, &blocks.h_ib[g], &ta, ONE);
    }
    Ok((h_e, h_b))
}

const ONE: C64 = C64::new(1.0, 0.0);

pub fn effective_channels(
    blocks: &GroupBlocks,
    theta: &[CMat],
    p: f64,
    sigma_e2: f64,
    sigma_b2: f64,
) -> Result<EffectiveChannels> {
    let (h_e, h_b) = cascaded_channels(blocks, theta)?;
    Ok(EffectiveChannels {
        ht_e: h_e * C64::new((p / sigma_e2).sqrt(), 0.0),
        ht_b: h_b * C64::new((p / sigma_b2).sqrt(), 0.0),
    })
}

fn capacity_bits(h: &CMat, w_scaled: &CMat, sigma2: f64) -> Result<f64> {
    let hw = h * w_scaled;
    let mut f = &hw * hw.adjoint() * C64::new(1.0 / sigma2, 0.0);
    for i in 0..f.nrows() {
        f[(i, i)] += ONE;
    }
    Ok(hpd_logdet(&f)? / std::f64::consts::LN_2)
}

/// Bob and Eve capacities `log2 det(I + H_r W Wᴴ H_rᴴ / σ_r²)` with `W` of
/// power `P` and `Θ` assembled block-diagonally.
pub fn capacities(
    w: &CMat,
    theta: &[CMat],
    cs: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<(f64, f64)> {
    let cs_ok = [&cs.h_ab, &cs.h_ae, &cs.h_ai, &cs.h_ib, &cs.h_ie]
        .iter()
        .all(|h| all_finite(h));
    if !cs_ok || !all_finite(w) || !theta.iter().all(all_finite) {
        return Err(Error::Numeric("non-finite input to secrecy rate".into()));
    }
    let full = block_diag(theta);
    ensure_shape("theta", &full, (cs.m(), cs.m()))?;
    ensure_shape("w", w, (cs.h_ab.ncols(), w.ncols()))?;
    let ws = w * C64::new(
        cfg.power_w.sqrt() / crate::linalg::fro_norm(w).max(f64::MIN_POSITIVE),
        0.0,
    );
    let h_b = &cs.h_ib * &full * &cs.h_ai + &cs.h_ab;
    let h_e = &cs.h_ie * &full * &cs.h_ai + &cs.h_ae;
    Ok((
        capacity_bits(&h_b, &ws, cfg.sigma_b2)?,
        capacity_bits(&h_e, &ws, cfg.sigma_e2)?,
    ))
}

/// `[R_b − R_e]⁺` in bits/s/Hz. `W` is taken as a direction and rescaled to
/// transmit power `P`.
pub fn secrecy_rate(w: &CMat, theta: &[CMat], cs: &ChannelSet, cfg: &SystemConfig) -> Result<f64> {
    let (rb, re) = capacities(w, theta, cs, cfg)?;
    Ok((rb - re).max(0.0))
}

/// Interference-plus-noise covariance at receiver `r` under channel estimation
/// error, for power-scaled `W` and a unitary RIS of `m` elements.
pub fn noise_covariance_imcsi(
    w_scaled: &CMat,
    m: usize,
    cs: &ChannelSet,
    cee: &CeeConfig,
    sigma_r2: f64,
    r: Receiver,
) -> CMat {
    let (h_ir, s_ir, s_ar) = match r {
        Receiver::Bob => (&cs.h_ib, cee.sigma_ib2, cee.sigma_ab2),
        Receiver::Eve => (&cs.h_ie, cee.sigma_ie2, cee.sigma_ae2),
    };
    let tr = fro_norm_sq(w_scaled);
    let s_ai = cee.sigma_ai2;
    let scalar = s_ai * s_ir * m as f64 * tr
        + s_ir * fro_norm_sq(&(&cs.h_ai * w_scaled))
        + s_ar * tr
        + sigma_r2;
    let mut j = h_ir * h_ir.adjoint() * C64::new(s_ai * tr, 0.0);
    for i in 0..j.nrows() {
        j[(i, i)] += scalar;
    }
    j
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Receiver {
    Bob,
    Eve,
}

/// Whether Eve's determinant enters the objective. `Ignore` gives the
/// Bob-only problem used for the upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EveTerm {
    Include,
    Ignore,
}

#[derive(Clone, Debug)]
enum Csi {
    Perfect,
    Imperfect {
        cee: CeeConfig,
        m: usize,
        gram_ai: CMat,
        gram_ib: CMat,
        gram_ie: CMat,
        h_ai: CMat,
    },
}

/// Value of one receiver's determinant term and the pieces of its gradient.
struct LinkEval {
    f: f64,
    grad_w: CMat,
    /// `∇_Θg f_r = H_ir^gᴴ z (H_ai^g W)ᴴ`.
    z: CMat,
}

/// Objective evaluator for one channel realization: `f = f_e / f_b` with
/// `f_r = det(I + H̃_r W Wᴴ H̃_rᴴ)` (or its imperfect-CSI counterpart).
#[derive(Clone, Debug)]
pub struct SecrecyObjective {
    blocks: GroupBlocks,
    power: f64,
    sigma_e2: f64,
    sigma_b2: f64,
    eve: EveTerm,
    csi: Csi,
}

impl SecrecyObjective {
    pub fn new(cs: &ChannelSet, cfg: &SystemConfig, groups: usize) -> Result<Self> {
        cs.validate()?;
        Ok(Self {
            blocks: crate::channel::group_blocks(cs, groups)?,
            power: cfg.power_w,
            sigma_e2: cfg.sigma_e2,
            sigma_b2: cfg.sigma_b2,
            eve: EveTerm::Include,
            csi: Csi::Perfect,
        })
    }

    /// Switches to the robust objective with estimation-error variances `cee`.
    pub fn with_cee(mut self, cs: &ChannelSet, cee: CeeConfig) -> Self {
        self.csi = Csi::Imperfect {
            cee,
            m: cs.m(),
            gram_ai: cs.h_ai.adjoint() * &cs.h_ai,
            gram_ib: &cs.h_ib * cs.h_ib.adjoint(),
            gram_ie: &cs.h_ie * cs.h_ie.adjoint(),
            h_ai: cs.h_ai.clone(),
        };
        self
    }

    pub fn with_eve(mut self, eve: EveTerm) -> Self {
        self.eve = eve;
        self
    }

    pub fn blocks(&self) -> &GroupBlocks {
        &self.blocks
    }

    pub fn groups(&self) -> usize {
        self.blocks.groups()
    }

    pub fn eve(&self) -> EveTerm {
        self.eve
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn is_imperfect(&self) -> bool {
        matches!(self.csi, Csi::Imperfect { .. })
    }

    /// Unnormalized cascaded channels `(H_e, H_b)` at `Θ`.
    pub fn channels(&self, theta: &[CMat]) -> Result<(CMat, CMat)> {
        cascaded_channels(&self.blocks, theta)
    }

    fn link(&self, h: &CMat, w: &CMat, r: Receiver, want_grad: bool) -> Result<LinkEval> {
        let sigma2 = match r {
            Receiver::Bob => self.sigma_b2,
            Receiver::Eve => self.sigma_e2,
        };
        let hw = h * w;
        match &self.csi {
            Csi::Perfect => {
                let c2 = self.power / sigma2;
                let mut f = &hw * hw.adjoint() * C64::new(c2, 0.0);
                for i in 0..f.nrows() {
                    f[(i, i)] += ONE;
                }
                if !want_grad {
                    let (det, _) = hpd_det_inv(&f)?;
                    return Ok(LinkEval {
                        f: det,
                        grad_w: CMat::zeros(0, 0),
                        z: CMat::zeros(0, 0),
                    });
                }
                let (det, inv) = hpd_det_inv(&f)?;
                let z = inv * &hw * C64::new(2.0 * c2 * det, 0.0);
                let grad_w = h.adjoint() * &z;
                Ok(LinkEval { f: det, grad_w, z })
            }
            Csi::Imperfect {
                cee,
                m,
                gram_ai,
                gram_ib,
                gram_ie,
                h_ai,
            } => {
                let p = self.power;
                let (s_ir, s_ar, gram) = match r {
                    Receiver::Bob => (cee.sigma_ib2, cee.sigma_ab2, gram_ib),
                    Receiver::Eve => (cee.sigma_ie2, cee.sigma_ae2, gram_ie),
                };
                let s_ai = cee.sigma_ai2;
                let n = fro_norm_sq(w);
                let aw = h_ai * w;
                let coef_i = s_ai * s_ir * *m as f64 + s_ar;
                let scalar = coef_i * p * n + s_ir * p * fro_norm_sq(&aw) + sigma2;
                let mut j = gram * C64::new(s_ai * p * n, 0.0);
                for i in 0..j.nrows() {
                    j[(i, i)] += scalar;
                }
                let mut jk = &hw * hw.adjoint() * C64::new(p, 0.0);
                jk += &j;
                let (det_jk, a) = hpd_det_inv(&jk)?;
                let (det_j, jinv) = hpd_det_inv(&j)?;
                let f = det_jk / det_j;
                if !want_grad {
                    return Ok(LinkEval {
                        f,
                        grad_w: CMat::zeros(0, 0),
                        z: CMat::zeros(0, 0),
                    });
                }
                let d_tr = (a.trace() - jinv.trace()).re;
                let d_gram = re_inner(&a, gram) - re_inner(&jinv, gram);
                let z = &a * &hw * C64::new(2.0 * p * f, 0.0);
                let mut grad_w = h.adjoint() * &z;
                let c_w = 2.0 * p * f * (coef_i * d_tr + s_ai * d_gram);
                grad_w += w * C64::new(c_w, 0.0);
                grad_w += gram_ai * w * C64::new(2.0 * p * f * s_ir * d_tr, 0.0);
                Ok(LinkEval { f, grad_w, z })
            }
        }
    }

    fn eve_link(&self, h_e: &CMat, w: &CMat, want_grad: bool) -> Result<LinkEval> {
        match self.eve {
            EveTerm::Include => self.link(h_e, w, Receiver::Eve, want_grad),
            EveTerm::Ignore => Ok(LinkEval {
                f: 1.0,
                grad_w: CMat::zeros(w.nrows(), w.ncols()),
                z: CMat::zeros(h_e.nrows(), w.ncols()),
            }),
        }
    }

    /// `f = f_e / f_b` at precomputed cascaded channels.
    pub fn ratio_at(&self, h_e: &CMat, h_b: &CMat, w: &CMat) -> Result<f64> {
        let e = self.eve_link(h_e, w, false)?;
        let b = self.link(h_b, w, Receiver::Bob, false)?;
        finite(e.f / b.f)
    }

    /// `f` and its W-gradient at precomputed cascaded channels, plus the
    /// coefficient matrices for the Θ-gradient.
    fn ratio_grad_at(&self, h_e: &CMat, h_b: &CMat, w: &CMat) -> Result<(f64, CMat, CMat, CMat)> {
        let e = self.eve_link(h_e, w, true)?;
        let b = self.link(h_b, w, Receiver::Bob, true)?;
        let f = e.f / b.f;
        // ∇(f_e/f_b) = ∇f_e / f_b − f ∇f_b / f_b
        let inv_b = 1.0 / b.f;
        let grad_w = e.grad_w * C64::new(inv_b, 0.0) - b.grad_w * C64::new(f * inv_b, 0.0);
        let ze = e.z * C64::new(inv_b, 0.0);
        let zb = b.z * C64::new(f * inv_b, 0.0);
        if !f.is_finite() || !all_finite(&grad_w) {
            return Err(Error::Numeric("non-finite objective gradient".into()));
        }
        Ok((f, grad_w, ze, zb))
    }

    /// `f` and its W-gradient with Θ frozen (`h_e`, `h_b` from [`Self::channels`]).
    pub fn ratio_and_w_grad_at(&self, h_e: &CMat, h_b: &CMat, w: &CMat) -> Result<(f64, CMat)> {
        let (f, gw, _, _) = self.ratio_grad_at(h_e, h_b, w)?;
        Ok((f, gw))
    }

    /// Ratio objective `f(W, Θ)`.
    pub fn ratio(&self, w: &CMat, theta: &[CMat]) -> Result<f64> {
        let (h_e, h_b) = self.channels(theta)?;
        self.ratio_at(&h_e, &h_b, w)
    }

    /// `f` with its Euclidean gradients in `W` and each `Θ_g`.
    pub fn ratio_and_grad(&self, w: &CMat, theta: &[CMat]) -> Result<(f64, CMat, Vec<CMat>)> {
        let (h_e, h_b) = self.channels(theta)?;
        let (f, gw, ze, zb) = self.ratio_grad_at(&h_e, &h_b, w)?;
        let gt = (0..self.groups())
            .map(|g| {
                let aw = &self.blocks.h_ai[g] * w;
                let mut left = self.blocks.h_ie[g].adjoint() * &ze;
                left.gemm(-ONE, &self.blocks.h_ib[g].adjoint(), &zb, ONE);
                left * aw.adjoint()
            })
            .collect();
        Ok((f, gw, gt))
    }

    /// Rates `(R_b, R_e)` in bits/s/Hz for unit-norm `W`, evaluated under the
    /// objective's CSI model. Eve's rate is always included.
    pub fn rates(&self, w: &CMat, theta: &[CMat]) -> Result<(f64, f64)> {
        let (h_e, h_b) = self.channels(theta)?;
        let e = self.link(&h_e, w, Receiver::Eve, false)?;
        let b = self.link(&h_b, w, Receiver::Bob, false)?;
        Ok((b.f.log2(), e.f.log2()))
    }

    /// Augmented Lagrangian value.
    pub fn al_value(&self, x: &ProductPoint, al: &AlState) -> Result<f64> {
        let f = self.ratio(&x.w, &x.theta)?;
        Ok(f + penalty(x, al))
    }

    /// Ambient gradient of the augmented Lagrangian.
    pub fn euclidean_gradient(
        &self,
        x: &ProductPoint,
        al: &AlState,
    ) -> Result<(f64, TangentVector)> {
        let (f, gw, mut gt) = self.ratio_and_grad(&x.w, &x.theta)?;
        let (pen, gpsi) = penalty_grad(x, al);
        for (t, gp) in gt.iter_mut().zip(&gpsi) {
            *t -= gp;
        }
        Ok((
            f + pen,
            TangentVector {
                w: gw,
                theta: gt,
                psi: gpsi,
            },
        ))
    }

    /// Riemannian gradient: tangent projection of the Euclidean one.
    pub fn riemannian_gradient(
        &self,
        x: &ProductPoint,
        al: &AlState,
    ) -> Result<(f64, TangentVector)> {
        let (v, g) = self.euclidean_gradient(x, al)?;
        Ok((v, project_unchecked(x, &g)))
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric("non-finite objective".into()))
    }
}

/// `(1/(2ρ)) Σ‖Ψ_g − Θ_g‖² + Σ Re Tr(Φ_gᴴ(Ψ_g − Θ_g))`.
pub fn penalty(x: &ProductPoint, al: &AlState) -> f64 {
    x.psi
        .iter()
        .zip(&x.theta)
        .zip(&al.phi)
        .map(|((psi, theta), phi)| {
            let d = psi - theta;
            fro_norm_sq(&d) / (2.0 * al.rho) + re_inner(phi, &d)
        })
        .sum()
}

/// Penalty value and its Ψ-gradient `(Ψ − Θ + ρΦ)/ρ` (the Θ-gradient is the negative).
fn penalty_grad(x: &ProductPoint, al: &AlState) -> (f64, Vec<CMat>) {
    let mut value = 0.0;
    let grads = x
        .psi
        .iter()
        .zip(&x.theta)
        .zip(&al.phi)
        .map(|((psi, theta), phi)| {
            let d = psi - theta;
            value += fro_norm_sq(&d) / (2.0 * al.rho) + re_inner(phi, &d);
            (d + phi * C64::new(al.rho, 0.0)) * C64::new(1.0 / al.rho, 0.0)
        })
        .collect();
    (value, grads)
}

/// Identity blocks shaped for `groups` groups of `block` elements.
pub fn identity_blocks(groups: usize, block: usize) -> Vec<CMat> {
    (0..groups).map(|_| identity(block)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{cee_variances, draw_channels};
    use crate::linalg::{complex_gaussian, fro_norm, qf, sym};
    use crate::manifold::{random_point, retract, Dims};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            nt: 4,
            nb: 2,
            ne: 2,
            ns: 2,
            m: 4,
            g: 2,
            ..SystemConfig::default()
        }
    }

    /// Unit-scale channels so finite differences are well conditioned.
    fn small_instance(seed: u64) -> (ChannelSet, SystemConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SystemConfig {
            sigma_b2: 1.0,
            sigma_e2: 1.0,
            power_w: 1.0,
            ..small_cfg()
        };
        let cs = ChannelSet {
            h_ab: complex_gaussian(2, 4, &mut rng) * C64::new(0.5, 0.0),
            h_ae: complex_gaussian(2, 4, &mut rng) * C64::new(0.5, 0.0),
            h_ai: complex_gaussian(4, 4, &mut rng) * C64::new(0.5, 0.0),
            h_ib: complex_gaussian(2, 4, &mut rng) * C64::new(0.5, 0.0),
            h_ie: complex_gaussian(2, 4, &mut rng) * C64::new(0.5, 0.0),
        };
        (cs, cfg)
    }

    fn random_al(p: &ProductPoint, rng: &mut ChaCha8Rng) -> AlState {
        let rho = 10f64.powf(rng.random_range(-1.0..1.0));
        let phi = p
            .theta
            .iter()
            .map(|t| complex_gaussian(t.nrows(), t.ncols(), rng) * C64::new(0.3, 0.0))
            .collect();
        AlState::new(rho, phi, 1e-3).unwrap()
    }

    /// Central differences of `value` along each real and imaginary coordinate.
    fn fd_check(mat: &CMat, grad: &CMat, mut value: impl FnMut(&CMat) -> f64) -> f64 {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let scale = fro_norm(grad).max(1e-8);
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                    let mut plus = mat.clone();
                    plus[(i, j)] += unit * h;
                    let mut minus = mat.clone();
                    minus[(i, j)] -= unit * h;
                    let fd = (value(&plus) - value(&minus)) / (2.0 * h);
                    let an = (grad[(i, j)].conj() * unit).re;
                    worst = worst.max((fd - an).abs() / scale);
                }
            }
        }
        worst
    }

    #[test]
    fn zero_ris_gives_direct_channel() {
        let (cs, _) = small_instance(1);
        let blocks = crate::channel::group_blocks(&cs, 2).unwrap();
        let zero = vec![CMat::zeros(2, 2); 2];
        let ec = effective_channels(&blocks, &zero, 4.0, 2.0, 0.5).unwrap();
        assert!(fro_norm(&(&ec.ht_e - &cs.h_ae * C64::new(2f64.sqrt(), 0.0))) < 1e-14);
        assert!(fro_norm(&(&ec.ht_b - &cs.h_ab * C64::new(8f64.sqrt(), 0.0))) < 1e-14);
    }

    #[test]
    fn identity_ris_single_group() {
        let (cs, _) = small_instance(2);
        let blocks = crate::channel::group_blocks(&cs, 1).unwrap();
        let ec = effective_channels(&blocks, &[identity(4)], 1.0, 1.0, 1.0).unwrap();
        let want = &cs.h_ib * &cs.h_ai + &cs.h_ab;
        assert!(fro_norm(&(&ec.ht_b - want)) < 1e-13);
    }

    #[test]
    fn blockwise_matches_full_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SystemConfig {
            m: 12,
            g: 3,
            ..SystemConfig::default()
        };
        let cs = draw_channels(&cfg, &mut rng).unwrap();
        let blocks = crate::channel::group_blocks(&cs, 3).unwrap();
        let theta: Vec<CMat> = (0..3).map(|_| complex_gaussian(4, 4, &mut rng)).collect();
        let ec =
            effective_channels(&blocks, &theta, cfg.power_w, cfg.sigma_e2, cfg.sigma_b2).unwrap();
        let full = block_diag(&theta);
        let c = C64::new((cfg.power_w / cfg.sigma_b2).sqrt(), 0.0);
        let want = (&cs.h_ib * &full * &cs.h_ai + &cs.h_ab) * c;
        assert!(fro_norm(&(&ec.ht_b - &want)) / fro_norm(&want) < 1e-10);
        assert!(matches!(
            effective_channels(&blocks, &theta[..2], 1.0, 1.0, 1.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn symmetric_wiretap_has_zero_secrecy() {
        let (mut cs, cfg) = small_instance(4);
        cs.h_ae = cs.h_ab.clone();
        cs.h_ie = cs.h_ib.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = complex_gaussian(4, 2, &mut rng);
        let theta = vec![qf(&complex_gaussian(2, 2, &mut rng)); 2];
        assert_eq!(secrecy_rate(&w, &theta, &cs, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn no_eavesdropper_gives_bob_rate() {
        let (mut cs, cfg) = small_instance(6);
        cs.h_ae.fill(C64::new(0.0, 0.0));
        cs.h_ie.fill(C64::new(0.0, 0.0));
        let w = complex_gaussian(4, 2, &mut ChaCha8Rng::seed_from_u64(7));
        let theta = identity_blocks(2, 2);
        let (rb, re) = capacities(&w, &theta, &cs, &cfg).unwrap();
        assert!(re.abs() < 1e-14);
        assert!((secrecy_rate(&w, &theta, &cs, &cfg).unwrap() - rb).abs() < 1e-14);
        assert!(rb > 0.0);
    }

    fn det2(a: &CMat) -> C64 {
        a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]
    }

    #[test]
    fn rate_matches_cofactor_determinant() {
        let (cs, cfg) = small_instance(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = complex_gaussian(4, 2, &mut rng);
        let theta = vec![sym(&complex_gaussian(2, 2, &mut rng)); 2];
        let ws = &w * C64::new(cfg.power_w.sqrt() / fro_norm(&w), 0.0);
        let full = block_diag(&theta);
        let rate = |h: &CMat, s2: f64| {
            let hw = h * &ws;
            let f = identity(2) + &hw * hw.adjoint() * C64::new(1.0 / s2, 0.0);
            det2(&f).re.log2()
        };
        let rb = rate(&(&cs.h_ib * &full * &cs.h_ai + &cs.h_ab), cfg.sigma_b2);
        let re = rate(&(&cs.h_ie * &full * &cs.h_ai + &cs.h_ae), cfg.sigma_e2);
        let (gb, ge) = capacities(&w, &theta, &cs, &cfg).unwrap();
        assert!((gb - rb).abs() < 1e-10 && (ge - re).abs() < 1e-10);
        let sr = secrecy_rate(&w, &theta, &cs, &cfg).unwrap();
        assert!((sr - (rb - re).max(0.0)).abs() < 1e-10);
    }

    #[test]
    fn normalized_objective_matches_rates() {
        let (cs, cfg) = small_instance(10);
        let obj = SecrecyObjective::new(&cs, &cfg, 2).unwrap();
        let p = random_point(Dims::new(4, 2, 2, 2), &mut ChaCha8Rng::seed_from_u64(11));
        let (rb, re) = capacities(&p.w, &p.theta, &cs, &cfg).unwrap();
        let (ob, oe) = obj.rates(&p.w, &p.theta).unwrap();
        assert!((rb - ob).abs() < 1e-10 && (re - oe).abs() < 1e-10);
        let f = obj.ratio(&p.w, &p.theta).unwrap();
        assert!((f.log2() - (re - rb)).abs() < 1e-10);
    }

    #[test]
    fn non_finite_channels_rejected() {
        let (mut cs, cfg) = small_instance(12);
        cs.h_ab[(0, 0)] = C64::new(f64::NAN, 0.0);
        let w = identity(4).columns(0, 2).into_owned();
        assert!(matches!(
            secrecy_rate(&w, &identity_blocks(2, 2), &cs, &cfg),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn feasible_point_value_is_ratio() {
        let (cs, cfg) = small_instance(13);
        let obj = SecrecyObjective::new(&cs, &cfg, 2).unwrap();
        let mut p = random_point(Dims::new(4, 2, 2, 2), &mut ChaCha8Rng::seed_from_u64(14));
        p.psi = p.theta.clone();
        let al = AlState::zero_dual(&p, 0.7, 1e-3).unwrap();
        assert_eq!(
            obj.al_value(&p, &al).unwrap(),
            obj.ratio(&p.w, &p.theta).unwrap()
        );
        let (_, g) = obj.euclidean_gradient(&p, &al).unwrap();
        assert!(g.psi.iter().all(|m| fro_norm(m) == 0.0));
    }

    #[test]
    fn null_steered_beamformer_gives_unit_ratio() {
        let (mut cs, cfg) = small_instance(15);
        // Channels act only on the first two antennas; W lives on the other two.
        for h in [&mut cs.h_ab, &mut cs.h_ae, &mut cs.h_ai] {
            h.columns_mut(2, 2).fill(C64::new(0.0, 0.0));
        }
        let obj = SecrecyObjective::new(&cs, &cfg, 2).unwrap();
        let mut w = CMat::zeros(4, 2);
        w[(2, 0)] = C64::new(0.5f64.sqrt(), 0.0);
        w[(3, 1)] = C64::new(0.0, 0.5f64.sqrt());
        let f = obj.ratio(&w, &identity_blocks(2, 2)).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn completed_square_identity() {
        let (cs, cfg) = small_instance(16);
        let obj = SecrecyObjective::new(&cs, &cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let p = random_point(Dims::new(4, 2, 2, 2), &mut rng);
            let al = random_al(&p, &mut rng);
            let f = obj.ratio(&p.w, &p.theta).unwrap();
            let mut sq = 0.0;
            let mut phi2 = 0.0;
            for g in 0..2 {
                let d = &p.psi[g] - &p.theta[g] + &al.phi[g] * C64::new(al.rho, 0.0);
                sq += fro_norm_sq(&d);
                phi2 += fro_norm_sq(&al.phi[g]);
            }
            let want = f + sq / (2.0 * al.rho) - al.rho / 2.0 * phi2;
            let got = obj.al_value(&p, &al).unwrap();
            assert!((got - want).abs() < 1e-10 * want.abs().max(1.0));
        }
    }

    #[test]
    fn symmetric_channels_cancel() {
        let (mut cs, cfg) = small_instance(18);
        cs.h_ae = &cs.h_ab * C64::new(1.0, 0.0);
        cs.h_ie = cs.h_ib.clone();
        let obj = SecrecyObjective::new(&cs, &cfg, 2).unwrap();
        let p = random_point(Dims::new(4, 2, 2, 2), &mut ChaCha8Rng::seed_from_u64(19));
        let (f, gw, gt) = obj.ratio_and_grad(&p.w, &p.theta).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
        assert!(fro_norm(&gw) < 1e-10);
        assert!(gt.iter().all(|g| fro_norm(g) < 1e-10));
    }

    fn check_euclidean_fd(obj: &SecrecyObjective, p: &ProductPoint, al: &AlState) -> f64 {
        let (_, g) = obj.euclidean_gradient(p, al).unwrap();
        let mut worst = fd_check(&p.w, &g.w, |w| {
            let mut q = p.clone();
            q.w = w.clone();
            obj.al_value(&q, al).unwrap()
        });
        for k in 0..p.theta.len() {
            worst = worst.max(fd_check(&p.theta[k], &g.theta[k], |t| {
                let mut q = p.clone();
                q.theta[k] = t.clone();
                obj.al_value(&q, al).unwrap()
            }));
            worst = worst.max(fd_check(&p.psi[k], &g.psi[k], |t| {
                let mut q = p.clone();
                q.psi[k] = t.clone();
                obj.al_value(&q, al).unwrap()
            }));
        }
        worst
    }

    #[test]
    fn euclidean_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for seed in 0..5 {
            let (cs, cfg) = small_instance(100 + seed);
            let obj = SecrecyObjective::new(&cs, &cfg, 2).unwrap();
            let p = random_point(Dims::new(4, 2, 2, 2), &mut rng);
            let al = random_al(&p, &mut rng);
            let err = check_euclidean_fd(&obj, &p, &al);
            assert!(err < 1e-6, "relative error {err}");
        }
    }

    #[test]
    fn imperfect_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..5 {
            let (cs, cfg) = small_instance(200 + seed);
            let cee = cee_variances(&cs, 0.1).unwrap();
            let obj = SecrecyObjective::new(&cs, &cfg, 2)
                .unwrap()
                .with_cee(&cs, cee);
            let p = random_point(Dims::new(4, 2, 2, 2), &mut rng);
            let al = random_al(&p, &mut rng);
            let err = check_euclidean_fd(&obj, &p, &al);
            assert!(err < 1e-6, "relative error {err}");
        }
    }

    #[test]
    fn riemannian_gradient_matches_retraction_pullback() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (cs, cfg) = small_instance(23);
        let obj = SecrecyObjective::new(&cs, &cfg, 2).unwrap();
        let dims = Dims::new(4, 2, 2, 2);
        let p = random_point(dims, &mut rng);
        let al = random_al(&p, &mut rng);
        let (_, g) = obj.riemannian_gradient(&p, &al).unwrap();
        assert!(g
            .theta
            .iter()
            .all(|t| crate::linalg::symmetry_residual(t) < 1e-14));
        for _ in 0..10 {
            let amb = TangentVector {
                w: complex_gaussian(4, 2, &mut rng),
                theta: (0..2).map(|_| complex_gaussian(2, 2, &mut rng)).collect(),
                psi: (0..2).map(|_| complex_gaussian(2, 2, &mut rng)).collect(),
            };
            let v = project_unchecked(&p, &amb);
            let h = 1e-5;
            let fp = obj
                .al_value(&retract(&p, &v.scale(h)).unwrap(), &al)
                .unwrap();
            let fm = obj
                .al_value(&retract(&p, &v.scale(-h)).unwrap(), &al)
                .unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let an = g.dot(&v);
            assert!((fd - an).abs() <= 1e-5 * an.abs().max(g.norm() * v.norm()));
        }
    }

    #[test]
    fn zero_delta_reduces_to_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let (cs, cfg) = small_instance(25);
        let perfect = SecrecyObjective::new(&cs, &cfg, 2).unwrap();
        let robust = perfect
            .clone()
            .with_cee(&cs, cee_variances(&cs, 0.0).unwrap());
        let p = random_point(Dims::new(4, 2, 2, 2), &mut rng);
        let al = random_al(&p, &mut rng);
        let (v1, g1) = perfect.euclidean_gradient(&p, &al).unwrap();
        let (v2, g2) = robust.euclidean_gradient(&p, &al).unwrap();
        assert!((v1 - v2).abs() < 1e-12 * v1.abs());
        let diff = g1.add_scaled(-1.0, &g2);
        assert!(diff.norm() < 1e-12 * g1.norm());
    }

    #[test]
    fn noise_covariance_limits() {
        let (cs, _) = small_instance(26);
        let w = complex_gaussian(4, 2, &mut ChaCha8Rng::seed_from_u64(27));
        let j = noise_covariance_imcsi(&w, 4, &cs, &CeeConfig::default(), 0.3, Receiver::Bob);
        assert!(fro_norm(&(j - identity(2) * C64::new(0.3, 0.0))) < 1e-15);

        let v = 0.2;
        let cee = CeeConfig {
            delta: 1.0,
            sigma_ai2: v,
            sigma_ib2: v,
            sigma_ie2: v,
            sigma_ab2: v,
            sigma_ae2: v,
        };
        let zero = cs.without_ris();
        let p = fro_norm_sq(&w);
        let m = 4usize;
        let j = noise_covariance_imcsi(&w, m, &zero, &cee, 0.3, Receiver::Eve);
        let want = v * v * m as f64 * p + v * p + 0.3;
        assert!(fro_norm(&(j - identity(2) * C64::new(want, 0.0))) < 1e-13);
    }

    #[test]
    fn noise_covariance_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let (cs, _) = small_instance(29);
        let cee = cee_variances(&cs, 0.1).unwrap();
        let w = complex_gaussian(4, 2, &mut rng) * C64::new(0.5, 0.0);
        let theta = block_diag(&[
            qf(&complex_gaussian(2, 2, &mut rng)),
            qf(&complex_gaussian(2, 2, &mut rng)),
        ]);
        let sigma2 = 0.05;
        let draws = 100_000;
        let mut acc = CMat::zeros(2, 2);
        let sd = |v: f64| C64::new(v.sqrt(), 0.0);
        for _ in 0..draws {
            let d_ai = complex_gaussian(4, 4, &mut rng) * sd(cee.sigma_ai2);
            let d_ib = complex_gaussian(2, 4, &mut rng) * sd(cee.sigma_ib2);
            let d_ab = complex_gaussian(2, 4, &mut rng) * sd(cee.sigma_ab2);
            let n = complex_gaussian(2, 1, &mut rng) * sd(sigma2);
            let s = complex_gaussian(2, 1, &mut rng);
            let h_err = &d_ib * &theta * &cs.h_ai
                + &cs.h_ib * &theta * &d_ai
                + &d_ib * &theta * &d_ai
                + d_ab;
            let nr = h_err * &w * s + n;
            acc += &nr * nr.adjoint();
        }
        acc /= C64::new(draws as f64, 0.0);
        let j = noise_covariance_imcsi(&w, 4, &cs, &cee, sigma2, Receiver::Bob);
        let rel = fro_norm(&(&acc - &j)) / fro_norm(&j);
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn bob_capacity_decreases_with_uncertainty() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let cfg = SystemConfig {
            m: 8,
            g: 2,
            ..SystemConfig::default()
        };
        let cs = draw_channels(&cfg, &mut rng).unwrap();
        let p = random_point(Dims::new(cfg.nt, cfg.ns, 4, 2), &mut rng);
        let theta: Vec<CMat> = p.psi.clone();
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let delta = k as f64 * 0.01;
            let obj = SecrecyObjective::new(&cs, &cfg, 2)
                .unwrap()
                .with_cee(&cs, cee_variances(&cs, delta).unwrap());
            let (rb, _) = obj.rates(&p.w, &theta).unwrap();
            assert!(rb <= last + 1e-12);
            last = rb;
        }
    }

    #[test]
    fn upper_mode_ignores_eve() {
        let (cs, cfg) = small_instance(31);
        let obj = SecrecyObjective::new(&cs, &cfg, 2)
            .unwrap()
            .with_eve(EveTerm::Ignore);
        let p = random_point(Dims::new(4, 2, 2, 2), &mut ChaCha8Rng::seed_from_u64(32));
        let (rb, _) = obj.rates(&p.w, &p.theta).unwrap();
        let f = obj.ratio(&p.w, &p.theta).unwrap();
        assert!((f.log2() + rb).abs() < 1e-10);
    }
}
