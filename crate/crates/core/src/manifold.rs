//! The product manifold `sphere × Π symmetric × Π unitary` carrying the
//! beamformer, the BD-RIS blocks and their unitary copies.
//!
//! All three factors are embedded in complex matrix space with the real trace
//! metric `⟨U, V⟩ = Re Tr(Uᴴ V)`, so tangent projections are orthogonal
//! projections in that metric and vector transport is projection onto the
//! target tangent space.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    adjoint_mul, complex_gaussian, ensure_same_shape, ensure_shape, fro_norm, fro_norm_sq, matmul,
    qf, re_inner, sym, symmetry_residual, unitarity_residual, CMat, C64,
};

/// Block dimensions of a product point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub nt: usize,
    pub ns: usize,
    /// Side length `M̃` of each RIS block.
    pub block: usize,
    pub groups: usize,
}

impl Dims {
    pub fn new(nt: usize, ns: usize, block: usize, groups: usize) -> Self {
        Self {
            nt,
            ns,
            block,
            groups,
        }
    }
}

/// `W ⊕ {Θ_g} ⊕ {Ψ_g}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductPoint {
    pub w: CMat,
    pub theta: Vec<CMat>,
    pub psi: Vec<CMat>,
}

/// A tangent (or ambient) vector with the same block layout as [`ProductPoint`].
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub w: CMat,
    pub theta: Vec<CMat>,
    pub psi: Vec<CMat>,
}

/// Violations of the three manifold constraints.
#[derive(Clone, Copy, Debug, Default)]
pub struct Feasibility {
    /// `| ‖W‖² − 1 |`
    pub sphere: f64,
    /// `max_g ‖Θ_g − Θ_gᵀ‖`
    pub symmetry: f64,
    /// `max_g ‖Ψ_g Ψ_gᴴ − I‖`
    pub unitarity: f64,
}

impl Feasibility {
    pub fn within(&self, sphere_tol: f64, sym_tol: f64, unit_tol: f64) -> bool {
        self.sphere <= sphere_tol && self.symmetry <= sym_tol && self.unitarity <= unit_tol
    }
}

impl ProductPoint {
    pub fn dims(&self) -> Dims {
        Dims {
            nt: self.w.nrows(),
            ns: self.w.ncols(),
            block: self.theta.first().map_or(0, |t| t.nrows()),
            groups: self.theta.len(),
        }
    }

    pub fn feasibility(&self) -> Feasibility {
        Feasibility {
            sphere: (fro_norm_sq(&self.w) - 1.0).abs(),
            symmetry: self.theta.iter().map(symmetry_residual).fold(0.0, f64::max),
            unitarity: self.psi.iter().map(unitarity_residual).fold(0.0, f64::max),
        }
    }

    /// `max_g ‖Ψ_g − Θ_g‖_∞` (entrywise max modulus).
    pub fn coupling_violation(&self) -> f64 {
        self.theta
            .iter()
            .zip(&self.psi)
            .map(|(t, p)| crate::linalg::max_abs(&(p - t)))
            .fold(0.0, f64::max)
    }

    /// `max_g ‖Θ_g Θ_gᴴ − I‖`.
    pub fn theta_unitarity_residual(&self) -> f64 {
        self.theta
            .iter()
            .map(unitarity_residual)
            .fold(0.0, f64::max)
    }

    fn check_layout(&self, v: &TangentVector) -> Result<()> {
        ensure_same_shape("W block", &self.w, &v.w)?;
        if v.theta.len() != self.theta.len() || v.psi.len() != self.psi.len() {
            return Err(Error::Shape(format!(
                "group count mismatch: point has {}/{} blocks, vector has {}/{}",
                self.theta.len(),
                self.psi.len(),
                v.theta.len(),
                v.psi.len()
            )));
        }
        for (a, b) in self.theta.iter().zip(&v.theta) {
            ensure_same_shape("Theta block", a, b)?;
        }
        for (a, b) in self.psi.iter().zip(&v.psi) {
            ensure_same_shape("Psi block", a, b)?;
        }
        Ok(())
    }
}

impl TangentVector {
    pub fn zeros(dims: Dims) -> Self {
        let blk = || CMat::zeros(dims.block, dims.block);
        Self {
            w: CMat::zeros(dims.nt, dims.ns),
            theta: (0..dims.groups).map(|_| blk()).collect(),
            psi: (0..dims.groups).map(|_| blk()).collect(),
        }
    }

    pub fn zeros_like(p: &ProductPoint) -> Self {
        Self::zeros(p.dims())
    }

    fn blocks(&self) -> impl Iterator<Item = &CMat> {
        std::iter::once(&self.w)
            .chain(self.theta.iter())
            .chain(self.psi.iter())
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&CMat, &CMat) -> CMat) -> Self {
        Self {
            w: f(&self.w, &other.w),
            theta: self
                .theta
                .iter()
                .zip(&other.theta)
                .map(|(a, b)| f(a, b))
                .collect(),
            psi: self
                .psi
                .iter()
                .zip(&other.psi)
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    /// `self + alpha · other`.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        let a = C64::new(alpha, 0.0);
        self.zip_with(other, |x, y| x + y * a)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let a = C64::new(alpha, 0.0);
        Self {
            w: &self.w * a,
            theta: self.theta.iter().map(|t| t * a).collect(),
            psi: self.psi.iter().map(|t| t * a).collect(),
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.blocks()
            .zip(other.blocks())
            .map(|(a, b)| re_inner(a, b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn same_layout(&self, other: &Self) -> Result<()> {
        ensure_same_shape("W block", &self.w, &other.w)?;
        if self.theta.len() != other.theta.len() || self.psi.len() != other.psi.len() {
            return Err(Error::Shape("group count mismatch".into()));
        }
        for (a, b) in self.blocks().zip(other.blocks()) {
            ensure_same_shape("block", a, b)?;
        }
        Ok(())
    }
}

/// Metric `Σ_blocks Re Tr(Uᴴ V)`.
pub fn inner_product(u: &TangentVector, v: &TangentVector) -> Result<f64> {
    u.same_layout(v)?;
    Ok(u.dot(v))
}

/// Sphere: `U − W Re Tr(Uᴴ W)`.
pub fn project_sphere(w: &CMat, u: &CMat) -> CMat {
    u - w * C64::new(re_inner(u, w), 0.0)
}

/// Unitary group: `U − Ψ (UᴴΨ + ΨᴴU)/2`.
pub fn project_unitary(psi: &CMat, u: &CMat) -> CMat {
    let a = adjoint_mul(psi, u);
    let s = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    u - matmul(psi, &s)
}

/// Orthogonal projection of an ambient vector onto the tangent space at `base`.
pub fn project_tangent(base: &ProductPoint, ambient: &TangentVector) -> Result<TangentVector> {
    base.check_layout(ambient)?;
    Ok(project_unchecked(base, ambient))
}

pub(crate) fn project_unchecked(base: &ProductPoint, ambient: &TangentVector) -> TangentVector {
    TangentVector {
        w: project_sphere(&base.w, &ambient.w),
        theta: ambient.theta.iter().map(sym).collect(),
        psi: base
            .psi
            .iter()
            .zip(&ambient.psi)
            .map(|(p, u)| project_unitary(p, u))
            .collect(),
    }
}

/// Normalize `W + dW`; errors on an exactly-zero result.
pub fn retract_sphere(w: &CMat, dw: &CMat) -> Result<CMat> {
    let sum = w + dw;
    let n = fro_norm(&sum);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateStep(format!(
            "‖W + dW‖ = {n}, cannot normalize"
        )));
    }
    Ok(sum / C64::new(n, 0.0))
}

/// Sphere normalization for `W`, identity for `Θ_g`, QR Q-factor for `Ψ_g`.
pub fn retract(base: &ProductPoint, step: &TangentVector) -> Result<ProductPoint> {
    base.check_layout(step)?;
    Ok(ProductPoint {
        w: retract_sphere(&base.w, &step.w)?,
        theta: base
            .theta
            .iter()
            .zip(&step.theta)
            .map(|(t, d)| t + d)
            .collect(),
        psi: base
            .psi
            .iter()
            .zip(&step.psi)
            .map(|(p, d)| qf(&(p + d)))
            .collect(),
    })
}

/// Projection-based vector transport of `d` from `from` to `to`.
pub fn transport(
    from: &ProductPoint,
    to: &ProductPoint,
    d: &TangentVector,
) -> Result<TangentVector> {
    from.check_layout(d)?;
    to.check_layout(d)?;
    Ok(project_unchecked(to, d))
}

/// Random feasible point: normalized Gaussian `W`, symmetrized Gaussian `Θ_g`,
/// QR-orthonormalized Gaussian `Ψ_g`.
pub fn random_point<R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> ProductPoint {
    let w = loop {
        let g = complex_gaussian(dims.nt, dims.ns, rng);
        let n = fro_norm(&g);
        if n > 0.0 {
            break g / C64::new(n, 0.0);
        }
    };
    let theta = (0..dims.groups)
        .map(|_| sym(&complex_gaussian(dims.block, dims.block, rng)))
        .collect();
    let psi = (0..dims.groups)
        .map(|_| qf(&complex_gaussian(dims.block, dims.block, rng)))
        .collect();
    ProductPoint { w, theta, psi }
}

/// Shape check used by callers that build points by hand.
pub fn check_point_dims(p: &ProductPoint, dims: Dims) -> Result<()> {
    ensure_shape("W", &p.w, (dims.nt, dims.ns))?;
    if p.theta.len() != dims.groups || p.psi.len() != dims.groups {
        return Err(Error::Shape(format!(
            "expected {} groups, got {}/{}",
            dims.groups,
            p.theta.len(),
            p.psi.len()
        )));
    }
    for b in p.theta.iter().chain(&p.psi) {
        ensure_shape("RIS block", b, (dims.block, dims.block))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_dims() -> Dims {
        Dims::new(3, 2, 2, 2)
    }

    fn random_ambient<R: Rng>(dims: Dims, rng: &mut R) -> TangentVector {
        TangentVector {
            w: complex_gaussian(dims.nt, dims.ns, rng),
            theta: (0..dims.groups)
                .map(|_| complex_gaussian(dims.block, dims.block, rng))
                .collect(),
            psi: (0..dims.groups)
                .map(|_| complex_gaussian(dims.block, dims.block, rng))
                .collect(),
        }
    }

    /// Flatten every block into one long complex vector.
    fn flatten(v: &TangentVector) -> Vec<C64> {
        v.w.iter()
            .chain(v.theta.iter().flat_map(|b| b.iter()))
            .chain(v.psi.iter().flat_map(|b| b.iter()))
            .copied()
            .collect()
    }

    #[test]
    fn inner_product_zero_and_identity() {
        let d = Dims::new(2, 2, 2, 1);
        let z = TangentVector::zeros(d);
        assert_eq!(inner_product(&z, &z).unwrap(), 0.0);
        let mut u = TangentVector::zeros(d);
        u.theta[0] = identity(2);
        assert_eq!(inner_product(&u, &u).unwrap(), 2.0);
    }

    #[test]
    fn inner_product_matches_flat_dot() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = Dims::new(3, 2, 2, 1);
        let u = random_ambient(d, &mut rng);
        let v = random_ambient(d, &mut rng);
        let flat: f64 = flatten(&u)
            .iter()
            .zip(flatten(&v))
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        assert!((inner_product(&u, &v).unwrap() - flat).abs() < 1e-12);
    }

    #[test]
    fn inner_product_rejects_shape_mismatch() {
        let u = TangentVector::zeros(Dims::new(3, 2, 2, 1));
        let v = TangentVector::zeros(Dims::new(3, 2, 2, 2));
        assert!(matches!(inner_product(&u, &v), Err(Error::Shape(_))));
        let v = TangentVector::zeros(Dims::new(4, 2, 2, 1));
        assert!(matches!(inner_product(&u, &v), Err(Error::Shape(_))));
    }

    #[test]
    fn radial_direction_projects_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_point(small_dims(), &mut rng);
        let mut amb = TangentVector::zeros_like(&x);
        amb.w = x.w.clone();
        let t = project_tangent(&x, &amb).unwrap();
        assert!(fro_norm(&t.w) < 1e-14);
    }

    #[test]
    fn symmetric_kept_antisymmetric_killed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_point(small_dims(), &mut rng);
        let a = complex_gaussian(2, 2, &mut rng);
        let mut amb = TangentVector::zeros_like(&x);
        amb.theta[0] = sym(&a);
        amb.theta[1] = &a - a.transpose();
        let t = project_tangent(&x, &amb).unwrap();
        assert!(fro_norm(&(&t.theta[0] - sym(&a))) < 1e-15);
        assert!(fro_norm(&t.theta[1]) < 1e-15);
    }

    #[test]
    fn residual_is_orthogonal_to_tangent_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_point(small_dims(), &mut rng);
        let amb = random_ambient(small_dims(), &mut rng);
        let p = project_tangent(&x, &amb).unwrap();
        let r = amb.add_scaled(-1.0, &p);
        for _ in 0..20 {
            let t = project_tangent(&x, &random_ambient(small_dims(), &mut rng)).unwrap();
            assert!(inner_product(&r, &t).unwrap().abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_step_retracts_to_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_point(small_dims(), &mut rng);
        let y = retract(&x, &TangentVector::zeros_like(&x)).unwrap();
        assert!(fro_norm(&(&y.w - &x.w)) < 1e-12);
        for g in 0..2 {
            assert!(fro_norm(&(&y.theta[g] - &x.theta[g])) < 1e-12);
            assert!(fro_norm(&(&y.psi[g] - &x.psi[g])) < 1e-12);
        }
    }

    #[test]
    fn skew_step_from_identity_stays_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut x = random_point(Dims::new(2, 1, 3, 1), &mut rng);
        x.psi[0] = identity(3);
        let a = complex_gaussian(3, 3, &mut rng) * C64::new(1e-2, 0.0);
        let skew = &a - a.adjoint();
        let mut step = TangentVector::zeros_like(&x);
        step.psi[0] = skew;
        let y = retract(&x, &step).unwrap();
        let r = y.psi[0].adjoint() * &y.psi[0] - identity(3);
        assert!(fro_norm(&r) <= 1e-10);
    }

    #[test]
    fn sphere_retraction_normalizes() {
        let w = CMat::from_element(2, 1, C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        // W + dW = 2W has norm 2.
        let out = retract_sphere(&w, &w).unwrap();
        assert!(fro_norm(&(&out - &w)) < 1e-15);
        assert!((fro_norm(&out) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_sphere_step_errors() {
        let w = CMat::from_element(2, 1, C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0));
        assert!(matches!(
            retract_sphere(&w, &(-&w)),
            Err(Error::DegenerateStep(_))
        ));
    }

    #[test]
    fn transport_same_point_is_projection_and_zero_maps_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_point(small_dims(), &mut rng);
        let d = random_ambient(small_dims(), &mut rng);
        let t = transport(&x, &x, &d).unwrap();
        let p = project_tangent(&x, &d).unwrap();
        assert!(t.add_scaled(-1.0, &p).norm() < 1e-15);
        let z = TangentVector::zeros_like(&x);
        assert_eq!(transport(&x, &x, &z).unwrap().norm(), 0.0);
    }

    #[test]
    fn random_point_is_feasible_and_deterministic() {
        let d = Dims::new(4, 2, 3, 2);
        let a = random_point(d, &mut ChaCha8Rng::seed_from_u64(42));
        let b = random_point(d, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
        assert!(a.feasibility().within(1e-10, 1e-10, 1e-8));
        check_point_dims(&a, d).unwrap();
    }

    #[test]
    fn random_theta_is_not_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = Dims::new(2, 1, 4, 1);
        let mean: f64 = (0..1000)
            .map(|_| unitarity_residual(&random_point(d, &mut rng).theta[0]))
            .sum::<f64>()
            / 1000.0;
        assert!(mean > 0.1, "mean residual {mean}");
    }
}
