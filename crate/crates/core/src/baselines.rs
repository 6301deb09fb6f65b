//! Comparison schemes: group- and fully-connected BD-RIS, diagonal RIS,
//! random fully-connected RIS, no RIS, and the Bob-only upper bound.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::channel::{CeeConfig, ChannelSet, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, fro_norm, qf, CMat, C64};
use crate::manifold::{project_sphere, retract_sphere};
use crate::objective::{EveTerm, SecrecyObjective};
use crate::solver::{pprcgd, prcgd_with, RiemannianProblem, SolverParams, Tangent, Termination};

/// A transmission scheme under comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeId {
    /// Fully-connected BD-RIS (one group).
    Fc,
    /// Group-connected BD-RIS with the given number of groups.
    Gc(usize),
    /// Diagonal RIS with unit-modulus phases.
    Dris,
    /// Random fully-connected BD-RIS, only `W` optimized.
    RandomFc,
    /// No RIS, only `W` optimized.
    WoRis,
    /// Fully-connected BD-RIS maximizing Bob's rate alone.
    UpperFc,
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeId::Fc => write!(f, "fc"),
            SchemeId::Gc(g) => write!(f, "gc{g}"),
            SchemeId::Dris => write!(f, "dris"),
            SchemeId::RandomFc => write!(f, "random"),
            SchemeId::WoRis => write!(f, "wo"),
            SchemeId::UpperFc => write!(f, "upper"),
        }
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Ok(match t.as_str() {
            "fc" => SchemeId::Fc,
            "dris" => SchemeId::Dris,
            "random" => SchemeId::RandomFc,
            "wo" => SchemeId::WoRis,
            "upper" => SchemeId::UpperFc,
            _ => match t.strip_prefix("gc").map(str::parse::<usize>) {
                Some(Ok(g)) if g > 0 => SchemeId::Gc(g),
                _ => return Err(Error::config("schemes", format!("unknown scheme {s:?}"))),
            },
        })
    }
}

impl SchemeId {
    /// Checks the scheme against the RIS size.
    pub fn validate(&self, m: usize) -> Result<()> {
        if let SchemeId::Gc(g) = self {
            if m % g != 0 {
                return Err(Error::config(
                    "schemes",
                    format!("gc{g}: {g} groups do not divide {m} elements"),
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of one scheme on one channel realization.
#[derive(Clone, Debug)]
pub struct SchemeOutcome {
    /// Unit-norm precoder direction.
    pub w: CMat,
    /// RIS blocks (empty for no RIS).
    pub theta: Vec<CMat>,
    pub rb: f64,
    pub re: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub final_eta: f64,
    pub unitarity_residual: f64,
    pub termination: Termination,
}

impl SchemeOutcome {
    pub fn secrecy_rate(&self) -> f64 {
        (self.rb - self.re).max(0.0)
    }
}

/// `U Uᵀ` with `U` the Q factor of a complex Gaussian matrix: symmetric and
/// unitary by construction.
pub fn random_symmetric_unitary<R: Rng + ?Sized>(m: usize, rng: &mut R) -> CMat {
    let u = qf(&complex_gaussian(m, m, rng));
    &u * u.transpose()
}

/// Random unit-norm precoder.
pub fn random_precoder<R: Rng + ?Sized>(nt: usize, ns: usize, rng: &mut R) -> CMat {
    let w = complex_gaussian(nt, ns, rng);
    let n = fro_norm(&w);
    w * C64::new(1.0 / n, 0.0)
}

/// Objective for `groups` RIS groups, with estimation-error variances if given.
pub fn build_objective(
    cs: &ChannelSet,
    cfg: &SystemConfig,
    groups: usize,
    cee: Option<CeeConfig>,
) -> Result<SecrecyObjective> {
    let obj = SecrecyObjective::new(cs, cfg, groups)?;
    Ok(match cee {
        Some(c) => obj.with_cee(cs, c),
        None => obj,
    })
}

/// Precoder-only problem on the unit sphere with the cascaded channels frozen.
struct PrecoderProblem<'a> {
    objective: &'a SecrecyObjective,
    h_e: CMat,
    h_b: CMat,
}

impl RiemannianProblem for PrecoderProblem<'_> {
    type Point = CMat;
    type Vector = CMat;

    fn cost(&self, w: &CMat) -> Result<f64> {
        self.objective.ratio_at(&self.h_e, &self.h_b, w)
    }

    fn cost_and_gradient(&self, w: &CMat) -> Result<(f64, CMat)> {
        let (f, g) = self
            .objective
            .ratio_and_w_grad_at(&self.h_e, &self.h_b, w)?;
        Ok((f, project_sphere(w, &g)))
    }

    fn retract(&self, w: &CMat, v: &CMat) -> Result<CMat> {
        retract_sphere(w, v)
    }

    fn transport(&self, _from: &CMat, to: &CMat, v: &CMat) -> CMat {
        project_sphere(to, v)
    }
}

/// Iteration budget for the single-loop baselines, which have no outer loop
/// to spread work over.
fn single_loop_budget(params: &SolverParams) -> usize {
    params.max_inner * 10
}

/// Optimizes the precoder with `Θ` frozen, starting from `w0`.
pub fn optimize_fixed_theta(
    objective: &SecrecyObjective,
    theta: &[CMat],
    w0: CMat,
    params: &SolverParams,
) -> Result<SchemeOutcome> {
    params.validate()?;
    let (h_e, h_b) = objective.channels(theta)?;
    let problem = PrecoderProblem {
        objective,
        h_e,
        h_b,
    };
    let out = prcgd_with(
        &problem,
        w0,
        params.epsilon_min,
        single_loop_budget(params),
        params,
    )?;
    let (rb, re) = objective.rates(&out.point, theta)?;
    let (rb, re) = match objective.eve() {
        EveTerm::Include => (rb, re),
        EveTerm::Ignore => (rb, 0.0),
    };
    Ok(SchemeOutcome {
        unitarity_residual: theta
            .iter()
            .map(crate::linalg::unitarity_residual)
            .fold(0.0, f64::max),
        w: out.point,
        theta: theta.to_vec(),
        rb,
        re,
        outer_iters: 0,
        inner_iters: out.trace.iterations(),
        final_eta: 0.0,
        termination: out.termination,
    })
}

/// Precoder and unit-modulus diagonal RIS phases.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagPoint {
    pub w: CMat,
    /// `M × 1` phases with unit modulus.
    pub phases: CMat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagTangent {
    pub w: CMat,
    pub phases: CMat,
}

impl Tangent for DiagTangent {
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        DiagTangent {
            w: Tangent::add_scaled(&self.w, alpha, &other.w),
            phases: Tangent::add_scaled(&self.phases, alpha, &other.phases),
        }
    }
    fn scale(&self, alpha: f64) -> Self {
        DiagTangent {
            w: Tangent::scale(&self.w, alpha),
            phases: Tangent::scale(&self.phases, alpha),
        }
    }
    fn dot(&self, other: &Self) -> f64 {
        Tangent::dot(&self.w, &other.w) + Tangent::dot(&self.phases, &other.phases)
    }
}

/// Projection onto the tangent space of the complex circle product at `theta`.
fn project_circle(theta: &CMat, u: &CMat) -> CMat {
    CMat::from_fn(theta.nrows(), 1, |i, _| {
        let t = theta[(i, 0)];
        let v = u[(i, 0)];
        v - t * (v * t.conj()).re
    })
}

fn retract_circle(theta: &CMat, v: &CMat) -> Result<CMat> {
    let mut out = theta + v;
    for z in out.iter_mut() {
        let n = z.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateStep(
                "phase step cancels an element".into(),
            ));
        }
        *z /= n;
    }
    Ok(out)
}

fn phases_to_blocks(phases: &CMat) -> Vec<CMat> {
    phases
        .iter()
        .map(|z| CMat::from_element(1, 1, *z))
        .collect()
}

/// Diagonal RIS problem on sphere × circleᴹ, using 1×1 RIS groups.
struct DiagProblem<'a> {
    objective: &'a SecrecyObjective,
}

impl RiemannianProblem for DiagProblem<'_> {
    type Point = DiagPoint;
    type Vector = DiagTangent;

    fn cost(&self, x: &DiagPoint) -> Result<f64> {
        self.objective.ratio(&x.w, &phases_to_blocks(&x.phases))
    }

    fn cost_and_gradient(&self, x: &DiagPoint) -> Result<(f64, DiagTangent)> {
        let (f, gw, gt) = self
            .objective
            .ratio_and_grad(&x.w, &phases_to_blocks(&x.phases))?;
        let gp = CMat::from_fn(gt.len(), 1, |i, _| gt[i][(0, 0)]);
        Ok((
            f,
            DiagTangent {
                w: project_sphere(&x.w, &gw),
                phases: project_circle(&x.phases, &gp),
            },
        ))
    }

    fn retract(&self, x: &DiagPoint, v: &DiagTangent) -> Result<DiagPoint> {
        Ok(DiagPoint {
            w: retract_sphere(&x.w, &v.w)?,
            phases: retract_circle(&x.phases, &v.phases)?,
        })
    }

    fn transport(&self, _from: &DiagPoint, to: &DiagPoint, v: &DiagTangent) -> DiagTangent {
        DiagTangent {
            w: project_sphere(&to.w, &v.w),
            phases: project_circle(&to.phases, &v.phases),
        }
    }
}

/// Diagonal-RIS outcome with its phases.
#[derive(Clone, Debug)]
pub struct DrisOutcome {
    pub outcome: SchemeOutcome,
    pub phases: CMat,
}

/// Joint precoder and diagonal-phase optimization from a random start.
pub fn optimize_dris<R: Rng + ?Sized>(
    cs: &ChannelSet,
    cfg: &SystemConfig,
    params: &SolverParams,
    cee: Option<CeeConfig>,
    rng: &mut R,
) -> Result<DrisOutcome> {
    params.validate()?;
    let m = cs.m();
    let objective = build_objective(cs, cfg, m, cee)?;
    let w0 = random_precoder(cfg.nt, cfg.ns, rng);
    let phases = CMat::from_fn(m, 1, |_, _| {
        C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
    });
    let start = DiagPoint { w: w0, phases };
    let problem = DiagProblem {
        objective: &objective,
    };
    let out = prcgd_with(
        &problem,
        start,
        params.epsilon_min,
        single_loop_budget(params),
        params,
    )?;
    let blocks = phases_to_blocks(&out.point.phases);
    let (rb, re) = objective.rates(&out.point.w, &blocks)?;
    let residual = out
        .point
        .phases
        .iter()
        .map(|z| (z.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(DrisOutcome {
        outcome: SchemeOutcome {
            w: out.point.w,
            theta: blocks,
            rb,
            re,
            outer_iters: 0,
            inner_iters: out.trace.iterations(),
            final_eta: 0.0,
            unitarity_residual: residual,
            termination: out.termination,
        },
        phases: out.point.phases,
    })
}

/// Fully-connected BD-RIS maximizing Bob's rate with Eve ignored. The
/// reported `re` is zero, so `rb` is the bound.
pub fn upper_bound<R: Rng + ?Sized>(
    cs: &ChannelSet,
    cfg: &SystemConfig,
    params: &SolverParams,
    cee: Option<CeeConfig>,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    let objective = build_objective(cs, cfg, 1, cee)?.with_eve(EveTerm::Ignore);
    let mut out = penalty_scheme(&objective, cfg, params, rng)?;
    out.re = 0.0;
    Ok(out)
}

fn penalty_scheme<R: Rng + ?Sized>(
    objective: &SecrecyObjective,
    cfg: &SystemConfig,
    params: &SolverParams,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    let out = pprcgd(objective, cfg.nt, cfg.ns, params, rng)?;
    Ok(SchemeOutcome {
        outer_iters: out.outer_iterations(),
        inner_iters: out.trace.inner_iterations(),
        final_eta: out.final_eta,
        unitarity_residual: out.point.theta_unitarity_residual(),
        termination: out.termination,
        rb: out.rb,
        re: out.re,
        w: out.point.w,
        theta: out.point.theta,
    })
}

/// One group, or none when the surface has no elements.
fn fc_groups(m: usize) -> usize {
    usize::from(m > 0)
}

fn fc_theta(m: usize, make: impl FnOnce(usize) -> CMat) -> Vec<CMat> {
    if m == 0 {
        Vec::new()
    } else {
        vec![make(m)]
    }
}

/// Runs `scheme` on one channel realization from a random start.
pub fn run_scheme<R: Rng + ?Sized>(
    scheme: SchemeId,
    cs: &ChannelSet,
    cfg: &SystemConfig,
    params: &SolverParams,
    cee: Option<CeeConfig>,
    rng: &mut R,
) -> Result<SchemeOutcome> {
    scheme.validate(cs.m())?;
    match scheme {
        SchemeId::Fc => penalty_scheme(&build_objective(cs, cfg, 1, cee)?, cfg, params, rng),
        SchemeId::Gc(g) => penalty_scheme(&build_objective(cs, cfg, g, cee)?, cfg, params, rng),
        SchemeId::UpperFc => upper_bound(cs, cfg, params, cee, rng),
        SchemeId::Dris => Ok(optimize_dris(cs, cfg, params, cee, rng)?.outcome),
        SchemeId::RandomFc => {
            let objective = build_objective(cs, cfg, fc_groups(cs.m()), cee)?;
            let theta = fc_theta(cs.m(), |m| random_symmetric_unitary(m, rng));
            let w0 = random_precoder(cfg.nt, cfg.ns, rng);
            optimize_fixed_theta(&objective, &theta, w0, params)
        }
        SchemeId::WoRis => {
            let bare = cs.without_ris();
            // No RIS means no RIS-link estimation error either.
            let cee = cee.map(|c| CeeConfig {
                sigma_ai2: 0.0,
                sigma_ib2: 0.0,
                sigma_ie2: 0.0,
                ..c
            });
            let objective = build_objective(&bare, cfg, fc_groups(cs.m()), cee)?;
            let theta = fc_theta(cs.m(), |m| CMat::zeros(m, m));
            let w0 = random_precoder(cfg.nt, cfg.ns, rng);
            let mut out = optimize_fixed_theta(&objective, &theta, w0, params)?;
            out.theta.clear();
            out.unitarity_residual = 0.0;
            Ok(out)
        }
    }
}
