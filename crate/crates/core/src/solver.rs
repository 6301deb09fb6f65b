//! Riemannian conjugate gradient (inner loop) and the penalty / augmented
//! Lagrangian outer loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fro_norm_sq, re_inner, CMat, C64};
use crate::manifold::{project_unchecked, random_point, retract, ProductPoint, TangentVector};
use crate::objective::{AlState, SecrecyObjective};

/// Tuning of the inner and outer loops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    pub rho0: f64,
    pub epsilon0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub eta_min: f64,
    pub epsilon_min: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub alpha_init: f64,
    pub backtrack: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub max_linesearch: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            epsilon0: 1e-1,
            gamma1: 0.8,
            gamma2: 0.9,
            gamma3: 0.9,
            eta_min: 1e-5,
            epsilon_min: 1e-4,
            sigma1: 1e-4,
            sigma2: 0.4,
            alpha_init: 1.0,
            backtrack: 0.5,
            max_inner: 500,
            max_outer: 150,
            max_linesearch: 40,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho0", self.rho0),
            ("epsilon0", self.epsilon0),
            ("eta_min", self.eta_min),
            ("epsilon_min", self.epsilon_min),
            ("alpha_init", self.alpha_init),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("solver.{name}"), "must be positive"));
            }
        }
        let unit = [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("backtrack", self.backtrack),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(
                    format!("solver.{name}"),
                    "must lie in (0, 1)",
                ));
            }
        }
        if self.sigma2 >= 0.5 {
            return Err(Error::config("solver.sigma2", "must be below 1/2"));
        }
        if self.sigma1 >= self.sigma2 {
            return Err(Error::config("solver.sigma1", "must be below sigma2"));
        }
        for (name, v) in [
            ("max_inner", self.max_inner),
            ("max_outer", self.max_outer),
            ("max_linesearch", self.max_linesearch),
        ] {
            if v == 0 {
                return Err(Error::config(format!("solver.{name}"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Why a solve stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Budget,
    LineSearch,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::Budget => "budget",
            Termination::LineSearch => "line_search",
        }
    }
}

impl std::str::FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(Termination::Converged),
            "budget" => Ok(Termination::Budget),
            "line_search" => Ok(Termination::LineSearch),
            _ => Err(Error::Domain(format!("unknown termination reason {s:?}"))),
        }
    }
}

/// One accepted inner step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Objective after the step.
    pub value: f64,
    /// Objective before the step.
    pub prev_value: f64,
    /// `⟨grad, D⟩` at the start of the step.
    pub slope: f64,
    pub alpha: f64,
    /// Gradient norm after the step.
    pub grad_norm: f64,
    /// The curvature condition was met (otherwise only sufficient decrease).
    pub curvature_ok: bool,
    /// The CG direction was reset to steepest descent for this step.
    pub restarted: bool,
}

/// Trace of one inner solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InnerTrace {
    pub start_value: f64,
    pub start_grad_norm: f64,
    pub steps: Vec<StepRecord>,
}

impl InnerTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    /// Objective values from the start through every accepted step.
    pub fn values(&self) -> Vec<f64> {
        std::iter::once(self.start_value)
            .chain(self.steps.iter().map(|s| s.value))
            .collect()
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.steps
            .last()
            .map_or(self.start_grad_norm, |s| s.grad_norm)
    }
}

/// One outer (penalty) iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterRecord {
    pub eta: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub secrecy_rate: f64,
    pub grad_norm: f64,
    /// Whether the penalty was tightened (rather than a dual update).
    pub tightened: bool,
}

/// Full trace of a penalty solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveTrace {
    pub inner: Vec<InnerTrace>,
    pub outer: Vec<OuterRecord>,
    pub termination: Option<Termination>,
}

impl SolveTrace {
    pub fn inner_iterations(&self) -> usize {
        self.inner.iter().map(|t| t.iterations()).sum()
    }
}

/// Tangent-vector arithmetic used by the CG iteration.
pub trait Tangent: Clone {
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self;
    fn scale(&self, alpha: f64) -> Self;
    fn dot(&self, other: &Self) -> f64;
    fn norm(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }
}

impl Tangent for TangentVector {
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        TangentVector::add_scaled(self, alpha, other)
    }
    fn scale(&self, alpha: f64) -> Self {
        TangentVector::scale(self, alpha)
    }
    fn dot(&self, other: &Self) -> f64 {
        TangentVector::dot(self, other)
    }
}

impl Tangent for CMat {
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        self + other * C64::new(alpha, 0.0)
    }
    fn scale(&self, alpha: f64) -> Self {
        self * C64::new(alpha, 0.0)
    }
    fn dot(&self, other: &Self) -> f64 {
        re_inner(self, other)
    }
    fn norm(&self) -> f64 {
        fro_norm_sq(self).sqrt()
    }
}

/// A smooth cost on a Riemannian manifold with retraction and transport.
pub trait RiemannianProblem {
    type Point: Clone;
    type Vector: Tangent;

    fn cost(&self, x: &Self::Point) -> Result<f64>;
    /// Cost and Riemannian gradient.
    fn cost_and_gradient(&self, x: &Self::Point) -> Result<(f64, Self::Vector)>;
    fn retract(&self, x: &Self::Point, v: &Self::Vector) -> Result<Self::Point>;
    fn transport(&self, from: &Self::Point, to: &Self::Point, v: &Self::Vector) -> Self::Vector;
}

/// Whether the smooth objective `f` takes part in the augmented Lagrangian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FTerm {
    Full,
    /// `f` replaced by a constant: the penalty terms alone.
    Frozen,
}

/// The augmented Lagrangian on the product manifold for fixed `ρ`, `Φ`.
pub struct AlProblem<'a> {
    pub objective: &'a SecrecyObjective,
    pub al: &'a AlState,
    pub f_term: FTerm,
}

impl RiemannianProblem for AlProblem<'_> {
    type Point = ProductPoint;
    type Vector = TangentVector;

    fn cost(&self, x: &ProductPoint) -> Result<f64> {
        match self.f_term {
            FTerm::Full => self.objective.al_value(x, self.al),
            FTerm::Frozen => Ok(crate::objective::penalty(x, self.al)),
        }
    }

    fn cost_and_gradient(&self, x: &ProductPoint) -> Result<(f64, TangentVector)> {
        match self.f_term {
            FTerm::Full => self.objective.riemannian_gradient(x, self.al),
            FTerm::Frozen => {
                let mut g = TangentVector::zeros_like(x);
                for k in 0..x.psi.len() {
                    let d = (&x.psi[k] - &x.theta[k]
                        + &self.al.phi[k] * C64::new(self.al.rho, 0.0))
                        * C64::new(1.0 / self.al.rho, 0.0);
                    g.theta[k] = -&d;
                    g.psi[k] = d;
                }
                Ok((
                    crate::objective::penalty(x, self.al),
                    project_unchecked(x, &g),
                ))
            }
        }
    }

    fn retract(&self, x: &ProductPoint, v: &TangentVector) -> Result<ProductPoint> {
        retract(x, v)
    }

    fn transport(
        &self,
        _from: &ProductPoint,
        to: &ProductPoint,
        v: &TangentVector,
    ) -> TangentVector {
        project_unchecked(to, v)
    }
}

/// `‖g_now‖² / ‖g_prev‖²`.
pub fn fletcher_reeves_beta<V: Tangent>(g_now: &V, g_prev: &V) -> Result<f64> {
    let den = g_prev.dot(g_prev);
    if !(den > 0.0) {
        return Err(Error::Numeric(
            "Fletcher-Reeves ratio with a zero previous gradient".into(),
        ));
    }
    Ok(g_now.dot(g_now) / den)
}

/// Result of a line search.
#[derive(Clone, Debug)]
pub struct WolfeStep<P: RiemannianProblem> {
    pub alpha: f64,
    pub point: P::Point,
    pub value: f64,
    pub gradient: P::Vector,
    /// The search direction transported to the new point.
    pub transported: P::Vector,
    pub curvature_ok: bool,
}

/// Step along `direction` satisfying sufficient decrease and the strong
/// curvature condition, by bracketing: backtrack when the decrease test
/// fails, expand when the slope is still steep and negative, bisect once
/// bracketed. If no step meets both conditions within the budget, the best
/// sufficient-decrease step is returned with `curvature_ok = false`.
pub fn wolfe_step<P: RiemannianProblem>(
    problem: &P,
    x: &P::Point,
    value: f64,
    grad: &P::Vector,
    direction: &P::Vector,
    alpha0: f64,
    params: &SolverParams,
) -> Result<WolfeStep<P>> {
    let slope = grad.dot(direction);
    if !(slope < 0.0) {
        return Err(Error::Domain(format!(
            "line search needs a descent direction, slope {slope}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = f64::INFINITY;
    let mut alpha = alpha0;
    let mut best: Option<WolfeStep<P>> = None;
    for _ in 0..params.max_linesearch {
        let trial = match problem.retract(x, &direction.scale(alpha)) {
            Ok(t) => t,
            Err(Error::DegenerateStep(_)) => {
                hi = alpha;
                alpha = lo + params.backtrack * (hi - lo);
                continue;
            }
            Err(e) => return Err(e),
        };
        let armijo = match problem.cost(&trial) {
            Ok(v) => v.is_finite() && v - value <= params.sigma1 * alpha * slope,
            Err(Error::Numeric(_)) => false,
            Err(e) => return Err(e),
        };
        if !armijo {
            hi = alpha;
            alpha = lo + params.backtrack * (hi - lo);
            continue;
        }
        let (v, g) = problem.cost_and_gradient(&trial)?;
        let td = problem.transport(x, &trial, direction);
        let s = g.dot(&td);
        let curvature_ok = s.abs() <= params.sigma2 * slope.abs();
        let step = WolfeStep {
            alpha,
            point: trial,
            value: v,
            gradient: g,
            transported: td,
            curvature_ok,
        };
        if curvature_ok {
            return Ok(step);
        }
        if best.as_ref().is_none_or(|b| v < b.value) {
            best = Some(step);
        }
        if s > 0.0 {
            hi = alpha;
        } else {
            lo = alpha;
        }
        alpha = if hi.is_finite() {
            lo + params.backtrack * (hi - lo)
        } else {
            alpha / params.backtrack
        };
    }
    best.ok_or(Error::LineSearch(params.max_linesearch))
}

/// Output of one inner solve.
#[derive(Clone, Debug)]
pub struct InnerOutcome<P: RiemannianProblem> {
    pub point: P::Point,
    pub value: f64,
    pub gradient: P::Vector,
    pub trace: InnerTrace,
    pub termination: Termination,
}

/// Riemannian CG with Fletcher–Reeves updates until `‖grad‖ < epsilon` or
/// `max_inner` steps. Restarts from steepest descent when the CG direction
/// is not a descent direction or its line search fails; a failure along
/// steepest descent ends the solve with [`Termination::LineSearch`].
pub fn prcgd<P: RiemannianProblem>(
    problem: &P,
    start: P::Point,
    epsilon: f64,
    params: &SolverParams,
) -> Result<InnerOutcome<P>> {
    prcgd_with(problem, start, epsilon, params.max_inner, params)
}

pub(crate) fn prcgd_with<P: RiemannianProblem>(
    problem: &P,
    start: P::Point,
    epsilon: f64,
    max_iter: usize,
    params: &SolverParams,
) -> Result<InnerOutcome<P>> {
    let (mut value, mut grad) = problem.cost_and_gradient(&start)?;
    let mut x = start;
    let mut trace = InnerTrace {
        start_value: value,
        start_grad_norm: grad.norm(),
        steps: Vec::new(),
    };
    let mut dir = grad.scale(-1.0);
    let mut restarted = true;
    let mut alpha_prev = params.alpha_init;
    let mut slope_prev = f64::NAN;
    let mut termination = Termination::Budget;
    for _ in 0..max_iter {
        let gnorm = grad.norm();
        if gnorm < epsilon {
            termination = Termination::Converged;
            break;
        }
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            dir = grad.scale(-1.0);
            slope = -gnorm * gnorm;
            restarted = true;
        }
        let alpha0 = if slope_prev.is_nan() {
            params.alpha_init
        } else {
            (alpha_prev * slope_prev / slope).clamp(1e-12, 1e12)
        };
        let step = match wolfe_step(problem, &x, value, &grad, &dir, alpha0, params) {
            Ok(s) => s,
            Err(Error::LineSearch(_)) if !restarted => {
                dir = grad.scale(-1.0);
                slope = -gnorm * gnorm;
                restarted = true;
                match wolfe_step(problem, &x, value, &grad, &dir, params.alpha_init, params) {
                    Ok(s) => s,
                    Err(Error::LineSearch(_)) => {
                        termination = Termination::LineSearch;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(Error::LineSearch(_)) => {
                termination = Termination::LineSearch;
                break;
            }
            Err(e) => return Err(e),
        };
        trace.steps.push(StepRecord {
            value: step.value,
            prev_value: value,
            slope,
            alpha: step.alpha,
            grad_norm: step.gradient.norm(),
            curvature_ok: step.curvature_ok,
            restarted,
        });
        let beta = fletcher_reeves_beta(&step.gradient, &grad)?;
        dir = step
            .gradient
            .scale(-1.0)
            .add_scaled(beta, &step.transported);
        alpha_prev = step.alpha;
        slope_prev = slope;
        restarted = false;
        x = step.point;
        value = step.value;
        grad = step.gradient;
    }
    if termination == Termination::Budget && grad.norm() < epsilon {
        termination = Termination::Converged;
    }
    Ok(InnerOutcome {
        point: x,
        value,
        gradient: grad,
        trace,
        termination,
    })
}

/// `Φ_g ← Φ_g + (Ψ_g − Θ_g)/ρ`.
pub fn dual_update(al: &AlState, theta: &[CMat], psi: &[CMat]) -> AlState {
    let inv = C64::new(1.0 / al.rho, 0.0);
    let phi = al
        .phi
        .iter()
        .zip(theta.iter().zip(psi))
        .map(|(phi, (t, p))| phi + (p - t) * inv)
        .collect();
    AlState { phi, ..al.clone() }
}

/// Result of a penalty solve. `w` is unit-norm; scale by `√P` for the
/// transmit precoder.
#[derive(Clone, Debug)]
pub struct PprcgdOutput {
    pub point: ProductPoint,
    pub al: AlState,
    pub trace: SolveTrace,
    pub termination: Termination,
    pub final_eta: f64,
    pub final_grad_norm: f64,
    pub rb: f64,
    pub re: f64,
}

impl PprcgdOutput {
    pub fn secrecy_rate(&self) -> f64 {
        (self.rb - self.re).max(0.0)
    }

    pub fn outer_iterations(&self) -> usize {
        self.trace.outer.len()
    }

    pub fn w(&self) -> &CMat {
        &self.point.w
    }

    pub fn theta(&self) -> &[CMat] {
        &self.point.theta
    }
}

/// Penalty / augmented-Lagrangian solve from a random start drawn from `rng`.
pub fn pprcgd<R: Rng + ?Sized>(
    objective: &SecrecyObjective,
    nt: usize,
    ns: usize,
    params: &SolverParams,
    rng: &mut R,
) -> Result<PprcgdOutput> {
    let blocks = objective.blocks();
    let block = blocks.h_ai.first().map_or(0, |b| b.nrows());
    let dims = crate::manifold::Dims::new(nt, ns, block, objective.groups());
    pprcgd_from(objective, random_point(dims, rng), params)
}

/// Penalty / augmented-Lagrangian solve from a given start.
///
/// Each outer pass runs the inner CG to tolerance `ε`, then measures the
/// coupling violation `η = max |Ψ − Θ|`. If `η` did not shrink by `γ3` the
/// penalty is tightened (`ρ ← γ1 ρ`), otherwise the duals are updated. The
/// tolerance shrinks by `γ2` each pass and is floored just below `ε_min`.
/// Stops once `η < η_min` and the last inner solve reached a tolerance below
/// `ε_min`.
pub fn pprcgd_from(
    objective: &SecrecyObjective,
    start: ProductPoint,
    params: &SolverParams,
) -> Result<PprcgdOutput> {
    params.validate()?;
    let mut al = AlState::zero_dual(&start, params.rho0, params.epsilon0)?;
    al.eta = start.coupling_violation();
    let mut x = start;
    let mut trace = SolveTrace::default();
    let mut termination = Termination::Budget;
    let mut grad_norm = f64::INFINITY;
    let eps_floor = params.gamma2 * params.epsilon_min;
    for _ in 0..params.max_outer {
        let problem = AlProblem {
            objective,
            al: &al,
            f_term: FTerm::Full,
        };
        let inner = prcgd(&problem, x, al.epsilon, params)?;
        x = inner.point;
        grad_norm = inner.gradient.norm();
        let inner_done = inner.termination == Termination::Converged;
        trace.inner.push(inner.trace);

        let eta = x.coupling_violation();
        let tightened = eta >= params.gamma3 * al.eta;
        let eps_used = al.epsilon;
        let (rb, re) = objective.rates(&x.w, &x.theta)?;
        trace.outer.push(OuterRecord {
            eta,
            rho: al.rho,
            epsilon: eps_used,
            secrecy_rate: (rb - re).max(0.0),
            grad_norm,
            tightened,
        });
        if eta < params.eta_min && inner_done && eps_used < params.epsilon_min {
            termination = Termination::Converged;
            al.eta = eta;
            break;
        }
        if tightened {
            al.rho *= params.gamma1;
        } else {
            al = dual_update(&al, &x.theta, &x.psi);
        }
        al.eta = eta;
        al.epsilon = (params.gamma2 * al.epsilon).max(eps_floor);
    }
    trace.termination = Some(termination);
    let (rb, re) = objective.rates(&x.w, &x.theta)?;
    Ok(PprcgdOutput {
        final_eta: x.coupling_violation(),
        point: x,
        al,
        trace,
        termination,
        final_grad_norm: grad_norm,
        rb,
        re,
    })
}
