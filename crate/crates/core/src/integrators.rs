//! Momentum integrators for accelerated optimization on embedded manifolds.
//!
//! Two discretizations of the same continuous-time variational flow with
//! rate O(1/t^p), plus a gradient-descent baseline:
//!
//! * `EL-I` / `EL-II`: semi-implicit Euler steps of the Lagrangian form,
//!   phrased with retractions and tangent transport:
//!   ```text
//!   b_k = 1 - (zeta p + lambda) / (lambda k)
//!   c_k = min(C p^2 (k h)^{p-2}, c_max)
//!   a_k = b_k V_k - h c_k grad f    (EL-II evaluates grad at
//!                                    R_{X_k}(h b_k V_k), then projects)
//!   X_{k+1} = R_{X_k}(h a_k),  V_{k+1} = transport of a_k
//!   ```
//! * `HTVI-Direct` / `HTVI-Adaptive`: discretized Hamiltonian flow in the
//!   time-dilated extended phase space, with a monotone internal time
//!   variable; `Adaptive` integrates the rate-p flow on the clock of a
//!   slower rate-p_ring flow, `Direct` is the same map with p_ring = p.
//! * `RGD`: X_{k+1} = R_{X_k}(-h grad f).
//!
//! The gradient coefficient of both families grows polynomially without
//! bound; `c_max` caps it so late-stage roundoff does not get amplified
//! into divergence. All state updates fail with `Error::NonFinite` on the
//! first non-finite entry, and [`run`] converts that into a truncated trace
//! instead of an error.

use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::matops::{self, DenseMatrix};
use crate::problems::Problem;

/// Parameters of the variational family. `p` is the targeted polynomial
/// convergence-rate order; `p_ring <= p` is the order of the reference clock
/// used by the adaptive Hamiltonian method.
#[derive(Debug, Clone, PartialEq)]
pub struct BregmanParams {
    /// Rate order of the flow being integrated; > 0.
    pub p: f64,
    /// Clock order for HTVI-Adaptive; (0, p]. Ignored by EL and RGD.
    pub p_ring: f64,
    /// Constant weight on the potential; > 0.
    pub c: f64,
    /// Curvature margin in the damping schedule; >= 1. EL only.
    pub zeta: f64,
    /// Quasi-convexity margin in the damping schedule; (0, 1]. EL only.
    pub lambda: f64,
    /// Step size; > 0.
    pub h: f64,
    /// Initial value of the HTVI internal time variable; > 0.
    pub t0: f64,
    /// Cap on the gradient coefficient; > 0.
    pub c_max: f64,
    /// If set, the HTVI momentum is re-projected onto the tangent space
    /// after each update. Off by default: the evolution is posed in the
    /// ambient space and projection of the position alone matches it.
    pub project_momentum: bool,
}

pub const DEFAULT_C_MAX: f64 = 1e8;

impl Default for BregmanParams {
    fn default() -> Self {
        BregmanParams {
            p: 4.0,
            p_ring: 4.0,
            c: 1.0,
            zeta: 1.0,
            lambda: 1.0,
            h: 0.01,
            t0: 1.0,
            c_max: DEFAULT_C_MAX,
            project_momentum: false,
        }
    }
}

impl BregmanParams {
    /// Validate for a particular method. The Hamiltonian discretization is
    /// only available for zeta = lambda = 1 (its derivation fixes both), so
    /// other values are rejected rather than silently accepted.
    pub fn validate(&self, method: Method) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if !(self.h > 0.0) || !self.h.is_finite() {
            return fail(format!("h must be positive and finite, got {}", self.h));
        }
        if method == Method::Rgd {
            return Ok(());
        }
        if !(self.p > 0.0) || !self.p.is_finite() {
            return fail(format!("p must be positive and finite, got {}", self.p));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return fail(format!("c must be positive and finite, got {}", self.c));
        }
        if !(self.c_max > 0.0) {
            return fail(format!("c_max must be positive, got {}", self.c_max));
        }
        match method {
            Method::ElI | Method::ElII => {
                if !(self.zeta >= 1.0) || !self.zeta.is_finite() {
                    return fail(format!("zeta must be >= 1, got {}", self.zeta));
                }
                if !(self.lambda > 0.0 && self.lambda <= 1.0) {
                    return fail(format!("lambda must be in (0, 1], got {}", self.lambda));
                }
            }
            Method::HtviDirect | Method::HtviAdaptive => {
                if self.zeta != 1.0 || self.lambda != 1.0 {
                    return fail(format!(
                        "Hamiltonian methods require zeta = lambda = 1, got zeta={}, lambda={}",
                        self.zeta, self.lambda
                    ));
                }
                if !(self.t0 > 0.0) || !self.t0.is_finite() {
                    return fail(format!("t0 must be positive and finite, got {}", self.t0));
                }
                if method == Method::HtviAdaptive
                    && (!(self.p_ring > 0.0) || self.p_ring > self.p)
                {
                    return fail(format!(
                        "p_ring must be in (0, p], got p_ring={}, p={}",
                        self.p_ring, self.p
                    ));
                }
            }
            Method::Rgd => unreachable!(),
        }
        Ok(())
    }

    /// Effective parameters actually used by a method. `HTVI-Direct` is the
    /// adaptive map on its own clock, so `p_ring` is pinned to `p`.
    fn effective(&self, method: Method) -> BregmanParams {
        let mut p = self.clone();
        if method == Method::HtviDirect {
            p.p_ring = p.p;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ElI,
    ElII,
    HtviDirect,
    HtviAdaptive,
    Rgd,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ElI,
        Method::ElII,
        Method::HtviDirect,
        Method::HtviAdaptive,
        Method::Rgd,
    ];

    /// Canonical label, also used in file names and CSV headers.
    pub fn label(&self) -> &'static str {
        match self {
            Method::ElI => "el-i",
            Method::ElII => "el-ii",
            Method::HtviDirect => "htvi-direct",
            Method::HtviAdaptive => "htvi-adaptive",
            Method::Rgd => "rgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "el-i" | "el1" | "el-1" => Ok(Method::ElI),
            "el-ii" | "el2" | "el-2" => Ok(Method::ElII),
            "htvi-direct" => Ok(Method::HtviDirect),
            "htvi-adaptive" => Ok(Method::HtviAdaptive),
            "rgd" => Ok(Method::Rgd),
            other => Err(Error::ConfigInvalid(format!(
                "unknown method '{other}' (expected el-i, el-ii, htvi-direct, htvi-adaptive or rgd)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Which gradient the Lagrangian step uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElVersion {
    /// Gradient at the current point.
    I,
    /// Gradient at the half-updated point R_{X_k}(h b_k V_k), pulled back to
    /// T_{X_k} by orthogonal projection.
    II,
}

/// State of the Lagrangian integrators. `k` is the index used by the damping
/// schedule and starts at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ElState {
    pub k: usize,
    pub x: DenseMatrix,
    pub v: DenseMatrix,
}

impl ElState {
    /// Rest state at a point: k = 1, zero velocity.
    pub fn at_rest(x: DenseMatrix) -> Self {
        let v = DenseMatrix::zeros(x.nrows(), x.ncols());
        ElState { k: 1, x, v }
    }
}

/// State of the Hamiltonian integrators. `q` is the position on the
/// manifold, `r` its conjugate momentum in ambient coordinates, `t` the
/// internal (dilated) time variable, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct HtviState {
    pub k: usize,
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub t: f64,
}

impl HtviState {
    /// Rest state at a point: k = 0, zero momentum, time at t0.
    pub fn at_rest(q: DenseMatrix, t0: f64) -> Self {
        let r = DenseMatrix::zeros(q.nrows(), q.ncols());
        HtviState { k: 0, q, r, t: t0 }
    }
}

/// One semi-implicit step of the Lagrangian discretization.
pub fn el_step(
    state: &ElState,
    problem: &Problem,
    manifold: &Manifold,
    params: &BregmanParams,
    version: ElVersion,
) -> Result<ElState> {
    debug_assert!(state.k >= 1, "EL index starts at 1");
    let k = state.k as f64;
    let b = 1.0 - (params.zeta * params.p + params.lambda) / (params.lambda * k);
    let c = (params.c * params.p * params.p * (k * params.h).powf(params.p - 2.0))
        .min(params.c_max);
    let grad = match version {
        ElVersion::I => problem.riemannian_grad(manifold, &state.x)?,
        ElVersion::II => {
            let probe = manifold.retract(&state.x, &(&state.v * (params.h * b)))?;
            let g = problem.riemannian_grad(manifold, &probe)?;
            manifold.project_tangent(&state.x, &g)?
        }
    };
    let a = &state.v * b - grad * (params.h * c);
    matops::ensure_finite(&a, "EL update direction")?;
    let x_next = manifold.retract(&state.x, &(&a * params.h))?;
    let v_next = manifold.transport(&state.x, &x_next, &a)?;
    matops::ensure_finite(&x_next, "EL position")?;
    matops::ensure_finite(&v_next, "EL velocity")?;
    Ok(ElState {
        k: state.k + 1,
        x: x_next,
        v: v_next,
    })
}

/// One step of the Hamiltonian discretization (adaptive form; the direct
/// method passes p_ring = p).
pub fn htvi_step(
    state: &HtviState,
    problem: &Problem,
    manifold: &Manifold,
    params: &BregmanParams,
) -> Result<HtviState> {
    let p = params.p;
    let ratio = params.p_ring / p;
    let scale = p * p / params.p_ring;
    // Momentum update; the polynomially growing coefficient is capped.
    let grad_coef = (scale * params.c * state.t.powf(2.0 * p - ratio)).min(params.c_max);
    let grad = problem.riemannian_grad(manifold, &state.q)?;
    let mut r_next = &state.r - grad * (params.h * grad_coef);
    if params.project_momentum {
        r_next = manifold.project_tangent(&state.q, &r_next)?;
    }
    // Position update, pulled back to the manifold by the configured
    // projection; this coefficient decays, so it is left uncapped.
    let pos_coef = scale * params.h * state.t.powf(-p - ratio);
    let q_next = manifold.project_point(&(&state.q + &r_next * pos_coef))?;
    // Internal clock; strictly increasing since the increment is positive.
    let t_next = state.t + (p / params.p_ring) * params.h * state.t.powf(1.0 - ratio);
    if !t_next.is_finite() {
        return Err(Error::NonFinite("HTVI time variable"));
    }
    debug_assert!(t_next > state.t);
    matops::ensure_finite(&r_next, "HTVI momentum")?;
    matops::ensure_finite(&q_next, "HTVI position")?;
    Ok(HtviState {
        k: state.k + 1,
        q: q_next,
        r: r_next,
        t: t_next,
    })
}

/// One projected gradient-descent step.
pub fn rgd_step(
    x: &DenseMatrix,
    problem: &Problem,
    manifold: &Manifold,
    h: f64,
) -> Result<DenseMatrix> {
    let g = problem.riemannian_grad(manifold, x)?;
    let next = manifold.retract(x, &(g * -h))?;
    matops::ensure_finite(&next, "RGD position")?;
    Ok(next)
}

/// Stopping rule for [`run`]: hard iteration limit plus optional tolerances
/// on the oracle gap and the gradient norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    pub max_iter: usize,
    /// Stop once f - f_star <= f_tol; needs an oracle value.
    pub f_tol: Option<f64>,
    /// Stop once ||grad f|| <= grad_tol.
    pub grad_tol: Option<f64>,
}

impl StopCriteria {
    pub fn max_iter(max_iter: usize) -> Self {
        StopCriteria {
            max_iter,
            f_tol: None,
            grad_tol: None,
        }
    }
}

/// One recorded iteration. `t` is physical time k*h for EL and RGD and the
/// internal time variable for HTVI. `error` is f - f_star when an oracle
/// value is available.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    pub t: f64,
    pub f: f64,
    pub error: Option<f64>,
    pub constraint_violation: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// f - f_star reached f_tol.
    Converged,
    /// ||grad f|| reached grad_tol.
    GradientConverged,
    MaxIterations,
    /// A step failed at this iteration, through a non-finite state entry or
    /// a geometric breakdown such as an antipodal transport; the trace stops
    /// at the last recordable state.
    Diverged { at: usize },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::GradientConverged => "gradient-converged",
            Termination::MaxIterations => "max-iterations",
            Termination::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<TraceRecord>,
    pub termination: Termination,
    /// Steps actually executed.
    pub iterations: usize,
}

impl RunResult {
    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.trace.last()
    }

    /// First recorded iteration at which error <= tol, if any.
    pub fn iterations_to_tolerance(&self, tol: f64) -> Option<usize> {
        self.trace
            .iter()
            .find(|r| r.error.is_some_and(|e| e <= tol))
            .map(|r| r.k)
    }
}

enum Walker {
    El(ElState, ElVersion),
    Htvi(HtviState),
    Rgd(DenseMatrix, usize),
}

impl Walker {
    fn point(&self) -> &DenseMatrix {
        match self {
            Walker::El(s, _) => &s.x,
            Walker::Htvi(s) => &s.q,
            Walker::Rgd(x, _) => x,
        }
    }

    fn time(&self, h: f64) -> f64 {
        match self {
            Walker::El(s, _) => (s.k - 1) as f64 * h,
            Walker::Htvi(s) => s.t,
            Walker::Rgd(_, k) => *k as f64 * h,
        }
    }

    fn step(
        &mut self,
        problem: &Problem,
        manifold: &Manifold,
        params: &BregmanParams,
    ) -> Result<()> {
        match self {
            Walker::El(s, version) => {
                *s = el_step(s, problem, manifold, params, *version)?;
            }
            Walker::Htvi(s) => {
                *s = htvi_step(s, problem, manifold, params)?;
            }
            Walker::Rgd(x, k) => {
                *x = rgd_step(x, problem, manifold, params.h)?;
                *k += 1;
            }
        }
        Ok(())
    }
}

/// Initial state for [`run`]; build one from a bare point with
/// [`Init::at_rest`] or supply explicit integrator state.
#[derive(Debug, Clone)]
pub enum Init {
    Point(DenseMatrix),
    El(ElState),
    Htvi(HtviState),
}

impl Init {
    pub fn at_rest(x: DenseMatrix) -> Self {
        Init::Point(x)
    }
}

/// Drive one method until a stopping criterion fires, recording every
/// `record_every`-th iteration plus the final one.
///
/// Divergence terminates the run with a truncated trace rather than an
/// error. A step counts as diverged when it leaves the integrator's domain
/// of definition: a non-finite state, but also a geometric breakdown such
/// as an antipodal transport or a rank-deficient projection, which only
/// occur once the update magnitude has blown up. Configuration problems
/// are errors, and are all checked before the first step.
#[allow(clippy::too_many_arguments)]
pub fn run(
    method: Method,
    problem: &Problem,
    manifold: &Manifold,
    params: &BregmanParams,
    init: Init,
    stop: &StopCriteria,
    record_every: usize,
    f_star: Option<f64>,
) -> Result<RunResult> {
    if record_every == 0 {
        return Err(Error::ConfigInvalid("record_every must be >= 1".to_string()));
    }
    params.validate(method)?;
    let params = params.effective(method);
    if stop.f_tol.is_some() && f_star.is_none() {
        return Err(Error::ConfigInvalid(
            "f_tol stopping needs an oracle value".to_string(),
        ));
    }
    if manifold.point_shape() != problem.point_shape() {
        return Err(Error::ConfigInvalid(format!(
            "manifold shape {:?} does not match problem shape {:?}",
            manifold.point_shape(),
            problem.point_shape()
        )));
    }

    let mut walker = match (method, init) {
        (Method::ElI, Init::Point(x)) => Walker::El(ElState::at_rest(x), ElVersion::I),
        (Method::ElII, Init::Point(x)) => Walker::El(ElState::at_rest(x), ElVersion::II),
        (Method::ElI, Init::El(s)) => Walker::El(s, ElVersion::I),
        (Method::ElII, Init::El(s)) => Walker::El(s, ElVersion::II),
        (Method::HtviDirect | Method::HtviAdaptive, Init::Point(q)) => {
            Walker::Htvi(HtviState::at_rest(q, params.t0))
        }
        (Method::HtviDirect | Method::HtviAdaptive, Init::Htvi(s)) => Walker::Htvi(s),
        (Method::Rgd, Init::Point(x)) => Walker::Rgd(x, 0),
        (m, other) => {
            return Err(Error::ConfigInvalid(format!(
                "initial state {} does not fit method {m}",
                match other {
                    Init::Point(_) => "Point",
                    Init::El(_) => "El",
                    Init::Htvi(_) => "Htvi",
                }
            )));
        }
    };
    {
        let x0 = walker.point();
        if manifold.point_shape() != x0.shape() {
            return Err(Error::ConfigInvalid(format!(
                "initial point shape {:?} does not match manifold {:?}",
                x0.shape(),
                manifold.point_shape()
            )));
        }
        if manifold.constraint_violation(x0) > 1e-8 {
            return Err(Error::ConfigInvalid(
                "initial point is not on the manifold".to_string(),
            ));
        }
    }

    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut steps = 0usize;
    let record = |walker: &Walker, steps: usize, trace: &mut Vec<TraceRecord>| -> Result<()> {
        let x = walker.point();
        let f = problem.value(x)?;
        let grad_norm = problem.riemannian_grad(manifold, x)?.norm();
        trace.push(TraceRecord {
            k: steps,
            t: walker.time(params.h),
            f,
            error: f_star.map(|fs| f - fs),
            constraint_violation: manifold.constraint_violation(x),
            grad_norm,
        });
        Ok(())
    };

    let termination = loop {
        // Convergence checks look at the current state, so a run that starts
        // converged executes zero steps.
        let f = problem.value(walker.point())?;
        if let (Some(tol), Some(fs)) = (stop.f_tol, f_star) {
            if f - fs <= tol {
                break Termination::Converged;
            }
        }
        if let Some(gtol) = stop.grad_tol {
            let gn = problem.riemannian_grad(manifold, walker.point())?.norm();
            if gn <= gtol {
                break Termination::GradientConverged;
            }
        }
        if steps >= stop.max_iter {
            break Termination::MaxIterations;
        }
        match walker.step(problem, manifold, &params) {
            Ok(()) => {
                steps += 1;
                if steps.is_multiple_of(record_every) {
                    record(&walker, steps, &mut trace)?;
                }
            }
            // Every step error is state-driven at this point; config was
            // validated up front.
            Err(_) => break Termination::Diverged { at: steps + 1 },
        }
    };
    // The final state always makes it into the trace (when it is finite).
    if !matches!(termination, Termination::Diverged { .. })
        && steps > 0
        && trace.last().map(|r| r.k) != Some(steps)
    {
        record(&walker, steps, &mut trace)?;
    }
    Ok(RunResult {
        trace,
        termination,
        iterations: steps,
    })
}
