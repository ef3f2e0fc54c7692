use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::armijo::{armijo_decrease, ArmijoConfig};
use super::problem::FrozenU;
use super::rtr::{record, rtr_loop, RtrConfig};
use super::svd::{singular_gap, subspace_by_mode, svd_policy, SvdMode, SvdPolicy};
use super::trace::{Event, SolveTrace, TerminalStatus, TraceRecord};
use super::SolveContext;
use crate::error::{Error, Result};
use crate::manifold::{grass_distance, grass_project, ProductPoint, ProductTangent};
use crate::objective::Objective;

/// Inner tolerance `ε_{x,k}`: fixed, or `max(ε_x, θ ‖grad_X f(X_k, U_k)‖)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Greedy,
    Adaptive { theta: f64 },
}

impl Schedule {
    pub fn tolerance(&self, eps_x: f64, gnorm_x: f64) -> f64 {
        match *self {
            Schedule::Greedy => eps_x,
            Schedule::Adaptive { theta } => eps_x.max(theta * gnorm_x),
        }
    }
}

/// How the `X` subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    GradientDescent,
    TrustRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AltminConfig {
    pub eps_x: f64,
    pub eps_u: f64,
    pub schedule: Schedule,
    pub armijo: ArmijoConfig,
    pub svd_policy: SvdPolicy,
    pub max_outer: usize,
    pub max_inner: usize,
    pub inner: InnerMethod,
    /// Trust-region settings for [`InnerMethod::TrustRegion`]; its `eps_g`
    /// and `max_iter` are replaced by `ε_{x,k}` and `max_inner`.
    pub inner_rtr: RtrConfig,
    /// Bypass the policy and always use this factorisation.
    pub force_svd: Option<SvdMode>,
}

impl Default for AltminConfig {
    fn default() -> Self {
        Self {
            eps_x: 1e-6,
            eps_u: 1e-6,
            schedule: Schedule::Adaptive { theta: 0.5 },
            armijo: ArmijoConfig::default(),
            svd_policy: SvdPolicy::default(),
            max_outer: 500,
            max_inner: 100,
            inner: InnerMethod::GradientDescent,
            inner_rtr: RtrConfig::default(),
            force_svd: None,
        }
    }
}

impl AltminConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_x > 0.0) || !(self.eps_u >= 0.0) {
            return Err(Error::Parameter("need eps_x > 0 and eps_u >= 0".into()));
        }
        if let Schedule::Adaptive { theta } = self.schedule {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(Error::Parameter(format!("theta must lie in (0, 1), got {theta}")));
            }
        }
        self.armijo.validate()?;
        self.svd_policy.validate()
    }
}

/// Cost and gradient blocks at the current iterate.
pub(crate) struct State {
    pub z: ProductPoint,
    pub f: f64,
    pub g: ProductTangent,
}

impl State {
    pub fn new(obj: &Objective, z: ProductPoint) -> Result<Self> {
        let (f, g) = obj.cost_grad(&z)?;
        if !f.is_finite() {
            return Err(Error::Numerical(format!("non-finite cost {f}")));
        }
        Ok(Self { z, f, g })
    }
}

/// One Armijo step along `−grad_X f`, appended to the trace. `None` when no
/// step length gives sufficient decrease, which happens once the cost
/// differences reach rounding level.
pub(crate) fn armijo_x_step(
    obj: &Objective,
    ctx: &SolveContext,
    state: &State,
    cfg: &ArmijoConfig,
    inner_iters: usize,
    trace: &mut SolveTrace,
) -> Result<Option<State>> {
    let d = state.g.dx.scale(-1.0);
    let g_dot_d = -state.g.dx.norm_squared();
    let shifted = |a: f64| ProductPoint {
        x: &state.z.x + &d * a,
        u: state.z.u.clone(),
    };
    let step = match armijo_decrease(|a| obj.decrease(&state.z, &shifted(a)), g_dot_d, cfg) {
        Ok(step) => step,
        Err(Error::LineSearchFailure(tries)) => {
            log::debug!(
                "line search failed after {tries} tries at gnorm_x {:e}",
                state.g.dx.norm()
            );
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    let next = State::new(obj, shifted(step.alpha))?;
    let k = trace.iterations() + 1;
    let mut rec = record(obj, ctx, &next.z, k, next.f, &next.g, Event::Armijo)?;
    rec.step = Some(step.alpha);
    rec.inner_iters = inner_iters;
    rec.decrease = step.decrease;
    trace.push(rec);
    Ok(Some(next))
}

/// Replaces `U` by the leading-`r` subspace of the lifted matrix. A randomised
/// result that would increase the cost is discarded for the exact one.
pub(crate) fn svd_update(
    obj: &Objective,
    ctx: &SolveContext,
    state: State,
    mode: SvdMode,
    policy: &SvdPolicy,
    rng: &mut ChaCha8Rng,
    trace: &mut SolveTrace,
) -> Result<State> {
    let lifted = obj.lifted(&state.z.x)?;
    let r = obj.rank();
    let mut mode = mode;
    let mut u = subspace_by_mode(&lifted, r, mode, policy, rng)?;
    let mut cand = ProductPoint {
        x: state.z.x.clone(),
        u,
    };
    let mut dec = obj.decrease(&state.z, &cand)?;
    if dec < 0.0 && mode != SvdMode::Exact {
        mode = SvdMode::Exact;
        u = subspace_by_mode(&lifted, r, mode, policy, rng)?;
        cand = ProductPoint {
            x: state.z.x.clone(),
            u,
        };
        dec = obj.decrease(&state.z, &cand)?;
    }
    if mode == SvdMode::Exact && singular_gap(&lifted, r) <= 1e-12 {
        trace.svd_ties += 1;
    }
    let moved = grass_distance(&state.z.u, &cand.u)?;
    let next = State::new(obj, cand)?;
    let k = trace.iterations() + 1;
    let mut rec = record(obj, ctx, &next.z, k, next.f, &next.g, Event::SvdUpdate)?;
    rec.svd_mode = Some(mode);
    rec.step = Some(moved);
    rec.decrease = dec;
    trace.push(rec);
    Ok(next)
}

/// Alternating minimisation: inner descent in `X` to `ε_{x,k}`, then a
/// (possibly randomised) truncated SVD for `U` unless `‖grad_U‖ ≤ ε_u`.
pub fn altmin_solve(
    obj: &Objective,
    z0: ProductPoint,
    cfg: &AltminConfig,
    ctx: &SolveContext,
) -> Result<(ProductPoint, SolveTrace)> {
    cfg.validate()?;
    if obj.penalty().is_some() {
        return Err(Error::FormMismatch(
            "alternating minimisation runs on the constrained formulation".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let scale = obj.gram(&z0.x)?.trace().abs().max(f64::MIN_POSITIVE);
    let mut trace = SolveTrace::new();
    let mut state = State::new(obj, z0)?;
    trace.push(record(obj, ctx, &state.z, 0, state.f, &state.g, Event::Init)?);
    for _ in 0..cfg.max_outer {
        let gx = state.g.dx.norm();
        if gx <= cfg.eps_x && state.g.du.norm() <= cfg.eps_u {
            trace.status = TerminalStatus::GradTol;
            return Ok((state.z, trace));
        }
        let eps_xk = cfg.schedule.tolerance(cfg.eps_x, gx);
        state = match cfg.inner {
            InnerMethod::GradientDescent => {
                let mut i = 0;
                while state.g.dx.norm() > eps_xk && i < cfg.max_inner {
                    i += 1;
                    match armijo_x_step(obj, ctx, &state, &cfg.armijo, i, &mut trace)? {
                        Some(next) => state = next,
                        None => {
                            trace.status = TerminalStatus::Stalled;
                            return Ok((state.z, trace));
                        }
                    }
                }
                state
            }
            InnerMethod::TrustRegion => inner_trust_region(obj, ctx, state, eps_xk, cfg, &mut trace)?,
        };
        // The U-gradient here is taken at the new X with the old U.
        if state.g.du.norm() <= cfg.eps_u {
            let k = trace.iterations() + 1;
            trace.push(record(obj, ctx, &state.z, k, state.f, &state.g, Event::SvdSkipped)?);
        } else {
            let mode = cfg
                .force_svd
                .unwrap_or_else(|| svd_policy(state.f / scale, cfg.svd_policy.tau1, cfg.svd_policy.tau2));
            state = svd_update(obj, ctx, state, mode, &cfg.svd_policy, &mut rng, &mut trace)?;
        }
    }
    trace.status = if state.g.dx.norm() <= cfg.eps_x && state.g.du.norm() <= cfg.eps_u {
        TerminalStatus::GradTol
    } else {
        TerminalStatus::MaxIter
    };
    Ok((state.z, trace))
}

fn inner_trust_region(
    obj: &Objective,
    ctx: &SolveContext,
    state: State,
    eps_xk: f64,
    cfg: &AltminConfig,
    trace: &mut SolveTrace,
) -> Result<State> {
    if state.g.dx.norm() <= eps_xk {
        return Ok(state);
    }
    let inner_cfg = RtrConfig {
        eps_g: eps_xk,
        max_iter: cfg.max_inner,
        ..cfg.inner_rtr
    };
    let mut scratch = SolveTrace::new();
    let z1 = rtr_loop(&FrozenU(obj), obj, state.z.clone(), &inner_cfg, ctx, &mut scratch)?;
    let dec = obj.decrease(&state.z, &z1)?;
    let moved = (&z1.x - &state.z.x).norm();
    let next = State::new(obj, z1)?;
    let k = trace.iterations() + 1;
    let mut rec: TraceRecord = record(obj, ctx, &next.z, k, next.f, &next.g, Event::InnerSolve)?;
    rec.step = Some(moved);
    rec.inner_iters = scratch.iterations();
    rec.decrease = dec;
    trace.push(rec);
    Ok(next)
}

/// `grad_U f` at `(X, U)` without the `X` block, for callers that only need
/// the skip test.
pub fn grad_u_norm(obj: &Objective, z: &ProductPoint) -> Result<f64> {
    let g = obj.egrad(z)?;
    Ok(grass_project(&z.u, &g.u)?.0.norm())
}
