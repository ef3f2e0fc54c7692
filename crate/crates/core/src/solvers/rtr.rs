use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::{Gradient, Joint, Problem};
use super::tcg::{tcg_subproblem, TcgConfig, TcgResult};
use super::trace::{Event, SolveTrace, TerminalStatus, TraceRecord};
use super::SolveContext;
use crate::error::{Error, Result};
use crate::manifold::{ProductPoint, ProductTangent};
use crate::objective::Objective;

/// Trust-region parameters. `delta_bar = None` means `2√dim`; `eps_h = None`
/// disables the second-order stopping test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtrConfig {
    pub delta0: f64,
    pub delta_bar: Option<f64>,
    pub rho_prime: f64,
    pub eps_g: f64,
    pub eps_h: Option<f64>,
    pub max_iter: usize,
    /// Use `H_k = Id` in the model instead of the Hessian.
    pub first_order: bool,
    pub tcg: TcgConfig,
}

impl Default for RtrConfig {
    fn default() -> Self {
        Self {
            delta0: 1.0,
            delta_bar: None,
            rho_prime: 0.1,
            eps_g: 1e-6,
            eps_h: None,
            max_iter: 500,
            first_order: false,
            tcg: TcgConfig::default(),
        }
    }
}

impl RtrConfig {
    pub fn radius_cap(&self, dim: usize) -> f64 {
        self.delta_bar.unwrap_or(2.0 * (dim.max(1) as f64).sqrt())
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let cap = self.radius_cap(dim);
        if !(self.delta0 > 0.0 && self.delta0 < cap) {
            return Err(Error::Parameter(format!(
                "need 0 < delta0 < delta_bar, got {} and {cap}",
                self.delta0
            )));
        }
        if !(self.rho_prime > 0.0 && self.rho_prime < 0.25) {
            return Err(Error::Parameter(format!(
                "need 0 < rho_prime < 1/4, got {}",
                self.rho_prime
            )));
        }
        if !(self.eps_g > 0.0) || self.eps_h.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::Parameter("tolerances must be > 0".into()));
        }
        Ok(())
    }
}

/// Riemannian trust-region on the joint `(X, U)` problem.
pub fn rtr_solve(
    obj: &Objective,
    z0: ProductPoint,
    cfg: &RtrConfig,
    ctx: &SolveContext,
) -> Result<(ProductPoint, SolveTrace)> {
    let mut trace = SolveTrace::new();
    let z = rtr_loop(&Joint(obj), obj, z0, cfg, ctx, &mut trace)?;
    Ok((z, trace))
}

pub(crate) fn record(
    obj: &Objective,
    ctx: &SolveContext,
    z: &ProductPoint,
    k: usize,
    f: f64,
    g: &ProductTangent,
    event: Event,
) -> Result<TraceRecord> {
    Ok(TraceRecord {
        k,
        f,
        gnorm_x: g.dx.norm(),
        gnorm_u: g.du.norm(),
        step: None,
        delta: None,
        rho: None,
        svd_mode: None,
        inner_iters: 0,
        rmse: ctx.truth.map(|m| crate::synth::rmse(&z.x, m)),
        decrease: 0.0,
        feasibility: obj.measurement().residual(&z.x)?.norm(),
        event,
    })
}

/// Algorithm loop shared by the joint solver and the inner `X` solves of the
/// second-order alternation. Rows are appended to `trace`, numbered after
/// its last row; the status is written on exit.
pub(crate) fn rtr_loop<P: Problem>(
    problem: &P,
    obj: &Objective,
    z0: ProductPoint,
    cfg: &RtrConfig,
    ctx: &SolveContext,
    trace: &mut SolveTrace,
) -> Result<ProductPoint> {
    let dim = problem.dimension();
    cfg.validate(dim)?;
    let delta_bar = cfg.radius_cap(dim);
    let k0 = trace.last().map(|r| r.k).unwrap_or(0);
    let mut z = z0;
    let mut f = problem.cost(&z)?;
    if !f.is_finite() {
        return Err(Error::Numerical(format!("non-finite initial cost {f}")));
    }
    let mut g = problem.gradient(&z)?;
    let mut delta = cfg.delta0;
    if trace.records.is_empty() {
        let mut rec = record(obj, ctx, &z, 0, f, &g.riem, Event::Init)?;
        rec.delta = Some(delta);
        trace.push(rec);
    }
    for it in 1..=cfg.max_iter {
        let gnorm = g.riem.norm();
        let sub = if gnorm > cfg.eps_g {
            solve_model(problem, &z, &g, delta, cfg)?
        } else if let Some(eps_h) = cfg.eps_h {
            let (lambda, v) = lanczos_min(problem, &z, &g, 40)?;
            if lambda >= -eps_h {
                trace.status = TerminalStatus::GradTol;
                return Ok(z);
            }
            eigen_step(problem, &z, &g, v, delta, cfg)?
        } else {
            trace.status = TerminalStatus::GradTol;
            return Ok(z);
        };
        let z_plus = problem.retract(&z, &sub.eta)?;
        let f_plus = problem.cost(&z_plus)?;
        if !f_plus.is_finite() {
            return Err(Error::Numerical(format!("non-finite cost {f_plus} at iteration {it}")));
        }
        let actual = problem.decrease(&z, &z_plus)?;
        let model = sub.model_decrease(&g.riem);
        let rho = if model <= 1e-15 * (1.0 + f.abs()) {
            if actual >= 0.0 {
                1.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            actual / model
        };
        let step_norm = sub.eta.norm();
        let used_delta = delta;
        if rho < 0.25 {
            delta /= 4.0;
        } else if rho > 0.75 && sub.hit_boundary() {
            delta = (2.0 * delta).min(delta_bar);
        }
        let accepted = rho > cfg.rho_prime;
        if accepted {
            z = z_plus;
            f = f_plus;
            g = problem.gradient(&z)?;
        }
        let event = if accepted { Event::Accepted } else { Event::Rejected };
        let mut rec = record(obj, ctx, &z, k0 + it, f, &g.riem, event)?;
        rec.step = Some(step_norm);
        rec.delta = Some(used_delta);
        rec.rho = Some(rho);
        rec.inner_iters = sub.inner;
        rec.decrease = if accepted { actual } else { 0.0 };
        trace.push(rec);
        if delta <= 1e-14 * delta_bar {
            trace.status = TerminalStatus::Stalled;
            return Ok(z);
        }
    }
    trace.status = if g.riem.norm() <= cfg.eps_g {
        TerminalStatus::GradTol
    } else {
        TerminalStatus::MaxIter
    };
    Ok(z)
}

fn solve_model<P: Problem>(
    problem: &P,
    z: &ProductPoint,
    g: &Gradient,
    delta: f64,
    cfg: &RtrConfig,
) -> Result<TcgResult> {
    if cfg.first_order {
        tcg_subproblem(&g.riem, |v: &ProductTangent| Ok(v.clone()), delta, &cfg.tcg)
    } else {
        tcg_subproblem(&g.riem, |v: &ProductTangent| problem.hess(z, g, v), delta, &cfg.tcg)
    }
}

/// Step of length `Δ` along the most negative curvature direction, oriented
/// downhill.
fn eigen_step<P: Problem>(
    problem: &P,
    z: &ProductPoint,
    g: &Gradient,
    v: ProductTangent,
    delta: f64,
    cfg: &RtrConfig,
) -> Result<TcgResult> {
    let sign = if g.riem.inner(&v) > 0.0 { -1.0 } else { 1.0 };
    let eta = v.scale(sign * delta / v.norm());
    let h_eta = if cfg.first_order {
        eta.clone()
    } else {
        problem.hess(z, g, &eta)?
    };
    Ok(TcgResult {
        eta,
        h_eta,
        inner: 0,
        exit: super::tcg::TcgExit::NegativeCurvature,
        min_curvature: f64::NAN,
    })
}

/// Smallest eigenvalue of the Hessian on the tangent space by Lanczos with
/// full reorthogonalisation, started from a fixed tangent direction.
pub(crate) fn lanczos_min<P: Problem>(
    problem: &P,
    z: &ProductPoint,
    g: &Gradient,
    max_steps: usize,
) -> Result<(f64, ProductTangent)> {
    let (n, s) = z.x.shape();
    let (p, r) = z.u.basis().shape();
    let start = problem.project(
        z,
        &DMatrix::from_fn(n, s, |i, j| 1.0 + ((i * 7 + j * 3) % 5) as f64),
        &DMatrix::from_fn(p, r, |i, j| 1.0 + ((i * 5 + j * 11) % 7) as f64),
    )?;
    let nrm = start.norm();
    if nrm == 0.0 {
        return Ok((0.0, start));
    }
    let steps = max_steps.min(problem.dimension()).max(1);
    let mut basis = vec![start.scale(1.0 / nrm)];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for j in 0..steps {
        let mut w = problem.hess(z, g, &basis[j])?;
        let a = w.inner(&basis[j]);
        alphas.push(a);
        for q in &basis {
            let c = w.inner(q);
            w.axpy(-c, q);
        }
        let b = w.norm();
        if j + 1 == steps || b <= 1e-12 * a.abs().max(1.0) {
            break;
        }
        betas.push(b);
        basis.push(w.scale(1.0 / b));
    }
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j || j + 1 == i {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = t.symmetric_eigen();
    let (imin, lambda) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let y: DVector<f64> = eig.eigenvectors.column(imin).into_owned();
    let mut v = basis[0].scale(0.0);
    for (q, c) in basis.iter().zip(y.iter()) {
        v.axpy(*c, q);
    }
    Ok((lambda, v))
}
