use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::ProductTangent;

/// Truncated-CG stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcgConfig {
    pub max_inner: usize,
    pub kappa: f64,
    pub theta: f64,
}

impl Default for TcgConfig {
    fn default() -> Self {
        Self {
            max_inner: 1000,
            kappa: 0.1,
            theta: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcgExit {
    /// Residual below `‖g‖ · min(κ, ‖g‖^θ)`.
    Converged,
    /// Step reached the trust-region boundary.
    Boundary,
    /// Direction of non-positive curvature, followed to the boundary.
    NegativeCurvature,
    MaxInner,
}

#[derive(Debug, Clone)]
pub struct TcgResult {
    pub eta: ProductTangent,
    /// `H η`, kept for the model value.
    pub h_eta: ProductTangent,
    pub inner: usize,
    pub exit: TcgExit,
    /// Smallest Rayleigh quotient `⟨p, Hp⟩/⟨p, p⟩` met along CG directions.
    pub min_curvature: f64,
}

impl TcgResult {
    /// `m(0) − m(η) = −⟨g, η⟩ − ½⟨η, Hη⟩`.
    pub fn model_decrease(&self, grad: &ProductTangent) -> f64 {
        -grad.inner(&self.eta) - 0.5 * self.eta.inner(&self.h_eta)
    }

    pub fn hit_boundary(&self) -> bool {
        matches!(self.exit, TcgExit::Boundary | TcgExit::NegativeCurvature)
    }
}

/// Positive root `τ` of `‖η + τ p‖ = Δ`.
fn to_boundary(eta: &ProductTangent, p: &ProductTangent, delta: f64) -> f64 {
    let pp = p.inner(p);
    let ep = eta.inner(p);
    let ee = eta.inner(eta);
    let disc = (ep * ep + pp * (delta * delta - ee)).max(0.0);
    (-ep + disc.sqrt()) / pp
}

/// Steihaug–Toint truncated conjugate gradients for
/// `min ⟨g, η⟩ + ½⟨η, Hη⟩` subject to `‖η‖ ≤ Δ`, started at `η = 0`.
pub fn tcg_subproblem<H>(grad: &ProductTangent, mut hess: H, delta: f64, cfg: &TcgConfig) -> Result<TcgResult>
where
    H: FnMut(&ProductTangent) -> Result<ProductTangent>,
{
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!(
            "trust-region radius must be > 0, got {delta}"
        )));
    }
    let mut eta = grad.scale(0.0);
    let mut h_eta = eta.clone();
    let mut r = grad.clone();
    let mut rr = r.inner(&r);
    let gnorm = rr.sqrt();
    let stop = gnorm * cfg.kappa.min(gnorm.powf(cfg.theta));
    let mut p = r.scale(-1.0);
    let mut min_curvature = f64::INFINITY;
    if gnorm == 0.0 {
        return Ok(TcgResult {
            eta,
            h_eta,
            inner: 0,
            exit: TcgExit::Converged,
            min_curvature,
        });
    }
    for j in 0..cfg.max_inner {
        let hp = hess(&p)?;
        let curv = p.inner(&hp);
        if !curv.is_finite() {
            return Err(Error::Numerical("non-finite curvature in truncated CG".into()));
        }
        min_curvature = min_curvature.min(curv / p.inner(&p));
        let alpha = rr / curv;
        let trial = eta.add_scaled(alpha, &p);
        if curv <= 0.0 || trial.norm() >= delta {
            let tau = to_boundary(&eta, &p, delta);
            eta.axpy(tau, &p);
            h_eta.axpy(tau, &hp);
            let exit = if curv <= 0.0 {
                TcgExit::NegativeCurvature
            } else {
                TcgExit::Boundary
            };
            return Ok(TcgResult {
                eta,
                h_eta,
                inner: j + 1,
                exit,
                min_curvature,
            });
        }
        eta = trial;
        h_eta.axpy(alpha, &hp);
        r.axpy(alpha, &hp);
        let rr_new = r.inner(&r);
        if rr_new.sqrt() <= stop {
            return Ok(TcgResult {
                eta,
                h_eta,
                inner: j + 1,
                exit: TcgExit::Converged,
                min_curvature,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        p = r.scale(-1.0).add_scaled(beta, &p);
    }
    Ok(TcgResult {
        eta,
        h_eta,
        inner: cfg.max_inner,
        exit: TcgExit::MaxInner,
        min_curvature,
    })
}
