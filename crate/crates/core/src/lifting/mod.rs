//! Feature maps and kernels, with the derivatives the solvers need.

mod gaussian;
mod monomial;

use std::fmt::Debug;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gaussian::{gaussian_grad_x, gaussian_kernel, GaussianKernel};
pub use monomial::{
    count_monomials, monomial_features, monomial_grad_x, monomial_hess, monomial_kernel, FeatureGramKernel,
    MonomialFeatureMap, MonomialKernel, MultiIndexTable, DEFAULT_FEATURE_CAP,
};

/// A kernel `K(X, X) = Φ(X)ᵀΦ(X)` with the derivative information needed to
/// optimise `trace(P K(X, X))` over `X` for a fixed symmetric weight `P`.
pub trait Kernel: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// `K(X, X)`.
    fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64>;

    /// Euclidean gradient in `X` of `trace(P K(X, X))`, `P` symmetric.
    fn weighted_grad(&self, x: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64>;

    /// Directional derivative `DK(X)[ΔX]`.
    fn gram_derivative(&self, x: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64>;

    /// Derivative of [`weighted_grad`](Kernel::weighted_grad) along `ΔX` with `P` fixed.
    fn weighted_hess(&self, x: &DMatrix<f64>, p: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64>;

    /// `K(X + D) − K(X)`. Implementations should avoid forming the two Gram
    /// matrices separately, whose difference loses `ε·‖K‖` to cancellation.
    fn gram_increment(&self, x: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
        self.gram(&(x + d)) - self.gram(x)
    }
}

/// Which lifting to apply to the columns of the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiftingSpec {
    MonomialFeatures {
        d: usize,
    },
    MonomialKernel {
        d: usize,
        #[serde(default = "default_offset")]
        c: f64,
    },
    GaussianKernel {
        sigma: f64,
    },
}

fn default_offset() -> f64 {
    1.0
}

impl LiftingSpec {
    /// Validates parameters against the ambient dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            LiftingSpec::MonomialFeatures { d } => {
                if d < 1 {
                    return Err(Error::Parameter("monomial features need d >= 1".into()));
                }
                count_monomials(n, d).map(|_| ())
            }
            LiftingSpec::MonomialKernel { d, c } => {
                if d < 1 || !c.is_finite() {
                    return Err(Error::Parameter(format!("bad monomial kernel d = {d}, c = {c}")));
                }
                Ok(())
            }
            LiftingSpec::GaussianKernel { sigma } => GaussianKernel::new(sigma).map(|_| ()),
        }
    }

    pub fn is_kernel(&self) -> bool {
        !matches!(self, LiftingSpec::MonomialFeatures { .. })
    }

    /// Kernel implementation for kernel liftings.
    pub fn kernel(&self) -> Result<Box<dyn Kernel>> {
        match *self {
            LiftingSpec::MonomialKernel { d, c } => Ok(Box::new(MonomialKernel::new(d, c)?)),
            LiftingSpec::GaussianKernel { sigma } => Ok(Box::new(GaussianKernel::new(sigma)?)),
            LiftingSpec::MonomialFeatures { .. } => {
                Err(Error::FormMismatch("monomial features have no kernel form here".into()))
            }
        }
    }

    /// Lifted Gram matrix `K(X, X)` (for features, `Φ(X)ᵀΦ(X)`).
    pub fn gram(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match *self {
            LiftingSpec::MonomialFeatures { d } => {
                let phi = monomial_features(x, d)?;
                Ok(phi.tr_mul(&phi))
            }
            _ => Ok(self.kernel()?.gram(x)),
        }
    }
}

/// `∇_W trace(P_{W⊥} K) = −2 K W`.
pub fn lift_grad_w(k: &DMatrix<f64>, w: &crate::manifold::GrassmannPoint) -> Result<DMatrix<f64>> {
    crate::error::check_shape("lift_grad_w", k, (w.ambient(), w.ambient()))?;
    Ok(k * w.basis() * -2.0)
}

/// Euclidean Hessian-vector product of `f(X, W) = trace((I − WWᵀ) K(X, X))`
/// along `(ΔX, ΔW)`, returned as `(X block, W block)`.
pub(crate) fn kernel_trace_hess(
    kernel: &dyn Kernel,
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    dx: &DMatrix<f64>,
    dw: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let s = x.ncols();
    let p_perp = DMatrix::identity(s, s) - w * w.transpose();
    // Moving W changes P_{W⊥} by −(W ΔWᵀ + ΔW Wᵀ).
    let dp = -(w * dw.transpose() + dw * w.transpose());
    let hx = kernel.weighted_hess(x, &p_perp, dx) + kernel.weighted_grad(x, &dp);
    let k = kernel.gram(x);
    let dk = kernel.gram_derivative(x, dx);
    let hw = (dk * w + k * dw) * -2.0;
    (hx, hw)
}
