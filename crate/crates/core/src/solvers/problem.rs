use nalgebra::DMatrix;

use crate::error::Result;
use crate::manifold::{ProductPoint, ProductTangent};
use crate::objective::{EuclideanGrad, Objective};

/// Riemannian gradient together with the Euclidean one it was projected
/// from (the Hessian needs the latter for the curvature term).
#[derive(Debug, Clone)]
pub struct Gradient {
    pub riem: ProductTangent,
    pub euclid: EuclideanGrad,
}

/// What the trust-region loop needs from a cost on the product manifold.
pub trait Problem {
    fn cost(&self, z: &ProductPoint) -> Result<f64>;
    /// `f(z0) − f(z1)`.
    fn decrease(&self, z0: &ProductPoint, z1: &ProductPoint) -> Result<f64>;
    fn gradient(&self, z: &ProductPoint) -> Result<Gradient>;
    fn hess(&self, z: &ProductPoint, g: &Gradient, xi: &ProductTangent) -> Result<ProductTangent>;
    fn retract(&self, z: &ProductPoint, xi: &ProductTangent) -> Result<ProductPoint>;
    fn dimension(&self) -> usize;
    /// Projection of an ambient pair onto the tangent space at `z`.
    fn project(&self, z: &ProductPoint, dx: &DMatrix<f64>, du: &DMatrix<f64>) -> Result<ProductTangent>;
}

/// Joint problem in `(X, U)`.
#[derive(Debug, Clone, Copy)]
pub struct Joint<'a>(pub &'a Objective);

/// Problem in `X` alone with `U` held fixed.
#[derive(Debug, Clone, Copy)]
pub struct FrozenU<'a>(pub &'a Objective);

impl Problem for Joint<'_> {
    fn cost(&self, z: &ProductPoint) -> Result<f64> {
        self.0.cost(z)
    }

    fn decrease(&self, z0: &ProductPoint, z1: &ProductPoint) -> Result<f64> {
        self.0.decrease(z0, z1)
    }

    fn gradient(&self, z: &ProductPoint) -> Result<Gradient> {
        let euclid = self.0.egrad(z)?;
        let riem = self.0.manifold().project(z, &euclid.x, &euclid.u)?;
        Ok(Gradient { riem, euclid })
    }

    fn hess(&self, z: &ProductPoint, g: &Gradient, xi: &ProductTangent) -> Result<ProductTangent> {
        self.0.rhess_with(z, &g.euclid, xi)
    }

    fn retract(&self, z: &ProductPoint, xi: &ProductTangent) -> Result<ProductPoint> {
        self.0.retract(z, xi)
    }

    fn dimension(&self) -> usize {
        self.0.manifold().dimension()
    }

    fn project(&self, z: &ProductPoint, dx: &DMatrix<f64>, du: &DMatrix<f64>) -> Result<ProductTangent> {
        self.0.manifold().project(z, dx, du)
    }
}

impl Problem for FrozenU<'_> {
    fn cost(&self, z: &ProductPoint) -> Result<f64> {
        self.0.cost(z)
    }

    fn decrease(&self, z0: &ProductPoint, z1: &ProductPoint) -> Result<f64> {
        self.0.decrease(z0, z1)
    }

    fn gradient(&self, z: &ProductPoint) -> Result<Gradient> {
        let euclid = self.0.egrad(z)?;
        let riem = ProductTangent {
            dx: self.0.manifold().x_factor.project(&euclid.x)?,
            du: DMatrix::zeros(z.u.ambient(), z.u.rank()),
        };
        Ok(Gradient { riem, euclid })
    }

    fn hess(&self, z: &ProductPoint, _g: &Gradient, xi: &ProductTangent) -> Result<ProductTangent> {
        let zero_u = DMatrix::zeros(z.u.ambient(), z.u.rank());
        let (hx, _) = self.0.ehess(z, &xi.dx, &zero_u)?;
        Ok(ProductTangent {
            dx: self.0.manifold().x_factor.project(&hx)?,
            du: zero_u,
        })
    }

    fn retract(&self, z: &ProductPoint, xi: &ProductTangent) -> Result<ProductPoint> {
        Ok(ProductPoint {
            x: &z.x + &xi.dx,
            u: z.u.clone(),
        })
    }

    fn dimension(&self) -> usize {
        let m = self.0.manifold();
        m.dimension() - m.r * (m.p - m.r)
    }

    fn project(&self, z: &ProductPoint, dx: &DMatrix<f64>, _du: &DMatrix<f64>) -> Result<ProductTangent> {
        Ok(ProductTangent {
            dx: self.0.manifold().x_factor.project(dx)?,
            du: DMatrix::zeros(z.u.ambient(), z.u.rank()),
        })
    }
}
