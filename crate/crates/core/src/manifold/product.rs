use std::sync::Arc;

use nalgebra::DMatrix;

use super::grassmann::{grass_project, grass_retract, GrassmannPoint, GrassmannTangent};
use super::measurement::MeasurementSubspace;
use crate::error::{check_shape, Error, Result};

/// Iterate `z = (X, U)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub x: DMatrix<f64>,
    pub u: GrassmannPoint,
}

/// Tangent vector `(ΔX, ΔU)` at a [`ProductPoint`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTangent {
    pub dx: DMatrix<f64>,
    pub du: DMatrix<f64>,
}

impl ProductTangent {
    pub fn zeros_like(z: &ProductPoint) -> Self {
        Self {
            dx: DMatrix::zeros(z.x.nrows(), z.x.ncols()),
            du: DMatrix::zeros(z.u.ambient(), z.u.rank()),
        }
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.dx.dot(&other.dx) + self.du.dot(&other.du)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            dx: &self.dx * a,
            du: &self.du * a,
        }
    }

    /// `self + a · other`.
    pub fn add_scaled(&self, a: f64, other: &Self) -> Self {
        Self {
            dx: &self.dx + &other.dx * a,
            du: &self.du + &other.du * a,
        }
    }

    /// In-place `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.dx += &other.dx * a;
        self.du += &other.du * a;
    }

    pub fn is_finite(&self) -> bool {
        self.dx.iter().chain(self.du.iter()).all(|v| v.is_finite())
    }
}

/// Geometry of the `X` factor: the affine measurement set (constrained
/// recovery) or all of `R^{n×s}` (penalised recovery).
#[derive(Debug, Clone)]
pub enum XFactor {
    Affine(Arc<MeasurementSubspace>),
    Free { n: usize, s: usize },
}

impl XFactor {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            XFactor::Affine(l) => (l.n(), l.s()),
            XFactor::Free { n, s } => (*n, *s),
        }
    }

    pub fn project(&self, delta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            XFactor::Affine(l) => Ok(l.project(delta)?.0),
            XFactor::Free { .. } => {
                check_shape("free project", delta, self.shape())?;
                Ok(delta.clone())
            }
        }
    }
}

/// `L_{A,b} × Grass(p, r)` (or `R^{n×s} × Grass(p, r)`), combined componentwise.
#[derive(Debug, Clone)]
pub struct ProductManifold {
    pub x_factor: XFactor,
    pub p: usize,
    pub r: usize,
}

impl ProductManifold {
    pub fn new(x_factor: XFactor, p: usize, r: usize) -> Self {
        Self { x_factor, p, r }
    }

    fn check_point(&self, z: &ProductPoint) -> Result<()> {
        check_shape("product point X", &z.x, self.x_factor.shape())?;
        check_shape("product point U", z.u.basis(), (self.p, self.r))
    }

    fn check_tangent(&self, z: &ProductPoint, xi: &ProductTangent) -> Result<()> {
        if xi.dx.shape() != z.x.shape() || xi.du.shape() != z.u.basis().shape() {
            return Err(Error::Dimension {
                context: "tangent anchor",
                expected: format!("{:?}/{:?}", z.x.shape(), z.u.basis().shape()),
                got: format!("{:?}/{:?}", xi.dx.shape(), xi.du.shape()),
            });
        }
        Ok(())
    }

    /// Componentwise orthogonal projection of an ambient vector onto `T_z M`.
    pub fn project(&self, z: &ProductPoint, dx: &DMatrix<f64>, du: &DMatrix<f64>) -> Result<ProductTangent> {
        self.check_point(z)?;
        Ok(ProductTangent {
            dx: self.x_factor.project(dx)?,
            du: grass_project(&z.u, du)?.0,
        })
    }

    /// `(X + ΔX, qf(U + ΔU))`.
    pub fn retract(&self, z: &ProductPoint, xi: &ProductTangent) -> Result<ProductPoint> {
        self.check_point(z)?;
        self.check_tangent(z, xi)?;
        let u = if xi.du.iter().all(|&v| v == 0.0) {
            z.u.clone()
        } else {
            grass_retract(&z.u, &GrassmannTangent(xi.du.clone()))?
        };
        Ok(ProductPoint { x: &z.x + &xi.dx, u })
    }

    pub fn inner(&self, z: &ProductPoint, xi: &ProductTangent, zeta: &ProductTangent) -> Result<f64> {
        self.check_tangent(z, xi)?;
        self.check_tangent(z, zeta)?;
        Ok(xi.inner(zeta))
    }

    pub fn norm(&self, z: &ProductPoint, xi: &ProductTangent) -> Result<f64> {
        self.check_tangent(z, xi)?;
        Ok(xi.norm())
    }

    /// Dimension of the manifold (used for default trust-region radii).
    pub fn dimension(&self) -> usize {
        let (n, s) = self.x_factor.shape();
        let x_dim = match &self.x_factor {
            XFactor::Affine(l) => (n * s).saturating_sub(l.m()),
            XFactor::Free { .. } => n * s,
        };
        x_dim + self.r * (self.p - self.r)
    }
}
