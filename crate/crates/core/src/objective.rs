//! Cost functions on `L_{A,b} × Grass(p, r)`: the feature form
//! `‖Φ(X) − UUᵀΦ(X)‖²`, the kernel trace form `trace(K) − trace(WᵀKW)` and
//! the penalised variant `f + λ‖A(X) − b‖²`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lifting::{lift_grad_w, Kernel, LiftingSpec, MonomialFeatureMap};
use crate::linalg::gaussian_matrix;
use crate::manifold::{grass_project, MeasurementSubspace, ProductManifold, ProductPoint, ProductTangent, XFactor};

/// How the lifted residual is evaluated.
#[derive(Debug)]
pub enum CostForm {
    /// Explicit features, Grassmann ambient dimension `N(n, d)`.
    Feature(MonomialFeatureMap),
    /// Kernel trick, Grassmann ambient dimension `s`.
    KernelTrace(Arc<dyn Kernel>),
}

/// Euclidean gradient blocks at a point.
#[derive(Debug, Clone)]
pub struct EuclideanGrad {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

#[derive(Debug)]
pub struct Objective {
    lifting: Option<LiftingSpec>,
    form: CostForm,
    rank: usize,
    measurement: Arc<MeasurementSubspace>,
    penalty: Option<f64>,
    manifold: ProductManifold,
}

impl Objective {
    /// Constrained objective: `X` ranges over `{A(X) = b}`. Monomial features
    /// use the feature form, kernels the trace form.
    pub fn new(lifting: LiftingSpec, rank: usize, measurement: Arc<MeasurementSubspace>) -> Result<Self> {
        Self::build(lifting, rank, measurement, None)
    }

    /// Penalised objective `f + λ‖A(X) − b‖²` with `X` free.
    pub fn penalized(
        lifting: LiftingSpec,
        rank: usize,
        measurement: Arc<MeasurementSubspace>,
        lambda: f64,
    ) -> Result<Self> {
        Self::build(lifting, rank, measurement, Some(lambda))
    }

    /// Kernel trace form for an arbitrary kernel.
    pub fn from_kernel(
        kernel: Arc<dyn Kernel>,
        rank: usize,
        measurement: Arc<MeasurementSubspace>,
        penalty: Option<f64>,
    ) -> Result<Self> {
        Self::assemble(None, CostForm::KernelTrace(kernel), rank, measurement, penalty)
    }

    fn build(
        lifting: LiftingSpec,
        rank: usize,
        measurement: Arc<MeasurementSubspace>,
        penalty: Option<f64>,
    ) -> Result<Self> {
        let n = measurement.n();
        lifting.validate(n)?;
        let form = match lifting {
            LiftingSpec::MonomialFeatures { d } => CostForm::Feature(MonomialFeatureMap::new(n, d)?),
            _ => CostForm::KernelTrace(Arc::from(lifting.kernel()?)),
        };
        Self::assemble(Some(lifting), form, rank, measurement, penalty)
    }

    fn assemble(
        lifting: Option<LiftingSpec>,
        form: CostForm,
        rank: usize,
        measurement: Arc<MeasurementSubspace>,
        penalty: Option<f64>,
    ) -> Result<Self> {
        let (n, s) = (measurement.n(), measurement.s());
        if let Some(lambda) = penalty {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::Parameter(format!("penalty must be > 0, got {lambda}")));
            }
        }
        let p = match &form {
            CostForm::Feature(map) => map.dim(),
            CostForm::KernelTrace(_) => s,
        };
        if rank < 1 || rank > p {
            return Err(Error::Parameter(format!("rank must lie in [1, {p}], got {rank}")));
        }
        let x_factor = match penalty {
            None => {
                if measurement.range_basis().is_none()
                    && matches!(measurement.sensing(), crate::manifold::Sensing::Dense { .. })
                {
                    return Err(Error::Parameter(
                        "overdetermined sensing needs the penalised formulation".into(),
                    ));
                }
                XFactor::Affine(measurement.clone())
            }
            Some(_) => XFactor::Free { n, s },
        };
        Ok(Self {
            lifting,
            form,
            rank,
            measurement,
            penalty,
            manifold: ProductManifold::new(x_factor, p, rank),
        })
    }

    /// Same objective with a different penalty weight (λ-continuation).
    pub fn with_penalty(&self, lambda: f64) -> Result<Self> {
        let form = match &self.form {
            CostForm::Feature(map) => CostForm::Feature(map.clone()),
            CostForm::KernelTrace(k) => CostForm::KernelTrace(k.clone()),
        };
        Self::assemble(self.lifting, form, self.rank, self.measurement.clone(), Some(lambda))
    }

    /// The lifting this objective was built from (`None` for custom kernels).
    pub fn lifting(&self) -> Option<LiftingSpec> {
        self.lifting
    }

    pub fn form(&self) -> &CostForm {
        &self.form
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn penalty(&self) -> Option<f64> {
        self.penalty
    }

    pub fn measurement(&self) -> &Arc<MeasurementSubspace> {
        &self.measurement
    }

    pub fn manifold(&self) -> &ProductManifold {
        &self.manifold
    }

    /// Grassmann ambient dimension.
    pub fn lifted_dim(&self) -> usize {
        self.manifold.p
    }

    /// Matrix whose leading left singular vectors minimise the cost over `U`:
    /// `Φ(X)` for features, `K(X, X)` for kernels.
    pub fn lifted(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.form {
            CostForm::Feature(map) => map.features(x),
            CostForm::KernelTrace(k) => Ok(k.gram(x)),
        }
    }

    /// Gram matrix `K(X, X)` of the lifting (for features `ΦᵀΦ`).
    pub fn gram(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match &self.form {
            CostForm::Feature(map) => {
                let phi = map.features(x)?;
                Ok(phi.tr_mul(&phi))
            }
            CostForm::KernelTrace(k) => Ok(k.gram(x)),
        }
    }

    /// Lifted residual without the penalty term.
    pub fn lifted_cost(&self, z: &ProductPoint) -> Result<f64> {
        self.check(z)?;
        let u = z.u.basis();
        Ok(match &self.form {
            CostForm::Feature(map) => {
                let phi = map.features(&z.x)?;
                let proj = u * u.tr_mul(&phi);
                (phi - proj).norm_squared()
            }
            CostForm::KernelTrace(k) => {
                let gram = k.gram(&z.x);
                gram.trace() - (u.transpose() * &gram * u).trace()
            }
        })
    }

    pub fn cost(&self, z: &ProductPoint) -> Result<f64> {
        let f = self.lifted_cost(z)?;
        match self.penalty {
            Some(lambda) => Ok(f + lambda * self.measurement.residual(&z.x)?.norm_squared()),
            None => Ok(f),
        }
    }

    /// `f(z0) − f(z1)`, evaluated from the increments `X1 − X0` and `U1 − U0`
    /// (after aligning the bases) so that its error scales with the step rather
    /// than with `ε·trace(K)`.
    pub fn decrease(&self, z0: &ProductPoint, z1: &ProductPoint) -> Result<f64> {
        self.check(z0)?;
        self.check(z1)?;
        let dx = &z1.x - &z0.x;
        let lifted = match &self.form {
            CostForm::Feature(_) => self.lifted_cost(z0)? - self.lifted_cost(z1)?,
            CostForm::KernelTrace(k) => {
                let u0 = z0.u.basis();
                let dk = k.gram_increment(&z0.x, &dx);
                let p0 = z0.u.complement_projector();
                let mut dec = -(p0.component_mul(&dk)).sum();
                // Aligning identical bases leaves a rounding-level rotation whose
                // contribution scales with ‖K‖, so X-only steps skip it.
                if z1.u.basis() != u0 {
                    let u1 = z1.u.basis() * procrustes(z1.u.basis(), u0);
                    let e = &u1 - u0;
                    let k1 = k.gram(&z1.x);
                    dec += 2.0 * e.dot(&(&k1 * u0)) + e.dot(&(&k1 * &e));
                }
                dec
            }
        };
        match self.penalty {
            Some(lambda) => {
                let r0 = self.measurement.residual(&z0.x)?;
                let adx = self.measurement.apply(&dx)?;
                Ok(lifted - lambda * (2.0 * r0.dot(&adx) + adx.norm_squared()))
            }
            None => Ok(lifted),
        }
    }

    /// Euclidean gradient blocks `(∇_X f, ∇_U f)`.
    pub fn egrad(&self, z: &ProductPoint) -> Result<EuclideanGrad> {
        self.check(z)?;
        let u = z.u.basis();
        let (mut gx, gu) = match &self.form {
            CostForm::Feature(map) => {
                let phi = map.features(&z.x)?;
                let resid = &phi - u * u.tr_mul(&phi);
                let gx = map.vjp(&phi, &(resid * 2.0));
                let gu = &phi * phi.tr_mul(u) * -2.0;
                (gx, gu)
            }
            CostForm::KernelTrace(k) => {
                let gx = k.weighted_grad(&z.x, &z.u.complement_projector());
                let gu = lift_grad_w(&k.gram(&z.x), &z.u)?;
                (gx, gu)
            }
        };
        if let Some(lambda) = self.penalty {
            let r = self.measurement.residual(&z.x)?;
            gx += self.measurement.adjoint(&r)? * (2.0 * lambda);
        }
        Ok(EuclideanGrad { x: gx, u: gu })
    }

    fn riemannian(&self, z: &ProductPoint, g: &EuclideanGrad) -> Result<ProductTangent> {
        self.manifold.project(z, &g.x, &g.u)
    }

    /// Riemannian gradient on the product manifold.
    pub fn rgrad(&self, z: &ProductPoint) -> Result<ProductTangent> {
        let g = self.egrad(z)?;
        self.riemannian(z, &g)
    }

    /// Cost and Riemannian gradient together.
    pub fn cost_grad(&self, z: &ProductPoint) -> Result<(f64, ProductTangent)> {
        Ok((self.cost(z)?, self.rgrad(z)?))
    }

    /// Euclidean Hessian-vector product blocks along `(ΔX, ΔU)`.
    pub fn ehess(
        &self,
        z: &ProductPoint,
        dx: &DMatrix<f64>,
        du: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check(z)?;
        let u = z.u.basis();
        let (mut hx, hu) = match &self.form {
            CostForm::Feature(map) => {
                let phi = map.features(&z.x)?;
                let p_perp = z.u.complement_projector();
                let weight = &p_perp * &phi * 2.0;
                let dphi = map.jvp(&phi, dx);
                // ∂P_{U⊥}[ΔU] = −(U ΔUᵀ + ΔU Uᵀ).
                let dp = -(u * du.transpose() + du * u.transpose());
                let hx = map.weighted_second(&phi, &weight, dx)
                    + map.vjp(&phi, &(&p_perp * &dphi * 2.0))
                    + map.vjp(&phi, &(dp * &phi * 2.0));
                let hu = (&dphi * phi.tr_mul(u) + &phi * dphi.tr_mul(u) + &phi * phi.tr_mul(du)) * -2.0;
                (hx, hu)
            }
            CostForm::KernelTrace(k) => crate::lifting::kernel_trace_hess(k.as_ref(), &z.x, u, dx, du),
        };
        if let Some(lambda) = self.penalty {
            let adx = self.measurement.apply(dx)?;
            hx += self.measurement.adjoint(&adx)? * (2.0 * lambda);
        }
        Ok((hx, hu))
    }

    /// Riemannian Hessian-vector product. The Grassmann block carries the
    /// curvature term `−ΔU (Uᵀ ∇_U f)` before projection.
    pub fn rhess(&self, z: &ProductPoint, xi: &ProductTangent) -> Result<ProductTangent> {
        let g = self.egrad(z)?;
        self.rhess_with(z, &g, xi)
    }

    /// [`rhess`](Self::rhess) reusing a precomputed Euclidean gradient.
    pub fn rhess_with(&self, z: &ProductPoint, g: &EuclideanGrad, xi: &ProductTangent) -> Result<ProductTangent> {
        let (hx, hu) = self.ehess(z, &xi.dx, &xi.du)?;
        let corrected = hu - &xi.du * (z.u.basis().tr_mul(&g.u));
        Ok(ProductTangent {
            dx: self.manifold.x_factor.project(&hx)?,
            du: grass_project(&z.u, &corrected)?.0,
        })
    }

    pub fn retract(&self, z: &ProductPoint, xi: &ProductTangent) -> Result<ProductPoint> {
        self.manifold.retract(z, xi)
    }

    /// Optimal `U` for fixed `X`: the leading `r` left singular vectors of
    /// the lifted matrix.
    pub fn best_subspace(&self, x: &DMatrix<f64>) -> Result<crate::manifold::GrassmannPoint> {
        crate::solvers::truncated_svd(&self.lifted(x)?, self.rank)
    }

    /// Starting point: the feasible point of the measurement set (zeros
    /// when a penalised problem has no exact solution) with its best
    /// subspace.
    pub fn initial_point(&self) -> Result<ProductPoint> {
        let x = match self.measurement.feasible_point() {
            Ok(x) => x,
            Err(_) if self.penalty.is_some() => DMatrix::zeros(self.measurement.n(), self.measurement.s()),
            Err(e) => return Err(e),
        };
        let u = self.best_subspace(&x)?;
        Ok(ProductPoint { x, u })
    }

    fn check(&self, z: &ProductPoint) -> Result<()> {
        crate::error::check_shape("objective X", &z.x, self.manifold.x_factor.shape())?;
        crate::error::check_shape("objective U", z.u.basis(), (self.manifold.p, self.rank))
    }
}

/// Outcome of [`fd_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    /// Worst relative gap between `⟨grad f, ξ⟩` and the central difference of
    /// the pullback `t ↦ f(R_z(tξ))`.
    pub grad_error: f64,
    /// Worst relative gap between `Hess f[ξ]` and the central difference of
    /// the projected gradient along the retraction curve.
    pub hess_error: f64,
    /// Worst relative asymmetry `|⟨ξ, Hζ⟩ − ⟨ζ, Hξ⟩|`.
    pub symmetry_error: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Random tangent vector at `z`, normalised to unit norm (zero if the
/// tangent space is trivial).
pub fn random_tangent<R: Rng + ?Sized>(obj: &Objective, z: &ProductPoint, rng: &mut R) -> Result<ProductTangent> {
    let m = obj.manifold();
    let (n, s) = m.x_factor.shape();
    let xi = m.project(z, &gaussian_matrix(n, s, rng), &gaussian_matrix(m.p, m.r, rng))?;
    let nrm = xi.norm();
    Ok(if nrm > 0.0 { xi.scale(1.0 / nrm) } else { xi })
}

fn relative_gap(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(scale)
}

const FD_STEPS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];

/// Compares the analytic gradient and Hessian with finite differences along
/// `directions` random tangents. Each comparison keeps the best step of the
/// sweep {1e-3, …, 1e-6}; the report holds the worst case over directions.
/// Errors are relative, with a floor of `1e-10 · (1 + |f|)` on the
/// denominator so an exactly flat direction does not divide by zero.
pub fn fd_check<R: Rng + ?Sized>(
    obj: &Objective,
    z: &ProductPoint,
    tol: f64,
    directions: usize,
    rng: &mut R,
) -> Result<FdReport> {
    let f0 = obj.cost(z)?;
    let g = obj.rgrad(z)?;
    let floor = 1e-10 * (1.0 + f0.abs());
    let mut grad_error: f64 = 0.0;
    let mut hess_error: f64 = 0.0;
    let mut symmetry_error: f64 = 0.0;
    for _ in 0..directions {
        let xi = random_tangent(obj, z, rng)?;
        let zeta = random_tangent(obj, z, rng)?;
        let analytic = g.inner(&xi);
        let mut best = f64::INFINITY;
        for &t in &FD_STEPS {
            let fp = obj.cost(&obj.retract(z, &xi.scale(t))?)?;
            let fm = obj.cost(&obj.retract(z, &xi.scale(-t))?)?;
            let fd = (fp - fm) / (2.0 * t);
            best = best.min(relative_gap(fd, analytic, floor));
        }
        grad_error = grad_error.max(best);

        let h_xi = obj.rhess(z, &xi)?;
        let h_zeta = obj.rhess(z, &zeta)?;
        let hscale = 1e-10 * (1.0 + h_xi.norm() + h_zeta.norm());
        symmetry_error =
            symmetry_error.max((xi.inner(&h_zeta) - zeta.inner(&h_xi)).abs() / (xi.inner(&h_zeta).abs().max(hscale)));

        let mut best = f64::INFINITY;
        for &t in &FD_STEPS {
            let gp = grad_at(obj, z, &obj.retract(z, &xi.scale(t))?)?;
            let gm = grad_at(obj, z, &obj.retract(z, &xi.scale(-t))?)?;
            let fd = gp.add_scaled(-1.0, &gm).scale(1.0 / (2.0 * t));
            let gap = fd.add_scaled(-1.0, &h_xi).norm();
            best = best.min(gap / fd.norm().max(h_xi.norm()).max(hscale));
        }
        hess_error = hess_error.max(best);
    }
    Ok(FdReport {
        grad_error,
        hess_error,
        symmetry_error,
        tol,
        pass: grad_error <= tol && hess_error <= tol,
    })
}

/// Riemannian gradient at `z1` aligned with the basis of `z` and projected
/// onto the tangent space at `z`.
fn grad_at(obj: &Objective, z: &ProductPoint, z1: &ProductPoint) -> Result<ProductTangent> {
    let g1 = obj.rgrad(z1)?;
    // The horizontal lift follows the representative: rotate U1 to best match U.
    let rot = procrustes(z1.u.basis(), z.u.basis());
    obj.manifold().project(z, &g1.dx, &(g1.du * rot))
}

/// Orthogonal `Q` minimising `‖U1 Q − U‖`.
fn procrustes(u1: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    match crate::linalg::svd_desc(&u1.tr_mul(u)) {
        Ok((a, _, bt)) => a * bt,
        Err(_) => DMatrix::identity(u.ncols(), u.ncols()),
    }
}
