use nalgebra::DMatrix;

use super::Kernel;
use crate::error::{check_shape, Error, Result};
use crate::manifold::GrassmannPoint;

/// Gaussian kernel `exp(−‖xᵢ − yⱼ‖² / (2σ²))`.
///
/// Squared distances are accumulated coordinate by coordinate so identical
/// columns give exactly `1`.
pub fn gaussian_kernel(x: &DMatrix<f64>, y: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(crate::error::dim_err("gaussian_kernel", x.shape(), y.shape()));
    }
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("kernel width must be > 0, got {sigma}")));
    }
    Ok(gram_unchecked(x, y, sigma))
}

fn gram_unchecked(x: &DMatrix<f64>, y: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let scale = 1.0 / (2.0 * sigma * sigma);
    DMatrix::from_fn(x.ncols(), y.ncols(), |i, j| {
        let d2: f64 = x
            .column(i)
            .iter()
            .zip(y.column(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (-d2 * scale).exp()
    })
}

/// Gaussian kernel lifting for clustered data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    pub sigma: f64,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Parameter(format!("kernel width must be > 0, got {sigma}")));
        }
        Ok(Self { sigma })
    }
}

impl Kernel for GaussianKernel {
    fn name(&self) -> &'static str {
        "gaussian_kernel"
    }

    fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        gram_unchecked(x, x, self.sigma)
    }

    fn weighted_grad(&self, x: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
        let kp = self.gram(x).component_mul(p);
        let mut lap = -kp.clone();
        for j in 0..kp.ncols() {
            lap[(j, j)] += kp.column(j).sum();
        }
        x * lap * (-2.0 / (self.sigma * self.sigma))
    }

    fn gram_derivative(&self, x: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.gram(x);
        let g = x.tr_mul(dx);
        let inv = 1.0 / (self.sigma * self.sigma);
        DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| {
            -k[(i, j)] * (g[(i, i)] - g[(i, j)] - g[(j, i)] + g[(j, j)]) * inv
        })
    }

    /// Central finite differences of the gradient, step `1e-6 · (1 + ‖X‖)`.
    fn weighted_hess(&self, x: &DMatrix<f64>, p: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let dn = dx.norm();
        if dn == 0.0 {
            return DMatrix::zeros(x.nrows(), x.ncols());
        }
        let t = 1e-6 * (1.0 + x.norm()) / dn;
        let plus = self.weighted_grad(&(x + dx * t), p);
        let minus = self.weighted_grad(&(x - dx * t), p);
        (plus - minus) / (2.0 * t)
    }

    /// `K_ij · expm1(−(‖xᵢ' − xⱼ'‖² − ‖xᵢ − xⱼ‖²) / 2σ²)` with the distance change
    /// expanded in `D`.
    fn gram_increment(&self, x: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.gram(x);
        let scale = 1.0 / (2.0 * self.sigma * self.sigma);
        DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| {
            let mut change = 0.0;
            for l in 0..x.nrows() {
                let dxl = x[(l, i)] - x[(l, j)];
                let ddl = d[(l, i)] - d[(l, j)];
                change += ddl * (2.0 * dxl + ddl);
            }
            k[(i, j)] * (-change * scale).exp_m1()
        })
    }
}

/// `−(2/σ²) · X (diag(colsum(K ⊙ P_{W⊥})) − K ⊙ P_{W⊥})`.
pub fn gaussian_grad_x(x: &DMatrix<f64>, w: &GrassmannPoint, sigma: f64) -> Result<DMatrix<f64>> {
    let k = GaussianKernel::new(sigma)?;
    check_shape("gaussian_grad_x", w.basis(), (x.ncols(), w.rank()))?;
    Ok(k.weighted_grad(x, &w.complement_projector()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_columns_give_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let x = gaussian_matrix(4, 6, &mut rng);
        let k = gaussian_kernel(&x, &x, 1.3).unwrap();
        for i in 0..6 {
            assert_eq!(k[(i, i)], 1.0);
        }
        assert!(k.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn distance_sigma_sqrt2_gives_inverse_e() {
        let sigma = 0.8;
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 0.0]);
        let y = DMatrix::from_column_slice(2, 1, &[sigma * 2f64.sqrt(), 0.0]);
        let k = gaussian_kernel(&x, &y, sigma).unwrap();
        assert!((k[(0, 0)] - (-1f64).exp()).abs() < 1e-15);
        assert!((k[(0, 0)] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn increment_matches_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let x = gaussian_matrix(3, 5, &mut rng);
        let d = gaussian_matrix(3, 5, &mut rng) * 1e-3;
        let k = GaussianKernel::new(1.2).unwrap();
        let direct = k.gram(&(&x + &d)) - k.gram(&x);
        assert!((k.gram_increment(&x, &d) - &direct).norm() <= 1e-12 * direct.norm());
    }

    #[test]
    fn width_must_be_positive() {
        let x = DMatrix::zeros(2, 2);
        assert!(gaussian_kernel(&x, &x, 0.0).is_err());
        assert!(GaussianKernel::new(-1.0).is_err());
    }

    #[test]
    fn full_subspace_gives_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let x = gaussian_matrix(3, 4, &mut rng);
        let w = GrassmannPoint::from_orthonormal(DMatrix::identity(4, 4)).unwrap();
        assert!(gaussian_grad_x(&x, &w, 2.5).unwrap().norm() < 1e-14);
    }

    #[test]
    fn duplicate_columns_give_antisymmetric_gradient() {
        // Two nearby columns, W = leading eigenvector of K.
        let x = DMatrix::from_column_slice(2, 2, &[0.0, 0.0, 0.3, -0.1]);
        let k = GaussianKernel::new(1.0).unwrap();
        let (_, vecs) = crate::linalg::sym_eig_desc(&k.gram(&x));
        let w = GrassmannPoint::from_orthonormal(vecs.columns(0, 1).into_owned()).unwrap();
        let g = gaussian_grad_x(&x, &w, 1.0).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        assert!((g.column(0) + g.column(1)).norm() < 1e-12);
    }
}
