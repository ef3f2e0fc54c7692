use nalgebra::DMatrix;

use crate::error::{check_shape, Error, Result};
use crate::linalg::qf;

/// A point of `Grass(p, r)`, stored as a `p×r` matrix with orthonormal columns.
///
/// Any right-multiplication of the basis by an orthogonal `r×r` matrix
/// represents the same subspace. `r = p` is accepted as the trivial
/// whole-space point (its tangent space is `{0}`).
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    basis: DMatrix<f64>,
}

/// Horizontal lift of a tangent vector at a [`GrassmannPoint`]: `Uᵀ H = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannTangent(pub DMatrix<f64>);

const ORTHONORMAL_TOL: f64 = 1e-12;

impl GrassmannPoint {
    /// Wraps an orthonormal basis, checking `UᵀU = I` to 1e-12.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let (p, r) = basis.shape();
        if r == 0 || r > p {
            return Err(Error::Parameter(format!(
                "Grassmann point needs 1 <= r <= p, got p = {p}, r = {r}"
            )));
        }
        let defect = (basis.transpose() * &basis - DMatrix::identity(r, r)).norm();
        if !(defect <= ORTHONORMAL_TOL) {
            return Err(Error::Parameter(format!(
                "basis is not orthonormal (defect {defect:e})"
            )));
        }
        Ok(Self { basis })
    }

    /// Orthonormalises an arbitrary full-rank `p×r` matrix via `qf`.
    pub fn from_span(m: &DMatrix<f64>) -> Result<Self> {
        let (p, r) = m.shape();
        if r == 0 || r > p {
            return Err(Error::Parameter(format!(
                "Grassmann point needs 1 <= r <= p, got p = {p}, r = {r}"
            )));
        }
        Ok(Self { basis: qf(m)? })
    }

    pub(crate) fn from_basis_unchecked(basis: DMatrix<f64>) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    /// Ambient dimension `p`.
    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    /// Subspace dimension `r`.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// `I − U Uᵀ` as an explicit matrix.
    pub fn complement_projector(&self) -> DMatrix<f64> {
        let p = self.ambient();
        DMatrix::identity(p, p) - &self.basis * self.basis.transpose()
    }
}

/// Orthogonal projection onto the horizontal space at `u`: `(I − UUᵀ) z`.
pub fn grass_project(u: &GrassmannPoint, z: &DMatrix<f64>) -> Result<GrassmannTangent> {
    check_shape("grass_project", z, u.basis.shape())?;
    let b = &u.basis;
    Ok(GrassmannTangent(z - b * (b.transpose() * z)))
}

/// QR retraction `qf(U + H)`.
pub fn grass_retract(u: &GrassmannPoint, h: &GrassmannTangent) -> Result<GrassmannPoint> {
    check_shape("grass_retract", &h.0, u.basis.shape())?;
    let m = &u.basis + &h.0;
    Ok(GrassmannPoint { basis: qf(&m)? })
}

/// Chordal (sin-θ) distance `sqrt(Σ sin² θᵢ)` between two subspaces.
///
/// Evaluated as `‖(I − U₁U₁ᵀ)U₂‖_F`, which equals the principal-angle formula
/// but keeps full relative accuracy for nearly identical subspaces. The two
/// orderings are averaged so the result is exactly symmetric.
pub fn grass_distance(u1: &GrassmannPoint, u2: &GrassmannPoint) -> Result<f64> {
    if u1.basis.shape() != u2.basis.shape() {
        return Err(crate::error::dim_err(
            "grass_distance",
            u1.basis.shape(),
            u2.basis.shape(),
        ));
    }
    let one_way = |a: &DMatrix<f64>, b: &DMatrix<f64>| (b - a * (a.transpose() * b)).norm();
    let d12 = one_way(&u1.basis, &u2.basis);
    let d21 = one_way(&u2.basis, &u1.basis);
    let r = u1.rank() as f64;
    Ok((0.5 * (d12 + d21)).min(r.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, random_orthogonal, random_orthonormal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(p: usize, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(p, 1);
        m[(i, 0)] = 1.0;
        m
    }

    #[test]
    fn projection_annihilates_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let u = GrassmannPoint::from_orthonormal(random_orthonormal(6, 2, &mut rng)).unwrap();
        let z = u.basis() * gaussian_matrix(2, 2, &mut rng);
        assert!(grass_project(&u, &z).unwrap().0.norm() < 1e-14);
    }

    #[test]
    fn projection_fixes_complement() {
        let u = GrassmannPoint::from_orthonormal(e(2, 0)).unwrap();
        let h = grass_project(&u, &e(2, 1)).unwrap();
        assert_eq!(h.0, e(2, 1));
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = GrassmannPoint::from_orthonormal(random_orthonormal(6, 2, &mut rng)).unwrap();
        let z = gaussian_matrix(6, 2, &mut rng);
        let once = grass_project(&u, &z).unwrap();
        let twice = grass_project(&u, &once.0).unwrap();
        assert!((once.0 - twice.0).norm() < 1e-12);
    }

    #[test]
    fn projection_rejects_bad_shape() {
        let u = GrassmannPoint::from_orthonormal(e(3, 0)).unwrap();
        assert!(matches!(
            grass_project(&u, &DMatrix::zeros(3, 2)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn retract_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let u = GrassmannPoint::from_orthonormal(random_orthonormal(7, 3, &mut rng)).unwrap();
        let back = grass_retract(&u, &GrassmannTangent(DMatrix::zeros(7, 3))).unwrap();
        assert!(grass_distance(&u, &back).unwrap() < 1e-12);
    }

    #[test]
    fn retract_in_plane_by_hand() {
        let t = 0.7;
        let u = GrassmannPoint::from_orthonormal(e(2, 0)).unwrap();
        let h = GrassmannTangent(e(2, 1) * t);
        let v = grass_retract(&u, &h).unwrap();
        let norm = (1.0 + t * t).sqrt();
        assert!((v.basis()[(0, 0)] - 1.0 / norm).abs() < 1e-15);
        assert!((v.basis()[(1, 0)] - t / norm).abs() < 1e-15);
    }

    #[test]
    fn retract_degenerate_is_error() {
        let u = GrassmannPoint::from_orthonormal(e(2, 0)).unwrap();
        // Not a horizontal vector, but it is the only way to make U + H vanish.
        let h = GrassmannTangent(e(2, 0) * -1.0);
        assert!(matches!(grass_retract(&u, &h), Err(Error::DegenerateRetraction(_))));
    }

    #[test]
    fn retraction_has_identity_differential() {
        // d/dt f(Retr(t h)) at 0 equals <grad f, h> for f(U) = trace(Uᵀ A U).
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = gaussian_matrix(6, 6, &mut rng);
        let a = &a + a.transpose();
        let u = GrassmannPoint::from_orthonormal(random_orthonormal(6, 2, &mut rng)).unwrap();
        let h = grass_project(&u, &gaussian_matrix(6, 2, &mut rng)).unwrap();
        let f = |p: &GrassmannPoint| (p.basis().transpose() * &a * p.basis()).trace();
        let egrad = &a * u.basis() * 2.0;
        let rgrad = grass_project(&u, &egrad).unwrap();
        let expected = rgrad.0.dot(&h.0);
        let t = 1e-5;
        let plus = grass_retract(&u, &GrassmannTangent(&h.0 * t)).unwrap();
        let minus = grass_retract(&u, &GrassmannTangent(&h.0 * -t)).unwrap();
        let fd = (f(&plus) - f(&minus)) / (2.0 * t);
        assert!((fd - expected).abs() <= 1e-6 * (1.0 + expected.abs()));
    }

    #[test]
    fn distance_special_cases() {
        let a = GrassmannPoint::from_orthonormal(e(2, 0)).unwrap();
        let b = GrassmannPoint::from_orthonormal(e(2, 1)).unwrap();
        assert_eq!(grass_distance(&a, &a).unwrap(), 0.0);
        assert!((grass_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_matches_principal_angle_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let u1 = GrassmannPoint::from_orthonormal(random_orthonormal(8, 3, &mut rng)).unwrap();
        let u2 = GrassmannPoint::from_orthonormal(random_orthonormal(8, 3, &mut rng)).unwrap();
        // Oracle: cosines from an independent SVD of U1ᵀU2.
        let cos = (u1.basis().transpose() * u2.basis()).singular_values();
        let oracle: f64 = cos.iter().map(|c| 1.0 - c.clamp(0.0, 1.0).powi(2)).sum::<f64>().sqrt();
        let d = grass_distance(&u1, &u2).unwrap();
        assert!((d - oracle).abs() < 1e-10);
        let alt = (3.0 - (u1.basis().transpose() * u2.basis()).norm_squared()).sqrt();
        assert!((d - alt).abs() < 1e-10);
    }

    #[test]
    fn distance_quotient_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let u1 = GrassmannPoint::from_orthonormal(random_orthonormal(8, 3, &mut rng)).unwrap();
        let u2 = GrassmannPoint::from_orthonormal(random_orthonormal(8, 3, &mut rng)).unwrap();
        let q = random_orthogonal(3, &mut rng);
        let u1q = GrassmannPoint::from_orthonormal(u1.basis() * q).unwrap();
        let d = grass_distance(&u1, &u2).unwrap();
        assert!((d - grass_distance(&u1q, &u2).unwrap()).abs() < 1e-12);
        assert!(grass_distance(&u1, &u1q).unwrap() < 1e-12);
    }
}
