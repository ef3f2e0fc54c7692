use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, svd_desc};
use crate::manifold::{grass_distance, GrassmannPoint};

/// Which factorisation the U-update uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvdMode {
    Exact,
    RandomizedPower,
    RandomizedPlain,
}

impl SvdMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SvdMode::Exact => "exact",
            SvdMode::RandomizedPower => "randomized_power",
            SvdMode::RandomizedPlain => "randomized_plain",
        }
    }
}

/// Randomised-SVD switching thresholds and sketch sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdPolicy {
    pub tau1: f64,
    pub tau2: f64,
    pub oversample: usize,
    pub power_q: usize,
}

impl Default for SvdPolicy {
    fn default() -> Self {
        Self {
            tau1: 1e-3,
            tau2: 1e-1,
            oversample: 10,
            power_q: 1,
        }
    }
}

impl SvdPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.tau1 && self.tau1 < self.tau2 && self.tau2 < 1.0) {
            return Err(Error::Parameter(format!(
                "need 0 < tau1 < tau2 < 1, got {} and {}",
                self.tau1, self.tau2
            )));
        }
        Ok(())
    }
}

/// Exact while the (normalised) cost is above `tau2`, one power iteration
/// between the thresholds, a plain sketch below `tau1`.
pub fn svd_policy(f_val: f64, tau1: f64, tau2: f64) -> SvdMode {
    if f_val > tau2 {
        SvdMode::Exact
    } else if f_val > tau1 {
        SvdMode::RandomizedPower
    } else {
        SvdMode::RandomizedPlain
    }
}

/// Span of the `r` leading left singular vectors of `y`.
///
/// Ties `σ_r = σ_{r+1}` are broken by taking the first `r` columns returned
/// by the decomposition; see [`singular_gap`] to detect them.
pub fn truncated_svd(y: &DMatrix<f64>, r: usize) -> Result<GrassmannPoint> {
    check_rank(y, r)?;
    let (u, _, _) = svd_desc(y)?;
    Ok(GrassmannPoint::from_basis_unchecked(orthonormal_columns(
        u.columns(0, r).into_owned(),
    )))
}

/// `(σ_r − σ_{r+1}) / σ_1`, or `1` when `r` covers the whole spectrum.
pub fn singular_gap(y: &DMatrix<f64>, r: usize) -> f64 {
    let sv = crate::linalg::singular_values(y);
    if r >= sv.len() || sv[0] == 0.0 {
        return 1.0;
    }
    (sv[r - 1] - sv[r]) / sv[0]
}

fn check_rank(y: &DMatrix<f64>, r: usize) -> Result<()> {
    let cap = y.nrows().min(y.ncols());
    if r < 1 || r > cap {
        return Err(Error::Parameter(format!("truncation rank {r} outside [1, {cap}]")));
    }
    Ok(())
}

/// Re-orthonormalises columns that are orthonormal up to rounding, so the
/// result passes the 1e-12 Grassmann check even for large matrices.
fn orthonormal_columns(u: DMatrix<f64>) -> DMatrix<f64> {
    let defect = (u.tr_mul(&u) - DMatrix::identity(u.ncols(), u.ncols())).norm();
    if defect <= 1e-13 {
        return u;
    }
    u.qr().q()
}

/// Randomised range finder with `power_q` passes of `YYᵀ`, followed by an
/// exact SVD of the projected sketch.
pub fn randomized_svd<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    r: usize,
    oversample: usize,
    power_q: usize,
    rng: &mut R,
) -> Result<GrassmannPoint> {
    check_rank(y, r)?;
    let (p, s) = y.shape();
    let width = r + oversample;
    if width > p.min(s) {
        return Err(Error::Parameter(format!("sketch width {width} exceeds min({p}, {s})")));
    }
    let omega = gaussian_matrix(s, width, rng);
    let mut q = (y * omega).qr().q();
    for _ in 0..power_q {
        let z = (y.tr_mul(&q)).qr().q();
        q = (y * z).qr().q();
    }
    let b = q.tr_mul(y);
    let (ub, _, _) = svd_desc(&b)?;
    let u = q * ub.columns(0, r);
    Ok(GrassmannPoint::from_basis_unchecked(orthonormal_columns(u)))
}

/// Leading-`r` subspace by the routed method. The sketch width is clamped to
/// the matrix size, and a full-size sketch falls back to the exact SVD.
pub fn subspace_by_mode<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    r: usize,
    mode: SvdMode,
    policy: &SvdPolicy,
    rng: &mut R,
) -> Result<GrassmannPoint> {
    let room = y.nrows().min(y.ncols()).saturating_sub(r);
    let oversample = policy.oversample.min(room);
    match mode {
        SvdMode::Exact => truncated_svd(y, r),
        _ if r + oversample >= y.nrows().min(y.ncols()) => truncated_svd(y, r),
        SvdMode::RandomizedPower => randomized_svd(y, r, oversample, policy.power_q.max(1), rng),
        SvdMode::RandomizedPlain => randomized_svd(y, r, oversample, 0, rng),
    }
}

/// Checks the sin-Θ bound `dist(U₁, U₂)² ≤ 2‖Y₁ − Y₂‖²/δ²` between the
/// leading-`r` left singular subspaces.
///
/// The bound is only claimed when `min_{i≤r<j} |σᵢ(Y₁) − σⱼ(Y₂)| ≥ δ` and
/// `σ_r(Y₁) ≥ δ`; outside that regime the check passes vacuously.
pub fn wedin_gap_check(y1: &DMatrix<f64>, y2: &DMatrix<f64>, r: usize, delta: f64) -> Result<bool> {
    if y1.shape() != y2.shape() {
        return Err(crate::error::dim_err("wedin_gap_check", y1.shape(), y2.shape()));
    }
    let s1 = crate::linalg::singular_values(y1);
    let s2 = crate::linalg::singular_values(y2);
    let mut sep = f64::INFINITY;
    for i in 0..r.min(s1.len()) {
        for j in r..s2.len() {
            sep = sep.min((s1[i] - s2[j]).abs());
        }
    }
    if sep < delta || s1[r - 1] < delta {
        return Ok(true);
    }
    let u1 = truncated_svd(y1, r)?;
    let u2 = truncated_svd(y2, r)?;
    let dist = grass_distance(&u1, &u2)?;
    let bound = 2.0 * (y1 - y2).norm_squared() / (delta * delta);
    Ok(dist * dist <= bound + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_orthonormal, singular_values};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn residual(y: &DMatrix<f64>, u: &GrassmannPoint) -> f64 {
        let b = u.basis();
        (y - b * b.tr_mul(y)).norm()
    }

    #[test]
    fn policy_routes_on_thresholds() {
        assert_eq!(svd_policy(0.5, 1e-3, 1e-1), SvdMode::Exact);
        assert_eq!(svd_policy(5e-2, 1e-3, 1e-1), SvdMode::RandomizedPower);
        assert_eq!(svd_policy(1e-4, 1e-3, 1e-1), SvdMode::RandomizedPlain);
        assert_eq!(svd_policy(1e-1, 1e-3, 1e-1), SvdMode::RandomizedPower);
        assert_eq!(svd_policy(1e-3, 1e-3, 1e-1), SvdMode::RandomizedPlain);
    }

    #[test]
    fn diagonal_truncation() {
        let y = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let u = truncated_svd(&y, 2).unwrap();
        let e12 = GrassmannPoint::from_orthonormal(DMatrix::identity(3, 2)).unwrap();
        assert!(grass_distance(&u, &e12).unwrap() < 1e-14);
    }

    #[test]
    fn eckart_young_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        let y = gaussian_matrix(20, 30, &mut rng);
        let u = truncated_svd(&y, 4).unwrap();
        let sv = singular_values(&y);
        let tail: f64 = sv.iter().skip(4).map(|v| v * v).sum();
        assert!((residual(&y, &u).powi(2) - tail).abs() <= 1e-10 * tail);
    }

    #[test]
    fn randomized_exact_on_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let y = random_orthonormal(30, 3, &mut rng) * gaussian_matrix(3, 25, &mut rng);
        let exact = truncated_svd(&y, 3).unwrap();
        let approx = randomized_svd(&y, 3, 5, 0, &mut rng).unwrap();
        assert!(grass_distance(&exact, &approx).unwrap() <= 1e-8);
        assert!(residual(&y, &approx) <= 1e-10 * y.norm());
    }

    #[test]
    fn wedin_trivial_cases() {
        let y = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        assert!(wedin_gap_check(&y, &y, 1, 1.0).unwrap());
        let y2 = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 + 1e-3, 1.0]));
        assert!(wedin_gap_check(&y, &y2, 1, 1.0).unwrap());
    }
}
