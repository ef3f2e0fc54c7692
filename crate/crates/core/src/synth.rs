//! Synthetic data, measurement sampling and evaluation metrics.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, random_orthonormal};
use crate::manifold::MeasurementSubspace;

pub use crate::linalg::numerical_rank;

/// Union of (optionally affine) subspaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UosSpec {
    pub n: usize,
    /// One entry per subspace.
    pub dims: Vec<usize>,
    pub pts_per: usize,
    #[serde(default)]
    pub affine: bool,
}

impl UosSpec {
    pub fn uniform(n: usize, k: usize, dim: usize, pts_per: usize) -> Self {
        Self {
            n,
            dims: vec![dim; k],
            pts_per,
            affine: false,
        }
    }

    pub fn k(&self) -> usize {
        self.dims.len()
    }

    pub fn s(&self) -> usize {
        self.dims.len() * self.pts_per
    }
}

/// Gaussian clusters around random centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub n: usize,
    pub k: usize,
    pub pts_per: usize,
    #[serde(default = "default_sigma_c")]
    pub sigma_c: f64,
}

fn default_sigma_c() -> f64 {
    0.5
}

impl ClusterSpec {
    pub fn s(&self) -> usize {
        self.k * self.pts_per
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
}

/// Standard deviation of the cluster centres.
const CENTER_SCALE: f64 = 2.0;

/// Points on a union of subspaces, grouped by subspace, with their labels.
pub fn gen_uos<R: Rng + ?Sized>(spec: &UosSpec, rng: &mut R) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if spec.dims.is_empty() || spec.pts_per == 0 {
        return Err(Error::Parameter("need at least one subspace and one point".into()));
    }
    if let Some(&bad) = spec.dims.iter().find(|&&d| d == 0 || d >= spec.n) {
        return Err(Error::Parameter(format!(
            "subspace dimension {bad} must lie in [1, n) with n = {}",
            spec.n
        )));
    }
    let mut m = DMatrix::zeros(spec.n, spec.s());
    let mut labels = Vec::with_capacity(spec.s());
    for (g, &dim) in spec.dims.iter().enumerate() {
        let basis = random_orthonormal(spec.n, dim, rng);
        let coeffs = gaussian_matrix(dim, spec.pts_per, rng);
        let mut block = &basis * coeffs;
        if spec.affine {
            let offset = gaussian_matrix(spec.n, 1, rng);
            for mut col in block.column_iter_mut() {
                col += &offset.column(0);
            }
        }
        m.columns_mut(g * spec.pts_per, spec.pts_per).copy_from(&block);
        labels.extend(std::iter::repeat_n(g, spec.pts_per));
    }
    Ok((m, labels))
}

/// Points `c_g + N(0, σ_c² I)` around centres `c_g ~ N(0, 4 I)`.
pub fn gen_clusters<R: Rng + ?Sized>(spec: &ClusterSpec, rng: &mut R) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if !(spec.sigma_c > 0.0) || spec.k == 0 || spec.pts_per == 0 {
        return Err(Error::Parameter(format!("bad cluster spec {spec:?}")));
    }
    let centers = gaussian_matrix(spec.n, spec.k, rng) * CENTER_SCALE;
    let noise = Normal::new(0.0, spec.sigma_c).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut m = DMatrix::zeros(spec.n, spec.s());
    let mut labels = Vec::with_capacity(spec.s());
    for g in 0..spec.k {
        for t in 0..spec.pts_per {
            let j = g * spec.pts_per + t;
            for i in 0..spec.n {
                m[(i, j)] = centers[(i, g)] + noise.sample(rng);
            }
            labels.push(g);
        }
    }
    Ok((m, labels))
}

/// Observes `round(δ n s)` entries of `target`, drawn uniformly without
/// replacement.
pub fn gen_entry_mask<R: Rng + ?Sized>(target: &DMatrix<f64>, delta: f64, rng: &mut R) -> Result<MeasurementSubspace> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Parameter(format!(
            "sampling ratio must lie in [0, 1], got {delta}"
        )));
    }
    let (n, s) = target.shape();
    let m = (delta * (n * s) as f64).round() as usize;
    let mut mask = DMatrix::from_element(n, s, false);
    for idx in sample(rng, n * s, m) {
        mask[(idx % n, idx / n)] = true;
    }
    Ok(MeasurementSubspace::from_mask(mask, target))
}

/// Dense sensing with `A_ij ~ N(0, 1/m)` and `b = A vec(M) + ξ`.
pub fn gen_gaussian_sensing<R: Rng + ?Sized>(
    target: &DMatrix<f64>,
    m: usize,
    noise: Option<NoiseSpec>,
    rng: &mut R,
) -> Result<MeasurementSubspace> {
    let (n, s) = target.shape();
    if m == 0 {
        return Err(Error::Parameter("need at least one measurement".into()));
    }
    if m >= n * s {
        log::warn!("{m} dense measurements for {n}x{s} unknowns: overdetermined");
    }
    let scale = 1.0 / (m as f64).sqrt();
    let a = DMatrix::from_fn(m, n * s, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let mut b: DVector<f64> = &a * DVector::from_column_slice(target.as_slice());
    if let Some(NoiseSpec { sigma }) = noise {
        let xi = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        for v in b.iter_mut() {
            *v += xi.sample(rng);
        }
    }
    MeasurementSubspace::dense(n, s, a, b)
}

/// `‖X − M‖_F / √(n s)`.
pub fn rmse(x: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    (x - m).norm() / ((x.len().max(1)) as f64).sqrt()
}

/// Fraction of unordered point pairs on which two labelings agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "labelings of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let s = a.len();
    if s < 2 {
        return Ok(1.0);
    }
    let mut agree = 0usize;
    for i in 0..s {
        for j in i + 1..s {
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (s * (s - 1) / 2) as f64)
}

/// k-means on the columns of `x`: k-means++ seeding, Lloyd iterations,
/// best of 10 restarts by within-cluster sum of squares.
pub fn cluster_assign<R: Rng + ?Sized>(x: &DMatrix<f64>, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let s = x.ncols();
    if k == 0 || k > s {
        return Err(Error::Parameter(format!("cannot form {k} clusters from {s} points")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..10 {
        let (cost, labels) = lloyd(x, k, rng);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, labels));
        }
    }
    Ok(best.map(|(_, l)| l).unwrap_or_default())
}

fn sq_dist(x: &DMatrix<f64>, j: usize, c: &DMatrix<f64>, g: usize) -> f64 {
    (x.column(j) - c.column(g)).norm_squared()
}

fn lloyd<R: Rng + ?Sized>(x: &DMatrix<f64>, k: usize, rng: &mut R) -> (f64, Vec<usize>) {
    let (n, s) = x.shape();
    let mut centers = DMatrix::zeros(n, k);
    centers.set_column(0, &x.column(rng.random_range(0..s)));
    let mut d2: Vec<f64> = (0..s).map(|j| sq_dist(x, j, &centers, 0)).collect();
    for g in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut idx = s - 1;
            for (j, &w) in d2.iter().enumerate() {
                if t < w {
                    idx = j;
                    break;
                }
                t -= w;
            }
            idx
        } else {
            rng.random_range(0..s)
        };
        centers.set_column(g, &x.column(pick));
        for (j, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(x, j, &centers, g));
        }
    }
    let mut labels = vec![0usize; s];
    for _ in 0..300 {
        let mut changed = false;
        for (j, l) in labels.iter_mut().enumerate() {
            let g = (0..k)
                .min_by(|&a, &b| sq_dist(x, j, &centers, a).total_cmp(&sq_dist(x, j, &centers, b)))
                .unwrap_or(0);
            if g != *l {
                *l = g;
                changed = true;
            }
        }
        let mut sums = DMatrix::zeros(n, k);
        let mut counts = vec![0usize; k];
        for (j, &l) in labels.iter().enumerate() {
            let mut col = sums.column_mut(l);
            col += x.column(j);
            counts[l] += 1;
        }
        for g in 0..k {
            if counts[g] > 0 {
                centers.set_column(g, &(sums.column(g) / counts[g] as f64));
            }
        }
        if !changed {
            break;
        }
    }
    let cost = labels
        .iter()
        .enumerate()
        .map(|(j, &l)| sq_dist(x, j, &centers, l))
        .sum();
    (cost, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rand_index_enumerated_pairs() {
        // Pairs (0,1),(0,2),(0,3),(1,2),(1,3),(2,3): agreement only on (0,3),(1,2).
        let r = rand_index(&[1, 1, 2, 2], &[1, 2, 1, 2]).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rand_index(&[0, 0, 1], &[5, 5, 3]).unwrap(), 1.0);
    }

    #[test]
    fn rmse_of_unit_shift_is_one() {
        let m = DMatrix::from_fn(3, 4, |i, j| (i * j) as f64);
        assert_eq!(rmse(&m, &m), 0.0);
        assert!((rmse(&m.add_scalar(1.0), &m) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entry_mask_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let target = DMatrix::from_element(10, 10, 1.0);
        assert_eq!(gen_entry_mask(&target, 0.5, &mut rng).unwrap().m(), 50);
        assert_eq!(gen_entry_mask(&target, 1.0, &mut rng).unwrap().m(), 100);
    }

    #[test]
    fn noiseless_sensing_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let target = gaussian_matrix(4, 6, &mut rng);
        let meas = gen_gaussian_sensing(&target, 10, None, &mut rng).unwrap();
        assert!(meas.residual(&target).unwrap().norm() < 1e-12);
    }

    #[test]
    fn single_linear_subspace_has_its_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, labels) = gen_uos(&UosSpec::uniform(6, 1, 2, 20), &mut rng).unwrap();
        assert_eq!(numerical_rank(&m, 1e-8), 2);
        assert_eq!(labels, vec![0; 20]);
        assert!(gen_uos(&UosSpec::uniform(3, 1, 3, 5), &mut rng).is_err());
    }

    #[test]
    fn kmeans_single_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = gaussian_matrix(3, 12, &mut rng);
        assert_eq!(cluster_assign(&x, 1, &mut rng).unwrap(), vec![0; 12]);
    }
}
