use std::collections::HashMap;

use nalgebra::DMatrix;

use super::Kernel;
use crate::error::{check_shape, Error, Result};
use crate::manifold::GrassmannPoint;

/// Default cap on the explicit feature dimension `N(n, d)`.
pub const DEFAULT_FEATURE_CAP: usize = 20_000;

/// Number of monomials of degree at most `d` in `n` variables, `C(n + d, n)`.
pub fn count_monomials(n: usize, d: usize) -> Result<usize> {
    let overflow = || Error::Overflow { n, d };
    // C(n+i, i) = C(n+i-1, i-1) * (n+i) / i, exact at every step.
    let mut acc: usize = 1;
    for i in 1..=d {
        let top = n.checked_add(i).ok_or_else(overflow)?;
        acc = acc.checked_mul(top).ok_or_else(overflow)? / i;
    }
    Ok(acc)
}

/// Multi-indices `α ∈ ℕⁿ` with `|α| ≤ d` in graded lexicographic order
/// (total degree ascending; within a degree, larger exponents on earlier
/// variables first).
#[derive(Debug, Clone)]
pub struct MultiIndexTable {
    n: usize,
    d: usize,
    indices: Vec<Vec<u32>>,
    /// `lower[k][l]` = position of `α_k − e_l`, when `α_k,l > 0`.
    lower: Vec<Vec<Option<usize>>>,
}

impl MultiIndexTable {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("monomials need n >= 1".into()));
        }
        let total = count_monomials(n, d)?;
        let mut indices = Vec::with_capacity(total);
        for deg in 0..=d as u32 {
            let mut cur = vec![0u32; n];
            push_degree(&mut indices, &mut cur, 0, deg);
        }
        debug_assert_eq!(indices.len(), total);
        let position: HashMap<&[u32], usize> = indices.iter().enumerate().map(|(k, a)| (a.as_slice(), k)).collect();
        let lower = indices
            .iter()
            .map(|a| {
                (0..n)
                    .map(|l| {
                        if a[l] == 0 {
                            None
                        } else {
                            let mut b = a.clone();
                            b[l] -= 1;
                            Some(position[b.as_slice()])
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n, d, indices, lower })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }
}

fn push_degree(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, remaining: u32) {
    let n = cur.len();
    if pos == n - 1 {
        cur[pos] = remaining;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for e in (0..=remaining).rev() {
        cur[pos] = e;
        push_degree(out, cur, pos + 1, remaining - e);
    }
    cur[pos] = 0;
}

/// Explicit monomial feature map `φ_d` with unit coefficients, applied
/// columnwise, together with its first and second derivatives.
#[derive(Debug, Clone)]
pub struct MonomialFeatureMap {
    table: MultiIndexTable,
}

impl MonomialFeatureMap {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        Self::with_cap(n, d, DEFAULT_FEATURE_CAP)
    }

    pub fn with_cap(n: usize, d: usize, cap: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::Parameter("monomial features need d >= 1".into()));
        }
        let size = count_monomials(n, d)?;
        if size > cap {
            return Err(Error::TooLarge { size, cap });
        }
        Ok(Self {
            table: MultiIndexTable::new(n, d)?,
        })
    }

    pub fn table(&self) -> &MultiIndexTable {
        &self.table
    }

    /// Lifted dimension `N(n, d)`.
    pub fn dim(&self) -> usize {
        self.table.len()
    }

    fn column(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for k in 1..self.table.len() {
            let a = &self.table.indices[k];
            let l = a.iter().position(|&e| e > 0).unwrap();
            out[k] = out[self.table.lower[k][l].unwrap()] * x[l];
        }
    }

    /// `Φ_d(X)`, an `N×s` matrix.
    pub fn features(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_shape("monomial_features", x, (self.table.n, x.ncols()))?;
        let big_n = self.dim();
        let mut out = DMatrix::zeros(big_n, x.ncols());
        for j in 0..x.ncols() {
            let xj: Vec<f64> = x.column(j).iter().copied().collect();
            let mut col = vec![0.0; big_n];
            self.column(&xj, &mut col);
            out.column_mut(j).copy_from_slice(&col);
        }
        Ok(out)
    }

    /// Directional derivative `DΦ(X)[ΔX]` (column `j` is `J(x_j) Δx_j`).
    pub fn jvp(&self, phi: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(phi.nrows(), phi.ncols());
        for j in 0..phi.ncols() {
            for k in 1..self.table.len() {
                let a = &self.table.indices[k];
                let mut acc = 0.0;
                for l in 0..self.table.n {
                    if let Some(lo) = self.table.lower[k][l] {
                        acc += a[l] as f64 * phi[(lo, j)] * dx[(l, j)];
                    }
                }
                out[(k, j)] = acc;
            }
        }
        out
    }

    /// Adjoint of [`jvp`](Self::jvp): column `j` is `J(x_j)ᵀ v_j`.
    pub fn vjp(&self, phi: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.table.n;
        let mut out = DMatrix::zeros(n, phi.ncols());
        for j in 0..phi.ncols() {
            for k in 1..self.table.len() {
                let a = &self.table.indices[k];
                let vk = v[(k, j)];
                if vk == 0.0 {
                    continue;
                }
                for l in 0..n {
                    if let Some(lo) = self.table.lower[k][l] {
                        out[(l, j)] += a[l] as f64 * phi[(lo, j)] * vk;
                    }
                }
            }
        }
        out
    }

    /// Column `j` is `Σ_α v_{α j} ∇²φ_α(x_j) Δx_j`.
    pub fn weighted_second(&self, phi: &DMatrix<f64>, v: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.table.n;
        let mut out = DMatrix::zeros(n, phi.ncols());
        for j in 0..phi.ncols() {
            for k in 1..self.table.len() {
                let vk = v[(k, j)];
                if vk == 0.0 {
                    continue;
                }
                let a = &self.table.indices[k];
                for l in 0..n {
                    let Some(lo) = self.table.lower[k][l] else {
                        continue;
                    };
                    let al = a[l] as f64;
                    let b = &self.table.indices[lo];
                    for m in 0..n {
                        if let Some(lo2) = self.table.lower[lo][m] {
                            out[(l, j)] += vk * al * b[m] as f64 * phi[(lo2, j)] * dx[(m, j)];
                        }
                    }
                }
            }
        }
        out
    }
}

/// `Φ_d(X)` with the default size cap.
pub fn monomial_features(x: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    MonomialFeatureMap::new(x.nrows(), d)?.features(x)
}

fn kernel_power(base: &DMatrix<f64>, e: usize) -> DMatrix<f64> {
    base.map(|v| v.powi(e as i32))
}

/// Monomial kernel `(XᵀY + c·1)^{⊙d}`.
pub fn monomial_kernel(x: &DMatrix<f64>, y: &DMatrix<f64>, d: usize, c: f64) -> Result<DMatrix<f64>> {
    if x.nrows() != y.nrows() {
        return Err(crate::error::dim_err("monomial_kernel", x.shape(), y.shape()));
    }
    Ok(kernel_power(&(x.tr_mul(y)).add_scalar(c), d))
}

/// Monomial kernel lifting of degree `d` with offset `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonomialKernel {
    pub d: usize,
    pub c: f64,
}

impl MonomialKernel {
    pub fn new(d: usize, c: f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::Parameter("monomial kernel needs d >= 1".into()));
        }
        Ok(Self { d, c })
    }

    fn base(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x.tr_mul(x).add_scalar(self.c)
    }

    fn sym_cross(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let g = x.tr_mul(dx);
        &g + g.transpose()
    }
}

impl Kernel for MonomialKernel {
    fn name(&self) -> &'static str {
        "monomial_kernel"
    }

    fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        kernel_power(&self.base(x), self.d)
    }

    fn weighted_grad(&self, x: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
        let km1 = kernel_power(&self.base(x), self.d - 1);
        x * km1.component_mul(p) * (2.0 * self.d as f64)
    }

    fn gram_derivative(&self, x: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let km1 = kernel_power(&self.base(x), self.d - 1);
        km1.component_mul(&Self::sym_cross(x, dx)) * self.d as f64
    }

    fn weighted_hess(&self, x: &DMatrix<f64>, p: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.d as f64;
        let base = self.base(x);
        let km1 = kernel_power(&base, self.d - 1);
        let mut out = dx * km1.component_mul(p) * (2.0 * d);
        if self.d >= 2 {
            let km2 = kernel_power(&base, self.d - 2);
            let inner = km2.component_mul(&Self::sym_cross(x, dx)).component_mul(p);
            out += x * inner * (2.0 * d * (d - 1.0));
        }
        out
    }

    /// `a^d − b^d = (a − b) Σ_{i<d} a^i b^{d−1−i}` entrywise, with
    /// `a − b = XᵀD + DᵀX + DᵀD` formed without cancellation.
    fn gram_increment(&self, x: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let b = self.base(x);
        let db = Self::sym_cross(x, dx) + dx.tr_mul(dx);
        let a = &b + &db;
        DMatrix::from_fn(b.nrows(), b.ncols(), |i, j| {
            let (ai, bi) = (a[(i, j)], b[(i, j)]);
            let sum: f64 = (0..self.d)
                .map(|k| ai.powi(k as i32) * bi.powi((self.d - 1 - k) as i32))
                .sum();
            db[(i, j)] * sum
        })
    }
}

/// Gram matrix `Φ(X)ᵀΦ(X)` of the explicit unit-coefficient features, as a
/// kernel. Pairs the feature form and the trace form on identical data.
#[derive(Debug, Clone)]
pub struct FeatureGramKernel {
    map: MonomialFeatureMap,
}

impl FeatureGramKernel {
    pub fn new(map: MonomialFeatureMap) -> Self {
        Self { map }
    }

    fn phi(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.map
            .features(x)
            .expect("feature map dimension matches kernel input")
    }
}

impl Kernel for FeatureGramKernel {
    fn name(&self) -> &'static str {
        "feature_gram"
    }

    fn gram(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let phi = self.phi(x);
        phi.tr_mul(&phi)
    }

    fn weighted_grad(&self, x: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
        let phi = self.phi(x);
        self.map.vjp(&phi, &(&phi * p * 2.0))
    }

    fn gram_derivative(&self, x: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let phi = self.phi(x);
        let dphi = self.map.jvp(&phi, dx);
        let g = dphi.tr_mul(&phi);
        &g + g.transpose()
    }

    fn weighted_hess(&self, x: &DMatrix<f64>, p: &DMatrix<f64>, dx: &DMatrix<f64>) -> DMatrix<f64> {
        let phi = self.phi(x);
        let dphi = self.map.jvp(&phi, dx);
        self.map.weighted_second(&phi, &(&phi * p * 2.0), dx) + self.map.vjp(&phi, &(dphi * p * 2.0))
    }
}

/// Euclidean gradient in `X` of `trace(P_{W⊥} K_d(X, X))`:
/// `2d · X (K_{d−1} ⊙ P_{W⊥})`.
pub fn monomial_grad_x(x: &DMatrix<f64>, w: &GrassmannPoint, d: usize, c: f64) -> Result<DMatrix<f64>> {
    let k = MonomialKernel::new(d, c)?;
    check_shape("monomial_grad_x", w.basis(), (x.ncols(), w.rank()))?;
    Ok(k.weighted_grad(x, &w.complement_projector()))
}

/// Euclidean Hessian-vector product of `f(X, W) = trace(P_{W⊥} K_d(X, X))`
/// with the cross terms, returned as the `(X, W)` blocks.
pub fn monomial_hess(
    x: &DMatrix<f64>,
    w: &GrassmannPoint,
    d: usize,
    c: f64,
    dx: &DMatrix<f64>,
    dw: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = MonomialKernel::new(d, c)?;
    check_shape("monomial_hess dX", dx, x.shape())?;
    check_shape("monomial_hess dW", dw, w.basis().shape())?;
    Ok(super::kernel_trace_hess(&k, x, w.basis(), dx, dw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, numerical_rank, random_orthonormal};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn counts_match_reported_values() {
        assert_eq!(count_monomials(15, 2).unwrap(), 136);
        assert_eq!(count_monomials(20, 5).unwrap(), 53130);
        assert_eq!(count_monomials(20, 2).unwrap(), 231);
        assert_eq!(count_monomials(15, 1).unwrap(), 16);
        assert_eq!(count_monomials(15, 3).unwrap(), 816);
        assert_eq!(count_monomials(7, 0).unwrap(), 1);
    }

    #[test]
    fn count_overflow_is_error() {
        assert!(matches!(
            count_monomials(usize::MAX / 2, 3),
            Err(Error::Overflow { .. })
        ));
        assert!(count_monomials(1000, 1000).is_err());
    }

    #[test]
    fn table_is_graded_lex() {
        let t = MultiIndexTable::new(2, 2).unwrap();
        let got: Vec<Vec<u32>> = t.indices().to_vec();
        let want = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(got, want);
    }

    #[test]
    fn features_small_cases() {
        let x = DMatrix::from_element(1, 1, 2.0);
        let f = monomial_features(&x, 2).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 2.0, 4.0]);
        let x = DMatrix::from_column_slice(2, 1, &[3.0, 5.0]);
        let f = monomial_features(&x, 1).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 3.0, 5.0]);
    }

    #[test]
    fn features_cap_enforced() {
        assert!(matches!(
            MonomialFeatureMap::new(20, 5),
            Err(Error::TooLarge { size: 53130, .. })
        ));
    }

    #[test]
    fn kernel_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let x = gaussian_matrix(3, 4, &mut rng);
        let y = gaussian_matrix(3, 5, &mut rng);
        let k = monomial_kernel(&x, &y, 1, 0.0).unwrap();
        assert!((k - x.transpose() * &y).norm() < 1e-14);
        let k = monomial_kernel(
            &DMatrix::from_element(1, 1, 2.0),
            &DMatrix::from_element(1, 1, 3.0),
            2,
            1.0,
        )
        .unwrap();
        assert_eq!(k[(0, 0)], 49.0);
    }

    #[test]
    fn features_and_kernel_share_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for &(n, d, s) in &[(2usize, 2usize, 12usize), (3, 2, 20), (4, 2, 40), (3, 1, 10)] {
            // Columns on two lines so the rank is well below N.
            let b1 = random_orthonormal(n, 1, &mut rng);
            let b2 = random_orthonormal(n, 1, &mut rng);
            let mut x = DMatrix::zeros(n, s);
            for j in 0..s {
                let b = if j % 2 == 0 { &b1 } else { &b2 };
                x.set_column(j, &(b.column(0) * gaussian_matrix(1, 1, &mut rng)[(0, 0)]));
            }
            let phi = monomial_features(&x, d).unwrap();
            let gram = phi.transpose() * &phi;
            let k = monomial_kernel(&x, &x, d, 1.0).unwrap();
            assert_eq!(numerical_rank(&gram, 1e-8), numerical_rank(&k, 1e-8), "n={n} d={d}");
        }
    }

    #[test]
    fn feature_rank_bound_for_union_of_subspaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (n, s) = (6, 60);
        let mut x = DMatrix::zeros(n, s);
        let bases = [random_orthonormal(n, 2, &mut rng), random_orthonormal(n, 2, &mut rng)];
        for j in 0..s {
            let c = gaussian_matrix(2, 1, &mut rng);
            x.set_column(j, &(&bases[j * 2 / s] * c).column(0));
        }
        let phi = monomial_features(&x, 2).unwrap();
        assert!(numerical_rank(&phi, 1e-8) <= 2 * 6);
    }

    #[test]
    fn kernel_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let x = gaussian_matrix(4, 15, &mut rng);
        for d in 1..=3 {
            let k = monomial_kernel(&x, &x, d, 1.0).unwrap();
            assert!((&k - k.transpose()).norm() == 0.0);
            let (vals, _) = crate::linalg::sym_eig_desc(&k);
            assert!(vals.min() >= -1e-10 * k.norm());
        }
    }

    #[test]
    fn grad_vanishes_for_full_subspace_and_d1_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let x = gaussian_matrix(3, 5, &mut rng);
        let full = GrassmannPoint::from_orthonormal(DMatrix::identity(5, 5)).unwrap();
        assert!(monomial_grad_x(&x, &full, 2, 1.0).unwrap().norm() < 1e-12);
        let w = GrassmannPoint::from_orthonormal(random_orthonormal(5, 2, &mut rng)).unwrap();
        let g = monomial_grad_x(&x, &w, 1, 0.0).unwrap();
        let expected = &x * w.complement_projector() * 2.0;
        assert!((g - expected).norm() < 1e-12);
    }

    #[test]
    fn d1_hessian_has_no_curvature_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let x = gaussian_matrix(3, 5, &mut rng);
        let w = GrassmannPoint::from_orthonormal(random_orthonormal(5, 2, &mut rng)).unwrap();
        let dx = gaussian_matrix(3, 5, &mut rng);
        let (hx, _) = monomial_hess(&x, &w, 1, 1.0, &dx, &DMatrix::zeros(5, 2)).unwrap();
        let expected = &dx * w.complement_projector() * 2.0;
        assert!((hx - expected).norm() < 1e-12);
    }

    #[test]
    fn increment_is_accurate_for_small_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let x = gaussian_matrix(3, 6, &mut rng);
        let d = gaussian_matrix(3, 6, &mut rng) * 1e-9;
        let k = MonomialKernel::new(3, 1.0).unwrap();
        let inc = k.gram_increment(&x, &d);
        // First-order term dominates at this scale.
        let lin = k.gram_derivative(&x, &d);
        assert!((&inc - &lin).norm() <= 1e-7 * lin.norm());
        let big = gaussian_matrix(3, 6, &mut rng) * 0.3;
        let direct = k.gram(&(&x + &big)) - k.gram(&x);
        assert!((k.gram_increment(&x, &big) - &direct).norm() <= 1e-12 * direct.norm());
    }

    #[test]
    fn feature_gram_kernel_matches_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let x = gaussian_matrix(2, 5, &mut rng);
        let map = MonomialFeatureMap::new(2, 2).unwrap();
        let phi = map.features(&x).unwrap();
        let k = FeatureGramKernel::new(map);
        assert!((k.gram(&x) - phi.tr_mul(&phi)).norm() < 1e-12);
        let p = crate::linalg::random_orthonormal(5, 2, &mut rng);
        let p = DMatrix::identity(5, 5) - &p * p.transpose();
        let e = gaussian_matrix(2, 5, &mut rng);
        let f = |x: &DMatrix<f64>| (k.gram(x) * &p).trace();
        let h = 1e-5;
        let fd = (f(&(&x + &e * h)) - f(&(&x - &e * h))) / (2.0 * h);
        let an = k.weighted_grad(&x, &p).dot(&e);
        assert!((fd - an).abs() <= 1e-7 * (1.0 + an.abs()));
        let g = |x: &DMatrix<f64>| k.weighted_grad(x, &p);
        let fdh = (g(&(&x + &e * h)) - g(&(&x - &e * h))) / (2.0 * h);
        let anh = k.weighted_hess(&x, &p, &e);
        assert!((fdh - &anh).norm() <= 1e-6 * (1.0 + anh.norm()));
    }
}
