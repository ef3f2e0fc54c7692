//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Frobenius inner product `trace(aᵀ b)`.
#[inline]
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Q factor of the thin QR decomposition with the sign of each column chosen so
/// that R has a positive diagonal.
pub fn qf(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if cols > rows {
        return Err(Error::Parameter(format!("qf needs a tall matrix, got {rows}x{cols}")));
    }
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    let scale = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let mut min_pivot = f64::INFINITY;
    for j in 0..cols {
        let d = r[(j, j)];
        min_pivot = min_pivot.min(d.abs());
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if cols > 0 && (scale == 0.0 || min_pivot <= 1e-12 * scale || !min_pivot.is_finite()) {
        return Err(Error::DegenerateRetraction(min_pivot));
    }
    Ok(q)
}

/// Orthonormal basis of the column space of `a` by Gram–Schmidt with column
/// norm pivoting and one re-orthogonalisation pass.
///
/// Returns the basis and the pivot magnitudes `|R_ii|` in pivot order. A pivot
/// below `1e-12 · |R_11|` is reported as rank deficiency.
pub fn pivoted_orthonormal_basis(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (rows, cols) = a.shape();
    if cols > rows {
        return Err(Error::RankDeficient {
            index: rows,
            pivot: 0.0,
        });
    }
    let mut work = a.clone();
    let mut q = DMatrix::<f64>::zeros(rows, cols);
    let mut pivots = Vec::with_capacity(cols);
    let mut used = vec![false; cols];
    let mut first = 0.0;
    for i in 0..cols {
        let (best, norm) = (0..cols)
            .filter(|&j| !used[j])
            .map(|j| (j, work.column(j).norm()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if i == 0 {
            first = norm;
        }
        if !(norm > 1e-12 * first) || first == 0.0 {
            return Err(Error::RankDeficient { index: i, pivot: norm });
        }
        used[best] = true;
        let mut v: DVector<f64> = work.column(best).into();
        for _ in 0..2 {
            for k in 0..i {
                let qk = q.column(k);
                let c = qk.dot(&v);
                v.axpy(-c, &qk, 1.0);
            }
        }
        let vn = v.norm();
        v /= vn;
        q.set_column(i, &v);
        pivots.push(norm);
        for j in 0..cols {
            if !used[j] {
                let c = v.dot(&work.column(j));
                let mut col = work.column_mut(j);
                col.axpy(-c, &v, 1.0);
            }
        }
    }
    Ok((q, pivots))
}

/// Thin SVD `Y = U diag(σ) Vᵀ` with singular values in descending order.
///
/// One-sided Jacobi rotations on the columns of `Y` (or `Yᵀ` when wide).
/// nalgebra's bidiagonal SVD returns inconsistent factors on a few percent of
/// rank-deficient inputs, which is exactly the regime of lifted matrices
/// near a solution.
pub fn svd_desc(y: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("SVD of a non-finite matrix".into()));
    }
    if y.nrows() < y.ncols() {
        let (u, s, vt) = svd_desc(&y.transpose())?;
        return Ok((vt.transpose(), s, u.transpose()));
    }
    let (m, n) = y.shape();
    let mut w = y.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    // Rounding in the inner products is about m·ε relative; columns below
    // ε‖Y‖ are numerically zero and left alone.
    let tol = f64::EPSILON * m as f64;
    let negligible = (f64::EPSILON * y.norm()).powi(2);
    let mut converged = n < 2;
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if alpha <= negligible || beta <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical("Jacobi SVD did not converge".into()));
    }
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let cutoff = norms.iter().cloned().fold(0.0, f64::max) * f64::EPSILON * m.max(n) as f64;
    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut sv = DVector::zeros(n);
    let mut filled = 0;
    for (dst, &src) in order.iter().enumerate() {
        sv[dst] = norms[src];
        vs.set_column(dst, &v.column(src));
        if norms[src] > cutoff {
            u.set_column(dst, &(w.column(src) / norms[src]));
            filled = dst + 1;
        }
    }
    complete_orthonormal(&mut u, filled);
    Ok((u, sv, vs.transpose()))
}

const JACOBI_SWEEPS: usize = 80;

fn rotate_columns(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.nrows() {
        let (ap, aq) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = c * ap - s * aq;
        a[(i, q)] = s * ap + c * aq;
    }
}

/// Fills columns `from..` of `u` with unit vectors orthogonal to the earlier
/// columns, drawn from the standard basis by modified Gram-Schmidt.
fn complete_orthonormal(u: &mut DMatrix<f64>, from: usize) {
    let (m, n) = u.shape();
    let mut col = from;
    let mut e = 0;
    while col < n && e < m {
        let mut cand = DVector::<f64>::zeros(m);
        cand[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for j in 0..col {
                let proj = u.column(j).dot(&cand);
                cand -= u.column(j) * proj;
            }
        }
        let nrm = cand.norm();
        if nrm > 1e-8 {
            u.set_column(col, &(cand / nrm));
            col += 1;
        }
    }
}

/// Singular values only, descending.
pub fn singular_values(y: &DMatrix<f64>) -> DVector<f64> {
    let mut s = y.clone().singular_values();
    let mut v: Vec<f64> = s.iter().copied().collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s.copy_from_slice(&v);
    s
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
pub fn sym_eig_desc(k: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (k + k.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random orthonormal `p×r` basis (Q factor of a Gaussian matrix).
pub fn random_orthonormal<R: Rng + ?Sized>(p: usize, r: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let g = gaussian_matrix(p, r, rng);
        if let Ok(q) = qf(&g) {
            return q;
        }
    }
}

/// Random orthogonal `r×r` matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(r: usize, rng: &mut R) -> DMatrix<f64> {
    random_orthonormal(r, r, rng)
}

/// Count of singular values at or above `rel_tol · σ₁`.
pub fn numerical_rank(y: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(y);
    if s.is_empty() || s[0] == 0.0 {
        return 0;
    }
    let cut = rel_tol * s[0];
    s.iter().filter(|&&v| v >= cut).count()
}
