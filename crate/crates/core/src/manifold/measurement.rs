use nalgebra::{DMatrix, DVector};

use crate::error::{check_shape, Error, Result};
use crate::linalg::pivoted_orthonormal_basis;

/// How the linear measurements `A(X)` are taken.
#[derive(Debug, Clone)]
pub enum Sensing {
    /// Matrix completion: `A(X)` reads the entries listed in `omega`.
    EntryMask {
        /// Observed indices, sorted in column-major order.
        omega: Vec<(usize, usize)>,
        /// `true` on observed entries.
        mask: DMatrix<bool>,
    },
    /// Dense sensing: `A(X) = A vec(X)` with `vec` stacking columns.
    Dense {
        a: DMatrix<f64>,
        /// Orthonormal basis of `range(Aᵀ)`; `None` when `m > n·s`.
        q: Option<DMatrix<f64>>,
    },
}

/// The affine set `{X ∈ R^{n×s} : A(X) = b}`.
#[derive(Debug, Clone)]
pub struct MeasurementSubspace {
    n: usize,
    s: usize,
    sensing: Sensing,
    b: DVector<f64>,
}

/// A tangent vector of the measurement subspace: `A(Δ) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTangent(pub DMatrix<f64>);

impl MeasurementSubspace {
    /// Entry-sampling operator. `omega` indices must be unique and in range;
    /// `values[i]` is the observation at `omega[i]`.
    pub fn entry_mask(n: usize, s: usize, omega: &[(usize, usize)], values: &[f64]) -> Result<Self> {
        if omega.len() != values.len() {
            return Err(Error::Parameter(format!(
                "{} indices but {} values",
                omega.len(),
                values.len()
            )));
        }
        let mut mask = DMatrix::from_element(n, s, false);
        let mut dense = DMatrix::<f64>::zeros(n, s);
        for (&(i, j), &v) in omega.iter().zip(values) {
            if i >= n || j >= s {
                return Err(Error::Parameter(format!("index ({i}, {j}) outside {n}x{s}")));
            }
            if mask[(i, j)] {
                return Err(Error::Parameter(format!("duplicate index ({i}, {j})")));
            }
            mask[(i, j)] = true;
            dense[(i, j)] = v;
        }
        Ok(Self::from_mask(mask, &dense))
    }

    /// Entry-sampling operator observing `target` on the `true` entries of `mask`.
    pub fn from_mask(mask: DMatrix<bool>, target: &DMatrix<f64>) -> Self {
        let (n, s) = mask.shape();
        let mut omega = Vec::new();
        let mut b = Vec::new();
        for j in 0..s {
            for i in 0..n {
                if mask[(i, j)] {
                    omega.push((i, j));
                    b.push(target[(i, j)]);
                }
            }
        }
        Self {
            n,
            s,
            sensing: Sensing::EntryMask { omega, mask },
            b: DVector::from_vec(b),
        }
    }

    /// Dense sensing operator `A ∈ R^{m×(n·s)}` with right-hand side `b`.
    ///
    /// For `m ≤ n·s` an orthonormal basis of `range(Aᵀ)` is computed by
    /// norm-pivoted QR and rank deficiency is rejected. For `m > n·s` the
    /// system is overdetermined: only the penalised formulation can use it.
    pub fn dense(n: usize, s: usize, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.ncols() != n * s {
            return Err(crate::error::dim_err("dense sensing", (a.nrows(), n * s), a.shape()));
        }
        if b.len() != a.nrows() {
            return Err(Error::Dimension {
                context: "dense sensing rhs",
                expected: a.nrows().to_string(),
                got: b.len().to_string(),
            });
        }
        let q = if a.nrows() <= n * s {
            let (q, _) = pivoted_orthonormal_basis(&a.transpose())?;
            Some(q)
        } else {
            None
        };
        Ok(Self {
            n,
            s,
            sensing: Sensing::Dense { a, q },
            b,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.s
    }

    /// Number of measurements.
    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn sensing(&self) -> &Sensing {
        &self.sensing
    }

    /// Same operator with a different right-hand side.
    pub fn with_rhs(&self, b: DVector<f64>) -> Result<Self> {
        if b.len() != self.m() {
            return Err(Error::Dimension {
                context: "with_rhs",
                expected: self.m().to_string(),
                got: b.len().to_string(),
            });
        }
        Ok(Self { b, ..self.clone() })
    }

    /// Cached orthonormal basis of `range(Aᵀ)` (dense sensing only).
    pub fn range_basis(&self) -> Option<&DMatrix<f64>> {
        match &self.sensing {
            Sensing::Dense { q, .. } => q.as_ref(),
            Sensing::EntryMask { .. } => None,
        }
    }

    /// `A(X)`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_shape("measurement apply", x, (self.n, self.s))?;
        Ok(match &self.sensing {
            Sensing::EntryMask { omega, .. } => {
                DVector::from_iterator(omega.len(), omega.iter().map(|&(i, j)| x[(i, j)]))
            }
            Sensing::Dense { a, .. } => a * DVector::from_column_slice(x.as_slice()),
        })
    }

    /// Adjoint `Aᵀ(y)` as an `n×s` matrix.
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        if y.len() != self.m() {
            return Err(Error::Dimension {
                context: "measurement adjoint",
                expected: self.m().to_string(),
                got: y.len().to_string(),
            });
        }
        Ok(match &self.sensing {
            Sensing::EntryMask { omega, .. } => {
                let mut out = DMatrix::zeros(self.n, self.s);
                for (&(i, j), &v) in omega.iter().zip(y.iter()) {
                    out[(i, j)] = v;
                }
                out
            }
            Sensing::Dense { a, .. } => {
                let v = a.tr_mul(y);
                DMatrix::from_column_slice(self.n, self.s, v.as_slice())
            }
        })
    }

    /// `A(X) − b`.
    pub fn residual(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.apply(x)? - &self.b)
    }

    /// Orthogonal projection onto `null(A)`, the tangent space of the set.
    pub fn project(&self, delta: &DMatrix<f64>) -> Result<AffineTangent> {
        check_shape("meas_project", delta, (self.n, self.s))?;
        match &self.sensing {
            Sensing::EntryMask { mask, .. } => {
                let mut out = delta.clone();
                out.iter_mut()
                    .zip(mask.iter())
                    .filter(|(_, &m)| m)
                    .for_each(|(v, _)| *v = 0.0);
                Ok(AffineTangent(out))
            }
            Sensing::Dense { q, .. } => {
                let q = q.as_ref().ok_or_else(overdetermined)?;
                let v = DVector::from_column_slice(delta.as_slice());
                let coeff = q.tr_mul(&v);
                let out = v - q * coeff;
                Ok(AffineTangent(DMatrix::from_column_slice(
                    self.n,
                    self.s,
                    out.as_slice(),
                )))
            }
        }
    }

    /// A point of the set: the observations with zeros elsewhere for entry
    /// sampling, the minimum-norm solution `Aᵀ(AAᵀ)⁻¹b` for dense sensing.
    pub fn feasible_point(&self) -> Result<DMatrix<f64>> {
        match &self.sensing {
            Sensing::EntryMask { .. } => self.adjoint(&self.b),
            Sensing::Dense { a, q } => {
                let q = q.as_ref().ok_or_else(overdetermined)?;
                let aq = a * q;
                let y = aq
                    .lu()
                    .solve(&self.b)
                    .ok_or_else(|| Error::RankDeficient { index: 0, pivot: 0.0 })?;
                let x = q * y;
                Ok(DMatrix::from_column_slice(self.n, self.s, x.as_slice()))
            }
        }
    }

    /// Whether `x` satisfies `A(x) = b` to `tol · (1 + ‖b‖)`.
    pub fn is_feasible(&self, x: &DMatrix<f64>, tol: f64) -> bool {
        self.residual(x)
            .map(|r| r.norm() <= tol * (1.0 + self.b.norm()))
            .unwrap_or(false)
    }
}

fn overdetermined() -> Error {
    Error::Parameter("overdetermined sensing (m > n·s) has no tangent space".into())
}
