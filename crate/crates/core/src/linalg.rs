//! Dense linear-algebra helpers and the [`SpdMatrix`] newtype.
//!
//! Determinants are only ever taken in the log domain through a Cholesky
//! factor; raw determinants overflow long before the dimensions we care about
//! become interesting.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{lit, scaled_tol, to_f64, Real};

/// Relative tolerance on `‖M − Mᵀ‖` accepted by [`SpdMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Condition number above which `B A B*` is reported as ill-conditioned.
pub const CONDITION_LIMIT: f64 = 1e14;

/// Symmetric positive-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix<T: Real>(DMatrix<T>);

impl<T: Real> SpdMatrix<T> {
    /// Validates symmetry (relative [`SYMMETRY_TOL`]) and positive definiteness.
    /// The stored matrix is the exact symmetric part of `m`.
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::NotSpd(format!(
                "{}x{} is not square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::NotSpd("empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSpd("non-finite entry".into()));
        }
        let scale = m.amax();
        let asym = (&m - m.transpose()).amax();
        if asym > scaled_tol::<T>(SYMMETRY_TOL) * scale {
            return Err(Error::NotSpd(format!("asymmetry {:e}", to_f64(asym))));
        }
        Self::from_computed(m)
    }

    /// Symmetrizes and checks definiteness, skipping the symmetry tolerance.
    /// Used for matrices produced by our own arithmetic.
    pub(crate) fn from_computed(m: DMatrix<T>) -> Result<Self> {
        let s = symmetrize(&m);
        if Cholesky::new(s.clone()).is_none() {
            return Err(Error::NotSpd("Cholesky factorization failed".into()));
        }
        Ok(Self(s))
    }

    pub fn from_row_slice(n: usize, data: &[T]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!(
                "{} entries for a {n}x{n} matrix",
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn from_diagonal(d: &[T]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.0
    }

    fn cholesky(&self) -> Cholesky<T, Dyn> {
        Cholesky::new(self.0.clone()).expect("definiteness checked at construction")
    }

    /// Lower-triangular Cholesky factor `L` with `L Lᵀ = self`.
    pub fn cholesky_factor(&self) -> DMatrix<T> {
        self.cholesky().l()
    }

    /// `log det`, from the Cholesky diagonal.
    pub fn log_det(&self) -> T {
        let l = self.cholesky().l();
        lit::<T>(2.0) * l.diagonal().iter().fold(T::zero(), |acc, d| acc + d.ln())
    }

    pub fn inverse(&self) -> Self {
        Self(symmetrize(&self.cholesky().inverse()))
    }

    /// Solves `self · X = rhs`.
    pub fn solve(&self, rhs: &DMatrix<T>) -> DMatrix<T> {
        self.cholesky().solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &DVector<T>) -> DVector<T> {
        self.cholesky().solve(rhs)
    }

    pub fn scaled(&self, lambda: T) -> Self {
        assert!(lambda > T::zero(), "SPD scaling factor must be positive");
        Self(&self.0 * lambda)
    }

    pub fn eigenvalues(&self) -> DVector<T> {
        SymmetricEigen::new(self.0.clone()).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().min()
    }

    pub fn condition_number(&self) -> T {
        let ev = self.eigenvalues();
        ev.max() / ev.min()
    }

    /// Rescales to unit determinant.
    pub fn det_normalized(&self) -> Self {
        let n: T = lit(self.dim() as f64);
        self.scaled((-self.log_det() / n).exp())
    }

    /// Quadratic form `⟨M x, x⟩`.
    pub fn quad(&self, x: &DVector<T>) -> T {
        x.dot(&(&self.0 * x))
    }

    /// Row-major entries.
    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.0
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

pub(crate) fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top <= T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Orthonormal basis (as columns) of the range of `m`, with the rank decided by
/// [`numerical_rank`].
pub fn range_basis<T: Real>(m: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let r = numerical_rank(m, rel_tol);
    let gram = m * m.transpose();
    eigen_columns(&gram, 0..r)
}

/// Orthonormal basis (as columns) of the kernel of `m`.
pub fn kernel_basis<T: Real>(m: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let r = numerical_rank(m, rel_tol);
    let gram = m.transpose() * m;
    eigen_columns(&gram, r..m.ncols())
}

/// Orthonormal basis of the orthogonal complement of the column span of
/// `basis` (assumed orthonormal) inside `ℝⁿ`, `n = basis.nrows()`.
pub fn orthogonal_complement<T: Real>(basis: &DMatrix<T>) -> DMatrix<T> {
    let n = basis.nrows();
    let k = basis.ncols();
    let proj = DMatrix::identity(n, n) - basis * basis.transpose();
    eigen_columns(&proj, 0..n.saturating_sub(k))
}

/// Eigenvectors of the symmetric PSD `gram` ranked by descending eigenvalue,
/// restricted to the positions in `range`. Each column is sign-normalized so
/// its first non-negligible entry is positive.
fn eigen_columns<T: Real>(gram: &DMatrix<T>, range: std::ops::Range<usize>) -> DMatrix<T> {
    let n = gram.nrows();
    if n == 0 || range.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    let eig = SymmetricEigen::new(symmetrize(gram));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let picked = &order[range];
    let mut out = DMatrix::zeros(n, picked.len());
    let tiny: T = lit(1e-8);
    for (k, &j) in picked.iter().enumerate() {
        let mut col = eig.eigenvectors.column(j).clone_owned();
        if let Some(first) = col.iter().find(|v| v.abs() > tiny).copied() {
            if first < T::zero() {
                col = -col;
            }
        }
        out.set_column(k, &col);
    }
    out
}

/// Matrix exponential of a symmetric matrix.
pub fn sym_exp<T: Real>(s: &DMatrix<T>) -> DMatrix<T> {
    sym_apply(s, |x| x.exp())
}

/// Principal logarithm of an SPD matrix.
pub fn sym_log<T: Real>(a: &SpdMatrix<T>) -> DMatrix<T> {
    sym_apply(a.as_matrix(), |x| x.ln())
}

/// Principal square root of an SPD matrix.
pub fn sym_sqrt<T: Real>(a: &SpdMatrix<T>) -> DMatrix<T> {
    sym_apply(a.as_matrix(), |x| x.max(T::zero()).sqrt())
}

fn sym_apply<T: Real>(s: &DMatrix<T>, f: impl Fn(T) -> T) -> DMatrix<T> {
    let eig = SymmetricEigen::new(symmetrize(s));
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    symmetrize(&(v * d * v.transpose()))
}

/// Fréchet derivative of the matrix exponential at symmetric `s` applied to
/// symmetric `h`, via first divided differences of `exp` in the eigenbasis.
pub fn dexp<T: Real>(s: &DMatrix<T>, h: &DMatrix<T>) -> DMatrix<T> {
    let eig = SymmetricEigen::new(symmetrize(s));
    let v = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let mut ht = v.transpose() * h * v;
    let n = s.nrows();
    let tiny: T = lit(1e-12);
    for j in 0..n {
        for k in 0..n {
            let (a, b) = (lam[j], lam[k]);
            let d = a - b;
            let w = if d.abs() <= tiny {
                ((a + b) * lit::<T>(0.5)).exp()
            } else {
                b.exp() * d.exp_m1() / d
            };
            ht[(j, k)] *= w;
        }
    }
    symmetrize(&(v * ht * v.transpose()))
}

pub fn frobenius<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}
