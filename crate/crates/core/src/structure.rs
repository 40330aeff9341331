//! Splitting a datum along a subspace `E`.
//!
//! The restriction acts on `E` with maps `Bᵢ|_E : E → BᵢE`; the quotient acts
//! on `E^⊥` with `qᵢ ∘ Bᵢ`, `qᵢ` the orthogonal projection onto `(BᵢE)^⊥`. All
//! spaces are expressed in orthonormal bases, so the sub-data are ordinary
//! matrix data. When `E` is critical, `dim E = Σ cᵢ dim(BᵢE)`, the constant
//! factorizes as `C = C_E · C_{E^⊥}`.

use nalgebra::DMatrix;

use crate::datum::{BLDatum, LinearFactor, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::gaussian_solver::{solve, SolveOptions};
use crate::linalg::{numerical_rank, orthogonal_complement, range_basis};
use crate::scalar::{lit, scaled_tol, to_f64, Real};

/// Tolerance for `basisᵀ basis = id`.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

/// A proper subspace `E ⊂ ℝⁿ` given by an orthonormal basis (as columns).
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace<T: Real> {
    basis: DMatrix<T>,
}

impl<T: Real> Subspace<T> {
    pub fn new(basis: DMatrix<T>) -> Result<Self> {
        let (n, k) = basis.shape();
        if k == 0 || k >= n {
            return Err(Error::Domain(format!(
                "subspace of dimension {k} in R^{n} is not proper and non-trivial"
            )));
        }
        let err = (basis.transpose() * &basis - DMatrix::identity(k, k)).amax();
        if err > scaled_tol(ORTHONORMAL_TOL) {
            return Err(Error::Domain(format!(
                "basis is not orthonormal (error {:e})",
                to_f64(err)
            )));
        }
        Ok(Self { basis })
    }

    /// Orthonormalizes the span of the given vectors (rows).
    pub fn spanned_by(n: usize, rows: &[Vec<T>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!(
                "subspace vectors must have length {n}"
            )));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        let vectors = DMatrix::from_row_slice(rows.len(), n, &flat).transpose();
        Self::new(range_basis(&vectors, scaled_tol(DEFAULT_TOL)))
    }

    /// Span of the listed coordinate axes.
    pub fn coordinate(n: usize, axes: &[usize]) -> Result<Self> {
        let mut basis = DMatrix::zeros(n, axes.len());
        for (j, &ax) in axes.iter().enumerate() {
            if ax >= n {
                return Err(Error::Shape(format!("axis {ax} out of range for R^{n}")));
            }
            basis[(ax, j)] = T::one();
        }
        Self::new(basis)
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthonormal basis of `E^⊥`.
    pub fn complement_basis(&self) -> DMatrix<T> {
        orthogonal_complement(&self.basis)
    }
}

fn check_ambient<T: Real>(datum: &BLDatum<T>, e: &Subspace<T>) -> Result<()> {
    if e.ambient_dim() != datum.n() {
        return Err(Error::Shape(format!(
            "subspace lives in R^{}, datum in R^{}",
            e.ambient_dim(),
            datum.n()
        )));
    }
    Ok(())
}

/// Datum on `E`: factor `i` becomes `Vᵢᵀ Bᵢ U`, `U` the basis of `E` and `Vᵢ`
/// an orthonormal basis of `BᵢE`. Factors vanishing on `E` are kept as zero
/// maps `Bᵢ U`.
pub fn restrict<T: Real>(datum: &BLDatum<T>, e: &Subspace<T>) -> Result<BLDatum<T>> {
    check_ambient(datum, e)?;
    let tol = scaled_tol(DEFAULT_TOL);
    let factors = datum
        .factors()
        .iter()
        .map(|f| {
            let image = f.map() * e.basis();
            let v = range_basis(&image, tol);
            let map = if v.ncols() == 0 || f.is_zero_map() {
                DMatrix::zeros(f.target_dim(), e.dim())
            } else {
                v.transpose() * image
            };
            LinearFactor::new(f.c(), map)
        })
        .collect::<Result<Vec<_>>>()?;
    BLDatum::new(e.dim(), factors)
}

/// Datum on `E^⊥`: factor `i` becomes `Pᵢᵀ Bᵢ W`, `W` a basis of `E^⊥` and `Pᵢ`
/// an orthonormal basis of `(BᵢE)^⊥`. Factors with `BᵢE` the whole target
/// have a zero-dimensional target and are dropped.
pub fn quotient<T: Real>(datum: &BLDatum<T>, e: &Subspace<T>) -> Result<BLDatum<T>> {
    check_ambient(datum, e)?;
    let tol = scaled_tol(DEFAULT_TOL);
    let w = e.complement_basis();
    let mut factors = Vec::new();
    for f in datum.factors() {
        let image_basis = range_basis(&(f.map() * e.basis()), tol);
        let p = orthogonal_complement(&image_basis);
        if p.ncols() == 0 {
            continue;
        }
        factors.push(LinearFactor::new(f.c(), p.transpose() * f.map() * &w)?);
    }
    if factors.is_empty() {
        return Err(Error::EmptyDatum);
    }
    BLDatum::new(w.ncols(), factors)
}

/// `dim(BᵢE)` for each factor.
pub fn image_dims<T: Real>(datum: &BLDatum<T>, e: &Subspace<T>) -> Vec<usize> {
    let tol = scaled_tol(DEFAULT_TOL);
    datum
        .factors()
        .iter()
        .map(|f| {
            if f.is_zero_map() {
                0
            } else {
                numerical_rank(&(f.map() * e.basis()), tol)
            }
        })
        .collect()
}

/// `|dim E − Σ cᵢ dim(BᵢE)| ≤ tol`.
pub fn is_critical<T: Real>(datum: &BLDatum<T>, e: &Subspace<T>, tol: T) -> Result<bool> {
    check_ambient(datum, e)?;
    let weighted = datum
        .factors()
        .iter()
        .zip(image_dims(datum, e))
        .fold(T::zero(), |acc, (f, d)| acc + f.c() * lit(d as f64));
    Ok((lit::<T>(e.dim() as f64) - weighted).abs() <= tol)
}

/// Nonempty proper coordinate subspaces of `ℝⁿ`, as axis lists.
pub fn coordinate_subsets(n: usize) -> Vec<Vec<usize>> {
    (1..(1u32 << n) - 1)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Multiplicativity<T> {
    pub constant: T,
    pub restricted: T,
    pub quotient: T,
    /// `|C − C_E C_{E^⊥}| / C`
    pub gap: T,
}

/// Solves the full, restricted and quotient data and compares the constants.
pub fn multiplicativity_check<T: Real>(
    datum: &BLDatum<T>,
    e: &Subspace<T>,
    tol: T,
) -> Result<Multiplicativity<T>> {
    if !is_critical(datum, e, tol)? {
        return Err(Error::Domain("subspace is not critical".into()));
    }
    let opts = SolveOptions::default();
    let solve_named = |name: &str, d: &BLDatum<T>| -> Result<T> {
        let r = solve(d, &opts)?;
        match (r.converged, r.constant.value()) {
            (true, Some(c)) => Ok(c),
            _ => Err(Error::NotConverged(name.to_string())),
        }
    };
    let sub = restrict(datum, e)?;
    let quo = quotient(datum, e)?;
    let (full, (restricted, quotient)) = rayon::join(
        || solve_named("full", datum),
        || {
            rayon::join(
                || solve_named("restricted", &sub),
                || solve_named("quotient", &quo),
            )
        },
    );
    let (constant, restricted, quotient) = (full?, restricted?, quotient?);
    let gap = (constant - restricted * quotient).abs() / constant;
    Ok(Multiplicativity {
        constant,
        restricted,
        quotient,
        gap,
    })
}
