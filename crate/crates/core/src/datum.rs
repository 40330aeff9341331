//! Brascamp-Lieb data: exponents paired with linear maps, plus the structural
//! diagnostics (homogeneity, degeneracy, frame condition) every solver needs.
//!
//! A factor whose map is identically zero is legal. It is kept in the datum
//! and reported in [`DatumDiagnostics::zero_map_indices`], but it is ignored
//! by every computation (rank, homogeneity, constants, extremizers).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::numerical_rank;
use crate::scalar::{lit, scaled_tol, to_f64, Real};

/// Relative singular-value cutoff for numerical rank.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Max-abs entry at or below which a map counts as the zero map.
pub const ZERO_MAP_TOL: f64 = 1e-14;
/// Largest `|Σ cᵢnᵢ − n|` the solvers accept.
pub const HOMOGENEITY_TOL: f64 = 1e-9;

/// One pair `(cᵢ, Bᵢ)` with `Bᵢ : ℝⁿ → ℝ^{nᵢ}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFactor<T: Real> {
    c: T,
    map: DMatrix<T>,
}

impl<T: Real> LinearFactor<T> {
    pub fn new(c: T, map: DMatrix<T>) -> Result<Self> {
        if !(c > T::zero()) || !c.is_finite() {
            return Err(Error::NonPositiveExponent {
                index: 0,
                c: to_f64(c),
            });
        }
        if map.nrows() == 0 {
            return Err(Error::Shape("factor map has no rows".into()));
        }
        Ok(Self { c, map })
    }

    pub fn from_rows(c: T, rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged factor rows".into()));
        }
        let flat: Vec<T> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(c, DMatrix::from_row_slice(rows.len(), cols, &flat))
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn map(&self) -> &DMatrix<T> {
        &self.map
    }

    /// `nᵢ`, the dimension of the target space.
    pub fn target_dim(&self) -> usize {
        self.map.nrows()
    }

    pub fn is_zero_map(&self) -> bool {
        self.map.amax() <= scaled_tol::<T>(ZERO_MAP_TOL)
    }
}

/// A Brascamp-Lieb datum on `ℝⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct BLDatum<T: Real> {
    n: usize,
    factors: Vec<LinearFactor<T>>,
}

impl<T: Real> BLDatum<T> {
    pub fn new(n: usize, factors: Vec<LinearFactor<T>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::ZeroDimension);
        }
        if factors.is_empty() {
            return Err(Error::EmptyDatum);
        }
        for (index, f) in factors.iter().enumerate() {
            if f.map.ncols() != n {
                return Err(Error::ColumnMismatch {
                    index,
                    cols: f.map.ncols(),
                    expected: n,
                });
            }
        }
        Ok(Self { n, factors })
    }

    /// Builds a datum from `(c, rows)` pairs.
    pub fn from_rows(n: usize, factors: &[(T, &[&[T]])]) -> Result<Self> {
        let fs = factors
            .iter()
            .enumerate()
            .map(|(index, (c, rows))| {
                LinearFactor::from_rows(*c, rows).map_err(|e| match e {
                    Error::NonPositiveExponent { c, .. } => Error::NonPositiveExponent { index, c },
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, fs)
    }

    /// The one-dimensional datum `(½, id), (½, id)`.
    pub fn prekopa_leindler() -> Self {
        let half = lit(0.5);
        let id = DMatrix::identity(1, 1);
        Self {
            n: 1,
            factors: vec![
                LinearFactor {
                    c: half,
                    map: id.clone(),
                },
                LinearFactor { c: half, map: id },
            ],
        }
    }

    /// `m = n`, `cᵢ = 1`, `Bᵢ x = xᵢ`. Its Gaussian dual form is Hadamard's inequality.
    pub fn coordinate(n: usize) -> Self {
        assert!(n > 0, "coordinate datum needs n > 0");
        let factors = (0..n)
            .map(|i| {
                let mut b = DMatrix::zeros(1, n);
                b[(0, i)] = T::one();
                LinearFactor {
                    c: T::one(),
                    map: b,
                }
            })
            .collect();
        Self { n, factors }
    }

    /// Datum on `ℝ^{n₁+n₂}` acting blockwise: the maps of `self` see the first
    /// block, those of `other` the second.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let n = self.n + other.n;
        let mut factors = Vec::with_capacity(self.factors.len() + other.factors.len());
        for f in &self.factors {
            let mut b = DMatrix::zeros(f.target_dim(), n);
            b.view_mut((0, 0), (f.target_dim(), self.n))
                .copy_from(&f.map);
            factors.push(LinearFactor { c: f.c, map: b });
        }
        for f in &other.factors {
            let mut b = DMatrix::zeros(f.target_dim(), n);
            b.view_mut((0, self.n), (f.target_dim(), other.n))
                .copy_from(&f.map);
            factors.push(LinearFactor { c: f.c, map: b });
        }
        Self { n, factors }
    }

    /// Returns a copy with `Bᵢ` replaced by `Bᵢ Q`.
    pub fn compose_right(&self, q: &DMatrix<T>) -> Result<Self> {
        if q.nrows() != self.n {
            return Err(Error::Shape(format!(
                "right factor has {} rows, expected {}",
                q.nrows(),
                self.n
            )));
        }
        let factors = self
            .factors
            .iter()
            .map(|f| LinearFactor {
                c: f.c,
                map: &f.map * q,
            })
            .collect();
        Self::new(q.ncols(), factors)
    }

    pub fn with_factor(mut self, factor: LinearFactor<T>) -> Result<Self> {
        self.factors.push(factor);
        Self::new(self.n, self.factors)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factors(&self) -> &[LinearFactor<T>] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Factors taking part in computations (non-zero maps), with their indices.
    pub fn active(&self) -> impl Iterator<Item = (usize, &LinearFactor<T>)> + '_ {
        self.factors
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.is_zero_map())
    }

    pub fn active_count(&self) -> usize {
        self.active().count()
    }

    /// `Σ cᵢnᵢ` over active factors.
    pub fn scaling_dimension(&self) -> T {
        self.active().fold(T::zero(), |acc, (_, f)| {
            acc + f.c * lit(f.target_dim() as f64)
        })
    }

    /// Rows of every active `Bᵢ` stacked into one `N × n` matrix.
    pub fn stacked_maps(&self) -> DMatrix<T> {
        let total: usize = self.active().map(|(_, f)| f.target_dim()).sum();
        let mut out = DMatrix::zeros(total, self.n);
        let mut row = 0;
        for (_, f) in self.active() {
            out.view_mut((row, 0), (f.target_dim(), self.n))
                .copy_from(&f.map);
            row += f.target_dim();
        }
        out
    }
}

/// Structural facts about a datum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatumDiagnostics<T: Real> {
    /// `Σ cᵢnᵢ − n` over non-zero maps.
    pub homogeneity_defect: T,
    /// Stacked adjoints `[B₁* … B_m*]` fail to span `ℝⁿ`.
    pub degenerate: bool,
    pub frame: bool,
    pub zero_map_indices: Vec<usize>,
    pub stacked_rank: usize,
}

impl<T: Real> DatumDiagnostics<T> {
    pub fn is_homogeneous(&self) -> bool {
        self.homogeneity_defect.abs() <= scaled_tol(HOMOGENEITY_TOL)
    }
}

/// Checks that every non-zero map is onto and computes the diagnostics.
pub fn validate<T: Real>(datum: &BLDatum<T>, tol: T) -> Result<DatumDiagnostics<T>> {
    if !(tol > T::zero()) {
        return Err(Error::Domain("rank tolerance must be positive".into()));
    }
    let mut zero_map_indices = Vec::new();
    for (index, f) in datum.factors.iter().enumerate() {
        if f.is_zero_map() {
            zero_map_indices.push(index);
            continue;
        }
        let rank = numerical_rank(&f.map, tol);
        if rank < f.target_dim() {
            return Err(Error::NotOnto {
                index,
                rank,
                rows: f.target_dim(),
            });
        }
    }
    let homogeneity_defect = datum.scaling_dimension() - lit(datum.n as f64);
    let stacked_rank = numerical_rank(&datum.stacked_maps(), tol);
    Ok(DatumDiagnostics {
        homogeneity_defect,
        degenerate: stacked_rank < datum.n,
        frame: is_frame(datum, tol),
        zero_map_indices,
        stacked_rank,
    })
}

/// `BᵢBᵢ* = id` for every active factor and `Σ cᵢBᵢ*Bᵢ = id`, each within
/// `tol` in max-abs norm.
pub fn is_frame<T: Real>(datum: &BLDatum<T>, tol: T) -> bool {
    let n = datum.n;
    let mut sum = DMatrix::<T>::zeros(n, n);
    for (_, f) in datum.active() {
        let b = &f.map;
        let k = f.target_dim();
        if (b * b.transpose() - DMatrix::identity(k, k)).amax() > tol {
            return false;
        }
        sum += b.transpose() * b * f.c;
    }
    (sum - DMatrix::identity(n, n)).amax() <= tol
}

/// Validates and insists on a non-degenerate, homogeneous datum.
pub(crate) fn require_solvable<T: Real>(datum: &BLDatum<T>) -> Result<DatumDiagnostics<T>> {
    let diag = validate(datum, scaled_tol(DEFAULT_TOL))?;
    if diag.degenerate {
        return Err(Error::Degenerate {
            rank: diag.stacked_rank,
            n: datum.n,
        });
    }
    if !diag.is_homogeneous() {
        return Err(Error::Inhomogeneous {
            defect: to_f64(diag.homogeneity_defect),
        });
    }
    Ok(diag)
}

/// On-disk datum: `{"n": 2, "factors": [{"c": 0.5, "rows": [[1, 0]]}, …]}`.
///
/// `subspace`, when present, lists the basis vectors of a subspace as rows
/// (consumed by the splitting tools).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatumDocument {
    pub n: usize,
    pub factors: Vec<FactorDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorDocument {
    pub c: f64,
    pub rows: Vec<Vec<f64>>,
}

impl DatumDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn to_datum(&self) -> Result<BLDatum<f64>> {
        let mut factors = Vec::with_capacity(self.factors.len());
        for (index, f) in self.factors.iter().enumerate() {
            if f.rows.is_empty() {
                return Err(Error::Document(format!("factor {index} has no rows")));
            }
            if let Some(bad) = f.rows.iter().find(|r| r.len() != self.n) {
                return Err(Error::ColumnMismatch {
                    index,
                    cols: bad.len(),
                    expected: self.n,
                });
            }
            let flat: Vec<f64> = f.rows.iter().flatten().copied().collect();
            let map = DMatrix::from_row_slice(f.rows.len(), self.n, &flat);
            let factor = LinearFactor::new(f.c, map).map_err(|e| match e {
                Error::NonPositiveExponent { c, .. } => Error::NonPositiveExponent { index, c },
                other => other,
            })?;
            factors.push(factor);
        }
        BLDatum::new(self.n, factors)
    }

    pub fn from_datum(datum: &BLDatum<f64>) -> Self {
        Self {
            n: datum.n,
            factors: datum
                .factors
                .iter()
                .map(|f| FactorDocument {
                    c: f.c,
                    rows: f
                        .map
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect(),
                })
                .collect(),
            subspace: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn young_4_3() -> BLDatum<f64> {
        BLDatum::from_rows(
            2,
            &[
                (0.75, &[&[1.0, 1.0]]),
                (0.75, &[&[0.0, 1.0]]),
                (0.5, &[&[1.0, 0.0]]),
            ],
        )
        .unwrap()
    }

    fn coords2() -> BLDatum<f64> {
        BLDatum::<f64>::coordinate(2)
    }

    #[test]
    fn prekopa_leindler_is_homogeneous_frame() {
        let d = validate(&BLDatum::<f64>::prekopa_leindler(), 1e-10).unwrap();
        assert_eq!(d.homogeneity_defect, 0.0);
        assert!(!d.degenerate);
        assert!(d.frame);
        assert!(d.zero_map_indices.is_empty());
    }

    #[test]
    fn young_datum_is_homogeneous_but_not_frame() {
        let d = validate(&young_4_3(), 1e-10).unwrap();
        assert!(d.homogeneity_defect.abs() < 1e-15);
        assert!(!d.degenerate);
        assert!(!d.frame);
        assert!(!is_frame(&young_4_3(), 1e-10));
    }

    #[test]
    fn single_coordinate_map_is_degenerate() {
        let datum = BLDatum::from_rows(2, &[(1.0, &[&[1.0, 0.0]])]).unwrap();
        let d = validate(&datum, 1e-10).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.stacked_rank, 1);
        assert_eq!(d.homogeneity_defect, -1.0);
    }

    #[test]
    fn coordinate_projections_form_a_frame() {
        assert!(is_frame(&coords2(), 1e-10));
    }

    #[test]
    fn rank_deficient_map_is_rejected() {
        let datum = BLDatum::from_rows(
            2,
            &[(1.0, &[&[1.0, 1.0], &[2.0, 2.0]]), (0.5, &[&[1.0, 0.0]])],
        )
        .unwrap();
        match validate(&datum, 1e-10) {
            Err(Error::NotOnto {
                index: 0,
                rank: 1,
                rows: 2,
            }) => {}
            other => panic!("expected NotOnto, got {other:?}"),
        }
    }

    #[test]
    fn zero_map_is_flagged_and_ignored() {
        let base = validate(&young_4_3(), 1e-10).unwrap();
        let with_zero = young_4_3()
            .with_factor(LinearFactor::from_rows(3.0, &[&[0.0, 0.0]]).unwrap())
            .unwrap();
        let d = validate(&with_zero, 1e-10).unwrap();
        assert_eq!(d.zero_map_indices, vec![3]);
        assert_eq!(d.homogeneity_defect, base.homogeneity_defect);
        assert_eq!(d.degenerate, base.degenerate);
        assert_eq!(d.frame, base.frame);
        assert_eq!(d.stacked_rank, base.stacked_rank);
    }

    #[test]
    fn constructor_rejects_bad_shapes_and_exponents() {
        assert!(matches!(
            BLDatum::from_rows(2, &[(1.0, &[&[1.0]])]),
            Err(Error::ColumnMismatch { .. })
        ));
        assert!(matches!(
            BLDatum::from_rows(1, &[(1.0, &[&[1.0]]), (-0.5, &[&[1.0]])]),
            Err(Error::NonPositiveExponent { index: 1, .. })
        ));
        assert!(matches!(
            BLDatum::<f64>::new(2, vec![]),
            Err(Error::EmptyDatum)
        ));
    }

    #[test]
    fn document_round_trip() {
        let text = r#"{ "n": 2, "factors": [ {"c": 0.75, "rows": [[1, 1]]},
                       {"c": 0.75, "rows": [[0, 1]]}, {"c": 0.5, "rows": [[1, 0]]} ] }"#;
        let doc = DatumDocument::parse(text).unwrap();
        let datum = doc.to_datum().unwrap();
        assert_eq!(datum, young_4_3());
        assert_eq!(DatumDocument::from_datum(&datum), doc);
    }

    #[test]
    fn document_rejects_ragged_rows() {
        let doc =
            DatumDocument::parse(r#"{"n": 2, "factors": [{"c": 1, "rows": [[1]]}]}"#).unwrap();
        assert!(doc.to_datum().is_err());
        assert!(DatumDocument::parse(r#"{"n": 2}"#).is_err());
    }
}
