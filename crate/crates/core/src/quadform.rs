//! Infimal convolution of quadratic forms.
//!
//! For precisions `A₁, …, A_m` the harmonic combination
//! `A = (Σ cᵢ Bᵢ* Aᵢ⁻¹ Bᵢ)⁻¹` satisfies
//!
//! ```text
//! ⟨A x, x⟩ = inf { Σ cᵢ ⟨Aᵢ xᵢ, xᵢ⟩ : Σ cᵢ Bᵢ* xᵢ = x }
//! ```
//!
//! with minimizer `xᵢ = Aᵢ⁻¹ Bᵢ A x`. This is what turns Gaussian inputs of the
//! reversed inequality into a Gaussian sup-convolution.

use nalgebra::{DMatrix, DVector};

use crate::datum::{validate, BLDatum, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::gaussian_solver::check_condition;
use crate::gaussian_verify::VerificationReport;
use crate::linalg::{kernel_basis, SpdMatrix};
use crate::sampling::{normal_vector, stream_rng};
use crate::scalar::{lit, scaled_tol, to_f64, Real};

/// Objectives below `value − SLACK·max(1, value)` count as violations.
pub const SLACK: f64 = 1e-10;

/// One SPD matrix per active factor, the i-th of size `nᵢ × nᵢ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTuple<T: Real> {
    mats: Vec<SpdMatrix<T>>,
}

impl<T: Real> GaussianTuple<T> {
    pub fn new(mats: Vec<SpdMatrix<T>>) -> Self {
        Self { mats }
    }

    pub fn identities(datum: &BLDatum<T>) -> Self {
        Self::new(
            datum
                .active()
                .map(|(_, f)| SpdMatrix::identity(f.target_dim()))
                .collect(),
        )
    }

    pub fn mats(&self) -> &[SpdMatrix<T>] {
        &self.mats
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn check_shapes(&self, datum: &BLDatum<T>) -> Result<()> {
        if self.mats.len() != datum.active_count() {
            return Err(Error::Shape(format!(
                "tuple has {} matrices, datum has {} active factors",
                self.mats.len(),
                datum.active_count()
            )));
        }
        for ((i, f), m) in datum.active().zip(&self.mats) {
            if m.dim() != f.target_dim() {
                return Err(Error::Shape(format!(
                    "factor {i}: matrix is {0}x{0}, target dimension is {1}",
                    m.dim(),
                    f.target_dim()
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn require_nondegenerate<T: Real>(datum: &BLDatum<T>) -> Result<()> {
    let diag = validate(datum, scaled_tol(DEFAULT_TOL))?;
    if diag.degenerate {
        return Err(Error::Degenerate {
            rank: diag.stacked_rank,
            n: datum.n(),
        });
    }
    Ok(())
}

/// `(Σ cᵢ Bᵢ* Aᵢ⁻¹ Bᵢ)⁻¹`.
pub fn harmonic_combine<T: Real>(
    datum: &BLDatum<T>,
    tuple: &GaussianTuple<T>,
) -> Result<SpdMatrix<T>> {
    require_nondegenerate(datum)?;
    tuple.check_shapes(datum)?;
    let n = datum.n();
    let mut sum = DMatrix::zeros(n, n);
    for ((i, f), ai) in datum.active().zip(tuple.mats()) {
        check_condition(i, ai)?;
        sum += f.map().transpose() * ai.solve(f.map()) * f.c();
    }
    let sum = SpdMatrix::from_computed(sum).map_err(|_| Error::Degenerate { rank: 0, n })?;
    Ok(sum.inverse())
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfDecomposition<T: Real> {
    /// `⟨A x, x⟩` for the harmonic combination `A`.
    pub value: T,
    /// Minimizing `(xᵢ)`, one per active factor.
    pub parts: Vec<DVector<T>>,
}

/// Evaluates the infimum and its minimizer at `x`.
pub fn inf_decomposition<T: Real>(
    datum: &BLDatum<T>,
    tuple: &GaussianTuple<T>,
    x: &DVector<T>,
) -> Result<InfDecomposition<T>> {
    if x.len() != datum.n() {
        return Err(Error::Shape(format!(
            "x has length {}, expected {}",
            x.len(),
            datum.n()
        )));
    }
    let a = harmonic_combine(datum, tuple)?;
    let ax = a.as_matrix() * x;
    let parts = datum
        .active()
        .zip(tuple.mats())
        .map(|((_, f), ai)| ai.solve_vec(&(f.map() * &ax)))
        .collect();
    Ok(InfDecomposition {
        value: x.dot(&ax),
        parts,
    })
}

/// `Σ cᵢ Bᵢ* yᵢ`.
pub fn synthesize<T: Real>(datum: &BLDatum<T>, parts: &[DVector<T>]) -> DVector<T> {
    let mut x = DVector::zeros(datum.n());
    for ((_, f), y) in datum.active().zip(parts) {
        x += f.map().transpose() * y * f.c();
    }
    x
}

/// `Σ cᵢ ⟨Aᵢ yᵢ, yᵢ⟩`.
pub fn decomposition_cost<T: Real>(
    datum: &BLDatum<T>,
    tuple: &GaussianTuple<T>,
    parts: &[DVector<T>],
) -> T {
    datum
        .active()
        .zip(tuple.mats())
        .zip(parts)
        .fold(T::zero(), |acc, (((_, f), ai), y)| acc + f.c() * ai.quad(y))
}

/// The synthesis map `(y₁,…,y_m) ↦ Σ cᵢ Bᵢ* yᵢ` as an `n × Σnᵢ` matrix.
pub fn synthesis_matrix<T: Real>(datum: &BLDatum<T>) -> DMatrix<T> {
    let total: usize = datum.active().map(|(_, f)| f.target_dim()).sum();
    let mut l = DMatrix::zeros(datum.n(), total);
    let mut col = 0;
    for (_, f) in datum.active() {
        let k = f.target_dim();
        l.view_mut((0, col), (datum.n(), k))
            .copy_from(&(f.map().transpose() * f.c()));
        col += k;
    }
    l
}

/// Splits a stacked vector into per-factor parts.
pub(crate) fn split_parts<T: Real>(datum: &BLDatum<T>, stacked: &DVector<T>) -> Vec<DVector<T>> {
    let mut out = Vec::new();
    let mut row = 0;
    for (_, f) in datum.active() {
        let k = f.target_dim();
        out.push(stacked.rows(row, k).clone_owned());
        row += k;
    }
    out
}

/// Samples feasible decompositions around the minimizer (kernel directions of
/// the synthesis map, standard normal coefficients scaled by the minimizer's
/// norm) and checks none beats the infimum.
pub fn check_inf<T: Real>(
    datum: &BLDatum<T>,
    tuple: &GaussianTuple<T>,
    x: &DVector<T>,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    check_inf_with_scale(datum, tuple, x, samples, seed, None)
}

/// [`check_inf`] with an explicit perturbation radius (`None` = minimizer norm).
pub fn check_inf_with_scale<T: Real>(
    datum: &BLDatum<T>,
    tuple: &GaussianTuple<T>,
    x: &DVector<T>,
    samples: usize,
    seed: u64,
    scale: Option<T>,
) -> Result<VerificationReport> {
    if samples == 0 {
        return Err(Error::Domain("samples must be at least 1".into()));
    }
    let dec = inf_decomposition(datum, tuple, x)?;
    let stacked: Vec<T> = dec.parts.iter().flat_map(|p| p.iter().copied()).collect();
    let minimizer = DVector::from_vec(stacked);
    let kernel = kernel_basis(&synthesis_matrix(datum), scaled_tol(DEFAULT_TOL));
    let radius = scale.unwrap_or_else(|| {
        let nrm = minimizer.norm();
        if nrm > T::zero() {
            nrm
        } else {
            T::one()
        }
    });

    let value = dec.value;
    let slack = scaled_tol::<T>(SLACK) * value.abs().max(T::one());
    let feas_tol = scaled_tol::<T>(SLACK) * x.norm().max(T::one()) * lit(10.0);
    let at_min = decomposition_cost(datum, tuple, &dec.parts);
    let gap = (at_min - value).abs() / value.abs().max(T::one());

    let mut rng = stream_rng(seed, 0);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let coeffs: DVector<T> = normal_vector(&mut rng, kernel.ncols());
        let y = &minimizer + &kernel * coeffs * radius;
        let parts = split_parts(datum, &y);
        let cost = decomposition_cost(datum, tuple, &parts);
        let infeasible = (synthesize(datum, &parts) - x).norm() > feas_tol;
        if cost < value - slack || infeasible {
            violations += 1;
        }
        let ratio = if cost > T::zero() {
            to_f64(value / cost)
        } else {
            1.0
        };
        worst = worst.max(ratio);
    }
    Ok(VerificationReport {
        samples,
        violations,
        worst_ratio: worst,
        equality_gap: Some(to_f64(gap)),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn young() -> BLDatum<f64> {
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

    fn scalars(v: &[f64]) -> GaussianTuple<f64> {
        GaussianTuple::new(
            v.iter()
                .map(|&x| SpdMatrix::from_diagonal(&[x]).unwrap())
                .collect(),
        )
    }

    #[test]
    fn single_identity_factor_is_identity_operation() {
        let d = BLDatum::from_rows(2, &[(1.0, &[&[1.0, 0.0], &[0.0, 1.0]])]).unwrap();
        let a1 = SpdMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let t = GaussianTuple::new(vec![a1.clone()]);
        let a = harmonic_combine(&d, &t).unwrap();
        assert!((a.as_matrix() - a1.as_matrix()).amax() < 1e-14);
        let x = DVector::from_vec(vec![0.3, -1.2]);
        let dec = inf_decomposition(&d, &t, &x).unwrap();
        assert!((&dec.parts[0] - &x).amax() < 1e-14);
        assert_relative_eq!(dec.value, a1.quad(&x), max_relative = 1e-14);
    }

    #[test]
    fn frame_with_identities_gives_identity() {
        let d = BLDatum::<f64>::coordinate(3);
        let a = harmonic_combine(&d, &GaussianTuple::identities(&d)).unwrap();
        assert!((a.as_matrix() - DMatrix::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn young_reverse_extremizers_recombine_to_a() {
        let d = young();
        let a = SpdMatrix::from_row_slice(2, &[0.25, -0.125, -0.125, 0.1875]).unwrap();
        let combined = harmonic_combine(&d, &scalars(&[0.1875, 0.1875, 0.25])).unwrap();
        let rel = (combined.as_matrix() - a.as_matrix()).amax() / a.as_matrix().amax();
        assert!(rel < 1e-12);
    }

    #[test]
    fn zero_vector_has_zero_decomposition() {
        let d = young();
        let dec = inf_decomposition(&d, &scalars(&[1.0, 2.0, 3.0]), &DVector::zeros(2)).unwrap();
        assert_eq!(dec.value, 0.0);
        assert!(dec.parts.iter().all(|p| p.amax() == 0.0));
    }

    #[test]
    fn prekopa_leindler_unit_instance() {
        let d = BLDatum::<f64>::prekopa_leindler();
        let t = scalars(&[1.0, 1.0]);
        let x = DVector::from_vec(vec![1.0]);
        let dec = inf_decomposition(&d, &t, &x).unwrap();
        assert_relative_eq!(dec.value, 1.0, epsilon = 1e-15);
        assert_relative_eq!(dec.parts[0][0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(dec.parts[1][0], 1.0, epsilon = 1e-15);
        // brute force over ½y₁ + ½y₂ = 1, i.e. y₂ = 2 − y₁
        let min = (-4000..=4000)
            .map(|k| {
                let y1 = 1.0 + k as f64 * 1e-3;
                0.5 * y1 * y1 + 0.5 * (2.0 - y1) * (2.0 - y1)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 1.0 - 1e-15);
        let rep = check_inf(&d, &t, &x, 500, 3).unwrap();
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn zero_radius_sampling_has_zero_gap() {
        let d = young();
        let t = scalars(&[0.7, 2.0, 1.3]);
        let x = DVector::from_vec(vec![0.4, -0.9]);
        let rep = check_inf_with_scale(&d, &t, &x, 10, 1, Some(0.0)).unwrap();
        assert_eq!(rep.violations, 0);
        assert!(rep.equality_gap.unwrap() < 1e-14);
        assert_relative_eq!(rep.worst_ratio, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_shape_mismatch_and_degenerate_data() {
        let d = young();
        assert!(harmonic_combine(&d, &scalars(&[1.0, 1.0])).is_err());
        let deg = BLDatum::from_rows(2, &[(1.0, &[&[1.0, 0.0]])]).unwrap();
        assert!(matches!(
            harmonic_combine(&deg, &scalars(&[1.0])),
            Err(Error::Degenerate { .. })
        ));
    }
}
