//! Sharp Young convolution inequality as a Brascamp-Lieb datum on `ℝ²`.
//!
//! `∫∫ f^{c₁}(x+y) g^{c₂}(y) h^{c₃}(x) ≤ C (∫f)^{c₁} (∫g)^{c₂} (∫h)^{c₃}` with
//! `c = (1/p, 1/q, 1 − 1/r)`. The extremal covariance and the constant are
//! known in closed form, which makes this the main cross-check for the solver.

use nalgebra::DMatrix;

use crate::datum::{BLDatum, LinearFactor};
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::scalar::{lit, scaled_tol, to_f64, Real};

/// Tolerance on `1/p + 1/q − 1 − 1/r`.
pub const EXPONENT_TOL: f64 = 1e-12;
/// Minimum distance of an exponent from 1 when forming its conjugate.
pub const CONJUGATE_GUARD: f64 = 1e-12;

/// `p, q, r ∈ (1, ∞)` with `1/p + 1/q = 1 + 1/r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YoungExponents<T: Real> {
    p: T,
    q: T,
    r: T,
}

impl<T: Real> YoungExponents<T> {
    pub fn new(p: T, q: T, r: T) -> Result<Self> {
        for (name, v) in [("p", p), ("q", q), ("r", r)] {
            if !(v > T::one()) || !v.is_finite() {
                return Err(Error::Exponents(format!(
                    "{name} = {} is not in (1, ∞)",
                    to_f64(v)
                )));
            }
        }
        let defect = T::one() / p + T::one() / q - T::one() - T::one() / r;
        if defect.abs() > scaled_tol(EXPONENT_TOL) {
            return Err(Error::Exponents(format!(
                "1/p + 1/q − 1 − 1/r = {:e}",
                to_f64(defect)
            )));
        }
        Ok(Self { p, q, r })
    }

    /// Derives `r` from `1/r = 1/p + 1/q − 1`.
    pub fn from_pq(p: T, q: T) -> Result<Self> {
        let inv_r = T::one() / p + T::one() / q - T::one();
        if !(inv_r > T::zero()) {
            return Err(Error::Exponents(format!(
                "1/p + 1/q = {} leaves no r in (1, ∞)",
                to_f64(T::one() + inv_r)
            )));
        }
        Self::new(p, q, T::one() / inv_r)
    }

    pub fn p(&self) -> T {
        self.p
    }
    pub fn q(&self) -> T {
        self.q
    }
    pub fn r(&self) -> T {
        self.r
    }

    /// `(1/p, 1/q, 1 − 1/r)`.
    pub fn exponents(&self) -> [T; 3] {
        [
            T::one() / self.p,
            T::one() / self.q,
            T::one() - T::one() / self.r,
        ]
    }
}

/// `s' = s / (s − 1)`.
pub fn conjugate<T: Real>(s: T) -> Result<T> {
    if (s - T::one()).abs() <= lit(CONJUGATE_GUARD) {
        return Err(Error::Domain(format!(
            "exponent {} too close to 1",
            to_f64(s)
        )));
    }
    Ok(s / (s - T::one()))
}

/// `c = (1/p, 1/q, 1 − 1/r)` with `B₁ = (1,1)`, `B₂ = (0,1)`, `B₃ = (1,0)`.
pub fn datum_from_exponents<T: Real>(e: &YoungExponents<T>) -> BLDatum<T> {
    let [c1, c2, c3] = e.exponents();
    let (o, z) = (T::one(), T::zero());
    let row = |a: T, b: T| DMatrix::from_row_slice(1, 2, &[a, b]);
    let factors = vec![
        LinearFactor::new(c1, row(o, o)).expect("1/p > 0"),
        LinearFactor::new(c2, row(z, o)).expect("1/q > 0"),
        LinearFactor::new(c3, row(o, z)).expect("1 − 1/r > 0"),
    ];
    BLDatum::new(2, factors).expect("well-formed Young datum")
}

/// `(x, y, z) = (c₃(1−c₃), c₂(1−c₂), −(1−c₂)(1−c₃))`, unnormalized.
pub fn closed_form_coefficients<T: Real>(e: &YoungExponents<T>) -> [T; 3] {
    let [_, c2, c3] = e.exponents();
    let one = T::one();
    [c3 * (one - c3), c2 * (one - c2), -(one - c2) * (one - c3)]
}

/// Extremal covariance `[[x, z], [z, y]]`, scaled to unit determinant.
pub fn closed_form_a<T: Real>(e: &YoungExponents<T>) -> SpdMatrix<T> {
    let [x, y, z] = closed_form_coefficients(e);
    SpdMatrix::from_row_slice(2, &[x, z, z, y])
        .expect("xy − z² > 0 on the open exponent range")
        .det_normalized()
}

/// The other solution family of the 2×2 fixed-point system, `(x, y, z) ∝ (1, 1, −1)`.
/// It satisfies the equations but `xy − z² = 0`, so it is not a covariance;
/// returned as a raw matrix for inspection.
pub fn discarded_solution<T: Real>() -> DMatrix<T> {
    let (o, m) = (T::one(), -T::one());
    DMatrix::from_row_slice(2, 2, &[o, m, m, o])
}

/// `((p^{1/p} q^{1/q} r'^{1/r'}) / (p'^{1/p'} q'^{1/q'} r^{1/r}))^{1/2}`.
pub fn beckner_constant<T: Real>(e: &YoungExponents<T>) -> Result<T> {
    let pw = |s: T| s.powf(T::one() / s);
    let (p, q, r) = (e.p, e.q, e.r);
    let (pc, qc, rc) = (conjugate(p)?, conjugate(q)?, conjugate(r)?);
    Ok((pw(p) * pw(q) * pw(rc) / (pw(pc) * pw(qc) * pw(r))).sqrt())
}

/// `(Π (1−cᵢ)^{1−cᵢ} / Π cᵢ^{cᵢ})^{1/2}` for `cᵢ ∈ (0, 1)`, `Σ cᵢ = 2`.
pub fn constant_from_cs<T: Real>(c1: T, c2: T, c3: T) -> Result<T> {
    let cs = [c1, c2, c3];
    if cs.iter().any(|&c| !(c > T::zero() && c < T::one())) {
        return Err(Error::Domain("each cᵢ must lie in (0, 1)".into()));
    }
    let sum = c1 + c2 + c3;
    if (sum - lit(2.0)).abs() > scaled_tol(EXPONENT_TOL) {
        return Err(Error::Domain(format!("c₁ + c₂ + c₃ = {} ≠ 2", to_f64(sum))));
    }
    let log = cs.iter().fold(T::zero(), |acc, &c| {
        acc + (T::one() - c) * (T::one() - c).ln() - c * c.ln()
    });
    Ok((log * lit::<T>(0.5)).exp())
}
