//! Gaussian extremizers and the Brascamp-Lieb constant.
//!
//! The extremal covariance `A` solves
//!
//! ```text
//! A⁻¹ = Σ cᵢ Bᵢ* (Bᵢ A Bᵢ*)⁻¹ Bᵢ
//! ```
//!
//! which is exactly the stationarity condition of the log-det objective
//! `F(A) = log det A − Σ cᵢ log det(Bᵢ A Bᵢ*)`. Once `A` is known the direct and
//! reversed constants are both `exp(F(A)/2)`; only the extremal functions differ.
//!
//! [`solve`] runs a damped fixed-point iteration on the map above, gauged to
//! unit determinant, and falls back to backtracking gradient ascent on `F` in
//! the chart `A = exp(S)` once the fixed-point residual stops improving.

use std::io::{self, Write};

use log::warn;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::datum::{require_solvable, BLDatum};
use crate::error::{Error, Result};
use crate::linalg::{dexp, frobenius, sym_exp, sym_log, CONDITION_LIMIT};
use crate::quadform::GaussianTuple;
use crate::scalar::{lit, scaled_tol, to_f64, Real};

pub use crate::linalg::SpdMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_DAMPING: f64 = 0.5;
/// Objective value (`2 log C`) beyond which the constant is declared infinite.
pub const DIVERGENCE_OBJECTIVE: f64 = 1e3;
/// Smallest eigenvalue of the det-normalized iterate below which the constant
/// is declared infinite.
pub const DIVERGENCE_MIN_EIGENVALUE: f64 = 1e-12;
/// Relative gradient above which constant/extremizer evaluation warns.
pub const STATIONARITY_WARN: f64 = 1e-6;
/// Fixed-point iterations without residual progress before switching to ascent.
const STALL_WINDOW: usize = 50;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Damped fixed point, switching to ascent on stall.
    Auto,
    /// Gradient ascent from the start.
    Ascent,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions<T: Real> {
    pub tol: T,
    pub max_iter: usize,
    /// Weight of the fixed-point image in each update, in `(0, 1]`.
    pub damping: T,
    pub strategy: Strategy,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            tol: scaled_tol(DEFAULT_TOL),
            max_iter: DEFAULT_MAX_ITER,
            damping: lit(DEFAULT_DAMPING),
            strategy: Strategy::Auto,
        }
    }
}

/// A constant that may be `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constant<T> {
    Finite(T),
    Infinite,
}

impl<T: Copy> Constant<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            Constant::Finite(v) => Some(*v),
            Constant::Infinite => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Constant::Finite(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    FixedPoint,
    Ascent,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry<T> {
    pub iteration: usize,
    pub residual: T,
    pub objective: T,
    pub phase: Phase,
}

#[derive(Clone, Debug)]
pub struct SolveResult<T: Real> {
    /// Extremal covariance, unit determinant.
    pub a: SpdMatrix<T>,
    /// `‖∇F(A)‖_F / ‖A⁻¹‖_F` at the returned `A`.
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    pub constant: Constant<T>,
    pub trace: Vec<TraceEntry<T>>,
}

/// Quantities shared by the map, the gradient and the objective at one point.
struct Evaluation<T: Real> {
    inv_a: DMatrix<T>,
    /// `Σ cᵢ Bᵢ*(Bᵢ A Bᵢ*)⁻¹ Bᵢ`
    pullback: DMatrix<T>,
    objective: T,
}

impl<T: Real> Evaluation<T> {
    fn gradient(&self) -> DMatrix<T> {
        &self.inv_a - &self.pullback
    }

    fn relative_residual(&self) -> T {
        frobenius(&self.gradient()) / frobenius(&self.inv_a)
    }
}

/// `Bᵢ A Bᵢ*` as an SPD matrix, rejecting ill-conditioned images.
pub(crate) fn pushforward<T: Real>(
    index: usize,
    b: &DMatrix<T>,
    a: &SpdMatrix<T>,
) -> Result<SpdMatrix<T>> {
    let m = b * a.as_matrix() * b.transpose();
    let ill = |condition: f64| Error::IllConditioned { index, condition };
    let spd = SpdMatrix::from_computed(m).map_err(|_| ill(f64::INFINITY))?;
    check_condition(index, &spd)?;
    Ok(spd)
}

pub(crate) fn check_condition<T: Real>(index: usize, m: &SpdMatrix<T>) -> Result<()> {
    let cond = m.condition_number();
    // same headroom above machine precision as 1e14 gives f64
    let limit = lit::<T>(CONDITION_LIMIT * f64::EPSILON / to_f64(T::default_epsilon()));
    if !(cond <= limit) {
        return Err(Error::IllConditioned {
            index,
            condition: to_f64(cond),
        });
    }
    Ok(())
}

fn check_shape<T: Real>(datum: &BLDatum<T>, a: &SpdMatrix<T>) -> Result<()> {
    if a.dim() != datum.n() {
        return Err(Error::Shape(format!(
            "A is {0}x{0}, datum lives on R^{1}",
            a.dim(),
            datum.n()
        )));
    }
    Ok(())
}

fn evaluate<T: Real>(datum: &BLDatum<T>, a: &SpdMatrix<T>) -> Result<Evaluation<T>> {
    check_shape(datum, a)?;
    let n = datum.n();
    let mut pullback = DMatrix::zeros(n, n);
    let mut objective = a.log_det();
    for (index, f) in datum.active() {
        let ai = pushforward(index, f.map(), a)?;
        objective -= f.c() * ai.log_det();
        pullback += f.map().transpose() * ai.solve(f.map()) * f.c();
    }
    Ok(Evaluation {
        inv_a: a.inverse().into_inner(),
        pullback,
        objective,
    })
}

/// `(Σ cᵢ Bᵢ*(Bᵢ A Bᵢ*)⁻¹ Bᵢ)⁻¹`. Homogeneous of degree one in `A`.
pub fn fp_map<T: Real>(datum: &BLDatum<T>, a: &SpdMatrix<T>) -> Result<SpdMatrix<T>> {
    let ev = evaluate(datum, a)?;
    let pull = SpdMatrix::from_computed(ev.pullback).map_err(|_| Error::Degenerate {
        rank: 0,
        n: datum.n(),
    })?;
    Ok(pull.inverse())
}

/// Gradient of `A ↦ log det A − Σ cᵢ log det(Bᵢ A Bᵢ*)`, i.e.
/// `A⁻¹ − Σ cᵢ Bᵢ*(Bᵢ A Bᵢ*)⁻¹ Bᵢ`. Vanishes exactly at fixed points.
pub fn grad_logdet<T: Real>(datum: &BLDatum<T>, a: &SpdMatrix<T>) -> Result<DMatrix<T>> {
    Ok(evaluate(datum, a)?.gradient())
}

/// `log det A − Σ cᵢ log det(Bᵢ A Bᵢ*)`.
pub fn objective<T: Real>(datum: &BLDatum<T>, a: &SpdMatrix<T>) -> Result<T> {
    Ok(evaluate(datum, a)?.objective)
}

/// `(det A / Π det(Bᵢ A Bᵢ*)^{cᵢ})^{1/2}`, meaningful at a solution of the
/// fixed-point equation. Warns if `A` is visibly not stationary.
pub fn bl_constant<T: Real>(datum: &BLDatum<T>, a: &SpdMatrix<T>) -> Result<T> {
    let ev = evaluate(datum, a)?;
    warn_if_not_stationary(&ev);
    Ok((ev.objective * lit::<T>(0.5)).exp())
}

fn warn_if_not_stationary<T: Real>(ev: &Evaluation<T>) {
    let r = ev.relative_residual();
    if r > scaled_tol(STATIONARITY_WARN) {
        warn!(
            "A is not stationary (relative gradient {:e}); constant is only a lower bound",
            to_f64(r)
        );
    }
}

/// Precision matrices `(Bᵢ A Bᵢ*)⁻¹` of the Gaussians attaining equality in
/// the direct inequality.
pub fn direct_extremizers<T: Real>(
    datum: &BLDatum<T>,
    a: &SpdMatrix<T>,
) -> Result<GaussianTuple<T>> {
    warn_if_not_stationary(&evaluate(datum, a)?);
    let mats = datum
        .active()
        .map(|(i, f)| pushforward(i, f.map(), a).map(|m| m.inverse()))
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianTuple::new(mats))
}

/// Precision matrices `(Bᵢ A Bᵢ*)ᵢ` of the inputs and `A` of the output
/// attaining equality in the reversed inequality.
pub fn reverse_extremizers<T: Real>(
    datum: &BLDatum<T>,
    a: &SpdMatrix<T>,
) -> Result<(GaussianTuple<T>, SpdMatrix<T>)> {
    warn_if_not_stationary(&evaluate(datum, a)?);
    let mats = datum
        .active()
        .map(|(i, f)| pushforward(i, f.map(), a))
        .collect::<Result<Vec<_>>>()?;
    Ok((GaussianTuple::new(mats), a.clone()))
}

/// Solves the fixed-point equation starting from the identity.
///
/// Non-convergence is reported through `converged = false`; the constant is
/// `Infinite` when the iterates degenerate (objective above
/// [`DIVERGENCE_OBJECTIVE`], eigenvalue below [`DIVERGENCE_MIN_EIGENVALUE`]) or
/// the objective is still climbing when the iteration budget runs out.
pub fn solve<T: Real>(datum: &BLDatum<T>, opts: &SolveOptions<T>) -> Result<SolveResult<T>> {
    require_solvable(datum)?;
    if !(opts.damping > T::zero() && opts.damping <= T::one()) {
        return Err(Error::Domain("damping must lie in (0, 1]".into()));
    }
    if !(opts.tol > T::zero()) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }

    let n = datum.n();
    let mut a = SpdMatrix::identity(n);
    let mut phase = match opts.strategy {
        Strategy::Auto => Phase::FixedPoint,
        Strategy::Ascent => Phase::Ascent,
    };
    let mut trace: Vec<TraceEntry<T>> = Vec::new();
    let mut best_residual = T::max_value().unwrap_or_else(|| lit(f64::MAX));
    let mut since_best = 0usize;
    let mut step: T = T::one();
    let mut converged = false;
    let mut diverged = false;
    let mut residual = T::zero();
    let mut iterations = 0;

    for it in 0..=opts.max_iter {
        iterations = it;
        let ev = match evaluate(datum, &a) {
            Ok(ev) => ev,
            Err(Error::IllConditioned { .. }) if it > 0 => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        residual = ev.relative_residual();
        trace.push(TraceEntry {
            iteration: it,
            residual,
            objective: ev.objective,
            phase,
        });
        if residual <= opts.tol {
            converged = true;
            break;
        }
        if ev.objective > lit(DIVERGENCE_OBJECTIVE)
            || a.min_eigenvalue() < lit(DIVERGENCE_MIN_EIGENVALUE)
            || !ev.objective.is_finite()
        {
            diverged = true;
            break;
        }
        if it == opts.max_iter {
            break;
        }

        if phase == Phase::FixedPoint {
            if residual < best_residual * (T::one() - lit(1e-6)) {
                best_residual = residual;
                since_best = 0;
            } else {
                since_best += 1;
            }
            if since_best >= STALL_WINDOW {
                phase = Phase::Ascent;
            } else {
                let image = SpdMatrix::from_computed(ev.pullback.clone())
                    .map_err(|_| Error::Degenerate { rank: 0, n })?
                    .inverse();
                let mixed =
                    a.as_matrix() * (T::one() - opts.damping) + image.as_matrix() * opts.damping;
                a = match SpdMatrix::from_computed(mixed) {
                    Ok(m) => m.det_normalized(),
                    Err(_) => {
                        diverged = true;
                        break;
                    }
                };
                continue;
            }
        }

        match ascent_step(datum, &a, &ev, step)? {
            Some((next, used)) => {
                a = next;
                step = (used * lit(2.0)).min(lit(1e6));
            }
            None => break,
        }
    }

    let last_objective = trace.last().map(|t| t.objective).unwrap_or(T::zero());
    let constant = if converged {
        Constant::Finite((last_objective * lit::<T>(0.5)).exp())
    } else if diverged || still_rising(&trace) {
        Constant::Infinite
    } else {
        Constant::Finite((last_objective * lit::<T>(0.5)).exp())
    };
    Ok(SolveResult {
        a,
        residual,
        iterations,
        converged,
        constant,
        trace,
    })
}

/// One backtracking ascent step on `F(exp S)`; `None` when no step improves.
fn ascent_step<T: Real>(
    datum: &BLDatum<T>,
    a: &SpdMatrix<T>,
    ev: &Evaluation<T>,
    initial_step: T,
) -> Result<Option<(SpdMatrix<T>, T)>> {
    let s = sym_log(a);
    let direction = dexp(&s, &ev.gradient());
    let slope = direction.iter().fold(T::zero(), |acc, &v| acc + v * v);
    if slope == T::zero() {
        return Ok(None);
    }
    let mut t = initial_step;
    for _ in 0..MAX_BACKTRACK {
        let candidate = SpdMatrix::from_computed(sym_exp(&(&s + &direction * t)));
        if let Ok(cand) = candidate {
            if let Ok(obj) = objective(datum, &cand) {
                if obj >= ev.objective + lit::<T>(ARMIJO) * t * slope {
                    return Ok(Some((cand, t)));
                }
            }
        }
        t *= lit(0.5);
    }
    Ok(None)
}

/// Objective still increasing materially over the tail of the trace.
fn still_rising<T: Real>(trace: &[TraceEntry<T>]) -> bool {
    if trace.len() < 4 {
        return false;
    }
    let window = (trace.len() / 2).min(100);
    let last = trace[trace.len() - 1].objective;
    let earlier = trace[trace.len() - 1 - window].objective;
    last - earlier > lit::<T>(1e-8) * last.abs().max(T::one())
}

/// Serializable summary of a [`SolveResult`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveDocument {
    /// Row-major extremal covariance.
    pub a: Vec<Vec<f64>>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `None` encodes `+∞`.
    pub constant: Option<f64>,
    pub constant_infinite: bool,
}

impl<T: Real> From<&SolveResult<T>> for SolveDocument {
    fn from(r: &SolveResult<T>) -> Self {
        Self {
            a: r.a
                .to_rows()
                .into_iter()
                .map(|row| row.into_iter().map(to_f64).collect())
                .collect(),
            residual: to_f64(r.residual),
            iterations: r.iterations,
            converged: r.converged,
            constant: r.constant.value().map(to_f64),
            constant_infinite: !r.constant.is_finite(),
        }
    }
}

/// Writes `iteration,residual,objective` rows with a header line.
pub fn write_trace_csv<T: Real, W: Write>(trace: &[TraceEntry<T>], mut out: W) -> io::Result<()> {
    writeln!(out, "iteration,residual,objective")?;
    for t in trace {
        writeln!(
            out,
            "{},{},{}",
            t.iteration,
            to_f64(t.residual),
            to_f64(t.objective)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn young(c1: f64, c2: f64, c3: f64) -> BLDatum<f64> {
        BLDatum::from_rows(
            2,
            &[
                (c1, &[&[1.0, 1.0]]),
                (c2, &[&[0.0, 1.0]]),
                (c3, &[&[1.0, 0.0]]),
            ],
        )
        .unwrap()
    }

    /// (x, y, z) = (1/4, 3/16, −1/8) for c = (3/4, 3/4, 1/2).
    fn young_closed_a() -> SpdMatrix<f64> {
        SpdMatrix::from_row_slice(2, &[0.25, -0.125, -0.125, 0.1875]).unwrap()
    }

    #[test]
    fn identity_is_fixed_for_frame_data() {
        for datum in [BLDatum::<f64>::prekopa_leindler(), BLDatum::coordinate(3)] {
            let id = SpdMatrix::identity(datum.n());
            let image = fp_map(&datum, &id).unwrap();
            assert!((image.as_matrix() - id.as_matrix()).amax() < 1e-15);
            assert!(grad_logdet(&datum, &id).unwrap().amax() < 1e-15);
            assert_relative_eq!(bl_constant(&datum, &id).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn fp_map_is_homogeneous_of_degree_one() {
        let d = young(0.75, 0.75, 0.5);
        let a = SpdMatrix::from_row_slice(2, &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let lam = 3.7;
        let lhs = fp_map(&d, &a.scaled(lam)).unwrap();
        let rhs = fp_map(&d, &a).unwrap().scaled(lam);
        assert!((lhs.as_matrix() - rhs.as_matrix()).amax() < 1e-13);
    }

    #[test]
    fn young_closed_form_is_a_fixed_point() {
        let d = young(0.75, 0.75, 0.5);
        let a = young_closed_a();
        let image = fp_map(&d, &a).unwrap();
        let rel = (image.as_matrix() - a.as_matrix()).amax() / a.as_matrix().amax();
        assert!(rel < 1e-12, "relative error {rel:e}");
        assert!(grad_logdet(&d, &a).unwrap().amax() < 1e-10);
    }

    #[test]
    fn young_extremizer_scalars() {
        let d = young(0.75, 0.75, 0.5);
        let a = young_closed_a();
        let direct = direct_extremizers(&d, &a).unwrap();
        let expect = [1.0 / 0.1875, 1.0 / 0.1875, 1.0 / 0.25];
        for (m, e) in direct.mats().iter().zip(expect) {
            assert_relative_eq!(m.as_matrix()[(0, 0)], e, max_relative = 1e-14);
        }
        let (rev, big) = reverse_extremizers(&d, &a).unwrap();
        for (m, e) in rev.mats().iter().zip([0.1875, 0.1875, 0.25]) {
            assert_relative_eq!(m.as_matrix()[(0, 0)], e, max_relative = 1e-14);
        }
        assert_eq!(big, a);
    }

    #[test]
    fn constant_is_scale_invariant() {
        let d = young(0.75, 0.75, 0.5);
        let a = young_closed_a();
        let c = bl_constant(&d, &a).unwrap();
        for lam in [1e-3, 0.5, 7.0, 1e4] {
            assert_relative_eq!(
                bl_constant(&d, &a.scaled(lam)).unwrap(),
                c,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn solve_frame_datum_returns_identity() {
        let r = solve(
            &BLDatum::<f64>::prekopa_leindler(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert!(r.residual < 1e-12);
        assert_eq!(r.constant, Constant::Finite(1.0));
    }

    #[test]
    fn solve_hadamard_returns_diagonal() {
        let r = solve(&BLDatum::<f64>::coordinate(4), &SolveOptions::default()).unwrap();
        assert!(r.converged);
        let a = r.a.as_matrix();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(a[(i, j)], 0.0);
                }
            }
        }
        assert_relative_eq!(r.constant.value().unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn solve_young_matches_normalized_closed_form() {
        let d = young(0.75, 0.75, 0.5);
        let r = solve(&d, &SolveOptions::default()).unwrap();
        assert!(r.converged);
        let expect = young_closed_a().det_normalized();
        assert!((r.a.as_matrix() - expect.as_matrix()).amax() < 1e-8);
        assert_relative_eq!(r.constant.value().unwrap(), bl_constant(&d, &r.a).unwrap());
    }

    #[test]
    fn ascent_strategy_is_monotone_and_converges() {
        let d = young(0.6, 0.8, 0.6);
        let opts = SolveOptions {
            strategy: Strategy::Ascent,
            tol: 1e-9,
            ..Default::default()
        };
        let r = solve(&d, &opts).unwrap();
        assert!(
            r.converged,
            "residual {:e} after {}",
            r.residual, r.iterations
        );
        for w in r.trace.windows(2) {
            assert!(w[1].objective >= w[0].objective);
            assert_eq!(w[1].phase, Phase::Ascent);
        }
        let fp = solve(&d, &SolveOptions::default()).unwrap();
        assert_relative_eq!(
            r.constant.value().unwrap(),
            fp.constant.value().unwrap(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn unbounded_objective_reports_infinite_constant() {
        // V = span{e₂} has dim 1 > c₂·dim(B₂V) = 1/2
        let d = BLDatum::from_rows(2, &[(1.5, &[&[1.0, 0.0]]), (0.5, &[&[0.0, 1.0]])]).unwrap();
        let r = solve(&d, &SolveOptions::default()).unwrap();
        assert!(!r.converged);
        assert_eq!(r.constant, Constant::Infinite);
    }

    #[test]
    fn rejects_degenerate_and_inhomogeneous_data() {
        let deg = BLDatum::from_rows(2, &[(2.0, &[&[1.0, 0.0]])]).unwrap();
        assert!(matches!(
            solve(&deg, &SolveOptions::default()),
            Err(Error::Degenerate { .. })
        ));
        let inh = young(0.75, 0.75, 0.6);
        assert!(matches!(
            solve(&inh, &SolveOptions::default()),
            Err(Error::Inhomogeneous { .. })
        ));
    }

    #[test]
    fn zero_maps_are_ignored() {
        let d = young(0.75, 0.75, 0.5)
            .with_factor(crate::datum::LinearFactor::from_rows(2.0, &[&[0.0, 0.0]]).unwrap())
            .unwrap();
        let r = solve(&d, &SolveOptions::default()).unwrap();
        let base = solve(&young(0.75, 0.75, 0.5), &SolveOptions::default()).unwrap();
        assert_eq!(r.constant, base.constant);
        assert_eq!(direct_extremizers(&d, &r.a).unwrap().len(), 3);
    }

    #[test]
    fn works_in_single_precision() {
        let d = BLDatum::<f32>::from_rows(
            2,
            &[
                (0.75, &[&[1.0, 1.0]]),
                (0.75, &[&[0.0, 1.0]]),
                (0.5, &[&[1.0, 0.0]]),
            ],
        )
        .unwrap();
        let r = solve(
            &d,
            &SolveOptions {
                tol: 1e-5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.constant.value().unwrap() - 0.877_382_f32).abs() < 1e-4);
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let r = solve(&young(0.75, 0.75, 0.5), &SolveOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&r.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,residual,objective"));
        assert_eq!(lines.count(), r.trace.len());
        assert!(!text.contains('\r'));
    }
}
