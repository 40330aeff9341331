//! Determinant forms of the direct and reversed inequalities, used as oracles.
//!
//! Plugging centered Gaussians `e^{−⟨Aᵢx,x⟩/2}` into the integral inequalities
//! turns them into determinant inequalities. Every check below returns a ratio
//! that is at most one when the claimed constant is valid and exactly one at
//! the corresponding extremizers. Ratios are formed in the log domain and
//! clamped to `e^{±700}`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datum::{require_solvable, BLDatum};
use crate::error::{Error, Result};
use crate::gaussian_solver::{grad_logdet, objective, pushforward, DIVERGENCE_OBJECTIVE};
use crate::linalg::{frobenius, sym_exp, sym_sqrt, SpdMatrix};
use crate::quadform::{harmonic_combine, require_nondegenerate, GaussianTuple};
use crate::sampling::{random_spd, stream_rng, BLOCK};
use crate::scalar::{lit, to_f64, Real};

/// A sample violates the inequality when its ratio exceeds `1 + VIOLATION_TOL`.
pub const VIOLATION_TOL: f64 = 1e-9;
/// Log-ratios are clamped to `±LOG_CLAMP` before exponentiation.
pub const LOG_CLAMP: f64 = 700.0;
/// Random restarts used by [`gaussian_constant_search`].
pub const SEARCH_RESTARTS: u64 = 4;

/// Outcome of a randomized oracle check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub samples: usize,
    /// Samples whose ratio exceeds `1 + 1e-9` (or that fail the check's own
    /// criterion, for non-ratio checks).
    pub violations: usize,
    pub worst_ratio: f64,
    /// `|ratio − 1|` at the claimed extremizer, when one was supplied.
    pub equality_gap: Option<f64>,
    pub seed: u64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn summary(&self) -> String {
        let gap = self
            .equality_gap
            .map_or_else(|| "n/a".to_string(), |g| format!("{g:.3e}"));
        format!(
            "samples={} violations={} worst_ratio={:.12} equality_gap={} seed={}",
            self.samples, self.violations, self.worst_ratio, gap, self.seed
        )
    }
}

fn clamped_exp<T: Real>(log_ratio: T) -> T {
    let c: T = lit(LOG_CLAMP);
    log_ratio.max(-c).min(c).exp()
}

fn check_constant<T: Real>(c: T) -> Result<()> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::Domain(format!(
            "constant must be positive and finite, got {}",
            to_f64(c)
        )));
    }
    Ok(())
}

/// `Π det(Aᵢ)^{cᵢ} / (C² det(Σ cᵢ Bᵢ* Aᵢ Bᵢ))`.
pub fn direct_gaussian_check<T: Real>(
    datum: &BLDatum<T>,
    c: T,
    tuple: &GaussianTuple<T>,
) -> Result<T> {
    check_constant(c)?;
    require_nondegenerate(datum)?;
    tuple.check_shapes(datum)?;
    let n = datum.n();
    let mut sum = DMatrix::zeros(n, n);
    let mut log_num = T::zero();
    for ((_, f), ai) in datum.active().zip(tuple.mats()) {
        log_num += f.c() * ai.log_det();
        sum += f.map().transpose() * ai.as_matrix() * f.map() * f.c();
    }
    let sum = SpdMatrix::from_computed(sum).map_err(|_| Error::Degenerate { rank: 0, n })?;
    Ok(clamped_exp(
        log_num - lit::<T>(2.0) * c.ln() - sum.log_det(),
    ))
}

/// `det M / (C_r² Π det(Aᵢ)^{cᵢ})` with `M` the harmonic combination of the
/// tuple: the reversed inequality for `fᵢ = e^{−⟨Aᵢx,x⟩/2}` and their
/// sup-convolution `f = e^{−⟨Mx,x⟩/2}`.
pub fn reverse_gaussian_check<T: Real>(
    datum: &BLDatum<T>,
    c_r: T,
    tuple: &GaussianTuple<T>,
) -> Result<T> {
    check_constant(c_r)?;
    let m = harmonic_combine(datum, tuple)?;
    let log_den = datum
        .active()
        .zip(tuple.mats())
        .fold(T::zero(), |acc, ((_, f), ai)| acc + f.c() * ai.log_det());
    Ok(clamped_exp(
        m.log_det() - lit::<T>(2.0) * c_r.ln() - log_den,
    ))
}

/// `det A / (C_g² Π det(Bᵢ A Bᵢ*)^{cᵢ})`.
pub fn dual_check<T: Real>(datum: &BLDatum<T>, c_g: T, a: &SpdMatrix<T>) -> Result<T> {
    check_constant(c_g)?;
    if a.dim() != datum.n() {
        return Err(Error::Shape(format!(
            "A is {0}x{0}, datum lives on R^{1}",
            a.dim(),
            datum.n()
        )));
    }
    let mut log_ratio = a.log_det() - lit::<T>(2.0) * c_g.ln();
    for (i, f) in datum.active() {
        log_ratio -= f.c() * pushforward(i, f.map(), a)?.log_det();
    }
    Ok(clamped_exp(log_ratio))
}

/// `tr(AB) − n − log det B − log det A`, non-negative with equality at `B = A⁻¹`.
pub fn logdet_duality_check<T: Real>(a: &SpdMatrix<T>, b: &SpdMatrix<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{}x{0} vs {1}x{1}", a.dim(), b.dim())));
    }
    let tr = (a.as_matrix() * b.as_matrix()).trace();
    Ok(tr - lit(a.dim() as f64) - b.log_det() - a.log_det())
}

/// Runs `sample` over `samples` draws in blocks of [`BLOCK`], block `k` using
/// stream `k` of `seed`. Returns `(violations, worst_ratio)`.
fn run_blocks<T, F>(samples: usize, seed: u64, sample: F) -> Result<(usize, f64)>
where
    T: Real,
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<T> + Sync,
{
    let blocks = samples.div_ceil(BLOCK);
    let per_block: Vec<Result<(usize, f64)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, b as u64);
            let count = BLOCK.min(samples - b * BLOCK);
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..count {
                let r = to_f64(sample(&mut rng)?);
                if !(r <= 1.0 + VIOLATION_TOL) {
                    violations += 1;
                }
                worst = worst.max(r);
            }
            Ok((violations, worst))
        })
        .collect();
    per_block
        .into_iter()
        .try_fold((0, f64::NEG_INFINITY), |(v, w), r| {
            let (bv, bw) = r?;
            Ok((v + bv, w.max(bw)))
        })
}

fn random_tuple<T: Real>(
    datum: &BLDatum<T>,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> GaussianTuple<T> {
    GaussianTuple::new(
        datum
            .active()
            .map(|(_, f)| random_spd(rng, f.target_dim(), true))
            .collect(),
    )
}

fn report(
    samples: usize,
    seed: u64,
    (violations, worst): (usize, f64),
    gap: Option<f64>,
) -> VerificationReport {
    VerificationReport {
        samples,
        violations,
        worst_ratio: worst,
        equality_gap: gap,
        seed,
    }
}

/// [`direct_gaussian_check`] over `samples` random SPD tuples, plus the
/// equality gap at `extremal` when given.
pub fn direct_gaussian_suite<T: Real>(
    datum: &BLDatum<T>,
    c: T,
    samples: usize,
    seed: u64,
    extremal: Option<&GaussianTuple<T>>,
) -> Result<VerificationReport> {
    let gap = extremal
        .map(|t| direct_gaussian_check(datum, c, t).map(|r| (to_f64(r) - 1.0).abs()))
        .transpose()?;
    let stats = run_blocks(samples, seed, |rng| {
        direct_gaussian_check(datum, c, &random_tuple(datum, rng))
    })?;
    Ok(report(samples, seed, stats, gap))
}

/// [`reverse_gaussian_check`] over `samples` random SPD tuples.
pub fn reverse_gaussian_suite<T: Real>(
    datum: &BLDatum<T>,
    c_r: T,
    samples: usize,
    seed: u64,
    extremal: Option<&GaussianTuple<T>>,
) -> Result<VerificationReport> {
    let gap = extremal
        .map(|t| reverse_gaussian_check(datum, c_r, t).map(|r| (to_f64(r) - 1.0).abs()))
        .transpose()?;
    let stats = run_blocks(samples, seed, |rng| {
        reverse_gaussian_check(datum, c_r, &random_tuple(datum, rng))
    })?;
    Ok(report(samples, seed, stats, gap))
}

/// [`dual_check`] over `samples` random SPD matrices.
pub fn dual_suite<T: Real>(
    datum: &BLDatum<T>,
    c_g: T,
    samples: usize,
    seed: u64,
    extremal: Option<&SpdMatrix<T>>,
) -> Result<VerificationReport> {
    let gap = extremal
        .map(|a| dual_check(datum, c_g, a).map(|r| (to_f64(r) - 1.0).abs()))
        .transpose()?;
    let n = datum.n();
    let stats = run_blocks(samples, seed, |rng| {
        dual_check(datum, c_g, &random_spd(rng, n, true))
    })?;
    Ok(report(samples, seed, stats, gap))
}

/// Random pairs `(A, B)`; the reported ratio is `e^{−gap}`, at most one
/// exactly when the gap is non-negative. The equality gap is measured at
/// `B = A⁻¹` for the first sample.
pub fn logdet_duality_suite<T: Real>(
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let stats = run_blocks(samples, seed, |rng| {
        let a = random_spd::<T, _>(rng, n, true);
        let b = random_spd::<T, _>(rng, n, true);
        Ok(clamped_exp(-logdet_duality_check(&a, &b)?))
    })?;
    let mut rng = stream_rng(seed, u64::MAX);
    let a = random_spd::<T, _>(&mut rng, n, true);
    let gap = to_f64(logdet_duality_check(&a, &a.inverse())?).abs();
    Ok(report(samples, seed, stats, Some(gap)))
}

/// Lower bound on the Gaussian constant by random-restart ascent of
/// `log det A − Σ cᵢ log det(Bᵢ A Bᵢ*)`.
///
/// Each restart starts from a random SPD matrix and moves along the
/// exponential chart at the current point, `A ← A^{1/2} exp(t A^{1/2} ∇ A^{1/2}) A^{1/2}`,
/// with Armijo backtracking, for at most `iters` accepted steps.
pub fn gaussian_constant_search<T: Real>(datum: &BLDatum<T>, iters: usize, seed: u64) -> Result<T> {
    require_solvable(datum)?;
    let n = datum.n();
    let mut best = T::min_value().unwrap_or_else(|| lit(f64::MIN));
    for restart in 0..SEARCH_RESTARTS {
        let mut rng = stream_rng(seed, restart);
        let mut a = random_spd::<T, _>(&mut rng, n, false).det_normalized();
        let mut obj = objective(datum, &a)?;
        let mut step: T = T::one();
        for _ in 0..iters {
            let root = sym_sqrt(&a);
            let dir = &root * grad_logdet(datum, &a)? * &root;
            let slope = frobenius(&dir).powi(2);
            if slope <= lit(1e-28) || obj > lit(DIVERGENCE_OBJECTIVE) {
                break;
            }
            let mut t = step;
            let mut moved = false;
            for _ in 0..60 {
                let cand = SpdMatrix::from_computed(&root * sym_exp(&(&dir * t)) * &root);
                if let Ok(cand) = cand {
                    if let Ok(o) = objective(datum, &cand) {
                        if o >= obj + lit::<T>(1e-4) * t * slope {
                            a = cand.det_normalized();
                            obj = o;
                            moved = true;
                            break;
                        }
                    }
                }
                t *= lit(0.5);
            }
            if !moved {
                break;
            }
            step = (t * lit(2.0)).min(lit(1e3));
        }
        best = best.max(obj);
    }
    Ok((best * lit::<T>(0.5)).exp())
}
