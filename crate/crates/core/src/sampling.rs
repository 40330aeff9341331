//! Seeded random streams and random SPD matrices.
//!
//! Every randomized routine derives its generators from `(seed, stream)` so
//! results do not depend on how work is split across threads.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::SpdMatrix;
use crate::scalar::{lit, Real};

/// Samples per parallel work unit in the Monte Carlo style loops.
pub(crate) const BLOCK: usize = 64;

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R) -> T {
    lit(rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vector<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<T> {
    DVector::from_fn(n, |_, _| normal(rng))
}

pub fn normal_matrix<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
) -> DMatrix<T> {
    // row-major fill so the draw order is independent of storage layout
    let flat: Vec<T> = (0..rows * cols).map(|_| normal(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &flat)
}

/// `G Gᵀ + 10⁻⁶ I` with standard normal `G`, optionally multiplied by a
/// log-uniform factor in `[10⁻², 10²]`.
pub fn random_spd<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, rescale: bool) -> SpdMatrix<T> {
    let g: DMatrix<T> = normal_matrix(rng, n, n);
    let mut m = &g * g.transpose() + DMatrix::identity(n, n) * lit::<T>(1e-6);
    if rescale {
        let e: f64 = rng.random_range(-2.0..=2.0);
        m *= lit::<T>(10f64.powf(e));
    }
    SpdMatrix::from_computed(m).unwrap_or_else(|_| SpdMatrix::identity(n))
}

/// Uniformly random orthogonal matrix (QR of a Gaussian matrix with the sign
/// of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<T> {
    let g: DMatrix<T> = normal_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < T::zero() {
            let col = -q.column(j).clone_owned();
            q.set_column(j, &col);
        }
    }
    q
}
