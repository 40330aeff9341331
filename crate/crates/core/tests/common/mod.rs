#![allow(dead_code)]

use bl_core::functional_verify::{FunctionFamily, GridFunction, GridSpec};
use bl_core::sampling::{normal_matrix, stream_rng};
use bl_core::young::{datum_from_exponents, YoungExponents};
use bl_core::{Datum, Factor, Spd, Tuple};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn young(p: f64, q: f64) -> Datum {
    datum_from_exponents(&YoungExponents::from_pq(p, q).unwrap())
}

/// Projections of `ℝ³` onto the three coordinate planes, `c = ½` each.
pub fn loomis_whitney() -> Datum {
    let planes: [[usize; 2]; 3] = [[1, 2], [0, 2], [0, 1]];
    let factors = planes
        .iter()
        .map(|axes| {
            let mut b = DMatrix::zeros(2, 3);
            b[(0, axes[0])] = 1.0;
            b[(1, axes[1])] = 1.0;
            Factor::new(0.5, b).unwrap()
        })
        .collect();
    Datum::new(3, factors).unwrap()
}

/// Random datum with Gaussian maps: `n ∈ {1,2,3}`, two or three factors,
/// `nᵢ ≤ n`, exponents in `[0.2, 1.5]`. Maps with singular-value ratio above
/// `10³` are redrawn. Not homogeneous in general.
pub fn random_datum(rng: &mut ChaCha8Rng) -> Datum {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(2..=3);
    loop {
        let factors: Vec<Factor> = (0..m)
            .map(|_| {
                let k = rng.random_range(1..=n);
                let b = loop {
                    let b: DMatrix<f64> = normal_matrix(rng, k, n);
                    let sv = b.singular_values();
                    if sv.max() < 1e3 * sv.min() {
                        break b;
                    }
                };
                Factor::new(rng.random_range(0.2..1.5), b).unwrap()
            })
            .collect();
        if let Ok(d) = Datum::new(n, factors) {
            if !bl_core::validate(&d, 1e-10).unwrap().degenerate {
                return d;
            }
        }
    }
}

/// Well-conditioned random SPD matrix `G Gᵀ + I`.
pub fn conditioned_spd(rng: &mut ChaCha8Rng, n: usize) -> Spd {
    let g: DMatrix<f64> = normal_matrix(rng, n, n);
    Spd::new(&g * g.transpose() + DMatrix::identity(n, n)).unwrap()
}

pub fn random_tuple(datum: &Datum, rng: &mut ChaCha8Rng) -> Tuple {
    Tuple::new(
        datum
            .active()
            .map(|(_, f)| conditioned_spd(rng, f.target_dim()))
            .collect(),
    )
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 0)
}

/// Centered Gaussians with the given precisions, sampled on `[−half, half]^{nᵢ}`.
pub fn gaussian_grids(tuple: &Tuple, half: f64, points: usize) -> Vec<GridFunction> {
    tuple
        .mats()
        .iter()
        .map(|p| {
            let grid = GridSpec::cube(p.dim(), -half, half, points).unwrap();
            FunctionFamily::gaussian(p.as_matrix())
                .sample(grid)
                .unwrap()
        })
        .collect()
}
