mod common;

use bl_core::functional_verify::{
    direct_integral_check, reverse_integral_check, sup_convolution, FunctionFamily, GridFunction,
    GridSpec, SupConvolution,
};
use bl_core::gaussian_verify::{direct_gaussian_check, reverse_gaussian_check};
use bl_core::quadform::harmonic_combine;
use bl_core::sampling::stream_rng;
use bl_core::{Datum, Spd, Tuple};
use common::{gaussian_grids, young};
use rand::Rng;

fn bumpy(grid: GridSpec, center: f64, radius: f64, tilt: f64) -> GridFunction {
    GridFunction::from_fn(grid, |y| {
        let bump = FunctionFamily::Bump {
            center: vec![center],
            radius,
        }
        .value(y);
        bump * (1.0 + tilt * y[0]).max(0.0)
    })
    .unwrap()
}

#[test]
fn refinement_shrinks_the_change() {
    let datum = young(4.0 / 3.0, 4.0 / 3.0);
    let ratio = |points: usize| {
        let grid = GridSpec::cube(1, -4.0, 4.0, points).unwrap();
        let fs = vec![
            bumpy(grid.clone(), 0.3, 2.5, 0.2),
            bumpy(grid.clone(), -0.5, 3.0, -0.1),
            bumpy(grid, 0.0, 2.0, 0.3),
        ];
        direct_integral_check(&datum, &fs, 1.0, points)
            .unwrap()
            .ratio
    };
    let r: Vec<f64> = [21, 41, 81, 161].into_iter().map(ratio).collect();
    for w in r.windows(3) {
        assert!((w[2] - w[1]).abs() < (w[1] - w[0]).abs(), "{r:?}");
    }
    assert!(r[3] <= 1.0, "{r:?}");
}

#[test]
fn sup_convolution_dominates_sampled_decompositions() {
    let datum = young(1.5, 1.25);
    let grid = GridSpec::cube(1, -4.0, 4.0, 201).unwrap();
    let fs = vec![
        bumpy(grid.clone(), 0.3, 3.5, 0.2),
        bumpy(grid.clone(), -0.5, 3.0, -0.1),
        bumpy(grid, 0.0, 3.9, 0.3),
    ];
    let sc = SupConvolution::new(&datum, &fs, 201).unwrap();
    let mut rng = stream_rng(21, 0);
    for _ in 0..300 {
        let xs: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut x = [0.0; 2];
        let mut product = 1.0;
        for ((f, g), xi) in datum.factors().iter().zip(&fs).zip(&xs) {
            x[0] += f.c() * f.map()[(0, 0)] * xi;
            x[1] += f.c() * f.map()[(0, 1)] * xi;
            product *= g.eval(&[*xi]).powf(f.c());
        }
        let sup = sc.value_at(&x);
        assert!(
            sup >= product * (1.0 - 1e-9) - 1e-14,
            "x={x:?}: {sup} < {product}"
        );
    }
}

#[test]
fn quadrature_agrees_with_determinant_forms_off_equality() {
    let datum = young(4.0 / 3.0, 4.0 / 3.0);
    let c = bl_core::young::constant_from_cs(0.75, 0.75, 0.5).unwrap();
    let tuple = Tuple::new(vec![
        Spd::from_diagonal(&[1.7]).unwrap(),
        Spd::from_diagonal(&[0.9]).unwrap(),
        Spd::from_diagonal(&[2.4]).unwrap(),
    ]);
    let fs = gaussian_grids(&tuple, 8.0, 801);
    let d = direct_integral_check(&datum, &fs, c, 401).unwrap();
    let expect = direct_gaussian_check(&datum, c, &tuple).unwrap().sqrt();
    assert!(expect < 0.999);
    assert!((d.ratio - expect).abs() < 1e-4, "{} vs {expect}", d.ratio);

    let r = reverse_integral_check(&datum, &fs, c, 301).unwrap();
    let expect = reverse_gaussian_check(&datum, c, &tuple).unwrap().sqrt();
    assert!(expect < 0.999);
    assert!((r.ratio - expect).abs() < 1e-3, "{} vs {expect}", r.ratio);
}

#[test]
fn two_dimensional_kernel_closure() {
    let id: &[&[f64]] = &[&[1.0, 0.0], &[0.0, 1.0]];
    let datum = Datum::from_rows(2, &[(0.5, id), (0.5, id)]).unwrap();
    let tuple = Tuple::new(vec![
        Spd::from_row_slice(2, &[1.0, 0.3, 0.3, 2.0]).unwrap(),
        Spd::from_row_slice(2, &[3.0, -0.5, -0.5, 1.0]).unwrap(),
    ]);
    let fs = gaussian_grids(&tuple, 6.0, 121);
    let m = harmonic_combine(&datum, &tuple).unwrap();
    let out = GridSpec::cube(2, -3.0, 3.0, 25).unwrap();
    let f = sup_convolution(&datum, &fs, &out).unwrap();
    for k in 0..out.len() {
        let x = out.node(k);
        let exact = (-0.5 * m.quad(&nalgebra::DVector::from_column_slice(&x))).exp();
        assert!(
            (f.values()[k] - exact).abs() < 1e-3,
            "x={x:?}: {} vs {exact}",
            f.values()[k]
        );
    }
}

#[test]
fn degenerate_sup_is_zero_off_the_range() {
    // both maps see only the first coordinate
    let datum = Datum::from_rows(
        2,
        &[(1.0, &[&[1.0, 0.0][..]][..]), (1.0, &[&[2.0, 0.0][..]][..])],
    )
    .unwrap();
    let grid = GridSpec::cube(1, -2.0, 2.0, 41).unwrap();
    let fs = vec![
        FunctionFamily::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        }
        .sample(grid.clone())
        .unwrap(),
        FunctionFamily::Box {
            lo: vec![-1.0],
            hi: vec![1.0],
        }
        .sample(grid)
        .unwrap(),
    ];
    let sc = SupConvolution::new(&datum, &fs, 41).unwrap();
    assert_eq!(sc.value_at(&[0.5, 0.5]), 0.0);
    assert!(sc.value_at(&[0.5, 0.0]) > 0.99);
}
