//! Grid quadrature of the integral inequalities in dimensions one and two.
//!
//! Functions are sampled on tensor grids and evaluated off-grid by piecewise
//! cubic Lagrange interpolation (zero outside their box). The direct side
//! integrates `Π fᵢ(Bᵢx)^{cᵢ}` over the smallest box containing its support;
//! the reversed side builds the sup-convolution
//!
//! ```text
//! f(x) = sup { Π fᵢ(xᵢ)^{cᵢ} : Σ cᵢ Bᵢ* xᵢ = x }
//! ```
//!
//! by brute force over the affine set of decompositions, with `sup ∅ = 0`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datum::{validate, BLDatum, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::kernel_basis;
use crate::quadform::synthesis_matrix;

/// Largest grid dimension, ambient dimension, and decomposition-kernel dimension.
pub const MAX_DIM: usize = 2;
/// Boundary values above this make the truncation to the box unsound.
pub const BOUNDARY_WARN: f64 = 1e-6;
/// Points per axis of the decomposition grid when the kernel is two-dimensional.
pub const MAX_KERNEL_GRID: usize = 129;
/// Local refinement rounds after the decomposition grid search.
pub const ZOOM_ROUNDS: usize = 4;
const ZOOM_HALF: i32 = 4;

/// Tensor grid on the box `[lo, hi]` with `points_per_axis` nodes per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, points_per_axis: usize) -> Result<Self> {
        let grid = Self {
            lo,
            hi,
            points_per_axis,
        };
        grid.check()?;
        Ok(grid)
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64, points_per_axis: usize) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim], points_per_axis)
    }

    fn check(&self) -> Result<()> {
        let d = self.lo.len();
        if d == 0 || d > MAX_DIM || self.hi.len() != d {
            return Err(Error::DeskScale(format!(
                "grid dimension must be 1 or 2, got lo={} hi={}",
                d,
                self.hi.len()
            )));
        }
        if self.points_per_axis < 2 {
            return Err(Error::Domain("points_per_axis must be at least 2".into()));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::Domain(format!("invalid box side [{l}, {h}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.points_per_axis - 1) as f64
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.points_per_axis {
            self.hi[axis]
        } else {
            self.lo[axis] + i as f64 * self.step(axis)
        }
    }

    /// Coordinates of node `flat` (first axis slowest).
    pub fn node(&self, flat: usize) -> [f64; 2] {
        let n = self.points_per_axis;
        match self.dim() {
            1 => [self.coord(0, flat), 0.0],
            _ => [self.coord(0, flat / n), self.coord(1, flat % n)],
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&v, (&l, &h))| {
                let slack = 1e-12 * (h - l);
                v >= l - slack && v <= h + slack
            })
    }

    /// Trapezoid weight of node `flat`.
    fn weight(&self, flat: usize) -> f64 {
        let n = self.points_per_axis;
        let w1 = |axis: usize, i: usize| {
            let h = self.step(axis);
            if i == 0 || i + 1 == n {
                0.5 * h
            } else {
                h
            }
        };
        match self.dim() {
            1 => w1(0, flat),
            _ => w1(0, flat / n) * w1(1, flat % n),
        }
    }
}

#[derive(Deserialize)]
struct RawGridFunction {
    #[serde(flatten)]
    grid: GridSpec,
    values: Vec<f64>,
}

/// Non-negative function sampled on a [`GridSpec`]; `values` is row-major
/// with the first axis varying slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridFunction")]
pub struct GridFunction {
    #[serde(flatten)]
    grid: GridSpec,
    values: Vec<f64>,
}

impl TryFrom<RawGridFunction> for GridFunction {
    type Error = Error;

    fn try_from(raw: RawGridFunction) -> Result<Self> {
        Self::new(raw.grid, raw.values)
    }
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.check()?;
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!(
                "grid values must be finite and non-negative, found {bad}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<Self> {
        grid.check()?;
        let d = grid.dim();
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| f(&grid.node(k)[..d]))
            .collect();
        Self::new(grid, values)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Largest value on the boundary of the box.
    pub fn boundary_max(&self) -> f64 {
        let n = self.grid.points_per_axis;
        let edge = |i: usize| i == 0 || i + 1 == n;
        (0..self.values.len())
            .filter(|&k| match self.dim() {
                1 => edge(k),
                _ => edge(k / n) || edge(k % n),
            })
            .map(|k| self.values[k])
            .fold(0.0, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Cubic Lagrange interpolant (linear with fewer than four nodes per
    /// axis), zero outside the box, clamped at zero.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if x.len() != self.dim() || !self.grid.contains(x) {
            return 0.0;
        }
        let (i0, w0, k0) = self.stencil(0, x[0]);
        let v = match self.dim() {
            1 => w0[..k0]
                .iter()
                .enumerate()
                .map(|(a, w)| w * self.values[i0 + a])
                .sum::<f64>(),
            _ => {
                let n = self.grid.points_per_axis;
                let (i1, w1, k1) = self.stencil(1, x[1]);
                let mut acc = 0.0;
                for (a, wa) in w0[..k0].iter().enumerate() {
                    let row = (i0 + a) * n + i1;
                    let inner: f64 = w1[..k1]
                        .iter()
                        .enumerate()
                        .map(|(b, wb)| wb * self.values[row + b])
                        .sum();
                    acc += wa * inner;
                }
                acc
            }
        };
        v.max(0.0)
    }

    /// First node, weights and width of the interpolation stencil along `axis`.
    fn stencil(&self, axis: usize, x: f64) -> (usize, [f64; 4], usize) {
        let n = self.grid.points_per_axis;
        let u = ((x - self.grid.lo[axis]) / self.grid.step(axis)).clamp(0.0, (n - 1) as f64);
        if n < 4 {
            let i = (u.floor() as usize).min(n - 2);
            let s = u - i as f64;
            return (i, [1.0 - s, s, 0.0, 0.0], 2);
        }
        let cell = (u.floor() as usize).min(n - 2);
        let start = cell.saturating_sub(1).min(n - 4);
        let s = u - start as f64;
        let (d0, d1, d2, d3) = (s, s - 1.0, s - 2.0, s - 3.0);
        let w = [
            -d1 * d2 * d3 / 6.0,
            d0 * d2 * d3 / 2.0,
            -d0 * d1 * d3 / 2.0,
            d0 * d1 * d2 / 6.0,
        ];
        (start, w, 4)
    }
}

/// Trapezoidal tensor quadrature over the function's box.
pub fn integrate(g: &GridFunction) -> f64 {
    g.values
        .iter()
        .enumerate()
        .map(|(k, v)| v * g.grid.weight(k))
        .sum()
}

/// Built-in function families, all with peak value one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FunctionFamily {
    /// `exp(−⟨P(y − m), y − m⟩/2)`.
    Gaussian {
        center: Vec<f64>,
        precision: Vec<Vec<f64>>,
    },
    /// `exp(1 − 1/(1 − r²))` with `r = |y − m|/radius` inside the ball, zero outside.
    Bump { center: Vec<f64>, radius: f64 },
    /// Indicator of `[lo, hi]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl FunctionFamily {
    /// Centered Gaussian with the given precision.
    pub fn gaussian(precision: &DMatrix<f64>) -> Self {
        let rows = (0..precision.nrows())
            .map(|r| precision.row(r).iter().copied().collect())
            .collect();
        Self::Gaussian {
            center: vec![0.0; precision.nrows()],
            precision: rows,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian { center, .. } | Self::Bump { center, .. } => center.len(),
            Self::Box { lo, .. } => lo.len(),
        }
    }

    fn check(&self) -> Result<()> {
        let d = self.dim();
        let ok = match self {
            Self::Gaussian { precision, .. } => {
                precision.len() == d && precision.iter().all(|r| r.len() == d)
            }
            Self::Bump { radius, .. } => *radius > 0.0,
            Self::Box { lo, hi } => hi.len() == d && lo.iter().zip(hi).all(|(l, h)| l <= h),
        };
        if !ok {
            return Err(Error::Domain(format!(
                "invalid function family parameters: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        match self {
            Self::Gaussian { center, precision } => {
                let d: Vec<f64> = y.iter().zip(center).map(|(a, b)| a - b).collect();
                let q: f64 = precision
                    .iter()
                    .zip(&d)
                    .map(|(row, di)| di * row.iter().zip(&d).map(|(p, dj)| p * dj).sum::<f64>())
                    .sum();
                (-0.5 * q).exp()
            }
            Self::Bump { center, radius } => {
                let r2 = y
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    / (radius * radius);
                if r2 < 1.0 {
                    (1.0 - 1.0 / (1.0 - r2)).exp()
                } else {
                    0.0
                }
            }
            Self::Box { lo, hi } => {
                let inside = y
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (l, h))| v >= l && v <= h);
                f64::from(u8::from(inside))
            }
        }
    }

    pub fn sample(&self, grid: GridSpec) -> Result<GridFunction> {
        self.check()?;
        if grid.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "family has dimension {}, grid {}",
                self.dim(),
                grid.dim()
            )));
        }
        GridFunction::from_fn(grid, |y| self.value(y))
    }
}

/// Result of a quadrature check; `ratio = lhs / rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureCheck {
    pub ratio: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Both sides vanished; `ratio` is reported as 0.
    pub indeterminate: bool,
    pub warnings: Vec<String>,
}

impl QuadratureCheck {
    fn from_sides(lhs: f64, rhs: f64, warnings: Vec<String>) -> Self {
        let (ratio, indeterminate) = match (lhs > 0.0, rhs > 0.0) {
            (_, true) => (lhs / rhs, false),
            (false, false) => (0.0, true),
            (true, false) => (f64::INFINITY, false),
        };
        Self {
            ratio,
            lhs,
            rhs,
            indeterminate,
            warnings,
        }
    }
}

/// Linear factor flattened for the inner loops.
struct Leg<'a> {
    c: f64,
    rows: Vec<[f64; 2]>,
    f: &'a GridFunction,
}

impl Leg<'_> {
    fn apply(&self, x: &[f64; 2]) -> [f64; 2] {
        let mut y = [0.0; 2];
        for (r, row) in self.rows.iter().enumerate() {
            y[r] = row[0] * x[0] + row[1] * x[1];
        }
        y
    }

    fn dim(&self) -> usize {
        self.rows.len()
    }
}

fn legs<'a>(datum: &BLDatum<f64>, fs: &'a [GridFunction]) -> Result<Vec<Leg<'a>>> {
    let n = datum.n();
    if n > MAX_DIM {
        return Err(Error::DeskScale(format!(
            "ambient dimension {n} > {MAX_DIM}"
        )));
    }
    if fs.len() != datum.len() {
        return Err(Error::Shape(format!(
            "{} functions for {} factors",
            fs.len(),
            datum.len()
        )));
    }
    datum
        .factors()
        .iter()
        .zip(fs)
        .enumerate()
        .map(|(i, (factor, f))| {
            let b = factor.map();
            if b.nrows() > MAX_DIM {
                return Err(Error::DeskScale(format!(
                    "factor {i} has target dimension {} > {MAX_DIM}",
                    b.nrows()
                )));
            }
            if f.dim() != b.nrows() {
                return Err(Error::Shape(format!(
                    "factor {i}: function on R^{}, map into R^{}",
                    f.dim(),
                    b.nrows()
                )));
            }
            let rows = (0..b.nrows())
                .map(|r| {
                    let mut row = [0.0; 2];
                    for j in 0..n {
                        row[j] = b[(r, j)];
                    }
                    row
                })
                .collect();
            Ok(Leg {
                c: factor.c(),
                rows,
                f,
            })
        })
        .collect()
}

fn boundary_warnings(fs: &[GridFunction]) -> Vec<String> {
    fs.iter()
        .enumerate()
        .filter(|(_, f)| f.boundary_max() > BOUNDARY_WARN)
        .map(|(i, f)| {
            let msg = format!(
                "function {i} reaches {:.3e} on its box boundary; truncation is unsound",
                f.boundary_max()
            );
            warn!("{msg}");
            msg
        })
        .collect()
}

fn sum_log_integrals(legs: &[Leg]) -> f64 {
    legs.iter().map(|l| l.c * integrate(l.f).ln()).sum()
}

/// Smallest box containing `{x : Bᵢx ∈ box(fᵢ) for all i}`, or `None` when
/// that set is empty.
fn support_box(n: usize, legs: &[Leg]) -> Option<(Vec<f64>, Vec<f64>)> {
    // half-spaces a·x ≤ b
    let mut cons: Vec<([f64; 2], f64)> = Vec::new();
    for leg in legs {
        for (r, row) in leg.rows.iter().enumerate() {
            let (lo, hi) = (leg.f.grid.lo[r], leg.f.grid.hi[r]);
            if row[..n].iter().all(|v| *v == 0.0) {
                if lo > 0.0 || hi < 0.0 {
                    return None;
                }
                continue;
            }
            cons.push((*row, hi));
            cons.push(([-row[0], -row[1]], -lo));
        }
    }
    let feasible = |x: &[f64; 2]| {
        cons.iter()
            .all(|(a, b)| a[0] * x[0] + a[1] * x[1] <= b + 1e-9 * (1.0 + b.abs()))
    };
    let mut vertices = Vec::new();
    if n == 1 {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (a, b) in &cons {
            if a[0] > 0.0 {
                hi = hi.min(b / a[0]);
            } else {
                lo = lo.max(b / a[0]);
            }
        }
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            vertices.push([lo, 0.0]);
            vertices.push([hi, 0.0]);
        }
    } else {
        for (k, (a, b)) in cons.iter().enumerate() {
            for (p, q) in &cons[k + 1..] {
                let det = a[0] * p[1] - a[1] * p[0];
                if det.abs()
                    < 1e-14 * (1.0 + a[0].abs() + a[1].abs()) * (1.0 + p[0].abs() + p[1].abs())
                {
                    continue;
                }
                let x = [(b * p[1] - a[1] * q) / det, (a[0] * q - b * p[0]) / det];
                if feasible(&x) {
                    vertices.push(x);
                }
            }
        }
    }
    if vertices.is_empty() {
        return None;
    }
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for v in &vertices {
        for j in 0..n {
            lo[j] = lo[j].min(v[j]);
            hi[j] = hi[j].max(v[j]);
        }
    }
    Some((lo, hi))
}

/// `exp(Σ cᵢ log fᵢ(yᵢ))` with `0^c = 0`.
fn log_product(legs: &[Leg], ys: impl Iterator<Item = [f64; 2]>) -> f64 {
    let mut acc = 0.0;
    for (leg, y) in legs.iter().zip(ys) {
        let v = leg.f.eval(&y[..leg.dim()]);
        if v <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += leg.c * v.ln();
    }
    acc
}

/// `∫ Π fᵢ(Bᵢx)^{cᵢ} dx / (C Π (∫fᵢ)^{cᵢ})`, with the left side integrated by
/// the trapezoid rule on `resolution` points per axis over the support box.
pub fn direct_integral_check(
    datum: &BLDatum<f64>,
    fs: &[GridFunction],
    c: f64,
    resolution: usize,
) -> Result<QuadratureCheck> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!(
            "constant must be positive and finite, got {c}"
        )));
    }
    let legs = legs(datum, fs)?;
    let diag = validate(datum, DEFAULT_TOL)?;
    if diag.degenerate {
        return Err(Error::Degenerate {
            rank: diag.stacked_rank,
            n: datum.n(),
        });
    }
    let n = datum.n();
    let warnings = boundary_warnings(fs);
    let rhs = c * sum_log_integrals(&legs).exp();
    let lhs = match support_box(n, &legs) {
        None => 0.0,
        Some((lo, hi)) if lo.iter().zip(&hi).any(|(l, h)| l >= h) => 0.0,
        Some((lo, hi)) => {
            let grid = GridSpec::new(lo, hi, resolution)?;
            (0..grid.len())
                .into_par_iter()
                .map(|k| {
                    let x = grid.node(k);
                    let lp = log_product(&legs, legs.iter().map(|l| l.apply(&x)));
                    grid.weight(k) * lp.exp()
                })
                .sum()
        }
    };
    Ok(QuadratureCheck::from_sides(lhs, rhs, warnings))
}

/// Pointwise evaluator of the sup-convolution of grid functions.
pub struct SupConvolution<'a> {
    n: usize,
    legs: Vec<Leg<'a>>,
    /// Pseudo-inverse of the synthesis map, `Σnᵢ × n`.
    pinv: DMatrix<f64>,
    synth: DMatrix<f64>,
    /// Orthonormal kernel basis of the synthesis map, `Σnᵢ × k`.
    kernel: DMatrix<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    resolution: usize,
}

impl<'a> SupConvolution<'a> {
    /// `resolution` is the number of decomposition grid points per kernel
    /// axis (capped at [`MAX_KERNEL_GRID`] for a two-dimensional kernel).
    pub fn new(datum: &BLDatum<f64>, fs: &'a [GridFunction], resolution: usize) -> Result<Self> {
        let legs = legs(datum, fs)?;
        if resolution < 2 {
            return Err(Error::Domain("resolution must be at least 2".into()));
        }
        let synth = synthesis_full(datum);
        let kernel = kernel_basis(&synth, DEFAULT_TOL);
        if kernel.ncols() > MAX_DIM {
            return Err(Error::DeskScale(format!(
                "decomposition kernel has dimension {} > {MAX_DIM}",
                kernel.ncols()
            )));
        }
        let pinv = synth
            .clone()
            .pseudo_inverse(1e-12 * synth.amax().max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Domain(e.to_string()))?;
        let (lo, hi) = legs
            .iter()
            .flat_map(|l| l.f.grid.lo.iter().zip(&l.f.grid.hi))
            .unzip();
        Ok(Self {
            n: datum.n(),
            legs,
            pinv,
            synth,
            kernel,
            lo,
            hi,
            resolution,
        })
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel.ncols()
    }

    fn log_value(&self, z: &DVector<f64>) -> f64 {
        let mut off = 0;
        let ys = self.legs.iter().map(|l| {
            let mut y = [0.0; 2];
            for r in 0..l.dim() {
                y[r] = z[off + r];
            }
            off += l.dim();
            y
        });
        log_product(&self.legs, ys)
    }

    /// `sup { Π fᵢ(xᵢ)^{cᵢ} : Σ cᵢ Bᵢ* xᵢ = x }`, zero when no decomposition exists.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(&x[..self.n]);
        let p = &self.pinv * &x;
        if (&self.synth * &p - &x).norm() > 1e-9 * (1.0 + x.norm()) {
            return 0.0;
        }
        let best = match self.kernel_dim() {
            0 => self.log_value(&p),
            1 => self.search_line(&p),
            _ => self.search_plane(&p),
        };
        if best == f64::NEG_INFINITY {
            0.0
        } else {
            best.exp()
        }
    }

    fn search_line(&self, p: &DVector<f64>) -> f64 {
        let v = self.kernel.column(0);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for j in 0..p.len() {
            let (a, b) = (self.lo[j] - p[j], self.hi[j] - p[j]);
            if v[j].abs() < 1e-14 {
                if a > 1e-12 || b < -1e-12 {
                    return f64::NEG_INFINITY;
                }
                continue;
            }
            let (t0, t1) = if v[j] > 0.0 {
                (a / v[j], b / v[j])
            } else {
                (b / v[j], a / v[j])
            };
            lo = lo.max(t0);
            hi = hi.min(t1);
        }
        if lo > hi {
            return f64::NEG_INFINITY;
        }
        let at = |t: f64| self.log_value(&(p + v * t));
        let m = self.resolution;
        let h = (hi - lo) / (m - 1) as f64;
        let (mut best_t, mut best) = (lo, f64::NEG_INFINITY);
        for i in 0..m {
            let t = lo + i as f64 * h;
            let val = at(t);
            if val > best {
                best = val;
                best_t = t;
            }
        }
        if best == f64::NEG_INFINITY {
            return best;
        }
        let mut step = h / ZOOM_HALF as f64;
        for _ in 0..ZOOM_ROUNDS {
            let center = best_t;
            for j in -ZOOM_HALF..=ZOOM_HALF {
                let t = center + j as f64 * step;
                let val = at(t);
                if val > best {
                    best = val;
                    best_t = t;
                }
            }
            step /= ZOOM_HALF as f64;
        }
        best
    }

    fn search_plane(&self, p: &DVector<f64>) -> f64 {
        let radius = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        let (u, v) = (self.kernel.column(0), self.kernel.column(1));
        let at = |s: f64, t: f64| self.log_value(&(p + u * s + v * t));
        let m = self.resolution.min(MAX_KERNEL_GRID);
        let h = 2.0 * radius / (m - 1) as f64;
        let (mut best_st, mut best) = ((0.0, 0.0), f64::NEG_INFINITY);
        for i in 0..m {
            for j in 0..m {
                let (s, t) = (-radius + i as f64 * h, -radius + j as f64 * h);
                let val = at(s, t);
                if val > best {
                    best = val;
                    best_st = (s, t);
                }
            }
        }
        if best == f64::NEG_INFINITY {
            return best;
        }
        let mut step = h / ZOOM_HALF as f64;
        for _ in 0..ZOOM_ROUNDS {
            let (cs, ct) = best_st;
            for i in -ZOOM_HALF..=ZOOM_HALF {
                for j in -ZOOM_HALF..=ZOOM_HALF {
                    let (s, t) = (cs + i as f64 * step, ct + j as f64 * step);
                    let val = at(s, t);
                    if val > best {
                        best = val;
                        best_st = (s, t);
                    }
                }
            }
            step /= ZOOM_HALF as f64;
        }
        best
    }
}

/// Synthesis map over all factors, zero maps included.
fn synthesis_full(datum: &BLDatum<f64>) -> DMatrix<f64> {
    if datum.active_count() == datum.len() {
        return synthesis_matrix(datum);
    }
    let total: usize = datum.factors().iter().map(|f| f.target_dim()).sum();
    let mut l = DMatrix::zeros(datum.n(), total);
    let mut col = 0;
    for f in datum.factors() {
        let k = f.target_dim();
        l.view_mut((0, col), (datum.n(), k))
            .copy_from(&(f.map().transpose() * f.c()));
        col += k;
    }
    l
}

/// Samples the sup-convolution on `out_grid`, searching decompositions with
/// `out_grid.points_per_axis` points per kernel axis.
pub fn sup_convolution(
    datum: &BLDatum<f64>,
    fs: &[GridFunction],
    out_grid: &GridSpec,
) -> Result<GridFunction> {
    out_grid.check()?;
    if out_grid.dim() != datum.n() {
        return Err(Error::Shape(format!(
            "output grid has dimension {}, datum {}",
            out_grid.dim(),
            datum.n()
        )));
    }
    let sc = SupConvolution::new(datum, fs, out_grid.points_per_axis)?;
    let d = out_grid.dim();
    let values = (0..out_grid.len())
        .into_par_iter()
        .map(|k| sc.value_at(&out_grid.node(k)[..d]))
        .collect();
    GridFunction::new(out_grid.clone(), values)
}

/// Box of all `Σ cᵢ Bᵢ* xᵢ` with `xᵢ` in the box of `fᵢ`.
pub fn output_box(datum: &BLDatum<f64>, fs: &[GridFunction]) -> Result<(Vec<f64>, Vec<f64>)> {
    let legs = legs(datum, fs)?;
    let n = datum.n();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for leg in &legs {
        for (r, row) in leg.rows.iter().enumerate() {
            let (a, b) = (leg.f.grid.lo[r], leg.f.grid.hi[r]);
            for j in 0..n {
                let (u, v) = (leg.c * row[j] * a, leg.c * row[j] * b);
                lo[j] += u.min(v);
                hi[j] += u.max(v);
            }
        }
    }
    Ok((lo, hi))
}

/// `Π (∫fᵢ)^{cᵢ} / (C_r ∫f)` with `f` the sup-convolution sampled on the
/// output box at `resolution` points per axis.
pub fn reverse_integral_check(
    datum: &BLDatum<f64>,
    fs: &[GridFunction],
    c_r: f64,
    resolution: usize,
) -> Result<QuadratureCheck> {
    if !(c_r > 0.0 && c_r.is_finite()) {
        return Err(Error::Domain(format!(
            "constant must be positive and finite, got {c_r}"
        )));
    }
    let legs = legs(datum, fs)?;
    let mut warnings = boundary_warnings(fs);
    let (lo, hi) = output_box(datum, fs)?;
    let lhs = sum_log_integrals(&legs).exp();
    if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
        return Ok(QuadratureCheck::from_sides(lhs, 0.0, warnings));
    }
    let f = sup_convolution(datum, fs, &GridSpec::new(lo, hi, resolution)?)?;
    if f.boundary_max() > BOUNDARY_WARN * f.max_value().max(f64::MIN_POSITIVE) {
        let msg = format!(
            "sup-convolution reaches {:.3e} on the output boundary",
            f.boundary_max()
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(QuadratureCheck::from_sides(
        lhs,
        c_r * integrate(&f),
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(lo: f64, hi: f64, n: usize) -> GridSpec {
        GridSpec::cube(1, lo, hi, n).unwrap()
    }

    fn gauss1(p: f64, grid: GridSpec) -> GridFunction {
        GridFunction::from_fn(grid, |y| (-0.5 * p * y[0] * y[0]).exp()).unwrap()
    }

    #[test]
    fn integrate_constant_ramp_and_gaussian() {
        for n in [2, 3, 17] {
            let one = GridFunction::from_fn(line(0.0, 1.0, n), |_| 1.0).unwrap();
            assert_relative_eq!(integrate(&one), 1.0, epsilon = 1e-12);
            let ramp = GridFunction::from_fn(line(0.0, 1.0, n), |y| y[0]).unwrap();
            assert_relative_eq!(integrate(&ramp), 0.5, epsilon = 1e-15);
        }
        let density = GridFunction::from_fn(line(-8.0, 8.0, 2001), |y| {
            (-0.5 * y[0] * y[0]).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .unwrap();
        assert_relative_eq!(integrate(&density), 1.0, epsilon = 1e-6);
        let sq = GridFunction::from_fn(GridSpec::cube(2, 0.0, 2.0, 5).unwrap(), |_| 1.0).unwrap();
        assert_relative_eq!(integrate(&sq), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_is_exact_for_cubics_and_zero_outside() {
        let f = GridFunction::from_fn(line(-1.0, 2.0, 31), |y| 5.0 + y[0].powi(3) - y[0]).unwrap();
        for x in [-1.0, -0.93, 0.0, 0.4567, 1.99, 2.0] {
            assert_relative_eq!(f.eval(&[x]), 5.0 + x * x * x - x, epsilon = 1e-12);
        }
        assert_eq!(f.eval(&[2.1]), 0.0);
        assert_eq!(f.eval(&[-1.5]), 0.0);
        let g = GridFunction::from_fn(GridSpec::cube(2, 0.0, 1.0, 11).unwrap(), |y| {
            1.0 + y[0] * y[1] * y[1]
        })
        .unwrap();
        assert_relative_eq!(
            g.eval(&[0.33, 0.71]),
            1.0 + 0.33 * 0.71 * 0.71,
            epsilon = 1e-12
        );
    }

    #[test]
    fn grid_function_validation_and_round_trip() {
        assert!(GridFunction::new(line(0.0, 1.0, 3), vec![1.0, -1.0, 0.0]).is_err());
        assert!(GridFunction::new(line(0.0, 1.0, 3), vec![1.0, f64::NAN, 0.0]).is_err());
        assert!(GridFunction::new(line(0.0, 1.0, 3), vec![1.0]).is_err());
        assert!(GridSpec::cube(1, 0.0, 1.0, 1).is_err());
        assert!(GridSpec::cube(3, 0.0, 1.0, 4).is_err());
        let f = GridFunction::new(line(0.0, 1.0, 3), vec![0.0, 1.0, 0.5]).unwrap();
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(GridFunction::parse(&text).unwrap(), f);
        assert!(
            GridFunction::parse(r#"{"lo":[0],"hi":[1],"points_per_axis":2,"values":[1,-2]}"#)
                .is_err()
        );
    }

    #[test]
    fn identity_datum_reproduces_both_sides() {
        let datum = BLDatum::from_rows(1, &[(1.0, &[&[1.0][..]][..])]).unwrap();
        let fs = vec![FunctionFamily::Bump {
            center: vec![0.3],
            radius: 2.0,
        }
        .sample(line(-3.0, 3.0, 301))
        .unwrap()];
        let r = direct_integral_check(&datum, &fs, 1.0, 301).unwrap();
        assert_relative_eq!(r.ratio, 1.0, epsilon = 1e-12);
        assert!(r.warnings.is_empty());
        let sup = sup_convolution(&datum, &fs, fs[0].grid()).unwrap();
        for (a, b) in sup.values().iter().zip(fs[0].values()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn prekopa_leindler_gaussian_reproduces_itself() {
        let datum = BLDatum::prekopa_leindler();
        let fs = vec![
            gauss1(1.0, line(-8.0, 8.0, 801)),
            gauss1(1.0, line(-8.0, 8.0, 801)),
        ];
        let out = line(-4.0, 4.0, 81);
        let f = sup_convolution(&datum, &fs, &out).unwrap();
        for k in 0..out.len() {
            let x = out.node(k)[0];
            assert_relative_eq!(f.values()[k], (-0.5 * x * x).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn gaussian_closure_matches_harmonic_combination() {
        let datum = BLDatum::prekopa_leindler();
        let (a1, a2) = (1.0, 3.0);
        let grid = line(-6.0, 6.0, 401);
        let fs = vec![gauss1(a1, grid.clone()), gauss1(a2, grid.clone())];
        let m = 1.0 / (0.5 / a1 + 0.5 / a2);
        let f = sup_convolution(&datum, &fs, &grid).unwrap();
        for k in 0..grid.len() {
            let x = grid.node(k)[0];
            assert!(
                (f.values()[k] - (-0.5 * m * x * x).exp()).abs() < 1e-3,
                "x={x}"
            );
        }
    }

    #[test]
    fn translated_gaussians_give_translation_invariant_ratio() {
        let datum = BLDatum::prekopa_leindler();
        let grid = line(-8.0, 8.0, 401);
        let ratio = |shift: f64, p2: f64| {
            let f1 = GridFunction::from_fn(grid.clone(), |y| (-0.5 * (y[0] - shift).powi(2)).exp())
                .unwrap();
            let f2 =
                GridFunction::from_fn(grid.clone(), |y| (-0.5 * p2 * (y[0] + shift).powi(2)).exp())
                    .unwrap();
            reverse_integral_check(&datum, &[f1, f2], 1.0, 401)
                .unwrap()
                .ratio
        };
        let unequal = ratio(0.0, 4.0);
        assert!(unequal < 1.0 - 1e-3);
        for shift in [2.0, 1.0, 0.5] {
            assert_relative_eq!(ratio(shift, 1.0), 1.0, epsilon = 1e-6);
            assert_relative_eq!(ratio(shift, 4.0), unequal, epsilon = 1e-6);
        }
    }

    #[test]
    fn all_zero_inputs_are_indeterminate() {
        let datum = BLDatum::prekopa_leindler();
        let z = GridFunction::new(line(-1.0, 1.0, 5), vec![0.0; 5]).unwrap();
        let r = reverse_integral_check(&datum, &[z.clone(), z], 1.0, 21).unwrap();
        assert!(r.indeterminate);
        assert_eq!(r.ratio, 0.0);
    }

    #[test]
    fn bumps_satisfy_prekopa_leindler() {
        let datum = BLDatum::prekopa_leindler();
        let grid = line(-3.0, 3.0, 301);
        let f1 = FunctionFamily::Bump {
            center: vec![0.5],
            radius: 1.0,
        }
        .sample(grid.clone())
        .unwrap();
        let f2 = FunctionFamily::Bump {
            center: vec![-1.0],
            radius: 1.5,
        }
        .sample(grid)
        .unwrap();
        let fs = [f1, f2];
        assert!(direct_integral_check(&datum, &fs, 1.0, 301).unwrap().ratio <= 1.0);
        assert!(reverse_integral_check(&datum, &fs, 1.0, 301).unwrap().ratio <= 1.0 + 1e-6);
    }

    #[test]
    fn boundary_mass_is_flagged() {
        let datum = BLDatum::from_rows(1, &[(1.0, &[&[1.0][..]][..])]).unwrap();
        let fs = vec![gauss1(1.0, line(-2.0, 2.0, 41))];
        let r = direct_integral_check(&datum, &fs, 1.0, 41).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn support_box_of_young_slabs() {
        let datum = BLDatum::from_rows(
            2,
            &[
                (0.75, &[&[1.0, 1.0][..]][..]),
                (0.75, &[&[0.0, 1.0][..]][..]),
                (0.5, &[&[1.0, 0.0][..]][..]),
            ],
        )
        .unwrap();
        let fs: Vec<GridFunction> = (0..3).map(|_| gauss1(1.0, line(-1.0, 1.0, 5))).collect();
        let legs = legs(&datum, &fs).unwrap();
        let (lo, hi) = support_box(2, &legs).unwrap();
        assert_eq!((lo, hi), (vec![-1.0, -1.0], vec![1.0, 1.0]));
        let (lo, hi) = output_box(&datum, &fs).unwrap();
        assert_relative_eq!(hi[0], 1.25);
        assert_relative_eq!(lo[1], -1.5);
    }
}
