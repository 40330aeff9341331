//! Monte Carlo for the variational formula
//!
//! ```text
//! log E e^{g(W_T)} = sup_U E[ g(W_T + U_T) − ½‖U‖²_H ]
//! ```
//!
//! where `W` is a Brownian motion with `Cov(W₁) = A` and
//! `‖U‖²_H = ∫₀ᵀ ⟨A⁻¹U̇ₛ, U̇ₛ⟩ ds`. Every deterministic drift gives a lower
//! bound on the left side; linear and quadratic `g` have closed forms.
//!
//! Paths are generated by Brownian-bridge refinement: the endpoint `W_T` is
//! the first draw of each path's own random stream, and interior points are
//! filled in level order. The law is that of exact Brownian increments, and
//! `W_T` does not depend on the number of steps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::sampling::{normal, stream_rng, BLOCK};

/// Default cap on `paths · steps · n` scalar draws.
pub const DRAW_BUDGET: u64 = 100_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct BrownianConfig {
    /// Covariance of `W₁`.
    pub covariance: SpdMatrix<f64>,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub budget: u64,
}

impl BrownianConfig {
    pub fn new(
        covariance: SpdMatrix<f64>,
        horizon: f64,
        steps: usize,
        paths: usize,
        seed: u64,
    ) -> Result<Self> {
        let config = Self {
            covariance,
            horizon,
            steps,
            paths,
            seed,
            budget: DRAW_BUDGET,
        };
        config.check()?;
        Ok(config)
    }

    pub fn dim(&self) -> usize {
        self.covariance.dim()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    fn check(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Domain(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.steps == 0 || self.paths == 0 {
            return Err(Error::Domain("steps and paths must be at least 1".into()));
        }
        let draws = (self.paths as u64)
            .saturating_mul(self.steps as u64)
            .saturating_mul(self.dim() as u64);
        if draws > self.budget {
            return Err(Error::Domain(format!(
                "{draws} scalar draws exceed the budget of {}",
                self.budget
            )));
        }
        Ok(())
    }
}

/// Piecewise-constant drift derivative `U̇`, evaluated at step midpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftPolicy {
    Zero,
    Constant {
        rate: Vec<f64>,
    },
    /// `U̇ₛ = base + s · slope`.
    LinearInTime {
        base: Vec<f64>,
        slope: Vec<f64>,
    },
}

impl DriftPolicy {
    fn rate_at(&self, s: f64, n: usize) -> DVector<f64> {
        match self {
            Self::Zero => DVector::zeros(n),
            Self::Constant { rate } => DVector::from_column_slice(rate),
            Self::LinearInTime { base, slope } => {
                DVector::from_column_slice(base) + DVector::from_column_slice(slope) * s
            }
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        let ok = match self {
            Self::Zero => true,
            Self::Constant { rate } => rate.len() == n,
            Self::LinearInTime { base, slope } => base.len() == n && slope.len() == n,
        };
        if !ok {
            return Err(Error::Shape(format!("drift policy does not live in R^{n}")));
        }
        Ok(())
    }

    /// `(U_T, ‖U‖²_H)` on the step grid of `config`.
    pub fn endpoint_and_energy(&self, config: &BrownianConfig) -> Result<(DVector<f64>, f64)> {
        let n = config.dim();
        self.check(n)?;
        let dt = config.dt();
        let mut end = DVector::zeros(n);
        let mut energy = 0.0;
        for k in 0..config.steps {
            let r = self.rate_at((k as f64 + 0.5) * dt, n);
            energy += config.covariance.solve_vec(&r).dot(&r) * dt;
            end += r * dt;
        }
        Ok((end, energy))
    }
}

/// Built-in test functions `g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    /// `⟨b, x⟩`.
    Linear { b: Vec<f64> },
    /// `−⟨Qx, x⟩/2`, `Q` symmetric positive semidefinite.
    NegQuadratic { q: Vec<Vec<f64>> },
    /// `min(⟨b, x⟩, cap)`.
    ClippedLinear { b: Vec<f64>, cap: f64 },
}

impl Payoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let dot = |b: &[f64]| b.iter().zip(x).map(|(u, v)| u * v).sum::<f64>();
        match self {
            Self::Linear { b } => dot(b),
            Self::NegQuadratic { q } => {
                -0.5 * q.iter().zip(x).map(|(row, xi)| xi * dot(row)).sum::<f64>()
            }
            Self::ClippedLinear { b, cap } => dot(b).min(*cap),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Linear { b } | Self::ClippedLinear { b, .. } => b.len(),
            Self::NegQuadratic { q } => q.len(),
        }
    }

    /// `log E e^{g(W_T)}` when a closed form exists.
    pub fn closed_form(&self, config: &BrownianConfig) -> Result<Option<f64>> {
        match self {
            Self::Linear { b } => Ok(Some(closed_form_linear(
                &config.covariance,
                &DVector::from_column_slice(b),
                config.horizon,
            )?)),
            Self::NegQuadratic { q } => {
                let n = q.len();
                let flat: Vec<f64> = q.iter().flatten().copied().collect();
                if flat.len() != n * n {
                    return Err(Error::Shape("Q must be square".into()));
                }
                let q = DMatrix::from_row_slice(n, n, &flat);
                Ok(Some(closed_form_quadratic(
                    &config.covariance,
                    &q,
                    config.horizon,
                )?))
            }
            Self::ClippedLinear { .. } => Ok(None),
        }
    }

    /// The drift rate `A b` that is optimal for linear `g`, if any.
    pub fn optimal_rate(&self, covariance: &SpdMatrix<f64>) -> Option<Vec<f64>> {
        match self {
            Self::Linear { b } => Some(
                (covariance.as_matrix() * DVector::from_column_slice(b))
                    .iter()
                    .copied()
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Sampled paths, stored as `paths × (steps + 1) × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    pub paths: usize,
    pub steps: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl PathBatch {
    /// `W` at step `k` of path `p`.
    pub fn point(&self, p: usize, k: usize) -> &[f64] {
        let start = (p * (self.steps + 1) + k) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn terminal(&self, p: usize) -> &[f64] {
        self.point(p, self.steps)
    }
}

/// `√τ · L z` for a fresh standard normal `z`, `A = L Lᵀ`.
fn gaussian_draw(rng: &mut impl rand::Rng, chol: &DMatrix<f64>, tau: f64) -> DVector<f64> {
    let z = DVector::from_fn(chol.nrows(), |_, _| normal::<f64, _>(rng));
    chol * z * tau.sqrt()
}

fn terminal_value(config: &BrownianConfig, chol: &DMatrix<f64>, path: usize) -> DVector<f64> {
    let mut rng = stream_rng(config.seed, path as u64);
    gaussian_draw(&mut rng, chol, config.horizon)
}

fn one_path(config: &BrownianConfig, chol: &DMatrix<f64>, path: usize) -> Vec<DVector<f64>> {
    let n = config.dim();
    let steps = config.steps;
    let dt = config.dt();
    let mut rng = stream_rng(config.seed, path as u64);
    let mut w = vec![DVector::zeros(n); steps + 1];
    w[steps] = gaussian_draw(&mut rng, chol, config.horizon);
    let mut queue = std::collections::VecDeque::from([(0usize, steps)]);
    while let Some((i, j)) = queue.pop_front() {
        if j - i < 2 {
            continue;
        }
        let k = (i + j) / 2;
        let (a, b) = ((k - i) as f64, (j - k) as f64);
        let mean = &w[i] + (&w[j] - &w[i]) * (a / (a + b));
        w[k] = mean + gaussian_draw(&mut rng, chol, a * b / (a + b) * dt);
        queue.push_back((i, k));
        queue.push_back((k, j));
    }
    w
}

/// Simulates `config.paths` paths on the uniform step grid, `W₀ = 0`.
pub fn simulate(config: &BrownianConfig) -> Result<PathBatch> {
    config.check()?;
    let chol = config.covariance.cholesky_factor();
    let per_path: Vec<Vec<DVector<f64>>> = (0..config.paths)
        .into_par_iter()
        .map(|p| one_path(config, &chol, p))
        .collect();
    let data = per_path
        .iter()
        .flatten()
        .flat_map(|v| v.iter().copied())
        .collect();
    Ok(PathBatch {
        paths: config.paths,
        steps: config.steps,
        dim: config.dim(),
        data,
    })
}

/// Estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `(self − other) / √(σ₁² + σ₂²)`.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let s = self.stderr.hypot(other.stderr);
        if s > 0.0 {
            (self.estimate - other.estimate) / s
        } else if self.estimate == other.estimate {
            0.0
        } else {
            f64::INFINITY.copysign(self.estimate - other.estimate)
        }
    }

    /// `(self − value) / σ`.
    pub fn z_against(&self, value: f64) -> f64 {
        self.z_score(&Estimate {
            estimate: value,
            stderr: 0.0,
        })
    }
}

/// Stabilized partial sums `Σ e^{gₖ − m}`, `Σ e^{2(gₖ − m)}` with `m = max gₖ`.
#[derive(Clone, Copy)]
struct ExpSums {
    max: f64,
    s1: f64,
    s2: f64,
}

impl ExpSums {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        s1: 0.0,
        s2: 0.0,
    };

    fn push(self, g: f64) -> Self {
        self.merge(Self {
            max: g,
            s1: 1.0,
            s2: 1.0,
        })
    }

    fn merge(self, other: Self) -> Self {
        if other.max == f64::NEG_INFINITY {
            return self;
        }
        if self.max == f64::NEG_INFINITY {
            return other;
        }
        let m = self.max.max(other.max);
        let (a, b) = ((self.max - m).exp(), (other.max - m).exp());
        Self {
            max: m,
            s1: self.s1 * a + other.s1 * b,
            s2: self.s2 * a * a + other.s2 * b * b,
        }
    }
}

fn payoff_values(
    config: &BrownianConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    shift: &DVector<f64>,
) -> Vec<Vec<f64>> {
    let chol = config.covariance.cholesky_factor();
    let blocks = config.paths.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            (b * BLOCK..((b + 1) * BLOCK).min(config.paths))
                .map(|p| {
                    let w = terminal_value(config, &chol, p) + shift;
                    g(w.as_slice())
                })
                .collect()
        })
        .collect()
}

/// `log` of the sample mean of `e^{g(W_T)}`, with delta-method standard error.
pub fn mc_log_mgf(config: &BrownianConfig, g: &(dyn Fn(&[f64]) -> f64 + Sync)) -> Result<Estimate> {
    config.check()?;
    let values = payoff_values(config, g, &DVector::zeros(config.dim()));
    let mut total = ExpSums::EMPTY;
    for block in &values {
        let mut sums = ExpSums::EMPTY;
        for &v in block {
            if !v.is_finite() {
                return Err(Error::Overflow(format!("g(W_T) = {v} is not finite")));
            }
            sums = sums.push(v);
        }
        total = total.merge(sums);
    }
    let n = config.paths as f64;
    let mean = total.s1 / n;
    let var = (total.s2 / n - mean * mean).max(0.0);
    let estimate = total.max + mean.ln();
    if !estimate.is_finite() {
        return Err(Error::Overflow("log-mean-exp is not finite".into()));
    }
    let stderr = if config.paths > 1 {
        (var / (n - 1.0)).sqrt() / mean
    } else {
        0.0
    };
    Ok(Estimate { estimate, stderr })
}

/// Sample mean of `g(W_T + U_T) − ½‖U‖²_H` for the deterministic drift `policy`.
pub fn drift_value(
    config: &BrownianConfig,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    policy: &DriftPolicy,
) -> Result<Estimate> {
    config.check()?;
    let (end, energy) = policy.endpoint_and_energy(config)?;
    let values = payoff_values(config, g, &end);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &v in values.iter().flatten() {
        if !v.is_finite() {
            return Err(Error::Overflow(format!("g(W_T + U_T) = {v} is not finite")));
        }
        sum += v;
        sum_sq += v * v;
    }
    let n = config.paths as f64;
    let mean = sum / n;
    let var = if config.paths > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(Estimate {
        estimate: mean - 0.5 * energy,
        stderr: (var / n).sqrt(),
    })
}

/// `T⟨Ab, b⟩/2`.
pub fn closed_form_linear(a: &SpdMatrix<f64>, b: &DVector<f64>, horizon: f64) -> Result<f64> {
    if b.len() != a.dim() {
        return Err(Error::Shape(format!(
            "b has length {}, A is {1}x{1}",
            b.len(),
            a.dim()
        )));
    }
    Ok(0.5 * horizon * (a.as_matrix() * b).dot(b))
}

/// `−½ log det(I + T A Q)` for symmetric positive semidefinite `Q`.
pub fn closed_form_quadratic(a: &SpdMatrix<f64>, q: &DMatrix<f64>, horizon: f64) -> Result<f64> {
    let n = a.dim();
    if q.shape() != (n, n) {
        return Err(Error::Shape(format!(
            "Q is {}x{}, A is {n}x{n}",
            q.nrows(),
            q.ncols()
        )));
    }
    let l = a.cholesky_factor();
    let m = DMatrix::identity(n, n) + l.transpose() * q * &l * horizon;
    let m = SpdMatrix::new(m)
        .map_err(|_| Error::Domain("Q must be symmetric positive semidefinite".into()))?;
    Ok(-0.5 * m.log_det())
}
