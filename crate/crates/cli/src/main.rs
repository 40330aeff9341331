//! `blc`: Brascamp-Lieb constants and their numerical oracles from the
//! command line.
//!
//! Exit codes: 0 success, 1 a check was violated, 2 bad input.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bl_core::functional_verify::{
    direct_integral_check, reverse_integral_check, FunctionFamily, GridFunction, GridSpec,
};
use bl_core::gaussian_solver::{
    direct_extremizers, reverse_extremizers, write_trace_csv, SolveDocument, Strategy,
};
use bl_core::gaussian_verify::{
    direct_gaussian_suite, dual_suite, gaussian_constant_search, reverse_gaussian_suite,
};
use bl_core::quadform::check_inf;
use bl_core::sampling::{normal_vector, random_spd, stream_rng};
use bl_core::stochastic::{
    closed_form_linear, drift_value, mc_log_mgf, BrownianConfig, DriftPolicy, Payoff,
};
use bl_core::structure::{coordinate_subsets, image_dims, is_critical, multiplicativity_check};
use bl_core::young::{
    beckner_constant, closed_form_a, closed_form_coefficients, constant_from_cs,
    datum_from_exponents, discarded_solution,
};
use bl_core::{
    solve, validate, Datum, DatumDocument, SolveOptions, Spd, Subspace, Tuple, YoungExponents,
    VERSION,
};
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde_json::{json, Value};

use report::{csv, datum_digest, num, write_json, write_text, Report};

const DEFAULT_SEED: u64 = 20_190_901;
/// Largest ambient dimension for which `split` enumerates coordinate subspaces.
const SPLIT_ENUMERATION_MAX: usize = 6;
/// Tolerance on `1/p + 1/q − 1 − 1/r` for a user-supplied `--r`.
const CLI_LINK_TOL: f64 = 1e-8;
/// Largest acceptable multiplicativity gap.
const SPLIT_GAP_TOL: f64 = 1e-8;
/// Box half-width for the default extremizer functions in `check-quadrature`.
const QUADRATURE_HALF_WIDTH: f64 = 8.0;

#[derive(Debug)]
pub enum Failure {
    Input(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "blc",
    version,
    about = "Brascamp-Lieb constants via the Gaussian fixed point"
)]
struct Cli {
    /// Worker threads (reports do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DatumArg {
    /// Datum document (JSON).
    #[arg(long)]
    datum: PathBuf,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Relative residual tolerance.
    #[arg(long, default_value_t = bl_core::gaussian_solver::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = bl_core::gaussian_solver::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = bl_core::gaussian_solver::DEFAULT_DAMPING)]
    damping: f64,
    /// Skip the fixed-point phase and run log-det ascent only.
    #[arg(long)]
    ascent: bool,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions<f64> {
        SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            damping: self.damping,
            strategy: if self.ascent {
                Strategy::Ascent
            } else {
                Strategy::Auto
            },
        }
    }

    fn to_json(&self) -> Value {
        json!({ "tol": self.tol, "max_iter": self.max_iter, "damping": self.damping, "ascent": self.ascent })
    }
}

#[derive(Args, Clone)]
struct OutArg {
    /// Write a JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a datum and print its diagnostics.
    Validate {
        #[command(flatten)]
        datum: DatumArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Solve the fixed-point equation and print A and C.
    Solve {
        #[command(flatten)]
        datum: DatumArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the iteration trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Print the constant, cross-checked by an independent random-restart search.
    Constant {
        #[command(flatten)]
        datum: DatumArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Accepted ascent steps per restart of the independent search.
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Determinant inequalities on random Gaussian inputs.
    CheckGaussian {
        #[command(flatten)]
        datum: DatumArg,
        #[command(flatten)]
        solver: SolverArgs,
        /// Constant to test; defaults to the solved one.
        #[arg(long)]
        constant: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Grid quadrature of the direct and reversed integral inequalities (n ≤ 2).
    CheckQuadrature {
        #[command(flatten)]
        datum: DatumArg,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        constant: Option<f64>,
        /// JSON array of input functions (grid functions or named families
        /// with a `grid`); defaults to the extremal Gaussians.
        #[arg(long)]
        functions: Option<PathBuf>,
        /// Quadrature points per axis.
        #[arg(long, default_value_t = 401)]
        resolution: usize,
        /// Ratios above `1 + slack` count as violations.
        #[arg(long, default_value_t = 1e-3)]
        slack: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Minimizer of the infimal convolution of random quadratic forms against
    /// kernel perturbations.
    CheckInf {
        #[command(flatten)]
        datum: DatumArg,
        /// Perturbations per instance.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 10)]
        instances: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Monte Carlo of the drifted-Brownian variational formula.
    Bd {
        /// Covariance of W₁ as a JSON array of rows; identity of size --dim otherwise.
        #[arg(long)]
        covariance: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 128)]
        steps: usize,
        /// Number of paths.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Write (estimate, stderr, closed_form, z-score) rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Young's convolution inequality: closed forms against the solver.
    Young {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        /// Optional; must agree with 1/r = 1/p + 1/q − 1.
        #[arg(long)]
        r: Option<f64>,
        /// Also print the non-positive-definite solution of the 2×2 system.
        #[arg(long)]
        show_discarded: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Critical subspaces and multiplicativity of the constant.
    Split {
        #[command(flatten)]
        datum: DatumArg,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[command(flatten)]
        out: OutArg,
    },
}

struct Loaded {
    doc: DatumDocument,
    datum: Datum,
    digest: String,
}

fn load(arg: &DatumArg) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(&arg.datum)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", arg.datum.display())))?;
    let doc = DatumDocument::parse(&text)?;
    let datum = doc.to_datum()?;
    let digest = datum_digest(&doc);
    Ok(Loaded { doc, datum, digest })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

fn print_matrix(name: &str, m: &DMatrix<f64>) {
    println!("{name} =");
    for r in 0..m.nrows() {
        let cells: Vec<String> = m.row(r).iter().map(|v| format!("{v:>14.10}")).collect();
        println!("  [{}]", cells.join(" "));
    }
}

struct Outcome {
    passed: bool,
    seed: Option<u64>,
    digest: Option<String>,
    options: Value,
    result: Value,
}

fn solved(datum: &Datum, solver: &SolverArgs) -> Result<(Spd, f64), Failure> {
    let r = solve(datum, &solver.options())?;
    match (r.converged, r.constant.value()) {
        (true, Some(c)) => Ok((r.a, c)),
        (_, None) => Err(Failure::Input(
            "the constant is infinite; nothing to check".into(),
        )),
        (false, _) => Err(Failure::Input(format!(
            "solver did not converge (residual {:e})",
            r.residual
        ))),
    }
}

fn cmd_validate(datum: &DatumArg) -> Result<Outcome, Failure> {
    let l = load(datum)?;
    let d = validate(&l.datum, bl_core::datum::DEFAULT_TOL)?;
    println!("n = {}, factors = {}", l.datum.n(), l.datum.len());
    println!("homogeneity defect = {:e}", d.homogeneity_defect);
    println!("degenerate = {}", d.degenerate);
    println!("frame = {}", d.frame);
    println!("zero maps = {:?}", d.zero_map_indices);
    if !d.is_homogeneous() {
        println!("note: the datum is not homogeneous, so its constant is infinite");
    }
    Ok(Outcome {
        passed: true,
        seed: None,
        digest: Some(l.digest),
        options: json!({}),
        result: json!({
            "n": l.datum.n(),
            "factors": l.datum.len(),
            "homogeneity_defect": d.homogeneity_defect,
            "homogeneous": d.is_homogeneous(),
            "degenerate": d.degenerate,
            "frame": d.frame,
            "zero_map_indices": d.zero_map_indices,
            "stacked_rank": d.stacked_rank,
        }),
    })
}

fn cmd_solve(
    datum: &DatumArg,
    solver: &SolverArgs,
    trace: Option<&Path>,
) -> Result<Outcome, Failure> {
    let l = load(datum)?;
    let r = solve(&l.datum, &solver.options())?;
    print_matrix("A", r.a.as_matrix());
    println!("residual = {:e}", r.residual);
    println!("iterations = {}", r.iterations);
    println!("converged = {}", r.converged);
    match r.constant.value() {
        Some(c) => println!("C = {c:.12}"),
        None => println!("C = inf"),
    }
    if let Some(path) = trace {
        let mut buf = Vec::new();
        write_trace_csv(&r.trace, &mut buf)?;
        write_text(path, &String::from_utf8(buf).expect("CSV is ASCII"))?;
    }
    let passed = r.converged || !r.constant.is_finite();
    Ok(Outcome {
        passed,
        seed: None,
        digest: Some(l.digest),
        options: solver.to_json(),
        result: serde_json::to_value(SolveDocument::from(&r))?,
    })
}

fn cmd_constant(
    datum: &DatumArg,
    solver: &SolverArgs,
    samples: usize,
    seed: u64,
) -> Result<Outcome, Failure> {
    let l = load(datum)?;
    let r = solve(&l.datum, &solver.options())?;
    let Some(c) = r.constant.value() else {
        println!("C = inf");
        return Ok(Outcome {
            passed: true,
            seed: Some(seed),
            digest: Some(l.digest),
            options: json!({ "solver": solver.to_json(), "samples": samples }),
            result: json!({ "constant": null, "constant_infinite": true }),
        });
    };
    let searched = gaussian_constant_search(&l.datum, samples, seed)?;
    println!("C = {c:.12}");
    println!("independent search lower bound = {searched:.12}");
    let passed = r.converged && searched <= c * (1.0 + 1e-9);
    if searched > c * (1.0 + 1e-9) {
        println!("violation: the search exceeded the solved constant");
    }
    Ok(Outcome {
        passed,
        seed: Some(seed),
        digest: Some(l.digest),
        options: json!({ "solver": solver.to_json(), "samples": samples }),
        result: json!({ "constant": c, "converged": r.converged, "search_lower_bound": searched }),
    })
}

fn cmd_check_gaussian(
    datum: &DatumArg,
    solver: &SolverArgs,
    constant: Option<f64>,
    samples: usize,
    seed: u64,
) -> Result<Outcome, Failure> {
    let l = load(datum)?;
    let (c, extremal) = match constant {
        Some(c) => (c, None),
        None => {
            let (a, c) = solved(&l.datum, solver)?;
            (c, Some(a))
        }
    };
    let direct_ext = extremal
        .as_ref()
        .map(|a| direct_extremizers(&l.datum, a))
        .transpose()?;
    let reverse_ext = extremal
        .as_ref()
        .map(|a| reverse_extremizers(&l.datum, a))
        .transpose()?;
    let direct = direct_gaussian_suite(&l.datum, c, samples, seed, direct_ext.as_ref())?;
    let reverse = reverse_gaussian_suite(
        &l.datum,
        c,
        samples,
        seed.wrapping_add(1),
        reverse_ext.as_ref().map(|t| &t.0),
    )?;
    let dual = dual_suite(
        &l.datum,
        c,
        samples,
        seed.wrapping_add(2),
        extremal.as_ref(),
    )?;
    println!("C = {c:.12}");
    for (name, rep) in [("direct", &direct), ("reverse", &reverse), ("dual", &dual)] {
        println!("{name:>8}: {}", rep.summary());
    }
    let passed = direct.passed() && reverse.passed() && dual.passed();
    Ok(Outcome {
        passed,
        seed: Some(seed),
        digest: Some(l.digest),
        options: json!({ "solver": solver.to_json(), "constant": constant, "samples": samples }),
        result: json!({ "constant": c, "direct": direct, "reverse": reverse, "dual": dual }),
    })
}

/// One input function: sampled values, or a named family plus its grid.
#[derive(Deserialize)]
#[serde(untagged)]
enum FunctionInput {
    Sampled(GridFunction),
    Family {
        #[serde(flatten)]
        family: FunctionFamily,
        grid: GridSpec,
    },
}

fn read_functions(path: &Path) -> Result<Vec<GridFunction>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let inputs: Vec<FunctionInput> = serde_json::from_str(&text)?;
    inputs
        .into_iter()
        .map(|f| match f {
            FunctionInput::Sampled(g) => Ok(g),
            FunctionInput::Family { family, grid } => Ok(family.sample(grid)?),
        })
        .collect()
}

fn gaussian_inputs(tuple: &Tuple, points: usize) -> Result<Vec<GridFunction>, Failure> {
    tuple
        .mats()
        .iter()
        .map(|p| {
            let grid = GridSpec::cube(
                p.dim(),
                -QUADRATURE_HALF_WIDTH,
                QUADRATURE_HALF_WIDTH,
                points,
            )?;
            Ok(FunctionFamily::gaussian(p.as_matrix()).sample(grid)?)
        })
        .collect()
}

fn cmd_check_quadrature(
    datum: &DatumArg,
    solver: &SolverArgs,
    constant: Option<f64>,
    functions: Option<&Path>,
    resolution: usize,
    slack: f64,
) -> Result<Outcome, Failure> {
    let l = load(datum)?;
    let (direct_fs, reverse_fs, c) = match functions {
        Some(path) => {
            let fs = read_functions(path)?;
            let c = match constant {
                Some(c) => c,
                None => solved(&l.datum, solver)?.1,
            };
            (fs.clone(), fs, c)
        }
        None => {
            let (a, c_solved) = solved(&l.datum, solver)?;
            let direct = gaussian_inputs(&direct_extremizers(&l.datum, &a)?, 2 * resolution - 1)?;
            let scaled = a.scaled(1.0 / a.min_eigenvalue());
            let reverse = gaussian_inputs(
                &reverse_extremizers(&l.datum, &scaled)?.0,
                2 * resolution - 1,
            )?;
            (direct, reverse, constant.unwrap_or(c_solved))
        }
    };
    let direct = direct_integral_check(&l.datum, &direct_fs, c, resolution)?;
    let reverse = reverse_integral_check(&l.datum, &reverse_fs, c, resolution)?;
    println!("C = {c:.12}");
    println!(
        " direct: ratio = {:.10} (lhs {:e}, rhs {:e})",
        direct.ratio, direct.lhs, direct.rhs
    );
    println!(
        "reverse: ratio = {:.10} (lhs {:e}, rhs {:e})",
        reverse.ratio, reverse.lhs, reverse.rhs
    );
    for w in direct.warnings.iter().chain(&reverse.warnings) {
        println!("warning: {w}");
    }
    let passed = direct.ratio <= 1.0 + slack && reverse.ratio <= 1.0 + slack;
    Ok(Outcome {
        passed,
        seed: None,
        digest: Some(l.digest),
        options: json!({
            "solver": solver.to_json(),
            "constant": constant,
            "resolution": resolution,
            "slack": slack,
            "functions": functions.map(|p| p.display().to_string()),
        }),
        result: json!({ "constant": c, "direct": direct, "reverse": reverse }),
    })
}

fn cmd_check_inf(
    datum: &DatumArg,
    samples: usize,
    instances: u64,
    seed: u64,
) -> Result<Outcome, Failure> {
    let l = load(datum)?;
    let mut reports = Vec::new();
    for k in 0..instances {
        let mut rng = stream_rng(seed, k);
        let tuple = Tuple::new(
            l.datum
                .active()
                .map(|(_, f)| random_spd(&mut rng, f.target_dim(), true))
                .collect(),
        );
        let x: DVector<f64> = normal_vector(&mut rng, l.datum.n());
        reports.push(check_inf(
            &l.datum,
            &tuple,
            &x,
            samples,
            seed.wrapping_add(k),
        )?);
    }
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    let gap = reports
        .iter()
        .filter_map(|r| r.equality_gap)
        .fold(0.0, f64::max);
    println!("instances = {instances}, samples each = {samples}, violations = {violations}, max minimizer gap = {gap:.3e}");
    Ok(Outcome {
        passed: violations == 0,
        seed: Some(seed),
        digest: Some(l.digest),
        options: json!({ "samples": samples, "instances": instances }),
        result: json!({ "violations": violations, "max_equality_gap": gap, "instances": reports }),
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_bd(
    covariance: Option<&Path>,
    dim: usize,
    horizon: f64,
    steps: usize,
    paths: usize,
    seed: u64,
    csv_path: Option<&Path>,
) -> Result<Outcome, Failure> {
    let a = match covariance {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&text)?;
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(Failure::Input("covariance must be square".into()));
            }
            Spd::from_row_slice(n, &rows.concat())?
        }
        None if dim > 0 => Spd::identity(dim),
        None => return Err(Failure::Input("--dim must be positive".into())),
    };
    let n = a.dim();
    let cfg = BrownianConfig::new(a.clone(), horizon, steps, paths, seed)?;
    let b: Vec<f64> = (0..n)
        .map(|i| if i == 0 { 1.0 } else { -0.5 / i as f64 })
        .collect();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 1.0 / (i + 1) as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let payoffs = [
        ("linear", Payoff::Linear { b: b.clone() }),
        ("neg_quadratic", Payoff::NegQuadratic { q }),
        (
            "clipped_linear",
            Payoff::ClippedLinear {
                b: b.clone(),
                cap: 0.5,
            },
        ),
    ];
    let ab: Vec<f64> = (a.as_matrix() * DVector::from_vec(b.clone()))
        .iter()
        .copied()
        .collect();
    let twice: Vec<f64> = ab.iter().map(|v| 2.0 * v).collect();
    let policies = [
        ("zero", DriftPolicy::Zero),
        ("constant_ab", DriftPolicy::Constant { rate: ab.clone() }),
        (
            "constant_2ab",
            DriftPolicy::Constant {
                rate: twice.clone(),
            },
        ),
        (
            "linear_in_time",
            DriftPolicy::LinearInTime {
                base: vec![0.0; n],
                slope: twice,
            },
        ),
    ];

    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut passed = true;
    for (gname, g) in &payoffs {
        let f = |x: &[f64]| g.eval(x);
        let mgf = mc_log_mgf(&cfg, &f)?;
        let exact = g.closed_form(&cfg)?;
        let z = exact.map(|e| mgf.z_against(e));
        if z.is_some_and(|z| z.abs() > 3.0) {
            passed = false;
        }
        rows.push(vec![
            gname.to_string(),
            "mgf".into(),
            num(mgf.estimate),
            num(mgf.stderr),
            exact.map_or(String::new(), num),
            z.map_or(String::new(), num),
        ]);
        records.push(json!({ "payoff": gname, "policy": "mgf", "estimate": mgf.estimate, "stderr": mgf.stderr, "closed_form": exact, "z": z }));
        for (pname, policy) in &policies {
            let v = drift_value(&cfg, &f, policy)?;
            // against the left side: a lower bound must not exceed it by 3σ
            let z = v.z_score(&mgf);
            if z > 3.0 {
                passed = false;
            }
            rows.push(vec![
                gname.to_string(),
                pname.to_string(),
                num(v.estimate),
                num(v.stderr),
                num(mgf.estimate),
                num(z),
            ]);
            records.push(json!({ "payoff": gname, "policy": pname, "estimate": v.estimate, "stderr": v.stderr, "closed_form": mgf.estimate, "z": z }));
        }
    }
    let exact = closed_form_linear(&a, &DVector::from_vec(b.clone()), horizon)?;
    let f = |x: &[f64]| payoffs[0].1.eval(x);
    let optimal = drift_value(&cfg, &f, &DriftPolicy::Constant { rate: ab })?;
    let z_opt = optimal.z_against(exact);
    if z_opt.abs() > 3.0 {
        passed = false;
    }
    rows.push(vec![
        "linear".into(),
        "optimal_vs_closed_form".into(),
        num(optimal.estimate),
        num(optimal.stderr),
        num(exact),
        num(z_opt),
    ]);

    let table = csv(
        &[
            "payoff",
            "policy",
            "estimate",
            "stderr",
            "closed_form",
            "z_score",
        ],
        &rows,
    );
    print!("{table}");
    if let Some(path) = csv_path {
        write_text(path, &table)?;
    }
    Ok(Outcome {
        passed,
        seed: Some(seed),
        digest: None,
        options: json!({ "covariance": rows_of(&a), "horizon": horizon, "steps": steps, "paths": paths }),
        result: json!({ "rows": records, "optimal_linear": { "estimate": optimal.estimate, "stderr": optimal.stderr, "closed_form": exact, "z": z_opt } }),
    })
}

fn rows_of(a: &Spd) -> Vec<Vec<f64>> {
    rows(a.as_matrix())
}

fn cmd_young(
    p: f64,
    q: f64,
    r: Option<f64>,
    show_discarded: bool,
    solver: &SolverArgs,
) -> Result<Outcome, Failure> {
    if let Some(r) = r {
        let defect = 1.0 / p + 1.0 / q - 1.0 - 1.0 / r;
        if !(defect.abs() <= CLI_LINK_TOL) {
            return Err(Failure::Input(format!(
                "1/p + 1/q − 1 − 1/r = {defect:e}; exponents are not linked"
            )));
        }
    }
    let e = YoungExponents::from_pq(p, q)?;
    let datum = datum_from_exponents(&e);
    let [c1, c2, c3] = e.exponents();
    let closed = closed_form_a(&e);
    let [x, y, z] = closed_form_coefficients(&e);
    let res = solve(&datum, &solver.options())?;
    let c_solver = res.constant.value();
    let c_beckner = beckner_constant(&e)?;
    let c_cs = constant_from_cs(c1, c2, c3)?;
    let a_gap = (res.a.det_normalized().as_matrix() - closed.as_matrix()).amax();

    println!("p = {p}, q = {q}, r = {}", e.r());
    println!("c = ({c1:.10}, {c2:.10}, {c3:.10})");
    println!("closed-form coefficients (x, y, z) = ({x:.10}, {y:.10}, {z:.10})");
    print_matrix("A (closed form, det 1)", closed.as_matrix());
    print_matrix("A (solver, det 1)", res.a.det_normalized().as_matrix());
    println!("max |A_solver − A_closed| = {a_gap:.3e}");
    match c_solver {
        Some(c) => println!("C (solver)  = {c:.12}"),
        None => println!("C (solver)  = inf"),
    }
    println!("C (Beckner) = {c_beckner:.12}");
    println!("C (from c)  = {c_cs:.12}");
    if show_discarded {
        print_matrix(
            "discarded solution (singular, not a covariance)",
            &discarded_solution(),
        );
    }
    let spread = c_solver.map_or(f64::INFINITY, |c| {
        (c - c_cs).abs().max((c_beckner - c_cs).abs())
    });
    let passed = res.converged && a_gap <= 1e-8 && spread <= 1e-10;
    Ok(Outcome {
        passed,
        seed: None,
        digest: None,
        options: json!({ "p": p, "q": q, "r": r, "solver": solver.to_json() }),
        result: json!({
            "r": e.r(),
            "c": [c1, c2, c3],
            "closed_form_a": rows_of(&closed),
            "solver_a": rows_of(&res.a.det_normalized()),
            "a_gap": a_gap,
            "constant_solver": c_solver,
            "constant_beckner": c_beckner,
            "constant_from_c": c_cs,
        }),
    })
}

fn cmd_split(datum: &DatumArg, tol: f64) -> Result<Outcome, Failure> {
    let l = load(datum)?;
    let n = l.datum.n();
    let candidates: Vec<(String, Subspace)> = match &l.doc.subspace {
        Some(vectors) => vec![("document".into(), Subspace::spanned_by(n, vectors)?)],
        None if n <= SPLIT_ENUMERATION_MAX => coordinate_subsets(n)
            .into_iter()
            .map(|axes| Ok((format!("{axes:?}"), Subspace::coordinate(n, &axes)?)))
            .collect::<Result<_, Failure>>()?,
        None => {
            return Err(Failure::Input(format!(
                "n = {n} > {SPLIT_ENUMERATION_MAX}: supply a `subspace` in the datum document"
            )))
        }
    };
    let mut passed = true;
    let mut results = Vec::new();
    for (name, e) in &candidates {
        let critical = is_critical(&l.datum, e, tol)?;
        let dims = image_dims(&l.datum, e);
        if !critical {
            println!("{name}: dim {} image dims {dims:?} not critical", e.dim());
            results.push(
                json!({ "subspace": name, "dim": e.dim(), "image_dims": dims, "critical": false }),
            );
            continue;
        }
        let m = multiplicativity_check(&l.datum, e, tol)?;
        let ok = m.gap <= SPLIT_GAP_TOL;
        passed &= ok;
        println!(
            "{name}: critical; C = {:.12}, C_E = {:.12}, C_perp = {:.12}, gap = {:.3e}{}",
            m.constant,
            m.restricted,
            m.quotient,
            m.gap,
            if ok { "" } else { "  VIOLATION" }
        );
        results.push(json!({
            "subspace": name,
            "dim": e.dim(),
            "image_dims": dims,
            "critical": true,
            "constant": m.constant,
            "restricted": m.restricted,
            "quotient": m.quotient,
            "gap": m.gap,
        }));
    }
    Ok(Outcome {
        passed,
        seed: None,
        digest: Some(l.digest),
        options: json!({ "tol": tol }),
        result: json!({ "subspaces": results }),
    })
}

fn run(cli: Cli) -> Result<bool, Failure> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Input(e.to_string()))?;
    }
    let (name, out, outcome) = match &cli.command {
        Command::Validate { datum, out } => ("validate", out, cmd_validate(datum)?),
        Command::Solve {
            datum,
            solver,
            trace,
            out,
        } => ("solve", out, cmd_solve(datum, solver, trace.as_deref())?),
        Command::Constant {
            datum,
            solver,
            samples,
            seed,
            out,
        } => (
            "constant",
            out,
            cmd_constant(datum, solver, *samples, *seed)?,
        ),
        Command::CheckGaussian {
            datum,
            solver,
            constant,
            samples,
            seed,
            out,
        } => (
            "check-gaussian",
            out,
            cmd_check_gaussian(datum, solver, *constant, *samples, *seed)?,
        ),
        Command::CheckQuadrature {
            datum,
            solver,
            constant,
            functions,
            resolution,
            slack,
            out,
        } => (
            "check-quadrature",
            out,
            cmd_check_quadrature(
                datum,
                solver,
                *constant,
                functions.as_deref(),
                *resolution,
                *slack,
            )?,
        ),
        Command::CheckInf {
            datum,
            samples,
            instances,
            seed,
            out,
        } => (
            "check-inf",
            out,
            cmd_check_inf(datum, *samples, *instances, *seed)?,
        ),
        Command::Bd {
            covariance,
            dim,
            horizon,
            steps,
            samples,
            seed,
            csv,
            out,
        } => (
            "bd",
            out,
            cmd_bd(
                covariance.as_deref(),
                *dim,
                *horizon,
                *steps,
                *samples,
                *seed,
                csv.as_deref(),
            )?,
        ),
        Command::Young {
            p,
            q,
            r,
            show_discarded,
            solver,
            out,
        } => (
            "young",
            out,
            cmd_young(*p, *q, *r, *show_discarded, solver)?,
        ),
        Command::Split { datum, tol, out } => ("split", out, cmd_split(datum, *tol)?),
    };
    if let Some(path) = &out.out {
        let report = Report {
            command: name,
            version: VERSION,
            datum_sha256: outcome.digest,
            seed: outcome.seed,
            options: outcome.options,
            passed: outcome.passed,
            result: outcome.result,
        };
        write_json(path, &report)?;
    }
    println!("{}", if outcome.passed { "OK" } else { "VIOLATION" });
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
