//! `shjb`: batch front end for the SARE, HJB-series, SDRE and Monte Carlo solvers.
//!
//! Exit codes: 0 success; 1 input or solver error; 2 SARE divergence (solve-sare) or
//! finite escape (solve-sdre); 3 singular degree operator (solve-hjb).

mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use shjb::hjb::{
    assemble, lemma1_certificate, residual_order, solve_hjb_series, Method, SeriesOptions, SeriesSolution,
};
use shjb::io::{to_text, ProblemFile, SolutionFile};
use shjb::linalg::{eigenvalues, to_rows, Mat};
use shjb::lqr::closed_loop_spectrum;
use shjb::sare::{sare_iterate, Status, DEFAULT_MAX_ITER, DEFAULT_TOL};
use shjb::sde::{compare_feedbacks, Feedback, SimConfig};
use shjb::sdre::{integrate_pi3, integrate_sdre};
use shjb::Error;

use output::OutDir;

#[derive(Parser)]
#[command(name = "shjb", version, about = "Stochastic HJB equations with bilinear noise, solved by power series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Problem file (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-point iteration for the stochastic algebraic Riccati equation.
    SolveSare {
        #[command(flatten)]
        io: Common,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Power-series solution of the stationary HJB equations.
    SolveHjb {
        #[command(flatten)]
        io: Common,
        /// Highest degree of the cost (defaults to the file's degree_cap).
        #[arg(long)]
        degree: Option<usize>,
        #[arg(long, default_value = "direct")]
        method: Method,
        /// SARE tolerance.
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Backward integration of the differential Riccati equation (and the degree-3 correction).
    SolveSdre {
        #[command(flatten)]
        io: Common,
        #[arg(long, default_value_t = 3000)]
        steps: usize,
        /// Overrides the file's horizon.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Monte Carlo estimate of the closed-loop cost under a computed feedback.
    Simulate {
        #[command(flatten)]
        io: Common,
        /// Solution file from solve-sare or solve-hjb.
        #[arg(long)]
        solution: PathBuf,
        /// Initial state, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x0: Vec<f64>,
        /// Feedback truncation degrees to compare (default: the full feedback).
        #[arg(long, value_delimiter = ',')]
        degree: Vec<usize>,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write every path's cost.
        #[arg(long)]
        per_path: bool,
    },
    /// Degree-operator spectra and invertibility certificates on the SARE closed loop.
    Spectrum {
        #[command(flatten)]
        io: Common,
        /// Highest operator degree.
        #[arg(long, default_value_t = 4)]
        degree: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
}

type CmdResult = Result<i32, Failure>;

/// An error and the exit code it maps to.
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: 1,
            message: format!("i/o: {e}"),
        }
    }
}

fn fmt_mat(m: &Mat) -> String {
    to_rows(m)
        .iter()
        .map(|r| r.iter().map(|v| format!("{v:>12.6}")).collect::<String>())
        .collect::<Vec<_>>()
        .join("\n")
}

fn solve_sare_cmd(io: &Common, tol: f64, max_iter: usize) -> CmdResult {
    let lin = ProblemFile::read(&io.input)?.lqgb()?;
    let mut out = OutDir::create(&io.out)?;
    let res = sare_iterate(&lin, tol, max_iter)?;
    out.write("solution.json", &SolutionFile::from_sare(&res).to_json())?;
    out.write("history.csv", &res.history_csv())?;
    println!("status: {} after {} iterations", res.status, res.iterations);
    if let Some(f) = &res.failure {
        println!("last inner solve failed: {f}");
    }
    let code = match res.status {
        Status::Converged => {
            println!("P =\n{}\nK =\n{}", fmt_mat(&res.p), fmt_mat(&res.k));
            let eig = closed_loop_spectrum(&lin.base.drift, &lin.base.input, &res.k)?;
            let eig: Vec<String> = eig.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
            println!("closed-loop eigenvalues: {}", eig.join(", "));
            0
        }
        Status::Diverged => {
            eprintln!(
                "SARE iteration diverged at iteration {} (||P||_F = {:e}); history in {}",
                res.iterations,
                shjb::linalg::frob(&res.p),
                io.out.join("history.csv").display()
            );
            2
        }
        Status::MaxIter => {
            eprintln!("SARE iteration did not converge in {max_iter} iterations");
            2
        }
    };
    out.finish(
        "solve-sare",
        json!({"tol": tol, "max_iter": max_iter}),
        &io.input,
        code,
    )?;
    Ok(code)
}

fn residual_report(problem: &shjb::hjb::NonlinearProblem, sol: &SeriesSolution) -> Result<String, Error> {
    let order = residual_order(problem, sol, 1e-3, 1e-1, 9)?;
    let mut s = String::new();
    let _ = writeln!(s, "# defect (solved degrees) = {:e}", order.defect);
    let _ = writeln!(
        s,
        "# leading residual degree = {}",
        order.leading_degree.map_or("none".into(), |d| d.to_string())
    );
    let _ = writeln!(s, "# log-log slope = {}", order.slope);
    let _ = writeln!(s, "radius,value_tail");
    for (r, v) in &order.points {
        let _ = writeln!(s, "{r:e},{v:e}");
    }
    Ok(s)
}

fn solve_hjb_cmd(io: &Common, degree: Option<usize>, method: Method, tol: f64, max_iter: usize) -> CmdResult {
    let file = ProblemFile::read(&io.input)?;
    if let (Some(d), Some(cap)) = (degree, file.degree_cap) {
        if d > cap {
            return Err(Failure {
                code: 1,
                message: format!("--degree {d} exceeds the file's degree_cap {cap} (higher terms are not supplied)"),
            });
        }
    }
    let problem = file.nonlinear(degree)?;
    let mut out = OutDir::create(&io.out)?;
    let opts = SeriesOptions {
        method,
        sare_tol: tol,
        sare_max_iter: max_iter,
        ..SeriesOptions::default()
    };
    let config = json!({"degree": problem.degree_cap, "method": method, "tol": tol, "max_iter": max_iter});
    let sol = match solve_hjb_series(&problem, &opts) {
        Ok(sol) => sol,
        Err(e) => {
            if let Error::OperatorSingular { certificate, .. } = e.root() {
                let dump = serde_json::to_string_pretty(certificate).expect("certificate serializes");
                out.write("certificate.json", &(dump.clone() + "\n"))?;
                out.finish("solve-hjb", config, &io.input, 3)?;
                return Err(Failure {
                    code: 3,
                    message: format!("{e}\n{dump}"),
                });
            }
            return Err(e.into());
        }
    };
    out.write("solution.json", &SolutionFile::from_series(&sol).to_json())?;
    out.write("report.txt", &sol.report())?;
    out.write("certificates.json", &to_text(&sol.certificates))?;
    out.write("residual.csv", &residual_report(&problem, &sol)?)?;
    print!("{}", sol.report());
    out.finish("solve-hjb", config, &io.input, 0)?;
    Ok(0)
}

fn solve_sdre_cmd(io: &Common, steps: usize, horizon: Option<f64>) -> CmdResult {
    let problem = ProblemFile::read(&io.input)?.time_varying(horizon)?;
    let mut out = OutDir::create(&io.out)?;
    let config = json!({"steps": steps, "horizon": problem.horizon});
    let has_hi = {
        let p = problem.schedule.sample(0.0);
        !problem.terminal_hi.is_empty()
            || p.f_hi.iter().chain(p.gamma_hi.iter().flatten()).any(|s| !s.is_zero())
            || !p.l_hi.is_zero()
    };
    let traj = integrate_sdre(&problem, steps).and_then(|t| if has_hi { integrate_pi3(&problem, &t) } else { Ok(t) });
    let traj = match traj {
        Ok(t) => t,
        Err(e @ Error::Divergence { .. }) => {
            out.finish("solve-sdre", config, &io.input, 2)?;
            return Err(Failure {
                code: 2,
                message: e.to_string(),
            });
        }
        Err(e) => return Err(e.into()),
    };
    out.write("trajectory.csv", &traj.to_csv())?;
    let (p0, k0) = traj.initial();
    let mut summary = json!({"t": 0.0, "P": to_rows(p0), "K": to_rows(k0), "steps": steps, "horizon": problem.horizon});
    if let Some(pi3) = &traj.pi3 {
        summary["pi3"] = json!(pi3[0].to_string());
    }
    if let Some(k2) = &traj.kappa2 {
        summary["kappa2"] = json!(k2[0].iter().map(|p| p.to_string()).collect::<Vec<_>>());
    }
    out.write("summary.json", &to_text(&summary))?;
    println!("P(0) =\n{}\nK(0) =\n{}", fmt_mat(p0), fmt_mat(k0));
    out.finish("solve-sdre", config, &io.input, 0)?;
    Ok(0)
}

struct SimArgs<'a> {
    solution: &'a Path,
    x0: Vec<f64>,
    degrees: Vec<usize>,
    cfg: SimConfig,
    per_path: bool,
}

fn simulate_cmd(io: &Common, args: SimArgs<'_>) -> CmdResult {
    let problem = ProblemFile::read(&io.input)?.nonlinear(None)?;
    let sol = SolutionFile::read(args.solution)?;
    if sol.n != problem.n() || sol.m != problem.m() {
        return Err(Failure {
            code: 1,
            message: format!(
                "solution is for n = {}, m = {} but the problem has n = {}, m = {}",
                sol.n,
                sol.m,
                problem.n(),
                problem.m()
            ),
        });
    }
    let sol = sol.to_solution()?;
    let top = sol.kappa_hi.keys().copied().max().unwrap_or(1);
    let degrees = if args.degrees.is_empty() { vec![top] } else { args.degrees };
    let feedbacks: Vec<Feedback> = degrees
        .iter()
        .map(|&d| Feedback::from_solution(format!("degree{d}"), &sol, d))
        .collect();
    let mut out = OutDir::create(&io.out)?;
    let cmp = compare_feedbacks(&problem, &feedbacks, &args.cfg)?;
    out.write("results.csv", &cmp.to_csv())?;
    if args.per_path {
        let mut s = String::from("path");
        for (label, _) in &cmp.rows {
            let _ = write!(s, ",{label}");
        }
        s.push('\n');
        for i in 0..args.cfg.paths {
            let _ = write!(s, "{i}");
            for (_, r) in &cmp.rows {
                let _ = write!(s, ",{}", r.costs.as_ref().expect("comparison keeps costs")[i]);
            }
            s.push('\n');
        }
        out.write("paths.csv", &s)?;
    }
    print!("{}", cmp.to_csv());
    println!("quadratic value 0.5 x0'Px0 = {}", quadratic_value(&sol.p, &args.x0));
    let mut cfg = serde_json::to_value(&args.cfg).expect("config serializes");
    cfg["degrees"] = json!(degrees);
    cfg["solution"] = json!(args.solution.display().to_string());
    out.finish("simulate", cfg, &io.input, 0)?;
    Ok(0)
}

fn quadratic_value(p: &Mat, x: &[f64]) -> f64 {
    let n = x.len();
    0.5 * (0..n)
        .map(|i| (0..n).map(|j| x[i] * p[(i, j)] * x[j]).sum::<f64>())
        .sum::<f64>()
}

fn spectrum_cmd(io: &Common, degree: usize, tol: f64, max_iter: usize) -> CmdResult {
    let lin = ProblemFile::read(&io.input)?.lqgb()?;
    let res = sare_iterate(&lin, tol, max_iter)?;
    if res.status != Status::Converged {
        return Err(Failure {
            code: 1,
            message: format!("SARE iteration ended with status {}; no closed loop to analyze", res.status),
        });
    }
    let mut out = OutDir::create(&io.out)?;
    let mut csv = String::from("degree,operator,re,im\n");
    let mut certs = Vec::new();
    for d in 2..=degree {
        let (full, det) = assemble(&lin, &res.k, d)?;
        for (name, op) in [("full", &full), ("deterministic", &det)] {
            for z in eigenvalues(op)? {
                let _ = writeln!(csv, "{d},{name},{},{}", z.re, z.im);
            }
        }
        let c = lemma1_certificate(&lin, &res.k, d)?;
        println!(
            "degree {d}: tau {:.4e}  sigma {:.4e}  margin {:+.4e}  smallest sv {:.4e}  invertible {}",
            c.tau,
            c.sigma,
            c.margin,
            c.smallest_singular_value,
            c.invertible()
        );
        certs.push(c);
    }
    out.write("spectrum.csv", &csv)?;
    out.write("certificates.json", &to_text(&certs))?;
    out.finish(
        "spectrum",
        json!({"degree": degree, "tol": tol, "max_iter": max_iter}),
        &io.input,
        0,
    )?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SolveSare { io, tol, max_iter } => solve_sare_cmd(io, *tol, *max_iter),
        Command::SolveHjb {
            io,
            degree,
            method,
            tol,
            max_iter,
        } => solve_hjb_cmd(io, *degree, *method, *tol, *max_iter),
        Command::SolveSdre { io, steps, horizon } => solve_sdre_cmd(io, *steps, *horizon),
        Command::Simulate {
            io,
            solution,
            x0,
            degree,
            horizon,
            dt,
            paths,
            seed,
            per_path,
        } => simulate_cmd(
            io,
            SimArgs {
                solution,
                x0: x0.clone(),
                degrees: degree.clone(),
                cfg: SimConfig::new(x0.clone(), *horizon, *dt, *paths, *seed),
                per_path: *per_path,
            },
        ),
        Command::Spectrum {
            io,
            degree,
            tol,
            max_iter,
        } => spectrum_cmd(io, *degree, *tol, *max_iter),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
