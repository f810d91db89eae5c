use std::collections::BTreeMap;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::expand::Expansion;
use super::operator::{assemble, lemma1_certificate, InvertibilityCertificate};
use super::{NonlinearProblem, SeriesSolution};
use crate::error::{Error, Result};
use crate::linalg::{solve, Mat};
use crate::poly::{Basis, HomPoly, PolySeries, VecSeries};
use crate::sare::{sare_iterate, LQGBData, Status};

/// How the degree-`d+1` cost equation is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Assemble `M + N - αI` and solve it.
    Direct,
    /// Fixed-point sweeps on the deterministic operator with the noise term lagged.
    Iterative,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Method::Direct),
            "iterative" => Ok(Method::Iterative),
            other => Err(Error::Parse(format!(
                "unknown method {other:?} (expected direct or iterative)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesOptions {
    pub method: Method,
    pub sare_tol: f64,
    pub sare_max_iter: usize,
    /// Relative error estimate `δ·q/(1-q)` (δ the last change, q the observed
    /// contraction) that ends the iterative method.
    pub iter_tol: f64,
    pub iter_max: usize,
    /// Growth factor of the coefficient vector that counts as divergence.
    pub iter_blowup: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            method: Method::Direct,
            sare_tol: 1e-12,
            sare_max_iter: 200,
            iter_tol: 1e-13,
            iter_max: 2000,
            iter_blowup: 1e8,
        }
    }
}

/// Result of one degree step: `π^[d+1]` and `κ^[d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeStep {
    pub pi: HomPoly,
    pub kappa: Vec<HomPoly>,
    pub certificate: InvertibilityCertificate,
    /// Sweeps used by the iterative method.
    pub sweeps: Option<usize>,
}

/// Solves for `π^[d+1]` and `κ^[d]` given `partial` through `π^[d]` and `κ^[d-1]`.
///
/// The right-hand side is the degree-`d+1` part of the cost equation evaluated on
/// the known terms; `κ^[d]` drops out of it because `K` minimizes at the linear level.
pub fn solve_degree(
    problem: &NonlinearProblem,
    partial: &SeriesSolution,
    d: usize,
    opts: &SeriesOptions,
) -> Result<DegreeStep> {
    if d < 2 {
        return Err(Error::InvalidData(format!("degree step must be at least 2, got {d}")));
    }
    let n = problem.n();
    let lin = &problem.lin;
    let pi_known = partial.pi_series().truncated(d);
    let kappa_known: Vec<_> = partial
        .kappa_series()
        .into_iter()
        .map(|s| s.truncated(d - 1))
        .collect();

    let full = Expansion::new(problem, true)?;
    let rhs = full.generator(&pi_known, &kappa_known, d + 1)?.part(d + 1);
    let basis = Basis::new(n, d + 1);
    let b = rhs.to_dense(&basis);

    let certificate = lemma1_certificate(lin, &partial.k, d + 1)?;
    let (op, det) = assemble(lin, &partial.k, d + 1)?;
    let (coeffs, sweeps) = match opts.method {
        Method::Direct => {
            if !certificate.invertible() {
                return Err(Error::OperatorSingular {
                    degree: d + 1,
                    certificate: Box::new(certificate),
                });
            }
            (solve_dense(&op, &(-&b))?, None)
        }
        Method::Iterative => {
            let det_rhs = Expansion::new(problem, false)?
                .generator(&pi_known, &kappa_known, d + 1)?
                .part(d + 1)
                .to_dense(&basis);
            let (c, sweeps) = iterate(&det, &(&op - &det), &b, &det_rhs, opts)?;
            (c, Some(sweeps))
        }
    };
    let pi_new = HomPoly::from_dense(&basis, &coeffs).normalized();

    let mut pi_ext = pi_known;
    pi_ext.add_hom(&pi_new)?;
    let kappa = feedback_correction(&full, lin, &partial.p, &pi_ext, &kappa_known, d)?;
    Ok(DegreeStep {
        pi: pi_new,
        kappa,
        certificate,
        sweeps,
    })
}

/// `κ^[d] = -(R + ΣD'PD)⁻¹ Φ_d`, with `Φ_d` the degree-`d` stationarity terms along
/// `π` (through degree `d+1`) and `κ` (through degree `d-1`).
pub(crate) fn feedback_correction(
    full: &Expansion,
    lin: &LQGBData,
    p: &Mat,
    pi: &PolySeries,
    kappa_known: &VecSeries,
    d: usize,
) -> Result<Vec<HomPoly>> {
    let n = lin.n();
    let phi = full.stationarity(pi, kappa_known, d)?;
    let kb = Basis::new(n, d);
    let mut phi_mat = Mat::zeros(lin.m(), kb.len());
    for (j, s) in phi.iter().enumerate() {
        phi_mat.set_row(j, &s.part(d).to_dense(&kb).transpose());
    }
    let r_eff = lin.effective(p)?.control_cost;
    let kappa_mat = -solve(&r_eff, &phi_mat)?;
    Ok((0..lin.m())
        .map(|j| HomPoly::from_dense(&kb, &kappa_mat.row(j).transpose()).normalized())
        .collect())
}

fn solve_dense(a: &Mat, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Numerical("degree operator is singular".into()))
}

/// `c_0 = -D⁻¹ b_det`, then `c_τ = -D⁻¹(b + N c_{τ-1})` until the estimated
/// remaining error is small.
fn iterate(
    det: &Mat,
    noise: &Mat,
    b: &DVector<f64>,
    b_det: &DVector<f64>,
    opts: &SeriesOptions,
) -> Result<(DVector<f64>, usize)> {
    let lu = det.clone().lu();
    let step = |rhs: &DVector<f64>| {
        lu.solve(&(-rhs))
            .ok_or_else(|| Error::Numerical("deterministic degree operator is singular".into()))
    };
    let mut c = step(b_det)?;
    let start = c.norm();
    let mut prev_delta = f64::INFINITY;
    for sweep in 1..=opts.iter_max {
        let next = step(&(b + noise * &c))?;
        let delta = (&next - &c).norm();
        c = next;
        let norm = c.norm();
        if !norm.is_finite() || norm > opts.iter_blowup * (1.0 + start) {
            return Err(Error::Numerical(format!(
                "iterative solve diverged after {sweep} sweeps (coefficient norm {norm:e})"
            )));
        }
        let q = delta / prev_delta;
        let estimate = if q > 0.0 && q < 1.0 { delta * q / (1.0 - q) } else { delta };
        // at the round-off floor the changes stop shrinking
        let stalled = q >= 1.0 && delta <= 1e3 * f64::EPSILON * norm;
        if estimate <= opts.iter_tol * norm || delta == 0.0 || stalled {
            return Ok((c, sweep));
        }
        prev_delta = delta;
    }
    Err(Error::Numerical(format!(
        "iterative solve did not converge in {} sweeps",
        opts.iter_max
    )))
}

/// Solves the SARE, then every degree step up to the problem's cap.
pub fn solve_hjb_series(problem: &NonlinearProblem, opts: &SeriesOptions) -> Result<SeriesSolution> {
    problem.validate()?;
    let sare = sare_iterate(&problem.lin, opts.sare_tol, opts.sare_max_iter)?;
    if sare.status != Status::Converged {
        return Err(Error::Numerical(format!(
            "SARE iteration ended with status {} after {} iterations{}",
            sare.status,
            sare.iterations,
            sare.failure.map(|f| format!(": {f}")).unwrap_or_default()
        )));
    }
    let mut sol = SeriesSolution {
        p: sare.p,
        k: sare.k,
        pi_hi: BTreeMap::new(),
        kappa_hi: BTreeMap::new(),
        certificates: Vec::new(),
        sare_status: sare.status,
        sare_iterations: sare.iterations,
        method: opts.method,
        degree_cap: problem.degree_cap,
    };
    for d in 2..problem.degree_cap {
        let step = solve_degree(problem, &sol, d, opts).map_err(|e| e.at_degree(d + 1))?;
        sol.pi_hi.insert(d + 1, step.pi);
        sol.kappa_hi.insert(d, step.kappa);
        sol.certificates.push(step.certificate);
    }
    Ok(sol)
}
