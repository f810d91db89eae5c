//! Power-series (Al'brekht) solution of the stationary stochastic HJB equations.
//!
//! With dynamics `dx = f(x,u) dt + Σ_k γ_k(x,u) dw_k` and running cost `l(x,u)`
//! expanded around the origin, the optimal cost `π` and feedback `κ` are found
//! degree by degree: the SARE gives `½x'Px` and `Kx`, and each further step solves
//! one square linear system for `π^[d+1]` followed by an explicit formula for `κ^[d]`.

mod expand;
mod operator;
mod residual;
mod solve;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::poly::{HomPoly, PolySeries, VecSeries};
use crate::sare::{LQGBData, Status};

pub use operator::{
    assemble, bombieri_equivalence, build_deterministic_operator, build_noise_operator,
    closed_loop, lemma1_certificate, InvertibilityCertificate, SINGULAR_TOL,
};
pub use residual::{hjb_residual, residual_order, residual_series, slope_fit, ResidualOrder, ResidualSeries};
pub(crate) use expand::Expansion;
pub(crate) use solve::feedback_correction;
pub use solve::{solve_degree, solve_hjb_series, DegreeStep, Method, SeriesOptions};

/// Linear-quadratic-bilinear data plus the higher Taylor terms of `f`, `γ_k` and `l`.
///
/// All higher terms are series in the concatenated variables `(x, u)`; their
/// degree-1 (`f`, `γ`) and degree-2 (`l`) parts must be empty because those live in
/// `lin`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearProblem {
    pub lin: LQGBData,
    /// `n` components, degrees 2 and up.
    pub f_hi: VecSeries,
    /// `r` channels of `n` components each, degrees 2 and up.
    pub gamma_hi: Vec<VecSeries>,
    /// Scalar, degrees 3 and up.
    pub l_hi: PolySeries,
    /// Highest degree of `π`; `κ` is carried to one less.
    pub degree_cap: usize,
}

impl NonlinearProblem {
    pub fn new(
        lin: LQGBData,
        f_hi: VecSeries,
        gamma_hi: Vec<VecSeries>,
        l_hi: PolySeries,
        degree_cap: usize,
    ) -> Result<Self> {
        let p = Self {
            lin,
            f_hi,
            gamma_hi,
            l_hi,
            degree_cap,
        };
        p.validate()?;
        Ok(p)
    }

    /// Purely linear-quadratic problem.
    pub fn linear(lin: LQGBData, degree_cap: usize) -> Result<Self> {
        let (n, m, r) = (lin.n(), lin.m(), lin.channels());
        let zero = vec![PolySeries::zero(n + m); n];
        Self::new(lin, zero.clone(), vec![zero; r], PolySeries::zero(n + m), degree_cap)
    }

    pub fn n(&self) -> usize {
        self.lin.n()
    }

    pub fn m(&self) -> usize {
        self.lin.m()
    }

    pub fn validate(&self) -> Result<()> {
        self.lin.validate()?;
        let (n, m) = (self.n(), self.m());
        let nv = n + m;
        if self.degree_cap < 2 {
            return Err(Error::InvalidData(format!(
                "degree cap must be at least 2, got {}",
                self.degree_cap
            )));
        }
        check_vec("f", &self.f_hi, n, nv, 2)?;
        if self.gamma_hi.len() != self.lin.channels() {
            return Err(Error::Dimension(format!(
                "{} higher-order noise channels but {} linear ones",
                self.gamma_hi.len(),
                self.lin.channels()
            )));
        }
        for (k, g) in self.gamma_hi.iter().enumerate() {
            check_vec(&format!("gamma_{}", k + 1), g, n, nv, 2)?;
        }
        check_series("l", &self.l_hi, nv, 3)
    }

    /// Same problem with all noise (linear and higher) removed.
    pub fn deterministic(&self) -> Self {
        let mut out = self.clone();
        out.lin.state_noise.clear();
        out.lin.control_noise.clear();
        out.gamma_hi.clear();
        out
    }
}

fn check_series(name: &str, s: &PolySeries, nvars: usize, min_degree: usize) -> Result<()> {
    if s.nvars() != nvars {
        return Err(Error::Dimension(format!(
            "{name} has {} variables, expected {nvars} (states then controls)",
            s.nvars()
        )));
    }
    if let Some(d) = s.min_degree() {
        if d < min_degree {
            return Err(Error::InvalidData(format!(
                "{name} has a degree-{d} part; degrees below {min_degree} belong to the linear-quadratic data"
            )));
        }
    }
    Ok(())
}

fn check_vec(name: &str, v: &VecSeries, comps: usize, nvars: usize, min_degree: usize) -> Result<()> {
    if v.len() != comps {
        return Err(Error::Dimension(format!(
            "{name} has {} components, expected {comps}",
            v.len()
        )));
    }
    for (i, s) in v.iter().enumerate() {
        check_series(&format!("{name}[{}]", i + 1), s, nvars, min_degree)?;
    }
    Ok(())
}

/// Optimal cost `π = ½x'Px + Σ π^[d]` and feedback `κ = Kx + Σ κ^[d]`, truncated.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSolution {
    pub p: Mat,
    pub k: Mat,
    /// `π^[d]` for d = 3..=cap.
    pub pi_hi: BTreeMap<usize, HomPoly>,
    /// `κ^[d]` (m components) for d = 2..cap.
    pub kappa_hi: BTreeMap<usize, Vec<HomPoly>>,
    /// One certificate per solved degree of `π`.
    pub certificates: Vec<InvertibilityCertificate>,
    pub sare_status: Status,
    pub sare_iterations: usize,
    pub method: Method,
    pub degree_cap: usize,
}

impl SeriesSolution {
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    pub fn m(&self) -> usize {
        self.k.nrows()
    }

    /// `π` as a series in `x`.
    pub fn pi_series(&self) -> PolySeries {
        let mut s = PolySeries::from_hom(HomPoly::quadratic_form(&(&self.p * 0.5)).normalized());
        for p in self.pi_hi.values() {
            s.add_hom(p).expect("stored parts share the state variables");
        }
        s
    }

    /// `κ` as `m` series in `x`.
    pub fn kappa_series(&self) -> VecSeries {
        (0..self.m())
            .map(|j| {
                let row: Vec<f64> = self.k.row(j).iter().copied().collect();
                let mut s = PolySeries::from_hom(HomPoly::linear(&row).normalized());
                for parts in self.kappa_hi.values() {
                    s.add_hom(&parts[j]).expect("stored parts share the state variables");
                }
                s
            })
            .collect()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.pi_series().evaluate(x)
    }

    pub fn feedback(&self, x: &[f64]) -> Vec<f64> {
        self.kappa_series().iter().map(|s| s.evaluate(x)).collect()
    }

    /// Coefficient listing, lowest degree first, monomials in graded-lex order.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "method: {:?}   SARE: {} after {} iterations   degree cap: {}",
            self.method, self.sare_status, self.sare_iterations, self.degree_cap
        );
        let _ = writeln!(out, "\npi(x):");
        for part in self.pi_series().parts() {
            let _ = writeln!(out, "  [{}] {:.4}", part.degree(), part);
        }
        for (j, s) in self.kappa_series().iter().enumerate() {
            let _ = writeln!(out, "\nkappa_{}(x):", j + 1);
            for part in s.parts() {
                let _ = writeln!(out, "  [{}] {:.4}", part.degree(), part);
            }
        }
        if !self.certificates.is_empty() {
            let _ = writeln!(out, "\ncertificates:");
            for c in &self.certificates {
                let _ = writeln!(
                    out,
                    "  degree {}: tau {:.4e}  sigma {:.4e}  margin {:.4e}  rho {:.4e}  smallest sv {:.4e}",
                    c.degree, c.tau, c.sigma, c.margin, c.rho, c.smallest_singular_value
                );
            }
        }
        out
    }
}
