//! Stochastic algebraic Riccati equations for linear dynamics with bilinear noise.
//!
//! The problem is
//!
//! ```text
//! dx = (Fx + Gu) dt + Σ_k (C_k x + D_k u) dw_k,
//! cost = ½ E ∫ e^{-αt} (x'Qx + 2x'Su + u'Ru) dt,
//! ```
//!
//! and its stationary solution `π(x) = ½x'Px`, `u = Kx` is found by the monotone
//! fixed-point iteration: every step is a deterministic Riccati solve with the
//! noise terms of the previous iterate folded into `Q`, `R` and `S`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frob, min_sym_eigenvalue, solve, symmetrize, Mat};
use crate::lqr::{solve_care, AREData};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200;
/// `‖P_τ‖_F > DIVERGENCE_FACTOR·‖P_0‖_F` counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e8;
/// Slack for [`check_monotone`].
pub const MONOTONE_TOL: f64 = 1e-8;

/// Linear-quadratic data plus `r` bilinear noise channels.
#[derive(Clone, Debug, PartialEq)]
pub struct LQGBData {
    pub base: AREData,
    /// `C_k`, n×n each.
    pub state_noise: Vec<Mat>,
    /// `D_k`, n×m each.
    pub control_noise: Vec<Mat>,
}

impl LQGBData {
    pub fn new(base: AREData, state_noise: Vec<Mat>, control_noise: Vec<Mat>) -> Result<Self> {
        let data = Self {
            base,
            state_noise,
            control_noise,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn noiseless(base: AREData) -> Self {
        Self {
            base,
            state_noise: Vec::new(),
            control_noise: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn m(&self) -> usize {
        self.base.m()
    }

    /// Number of noise channels `r`.
    pub fn channels(&self) -> usize {
        self.state_noise.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let (n, m) = (self.n(), self.m());
        if self.state_noise.len() != self.control_noise.len() {
            return Err(Error::Dimension(format!(
                "{} state-noise matrices but {} control-noise matrices",
                self.state_noise.len(),
                self.control_noise.len()
            )));
        }
        for (k, (c, d)) in self.state_noise.iter().zip(&self.control_noise).enumerate() {
            if c.shape() != (n, n) {
                return Err(Error::Dimension(format!(
                    "C_{} is {:?}, expected ({n}, {n})",
                    k + 1,
                    c.shape()
                )));
            }
            if d.shape() != (n, m) {
                return Err(Error::Dimension(format!(
                    "D_{} is {:?}, expected ({n}, {m})",
                    k + 1,
                    d.shape()
                )));
            }
            if c.iter().chain(d.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "noise channel {} has non-finite entries",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    /// Same problem with every noise coefficient multiplied by `factor`.
    pub fn with_noise_scaled(&self, factor: f64) -> Self {
        Self {
            base: self.base.clone(),
            state_noise: self.state_noise.iter().map(|c| c * factor).collect(),
            control_noise: self.control_noise.iter().map(|d| d * factor).collect(),
        }
    }

    /// Deterministic data with the noise of kernel `p` folded in:
    /// `Q + ΣC'PC`, `R + ΣD'PD`, `S + ΣC'PD`.
    pub fn effective(&self, p: &Mat) -> Result<AREData> {
        let mut q = self.base.state_cost.clone();
        let mut r = self.base.control_cost.clone();
        let mut s = self.base.cross_cost.clone();
        for (c, d) in self.state_noise.iter().zip(&self.control_noise) {
            let pc = p * c;
            let pd = p * d;
            q += c.transpose() * &pc;
            r += d.transpose() * &pd;
            s += c.transpose() * &pd;
        }
        AREData::new(
            self.base.drift.clone(),
            self.base.input.clone(),
            symmetrize(&q),
            symmetrize(&r),
            s,
            self.base.discount,
        )
    }

    /// Minimizing gain for kernel `p`: `K = -(R + ΣD'PD)⁻¹(G'P + S' + ΣD'PC)`.
    pub fn gain(&self, p: &Mat) -> Result<Mat> {
        let eff = self.effective(p)?;
        let rhs = eff.input.transpose() * p + eff.cross_cost.transpose();
        Ok(-solve(&eff.control_cost, &rhs)?)
    }
}

/// How a [`sare_iterate`] run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Diverged,
    MaxIter,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::Diverged => "diverged",
            Status::MaxIter => "max_iter",
        })
    }
}

/// One iterate of the fixed-point scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct SareStep {
    pub p: Mat,
    /// `‖P_τ - P_{τ-1}‖_F`; zero at τ = 0.
    pub delta: f64,
    /// [`sare_residual`] of `(P_τ, K_τ)`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SAREResult {
    pub p: Mat,
    pub k: Mat,
    /// Index τ of the last iterate.
    pub iterations: usize,
    pub history: Vec<SareStep>,
    pub status: Status,
    /// Error message of the inner solve that ended a diverged run, if any.
    pub failure: Option<String>,
}

impl SAREResult {
    /// CSV with columns `tau,p_norm,delta_norm,residual`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("tau,p_norm,delta_norm,residual\n");
        for (tau, step) in self.history.iter().enumerate() {
            let _ = writeln!(
                out,
                "{tau},{:e},{:e},{:e}",
                frob(&step.p),
                step.delta,
                step.residual
            );
        }
        out
    }

    pub fn kernels(&self) -> Vec<Mat> {
        self.history.iter().map(|s| s.p.clone()).collect()
    }
}

/// Residual of the stationary equations in closed-loop form:
///
/// ```text
/// ‖-αP + P(F+GK) + (F+GK)'P + Q + SK + K'S' + K'RK + Σ(C_k+D_kK)'P(C_k+D_kK)‖_F
///   + ‖(R + ΣD'PD)K + G'P + S' + ΣD'PC‖_F
/// ```
///
/// The first term is the generator applied to `½x'Px` under `u = Kx`; the second
/// is stationarity in `u`. Both vanish exactly at the solution.
pub fn sare_residual(data: &LQGBData, p: &Mat, k: &Mat) -> f64 {
    let b = &data.base;
    let acl = &b.drift + &b.input * k;
    let sk = &b.cross_cost * k;
    let mut value = -p * b.discount + p * &acl + acl.transpose() * p + &b.state_cost
        + &sk
        + sk.transpose()
        + k.transpose() * &b.control_cost * k;
    let mut r_eff = b.control_cost.clone();
    let mut cross = b.input.transpose() * p + b.cross_cost.transpose();
    for (c, d) in data.state_noise.iter().zip(&data.control_noise) {
        let ck = c + d * k;
        value += ck.transpose() * p * &ck;
        r_eff += d.transpose() * p * d;
        cross += d.transpose() * p * c;
    }
    frob(&value) + frob(&(r_eff * k + cross))
}

/// Residual of the uncorrected equations: the value equation with a
/// `-K'RK` term and the gain equation without the `ΣD'PC` coupling. Agrees with
/// [`sare_residual`] when `S = 0` and `D_k = 0`.
pub fn sare_residual_naive(data: &LQGBData, p: &Mat, k: &Mat) -> f64 {
    let b = &data.base;
    let mut value = -p * b.discount + p * &b.drift + b.drift.transpose() * p + &b.state_cost
        - k.transpose() * &b.control_cost * k;
    let mut r_eff = b.control_cost.clone();
    for (c, d) in data.state_noise.iter().zip(&data.control_noise) {
        let ck = c + d * k;
        value += ck.transpose() * p * &ck;
        r_eff += d.transpose() * p * d;
    }
    let gain = r_eff * k + b.input.transpose() * p + b.cross_cost.transpose();
    frob(&value) + frob(&gain)
}

/// Riccati form of the value equation with the noise folded into the costs,
/// `‖-αP + PF + F'P + Q_P - (PG + S_P) R_P⁻¹ (G'P + S_P')‖_F`. Equals the first term
/// of [`sare_residual`] when `K` is the minimizing gain for `P`.
pub fn sare_residual_riccati(data: &LQGBData, p: &Mat) -> Result<f64> {
    let eff = data.effective(p)?;
    let pg_s = p * &eff.input + &eff.cross_cost;
    let r_inv_t = solve(&eff.control_cost, &pg_s.transpose())?;
    let value = -p * eff.discount + p * &eff.drift + eff.drift.transpose() * p + &eff.state_cost
        - pg_s * r_inv_t;
    Ok(frob(&value))
}

/// Runs the fixed-point iteration until successive kernels agree to
/// `‖ΔP‖_F ≤ tol·(1 + ‖P‖_F)`.
///
/// A failed inner solve at τ = 0 is an error (annotated with the iteration); at
/// τ ≥ 1 it ends the run with status `Diverged`, as does growth of `‖P‖_F` past
/// [`DIVERGENCE_FACTOR`] times its initial value. The returned gain is recomputed
/// from the returned kernel.
pub fn sare_iterate(data: &LQGBData, tol: f64, max_iter: usize) -> Result<SAREResult> {
    data.validate()?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidData(format!("tolerance must be positive, got {tol}")));
    }
    let first = solve_care(&data.base).map_err(|e| e.at_iteration(0))?;
    let p0_norm = frob(&first.p);
    let mut history = vec![SareStep {
        residual: sare_residual(data, &first.p, &first.k),
        p: first.p.clone(),
        delta: 0.0,
    }];
    let mut p = first.p;
    let mut k = first.k;
    let mut status = Status::MaxIter;
    let mut failure = None;
    for tau in 1..=max_iter {
        let next = data.effective(&p).and_then(|eff| solve_care(&eff));
        let next = match next {
            Ok(s) => s,
            Err(e) => {
                status = Status::Diverged;
                failure = Some(e.at_iteration(tau).to_string());
                break;
            }
        };
        let delta = frob(&(&next.p - &p));
        p = next.p;
        k = next.k;
        history.push(SareStep {
            residual: sare_residual(data, &p, &k),
            p: p.clone(),
            delta,
        });
        let norm = frob(&p);
        if !norm.is_finite() || norm > DIVERGENCE_FACTOR * p0_norm.max(f64::MIN_POSITIVE) {
            status = Status::Diverged;
            break;
        }
        if delta <= tol * (1.0 + norm) {
            status = Status::Converged;
            break;
        }
    }
    if status != Status::Diverged {
        k = data.gain(&p).map_err(|e| e.at_iteration(history.len() - 1))?;
    }
    Ok(SAREResult {
        p,
        k,
        iterations: history.len() - 1,
        history,
        status,
        failure,
    })
}

/// True iff every step `P_τ - P_{τ-1}` is PSD up to `1e-8·(1 + ‖P_τ‖_F)`.
pub fn check_monotone(history: &[Mat]) -> bool {
    history.windows(2).all(|w| {
        let diff = &w[1] - &w[0];
        min_sym_eigenvalue(&diff) >= -MONOTONE_TOL * (1.0 + frob(&w[1]))
    })
}
