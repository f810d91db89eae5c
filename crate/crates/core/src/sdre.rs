//! Finite-horizon problems: the stochastic differential Riccati equation (SDRE)
//! integrated backward from the terminal kernel, and the linear ODE for the degree-3
//! cost correction with its degree-2 feedback correction.
//!
//! Both sweeps use fixed-step classical RK4 from `t = T` down to `t = 0`. The gain at
//! every stage is the minimizing one, `K = -(R + ΣD'PD)⁻¹(G'P + S' + ΣD'PC)`, so the
//! stationary point of the sweep is exactly the SARE solution of [`crate::sare`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hjb::{assemble, feedback_correction, Expansion, NonlinearProblem};
use crate::linalg::{frob, min_sym_eigenvalue, solve, symmetrize, Mat};
use crate::lqr::AREData;
use crate::poly::{Basis, HomPoly, PolySeries, VecSeries};
use crate::sare::LQGBData;

/// `‖P‖_F` beyond this multiple of the problem scale counts as a finite escape.
pub const ESCAPE_FACTOR: f64 = 1e10;

/// Problem data as a function of time.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    Constant(Box<NonlinearProblem>),
    /// Nodes at strictly increasing times, linearly interpolated in between and held
    /// constant outside.
    Tabulated {
        times: Vec<f64>,
        nodes: Vec<NonlinearProblem>,
    },
}

impl Schedule {
    pub fn tabulated(times: Vec<f64>, nodes: Vec<NonlinearProblem>) -> Result<Self> {
        if times.is_empty() || times.len() != nodes.len() {
            return Err(Error::InvalidData(format!(
                "{} table times for {} nodes",
                times.len(),
                nodes.len()
            )));
        }
        if times.windows(2).any(|w| w[1].is_nan() || w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidData("table times must be finite and strictly increasing".into()));
        }
        let first = &nodes[0];
        for (i, node) in nodes.iter().enumerate() {
            node.validate().map_err(|e| Error::InvalidData(format!("table node {i}: {e}")))?;
            if node.n() != first.n() || node.m() != first.m() || node.lin.channels() != first.lin.channels() {
                return Err(Error::Dimension(format!(
                    "table node {i} has (n, m, r) = ({}, {}, {}), node 0 has ({}, {}, {})",
                    node.n(),
                    node.m(),
                    node.lin.channels(),
                    first.n(),
                    first.m(),
                    first.lin.channels()
                )));
            }
        }
        Ok(Schedule::Tabulated { times, nodes })
    }

    fn first(&self) -> &NonlinearProblem {
        match self {
            Schedule::Constant(p) => p,
            Schedule::Tabulated { nodes, .. } => &nodes[0],
        }
    }

    pub fn n(&self) -> usize {
        self.first().n()
    }

    pub fn m(&self) -> usize {
        self.first().m()
    }

    /// Data at time `t`.
    pub fn sample(&self, t: f64) -> NonlinearProblem {
        match self {
            Schedule::Constant(p) => (**p).clone(),
            Schedule::Tabulated { times, nodes } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return nodes[0].clone();
                }
                if t >= times[last] {
                    return nodes[last].clone();
                }
                let j = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[j]) / (times[j + 1] - times[j]);
                lerp_problem(&nodes[j], &nodes[j + 1], w)
            }
        }
    }
}

fn lerp_mat(a: &Mat, b: &Mat, w: f64) -> Mat {
    a * (1.0 - w) + b * w
}

fn lerp_series(a: &PolySeries, b: &PolySeries, w: f64) -> PolySeries {
    let mut out = a.scaled(1.0 - w);
    out.add_scaled(b, w).expect("table nodes share their variables");
    out
}

fn lerp_vec(a: &VecSeries, b: &VecSeries, w: f64) -> VecSeries {
    a.iter().zip(b).map(|(x, y)| lerp_series(x, y, w)).collect()
}

fn lerp_problem(a: &NonlinearProblem, b: &NonlinearProblem, w: f64) -> NonlinearProblem {
    let (la, lb) = (&a.lin.base, &b.lin.base);
    let base = AREData {
        drift: lerp_mat(&la.drift, &lb.drift, w),
        input: lerp_mat(&la.input, &lb.input, w),
        state_cost: lerp_mat(&la.state_cost, &lb.state_cost, w),
        control_cost: lerp_mat(&la.control_cost, &lb.control_cost, w),
        cross_cost: lerp_mat(&la.cross_cost, &lb.cross_cost, w),
        discount: la.discount * (1.0 - w) + lb.discount * w,
    };
    let pairs = |x: &[Mat], y: &[Mat]| x.iter().zip(y).map(|(p, q)| lerp_mat(p, q, w)).collect();
    NonlinearProblem {
        lin: LQGBData {
            base,
            state_noise: pairs(&a.lin.state_noise, &b.lin.state_noise),
            control_noise: pairs(&a.lin.control_noise, &b.lin.control_noise),
        },
        f_hi: lerp_vec(&a.f_hi, &b.f_hi, w),
        gamma_hi: a
            .gamma_hi
            .iter()
            .zip(&b.gamma_hi)
            .map(|(x, y)| lerp_vec(x, y, w))
            .collect(),
        l_hi: lerp_series(&a.l_hi, &b.l_hi, w),
        degree_cap: a.degree_cap,
    }
}

/// Finite-horizon problem: time-dependent data, horizon and terminal cost.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeVaryingProblem {
    pub schedule: Schedule,
    pub horizon: f64,
    /// Terminal kernel `P_T` (the terminal cost is `½x'P_T x + Σ π_T^[d]`).
    pub terminal_p: Mat,
    /// Terminal corrections by degree; only degree 3 enters the sweeps here.
    pub terminal_hi: BTreeMap<usize, HomPoly>,
}

impl TimeVaryingProblem {
    pub fn new(
        schedule: Schedule,
        horizon: f64,
        terminal_p: Mat,
        terminal_hi: BTreeMap<usize, HomPoly>,
    ) -> Result<Self> {
        let p = Self {
            schedule,
            horizon,
            terminal_p,
            terminal_hi,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn time_invariant(problem: NonlinearProblem, horizon: f64, terminal_p: Mat) -> Result<Self> {
        Self::new(Schedule::Constant(Box::new(problem)), horizon, terminal_p, BTreeMap::new())
    }

    pub fn n(&self) -> usize {
        self.schedule.n()
    }

    pub fn m(&self) -> usize {
        self.schedule.m()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidData(format!("horizon must be positive, got {}", self.horizon)));
        }
        if let Schedule::Constant(p) = &self.schedule {
            p.validate()?;
        }
        let n = self.n();
        let pt = &self.terminal_p;
        if pt.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "terminal kernel is {}x{}, expected {n}x{n}",
                pt.nrows(),
                pt.ncols()
            )));
        }
        let scale = 1.0 + frob(pt);
        if frob(&(pt - pt.transpose())) > 1e-12 * scale {
            return Err(Error::InvalidData("terminal kernel is not symmetric".into()));
        }
        if min_sym_eigenvalue(pt) < -1e-12 * scale {
            return Err(Error::InvalidData("terminal kernel is not positive semidefinite".into()));
        }
        for (&d, p) in &self.terminal_hi {
            if d < 3 || p.degree() != d || p.nvars() != n {
                return Err(Error::InvalidData(format!(
                    "terminal correction keyed {d} has degree {} in {} variables (expected degree {d} >= 3 in {n})",
                    p.degree(),
                    p.nvars()
                )));
            }
        }
        Ok(())
    }

    fn terminal_pi3(&self) -> HomPoly {
        self.terminal_hi
            .get(&3)
            .cloned()
            .unwrap_or_else(|| HomPoly::zero(self.n(), 3))
    }
}

/// Values on a uniform grid `0 = t_0 < … < t_N = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct SDRETrajectory {
    pub grid: Vec<f64>,
    pub p: Vec<Mat>,
    pub k: Vec<Mat>,
    /// `π^[3](t_i, ·)`, when the degree-3 sweep was run.
    pub pi3: Option<Vec<HomPoly>>,
    /// `κ^[2](t_i, ·)`, one polynomial per control.
    pub kappa2: Option<Vec<Vec<HomPoly>>>,
}

impl SDRETrajectory {
    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    /// `P(0)` and `K(0)`.
    pub fn initial(&self) -> (&Mat, &Mat) {
        (&self.p[0], &self.k[0])
    }

    /// One row per node: `t`, `P` and `K` row-major, then the optional polynomial
    /// coefficients in graded-lex order.
    pub fn to_csv(&self) -> String {
        let n = self.p[0].nrows();
        let m = self.k[0].nrows();
        let b3 = Basis::new(n, 3);
        let b2 = Basis::new(n, 2);
        let exps = |idx: &crate::poly::MultiIndex| {
            idx.exponents().iter().map(|e| e.to_string()).collect::<String>()
        };
        let mut cols = vec!["t".to_string()];
        for i in 0..n {
            for j in 0..n {
                cols.push(format!("p{}{}", i + 1, j + 1));
            }
        }
        for i in 0..m {
            for j in 0..n {
                cols.push(format!("k{}{}", i + 1, j + 1));
            }
        }
        if self.pi3.is_some() {
            cols.extend(b3.indices().iter().map(|idx| format!("pi3_{}", exps(idx))));
        }
        if self.kappa2.is_some() {
            for j in 0..m {
                cols.extend(b2.indices().iter().map(|idx| format!("kappa2_{}_{}", j + 1, exps(idx))));
            }
        }
        let mut out = cols.join(",");
        out.push('\n');
        for (i, t) in self.grid.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(self.p[i].transpose().iter().map(|v| v.to_string()));
            row.extend(self.k[i].transpose().iter().map(|v| v.to_string()));
            if let Some(pi3) = &self.pi3 {
                row.extend(pi3[i].to_dense(&b3).iter().map(|v| v.to_string()));
            }
            if let Some(k2) = &self.kappa2 {
                for poly in &k2[i] {
                    row.extend(poly.to_dense(&b2).iter().map(|v| v.to_string()));
                }
            }
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// `(Ṗ, K)` at time `t` for kernel `p`.
fn riccati_rate(lin: &LQGBData, p: &Mat, t: f64) -> Result<(Mat, Mat)> {
    let b = &lin.base;
    let f = b.shifted_drift();
    let g = &b.input;
    let mut q = b.state_cost.clone();
    let mut r = b.control_cost.clone();
    let mut s = b.cross_cost.clone();
    for (c, d) in lin.state_noise.iter().zip(&lin.control_noise) {
        q += c.transpose() * p * c;
        r += d.transpose() * p * d;
        s += c.transpose() * p * d;
    }
    let rhs = g.transpose() * p + s.transpose();
    let k = -solve(&r, &rhs).map_err(|_| {
        Error::Numerical(format!("at t = {t}: R + sum D'PD is singular"))
    })?;
    // -(PG + S_eff) R_eff⁻¹ (G'P + S_eff') = (PG + S_eff) K
    let rate = p * &f + f.transpose() * p + q + (p * g + s) * &k;
    Ok((-symmetrize(&rate), k))
}

fn quadratic_series(p: &Mat) -> PolySeries {
    PolySeries::from_hom(HomPoly::quadratic_form(&(p * 0.5)).normalized())
}

fn linear_series(k: &Mat) -> VecSeries {
    (0..k.nrows())
        .map(|j| {
            let row: Vec<f64> = k.row(j).iter().copied().collect();
            PolySeries::from_hom(HomPoly::linear(&row).normalized())
        })
        .collect()
}

/// Time derivative of the `π^[3]` coefficients: `-(L c + b)` with `L = M + N - αI`
/// on the closed loop at `(P, K)` and `b` the known degree-3 terms.
fn pi3_rate(problem: &NonlinearProblem, p: &Mat, k: &Mat, c: &DVector<f64>, basis: &Basis) -> Result<DVector<f64>> {
    let (op, _) = assemble(&problem.lin, k, 3)?;
    let full = Expansion::new(problem, true)?;
    let b = full
        .generator(&quadratic_series(p), &linear_series(k), 3)?
        .part(3)
        .to_dense(basis);
    Ok(-(op * c + b))
}

fn grid(horizon: f64, steps: usize) -> Vec<f64> {
    let h = horizon / steps as f64;
    let mut g: Vec<f64> = (0..steps).map(|i| i as f64 * h).collect();
    g.push(horizon);
    g
}

fn escape_scale(problem: &TimeVaryingProblem) -> f64 {
    let end = problem.schedule.sample(problem.horizon);
    ESCAPE_FACTOR * (1.0 + frob(&problem.terminal_p) + problem.horizon * frob(&end.lin.base.state_cost))
}

fn check_escape(p: &Mat, bound: f64, t_lo: f64, t_hi: f64) -> Result<()> {
    let norm = frob(p);
    if !norm.is_finite() || norm > bound {
        return Err(Error::Divergence { t_lo, t_hi });
    }
    Ok(())
}

/// Backward RK4 for `P(t)` from `P(T) = P_T` with `steps` uniform steps.
pub fn integrate_sdre(problem: &TimeVaryingProblem, steps: usize) -> Result<SDRETrajectory> {
    problem.validate()?;
    sweep(problem, steps, false)
}

/// Runs the `P` sweep again in lockstep with the backward ODE for `π^[3]` (from
/// `π_T^[3]`) and fills `pi3` and `kappa2`. `trajectory` fixes the grid and must be
/// the [`integrate_sdre`] output for the same problem.
pub fn integrate_pi3(problem: &TimeVaryingProblem, trajectory: &SDRETrajectory) -> Result<SDRETrajectory> {
    problem.validate()?;
    let out = sweep(problem, trajectory.steps(), true)?;
    if out.grid != trajectory.grid || out.p != trajectory.p {
        return Err(Error::InvalidData(
            "trajectory does not come from this problem and grid".into(),
        ));
    }
    Ok(out)
}

fn sweep(problem: &TimeVaryingProblem, steps: usize, with_pi3: bool) -> Result<SDRETrajectory> {
    if steps == 0 {
        return Err(Error::InvalidData("need at least one step".into()));
    }
    let n = problem.n();
    let grid = grid(problem.horizon, steps);
    let bound = escape_scale(problem);
    let basis = Basis::new(n, 3);

    let mut p = problem.terminal_p.clone();
    let mut c = if with_pi3 {
        problem.terminal_pi3().to_dense(&basis)
    } else {
        DVector::zeros(0)
    };
    let mut ps = vec![Mat::zeros(n, n); steps + 1];
    let mut cs = vec![DVector::zeros(basis.len()); if with_pi3 { steps + 1 } else { 0 }];
    ps[steps] = p.clone();
    if with_pi3 {
        cs[steps] = c.clone();
    }

    let rates = |t: f64, p: &Mat, c: &DVector<f64>| -> Result<(Mat, DVector<f64>)> {
        let data = problem.schedule.sample(t);
        let (dp, k) = riccati_rate(&data.lin, p, t)?;
        let dc = if with_pi3 {
            pi3_rate(&data, p, &k, c, &basis)?
        } else {
            DVector::zeros(0)
        };
        Ok((dp, dc))
    };

    for i in (0..steps).rev() {
        let (t1, t0) = (grid[i + 1], grid[i]);
        let h = t0 - t1; // negative: stepping backward
        let tm = t1 + 0.5 * h;
        let (k1p, k1c) = rates(t1, &p, &c)?;
        let (k2p, k2c) = rates(tm, &(&p + &k1p * (0.5 * h)), &(&c + &k1c * (0.5 * h)))?;
        let (k3p, k3c) = rates(tm, &(&p + &k2p * (0.5 * h)), &(&c + &k2c * (0.5 * h)))?;
        let (k4p, k4c) = rates(t0, &(&p + &k3p * h), &(&c + &k3c * h))?;
        p = symmetrize(&(&p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0)));
        check_escape(&p, bound, t0, t1)?;
        if with_pi3 {
            c = &c + (k1c + k2c * 2.0 + k3c * 2.0 + k4c) * (h / 6.0);
            if !c.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { t_lo: t0, t_hi: t1 });
            }
            cs[i] = c.clone();
        }
        ps[i] = p.clone();
    }

    let mut ks = Vec::with_capacity(steps + 1);
    let mut pi3 = Vec::new();
    let mut kappa2 = Vec::new();
    for (i, &t) in grid.iter().enumerate() {
        let data = problem.schedule.sample(t);
        let (_, k) = riccati_rate(&data.lin, &ps[i], t)?;
        if with_pi3 {
            let poly = HomPoly::from_dense(&basis, &cs[i]).normalized();
            let mut pi = quadratic_series(&ps[i]);
            pi.add_hom(&poly)?;
            let full = Expansion::new(&data, true)?;
            kappa2.push(feedback_correction(&full, &data.lin, &ps[i], &pi, &linear_series(&k), 2)?);
            pi3.push(poly);
        }
        ks.push(k);
    }
    Ok(SDRETrajectory {
        grid,
        p: ps,
        k: ks,
        pi3: with_pi3.then_some(pi3),
        kappa2: with_pi3.then_some(kappa2),
    })
}

/// `log₂` of the ratio of successive `P(0)` changes under step halving
/// (`steps`, `2·steps`, `4·steps`); about 4 for RK4 on smooth data.
pub fn observed_order(problem: &TimeVaryingProblem, steps: usize) -> Result<f64> {
    let p0 = |s: usize| -> Result<Mat> { Ok(integrate_sdre(problem, s)?.p.swap_remove(0)) };
    let (a, b, c) = (p0(steps)?, p0(2 * steps)?, p0(4 * steps)?);
    let d1 = (&a - &b).amax();
    let d2 = (&b - &c).amax();
    Ok((d1 / d2).log2())
}
