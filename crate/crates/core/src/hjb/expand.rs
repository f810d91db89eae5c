//! Symbolic evaluation of the two HJB equations along a candidate `(π, κ)`.

use crate::error::Result;
use crate::linalg::Mat;
use crate::poly::{HomPoly, PolySeries, VecSeries};

use super::NonlinearProblem;

/// Full Taylor series of `f`, `γ_k`, `l` over `(x, u)` and their `u`-derivatives.
pub(crate) struct Expansion {
    n: usize,
    discount: f64,
    f: VecSeries,
    gamma: Vec<VecSeries>,
    l: PolySeries,
    /// `[j][i]`: `∂f_i/∂u_j`.
    df_du: Vec<VecSeries>,
    /// `[j]`: `∂l/∂u_j`.
    dl_du: Vec<PolySeries>,
    /// `[k][j][i]`: `∂γ_{k,i}/∂u_j`.
    dgamma_du: Vec<Vec<VecSeries>>,
}

/// `x ↦ Σ_j row_j z_j` over the concatenated `(x, u)` of `[A B]`.
fn linear_rows(a: &Mat, b: &Mat) -> Vec<PolySeries> {
    (0..a.nrows())
        .map(|i| {
            let coeffs: Vec<f64> = a.row(i).iter().chain(b.row(i).iter()).copied().collect();
            PolySeries::from_hom(HomPoly::linear(&coeffs).normalized())
        })
        .collect()
}

fn with_hi(mut base: VecSeries, hi: &VecSeries) -> Result<VecSeries> {
    for (b, h) in base.iter_mut().zip(hi) {
        b.add_assign(h)?;
    }
    Ok(base)
}

impl Expansion {
    /// `include_noise = false` drops every noise channel (linear and higher).
    pub(crate) fn new(problem: &NonlinearProblem, include_noise: bool) -> Result<Self> {
        let lin = &problem.lin;
        let b = &lin.base;
        let (n, m) = (problem.n(), problem.m());
        let f = with_hi(linear_rows(&b.drift, &b.input), &problem.f_hi)?;
        let mut gamma = Vec::new();
        if include_noise {
            for ((c, d), hi) in lin
                .state_noise
                .iter()
                .zip(&lin.control_noise)
                .zip(&problem.gamma_hi)
            {
                gamma.push(with_hi(linear_rows(c, d), hi)?);
            }
        }
        let mut block = Mat::zeros(n + m, n + m);
        block.view_mut((0, 0), (n, n)).copy_from(&b.state_cost);
        block.view_mut((0, n), (n, m)).copy_from(&b.cross_cost);
        block.view_mut((n, 0), (m, n)).copy_from(&b.cross_cost.transpose());
        block.view_mut((n, n), (m, m)).copy_from(&b.control_cost);
        let mut l = PolySeries::from_hom(HomPoly::quadratic_form(&(block * 0.5)).normalized());
        l.add_assign(&problem.l_hi)?;

        let df_du = (0..m)
            .map(|j| f.iter().map(|fi| fi.partial(n + j)).collect())
            .collect();
        let dl_du = (0..m).map(|j| l.partial(n + j)).collect();
        let dgamma_du = gamma
            .iter()
            .map(|g| {
                (0..m)
                    .map(|j| g.iter().map(|gi| gi.partial(n + j)).collect())
                    .collect()
            })
            .collect();
        Ok(Self {
            n,
            discount: b.discount,
            f,
            gamma,
            l,
            df_du,
            dl_du,
            dgamma_du,
        })
    }

    pub(crate) fn drift(&self) -> &VecSeries {
        &self.f
    }

    pub(crate) fn noise(&self) -> &[VecSeries] {
        &self.gamma
    }

    pub(crate) fn running_cost(&self) -> &PolySeries {
        &self.l
    }

    fn compose(&self, series: &[&PolySeries], kappa: &VecSeries, max_degree: usize) -> Result<VecSeries> {
        PolySeries::substitute_all(series, kappa, max_degree)
    }

    /// `-απ + π_x f(x,κ) + l(x,κ) + ½ Σ_k γ_k(x,κ)' π_xx γ_k(x,κ)`, truncated at `max_degree`.
    pub(crate) fn generator(&self, pi: &PolySeries, kappa: &VecSeries, max_degree: usize) -> Result<PolySeries> {
        let n = self.n;
        let grad: VecSeries = (0..n).map(|i| pi.partial(i)).collect();
        let hess = hessian(&grad);
        let fs: Vec<&PolySeries> = self.f.iter().collect();
        let fbar = self.compose(&fs, kappa, max_degree)?;
        let lbar = self.compose(&[&self.l], kappa, max_degree)?.remove(0);

        let mut out = pi.truncated(max_degree).scaled(-self.discount);
        out.add_assign(&lbar)?;
        for (gi, fi) in grad.iter().zip(&fbar) {
            out.add_assign(&gi.mul_truncated(fi, max_degree)?)?;
        }
        for g in &self.gamma {
            let gs: Vec<&PolySeries> = g.iter().collect();
            let gbar = self.compose(&gs, kappa, max_degree)?;
            let quad = quadratic(&gbar, &hess, &gbar, max_degree)?;
            out.add_scaled(&quad, 0.5)?;
        }
        Ok(out)
    }

    /// `∂/∂u_j` of the minimized quantity along `u = κ(x)`, for every `j`, truncated.
    pub(crate) fn stationarity(&self, pi: &PolySeries, kappa: &VecSeries, max_degree: usize) -> Result<VecSeries> {
        let n = self.n;
        let grad: VecSeries = (0..n).map(|i| pi.partial(i)).collect();
        let hess = hessian(&grad);
        let gbars = self
            .gamma
            .iter()
            .map(|g| {
                let gs: Vec<&PolySeries> = g.iter().collect();
                self.compose(&gs, kappa, max_degree)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(self.dl_du.len());
        for j in 0..self.dl_du.len() {
            let dfs: Vec<&PolySeries> = self.df_du[j].iter().collect();
            let dfbar = self.compose(&dfs, kappa, max_degree)?;
            let mut phi = self.compose(&[&self.dl_du[j]], kappa, max_degree)?.remove(0);
            for (gi, dfi) in grad.iter().zip(&dfbar) {
                phi.add_assign(&gi.mul_truncated(dfi, max_degree)?)?;
            }
            for (gbar, dg) in gbars.iter().zip(&self.dgamma_du) {
                let dgs: Vec<&PolySeries> = dg[j].iter().collect();
                let dgbar = self.compose(&dgs, kappa, max_degree)?;
                phi.add_assign(&quadratic(gbar, &hess, &dgbar, max_degree)?)?;
            }
            out.push(phi);
        }
        Ok(out)
    }

    /// Both equations evaluated numerically at `x` with `u = κ(x)`.
    pub(crate) fn evaluate_at(&self, pi: &PolySeries, kappa: &VecSeries, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.n;
        let grad: VecSeries = (0..n).map(|i| pi.partial(i)).collect();
        let hess = hessian(&grad);
        let gx: Vec<f64> = grad.iter().map(|g| g.evaluate(x)).collect();
        let hx: Vec<Vec<f64>> = hess
            .iter()
            .map(|row| row.iter().map(|h| h.evaluate(x)).collect())
            .collect();
        let mut z = x.to_vec();
        z.extend(kappa.iter().map(|k| k.evaluate(x)));
        let quad = |a: &[f64], b: &[f64]| -> f64 {
            (0..n)
                .map(|i| a[i] * (0..n).map(|j| hx[i][j] * b[j]).sum::<f64>())
                .sum()
        };
        let eval = |v: &VecSeries| -> Vec<f64> { v.iter().map(|s| s.evaluate(&z)).collect() };

        let fz = eval(&self.f);
        let gammas: Vec<Vec<f64>> = self.gamma.iter().map(eval).collect();
        let mut value = -self.discount * pi.evaluate(x) + self.l.evaluate(&z);
        value += gx.iter().zip(&fz).map(|(a, b)| a * b).sum::<f64>();
        for g in &gammas {
            value += 0.5 * quad(g, g);
        }
        let mut stat = Vec::with_capacity(self.dl_du.len());
        for j in 0..self.dl_du.len() {
            let mut s = self.dl_du[j].evaluate(&z);
            s += gx
                .iter()
                .zip(eval(&self.df_du[j]))
                .map(|(a, b)| a * b)
                .sum::<f64>();
            for (g, dg) in gammas.iter().zip(&self.dgamma_du) {
                s += quad(g, &eval(&dg[j]));
            }
            stat.push(s);
        }
        Ok((value, stat))
    }
}

fn hessian(grad: &VecSeries) -> Vec<VecSeries> {
    let n = grad.len();
    (0..n)
        .map(|a| (0..n).map(|b| grad[a].partial(b)).collect())
        .collect()
}

/// `Σ_ab u_a H_ab v_b`, truncated.
fn quadratic(u: &VecSeries, h: &[VecSeries], v: &VecSeries, max_degree: usize) -> Result<PolySeries> {
    let nv = u.first().map(|s| s.nvars()).unwrap_or(0);
    let mut out = PolySeries::zero(nv);
    for (ua, row) in u.iter().zip(h) {
        if ua.is_zero() {
            continue;
        }
        let mut hv = PolySeries::zero(nv);
        for (hab, vb) in row.iter().zip(v) {
            if hab.is_zero() || vb.is_zero() {
                continue;
            }
            hv.add_assign(&hab.mul_truncated(vb, max_degree)?)?;
        }
        out.add_assign(&ua.mul_truncated(&hv, max_degree)?)?;
    }
    Ok(out)
}
