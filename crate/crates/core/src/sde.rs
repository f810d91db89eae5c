//! Monte Carlo check of computed cost/feedback pairs: Euler–Maruyama simulation of
//! the closed-loop SDE with the discounted running cost accumulated along each path.
//!
//! Normal draws come from ChaCha8 keyed by `seed` with one stream per path, consumed
//! step-major, channel-minor, so every draw is a function of `(seed, path, step, k)`.
//! Paths run in parallel and are reduced in path order, so results do not depend on
//! the thread count.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{Expansion, NonlinearProblem, SeriesSolution};
use crate::linalg::Mat;
use crate::poly::{CompiledMap, HomPoly, MultiIndex, PolySeries, Scratch, VecSeries};

/// A path whose state norm exceeds this is stopped and counted as diverged.
pub const ESCAPE_NORM: f64 = 1e6;

/// A state feedback `u = κ(x)` given as `m` polynomial series in `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Feedback {
    pub label: String,
    pub kappa: VecSeries,
}

impl Feedback {
    pub fn linear(label: impl Into<String>, k: &Mat) -> Self {
        let kappa = (0..k.nrows())
            .map(|j| {
                let row: Vec<f64> = k.row(j).iter().copied().collect();
                PolySeries::from_hom(HomPoly::linear(&row).normalized())
            })
            .collect();
        Self {
            label: label.into(),
            kappa,
        }
    }

    /// The solution's feedback truncated after degree `max_degree`.
    pub fn from_solution(label: impl Into<String>, sol: &SeriesSolution, max_degree: usize) -> Self {
        Self {
            label: label.into(),
            kappa: sol
                .kappa_series()
                .iter()
                .map(|s| s.truncated(max_degree))
                .collect(),
        }
    }

    pub fn degree(&self) -> usize {
        self.kappa.iter().filter_map(|s| s.max_degree()).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub x0: Vec<f64>,
    /// Integration stops at the first step at or beyond this time.
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    /// Keep the per-path costs (diverged paths as NaN).
    #[serde(default)]
    pub keep_costs: bool,
}

impl SimConfig {
    pub fn new(x0: Vec<f64>, horizon: f64, dt: f64, paths: usize, seed: u64) -> Self {
        Self {
            x0,
            horizon,
            dt,
            paths,
            seed,
            keep_costs: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidData(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidData(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.paths == 0 {
            return Err(Error::InvalidData("need at least one path".into()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("initial state has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Mean over the paths that stayed bounded.
    pub mean_cost: f64,
    pub std_error: f64,
    pub paths: usize,
    pub paths_diverged: usize,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
}

impl SimResult {
    pub const CSV_HEADER: &'static str = "feedback,mean,std_error,paths,diverged";

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{},{},{},{}",
            self.mean_cost, self.std_error, self.paths, self.paths_diverged
        )
    }
}

/// Closed-loop drift, noise columns and running cost at a state.
trait ClosedLoop: Sync {
    type Work: Send;
    fn dims(&self) -> (usize, usize);
    fn work(&self) -> Self::Work;
    /// Writes `f(x, κ(x))` into `out[..n]`, `γ_k(x, κ(x))` into `out[(k+1)·n..]` and
    /// returns `l(x, κ(x))`.
    fn eval(&self, x: &[f64], work: &mut Self::Work, out: &mut [f64]) -> f64;
}

/// Linear dynamics under linear feedback: `Ax`, `M_k x`, `½x'Lx`.
struct LinearLoop {
    n: usize,
    r: usize,
    /// Rows of `A`, `M_1..M_r`, then `L`, stacked.
    rows: Vec<f64>,
}

impl LinearLoop {
    fn new(problem: &NonlinearProblem, k: &Mat) -> Self {
        let lin = &problem.lin;
        let b = &lin.base;
        let a = &b.drift + &b.input * k;
        let sk = &b.cross_cost * k;
        let l = &b.state_cost + &sk + sk.transpose() + k.transpose() * &b.control_cost * k;
        let flat = |m: &Mat| m.transpose().iter().copied().collect::<Vec<f64>>();
        let mut rows = flat(&a);
        for (c, d) in lin.state_noise.iter().zip(&lin.control_noise) {
            rows.extend(flat(&(c + d * k)));
        }
        rows.extend(flat(&l));
        Self {
            n: lin.n(),
            r: lin.channels(),
            rows,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

impl ClosedLoop for LinearLoop {
    type Work = Vec<f64>;

    fn dims(&self) -> (usize, usize) {
        (self.n, self.r)
    }

    fn work(&self) -> Vec<f64> {
        vec![0.0; self.n]
    }

    fn eval(&self, x: &[f64], lx: &mut Vec<f64>, out: &mut [f64]) -> f64 {
        let n = self.n;
        let (head, tail) = self.rows.split_at(out.len() * n);
        for (o, row) in out.iter_mut().zip(head.chunks_exact(n)) {
            *o = dot(row, x);
        }
        for (o, row) in lx.iter_mut().zip(tail.chunks_exact(n)) {
            *o = dot(row, x);
        }
        0.5 * dot(x, lx)
    }
}

/// General case through compiled polynomial maps.
struct PolyLoop {
    n: usize,
    r: usize,
    feedback: CompiledMap,
    /// Outputs: `f` (n), `γ_1..γ_r` (n each), `l`.
    dynamics: CompiledMap,
}

struct PolyWork {
    z: Vec<f64>,
    out: Vec<f64>,
    fb: Scratch,
    dy: Scratch,
}

impl PolyLoop {
    fn new(problem: &NonlinearProblem, feedback: &Feedback) -> Result<Self> {
        let (n, m) = (problem.n(), problem.m());
        let exp = Expansion::new(problem, true)?;
        let mut outs: Vec<&PolySeries> = exp.drift().iter().collect();
        for g in exp.noise() {
            outs.extend(g.iter());
        }
        outs.push(exp.running_cost());
        let kappa: Vec<&PolySeries> = feedback.kappa.iter().collect();
        Ok(Self {
            n,
            r: exp.noise().len(),
            feedback: CompiledMap::new(n, &kappa),
            dynamics: CompiledMap::new(n + m, &outs),
        })
    }
}

impl ClosedLoop for PolyLoop {
    type Work = PolyWork;

    fn dims(&self) -> (usize, usize) {
        (self.n, self.r)
    }

    fn work(&self) -> PolyWork {
        PolyWork {
            z: vec![0.0; self.dynamics.nvars()],
            out: vec![0.0; self.dynamics.noutputs()],
            fb: self.feedback.scratch(),
            dy: self.dynamics.scratch(),
        }
    }

    fn eval(&self, x: &[f64], w: &mut PolyWork, out: &mut [f64]) -> f64 {
        let n = self.n;
        w.z[..n].copy_from_slice(x);
        self.feedback.eval(x, &mut w.fb, &mut w.z[n..]);
        self.dynamics.eval(&w.z, &mut w.dy, &mut w.out);
        out.copy_from_slice(&w.out[..(self.r + 1) * n]);
        w.out[(self.r + 1) * n]
    }
}

/// Discounted cost of one path, `None` if it escaped.
fn run_path<S: ClosedLoop>(sys: &S, cfg: &SimConfig, discount: f64, path: usize) -> Option<f64> {
    let (n, r) = sys.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(path as u64);
    let mut work = sys.work();
    let mut x = cfg.x0.clone();
    let mut out = vec![0.0; (r + 1) * n];
    let mut xi = vec![0.0; r];
    let dt = cfg.dt;
    let sqdt = dt.sqrt();
    let decay = (-discount * dt).exp();
    let mut weight = 1.0;
    let mut cost = 0.0;
    for _ in 0..cfg.steps() {
        let l = sys.eval(&x, &mut work, &mut out);
        cost += weight * l * dt;
        weight *= decay;
        for v in xi.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal) * sqdt;
        }
        let (drift, noise) = out.split_at(n);
        let mut norm2 = 0.0;
        for (i, xv) in x.iter_mut().enumerate() {
            let mut dx = drift[i] * dt;
            for (col, v) in noise.chunks_exact(n).zip(&xi) {
                dx += col[i] * v;
            }
            *xv += dx;
            norm2 += *xv * *xv;
        }
        if norm2.is_nan() || norm2 > ESCAPE_NORM * ESCAPE_NORM {
            return None;
        }
    }
    Some(cost)
}

fn run<S: ClosedLoop>(sys: &S, cfg: &SimConfig, discount: f64) -> Result<SimResult> {
    let costs: Vec<Option<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|p| run_path(sys, cfg, discount, p))
        .collect();
    let finite: Vec<f64> = costs.iter().flatten().copied().collect();
    let nf = finite.len();
    if nf == 0 {
        return Err(Error::Numerical(format!("all {} paths diverged", cfg.paths)));
    }
    let mean = finite.iter().sum::<f64>() / nf as f64;
    let var = if nf > 1 {
        finite.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (nf - 1) as f64
    } else {
        0.0
    };
    Ok(SimResult {
        mean_cost: mean,
        std_error: (var / nf as f64).sqrt(),
        paths: cfg.paths,
        paths_diverged: cfg.paths - nf,
        steps: cfg.steps(),
        costs: cfg
            .keep_costs
            .then(|| costs.iter().map(|c| c.unwrap_or(f64::NAN)).collect()),
    })
}

fn check_dims(problem: &NonlinearProblem, feedback: &Feedback, cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    let (n, m) = (problem.n(), problem.m());
    if cfg.x0.len() != n {
        return Err(Error::Dimension(format!("x0 has {} entries, expected {n}", cfg.x0.len())));
    }
    if feedback.kappa.len() != m || feedback.kappa.iter().any(|s| s.nvars() != n) {
        return Err(Error::Dimension(format!(
            "feedback {:?} must have {m} components in {n} state variables",
            feedback.label
        )));
    }
    Ok(())
}

/// Degree-1 gain if the whole closed loop is linear-quadratic.
fn linear_gain(problem: &NonlinearProblem, feedback: &Feedback) -> Option<Mat> {
    let hi_zero = problem.f_hi.iter().all(|s| s.is_zero())
        && problem.gamma_hi.iter().flatten().all(|s| s.is_zero())
        && problem.l_hi.is_zero();
    if !hi_zero || feedback.kappa.iter().any(|s| s.min_degree().is_some_and(|d| d != 1)) {
        return None;
    }
    let n = problem.n();
    Some(Mat::from_fn(problem.m(), n, |j, i| {
        feedback.kappa[j].part(1).coeff(&MultiIndex::unit(n, i))
    }))
}

fn simulate_impl(problem: &NonlinearProblem, feedback: &Feedback, cfg: &SimConfig, general: bool) -> Result<SimResult> {
    check_dims(problem, feedback, cfg)?;
    let discount = problem.lin.base.discount;
    match linear_gain(problem, feedback).filter(|_| !general) {
        Some(k) => run(&LinearLoop::new(problem, &k), cfg, discount),
        None => run(&PolyLoop::new(problem, feedback)?, cfg, discount),
    }
}

/// Estimates `E ∫₀^T e^{-αt} l(x, κ(x)) dt` from `x0` by Euler–Maruyama.
pub fn simulate_closed_loop(problem: &NonlinearProblem, feedback: &Feedback, cfg: &SimConfig) -> Result<SimResult> {
    simulate_impl(problem, feedback, cfg, false)
}

/// Several feedbacks on common random numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// In input order; per-path costs always kept.
    pub rows: Vec<(String, SimResult)>,
}

impl Comparison {
    /// Row indices by increasing mean cost.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by(|&a, &b| self.rows[a].1.mean_cost.total_cmp(&self.rows[b].1.mean_cost));
        idx
    }

    /// Mean and standard error of the per-path difference `cost_a − cost_b`, over
    /// paths that stayed bounded under both feedbacks.
    pub fn paired_difference(&self, a: usize, b: usize) -> (f64, f64) {
        let ca = self.rows[a].1.costs.as_deref().unwrap_or(&[]);
        let cb = self.rows[b].1.costs.as_deref().unwrap_or(&[]);
        let d: Vec<f64> = ca
            .iter()
            .zip(cb)
            .map(|(x, y)| x - y)
            .filter(|v| v.is_finite())
            .collect();
        let k = d.len() as f64;
        if d.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let mean = d.iter().sum::<f64>() / k;
        let var = if d.len() > 1 {
            d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        (mean, (var / k).sqrt())
    }

    /// Ranked table: `rank,feedback,mean,std_error,paths,diverged`.
    pub fn to_csv(&self) -> String {
        let mut out = format!("rank,{}\n", SimResult::CSV_HEADER);
        for (rank, i) in self.ranking().into_iter().enumerate() {
            let (label, res) = &self.rows[i];
            let _ = writeln!(out, "{},{}", rank + 1, res.csv_row(label));
        }
        out
    }
}

/// Simulates every feedback with the same seed, hence the same draws path by path.
pub fn compare_feedbacks(problem: &NonlinearProblem, feedbacks: &[Feedback], cfg: &SimConfig) -> Result<Comparison> {
    let mut cfg = cfg.clone();
    cfg.keep_costs = true;
    let rows = feedbacks
        .iter()
        .map(|f| Ok((f.label.clone(), simulate_closed_loop(problem, f, &cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{double_integrator, pendulum, two_state, PendulumVariant};
    use crate::hjb::{solve_hjb_series, SeriesOptions};
    use crate::lqr::{solve_care, AREData};
    use crate::sare::{sare_iterate, LQGBData};

    fn one(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    /// dx = (a x + u) dt + c x dw, cost ½(x² + u²).
    fn scalar(a: f64, c: f64) -> NonlinearProblem {
        let base = AREData::new(one(a), one(1.0), one(1.0), one(1.0), one(0.0), 0.0).unwrap();
        let lin = LQGBData::new(base, vec![one(c)], vec![one(0.0)]).unwrap();
        NonlinearProblem::linear(lin, 3).unwrap()
    }

    #[test]
    fn origin_costs_nothing() {
        let pend = pendulum(PendulumVariant::Dynamics, 4).unwrap();
        let sol = solve_hjb_series(&pend, &SeriesOptions::default()).unwrap();
        let res = simulate_closed_loop(
            &pend,
            &Feedback::from_solution("k3", &sol, 3),
            &SimConfig::new(vec![0.0, 0.0], 1.0, 1e-2, 20, 1),
        )
        .unwrap();
        assert_eq!(res.mean_cost, 0.0);
        assert_eq!(res.std_error, 0.0);
        assert_eq!(res.paths_diverged, 0);
    }

    #[test]
    fn noiseless_cost_matches_riccati_value() {
        let data = double_integrator(0.0);
        let care = solve_care(&data).unwrap();
        let problem = NonlinearProblem::linear(LQGBData::noiseless(data), 3).unwrap();
        let x0 = [0.3, -0.2];
        let cfg = SimConfig::new(x0.to_vec(), 40.0, 1e-4, 1, 0);
        let res = simulate_closed_loop(&problem, &Feedback::linear("K", &care.k), &cfg).unwrap();
        let x = nalgebra::DVector::from_column_slice(&x0);
        let value = 0.5 * (x.transpose() * &care.p * &x)[(0, 0)];
        assert!((res.mean_cost - value).abs() <= 1e-3 * value, "{} vs {value}", res.mean_cost);
    }

    /// Exact mean of the Euler–Maruyama cost estimator for the scalar linear loop:
    /// `E x²_{j+1} = ((1 + a dt)² + c² dt) E x²_j`.
    fn em_expected_cost(a_cl: f64, c: f64, lq: f64, x0: f64, dt: f64, steps: usize) -> f64 {
        let rho = (1.0 + a_cl * dt).powi(2) + c * c * dt;
        let mut m = x0 * x0;
        let mut sum = 0.0;
        for _ in 0..steps {
            sum += 0.5 * lq * m * dt;
            m *= rho;
        }
        sum
    }

    #[test]
    fn mean_matches_moment_recursion() {
        let (a, c, k) = (0.5, 0.4, -2.0);
        let problem = scalar(a, c);
        let cfg = SimConfig::new(vec![1.0], 5.0, 0.01, 20_000, 7);
        let res = simulate_closed_loop(&problem, &Feedback::linear("k", &one(k)), &cfg).unwrap();
        let exact = em_expected_cost(a + k, c, 1.0 + k * k, 1.0, 0.01, cfg.steps());
        assert!(
            (res.mean_cost - exact).abs() <= 3.5 * res.std_error,
            "{} ± {} vs {exact}",
            res.mean_cost,
            res.std_error
        );
    }

    #[test]
    fn linear_fast_path_agrees_with_polynomial_path() {
        let problem = NonlinearProblem::linear(two_state(1.0, 0.1), 3).unwrap();
        let sare = sare_iterate(&problem.lin, 1e-12, 200).unwrap();
        let fb = Feedback::linear("K", &sare.k);
        let mut cfg = SimConfig::new(vec![0.5, -0.1], 3.0, 1e-2, 200, 11);
        cfg.keep_costs = true;
        let fast = simulate_impl(&problem, &fb, &cfg, false).unwrap();
        let slow = simulate_impl(&problem, &fb, &cfg, true).unwrap();
        for (x, y) in fast.costs.unwrap().iter().zip(slow.costs.unwrap()) {
            assert!((x - y).abs() <= 1e-12 * x.abs());
        }
    }

    #[test]
    fn runs_are_reproducible_and_common_random_numbers_pair_exactly() {
        let problem = NonlinearProblem::linear(two_state(0.0, 0.1), 3).unwrap();
        let sare = sare_iterate(&problem.lin, 1e-12, 200).unwrap();
        let fb = Feedback::linear("K", &sare.k);
        let cfg = SimConfig::new(vec![0.5, 0.0], 2.0, 1e-2, 300, 42);
        let a = simulate_closed_loop(&problem, &fb, &cfg).unwrap();
        let b = simulate_closed_loop(&problem, &fb, &cfg).unwrap();
        assert_eq!(a, b);
        let cmp = compare_feedbacks(&problem, &[fb.clone(), fb], &cfg).unwrap();
        assert_eq!(cmp.rows[0].1, cmp.rows[1].1);
        assert_eq!(cmp.paired_difference(0, 1), (0.0, 0.0));
        let other = simulate_closed_loop(&problem, &Feedback::linear("K", &sare.k), &SimConfig { seed: 43, ..cfg })
            .unwrap();
        assert_ne!(a.mean_cost, other.mean_cost);
    }

    #[test]
    fn monte_carlo_value_matches_sare() {
        let problem = NonlinearProblem::linear(two_state(0.0, 0.1), 3).unwrap();
        let sare = sare_iterate(&problem.lin, 1e-12, 200).unwrap();
        let cfg = SimConfig::new(vec![0.5, 0.0], 10.0, 2e-3, 4000, 3);
        let res = simulate_closed_loop(&problem, &Feedback::linear("K", &sare.k), &cfg).unwrap();
        let value = 0.5 * 0.25 * sare.p[(0, 0)];
        assert!((res.mean_cost - value).abs() <= 3.0 * res.std_error + 0.01 * value);
    }

    #[test]
    fn weak_error_is_first_order() {
        // fixed gain k on dx = (a x + u) dt + c x dw: exact cost ½(1+k²)x0² / -(2(a+k) + c²)
        let (a, c, k) = (0.0, 0.3, -1.0);
        let problem = scalar(a, c);
        let exact = 0.5 * (1.0 + k * k) / -(2.0 * (a + k) + c * c);
        let mut pts = Vec::new();
        for dt in [0.2, 0.1, 0.05] {
            let cfg = SimConfig::new(vec![1.0], 20.0, dt, 40_000, 5);
            let res = simulate_closed_loop(&problem, &Feedback::linear("k", &one(k)), &cfg).unwrap();
            pts.push((dt, (res.mean_cost - exact).abs()));
        }
        let order = crate::hjb::slope_fit(&pts);
        assert!(order >= 0.8, "observed weak order {order}: {pts:?}");
    }

    #[test]
    fn higher_degree_feedback_is_no_worse_on_pendulum() {
        let pend = pendulum(PendulumVariant::Dynamics, 6).unwrap();
        let sol = solve_hjb_series(&pend, &SeriesOptions::default()).unwrap();
        let fbs = [Feedback::from_solution("deg1", &sol, 1), Feedback::from_solution("deg5", &sol, 5)];
        assert_eq!(fbs[1].degree(), 5);
        let cfg = SimConfig::new(vec![0.8, 0.0], 6.0, 2e-3, 200, 9);
        let cmp = compare_feedbacks(&pend, &fbs, &cfg).unwrap();
        let (diff, se) = cmp.paired_difference(1, 0);
        assert!(diff <= 3.0 * se, "deg5 - deg1 = {diff} ± {se}");
        assert!(cmp.to_csv().lines().nth(1).unwrap().starts_with("1,"));
    }

    #[test]
    fn zero_cost_gives_zero() {
        // costs switched off by hand, bypassing validation
        let mut problem = NonlinearProblem::linear(two_state(0.0, 0.1), 3).unwrap();
        problem.lin.base.state_cost = Mat::zeros(2, 2);
        problem.lin.base.control_cost = Mat::zeros(1, 1);
        let cfg = SimConfig::new(vec![0.5, 0.0], 1.0, 1e-2, 50, 1);
        let k = Mat::from_row_slice(1, 2, &[-1.0, -1.7]);
        let res = simulate_closed_loop(&problem, &Feedback::linear("K", &k), &cfg).unwrap();
        assert_eq!(res.mean_cost, 0.0);
    }

    #[test]
    fn divergent_paths_are_counted() {
        // open-loop unstable with a zero gain
        let problem = scalar(3.0, 0.1);
        let cfg = SimConfig::new(vec![1.0], 10.0, 1e-2, 10, 1);
        let err = simulate_closed_loop(&problem, &Feedback::linear("zero", &one(0.0)), &cfg).unwrap_err();
        assert!(err.to_string().contains("all 10 paths diverged"));
        assert!(simulate_closed_loop(&problem, &Feedback::linear("k", &one(0.0)), &SimConfig::new(vec![1.0, 0.0], 1.0, 1e-2, 1, 1)).is_err());
    }
}
