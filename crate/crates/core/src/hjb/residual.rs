use super::expand::Expansion;
use super::{NonlinearProblem, SeriesSolution};
use crate::error::{Error, Result};
use crate::poly::{PolySeries, VecSeries};
use serde::{Deserialize, Serialize};

/// Pointwise residuals of the cost equation (scalar) and the stationarity equation
/// (`m`-vector) for the truncated solution at state `x`.
///
/// Floating-point cancellation limits what this can resolve near the origin; see
/// [`residual_series`] for the graded form used in order tests.
pub fn hjb_residual(problem: &NonlinearProblem, sol: &SeriesSolution, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = problem.n();
    if x.len() != n {
        return Err(Error::Dimension(format!("state has {} entries, expected {n}", x.len())));
    }
    let full = Expansion::new(problem, true)?;
    full.evaluate_at(&sol.pi_series(), &sol.kappa_series(), x)
}

/// The cost and stationarity equations expanded symbolically along the solution.
///
/// Parts at or below the solved degrees should vanish; their largest coefficient is
/// the `defect` (round-off level for a correct solve). What remains above those
/// degrees is the truncation residual, which sets the order of decay near 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSeries {
    pub value: PolySeries,
    pub stationarity: VecSeries,
    pub degree_cap: usize,
    /// Largest coefficient of the value equation at degree ≤ cap and of the
    /// stationarity equation at degree ≤ cap − 1.
    pub defect: f64,
}

impl ResidualSeries {
    /// Truncation part of the value residual at `x` (degrees above the cap).
    pub fn value_tail(&self, x: &[f64]) -> f64 {
        self.value
            .parts()
            .filter(|p| p.degree() > self.degree_cap)
            .map(|p| p.evaluate(x))
            .sum()
    }

    /// Lowest degree of the value residual above the cap.
    pub fn leading_degree(&self) -> Option<usize> {
        self.value
            .parts()
            .map(|p| p.degree())
            .find(|&d| d > self.degree_cap)
    }
}

/// Expands both equations up to `max_degree` (at least the cap + 1).
pub fn residual_series(
    problem: &NonlinearProblem,
    sol: &SeriesSolution,
    max_degree: usize,
) -> Result<ResidualSeries> {
    let cap = sol.degree_cap;
    let max_degree = max_degree.max(cap + 1);
    let full = Expansion::new(problem, true)?;
    let pi = sol.pi_series();
    let kappa = sol.kappa_series();
    let value = full.generator(&pi, &kappa, max_degree)?;
    let stationarity = full.stationarity(&pi, &kappa, max_degree)?;
    let mut defect: f64 = 0.0;
    for p in value.parts().filter(|p| p.degree() <= cap) {
        defect = defect.max(p.max_abs_coeff());
    }
    for s in &stationarity {
        for p in s.parts().filter(|p| p.degree() < cap) {
            defect = defect.max(p.max_abs_coeff());
        }
    }
    Ok(ResidualSeries {
        value,
        stationarity,
        degree_cap: cap,
        defect,
    })
}

/// Least-squares slope of `log|y|` against `log r`.
pub fn slope_fit(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(r, y)| *r > 0.0 && *y != 0.0)
        .map(|(r, y)| (r.ln(), y.abs().ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Log-log decay of the truncation residual near the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualOrder {
    pub leading_degree: Option<usize>,
    pub defect: f64,
    /// `(‖x‖, max |value tail|)` over the probe directions.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
}

/// Probes the value residual tail at `count` log-spaced radii in `[lo, hi]` along the
/// coordinate axes and the diagonal, and fits the decay slope.
pub fn residual_order(
    problem: &NonlinearProblem,
    sol: &SeriesSolution,
    lo: f64,
    hi: f64,
    count: usize,
) -> Result<ResidualOrder> {
    let n = problem.n();
    let series = residual_series(problem, sol, sol.degree_cap + 2)?;
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    dirs.push(vec![1.0 / (n as f64).sqrt(); n]);
    let count = count.max(2);
    let points: Vec<(f64, f64)> = (0..count)
        .map(|i| {
            let r = lo * (hi / lo).powf(i as f64 / (count - 1) as f64);
            let tail = dirs
                .iter()
                .map(|d| {
                    let x: Vec<f64> = d.iter().map(|v| v * r).collect();
                    series.value_tail(&x).abs()
                })
                .fold(0.0, f64::max);
            (r, tail)
        })
        .collect();
    Ok(ResidualOrder {
        leading_degree: series.leading_degree(),
        defect: series.defect,
        slope: slope_fit(&points),
        points,
    })
}
