//! Discounted continuous-time algebraic Riccati equation.
//!
//! Solves
//!
//! ```text
//! 0 = -αP + PF + F'P + Q - (PG + S) R⁻¹ (G'P + S'),   K = -R⁻¹ (G'P + S')
//! ```
//!
//! for the stabilizing solution. The discount is folded into the drift
//! (`F - α/2·I`) so one undiscounted core handles both cases. The primary route
//! is the matrix sign function of the Hamiltonian (an invariant-subspace
//! method), polished by Newton steps; Newton–Kleinman from a Bass stabilizing
//! gain is the fallback.

use nalgebra::{Cholesky, Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::{
    eigenvalues, frob, inverse, min_sym_eigenvalue, psd_sqrt, smallest_singular_value_complex,
    solve, solve_lyapunov, spectral_abscissa, symmetrize, Mat,
};

/// Residual tolerance: `‖residual‖_F ≤ CARE_TOL·(1 + ‖P‖_F)`.
pub const CARE_TOL: f64 = 1e-9;
/// Singular-value threshold for the PBH rank tests.
pub const PBH_TOL: f64 = 1e-8;

const SIGN_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 100;

/// Linear-quadratic problem data for the deterministic Riccati equation.
#[derive(Clone, Debug, PartialEq)]
pub struct AREData {
    /// `F`, n×n.
    pub drift: Mat,
    /// `G`, n×m.
    pub input: Mat,
    /// `Q`, n×n symmetric.
    pub state_cost: Mat,
    /// `R`, m×m symmetric positive definite.
    pub control_cost: Mat,
    /// `S`, n×m.
    pub cross_cost: Mat,
    /// `α ≥ 0`.
    pub discount: f64,
}

impl AREData {
    /// Validates dimensions, symmetry and definiteness.
    pub fn new(
        drift: Mat,
        input: Mat,
        state_cost: Mat,
        control_cost: Mat,
        cross_cost: Mat,
        discount: f64,
    ) -> Result<Self> {
        let data = Self {
            drift,
            input,
            state_cost,
            control_cost,
            cross_cost,
            discount,
        };
        data.validate()?;
        Ok(data)
    }

    /// Same data with `S = 0` and `α = 0`.
    pub fn undiscounted(drift: Mat, input: Mat, state_cost: Mat, control_cost: Mat) -> Result<Self> {
        let (n, m) = input.shape();
        Self::new(drift, input, state_cost, control_cost, Mat::zeros(n, m), 0.0)
    }

    pub fn n(&self) -> usize {
        self.drift.nrows()
    }

    pub fn m(&self) -> usize {
        self.input.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.drift.nrows();
        let m = self.input.ncols();
        check_shape("F", &self.drift, n, n)?;
        check_shape("G", &self.input, n, m)?;
        check_shape("Q", &self.state_cost, n, n)?;
        check_shape("R", &self.control_cost, m, m)?;
        check_shape("S", &self.cross_cost, n, m)?;
        if n == 0 || m == 0 {
            return Err(Error::Dimension("state and control dimensions must be positive".into()));
        }
        if !(self.discount >= 0.0 && self.discount.is_finite()) {
            return Err(Error::InvalidData(format!(
                "discount must be finite and nonnegative, got {}",
                self.discount
            )));
        }
        check_symmetric("Q", &self.state_cost)?;
        check_symmetric("R", &self.control_cost)?;
        if Cholesky::new(symmetrize(&self.control_cost)).is_none() {
            return Err(Error::InvalidData("R is not positive definite".into()));
        }
        let mut block = Mat::zeros(n + m, n + m);
        block.view_mut((0, 0), (n, n)).copy_from(&self.state_cost);
        block.view_mut((0, n), (n, m)).copy_from(&self.cross_cost);
        block
            .view_mut((n, 0), (m, n))
            .copy_from(&self.cross_cost.transpose());
        block.view_mut((n, n), (m, m)).copy_from(&self.control_cost);
        let floor = -1e-10 * (1.0 + frob(&block));
        if min_sym_eigenvalue(&block) < floor {
            return Err(Error::InvalidData(
                "cost block [Q S; S' R] is not positive semidefinite".into(),
            ));
        }
        Ok(())
    }

    /// `F - α/2·I`.
    pub fn shifted_drift(&self) -> Mat {
        let n = self.n();
        &self.drift - Mat::identity(n, n) * (0.5 * self.discount)
    }
}

fn check_shape(name: &str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn check_symmetric(name: &str, m: &Mat) -> Result<()> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * m.norm().max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(Error::InvalidData(format!(
            "{name} is not symmetric (‖{name} - {name}'‖ = {asym:e})"
        )));
    }
    Ok(())
}

/// Stabilizing solution of the Riccati equation and its optimal gain.
#[derive(Clone, Debug, PartialEq)]
pub struct CareSolution {
    /// Cost kernel `P` (symmetric PSD).
    pub p: Mat,
    /// Gain `K = -R⁻¹(G'P + S')`.
    pub k: Mat,
}

/// `‖-αP + PF + F'P + Q - (PG+S)R⁻¹(G'P+S')‖_F`.
pub fn care_residual(data: &AREData, p: &Mat) -> f64 {
    let r_inv = match inverse(&data.control_cost) {
        Ok(r) => r,
        Err(_) => return f64::INFINITY,
    };
    let pg_s = p * &data.input + &data.cross_cost;
    let res = -p * data.discount + p * &data.drift + data.drift.transpose() * p + &data.state_cost
        - &pg_s * r_inv * pg_s.transpose();
    frob(&res)
}

/// `K = -R⁻¹(G'P + S')`.
pub fn optimal_gain(data: &AREData, p: &Mat) -> Result<Mat> {
    let rhs = data.input.transpose() * p + data.cross_cost.transpose();
    Ok(-solve(&data.control_cost, &rhs)?)
}

/// Solves the discounted Riccati equation for its stabilizing solution.
pub fn solve_care(data: &AREData) -> Result<CareSolution> {
    data.validate()?;
    let n = data.n();
    let a = data.shifted_drift();
    check_stabilizable(&a, &data.input)?;

    let r_inv = inverse(&data.control_cost)?;
    let g = &data.input;
    let s = &data.cross_cost;
    // remove the cross term: u = v - R⁻¹S'x
    let a_s = &a - g * &r_inv * s.transpose();
    let q_s = symmetrize(&(&data.state_cost - s * &r_inv * s.transpose()));
    check_detectable(&a_s, &q_s)?;
    let b_rinv_bt = symmetrize(&(g * &r_inv * g.transpose()));

    let undiscounted = ReducedCare {
        a: a_s,
        q: q_s,
        brb: b_rinv_bt,
    };

    let candidate = undiscounted
        .sign_function()
        .map(|p| undiscounted.newton_polish(p));
    let p = match candidate {
        Some(p) if undiscounted.accept(&p) => p,
        _ => {
            let k0 = bass_gain(&undiscounted.a, g)?;
            let p = undiscounted.newton_kleinman(g, &r_inv, k0)?;
            if !undiscounted.accept(&p) {
                return Err(Error::Numerical(format!(
                    "Riccati residual {:e} above tolerance after Newton-Kleinman fallback",
                    undiscounted.residual(&p)
                )));
            }
            p
        }
    };
    let p = symmetrize(&p);
    let k = optimal_gain(data, &p)?;
    let res = care_residual(data, &p);
    if res > CARE_TOL * (1.0 + frob(&p)) {
        return Err(Error::Numerical(format!(
            "Riccati residual {res:e} above tolerance"
        )));
    }
    let abscissa = spectral_abscissa(&(&a + &data.input * &k))?;
    if abscissa >= 0.0 {
        return Err(Error::Numerical(format!(
            "Riccati solution is not stabilizing (spectral abscissa {abscissa:e})"
        )));
    }
    debug_assert_eq!(p.nrows(), n);
    Ok(CareSolution { p, k })
}

/// `A'P + PA + Q - P·BRB·P = 0` with the discount and cross term already removed.
struct ReducedCare {
    a: Mat,
    q: Mat,
    brb: Mat,
}

impl ReducedCare {
    fn residual(&self, p: &Mat) -> f64 {
        frob(&(self.a.transpose() * p + p * &self.a + &self.q - p * &self.brb * p))
    }

    fn accept(&self, p: &Mat) -> bool {
        if p.iter().any(|v| !v.is_finite()) {
            return false;
        }
        if self.residual(p) > 0.1 * CARE_TOL * (1.0 + frob(p)) {
            return false;
        }
        matches!(spectral_abscissa(&(&self.a - &self.brb * p)), Ok(s) if s < 0.0)
    }

    /// Stable invariant subspace of the Hamiltonian via the scaled sign iteration.
    fn sign_function(&self) -> Option<Mat> {
        let n = self.a.nrows();
        let mut z = Mat::zeros(2 * n, 2 * n);
        z.view_mut((0, 0), (n, n)).copy_from(&self.a);
        z.view_mut((0, n), (n, n)).copy_from(&(-&self.brb));
        z.view_mut((n, 0), (n, n)).copy_from(&(-&self.q));
        z.view_mut((n, n), (n, n)).copy_from(&(-self.a.transpose()));
        for _ in 0..SIGN_MAX_ITER {
            let lu = z.clone().lu();
            let det = lu.determinant();
            if !det.is_finite() || det == 0.0 {
                return None;
            }
            let zi = lu.try_inverse()?;
            let c = det.abs().powf(1.0 / (2 * n) as f64);
            let next = (&z / c + zi * c) * 0.5;
            let delta = (&next - &z).norm();
            z = next;
            if delta <= 1e-13 * z.norm() {
                break;
            }
        }
        if z.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // (W + I)[I; P] = 0  ⇒  [W12; W22 + I] P = -[W11 + I; W21]
        let eye = Mat::identity(n, n);
        let mut lhs = Mat::zeros(2 * n, n);
        lhs.view_mut((0, 0), (n, n))
            .copy_from(&z.view((0, n), (n, n)));
        lhs.view_mut((n, 0), (n, n))
            .copy_from(&(z.view((n, n), (n, n)) + &eye));
        let mut rhs = Mat::zeros(2 * n, n);
        rhs.view_mut((0, 0), (n, n))
            .copy_from(&(-(z.view((0, 0), (n, n)) + &eye)));
        rhs.view_mut((n, 0), (n, n))
            .copy_from(&(-z.view((n, 0), (n, n))));
        // least squares through the normal equations of a well-conditioned 2n×n block
        let normal = lhs.transpose() * &lhs;
        let p = solve(&normal, &(lhs.transpose() * rhs)).ok()?;
        Some(symmetrize(&p))
    }

    /// A few Newton steps from a nearby stabilizing guess, kept only while they help.
    fn newton_polish(&self, mut p: Mat) -> Mat {
        let mut best = self.residual(&p);
        for _ in 0..4 {
            if best <= 1e-3 * CARE_TOL * (1.0 + frob(&p)) {
                break;
            }
            let acl = &self.a - &self.brb * &p;
            let rhs = &self.q + &p * &self.brb * &p;
            let Ok(next) = solve_lyapunov(&acl, &rhs) else {
                break;
            };
            let r = self.residual(&next);
            if r < best {
                best = r;
                p = next;
            } else {
                break;
            }
        }
        p
    }

    /// Newton–Kleinman iteration from a stabilizing gain of the reduced system.
    fn newton_kleinman(&self, g: &Mat, r_inv: &Mat, k0: Mat) -> Result<Mat> {
        // reduced problem has unit cross term zero; BRB = G R⁻¹ G', gain K = -R⁻¹G'P
        let r = inverse(r_inv)?;
        let mut k = k0;
        let mut prev: Option<Mat> = None;
        for _ in 0..NEWTON_MAX_ITER {
            let acl = &self.a + g * &k;
            let rhs = &self.q + k.transpose() * &r * &k;
            let x = solve_lyapunov(&acl, &rhs)?;
            k = -(r_inv * g.transpose() * &x);
            if let Some(p) = &prev {
                if (&x - p).norm() <= 1e-14 * (1.0 + x.norm()) {
                    return Ok(x);
                }
            }
            prev = Some(x);
        }
        prev.ok_or_else(|| Error::Numerical("Newton-Kleinman produced no iterate".into()))
    }
}

/// Bass's stabilizing gain: `K = -G' Z⁻¹` with `(A+βI)Z + Z(A+βI)' = 2GG'`.
fn bass_gain(a: &Mat, g: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let beta = a.norm() + 1.0;
    let shifted = a + Mat::identity(n, n) * beta;
    let z = solve_lyapunov(&(-shifted.transpose()), &(g * g.transpose() * 2.0))?;
    let z_inv = inverse(&z)
        .map_err(|_| Error::Numerical("no stabilizing initial gain (Bass Gramian singular)".into()))?;
    let k = -(g.transpose() * z_inv);
    if spectral_abscissa(&(a + g * &k))? >= 0.0 {
        return Err(Error::Numerical("Bass gain failed to stabilize".into()));
    }
    Ok(k)
}

fn unstable_modes(a: &Mat) -> Result<Vec<Complex<f64>>> {
    let tol = 1e-10 * (1.0 + a.norm());
    Ok(eigenvalues(a)?.into_iter().filter(|z| z.re >= -tol).collect())
}

fn complexify(m: &Mat) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

/// PBH test: `rank [A - λI, G] = n` at every eigenvalue with `Re λ ≥ 0`.
pub fn check_stabilizable(a: &Mat, g: &Mat) -> Result<()> {
    let n = a.nrows();
    let m = g.ncols();
    let scale = 1.0f64.max(a.norm() + g.norm());
    for lambda in unstable_modes(a)? {
        let mut pbh = DMatrix::<Complex<f64>>::zeros(n, n + m);
        let shifted = complexify(a) - DMatrix::<Complex<f64>>::identity(n, n) * lambda;
        pbh.view_mut((0, 0), (n, n)).copy_from(&shifted);
        pbh.view_mut((0, n), (n, m)).copy_from(&complexify(g));
        if smallest_singular_value_complex(&pbh)? <= PBH_TOL * scale {
            return Err(Error::Stabilizability {
                mode: format!("{:.6}{:+.6}i", lambda.re, lambda.im),
            });
        }
    }
    Ok(())
}

/// PBH test: `rank [A - λI; Q^{1/2}] = n` at every eigenvalue with `Re λ ≥ 0`.
pub fn check_detectable(a: &Mat, q: &Mat) -> Result<()> {
    let n = a.nrows();
    let q_half = psd_sqrt(q);
    let scale = 1.0f64.max(a.norm() + q_half.norm());
    for lambda in unstable_modes(a)? {
        let mut pbh = DMatrix::<Complex<f64>>::zeros(2 * n, n);
        let shifted = complexify(a) - DMatrix::<Complex<f64>>::identity(n, n) * lambda;
        pbh.view_mut((0, 0), (n, n)).copy_from(&shifted);
        pbh.view_mut((n, 0), (n, n)).copy_from(&complexify(&q_half));
        if smallest_singular_value_complex(&pbh)? <= PBH_TOL * scale {
            return Err(Error::Detectability {
                mode: format!("{:.6}{:+.6}i", lambda.re, lambda.im),
            });
        }
    }
    Ok(())
}

/// Eigenvalues of `F + GK`, sorted by real then imaginary part.
pub fn closed_loop_spectrum(f: &Mat, g: &Mat, k: &Mat) -> Result<Vec<Complex<f64>>> {
    if g.nrows() != f.nrows() || k.nrows() != g.ncols() || k.ncols() != f.ncols() {
        return Err(Error::Dimension(format!(
            "closed loop needs F n×n, G n×m, K m×n; got F {:?}, G {:?}, K {:?}",
            f.shape(),
            g.shape(),
            k.shape()
        )));
    }
    eigenvalues(&(f + g * k))
}
