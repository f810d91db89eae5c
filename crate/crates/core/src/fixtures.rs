//! Reference problems used by the tests, the CLI and the Python bindings.

use crate::error::Result;
use crate::hjb::NonlinearProblem;
use crate::linalg::Mat;
use crate::lqr::AREData;
use crate::poly::{HomPoly, MultiIndex, PolySeries};
use crate::sare::LQGBData;

fn mat(r: usize, c: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(r, c, v)
}

/// Double integrator with identity costs, cross term `S = [0; s2]`.
pub fn double_integrator(s2: f64) -> AREData {
    AREData::new(
        mat(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        mat(2, 1, &[0.0, 1.0]),
        Mat::identity(2, 2),
        Mat::identity(1, 1),
        mat(2, 1, &[0.0, s2]),
        0.0,
    )
    .expect("fixture data is valid")
}

/// Two-state example with noise `C_1 = diag(ε, 0)`, `C_2 = diag(0, ε)`, `D_1 = 0`, `D_2 = [0; ε]`.
pub fn two_state(s2: f64, eps: f64) -> LQGBData {
    LQGBData::new(
        double_integrator(s2),
        vec![
            mat(2, 2, &[eps, 0.0, 0.0, 0.0]),
            mat(2, 2, &[0.0, 0.0, 0.0, eps]),
        ],
        vec![Mat::zeros(2, 1), mat(2, 1, &[0.0, eps])],
    )
    .expect("fixture data is valid")
}

/// The two-state example with the second control-noise column on the first state
/// (`D_2 = [ε; 0]`), which reproduces the reference SARE values when paired with
/// the noise-free gain formula. Kept for investigation only.
pub fn two_state_d2_swapped(eps: f64) -> LQGBData {
    let mut d = two_state(0.0, eps);
    d.control_noise[1] = mat(2, 1, &[eps, 0.0]);
    d
}

/// Pendulum constants: gravity-length product, linear and cubic damping, noise level.
pub const PENDULUM_LG: f64 = 8.7;
pub const PENDULUM_C1: f64 = 0.1;
pub const PENDULUM_C3: f64 = 0.05;
pub const PENDULUM_NOISE: f64 = 0.01;

/// Which linear data the pendulum uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PendulumVariant {
    /// `F`, `C_k`, `D_k` linearized from the equations of motion.
    Dynamics,
    /// Alternative matrix list with damping entry `+0.1` in `F`.
    PrintedMatrices,
}

/// Inverted pendulum `ẋ₁ = x₂`, `ẋ₂ = lg·sin x₁ − c₁x₂ − c₃x₂³ + u` with three
/// multiplicative noises (gravity, damping, actuator), `sin` replaced by its Taylor
/// polynomial up to `degree_cap`.
pub fn pendulum(variant: PendulumVariant, degree_cap: usize) -> Result<NonlinearProblem> {
    let (lg, c1, c3, eps) = (PENDULUM_LG, PENDULUM_C1, PENDULUM_C3, PENDULUM_NOISE);
    let damping = match variant {
        PendulumVariant::Dynamics => -c1,
        PendulumVariant::PrintedMatrices => c1,
    };
    let base = AREData::new(
        mat(2, 2, &[0.0, 1.0, lg, damping]),
        mat(2, 1, &[0.0, 1.0]),
        Mat::identity(2, 2),
        Mat::identity(1, 1),
        Mat::zeros(2, 1),
        0.0,
    )?;
    let lin = LQGBData::new(
        base,
        vec![
            mat(2, 2, &[0.0, 0.0, eps * lg, 0.0]),
            mat(2, 2, &[0.0, 0.0, 0.0, -eps * c1]),
            Mat::zeros(2, 2),
        ],
        vec![Mat::zeros(2, 1), Mat::zeros(2, 1), mat(2, 1, &[0.0, eps])],
    )?;

    // variables (x1, x2, u)
    let nv = 3;
    let mono = |e: [u32; 3], c: f64| HomPoly::monomial(MultiIndex::new(e.to_vec()), c);
    // sin x1 − x1 to the cap
    let mut sin_hi = PolySeries::zero(nv);
    let mut k = 3u32;
    let mut fact = 6.0;
    let mut sign = -1.0;
    while k as usize <= degree_cap {
        sin_hi.add_hom(&mono([k, 0, 0], sign / fact))?;
        fact *= ((k + 1) * (k + 2)) as f64;
        sign = -sign;
        k += 2;
    }
    let cubic_damping = PolySeries::from_hom(mono([0, 3, 0], -c3));

    let mut f2 = sin_hi.scaled(lg);
    f2.add_assign(&cubic_damping)?;
    let f_hi = vec![PolySeries::zero(nv), f2];
    let gamma_hi = vec![
        vec![PolySeries::zero(nv), sin_hi.scaled(eps * lg)],
        vec![PolySeries::zero(nv), cubic_damping.scaled(eps)],
        vec![PolySeries::zero(nv), PolySeries::zero(nv)],
    ];
    NonlinearProblem::new(lin, f_hi, gamma_hi, PolySeries::zero(nv), degree_cap)
}

/// A reference coefficient: exponents of `(x1, x2)` and the value.
pub type RefCoeff = ([u32; 2], f64);

/// Reference pendulum coefficients to four decimals: `(exponents, value)` for `π`
/// and for `κ`.
pub fn pendulum_reference() -> (Vec<RefCoeff>, Vec<RefCoeff>) {
    let pi = vec![
        ([2, 0], 26.7042),
        ([1, 1], 17.4701),
        ([0, 2], 2.9488),
        ([4, 0], -4.6153),
        ([3, 1], -2.9012),
        ([2, 2], -0.5535),
        ([1, 3], -0.0802),
        ([0, 4], -0.0157),
        ([6, 0], 0.3361),
        ([5, 1], 0.1468),
        ([4, 2], -0.0015),
        ([3, 3], -0.0077),
        ([2, 4], -0.0022),
        ([1, 5], -0.0003),
        ([0, 6], 0.0000),
    ];
    let kappa = vec![
        ([1, 0], -17.4598),
        ([0, 1], -5.8941),
        ([3, 0], 2.9012),
        ([2, 1], 1.1071),
        ([1, 2], 0.2405),
        ([0, 3], 0.0628),
        ([5, 0], -0.1468),
        ([4, 1], 0.0031),
        ([3, 2], 0.0232),
        ([2, 3], 0.0089),
        ([1, 4], 0.0014),
        ([0, 5], -0.0002),
    ];
    (pi, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pendulum_sine_taylor_terms() {
        let p = pendulum(PendulumVariant::Dynamics, 6).unwrap();
        let f2 = &p.f_hi[1];
        assert!((f2.part(3).coeff(&MultiIndex::new(vec![3, 0, 0])) + 8.7 / 6.0).abs() < 1e-15);
        assert_eq!(f2.part(3).coeff(&MultiIndex::new(vec![0, 3, 0])), -0.05);
        assert!((f2.part(5).coeff(&MultiIndex::new(vec![5, 0, 0])) - 8.7 / 120.0).abs() < 1e-15);
        assert_eq!(f2.max_degree(), Some(5));
        assert_eq!(p.lin.channels(), 3);
    }

    #[test]
    fn two_state_variants() {
        let d = two_state_d2_swapped(0.1);
        assert_eq!(d.control_noise[1][(0, 0)], 0.1);
        assert_eq!(two_state(1.0, 0.1).base.cross_cost[(1, 0)], 1.0);
    }
}
