//! Linear operators on the coefficient space of degree-`d` homogeneous polynomials.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, smallest_singular_value, spectral_abscissa, Mat};
use crate::poly::{Basis, HomPoly};
use crate::sare::LQGBData;

/// Relative threshold on the smallest singular value below which an operator is singular.
pub const SINGULAR_TOL: f64 = 1e-10;

/// Matrix of `p ↦ ∂p/∂x · Ax` on the degree-`d` coefficients, in graded-lex order.
///
/// Its eigenvalues are the sums of `d` eigenvalues of `A`, with repetition.
pub fn build_deterministic_operator(a: &Mat, degree: usize) -> Mat {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "closed-loop matrix must be square");
    let basis = Basis::new(n, degree);
    let mut op = Mat::zeros(basis.len(), basis.len());
    for (col, idx) in basis.indices().iter().enumerate() {
        // x^I ↦ Σ_i I_i x^{I-e_i} Σ_l A_il x_l
        for i in 0..n {
            let e = idx.get(i);
            let Some(lowered) = idx.lower(i) else { continue };
            for l in 0..n {
                let a_il = a[(i, l)];
                if a_il == 0.0 {
                    continue;
                }
                let row = basis
                    .position(&lowered.raise(l))
                    .expect("raised monomial stays in the basis");
                op[(row, col)] += e as f64 * a_il;
            }
        }
    }
    op
}

/// Matrix of `p ↦ ½ Σ_k (M_k x)' ∂²p/∂x² (M_k x)` on the degree-`d` coefficients.
pub fn build_noise_operator(ms: &[Mat], n: usize, degree: usize) -> Result<Mat> {
    let basis = Basis::new(n, degree);
    for (k, m) in ms.iter().enumerate() {
        if m.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "noise matrix {} is {:?}, expected ({n}, {n})",
                k + 1,
                m.shape()
            )));
        }
    }
    let columns: Vec<Result<DVector<f64>>> = basis
        .indices()
        .par_iter()
        .map(|idx| {
            let p = HomPoly::monomial(idx.clone(), 1.0);
            let mut acc = HomPoly::zero(n, degree);
            for m in ms {
                acc.add_scaled(&p.hessian_form(m, m)?, 0.5)?;
            }
            Ok(acc.to_dense(&basis))
        })
        .collect();
    let mut op = Mat::zeros(basis.len(), basis.len());
    for (col, c) in columns.into_iter().enumerate() {
        op.set_column(col, &c?);
    }
    Ok(op)
}

/// Closed-loop data at the linear level: `A = F + GK` and `M_k = C_k + D_k K`.
pub fn closed_loop(lin: &LQGBData, k: &Mat) -> (Mat, Vec<Mat>) {
    let a = &lin.base.drift + &lin.base.input * k;
    let ms = lin
        .state_noise
        .iter()
        .zip(&lin.control_noise)
        .map(|(c, d)| c + d * k)
        .collect();
    (a, ms)
}

/// The discounted degree-`d` operator `M(A) + N - αI` and its deterministic part `M(A) - αI`.
pub fn assemble(lin: &LQGBData, k: &Mat, degree: usize) -> Result<(Mat, Mat)> {
    let n = lin.n();
    let (a, ms) = closed_loop(lin, k);
    let size = crate::poly::basis_len(n, degree);
    let det = build_deterministic_operator(&a, degree) - Mat::identity(size, size) * lin.base.discount;
    let noise = build_noise_operator(&ms, n, degree)?;
    let full = &det + noise;
    Ok((full, det))
}

/// Numeric evidence for invertibility of the degree-`d` operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityCertificate {
    pub degree: usize,
    /// `-max Re eig(F + GK)`.
    pub tau: f64,
    /// `max_k ‖C_k + D_k K‖₂`.
    pub sigma: f64,
    pub r: usize,
    /// `‖(M - αI)⁻¹‖₂` for the deterministic operator.
    pub rho: f64,
    /// `tau - r·sigma²/2`.
    pub margin: f64,
    /// Smallest singular value of `M + N - αI`.
    pub smallest_singular_value: f64,
    /// `‖M + N - αI‖₂`, the scale for the singularity threshold.
    pub operator_norm: f64,
}

impl InvertibilityCertificate {
    /// Sufficient condition as stated for the margin test.
    pub fn margin_positive(&self) -> bool {
        self.margin > 0.0
    }

    /// Decided by the singular value; the margin alone is not sufficient (see the
    /// scalar counterexample in the tests).
    pub fn invertible(&self) -> bool {
        self.smallest_singular_value > SINGULAR_TOL * self.operator_norm.max(1.0)
    }
}

/// Builds the invertibility certificate for the degree-`d` operator around gain `k`.
pub fn lemma1_certificate(lin: &LQGBData, k: &Mat, degree: usize) -> Result<InvertibilityCertificate> {
    if degree < 2 {
        return Err(Error::InvalidData(format!(
            "certificate needs degree >= 2, got {degree}"
        )));
    }
    let (a, ms) = closed_loop(lin, k);
    let tau = -spectral_abscissa(&a)?;
    let mut sigma: f64 = 0.0;
    for m in &ms {
        sigma = sigma.max(norm2(m)?);
    }
    let r = ms.len();
    let (full, det) = assemble(lin, k, degree)?;
    let det_min = smallest_singular_value(&det)?;
    if det_min <= SINGULAR_TOL * norm2(&det)?.max(1.0) {
        return Err(Error::Numerical(format!(
            "degree-{degree} deterministic operator is singular; the closed loop is not stable"
        )));
    }
    Ok(InvertibilityCertificate {
        degree,
        tau,
        sigma,
        r,
        rho: 1.0 / det_min,
        margin: tau - r as f64 * sigma * sigma / 2.0,
        smallest_singular_value: smallest_singular_value(&full)?,
        operator_norm: norm2(&full)?,
    })
}

/// Ratio between the largest and smallest multinomial weight at this size: the squared
/// equivalence constant between the plain coefficient norm and the Bombieri norm.
pub fn bombieri_equivalence(n: usize, degree: usize) -> f64 {
    let basis = Basis::new(n, degree);
    let w: Vec<f64> = basis.indices().iter().map(|i| i.multinomial()).collect();
    let max = w.iter().copied().fold(f64::MIN, f64::max);
    let min = w.iter().copied().fold(f64::MAX, f64::min);
    max / min
}
