use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use super::index::{Basis, MultiIndex};
use super::series::PolySeries;
use crate::error::{Error, Result};

/// Relative threshold below which coefficients are dropped by [`HomPoly::normalize`].
pub const PRUNE_RELATIVE: f64 = 1e-14;

/// A homogeneous polynomial of fixed degree in a fixed number of variables.
///
/// Coefficients multiply plain monomials `x^I`; absent entries are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct HomPoly {
    nvars: usize,
    degree: usize,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl HomPoly {
    pub fn zero(nvars: usize, degree: usize) -> Self {
        Self {
            nvars,
            degree,
            coeffs: BTreeMap::new(),
        }
    }

    /// Builds a polynomial from `(exponents, coefficient)` records, summing duplicates.
    pub fn from_terms<I>(nvars: usize, degree: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut p = Self::zero(nvars, degree);
        for (idx, c) in terms {
            if idx.nvars() != nvars {
                return Err(Error::Dimension(format!(
                    "monomial {idx} has {} exponents, expected {nvars}",
                    idx.nvars()
                )));
            }
            if idx.degree() != degree {
                return Err(Error::Dimension(format!(
                    "monomial {idx} has degree {}, expected {degree}",
                    idx.degree()
                )));
            }
            p.add_term(idx, c);
        }
        Ok(p)
    }

    pub fn monomial(idx: MultiIndex, coeff: f64) -> Self {
        let mut p = Self::zero(idx.nvars(), idx.degree());
        p.add_term(idx, coeff);
        p
    }

    /// `x ↦ Σ_j c_j x_j`.
    pub fn linear(coeffs: &[f64]) -> Self {
        let n = coeffs.len();
        let mut p = Self::zero(n, 1);
        for (j, &c) in coeffs.iter().enumerate() {
            p.add_term(MultiIndex::unit(n, j), c);
        }
        p
    }

    /// `x ↦ x' A x` for a square matrix `A`.
    pub fn quadratic_form(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut p = Self::zero(n, 2);
        for i in 0..n {
            for j in 0..n {
                let idx = MultiIndex::unit(n, i).raise(j);
                p.add_term(idx, a[(i, j)]);
            }
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeff(&self, idx: &MultiIndex) -> f64 {
        self.coeffs.get(idx).copied().unwrap_or(0.0)
    }

    /// Stored `(multi-index, coefficient)` pairs in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.coeffs.iter().map(|(k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Adds `c·x^idx`, removing the entry if it cancels to exactly zero.
    pub fn add_term(&mut self, idx: MultiIndex, c: f64) {
        debug_assert_eq!(idx.nvars(), self.nvars);
        debug_assert_eq!(idx.degree(), self.degree);
        if c == 0.0 {
            return;
        }
        match self.coeffs.entry(idx) {
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += c;
                if *slot.get() == 0.0 {
                    slot.remove();
                }
            }
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
        }
    }

    /// Drops coefficients smaller than [`PRUNE_RELATIVE`] times the largest one.
    pub fn normalize(&mut self) {
        let cut = PRUNE_RELATIVE * self.max_abs_coeff();
        self.coeffs.retain(|_, c| c.abs() >= cut && *c != 0.0);
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    fn check_same_shape(&self, other: &HomPoly) -> Result<()> {
        if self.nvars != other.nvars || self.degree != other.degree {
            return Err(Error::Dimension(format!(
                "cannot add degree-{} polynomial in {} variables to degree-{} polynomial in {} variables",
                other.degree, other.nvars, self.degree, self.nvars
            )));
        }
        Ok(())
    }

    /// `self += c·other`.
    pub fn add_scaled(&mut self, other: &HomPoly, c: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (idx, v) in other.terms() {
            self.add_term(idx.clone(), c * v);
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> HomPoly {
        let mut out = HomPoly::zero(self.nvars, self.degree);
        if c != 0.0 {
            for (idx, v) in self.terms() {
                out.add_term(idx.clone(), c * v);
            }
        }
        out
    }

    pub fn multiply(&self, other: &HomPoly) -> Result<HomPoly> {
        if self.nvars != other.nvars {
            return Err(Error::Dimension(format!(
                "cannot multiply polynomials in {} and {} variables",
                self.nvars, other.nvars
            )));
        }
        let mut out = HomPoly::zero(self.nvars, self.degree + other.degree);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                out.add_term(a.add(b), ca * cb);
            }
        }
        out.normalize();
        Ok(out)
    }

    /// `∂p/∂x_j`. A degree-0 input yields the degree-0 zero polynomial.
    pub fn partial(&self, j: usize) -> HomPoly {
        assert!(j < self.nvars, "variable index {j} out of range");
        if self.degree == 0 {
            return HomPoly::zero(self.nvars, 0);
        }
        let mut out = HomPoly::zero(self.nvars, self.degree - 1);
        for (idx, c) in self.terms() {
            let e = idx.get(j);
            if let Some(lowered) = idx.lower(j) {
                out.add_term(lowered, c * e as f64);
            }
        }
        out
    }

    pub fn gradient(&self) -> Vec<HomPoly> {
        (0..self.nvars).map(|j| self.partial(j)).collect()
    }

    /// `x ↦ (A x)' ∂²p/∂x²(x) (B x)`; zero when the degree is below 2.
    pub fn hessian_form(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<HomPoly> {
        let n = self.nvars;
        if a.shape() != (n, n) || b.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "hessian_form needs {n}x{n} matrices, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let mut out = HomPoly::zero(n, self.degree);
        if self.degree < 2 {
            return Ok(out);
        }
        let ax: Vec<HomPoly> = (0..n)
            .map(|i| HomPoly::linear(a.row(i).iter().copied().collect::<Vec<_>>().as_slice()))
            .collect();
        let bx: Vec<HomPoly> = (0..n)
            .map(|i| HomPoly::linear(b.row(i).iter().copied().collect::<Vec<_>>().as_slice()))
            .collect();
        for (i, axi) in ax.iter().enumerate() {
            let di = self.partial(i);
            if di.is_zero() || axi.is_zero() {
                continue;
            }
            for (j, bxj) in bx.iter().enumerate() {
                let dij = di.partial(j);
                if dij.is_zero() || bxj.is_zero() {
                    continue;
                }
                let term = dij.multiply(axi)?.multiply(bxj)?;
                out.add_scaled(&term, 1.0)?;
            }
        }
        out.normalize();
        Ok(out)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "point has wrong dimension");
        self.terms().map(|(idx, c)| c * idx.evaluate(x)).sum()
    }

    /// Coefficient vector in the order of `basis`.
    pub fn to_dense(&self, basis: &Basis) -> DVector<f64> {
        assert_eq!(basis.nvars(), self.nvars);
        assert_eq!(basis.degree(), self.degree);
        let mut v = DVector::zeros(basis.len());
        for (idx, c) in self.terms() {
            let pos = basis.position(idx).expect("monomial missing from basis");
            v[pos] = c;
        }
        v
    }

    pub fn from_dense(basis: &Basis, v: &DVector<f64>) -> HomPoly {
        assert_eq!(v.len(), basis.len());
        let mut p = HomPoly::zero(basis.nvars(), basis.degree());
        for (idx, &c) in basis.indices().iter().zip(v.iter()) {
            p.add_term(idx.clone(), c);
        }
        p
    }

    /// Substitutes `u := umap(x)` in a polynomial over the concatenated block `(x, u)`.
    ///
    /// `umap` has one series per `u` component, each in the `x` variables with no
    /// constant term. Terms above `max_degree` are discarded.
    pub fn substitute(&self, umap: &[PolySeries], max_degree: usize) -> Result<PolySeries> {
        if self.nvars < umap.len() {
            return Err(Error::Dimension(format!(
                "polynomial has {} variables but u has {} components",
                self.nvars,
                umap.len()
            )));
        }
        let mut cache = PowerCache::new(umap, self.nvars - umap.len(), max_degree)?;
        self.substitute_cached(&mut cache)
    }

    pub(crate) fn substitute_cached(&self, cache: &mut PowerCache<'_>) -> Result<PolySeries> {
        let n = cache.n;
        let cap = cache.max_degree;
        if self.nvars != n + cache.umap.len() {
            return Err(Error::Dimension(format!(
                "polynomial has {} variables but x has {n} and u has {}",
                self.nvars,
                cache.umap.len()
            )));
        }
        let mut out = PolySeries::zero(n);
        for (idx, c) in self.terms() {
            let (xa, ub) = idx.split_at(n);
            let xdeg = xa.degree();
            if xdeg > cap {
                continue;
            }
            let mut acc = PolySeries::from_hom(HomPoly::monomial(xa, c));
            for (j, &e) in ub.exponents().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let pw = cache.power(j, e as usize)?;
                acc = acc.mul_truncated(pw, cap)?;
                if acc.is_zero() {
                    break;
                }
            }
            out.add_assign(&acc)?;
        }
        Ok(out)
    }
}

/// Memoized powers `umap_j^e`, truncated, shared across the terms of a substitution.
pub(crate) struct PowerCache<'a> {
    umap: &'a [PolySeries],
    n: usize,
    max_degree: usize,
    powers: Vec<Vec<PolySeries>>,
}

impl<'a> PowerCache<'a> {
    pub(crate) fn new(umap: &'a [PolySeries], n: usize, max_degree: usize) -> Result<Self> {
        for (j, s) in umap.iter().enumerate() {
            if s.nvars() != n {
                return Err(Error::Dimension(format!(
                    "u-map component {j} has {} variables, expected {n}",
                    s.nvars()
                )));
            }
            if s.min_degree().is_some_and(|d| d == 0) {
                return Err(Error::InvalidData(format!(
                    "u-map component {j} has a constant term"
                )));
            }
        }
        Ok(Self {
            umap,
            n,
            max_degree,
            powers: vec![Vec::new(); umap.len()],
        })
    }

    fn power(&mut self, j: usize, e: usize) -> Result<&PolySeries> {
        let pw = &mut self.powers[j];
        if pw.is_empty() {
            pw.push(self.umap[j].truncated(self.max_degree));
        }
        while pw.len() < e {
            let next = pw
                .last()
                .unwrap()
                .mul_truncated(&self.umap[j], self.max_degree)?;
            pw.push(next);
        }
        Ok(&pw[e - 1])
    }
}

impl fmt::Display for HomPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        for (i, (idx, c)) in self.terms().enumerate() {
            if i > 0 {
                f.write_str(if c < 0.0 { " - " } else { " + " })?;
            } else if c < 0.0 {
                f.write_str("-")?;
            }
            let prec = f.precision().unwrap_or(4);
            write!(f, "{:.*} {}", prec, c.abs(), idx)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::index::enumerate_basis;
    use proptest::prelude::*;

    fn idx(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    pub(crate) fn dense_random(nvars: usize, degree: usize, coeffs: &[f64]) -> HomPoly {
        HomPoly::from_terms(
            nvars,
            degree,
            enumerate_basis(nvars, degree).into_iter().zip(coeffs.iter().copied()),
        )
        .unwrap()
    }

    #[test]
    fn product_of_coordinates() {
        let x1 = HomPoly::linear(&[1.0, 0.0]);
        let x2 = HomPoly::linear(&[0.0, 1.0]);
        let p = x1.multiply(&x2).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.coeff(&idx(&[1, 1])), 1.0);
    }

    #[test]
    fn difference_of_squares() {
        let a = HomPoly::linear(&[1.0, 1.0]);
        let b = HomPoly::linear(&[1.0, -1.0]);
        let p = a.multiply(&b).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.coeff(&idx(&[2, 0])), 1.0);
        assert_eq!(p.coeff(&idx(&[0, 2])), -1.0);
        assert_eq!(p.coeff(&idx(&[1, 1])), 0.0);
    }

    #[test]
    fn multiply_rejects_mismatched_variables() {
        let a = HomPoly::linear(&[1.0, 1.0]);
        let b = HomPoly::linear(&[1.0, 1.0, 1.0]);
        assert!(matches!(a.multiply(&b), Err(Error::Dimension(_))));
    }

    #[test]
    fn partial_examples() {
        let p = HomPoly::monomial(idx(&[2, 1]), 1.0);
        let d = p.partial(0);
        assert_eq!(d.degree(), 2);
        assert_eq!(d.len(), 1);
        assert_eq!(d.coeff(&idx(&[1, 1])), 2.0);

        let q = HomPoly::monomial(idx(&[0, 3]), 1.0);
        assert!(q.partial(0).is_zero());
        assert_eq!(q.partial(0).degree(), 2);
    }

    #[test]
    fn partial_of_constant_is_degree_zero_zero() {
        let c = HomPoly::monomial(MultiIndex::zero(2), 3.0);
        let d = c.partial(1);
        assert!(d.is_zero());
        assert_eq!(d.degree(), 0);
    }

    #[test]
    fn hessian_form_euler_identity() {
        let p = HomPoly::monomial(idx(&[2, 1]), 1.0);
        let eye = DMatrix::identity(2, 2);
        let h = p.hessian_form(&eye, &eye).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h.coeff(&idx(&[2, 1])) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn hessian_form_with_zero_matrix() {
        let p = HomPoly::monomial(idx(&[1, 2]), 2.5);
        let z = DMatrix::zeros(2, 2);
        assert!(p.hessian_form(&z, &DMatrix::identity(2, 2)).unwrap().is_zero());
    }

    #[test]
    fn hessian_form_below_degree_two_is_zero() {
        let p = HomPoly::linear(&[1.0, 2.0]);
        let eye = DMatrix::identity(2, 2);
        assert!(p.hessian_form(&eye, &eye).unwrap().is_zero());
    }

    #[test]
    fn evaluate_examples() {
        let p = HomPoly::monomial(idx(&[2, 0]), 1.0);
        assert_eq!(p.evaluate(&[2.0, 0.0]), 4.0);
        assert_eq!(HomPoly::zero(3, 4).evaluate(&[1.0, 2.0, 3.0]), 0.0);
    }

    #[test]
    fn normalize_prunes_relative_tiny_terms() {
        let mut p = HomPoly::from_terms(
            2,
            2,
            vec![(idx(&[2, 0]), 1.0), (idx(&[1, 1]), 1e-16), (idx(&[0, 2]), 1e-13)],
        )
        .unwrap();
        p.normalize();
        assert_eq!(p.len(), 2);
        assert_eq!(p.coeff(&idx(&[1, 1])), 0.0);
    }

    #[test]
    fn add_term_cancellation_removes_entry() {
        let mut p = HomPoly::monomial(idx(&[1, 1]), 2.0);
        p.add_term(idx(&[1, 1]), -2.0);
        assert!(p.is_zero());
    }

    #[test]
    fn from_terms_validates_degree() {
        let r = HomPoly::from_terms(2, 2, vec![(idx(&[3, 0]), 1.0)]);
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn dense_round_trip() {
        let basis = Basis::new(3, 3);
        let coeffs: Vec<f64> = (0..basis.len()).map(|i| i as f64 - 4.5).collect();
        let p = dense_random(3, 3, &coeffs);
        let v = p.to_dense(&basis);
        assert_eq!(HomPoly::from_dense(&basis, &v), p);
    }

    #[test]
    fn quadratic_form_matches_evaluation() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let p = HomPoly::quadratic_form(&a);
        let x = [0.3, -1.2];
        let direct = 0.3 * 0.3 + (2.0 + 3.0) * 0.3 * -1.2 + 4.0 * 1.44;
        assert!((p.evaluate(&x) - direct).abs() < 1e-14);
    }

    #[test]
    fn substitute_square_of_gain() {
        // p = u1^2 over (x1, x2, u1), u1 = x1 + x2
        let p = HomPoly::monomial(idx(&[0, 0, 2]), 1.0);
        let umap = vec![PolySeries::from_hom(HomPoly::linear(&[1.0, 1.0]))];
        let s = p.substitute(&umap, 6).unwrap();
        assert_eq!(s.max_degree(), Some(2));
        let q = s.part(2);
        assert_eq!(q.coeff(&idx(&[2, 0])), 1.0);
        assert_eq!(q.coeff(&idx(&[1, 1])), 2.0);
        assert_eq!(q.coeff(&idx(&[0, 2])), 1.0);
    }

    #[test]
    fn substitute_grades_by_construction() {
        // p = x1 u1, u1 = k1(x) + k2(x)
        let p = HomPoly::monomial(idx(&[1, 0, 1]), 1.0);
        let mut kappa = PolySeries::from_hom(HomPoly::linear(&[2.0, -1.0]));
        kappa
            .add_hom(&HomPoly::monomial(idx(&[1, 1]), 0.5))
            .unwrap();
        let s = p.substitute(&[kappa], 6).unwrap();
        assert_eq!(s.min_degree(), Some(2));
        assert_eq!(s.max_degree(), Some(3));
        assert_eq!(s.part(2).coeff(&idx(&[2, 0])), 2.0);
        assert_eq!(s.part(2).coeff(&idx(&[1, 1])), -1.0);
        assert_eq!(s.part(3).coeff(&idx(&[2, 1])), 0.5);
    }

    #[test]
    fn substitute_truncates_at_cap() {
        let p = HomPoly::monomial(idx(&[0, 3]), 1.0);
        let mut kappa = PolySeries::from_hom(HomPoly::linear(&[1.0]));
        kappa.add_hom(&HomPoly::monomial(idx(&[2]), 1.0)).unwrap();
        // (x + x^2)^3 = x^3 + 3x^4 + 3x^5 + x^6, truncated at 4
        let s = p.substitute(&[kappa], 4).unwrap();
        assert_eq!(s.max_degree(), Some(4));
        assert_eq!(s.part(4).coeff(&idx(&[4])), 3.0);
    }

    #[test]
    fn substitute_rejects_bad_dimensions() {
        let p = HomPoly::monomial(idx(&[1, 1]), 1.0);
        let umap = vec![
            PolySeries::from_hom(HomPoly::linear(&[1.0])),
            PolySeries::from_hom(HomPoly::linear(&[1.0])),
        ];
        assert!(matches!(p.substitute(&umap, 4), Err(Error::Dimension(_))));
    }

    fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0..2.0f64, n)
    }

    proptest! {
        #[test]
        fn multiply_is_graded_and_pointwise(
            a in prop::collection::vec(-1.0..1.0f64, 6),
            b in prop::collection::vec(-1.0..1.0f64, 10),
            pts in prop::collection::vec(point(3), 20),
        ) {
            let p = dense_random(3, 2, &a);
            let q = dense_random(3, 3, &b);
            let pq = p.multiply(&q).unwrap();
            prop_assert_eq!(pq.degree(), 5);
            for x in &pts {
                let lhs = pq.evaluate(x);
                let rhs = p.evaluate(x) * q.evaluate(x);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn homogeneity(
            c in prop::collection::vec(-1.0..1.0f64, 10),
            x in point(3),
            t in 0.1..3.0f64,
        ) {
            let p = dense_random(3, 3, &c);
            let tx: Vec<f64> = x.iter().map(|v| t * v).collect();
            let lhs = p.evaluate(&tx);
            let rhs = t.powi(3) * p.evaluate(&x);
            let scale = t.powi(3) * p.terms().map(|(i, c)| c.abs() * i.evaluate(&x).abs()).sum::<f64>();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn euler_identity(c in prop::collection::vec(-1.0..1.0f64, 15)) {
            let p = dense_random(3, 4, &c);
            let mut acc = HomPoly::zero(3, 4);
            for j in 0..3 {
                let xj = HomPoly::monomial(MultiIndex::unit(3, j), 1.0);
                acc.add_scaled(&p.partial(j).multiply(&xj).unwrap(), 1.0).unwrap();
            }
            for (i, v) in p.terms() {
                prop_assert!((acc.coeff(i) - 4.0 * v).abs() <= 1e-12);
            }
            prop_assert_eq!(acc.len(), p.len());
        }

        #[test]
        fn partials_match_central_differences(
            c in prop::collection::vec(-1.0..1.0f64, 15),
            pts in prop::collection::vec(point(3), 10),
        ) {
            let p = dense_random(3, 4, &c);
            let h = 1e-5;
            for x in &pts {
                for j in 0..3 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (p.evaluate(&xp) - p.evaluate(&xm)) / (2.0 * h);
                    let exact = p.partial(j).evaluate(x);
                    // relative to the gradient scale at x
                    let scale = (0..3).map(|k| p.partial(k).evaluate(x).abs()).fold(1e-3, f64::max);
                    prop_assert!((fd - exact).abs() <= 1e-6 * scale, "fd {} exact {}", fd, exact);
                }
            }
        }

        #[test]
        fn hessian_form_matches_numeric_hessian(
            c in prop::collection::vec(-1.0..1.0f64, 10),
            a in prop::collection::vec(-1.0..1.0f64, 9),
            b in prop::collection::vec(-1.0..1.0f64, 9),
            pts in prop::collection::vec(point(3), 10),
        ) {
            let p = dense_random(3, 3, &c);
            let am = DMatrix::from_row_slice(3, 3, &a);
            let bm = DMatrix::from_row_slice(3, 3, &b);
            let hf = p.hessian_form(&am, &bm).unwrap();
            let h = 1e-4;
            for x in &pts {
                // central second differences of p
                let mut hess = DMatrix::zeros(3, 3);
                for i in 0..3 {
                    for j in 0..3 {
                        let eval = |si: f64, sj: f64| {
                            let mut y = x.clone();
                            y[i] += si * h;
                            y[j] += sj * h;
                            p.evaluate(&y)
                        };
                        hess[(i, j)] = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
                    }
                }
                let xv = DVector::from_column_slice(x);
                let numeric = (&am * &xv).dot(&(&hess * (&bm * &xv)));
                let exact = hf.evaluate(x);
                let scale = 1.0 + numeric.abs();
                prop_assert!((numeric - exact).abs() <= 1e-6 * scale, "numeric {} exact {}", numeric, exact);
            }
        }

        #[test]
        fn substitution_commutes_with_evaluation(
            c in prop::collection::vec(-1.0..1.0f64, 20),
            k in prop::collection::vec(-1.0..1.0f64, 6),
            pts in prop::collection::vec(point(2), 20),
        ) {
            // p of degree 3 over (x1, x2, u1, u2); u = K x
            let p = dense_random(4, 3, &c);
            let umap: Vec<PolySeries> = (0..2)
                .map(|i| PolySeries::from_hom(HomPoly::linear(&k[2 * i..2 * i + 2])))
                .collect();
            let s = p.substitute(&umap, 3).unwrap();
            prop_assert!(s.min_degree().is_none_or(|d| d == 3));
            for x in &pts {
                let u: Vec<f64> = umap.iter().map(|m| m.evaluate(x)).collect();
                let xu = [x[0], x[1], u[0], u[1]];
                let rhs = p.evaluate(&xu);
                let lhs = s.evaluate(x);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            }
        }
    }
}
