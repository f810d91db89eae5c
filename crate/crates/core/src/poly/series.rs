use std::collections::BTreeMap;

use super::hom::{HomPoly, PowerCache};
use crate::error::{Error, Result};

/// A truncated power series: homogeneous parts keyed by degree.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySeries {
    nvars: usize,
    terms: BTreeMap<usize, HomPoly>,
}

/// Vector-valued series, one entry per component.
pub type VecSeries = Vec<PolySeries>;

impl PolySeries {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_hom(p: HomPoly) -> Self {
        let mut s = Self::zero(p.nvars());
        if !p.is_zero() {
            s.terms.insert(p.degree(), p);
        }
        s
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn min_degree(&self) -> Option<usize> {
        self.terms.keys().next().copied()
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }

    /// Nonzero homogeneous parts in ascending degree.
    pub fn parts(&self) -> impl Iterator<Item = &HomPoly> {
        self.terms.values()
    }

    pub fn get(&self, degree: usize) -> Option<&HomPoly> {
        self.terms.get(&degree)
    }

    /// The degree-`degree` part, zero if absent.
    pub fn part(&self, degree: usize) -> HomPoly {
        self.terms
            .get(&degree)
            .cloned()
            .unwrap_or_else(|| HomPoly::zero(self.nvars, degree))
    }

    pub fn add_hom(&mut self, p: &HomPoly) -> Result<()> {
        if p.nvars() != self.nvars {
            return Err(Error::Dimension(format!(
                "cannot add polynomial in {} variables to series in {}",
                p.nvars(),
                self.nvars
            )));
        }
        if p.is_zero() {
            return Ok(());
        }
        let d = p.degree();
        match self.terms.get_mut(&d) {
            Some(existing) => {
                existing.add_scaled(p, 1.0)?;
                if existing.is_zero() {
                    self.terms.remove(&d);
                }
            }
            None => {
                self.terms.insert(d, p.clone());
            }
        }
        Ok(())
    }

    /// Replaces the degree-`p.degree()` part.
    pub fn set_part(&mut self, p: HomPoly) -> Result<()> {
        if p.nvars() != self.nvars {
            return Err(Error::Dimension(format!(
                "cannot store polynomial in {} variables in series in {}",
                p.nvars(),
                self.nvars
            )));
        }
        let d = p.degree();
        if p.is_zero() {
            self.terms.remove(&d);
        } else {
            self.terms.insert(d, p);
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &PolySeries) -> Result<()> {
        self.add_scaled(other, 1.0)
    }

    pub fn add_scaled(&mut self, other: &PolySeries, c: f64) -> Result<()> {
        if other.nvars != self.nvars {
            return Err(Error::Dimension(format!(
                "cannot add series in {} variables to series in {}",
                other.nvars, self.nvars
            )));
        }
        for p in other.parts() {
            self.add_hom(&p.scaled(c))?;
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> PolySeries {
        let mut out = PolySeries::zero(self.nvars);
        for p in self.parts() {
            let q = p.scaled(c);
            if !q.is_zero() {
                out.terms.insert(q.degree(), q);
            }
        }
        out
    }

    /// Drops all parts above `max_degree`.
    pub fn truncated(&self, max_degree: usize) -> PolySeries {
        PolySeries {
            nvars: self.nvars,
            terms: self
                .terms
                .range(..=max_degree)
                .map(|(&d, p)| (d, p.clone()))
                .collect(),
        }
    }

    /// Product truncated at `max_degree`.
    pub fn mul_truncated(&self, other: &PolySeries, max_degree: usize) -> Result<PolySeries> {
        if other.nvars != self.nvars {
            return Err(Error::Dimension(format!(
                "cannot multiply series in {} and {} variables",
                self.nvars, other.nvars
            )));
        }
        let mut out = PolySeries::zero(self.nvars);
        for a in self.parts() {
            for b in other.parts() {
                if a.degree() + b.degree() > max_degree {
                    continue;
                }
                out.add_hom(&a.multiply(b)?)?;
            }
        }
        Ok(out)
    }

    pub fn partial(&self, j: usize) -> PolySeries {
        let mut out = PolySeries::zero(self.nvars);
        for p in self.parts() {
            let q = p.partial(j);
            if !q.is_zero() {
                out.terms.insert(q.degree(), q);
            }
        }
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "point has wrong dimension");
        self.parts().map(|p| p.evaluate(x)).sum()
    }

    /// Substitutes `u := umap(x)` in a series over `(x, u)`; see [`HomPoly::substitute`].
    pub fn substitute(&self, umap: &[PolySeries], max_degree: usize) -> Result<PolySeries> {
        if self.nvars < umap.len() {
            return Err(Error::Dimension(format!(
                "series has {} variables but u has {} components",
                self.nvars,
                umap.len()
            )));
        }
        let mut cache = PowerCache::new(umap, self.nvars - umap.len(), max_degree)?;
        let mut out = PolySeries::zero(self.nvars - umap.len());
        for p in self.parts() {
            out.add_assign(&p.substitute_cached(&mut cache)?)?;
        }
        Ok(out)
    }

    /// Substitutes the same `umap` into several series, sharing the cached powers.
    pub fn substitute_all(
        series: &[&PolySeries],
        umap: &[PolySeries],
        max_degree: usize,
    ) -> Result<Vec<PolySeries>> {
        let Some(first) = series.first() else {
            return Ok(Vec::new());
        };
        if first.nvars < umap.len() {
            return Err(Error::Dimension(format!(
                "series has {} variables but u has {} components",
                first.nvars,
                umap.len()
            )));
        }
        let n = first.nvars - umap.len();
        let mut cache = PowerCache::new(umap, n, max_degree)?;
        series
            .iter()
            .map(|s| {
                let mut out = PolySeries::zero(n);
                for p in s.parts() {
                    out.add_assign(&p.substitute_cached(&mut cache)?)?;
                }
                Ok(out)
            })
            .collect()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.parts().fold(0.0, |m, p| m.max(p.max_abs_coeff()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::index::MultiIndex;

    fn x(n: usize, j: usize) -> HomPoly {
        HomPoly::monomial(MultiIndex::unit(n, j), 1.0)
    }

    #[test]
    fn degrees_track_contents() {
        let mut s = PolySeries::zero(2);
        assert_eq!(s.min_degree(), None);
        s.add_hom(&x(2, 0)).unwrap();
        s.add_hom(&x(2, 0).multiply(&x(2, 1)).unwrap()).unwrap();
        assert_eq!(s.min_degree(), Some(1));
        assert_eq!(s.max_degree(), Some(2));
        s.add_hom(&x(2, 0).scaled(-1.0)).unwrap();
        assert_eq!(s.min_degree(), Some(2));
    }

    #[test]
    fn truncated_product() {
        // (x + x^2)(x + x^2) = x^2 + 2x^3 + x^4
        let mut s = PolySeries::from_hom(x(1, 0));
        s.add_hom(&x(1, 0).multiply(&x(1, 0)).unwrap()).unwrap();
        let sq = s.mul_truncated(&s, 3).unwrap();
        assert_eq!(sq.max_degree(), Some(3));
        assert_eq!(sq.part(3).coeff(&MultiIndex::new(vec![3])), 2.0);
    }

    #[test]
    fn series_substitution_matches_pointwise() {
        // s(x, u) = x u + u^2 with u = x + x^2 (single state)
        let mut s = PolySeries::zero(2);
        s.add_hom(&HomPoly::monomial(MultiIndex::new(vec![1, 1]), 1.0))
            .unwrap();
        s.add_hom(&HomPoly::monomial(MultiIndex::new(vec![0, 2]), 1.0))
            .unwrap();
        let mut u = PolySeries::from_hom(x(1, 0));
        u.add_hom(&x(1, 0).multiply(&x(1, 0)).unwrap()).unwrap();
        let out = s.substitute(&[u.clone()], 10).unwrap();
        for &t in &[0.1, -0.7, 1.3] {
            let uv = u.evaluate(&[t]);
            let direct = t * uv + uv * uv;
            assert!((out.evaluate(&[t]) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_variables_rejected() {
        let a = PolySeries::from_hom(x(2, 0));
        let b = PolySeries::from_hom(x(3, 0));
        assert!(a.mul_truncated(&b, 4).is_err());
        let mut c = a.clone();
        assert!(c.add_assign(&b).is_err());
    }
}
