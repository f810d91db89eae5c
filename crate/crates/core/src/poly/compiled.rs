use std::collections::HashMap;

use super::index::MultiIndex;
use super::series::PolySeries;

/// Flattened evaluator for several series over the same variables.
///
/// Distinct monomials are evaluated once per call and shared by all outputs,
/// which matters in the Monte Carlo inner loop.
#[derive(Clone, Debug)]
pub struct CompiledMap {
    nvars: usize,
    stride: usize,
    // per monomial: range into `factors`
    mono_ranges: Vec<(u32, u32)>,
    // offsets into the power table: var * stride + exponent
    factors: Vec<u32>,
    // per output: range into `terms`
    out_ranges: Vec<(u32, u32)>,
    terms: Vec<(u32, f64)>,
}

impl CompiledMap {
    pub fn new(nvars: usize, outputs: &[&PolySeries]) -> Self {
        let mut index: HashMap<MultiIndex, u32> = HashMap::new();
        let mut monos: Vec<MultiIndex> = Vec::new();
        let mut out_ranges = Vec::with_capacity(outputs.len());
        let mut terms = Vec::new();
        for s in outputs {
            assert_eq!(s.nvars(), nvars, "output series has wrong number of variables");
            let start = terms.len() as u32;
            for p in s.parts() {
                for (idx, c) in p.terms() {
                    let id = *index.entry(idx.clone()).or_insert_with(|| {
                        monos.push(idx.clone());
                        (monos.len() - 1) as u32
                    });
                    terms.push((id, c));
                }
            }
            out_ranges.push((start, terms.len() as u32));
        }
        let max_exp = monos
            .iter()
            .flat_map(|m| m.exponents().iter().copied())
            .max()
            .unwrap_or(0) as usize;
        let stride = max_exp + 1;
        let mut factors = Vec::new();
        let mut mono_ranges = Vec::with_capacity(monos.len());
        for m in &monos {
            let start = factors.len() as u32;
            for (v, &e) in m.exponents().iter().enumerate() {
                if e > 0 {
                    factors.push((v * stride + e as usize) as u32);
                }
            }
            mono_ranges.push((start, factors.len() as u32));
        }
        Self {
            nvars,
            stride,
            mono_ranges,
            factors,
            out_ranges,
            terms,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn noutputs(&self) -> usize {
        self.out_ranges.len()
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            powers: vec![1.0; self.nvars * self.stride],
            monos: vec![0.0; self.mono_ranges.len()],
        }
    }

    /// Writes every output evaluated at `x` into `out`.
    pub fn eval(&self, x: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nvars);
        debug_assert_eq!(out.len(), self.out_ranges.len());
        let s = self.stride;
        for (v, &xv) in x.iter().enumerate() {
            let row = &mut scratch.powers[v * s..(v + 1) * s];
            let mut acc = 1.0;
            row[0] = 1.0;
            for slot in row.iter_mut().skip(1) {
                acc *= xv;
                *slot = acc;
            }
        }
        for (val, &(a, b)) in scratch.monos.iter_mut().zip(&self.mono_ranges) {
            let mut prod = 1.0;
            for &f in &self.factors[a as usize..b as usize] {
                prod *= scratch.powers[f as usize];
            }
            *val = prod;
        }
        for (o, &(a, b)) in out.iter_mut().zip(&self.out_ranges) {
            let mut sum = 0.0;
            for &(m, c) in &self.terms[a as usize..b as usize] {
                sum += c * scratch.monos[m as usize];
            }
            *o = sum;
        }
    }
}

/// Reusable buffers for [`CompiledMap::eval`].
#[derive(Clone, Debug)]
pub struct Scratch {
    powers: Vec<f64>,
    monos: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::HomPoly;

    #[test]
    fn matches_series_evaluation() {
        let mut a = PolySeries::from_hom(HomPoly::linear(&[1.0, -2.0, 0.5]));
        a.add_hom(&HomPoly::monomial(MultiIndex::new(vec![1, 2, 0]), 3.0))
            .unwrap();
        let b = PolySeries::from_hom(HomPoly::monomial(MultiIndex::new(vec![0, 0, 4]), -1.5));
        let empty = PolySeries::zero(3);
        let map = CompiledMap::new(3, &[&a, &b, &empty]);
        let mut scratch = map.scratch();
        let mut out = [0.0; 3];
        let x = [0.4, -1.1, 2.0];
        map.eval(&x, &mut scratch, &mut out);
        assert!((out[0] - a.evaluate(&x)).abs() < 1e-14);
        assert!((out[1] - b.evaluate(&x)).abs() < 1e-14);
        assert_eq!(out[2], 0.0);
    }
}
