use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

/// Exponent vector of a monomial `x_1^{e_1} ... x_n^{e_n}`.
///
/// Ordering is graded lexicographic: lower total degree first, then within a
/// degree the monomial with the larger leading exponent comes first, so the
/// degree-3 monomials in two variables sort as `x1^3, x1^2 x2, x1 x2^2, x2^3`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exps: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        Self { exps }
    }

    pub fn zero(nvars: usize) -> Self {
        Self {
            exps: vec![0; nvars],
        }
    }

    /// The monomial `x_j`.
    pub fn unit(nvars: usize, j: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[j] = 1;
        Self { exps }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn degree(&self) -> usize {
        self.exps.iter().map(|&e| e as usize).sum()
    }

    pub fn get(&self, j: usize) -> u32 {
        self.exps[j]
    }

    /// Exponent-wise sum (monomial product).
    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.nvars(), other.nvars());
        MultiIndex {
            exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect(),
        }
    }

    /// `x^I / x_j`, or `None` when `I_j == 0`.
    pub fn lower(&self, j: usize) -> Option<MultiIndex> {
        if self.exps[j] == 0 {
            return None;
        }
        let mut exps = self.exps.clone();
        exps[j] -= 1;
        Some(MultiIndex { exps })
    }

    pub fn raise(&self, j: usize) -> MultiIndex {
        let mut exps = self.exps.clone();
        exps[j] += 1;
        MultiIndex { exps }
    }

    /// Splits an index over `(x, u)` into its `x` block (first `n` entries) and `u` block.
    pub fn split_at(&self, n: usize) -> (MultiIndex, MultiIndex) {
        let (a, b) = self.exps.split_at(n);
        (MultiIndex::new(a.to_vec()), MultiIndex::new(b.to_vec()))
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.exps
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&e, &xi)| acc * xi.powi(e as i32))
    }

    /// Multinomial coefficient `degree! / prod(e_j!)`.
    pub fn multinomial(&self) -> f64 {
        let mut out = 1.0;
        let mut running = 0u32;
        for &e in &self.exps {
            for k in 1..=e {
                running += 1;
                out *= running as f64 / k as f64;
            }
        }
        out
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (j, &e) in self.exps.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_str(" ")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", j + 1)?;
            } else {
                write!(f, "x{}^{}", j + 1, e)?;
            }
        }
        if first {
            f.write_str("1")?;
        }
        Ok(())
    }
}

/// All multi-indices of total degree `degree` in `nvars` variables, graded-lex ordered.
///
/// The length is `C(nvars + degree - 1, degree)`.
pub fn enumerate_basis(nvars: usize, degree: usize) -> Vec<MultiIndex> {
    assert!(nvars >= 1, "enumerate_basis needs at least one variable");
    let mut out = Vec::with_capacity(basis_len(nvars, degree));
    let mut current = vec![0u32; nvars];
    fill(&mut out, &mut current, 0, degree as u32);
    out
}

fn fill(out: &mut Vec<MultiIndex>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex::new(current.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        fill(out, current, pos + 1, remaining - e);
    }
    current[pos] = 0;
}

/// `C(nvars + degree - 1, degree)`.
pub fn basis_len(nvars: usize, degree: usize) -> usize {
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for k in 1..=degree as u128 {
        num *= nvars as u128 - 1 + k;
        den *= k;
    }
    (num / den) as usize
}

/// A graded-lex basis of one homogeneous degree with reverse lookup.
#[derive(Clone, Debug)]
pub struct Basis {
    nvars: usize,
    degree: usize,
    indices: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
}

impl Basis {
    pub fn new(nvars: usize, degree: usize) -> Self {
        let indices = enumerate_basis(nvars, degree);
        let lookup = indices
            .iter()
            .enumerate()
            .map(|(i, idx)| (idx.clone(), i))
            .collect();
        Self {
            nvars,
            degree,
            indices,
            lookup,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn position(&self, idx: &MultiIndex) -> Option<usize> {
        self.lookup.get(idx).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(e: &[u32]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    #[test]
    fn linear_monomials_in_two_vars() {
        assert_eq!(enumerate_basis(2, 1), vec![idx(&[1, 0]), idx(&[0, 1])]);
    }

    #[test]
    fn cubic_monomials_in_two_vars() {
        let b = enumerate_basis(2, 3);
        assert_eq!(
            b,
            vec![idx(&[3, 0]), idx(&[2, 1]), idx(&[1, 2]), idx(&[0, 3])]
        );
    }

    #[test]
    fn quartic_count_in_three_vars_matches_brute_force() {
        let mut brute = 0;
        for a in 0..=4 {
            for b in 0..=4 {
                for c in 0..=4 {
                    if a + b + c == 4 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(brute, 15);
        assert_eq!(enumerate_basis(3, 4).len(), brute);
        assert_eq!(basis_len(3, 4), brute);
    }

    #[test]
    fn degree_zero_is_the_constant() {
        assert_eq!(enumerate_basis(3, 0), vec![MultiIndex::zero(3)]);
    }

    #[test]
    fn enumeration_is_sorted_and_distinct() {
        for n in 1..5 {
            for d in 0..6 {
                let b = enumerate_basis(n, d);
                assert_eq!(b.len(), basis_len(n, d));
                assert!(b.windows(2).all(|w| w[0] < w[1]));
                assert!(b.iter().all(|i| i.degree() == d && i.nvars() == n));
            }
        }
    }

    #[test]
    fn graded_before_lex() {
        assert!(idx(&[0, 2]) < idx(&[3, 0]));
        assert!(idx(&[2, 0]) < idx(&[1, 1]));
    }

    #[test]
    fn multinomial_values() {
        assert_eq!(idx(&[2, 1]).multinomial(), 3.0);
        assert_eq!(idx(&[1, 1, 1]).multinomial(), 6.0);
        assert_eq!(idx(&[4, 0]).multinomial(), 1.0);
    }

    #[test]
    fn display() {
        assert_eq!(idx(&[2, 1]).to_string(), "x1^2 x2");
        assert_eq!(idx(&[0, 0]).to_string(), "1");
    }
}
