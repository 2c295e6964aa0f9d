//! Dense multivariate polynomial arithmetic over a graded-lexicographic
//! monomial order, plus the Putinar constraint assembly feeding the conic
//! solver.

pub mod putinar;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moments::MomentSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("operands have mismatched variable counts ({0} vs {1})")]
    ArityMismatch(usize, usize),
    #[error("monomial {0:?} has per-variable degree above the fixed moment order {1}")]
    DegreeExceedsMoments(Vec<u32>, usize),
}

/// Exponent vector of one monomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(nvars: usize) -> Self {
        Self(vec![0; nvars])
    }

    pub fn unit(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        Self(e)
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

/// Graded lexicographic: lower total degree first, then lexicographic on
/// the exponents.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.total_degree()
            .cmp(&other.total_degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// All exponent vectors in `n` variables with total degree at most `d`,
/// in graded-lex order.
pub fn monomial_basis(nvars: usize, degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut current = vec![0u32; nvars];
    fn rec(i: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if i == current.len() {
            out.push(MultiIndex(current.clone()));
            return;
        }
        for e in 0..=remaining {
            current[i] = e;
            rec(i + 1, remaining - e, current, out);
            current[i] = 0;
        }
    }
    rec(0, degree, &mut current, &mut out);
    out.sort();
    out
}

/// Multivariate polynomial with floating coefficients; zero coefficients
/// are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub nvars: usize,
    pub terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.set(MultiIndex::zero(nvars), c);
        p
    }

    /// The variable `x_var`.
    pub fn var(nvars: usize, var: usize) -> Self {
        let mut p = Self::zero(nvars);
        p.set(MultiIndex::unit(nvars, var), 1.0);
        p
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Self {
        let mut p = Self::zero(nvars);
        for (m, c) in terms {
            p.add_term(&m, c);
        }
        p
    }

    pub fn set(&mut self, m: MultiIndex, c: f64) {
        if c == 0.0 {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, c);
        }
    }

    pub fn coeff(&self, m: &MultiIndex) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn add_term(&mut self, m: &MultiIndex, c: f64) {
        let v = self.coeff(m) + c;
        self.set(m.clone(), v);
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(MultiIndex::total_degree).max().unwrap_or(0)
    }

    pub fn add(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_arity(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m, *c);
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(self.nvars, self.terms.iter().map(|(m, c)| (m.clone(), c * s)))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Result<Self, PolyError> {
        self.check_arity(other)?;
        let mut out = Self::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(&ma.add(mb), ca * cb);
            }
        }
        Ok(out)
    }

    /// Direct term-by-term evaluation.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// Substitute `x_i -> scale_i * y_i + offset_i` by binomial expansion.
    pub fn compose_affine(&self, scales: &[f64], offsets: &[f64]) -> Self {
        let mut out = Self::zero(self.nvars);
        for (m, c) in &self.terms {
            // Expand prod_i (scale_i y_i + offset_i)^{e_i}.
            let mut partial = Polynomial::constant(self.nvars, *c);
            for (i, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut factor = Polynomial::zero(self.nvars);
                factor.set(MultiIndex::zero(self.nvars), offsets[i]);
                factor.add_term(&MultiIndex::unit(self.nvars, i), scales[i]);
                for _ in 0..e {
                    partial = partial.mul(&factor).expect("same arity");
                }
            }
            for (pm, pc) in partial.terms {
                out.add_term(&pm, pc);
            }
        }
        out
    }

    fn check_arity(&self, other: &Self) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::ArityMismatch(self.nvars, other.nvars));
        }
        Ok(())
    }
}

/// `{x : h_j(x) >= 0 for all j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemialgebraicSet {
    pub inequalities: Vec<Polynomial>,
}

impl SemialgebraicSet {
    pub fn new(inequalities: Vec<Polynomial>) -> Self {
        assert!(!inequalities.is_empty(), "set needs at least one inequality");
        Self { inequalities }
    }

    /// A box `prod [lo_i, hi_i]` as per-coordinate inequality pairs
    /// `x_i - lo_i >= 0`, `hi_i - x_i >= 0`.
    pub fn boxed(bounds: &[(f64, f64)]) -> Self {
        let n = bounds.len();
        let mut ineqs = Vec::with_capacity(2 * n);
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            let xi = Polynomial::var(n, i);
            ineqs.push(xi.sub(&Polynomial::constant(n, lo)).unwrap());
            ineqs.push(Polynomial::constant(n, hi).sub(&xi).unwrap());
        }
        Self::new(ineqs)
    }

    /// The box intersected with the tail halfspace `sum x_i >= threshold`.
    pub fn tail_over_box(bounds: &[(f64, f64)], threshold: f64) -> Self {
        let n = bounds.len();
        let mut set = Self::boxed(bounds);
        let mut tail = Polynomial::constant(n, -threshold);
        for i in 0..n {
            tail.add_term(&MultiIndex::unit(n, i), 1.0);
        }
        set.inequalities.insert(0, tail);
        set
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.inequalities.iter().all(|h| h.eval(x) >= -tol)
    }
}

/// Expectation of `p` under independent variables with the spec's raw
/// moments: `sum_kappa p_kappa prod_i mu_i^(kappa_i)`, with `mu^(0) = 1`.
///
/// Every per-variable degree must be covered by a fixed moment order.
pub fn independent_expectation(p: &Polynomial, spec: &MomentSpec) -> Result<f64, PolyError> {
    let order = spec.order();
    let mut total = 0.0;
    for (m, c) in &p.terms {
        let mut price = *c;
        for (i, &e) in m.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if e as usize > order {
                return Err(PolyError::DegreeExceedsMoments(m.0.clone(), order));
            }
            price *= spec.moments[i][e as usize - 1];
        }
        total += price;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::SupportInterval;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn x(i: usize) -> Polynomial {
        Polynomial::var(2, i)
    }

    #[test]
    fn difference_of_squares() {
        let sum = x(0).add(&x(1)).unwrap();
        let diff = x(0).sub(&x(1)).unwrap();
        let prod = sum.mul(&diff).unwrap();
        let mut expected = Polynomial::zero(2);
        expected.set(MultiIndex(vec![2, 0]), 1.0);
        expected.set(MultiIndex(vec![0, 2]), -1.0);
        assert_eq!(prod, expected);
    }

    #[test]
    fn eval_monomial() {
        let p = Polynomial::from_terms(2, [(MultiIndex(vec![2, 1]), 1.0)]);
        assert_abs_diff_eq!(p.eval(&[2.0, 3.0]), 12.0);
    }

    #[test]
    fn compose_affine_square() {
        // x^2 under x -> 2y - 1 becomes 4y^2 - 4y + 1.
        let p = Polynomial::from_terms(1, [(MultiIndex(vec![2]), 1.0)]);
        let q = p.compose_affine(&[2.0], &[-1.0]);
        assert_abs_diff_eq!(q.coeff(&MultiIndex(vec![2])), 4.0);
        assert_abs_diff_eq!(q.coeff(&MultiIndex(vec![1])), -4.0);
        assert_abs_diff_eq!(q.coeff(&MultiIndex(vec![0])), 1.0);
    }

    #[test]
    fn graded_lex_order_is_deterministic() {
        let basis = monomial_basis(2, 2);
        let degrees: Vec<u32> = basis.iter().map(MultiIndex::total_degree).collect();
        assert!(degrees.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(basis.len(), 6);
        assert_eq!(basis[0], MultiIndex(vec![0, 0]));
    }

    #[test]
    fn expectation_factorizes() {
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![0.3]);
        let p = x(0).mul(&x(1)).unwrap();
        assert_abs_diff_eq!(independent_expectation(&p, &spec).unwrap(), 0.09);
    }

    #[test]
    fn expectation_uses_second_moments() {
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![0.3, 0.1]);
        let p = Polynomial::from_terms(2, [(MultiIndex(vec![2, 2]), 1.0)]);
        assert_abs_diff_eq!(independent_expectation(&p, &spec).unwrap(), 0.01);
    }

    #[test]
    fn expectation_rejects_uncovered_degree() {
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![0.3, 0.1]);
        let p = Polynomial::from_terms(2, [(MultiIndex(vec![3, 0]), 1.0)]);
        assert!(matches!(
            independent_expectation(&p, &spec),
            Err(PolyError::DegreeExceedsMoments(_, 2))
        ));
    }

    #[test]
    fn expectation_matches_monte_carlo_style_enumeration() {
        // Exact expectation under a two-atom product distribution matching
        // the moments agrees with the moment pricing.
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![0.3, 0.3]);
        let d = crate::moments::DiscreteDistribution::new(vec![(0.0, 0.7), (1.0, 0.3)]).unwrap();
        let prod = crate::moments::ProductDistribution::new(vec![d.clone(), d]).unwrap();
        let p = Polynomial::from_terms(
            2,
            [
                (MultiIndex(vec![0, 0]), 0.5),
                (MultiIndex(vec![1, 1]), 2.0),
                (MultiIndex(vec![2, 0]), -1.0),
            ],
        );
        let exact = prod.exact_expectation(|x| p.eval(x));
        assert_abs_diff_eq!(independent_expectation(&p, &spec).unwrap(), exact, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn mul_is_eval_homomorphic(
            ca in proptest::collection::vec(-3.0f64..3.0, 6),
            cb in proptest::collection::vec(-3.0f64..3.0, 6),
            px in -2.0f64..2.0,
            py in -2.0f64..2.0,
        ) {
            let basis = monomial_basis(2, 2);
            let a = Polynomial::from_terms(2, basis.iter().cloned().zip(ca.iter().copied()));
            let b = Polynomial::from_terms(2, basis.iter().cloned().zip(cb.iter().copied()));
            let prod = a.mul(&b).unwrap();
            let lhs = prod.eval(&[px, py]);
            let rhs = a.eval(&[px, py]) * b.eval(&[px, py]);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn compose_affine_is_eval_consistent(
            c in proptest::collection::vec(-3.0f64..3.0, 6),
            s in 0.1f64..2.0,
            o in -1.0f64..1.0,
            y in -1.5f64..1.5,
        ) {
            let basis = monomial_basis(2, 2);
            let p = Polynomial::from_terms(2, basis.iter().cloned().zip(c.iter().copied()));
            let q = p.compose_affine(&[s, s], &[o, o]);
            let lhs = q.eval(&[y, y]);
            let rhs = p.eval(&[s * y + o, s * y + o]);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs().max(rhs.abs())));
        }
    }
}
