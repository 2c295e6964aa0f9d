//! Worst-case (extremal) distribution reconstruction and exact attainment
//! checks.
//!
//! The reconstructed distributions attain the *relaxed* objective `E[U]`
//! (the product-function or moment-generating value), not necessarily the
//! raw tail probability `E[F]`; reports always carry both so the two are
//! never conflated.

use serde::Serialize;
use thiserror::Error;

use crate::closed_form::{chernoff_univariate, exact_univariate};
use crate::moments::{DiscreteDistribution, MomentSpec, ProductDistribution};
use crate::variational::AffineWitness;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtremalError {
    #[error("argument out of domain: {0}")]
    Domain(String),
}

fn check(cond: bool, msg: &str) -> Result<(), ExtremalError> {
    if cond {
        Ok(())
    } else {
        Err(ExtremalError::Domain(msg.into()))
    }
}

/// Worst case of the exact univariate problem on `[0, 1]`:
/// mass `t/(mu+t)` at zero and `mu/(mu+t)` at the threshold `mu + t`.
pub fn extremal_exact_univariate(mu: f64, t: f64) -> Result<DiscreteDistribution, ExtremalError> {
    check(mu > 0.0 && mu < 1.0, "mean must lie in (0, 1)")?;
    check(t >= 0.0 && mu + t <= 1.0, "need 0 <= t <= 1 - mu")?;
    if t == 0.0 {
        return Ok(DiscreteDistribution::new(vec![(mu, 1.0)]).expect("valid atom"));
    }
    let nu = mu + t;
    Ok(DiscreteDistribution::new(vec![(0.0, t / nu), (nu, mu / nu)]).expect("weights sum to 1"))
}

/// Worst case of the moment-generating-function relaxation: the Bernoulli
/// distribution with mean `mu`, independent of `t` and `lambda`.
pub fn extremal_bernoulli(mu: f64) -> Result<DiscreteDistribution, ExtremalError> {
    check(mu > 0.0 && mu < 1.0, "mean must lie in (0, 1)")?;
    Ok(DiscreteDistribution::new(vec![(0.0, 1.0 - mu), (1.0, mu)]).expect("weights sum to 1"))
}

/// Product of per-variable Bernoullis, the worst case of both the
/// separable and variational relaxations for first-order moments.
pub fn extremal_product(spec: &MomentSpec) -> Result<ProductDistribution, ExtremalError> {
    check(
        (spec.support.lower, spec.support.upper) == (0.0, 1.0),
        "product reconstruction expects the unit-interval canonical support",
    )?;
    let factors = spec
        .moments
        .iter()
        .map(|m| extremal_bernoulli(m[0]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProductDistribution::new(factors).expect("factors valid"))
}

/// Which bound a distribution is checked against.
#[derive(Debug, Clone)]
pub enum BoundKind {
    /// `U(x) = x/(mu+t)`, value `mu/(mu+t)`.
    ExactUnivariate { mu: f64, t: f64 },
    /// `U(x) = prod exp(lambda*(x_i - mu - t))` at the optimal lambda.
    Chernoff { mu: f64, t: f64 },
    /// `U(x) = prod (alpha_i + beta_i x_i)` from the variational solver.
    Variational { witness: AffineWitness, value: f64, t: f64 },
}

/// Exact expectations of the tail indicator and of the relaxed objective
/// under a finitely supported product distribution.
#[derive(Debug, Clone, Serialize)]
pub struct AttainmentReport {
    /// `E[1_{sum x >= threshold}]`, the true tail probability.
    pub tail_expectation: f64,
    /// `E[U]`, the relaxed objective the reconstruction optimizes.
    pub relaxed_expectation: f64,
    pub bound_value: f64,
    pub tail_gap: f64,
    pub relaxed_gap: f64,
    /// Whether the relaxed objective is attained to 1e-12.
    pub attains_relaxed: bool,
    /// Whether the raw tail probability matches the bound to 1e-12.
    pub attains_tail: bool,
}

/// Evaluate both expectations exactly (finite atoms, no sampling) and
/// report which of the two the distribution attains.
pub fn attainment_report(
    dist: &ProductDistribution,
    kind: &BoundKind,
) -> Result<AttainmentReport, ExtremalError> {
    let n = dist.n();
    check(n >= 1, "distribution needs at least one factor")?;
    let means: Vec<f64> = dist.factors.iter().map(DiscreteDistribution::mean).collect();

    let (bound_value, relaxed_expectation, threshold) = match kind {
        BoundKind::ExactUnivariate { mu, t } => {
            check(n == 1, "exact univariate bound applies to one variable")?;
            let b = exact_univariate(*mu, *t).map_err(|e| ExtremalError::Domain(e.to_string()))?;
            let nu = mu + t;
            let e_u = if *t == 0.0 {
                1.0
            } else {
                dist.factors[0].expectation(|x| x / nu)
            };
            (b.value, e_u, means[0] + t)
        }
        BoundKind::Chernoff { mu, t } => {
            let (b, w) =
                chernoff_univariate(*mu, *t).map_err(|e| ExtremalError::Domain(e.to_string()))?;
            let nu = mu + t;
            let e_u = dist.product_expectation(|_, x| (w.lambda_star * (x - nu)).exp());
            (b.value.powi(n as i32), e_u, means.iter().sum::<f64>() + n as f64 * t)
        }
        BoundKind::Variational { witness, value, t } => {
            check(witness.alpha.len() == n, "witness arity must match the distribution")?;
            let e_u = dist.product_expectation(|i, x| witness.alpha[i] + witness.beta[i] * x);
            (*value, e_u, means.iter().sum::<f64>() + n as f64 * t)
        }
    };

    let tail_expectation = dist.tail_probability(threshold);
    Ok(AttainmentReport {
        tail_expectation,
        relaxed_expectation,
        bound_value,
        tail_gap: bound_value - tail_expectation,
        relaxed_gap: bound_value - relaxed_expectation,
        attains_relaxed: (bound_value - relaxed_expectation).abs() <= 1e-12,
        attains_tail: (bound_value - tail_expectation).abs() <= 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::SupportInterval;
    use crate::variational::solve_variational;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_univariate_attains_with_zero_gap() {
        let d = extremal_exact_univariate(0.3, 0.3).unwrap();
        assert_eq!(d.atoms, vec![(0.0, 0.5), (0.6, 0.5)]);
        assert_abs_diff_eq!(d.mean(), 0.3, epsilon = 0.0);
        let p = ProductDistribution::new(vec![d]).unwrap();
        let report =
            attainment_report(&p, &BoundKind::ExactUnivariate { mu: 0.3, t: 0.3 }).unwrap();
        assert_eq!(report.tail_gap, 0.0);
        assert!(report.attains_tail && report.attains_relaxed);
    }

    #[test]
    fn exact_univariate_t_zero_is_dirac() {
        let d = extremal_exact_univariate(0.3, 0.0).unwrap();
        assert_eq!(d.atoms, vec![(0.3, 1.0)]);
    }

    #[test]
    fn exact_univariate_mean_identity() {
        // 0 * t/(mu+t) + (mu+t) * mu/(mu+t) = mu exactly.
        for (mu, t) in [(0.25, 0.5), (0.3, 0.3), (0.7, 0.1)] {
            let d = extremal_exact_univariate(mu, t).unwrap();
            let mean: f64 = d.atoms.iter().map(|&(x, w)| x * w).sum();
            assert!((mean - mu).abs() <= 1e-16);
        }
    }

    #[test]
    fn bernoulli_matches_mgf_closed_form() {
        let (mu, t) = (0.3, 0.2);
        let d = extremal_bernoulli(mu).unwrap();
        assert_abs_diff_eq!(d.mean(), mu);
        let nu = mu + t;
        for lambda in [-1.0, 0.0, 2.0] {
            let e = d.expectation(|x| (lambda * (x - nu)).exp());
            let closed = (-lambda * nu).exp() * (1.0 + mu * lambda.exp_m1());
            assert_abs_diff_eq!(e, closed, epsilon = 1e-14);
        }
    }

    #[test]
    fn bernoulli_does_not_attain_exact_bound_below_saturation() {
        // The remark that the Bernoulli also solves the exact problem fails
        // for mu + t < 1: its tail probability is mu, not mu/(mu+t).
        let (mu, t) = (0.3, 0.3);
        let p = ProductDistribution::new(vec![extremal_bernoulli(mu).unwrap()]).unwrap();
        let report = attainment_report(&p, &BoundKind::ExactUnivariate { mu, t }).unwrap();
        assert_abs_diff_eq!(report.tail_expectation, mu, epsilon = 1e-15);
        assert!(!report.attains_tail);
        // At mu + t = 1 it does attain.
        let report = attainment_report(&p, &BoundKind::ExactUnivariate { mu, t: 0.7 }).unwrap();
        assert!(report.attains_tail);
    }

    #[test]
    fn chernoff_attains_relaxed_not_tail() {
        let (mu, t) = (0.3, 0.2);
        let p = ProductDistribution::new(vec![extremal_bernoulli(mu).unwrap()]).unwrap();
        let report = attainment_report(&p, &BoundKind::Chernoff { mu, t }).unwrap();
        assert!(report.attains_relaxed, "relaxed gap {}", report.relaxed_gap);
        assert!(report.tail_expectation < report.bound_value);
    }

    #[test]
    fn product_weights() {
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![0.3]);
        let p = extremal_product(&spec).unwrap();
        let mut weights: Vec<f64> = Vec::new();
        for a in &p.factors[0].atoms {
            for b in &p.factors[1].atoms {
                weights.push(a.1 * b.1);
            }
        }
        weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(weights[0], 0.09, epsilon = 1e-15);
        assert_abs_diff_eq!(weights[1], 0.21, epsilon = 1e-15);
        assert_abs_diff_eq!(weights[2], 0.21, epsilon = 1e-15);
        assert_abs_diff_eq!(weights[3], 0.49, epsilon = 1e-15);
    }

    #[test]
    fn product_attains_variational_value() {
        let spec = MomentSpec::iid(2, SupportInterval::unit(), vec![0.3]);
        let (bound, witness) = solve_variational(&spec, 0.1).unwrap();
        let p = extremal_product(&spec).unwrap();
        // E[prod (alpha + beta X)] = prod (alpha + beta mu) by independence.
        let e_u = p.product_expectation(|i, x| witness.alpha[i] + witness.beta[i] * x);
        let factored: f64 = (0..2).map(|i| witness.alpha[i] + witness.beta[i] * 0.3).product();
        assert_abs_diff_eq!(e_u, factored, epsilon = 1e-14);
        let report = attainment_report(
            &p,
            &BoundKind::Variational { witness, value: bound.value, t: 0.1 },
        )
        .unwrap();
        assert!(
            report.relaxed_gap.abs() <= 1e-7,
            "solver value {} vs product expectation {}",
            report.bound_value,
            report.relaxed_expectation
        );
        assert!(report.tail_expectation <= report.bound_value + 1e-12);
    }
}
