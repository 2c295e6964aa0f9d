//! Analytically evaluable bounds: the textbook baselines and the exact,
//! Chernoff and linear closed forms for first-order moment assumptions on
//! the unit interval.

use thiserror::Error;

use crate::moments::{BoundResult, Diagnostics, Method, SolveStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("scalar solver failed: {0}")]
    SolverFailure(String),
}

/// Hard bracket for scalar exponent searches; `exp` overflows beyond.
const LAMBDA_BRACKET: f64 = 50.0;
/// Gradient tolerance for scalar minimizations.
const GRAD_TOL: f64 = 1e-10;

fn check(cond: bool, msg: &str) -> Result<(), ClosedFormError> {
    if cond {
        Ok(())
    } else {
        Err(ClosedFormError::Domain(msg.into()))
    }
}

/// Hoeffding's inequality for independent variables with values in
/// `[a_i, b_i]`:
///
/// ```text
/// P( sum (X_i - E X_i) >= n t ) <= exp( -2 n^2 t^2 / sum (b_i - a_i)^2 )
/// ```
pub fn hoeffding(n: usize, t: f64, widths: &[f64]) -> Result<BoundResult, ClosedFormError> {
    check(t >= 0.0, "t must be nonnegative")?;
    check(widths.len() == n && n > 0, "need one positive width per variable")?;
    check(widths.iter().all(|&w| w > 0.0), "widths must be positive")?;
    let denom: f64 = widths.iter().map(|w| w * w).sum();
    let nf = n as f64;
    let value = (-2.0 * nf * nf * t * t / denom).exp();
    Ok(BoundResult::closed_form(Method::Hoeffding, value))
}

/// Exact value of the univariate moment problem on `[0, 1]`:
/// `P(X >= mu + t) <= mu / (mu + t)`, and zero once `mu + t > 1`.
pub fn exact_univariate(mu: f64, t: f64) -> Result<BoundResult, ClosedFormError> {
    check(mu > 0.0 && mu < 1.0, "mean must lie in (0, 1)")?;
    check(t >= 0.0, "t must be nonnegative")?;
    let value = if mu + t > 1.0 { 0.0 } else { mu / (mu + t) };
    Ok(BoundResult::closed_form(Method::Exact1, value))
}

/// The optimal affine majorant of `x -> exp(lambda (x - nu))` on `[0, 1]`:
/// the chord `alpha + beta x` through the endpoint values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffWitness {
    pub lambda_star: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ChernoffWitness {
    pub fn chord(&self, x: f64) -> f64 {
        self.alpha + self.beta * x
    }
}

/// Optimized moment-generating-function bound for one variable on `[0, 1]`:
///
/// ```text
/// P(X >= nu) <= (mu/nu)^nu ((1-mu)/(1-nu))^(1-nu),   nu = mu + t,
/// ```
///
/// which equals `exp(-kl(nu, mu))` with the Bernoulli relative entropy.
/// Past `nu = 1` the value is continued by the `lambda -> inf` limit:
/// `mu` at `nu = 1`, zero beyond.
pub fn chernoff_univariate(
    mu: f64,
    t: f64,
) -> Result<(BoundResult, ChernoffWitness), ClosedFormError> {
    check(mu > 0.0 && mu < 1.0, "mean must lie in (0, 1)")?;
    check(t >= 0.0, "t must be nonnegative")?;
    let nu = mu + t;
    if nu >= 1.0 {
        let value = if nu > 1.0 { 0.0 } else { mu };
        let beta = if nu > 1.0 { 0.0 } else { 1.0 };
        return Ok((
            BoundResult::closed_form(Method::Chernoff, value),
            ChernoffWitness { lambda_star: f64::INFINITY, alpha: 0.0, beta },
        ));
    }
    let value = (mu / nu).powf(nu) * ((1.0 - mu) / (1.0 - nu)).powf(1.0 - nu);
    let lambda = (nu * (1.0 - mu) / (mu * (1.0 - nu))).ln();
    let alpha = (-lambda * nu).exp();
    let beta = alpha * (lambda.exp_m1());
    Ok((
        BoundResult::closed_form(Method::Chernoff, value),
        ChernoffWitness { lambda_star: lambda, alpha, beta },
    ))
}

/// Chernoff bound for `n` i.i.d. variables: the univariate value to the
/// `n`-th power.
pub fn chernoff_iid(n: usize, mu: f64, t: f64) -> Result<BoundResult, ClosedFormError> {
    check(n > 0, "n must be positive")?;
    let (uni, _) = chernoff_univariate(mu, t)?;
    Ok(BoundResult::closed_form(Method::ChernoffIid, uni.value.powi(n as i32)))
}

/// Optimized Chernoff bound for independent variables with distinct means:
///
/// ```text
/// inf_lambda exp(-n lambda (mean + t)) prod_i (1 + mu_i (e^lambda - 1))
/// ```
///
/// solved by safeguarded Newton/bisection on the convex exponent.
pub fn chernoff_general(means: &[f64], t: f64) -> Result<BoundResult, ClosedFormError> {
    check(!means.is_empty(), "need at least one mean")?;
    check(means.iter().all(|&m| m > 0.0 && m < 1.0), "means must lie in (0, 1)")?;
    check(t >= 0.0, "t must be nonnegative")?;
    let n = means.len() as f64;
    let nu_bar = means.iter().sum::<f64>() / n + t;
    if nu_bar >= 1.0 {
        // lambda -> inf limit: product of the means at the boundary, zero beyond.
        let value = if nu_bar > 1.0 { 0.0 } else { means.iter().product() };
        return Ok(BoundResult::closed_form(Method::ChernoffGeneral, value));
    }
    let f = |l: f64| -n * l * nu_bar + means.iter().map(|&m| (1.0 + m * l.exp_m1()).ln()).sum::<f64>();
    let grad = |l: f64| {
        -n * nu_bar
            + means
                .iter()
                .map(|&m| m * l.exp() / (1.0 + m * l.exp_m1()))
                .sum::<f64>()
    };
    let hess = |l: f64| {
        means
            .iter()
            .map(|&m| {
                let d = 1.0 + m * l.exp_m1();
                m * l.exp() * (1.0 - m) / (d * d)
            })
            .sum::<f64>()
    };

    // grad is increasing; grad(0) = -n t <= 0, and nu_bar < 1 forces a root
    // inside the bracket.
    let (mut lo, mut hi) = (0.0_f64, LAMBDA_BRACKET);
    if grad(hi) < 0.0 {
        return Err(ClosedFormError::SolverFailure(
            "gradient has no sign change inside the lambda bracket".into(),
        ));
    }
    let mut lambda = 1.0;
    let mut g = grad(lambda);
    let mut iterations = 0;
    while g.abs() > GRAD_TOL && iterations < 200 {
        if g > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
        let h = hess(lambda);
        let mut next = lambda - g / h;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        lambda = next;
        g = grad(lambda);
        iterations += 1;
    }
    if g.abs() > GRAD_TOL {
        return Err(ClosedFormError::SolverFailure(format!(
            "gradient {g:.3e} above tolerance after {iterations} iterations"
        )));
    }
    let mut diag = Diagnostics { iterations, residual: g.abs(), ..Default::default() };
    diag.extra.insert("lambda_star".into(), lambda);
    Ok(BoundResult {
        value: f(lambda).exp(),
        method: Method::ChernoffGeneral,
        status: SolveStatus::Optimal,
        diagnostics: diag,
        certificate_id: None,
    })
}

/// Quadratic (Jaakkola-style) upper bound on the optimized Chernoff value
/// for distinct means:
///
/// ```text
/// exp( -n^2 t^2 / sum_i (2 mu_i - 1)/log(mu_i/(1 - mu_i)) )
/// ```
///
/// Experimental: this evaluates the construction of the corresponding
/// proof, whose printed display form appears inconsistent; each quadratic
/// coefficient is at most 1/8, so the value never exceeds Hoeffding's.
pub fn quadratic_upper_diff_means(means: &[f64], t: f64) -> Result<BoundResult, ClosedFormError> {
    check(!means.is_empty(), "need at least one mean")?;
    check(means.iter().all(|&m| m > 0.0 && m < 1.0), "means must lie in (0, 1)")?;
    check(
        means.iter().all(|&m| m != 0.5),
        "mean 1/2 makes the quadratic coefficient indeterminate",
    )?;
    check(t >= 0.0, "t must be nonnegative")?;
    let n = means.len() as f64;
    let coeff: f64 = means.iter().map(|&m| (2.0 * m - 1.0) / (m / (1.0 - m)).ln()).sum();
    let value = (-n * n * t * t / coeff).exp();
    Ok(BoundResult::closed_form(Method::QuadraticUpper, value))
}

/// Bernstein's inequality with `v = sum E[X_i^2]` and values in `[-c, c]`:
///
/// ```text
/// P( sum (X_i - E X_i) >= n t ) <= exp( -(n^2 t^2 / 2) / (v + c n t / 3) )
/// ```
pub fn bernstein(n: usize, t: f64, v: f64, c: f64) -> Result<BoundResult, ClosedFormError> {
    check(n > 0, "n must be positive")?;
    check(v > 0.0 && c > 0.0 && t >= 0.0, "need v > 0, c > 0, t >= 0")?;
    let nt = n as f64 * t;
    let value = (-(nt * nt / 2.0) / (v + c * nt / 3.0)).exp();
    Ok(BoundResult::closed_form(Method::Bernstein, value))
}

/// `h(u) = (1 + u) log(1 + u) - u`, the Bennett rate function.
pub fn bennett_h(u: f64) -> f64 {
    (1.0 + u) * u.ln_1p() - u
}

/// Bennett's inequality for variables bounded above by `a` with
/// `sigma2 = sum E[(X_i - E X_i)^2]`:
///
/// ```text
/// P( sum (X_i - E X_i) >= n t ) <= exp( -(sigma2/a^2) h(a t n / sigma2) )
/// ```
pub fn bennett(n: usize, t: f64, sigma2: f64, a: f64) -> Result<BoundResult, ClosedFormError> {
    check(n > 0, "n must be positive")?;
    check(sigma2 > 0.0 && a > 0.0 && t >= 0.0, "need sigma2 > 0, a > 0, t >= 0")?;
    let u = a * t * n as f64 / sigma2;
    let value = (-(sigma2 / (a * a)) * bennett_h(u)).exp();
    Ok(BoundResult::closed_form(Method::Bennett, value))
}

/// Large-deviation rate of the empirical mean of `[0, 1]`-valued i.i.d.
/// variables, the Bernoulli relative entropy
///
/// ```text
/// kl(nu, mu) = nu log(nu/mu) + (1 - nu) log((1-nu)/(1-mu)),  nu = mu + t.
/// ```
pub fn large_deviation_rate(mu: f64, t: f64) -> Result<f64, ClosedFormError> {
    check(mu > 0.0 && mu < 1.0, "mean must lie in (0, 1)")?;
    check(t >= 0.0 && mu + t <= 1.0, "need 0 <= t <= 1 - mu")?;
    let nu = mu + t;
    let left = if nu == 0.0 { 0.0 } else { nu * (nu / mu).ln() };
    let right = if nu == 1.0 { 0.0 } else { (1.0 - nu) * ((1.0 - nu) / (1.0 - mu)).ln() };
    Ok(left + right)
}

/// Best linear upper bound on the tail indicator: `mu / (mu + t)`,
/// independent of `n` and equal to the exact univariate value.
pub fn linear_bound(mu: f64, t: f64) -> Result<BoundResult, ClosedFormError> {
    check(mu > 0.0 && mu < 1.0, "mean must lie in (0, 1)")?;
    check(t >= 0.0 && mu + t <= 1.0, "need 0 <= t <= 1 - mu")?;
    Ok(BoundResult::closed_form(Method::Linear, mu / (mu + t)))
}
