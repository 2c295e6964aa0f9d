//! The product-function bound: optimize `prod_i (alpha_i + beta_i x_i)`
//! over affine factors that dominate the tail indicator.
//!
//! The optimum only depends on the factors through the vertices of the tail
//! polytope (mod.rs solves; [`vertices`] enumerates). The reported value is
//! the exact scale-invariant product optimum
//!
//! ```text
//! inf  prod_b (alpha_b + beta_b mu_b)^{w_b} / exp( min_v sum log(alpha + beta x_v) )
//! ```
//!
//! obtained by a damped-Newton log-barrier pass on the convexified program
//! followed by a derivative-free polish; the convexified objective value is
//! kept in the diagnostics for comparison.

mod vertices;

pub use vertices::{
    enumerate_block_vertices, enumerate_extremal_iid, enumerate_extremal_two_block,
    EnumerationError, ExtremalPointSet, TailVertex,
};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closed_form::chernoff_univariate;
use crate::moments::{BoundResult, Diagnostics, Method, MomentSpec, SolveStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariationalError {
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("spec not supported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Enumeration(#[from] EnumerationError),
}

/// Per-variable affine factors certifying a variational bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineWitness {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// How the factors were normalized.
    pub scale_note: String,
}

impl AffineWitness {
    /// `prod_i (alpha_i + beta_i x_i)` at a full coordinate vector.
    pub fn product_at(&self, x: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(&self.beta)
            .zip(x)
            .map(|((a, b), xi)| a + b * xi)
            .product()
    }
}

/// Beyond this the factorial vertex count of the general-means case is
/// not enumerated.
const MAX_GENERAL_N: usize = 8;

/// Barrier path parameters: gap tolerance 1e-10, path shrink 0.2,
/// Newton tolerance 1e-12, at most 200 outer steps.
const GAP_TOL: f64 = 1e-10;
const PATH_SHRINK: f64 = 0.2;
const NEWTON_TOL: f64 = 1e-12;
const MAX_OUTER: usize = 200;
const POLISH_TOL: f64 = 1e-10;

/// Internal per-block view of the problem.
struct BlockProblem {
    sizes: Vec<usize>,
    means: Vec<f64>,
    points: ExtremalPointSet,
}

impl BlockProblem {
    fn from_spec(spec: &MomentSpec, t: f64) -> Result<Option<Self>, VariationalError> {
        if spec.order() < 1 {
            return Err(VariationalError::Unsupported("spec needs first-order moments".into()));
        }
        if (spec.support.lower, spec.support.upper) != (0.0, 1.0) {
            return Err(VariationalError::Unsupported(
                "variational bound expects the unit-interval canonical support".into(),
            ));
        }
        let summary = spec.block_summary();
        if summary.len() > 2 && spec.n > MAX_GENERAL_N {
            return Err(VariationalError::Unsupported(format!(
                "general means need full vertex enumeration, supported up to n = {MAX_GENERAL_N}"
            )));
        }
        let sizes: Vec<usize> = summary.iter().map(|(c, _)| *c).collect();
        let means: Vec<f64> = summary.iter().map(|(_, m)| m[0]).collect();
        let s = spec.n as f64 * t + spec.moments.iter().map(|m| m[0]).sum::<f64>();
        let points = match enumerate_block_vertices(&sizes, s) {
            Ok(p) => p,
            Err(EnumerationError::EmptyTail { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        Ok(Some(Self { sizes, means, points }))
    }

    fn nblocks(&self) -> usize {
        self.sizes.len()
    }

    /// `sum_b sum_runs cnt * log(alpha_b + beta_b val)` at one vertex;
    /// `NAN`-free: returns -inf when a factor is nonpositive.
    fn log_product(&self, z: &[f64], v: &TailVertex) -> f64 {
        let mut total = 0.0;
        for (b, runs) in v.blocks.iter().enumerate() {
            let (a, be) = (z[2 * b], z[2 * b + 1]);
            for &(val, cnt) in runs {
                let term = a + be * val;
                if term <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                total += cnt as f64 * term.ln();
            }
        }
        total
    }

    fn min_log_product(&self, z: &[f64]) -> f64 {
        self.points
            .points
            .iter()
            .map(|v| self.log_product(z, v))
            .fold(f64::INFINITY, f64::min)
    }

    /// Log of the scale-invariant product objective; +inf when infeasible.
    fn log_objective(&self, z: &[f64]) -> f64 {
        let mut num = 0.0;
        for b in 0..self.nblocks() {
            let (a, be) = (z[2 * b], z[2 * b + 1]);
            if a < 0.0 || a + be < 0.0 {
                return f64::INFINITY;
            }
            let y = a + be * self.means[b];
            if y <= 0.0 {
                return f64::INFINITY;
            }
            num += self.sizes[b] as f64 * y.ln();
        }
        let c = self.min_log_product(z);
        if c == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        num - c
    }

    /// Convexified objective `sum_b w_b (alpha_b + beta_b mu_b - 1)`.
    fn linear_objective(&self, z: &[f64]) -> f64 {
        (0..self.nblocks())
            .map(|b| self.sizes[b] as f64 * (z[2 * b] + z[2 * b + 1] * self.means[b] - 1.0))
            .sum()
    }
}

/// Log-barrier solve of the convexified program
/// `min sum w_b (alpha_b + beta_b mu_b - 1)` subject to
/// `log prod >= 0` per vertex and `alpha_b >= 0`, `alpha_b + beta_b >= 0`.
fn barrier_solve(p: &BlockProblem) -> Result<(Vec<f64>, usize), VariationalError> {
    let dim = 2 * p.nblocks();
    let mut z = vec![0.0; dim];
    for b in 0..p.nblocks() {
        z[2 * b] = 1.25;
    }
    let n_constraints = (p.points.len() + 2 * p.nblocks()) as f64;
    let mut tau = 1.0;
    let mut newton_steps = 0usize;

    // psi = tau * f0 + phi, phi the log barrier of all constraints.
    let eval = |z: &[f64], tau: f64| -> f64 {
        let mut psi = tau * p.linear_objective(z);
        for v in &p.points.points {
            let g = p.log_product(z, v);
            if g <= 0.0 {
                return f64::INFINITY;
            }
            psi -= g.ln();
        }
        for b in 0..p.nblocks() {
            let (a, be) = (z[2 * b], z[2 * b + 1]);
            if a <= 0.0 || a + be <= 0.0 {
                return f64::INFINITY;
            }
            psi -= a.ln() + (a + be).ln();
        }
        psi
    };

    for _outer in 0..MAX_OUTER {
        // Damped Newton to NEWTON_TOL on the decrement.
        for _inner in 0..200 {
            let mut grad = DVector::zeros(dim);
            let mut hess = DMatrix::zeros(dim, dim);
            for b in 0..p.nblocks() {
                grad[2 * b] += tau * p.sizes[b] as f64;
                grad[2 * b + 1] += tau * p.sizes[b] as f64 * p.means[b];
            }
            for v in &p.points.points {
                let g = p.log_product(&z, v);
                let mut dg = DVector::zeros(dim);
                for (b, runs) in v.blocks.iter().enumerate() {
                    let (a, be) = (z[2 * b], z[2 * b + 1]);
                    for &(val, cnt) in runs {
                        let term = a + be * val;
                        let c = cnt as f64 / term;
                        dg[2 * b] += c;
                        dg[2 * b + 1] += c * val;
                        // -hess(g)/g contribution
                        let q = cnt as f64 / (term * term * g);
                        hess[(2 * b, 2 * b)] += q;
                        hess[(2 * b, 2 * b + 1)] += q * val;
                        hess[(2 * b + 1, 2 * b)] += q * val;
                        hess[(2 * b + 1, 2 * b + 1)] += q * val * val;
                    }
                }
                grad.axpy(-1.0 / g, &dg, 1.0);
                hess.ger(1.0 / (g * g), &dg, &dg, 1.0);
            }
            for b in 0..p.nblocks() {
                let (a, be) = (z[2 * b], z[2 * b + 1]);
                grad[2 * b] -= 1.0 / a + 1.0 / (a + be);
                grad[2 * b + 1] -= 1.0 / (a + be);
                hess[(2 * b, 2 * b)] += 1.0 / (a * a) + 1.0 / ((a + be) * (a + be));
                hess[(2 * b, 2 * b + 1)] += 1.0 / ((a + be) * (a + be));
                hess[(2 * b + 1, 2 * b)] += 1.0 / ((a + be) * (a + be));
                hess[(2 * b + 1, 2 * b + 1)] += 1.0 / ((a + be) * (a + be));
            }
            let chol = match nalgebra::Cholesky::new(hess.clone()) {
                Some(c) => c,
                None => {
                    // Regularize a near-singular Hessian.
                    for i in 0..dim {
                        hess[(i, i)] += 1e-12 * (1.0 + hess[(i, i)].abs());
                    }
                    nalgebra::Cholesky::new(hess).ok_or_else(|| {
                        VariationalError::SolverFailure("barrier Hessian not PD".into())
                    })?
                }
            };
            let step = chol.solve(&-&grad);
            let decrement = -grad.dot(&step);
            newton_steps += 1;
            if decrement / 2.0 <= NEWTON_TOL {
                break;
            }
            // Backtrack to stay strictly feasible and decrease psi.
            let psi0 = eval(&z, tau);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> =
                    z.iter().zip(step.iter()).map(|(zi, si)| zi + alpha * si).collect();
                let psi1 = eval(&trial, tau);
                if psi1 < psi0 - 1e-16 {
                    z = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if n_constraints / tau <= GAP_TOL {
            return Ok((z, newton_steps));
        }
        tau /= PATH_SHRINK;
    }
    Err(VariationalError::SolverFailure("barrier path did not reach the gap tolerance".into()))
}

/// Compass search on the scale-invariant log objective.
fn polish(p: &BlockProblem, z: &mut [f64]) -> usize {
    let dim = z.len();
    let mut best = p.log_objective(z);
    let scale = z.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut step = 1e-2 * scale;
    let mut evals = 0usize;
    while step > POLISH_TOL * 1e-1 {
        let mut improved = false;
        for i in 0..dim {
            for dir in [1.0, -1.0] {
                let saved = z[i];
                z[i] = saved + dir * step;
                let val = p.log_objective(z);
                evals += 1;
                if val < best - 1e-15 {
                    best = val;
                    improved = true;
                } else {
                    z[i] = saved;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    evals
}

/// Exact product-form variational bound with its certifying affine factors.
///
/// The moment data must carry first-order moments on `[0, 1]`; i.i.d. and
/// two-block structures are solved for any `n`, fully general means up to
/// `n = 8`. An empty tail yields the zero bound.
pub fn solve_variational(
    spec: &MomentSpec,
    t: f64,
) -> Result<(BoundResult, AffineWitness), VariationalError> {
    let start = std::time::Instant::now();
    let problem = match BlockProblem::from_spec(spec, t)? {
        Some(p) => p,
        None => {
            // Tail set empty: the zero function dominates the indicator.
            let witness = AffineWitness {
                alpha: vec![0.0; spec.n],
                beta: vec![0.0; spec.n],
                scale_note: "empty tail; zero product-function".into(),
            };
            return Ok((
                BoundResult::closed_form(Method::Variational, 0.0),
                witness,
            ));
        }
    };

    let (z, iterations, polish_evals) = if t == 0.0 {
        // The constant function 1 is optimal: the bound cannot drop below
        // the probability one attained by the product of Diracs at the means.
        let mut z = vec![0.0; 2 * problem.nblocks()];
        for b in 0..problem.nblocks() {
            z[2 * b] = 1.0;
        }
        (z, 0, 0)
    } else {
        let (mut z, iterations) = barrier_solve(&problem)?;
        let polish_evals = polish(&problem, &mut z);
        (z, iterations, polish_evals)
    };

    let eq19 = problem.linear_objective(&z);
    let log_value = problem.log_objective(&z);
    if !log_value.is_finite() {
        return Err(VariationalError::SolverFailure("polished point infeasible".into()));
    }

    // Normalize so the binding vertex constraint equals one exactly.
    let c = problem.min_log_product(&z);
    let gamma = (-c / spec.n as f64).exp();
    let mut alpha = vec![0.0; spec.n];
    let mut beta = vec![0.0; spec.n];
    let blocks: Vec<Vec<usize>> = match &spec.blocks {
        Some(b) if b.len() == problem.nblocks() => b.clone(),
        _ => (0..spec.n).map(|i| vec![i]).collect(),
    };
    for (b, idx) in blocks.iter().enumerate() {
        for &i in idx {
            alpha[i] = gamma * z[2 * b];
            beta[i] = gamma * z[2 * b + 1];
        }
    }
    let witness = AffineWitness {
        alpha,
        beta,
        scale_note: "scaled so the binding tail-polytope vertex attains product exactly 1".into(),
    };

    let mut extra = BTreeMap::new();
    extra.insert("convexified_objective".into(), eq19);
    extra.insert("convexified_exp".into(), eq19.exp());
    extra.insert("product_form_value".into(), log_value.exp());
    extra.insert("vertex_count".into(), problem.points.len() as f64);
    extra.insert("polish_evals".into(), polish_evals as f64);
    let result = BoundResult {
        value: log_value.exp(),
        method: Method::Variational,
        status: SolveStatus::Optimal,
        diagnostics: Diagnostics {
            iterations,
            residual: 0.0,
            wall_seconds: start.elapsed().as_secs_f64(),
            extra,
        },
        certificate_id: None,
    };
    Ok((result, witness))
}

/// Which branch of the `n = 2` closed form applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum N2Regime {
    /// `0 <= t <= 1/2 - mu` (nonempty only for `mu < 1/2`).
    Low,
    /// `1/2 - mu <= t <= (1-mu)^2/(2-mu)`.
    Middle,
    /// `t >= (1-mu)^2/(2-mu)`; the constant factor vanishes.
    High,
}

/// Closed-form optimum of the two-variable i.i.d. problem.
///
/// `alpha`/`beta` are the numerically verified stationary factors (binding
/// vertex normalized to one); `printed_alpha`/`printed_beta` reproduce the
/// published display, which differs in the low regime (`alpha`) and the
/// high regime (`beta`).
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormN2 {
    pub regime: N2Regime,
    pub alpha: f64,
    pub beta: f64,
    pub value: f64,
    pub printed_alpha: f64,
    pub printed_beta: f64,
}

/// Three-regime closed form for `n = 2` i.i.d. variables on `[0, 1]`.
pub fn closed_form_n2(mu: f64, t: f64) -> Result<ClosedFormN2, VariationalError> {
    if !(mu > 0.0 && mu < 1.0 && t >= 0.0 && mu + t <= 1.0 + 1e-15) {
        return Err(VariationalError::Unsupported(
            "need mu in (0,1) and 0 <= t <= 1 - mu".into(),
        ));
    }
    let nu = mu + t;
    let low_hi = 0.5 - mu;
    let mid_hi = (1.0 - mu) * (1.0 - mu) / (2.0 - mu);
    let (regime, alpha, beta, value, printed_alpha, printed_beta);
    if t <= low_hi {
        regime = N2Regime::Low;
        // KKT of the active fractional vertex: alpha (alpha + 2 nu beta) = 1.
        alpha = (mu / (mu + 2.0 * t)).sqrt();
        beta = t / (nu * (mu * (mu + 2.0 * t)).sqrt());
        value = mu * (mu + 2.0 * t) / (nu * nu);
        printed_alpha = (mu / nu).sqrt();
        printed_beta = beta;
    } else if t <= mid_hi {
        regime = N2Regime::Middle;
        let root = ((1.0 - mu) * (1.0 - mu - 2.0 * t)).sqrt();
        beta = t / ((1.0 - nu) * root);
        alpha = ((1.0 - mu - 2.0 * t) / (1.0 - mu)).sqrt() - (2.0 * nu - 1.0) * beta;
        value = (1.0 - mu) * (1.0 - mu - 2.0 * t) / ((1.0 - nu) * (1.0 - nu));
        printed_alpha = alpha;
        printed_beta = beta;
    } else {
        regime = N2Regime::High;
        alpha = 0.0;
        beta = 1.0 / (2.0 * nu - 1.0).sqrt();
        value = mu * mu / (2.0 * nu - 1.0);
        printed_alpha = 0.0;
        printed_beta = mu / (2.0 * nu - 1.0).sqrt();
    }
    Ok(ClosedFormN2 { regime, alpha, beta, value, printed_alpha, printed_beta })
}

/// Per-variable log gap between the variational bound and the
/// large-deviation envelope `(rho_1^exp)^n`:
/// `(1/n) | log rho_n_var - n log rho_1_exp |`.
pub fn variational_gap_to_chernoff(n: usize, mu: f64, t: f64) -> Result<f64, VariationalError> {
    let spec = MomentSpec::iid(n, crate::moments::SupportInterval::unit(), vec![mu]);
    let (bound, _) = solve_variational(&spec, t)?;
    let (uni, _) = chernoff_univariate(mu, t)
        .map_err(|e| VariationalError::Unsupported(e.to_string()))?;
    if bound.value == 0.0 || uni.value == 0.0 {
        return Ok(0.0);
    }
    Ok((bound.value.ln() / n as f64 - uni.value.ln()).abs())
}
