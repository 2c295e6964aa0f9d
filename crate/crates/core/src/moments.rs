//! Domain types shared by every bound family: supports, moment
//! specifications, bound results and finitely supported distributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for probability weights summing to one.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Default tolerance for matching realized moments against a spec.
pub const DEFAULT_MOMENT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("moment vector infeasible: {0}")]
    MomentInfeasible(String),
    #[error("support must satisfy lower < upper with at least one finite endpoint")]
    InvalidSupport,
    #[error("support unbounded; operation requires finite endpoints")]
    UnboundedSupport,
    #[error("spec malformed: {0}")]
    Malformed(String),
}

/// Interval of allowed values for each variable.
///
/// The lower endpoint may be `-inf`; the upper endpoint must be finite
/// (every problem treated here is upper-bounded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub lower: f64,
    pub upper: f64,
}

impl SupportInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self, MomentError> {
        let ordered = matches!(lower.partial_cmp(&upper), Some(std::cmp::Ordering::Less));
        if !ordered || !upper.is_finite() {
            return Err(MomentError::InvalidSupport);
        }
        Ok(Self { lower, upper })
    }

    /// The unit interval `[0, 1]`, canonical support of the Hoeffding family.
    pub fn unit() -> Self {
        Self { lower: 0.0, upper: 1.0 }
    }

    /// `[-1, 1]`, canonical support of the Bernstein family.
    pub fn symmetric_unit() -> Self {
        Self { lower: -1.0, upper: 1.0 }
    }

    /// `(-inf, a]`, canonical support of the Bennett family.
    pub fn upper_bounded(a: f64) -> Self {
        Self { lower: f64::NEG_INFINITY, upper: a }
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Affine change of variable `y = scale * x + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    pub fn identity() -> Self {
        Self { scale: 1.0, offset: 0.0 }
    }

    /// Map sending the interval `src` onto `dst`.
    pub fn between(src: SupportInterval, dst: SupportInterval) -> Result<Self, MomentError> {
        if !src.is_bounded() || !dst.is_bounded() {
            return Err(MomentError::UnboundedSupport);
        }
        let scale = dst.width() / src.width();
        Ok(Self { scale, offset: dst.lower - scale * src.lower })
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.scale * x + self.offset
    }

    pub fn inverse(&self) -> Self {
        Self { scale: 1.0 / self.scale, offset: -self.offset / self.scale }
    }

    /// Moments of `y = scale*x + offset` from raw moments of `x`.
    ///
    /// `E[y^k] = sum_j C(k,j) scale^j offset^(k-j) E[x^j]`, with `E[x^0]=1`.
    pub fn transform_moments(&self, moments: &[f64]) -> Vec<f64> {
        let a = moments.len();
        let mut out = Vec::with_capacity(a);
        for k in 1..=a {
            let mut v = 0.0;
            for j in 0..=k {
                let m_j = if j == 0 { 1.0 } else { moments[j - 1] };
                v += binomial(k, j) * self.scale.powi(j as i32) * self.offset.powi((k - j) as i32) * m_j;
            }
            out.push(v);
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut v = 1.0;
    for i in 0..k.min(n - k) {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// Per-variable support and fixed moments, the probabilistic assumptions of
/// a bound computation.
///
/// `moments[i][k-1]` holds the raw moment `E[X_i^k]`; all variables share
/// one support interval. An optional partition groups variables whose
/// moments are equal, which the variational solver exploits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub n: usize,
    pub support: SupportInterval,
    pub moments: Vec<Vec<f64>>,
    pub blocks: Option<Vec<Vec<usize>>>,
}

impl MomentSpec {
    /// Spec with identical moments for all `n` variables.
    pub fn iid(n: usize, support: SupportInterval, var_moments: Vec<f64>) -> Self {
        Self {
            n,
            support,
            moments: vec![var_moments; n],
            blocks: Some(vec![(0..n).collect()]),
        }
    }

    /// First `m` variables with moments `first`, the remaining `n - m` with `second`.
    pub fn two_block(
        n: usize,
        m: usize,
        support: SupportInterval,
        first: Vec<f64>,
        second: Vec<f64>,
    ) -> Self {
        let mut moments = Vec::with_capacity(n);
        for i in 0..n {
            moments.push(if i < m { first.clone() } else { second.clone() });
        }
        Self {
            n,
            support,
            moments,
            blocks: Some(vec![(0..m).collect(), (m..n).collect()]),
        }
    }

    /// Per-variable moments; variables with equal moment vectors are grouped
    /// into blocks automatically.
    pub fn from_means(support: SupportInterval, means: &[f64]) -> Self {
        let moments: Vec<Vec<f64>> = means.iter().map(|&m| vec![m]).collect();
        let mut spec = Self { n: means.len(), support, moments, blocks: None };
        spec.blocks = Some(spec.infer_blocks());
        spec
    }

    fn infer_blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
        for (i, m) in self.moments.iter().enumerate() {
            match blocks.iter_mut().find(|(bm, _)| {
                bm.len() == m.len() && bm.iter().zip(m).all(|(a, b)| a == b)
            }) {
                Some((_, idx)) => idx.push(i),
                None => blocks.push((m.clone(), vec![i])),
            }
        }
        blocks.into_iter().map(|(_, idx)| idx).collect()
    }

    /// Highest fixed moment order, uniform over variables.
    pub fn order(&self) -> usize {
        self.moments.first().map_or(0, Vec::len)
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.moments[i][0]
    }

    pub fn mean_average(&self) -> f64 {
        self.moments.iter().map(|m| m[0]).sum::<f64>() / self.n as f64
    }

    /// Block sizes and the (shared) moment vector of each block. Singleton
    /// blocks are synthesized when no partition is stored.
    pub fn block_summary(&self) -> Vec<(usize, Vec<f64>)> {
        match &self.blocks {
            Some(blocks) => blocks
                .iter()
                .map(|idx| (idx.len(), self.moments[idx[0]].clone()))
                .collect(),
            None => self.moments.iter().map(|m| (1, m.clone())).collect(),
        }
    }

    fn check_structure(&self) -> Result<(), MomentError> {
        if self.n == 0 {
            return Err(MomentError::Malformed("n must be positive".into()));
        }
        if self.moments.len() != self.n {
            return Err(MomentError::Malformed(format!(
                "expected {} moment vectors, found {}",
                self.n,
                self.moments.len()
            )));
        }
        let a = self.order();
        if a == 0 || self.moments.iter().any(|m| m.len() != a) {
            return Err(MomentError::Malformed(
                "every variable needs the same positive number of moments".into(),
            ));
        }
        if let Some(blocks) = &self.blocks {
            let mut seen = vec![false; self.n];
            for idx in blocks {
                for &i in idx {
                    if i >= self.n || seen[i] {
                        return Err(MomentError::Malformed("blocks must partition 1..n".into()));
                    }
                    seen[i] = true;
                }
                let head = &self.moments[idx[0]];
                if idx.iter().any(|&i| self.moments[i] != *head) {
                    return Err(MomentError::Malformed(
                        "moments must be equal within a block".into(),
                    ));
                }
            }
            if seen.iter().any(|&s| !s) {
                return Err(MomentError::Malformed("blocks must cover 1..n".into()));
            }
        }
        Ok(())
    }
}

/// Outcome of analytic moment validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Inequalities checked, each with its slack (nonnegative when satisfied).
    pub checks: Vec<(String, f64)>,
}

/// Analytic feasibility checks on a moment specification.
///
/// Accepts iff every mean lies strictly inside the support and, when second
/// moments are fixed on a bounded support, the transported chord bounds
/// `(mu1)^2 <= mu2 <= mu1` hold on the unit interval. For an unbounded-below
/// support only nonnegative variance is required. Moments of order three and
/// higher are not validated analytically; LP-oracle feasibility is opt-in
/// via [`crate::oracle::lp_tail_oracle`].
pub fn validate_moments(spec: &MomentSpec) -> Result<ValidationReport, MomentError> {
    spec.check_structure()?;
    let mut checks = Vec::new();
    let eps = 1e-12;
    for (i, m) in spec.moments.iter().enumerate() {
        let mu1 = m[0];
        if !(mu1 > spec.support.lower && mu1 < spec.support.upper) {
            return Err(MomentError::MomentInfeasible(format!(
                "mean of variable {i} ({mu1}) must lie strictly inside ({}, {})",
                spec.support.lower, spec.support.upper
            )));
        }
        checks.push((format!("interior mean, variable {i}"), (mu1 - spec.support.lower).min(spec.support.upper - mu1)));
        if m.len() >= 2 {
            let mu2 = m[1];
            if spec.support.is_bounded() {
                // Transport to [0, 1] and apply the chord bounds there.
                let map = AffineMap::between(spec.support, SupportInterval::unit())?;
                let t = map.transform_moments(&m[..2]);
                let (u1, u2) = (t[0], t[1]);
                if u2 > u1 + eps {
                    return Err(MomentError::MomentInfeasible(format!(
                        "variable {i}: mu2 <= mu1 violated on the unit interval ({u2} > {u1})"
                    )));
                }
                if u2 < u1 * u1 - eps {
                    return Err(MomentError::MomentInfeasible(format!(
                        "variable {i}: (mu1)^2 <= mu2 violated on the unit interval ({u2} < {})",
                        u1 * u1
                    )));
                }
                checks.push((format!("chord upper bound, variable {i}"), u1 - u2));
                checks.push((format!("variance nonnegative, variable {i}"), u2 - u1 * u1));
            } else {
                if mu2 < mu1 * mu1 - eps {
                    return Err(MomentError::MomentInfeasible(format!(
                        "variable {i}: second moment {mu2} below squared mean {}",
                        mu1 * mu1
                    )));
                }
                checks.push((format!("variance nonnegative, variable {i}"), mu2 - mu1 * mu1));
            }
        }
    }
    Ok(ValidationReport { checks })
}

/// Transport a bounded-support spec onto the unit interval.
///
/// Returns the rewritten spec together with the map `y = (x - a)/(b - a)`
/// that was applied; `map.inverse()` undoes it.
pub fn normalize_support(spec: &MomentSpec) -> Result<(MomentSpec, AffineMap), MomentError> {
    spec.check_structure()?;
    if !spec.support.is_bounded() {
        return Err(MomentError::UnboundedSupport);
    }
    let map = AffineMap::between(spec.support, SupportInterval::unit())?;
    let moments = spec.moments.iter().map(|m| map.transform_moments(m)).collect();
    Ok((
        MomentSpec {
            n: spec.n,
            support: SupportInterval::unit(),
            moments,
            blocks: spec.blocks.clone(),
        },
        map,
    ))
}

/// Tail event `sum_i x_i >= n*t + sum_i mu_i` at deviation `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationQuery {
    pub t: f64,
}

impl DeviationQuery {
    pub fn new(t: f64) -> Result<Self, MomentError> {
        if t.is_nan() || t < 0.0 {
            return Err(MomentError::Malformed("deviation t must be nonnegative".into()));
        }
        Ok(Self { t })
    }

    /// Threshold on the coordinate sum for the given spec.
    pub fn threshold(&self, spec: &MomentSpec) -> f64 {
        spec.n as f64 * self.t + spec.moments.iter().map(|m| m[0]).sum::<f64>()
    }
}

/// Which family produced a bound value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Hoeffding,
    Exact1,
    Chernoff,
    ChernoffIid,
    ChernoffGeneral,
    QuadraticUpper,
    Bernstein,
    Bennett,
    Linear,
    Variational,
    Sos,
    SosMu2Grid,
    LpOracle,
    ProductOracle,
    MonteCarlo,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Hoeffding => "hoeffding",
            Method::Exact1 => "exact1",
            Method::Chernoff => "chernoff",
            Method::ChernoffIid => "chernoff-iid",
            Method::ChernoffGeneral => "chernoff-general",
            Method::QuadraticUpper => "quadratic-upper",
            Method::Bernstein => "bernstein",
            Method::Bennett => "bennett",
            Method::Linear => "linear",
            Method::Variational => "variational",
            Method::Sos => "sos",
            Method::SosMu2Grid => "sos-mu2-grid",
            Method::LpOracle => "lp-oracle",
            Method::ProductOracle => "product-oracle",
            Method::MonteCarlo => "mc",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalLimit => "numerical_limit",
        })
    }
}

/// Solver bookkeeping attached to every bound.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub residual: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
    /// Method-specific scalars (alternate objective values, argmins, ...).
    pub extra: BTreeMap<String, f64>,
}

/// A computed bound value with its provenance.
///
/// `value` is the raw optimum and may exceed one; `clamped()` is the usable
/// probability bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundResult {
    pub value: f64,
    pub method: Method,
    pub status: SolveStatus,
    pub diagnostics: Diagnostics,
    pub certificate_id: Option<String>,
}

impl BoundResult {
    pub fn closed_form(method: Method, value: f64) -> Self {
        Self {
            value,
            method,
            status: SolveStatus::Optimal,
            diagnostics: Diagnostics::default(),
            certificate_id: None,
        }
    }

    pub fn clamped(&self) -> f64 {
        self.value.clamp(0.0, 1.0)
    }
}

/// Finitely supported distribution given as `(location, weight)` atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    pub atoms: Vec<(f64, f64)>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self, MomentError> {
        let d = Self { atoms };
        d.check_weights()?;
        Ok(d)
    }

    fn check_weights(&self) -> Result<(), MomentError> {
        if self.atoms.iter().any(|&(_, w)| w < -WEIGHT_SUM_TOL) {
            return Err(MomentError::Malformed("negative atom weight".into()));
        }
        let total: f64 = self.atoms.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(MomentError::Malformed(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    pub fn raw_moment(&self, k: usize) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * x.powi(k as i32)).sum()
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * f(x)).sum()
    }

    /// Checks atoms lie in the support and realized moments match `moments`.
    pub fn validate_against(
        &self,
        support: SupportInterval,
        moments: &[f64],
        tol: f64,
    ) -> Result<(), MomentError> {
        self.check_weights()?;
        for &(x, _) in &self.atoms {
            if !support.contains(x) {
                return Err(MomentError::Malformed(format!("atom {x} outside support")));
            }
        }
        for (k, &target) in moments.iter().enumerate() {
            let got = self.raw_moment(k + 1);
            if (got - target).abs() > tol {
                return Err(MomentError::MomentInfeasible(format!(
                    "order-{} moment {got} differs from {target}",
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// Product of independent per-variable discrete distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductDistribution {
    pub factors: Vec<DiscreteDistribution>,
}

impl ProductDistribution {
    pub fn new(factors: Vec<DiscreteDistribution>) -> Result<Self, MomentError> {
        for f in &factors {
            f.check_weights()?;
        }
        Ok(Self { factors })
    }

    pub fn n(&self) -> usize {
        self.factors.len()
    }

    /// Expectation of a product functional `prod_i f(i, x_i)` by independence.
    pub fn product_expectation(&self, f: impl Fn(usize, f64) -> f64) -> f64 {
        self.factors
            .iter()
            .enumerate()
            .map(|(i, d)| d.expectation(|x| f(i, x)))
            .product()
    }

    /// Exact expectation of an arbitrary functional by enumerating all atom
    /// combinations. Exponential in `n`; intended for small `n`.
    pub fn exact_expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut point = vec![0.0; self.n()];
        self.enumerate_rec(0, 1.0, &mut point, &mut |w, x| w * f(x))
    }

    /// Exact probability of the tail event `sum x_i >= threshold`.
    pub fn tail_probability(&self, threshold: f64) -> f64 {
        // Tolerance absorbs rounding in atom sums at regime boundaries.
        self.exact_expectation(|x| {
            if x.iter().sum::<f64>() >= threshold - 1e-12 {
                1.0
            } else {
                0.0
            }
        })
    }

    fn enumerate_rec(
        &self,
        i: usize,
        weight: f64,
        point: &mut Vec<f64>,
        f: &mut impl FnMut(f64, &[f64]) -> f64,
    ) -> f64 {
        if i == self.n() {
            return f(weight, point);
        }
        let atoms = self.factors[i].atoms.clone();
        let mut total = 0.0;
        for (x, w) in atoms {
            if w == 0.0 {
                continue;
            }
            point[i] = x;
            total += self.enumerate_rec(i + 1, weight * w, point, f);
        }
        total
    }
}
